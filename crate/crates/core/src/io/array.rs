//! Minimal binary array file: `WIRARRAY`, u32 version, u32 dtype, u32 ndim,
//! u64 shape, then the row-major payload. All integers and values are little endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"WIRARRAY";
pub const ARRAY_VERSION: u32 = 1;
/// IEEE-754 binary64, little endian.
pub const DTYPE_F64: u32 = 1;

const MAX_NDIM: u32 = 16;

pub fn write_array<W: Write>(mut w: W, array: &ArrayD<f64>) -> std::io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&ARRAY_VERSION.to_le_bytes())?;
    w.write_all(&DTYPE_F64.to_le_bytes())?;
    w.write_all(&(array.ndim() as u32).to_le_bytes())?;
    for &s in array.shape() {
        w.write_all(&(s as u64).to_le_bytes())?;
    }
    for &v in array.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], file: &str, field: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(file, field, "file is truncated")
        } else {
            Error::io(file, e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R, file: &str, field: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, file, field)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads one array; `file` is used in error messages only.
pub fn read_array<R: Read>(mut r: R, file: &str) -> Result<ArrayD<f64>> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, file, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(file, "magic", "not an array file"));
    }
    let version = read_u32(&mut r, file, "version")?;
    if version != ARRAY_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: ARRAY_VERSION,
        });
    }
    let dtype = read_u32(&mut r, file, "dtype")?;
    if dtype != DTYPE_F64 {
        return Err(Error::format(file, "dtype", format!("unsupported dtype code {dtype}")));
    }
    let ndim = read_u32(&mut r, file, "ndim")?;
    if ndim > MAX_NDIM {
        return Err(Error::format(file, "ndim", format!("{ndim} dimensions")));
    }
    let mut shape = Vec::with_capacity(ndim as usize);
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        read_exact(&mut r, &mut b, file, "shape")?;
        let s = usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::format(file, "shape", "extent too large"))?;
        shape.push(s);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |a, &s| a.checked_mul(s))
        .and_then(|c| c.checked_mul(8).map(|_| c))
        .ok_or_else(|| Error::format(file, "shape", format!("{shape:?} overflows")))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io(file, e))?;
    if payload.len() != count * 8 {
        return Err(Error::format(
            file,
            "payload",
            format!("{} bytes for shape {shape:?} (expected {})", payload.len(), count * 8),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
        .collect();
    Ok(ArrayD::from_shape_vec(IxDyn(&shape), data).expect("length checked"))
}

pub fn save_array(path: &Path, array: &ArrayD<f64>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_array(BufWriter::new(f), array).map_err(|e| Error::io(path, e))
}

pub fn load_array(path: &Path) -> Result<ArrayD<f64>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_array(BufReader::new(f), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bytes(a: &ArrayD<f64>) -> Vec<u8> {
        let mut v = Vec::new();
        write_array(&mut v, a).unwrap();
        v
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            shape in prop::collection::vec(1usize..5, 0..4),
            bits in prop::collection::vec(any::<u64>(), 64),
        ) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|i| f64::from_bits(bits[i % 64])).collect();
            let a = ArrayD::from_shape_vec(IxDyn(&shape), data).unwrap();
            let b = read_array(bytes(&a).as_slice(), "mem").unwrap();
            prop_assert_eq!(a.shape(), b.shape());
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn header_layout() {
        let a = ArrayD::from_shape_vec(IxDyn(&[2, 1]), vec![1.0, -0.5]).unwrap();
        let b = bytes(&a);
        assert_eq!(&b[..8], b"WIRARRAY");
        assert_eq!(b.len(), 8 + 4 * 3 + 8 * 2 + 8 * 2);
        assert_eq!(&b[20..28], &2u64.to_le_bytes());
        assert_eq!(&b[36..44], &1.0f64.to_le_bytes());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let a = ArrayD::from_shape_vec(IxDyn(&[3]), vec![1.0, 2.0, 3.0]).unwrap();
        let good = bytes(&a);
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_array(bad.as_slice(), "f"), Err(Error::Format { field, .. }) if field == "magic"));
        let mut bad = good.clone();
        bad[8] = 9;
        assert!(matches!(read_array(bad.as_slice(), "f"), Err(Error::VersionMismatch { found: 9, .. })));
        let mut bad = good.clone();
        bad[12] = 2;
        assert!(matches!(read_array(bad.as_slice(), "f"), Err(Error::Format { field, .. }) if field == "dtype"));
        let bad = &good[..good.len() - 3];
        assert!(matches!(read_array(bad, "f"), Err(Error::Format { field, .. }) if field == "payload"));
        let bad = &good[..10];
        assert!(read_array(bad, "f").is_err());
    }
}
