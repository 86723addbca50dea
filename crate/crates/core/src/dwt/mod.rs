//! Orthonormal periodic discrete wavelet transforms for 1D signals and
//! 2D/3D images.
//!
//! Multidimensional transforms use the tensor-product (Mallat square)
//! pyramid: at every step each axis of the current coarse block is filtered
//! once, producing one scaling block and `2^d - 1` detail orientations.
//! Boundaries are periodic, so the transform is an orthogonal change of
//! basis on the padded grid and is never formed as a matrix.

mod filters;
mod layout;

use ndarray::{Array1, Array2, ArrayD, ArrayView1, ArrayViewD, Axis, IxDyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

pub use layout::{Block, BlockKind, CoeffLayout, CoeffPosition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveletFamily {
    DaubechiesLeastAsymmetric,
    Haar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    #[default]
    Periodic,
}

/// Wavelet family, decomposition level and boundary rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub vanishing_moments: usize,
    pub j0: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

impl Default for WaveletSpec {
    /// Least-asymmetric Daubechies with 10 vanishing moments at `j0 = 4`.
    fn default() -> Self {
        WaveletSpec {
            family: WaveletFamily::DaubechiesLeastAsymmetric,
            vanishing_moments: 10,
            j0: 4,
            boundary: Boundary::Periodic,
        }
    }
}

impl WaveletSpec {
    /// Least-asymmetric Daubechies wavelet; 4, 6, 8 and 10 vanishing moments are available.
    pub fn least_asymmetric(vanishing_moments: usize, j0: usize) -> Result<Self> {
        let spec = WaveletSpec {
            family: WaveletFamily::DaubechiesLeastAsymmetric,
            vanishing_moments,
            j0,
            boundary: Boundary::Periodic,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn haar(j0: usize) -> Self {
        WaveletSpec {
            family: WaveletFamily::Haar,
            vanishing_moments: 1,
            j0,
            boundary: Boundary::Periodic,
        }
    }

    pub fn with_j0(self, j0: usize) -> Self {
        WaveletSpec { j0, ..self }
    }

    pub fn check(&self) -> Result<()> {
        self.taps().map(|_| ())
    }

    fn taps(&self) -> Result<&'static [f64]> {
        match (self.family, self.vanishing_moments) {
            (WaveletFamily::Haar, 1) => Ok(&filters::HAAR),
            (WaveletFamily::DaubechiesLeastAsymmetric, 4) => Ok(&filters::LA4),
            (WaveletFamily::DaubechiesLeastAsymmetric, 6) => Ok(&filters::LA6),
            (WaveletFamily::DaubechiesLeastAsymmetric, 8) => Ok(&filters::LA8),
            (WaveletFamily::DaubechiesLeastAsymmetric, 10) => Ok(&filters::LA10),
            (family, vm) => Err(Error::InvalidConfig(format!(
                "no filter for {family:?} with {vm} vanishing moments"
            ))),
        }
    }

    /// Low-pass (scaling) filter taps.
    pub fn low_pass<F: Real>(&self) -> Result<Vec<F>> {
        Ok(self.taps()?.iter().map(|&v| F::lit(v)).collect())
    }

    /// High-pass (wavelet) filter taps.
    pub fn high_pass<F: Real>(&self) -> Result<Vec<F>> {
        Ok(filters::high_pass(self.taps()?).into_iter().map(F::lit).collect())
    }

    /// Layout of the coefficients for a padded grid.
    pub fn layout(&self, padded_shape: &[usize]) -> Result<CoeffLayout> {
        self.check()?;
        CoeffLayout::new(padded_shape, self.j0)
    }
}

/// Zero padding applied to reach power-of-two side lengths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub original_shape: Vec<usize>,
    pub before: Vec<usize>,
    pub after: Vec<usize>,
}

impl Padding {
    /// Centred padding to the next power of two; the odd cell goes after.
    pub fn for_shape(shape: &[usize]) -> Self {
        let mut before = Vec::with_capacity(shape.len());
        let mut after = Vec::with_capacity(shape.len());
        for &s in shape {
            let total = s.max(1).next_power_of_two() - s;
            before.push(total / 2);
            after.push(total - total / 2);
        }
        Padding {
            original_shape: shape.to_vec(),
            before,
            after,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.before.iter().chain(&self.after).all(|&p| p == 0)
    }

    pub fn padded_shape(&self) -> Vec<usize> {
        self.original_shape
            .iter()
            .zip(self.before.iter().zip(&self.after))
            .map(|(s, (b, a))| s + b + a)
            .collect()
    }

    pub fn pad<F: Real>(&self, image: ArrayViewD<F>) -> Result<ArrayD<F>> {
        if image.shape() != self.original_shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "image shape {:?} does not match padding record {:?}",
                image.shape(),
                self.original_shape
            )));
        }
        let mut out = ArrayD::zeros(IxDyn(&self.padded_shape()));
        let mut view = out.view_mut();
        for (a, (&b, &s)) in self.before.iter().zip(&self.original_shape).enumerate() {
            view.slice_axis_inplace(Axis(a), (b..b + s).into());
        }
        view.assign(&image);
        Ok(out)
    }

    pub fn crop<F: Real>(&self, padded: ArrayViewD<F>) -> Result<ArrayD<F>> {
        if padded.shape() != self.padded_shape().as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "grid shape {:?} is not the padded shape {:?}",
                padded.shape(),
                self.padded_shape()
            )));
        }
        let mut view = padded;
        for (a, (&b, &s)) in self.before.iter().zip(&self.original_shape).enumerate() {
            view.slice_axis_inplace(Axis(a), (b..b + s).into());
        }
        Ok(view.to_owned())
    }

    /// Maps each original flat (row-major) index to its padded flat index.
    pub fn index_map(&self) -> Vec<usize> {
        let padded = self.padded_shape();
        let n: usize = self.original_shape.iter().product();
        let d = self.original_shape.len();
        (0..n)
            .map(|mut flat| {
                let mut idx = vec![0; d];
                for a in (0..d).rev() {
                    idx[a] = flat % self.original_shape[a];
                    flat /= self.original_shape[a];
                }
                idx.iter()
                    .zip(&self.before)
                    .zip(&padded)
                    .fold(0, |acc, ((&i, &b), &p)| acc * p + i + b)
            })
            .collect()
    }
}

/// Pads a grid with centred zeros up to power-of-two sides.
pub fn pad_to_pow2<F: Real>(image: ArrayViewD<F>) -> (ArrayD<F>, Padding) {
    let padding = Padding::for_shape(image.shape());
    let padded = padding.pad(image).expect("padding built from the image shape");
    (padded, padding)
}

/// Wavelet coefficients of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs<F> {
    /// Row-major flattening of the coefficient grid.
    pub values: Array1<F>,
    pub layout: CoeffLayout,
    pub spec: WaveletSpec,
    pub padding: Padding,
}

/// Forward transform of a grid whose sides are already powers of two.
pub fn dwt<F: Real>(image: ArrayViewD<F>, spec: &WaveletSpec) -> Result<WaveletCoeffs<F>> {
    let layout = spec.layout(image.shape())?;
    let mut values: Vec<F> = image.iter().copied().collect();
    forward_flat(&mut values, &layout, spec)?;
    Ok(WaveletCoeffs {
        values: Array1::from(values),
        padding: Padding::for_shape(image.shape()),
        layout,
        spec: *spec,
    })
}

/// Pads to powers of two, then transforms.
pub fn dwt_padded<F: Real>(image: ArrayViewD<F>, spec: &WaveletSpec) -> Result<WaveletCoeffs<F>> {
    let (padded, padding) = pad_to_pow2(image);
    let mut coeffs = dwt(padded.view(), spec)?;
    coeffs.padding = padding;
    Ok(coeffs)
}

/// Inverse transform; returns the padded grid.
pub fn idwt<F: Real>(coeffs: &WaveletCoeffs<F>) -> Result<ArrayD<F>> {
    coeffs.layout.validate()?;
    if coeffs.layout.j0 != coeffs.spec.j0 {
        return Err(Error::LayoutMismatch(format!(
            "layout built for j0 = {} but spec has j0 = {}",
            coeffs.layout.j0, coeffs.spec.j0
        )));
    }
    if coeffs.values.len() != coeffs.layout.len() {
        return Err(Error::LayoutMismatch(format!(
            "{} coefficients for a layout of {}",
            coeffs.values.len(),
            coeffs.layout.len()
        )));
    }
    let mut values = coeffs.values.to_vec();
    inverse_flat(&mut values, &coeffs.layout, &coeffs.spec)?;
    Ok(ArrayD::from_shape_vec(IxDyn(&coeffs.layout.padded_shape), values)
        .expect("layout length checked"))
}

/// In-place forward pyramid on a row-major buffer of the padded grid.
pub fn forward_flat<F: Real>(buf: &mut [F], layout: &CoeffLayout, spec: &WaveletSpec) -> Result<()> {
    let h = spec.low_pass::<F>()?;
    let g = spec.high_pass::<F>()?;
    let shape = &layout.padded_shape;
    let mut scratch = Scratch::default();
    for step in 0..layout.steps {
        let ext: Vec<usize> = shape.iter().map(|&n| n >> step).collect();
        for axis in 0..shape.len() {
            for_each_line(shape, &ext, axis, |base, stride| {
                scratch.analyse(buf, base, stride, ext[axis], &h, &g);
            });
        }
    }
    Ok(())
}

/// In-place inverse pyramid on a row-major buffer of the padded grid.
pub fn inverse_flat<F: Real>(buf: &mut [F], layout: &CoeffLayout, spec: &WaveletSpec) -> Result<()> {
    let h = spec.low_pass::<F>()?;
    let g = spec.high_pass::<F>()?;
    let shape = &layout.padded_shape;
    let mut scratch = Scratch::default();
    for step in (0..layout.steps).rev() {
        let ext: Vec<usize> = shape.iter().map(|&n| n >> step).collect();
        for axis in (0..shape.len()).rev() {
            for_each_line(shape, &ext, axis, |base, stride| {
                scratch.synthesise(buf, base, stride, ext[axis], &h, &g);
            });
        }
    }
    Ok(())
}

#[derive(Default)]
struct Scratch<F> {
    line: Vec<F>,
    out: Vec<F>,
}

impl<F: Real> Scratch<F> {
    fn gather(&mut self, buf: &[F], base: usize, stride: usize, len: usize) {
        self.line.clear();
        self.line.extend((0..len).map(|i| buf[base + i * stride]));
        self.out.clear();
        self.out.resize(len, F::zero());
    }

    fn scatter(&self, buf: &mut [F], base: usize, stride: usize) {
        for (i, &v) in self.out.iter().enumerate() {
            buf[base + i * stride] = v;
        }
    }

    fn analyse(&mut self, buf: &mut [F], base: usize, stride: usize, len: usize, h: &[F], g: &[F]) {
        self.gather(buf, base, stride, len);
        let half = len / 2;
        for k in 0..half {
            let mut a = F::zero();
            let mut d = F::zero();
            for (t, (&ht, &gt)) in h.iter().zip(g).enumerate() {
                let x = self.line[(2 * k + t) % len];
                a += ht * x;
                d += gt * x;
            }
            self.out[k] = a;
            self.out[half + k] = d;
        }
        self.scatter(buf, base, stride);
    }

    fn synthesise(&mut self, buf: &mut [F], base: usize, stride: usize, len: usize, h: &[F], g: &[F]) {
        self.gather(buf, base, stride, len);
        let half = len / 2;
        for k in 0..half {
            let a = self.line[k];
            let d = self.line[half + k];
            for (t, (&ht, &gt)) in h.iter().zip(g).enumerate() {
                let i = (2 * k + t) % len;
                self.out[i] = self.out[i] + ht * a + gt * d;
            }
        }
        self.scatter(buf, base, stride);
    }
}

/// Calls `f(base, stride)` for every line along `axis` inside the box
/// `[0, ext)` of a row-major grid of `shape`.
fn for_each_line(shape: &[usize], ext: &[usize], axis: usize, mut f: impl FnMut(usize, usize)) {
    let d = shape.len();
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let others: Vec<usize> = (0..d).filter(|&a| a != axis).collect();
    let mut idx = vec![0usize; others.len()];
    loop {
        let base: usize = others.iter().zip(&idx).map(|(&a, &i)| i * strides[a]).sum();
        f(base, strides[axis]);
        let mut k = others.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < ext[others[k]] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `n` images sharing one grid, stored one flattened image per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack<F> {
    data: Array2<F>,
    shape: Vec<usize>,
    mask: Option<Vec<bool>>,
}

impl<F: Real> ImageStack<F> {
    pub fn new(data: Array2<F>, shape: Vec<usize>) -> Result<Self> {
        let voxels: usize = shape.iter().product();
        if shape.is_empty() || voxels == 0 {
            return Err(Error::ShapeMismatch("image grid must be nonempty".into()));
        }
        if data.ncols() != voxels {
            return Err(Error::ShapeMismatch(format!(
                "rows have {} values but grid {:?} has {voxels}",
                data.ncols(),
                shape
            )));
        }
        let stack = ImageStack {
            data,
            shape,
            mask: None,
        };
        stack.check_finite()?;
        Ok(stack)
    }

    /// Builds a stack from equally shaped grids.
    pub fn from_images(images: &[ArrayD<F>]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::ShapeMismatch("empty image list".into()))?;
        let shape = first.shape().to_vec();
        let voxels: usize = shape.iter().product();
        let mut data = Array2::zeros((images.len(), voxels));
        for (i, img) in images.iter().enumerate() {
            if img.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "image {i} has shape {:?}, expected {:?}",
                    img.shape(),
                    shape
                )));
            }
            data.row_mut(i).iter_mut().zip(img.iter()).for_each(|(d, &v)| *d = v);
        }
        ImageStack::new(data, shape)
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.voxels() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} cells for {} voxels",
                mask.len(),
                self.voxels()
            )));
        }
        self.mask = Some(mask);
        self.check_finite()?;
        Ok(self)
    }

    fn check_finite(&self) -> Result<()> {
        for (i, row) in self.data.outer_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let inside = self.mask.as_ref().is_none_or(|m| m[j]);
                if inside && !v.is_finite() {
                    return Err(Error::ShapeMismatch(format!(
                        "non-finite value in image {i} at voxel {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn voxels(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Raw data, one image per row.
    pub fn data(&self) -> &Array2<F> {
        &self.data
    }

    pub fn image(&self, i: usize) -> ArrayViewD<'_, F> {
        self.data
            .row(i)
            .into_shape_with_order(IxDyn(&self.shape))
            .expect("rows are contiguous")
    }

    /// Data with out-of-mask voxels set to zero.
    pub fn masked_data(&self) -> Array2<F> {
        let mut data = self.data.clone();
        if let Some(mask) = &self.mask {
            for mut row in data.outer_iter_mut() {
                for (v, &keep) in row.iter_mut().zip(mask) {
                    if !keep {
                        *v = F::zero();
                    }
                }
            }
        }
        data
    }

    /// Zeroes out-of-mask voxels of a flattened image in place.
    pub fn apply_mask(&self, image: &mut [F]) {
        if let Some(mask) = &self.mask {
            for (v, &keep) in image.iter_mut().zip(mask) {
                if !keep {
                    *v = F::zero();
                }
            }
        }
    }

    /// Subset of rows, preserving grid and mask.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        ImageStack {
            data: self.data.select(Axis(0), rows),
            shape: self.shape.clone(),
            mask: self.mask.clone(),
        }
    }

    /// Replaces the image data, keeping grid and mask.
    pub fn with_data(&self, data: Array2<F>) -> Result<Self> {
        let mut out = ImageStack::new(data, self.shape.clone())?;
        out.mask = self.mask.clone();
        Ok(out)
    }
}

/// Coefficient matrix of a whole stack: row `i` is the DWT of padded image `i`.
#[derive(Debug, Clone)]
pub struct StackCoeffs<F> {
    pub matrix: Array2<F>,
    pub layout: CoeffLayout,
    pub padding: Padding,
}

pub fn dwt_stack<F: Real>(stack: &ImageStack<F>, spec: &WaveletSpec) -> Result<StackCoeffs<F>> {
    let padding = Padding::for_shape(stack.shape());
    let layout = spec.layout(&padding.padded_shape())?;
    let map = padding.index_map();
    let data = stack.masked_data();
    let rows: Vec<Vec<F>> = (0..data.nrows())
        .into_par_iter()
        .map(|i| transform_row(data.row(i), &map, &layout, spec))
        .collect::<Result<_>>()?;
    let mut matrix = Array2::zeros((stack.n(), layout.len()));
    for (mut dst, src) in matrix.outer_iter_mut().zip(rows) {
        dst.assign(&ArrayView1::from(&src));
    }
    Ok(StackCoeffs {
        matrix,
        layout,
        padding,
    })
}

fn transform_row<F: Real>(
    row: ArrayView1<F>,
    map: &[usize],
    layout: &CoeffLayout,
    spec: &WaveletSpec,
) -> Result<Vec<F>> {
    let mut buf = vec![F::zero(); layout.len()];
    for (&dst, &v) in map.iter().zip(row.iter()) {
        buf[dst] = v;
    }
    forward_flat(&mut buf, layout, spec)?;
    Ok(buf)
}

/// Inverse transform of a flat coefficient vector, cropped to the original grid.
pub fn reconstruct_image<F: Real>(
    coeffs: ArrayView1<F>,
    layout: &CoeffLayout,
    padding: &Padding,
    spec: &WaveletSpec,
) -> Result<ArrayD<F>> {
    let c = WaveletCoeffs {
        values: coeffs.to_owned(),
        layout: layout.clone(),
        spec: *spec,
        padding: padding.clone(),
    };
    let full = idwt(&c)?;
    padding.crop(full.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, ArrayD};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(shape: &[usize], seed: u64) -> ArrayD<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn norm(a: impl IntoIterator<Item = f64>) -> f64 {
        a.into_iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn pads_60_to_64_centered() {
        let img = ArrayD::from_elem(IxDyn(&[60, 60]), 1.0);
        let (p, rec) = pad_to_pow2(img.view());
        assert_eq!(p.shape(), &[64, 64]);
        assert_eq!(rec.before, vec![2, 2]);
        assert_eq!(rec.after, vec![2, 2]);
        assert_eq!(p[[1, 10]], 0.0);
        assert_eq!(p[[2, 2]], 1.0);
        assert_eq!(p[[61, 61]], 1.0);
        assert_eq!(p[[62, 61]], 0.0);
        assert_eq!(rec.crop(p.view()).unwrap(), img);
    }

    #[test]
    fn pow2_grid_gets_empty_padding() {
        let img = random_grid(&[64, 64], 1);
        let (p, rec) = pad_to_pow2(img.view());
        assert!(rec.is_empty());
        assert_eq!(p, img);
    }

    #[test]
    fn odd_padding_goes_after() {
        let v = array![1.0, 2.0, 3.0, 4.0, 5.0].into_dyn();
        let (p, rec) = pad_to_pow2(v.view());
        assert_eq!(p.iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 0.0, 0.0]);
        assert_eq!(rec.before, vec![1]);
        assert_eq!(rec.after, vec![2]);
    }

    #[test]
    fn zero_image_gives_zero_coefficients() {
        let z = ArrayD::<f64>::zeros(IxDyn(&[16, 16]));
        let c = dwt(z.view(), &WaveletSpec::default().with_j0(2)).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
        assert!(idwt(&c).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_has_only_scaling_energy() {
        let c = 2.5;
        for (shape, j0) in [(vec![32usize, 32usize], 2usize), (vec![16, 16, 16], 1), (vec![64], 3)] {
            let img = ArrayD::from_elem(IxDyn(&shape), c);
            let coeffs = dwt(img.view(), &WaveletSpec::default().with_j0(j0)).unwrap();
            let n: usize = shape.iter().product();
            let d = shape.len();
            let scaling = coeffs.layout.block_indices(coeffs.layout.scaling_block());
            assert_eq!(scaling.len(), 1 << (d * j0));
            let expected = c * ((n as f64) / (1usize << (d * j0)) as f64).sqrt();
            for (i, &v) in coeffs.values.iter().enumerate() {
                if scaling.contains(&i) {
                    assert!((v - expected).abs() < 1e-10 * expected, "{v} vs {expected}");
                } else {
                    assert!(v.abs() < 1e-10, "detail {i} = {v}");
                }
            }
        }
    }

    #[test]
    fn reconstruction_and_parseval_32x32() {
        let img = random_grid(&[32, 32], 7);
        let c = dwt(img.view(), &WaveletSpec::default()).unwrap();
        let back = idwt(&c).unwrap();
        let err = norm(back.iter().zip(img.iter()).map(|(a, b)| a - b));
        assert!(err / norm(img.iter().copied()) < 1e-9);
        let rel = (norm(c.values.iter().copied()) - norm(img.iter().copied())).abs() / norm(img.iter().copied());
        assert!(rel < 1e-10);
    }

    #[test]
    fn unit_detail_coefficient_gives_unit_norm_basis_image() {
        let spec = WaveletSpec::default().with_j0(2);
        let layout = spec.layout(&[16, 16]).unwrap();
        let idx = layout.block_indices(&layout.blocks[3])[5];
        let mut values = Array1::zeros(layout.len());
        values[idx] = 1.0;
        let c = WaveletCoeffs {
            values,
            layout,
            spec,
            padding: Padding::for_shape(&[16, 16]),
        };
        let img = idwt(&c).unwrap();
        assert!((norm(img.iter().copied()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn haar_by_hand() {
        let x = array![4.0, 2.0, 5.0, 7.0].into_dyn();
        let c = dwt(x.view(), &WaveletSpec::haar(0)).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        // level-0 scaling, level-0 detail, two level-1 details
        let want = [9.0, -3.0, (4.0 - 2.0) * r, (5.0 - 7.0) * r];
        for (a, b) in c.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{:?}", c.values);
        }
    }

    #[test]
    fn rejects_level_too_deep_and_tampered_layout() {
        let img = random_grid(&[16, 16], 3);
        assert!(matches!(
            dwt(img.view(), &WaveletSpec::default().with_j0(4)),
            Err(Error::InvalidLevel { .. })
        ));
        let mut c = dwt(img.view(), &WaveletSpec::default().with_j0(2)).unwrap();
        c.spec.j0 = 1;
        assert!(idwt(&c).is_err());
    }

    #[test]
    fn f32_round_trip() {
        let img = random_grid(&[16, 16], 9).mapv(|v| v as f32);
        let c = dwt(img.view(), &WaveletSpec::default().with_j0(1)).unwrap();
        let back = idwt(&c).unwrap();
        let err = back.iter().zip(img.iter()).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
        assert!(err < 1e-5);
    }

    #[test]
    fn stack_rows_match_single_transforms_and_masks_apply() {
        let imgs: Vec<ArrayD<f64>> = (0..3).map(|s| random_grid(&[12, 10], s)).collect();
        let stack = ImageStack::from_images(&imgs).unwrap();
        let spec = WaveletSpec::default().with_j0(1);
        let sc = dwt_stack(&stack, &spec).unwrap();
        assert_eq!(sc.layout.padded_shape, vec![16, 16]);
        for (i, img) in imgs.iter().enumerate() {
            let c = dwt_padded(img.view(), &spec).unwrap();
            assert_eq!(sc.matrix.row(i), c.values);
        }
        let mut mask = vec![true; 120];
        mask[0] = false;
        let masked = stack.clone().with_mask(mask).unwrap();
        assert_eq!(masked.masked_data()[[1, 0]], 0.0);
    }
}
