//! Coefficient layout descriptors.
//!
//! Coefficients of a `d`-dimensional transform are stored in the padded
//! grid in the usual Mallat arrangement (coarse block in the low corner)
//! and flattened in row-major order. Each block is a sub-box of the grid
//! described by its per-axis `offset` and `length`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Scaling,
    Detail,
}

/// One rectangular block of coefficients sharing a level and orientation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub kind: BlockKind,
    /// Resolution level: `j0` for the scaling block and the coarsest details,
    /// increasing towards the finest details.
    pub level: usize,
    /// One character per axis: `L` for a scaling factor, `H` for a wavelet factor.
    pub orientation: String,
    pub offset: Vec<usize>,
    pub length: Vec<usize>,
}

impl Block {
    pub fn size(&self) -> usize {
        self.length.iter().product()
    }

    fn contains(&self, idx: &[usize]) -> bool {
        idx.iter()
            .zip(self.offset.iter().zip(&self.length))
            .all(|(&i, (&o, &l))| i >= o && i < o + l)
    }
}

/// Position of a single coefficient: level, orientation and per-axis shift.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoeffPosition {
    pub kind: BlockKind,
    pub level: usize,
    pub orientation: String,
    pub shift: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoeffLayout {
    pub padded_shape: Vec<usize>,
    pub j0: usize,
    /// Number of pyramid steps applied.
    pub steps: usize,
    pub blocks: Vec<Block>,
}

impl CoeffLayout {
    /// Builds the layout for a padded grid; every side must be a power of two
    /// and `j0` below `log2` of the shortest side.
    pub fn new(padded_shape: &[usize], j0: usize) -> Result<Self> {
        if padded_shape.is_empty() {
            return Err(Error::ShapeMismatch("grid must have at least one axis".into()));
        }
        for &s in padded_shape {
            if s == 0 || !s.is_power_of_two() {
                return Err(Error::ShapeMismatch(format!(
                    "side length {s} is not a power of two; pad first"
                )));
            }
        }
        let jmin = padded_shape
            .iter()
            .map(|s| s.trailing_zeros() as usize)
            .min()
            .unwrap_or(0);
        if j0 >= jmin {
            return Err(Error::InvalidLevel { j0, max: jmin });
        }
        let steps = jmin - j0;
        let d = padded_shape.len();
        let mut blocks = Vec::new();
        blocks.push(Block {
            kind: BlockKind::Scaling,
            level: j0,
            orientation: "L".repeat(d),
            offset: vec![0; d],
            length: padded_shape.iter().map(|&s| s >> steps).collect(),
        });
        // coarsest detail first
        for s in (0..steps).rev() {
            let level = j0 + (steps - 1 - s);
            let half: Vec<usize> = padded_shape.iter().map(|&n| (n >> s) / 2).collect();
            for bits in 1..(1usize << d) {
                let orientation: String = (0..d)
                    .map(|a| if bits >> (d - 1 - a) & 1 == 1 { 'H' } else { 'L' })
                    .collect();
                let offset = (0..d)
                    .map(|a| if bits >> (d - 1 - a) & 1 == 1 { half[a] } else { 0 })
                    .collect();
                blocks.push(Block {
                    kind: BlockKind::Detail,
                    level,
                    orientation,
                    offset,
                    length: half.clone(),
                });
            }
        }
        Ok(CoeffLayout {
            padded_shape: padded_shape.to_vec(),
            j0,
            steps,
            blocks,
        })
    }

    pub fn len(&self) -> usize {
        self.padded_shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ndim(&self) -> usize {
        self.padded_shape.len()
    }

    /// Finest detail level (`J - 1` for a cube of side `2^J`).
    pub fn finest_level(&self) -> usize {
        self.j0 + self.steps - 1
    }

    pub fn scaling_block(&self) -> &Block {
        &self.blocks[0]
    }

    /// Row-major flat index of a grid position.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.padded_shape)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.ndim()];
        for a in (0..self.ndim()).rev() {
            idx[a] = flat % self.padded_shape[a];
            flat /= self.padded_shape[a];
        }
        idx
    }

    /// Level, orientation and shift of the coefficient stored at `flat`.
    pub fn describe(&self, flat: usize) -> Option<CoeffPosition> {
        if flat >= self.len() {
            return None;
        }
        let idx = self.unflatten(flat);
        self.blocks.iter().find(|b| b.contains(&idx)).map(|b| CoeffPosition {
            kind: b.kind,
            level: b.level,
            orientation: b.orientation.clone(),
            shift: idx.iter().zip(&b.offset).map(|(i, o)| i - o).collect(),
        })
    }

    /// Flat indices of every coefficient in a block, in row-major order.
    pub fn block_indices(&self, block: &Block) -> Vec<usize> {
        let d = self.ndim();
        let mut out = Vec::with_capacity(block.size());
        let mut cur = vec![0usize; d];
        if block.size() == 0 {
            return out;
        }
        loop {
            let idx: Vec<usize> = cur.iter().zip(&block.offset).map(|(c, o)| c + o).collect();
            out.push(self.flat_index(&idx));
            let mut a = d;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                cur[a] += 1;
                if cur[a] < block.length[a] {
                    break;
                }
                cur[a] = 0;
            }
        }
    }

    /// Checks that this descriptor is the one implied by its own shape and `j0`.
    pub fn validate(&self) -> Result<()> {
        let expected = CoeffLayout::new(&self.padded_shape, self.j0)
            .map_err(|e| Error::LayoutMismatch(e.to_string()))?;
        if &expected != self {
            return Err(Error::LayoutMismatch(format!(
                "descriptor for shape {:?} with j0 = {} is inconsistent",
                self.padded_shape, self.j0
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_partition_grid() {
        for (shape, j0) in [(vec![16usize], 1usize), (vec![8, 8], 1), (vec![16, 8], 0), (vec![4, 4, 4], 1)] {
            let layout = CoeffLayout::new(&shape, j0).unwrap();
            let mut seen = vec![0u8; layout.len()];
            for b in &layout.blocks {
                for i in layout.block_indices(b) {
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1), "{shape:?}");
        }
    }

    #[test]
    fn scaling_count_is_two_to_the_d_j0() {
        let layout = CoeffLayout::new(&[64, 64], 4).unwrap();
        assert_eq!(layout.scaling_block().size(), 1 << (2 * 4));
        let l3 = CoeffLayout::new(&[32, 32, 32], 2).unwrap();
        assert_eq!(l3.scaling_block().size(), 1 << 6);
        // three orientations per level in 2D, seven in 3D
        assert_eq!(layout.blocks.len(), 1 + 3 * 2);
        assert_eq!(l3.blocks.len(), 1 + 7 * 3);
    }

    #[test]
    fn describe_reports_shift_within_block() {
        let layout = CoeffLayout::new(&[8, 8], 1).unwrap();
        let flat = layout.flat_index(&[5, 2]);
        let pos = layout.describe(flat).unwrap();
        assert_eq!(pos.kind, BlockKind::Detail);
        assert_eq!(pos.level, 2);
        assert_eq!(pos.orientation, "HL");
        assert_eq!(pos.shift, vec![1, 2]);
    }

    #[test]
    fn rejects_inadmissible_level() {
        assert!(matches!(
            CoeffLayout::new(&[16, 16], 4),
            Err(Error::InvalidLevel { j0: 4, max: 4 })
        ));
        assert!(CoeffLayout::new(&[12], 1).is_err());
    }

    #[test]
    fn tampered_descriptor_fails_validation() {
        let mut layout = CoeffLayout::new(&[16, 16], 2).unwrap();
        layout.padded_shape = vec![16, 32];
        assert!(layout.validate().is_err());
    }
}
