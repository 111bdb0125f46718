//! Per-pixel 6-tuples of normalized likelihoods with a validity mask.
//!
//! Binary layout (little endian): magic `GSLHMAP1`, `u32` width, `u32`
//! height, a row-major validity bitmap (`⌈w·h/8⌉` bytes, LSB first), then six
//! `f64` values for every valid pixel in row-major order.

use std::io::{Read, Write};

use crate::error::ClassifierError;
use crate::label::NUM_CLASSES;

pub type Tuple = [f64; NUM_CLASSES];

const MAGIC: &[u8; 8] = b"GSLHMAP1";

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodGrid {
    width: usize,
    height: usize,
    values: Vec<Tuple>,
    valid: Vec<bool>,
}

impl LikelihoodGrid {
    /// Grid with every pixel marked "no value".
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![[0.0; NUM_CLASSES]; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&Tuple> {
        let i = y * self.width + x;
        self.valid[i].then(|| &self.values[i])
    }

    pub fn set(&mut self, x: usize, y: usize, value: Option<Tuple>) {
        let i = y * self.width + x;
        match value {
            Some(v) => {
                self.values[i] = v;
                self.valid[i] = true;
            }
            None => {
                self.values[i] = [0.0; NUM_CLASSES];
                self.valid[i] = false;
            }
        }
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Row-major iterator over `(x, y, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Option<&Tuple>)> + '_ {
        let w = self.width;
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .map(move |(i, (v, &ok))| (i % w, i / w, ok.then_some(v)))
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        out.write_all(&(self.height as u32).to_le_bytes())?;
        let mut bitmap = vec![0u8; self.valid.len().div_ceil(8)];
        for (i, _) in self.valid.iter().enumerate().filter(|(_, &v)| v) {
            bitmap[i / 8] |= 1 << (i % 8);
        }
        out.write_all(&bitmap)?;
        for (v, _) in self.values.iter().zip(&self.valid).filter(|(_, &ok)| ok) {
            for x in v {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self, ClassifierError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ClassifierError::Shape("not a likelihood map file".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let width = u32::from_le_bytes(word) as usize;
        input.read_exact(&mut word)?;
        let height = u32::from_le_bytes(word) as usize;
        let n = width * height;
        let mut bitmap = vec![0u8; n.div_ceil(8)];
        input.read_exact(&mut bitmap)?;
        let mut grid = Self::empty(width, height);
        let mut buf = [0u8; 8];
        for i in 0..n {
            if bitmap[i / 8] & (1 << (i % 8)) != 0 {
                let mut t = [0.0; NUM_CLASSES];
                for v in &mut t {
                    input.read_exact(&mut buf)?;
                    *v = f64::from_le_bytes(buf);
                }
                grid.values[i] = t;
                grid.valid[i] = true;
            }
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_roundtrip(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let mut g = LikelihoodGrid::empty(w, h);
            let mut s = seed;
            for y in 0..h {
                for x in 0..w {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    if s >> 63 == 1 {
                        let base = (s >> 11) as f64 / (1u64 << 53) as f64;
                        g.set(x, y, Some([base, 1.0 - base, 0.0, 0.0, 0.0, 0.0]));
                    }
                }
            }
            let mut bytes = Vec::new();
            g.write_to(&mut bytes).unwrap();
            prop_assert_eq!(LikelihoodGrid::read_from(bytes.as_slice()).unwrap(), g);
        }
    }

    #[test]
    fn rejects_wrong_magic() {
        assert!(LikelihoodGrid::read_from(&b"NOTAMAP!\0\0\0\0\0\0\0\0"[..]).is_err());
    }
}
