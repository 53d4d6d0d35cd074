use crate::error::{contract, Result};

/// Uniform probability grid with `k` centers at `j / (k - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinGrid {
    k: usize,
    centers: Vec<f64>,
}

impl BinGrid {
    pub fn new(k: usize) -> Result<Self> {
        contract(k >= 2, || format!("bin grid needs at least 2 bins, got {k}"))?;
        let last = (k - 1) as f64;
        let centers = (0..k).map(|j| j as f64 / last).collect();
        Ok(Self { k, centers })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Nearest center index; exact midpoints round up.
    pub fn bin_index(&self, p: f64) -> Result<usize> {
        contract((0.0..=1.0).contains(&p), || format!("probability {p} outside [0, 1]"))?;
        Ok(self.bin_of(p))
    }

    /// Unchecked variant of [`bin_index`](Self::bin_index) for hot loops.
    /// Inputs are clamped to `[0, 1]`.
    #[inline]
    pub(crate) fn bin_of(&self, p: f64) -> usize {
        let scaled = p.clamp(0.0, 1.0) * (self.k - 1) as f64;
        ((scaled + 0.5).floor() as usize).min(self.k - 1)
    }

    pub fn bin_center(&self, k: usize) -> Result<f64> {
        contract(k < self.k, || format!("bin {k} outside grid of {} bins", self.k))?;
        Ok(self.centers[k])
    }

    /// Half the spacing between adjacent centers.
    pub fn half_width(&self) -> f64 {
        0.5 / (self.k - 1) as f64
    }
}
