//! Planar `(channel, row, column)` tensor of `f64` values.
//!
//! All detector arithmetic is 64-bit so analytic gradients can be checked
//! against central finite differences at 1e-4 relative tolerance.

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor3 {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length mismatch");
        Tensor3 { c, h, w, data }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn row(&self, c: usize, y: usize) -> &[f64] {
        let base = (c * self.h + y) * self.w;
        &self.data[base..base + self.w]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize, y: usize) -> &mut [f64] {
        let base = (c * self.h + y) * self.w;
        &mut self.data[base..base + self.w]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean of one channel plane.
    pub fn plane_mean(&self, c: usize) -> f64 {
        let base = c * self.h * self.w;
        self.data[base..base + self.h * self.w].iter().sum::<f64>() / (self.h * self.w) as f64
    }

    /// Mean over spatial positions per channel (global average pool).
    pub fn spatial_mean(&self) -> Vec<f64> {
        let n = (self.h * self.w) as f64;
        (0..self.c)
            .map(|c| {
                let base = c * self.h * self.w;
                self.data[base..base + self.h * self.w].iter().sum::<f64>() / n
            })
            .collect()
    }
}
