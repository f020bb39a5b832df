/// Dense batch tensor in `(sample, channel, row, col)` order.
///
/// Activations flow through layers as whole batches because batch
/// normalization couples samples within a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor size mismatch");
        Tensor { n, c, h, w, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Features per sample.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    /// Contiguous row `(n, c, y, ..)`.
    #[inline]
    pub fn row(&self, n: usize, c: usize, y: usize) -> &[f64] {
        let start = ((n * self.c + c) * self.h + y) * self.w;
        &self.data[start..start + self.w]
    }

    #[inline]
    pub fn row_mut(&mut self, n: usize, c: usize, y: usize) -> &mut [f64] {
        let start = ((n * self.c + c) * self.h + y) * self.w;
        &mut self.data[start..start + self.w]
    }

    /// Contiguous per-sample slice of `c*h*w` values.
    #[inline]
    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }
}
