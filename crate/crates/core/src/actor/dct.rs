//! Orthonormal DCT-II along the sequence axis, low-pass clipping, and
//! single-head attention over the retained frequency rows.

use super::mat::{dot, Mat};

/// Orthonormal DCT-II matrix: `C[k][n] = a_k cos(pi/N (n + 1/2) k)` with
/// `a_0 = sqrt(1/N)` and `a_k = sqrt(2/N)` otherwise.
pub fn dct_matrix(n: usize) -> Mat {
    assert!(n >= 1, "DCT length must be positive");
    let nf = n as f64;
    Mat::from_fn(n, n, |k, j| {
        let alpha = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        alpha * (std::f64::consts::PI / nf * (j as f64 + 0.5) * k as f64).cos()
    })
}

/// Precomputed DCT matrices for every length up to a maximum.
#[derive(Debug, Clone)]
pub struct DctBank {
    matrices: Vec<Mat>,
}

impl DctBank {
    pub fn new(max_len: usize) -> Self {
        Self {
            matrices: (1..=max_len.max(1)).map(dct_matrix).collect(),
        }
    }

    pub fn max_len(&self) -> usize {
        self.matrices.len()
    }

    pub fn get(&self, n: usize) -> &Mat {
        &self.matrices[n - 1]
    }
}

/// `C H` for an `N x r` input.
pub fn dct_forward(h: &Mat) -> Mat {
    dct_matrix(h.rows).matmul(h)
}

/// Keeps the first `min(m, N)` frequency rows.
pub fn clip_frequencies(h_hat: &Mat, m: usize) -> Mat {
    assert!(m >= 1, "clip width must be positive");
    let keep = m.min(h_hat.rows);
    Mat::from_vec(keep, h_hat.cols, h_hat.data[..keep * h_hat.cols].to_vec())
}

/// `Cᵀ [A; 0]`: inverse transform after zero-padding back to `n` rows.
pub fn idct_restore(a: &Mat, n: usize) -> Mat {
    assert!(a.rows <= n, "more frequency rows than sequence length");
    let c = dct_matrix(n);
    let mut out = Mat::zeros(n, a.cols);
    for k in 0..a.rows {
        let ak = a.row(k);
        for j in 0..n {
            let w = c.get(k, j);
            for (o, &v) in out.row_mut(j).iter_mut().zip(ak) {
                *o += w * v;
            }
        }
    }
    out
}

/// Output of [`freq_attention`] with the row-stochastic weight matrix.
#[derive(Debug, Clone)]
pub struct Attention {
    pub weights: Mat,
    pub output: Mat,
    pub queries: Mat,
    pub keys: Mat,
    pub values: Mat,
}

/// `softmax((Z Q)(Z K)ᵀ / sqrt(r)) (Z V)` for `Z` of shape `M x r`.
pub fn freq_attention(z: &Mat, q: &Mat, k: &Mat, v: &Mat) -> Attention {
    let r = z.cols;
    let queries = z.matmul(q);
    let keys = z.matmul(k);
    let values = z.matmul(v);
    let scale = 1.0 / (r as f64).sqrt();
    let mut weights = Mat::zeros(z.rows, z.rows);
    for i in 0..z.rows {
        let qi = queries.row(i);
        let row = weights.row_mut(i);
        for (j, w) in row.iter_mut().enumerate() {
            *w = dot(qi, keys.row(j)) * scale;
        }
        softmax_in_place(row);
    }
    let output = weights.matmul(&values);
    Attention {
        weights,
        output,
        queries,
        keys,
        values,
    }
}

/// Numerically stable softmax. `-inf` entries get probability exactly zero.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = if *x == f64::NEG_INFINITY { 0.0 } else { (*x - max).exp() };
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}
