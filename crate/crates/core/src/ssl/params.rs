//! Parameters of the frame-local encoder and its projection heads.

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Layer sizes of the encoder and heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_z: usize,
    pub d_head: usize,
    pub n_heads: usize,
}

impl Dims {
    /// Standard head/hidden sizes for a given input width and head count.
    pub fn standard(d_in: usize, n_heads: usize) -> Self {
        Dims { d_in, d_hidden: 32, d_z: 16, d_head: 8, n_heads }
    }

    /// Total number of scalar parameters these sizes imply.
    pub fn param_count(&self) -> usize {
        self.d_hidden * self.d_in
            + self.d_hidden
            + self.d_z * self.d_hidden
            + self.d_z
            + self.n_heads * (self.d_head * self.d_z + self.d_head)
    }
}

/// One projection head: an affine map from the shared representation.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `d_head x d_z`.
    pub a: Array2<f64>,
    pub c: Array1<f64>,
}

/// Two affine encoder layers with a tanh in between, plus `n_heads` affine
/// projection heads. All values are f64.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dims: Dims,
    /// `d_hidden x d_in`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `d_z x d_hidden`.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub heads: Vec<HeadParams>,
}

impl EncoderParams {
    /// Seeded uniform init with `1/sqrt(fan_in)` bounds; biases start at zero.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fill = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (cols as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
        };
        let w1 = fill(dims.d_hidden, dims.d_in, &mut rng);
        let w2 = fill(dims.d_z, dims.d_hidden, &mut rng);
        let heads = (0..dims.n_heads)
            .map(|_| HeadParams {
                a: fill(dims.d_head, dims.d_z, &mut rng),
                c: Array1::zeros(dims.d_head),
            })
            .collect();
        EncoderParams {
            dims,
            w1,
            b1: Array1::zeros(dims.d_hidden),
            w2,
            b2: Array1::zeros(dims.d_z),
            heads,
        }
    }

    /// All-zero parameters (used for gradients and momentum buffers).
    pub fn zeros(dims: Dims) -> Self {
        EncoderParams {
            dims,
            w1: Array2::zeros((dims.d_hidden, dims.d_in)),
            b1: Array1::zeros(dims.d_hidden),
            w2: Array2::zeros((dims.d_z, dims.d_hidden)),
            b2: Array1::zeros(dims.d_z),
            heads: (0..dims.n_heads)
                .map(|_| HeadParams {
                    a: Array2::zeros((dims.d_head, dims.d_z)),
                    c: Array1::zeros(dims.d_head),
                })
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.dims.param_count()
    }

    /// Euclidean norm over every parameter tensor at once.
    pub fn l2_norm(&self) -> f64 {
        let mut sum = 0.0;
        let mut add = |it: &mut dyn Iterator<Item = &f64>| {
            for v in it {
                sum += v * v;
            }
        };
        add(&mut self.w1.iter());
        add(&mut self.b1.iter());
        add(&mut self.w2.iter());
        add(&mut self.b2.iter());
        for h in &self.heads {
            add(&mut h.a.iter());
            add(&mut h.c.iter());
        }
        sum.sqrt()
    }

    /// Flatten all parameters in a fixed order (encoder first, then heads).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        for h in &self.heads {
            out.extend(h.a.iter());
            out.extend(h.c.iter());
        }
        out
    }

    /// Rebuild parameters from [`EncoderParams::to_flat`] output.
    pub fn from_flat(dims: Dims, flat: &[f64]) -> Result<Self> {
        let mut params = EncoderParams::zeros(dims);
        if flat.len() != params.param_count() {
            return Err(CoreError::Shape(format!(
                "flat parameter vector of {} values, expected {}",
                flat.len(),
                params.param_count()
            )));
        }
        let mut it = flat.iter();
        let mut next = || *it.next().expect("length checked");
        for v in params.w1.iter_mut() {
            *v = next();
        }
        for v in params.b1.iter_mut() {
            *v = next();
        }
        for v in params.w2.iter_mut() {
            *v = next();
        }
        for v in params.b2.iter_mut() {
            *v = next();
        }
        for h in params.heads.iter_mut() {
            for v in h.a.iter_mut() {
                *v = next();
            }
            for v in h.c.iter_mut() {
                *v = next();
            }
        }
        Ok(params)
    }

    /// `self += alpha * other`, elementwise over every parameter tensor.
    pub fn add_scaled(&mut self, other: &EncoderParams, alpha: f64) {
        assert_eq!(self.dims, other.dims, "parameter shapes must match");
        self.w1.scaled_add(alpha, &other.w1);
        self.b1.scaled_add(alpha, &other.b1);
        self.w2.scaled_add(alpha, &other.w2);
        self.b2.scaled_add(alpha, &other.b2);
        for (h, o) in self.heads.iter_mut().zip(&other.heads) {
            h.a.scaled_add(alpha, &o.a);
            h.c.scaled_add(alpha, &o.c);
        }
    }

    /// Multiply every parameter by `alpha`.
    pub fn scale(&mut self, alpha: f64) {
        self.w1.mapv_inplace(|v| v * alpha);
        self.b1.mapv_inplace(|v| v * alpha);
        self.w2.mapv_inplace(|v| v * alpha);
        self.b2.mapv_inplace(|v| v * alpha);
        for h in self.heads.iter_mut() {
            h.a.mapv_inplace(|v| v * alpha);
            h.c.mapv_inplace(|v| v * alpha);
        }
    }

    /// Maximum absolute value across one head's parameters.
    pub fn head_max_abs(&self, k: usize) -> f64 {
        let h = &self.heads[k];
        h.a.iter()
            .chain(h.c.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seed_deterministic() {
        let dims = Dims::standard(12, 10);
        let a = EncoderParams::init(dims, 42);
        let b = EncoderParams::init(dims, 42);
        assert_eq!(a, b);
        let c = EncoderParams::init(dims, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn flat_round_trip_preserves_everything() {
        let dims = Dims::standard(7, 3);
        let params = EncoderParams::init(dims, 5);
        let flat = params.to_flat();
        assert_eq!(flat.len(), params.param_count());
        let back = EncoderParams::from_flat(dims, &flat).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn from_flat_rejects_wrong_length() {
        let dims = Dims::standard(4, 2);
        assert!(EncoderParams::from_flat(dims, &[0.0; 3]).is_err());
    }

    #[test]
    fn add_scaled_accumulates() {
        let dims = Dims::standard(3, 1);
        let mut a = EncoderParams::zeros(dims);
        let b = EncoderParams::init(dims, 1);
        a.add_scaled(&b, 2.0);
        assert!((a.w1[[0, 0]] - 2.0 * b.w1[[0, 0]]).abs() < 1e-15);
        assert!((a.heads[0].a[[0, 0]] - 2.0 * b.heads[0].a[[0, 0]]).abs() < 1e-15);
    }
}
