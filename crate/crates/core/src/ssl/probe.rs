//! Linear probe: class-weighted logistic regression on frozen representations.
//!
//! Used to judge how linearly separable beat frames are in a representation
//! space. Training is deterministic full-batch gradient descent from a zero
//! initialisation, so repeated fits give bit-identical probes.

use ndarray::{Array1, Array2};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { lr: 0.5, epochs: 300, l2: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct Probe {
    pub weights: Array1<f64>,
    pub bias: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fit a logistic regression with inverse-frequency class weights, so a rare
/// positive class still moves the decision boundary.
pub fn fit(x: &Array2<f64>, y: &[bool], cfg: &ProbeConfig) -> Result<Probe> {
    let n = x.nrows();
    if n == 0 || n != y.len() {
        return Err(CoreError::Shape(format!(
            "{} rows of features against {} labels",
            n,
            y.len()
        )));
    }
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) || cfg.epochs == 0 || cfg.l2 < 0.0 {
        return Err(CoreError::InvalidArgument("bad probe config".into()));
    }
    let n_pos = y.iter().filter(|&&b| b).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CoreError::InvalidArgument("probe needs both classes present".into()));
    }
    // Balanced weighting: each class contributes half the total mass.
    let w_pos = n as f64 / (2.0 * n_pos as f64);
    let w_neg = n as f64 / (2.0 * n_neg as f64);

    let d = x.ncols();
    let mut weights = Array1::<f64>::zeros(d);
    let mut bias = 0.0f64;

    for _ in 0..cfg.epochs {
        let mut gw = Array1::<f64>::zeros(d);
        let mut gb = 0.0f64;
        for (i, row) in x.rows().into_iter().enumerate() {
            let margin = row.dot(&weights) + bias;
            let p = sigmoid(margin);
            let target = if y[i] { 1.0 } else { 0.0 };
            let class_w = if y[i] { w_pos } else { w_neg };
            let err = class_w * (p - target);
            gw.scaled_add(err, &row);
            gb += err;
        }
        let inv_n = 1.0 / n as f64;
        gw.mapv_inplace(|v| v * inv_n);
        gw.scaled_add(cfg.l2, &weights);
        gb *= inv_n;
        weights.scaled_add(-cfg.lr, &gw);
        bias -= cfg.lr * gb;
    }
    Ok(Probe { weights, bias })
}

impl Probe {
    /// Hard decision at probability threshold 0.5 (margin 0).
    pub fn predict(&self, x: &Array2<f64>) -> Vec<bool> {
        x.rows().into_iter().map(|r| r.dot(&self.weights) + self.bias >= 0.0).collect()
    }
}

/// F1 over frame-level boolean decisions.
///
/// Both sets empty counts as a perfect 1.0; exactly one empty is 0.0.
pub fn frame_f1(pred: &[bool], truth: &[bool]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "prediction and truth length mismatch");
    let tp = pred.iter().zip(truth).filter(|(&p, &t)| p && t).count();
    let n_pred = pred.iter().filter(|&&p| p).count();
    let n_truth = truth.iter().filter(|&&t| t).count();
    if n_pred == 0 && n_truth == 0 {
        return 1.0;
    }
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / n_pred as f64;
    let recall = tp as f64 / n_truth as f64;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separable(seed: u64, n: usize, imbalance: f64) -> (Array2<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((n, 3));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let pos = rng.gen_bool(imbalance);
            let center = if pos { 1.5 } else { -1.5 };
            for j in 0..3 {
                x[[i, j]] = center + rng.gen_range(-0.5..0.5) * (j as f64 + 1.0) * 0.3;
            }
            y.push(pos);
        }
        (x, y)
    }

    #[test]
    fn fits_separable_data_perfectly() {
        let (x, y) = separable(0, 300, 0.5);
        let probe = fit(&x, &y, &ProbeConfig::default()).unwrap();
        let pred = probe.predict(&x);
        assert!((frame_f1(&pred, &y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn class_weighting_rescues_rare_positives() {
        // 5% positives: an unweighted threshold-0.5 fit would lean negative.
        let (x, y) = separable(1, 2000, 0.05);
        let probe = fit(&x, &y, &ProbeConfig::default()).unwrap();
        let pred = probe.predict(&x);
        assert!(frame_f1(&pred, &y) > 0.95);
    }

    #[test]
    fn fit_is_deterministic() {
        let (x, y) = separable(2, 200, 0.3);
        let a = fit(&x, &y, &ProbeConfig::default()).unwrap();
        let b = fit(&x, &y, &ProbeConfig::default()).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias, b.bias);
    }

    #[test]
    fn f1_edge_cases() {
        assert_eq!(frame_f1(&[false, false], &[false, false]), 1.0);
        assert_eq!(frame_f1(&[true, false], &[false, false]), 0.0);
        assert_eq!(frame_f1(&[false, false], &[true, false]), 0.0);
        // 1 tp, 1 fp, 1 fn: precision = recall = 1/2.
        let f = frame_f1(&[true, true, false], &[true, false, true]);
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_single_class_and_bad_shapes() {
        let x = Array2::zeros((4, 2));
        assert!(fit(&x, &[true, true, true, true], &ProbeConfig::default()).is_err());
        assert!(fit(&x, &[true, false], &ProbeConfig::default()).is_err());
    }
}
