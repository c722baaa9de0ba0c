//! Forward passes of the frame-local encoder and projection heads.

use ndarray::{Array1, Array2, ArrayView1};

use crate::dsp::features::FeatureSequence;
use crate::error::{CoreError, Result};
use crate::ssl::params::EncoderParams;

/// Scale floor inside the RMS denominator: rows are divided by
/// `sqrt(mean(u^2) + RMS_EPS^2)`, so all-zero rows stay zero while ordinary
/// rows keep root-mean-square 1 to well below 1e-9.
pub const RMS_EPS: f64 = 1e-8;

/// Frame-local representations on the shared hop grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSequence {
    /// Row `t` is the representation of frame `t` (`T x d_z`).
    pub z: Array2<f64>,
    pub hop_s: f64,
}

/// Encode one feature vector: `z = W2 tanh(W1 v + b1) + b2`.
pub fn encode_row(params: &EncoderParams, v: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut hidden = params.w1.dot(&v);
    hidden += &params.b1;
    hidden.mapv_inplace(f64::tanh);
    let mut z = params.w2.dot(&hidden);
    z += &params.b2;
    z
}

/// Encode every frame of a feature sequence.
///
/// The encoder sees one frame at a time, so row `t` of the output depends
/// only on row `t` of the input.
pub fn encode(params: &EncoderParams, feat: &FeatureSequence) -> Result<RepresentationSequence> {
    if feat.dim() != params.dims.d_in {
        return Err(CoreError::Shape(format!(
            "encoder expects {} dims, features have {}",
            params.dims.d_in,
            feat.dim()
        )));
    }
    let mut z = Array2::zeros((feat.num_frames(), params.dims.d_z));
    for (t, row) in feat.frames.rows().into_iter().enumerate() {
        z.row_mut(t).assign(&encode_row(params, row));
    }
    Ok(RepresentationSequence { z, hop_s: feat.hop_s })
}

/// Divide a row by `sqrt(mean(u^2) + RMS_EPS^2)`.
pub fn rms_normalize(u: &mut Array1<f64>) {
    let mean_sq = u.dot(u) / u.len() as f64;
    let denom = (mean_sq + RMS_EPS * RMS_EPS).sqrt();
    u.mapv_inplace(|v| v / denom);
}

/// Project representations through head `k` and RMS-normalize each frame.
pub fn head_project(
    params: &EncoderParams,
    rep: &RepresentationSequence,
    k: usize,
) -> Result<Array2<f64>> {
    let head = params.heads.get(k).ok_or_else(|| {
        CoreError::InvalidArgument(format!(
            "head {k} out of range for {} heads",
            params.heads.len()
        ))
    })?;
    if rep.z.ncols() != params.dims.d_z {
        return Err(CoreError::Shape(format!(
            "representations have {} dims, heads expect {}",
            rep.z.ncols(),
            params.dims.d_z
        )));
    }
    let mut out = Array2::zeros((rep.z.nrows(), params.dims.d_head));
    for (t, row) in rep.z.rows().into_iter().enumerate() {
        let mut u = head.a.dot(&row);
        u += &head.c;
        rms_normalize(&mut u);
        out.row_mut(t).assign(&u);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::features::FeatureKind;
    use crate::ssl::params::Dims;
    use ndarray::array;

    fn feat(frames: Array2<f64>) -> FeatureSequence {
        FeatureSequence::new(frames, 0.02, FeatureKind::Synthetic).unwrap()
    }

    fn rms(row: ArrayView1<'_, f64>) -> f64 {
        (row.dot(&row) / row.len() as f64).sqrt()
    }

    #[test]
    fn rms_normalize_pinned_example() {
        let mut u = array![3.0, 4.0];
        rms_normalize(&mut u);
        // mean square = 12.5, so the row divides by sqrt(12.5).
        let denom = 12.5f64.sqrt();
        assert!((u[0] - 3.0 / denom).abs() < 1e-9);
        assert!((u[1] - 4.0 / denom).abs() < 1e-9);
        assert!((rms(u.view()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rms_of_zero_row_stays_zero() {
        let mut u = array![0.0, 0.0, 0.0];
        rms_normalize(&mut u);
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projected_rows_have_unit_rms() {
        let dims = Dims::standard(6, 4);
        let params = EncoderParams::init(dims, 9);
        let frames = Array2::from_shape_fn((10, 6), |(t, d)| ((t * 7 + d) as f64 * 0.13).sin());
        let rep = encode(&params, &feat(frames)).unwrap();
        for k in 0..4 {
            let proj = head_project(&params, &rep, k).unwrap();
            for row in proj.rows() {
                assert!((rms(row) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn encoding_is_frame_local() {
        let dims = Dims::standard(3, 2);
        let params = EncoderParams::init(dims, 3);
        let a = feat(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]);
        let b = feat(array![[7.0, 8.0, 9.0], [1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        let za = encode(&params, &a).unwrap();
        let zb = encode(&params, &b).unwrap();
        // Permuting input frames permutes representation rows identically.
        assert_eq!(za.z.row(0), zb.z.row(1));
        assert_eq!(za.z.row(1), zb.z.row(2));
        assert_eq!(za.z.row(2), zb.z.row(0));
    }

    #[test]
    fn encode_checks_input_width() {
        let dims = Dims::standard(5, 1);
        let params = EncoderParams::init(dims, 0);
        let wrong = feat(Array2::zeros((2, 4)));
        assert!(encode(&params, &wrong).is_err());
    }

    #[test]
    fn head_index_is_validated() {
        let dims = Dims::standard(4, 2);
        let params = EncoderParams::init(dims, 0);
        let rep = encode(&params, &feat(Array2::zeros((2, 4)))).unwrap();
        assert!(head_project(&params, &rep, 2).is_err());
    }
}
