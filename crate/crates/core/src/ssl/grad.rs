//! Analytic gradients of the multi-head contrastive objective.
//!
//! The loss of a training step is a sum of per-winner contrastive terms.
//! Each term routes the shared frame representations `z` either through one
//! projection head (with RMS normalization) or, for self-training, compares
//! the `z` rows directly. Heads that win nothing receive exactly zero
//! gradient because they never enter the computation.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};

use crate::dsp::features::FeatureSequence;
use crate::error::{CoreError, Result};
use crate::hypothesis::TripletSet;
use crate::ssl::network::RMS_EPS;
use crate::ssl::params::EncoderParams;

/// One additive term of the step loss.
#[derive(Debug, Clone)]
pub struct LossTerm {
    /// Head the triplet is projected through; `None` compares `z` directly.
    pub head: Option<usize>,
    pub triplet: TripletSet,
}

fn validate(params: &EncoderParams, feat: &FeatureSequence, terms: &[LossTerm], tau: f64) -> Result<()> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(CoreError::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    if feat.dim() != params.dims.d_in {
        return Err(CoreError::Shape(format!(
            "encoder expects {} dims, features have {}",
            params.dims.d_in,
            feat.dim()
        )));
    }
    let t_len = feat.num_frames();
    for term in terms {
        if let Some(k) = term.head {
            if k >= params.heads.len() {
                return Err(CoreError::InvalidArgument(format!(
                    "head {k} out of range for {} heads",
                    params.heads.len()
                )));
            }
        }
        let trip = &term.triplet;
        if trip.positives.is_empty() || trip.negatives.is_empty() {
            return Err(CoreError::InvalidArgument("triplet needs positives and negatives".into()));
        }
        if trip.anchor >= t_len
            || trip.positives.iter().any(|&p| p >= t_len)
            || trip.negatives.iter().any(|n| n.frame >= t_len)
        {
            return Err(CoreError::Shape(format!("triplet frame out of range for {t_len} frames")));
        }
    }
    Ok(())
}

fn term_frames(term: &LossTerm) -> Vec<usize> {
    let trip = &term.triplet;
    let mut frames = Vec::with_capacity(1 + trip.positives.len() + trip.negatives.len());
    frames.push(trip.anchor);
    frames.extend_from_slice(&trip.positives);
    frames.extend(trip.negatives.iter().map(|n| n.frame));
    frames.sort_unstable();
    frames.dedup();
    frames
}

struct FrameForward {
    hidden: Array1<f64>,
    z: Array1<f64>,
}

fn forward_frames(
    params: &EncoderParams,
    feat: &FeatureSequence,
    frames: impl IntoIterator<Item = usize>,
) -> BTreeMap<usize, FrameForward> {
    let mut fwd = BTreeMap::new();
    for t in frames {
        fwd.entry(t).or_insert_with(|| {
            let mut hidden = params.w1.dot(&feat.row(t));
            hidden += &params.b1;
            hidden.mapv_inplace(f64::tanh);
            let mut z = params.w2.dot(&hidden);
            z += &params.b2;
            FrameForward { hidden, z }
        });
    }
    fwd
}

struct Projection {
    u: Array1<f64>,
    denom: f64,
    y: Array1<f64>,
}

fn project(params: &EncoderParams, k: usize, z: &Array1<f64>) -> Projection {
    let head = &params.heads[k];
    let mut u = head.a.dot(z);
    u += &head.c;
    let mean_sq = u.dot(&u) / u.len() as f64;
    let denom = (mean_sq + RMS_EPS * RMS_EPS).sqrt();
    let y = u.mapv(|v| v / denom);
    Projection { u, denom, y }
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}

/// Contrastive loss over a map of row vectors with gradients w.r.t. the rows.
///
/// Returns the loss and, when `grads` is requested, the accumulated
/// d(loss)/d(row) for every frame involved.
fn contrastive_term(
    rows: &BTreeMap<usize, Array1<f64>>,
    trip: &TripletSet,
    tau: f64,
    grads: bool,
) -> (f64, BTreeMap<usize, Array1<f64>>) {
    let anchor = &rows[&trip.anchor];

    let neg_sims: Vec<f64> = trip
        .negatives
        .iter()
        .map(|n| cosine(anchor, &rows[&n.frame]))
        .collect();
    let denom: f64 = neg_sims.iter().map(|s| (s / tau).exp()).sum();
    let log_denom = denom.ln();

    let pos_sims: Vec<f64> = trip
        .positives
        .iter()
        .map(|&p| cosine(anchor, &rows[&p]))
        .collect();
    let loss: f64 = pos_sims.iter().map(|s| -(s / tau - log_denom)).sum();

    let mut drows: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
    if grads {
        let n_pos = trip.positives.len() as f64;
        let mut add_pair = |other: usize, sim: f64, dsim: f64| {
            let a = &rows[&trip.anchor];
            let b = &rows[&other];
            let na = a.dot(a).sqrt();
            let nb = b.dot(b).sqrt();
            if na == 0.0 || nb == 0.0 {
                return; // similarity was pinned to 0, locally constant
            }
            let inv = 1.0 / (na * nb);
            let da = b.mapv(|v| v * inv) - a.mapv(|v| v * sim / (na * na));
            let db = a.mapv(|v| v * inv) - b.mapv(|v| v * sim / (nb * nb));
            let dim = a.len();
            drows
                .entry(trip.anchor)
                .or_insert_with(|| Array1::zeros(dim))
                .scaled_add(dsim, &da);
            drows
                .entry(other)
                .or_insert_with(|| Array1::zeros(dim))
                .scaled_add(dsim, &db);
        };

        for (&p, &sim) in trip.positives.iter().zip(&pos_sims) {
            add_pair(p, sim, -1.0 / tau);
        }
        for (n, &sim) in trip.negatives.iter().zip(&neg_sims) {
            let softmax = (sim / tau).exp() / denom;
            add_pair(n.frame, sim, n_pos * softmax / tau);
        }
    }
    (loss, drows)
}

fn add_outer(m: &mut Array2<f64>, col: &Array1<f64>, row: ArrayView1<'_, f64>) {
    for (i, &c) in col.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let mut target = m.row_mut(i);
        for (j, &r) in row.iter().enumerate() {
            target[j] += c * r;
        }
    }
}

/// Loss of a set of terms under fixed parameters (forward only).
pub fn total_loss(
    params: &EncoderParams,
    feat: &FeatureSequence,
    terms: &[LossTerm],
    tau: f64,
) -> Result<f64> {
    validate(params, feat, terms, tau)?;
    let mut loss = 0.0;
    for term in terms {
        let fwd = forward_frames(params, feat, term_frames(term));
        let rows: BTreeMap<usize, Array1<f64>> = match term.head {
            Some(k) => fwd
                .iter()
                .map(|(&t, f)| (t, project(params, k, &f.z).y))
                .collect(),
            None => fwd.iter().map(|(&t, f)| (t, f.z.clone())).collect(),
        };
        let (l, _) = contrastive_term(&rows, &term.triplet, tau, false);
        loss += l;
    }
    Ok(loss)
}

/// Loss plus analytic gradients for every parameter tensor.
pub fn grad(
    params: &EncoderParams,
    feat: &FeatureSequence,
    terms: &[LossTerm],
    tau: f64,
) -> Result<(f64, EncoderParams)> {
    validate(params, feat, terms, tau)?;
    let mut g = EncoderParams::zeros(params.dims);
    let mut loss = 0.0;

    // d(loss)/dz accumulated across terms; frames can be shared.
    let mut dz_acc: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
    let all_frames: Vec<usize> = terms.iter().flat_map(term_frames).collect();
    let fwd = forward_frames(params, feat, all_frames);

    for term in terms {
        let frames = term_frames(term);
        match term.head {
            Some(k) => {
                let projections: BTreeMap<usize, Projection> = frames
                    .iter()
                    .map(|&t| (t, project(params, k, &fwd[&t].z)))
                    .collect();
                let rows: BTreeMap<usize, Array1<f64>> =
                    projections.iter().map(|(&t, p)| (t, p.y.clone())).collect();
                let (l, dy) = contrastive_term(&rows, &term.triplet, tau, true);
                loss += l;

                let d_head = params.dims.d_head as f64;
                for (t, dy_t) in dy {
                    let p = &projections[&t];
                    // y = u / r with r = sqrt(mean(u^2) + eps^2):
                    // du = dy/r - u * (u . dy) / (d * r^3)
                    let u_dot_dy = p.u.dot(&dy_t);
                    let r = p.denom;
                    let mut du = dy_t.mapv(|v| v / r);
                    du.scaled_add(-u_dot_dy / (d_head * r * r * r), &p.u);

                    let z = &fwd[&t].z;
                    add_outer(&mut g.heads[k].a, &du, z.view());
                    g.heads[k].c += &du;
                    let dz = params.heads[k].a.t().dot(&du);
                    dz_acc
                        .entry(t)
                        .or_insert_with(|| Array1::zeros(params.dims.d_z))
                        .scaled_add(1.0, &dz);
                }
            }
            None => {
                let rows: BTreeMap<usize, Array1<f64>> =
                    frames.iter().map(|&t| (t, fwd[&t].z.clone())).collect();
                let (l, dzs) = contrastive_term(&rows, &term.triplet, tau, true);
                loss += l;
                for (t, dz) in dzs {
                    dz_acc
                        .entry(t)
                        .or_insert_with(|| Array1::zeros(params.dims.d_z))
                        .scaled_add(1.0, &dz);
                }
            }
        }
    }

    // Encoder backprop, once per frame with the summed upstream gradient.
    for (t, dz) in dz_acc {
        let f = &fwd[&t];
        add_outer(&mut g.w2, &dz, f.hidden.view());
        g.b2 += &dz;
        let dh = params.w2.t().dot(&dz);
        // d tanh(a) = 1 - tanh(a)^2
        let da = ndarray::Zip::from(&dh)
            .and(&f.hidden)
            .map_collect(|&dh_i, &h_i| dh_i * (1.0 - h_i * h_i));
        add_outer(&mut g.w1, &da, feat.row(t));
        g.b1 += &da;
    }

    Ok((loss, g))
}
