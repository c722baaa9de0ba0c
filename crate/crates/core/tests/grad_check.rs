//! Finite-difference validation of the hand-written gradients.
//!
//! Central differences with step 1e-5 against the analytic gradient on a
//! spread of network shapes, head assignments, and triplet layouts. Sampled
//! coordinates must agree to a relative error of 1e-4 (tiny gradients are
//! compared absolutely instead, where FD noise dominates any ratio).

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tatum_core::dsp::features::{FeatureKind, FeatureSequence};
use tatum_core::hypothesis::{Negative, NegativeKind, TripletSet};
use tatum_core::ssl::grad::{grad, total_loss, LossTerm};
use tatum_core::ssl::params::{Dims, EncoderParams};

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_TOL: f64 = 1e-8;

fn random_feat(t_len: usize, d: usize, rng: &mut ChaCha8Rng) -> FeatureSequence {
    let frames = Array2::from_shape_fn((t_len, d), |_| rng.gen_range(-1.0..1.0));
    FeatureSequence::new(frames, 0.02, FeatureKind::Synthetic).unwrap()
}

fn random_triplet(t_len: usize, n_pos: usize, n_neg: usize, rng: &mut ChaCha8Rng) -> TripletSet {
    let mut frames: Vec<usize> = (0..t_len).collect();
    frames.shuffle(rng);
    let anchor = frames[0];
    let positives = frames[1..1 + n_pos].to_vec();
    let negatives = frames[1 + n_pos..1 + n_pos + n_neg]
        .iter()
        .map(|&frame| Negative { frame, kind: NegativeKind::Easy })
        .collect();
    TripletSet { anchor, positives, negatives }
}

/// Check `n_coords` randomly chosen parameter coordinates by central
/// differences; returns the worst relative error among the checked ones.
fn check_config(
    dims: Dims,
    terms: &[LossTerm],
    tau: f64,
    t_len: usize,
    n_coords: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feat = random_feat(t_len, dims.d_in, &mut rng);
    let params = EncoderParams::init(dims, seed ^ 0x5ca1e);

    let (loss, analytic) = grad(&params, &feat, terms, tau).unwrap();
    let direct = total_loss(&params, &feat, terms, tau).unwrap();
    assert!(
        (loss - direct).abs() < 1e-10,
        "grad() and total_loss() disagree: {loss} vs {direct}"
    );

    let flat = params.to_flat();
    let aflat = analytic.to_flat();
    let mut worst: f64 = 0.0;
    for _ in 0..n_coords {
        let idx = rng.gen_range(0..flat.len());
        let mut plus = flat.clone();
        plus[idx] += FD_STEP;
        let mut minus = flat.clone();
        minus[idx] -= FD_STEP;
        let lp = total_loss(&EncoderParams::from_flat(dims, &plus).unwrap(), &feat, terms, tau)
            .unwrap();
        let lm = total_loss(&EncoderParams::from_flat(dims, &minus).unwrap(), &feat, terms, tau)
            .unwrap();
        let fd = (lp - lm) / (2.0 * FD_STEP);
        let a = aflat[idx];
        let diff = (a - fd).abs();
        if diff > ABS_TOL {
            let rel = diff / a.abs().max(fd.abs());
            assert!(
                rel < REL_TOL,
                "coordinate {idx}: analytic {a} vs finite-difference {fd} (rel {rel:.2e})"
            );
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn single_winner_head() {
    let dims = Dims { d_in: 10, d_hidden: 7, d_z: 5, d_head: 4, n_heads: 4 };
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let terms = vec![LossTerm { head: Some(1), triplet: random_triplet(40, 4, 16, &mut rng) }];
    let worst = check_config(dims, &terms, 0.1, 40, 20, 1);
    assert!(worst < REL_TOL);
}

#[test]
fn two_winners_sharing_frames() {
    let dims = Dims { d_in: 6, d_hidden: 32, d_z: 16, d_head: 8, n_heads: 10 };
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    // Overlapping triplets exercise the per-frame gradient accumulation.
    let a = random_triplet(25, 3, 8, &mut rng);
    let mut b = random_triplet(25, 3, 8, &mut rng);
    b.anchor = a.anchor;
    let terms = vec![
        LossTerm { head: Some(0), triplet: a },
        LossTerm { head: Some(7), triplet: b },
    ];
    let worst = check_config(dims, &terms, 0.5, 25, 20, 2);
    assert!(worst < REL_TOL);
}

#[test]
fn representation_level_term() {
    let dims = Dims { d_in: 12, d_hidden: 9, d_z: 6, d_head: 3, n_heads: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let terms = vec![
        LossTerm { head: None, triplet: random_triplet(30, 4, 12, &mut rng) },
        LossTerm { head: Some(2), triplet: random_triplet(30, 2, 6, &mut rng) },
    ];
    let worst = check_config(dims, &terms, 0.2, 30, 20, 3);
    assert!(worst < REL_TOL);
}

#[test]
fn losing_heads_get_structurally_zero_gradients() {
    let dims = Dims { d_in: 8, d_hidden: 6, d_z: 5, d_head: 4, n_heads: 10 };
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let feat = random_feat(30, 8, &mut rng);
    let params = EncoderParams::init(dims, 4);
    let terms = vec![
        LossTerm { head: Some(3), triplet: random_triplet(30, 4, 16, &mut rng) },
        LossTerm { head: Some(6), triplet: random_triplet(30, 4, 16, &mut rng) },
    ];
    let (_, g) = grad(&params, &feat, &terms, 0.1).unwrap();
    for k in 0..10 {
        if k == 3 || k == 6 {
            assert!(g.head_max_abs(k) > 0.0, "winner {k} missing gradient");
        } else {
            assert_eq!(g.head_max_abs(k), 0.0, "loser {k} has gradient");
        }
    }
}

#[test]
fn identical_frames_have_zero_gradient_everywhere() {
    let dims = Dims { d_in: 5, d_hidden: 4, d_z: 4, d_head: 3, n_heads: 2 };
    let frames = Array2::from_shape_fn((12, 5), |(_, j)| 0.2 * (j as f64 + 1.0));
    let feat = FeatureSequence::new(frames, 0.02, FeatureKind::Synthetic).unwrap();
    let params = EncoderParams::init(dims, 5);
    let trip = TripletSet {
        anchor: 0,
        positives: vec![1, 2, 3],
        negatives: (4..10)
            .map(|frame| Negative { frame, kind: NegativeKind::Easy })
            .collect(),
    };
    let terms = vec![LossTerm { head: Some(0), triplet: trip }];
    let (loss, g) = grad(&params, &feat, &terms, 0.1).unwrap();
    assert!((loss - 3.0 * 6f64.ln()).abs() < 1e-9);
    // cos(a, a) lands within an ulp of 1, so a ~1e-16 residue can remain.
    for v in g.to_flat() {
        assert!(v.abs() < 1e-12, "gradient {v} too large at a stationary point");
    }
}
