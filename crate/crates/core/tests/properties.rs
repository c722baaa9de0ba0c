//! Randomized invariants for hypothesis handling, selection, features,
//! targets, and metrics, plus a distributional check of the triplet sampler.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tatum_core::dsp::features::{lag_stack, FeatureKind, FeatureSequence};
use tatum_core::dsp::plp::PlpResult;
use tatum_core::hypothesis::{
    admissible, sample_triplets, subset_indices, Hypothesis, NegativeKind, TripletConfig,
};
use tatum_core::metrics::{amlt, cmlt, f_measure};
use tatum_core::scoring::select_n_wta;
use tatum_core::supervised::widen_targets;

proptest! {
    /// For a fixed pulse ratio, the per-offset subsets split the peak list
    /// into disjoint classes that together cover every peak exactly once.
    #[test]
    fn subsets_partition_the_peaks(num_peaks in 0usize..60, omega in 1usize..7) {
        let mut seen = vec![0usize; num_peaks];
        for phi in 0..omega {
            let h = Hypothesis::new(omega, phi).unwrap();
            for i in subset_indices(num_peaks, h) {
                prop_assert!(i < num_peaks);
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1), "coverage counts {seen:?}");
    }

    /// Grid admissibility only depends on interval ratios, so stretching the
    /// whole grid by an integer factor never changes the verdict.
    #[test]
    fn admissibility_is_scale_invariant(
        intervals in prop::collection::vec(2usize..40, 2..15),
        scale in 2usize..5,
        threshold in 0.0f64..0.5,
    ) {
        let mut peaks = vec![3usize];
        for &iv in &intervals {
            peaks.push(peaks.last().unwrap() + iv);
        }
        let len = peaks.last().unwrap() + 2;
        let base = PlpResult::from_peaks(&peaks, len).unwrap();

        let scaled_peaks: Vec<usize> = peaks.iter().map(|&p| p * scale).collect();
        let scaled_len = scaled_peaks.last().unwrap() + 2;
        let scaled = PlpResult::from_peaks(&scaled_peaks, scaled_len).unwrap();

        prop_assert_eq!(admissible(&base, threshold), admissible(&scaled, threshold));
    }

    /// The selection keeps exactly the n smallest scores (NaN sorting last,
    /// ties to the lower index), reported in ascending index order.
    #[test]
    fn n_wta_picks_the_n_smallest(
        raw in prop::collection::vec(
            prop_oneof![9 => -100.0f64..100.0, 1 => Just(f64::NAN)],
            1..12,
        ),
        n_seed in 0usize..12,
    ) {
        let n = 1 + n_seed % raw.len();
        let result = select_n_wta(&raw, n).unwrap();

        let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
        let mut oracle: Vec<usize> = (0..raw.len()).collect();
        oracle.sort_by(|&a, &b| key(raw[a]).total_cmp(&key(raw[b])).then(a.cmp(&b)));
        let mut expected = oracle[..n].to_vec();
        expected.sort_unstable();

        prop_assert_eq!(&result.winners, &expected);
        prop_assert_eq!(result.scores.len(), raw.len());
        let mut sorted_check = result.winners.clone();
        sorted_check.sort_unstable();
        prop_assert_eq!(sorted_check, result.winners.clone());
    }

    /// Every output row of a lag stack is the concatenation of the input rows
    /// at the lagged positions, clamped at the sequence start.
    #[test]
    fn lag_stack_rows_are_clamped_sources(
        t_len in 1usize..20,
        d in 1usize..5,
        lags in prop::collection::vec(0usize..8, 1..4),
    ) {
        let values: Vec<f64> = (0..t_len * d).map(|i| i as f64 * 0.37).collect();
        let frames = ndarray::Array2::from_shape_vec((t_len, d), values).unwrap();
        let feat = FeatureSequence::new(frames, 0.02, FeatureKind::Synthetic).unwrap();

        let stacked = lag_stack(&feat, &lags);
        prop_assert_eq!(stacked.num_frames(), t_len);
        prop_assert_eq!(stacked.dim(), d * lags.len());
        for t in 0..t_len {
            for (j, &lag) in lags.iter().enumerate() {
                let src = t.saturating_sub(lag);
                for c in 0..d {
                    prop_assert_eq!(
                        stacked.frames[[t, j * d + c]],
                        feat.frames[[src, c]],
                    );
                }
            }
        }
    }

    /// Widened target weights take value 1 exactly on labels, 0.5 exactly on
    /// unlabeled frames within the radius of some label, and 0 elsewhere.
    #[test]
    fn widen_weights_characterized(
        raw in prop::collection::vec(prop::bool::weighted(0.2), 1..40),
        radius in 0usize..5,
    ) {
        let targets = widen_targets(&raw, radius);
        prop_assert_eq!(&targets.raw, &raw);
        for t in 0..raw.len() {
            let near = raw
                .iter()
                .enumerate()
                .any(|(s, &b)| b && s.abs_diff(t) <= radius);
            let expected = if raw[t] {
                1.0
            } else if near {
                0.5
            } else {
                0.0
            };
            prop_assert_eq!(targets.weights[t], expected);
        }
    }

    /// All beat scores live in [0, 1], and the best-variant continuity score
    /// can never fall below the plain one (the original reference is itself a
    /// variant).
    #[test]
    fn metric_ranges_and_dominance(
        interval in 0.25f64..0.9,
        start in 0.0f64..1.0,
        m in 4usize..30,
        jitter_scale in 0.0f64..0.45,
        seed in 0u64..1000,
    ) {
        let reference: Vec<f64> = (0..m).map(|k| start + k as f64 * interval).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est: Vec<f64> = reference
            .iter()
            .map(|&r| r + rng.gen_range(-jitter_scale..=jitter_scale) * interval)
            .collect();

        let f = f_measure(&est, &reference, 0.07);
        prop_assert!((0.0..=1.0).contains(&f), "f = {f}");

        let c = cmlt(&est, &reference, 0.175);
        let a = amlt(&est, &reference, 0.175);
        if let Some(c) = c {
            prop_assert!((0.0..=1.0).contains(&c));
            let a = a.expect("amlt defined whenever cmlt is");
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(a >= c, "amlt {a} < cmlt {c}");
        }
    }
}

/// Fixed pulse layout for sampler checks: 40 peaks every 10 frames.
fn sampler_fixture() -> (PlpResult, usize) {
    let peaks: Vec<usize> = (0..40).map(|k| 5 + 10 * k).collect();
    let t_len = 420;
    (PlpResult::from_peaks(&peaks, t_len).unwrap(), t_len)
}

#[test]
fn triplet_sampler_respects_pools_and_anchors_uniformly() {
    let (plp, t_len) = sampler_fixture();
    let h = Hypothesis::new(2, 1).unwrap();
    let subset: Vec<usize> = plp.peaks.iter().copied().step_by(2).collect();
    assert_eq!(subset.len(), 20);
    let off_subset: Vec<usize> = plp
        .peaks
        .iter()
        .copied()
        .filter(|p| !subset.contains(p))
        .collect();

    let cfg = TripletConfig { n_positives: 4, n_negatives: 16, hard_fraction: 0.5 };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut anchor_counts = vec![0usize; subset.len()];
    let draws = 10_000;

    for _ in 0..draws {
        let t = sample_triplets(&plp, t_len, h, &cfg, &mut rng).unwrap();

        let slot = subset.iter().position(|&f| f == t.anchor).expect("anchor on subset");
        anchor_counts[slot] += 1;

        assert_eq!(t.positives.len(), cfg.n_positives);
        for &p in &t.positives {
            assert!(subset.contains(&p), "positive {p} off subset");
            assert_ne!(p, t.anchor, "positive equals anchor");
        }

        assert_eq!(t.negatives.len(), cfg.n_negatives);
        let hard: Vec<usize> = t
            .negatives
            .iter()
            .filter(|n| n.kind == NegativeKind::Hard)
            .map(|n| n.frame)
            .collect();
        let easy: Vec<usize> = t
            .negatives
            .iter()
            .filter(|n| n.kind == NegativeKind::Easy)
            .map(|n| n.frame)
            .collect();
        // Both pools are large here, so the hard share is exact.
        assert_eq!(hard.len(), 8);
        assert_eq!(easy.len(), 8);
        for &f in &hard {
            assert!(off_subset.contains(&f), "hard negative {f} not an off-subset peak");
        }
        for &f in &easy {
            assert!(
                plp.peaks.iter().all(|&p| f.abs_diff(p) >= 2),
                "easy negative {f} too close to a peak"
            );
        }
    }

    // Anchor uniformity over 20 slots: expectation 500 per slot, binomial
    // standard deviation ~21.8; a +-6 sigma band keeps the test stable while
    // catching any systematic skew.
    let expected = draws as f64 / subset.len() as f64;
    let sigma = (draws as f64 * (1.0 / 20.0) * (19.0 / 20.0)).sqrt();
    for (slot, &count) in anchor_counts.iter().enumerate() {
        let dev = (count as f64 - expected).abs();
        assert!(
            dev < 6.0 * sigma,
            "anchor slot {slot} drawn {count} times (expected {expected:.0} ± {:.0})",
            6.0 * sigma
        );
    }
}

#[test]
fn triplet_sampler_backfills_when_a_pool_runs_dry() {
    let (plp, t_len) = sampler_fixture();
    // Omega 1 selects every peak: the hard pool is empty and all negatives
    // must come from easy frames.
    let h = Hypothesis::new(1, 0).unwrap();
    let cfg = TripletConfig { n_positives: 4, n_negatives: 16, hard_fraction: 0.5 };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = sample_triplets(&plp, t_len, h, &cfg, &mut rng).unwrap();
    assert_eq!(t.negatives.len(), 16);
    assert!(t.negatives.iter().all(|n| n.kind == NegativeKind::Easy));
}
