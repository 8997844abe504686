use dynrate::features::{synth_piecewise_constant, synth_random_walk};
use dynrate::merge::{plan_for_sequence, refine_sequence};
use dynrate::{adjacent_similarity, apply_merge, plan_merge, unmerge, MergePlan, RefineMode, Refiner};
use proptest::prelude::*;

/// Maximal runs of consecutive links with `s >= tau`, each then cut into
/// chunks of at most `l_max` from the left. Built independently of the
/// scanning implementation.
fn runs_oracle(sims: &[f64], tau: f64, l_max: usize) -> Vec<usize> {
    let t = sims.len() + 1;
    if tau >= 1.0 {
        return vec![1; t];
    }
    // boundaries before frame i+1 wherever the link fails
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 0..t {
        let ends_here = sims.get(i).is_none_or(|&s| s < tau);
        if ends_here {
            runs.push(i + 1 - start);
            start = i + 1;
        }
    }
    let mut out = Vec::new();
    for run in runs {
        out.extend(std::iter::repeat_n(l_max, run / l_max));
        if run % l_max != 0 {
            out.push(run % l_max);
        }
    }
    out
}

#[test]
fn plan_matches_hand_traces() {
    assert_eq!(runs_oracle(&[0.95, 0.95, 0.5], 0.9, 8), vec![3, 1]);
    assert_eq!(plan_merge(&[0.95, 0.95, 0.5], 0.9, 8).unwrap().lengths(), &[3, 1]);
    assert_eq!(runs_oracle(&[1.0; 11], 0.99, 8), vec![8, 4]);
    assert_eq!(plan_merge(&[1.0; 11], 0.99, 8).unwrap().lengths(), &[8, 4]);
}

#[test]
fn piecewise_roundtrip_is_bit_exact() {
    for seed in 0..50 {
        let fx = synth_piecewise_constant(30, (1, 8), 7, seed);
        let plan = MergePlan::from_lengths(fx.segment_lengths.clone(), 8, None).unwrap();
        let merged = apply_merge(&fx.sequence, &plan).unwrap();
        assert_eq!(unmerge(&merged), fx.sequence);
        // the similarity-driven plan finds the same boundaries
        let found = plan_for_sequence(&fx.sequence, 0.99, 8).unwrap();
        assert_eq!(found.lengths(), fx.segment_lengths.as_slice());
    }
}

#[test]
fn merged_rate_follows_plan() {
    let seq = synth_random_walk(250, 8, 0.2, 5);
    let plan = plan_for_sequence(&seq, 0.9, 8).unwrap();
    let merged = apply_merge(&seq, &plan).unwrap();
    let expect = plan.merged_len() as f64 / (250.0 / 12.5);
    assert!((merged.average_frame_rate() - expect).abs() < 1e-12);
}

#[test]
fn refiner_on_sequences() {
    let seq = synth_random_walk(20, 3, 0.5, 2);
    assert_eq!(refine_sequence(&seq, &RefineMode::Identity), seq);
    let smoothed = refine_sequence(&seq, &RefineMode::WindowedMean { window: 2 });
    assert_eq!(smoothed.len(), seq.len());
    // direct per-index oracle
    for k in 0..seq.len() {
        let lo = k.saturating_sub(2);
        let hi = (k + 2).min(seq.len() - 1);
        for j in 0..3 {
            let want: f64 = (lo..=hi).map(|t| seq.frame(t)[j] as f64).sum::<f64>() / (hi - lo + 1) as f64;
            assert!((smoothed.frame(k)[j] as f64 - want).abs() < 1e-6);
        }
    }
}

/// Custom refiners plug into the same interface.
struct Negate;

impl Refiner for Negate {
    fn refine(&self, rows: &[f32], _dim: usize) -> Vec<f32> {
        rows.iter().map(|v| -v).collect()
    }
}

#[test]
fn custom_refiner() {
    let seq = synth_random_walk(5, 2, 0.5, 2);
    let plan = MergePlan::identity(5, 8).unwrap();
    let merged = apply_merge(&seq, &plan).unwrap().refined(&Negate);
    assert_eq!(merged.vector(0)[0], -seq.frame(0)[0]);
}

fn sims_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![
            3 => -1.0f64..=1.0,
            1 => Just(1.0),
            1 => 0.85f64..0.95,
        ],
        0..200,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn plan_invariants(sims in sims_strategy(), tau in 0.0f64..1.2, l_max in 1usize..12) {
        let plan = plan_merge(&sims, tau, l_max).unwrap();
        let t = sims.len() + 1;
        prop_assert_eq!(plan.lengths().iter().sum::<usize>(), t);
        prop_assert_eq!(plan.source_frame_count(), t);
        prop_assert!(plan.lengths().iter().all(|&l| l >= 1 && l <= l_max));
        let oracle = runs_oracle(&sims, tau, l_max);
        prop_assert_eq!(plan.lengths(), oracle.as_slice());
        if tau >= 1.0 {
            prop_assert!(plan.lengths().iter().all(|&l| l == 1));
        }
        prop_assert_eq!(&plan, &plan_merge(&sims, tau, l_max).unwrap());
    }

    #[test]
    fn plan_monotone_in_tau(sims in sims_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0, l_max in 1usize..10) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let n_lo = plan_merge(&sims, lo, l_max).unwrap().merged_len();
        let n_hi = plan_merge(&sims, hi, l_max).unwrap().merged_len();
        prop_assert!(n_lo <= n_hi);
    }

    #[test]
    fn length_preserved(t in 1usize..80, tau in 0.0f64..1.0, seed in any::<u64>()) {
        let seq = synth_random_walk(t, 4, 0.4, seed);
        let plan = plan_merge(&adjacent_similarity(&seq), tau, 8).unwrap();
        let merged = apply_merge(&seq, &plan).unwrap();
        prop_assert_eq!(unmerge(&merged).len(), seq.len());
        for (k, (s, e)) in plan.spans().enumerate() {
            for j in 0..4 {
                let mean = (s..e).map(|t| seq.frame(t)[j] as f64).sum::<f64>() / (e - s) as f64;
                prop_assert!((merged.vector(k)[j] as f64 - mean).abs() <= 1e-6 * mean.abs().max(1.0));
            }
        }
    }
}
