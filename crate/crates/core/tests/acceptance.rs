//! Acceptance suite. Each criterion prints one `[PASS]` or `[FAIL]` line;
//! run with `--nocapture` to see them.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use dynrate::analysis::{
    bitrate_at_rate, exact_rate, frame_rate_at_tau, matches_display, pearson_r, stride_frame_rate, tau_for_target_rate,
    Exact,
};
use dynrate::codec::{BitLayout, FLXC_HEADER_LEN};
use dynrate::features::{synth_event_density, synth_piecewise_constant, synth_random_walk};
use dynrate::merge::plan_merge;
use dynrate::quant::{fsq_index_decode, fsq_index_encode, rvq_encode, rvq_fit, rvq_fit_with_report, RvqCodebooks};
use dynrate::{apply_merge, pack, unmerge, Error, FrameRate, MergePlan, TokenLayout, TokenStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn(),
}

fn bitrate_reproduction() {
    let layout = BitLayout::REFERENCE;
    let table = [
        (Exact::new(25, 2), "0.23", "1.3"),
        (Exact::new(25, 3), "0.15", "0.85"),
        (Exact::new(25, 4), "0.11", "0.64"),
    ];
    for (rate, sem, total) in table {
        let semantic = bitrate_at_rate(rate, 1, &layout);
        let full = bitrate_at_rate(rate, 8, &layout);
        assert_eq!(semantic.semantic_exact, semantic.total_exact);
        assert!(
            matches_display(&semantic.semantic_exact, sem),
            "{rate}: semantic {}",
            semantic.semantic_kbps
        );
        assert!(
            matches_display(&full.total_exact, total),
            "{rate}: total {}",
            full.total_kbps
        );
    }
}

fn stride_arithmetic() {
    let cases: [(&[u32], (u32, u32)); 3] = [
        (&[4, 4, 5, 8, 2], (25, 2)),
        (&[4, 5, 6, 8, 2], (25, 3)),
        (&[4, 5, 8, 8, 2], (25, 4)),
    ];
    for (strides, (n, d)) in cases {
        let rate = stride_frame_rate(16000, strides).unwrap();
        assert_eq!(rate, FrameRate::new(n, d).unwrap(), "{strides:?}");
        assert_eq!(exact_rate(rate), Exact::new(n as u128, d as u128));
    }
}

fn fsq_bijection() {
    let size = 8u64.pow(5);
    assert_eq!(size, 32768);
    for index in 0..size {
        let levels = fsq_index_decode(index, 5, 8).unwrap();
        assert!(levels.iter().all(|&l| l < 8));
        assert_eq!(fsq_index_encode(&levels, 8), index);
    }
    assert!(fsq_index_decode(size, 5, 8).is_err());
}

fn merge_exactness() {
    for seed in 0..1000 {
        let fx = synth_piecewise_constant(12, (1, 8), 16, seed);
        let plan = MergePlan::from_lengths(fx.segment_lengths.clone(), 8, None).unwrap();
        let merged = apply_merge(&fx.sequence, &plan).unwrap();
        let back = unmerge(&merged);
        let bits = |s: &[f32]| s.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.as_slice()), bits(fx.sequence.as_slice()), "seed {seed}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let t = rng.random_range(1..300usize);
        let sims: Vec<f64> = (0..t - 1).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let tau = rng.random_range(-1.0..=1.0);
        let plan = plan_merge(&sims, tau, 8).unwrap();
        assert_eq!(plan.lengths().iter().sum::<usize>(), t);
        assert!(plan.lengths().iter().all(|&l| (1..=8).contains(&l)));
    }
}

fn tau_control() {
    let grid: Vec<f64> = (0..30).map(|i| 0.42 + 0.02 * i as f64).collect();
    for seed in 0..8 {
        let walk = synth_random_walk(600, 16, 0.3, seed);
        let mut prev = 0.0;
        for &tau in &grid {
            let rate = frame_rate_at_tau(&walk, tau, 8).unwrap();
            assert!(rate >= prev, "seed {seed}, tau {tau}: {rate} < {prev}");
            prev = rate;
        }
        assert_eq!(frame_rate_at_tau(&walk, 1.0, 8).unwrap(), 12.5);
    }
    for seed in 0..4 {
        let walk = synth_random_walk(2000, 16, 0.3, 100 + seed);
        let found = tau_for_target_rate(&walk, 6.25, 0.3, 8).unwrap();
        assert!((found.achieved_rate_hz - 6.25).abs() <= 0.3, "{found:?}");
    }
}

fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
}

fn rvq_properties() {
    let d = 8;
    let cb = rvq_fit(&gaussian_rows(4000, d, 1), d, 6, 64, 10, 0).unwrap();
    let test = gaussian_rows(500, d, 2);
    let mut prev = f64::INFINITY;
    for n in 1..=6 {
        let mut total = 0.0;
        for x in test.chunks_exact(d) {
            let code = rvq_encode(&cb, x, n).unwrap();
            for ((a, r), v) in code.approx.iter().zip(&code.residual).zip(x) {
                assert!((a + r - v).abs() <= 1e-5 * (1.0 + v.abs()));
            }
            total += code.residual.iter().map(|&r| (r as f64).powi(2)).sum::<f64>();
        }
        let mse = total / 500.0;
        assert!(mse <= prev, "n_layers {n}: {mse} > {prev}");
        prev = mse;
    }

    let (_, reports) = rvq_fit_with_report(&gaussian_rows(2000, 4, 3), 4, 3, 32, 30, 5).unwrap();
    for r in &reports {
        assert!(
            r.objective.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)),
            "{:?}",
            r.objective
        );
    }

    let toy = RvqCodebooks::new(vec![vec![0.0, 10.0], vec![-1.0, 1.0]], 2, 1).unwrap();
    let x = 8.6f32;
    let mut best = (u32::MAX, u32::MAX, f64::INFINITY);
    let first = if x.abs() <= (x - 10.0).abs() { 0 } else { 1 };
    let r1 = x - toy.codeword(0, first)[0];
    for j in 0..2u32 {
        let err = (r1 - toy.codeword(1, j as usize)[0]).abs() as f64;
        if err < best.2 {
            best = (first as u32, j, err);
        }
    }
    let code = rvq_encode(&toy, &[x], 2).unwrap();
    assert_eq!(code.indices, vec![best.0, best.1]);
    assert_eq!(code.indices, vec![1, 0]);
    assert_eq!(code.approx, vec![9.0]);
    assert!((code.residual[0] + 0.4).abs() < 1e-6);
}

fn random_stream(rng: &mut ChaCha8Rng) -> TokenStream {
    let layout = TokenLayout {
        fsq_dims: 5,
        fsq_levels: 8,
        rvq_k: 4096,
        l_max: 8,
    };
    let t_hat = rng.random_range(0..200usize);
    let n_q = rng.random_range(1..=8usize);
    let lengths: Vec<usize> = (0..t_hat).map(|_| rng.random_range(1..=8)).collect();
    let sem = (0..t_hat).map(|_| rng.random_range(0..32768)).collect();
    let ac = (1..n_q)
        .map(|_| (0..t_hat).map(|_| rng.random_range(0..4096)).collect())
        .collect();
    let total = lengths.iter().sum::<usize>() as u64;
    TokenStream::new(sem, lengths, ac, n_q, FrameRate::new(25, 2).unwrap(), total, layout).unwrap()
}

fn bitstream_integrity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..5000 {
        let ts = random_stream(&mut rng);
        let fp: u64 = rng.random();
        let bytes = pack(&ts, fp).unwrap();
        let bits = ts.len() as u64 * (3 + 15 + (ts.n_q() as u64 - 1) * 12);
        assert_eq!(ts.payload_bits(), bits);
        assert_eq!((bytes.len() - FLXC_HEADER_LEN) as u64, bits.div_ceil(8), "case {case}");
        let pad = (8 - bits % 8) % 8;
        if pad > 0 {
            assert_eq!(bytes.last().unwrap() & ((1u8 << pad) - 1), 0);
        }
        let back = dynrate::unpack(&bytes).unwrap();
        assert_eq!(back.stream, ts, "case {case}");
        assert_eq!(back.fingerprint, fp);

        let mut bad = bytes.clone();
        bad[rng.random_range(0..4)] ^= 0x20;
        assert!(matches!(dynrate::unpack(&bad), Err(Error::Format(_))));
        if bytes.len() > FLXC_HEADER_LEN {
            let cut = rng.random_range(0..bytes.len());
            assert!(dynrate::unpack(&bytes[..cut]).is_err());
        }
    }
}

fn planted_density_correlation() {
    let densities: Vec<f64> = (0..40).map(|i| 0.05 + 0.85 * i as f64 / 39.0).collect();
    let rates: Vec<f64> = densities
        .iter()
        .enumerate()
        .map(|(i, &p)| frame_rate_at_tau(&synth_event_density(250, 16, p, 1000 + i as u64), 0.9, 8).unwrap())
        .collect();
    let r = pearson_r(&densities, &rates).unwrap();
    println!("    planted density vs frame rate: r = {r:.4}");
    assert!(r > 0.9, "r = {r}");
}

#[test]
fn acceptance() {
    let criteria = [
        Criterion {
            name: "bitrate reproduction",
            budget: Some(Duration::from_secs(1)),
            run: bitrate_reproduction,
        },
        Criterion {
            name: "stride arithmetic",
            budget: Some(Duration::from_secs(1)),
            run: stride_arithmetic,
        },
        Criterion {
            name: "fsq bijection",
            budget: Some(Duration::from_secs(1)),
            run: fsq_bijection,
        },
        Criterion {
            name: "merge/unmerge exactness",
            budget: None,
            run: merge_exactness,
        },
        Criterion {
            name: "tau monotonicity and control",
            budget: None,
            run: tau_control,
        },
        Criterion {
            name: "rvq properties",
            budget: None,
            run: rvq_properties,
        },
        Criterion {
            name: "bitstream integrity",
            budget: None,
            run: bitstream_integrity,
        },
        Criterion {
            name: "planted density correlation",
            budget: None,
            run: planted_density_correlation,
        },
    ];
    let mut failed = Vec::new();
    println!();
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let over = c.budget.is_some_and(|b| elapsed > b);
        let ok = outcome.is_ok() && !over;
        println!(
            "[{}] {} ({:.3}s)",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64()
        );
        if over {
            println!("    over the {:?} budget", c.budget.unwrap());
        }
        if !ok {
            failed.push(c.name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
