mod common;

use common::{is_monotone, random_matrix, stream_mse, weighted_mse};
use hbf_core::hybrid::{effective_precoder, transmit_power, HybridBeamformer, PartitionSpec, ProcessingMode};
use hbf_core::metrics::{mmse_combiner, su_stream_rates, weights_from_errors, ReceiveCombiner};
use hbf_core::su::*;
use hbf_core::{c64, CMat, SolverConfig};
use proptest::prelude::*;

fn setup(seed: u64, nt: usize, nr: usize, na: usize, ns: usize, mode: ProcessingMode) -> (CMat, HybridBeamformer, CMat, Vec<f64>) {
    let h = random_matrix(seed, nr, nt);
    let part = PartitionSpec::new(nt, na, ns).unwrap();
    let hb = HybridBeamformer::initial(part, mode, 1.0, seed).unwrap();
    let v = effective_precoder(&hb);
    let m = mmse_combiner(&h, &v, 0.5).unwrap();
    let w = weights_from_errors(&stream_mse(&h, &v, &m, 0.5), 1e-12).weights;
    (h, hb, m, w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn digital_update_descends_and_respects_power(seed in 0u64..10_000, power in 0.1f64..10.0) {
        let (h, hb, m, w) = setup(seed, 8, 3, 4, 2, ProcessingMode::FullArray);
        let cfg = SolverConfig::new(power, 0.5);
        let mut scaled = hb.clone();
        for a in scaled.analog.subarray_vectors.iter_mut() {
            a.scale_mut(power.sqrt());
        }
        let before = weighted_mse(&h, &effective_precoder(&scaled), &m, &w, 0.5);
        let (d, alpha) = fa_update_digital(&h, &scaled.partition, &scaled.analog.subarray_vectors, &m, &hbf_core::metrics::StreamWeights { weights: w.clone() }, &cfg).unwrap();
        let mut next = scaled.clone();
        next.digital.matrix = d;
        let after = weighted_mse(&h, &effective_precoder(&next), &m, &w, 0.5);
        let p = transmit_power(&next);
        prop_assert!(after <= before + 1e-9 * before.abs());
        prop_assert!(p <= power * (1.0 + 1e-9));
        if alpha > 0.0 {
            prop_assert!((p - power).abs() <= 1e-7 * power);
        }
    }

    #[test]
    fn analog_updates_descend_and_respect_power(seed in 0u64..10_000) {
        let cfg = SolverConfig::new(1.0, 0.5);
        let (h, hb, m, w) = setup(seed, 8, 3, 4, 2, ProcessingMode::FullArray);
        let sw = hbf_core::metrics::StreamWeights { weights: w.clone() };
        let before = weighted_mse(&h, &effective_precoder(&hb), &m, &w, 0.5);
        let up = fa_update_analog(&h, &hb, &m, &sw, &cfg).unwrap();
        let mut next = hb.clone();
        next.analog.subarray_vectors = up.vectors;
        prop_assert!(weighted_mse(&h, &effective_precoder(&next), &m, &w, 0.5) <= before + 1e-9 * before);
        prop_assert!(transmit_power(&next) <= 1.0 + 1e-9);

        let (h, hb, m, w) = setup(seed, 8, 4, 4, 4, ProcessingMode::Subarray);
        let sw = hbf_core::metrics::StreamWeights { weights: w.clone() };
        let before = weighted_mse(&h, &effective_precoder(&hb), &m, &w, 0.5);
        let up = sa_update_analog(&h, &hb.partition, &m, &sw, &cfg).unwrap();
        let mut next = hb.clone();
        next.analog.subarray_vectors = up.vectors;
        prop_assert!(weighted_mse(&h, &effective_precoder(&next), &m, &w, 0.5) <= before + 1e-9 * before);
        prop_assert!(transmit_power(&next) <= 1.0 + 1e-9);
    }

    #[test]
    fn mmse_receiver_minimizes_each_stream_error(seed in 0u64..10_000) {
        let (h, hb, _, _) = setup(seed, 8, 3, 4, 2, ProcessingMode::FullArray);
        let v = effective_precoder(&hb);
        let m = mmse_receiver(&h, &hb, 0.5).unwrap();
        let base = stream_mse(&h, &v, &m, 0.5);
        for probe in 0..5 {
            let delta = random_matrix(seed * 31 + probe, 3, 2) * c64::new(1e-3, 0.0);
            let perturbed = stream_mse(&h, &v, &(&m + delta), 0.5);
            for (p, b) in perturbed.iter().zip(&base) {
                prop_assert!(*p >= *b - 1e-12);
            }
        }
    }
}

#[test]
fn wmmse_traces_are_monotone_and_feasible() {
    for seed in 0..5 {
        let h = random_matrix(seed, 4, 16);
        let cfg = SolverConfig::new(1.0, 0.3).with_seed(seed);
        let fa = solve_fa_wmmse(&h, &PartitionSpec::new(16, 4, 3).unwrap(), &cfg).unwrap();
        let sa = solve_sa_wmmse(&h, &PartitionSpec::subarray(16, 4).unwrap(), &cfg).unwrap();
        for out in [&fa, &sa] {
            assert!(is_monotone(&out.trace, 1e-6), "{:?}", out.trace);
            assert!(out.precoder.power() <= 1.0 + 1e-9);
            assert!((out.sum_rate - out.trace.last().unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn fa_wmmse_rejects_too_many_streams() {
    let h = random_matrix(1, 2, 8);
    let part = PartitionSpec::new(8, 4, 3).unwrap();
    assert!(solve_fa_wmmse(&h, &part, &SolverConfig::new(1.0, 1.0)).is_err());
}

#[test]
fn single_chain_hybrid_reaches_dominant_eigenmode() {
    for seed in 0..5 {
        let h = random_matrix(100 + seed, 4, 16);
        let n0 = 0.5;
        let mut cfg = SolverConfig::new(1.0, n0).with_seed(seed);
        cfg.rel_tol = 1e-10;
        cfg.max_iters = 5000;
        let out = solve_fa_wmmse(&h, &PartitionSpec::new(16, 1, 1).unwrap(), &cfg).unwrap();
        let bound = analog_single_stream(&h, 1.0, n0).unwrap().sum_rate;
        assert!((out.sum_rate - bound).abs() <= 1e-3 * bound, "{} vs {bound}", out.sum_rate);
    }
}

#[test]
fn one_antenna_per_chain_matches_digital_wmmse() {
    for seed in 0..3 {
        let h = random_matrix(200 + seed, 3, 8);
        let mut cfg = SolverConfig::new(1.0, 0.4).with_seed(seed);
        cfg.rel_tol = 1e-10;
        cfg.max_iters = 5000;
        let hybrid = solve_fa_wmmse(&h, &PartitionSpec::new(8, 8, 3).unwrap(), &cfg).unwrap();
        let digital = digital_wmmse(&h, 3, &cfg).unwrap();
        assert!(
            (hybrid.sum_rate - digital.sum_rate).abs() <= 1e-3 * digital.sum_rate,
            "{} vs {}",
            hybrid.sum_rate,
            digital.sum_rate
        );
    }
}

#[test]
fn txrx_zf_nulls_interference() {
    let part = PartitionSpec::subarray(32, 4).unwrap();
    for seed in 0..20 {
        let h = random_matrix(300 + seed, 4, 32);
        let out = txrx_zf(&h, &part, &SolverConfig::new(1.0, 0.3)).unwrap();
        let m = match &out.combiner {
            hbf_core::metrics::ReceiveCombiner::Joint(m) => m.clone(),
            _ => unreachable!(),
        };
        let g = m.adjoint() * &h * out.precoder.matrix();
        for i in 0..4 {
            for l in 0..4 {
                if l != i && g[(i, i)].norm() > 0.0 {
                    assert!(g[(i, l)].norm() < 1e-9 * g[(i, i)].norm());
                }
            }
        }
        assert!((out.precoder.power() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn txrx_zf_handles_a_nearly_rank_deficient_channel() {
    // fourth singular value ~3e-6 of the first
    let seed = hbf_core::channel::derive_seed(2024, 36);
    let rule = hbf_core::channel::PathRule::Sampled { num_paths: 5 };
    let h = hbf_core::channel::generate_geometric_channel(seed, 64, 4, &rule).unwrap().matrix;
    let part = PartitionSpec::subarray(64, 4).unwrap();
    let out = txrx_zf(&h, &part, &SolverConfig::new(1.0, 0.3)).unwrap();
    let ReceiveCombiner::Joint(m) = &out.combiner else { unreachable!() };
    let g = m.adjoint() * &h * out.precoder.matrix();
    for i in 0..4 {
        for l in 0..4 {
            if l != i && g[(i, i)].norm() > 0.0 {
                assert!(g[(i, l)].norm() < 1e-9 * g[(i, i)].norm());
            }
        }
    }
    assert!(out.sum_rate.is_finite() && out.sum_rate > 0.0);
}

#[test]
fn hybrid_rates_never_exceed_capacity() {
    for seed in 0..5 {
        let h = random_matrix(400 + seed, 4, 16);
        let cfg = SolverConfig::new(1.0, 0.3).with_seed(seed);
        let cap = digital_svd_baseline(&h, 1.0, 0.3, 4).unwrap().sum_rate;
        let part = PartitionSpec::subarray(16, 4).unwrap();
        for rate in [
            solve_fa_wmmse(&h, &part, &cfg).unwrap().sum_rate,
            solve_sa_wmmse(&h, &part, &cfg).unwrap().sum_rate,
            txrx_zf(&h, &part, &cfg).unwrap().sum_rate,
        ] {
            assert!(rate <= cap + 1e-9);
        }
    }
}

#[test]
fn reported_rates_match_metric() {
    let h = random_matrix(7, 4, 16);
    let cfg = SolverConfig::new(1.0, 0.3);
    let out = solve_sa_wmmse(&h, &PartitionSpec::subarray(16, 4).unwrap(), &cfg).unwrap();
    let direct = su_stream_rates(&h, &out.precoder.matrix(), 0.3).unwrap();
    assert!((direct.sum() - out.sum_rate).abs() < 1e-12);
}
