mod common;

use common::{is_monotone, random_matrix, scalar_receivers, stream_mse, weighted_mse};
use hbf_core::hybrid::{effective_precoder, transmit_power, HybridBeamformer, PartitionSpec, ProcessingMode};
use hbf_core::metrics::{mu_mmse_scalars, mu_user_error, mu_user_rates, weights_from_errors, StreamWeights};
use hbf_core::mu::*;
use hbf_core::{c64, CMat, SolverConfig};
use proptest::prelude::*;

const N0: f64 = 0.4;

fn setup(seed: u64, nt: usize, nu: usize, na: usize, mode: ProcessingMode) -> (MuChannelSet, HybridBeamformer, Vec<c64>, Vec<f64>) {
    let ch = MuChannelSet::new(random_matrix(seed, nu, nt), N0).unwrap();
    let part = PartitionSpec::new(nt, na, nu).unwrap();
    let hb = HybridBeamformer::initial(part, mode, 1.0, seed).unwrap();
    let v = effective_precoder(&hb);
    let ms = mu_mmse_scalars(&ch.matrix, &v, N0).unwrap();
    let w = weights_from_errors(&stream_mse(&ch.matrix, &v, &scalar_receivers(&ms), N0), 1e-12).weights;
    (ch, hb, ms, w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn updates_descend_and_respect_power(seed in 0u64..10_000) {
        let cfg = SolverConfig::new(1.0, N0);
        let (ch, hb, ms, w) = setup(seed, 8, 3, 4, ProcessingMode::FullArray);
        let m = scalar_receivers(&ms);
        let sw = StreamWeights { weights: w.clone() };
        let before = weighted_mse(&ch.matrix, &effective_precoder(&hb), &m, &w, N0);
        let (d, _) = mu_fa_update_digital(&ch, &hb.partition, &hb.analog.subarray_vectors, &ms, &sw, &cfg).unwrap();
        let mut next = hb.clone();
        next.digital.matrix = d;
        let mid = weighted_mse(&ch.matrix, &effective_precoder(&next), &m, &w, N0);
        prop_assert!(mid <= before + 1e-9 * before);
        prop_assert!(transmit_power(&next) <= 1.0 + 1e-9);
        let up = mu_fa_update_analog(&ch, &next, &ms, &sw, &cfg).unwrap();
        next.analog.subarray_vectors = up.vectors;
        prop_assert!(weighted_mse(&ch.matrix, &effective_precoder(&next), &m, &w, N0) <= mid + 1e-9 * mid);
        prop_assert!(transmit_power(&next) <= 1.0 + 1e-9);

        let (ch, hb, ms, w) = setup(seed, 8, 4, 4, ProcessingMode::Subarray);
        let m = scalar_receivers(&ms);
        let before = weighted_mse(&ch.matrix, &effective_precoder(&hb), &m, &w, N0);
        let up = mu_sa_update_analog(&ch, &hb.partition, &ms, &StreamWeights { weights: w.clone() }, &cfg).unwrap();
        let mut next = hb.clone();
        next.analog.subarray_vectors = up.vectors;
        prop_assert!(weighted_mse(&ch.matrix, &effective_precoder(&next), &m, &w, N0) <= before + 1e-9 * before);
        prop_assert!(transmit_power(&next) <= 1.0 + 1e-9);
    }

    #[test]
    fn mmse_scalar_is_optimal(seed in 0u64..10_000) {
        let (ch, hb, _, _) = setup(seed, 8, 3, 4, ProcessingMode::FullArray);
        let v = effective_precoder(&hb);
        for k in 0..3 {
            let mk = mu_mmse_receiver(&ch, &hb, k).unwrap();
            let base = mu_user_error(&ch.matrix, &v, mk, N0, k).unwrap();
            prop_assert!(base > 0.0 && base <= 1.0);
            for probe in 0..20 {
                let delta = random_matrix(seed * 97 + probe, 1, 1)[(0, 0)] * 1e-3;
                prop_assert!(mu_user_error(&ch.matrix, &v, mk + delta, N0, k).unwrap() >= base - 1e-12);
            }
        }
    }

    #[test]
    fn common_phase_leaves_rates_unchanged(seed in 0u64..10_000, phase in 0.0f64..std::f64::consts::TAU) {
        let ch = MuChannelSet::new(random_matrix(seed, 2, 8), N0).unwrap();
        let rotated = MuChannelSet::new(&ch.matrix * c64::from_polar(1.0, phase), N0).unwrap();
        let part = PartitionSpec::subarray(8, 2).unwrap();
        let cfg = SolverConfig::new(1.0, N0).with_seed(seed);
        let pairs = [
            (solve_mu_sa_wmmse(&ch, &part, &cfg).unwrap().sum_rate, solve_mu_sa_wmmse(&rotated, &part, &cfg).unwrap().sum_rate),
            (mu_subarray_zf(&ch, &part, 1.0).unwrap().sum_rate, mu_subarray_zf(&rotated, &part, 1.0).unwrap().sum_rate),
            (digital_mu_zf(&ch, 1.0).unwrap().sum_rate, digital_mu_zf(&rotated, 1.0).unwrap().sum_rate),
        ];
        for (a, b) in pairs {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }
}

#[test]
fn wmmse_traces_are_monotone() {
    for seed in 0..5 {
        let ch = MuChannelSet::new(random_matrix(seed, 4, 16), N0).unwrap();
        let part = PartitionSpec::subarray(16, 4).unwrap();
        let cfg = SolverConfig::new(1.0, N0).with_seed(seed);
        for out in [
            solve_mu_fa_wmmse(&ch, &part, &cfg).unwrap(),
            solve_mu_sa_wmmse(&ch, &part, &cfg).unwrap(),
            digital_mu_wmmse(&ch, &cfg).unwrap(),
        ] {
            assert!(is_monotone(&out.trace, 1e-6), "{:?}", out.trace);
            assert!(out.precoder.power() <= 1.0 + 1e-9);
        }
    }
}

#[test]
fn solver_uses_channel_noise_power() {
    let ch = MuChannelSet::new(random_matrix(9, 2, 8), N0).unwrap();
    let part = PartitionSpec::subarray(8, 2).unwrap();
    let a = solve_mu_sa_wmmse(&ch, &part, &SolverConfig::new(1.0, N0)).unwrap();
    let b = solve_mu_sa_wmmse(&ch, &part, &SolverConfig::new(1.0, 123.0)).unwrap();
    assert_eq!(a.sum_rate, b.sum_rate);
    let direct = mu_user_rates(&ch.matrix, &a.precoder.matrix(), N0).unwrap().sum();
    assert!((direct - a.sum_rate).abs() < 1e-12);
}

#[test]
fn one_antenna_per_chain_matches_digital_wmmse() {
    for seed in 0..3 {
        let ch = MuChannelSet::new(random_matrix(50 + seed, 3, 8), N0).unwrap();
        let mut cfg = SolverConfig::new(1.0, N0).with_seed(seed);
        cfg.rel_tol = 1e-10;
        cfg.max_iters = 5000;
        let hybrid = solve_mu_fa_wmmse(&ch, &PartitionSpec::new(8, 8, 3).unwrap(), &cfg).unwrap();
        let digital = digital_mu_wmmse(&ch, &cfg).unwrap();
        assert!(
            (hybrid.sum_rate - digital.sum_rate).abs() <= 1e-3 * digital.sum_rate,
            "{} vs {}",
            hybrid.sum_rate,
            digital.sum_rate
        );
    }
}

#[test]
fn single_user_subarray_wmmse_reaches_matched_filter_bound() {
    for seed in 0..5 {
        let h = random_matrix(70 + seed, 1, 8);
        let ch = MuChannelSet::new(h.clone(), N0).unwrap();
        let mut cfg = SolverConfig::new(1.0, N0).with_seed(seed);
        cfg.rel_tol = 1e-12;
        let out = solve_mu_sa_wmmse(&ch, &PartitionSpec::subarray(8, 1).unwrap(), &cfg).unwrap();
        let bound = (1.0 + h.norm_squared() / N0).log2();
        assert!((out.sum_rate - bound).abs() <= 1e-3 * bound, "{} vs {bound}", out.sum_rate);
    }
}

#[test]
fn zero_forcing_nulls_cross_users() {
    let part = PartitionSpec::subarray(32, 4).unwrap();
    for seed in 0..20 {
        let ch = MuChannelSet::new(random_matrix(500 + seed, 4, 32), N0).unwrap();
        for v in [
            mu_subarray_zf_directions(&ch, &part).unwrap(),
            digital_mu_zf_directions(&ch).unwrap(),
        ] {
            let g = &ch.matrix * &v;
            for j in 0..4 {
                for k in 0..4 {
                    if j != k {
                        assert!(g[(j, k)].norm() < 1e-9 * g[(k, k)].norm());
                    }
                }
            }
        }
    }
}

#[test]
fn digital_wmmse_beats_digital_zf_on_average() {
    let (mut wmmse, mut zf) = (0.0, 0.0);
    for seed in 0..10 {
        let ch = MuChannelSet::new(random_matrix(600 + seed, 4, 16), N0).unwrap();
        wmmse += digital_mu_wmmse(&ch, &SolverConfig::new(1.0, N0).with_seed(seed)).unwrap().sum_rate;
        zf += digital_mu_zf(&ch, 1.0).unwrap().sum_rate;
    }
    assert!(wmmse >= zf);
}

#[test]
fn zf_precoders_use_full_power() {
    let ch = MuChannelSet::new(random_matrix(3, 4, 16), N0).unwrap();
    let sa = mu_subarray_zf(&ch, &PartitionSpec::subarray(16, 4).unwrap(), 2.0).unwrap();
    let dg = digital_mu_zf(&ch, 2.0).unwrap();
    assert!((sa.precoder.power() - 2.0).abs() < 1e-9);
    assert!((dg.precoder.power() - 2.0).abs() < 1e-9);
    let _: CMat = sa.precoder.matrix();
}
