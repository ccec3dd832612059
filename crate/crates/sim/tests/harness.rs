use hbf_core::channel::{export_channels, generate_geometric_channel, ChannelFormat, ChannelRealization, PathRule};
use hbf_core::{c64, CMat, SolverConfig};
use hbf_sim::records::{read_records, summarize, write_records, RecordFormat};
use hbf_sim::run::{init_seed, noise_power_for_snr, realization_seed, solve_one};
use hbf_sim::spec::SweepSpec;
use hbf_sim::{run_convergence, run_sweep, Algorithm, Scenario};

fn spec(text: &str) -> SweepSpec {
    SweepSpec::from_toml(text).unwrap()
}

#[test]
fn identity_channel_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("eye.json");
    let eye = ChannelRealization::new(CMat::identity(2, 2), 1.0, "identity").unwrap();
    export_channels(&[eye], &path, ChannelFormat::Json, false).unwrap();
    let s = spec(&format!(
        r#"
scenario = "su"
algorithms = ["digital-svd"]
nt = 2
nr = 2
ns = 2
na = 2
channel_source = "file:{}"
realizations = 1
"#,
        path.display()
    ));
    let out = run_sweep(&s).unwrap();
    assert_eq!(out.records.len(), 1);
    let want = 2.0 * 1.5f64.log2();
    assert!((out.records[0].sum_rate - want).abs() < 1e-12);
    assert!((out.records[0].sum_rate - 1.1699).abs() < 1e-4);
    assert_eq!(out.records[0].snr_db, 0.0);
}

const SMALL_SU: &str = r#"
scenario = "su"
algorithms = ["digital-svd", "fa-wmmse", "sa-wmmse", "txrx-zf"]
nt = 16
nr = 4
ns = 4
na = 4
snr_db = [-10, 0, 10]
realizations = 6
master_seed = 42
timing = false
"#;

#[test]
fn reruns_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(SMALL_SU);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_records(&run_sweep(&s).unwrap().records, &a, RecordFormat::Csv).unwrap();
    write_records(&run_sweep(&s).unwrap().records, &b, RecordFormat::Csv).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn record_count_and_order() {
    let s = spec(SMALL_SU);
    let out = run_sweep(&s).unwrap();
    assert_eq!(out.records.len(), 4 * 3 * 6);
    assert_eq!(out.failures, 0);
    let first = &out.records[..6];
    assert!(first.iter().all(|r| r.algorithm == Algorithm::DigitalSvd && r.snr_db == -10.0));
    assert!(first.iter().enumerate().all(|(i, r)| r.realization_index == i));
}

#[test]
fn digital_baseline_rate_grows_with_snr() {
    let s = spec(SMALL_SU);
    let summary = summarize(&run_sweep(&s).unwrap().records);
    let svd: Vec<f64> = summary
        .iter()
        .filter(|r| r.algorithm == Algorithm::DigitalSvd)
        .map(|r| r.mean_sum_rate)
        .collect();
    assert_eq!(svd.len(), 3);
    assert!(svd[0] < svd[1] && svd[1] < svd[2], "{svd:?}");
}

#[test]
fn records_match_direct_library_calls() {
    let s = spec(SMALL_SU);
    let out = run_sweep(&s).unwrap();
    for rec in out.records.iter().filter(|r| r.realization_index == 3) {
        let seed = realization_seed(42, 3);
        assert_eq!(rec.seed, seed);
        let h = generate_geometric_channel(seed, 16, 4, &PathRule::Sampled { num_paths: 5 }).unwrap().matrix;
        let cfg = SolverConfig::new(1.0, noise_power_for_snr(1.0, rec.snr_db)).with_seed(init_seed(seed));
        let direct = solve_one(Scenario::Su, rec.algorithm, &h, 4, 4, &cfg).unwrap();
        assert_eq!(direct.sum_rate.to_bits(), rec.sum_rate.to_bits());
        assert_eq!(direct.iterations, rec.iterations);
    }
}

#[test]
fn summary_equals_external_mean() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let s = spec(SMALL_SU);
    write_records(&run_sweep(&s).unwrap().records, &path, RecordFormat::Csv).unwrap();
    let back = read_records(&path).unwrap();
    for row in summarize(&back) {
        let rates: Vec<f64> = back
            .iter()
            .filter(|r| r.algorithm == row.algorithm && r.snr_db == row.snr_db)
            .map(|r| r.sum_rate)
            .collect();
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        assert!((mean - row.mean_sum_rate).abs() < 1e-12);
    }
}

#[test]
fn mu_sweep_over_antennas() {
    let s = spec(
        r#"
scenario = "mu"
algorithms = ["digital-wmmse", "fa-wmmse", "sa-wmmse", "digital-zf", "sa-zf"]
nt = [16, 32]
nu = 4
ns = 4
na = 4
snr_db = 5
realizations = 3
timing = false
"#,
    );
    let out = run_sweep(&s).unwrap();
    assert_eq!(out.records.len(), 5 * 2 * 3);
    assert_eq!(out.failures, 0);
    assert!(out.records.iter().all(|r| r.sum_rate.is_finite() && r.sum_rate > 0.0));
}

#[test]
fn infeasible_solves_are_recorded_and_the_run_continues() {
    // 4 users on 4-antenna subarrays is fine, but 4 users on 2-antenna subarrays is not
    let s = spec(
        r#"
scenario = "mu"
algorithms = ["sa-zf", "digital-zf"]
nt = 8
nu = 4
ns = 4
na = 4
snr_db = 0
realizations = 2
"#,
    );
    let out = run_sweep(&s).unwrap();
    assert_eq!(out.failures, 2);
    for r in &out.records {
        match r.algorithm {
            Algorithm::SaZf => assert!(r.sum_rate.is_nan() && !r.converged),
            _ => assert!(r.sum_rate.is_finite()),
        }
    }
}

#[test]
fn convergence_traces_are_monotone_and_bounded() {
    let s = spec(
        r#"
scenario = "su"
algorithms = ["fa-wmmse", "sa-wmmse", "digital-svd"]
nt = 16
nr = 4
ns = 4
na = 4
snr_db = 5
realizations = 4
[solver]
max_iters = 60
"#,
    );
    let run = run_convergence(&s).unwrap();
    for traces in &run.traces[..2] {
        for t in traces {
            assert!(t.len() <= 60);
            assert!(t.windows(2).all(|w| w[1] >= w[0] - 1e-6));
        }
    }
    let mean = run.mean_traces();
    assert_eq!(mean.len(), 3);
    assert!(mean[2].windows(2).all(|w| w[0] == w[1]));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("conv.csv");
    run.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("iteration,fa-wmmse,sa-wmmse,digital-svd\n1,"));
}

#[test]
fn convergence_rejects_sweeps() {
    let s = spec(SMALL_SU);
    assert!(run_convergence(&s).is_err());
}

#[test]
fn file_dimensions_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    let ch = ChannelRealization::new(CMat::from_element(2, 3, c64::new(1.0, 0.0)), 0.5, "x").unwrap();
    export_channels(&[ch], &path, ChannelFormat::Binary, false).unwrap();
    let s = spec(&format!(
        r#"
scenario = "su"
algorithms = ["digital-svd"]
nt = 4
nr = 2
ns = 1
na = 1
channel_source = "file:{}"
"#,
        path.display()
    ));
    let err = run_sweep(&s).unwrap_err();
    assert!(err.to_string().contains("2x3"), "{err}");
}
