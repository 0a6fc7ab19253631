use std::f64::consts::PI;
use std::path::PathBuf;

use fbm_coding::gauss_rd::exact_bm_spectrum;
use fbm_coding::lab::*;
use fbm_coding::stats::std_error;
use fbm_coding::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

fn small(scheme: Scheme, hurst: f64, seed: u64) -> SweepConfig {
    let mut config = SweepConfig::new(SchemeConfig::default_for(scheme), hurst, seed);
    config.mc = 200;
    config.n_per_unit = 32;
    config.rates = vec![4.0, 8.0, 16.0];
    config.moments = vec![Moment::new(1.0).unwrap(), Moment::new(2.0).unwrap(), Moment::INFINITE];
    if let SchemeConfig::Concat { base_pool, base_training, .. } = &mut config.scheme {
        *base_pool = 300;
        *base_training = 3000;
    }
    config
}

#[test]
fn parallel_and_sequential_sweeps_agree_bytewise() {
    for (scheme, hurst) in [
        (Scheme::RandomCode, 0.5),
        (Scheme::Concat, 0.3),
        (Scheme::IncrementLp, 0.7),
        (Scheme::WaterfillRef, 0.5),
    ] {
        let mut config = small(scheme, hurst, 500);
        if scheme == Scheme::WaterfillRef {
            config.moments = vec![Moment::new(2.0).unwrap()];
        }
        let a = rd_sweep(&config, Execution::Parallel).unwrap();
        let b = rd_sweep(&config, Execution::Sequential).unwrap();
        for format in [ReportFormat::Csv, ReportFormat::Json] {
            assert_eq!(
                report_to_string(&a.records, format).unwrap(),
                report_to_string(&b.records, format).unwrap(),
                "{scheme:?}"
            );
        }
        assert_eq!(a, b);
    }
}

#[test]
fn random_code_with_fresh_pools() {
    let mut config = small(Scheme::RandomCode, 0.5, 501);
    config.scheme = SchemeConfig::RandomCode { pool_size: 2000, radius_scale: 2.0, fresh_pools: true };
    let out = rd_sweep(&config, Execution::Parallel).unwrap();
    assert_eq!(out, rd_sweep(&config, Execution::Sequential).unwrap());
    for d in &out.diagnostics {
        assert_eq!(d.hits + d.misses, 200);
    }
    assert!(!out.records.is_empty());
}

#[test]
fn distortion_falls_with_rate_and_rises_with_the_moment() {
    for (scheme, hurst) in [(Scheme::RandomCode, 0.5), (Scheme::Concat, 0.5), (Scheme::IncrementLp, 0.5)] {
        let mut config = small(scheme, hurst, 510);
        if scheme != Scheme::RandomCode {
            config.rates = vec![8.0, 16.0, 32.0, 64.0];
        }
        let out = rd_sweep(&config, Execution::Parallel).unwrap();
        for d in &out.diagnostics {
            assert_eq!(d.hits + d.misses, config.mc);
        }
        // per rate the records come in moment order 1, 2, ∞
        for chunk in out.records.chunks(3) {
            assert!(chunk[0].distortion <= chunk[1].distortion && chunk[1].distortion <= chunk[2].distortion);
            assert!(chunk.iter().all(|r| r.rate_nats == chunk[0].rate_nats));
        }
        let coded: Vec<&RateDiagnostics> = out.diagnostics.iter().filter(|d| d.hits > 0).collect();
        let q2: Vec<f64> = out.records.iter().filter(|r| r.q.value() == 2.0).map(|r| r.distortion).collect();
        assert_eq!(coded.len(), q2.len());
        for i in 1..q2.len() {
            let se = |d: &RateDiagnostics, dist: f64| {
                let sq: Vec<f64> = d.distances.iter().map(|x| x * x).collect();
                std_error(&sq) / (2.0 * dist)
            };
            let tolerance = 2.0 * (se(coded[i - 1], q2[i - 1]).powi(2) + se(coded[i], q2[i]).powi(2)).sqrt();
            assert!(q2[i] <= q2[i - 1] + tolerance, "{scheme:?}: {} -> {}", q2[i - 1], q2[i]);
        }
        assert_eq!(out.gibbs_violations(), 0);
        assert_eq!(out.bound_violations(), 0);
        assert!(out.converse_violations().is_empty());
    }
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn fixed_seed_reports_match_golden_files() {
    let mut increment = small(Scheme::IncrementLp, 0.5, 520);
    increment.moments = vec![Moment::new(2.0).unwrap()];
    let mut waterfill = SweepConfig::new(SchemeConfig::default_for(Scheme::WaterfillRef), 0.3, 520);
    waterfill.scheme = SchemeConfig::WaterfillRef { bm_terms: 1000, discretization: 256 };
    waterfill.rates = vec![10.0, 100.0];
    let cases = [
        ("random_code.csv", small(Scheme::RandomCode, 0.5, 520), ReportFormat::Csv),
        ("increment_lp.json", increment, ReportFormat::Json),
        ("waterfill_ref.csv", waterfill, ReportFormat::Csv),
    ];
    for (name, config, format) in cases {
        let text = report_to_string(&rd_sweep(&config, Execution::Parallel).unwrap().records, format).unwrap();
        let path = golden(name);
        if std::env::var_os("FBMCODE_BLESS").is_some() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let expected = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, expected, "{name} differs; rerun with FBMCODE_BLESS=1 to refresh");
    }
}

#[test]
fn waterfill_reference_reaches_the_brownian_constant() {
    let mut config = SweepConfig::new(SchemeConfig::default_for(Scheme::WaterfillRef), 0.5, 0);
    config.rates = vec![1e2, 1e3, 1e4];
    let out = rd_sweep(&config, Execution::Parallel).unwrap();
    let spec = exact_bm_spectrum(1_000_000).unwrap();
    for r in &out.records {
        assert_eq!(r.distortion, gauss_rd::waterfill(&spec, r.rate_nats).unwrap());
    }
    let kappa = kappa_estimate(&out.records, 0.5);
    let plateau = kappa.plateau.unwrap();
    let target = std::f64::consts::SQRT_2 / PI;
    assert!((plateau / target - 1.0).abs() < 0.02, "{plateau}");
    assert!(converse_check(&out.records, &spec).unwrap().is_empty());
}

#[test]
fn sup_norm_curve_stays_above_the_lower_constant() {
    let mut config = SweepConfig::new(SchemeConfig::default_for(Scheme::Concat), 0.5, 530);
    config.rates = vec![50.0, 80.0, 128.0];
    config.mc = 200;
    let out = rd_sweep(&config, Execution::Parallel).unwrap();
    assert_eq!(out.records.len(), 3);
    let floor = PI / 8f64.sqrt();
    for (rate, v) in kappa_estimate(&out.records, 0.5).values {
        assert!(rate >= 40.0);
        assert!(v >= floor, "rate {rate}: {v} < {floor}");
    }
    assert_eq!(out.bound_violations(), 0);
}

#[test]
fn random_code_distances_concentrate() {
    let mut config = SweepConfig::new(SchemeConfig::default_for(Scheme::RandomCode), 0.5, 540);
    config.rates = vec![8.0];
    config.n_per_unit = 64;
    config.mc = 300;
    let out = rd_sweep(&config, Execution::Parallel).unwrap();
    let distances = &out.diagnostics[0].distances;
    assert!(distances.len() >= 100);
    let report = moment_concentration_diag(distances, 1.0, 2.0).unwrap();
    assert!(report.ratio <= 1.1, "{}", report.ratio);
    assert!(report.spread < 0.25);
}

#[test]
fn log_moment_inequality_on_a_geometric_law() {
    let geo = Geometric::new(0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(550);
    let samples: Vec<f64> = (0..100_000).map(|_| (geo.sample(&mut rng) + 1) as f64).collect();
    let check = log_moment_check(&samples).unwrap();
    assert!(check.holds);
    assert!(check.rhs - check.lhs > 1.0);
}

#[test]
fn reports_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = rd_sweep(&small(Scheme::RandomCode, 0.5, 560), Execution::Parallel).unwrap();
    for (name, format) in [("r.csv", ReportFormat::Csv), ("r.json", ReportFormat::Json)] {
        let path = dir.path().join(name);
        write_report(&out.records, &path, format).unwrap();
        assert_eq!(read_report(&path, format).unwrap(), out.records);
    }
    let path = dir.path().join("k.csv");
    write_kappa(&[kappa_estimate(&out.records, 0.5)], &path, ReportFormat::Csv).unwrap();
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("hurst,norm,p,rate,normalized,plateau\n"));
}
