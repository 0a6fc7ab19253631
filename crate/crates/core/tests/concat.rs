use fbm_coding::codebook::Codebook;
use fbm_coding::concat_coder::*;
use fbm_coding::random_coder::RandomPool;
use fbm_coding::stats::{mean, std_error};
use fbm_coding::grid_paths::sample_fbm;
use fbm_coding::*;
use rand::{Rng, SeedableRng};

fn nearest_base(hurst: f64, npu: usize, size: usize, seed: u64) -> BaseQuantizer {
    let pool = RandomPool::build(hurst, npu, size, RngSpec::new(seed), Execution::Parallel).unwrap();
    let entries = pool.paths().iter().map(|p| p.to_step()).collect();
    BaseQuantizer::new(Codebook::uniform(entries).unwrap(), EncodeRule::Nearest).unwrap()
}

/// The block recursion written out directly: nearest entry by brute force, offsets by sorting
/// all grid candidates by (error, offset).
fn oracle(w: &[f64], n: usize, p: usize, entries: &[Vec<f64>], m: usize, d: f64) -> Vec<f64> {
    let grid: Vec<f64> = (0..m).map(|k| -d + 2.0 * k as f64 * d / (m as f64 - 1.0)).collect();
    let mut out = vec![0.0; n * p + 1];
    for i in 0..n {
        let block: Vec<f64> = (0..=p).map(|k| w[i * p + k] - w[i * p]).collect();
        let mut best = (f64::INFINITY, 0);
        for (j, e) in entries.iter().enumerate() {
            let dist = block.iter().zip(e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if dist < best.0 {
                best = (dist, j);
            }
        }
        let start = if i == 0 {
            0.0
        } else {
            let current = out[i * p - 1];
            let mut cands: Vec<(f64, f64)> =
                grid.iter().map(|&xi| ((w[i * p] - (current + xi)).abs(), xi)).collect();
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            current + cands[0].1
        };
        for k in 0..p {
            out[i * p + k] = start + entries[best.1][k];
        }
    }
    out[n * p] = out[n * p - 1];
    out
}

#[test]
fn decode_of_encode_matches_direct_recursion() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100u64 {
        let hurst = rng.random_range(0.2..0.8);
        let n = rng.random_range(1..7);
        let m = rng.random_range(2..9);
        let d = rng.random_range(0.05..1.5);
        let base = nearest_base(hurst, 8, 64, case);
        let entries: Vec<Vec<f64>> = base.codebook().entries().iter().map(|e| e.values().to_vec()).collect();
        let w = sample_fbm(hurst, n, 8, &RngSpec::new(case).child(99)).unwrap();
        let params = ConcatParams::new(m, d).unwrap();
        let cw = encode_concat(&w, &base, &params).unwrap();
        assert_eq!(cw.offset_indices.len(), n - 1);
        assert!(cw.offset_indices.iter().all(|&k| k < m));
        let decoded = decode_concat(&cw, &base).unwrap();
        assert_eq!(decoded.values(), oracle(w.values(), n, 8, &entries, m, d).as_slice(), "case {case}");
        assert_eq!(decoded.kind(), PathKind::Step);
    }
}

#[test]
fn error_bound_holds_whenever_blocks_are_within_budget() {
    // a coarse grid and a large nearest-entry codebook keep a good share of paths within d = 0.5
    let d = 0.5;
    for hurst in [0.3, 0.5, 0.7] {
        let base = nearest_base(hurst, 4, 4000, 5);
        let sampler = FbmSampler::new(hurst, 8, 4).unwrap();
        let paths: Vec<SampledPath> = (0..1000u64).map(|i| sampler.sample(&RngSpec::new(6).child(i))).collect();
        for m in [2, 3, 8] {
            let params = ConcatParams::new(m, d).unwrap();
            let mut within = 0;
            for (i, w) in paths.iter().enumerate() {
                let trace = encode_concat_traced(w, &base, &params).unwrap();
                let err = Norm::Sup.distance(w, &trace.reconstruction).unwrap();
                if trace.budget_violations() == 0 {
                    within += 1;
                    assert!(err <= params.error_bound() * (1.0 + 1e-12), "H={hurst} M={m} trial {i}: {err}");
                }
            }
            assert!(within >= 200, "H={hurst} M={m}: only {within} trials within budget");
        }
    }
}

#[test]
fn rescaled_error_is_scaled_horizon_error() {
    let base = nearest_base(0.5, 4, 2000, 8);
    let params = ConcatParams::new(3, 0.3).unwrap();
    let sampler = FbmSampler::new(0.5, 1, 16).unwrap();
    let mut checked = 0;
    for i in 0..200u64 {
        let w = sampler.sample(&RngSpec::new(9).child(i));
        let code = rescale_scheme(&w, 4, &base, &params).unwrap();
        // n^H = 2 is a power of two, so scaling is exact
        assert_eq!(code.distortion, code.horizon_distortion / 2.0);
        if code.budget_violations() == 0 {
            checked += 1;
            assert!(code.distortion <= 1.5 * 0.3 / 2.0 + 1e-12);
        }
    }
    assert!(checked > 0);

    let sampler = FbmSampler::new(0.3, 1, 12).unwrap();
    let base = nearest_base(0.3, 4, 100, 10);
    for i in 0..50u64 {
        let w = sampler.sample(&RngSpec::new(11).child(i));
        let code = rescale_scheme(&w, 3, &base, &params).unwrap();
        let expected = code.horizon_distortion / 3f64.powf(0.3);
        assert!((code.distortion - expected).abs() <= 4.0 * f64::EPSILON * expected);
    }
}

#[test]
fn single_block_rescale_is_the_base_output() {
    let base = nearest_base(0.5, 16, 300, 12);
    let params = ConcatParams::new(2, 0.5).unwrap();
    let w = sample_fbm(0.5, 1, 16, &RngSpec::new(13)).unwrap();
    let code = rescale_scheme(&w, 1, &base, &params).unwrap();
    let idx = base.encode(&w).unwrap();
    assert_eq!(code.reconstruction.values(), base.codebook().entry(idx).values());
    assert!((code.code_length.nats - 300f64.ln()).abs() < 1e-12);
}

fn trained_base(hurst: f64) -> TrainedBase {
    BaseQuantizer::train_random_coding(
        &BaseTraining {
            hurst,
            n_per_unit: 16,
            pool_size: 2000,
            training_size: 20_000,
            radius: RadiusChoice::Quantile(1.0),
        },
        &RngSpec::new(31),
        Execution::Parallel,
    )
    .unwrap()
}

#[test]
fn long_horizon_rate_per_block_approaches_entropy_plus_log_m() {
    let trained = trained_base(0.5);
    let params = ConcatParams::new(3, trained.radius).unwrap();
    let target = trained.base.entropy() + 3f64.ln();
    let sampler = FbmSampler::new(0.5, 200, 16).unwrap();
    let per_block: Vec<f64> = (0..50u64)
        .map(|i| {
            let w = sampler.sample(&RngSpec::new(32).child(i));
            let cw = encode_concat(&w, &trained.base, &params).unwrap();
            concat_code_length(&cw, &trained.base).unwrap().nats / 200.0
        })
        .collect();
    let m = mean(&per_block);
    assert!((m / target - 1.0).abs() < 0.02, "{m} vs {target}");
}

#[test]
fn entropy_accounting_and_typical_set() {
    let trained = trained_base(0.5);
    let params = ConcatParams::new(3, trained.radius).unwrap();
    let h = trained.base.entropy();

    let sampler = FbmSampler::new(0.5, 8, 16).unwrap();
    let per_block: Vec<f64> = (0..1000u64)
        .map(|i| {
            let w = sampler.sample(&RngSpec::new(33).child(i));
            let cw = encode_concat(&w, &trained.base, &params).unwrap();
            concat_code_length(&cw, &trained.base).unwrap().nats / 8.0
        })
        .collect();
    assert!(mean(&per_block) <= 3f64.ln() + h + 3.0 * std_error(&per_block));

    // a smaller pool keeps the per-block code length variance low enough for n = 100
    let trained = BaseQuantizer::train_random_coding(
        &BaseTraining {
            hurst: 0.5,
            n_per_unit: 16,
            pool_size: 500,
            training_size: 50_000,
            radius: RadiusChoice::Quantile(1.0),
        },
        &RngSpec::new(31),
        Execution::Parallel,
    )
    .unwrap();
    let params = ConcatParams::new(3, trained.radius).unwrap();
    let h = trained.base.entropy();
    let sampler = FbmSampler::new(0.5, 100, 16).unwrap();
    let members = (0..1000u64)
        .filter(|&i| {
            let w = sampler.sample(&RngSpec::new(34).child(i));
            let cw = encode_concat(&w, &trained.base, &params).unwrap();
            let per_unit = concat_code_length(&cw, &trained.base).unwrap().nats / 100.0;
            typical_membership(per_unit, h, 3, 0.2)
        })
        .count();
    assert!(members >= 950, "{members} of 1000 typical");
}

#[test]
fn typical_codebook_respects_its_budget() {
    let trained = trained_base(0.5);
    let params = ConcatParams::new(3, trained.radius).unwrap();
    let sampler = FbmSampler::new(0.5, 1, 64).unwrap();
    let paths: Vec<SampledPath> = (0..300u64).map(|i| sampler.sample(&RngSpec::new(35).child(i))).collect();
    let tc = TypicalCodebook::collect(&paths, 4, &trained.base, &params, 0.5, Execution::Parallel).unwrap();
    assert!(tc.codebook.log_cardinality() <= tc.log_cardinality_bound);
    assert!(tc.typical <= tc.total && tc.typical >= tc.codebook.len());
    let merged = tc.codebook.union(&tc.codebook).unwrap();
    assert_eq!(merged.len(), 2 * tc.codebook.len());
}

#[test]
fn encoding_is_deterministic_and_checks_grids() {
    let base = nearest_base(0.5, 8, 50, 40);
    let params = ConcatParams::new(4, 0.4).unwrap();
    let w = sample_fbm(0.5, 5, 8, &RngSpec::new(41)).unwrap();
    assert_eq!(encode_concat(&w, &base, &params).unwrap(), encode_concat(&w, &base, &params).unwrap());
    let wrong = sample_fbm(0.5, 5, 4, &RngSpec::new(41)).unwrap();
    assert!(matches!(encode_concat(&wrong, &base, &params), Err(Error::GridMismatch(_))));
}
