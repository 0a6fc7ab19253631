//! Deterministic invariants checked by `fbmcode selftest`.

use std::process::ExitCode;

use fbm_coding::codebook::{cross_entropy, entropy, Codebook};
use fbm_coding::concat_coder::{encode_concat_traced, BaseQuantizer, ConcatParams, EncodeRule};
use fbm_coding::gauss_rd::{exact_bm_spectrum, rate_at_level, waterfill_detailed};
use fbm_coding::grid_paths::{scale_alpha, scale_alpha_inv, shift_increment};
use fbm_coding::increment_coder::{decode_sums, encode_sums};
use fbm_coding::lab::{rd_sweep, Scheme, SchemeConfig, SweepConfig};
use fbm_coding::random_coder::RandomPool;
use fbm_coding::{Execution, FbmSampler, Norm, RngSpec};

type Check = fn(&RngSpec) -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: fbm_coding::Error) -> String {
    e.to_string()
}

fn concat_bound(rng: &RngSpec) -> Result<String, String> {
    let pool = RandomPool::build(0.5, 4, 1000, rng.child(0), Execution::Parallel).map_err(err)?;
    let entries = pool.paths().iter().map(|p| p.to_step()).collect();
    let base = BaseQuantizer::new(Codebook::uniform(entries).map_err(err)?, EncodeRule::Nearest).map_err(err)?;
    let sampler = FbmSampler::new(0.5, 8, 4).map_err(err)?;
    let mut within = 0;
    for m in [2, 3, 8] {
        let params = ConcatParams::new(m, 0.5).map_err(err)?;
        for i in 0..200u64 {
            let w = sampler.sample(&rng.child(1).child(i));
            let trace = encode_concat_traced(&w, &base, &params).map_err(err)?;
            if trace.budget_violations() == 0 {
                within += 1;
                let e = Norm::Sup.distance(&w, &trace.reconstruction).map_err(err)?;
                ensure(e <= params.error_bound() * (1.0 + 1e-12), || {
                    format!("M={m} path {i}: error {e} above {}", params.error_bound())
                })?;
            }
        }
    }
    Ok(format!("{within} of 600 trials within budget, all within M/(M-1)·d"))
}

fn increment_bound(rng: &RngSpec) -> Result<String, String> {
    use rand::Rng;
    let mut r = rng.rng();
    for trial in 0..1000 {
        let eps = 0.05 + 0.5 * r.random::<f64>();
        let mut s = 0.0;
        let sums: Vec<f64> = (0..200).map(|_| {
            s += 4.0 * (r.random::<f64>() - 0.5);
            s
        }).collect();
        let decoded = decode_sums(&encode_sums(&sums, eps).map_err(err)?);
        let worst = sums.iter().zip(&decoded).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(worst <= eps, || format!("trial {trial}: error {worst} above ε = {eps}"))?;
    }
    Ok("1000 walks within ε".into())
}

fn scaling(rng: &RngSpec) -> Result<String, String> {
    let sampler = FbmSampler::new(0.5, 1, 64).map_err(err)?;
    for i in 0..50u64 {
        let f = sampler.sample(&rng.child(2 * i));
        let g = sampler.sample(&rng.child(2 * i + 1));
        let d = Norm::Sup.distance(&f, &g).map_err(err)?;
        let scaled = Norm::Sup
            .distance(&scale_alpha(&f, 4).map_err(err)?, &scale_alpha(&g, 4).map_err(err)?)
            .map_err(err)?;
        ensure(scaled == 2.0 * d, || format!("pair {i}: {scaled} != 2·{d}"))?;
        let back = scale_alpha_inv(&scale_alpha(&f, 4).map_err(err)?, 4).map_err(err)?;
        ensure(back.values() == f.values(), || format!("path {i}: α⁻¹∘α is not the identity"))?;
        let w = FbmSampler::new(0.5, 3, 16).map_err(err)?.sample(&rng.child(1000 + i));
        for n in 0..3 {
            ensure(shift_increment(&w, n).map_err(err)?.values()[0] == 0.0, || "shift at 0".into())?;
        }
    }
    Ok("α_n homogeneity, α_n⁻¹∘α_n = id and shifted increments start at 0".into())
}

fn gibbs(rng: &RngSpec) -> Result<String, String> {
    use rand::Rng;
    let mut r = rng.rng();
    for _ in 0..200 {
        let k = r.random_range(2..20);
        let mut p: Vec<f64> = (0..k).map(|_| r.random::<f64>() + 1e-3).collect();
        let mut q: Vec<f64> = (0..k).map(|_| r.random::<f64>()).collect();
        let (sp, sq) = (p.iter().sum::<f64>(), q.iter().sum::<f64>());
        p.iter_mut().for_each(|x| *x /= sp);
        q.iter_mut().for_each(|x| *x /= sq);
        ensure(cross_entropy(&q, &p) >= entropy(&q) - 1e-12, || "cross entropy below entropy".into())?;
    }
    let mut config = SweepConfig::new(SchemeConfig::default_for(Scheme::Concat), 0.5, rng.child(7).rng().random());
    config.scheme = SchemeConfig::Concat {
        m: 3,
        base_pool: 200,
        base_training: 2000,
        base_n_per_unit: 16,
        radius_quantile: 1.0,
    };
    config.rates = vec![8.0, 16.0];
    config.mc = 200;
    let out = rd_sweep(&config, Execution::Parallel).map_err(err)?;
    ensure(out.gibbs_violations() == 0, || "plug-in entropy above mean code length".into())?;
    ensure(out.bound_violations() == 0, || "concat sweep above its error bound".into())?;
    Ok("entropy ≤ cross entropy, sweep entropy ≤ mean code length".into())
}

fn water_level(_: &RngSpec) -> Result<String, String> {
    let spec = exact_bm_spectrum(100_000).map_err(err)?;
    for r in [0.1, 1.0, 10.0, 100.0, 1000.0] {
        let level = waterfill_detailed(&spec, r).map_err(err)?;
        let back = rate_at_level(&spec, level.theta);
        ensure((back / r - 1.0).abs() < 1e-8, || format!("rate {r} recomputed as {back}"))?;
    }
    Ok("water level reproduces the rate".into())
}

pub fn run(seed: u64) -> ExitCode {
    let root = RngSpec::new(seed);
    let checks: [(&str, Check); 5] = [
        ("concat_bound", concat_bound),
        ("increment_bound", increment_bound),
        ("scaling", scaling),
        ("gibbs", gibbs),
        ("water_level", water_level),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check(&root.child(i as u64)) {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
