use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbm_coding::lab::{Moment, ReportFormat, Scheme, SchemeConfig, SweepConfig};
use fbm_coding::Norm;

use crate::{CliError, CliResult, OUTPUT_DIR_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "fbmcode",
    version,
    about = "Quantization and entropy coding experiments for fractional Brownian motion",
    after_help = format!(
        "Without --output, results go to ${OUTPUT_DIR_ENV}/<subcommand>.<ext> if that variable \
         is set, and to stdout otherwise."
    )
)]
pub struct Cli {
    /// Worker threads (default: one per core). Output does not depend on this.
    #[arg(long, global = true, value_parser = positive_usize)]
    pub threads: Option<usize>,

    /// File of `key=value` lines (keys are long flag names) supplying defaults; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one FBM path and print it as `t,value`
    Sample(SampleArgs),
    /// Rate-distortion sweep of one scheme
    Rd(SweepArgs),
    /// Normalised curve r^H·D(r) and plateau of a sweep
    Kappa(SweepArgs),
    /// Gaussian L² distortion-rate curve by reverse water-filling
    Waterfill(WaterfillArgs),
    /// Check the deterministic invariants; exits 1 if any fails
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 0.5, value_parser = hurst)]
    pub hurst: f64,
    /// Horizon n: the path lives on [0, n]
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    pub horizon: usize,
    #[arg(long, default_value_t = 256, value_parser = positive_usize)]
    pub n_per_unit: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the Cholesky factor of the covariance instead of circulant embedding
    #[arg(long)]
    pub cholesky: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = format)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Sup,
    Lp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloatList(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct MomentList(pub Vec<Moment>);

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// random_code, concat, increment_lp or waterfill_ref
    #[arg(long, default_value = "random_code", value_parser = scheme)]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 0.5, value_parser = hurst)]
    pub hurst: f64,
    /// Distortion norm [default: sup for random_code and concat, lp otherwise]
    #[arg(long)]
    pub norm: Option<NormArg>,
    /// Exponent of the lp norm
    #[arg(long, default_value_t = 2.0, value_parser = lp_exponent)]
    pub p: f64,
    /// Comma-separated moment orders, `inf` for the sample maximum
    #[arg(long, default_value = "2", value_parser = moments)]
    pub q: MomentList,
    /// Comma-separated increasing rates in nats
    #[arg(long, default_value = "4,8,16,32,64,128", value_parser = rates)]
    pub rates: FloatList,
    /// Sample paths per rate
    #[arg(long, default_value_t = 1000)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid of the random_code paths
    #[arg(long, default_value_t = 256, value_parser = positive_usize)]
    pub n_per_unit: usize,

    /// random_code: pool size [default: 10000]
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// random_code: first-hit radius is this times r^(-H) [default: 2]
    #[arg(long)]
    pub radius_scale: Option<f64>,
    /// random_code: an independent pool for every sample
    #[arg(long)]
    pub fresh_pools: bool,
    /// concat: number of offsets M [default: 3]
    #[arg(long)]
    pub m: Option<usize>,
    /// concat: base pool size [default: 2000]
    #[arg(long)]
    pub base_pool: Option<usize>,
    /// concat: training paths for the base weights [default: 20000]
    #[arg(long)]
    pub base_training: Option<usize>,
    /// concat, increment_lp: grid of one block [default: 16]
    #[arg(long)]
    pub base_n_per_unit: Option<usize>,
    /// concat: training quantile of the base radius [default: 1]
    #[arg(long)]
    pub radius_quantile: Option<f64>,
    /// increment_lp: block codebook size [default: 16]
    #[arg(long)]
    pub codebook_size: Option<usize>,
    /// increment_lp: lattice accuracy ε in block units [default: 0.5]
    #[arg(long)]
    pub eps: Option<f64>,
    /// waterfill_ref: Brownian eigenvalues before the analytic tail [default: 1000000]
    #[arg(long)]
    pub bm_terms: Option<usize>,
    /// waterfill_ref: discretisation for H ≠ 0.5 [default: 1024]
    #[arg(long)]
    pub discretization: Option<usize>,

    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = format)]
    pub format: ReportFormat,
    /// Also write per-rate diagnostics as JSON to this file
    #[arg(long, value_name = "FILE")]
    pub diagnostics: Option<PathBuf>,
}

fn not_for(field: &str, scheme: Scheme) -> CliError {
    CliError::Config(format!("{field}: not a parameter of {}", scheme.name()))
}

impl SweepArgs {
    pub fn to_config(&self) -> CliResult<SweepConfig> {
        let mut scheme = SchemeConfig::default_for(self.scheme);
        match &mut scheme {
            SchemeConfig::RandomCode { pool_size, radius_scale, fresh_pools } => {
                set(pool_size, self.pool_size);
                set(radius_scale, self.radius_scale);
                *fresh_pools = self.fresh_pools;
            }
            SchemeConfig::Concat { m, base_pool, base_training, base_n_per_unit, radius_quantile } => {
                set(m, self.m);
                set(base_pool, self.base_pool);
                set(base_training, self.base_training);
                set(base_n_per_unit, self.base_n_per_unit);
                set(radius_quantile, self.radius_quantile);
            }
            SchemeConfig::IncrementLp { codebook_size, eps, base_n_per_unit } => {
                set(codebook_size, self.codebook_size);
                set(eps, self.eps);
                set(base_n_per_unit, self.base_n_per_unit);
            }
            SchemeConfig::WaterfillRef { bm_terms, discretization } => {
                set(bm_terms, self.bm_terms);
                set(discretization, self.discretization);
            }
        }
        let given: [(&str, bool, &[Scheme]); 12] = [
            ("pool_size", self.pool_size.is_some(), &[Scheme::RandomCode]),
            ("radius_scale", self.radius_scale.is_some(), &[Scheme::RandomCode]),
            ("fresh_pools", self.fresh_pools, &[Scheme::RandomCode]),
            ("m", self.m.is_some(), &[Scheme::Concat]),
            ("base_pool", self.base_pool.is_some(), &[Scheme::Concat]),
            ("base_training", self.base_training.is_some(), &[Scheme::Concat]),
            ("base_n_per_unit", self.base_n_per_unit.is_some(), &[Scheme::Concat, Scheme::IncrementLp]),
            ("radius_quantile", self.radius_quantile.is_some(), &[Scheme::Concat]),
            ("codebook_size", self.codebook_size.is_some(), &[Scheme::IncrementLp]),
            ("eps", self.eps.is_some(), &[Scheme::IncrementLp]),
            ("bm_terms", self.bm_terms.is_some(), &[Scheme::WaterfillRef]),
            ("discretization", self.discretization.is_some(), &[Scheme::WaterfillRef]),
        ];
        for (field, present, schemes) in given {
            if present && !schemes.contains(&self.scheme) {
                return Err(not_for(field, self.scheme));
            }
        }

        let mut config = SweepConfig::new(scheme, self.hurst, self.seed);
        config.norm = match self.norm {
            None => scheme.default_norm(),
            Some(NormArg::Sup) => Norm::Sup,
            Some(NormArg::Lp) => Norm::Lp(self.p),
        };
        config.moments = self.q.0.clone();
        config.rates = self.rates.0.clone();
        config.mc = self.mc;
        config.n_per_unit = self.n_per_unit;
        config.validate()?;
        Ok(config)
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpectrumKind {
    /// Brownian motion, closed-form eigenvalues plus analytic tail
    ExactBm,
    /// Midpoint discretisation of the FBM covariance
    Discretized,
}

#[derive(Debug, Args)]
pub struct WaterfillArgs {
    #[arg(long, value_enum, default_value_t = SpectrumKind::ExactBm)]
    pub spectrum: SpectrumKind,
    #[arg(long, default_value_t = 0.5, value_parser = hurst)]
    pub hurst: f64,
    /// Eigenvalues listed before the analytic tail (exact-bm)
    #[arg(long, default_value_t = 1_000_000, value_parser = positive_usize)]
    pub terms: usize,
    /// Discretisation points (discretized)
    #[arg(long, default_value_t = 1024, value_parser = positive_usize)]
    pub n: usize,
    /// Comma-separated increasing rates in nats
    #[arg(long, default_value = "10,100,1000,10000", value_parser = rates)]
    pub rates: FloatList,
    /// Also write the eigenvalues as `k,lambda` to this file
    #[arg(long, value_name = "FILE")]
    pub eigenvalues: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = format)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn hurst(s: &str) -> Result<f64, String> {
    let h: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if h > 0.0 && h < 1.0 {
        Ok(h)
    } else {
        Err(format!("must lie in (0, 1), got {h}"))
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be positive".into()),
        Ok(n) => Ok(n),
        Err(_) => Err(format!("not a positive integer: {s}")),
    }
}

fn lp_exponent(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if p >= 1.0 && p.is_finite() {
        Ok(p)
    } else {
        Err(format!("must be a finite number >= 1, got {p}"))
    }
}

fn rates(s: &str) -> Result<FloatList, String> {
    let values = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t}")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err("rates must be positive and finite".into());
    }
    Ok(FloatList(values))
}

fn moments(s: &str) -> Result<MomentList, String> {
    s.split(',')
        .map(|t| Moment::parse(t).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()
        .map(MomentList)
}

fn scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).map_err(|e| e.to_string())
}

fn format(s: &str) -> Result<ReportFormat, String> {
    ReportFormat::parse(s).map_err(|e| e.to_string())
}
