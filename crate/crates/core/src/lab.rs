//! Monte Carlo harness: rate–distortion sweeps, κ estimation, moment diagnostics and reports.
//!
//! Every sample path of a sweep is drawn from its own stream `seed / samples / rate / i`, and
//! all aggregation runs over index-ordered vectors, so a sweep is a pure function of its
//! configuration and produces the same bytes in parallel and sequential mode.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codebook::{CodeLength, Codebook};
use crate::concat_coder::{
    encode_concat_traced, BaseQuantizer, BaseTraining, ConcatParams, RadiusChoice,
};
use crate::error::{Error, Result};
use crate::gauss_rd::{self, csv_error, Spectrum};
use crate::grid_paths::{check_hurst, scale_alpha, scale_alpha_inv, FbmSampler, Norm, RngSpec};
use crate::increment_coder::{encode_lp_unit, expected_log_increment, increment_weight_constant};
use crate::par::{self, Execution};
use crate::random_coder::{first_hit, first_hit_streaming, RandomPool};
use crate::stats::{mean, median, moment_norm, std_error};

const POOL_STREAM: u64 = 1;
const BASE_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;

/// Slack allowed when comparing achieved distortions with the water-filling lower bound.
pub const CONVERSE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    RandomCode,
    Concat,
    IncrementLp,
    WaterfillRef,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::RandomCode => "random_code",
            Scheme::Concat => "concat",
            Scheme::IncrementLp => "increment_lp",
            Scheme::WaterfillRef => "waterfill_ref",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "random_code" => Ok(Scheme::RandomCode),
            "concat" => Ok(Scheme::Concat),
            "increment_lp" => Ok(Scheme::IncrementLp),
            "waterfill_ref" => Ok(Scheme::WaterfillRef),
            _ => Err(Error::config(format!("unknown scheme {s:?}"))),
        }
    }
}

/// Moment order `q ∈ [1, ∞]`. Serialised as a number, or `"inf"` for `q = ∞`, in which case the
/// recorded distortion is the sample maximum (a lower bound of the essential supremum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment(f64);

impl Moment {
    pub const INFINITE: Moment = Moment(f64::INFINITY);

    pub fn new(q: f64) -> Result<Self> {
        if q >= 1.0 {
            Ok(Moment(q))
        } else {
            Err(Error::config(format!("moment q must be >= 1, got {q}")))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Moment::INFINITE),
            t => Moment::new(
                t.parse()
                    .map_err(|_| Error::config(format!("bad moment {t:?}")))?,
            ),
        }
    }
}

impl fmt::Display for Moment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for Moment {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Moment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Moment;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number >= 1 or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Moment, E> {
                Moment::new(v).map_err(E::custom)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Moment, E> {
                self.visit_f64(v as f64)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Moment, E> {
                self.visit_f64(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Moment, E> {
                Moment::parse(v).map_err(E::custom)
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Sup,
    Lp,
}

/// One row of a report. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionRecord {
    pub scheme: Scheme,
    pub hurst: f64,
    pub norm: NormKind,
    pub p: Option<f64>,
    pub q: Moment,
    pub rate_nats: f64,
    pub distortion: f64,
    pub mc_samples: usize,
    pub miss_rate: f64,
    pub seed: u64,
}

impl DistortionRecord {
    pub fn norm(&self) -> Norm {
        match (self.norm, self.p) {
            (NormKind::Lp, Some(p)) => Norm::Lp(p),
            _ => Norm::Sup,
        }
    }
}

fn norm_columns(norm: Norm) -> (NormKind, Option<f64>) {
    match norm {
        Norm::Sup => (NormKind::Sup, None),
        Norm::Lp(p) => (NormKind::Lp, Some(p)),
    }
}

/// Scheme-specific knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum SchemeConfig {
    /// First hit at radius `radius_scale · r^{−H}` in one pool shared by all samples and rates,
    /// or, with `fresh_pools`, in an independent pool of the same size for every sample.
    RandomCode {
        pool_size: usize,
        radius_scale: f64,
        fresh_pools: bool,
    },
    /// Random-coding base on `[0,1]` with `base_n_per_unit` points, first-hit radius at the
    /// given training quantile, `m` offsets; rate `r` uses `n ≈ r / (H(base) + log M)` blocks.
    Concat {
        m: usize,
        base_pool: usize,
        base_training: usize,
        base_n_per_unit: usize,
        radius_quantile: f64,
    },
    /// Uniform random block codebook of `codebook_size` paths plus the increment coder at
    /// accuracy `eps` (in block units); `n` blocks chosen from the nominal per-block rate.
    IncrementLp {
        codebook_size: usize,
        eps: f64,
        base_n_per_unit: usize,
    },
    /// `D(r|2)` of the exact Brownian spectrum (`H = ½`) or of the midpoint discretisation.
    WaterfillRef { bm_terms: usize, discretization: usize },
}

impl SchemeConfig {
    pub fn scheme(&self) -> Scheme {
        match self {
            SchemeConfig::RandomCode { .. } => Scheme::RandomCode,
            SchemeConfig::Concat { .. } => Scheme::Concat,
            SchemeConfig::IncrementLp { .. } => Scheme::IncrementLp,
            SchemeConfig::WaterfillRef { .. } => Scheme::WaterfillRef,
        }
    }

    pub fn default_for(scheme: Scheme) -> Self {
        match scheme {
            Scheme::RandomCode => SchemeConfig::RandomCode {
                pool_size: 10_000,
                radius_scale: 2.0,
                fresh_pools: false,
            },
            Scheme::Concat => SchemeConfig::Concat {
                m: 3,
                base_pool: 2000,
                base_training: 20_000,
                base_n_per_unit: 16,
                radius_quantile: 1.0,
            },
            Scheme::IncrementLp => SchemeConfig::IncrementLp {
                codebook_size: 16,
                eps: 0.5,
                base_n_per_unit: 16,
            },
            Scheme::WaterfillRef => SchemeConfig::WaterfillRef {
                bm_terms: 1_000_000,
                discretization: 1024,
            },
        }
    }

    /// Norm used when none is given.
    pub fn default_norm(&self) -> Norm {
        match self {
            SchemeConfig::RandomCode { .. } | SchemeConfig::Concat { .. } => Norm::Sup,
            _ => Norm::Lp(2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scheme: SchemeConfig,
    pub hurst: f64,
    pub norm: Norm,
    pub moments: Vec<Moment>,
    pub rates: Vec<f64>,
    pub mc: usize,
    pub seed: u64,
    /// Grid of the random-code paths.
    pub n_per_unit: usize,
}

impl SweepConfig {
    pub fn new(scheme: SchemeConfig, hurst: f64, seed: u64) -> Self {
        Self {
            norm: scheme.default_norm(),
            scheme,
            hurst,
            moments: vec![Moment(2.0)],
            rates: gauss_rd::log_spaced(4.0, 128.0, 6),
            mc: 1000,
            seed,
            n_per_unit: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst).map_err(|e| Error::config(format!("hurst: {e}")))?;
        self.norm
            .validate()
            .map_err(|e| Error::config(format!("norm: {e}")))?;
        if self.rates.is_empty() {
            return Err(Error::config("rates: empty list"));
        }
        if self.rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::config("rates: must be positive and finite"));
        }
        if self.rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("rates: must be increasing"));
        }
        if self.moments.is_empty() {
            return Err(Error::config("q: no moment given"));
        }
        if self.n_per_unit == 0 {
            return Err(Error::config("n_per_unit: must be positive"));
        }
        let scheme = self.scheme.scheme();
        if scheme != Scheme::WaterfillRef && self.mc < 100 {
            return Err(Error::config(format!("mc: need at least 100 samples, got {}", self.mc)));
        }
        match (self.scheme, self.norm) {
            (SchemeConfig::RandomCode { pool_size, radius_scale, .. }, Norm::Sup) => {
                if pool_size == 0 || !(radius_scale > 0.0) {
                    return Err(Error::config("pool_size/radius_scale: must be positive"));
                }
            }
            (
                SchemeConfig::Concat {
                    m,
                    base_pool,
                    base_training,
                    base_n_per_unit,
                    radius_quantile,
                },
                Norm::Sup,
            ) => {
                if m < 2 {
                    return Err(Error::config("m: need at least 2 offsets"));
                }
                if base_pool == 0 || base_training == 0 || base_n_per_unit == 0 {
                    return Err(Error::config("base_pool/base_training/base_n_per_unit: must be positive"));
                }
                if !(radius_quantile > 0.0 && radius_quantile <= 1.0) {
                    return Err(Error::config("radius_quantile: must lie in (0,1]"));
                }
            }
            (SchemeConfig::IncrementLp { codebook_size, eps, base_n_per_unit }, Norm::Lp(_)) => {
                if codebook_size == 0 || base_n_per_unit == 0 || !(eps > 0.0) {
                    return Err(Error::config("codebook_size/eps/base_n_per_unit: must be positive"));
                }
            }
            (SchemeConfig::WaterfillRef { bm_terms, discretization }, Norm::Lp(p)) => {
                if p != 2.0 || self.moments.iter().any(|q| q.0 != 2.0) {
                    return Err(Error::config("waterfill_ref: only p = q = 2 is available"));
                }
                if bm_terms == 0 || discretization == 0 || discretization > gauss_rd::MAX_DISCRETIZATION {
                    return Err(Error::config("bm_terms/discretization: out of range"));
                }
            }
            (_, norm) => {
                return Err(Error::config(format!(
                    "norm: {} does not support the {} norm",
                    scheme.name(),
                    norm.label()
                )))
            }
        }
        Ok(())
    }
}

/// What a sweep saw at one rate, beyond the report columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDiagnostics {
    pub target_rate: f64,
    /// Grid intervals on `[0,1]`.
    pub grid_points: usize,
    pub blocks: Option<usize>,
    pub hits: usize,
    pub misses: usize,
    pub mean_code_length: Option<f64>,
    pub code_length_std_error: Option<f64>,
    /// Plug-in entropy of the observed codewords.
    pub empirical_entropy: Option<f64>,
    /// Sup-error guarantee `n^{−H} M/(M−1) d` on `[0,1]` (concat).
    pub error_bound: Option<f64>,
    /// Largest error among trials whose blocks all met the budget (concat).
    pub max_error_within_budget: Option<f64>,
    /// Water-filling bound at the realised rate for the sampling grid (`L²` schemes).
    pub converse_bound: Option<f64>,
    /// Per-sample distances (hits only), in sample order.
    pub distances: Vec<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub records: Vec<DistortionRecord>,
    pub diagnostics: Vec<RateDiagnostics>,
}

impl SweepOutput {
    /// Records with `lp(2)`, `q = 2` whose distortion falls below the water-filling bound.
    pub fn converse_violations(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for r in &self.records {
            if r.norm != NormKind::Lp || r.p != Some(2.0) || r.q.0 != 2.0 {
                continue;
            }
            let diag = self
                .diagnostics
                .iter()
                .find(|d| d.mean_code_length == Some(r.rate_nats) || (r.scheme == Scheme::WaterfillRef && d.target_rate == r.rate_nats));
            if let Some(bound) = diag.and_then(|d| d.converse_bound) {
                if r.distortion < bound - CONVERSE_TOLERANCE {
                    out.push((r.rate_nats, r.distortion, bound));
                }
            }
        }
        out
    }

    /// Concat trials within budget whose error exceeds the guarantee.
    pub fn bound_violations(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| match (d.error_bound, d.max_error_within_budget) {
                (Some(b), Some(e)) => e > b * (1.0 + 1e-12),
                _ => false,
            })
            .count()
    }

    /// Rates where the plug-in entropy exceeds the mean code length.
    pub fn gibbs_violations(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| match (d.empirical_entropy, d.mean_code_length) {
                (Some(h), Some(l)) => h > l + 1e-9,
                _ => false,
            })
            .count()
    }
}

/// Outcome of coding one sample path.
struct Trial {
    distance: Option<f64>,
    code_length: Option<f64>,
    codeword: u64,
    within_budget: bool,
}

fn codeword_key<T: std::hash::Hash>(t: &T) -> u64 {
    use std::hash::{DefaultHasher, Hasher};
    let mut h = DefaultHasher::new();
    t.hash(&mut h);
    h.finish()
}

fn plugin_entropy(keys: impl Iterator<Item = u64>) -> f64 {
    let mut counts: HashMap<u64, usize> = HashMap::new();
    let mut n = 0usize;
    for k in keys {
        *counts.entry(k).or_default() += 1;
        n += 1;
    }
    let mut c: Vec<usize> = counts.into_values().collect();
    c.sort_unstable();
    c.iter()
        .map(|&k| {
            let p = k as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

/// Runs the configured scheme at every rate and aggregates each requested moment.
pub fn rd_sweep(config: &SweepConfig, exec: Execution) -> Result<SweepOutput> {
    config.validate()?;
    let root = RngSpec::new(config.seed);
    let (norm_kind, p) = norm_columns(config.norm);
    let mut out = SweepOutput {
        records: Vec::new(),
        diagnostics: Vec::new(),
    };
    let make_record = |q: Moment, rate: f64, distortion: f64, mc: usize, miss_rate: f64| {
        DistortionRecord {
            scheme: config.scheme.scheme(),
            hurst: config.hurst,
            norm: norm_kind,
            p,
            q,
            rate_nats: rate,
            distortion,
            mc_samples: mc,
            miss_rate,
            seed: config.seed,
        }
    };

    if let SchemeConfig::WaterfillRef { bm_terms, discretization } = config.scheme {
        let spec = if config.hurst == 0.5 {
            gauss_rd::exact_bm_spectrum(bm_terms)?
        } else {
            gauss_rd::covariance_spectrum(config.hurst, discretization)?
        };
        for &r in &config.rates {
            let d = gauss_rd::waterfill(&spec, r)?;
            out.records.push(make_record(Moment(2.0), r, d, 0, 0.0));
            out.diagnostics.push(RateDiagnostics {
                target_rate: r,
                grid_points: 0,
                blocks: None,
                hits: 0,
                misses: 0,
                mean_code_length: None,
                code_length_std_error: None,
                empirical_entropy: None,
                error_bound: None,
                max_error_within_budget: None,
                converse_bound: Some(d),
                distances: Vec::new(),
                note: None,
            });
        }
        return Ok(out);
    }

    let coder = Coder::prepare(config, &root, exec)?;
    let samples = root.child(SAMPLE_STREAM);
    for (ri, &rate) in config.rates.iter().enumerate() {
        let plan = coder.plan(rate);
        let sampler = FbmSampler::new(config.hurst, 1, plan.grid_points)?;
        let streams = samples.child(ri as u64);
        let trials = par::try_map_indexed(exec, config.mc, |i| {
            let stream = streams.child(i as u64);
            let x = sampler.sample(&stream);
            coder.encode(&x, &stream, &plan)
        })?;

        let hits: Vec<&Trial> = trials.iter().filter(|t| t.distance.is_some()).collect();
        let misses = trials.len() - hits.len();
        let distances: Vec<f64> = hits.iter().map(|t| t.distance.unwrap_or(0.0)).collect();
        let lengths: Vec<f64> = hits.iter().filter_map(|t| t.code_length).collect();
        let mut diag = RateDiagnostics {
            target_rate: rate,
            grid_points: plan.grid_points,
            blocks: plan.blocks,
            hits: hits.len(),
            misses,
            mean_code_length: None,
            code_length_std_error: None,
            empirical_entropy: None,
            error_bound: plan.error_bound,
            max_error_within_budget: None,
            converse_bound: None,
            distances: distances.clone(),
            note: None,
        };
        if hits.is_empty() {
            diag.note = Some("no sample was coded at this rate; record skipped".into());
            out.diagnostics.push(diag);
            continue;
        }
        let mean_len = mean(&lengths);
        diag.mean_code_length = Some(mean_len);
        diag.code_length_std_error = Some(std_error(&lengths));
        diag.empirical_entropy = Some(plugin_entropy(hits.iter().map(|t| t.codeword)));
        if plan.error_bound.is_some() {
            diag.max_error_within_budget = trials
                .iter()
                .filter(|t| t.within_budget)
                .filter_map(|t| t.distance)
                .reduce(f64::max);
        }
        if config.norm == Norm::Lp(2.0) && config.moments.iter().any(|q| q.0 == 2.0) {
            let spec = gauss_rd::grid_spectrum(config.hurst, plan.grid_points)?;
            diag.converse_bound = Some(gauss_rd::waterfill(&spec, mean_len)?);
        }
        let miss_rate = match plan.error_bound {
            // for concat a "miss" is a trial with some block over budget
            Some(_) => trials.iter().filter(|t| !t.within_budget).count() as f64 / trials.len() as f64,
            None => misses as f64 / trials.len() as f64,
        };
        for &q in &config.moments {
            let d = moment_norm(&distances, q.0);
            out.records
                .push(make_record(q, mean_len, d, config.mc, miss_rate));
        }
        out.diagnostics.push(diag);
    }
    Ok(out)
}

enum PoolSource {
    Shared(RandomPool),
    Fresh { sampler: FbmSampler, size: u64 },
}

/// Per-rate parameters chosen by the coder.
struct Plan {
    grid_points: usize,
    blocks: Option<usize>,
    radius: Option<f64>,
    error_bound: Option<f64>,
}

enum Coder {
    Random {
        pool: PoolSource,
        radius_scale: f64,
        hurst: f64,
        grid: usize,
    },
    Concat {
        base: BaseQuantizer,
        params: ConcatParams,
        hurst: f64,
    },
    Increment {
        codebook: Codebook,
        eps: f64,
        p: f64,
        per_block: f64,
    },
}

impl Coder {
    fn prepare(config: &SweepConfig, root: &RngSpec, exec: Execution) -> Result<Self> {
        Ok(match config.scheme {
            SchemeConfig::RandomCode {
                pool_size,
                radius_scale,
                fresh_pools,
            } => Coder::Random {
                pool: if fresh_pools {
                    PoolSource::Fresh {
                        sampler: FbmSampler::new(config.hurst, 1, config.n_per_unit)?,
                        size: pool_size as u64,
                    }
                } else {
                    PoolSource::Shared(RandomPool::build(
                        config.hurst,
                        config.n_per_unit,
                        pool_size,
                        root.child(POOL_STREAM),
                        exec,
                    )?)
                },
                radius_scale,
                hurst: config.hurst,
                grid: config.n_per_unit,
            },
            SchemeConfig::Concat {
                m,
                base_pool,
                base_training,
                base_n_per_unit,
                radius_quantile,
            } => {
                let trained = BaseQuantizer::train_random_coding(
                    &BaseTraining {
                        hurst: config.hurst,
                        n_per_unit: base_n_per_unit,
                        pool_size: base_pool,
                        training_size: base_training,
                        radius: RadiusChoice::Quantile(radius_quantile),
                    },
                    &root.child(BASE_STREAM),
                    exec,
                )?;
                Coder::Concat {
                    params: ConcatParams::new(m, trained.radius)?,
                    base: trained.base,
                    hurst: config.hurst,
                }
            }
            SchemeConfig::IncrementLp {
                codebook_size,
                eps,
                base_n_per_unit,
            } => {
                let pool = RandomPool::build(
                    config.hurst,
                    base_n_per_unit,
                    codebook_size,
                    root.child(BASE_STREAM),
                    exec,
                )?;
                let codebook =
                    Codebook::uniform(pool.paths().iter().map(|p| p.to_step()).collect())?;
                let per_block = (codebook_size as f64).ln()
                    + increment_weight_constant()
                    + 2.0 * expected_log_increment(eps)?;
                Coder::Increment {
                    codebook,
                    eps,
                    p: config.norm.exponent().unwrap_or(2.0),
                    per_block,
                }
            }
            SchemeConfig::WaterfillRef { .. } => unreachable!("handled by rd_sweep"),
        })
    }

    fn plan(&self, rate: f64) -> Plan {
        match self {
            Coder::Random {
                radius_scale,
                hurst,
                grid,
                ..
            } => Plan {
                grid_points: *grid,
                blocks: None,
                radius: Some(radius_scale * rate.powf(-hurst)),
                error_bound: None,
            },
            Coder::Concat { base, params, hurst } => {
                let per_block = base.entropy() + (params.m() as f64).ln();
                let n = ((rate / per_block).round() as usize).max(1);
                Plan {
                    grid_points: n * base.n_per_unit(),
                    blocks: Some(n),
                    radius: None,
                    error_bound: Some(params.error_bound() / (n as f64).powf(*hurst)),
                }
            }
            Coder::Increment {
                codebook, per_block, ..
            } => {
                let n = ((rate / per_block).round() as usize).max(1);
                Plan {
                    grid_points: n * codebook.entry(0).n_per_unit(),
                    blocks: Some(n),
                    radius: None,
                    error_bound: None,
                }
            }
        }
    }

    fn encode(&self, x: &crate::SampledPath, stream: &RngSpec, plan: &Plan) -> Result<Trial> {
        match self {
            Coder::Random { pool, .. } => {
                let radius = plan.radius.unwrap_or(0.0);
                let code = match pool {
                    PoolSource::Shared(pool) => first_hit(pool, x, radius)?,
                    PoolSource::Fresh { sampler, size } => first_hit_streaming(
                        sampler,
                        x,
                        radius,
                        &mut stream.child(POOL_STREAM).rng(),
                        *size,
                    )?,
                };
                Ok(Trial {
                    distance: code.distance,
                    code_length: code.code_length.map(|c| c.nats),
                    codeword: code.hit_index.unwrap_or(0),
                    within_budget: code.is_hit(),
                })
            }
            Coder::Concat { base, params, .. } => {
                let n = plan.blocks.unwrap_or(1);
                let scaled = scale_alpha(x, n)?;
                let trace = encode_concat_traced(&scaled, base, params)?;
                let recon = scale_alpha_inv(&trace.reconstruction, n)?;
                let distance = Norm::Sup.distance(x, &recon)?;
                let length: CodeLength =
                    crate::concat_coder::concat_code_length(&trace.codeword, base)?;
                Ok(Trial {
                    distance: Some(distance),
                    code_length: Some(length.nats),
                    codeword: codeword_key(&trace.codeword),
                    within_budget: trace.budget_violations() == 0,
                })
            }
            Coder::Increment {
                codebook, eps, p, ..
            } => {
                let n = plan.blocks.unwrap_or(1);
                let enc = encode_lp_unit(x, n, codebook, *eps, *p)?;
                Ok(Trial {
                    distance: Some(enc.distortion),
                    code_length: Some(enc.code_length.nats),
                    codeword: codeword_key(&(&enc.block_indices, &enc.increments.offsets)),
                    within_budget: true,
                })
            }
        }
    }
}

/// Normalised curve `r ↦ r^H D̂(r)` of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub hurst: f64,
    pub norm: NormKind,
    pub p: Option<f64>,
    /// `(rate, rate^H · distortion)`, increasing in rate.
    pub values: Vec<(f64, f64)>,
    /// Mean of the last three values when they agree within 10%.
    pub plateau: Option<f64>,
}

/// Relative spread `(max − min)/mean` below which the tail counts as a plateau.
pub const PLATEAU_SPREAD: f64 = 0.10;

pub fn kappa_estimate(records: &[DistortionRecord], hurst: f64) -> KappaEstimate {
    let mut values: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.rate_nats, r.rate_nats.powf(hurst) * r.distortion))
        .collect();
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let plateau = if values.len() >= 3 {
        let tail: Vec<f64> = values[values.len() - 3..].iter().map(|v| v.1).collect();
        let m = mean(&tail);
        let spread = tail.iter().cloned().fold(f64::MIN, f64::max)
            - tail.iter().cloned().fold(f64::MAX, f64::min);
        (spread / m < PLATEAU_SPREAD).then_some(m)
    } else {
        None
    };
    let (norm, p) = records
        .first()
        .map(|r| (r.norm, r.p))
        .unwrap_or((NormKind::Sup, None));
    KappaEstimate {
        hurst,
        norm,
        p,
        values,
        plateau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// `(E A^{q2})^{1/q2} / (E A^{q1})^{1/q1}`.
    pub ratio: f64,
    /// Fraction of samples with `|A/median − 1| > 0.25`.
    pub spread: f64,
}

pub fn moment_concentration_diag(distances: &[f64], q1: f64, q2: f64) -> Result<ConcentrationReport> {
    if !(q1 >= 1.0 && q1 < q2) {
        return Err(Error::domain(format!("need 1 <= q1 < q2, got {q1}, {q2}")));
    }
    if distances.is_empty() {
        return Err(Error::domain("no distances"));
    }
    let ratio = moment_norm(distances, q2) / moment_norm(distances, q1);
    let med = median(distances);
    let spread = if med > 0.0 {
        distances
            .iter()
            .filter(|&&a| (a / med - 1.0).abs() > 0.25)
            .count() as f64
            / distances.len() as f64
    } else {
        distances.iter().filter(|&&a| a != 0.0).count() as f64 / distances.len() as f64
    };
    Ok(ConcentrationReport { ratio, spread })
}

/// `c = 1 + √2`, the constant of the log-moment inequality for `q = 2`.
pub const LOG_MOMENT_CONSTANT: f64 = 1.0 + std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogMomentCheck {
    /// `(E (log Z)²)^{1/2}`.
    pub lhs: f64,
    /// `c (1 + log E Z)`.
    pub rhs: f64,
    pub holds: bool,
}

/// Empirical check of `(E (log Z)²)^{1/2} ≤ (1+√2)(1 + log E Z)` for samples `Z ≥ 1`.
pub fn log_moment_check(samples: &[f64]) -> Result<LogMomentCheck> {
    if samples.is_empty() {
        return Err(Error::domain("no samples"));
    }
    if let Some(z) = samples.iter().find(|&&z| !(z >= 1.0)) {
        return Err(Error::domain(format!("sample {z} is below 1")));
    }
    let lhs = (samples.iter().map(|z| z.ln().powi(2)).sum::<f64>() / samples.len() as f64).sqrt();
    let rhs = LOG_MOMENT_CONSTANT * (1.0 + mean(samples).ln());
    Ok(LogMomentCheck {
        lhs,
        rhs,
        holds: lhs <= rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::config(format!("unknown format {s:?}"))),
        }
    }
}

/// CSV header, in column order.
pub const REPORT_COLUMNS: [&str; 10] = [
    "scheme",
    "hurst",
    "norm",
    "p",
    "q",
    "rate_nats",
    "distortion",
    "mc_samples",
    "miss_rate",
    "seed",
];

pub fn report_to_string(records: &[DistortionRecord], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(records)
            .map(|s| s + "\n")
            .map_err(|e| Error::Numerical(e.to_string())),
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(Vec::new());
            w.write_record(REPORT_COLUMNS)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            for r in records {
                w.serialize(r).map_err(|e| Error::Numerical(e.to_string()))?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Error::Numerical(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
        }
    }
}

pub fn write_report(
    records: &[DistortionRecord],
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    let text = report_to_string(records, format)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<DistortionRecord>> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::format(path, e))
        }
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
            let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
            if header.iter().ne(REPORT_COLUMNS) {
                return Err(Error::format(path, format!("unexpected header {header:?}")));
            }
            r.deserialize()
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| csv_error(path, e))
        }
    }
}

/// κ curves as text: CSV columns `hurst,norm,p,rate,normalized,plateau`, or the JSON array of
/// estimates.
pub fn kappa_to_string(estimates: &[KappaEstimate], format: ReportFormat) -> Result<String> {
    let to_err = |e: csv::Error| Error::Numerical(e.to_string());
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(estimates)
            .map(|s| s + "\n")
            .map_err(|e| Error::Numerical(e.to_string())),
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(Vec::new());
            w.write_record(["hurst", "norm", "p", "rate", "normalized", "plateau"])
                .map_err(to_err)?;
            for est in estimates {
                for &(rate, v) in &est.values {
                    w.serialize((est.hurst, est.norm, est.p, rate, v, est.plateau))
                        .map_err(to_err)?;
                }
            }
            let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
        }
    }
}

pub fn write_kappa(
    estimates: &[KappaEstimate],
    path: impl AsRef<Path>,
    format: ReportFormat,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, kappa_to_string(estimates, format)?).map_err(|e| Error::io(path, e))
}

/// Checks every `lp(2)`, `q = 2` record against `D(rate|2)` of `spec`.
pub fn converse_check(records: &[DistortionRecord], spec: &Spectrum) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for r in records {
        if r.norm == NormKind::Lp && r.p == Some(2.0) && r.q.0 == 2.0 {
            let bound = gauss_rd::waterfill(spec, r.rate_nats)?;
            if r.distortion < bound - CONVERSE_TOLERANCE {
                out.push((r.rate_nats, r.distortion, bound));
            }
        }
    }
    Ok(out)
}
