//! Block concatenation coder.
//!
//! A base quantizer for paths on `[0,1]` is extended to `[0,n]`: every unit block
//! `w^{(i)} = w_{i+·} − w_i` is coded by the base quantizer, and before block `i ≥ 1` the running
//! reconstruction is re-anchored by an offset `ξ_i` from the `M`-point grid
//! `{−d + 2kd/(M−1)}`. If every block is coded within `d` in sup norm, the whole path is coded
//! within `M/(M−1)·d`.
//!
//! The reconstruction is a step path; its value just before an integer time is the last grid
//! value of the previous block.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::codebook::{smoothed_weights, CodeLength, Codebook};
use crate::error::{Error, Result};
use crate::grid_paths::{
    scale_alpha, scale_alpha_inv, shift_increment, FbmSampler, Norm, PathKind, RngSpec,
    SampledPath,
};
use crate::par::{self, Execution};
use crate::random_coder::{first_within, RandomPool};

/// Offset grid size `M ≥ 2` and base error budget `d > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcatParams {
    m: usize,
    d: f64,
}

impl ConcatParams {
    pub fn new(m: usize, d: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::domain(format!("offset grid needs M >= 2, got {m}")));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::domain(format!("error budget d must be positive, got {d}")));
        }
        Ok(Self { m, d })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// `M/(M−1)·d`, the sup-error guarantee on `[0,n]`.
    pub fn error_bound(&self) -> f64 {
        self.m as f64 / (self.m as f64 - 1.0) * self.d
    }
}

/// `M = ⌊e^{Δr}⌋` for a per-block rate increment `Δr`.
pub fn offsets_for_rate_increment(delta_r: f64) -> Result<usize> {
    let m = delta_r.exp().floor();
    if !(m >= 2.0) || !m.is_finite() {
        return Err(Error::domain(format!(
            "rate increment {delta_r} gives fewer than 2 offsets"
        )));
    }
    Ok(m as usize)
}

/// The `M` equally spaced offsets from `−d` to `d`.
pub fn offset_grid(m: usize, d: f64) -> Result<Vec<f64>> {
    let params = ConcatParams::new(m, d)?;
    Ok(grid_of(&params))
}

fn grid_of(params: &ConcatParams) -> Vec<f64> {
    let (m, d) = (params.m, params.d);
    (0..m)
        .map(|k| -d + 2.0 * k as f64 * d / (m as f64 - 1.0))
        .collect()
}

/// Smallest `ξ` in `grid` (sorted ascending) minimising `|target − (current + ξ)|`.
pub fn select_offset(target: f64, current: f64, grid: &[f64]) -> (usize, f64) {
    let mut best = (0, grid[0], (target - (current + grid[0])).abs());
    for (k, &xi) in grid.iter().enumerate().skip(1) {
        let err = (target - (current + xi)).abs();
        if err < best.2 {
            best = (k, xi, err);
        }
    }
    (best.0, best.1)
}

/// How the base quantizer picks a codebook entry for a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeRule {
    /// Closest entry in sup norm.
    Nearest,
    /// First entry within `radius` in sup norm, closest entry if none is.
    FirstHit { radius: f64 },
}

/// Strategy for paths on `[0,1]`: a weighted step codebook and a selection rule.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseQuantizer {
    codebook: Codebook,
    rule: EncodeRule,
}

impl BaseQuantizer {
    pub fn new(codebook: Codebook, rule: EncodeRule) -> Result<Self> {
        if codebook.weights().is_none() {
            return Err(Error::domain("base quantizer needs codebook weights"));
        }
        if codebook.entry(0).horizon() != 1 {
            return Err(Error::grid("base codebook must live on [0,1]"));
        }
        Ok(Self { codebook, rule })
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn rule(&self) -> EncodeRule {
        self.rule
    }

    pub fn n_per_unit(&self) -> usize {
        self.codebook.entry(0).n_per_unit()
    }

    pub fn hurst(&self) -> f64 {
        self.codebook.entry(0).hurst()
    }

    /// Entropy of the base weights.
    pub fn entropy(&self) -> f64 {
        self.codebook.entropy()
    }

    pub fn encode(&self, block: &SampledPath) -> Result<usize> {
        self.codebook.check_grid(block)?;
        Ok(self.encode_values(block.values()).0)
    }

    /// Selected index and the sup error of the block against it.
    pub(crate) fn encode_values(&self, block: &[f64]) -> (usize, f64) {
        let entries = self.codebook.entries();
        match self.rule {
            EncodeRule::Nearest => crate::codebook::nearest_unchecked(entries, block, Norm::Sup),
            EncodeRule::FirstHit { radius } => first_within(entries, block, radius)
                .unwrap_or_else(|| crate::codebook::nearest_unchecked(entries, block, Norm::Sup)),
        }
    }

    /// Random-coding base: a pool of FBM paths (as step codewords) selected by first hit at a
    /// radius, with weights fitted to the law of the selected index on fresh training paths.
    pub fn train_random_coding(
        config: &BaseTraining,
        rng: &RngSpec,
        exec: Execution,
    ) -> Result<TrainedBase> {
        config.validate()?;
        let pool = RandomPool::build(
            config.hurst,
            config.n_per_unit,
            config.pool_size,
            rng.child(0),
            exec,
        )?;
        let entries: Vec<SampledPath> = pool.paths().iter().map(|p| p.to_step()).collect();
        let sampler = FbmSampler::new(config.hurst, 1, config.n_per_unit)?;
        let training_rng = rng.child(1);
        let training: Vec<SampledPath> = par::map_indexed(exec, config.training_size, |i| {
            sampler.sample(&training_rng.child(i as u64))
        });

        let nearest: Vec<f64> = par::map_slice(exec, &training, |x| {
            crate::codebook::nearest_unchecked(&entries, x.values(), Norm::Sup).1
        });
        let radius = match config.radius {
            RadiusChoice::Fixed(r) => r,
            RadiusChoice::Quantile(q) => quantile(&nearest, q),
        };

        let provisional = Codebook::uniform(entries.clone())?;
        let rule = EncodeRule::FirstHit { radius };
        let base = BaseQuantizer::new(provisional, rule)?;
        let chosen: Vec<usize> =
            par::map_slice(exec, &training, |x| base.encode_values(x.values()).0);
        let mut counts = vec![0usize; entries.len()];
        for &i in &chosen {
            counts[i] += 1;
        }
        let weights = smoothed_weights(&counts, WEIGHT_PSEUDO_COUNT);
        let codebook = Codebook::new(entries, Some(weights))?;
        let over_budget = nearest.iter().filter(|&&d| d > radius).count();
        Ok(TrainedBase {
            base: BaseQuantizer::new(codebook, rule)?,
            radius,
            training_miss_rate: over_budget as f64 / training.len() as f64,
        })
    }
}

/// Pseudo-count added to every index when fitting weights, so entries never selected in
/// training keep a positive weight.
pub const WEIGHT_PSEUDO_COUNT: f64 = 0.01;

/// Empirical `q`-quantile (order statistic `⌈qN⌉`).
pub(crate) fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusChoice {
    Fixed(f64),
    /// Quantile of the nearest-entry sup distance over the training paths.
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseTraining {
    pub hurst: f64,
    pub n_per_unit: usize,
    pub pool_size: usize,
    pub training_size: usize,
    pub radius: RadiusChoice,
}

impl BaseTraining {
    fn validate(&self) -> Result<()> {
        crate::grid_paths::check_hurst(self.hurst)?;
        if self.pool_size == 0 || self.training_size == 0 || self.n_per_unit == 0 {
            return Err(Error::config("pool, training set and grid must be nonempty"));
        }
        match self.radius {
            RadiusChoice::Fixed(r) if !(r > 0.0) => {
                Err(Error::config(format!("radius {r} must be positive")))
            }
            RadiusChoice::Quantile(q) if !(q > 0.0 && q <= 1.0) => {
                Err(Error::config(format!("quantile {q} outside (0,1]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedBase {
    pub base: BaseQuantizer,
    /// First-hit radius; use it as the budget `d`.
    pub radius: f64,
    /// Fraction of training blocks whose nearest entry is farther than `radius`.
    pub training_miss_rate: f64,
}

/// Block indices and offset indices of one concatenated code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConcatCodeword {
    pub block_indices: Vec<usize>,
    pub offset_indices: Vec<usize>,
    pub params: ConcatParamsKey,
}

/// `ConcatParams` with `d` stored by bit pattern so codewords can be hashed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConcatParamsKey {
    pub m: usize,
    pub d_bits: u64,
}

impl From<ConcatParams> for ConcatParamsKey {
    fn from(p: ConcatParams) -> Self {
        Self {
            m: p.m,
            d_bits: p.d.to_bits(),
        }
    }
}

impl ConcatParamsKey {
    pub fn params(&self) -> Result<ConcatParams> {
        ConcatParams::new(self.m, f64::from_bits(self.d_bits))
    }
}

impl ConcatCodeword {
    pub fn blocks(&self) -> usize {
        self.block_indices.len()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Numerical(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("<codeword json>", e))
    }
}

/// Codeword plus what the encoder saw along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatTrace {
    pub codeword: ConcatCodeword,
    pub reconstruction: SampledPath,
    /// Sup error of each block against its base codeword.
    pub block_errors: Vec<f64>,
}

impl ConcatTrace {
    /// Number of blocks whose base error exceeds the budget `d`.
    pub fn budget_violations(&self) -> usize {
        let d = f64::from_bits(self.codeword.params.d_bits);
        self.block_errors.iter().filter(|&&e| e > d).count()
    }
}

fn check_base_grid(w: &SampledPath, base: &BaseQuantizer) -> Result<()> {
    if w.n_per_unit() != base.n_per_unit() {
        return Err(Error::grid(format!(
            "path has {} points per unit, base codebook {}",
            w.n_per_unit(),
            base.n_per_unit()
        )));
    }
    Ok(())
}

pub fn encode_concat(
    w: &SampledPath,
    base: &BaseQuantizer,
    params: &ConcatParams,
) -> Result<ConcatCodeword> {
    Ok(encode_concat_traced(w, base, params)?.codeword)
}

/// Encodes `w` on `[0,n]` block by block and returns the decoded path alongside.
pub fn encode_concat_traced(
    w: &SampledPath,
    base: &BaseQuantizer,
    params: &ConcatParams,
) -> Result<ConcatTrace> {
    check_base_grid(w, base)?;
    let n = w.horizon();
    let p = w.n_per_unit();
    let grid = grid_of(params);
    let values = w.values();
    let mut recon = vec![0.0; n * p + 1];
    let mut block_indices = Vec::with_capacity(n);
    let mut offset_indices = Vec::with_capacity(n.saturating_sub(1));
    let mut block_errors = Vec::with_capacity(n);
    for i in 0..n {
        let block = shift_increment(w, i)?;
        let (idx, err) = base.encode_values(block.values());
        block_indices.push(idx);
        block_errors.push(err);
        let start = if i == 0 {
            0.0
        } else {
            let current = recon[i * p - 1];
            let (k, xi) = select_offset(values[i * p], current, &grid);
            offset_indices.push(k);
            current + xi
        };
        let entry = base.codebook.entry(idx).values();
        for k in 0..p {
            recon[i * p + k] = start + entry[k];
        }
    }
    recon[n * p] = recon[n * p - 1];
    Ok(ConcatTrace {
        codeword: ConcatCodeword {
            block_indices,
            offset_indices,
            params: (*params).into(),
        },
        reconstruction: SampledPath::new(w.hurst(), n, p, recon, PathKind::Step)?,
        block_errors,
    })
}

pub fn decode_concat(cw: &ConcatCodeword, base: &BaseQuantizer) -> Result<SampledPath> {
    let params = cw.params.params()?;
    let n = cw.blocks();
    if n == 0 || cw.offset_indices.len() + 1 != n {
        return Err(Error::domain(format!(
            "{} blocks need {} offsets, got {}",
            n,
            n.saturating_sub(1),
            cw.offset_indices.len()
        )));
    }
    let grid = grid_of(&params);
    let p = base.n_per_unit();
    let mut recon = vec![0.0; n * p + 1];
    for (i, &idx) in cw.block_indices.iter().enumerate() {
        if idx >= base.codebook.len() {
            return Err(Error::domain(format!("block index {idx} out of range")));
        }
        let start = if i == 0 {
            0.0
        } else {
            let k = cw.offset_indices[i - 1];
            let xi = *grid
                .get(k)
                .ok_or_else(|| Error::domain(format!("offset index {k} >= M")))?;
            recon[i * p - 1] + xi
        };
        let entry = base.codebook.entry(idx).values();
        for k in 0..p {
            recon[i * p + k] = start + entry[k];
        }
    }
    recon[n * p] = recon[n * p - 1];
    SampledPath::new(base.hurst(), n, p, recon, PathKind::Step)
}

/// `(n−1) log M + Σ_i −log p_{block_i}`: minus the log of the product weight
/// `M^{−(n−1)} Π_i p_{block_i}`.
pub fn concat_code_length(cw: &ConcatCodeword, base: &BaseQuantizer) -> Result<CodeLength> {
    let m = cw.params.m as f64;
    let mut total = CodeLength {
        nats: cw.offset_indices.len() as f64 * m.ln(),
    };
    for &i in &cw.block_indices {
        total += base.codebook.code_length(i)?;
    }
    Ok(total)
}

/// Result of coding a path on `[0,1]` through `α_n⁻¹ ∘ concat ∘ α_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledCode {
    pub codeword: ConcatCodeword,
    /// Step reconstruction on `[0,1]`.
    pub reconstruction: SampledPath,
    pub code_length: CodeLength,
    /// Sup error on `[0,1]`.
    pub distortion: f64,
    /// Sup error of the concatenated code on `[0,n]`; `distortion = n^{−H}` times this.
    pub horizon_distortion: f64,
    pub block_errors: Vec<f64>,
}

impl RescaledCode {
    pub fn budget_violations(&self) -> usize {
        let d = f64::from_bits(self.codeword.params.d_bits);
        self.block_errors.iter().filter(|&&e| e > d).count()
    }
}

/// Codes `w` on `[0,1]` by scaling it to `[0,n]`, concatenating `n` base codes, and scaling
/// back. `w` needs `n × (base points per unit)` points per unit.
pub fn rescale_scheme(
    w: &SampledPath,
    n: usize,
    base: &BaseQuantizer,
    params: &ConcatParams,
) -> Result<RescaledCode> {
    let scaled = scale_alpha(w, n)?;
    let trace = encode_concat_traced(&scaled, base, params)?;
    let horizon_distortion = Norm::Sup.distance(&scaled, &trace.reconstruction)?;
    let reconstruction = scale_alpha_inv(&trace.reconstruction, n)?;
    let distortion = Norm::Sup.distance(w, &reconstruction)?;
    let code_length = concat_code_length(&trace.codeword, base)?;
    Ok(RescaledCode {
        codeword: trace.codeword,
        reconstruction,
        code_length,
        distortion,
        horizon_distortion,
        block_errors: trace.block_errors,
    })
}

/// `−log p ≤ n (H + log M + ε)` expressed per unit, boundary included.
pub fn typical_membership(code_length_per_unit: f64, base_entropy: f64, m: usize, eps: f64) -> bool {
    code_length_per_unit <= base_entropy + (m as f64).ln() + eps
}

/// Log-cardinality budget `n (H + log M + ε)` of the typical set.
pub fn typical_codebook_bound(n: usize, base_entropy: f64, m: usize, eps: f64) -> f64 {
    n as f64 * (base_entropy + (m as f64).ln() + eps)
}

/// Codebook on `[0,1]` made of the distinct typical reconstructions of sampled paths.
#[derive(Debug, Clone)]
pub struct TypicalCodebook {
    pub codebook: Codebook,
    pub log_cardinality_bound: f64,
    /// Sample paths whose code fell in the typical set.
    pub typical: usize,
    pub total: usize,
}

impl TypicalCodebook {
    pub fn collect(
        paths: &[SampledPath],
        n: usize,
        base: &BaseQuantizer,
        params: &ConcatParams,
        eps: f64,
        exec: Execution,
    ) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::domain("ε must be nonnegative"));
        }
        let bound = typical_codebook_bound(n, base.entropy(), params.m, eps);
        let codes = par::try_map_indexed(exec, paths.len(), |i| {
            rescale_scheme(&paths[i], n, base, params)
        })?;
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        let mut typical = 0;
        for code in codes {
            if code.code_length.nats <= bound {
                typical += 1;
                if seen.insert(code.codeword) {
                    entries.push(code.reconstruction);
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::domain("no sampled path fell in the typical set"));
        }
        Ok(Self {
            codebook: Codebook::uniform(entries)?,
            log_cardinality_bound: bound,
            typical,
            total: paths.len(),
        })
    }
}
