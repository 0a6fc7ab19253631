//! Random-codebook entropy coder.
//!
//! A path is encoded by the index `T` of the first member of an i.i.d. FBM pool lying within
//! the target sup-norm radius. Index `n` carries weight `p_n = 6/(π² n²)`, so a hit costs
//! `2 log T + log(π²/6)` nats. The pool is finite; exhausting it is reported as a miss rather
//! than an infinite index.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{nearest_unchecked, CodeLength};
use crate::error::{Error, Result};
use crate::grid_paths::{FbmSampler, Norm, RngSpec, SampledPath};
use crate::par::{self, Execution};
use crate::stats::wilson_interval;

/// Default cap on the pool size.
pub const DEFAULT_POOL_SIZE: usize = 100_000;

/// `p_n = 6/(π² n²)` for `n ≥ 1`.
pub fn zeta_weight(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("zeta weights are indexed from 1"));
    }
    let n = n as f64;
    Ok(6.0 / (PI * PI * n * n))
}

/// `−log p_n = 2 log n + log(π²/6)`.
pub fn zeta_code_length(n: u64) -> CodeLength {
    CodeLength {
        nats: 2.0 * (n as f64).ln() + (PI * PI / 6.0).ln(),
    }
}

/// i.i.d. FBM paths on `[0,1]`, all on one grid.
#[derive(Debug, Clone)]
pub struct RandomPool {
    paths: Vec<SampledPath>,
    rng: RngSpec,
}

impl RandomPool {
    /// Pool member `i` is drawn from stream `rng.child(i)`.
    pub fn build(
        hurst: f64,
        n_per_unit: usize,
        size: usize,
        rng: RngSpec,
        exec: Execution,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::domain("pool size must be positive"));
        }
        let sampler = FbmSampler::new(hurst, 1, n_per_unit)?;
        let paths = par::map_indexed(exec, size, |i| sampler.sample(&rng.child(i as u64)));
        Ok(Self { paths, rng })
    }

    pub fn from_paths(paths: Vec<SampledPath>, rng: RngSpec) -> Result<Self> {
        let first = paths.first().ok_or(Error::EmptyCodebook)?;
        for p in &paths[1..] {
            first.check_same_grid(p)?;
            if p.hurst() != first.hurst() {
                return Err(Error::domain("pool paths must share the Hurst index"));
            }
        }
        Ok(Self { paths, rng })
    }

    pub fn paths(&self) -> &[SampledPath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn rng(&self) -> RngSpec {
        self.rng
    }

    pub fn hurst(&self) -> f64 {
        self.paths[0].hurst()
    }

    fn check_grid(&self, x: &SampledPath) -> Result<()> {
        self.paths[0].check_same_grid(x)
    }
}

/// Outcome of a first-hit search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomCode {
    /// 1-based index of the first pool member within `radius`; `None` if the pool ran out.
    pub hit_index: Option<u64>,
    pub radius: f64,
    pub code_length: Option<CodeLength>,
    /// Sup distance to the selected member on a hit.
    pub distance: Option<f64>,
}

impl RandomCode {
    fn hit(index: u64, radius: f64, distance: f64) -> Self {
        Self {
            hit_index: Some(index),
            radius,
            code_length: Some(zeta_code_length(index)),
            distance: Some(distance),
        }
    }

    fn miss(radius: f64) -> Self {
        Self {
            hit_index: None,
            radius,
            code_length: None,
            distance: None,
        }
    }

    pub fn is_hit(&self) -> bool {
        self.hit_index.is_some()
    }
}

/// 0-based index and sup distance of the first entry within `radius`.
pub(crate) fn first_within(entries: &[SampledPath], x: &[f64], radius: f64) -> Option<(usize, f64)> {
    entries.iter().enumerate().find_map(|(i, e)| {
        Norm::Sup
            .distance_within(e.values(), x, radius)
            .map(|d| (i, d))
    })
}

/// `T(x) = inf{n : ‖x − pool_n‖ ≤ radius}` scanned in pool order.
pub fn first_hit(pool: &RandomPool, x: &SampledPath, radius: f64) -> Result<RandomCode> {
    if !(radius >= 0.0) {
        return Err(Error::domain(format!("radius {radius} must be nonnegative")));
    }
    pool.check_grid(x)?;
    Ok(match first_within(&pool.paths, x.values(), radius) {
        Some((i, d)) => RandomCode::hit(i as u64 + 1, radius, d),
        None => RandomCode::miss(radius),
    })
}

/// First-hit search against fresh FBM draws from `rng`, stopping after `cap` draws.
/// Equivalent in law to [`first_hit`] on a new pool of size `cap`, without storing the pool.
pub fn first_hit_streaming<R: Rng + ?Sized>(
    sampler: &FbmSampler,
    x: &SampledPath,
    radius: f64,
    rng: &mut R,
    cap: u64,
) -> Result<RandomCode> {
    if sampler.horizon() != x.horizon() || sampler.n_per_unit() != x.n_per_unit() {
        return Err(Error::grid("sampler grid differs from the path grid"));
    }
    for n in 1..=cap {
        let candidate = sampler.sample_with(rng);
        if let Some(d) = Norm::Sup.distance_within(candidate.values(), x.values(), radius) {
            return Ok(RandomCode::hit(n, radius, d));
        }
    }
    Ok(RandomCode::miss(radius))
}

/// First hit at radius `r^{−H}`.
pub fn encode_at_rate(pool: &RandomPool, x: &SampledPath, rate: f64, hurst: f64) -> Result<RandomCode> {
    if !(rate > 0.0) {
        return Err(Error::domain(format!("rate {rate} must be positive")));
    }
    first_hit(pool, x, rate.powf(-hurst))
}

/// Reconstruction used when the pool is exhausted: the nearest member. No code length is
/// attached; callers count the event as a miss.
pub fn fallback_on_miss(pool: &RandomPool, x: &SampledPath, norm: Norm) -> Result<(usize, f64)> {
    pool.check_grid(x)?;
    norm.validate()?;
    Ok(nearest_unchecked(&pool.paths, x.values(), norm))
}

/// Monte Carlo estimate of `P(‖x − X̃‖ ≤ ε | x)` with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallBallEstimate {
    pub hits: u64,
    pub trials: u64,
    pub probability: f64,
    pub lower: f64,
    pub upper: f64,
}

impl SmallBallEstimate {
    /// `−log P̂`; infinite when no draw landed in the ball.
    pub fn neg_log(&self) -> f64 {
        -self.probability.ln()
    }
}

pub fn smallball_conditional(
    x: &SampledPath,
    eps: f64,
    mc: u64,
    rng: &RngSpec,
    exec: Execution,
) -> Result<SmallBallEstimate> {
    if mc < 100 {
        return Err(Error::domain("small-ball estimates need at least 100 draws"));
    }
    if !(eps >= 0.0) {
        return Err(Error::domain("radius must be nonnegative"));
    }
    let sampler = FbmSampler::new(x.hurst(), x.horizon(), x.n_per_unit())?;
    // chunks keep the per-task overhead low while staying deterministic
    const CHUNK: u64 = 4096;
    let chunks = mc.div_ceil(CHUNK);
    let hits: u64 = par::map_indexed(exec, chunks as usize, |c| {
        let mut r = rng.child(c as u64).rng();
        let lo = c as u64 * CHUNK;
        let hi = (lo + CHUNK).min(mc);
        (lo..hi)
            .filter(|_| {
                let y = sampler.sample_with(&mut r);
                Norm::Sup
                    .distance_within(y.values(), x.values(), eps)
                    .is_some()
            })
            .count() as u64
    })
    .into_iter()
    .sum();
    let (lower, upper) = wilson_interval(hits, mc, 1.96);
    Ok(SmallBallEstimate {
        hits,
        trials: mc,
        probability: hits as f64 / mc as f64,
        lower,
        upper,
    })
}
