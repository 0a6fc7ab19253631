//! Distortion-rate function of a Gaussian process in `L²[0,1]` by reverse water-filling over
//! its Karhunen–Loève eigenvalues.
//!
//! At water level `θ` each eigen-direction contributes distortion `min(λ_k, θ)` and rate
//! `½ log⁺(λ_k/θ)`; `D(r) = (Σ min(λ_k, θ))^{1/2}` where `θ` spends exactly `r` nats.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_paths::{check_hurst, covariance_unchecked};

/// Eigenvalues below this are treated as numerical zeros and dropped.
pub const EIGENVALUE_FLOOR: f64 = 1e-14;

/// Largest matrix size for [`covariance_spectrum`].
pub const MAX_DISCRETIZATION: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SpectrumSource {
    ExactBm { terms: usize },
    /// Midpoint quadrature of the FBM kernel.
    Discretized { hurst: f64, n: usize },
    /// Left-endpoint grid `t_i = i/n`, matching the step-path `L²` distance on that grid.
    Grid { hurst: f64, n: usize },
}

/// Nonincreasing positive eigenvalues, plus an optional tail of further eigenvalues known only
/// through their sum and an upper bound on each.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    tail_mass: f64,
    tail_max: f64,
    source: SpectrumSource,
    // prefix sums of ln λ and suffix sums of λ, for closed-form water levels
    log_prefix: Vec<f64>,
    suffix: Vec<f64>,
}

impl Spectrum {
    pub fn new(
        mut eigenvalues: Vec<f64>,
        tail_mass: f64,
        tail_max: f64,
        source: SpectrumSource,
    ) -> Result<Self> {
        eigenvalues.retain(|&l| l >= EIGENVALUE_FLOOR);
        if eigenvalues.is_empty() {
            return Err(Error::domain("spectrum has no eigenvalue above the floor"));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        if !(tail_mass >= 0.0 && tail_max >= 0.0) {
            return Err(Error::domain("tail mass and bound must be nonnegative"));
        }
        if tail_max > eigenvalues[eigenvalues.len() - 1] {
            return Err(Error::domain("tail eigenvalues exceed the listed ones"));
        }
        let mut log_prefix = Vec::with_capacity(eigenvalues.len() + 1);
        log_prefix.push(0.0);
        let mut acc = 0.0;
        for l in &eigenvalues {
            acc += l.ln();
            log_prefix.push(acc);
        }
        let mut suffix = vec![0.0; eigenvalues.len() + 1];
        for k in (0..eigenvalues.len()).rev() {
            suffix[k] = suffix[k + 1] + eigenvalues[k];
        }
        Ok(Self {
            eigenvalues,
            tail_mass,
            tail_max,
            source,
            log_prefix,
            suffix,
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn source(&self) -> SpectrumSource {
        self.source
    }

    /// `Σ λ_k`, tail included.
    pub fn trace(&self) -> f64 {
        self.suffix[0] + self.tail_mass
    }

    /// Rate needed to push the water level down to the `(m+1)`-th eigenvalue.
    fn rate_to_level_index(&self, m: usize) -> f64 {
        let next = self.eigenvalues.get(m).copied().unwrap_or(self.tail_max);
        if next <= 0.0 {
            return f64::INFINITY;
        }
        0.5 * (self.log_prefix[m] - m as f64 * next.ln())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["k", "lambda"]).map_err(|e| csv_error(path, e))?;
        for (k, l) in self.eigenvalues.iter().enumerate() {
            w.write_record([(k + 1).to_string(), format!("{l:e}")])
                .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Trigamma `ψ'(x)` for `x > 0`: recurrence up to `x ≥ 20`, then the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + inv2 / 2.0
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

/// Brownian motion: `λ_k = 1/(π²(k−½)²)` for `k ≤ terms`, with the remainder
/// `Σ_{k>terms} λ_k = ψ'(terms+½)/π²` as tail.
pub fn exact_bm_spectrum(terms: usize) -> Result<Spectrum> {
    if terms == 0 {
        return Err(Error::domain("need at least one eigenvalue"));
    }
    let pi2 = std::f64::consts::PI.powi(2);
    let lambda = |k: usize| 1.0 / (pi2 * (k as f64 - 0.5).powi(2));
    let eigenvalues: Vec<f64> = (1..=terms).map(lambda).collect();
    let tail = trigamma(terms as f64 + 0.5) / pi2;
    Spectrum::new(
        eigenvalues,
        tail,
        lambda(terms + 1),
        SpectrumSource::ExactBm { terms },
    )
}

fn kernel_spectrum(hurst: f64, n: usize, times: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    check_hurst(hurst)?;
    if n == 0 || n > MAX_DISCRETIZATION {
        return Err(Error::domain(format!(
            "discretization size {n} outside 1..={MAX_DISCRETIZATION}"
        )));
    }
    let scale = 1.0 / n as f64;
    let t: Vec<f64> = (0..n).map(times).collect();
    let m = DMatrix::from_fn(n, n, |i, j| covariance_unchecked(t[i], t[j], hurst) * scale);
    let eig = m.symmetric_eigenvalues();
    if eig.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numerical("eigensolve produced non-finite values".into()));
    }
    Ok(eig.iter().copied().collect())
}

/// Eigenvalues of `(1/n) K(t_i, t_j)` on the midpoint grid `t_i = (i+½)/n`.
pub fn covariance_spectrum(hurst: f64, n: usize) -> Result<Spectrum> {
    let eig = kernel_spectrum(hurst, n, |i| (i as f64 + 0.5) / n as f64)?;
    Spectrum::new(eig, 0.0, 0.0, SpectrumSource::Discretized { hurst, n })
}

/// Eigenvalues of `(1/n) K(t_i, t_j)` on `t_i = i/n`, `i < n`: the exact spectrum of a path on
/// an `n`-interval grid under the step-path `L²` distance.
pub fn grid_spectrum(hurst: f64, n: usize) -> Result<Spectrum> {
    let eig = kernel_spectrum(hurst, n, |i| i as f64 / n as f64)?;
    Spectrum::new(eig, 0.0, 0.0, SpectrumSource::Grid { hurst, n })
}

/// Water level and the number of eigenvalues above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterLevel {
    pub theta: f64,
    pub active: usize,
    pub distortion: f64,
}

/// Reverse water-filling at rate `r` nats.
///
/// With `m` active eigenvalues the level is `θ = exp((Σ_{k≤m} ln λ_k − 2r)/m)`; `m` is the
/// smallest count whose saturation rate reaches `r`, found by bisection over `m`.
pub fn waterfill_detailed(spec: &Spectrum, r: f64) -> Result<WaterLevel> {
    if !(r >= 0.0) || r.is_infinite() {
        return Err(Error::domain(format!("rate must be finite and nonnegative, got {r}")));
    }
    if r == 0.0 {
        return Ok(WaterLevel {
            theta: spec.eigenvalues[0],
            active: 0,
            distortion: spec.trace().sqrt(),
        });
    }
    let len = spec.eigenvalues.len();
    if spec.rate_to_level_index(len) < r && spec.tail_mass > 0.0 {
        return Err(Error::Numerical(format!(
            "rate {r} needs more than the {len} listed eigenvalues"
        )));
    }
    // smallest m in 1..=len with rate_to_level_index(m) >= r
    let (mut lo, mut hi) = (1, len);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if spec.rate_to_level_index(mid) >= r {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let m = lo;
    let theta = ((spec.log_prefix[m] - 2.0 * r) / m as f64).exp();
    let d2 = m as f64 * theta + spec.suffix[m] + spec.tail_mass;
    Ok(WaterLevel {
        theta,
        active: m,
        distortion: d2.sqrt(),
    })
}

/// `D(r|2)`.
pub fn waterfill(spec: &Spectrum, r: f64) -> Result<f64> {
    Ok(waterfill_detailed(spec, r)?.distortion)
}

/// `½ Σ log⁺(λ_k/θ)`; the tail is assumed to lie below `θ`.
pub fn rate_at_level(spec: &Spectrum, theta: f64) -> f64 {
    0.5 * spec
        .eigenvalues
        .iter()
        .take_while(|&&l| l > theta)
        .map(|l| (l / theta).ln())
        .sum::<f64>()
}

/// Point of the normalised curve `r ↦ r^H D(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r: f64,
    #[serde(rename = "D")]
    pub distortion: f64,
    #[serde(rename = "rH_D")]
    pub normalized: f64,
}

pub fn kappa_rd_estimate(spec: &Spectrum, hurst: f64, rates: &[f64]) -> Result<Vec<CurvePoint>> {
    if rates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("rates must be increasing"));
    }
    rates
        .iter()
        .map(|&r| {
            let d = waterfill(spec, r)?;
            Ok(CurvePoint {
                r,
                distortion: d,
                normalized: r.powf(hurst) * d,
            })
        })
        .collect()
}

/// Least-squares slope of `ln D` against `ln r`.
pub fn loglog_slope(points: &[CurvePoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.r.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.distortion.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `n` log-spaced values from `a` to `b`.
pub fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// CSV text with columns `r,D,rH_D`.
pub fn curve_to_csv(points: &[CurvePoint]) -> Result<String> {
    let to_err = |e: csv::Error| Error::Numerical(e.to_string());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["r", "D", "rH_D"]).map_err(to_err)?;
    for p in points {
        w.serialize(p).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}

pub fn write_curve_csv(points: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, curve_to_csv(points)?).map_err(|e| Error::io(path, e))
}
