//! FBM paths sampled on uniform grids.
//!
//! A [`SampledPath`] on `[0, horizon]` stores `horizon * n_per_unit + 1` values at
//! `t_k = k / n_per_unit`. Step paths are right-continuous piecewise-constant reconstructions;
//! their last value equals the left limit at the right endpoint.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Circulant embeddings with an eigenvalue below this are rejected.
pub const EMBEDDING_TOLERANCE: f64 = -1e-9;

/// Largest number of increments the dense Cholesky fallback will factorise.
pub const CHOLESKY_CAP: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Sampled,
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    hurst: f64,
    horizon: usize,
    n_per_unit: usize,
    values: Vec<f64>,
    kind: PathKind,
}

pub(crate) fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("Hurst index {hurst} outside (0, 1)")))
    }
}

impl SampledPath {
    pub fn new(
        hurst: f64,
        horizon: usize,
        n_per_unit: usize,
        values: Vec<f64>,
        kind: PathKind,
    ) -> Result<Self> {
        check_hurst(hurst)?;
        if horizon == 0 || n_per_unit == 0 {
            return Err(Error::domain("horizon and n_per_unit must be positive"));
        }
        let expected = horizon * n_per_unit + 1;
        if values.len() != expected {
            return Err(Error::domain(format!(
                "expected {expected} values for horizon {horizon} at {n_per_unit} points per unit, got {}",
                values.len()
            )));
        }
        Ok(Self {
            hurst,
            horizon,
            n_per_unit,
            values,
            kind,
        })
    }

    /// A path given by a function of time.
    pub fn from_fn(
        hurst: f64,
        horizon: usize,
        n_per_unit: usize,
        kind: PathKind,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let len = horizon * n_per_unit + 1;
        let values = (0..len).map(|k| f(k as f64 / n_per_unit as f64)).collect();
        Self::new(hurst, horizon, n_per_unit, values, kind)
    }

    pub fn constant(hurst: f64, horizon: usize, n_per_unit: usize, c: f64) -> Result<Self> {
        Self::from_fn(hurst, horizon, n_per_unit, PathKind::Step, |_| c)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_per_unit(&self) -> usize {
        self.n_per_unit
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    /// Number of grid intervals, `horizon * n_per_unit`.
    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.n_per_unit as f64
    }

    /// Step reconstruction: the value at the right endpoint is replaced by the left limit.
    pub fn to_step(&self) -> SampledPath {
        let mut values = self.values.clone();
        let n = values.len();
        values[n - 1] = values[n - 2];
        SampledPath {
            values,
            kind: PathKind::Step,
            ..*self
        }
    }

    pub fn same_grid(&self, other: &SampledPath) -> bool {
        self.horizon == other.horizon
            && self.n_per_unit == other.n_per_unit
            && self.values.len() == other.values.len()
    }

    pub fn check_same_grid(&self, other: &SampledPath) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::grid(format!(
                "[0,{}] at {}/unit vs [0,{}] at {}/unit",
                self.horizon, self.n_per_unit, other.horizon, other.n_per_unit
            )))
        }
    }
}

/// Grid metadata without the values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledPathShape {
    pub hurst: f64,
    pub horizon: usize,
    pub n_per_unit: usize,
}

impl fmt::Display for SampledPathShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "H={} on [0,{}] at {}/unit",
            self.hurst, self.horizon, self.n_per_unit
        )
    }
}

impl SampledPath {
    pub fn shape(&self) -> SampledPathShape {
        SampledPathShape {
            hurst: self.hurst,
            horizon: self.horizon,
            n_per_unit: self.n_per_unit,
        }
    }
}

/// Covariance kernel of FBM, `½ (t^{2H} + s^{2H} − |t − s|^{2H})`.
pub fn fbm_covariance(t: f64, s: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if t < 0.0 || s < 0.0 {
        return Err(Error::domain("covariance is defined for t, s >= 0"));
    }
    Ok(covariance_unchecked(t, s, hurst))
}

pub(crate) fn covariance_unchecked(t: f64, s: f64, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Seed for one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub root_seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RngSpec {
    pub fn new(root_seed: u64) -> Self {
        Self {
            root_seed,
            stream_id: 0,
        }
    }

    /// A sub-stream labelled by `label`; distinct labels give distinct streams.
    pub fn child(&self, label: u64) -> RngSpec {
        RngSpec {
            root_seed: self.root_seed,
            stream_id: splitmix64(splitmix64(self.stream_id) ^ label),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerMethod {
    /// Circulant embedding first, Cholesky if the embedding is not nonnegative definite.
    Auto,
    Cholesky,
}

enum Backend {
    Circulant {
        sqrt_eigenvalues: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky {
        lower: DMatrix<f64>,
    },
}

/// Exact sampler for FBM on a fixed grid. Building it does all the per-grid work, so sampling
/// many paths on the same grid only costs one FFT each.
pub struct FbmSampler {
    hurst: f64,
    horizon: usize,
    n_per_unit: usize,
    step_scale: f64,
    backend: Backend,
}

impl fmt::Debug for FbmSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbmSampler")
            .field("hurst", &self.hurst)
            .field("horizon", &self.horizon)
            .field("n_per_unit", &self.n_per_unit)
            .field("circulant", &self.uses_circulant())
            .finish()
    }
}

impl FbmSampler {
    pub fn new(hurst: f64, horizon: usize, n_per_unit: usize) -> Result<Self> {
        Self::with_method(hurst, horizon, n_per_unit, SamplerMethod::Auto)
    }

    pub fn with_method(
        hurst: f64,
        horizon: usize,
        n_per_unit: usize,
        method: SamplerMethod,
    ) -> Result<Self> {
        check_hurst(hurst)?;
        if horizon == 0 || n_per_unit == 0 {
            return Err(Error::domain("horizon and n_per_unit must be positive"));
        }
        let n = horizon * n_per_unit;
        let backend = match method {
            SamplerMethod::Auto => match circulant_backend(hurst, n) {
                Some(b) => b,
                None => cholesky_backend(hurst, n)?,
            },
            SamplerMethod::Cholesky => cholesky_backend(hurst, n)?,
        };
        Ok(Self {
            hurst,
            horizon,
            n_per_unit,
            step_scale: (1.0 / n_per_unit as f64).powf(hurst),
            backend,
        })
    }

    pub fn uses_circulant(&self) -> bool {
        matches!(self.backend, Backend::Circulant { .. })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_per_unit(&self) -> usize {
        self.n_per_unit
    }

    /// One FBM path; identical `RngSpec`s give identical paths.
    pub fn sample(&self, spec: &RngSpec) -> SampledPath {
        let mut rng = spec.rng();
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> SampledPath {
        let n = self.horizon * self.n_per_unit;
        let increments: Vec<f64> = match &self.backend {
            Backend::Circulant {
                sqrt_eigenvalues,
                fft,
            } => {
                let mut buf: Vec<Complex<f64>> = sqrt_eigenvalues
                    .iter()
                    .map(|&a| {
                        let re: f64 = StandardNormal.sample(rng);
                        let im: f64 = StandardNormal.sample(rng);
                        Complex::new(a * re, a * im)
                    })
                    .collect();
                fft.process(&mut buf);
                buf[..n].iter().map(|c| c.re).collect()
            }
            Backend::Cholesky { lower } => {
                let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
                let z = nalgebra::DVector::from_vec(z);
                (lower * z).iter().copied().collect()
            }
        };
        let mut values = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for dx in increments {
            acc += dx * self.step_scale;
            values.push(acc);
        }
        SampledPath {
            hurst: self.hurst,
            horizon: self.horizon,
            n_per_unit: self.n_per_unit,
            values,
            kind: PathKind::Sampled,
        }
    }
}

fn circulant_backend(hurst: f64, n: usize) -> Option<Backend> {
    // first row of the 2n-circulant embedding of the n×n fGn Toeplitz matrix
    let size = 2 * n;
    let mut row: Vec<Complex<f64>> = (0..size)
        .map(|j| {
            let lag = if j <= n { j } else { size - j };
            Complex::new(fgn_autocovariance(lag, hurst), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut row);
    let mut sqrt_eigenvalues = Vec::with_capacity(size);
    for c in &row {
        let lambda = c.re;
        if lambda < EMBEDDING_TOLERANCE {
            return None;
        }
        sqrt_eigenvalues.push((lambda.max(0.0) / size as f64).sqrt());
    }
    Some(Backend::Circulant {
        sqrt_eigenvalues,
        fft: planner.plan_fft_forward(size),
    })
}

fn cholesky_backend(hurst: f64, n: usize) -> Result<Backend> {
    if n > CHOLESKY_CAP {
        return Err(Error::Numerical(format!(
            "Cholesky fallback capped at {CHOLESKY_CAP} increments, got {n}"
        )));
    }
    let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocovariance(i.abs_diff(j), hurst));
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Numerical("fGn covariance is not positive definite".into()))?;
    Ok(Backend::Cholesky { lower: chol.l() })
}

/// One FBM path on `[0, horizon]`.
pub fn sample_fbm(
    hurst: f64,
    horizon: usize,
    n_per_unit: usize,
    rng: &RngSpec,
) -> Result<SampledPath> {
    Ok(FbmSampler::new(hurst, horizon, n_per_unit)?.sample(rng))
}

/// `α_n f (s) = n^H f(s/n)`: maps a path on `[0,1]` with `P` points per unit to a path on
/// `[0,n]` with `P/n` points per unit by relabelling grid points. `P` must be divisible by `n`.
pub fn scale_alpha(f: &SampledPath, n: usize) -> Result<SampledPath> {
    if n == 0 {
        return Err(Error::domain("scaling factor must be positive"));
    }
    if f.horizon != 1 {
        return Err(Error::grid("α_n expects a path on [0,1]"));
    }
    if !f.n_per_unit.is_multiple_of(n) {
        return Err(Error::grid(format!(
            "{} points per unit cannot be split into {n} blocks",
            f.n_per_unit
        )));
    }
    let c = (n as f64).powf(f.hurst);
    Ok(SampledPath {
        hurst: f.hurst,
        horizon: n,
        n_per_unit: f.n_per_unit / n,
        values: f.values.iter().map(|v| v * c).collect(),
        kind: f.kind,
    })
}

/// Inverse of [`scale_alpha`]: a path on `[0,n]` back to `[0,1]`.
pub fn scale_alpha_inv(g: &SampledPath, n: usize) -> Result<SampledPath> {
    if n == 0 || g.horizon != n {
        return Err(Error::grid(format!(
            "α_n⁻¹ with n={n} expects a path on [0,{n}], got [0,{}]",
            g.horizon
        )));
    }
    let c = (n as f64).powf(g.hurst);
    Ok(SampledPath {
        hurst: g.hurst,
        horizon: 1,
        n_per_unit: g.n_per_unit * n,
        values: g.values.iter().map(|v| v / c).collect(),
        kind: g.kind,
    })
}

/// `w^{(n)}_t = w_{t+n} − w_n` for `t ∈ [0,1]`.
pub fn shift_increment(w: &SampledPath, n: usize) -> Result<SampledPath> {
    if n + 1 > w.horizon {
        return Err(Error::domain(format!(
            "block {n} does not fit in [0,{}]",
            w.horizon
        )));
    }
    let p = w.n_per_unit;
    let base = w.values[n * p];
    Ok(SampledPath {
        hurst: w.hurst,
        horizon: 1,
        n_per_unit: p,
        values: w.values[n * p..=(n + 1) * p]
            .iter()
            .map(|v| v - base)
            .collect(),
        kind: w.kind,
    })
}

/// Distortion measure on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    /// Maximum over all grid points.
    Sup,
    /// `(1/N Σ_{k<N} |f_k − g_k|^p)^{1/p}` over the `N` grid intervals: the exact `L^p` norm of
    /// step functions, normalised by the horizon.
    Lp(f64),
}

impl Norm {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Norm::Sup => Ok(()),
            Norm::Lp(p) if p >= 1.0 && p.is_finite() => Ok(()),
            Norm::Lp(p) => Err(Error::domain(format!("L^p norm needs p >= 1, got {p}"))),
        }
    }

    pub fn distance(&self, f: &SampledPath, g: &SampledPath) -> Result<f64> {
        f.check_same_grid(g)?;
        self.validate()?;
        Ok(self.distance_values(&f.values, &g.values))
    }

    pub(crate) fn distance_values(&self, f: &[f64], g: &[f64]) -> f64 {
        match *self {
            Norm::Sup => sup_values(f, g),
            Norm::Lp(p) => {
                let n = f.len() - 1;
                (lp_sum(&f[..n], &g[..n], p, f64::INFINITY) / n as f64).powf(1.0 / p)
            }
        }
    }

    /// Distance if it is at most `bound` (partial sums are abandoned once they exceed it).
    pub(crate) fn distance_within(&self, f: &[f64], g: &[f64], bound: f64) -> Option<f64> {
        match *self {
            Norm::Sup => {
                let mut m = 0.0f64;
                for (a, b) in f.iter().zip(g) {
                    let d = (a - b).abs();
                    if d > bound {
                        return None;
                    }
                    m = m.max(d);
                }
                Some(m)
            }
            Norm::Lp(_) => {
                let d = self.distance_values(f, g);
                (d <= bound).then_some(d)
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Norm::Sup => "sup",
            Norm::Lp(_) => "lp",
        }
    }

    pub fn exponent(&self) -> Option<f64> {
        match *self {
            Norm::Sup => None,
            Norm::Lp(p) => Some(p),
        }
    }
}

fn sup_values(f: &[f64], g: &[f64]) -> f64 {
    f.iter()
        .zip(g)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// `Σ |f_k − g_k|^p`, stopping early (returning something `> limit`) once the sum passes `limit`.
pub(crate) fn lp_sum(f: &[f64], g: &[f64], p: f64, limit: f64) -> f64 {
    let mut s = 0.0;
    for (a, b) in f.iter().zip(g) {
        let d = (a - b).abs();
        s += if p == 2.0 {
            d * d
        } else if p == 1.0 {
            d
        } else {
            d.powf(p)
        };
        if s > limit {
            return s;
        }
    }
    s
}

pub fn sup_distance(f: &SampledPath, g: &SampledPath) -> Result<f64> {
    Norm::Sup.distance(f, g)
}

pub fn lp_distance(f: &SampledPath, g: &SampledPath, p: f64) -> Result<f64> {
    Norm::Lp(p).distance(f, g)
}
