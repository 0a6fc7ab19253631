//! Small statistics helpers for Monte Carlo checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean (sample standard deviation / √n).
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

/// `(E|x|^q)^{1/q}`; `q = ∞` gives the maximum.
pub fn moment_norm(xs: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        xs.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    } else {
        (xs.iter().map(|x| x.abs().powf(q)).sum::<f64>() / xs.len() as f64).powf(1.0 / q)
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Wilson score interval for a binomial proportion at `z` standard deviations.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Pearson chi-square test of observations in `{1, 2, …}` against `Geometric(p)`.
///
/// Cells `1..K-1` are single values and the last cell collects the tail, with `K` chosen so
/// every expected count is at least 5. `fitted` is the number of parameters estimated from the
/// same observations (0 or 1) and is subtracted from the degrees of freedom. Returns
/// `(statistic, degrees of freedom, p-value)`.
pub fn geometric_gof(observations: &[u64], p: f64, fitted: usize) -> Result<(f64, usize, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("geometric parameter {p} outside (0,1)")));
    }
    let n = observations.len() as f64;
    let pmf = |k: u64| p * (1.0 - p).powi(k as i32 - 1);
    let tail = |k: u64| (1.0 - p).powi(k as i32 - 1);
    // largest K with expected tail count >= 5 and cell K-1 count >= 5
    let mut cells = 1u64;
    while n * pmf(cells) >= 5.0 && n * tail(cells + 1) >= 5.0 {
        cells += 1;
    }
    if (cells as usize) < 2 + fitted {
        return Err(Error::domain("too few observations for a goodness-of-fit test"));
    }
    let mut counts = vec![0u64; cells as usize];
    for &t in observations {
        if t == 0 {
            return Err(Error::domain("geometric observations start at 1"));
        }
        counts[(t.min(cells) - 1) as usize] += 1;
    }
    let mut stat = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        let k = i as u64 + 1;
        let expected = if k == cells { n * tail(k) } else { n * pmf(k) };
        stat += (c as f64 - expected).powi(2) / expected;
    }
    let dof = cells as usize - 1 - fitted;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((stat, dof, 1.0 - chi.cdf(stat)))
}
