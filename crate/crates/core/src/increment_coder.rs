//! Partial-sum coder on the lattice `2εℤ` and the block + increment `L^p` coder.
//!
//! A real sequence `s_1, s_2, …` is coded by integers `k_i` such that `ŝ_i = 2ε Σ_{j≤i} k_j`
//! stays within `ε` of `s_i`. Index `k` costs `−log p_k` with `p_k = e^{−c}/(|k|+1)²`.
//!
//! The `L^p` coder splits a path on `[0,n]` into `X¹_t = X_t − X_{⌊t⌋}` (unit blocks starting
//! at zero) and `X²_t = X_{⌊t⌋}` (values at integers), codes blocks against a codebook and the
//! integer values with the partial-sum coder, and adds the two reconstructions.

use serde::{Deserialize, Serialize};

use crate::codebook::{nearest_unchecked, CodeLength, Codebook};
use crate::error::{Error, Result};
use crate::grid_paths::{scale_alpha, scale_alpha_inv, shift_increment, Norm, PathKind, SampledPath};

/// `c = log Σ_{k∈ℤ} (|k|+1)^{−2} = log(π²/3 − 1)`.
pub fn increment_weight_constant() -> f64 {
    (std::f64::consts::PI.powi(2) / 3.0 - 1.0).ln()
}

/// `p_k = e^{−c}/(|k|+1)²`.
pub fn increment_weight(k: i64) -> f64 {
    let a = k.unsigned_abs() as f64 + 1.0;
    (-increment_weight_constant()).exp() / (a * a)
}

/// `−log p_k = 2 log(|k|+1) + c`.
pub fn increment_code_length(k: i64) -> CodeLength {
    CodeLength {
        nats: 2.0 * (k.unsigned_abs() as f64 + 1.0).ln() + increment_weight_constant(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementCode {
    /// `k_i` with `ξ_i = 2ε k_i`.
    pub offsets: Vec<i64>,
    pub eps: f64,
    pub code_length: CodeLength,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("ε must be positive, got {eps}")))
    }
}

/// Closest lattice index to `s` on `2εℤ`, the smaller one on ties.
fn nearest_lattice(s: f64, eps: f64) -> i64 {
    let step = 2.0 * eps;
    let guess = (s / step - 0.5).ceil() as i64;
    let mut best = guess - 1;
    let mut best_err = (s - step * best as f64).abs();
    for k in [guess, guess + 1] {
        let err = (s - step * k as f64).abs();
        if err < best_err {
            best = k;
            best_err = err;
        }
    }
    best
}

/// Codes `s_1, …, s_n` starting from `ŝ_0 = 0`.
pub fn encode_sums(s: &[f64], eps: f64) -> Result<IncrementCode> {
    check_eps(eps)?;
    if let Some(x) = s.iter().find(|x| !x.is_finite()) {
        return Err(Error::domain(format!("non-finite partial sum {x}")));
    }
    let mut level = 0i64;
    let mut offsets = Vec::with_capacity(s.len());
    let mut code_length = CodeLength::default();
    for &x in s {
        let next = nearest_lattice(x, eps);
        let k = next - level;
        offsets.push(k);
        code_length += increment_code_length(k);
        level = next;
    }
    Ok(IncrementCode {
        offsets,
        eps,
        code_length,
    })
}

/// `ŝ_i = 2ε Σ_{j≤i} k_j`.
pub fn decode_sums(code: &IncrementCode) -> Vec<f64> {
    let mut level = 0i64;
    code.offsets
        .iter()
        .map(|k| {
            level += k;
            2.0 * code.eps * level as f64
        })
        .collect()
}

/// `(X¹, X²)` with `X¹_t = X_t − X_{⌊t⌋}` and `X²_t = X_{⌊t⌋}`. `X²` is a step path, so at the
/// right endpoint it keeps its left limit `X_{n−1}` and `X¹_n = X_n − X_{n−1}`.
pub fn decompose(w: &SampledPath) -> Result<(SampledPath, SampledPath)> {
    let p = w.n_per_unit();
    let v = w.values();
    let last = v.len() - 1;
    let x2: Vec<f64> = (0..v.len()).map(|j| v[(j.min(last - 1) / p) * p]).collect();
    let x1: Vec<f64> = v.iter().zip(&x2).map(|(a, b)| a - b).collect();
    Ok((
        SampledPath::new(w.hurst(), w.horizon(), p, x1, w.kind())?,
        SampledPath::new(w.hurst(), w.horizon(), p, x2, PathKind::Step)?,
    ))
}

/// Outcome of the block + increment coder.
#[derive(Debug, Clone, PartialEq)]
pub struct LpEncoding {
    pub reconstruction: SampledPath,
    pub code_length: CodeLength,
    /// `L^p` distance between the path and the reconstruction.
    pub distortion: f64,
    /// `L^p` distance between `X¹` and its blockwise reconstruction.
    pub block_distortion: f64,
    /// `L^p` distance between `X²` and its lattice reconstruction (at most `ε`).
    pub increment_distortion: f64,
    pub block_indices: Vec<usize>,
    pub increments: IncrementCode,
}

/// Codes `w` on `[0,n]`: each unit block against `block_cb` (nearest in `L^p`), the values
/// `w_1, …, w_{n−1}` with [`encode_sums`] at accuracy `ε`.
pub fn encode_lp(w: &SampledPath, block_cb: &Codebook, eps: f64, p: f64) -> Result<LpEncoding> {
    check_eps(eps)?;
    let norm = Norm::Lp(p);
    norm.validate()?;
    let per = w.n_per_unit();
    let entry0 = block_cb.entry(0);
    if entry0.horizon() != 1 || entry0.n_per_unit() != per {
        return Err(Error::grid(format!(
            "block codebook is {}, path has {per} points per unit",
            entry0.shape()
        )));
    }
    let n = w.horizon();
    let (x1, x2) = decompose(w)?;
    let sums: Vec<f64> = (1..n).map(|i| w.values()[i * per]).collect();
    let increments = encode_sums(&sums, eps)?;
    let levels = decode_sums(&increments);

    let mut code_length = increments.code_length;
    let mut x1_hat = vec![0.0; n * per + 1];
    let mut x2_hat = vec![0.0; n * per + 1];
    let mut block_indices = Vec::with_capacity(n);
    for i in 0..n {
        let block = shift_increment(w, i)?;
        let (idx, _) = nearest_unchecked(block_cb.entries(), block.values(), norm);
        block_indices.push(idx);
        code_length += block_cb.code_length(idx)?;
        let entry = block_cb.entry(idx).values();
        let level = if i == 0 { 0.0 } else { levels[i - 1] };
        for k in 0..per {
            x1_hat[i * per + k] = entry[k];
            x2_hat[i * per + k] = level;
        }
    }
    x1_hat[n * per] = x1_hat[n * per - 1];
    x2_hat[n * per] = x2_hat[n * per - 1];
    let recon: Vec<f64> = x1_hat.iter().zip(&x2_hat).map(|(a, b)| a + b).collect();

    let block_distortion = norm.distance_values(x1.values(), &x1_hat);
    let increment_distortion = norm.distance_values(x2.values(), &x2_hat);
    let distortion = norm.distance_values(w.values(), &recon);
    Ok(LpEncoding {
        reconstruction: SampledPath::new(w.hurst(), n, per, recon, PathKind::Step)?,
        code_length,
        distortion,
        block_distortion,
        increment_distortion,
        block_indices,
        increments,
    })
}

/// Codes `w` on `[0,1]` by scaling it to `[0,n]`, running [`encode_lp`] and scaling back; all
/// reported distortions refer to `[0,1]` (`n^{−H}` times their values on `[0,n]`).
pub fn encode_lp_unit(
    w: &SampledPath,
    n: usize,
    block_cb: &Codebook,
    eps: f64,
    p: f64,
) -> Result<LpEncoding> {
    let scaled = scale_alpha(w, n)?;
    let enc = encode_lp(&scaled, block_cb, eps, p)?;
    let factor = (n as f64).powf(w.hurst());
    let reconstruction = scale_alpha_inv(&enc.reconstruction, n)?;
    let distortion = Norm::Lp(p).distance(w, &reconstruction)?;
    Ok(LpEncoding {
        reconstruction,
        distortion,
        block_distortion: enc.block_distortion / factor,
        increment_distortion: enc.increment_distortion / factor,
        ..enc
    })
}

/// `E[log(|Z|/2ε + 2)]` for standard normal `Z`, by composite Simpson quadrature on `[0, 12]`.
pub fn expected_log_increment(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let steps = 4000;
    let upper = 12.0;
    let h = upper / steps as f64;
    let f = |z: f64| {
        (z / (2.0 * eps) + 2.0).ln() * (-0.5 * z * z).exp() * (2.0 / std::f64::consts::PI).sqrt()
    };
    let mut s = f(0.0) + f(upper);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    Ok(s * h / 3.0)
}
