//! Codebooks of reconstruction paths and code-length accounting.
//!
//! Code lengths are `−log p` in nats; no bitstream is produced.

use std::fs;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid_paths::{Norm, PathKind, SampledPath};

/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Realised code length `−log p` in nats.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct CodeLength {
    pub nats: f64,
}

impl CodeLength {
    pub fn from_probability(p: f64) -> Self {
        Self { nats: -p.ln() }
    }
}

impl Add for CodeLength {
    type Output = CodeLength;
    fn add(self, rhs: Self) -> Self {
        CodeLength {
            nats: self.nats + rhs.nats,
        }
    }
}

impl AddAssign for CodeLength {
    fn add_assign(&mut self, rhs: Self) {
        self.nats += rhs.nats;
    }
}

/// Checks that `weights` is a probability vector with positive entries.
pub fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::domain("empty weight vector"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::domain(format!("weight {w} is not positive")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::domain(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Shannon entropy in nats; zero weights contribute nothing.
pub fn entropy(weights: &[f64]) -> f64 {
    -weights
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `−log weights[index]`.
pub fn code_length(weights: &[f64], index: usize) -> Result<CodeLength> {
    match weights.get(index) {
        None => Err(Error::domain(format!(
            "index {index} out of range for {} weights",
            weights.len()
        ))),
        Some(&p) if p <= 0.0 => Err(Error::ZeroWeight(index)),
        Some(&p) => Ok(CodeLength::from_probability(p)),
    }
}

/// `E_Q[−log P]`.
pub fn cross_entropy(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(&qi, _)| qi > 0.0)
        .map(|(&qi, &pi)| -qi * pi.ln())
        .sum()
}

/// Normalises `counts + pseudo_count` into weights.
pub fn smoothed_weights(counts: &[usize], pseudo_count: f64) -> Vec<f64> {
    let total: f64 = counts.iter().map(|&c| c as f64 + pseudo_count).sum();
    counts
        .iter()
        .map(|&c| (c as f64 + pseudo_count) / total)
        .collect()
}

/// A finite list of reconstruction paths on one grid, optionally with probability weights.
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: Vec<SampledPath>,
    weights: Option<Vec<f64>>,
}

impl Codebook {
    pub fn new(entries: Vec<SampledPath>, weights: Option<Vec<f64>>) -> Result<Self> {
        let first = entries.first().ok_or(Error::EmptyCodebook)?;
        for e in &entries[1..] {
            first.check_same_grid(e)?;
        }
        if let Some(w) = &weights {
            if w.len() != entries.len() {
                return Err(Error::domain(format!(
                    "{} weights for {} entries",
                    w.len(),
                    entries.len()
                )));
            }
            validate_weights(w)?;
        }
        Ok(Self { entries, weights })
    }

    pub fn uniform(entries: Vec<SampledPath>) -> Result<Self> {
        let n = entries.len();
        if n == 0 {
            return Err(Error::EmptyCodebook);
        }
        Self::new(entries, Some(vec![1.0 / n as f64; n]))
    }

    pub fn entries(&self) -> &[SampledPath] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> &SampledPath {
        &self.entries[index]
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn with_weights(self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.entries, Some(weights))
    }

    /// Entropy of the weights, or `log len` when there are none.
    pub fn entropy(&self) -> f64 {
        match &self.weights {
            Some(w) => entropy(w),
            None => (self.len() as f64).ln(),
        }
    }

    /// `−log p_index`, or `log len` for an unweighted codebook.
    pub fn code_length(&self, index: usize) -> Result<CodeLength> {
        match &self.weights {
            Some(w) => code_length(w, index),
            None if index < self.len() => Ok(CodeLength {
                nats: (self.len() as f64).ln(),
            }),
            None => Err(Error::domain(format!("index {index} out of range"))),
        }
    }

    pub fn log_cardinality(&self) -> f64 {
        (self.len() as f64).ln()
    }

    pub fn check_grid(&self, x: &SampledPath) -> Result<()> {
        self.entries[0].check_same_grid(x)
    }

    /// Index of the closest entry and its distance. Ties go to the smallest index.
    pub fn nearest(&self, x: &SampledPath, norm: Norm) -> Result<(usize, f64)> {
        self.check_grid(x)?;
        norm.validate()?;
        Ok(nearest_unchecked(&self.entries, x.values(), norm))
    }

    /// Union of two codebooks on the same grid (uniform weights over the union).
    pub fn union(&self, other: &Codebook) -> Result<Codebook> {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().cloned());
        Codebook::uniform(entries)
    }

    pub fn to_json(&self) -> Result<String> {
        let first = &self.entries[0];
        let file = CodebookFile {
            hurst: first.hurst(),
            horizon: first.horizon(),
            n_per_unit: first.n_per_unit(),
            kinds: self.entries.iter().map(|e| e.kind()).collect(),
            entries: self.entries.iter().map(|e| e.values().to_vec()).collect(),
            weights: self.weights.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Numerical(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Codebook> {
        let file: CodebookFile =
            serde_json::from_str(text).map_err(|e| Error::format("<codebook json>", e))?;
        if file.kinds.len() != file.entries.len() {
            return Err(Error::format(
                "<codebook json>",
                "kinds and entries differ in length",
            ));
        }
        let entries = file
            .entries
            .into_iter()
            .zip(file.kinds)
            .map(|(v, k)| SampledPath::new(file.hurst, file.horizon, file.n_per_unit, v, k))
            .collect::<Result<Vec<_>>>()?;
        Codebook::new(entries, file.weights)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Codebook> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Codebook::from_json(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(path, message),
            other => other,
        })
    }
}

/// On-disk layout of a codebook.
#[derive(Debug, Serialize, Deserialize)]
struct CodebookFile {
    hurst: f64,
    horizon: usize,
    n_per_unit: usize,
    kinds: Vec<PathKind>,
    entries: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

/// Linear scan with pruning: an entry is abandoned once its partial distance exceeds the best
/// so far, which never changes the result of the full scan.
pub(crate) fn nearest_unchecked(entries: &[SampledPath], x: &[f64], norm: Norm) -> (usize, f64) {
    match norm {
        Norm::Sup => {
            let mut best = (0, f64::INFINITY);
            for (i, e) in entries.iter().enumerate() {
                if let Some(d) = norm.distance_within(e.values(), x, best.1) {
                    if d < best.1 {
                        best = (i, d);
                    }
                }
            }
            best
        }
        Norm::Lp(p) => {
            let n = x.len() - 1;
            let mut best = (0, f64::INFINITY);
            for (i, e) in entries.iter().enumerate() {
                let s = crate::grid_paths::lp_sum(&e.values()[..n], &x[..n], p, best.1);
                if s < best.1 {
                    best = (i, s);
                }
            }
            (best.0, (best.1 / n as f64).powf(1.0 / p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn constant(c: f64) -> SampledPath {
        SampledPath::constant(0.5, 1, 8, c).unwrap()
    }

    #[test]
    fn nearest_examples() {
        let cb = Codebook::new(vec![constant(0.0), constant(1.0)], None).unwrap();
        assert_eq!(cb.nearest(&constant(0.4), Norm::Sup).unwrap(), (0, 0.4));
        assert_eq!(cb.nearest(&constant(1.0), Norm::Sup).unwrap(), (1, 0.0));
        // equidistant: smaller index wins
        assert_eq!(cb.nearest(&constant(0.5), Norm::Sup).unwrap(), (0, 0.5));
        assert_eq!(cb.nearest(&constant(0.5), Norm::Lp(2.0)).unwrap().0, 0);

        let dup = Codebook::new(vec![constant(2.0), constant(0.0), constant(0.0)], None).unwrap();
        assert_eq!(dup.nearest(&constant(0.0), Norm::Sup).unwrap(), (1, 0.0));
    }

    #[test]
    fn codebook_validation() {
        assert!(matches!(Codebook::new(vec![], None), Err(Error::EmptyCodebook)));
        let other_grid = SampledPath::constant(0.5, 1, 4, 0.0).unwrap();
        assert!(Codebook::new(vec![constant(0.0), other_grid.clone()], None).is_err());
        assert!(Codebook::new(vec![constant(0.0)], Some(vec![0.5])).is_err());
        assert!(Codebook::new(vec![constant(0.0), constant(1.0)], Some(vec![1.0, 0.0])).is_err());
        let cb = Codebook::new(vec![constant(0.0)], None).unwrap();
        assert!(cb.nearest(&other_grid, Norm::Sup).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0]), 0.0);
        let h = entropy(&[0.5, 0.25, 0.25]);
        assert!((h - 1.5 * 2f64.ln()).abs() < 1e-15);
        assert!((h - 1.0397).abs() < 1e-4);
        assert_eq!(entropy(&[0.5, 0.5, 0.0]), 2f64.ln());
    }

    #[test]
    fn code_length_errors() {
        assert!(matches!(code_length(&[1.0, 0.0], 1), Err(Error::ZeroWeight(1))));
        assert!(code_length(&[1.0], 3).is_err());
        assert_eq!(code_length(&[0.5, 0.5], 0).unwrap().nats, 2f64.ln());
    }

    #[test]
    fn json_roundtrip() {
        let cb = Codebook::new(
            vec![constant(0.25), constant(-1.5).to_step()],
            Some(vec![0.75, 0.25]),
        )
        .unwrap();
        let text = cb.to_json().unwrap();
        assert!(text.contains("\"n_per_unit\": 8"));
        assert_eq!(Codebook::from_json(&text).unwrap(), cb);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cb.json");
        cb.write_json(&p).unwrap();
        assert_eq!(Codebook::read_json(&p).unwrap(), cb);
        assert!(Codebook::read_json(dir.path().join("missing.json")).is_err());
    }

    fn brute_force(entries: &[SampledPath], x: &SampledPath, norm: Norm) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, e) in entries.iter().enumerate() {
            let d = norm.distance(e, x).unwrap();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    proptest! {
        #[test]
        fn nearest_matches_brute_force(
            raw in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 9), 1..20),
            x in proptest::collection::vec(-2.0f64..2.0, 9),
            p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0]),
        ) {
            let entries: Vec<_> = raw.into_iter()
                .map(|v| SampledPath::new(0.5, 1, 8, v, PathKind::Step).unwrap())
                .collect();
            let x = SampledPath::new(0.5, 1, 8, x, PathKind::Sampled).unwrap();
            let cb = Codebook::new(entries.clone(), None).unwrap();
            for norm in [Norm::Sup, Norm::Lp(p)] {
                let got = cb.nearest(&x, norm).unwrap();
                let want = brute_force(&entries, &x, norm);
                prop_assert_eq!(got.1, want.1);
            }
        }

        #[test]
        fn cross_entropy_dominates_entropy(
            q in proptest::collection::vec(0.0f64..1.0, 2..12),
            p in proptest::collection::vec(0.01f64..1.0, 12),
        ) {
            let qs: f64 = q.iter().sum();
            prop_assume!(qs > 0.0);
            let q: Vec<f64> = q.iter().map(|v| v / qs).collect();
            let p = &p[..q.len()];
            let ps: f64 = p.iter().sum();
            let p: Vec<f64> = p.iter().map(|v| v / ps).collect();
            prop_assert!(cross_entropy(&q, &p) >= entropy(&q) - 1e-12);
        }
    }
}
