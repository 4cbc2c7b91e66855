//! Finitely supported reproduction laws on the nonnegative integers.

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::prob::{Rational, Weight, FLOAT_UNIT_TOL};

/// Criticality of a reproduction law, by its mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criticality {
    /// mean < 1
    Subcritical,
    /// mean = 1
    Critical,
    /// mean > 1
    Supercritical,
}

#[derive(Debug, Error, PartialEq)]
pub enum LawError {
    #[error("law has empty support")]
    EmptySupport,
    #[error("duplicate support value {0}")]
    DuplicateValue(u32),
    #[error("negative or non-finite probability for value {0}")]
    InvalidProbability(u32),
    #[error("probabilities sum to {total}, not 1")]
    NotNormalized { total: String },
    #[error("cannot parse law entry at position {pos}: {detail}")]
    Parse { pos: usize, detail: String },
}

/// A probability mass function on `Z_+` with finite support.
///
/// Entries are kept sorted by value, zero-mass entries are dropped on
/// construction, and the total mass must be 1: exactly in rational mode,
/// within `1e-9` (then renormalized to machine precision) in float mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ReproductionLaw<P: Weight> {
    entries: Vec<(u32, P)>,
}

impl<P: Weight> ReproductionLaw<P> {
    /// Build a law from `(value, probability)` pairs.
    pub fn from_entries(entries: Vec<(u32, P)>) -> Result<Self, LawError> {
        let mut entries: Vec<(u32, P)> =
            entries.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        entries.sort_by_key(|(v, _)| *v);
        for window in entries.windows(2) {
            if window[0].0 == window[1].0 {
                return Err(LawError::DuplicateValue(window[0].0));
            }
        }
        if entries.is_empty() {
            return Err(LawError::EmptySupport);
        }
        for (v, p) in &entries {
            let f = p.to_f64();
            if !f.is_finite() || f <= 0.0 {
                return Err(LawError::InvalidProbability(*v));
            }
        }
        let total = entries.iter().fold(P::zero(), |acc, (_, p)| acc.add(p));
        if P::EXACT {
            if !total.is_unit_total() {
                return Err(LawError::NotNormalized {
                    total: total.render(),
                });
            }
        } else {
            if (total.to_f64() - 1.0).abs() > FLOAT_UNIT_TOL {
                return Err(LawError::NotNormalized {
                    total: total.render(),
                });
            }
            // Renormalize away parsing round-off so downstream sums hold to
            // machine precision.
            for (_, p) in &mut entries {
                *p = p.div(&total);
            }
        }
        Ok(Self { entries })
    }

    /// The deterministic law `δ_value`.
    pub fn delta(value: u32) -> Self {
        Self {
            entries: vec![(value, P::one())],
        }
    }

    /// Parse the pmf text format `v:p,v:p,...`, e.g. `0:0.5,2:0.5` or
    /// `0:1/2,2:1/2`. Whitespace around tokens is ignored.
    pub fn parse(text: &str) -> Result<Self, LawError> {
        let mut entries = Vec::new();
        let mut pos = 0usize;
        for piece in text.split(',') {
            let here = pos;
            pos += piece.len() + 1;
            let piece_trim = piece.trim();
            if piece_trim.is_empty() {
                return Err(LawError::Parse {
                    pos: here,
                    detail: "empty entry".into(),
                });
            }
            let (v, p) = piece_trim.split_once(':').ok_or(LawError::Parse {
                pos: here,
                detail: format!("expected value:prob, found `{piece_trim}`"),
            })?;
            let value: u32 = v.trim().parse().map_err(|_| LawError::Parse {
                pos: here,
                detail: format!("bad value `{}`", v.trim()),
            })?;
            let prob = P::parse(p).ok_or(LawError::Parse {
                pos: here,
                detail: format!("bad probability `{}`", p.trim()),
            })?;
            entries.push((value, prob));
        }
        Self::from_entries(entries)
    }

    /// Canonical text form `v:p,v:p,...`.
    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(v, p)| format!("{v}:{}", p.render()))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Sorted `(value, probability)` entries; probabilities are all positive.
    pub fn entries(&self) -> &[(u32, P)] {
        &self.entries
    }

    /// Support values in increasing order.
    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|(v, _)| *v)
    }

    /// Mass at `value`; zero off the support.
    pub fn prob(&self, value: u32) -> P {
        self.entries
            .iter()
            .find(|(v, _)| *v == value)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(P::zero)
    }

    pub fn min_value(&self) -> u32 {
        self.entries.first().expect("nonempty support").0
    }

    pub fn max_value(&self) -> u32 {
        self.entries.last().expect("nonempty support").0
    }

    /// Mean `m = Σ ℓ·μ(ℓ)`.
    pub fn mean(&self) -> P {
        self.entries.iter().fold(P::zero(), |acc, (v, p)| {
            acc.add(&P::from_count(u64::from(*v)).mul(p))
        })
    }

    /// Classify by mean; float mode uses a `1e-9` band around 1.
    pub fn criticality(&self) -> Criticality {
        match self.mean().cmp_one() {
            Ordering::Less => Criticality::Subcritical,
            Ordering::Equal => Criticality::Critical,
            Ordering::Greater => Criticality::Supercritical,
        }
    }
}

impl ReproductionLaw<Rational> {
    /// Rounded float-mode copy of an exact law, for Monte Carlo paths.
    pub fn to_float(&self) -> ReproductionLaw<f64> {
        ReproductionLaw {
            entries: self.entries.iter().map(|(v, p)| (*v, p.to_f64())).collect(),
        }
    }
}

impl<P: Weight> fmt::Display for ReproductionLaw<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
