//! Finite unions of real intervals, used as exit regions and as the target
//! sets of indicator envelopes.

use std::fmt;

use crate::error::{Error, Result};

/// A nonempty finite union of intervals on the extended real line.
///
/// Endpoints may be `-inf`/`+inf`. The representation is normalized: intervals
/// are sorted, overlapping or touching intervals are merged, and `lo <= hi`
/// holds for every component. Whether the set is read as closed or open is
/// decided by the consumer: distance computations treat the stored endpoints
/// as the boundary either way.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalUnion {
    parts: Vec<(f64, f64)>,
}

impl IntervalUnion {
    /// Builds a union from raw `(lo, hi)` pairs and normalizes it.
    pub fn new(parts: Vec<(f64, f64)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::EmptyIntervalSet);
        }
        let mut parts = parts;
        for &(lo, hi) in &parts {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "bad interval [{lo}, {hi}]"
                )));
            }
        }
        parts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(parts.len());
        for (lo, hi) in parts {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Ok(Self { parts: merged })
    }

    /// Single interval `[lo, hi]`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    /// Half line `[lo, +inf)`.
    pub fn ray_from(lo: f64) -> Self {
        Self {
            parts: vec![(lo, f64::INFINITY)],
        }
    }

    /// The whole real line.
    pub fn full_line() -> Self {
        Self {
            parts: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        }
    }

    pub fn parts(&self) -> &[(f64, f64)] {
        &self.parts
    }

    /// Membership with the endpoints included.
    pub fn contains(&self, x: f64) -> bool {
        self.parts.iter().any(|&(lo, hi)| x >= lo && x <= hi)
    }

    /// Euclidean distance from `x` to the set (read as closed). Zero on the set.
    pub fn distance(&self, x: f64) -> f64 {
        let mut best = f64::INFINITY;
        for &(lo, hi) in &self.parts {
            let d = if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                return 0.0;
            };
            best = best.min(d);
        }
        best
    }

    /// Distance from `x` to the complement of the set read as open.
    ///
    /// For `x` outside the open set this is zero; inside a component `(lo, hi)`
    /// it is the distance to the nearer endpoint (`+inf` when the component is
    /// the whole line).
    pub fn distance_to_complement(&self, x: f64) -> f64 {
        for &(lo, hi) in &self.parts {
            if x > lo && x < hi {
                return (x - lo).min(hi - x);
            }
        }
        0.0
    }
}

impl fmt::Display for IntervalUnion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &(lo, hi)) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, " u ")?;
            }
            write!(f, "[{lo}, {hi}]")?;
        }
        Ok(())
    }
}
