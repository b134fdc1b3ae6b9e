//! Values attached to the nodes of one tree level.

use crate::error::{Error, Result};

/// A real-valued field over the nodes of a single tree level.
///
/// `values[i]` belongs to node `i` of the level; the pairing with a concrete
/// tree is by construction, so a field must only be read against the tree that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedField {
    level: usize,
    values: Vec<f64>,
}

impl AdaptedField {
    pub fn new(level: usize, values: Vec<f64>) -> Self {
        Self { level, values }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Largest absolute entry.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute nodewise difference against a field on the same level.
    pub fn sup_diff(&self, other: &AdaptedField) -> Result<f64> {
        if self.level != other.level || self.values.len() != other.values.len() {
            return Err(Error::InvalidParameter(format!(
                "fields live on different levels ({} vs {})",
                self.level, other.level
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Nodewise `self <= other + tol`.
    pub fn le(&self, other: &AdaptedField, tol: f64) -> Result<bool> {
        if self.level != other.level || self.values.len() != other.values.len() {
            return Err(Error::InvalidParameter(
                "fields live on different levels".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| *a <= *b + tol))
    }

    pub fn negated(&self) -> AdaptedField {
        AdaptedField {
            level: self.level,
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}
