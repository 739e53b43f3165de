//! Dominance semantics and the brute-force reference oracles.
//!
//! All comparisons use minimization: smaller is better on every attribute.
//! Maximized criteria are negated before they reach this module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of a relation together with its ordinal position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleRecord {
    pub index: u64,
    values: Vec<f64>,
}

impl TupleRecord {
    /// Builds a record, rejecting empty or non-finite value vectors.
    pub fn new(index: u64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::ZeroDimension);
        }
        if let Some(attribute) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index, attribute });
        }
        Ok(Self { index, values })
    }

    /// Skips validation; callers guarantee a non-empty finite vector.
    pub(crate) fn new_unchecked(index: u64, values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty() && values.iter().all(|v| v.is_finite()));
        Self { index, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Strict dominance on raw value slices of equal length.
#[inline]
pub fn dominates_values(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// `a ⪯ b`: componentwise `<=`, which covers both dominance and equality.
#[inline]
pub fn covers_values(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).all(|(x, y)| x <= y)
}

fn check_dims(a: &TupleRecord, b: &TupleRecord) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// True iff `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &TupleRecord, b: &TupleRecord) -> Result<bool> {
    check_dims(a, b)?;
    Ok(dominates_values(a.values(), b.values()))
}

/// True iff `a` dominates `b` or the two carry identical values.
pub fn dominates_or_equal(a: &TupleRecord, b: &TupleRecord) -> Result<bool> {
    check_dims(a, b)?;
    Ok(covers_values(a.values(), b.values()))
}

fn common_dim<'a>(records: impl IntoIterator<Item = &'a TupleRecord>) -> Result<Option<usize>> {
    let mut dim = None;
    for r in records {
        match dim {
            None => dim = Some(r.dim()),
            Some(d) if d != r.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: r.dim(),
                })
            }
            _ => {}
        }
    }
    Ok(dim)
}

/// Number of tuples in `all` covered (⪯) by at least one member of `q`.
pub fn dominated_count(q: &[TupleRecord], all: &[TupleRecord]) -> Result<u64> {
    common_dim(q.iter().chain(all))?;
    Ok(all
        .iter()
        .filter(|t| q.iter().any(|c| covers_values(c.values(), t.values())))
        .count() as u64)
}

/// Coverage count and the derived error of an approximate skyline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub dominated_count: u64,
    pub total: u64,
    pub error: f64,
}

impl ErrorReport {
    pub fn new(dominated_count: u64, total: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::EmptyRelation);
        }
        if dominated_count > total {
            return Err(Error::invalid(format!(
                "dominated count {dominated_count} exceeds total {total}"
            )));
        }
        Ok(Self {
            dominated_count,
            total,
            error: (total - dominated_count) as f64 / total as f64,
        })
    }
}

/// Error of `approx` against the full relation `all`, taking DN(Sky) = n.
pub fn true_error(approx: &[TupleRecord], all: &[TupleRecord]) -> Result<ErrorReport> {
    if all.is_empty() {
        return Err(Error::EmptyRelation);
    }
    ErrorReport::new(dominated_count(approx, all)?, all.len() as u64)
}

/// O(n²) skyline: every record not strictly dominated by another.
/// Exact duplicates of a skyline value are all kept.
pub fn brute_force_skyline(all: &[TupleRecord]) -> Result<Vec<TupleRecord>> {
    common_dim(all)?;
    Ok(all
        .iter()
        .filter(|t| !all.iter().any(|o| dominates_values(o.values(), t.values())))
        .cloned()
        .collect())
}

pub fn is_antichain(q: &[TupleRecord]) -> Result<bool> {
    common_dim(q)?;
    Ok(q.iter()
        .all(|a| !q.iter().any(|b| dominates_values(a.values(), b.values()))))
}

#[cfg(test)]
pub(crate) fn rec(index: u64, values: &[f64]) -> TupleRecord {
    TupleRecord::new(index, values.to_vec()).unwrap()
}
