//! Mean-subsequence-reduced trimming of neighbor values.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::NodeId;

/// A stored neighbor value tagged with the neighbor it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueWithSource {
    pub source: NodeId,
    pub value: f64,
}

impl ValueWithSource {
    pub fn new(source: NodeId, value: f64) -> Self {
        ValueWithSource { source, value }
    }
}

/// Drops up to `f` values strictly above `own_value` (the largest first) and
/// up to `f` strictly below (the smallest first). Values equal to
/// `own_value` always survive. Among equal values the higher source id goes
/// first. Returns the surviving source ids in ascending order.
pub fn msr_trim(own_value: f64, candidates: &[ValueWithSource], f: usize) -> Result<Vec<NodeId>> {
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !seen.insert(c.source) {
            return Err(Error::DuplicateSource(c.source));
        }
        if !c.value.is_finite() {
            return Err(Error::NonFinite {
                source_id: c.source,
                value: c.value,
            });
        }
    }
    if f == 0 {
        return Ok(seen.into_iter().collect());
    }

    let mut above: Vec<&ValueWithSource> =
        candidates.iter().filter(|c| c.value > own_value).collect();
    let mut below: Vec<&ValueWithSource> =
        candidates.iter().filter(|c| c.value < own_value).collect();

    // most extreme first
    above.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap_or(Ordering::Equal)
            .then(b.source.cmp(&a.source))
    });
    below.sort_by(|a, b| {
        a.value
            .partial_cmp(&b.value)
            .unwrap_or(Ordering::Equal)
            .then(b.source.cmp(&a.source))
    });

    for removed in above.iter().take(f).chain(below.iter().take(f)) {
        seen.remove(&removed.source);
    }
    Ok(seen.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vals(pairs: &[(NodeId, f64)]) -> Vec<ValueWithSource> {
        pairs
            .iter()
            .map(|&(s, v)| ValueWithSource::new(s, v))
            .collect()
    }

    #[test]
    fn trims_one_each_side() {
        let c = vals(&[(0, 0.9), (1, 0.8), (2, 0.2), (3, 0.1), (4, 0.5)]);
        assert_eq!(msr_trim(0.5, &c, 1).unwrap(), vec![1, 2, 4]);
    }

    #[test]
    fn zero_f_keeps_everything() {
        let c = vals(&[(3, -4.0), (1, 7.0), (2, 0.0)]);
        assert_eq!(msr_trim(100.0, &c, 0).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn nothing_above_own_value() {
        let c = vals(&[(0, 0.5), (1, 0.6)]);
        assert_eq!(msr_trim(1.0, &c, 1).unwrap(), vec![1]);
    }

    #[test]
    fn fewer_than_f_on_a_side_removes_all_of_them() {
        let c = vals(&[(0, 2.0), (1, -1.0), (2, -2.0), (3, -3.0)]);
        assert_eq!(msr_trim(0.0, &c, 2).unwrap(), vec![1]);
    }

    #[test]
    fn ties_with_own_value_survive() {
        let c = vals(&[(0, 0.5), (1, 0.5), (2, 0.5)]);
        assert_eq!(msr_trim(0.5, &c, 2).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn ties_among_extremes_remove_higher_id() {
        let c = vals(&[(1, 0.9), (4, 0.9), (2, 0.1), (5, 0.1)]);
        assert_eq!(msr_trim(0.5, &c, 1).unwrap(), vec![1, 2]);
    }

    #[test]
    fn empty_candidates() {
        assert!(msr_trim(0.0, &[], 3).unwrap().is_empty());
    }

    #[test]
    fn duplicate_source_rejected() {
        let c = vals(&[(1, 0.0), (1, 1.0)]);
        assert!(matches!(
            msr_trim(0.0, &c, 1),
            Err(Error::DuplicateSource(1))
        ));
    }

    #[test]
    fn nan_rejected() {
        let c = vals(&[(1, f64::NAN)]);
        assert!(matches!(msr_trim(0.0, &c, 1), Err(Error::NonFinite { .. })));
    }
}
