//! The active predictor set: a nonempty sorted collection of column indices.

use crate::error::{BvsError, Result};

/// Nonempty set of predictor indices (zero-based), stored sorted and
/// duplicate-free. Serialized forms (chain files, oracle tables) use one-based
/// indices; the conversion lives in [`ActiveSet::format_one_based`] and
/// [`ActiveSet::parse_one_based`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(BvsError::validation("active set must be nonempty"));
        }
        Ok(ActiveSet(indices))
    }

    pub fn singleton(i: usize) -> Self {
        ActiveSet(vec![i])
    }

    /// Number of active predictors.
    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Position of `i` within the sorted set, if present.
    pub fn position(&self, i: usize) -> Option<usize> {
        self.0.binary_search(&i).ok()
    }

    pub fn with_added(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&i) {
            v.insert(pos, i);
        }
        ActiveSet(v)
    }

    /// Remove `i`; `None` when `i` is the only member (the empty set is not a
    /// valid state) or not present.
    pub fn with_removed(&self, i: usize) -> Option<Self> {
        let pos = self.0.binary_search(&i).ok()?;
        if self.0.len() == 1 {
            return None;
        }
        let mut v = self.0.clone();
        v.remove(pos);
        Some(ActiveSet(v))
    }

    /// Add `i` if absent, remove if present; `None` when the removal would
    /// empty the set.
    pub fn toggled(&self, i: usize) -> Option<Self> {
        if self.contains(i) {
            self.with_removed(i)
        } else {
            Some(self.with_added(i))
        }
    }

    /// When `other` equals this set with exactly one index added or removed,
    /// return that index.
    pub fn single_toggle_diff(&self, other: &ActiveSet) -> Option<usize> {
        let (a, b) = (self.as_slice(), other.as_slice());
        let (mut i, mut j) = (0, 0);
        let mut diff = None;
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                }
                (Some(&x), Some(&y)) => {
                    let d = if x < y { i += 1; x } else { j += 1; y };
                    if diff.replace(d).is_some() {
                        return None;
                    }
                }
                (Some(&x), None) => {
                    i += 1;
                    if diff.replace(x).is_some() {
                        return None;
                    }
                }
                (None, Some(&y)) => {
                    j += 1;
                    if diff.replace(y).is_some() {
                        return None;
                    }
                }
                (None, None) => unreachable!(),
            }
        }
        diff
    }

    /// The set as a bitmask (only valid for indices < 64; used by the
    /// enumeration oracle where p <= 20).
    pub fn bitmask(&self) -> u64 {
        self.0.iter().fold(0u64, |m, &i| m | (1u64 << i))
    }

    pub fn from_bitmask(mask: u64) -> Result<Self> {
        let v: Vec<usize> = (0..64).filter(|&i| mask & (1u64 << i) != 0).collect();
        ActiveSet::new(v)
    }

    /// One-based indices joined by `sep`, e.g. `{0, 2, 6}` -> `"1;3;7"`.
    pub fn format_one_based(&self, sep: &str) -> String {
        self.0
            .iter()
            .map(|&i| (i + 1).to_string())
            .collect::<Vec<_>>()
            .join(sep)
    }

    pub fn parse_one_based(text: &str, sep: &str) -> Result<Self> {
        let mut v = Vec::new();
        for part in text.split(sep) {
            let idx: usize = part
                .trim()
                .parse()
                .map_err(|_| BvsError::validation(format!("bad index '{part}' in set '{text}'")))?;
            if idx == 0 {
                return Err(BvsError::validation(format!(
                    "index 0 in one-based set '{text}'"
                )));
            }
            v.push(idx - 1);
        }
        ActiveSet::new(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_sorts_and_dedups() {
        let s = ActiveSet::new(vec![5, 1, 3, 1]).unwrap();
        assert_eq!(s.as_slice(), &[1, 3, 5]);
        assert_eq!(s.k(), 3);
        assert!(ActiveSet::new(vec![]).is_err());
    }

    #[test]
    fn toggle_adds_and_removes() {
        let s = ActiveSet::new(vec![1, 3]).unwrap();
        assert_eq!(s.toggled(2).unwrap().as_slice(), &[1, 2, 3]);
        assert_eq!(s.toggled(3).unwrap().as_slice(), &[1]);
        let single = ActiveSet::singleton(4);
        assert!(single.toggled(4).is_none());
        assert_eq!(single.toggled(0).unwrap().as_slice(), &[0, 4]);
    }

    #[test]
    fn one_based_round_trip() {
        let s = ActiveSet::new(vec![0, 2, 6]).unwrap();
        let text = s.format_one_based(";");
        assert_eq!(text, "1;3;7");
        assert_eq!(ActiveSet::parse_one_based(&text, ";").unwrap(), s);
        assert!(ActiveSet::parse_one_based("0;2", ";").is_err());
    }

    #[test]
    fn single_toggle_diff_detects_one_index_changes() {
        let a = ActiveSet::new(vec![1, 3]).unwrap();
        assert_eq!(a.single_toggle_diff(&ActiveSet::new(vec![1, 3, 7]).unwrap()), Some(7));
        assert_eq!(a.single_toggle_diff(&ActiveSet::new(vec![1]).unwrap()), Some(3));
        assert_eq!(a.single_toggle_diff(&ActiveSet::new(vec![0, 1, 3]).unwrap()), Some(0));
        assert_eq!(a.single_toggle_diff(&a), None);
        assert_eq!(a.single_toggle_diff(&ActiveSet::new(vec![1, 4]).unwrap()), None);
        assert_eq!(a.single_toggle_diff(&ActiveSet::new(vec![0, 2, 5]).unwrap()), None);
    }

    #[test]
    fn bitmask_round_trip() {
        for mask in 1u64..64 {
            let s = ActiveSet::from_bitmask(mask).unwrap();
            assert_eq!(s.bitmask(), mask);
        }
    }
}
