use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Ordered anchor pair `(i, j)`, zero-based. The measured quantity is
/// `|tag - a_j| - |tag - a_i|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
}

impl Pair {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    pub fn reversed(self) -> Self {
        Self::new(self.j, self.i)
    }

    pub fn involves(self, k: usize) -> bool {
        self.i == k || self.j == k
    }

    /// Same anchors regardless of order.
    pub fn same_link(self, other: Pair) -> bool {
        self == other || self == other.reversed()
    }
}

impl std::fmt::Display for Pair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // one-based, as in files
        write!(f, "({}, {})", self.i + 1, self.j + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TdoaMode {
    #[default]
    Centralized,
    Decentralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// `{(m,1), (1,2), ..., (m-1,m)}`.
    Ring,
    /// `{(1,2), (3,4), ...}`.
    Disjoint,
}

impl Pairing {
    pub fn pairs(self, m: usize) -> Vec<Pair> {
        match self {
            Pairing::Ring => ring_pairs(m),
            Pairing::Disjoint => (0..m / 2).map(|k| Pair::new(2 * k, 2 * k + 1)).collect(),
        }
    }

    pub fn default_mode(self) -> TdoaMode {
        match self {
            Pairing::Ring => TdoaMode::Centralized,
            Pairing::Disjoint => TdoaMode::Decentralized,
        }
    }
}

/// Round-robin cycle. With two anchors the cycle collapses to one link.
pub fn ring_pairs(m: usize) -> Vec<Pair> {
    match m {
        0 | 1 => Vec::new(),
        2 => vec![Pair::new(0, 1)],
        _ => std::iter::once(Pair::new(m - 1, 0))
            .chain((0..m - 1).map(|k| Pair::new(k, k + 1)))
            .collect(),
    }
}

/// Anchor constellation together with its scheduled pair set.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPlacement {
    pub anchors: Vec<Vec3>,
    pub pairs: Vec<Pair>,
    pub mode: TdoaMode,
}

impl AnchorPlacement {
    pub fn new(anchors: Vec<Vec3>, pairs: Vec<Pair>, mode: TdoaMode) -> Result<Self> {
        let placement = Self {
            anchors,
            pairs,
            mode,
        };
        placement.validate()?;
        Ok(placement)
    }

    pub fn with_pairing(anchors: Vec<Vec3>, pairing: Pairing) -> Result<Self> {
        let pairs = pairing.pairs(anchors.len());
        Self::new(anchors, pairs, pairing.default_mode())
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.anchors.len();
        if m < 2 {
            return Err(Error::invalid(format!("need at least 2 anchors, got {m}")));
        }
        if let Some(k) = self
            .anchors
            .iter()
            .position(|a| !a.iter().all(|c| c.is_finite()))
        {
            return Err(Error::invalid(format!("anchor {} is not finite", k + 1)));
        }
        for p in &self.pairs {
            if p.i >= m || p.j >= m {
                return Err(Error::invalid(format!(
                    "pair {p} references a missing anchor (m = {m})"
                )));
            }
            if p.i == p.j {
                return Err(Error::invalid(format!("pair {p} repeats an anchor")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchor(&self, k: usize) -> &Vec3 {
        &self.anchors[k]
    }

    /// Whether a link (either orientation) belongs to the schedule.
    pub fn is_scheduled(&self, pair: Pair) -> bool {
        self.pairs.iter().any(|p| p.same_link(pair))
    }

    pub fn check_pair(&self, pair: Pair) -> Result<()> {
        if pair.i >= self.len() || pair.j >= self.len() || pair.i == pair.j {
            return Err(Error::invalid(format!(
                "pair {pair} is invalid for {} anchors",
                self.len()
            )));
        }
        Ok(())
    }

    /// Same constellation with anchor labels permuted: new anchor `k` is old
    /// anchor `perm[k]`. Pairs are relabeled accordingly.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let m = self.len();
        if perm.len() != m {
            return Err(Error::invalid("permutation length mismatch"));
        }
        let mut inverse = vec![usize::MAX; m];
        for (new, &old) in perm.iter().enumerate() {
            if old >= m || inverse[old] != usize::MAX {
                return Err(Error::invalid("not a permutation"));
            }
            inverse[old] = new;
        }
        let anchors = perm.iter().map(|&old| self.anchors[old]).collect();
        let pairs = self
            .pairs
            .iter()
            .map(|p| Pair::new(inverse[p.i], inverse[p.j]))
            .collect();
        Self::new(anchors, pairs, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_matches_round_robin_cycle() {
        let pairs = ring_pairs(8);
        assert_eq!(pairs.len(), 8);
        assert_eq!(pairs[0], Pair::new(7, 0));
        assert_eq!(pairs[1], Pair::new(0, 1));
        assert_eq!(pairs[7], Pair::new(6, 7));
    }

    #[test]
    fn disjoint_pairs() {
        let pairs = Pairing::Disjoint.pairs(16);
        assert_eq!(pairs.len(), 8);
        assert_eq!(pairs[7], Pair::new(14, 15));
    }

    #[test]
    fn validation_errors() {
        let a = vec![Vec3::zeros(), Vec3::x()];
        assert!(AnchorPlacement::new(a.clone(), vec![Pair::new(0, 2)], TdoaMode::Centralized).is_err());
        assert!(AnchorPlacement::new(a.clone(), vec![Pair::new(1, 1)], TdoaMode::Centralized).is_err());
        assert!(AnchorPlacement::new(vec![Vec3::zeros()], vec![], TdoaMode::Centralized).is_err());
        assert!(AnchorPlacement::new(a, vec![Pair::new(0, 1)], TdoaMode::Centralized).is_ok());
    }

    #[test]
    fn relabel_keeps_links() {
        let anchors: Vec<_> = (0..4).map(|k| Vec3::new(k as f64, 0.0, 0.0)).collect();
        let p = AnchorPlacement::with_pairing(anchors, Pairing::Ring).unwrap();
        let q = p.relabeled(&[2, 0, 3, 1]).unwrap();
        for (old, new) in p.pairs.iter().zip(&q.pairs) {
            assert_eq!(p.anchors[old.i], q.anchors[new.i]);
            assert_eq!(p.anchors[old.j], q.anchors[new.j]);
        }
    }
}
