//! Ancestor-coincidence events for four independent uniform nodes of `G_r`,
//! counted exhaustively.

use serde::Serialize;

use crate::error::{BmcError, Result};
use crate::tree::layer;

/// Largest `r` accepted: `2^{4r}` quadruples.
pub const MAX_ENUMERATION_DEPTH: u32 = 4;

/// Partition pattern of the four generation-`p` ancestors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AncestorEvent {
    /// All four distinct.
    E0,
    /// Exactly one pair shares an ancestor.
    E1,
    /// Two disjoint pairs.
    E2,
    /// Exactly three share an ancestor.
    E3,
    /// All four share an ancestor.
    E4,
}

impl AncestorEvent {
    pub const ALL: [AncestorEvent; 5] = [Self::E0, Self::E1, Self::E2, Self::E3, Self::E4];

    pub fn classify(a: [u64; 4]) -> Self {
        let mut block_sizes = [0usize; 4];
        for (k, &x) in a.iter().enumerate() {
            block_sizes[k] = a.iter().filter(|&&y| y == x).count();
        }
        // each member of a block of size s reports s
        let max = *block_sizes.iter().max().unwrap();
        let pairs = block_sizes.iter().filter(|&&s| s == 2).count();
        match (max, pairs) {
            (1, _) => Self::E0,
            (2, 2) => Self::E1,
            (2, _) => Self::E2,
            (3, _) => Self::E3,
            _ => Self::E4,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Counted probabilities next to the closed forms quoted for them.
#[derive(Debug, Clone, Serialize)]
pub struct AncestorEventTable {
    pub r: u32,
    pub p: u32,
    pub total: u64,
    /// Quadruple counts for E0..E4 at generation `p`.
    pub counts: [u64; 5],
    pub probabilities: [f64; 5],
    /// `3/32, 3(2^p-1)/4^p, 6(2^p-1)/8^p, 4(2^p-1)/8^p, 6/8^p`.
    pub quoted: [f64; 5],
    /// `P(E0^2)`, counted.
    pub e0_at_two: f64,
    /// `P(E1^p and E0^{p+1})`, with `E0^{r+1}` certain.
    pub joint_e1: f64,
    /// `P(E2^p and E0^{p+1})`.
    pub joint_e2: f64,
    /// `(3/2)(2^p-1)/4^p` and `(6/4)(2^p-1)/8^p`.
    pub quoted_joint: [f64; 2],
}

/// Closed-form values `P(E_k^p)` as quoted for the fourth-moment bound.
pub fn quoted_probabilities(p: u32) -> [f64; 5] {
    let two = 2f64.powi(p as i32);
    [
        3.0 / 32.0,
        3.0 * (two - 1.0) / two.powi(2),
        6.0 * (two - 1.0) / two.powi(3),
        4.0 * (two - 1.0) / two.powi(3),
        6.0 / two.powi(3),
    ]
}

/// Enumerates all `2^{4r}` quadruples of `G_r` and classifies the
/// generation-`p` (and `p+1`) ancestors.
pub fn ancestor_event_probabilities(r: u32, p: u32) -> Result<AncestorEventTable> {
    if r > MAX_ENUMERATION_DEPTH {
        return Err(BmcError::DepthLimit {
            requested: r,
            max: MAX_ENUMERATION_DEPTH,
        });
    }
    if p < 2 || p > r {
        return Err(BmcError::InvalidParameter(format!("need 2 <= p <= r, got p={p}, r={r}")));
    }
    let nodes: Vec<u64> = layer(r).collect();
    let mut counts = [0u64; 5];
    let (mut at_two, mut joint1, mut joint2) = (0u64, 0u64, 0u64);
    for &i in &nodes {
        for &j in &nodes {
            for &k in &nodes {
                for &l in &nodes {
                    let q = [i, j, k, l];
                    let at = |g: u32| q.map(|x| x >> (r - g));
                    let here = AncestorEvent::classify(at(p));
                    counts[here.index()] += 1;
                    let next_distinct = p == r || AncestorEvent::classify(at(p + 1)) == AncestorEvent::E0;
                    if next_distinct {
                        match here {
                            AncestorEvent::E1 => joint1 += 1,
                            AncestorEvent::E2 => joint2 += 1,
                            _ => {}
                        }
                    }
                    if AncestorEvent::classify(at(2)) == AncestorEvent::E0 {
                        at_two += 1;
                    }
                }
            }
        }
    }
    let total = (nodes.len() as u64).pow(4);
    let t = total as f64;
    let two = 2f64.powi(p as i32);
    Ok(AncestorEventTable {
        r,
        p,
        total,
        counts,
        probabilities: counts.map(|c| c as f64 / t),
        quoted: quoted_probabilities(p),
        e0_at_two: at_two as f64 / t,
        joint_e1: joint1 as f64 / t,
        joint_e2: joint2 as f64 / t,
        quoted_joint: [1.5 * (two - 1.0) / two.powi(2), 1.5 * (two - 1.0) / two.powi(3)],
    })
}

/// Exact `P(E_k^p)` by combinatorics: ancestors are iid uniform on `G_p`.
pub fn combinatorial_probabilities(p: u32) -> [f64; 5] {
    let g = 2f64.powi(p as i32);
    let g4 = g.powi(4);
    [
        g * (g - 1.0) * (g - 2.0) * (g - 3.0) / g4,
        6.0 * g * (g - 1.0) * (g - 2.0) / g4,
        3.0 * g * (g - 1.0) / g4,
        4.0 * g * (g - 1.0) / g4,
        g / g4,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(AncestorEvent::classify([1, 2, 3, 4]), AncestorEvent::E0);
        assert_eq!(AncestorEvent::classify([1, 2, 1, 4]), AncestorEvent::E1);
        assert_eq!(AncestorEvent::classify([1, 2, 2, 1]), AncestorEvent::E2);
        assert_eq!(AncestorEvent::classify([5, 5, 3, 5]), AncestorEvent::E3);
        assert_eq!(AncestorEvent::classify([7, 7, 7, 7]), AncestorEvent::E4);
    }

    #[test]
    fn e0_at_generation_two_is_three_over_32() {
        for r in 2..=4 {
            let t = ancestor_event_probabilities(r, 2).unwrap();
            assert_eq!(t.e0_at_two, 3.0 / 32.0);
            assert_eq!(t.probabilities[0], 3.0 / 32.0);
        }
    }

    #[test]
    fn counts_partition_and_match_combinatorics() {
        for r in 2..=4 {
            for p in 2..=r {
                let t = ancestor_event_probabilities(r, p).unwrap();
                assert_eq!(t.counts.iter().sum::<u64>(), 1u64 << (4 * r));
                assert!(t.probabilities.iter().all(|v| (0.0..=1.0).contains(v)));
                let exact = combinatorial_probabilities(p);
                for k in 0..5 {
                    assert!((t.probabilities[k] - exact[k]).abs() < 1e-15);
                }
                assert!(t.joint_e1 <= t.probabilities[1] && t.joint_e2 <= t.probabilities[2]);
            }
        }
    }

    #[test]
    fn all_equal_has_probability_eight_to_minus_p() {
        let t = ancestor_event_probabilities(3, 3).unwrap();
        assert_eq!(t.probabilities[4], 2f64.powi(-9));
        assert_eq!(t.quoted[4], 6.0 * 2f64.powi(-9));
    }

    #[test]
    fn joints_at_p_equal_r_are_the_marginals() {
        let t = ancestor_event_probabilities(3, 3).unwrap();
        assert_eq!(t.joint_e1, t.probabilities[1]);
        assert_eq!(t.joint_e2, t.probabilities[2]);
    }

    #[test]
    fn joints_below_r_need_the_shared_ancestors_to_split() {
        let t = ancestor_event_probabilities(4, 2).unwrap();
        assert_eq!(t.joint_e1, t.probabilities[1] / 2.0);
        assert_eq!(t.joint_e2, t.probabilities[2] / 4.0);
    }

    #[test]
    fn guards() {
        assert!(matches!(ancestor_event_probabilities(5, 2), Err(BmcError::DepthLimit { .. })));
        assert!(ancestor_event_probabilities(3, 1).is_err());
        assert!(ancestor_event_probabilities(3, 4).is_err());
    }
}
