//! Brute-force references at tiny moduli.
//!
//! Everything here is deliberately independent of the bitset kernels:
//! defects are recomputed per element through hash sets, and the toy
//! optimizer enumerates candidate sets as plain integer masks. These
//! references anchor the fast implementations in tests.

use std::collections::HashSet;

use serde::Serialize;

use crate::arith::Prime;
use crate::error::{Error, Result};
use crate::family::ShiftSet;

/// |A symdiff (aA + b)| computed per element with hash sets.
pub fn reference_defect(elements: &[u64], a: i128, b: i128, p: Prime) -> Result<u64> {
    let pv = p.get();
    let mut set = HashSet::with_capacity(elements.len());
    for &x in elements {
        if x >= pv {
            return Err(Error::Format {
                what: "oracle set element",
                reason: format!("{x} is outside [0, {pv})"),
            });
        }
        if !set.insert(x) {
            return Err(Error::Format {
                what: "oracle set element",
                reason: format!("{x} appears twice"),
            });
        }
    }
    let ar = p.reduce_i128(a);
    if ar.value() == 0 {
        return Err(Error::ZeroDilation { p: pv });
    }
    let br = p.reduce_i128(b);
    let image: HashSet<u64> = set
        .iter()
        .map(|&x| ((ar.value() as u128 * x as u128 + br.value() as u128) % pv as u128) as u64)
        .collect();
    let only_a = set.difference(&image).count() as u64;
    let only_b = image.difference(&set).count() as u64;
    Ok(only_a + only_b)
}

/// Which candidate sets the exhaustive search ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchSpace {
    /// Unions of negation orbits (A = -A); 2^((p+1)/2) candidates.
    Symmetric,
    /// Every subset of F_p; 2^p candidates, so p must be tiny.
    All,
}

/// Cardinality filter applied to candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SizePolicy {
    /// |A| in {floor(p/2), ceil(p/2)} — the density-1/2 regime.
    Balanced,
    /// |A| exactly this.
    Exact(u64),
    /// No constraint.
    Any,
}

/// Result of the exhaustive search: the minimal achievable max-defect.
#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    pub p: u64,
    pub k: u64,
    pub space: SearchSpace,
    /// Minimal over candidates of (max over the grid of |A symdiff sA|).
    pub optimum_count: u64,
    pub optimum: f64,
    pub candidates_examined: u64,
    /// Optimal sets as sorted element lists (capped).
    pub witnesses: Vec<Vec<u64>>,
    /// The same witnesses as hex bitmasks (bit x = membership of x).
    pub witness_masks_hex: Vec<String>,
    pub witnesses_truncated: bool,
}

const WITNESS_CAP: usize = 16;

/// Candidate-count ceiling for the exhaustive search.
pub const SEARCH_CAP_BITS: u32 = 25;

/// Exhaustively minimize the grid max-defect over small candidate sets.
///
/// K = 0 is allowed and means the identity-only grid {(1, 0)}, for which
/// every set scores zero.
pub fn best_symmetric_set(
    p: Prime,
    k: u64,
    policy: SizePolicy,
    space: SearchSpace,
) -> Result<SearchOutcome> {
    let pv = p.get();
    let free_bits = match space {
        SearchSpace::Symmetric => (pv + 1) / 2,
        SearchSpace::All => pv,
    };
    if free_bits > SEARCH_CAP_BITS as u64 {
        let size = if free_bits >= 127 {
            u128::MAX
        } else {
            1u128 << free_bits
        };
        return Err(Error::SearchSpaceTooLarge {
            size,
            cap: 1u128 << SEARCH_CAP_BITS,
        });
    }
    let grid: Vec<(i64, i64)> = if k == 0 {
        vec![(1, 0)]
    } else {
        if k >= pv {
            return Err(Error::DegenerateParams {
                reason: format!("shift range K = {k} must be smaller than p = {pv}"),
            });
        }
        ShiftSet::new(k)?.grid().collect()
    };
    // Bit-permutation table per grid map.
    let maps: Vec<Vec<u32>> = grid
        .iter()
        .map(|&(a, b)| {
            (0..pv)
                .map(|x| {
                    let ax = (a as i128 * x as i128 + b as i128).rem_euclid(pv as i128);
                    ax as u32
                })
                .collect()
        })
        .collect();

    let half = (pv - 1) / 2;
    let mut best_count = u64::MAX;
    let mut witnesses: Vec<u64> = Vec::new();
    let mut truncated = false;
    let mut examined = 0u64;

    for choice in 0u64..1 << free_bits {
        // Expand the choice into an element mask over F_p.
        let (mask, cardinality) = match space {
            SearchSpace::All => (choice, choice.count_ones() as u64),
            SearchSpace::Symmetric => {
                let mut mask = choice & 1;
                for orbit in 1..=half {
                    if choice >> orbit & 1 == 1 {
                        mask |= 1 << orbit;
                        mask |= 1 << (pv - orbit);
                    }
                }
                (mask, mask.count_ones() as u64)
            }
        };
        let admissible = match policy {
            SizePolicy::Balanced => cardinality == pv / 2 || cardinality == pv.div_ceil(2),
            SizePolicy::Exact(n) => cardinality == n,
            SizePolicy::Any => true,
        };
        if !admissible {
            continue;
        }
        examined += 1;
        let mut worst = 0u64;
        for table in &maps {
            let mut image = 0u64;
            let mut bits = mask;
            while bits != 0 {
                let x = bits.trailing_zeros();
                bits &= bits - 1;
                image |= 1 << table[x as usize];
            }
            worst = worst.max((mask ^ image).count_ones() as u64);
            if worst > best_count {
                break;
            }
        }
        if worst < best_count {
            best_count = worst;
            witnesses.clear();
            witnesses.push(mask);
            truncated = false;
        } else if worst == best_count {
            if witnesses.len() < WITNESS_CAP {
                witnesses.push(mask);
            } else {
                truncated = true;
            }
        }
    }
    if examined == 0 {
        return Err(Error::DegenerateParams {
            reason: "no candidate set matches the size policy".to_string(),
        });
    }
    Ok(SearchOutcome {
        p: pv,
        k,
        space,
        optimum_count: best_count,
        optimum: best_count as f64 / pv as f64,
        candidates_examined: examined,
        witnesses: witnesses
            .iter()
            .map(|&m| (0..pv).filter(|&x| m >> x & 1 == 1).collect())
            .collect(),
        witness_masks_hex: witnesses.iter().map(|m| format!("{m:x}")).collect(),
        witnesses_truncated: truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defect::defect_profile;
    use crate::indicator::IndicatorSet;

    fn prime(p: u64) -> Prime {
        Prime::new(p).unwrap()
    }

    #[test]
    fn reference_matches_hand_counts() {
        let p = prime(5);
        assert_eq!(reference_defect(&[2, 3], 1, 1, p).unwrap(), 2);
        assert_eq!(reference_defect(&[2, 3], 1, 0, p).unwrap(), 0);
        // A = {2,3}, 2A = {4,1}, symdiff = {1,2,3,4}.
        assert_eq!(reference_defect(&[2, 3], 2, 0, p).unwrap(), 4);
    }

    #[test]
    fn reference_validates_input() {
        let p = prime(5);
        assert!(matches!(
            reference_defect(&[2, 7], 1, 0, p),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            reference_defect(&[2, 2], 1, 0, p),
            Err(Error::Format { .. })
        ));
        assert!(matches!(
            reference_defect(&[2, 3], 5, 1, p),
            Err(Error::ZeroDilation { .. })
        ));
    }

    #[test]
    fn reference_agrees_with_bitset_engine() {
        // Deterministic pseudo-random set at p = 101.
        let members: Vec<u64> = (0..101u64).filter(|x| (x * 59 + 11) % 101 < 47).collect();
        let set = IndicatorSet::from_members(prime(101), members.iter().copied()).unwrap();
        let report = defect_profile(&set, 3).unwrap();
        for e in &report.grid {
            let reference =
                reference_defect(&members, e.a as i128, e.b as i128, prime(101)).unwrap();
            assert_eq!(e.count, reference, "(a, b) = ({}, {})", e.a, e.b);
        }
    }

    #[test]
    fn toy_optimum_mod_five() {
        let outcome = best_symmetric_set(prime(5), 1, SizePolicy::Exact(2), SearchSpace::All)
            .unwrap();
        assert_eq!(outcome.candidates_examined, 10, "C(5,2) two-element sets");
        assert_eq!(outcome.optimum_count, 2);
        assert_eq!(outcome.optimum, 0.4);
        assert!(
            outcome.witnesses.contains(&vec![2, 3]),
            "the symmetric interval {{2,3}} is optimal: {:?}",
            outcome.witnesses
        );
        // Every witness attains the optimum per the reference oracle.
        for w in &outcome.witnesses {
            let mut worst = 0;
            for a in [1i128, -1] {
                for b in -1i128..=1 {
                    worst = worst.max(reference_defect(w, a, b, prime(5)).unwrap());
                }
            }
            assert_eq!(worst, 2);
        }
    }

    #[test]
    fn toy_singletons_mod_three() {
        let outcome = best_symmetric_set(prime(3), 1, SizePolicy::Exact(1), SearchSpace::All)
            .unwrap();
        assert_eq!(outcome.candidates_examined, 3);
        assert_eq!(outcome.optimum_count, 2);
        assert_eq!(outcome.witnesses.len(), 3, "every singleton is optimal");
    }

    #[test]
    fn identity_grid_scores_zero() {
        let outcome = best_symmetric_set(prime(11), 0, SizePolicy::Balanced, SearchSpace::Symmetric)
            .unwrap();
        assert_eq!(outcome.optimum_count, 0);
    }

    #[test]
    fn symmetric_space_contains_only_symmetric_sets() {
        let outcome = best_symmetric_set(prime(11), 2, SizePolicy::Balanced, SearchSpace::Symmetric)
            .unwrap();
        for w in &outcome.witnesses {
            let set = IndicatorSet::from_members(prime(11), w.iter().copied()).unwrap();
            assert!(set.is_symmetric(), "{w:?}");
            assert!(set.len() == 5 || set.len() == 6);
        }
        // The optimum is reproduced by the full profiling engine.
        let witness = IndicatorSet::from_members(prime(11), outcome.witnesses[0].iter().copied())
            .unwrap();
        let report = defect_profile(&witness, 2).unwrap();
        assert_eq!(report.max_count, outcome.optimum_count);
    }

    #[test]
    fn search_cap_enforced() {
        assert!(matches!(
            best_symmetric_set(prime(53), 1, SizePolicy::Any, SearchSpace::Symmetric),
            Err(Error::SearchSpaceTooLarge { .. })
        ));
        assert!(matches!(
            best_symmetric_set(prime(29), 1, SizePolicy::Any, SearchSpace::All),
            Err(Error::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn impossible_size_policy_rejected() {
        assert!(matches!(
            best_symmetric_set(prime(5), 1, SizePolicy::Exact(9), SearchSpace::All),
            Err(Error::DegenerateParams { .. })
        ));
    }
}
