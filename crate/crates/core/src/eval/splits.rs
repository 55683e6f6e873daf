//! Known/unknown class splits for open-set runs. A group fixes which
//! classes count as known; each run within a group gets its own seed for
//! downstream shuffling and initialization.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{mix, mix2, rng};

const TAG_GROUP: u64 = 0x61;
const TAG_RUN: u64 = 0x62;

/// How many times a group's known-set draw may collide with an earlier
/// group before we give up.
const RETRY_BOUND: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub group: usize,
    pub run: usize,
    pub known: Vec<usize>,
    pub unknown: Vec<usize>,
    pub seed: u64,
}

/// Draw `groups` distinct known-sets of `known_count` classes and repeat
/// each as `runs_per_group` runs with distinct seeds. Deterministic.
pub fn make_splits(
    class_ids: &[usize],
    known_count: usize,
    groups: usize,
    runs_per_group: usize,
    seed: u64,
) -> Result<Vec<SplitSpec>> {
    let mut classes = class_ids.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return Err(Error::EmptyInput("no classes to split".into()));
    }
    if known_count == 0 || known_count >= classes.len() {
        return Err(Error::InvalidParameter(format!(
            "known_count must be in 1..{} (classes), got {known_count}",
            classes.len()
        )));
    }
    if groups == 0 || runs_per_group == 0 {
        return Err(Error::InvalidParameter(
            "groups and runs_per_group must be >= 1".into(),
        ));
    }

    let mut known_sets: Vec<Vec<usize>> = Vec::with_capacity(groups);
    for g in 0..groups {
        let mut attempt = 0;
        let known = loop {
            let mut pool = classes.clone();
            pool.shuffle(&mut rng(mix2(
                mix(seed, TAG_GROUP),
                g as u64,
                attempt as u64,
            )));
            let mut candidate: Vec<usize> = pool[..known_count].to_vec();
            candidate.sort_unstable();
            if !known_sets.contains(&candidate) {
                break candidate;
            }
            attempt += 1;
            if attempt >= RETRY_BOUND {
                return Err(Error::Invalid(format!(
                    "could not draw {groups} distinct known-sets of {known_count} \
                     from {} classes within {RETRY_BOUND} retries",
                    classes.len()
                )));
            }
        };
        known_sets.push(known);
    }

    let mut splits = Vec::with_capacity(groups * runs_per_group);
    for (g, known) in known_sets.iter().enumerate() {
        let unknown: Vec<usize> = classes
            .iter()
            .copied()
            .filter(|c| !known.contains(c))
            .collect();
        for r in 0..runs_per_group {
            splits.push(SplitSpec {
                group: g,
                run: r,
                known: known.clone(),
                unknown: unknown.clone(),
                seed: mix2(mix(seed, TAG_RUN), g as u64, r as u64),
            });
        }
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn reference_scale_split_counts() {
        let classes: Vec<usize> = (0..9).collect();
        let splits = make_splits(&classes, 6, 3, 10, 7).unwrap();
        assert_eq!(splits.len(), 30);
        let known_sets: BTreeSet<Vec<usize>> = splits.iter().map(|s| s.known.clone()).collect();
        assert_eq!(known_sets.len(), 3);
        for s in &splits {
            assert_eq!(s.known.len(), 6);
            assert_eq!(s.unknown.len(), 3);
        }
    }

    #[test]
    fn known_and_unknown_partition_the_classes() {
        let classes: Vec<usize> = vec![3, 1, 4, 1, 5, 9, 2, 6];
        let splits = make_splits(&classes, 4, 3, 2, 11).unwrap();
        let all: BTreeSet<usize> = classes.iter().copied().collect();
        for s in &splits {
            let known: BTreeSet<usize> = s.known.iter().copied().collect();
            let unknown: BTreeSet<usize> = s.unknown.iter().copied().collect();
            assert!(known.is_disjoint(&unknown));
            let union: BTreeSet<usize> = known.union(&unknown).copied().collect();
            assert_eq!(union, all);
        }
    }

    #[test]
    fn single_split() {
        let splits = make_splits(&[0, 1, 2], 2, 1, 1, 0).unwrap();
        assert_eq!(splits.len(), 1);
        assert_eq!(splits[0].group, 0);
        assert_eq!(splits[0].run, 0);
    }

    #[test]
    fn deterministic_per_seed() {
        let classes: Vec<usize> = (0..9).collect();
        let a = make_splits(&classes, 6, 3, 10, 42).unwrap();
        let b = make_splits(&classes, 6, 3, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = make_splits(&classes, 6, 3, 10, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn run_seeds_are_distinct() {
        let splits = make_splits(&(0..9).collect::<Vec<_>>(), 6, 3, 10, 1).unwrap();
        let seeds: BTreeSet<u64> = splits.iter().map(|s| s.seed).collect();
        assert_eq!(seeds.len(), splits.len());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(make_splits(&[0, 1, 2], 3, 1, 1, 0).is_err());
        assert!(make_splits(&[0, 1, 2], 0, 1, 1, 0).is_err());
        assert!(make_splits(&[], 1, 1, 1, 0).is_err());
        assert!(make_splits(&[0, 1, 2], 2, 1, 0, 0).is_err());
    }

    #[test]
    fn more_groups_than_combinations_errors() {
        // C(3, 2) = 3 possible known-sets; asking for 4 distinct groups
        // must exhaust the retry bound.
        assert!(make_splits(&[0, 1, 2], 2, 4, 1, 0).is_err());
    }
}
