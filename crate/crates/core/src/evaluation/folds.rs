// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::ids::ParticipantId;
use crate::profiling::Grouping;
use crate::seed;
use rand::seq::SliceRandom;
use std::collections::{BTreeSet, HashMap};

/// Participant-level folds, built per group. Fold `f` of the generalized
/// condition is the union of every group's fold `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    /// `groups[g][f]` holds the participants of group `g` held out in fold `f`.
    pub groups: Vec<Vec<Vec<ParticipantId>>>,
    /// Groups with a single participant; they borrow the generalized model.
    pub singleton: Vec<bool>,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Everyone held out in fold `f`.
    pub fn test_set(&self, f: usize) -> BTreeSet<ParticipantId> {
        self.groups.iter().filter_map(|g| g.get(f)).flatten().cloned().collect()
    }

    pub fn fold_of(&self) -> HashMap<ParticipantId, usize> {
        let mut m = HashMap::new();
        for g in &self.groups {
            for (f, members) in g.iter().enumerate() {
                for p in members {
                    m.insert(p.clone(), f);
                }
            }
        }
        m
    }
}

/// Sizes of `k` near-equal parts of `m`, larger parts first.
pub fn balanced_sizes(m: usize, k: usize) -> Vec<usize> {
    let k = k.min(m).max(1);
    (0..k).map(|f| m / k + usize::from(f < m % k)).collect()
}

/// Shuffle each group's members (seeded per group) and split them into
/// min(k, size) folds.
pub fn make_folds(grouping: &Grouping, k: usize, seed: u64) -> FoldPlan {
    let mut groups = Vec::with_capacity(grouping.k());
    let mut singleton = Vec::with_capacity(grouping.k());
    for g in 0..grouping.k() {
        let mut members = grouping.members(g);
        members.sort();
        members.shuffle(&mut seed::substream(seed, &["folds", &g.to_string()]));
        let mut folds = Vec::new();
        let mut start = 0;
        for size in balanced_sizes(members.len(), k) {
            folds.push(members[start..start + size].to_vec());
            start += size;
        }
        singleton.push(members.len() == 1);
        groups.push(folds);
    }
    FoldPlan { groups, singleton }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grouping(sizes: &[usize]) -> Grouping {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for (g, &s) in sizes.iter().enumerate() {
            for i in 0..s {
                ids.push(ParticipantId::from(format!("g{g}p{i:02}")));
                labels.push(format!("{g}"));
            }
        }
        Grouping::from_labels("t", ids, &labels, &[])
    }

    #[test]
    fn five_of_five_is_leave_one_out() {
        let plan = make_folds(&grouping(&[5]), 5, 1);
        assert!(plan.groups[0].iter().all(|f| f.len() == 1));
    }

    #[test]
    fn twelve_in_five() {
        assert_eq!(balanced_sizes(12, 5), [3, 3, 2, 2, 2]);
        let plan = make_folds(&grouping(&[12]), 5, 2);
        assert_eq!(plan.groups[0].iter().map(Vec::len).collect::<Vec<_>>(), [3, 3, 2, 2, 2]);
    }

    #[test]
    fn singleton_flagged() {
        let plan = make_folds(&grouping(&[4, 1]), 5, 3);
        assert_eq!(plan.singleton, [false, true]);
        assert_eq!(plan.groups[1].len(), 1);
        assert_eq!(plan.n_folds(), 4);
    }

    #[test]
    fn folds_partition_every_group() {
        let g = grouping(&[7, 3, 12, 2]);
        let plan = make_folds(&g, 5, 4);
        for (gi, folds) in plan.groups.iter().enumerate() {
            let mut all: Vec<ParticipantId> = folds.concat();
            all.sort();
            let mut want = g.members(gi);
            want.sort();
            assert_eq!(all, want);
        }
        let total: usize = (0..plan.n_folds()).map(|f| plan.test_set(f).len()).sum();
        assert_eq!(total, 24);
        assert_eq!(make_folds(&g, 5, 4), plan);
    }
}
