// SPDX-License-Identifier: MIT OR Apache-2.0

use super::ProfilingError;
use crate::ids::ParticipantId;
use nalgebra::DMatrix;
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

/// A partition of the cohort into dense, non-empty groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub strategy_name: String,
    /// Cohort participants; `assignment[i]` is the group of `participants[i]`.
    pub participants: Vec<ParticipantId>,
    pub assignment: Vec<usize>,
    /// One label per group.
    pub labels: Vec<String>,
    pub centroids: Option<DMatrix<f64>>,
}

impl Grouping {
    /// Build from per-participant labels. Groups follow the order of
    /// `label_order`; labels not listed there are appended by first
    /// appearance. Unused labels are dropped.
    pub fn from_labels(
        strategy: &str,
        participants: Vec<ParticipantId>,
        labels: &[String],
        label_order: &[&str],
    ) -> Grouping {
        assert_eq!(participants.len(), labels.len());
        let mut order: Vec<String> = label_order
            .iter()
            .filter(|l| labels.iter().any(|x| x == *l))
            .map(|l| l.to_string())
            .collect();
        for l in labels {
            if !order.contains(l) {
                order.push(l.clone());
            }
        }
        let index: HashMap<&str, usize> = order.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let assignment = labels.iter().map(|l| index[l.as_str()]).collect();
        Grouping {
            strategy_name: strategy.to_string(),
            participants,
            assignment,
            labels: order,
            centroids: None,
        }
    }

    /// Everyone in one group.
    pub fn single(strategy: &str, participants: Vec<ParticipantId>) -> Grouping {
        let n = participants.len();
        Grouping {
            strategy_name: strategy.to_string(),
            participants,
            assignment: vec![0; n],
            labels: vec!["all".to_string()],
            centroids: None,
        }
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.participants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.participants.is_empty()
    }

    pub fn group_of(&self, id: &ParticipantId) -> Option<usize> {
        self.participants
            .iter()
            .position(|p| p == id)
            .map(|i| self.assignment[i])
    }

    pub fn members(&self, g: usize) -> Vec<ParticipantId> {
        self.participants
            .iter()
            .zip(&self.assignment)
            .filter(|(_, &a)| a == g)
            .map(|(p, _)| p.clone())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }

    /// Adjusted Rand index against another grouping of the same
    /// participants, matched by id. `None` when the rosters differ.
    pub fn ari(&self, other: &Grouping) -> Option<f64> {
        if self.len() != other.len() {
            return None;
        }
        let theirs: Option<Vec<usize>> = self.participants.iter().map(|p| other.group_of(p)).collect();
        Some(adjusted_rand_index(&self.assignment, &theirs?))
    }

    pub fn assignment_map(&self) -> BTreeMap<ParticipantId, usize> {
        self.participants
            .iter()
            .cloned()
            .zip(self.assignment.iter().copied())
            .collect()
    }

    /// Check the partition invariants.
    pub fn validate(&self) -> Result<(), ProfilingError> {
        let bad = |why: String| Err(ProfilingError::InvalidGrouping(why));
        if self.participants.len() != self.assignment.len() {
            return bad("assignment length differs from participant count".into());
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.participants {
            if !seen.insert(p) {
                return bad(format!("participant {p} assigned twice"));
            }
        }
        if let Some(&a) = self.assignment.iter().find(|&&a| a >= self.k()) {
            return bad(format!("group id {a} out of range"));
        }
        if let Some(g) = self.sizes().iter().position(|&s| s == 0) {
            return bad(format!("group {g} is empty"));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        write_groupings(std::slice::from_ref(self), w)
    }
}

/// `strategy,participant_id,group_id` rows for every grouping.
pub fn write_groupings<W: Write>(groupings: &[Grouping], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["strategy", "participant_id", "group_id"])?;
    for g in groupings {
        for (p, a) in g.participants.iter().zip(&g.assignment) {
            out.write_record([g.strategy_name.as_str(), p.as_str(), &a.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read groupings back, one per strategy in file order. Labels become
/// `g<id>`.
pub fn read_groupings<R: Read>(r: R) -> Result<Vec<Grouping>, ProfilingError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr
        .headers()
        .map_err(|e| ProfilingError::GroupsCsv {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ProfilingError::GroupsCsv {
                line: 1,
                reason: format!("missing column `{name}`"),
            })
    };
    let (cs, cp, cg) = (col("strategy")?, col("participant_id")?, col("group_id")?);
    let mut out: Vec<(String, Vec<ParticipantId>, Vec<usize>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ProfilingError::GroupsCsv {
            line,
            reason: e.to_string(),
        })?;
        let s = rec.get(cs).unwrap_or("");
        let p = rec.get(cp).unwrap_or("");
        let g: usize = rec
            .get(cg)
            .unwrap_or("")
            .parse()
            .map_err(|_| ProfilingError::GroupsCsv {
                line,
                reason: "group_id is not a non-negative integer".into(),
            })?;
        match out.iter_mut().find(|(name, _, _)| name == s) {
            Some((_, ps, gs)) => {
                ps.push(p.into());
                gs.push(g);
            }
            None => out.push((s.to_string(), vec![p.into()], vec![g])),
        }
    }
    out.into_iter()
        .map(|(strategy_name, participants, assignment)| {
            let k = assignment.iter().max().map_or(0, |m| m + 1);
            let g = Grouping {
                strategy_name,
                participants,
                assignment,
                labels: (0..k).map(|i| format!("g{i}")).collect(),
                centroids: None,
            };
            g.validate()?;
            Ok(g)
        })
        .collect()
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let c2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ra: HashMap<usize, f64> = HashMap::new();
    let mut rb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(n);
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// True when two labelings induce the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}
