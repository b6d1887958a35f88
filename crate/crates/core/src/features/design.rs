// SPDX-License-Identifier: MIT OR Apache-2.0

use super::profile::BehaviorProfile;
use super::FeatureError;
use crate::ids::ParticipantId;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

/// A passively sensed profile modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Location,
    Activity,
    Sms,
    Calls,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Location, Modality::Activity, Modality::Sms, Modality::Calls];

    /// Number of levels in the modality's block.
    pub fn width(self) -> usize {
        match self {
            Modality::Location => 5,
            Modality::Activity => 3,
            Modality::Sms => 5,
            Modality::Calls => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Location => "location",
            Modality::Activity => "activity",
            Modality::Sms => "sms",
            Modality::Calls => "calls",
        }
    }

    pub fn slice(self, p: &BehaviorProfile) -> &[f64] {
        match self {
            Modality::Location => &p.location,
            Modality::Activity => &p.activity,
            Modality::Sms => &p.sms,
            Modality::Calls => &p.calls,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub width: usize,
}

/// Participant rows of concatenated modality blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub row_ids: Vec<ParticipantId>,
    pub blocks: Vec<BlockSpec>,
}

impl DesignMatrix {
    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn block_range(&self, name: &str) -> Option<Range<usize>> {
        let mut start = 0;
        for b in &self.blocks {
            if b.name == name {
                return Some(start..start + b.width);
            }
            start += b.width;
        }
        None
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Append a block whose row for each participant comes from `f`.
    pub fn with_block(mut self, name: &str, width: usize, f: impl Fn(&ParticipantId) -> Vec<f64>) -> DesignMatrix {
        let old = self.x.ncols();
        let mut x = self.x.clone().resize_horizontally(old + width, 0.0);
        for (i, id) in self.row_ids.iter().enumerate() {
            let row = f(id);
            assert_eq!(row.len(), width, "block `{name}` row width");
            for (j, v) in row.into_iter().enumerate() {
                x[(i, old + j)] = v;
            }
        }
        self.x = x;
        self.blocks.push(BlockSpec {
            name: name.to_string(),
            width,
        });
        self
    }
}

/// One row per participant in `ids` order, modality blocks in the order
/// requested.
pub fn build_design_matrix(
    profiles: &BTreeMap<ParticipantId, BehaviorProfile>,
    ids: &[ParticipantId],
    modalities: &[Modality],
) -> Result<DesignMatrix, FeatureError> {
    if modalities.is_empty() {
        return Err(FeatureError::NoModalities);
    }
    let d: usize = modalities.iter().map(|m| m.width()).sum();
    let mut x = DMatrix::zeros(ids.len(), d);
    for (i, id) in ids.iter().enumerate() {
        let mut col = 0;
        for &m in modalities {
            let p = profiles.get(id).ok_or_else(|| FeatureError::MissingProfile {
                participant: id.to_string(),
                modality: m,
            })?;
            for &v in m.slice(p) {
                x[(i, col)] = v;
                col += 1;
            }
        }
    }
    Ok(DesignMatrix {
        x,
        row_ids: ids.to_vec(),
        blocks: modalities
            .iter()
            .map(|m| BlockSpec {
                name: m.name().to_string(),
                width: m.width(),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ProfileFlags;

    fn profile(id: &str, k: f64) -> BehaviorProfile {
        BehaviorProfile {
            participant_id: id.into(),
            location: [k, 0.1, 0.2, 0.3, 0.4 - k],
            activity: [0.5, 0.25, 0.25],
            sms: [0.6, 0.1, 0.1, 0.1, 0.1],
            calls: [0.7, k, 0.3 - k, 0.0],
            flags: ProfileFlags::default(),
        }
    }

    fn profiles() -> BTreeMap<ParticipantId, BehaviorProfile> {
        [profile("a", 0.05), profile("b", 0.15)]
            .into_iter()
            .map(|p| (p.participant_id.clone(), p))
            .collect()
    }

    #[test]
    fn widths() {
        let ids: Vec<ParticipantId> = vec!["a".into(), "b".into()];
        let dm = build_design_matrix(&profiles(), &ids, &[Modality::Location]).unwrap();
        assert_eq!(dm.ncols(), 5);
        let dm = build_design_matrix(&profiles(), &ids, &Modality::ALL).unwrap();
        assert_eq!(dm.ncols(), 5 + 3 + 5 + 4);
        assert_eq!(dm.nrows(), 2);
    }

    #[test]
    fn empty_modalities_rejected() {
        let ids: Vec<ParticipantId> = vec!["a".into()];
        assert!(matches!(
            build_design_matrix(&profiles(), &ids, &[]),
            Err(FeatureError::NoModalities)
        ));
    }

    #[test]
    fn missing_profile() {
        let ids: Vec<ParticipantId> = vec!["a".into(), "zz".into()];
        let err = build_design_matrix(&profiles(), &ids, &[Modality::Calls]).unwrap_err();
        assert!(
            matches!(err, FeatureError::MissingProfile { participant, modality: Modality::Calls } if participant == "zz")
        );
    }

    #[test]
    fn block_slices_reproduce_profiles() {
        let ps = profiles();
        let ids: Vec<ParticipantId> = ps.keys().cloned().collect();
        let order = [Modality::Calls, Modality::Location, Modality::Sms];
        let dm = build_design_matrix(&ps, &ids, &order).unwrap();
        for (i, id) in ids.iter().enumerate() {
            let row = dm.row(i);
            for m in order {
                let r = dm.block_range(m.name()).unwrap();
                assert_eq!(&row[r], m.slice(&ps[id]));
            }
        }
        let dm = dm.with_block("extra", 2, |id| vec![id.as_str().len() as f64, 1.0]);
        assert_eq!(dm.block_range("extra"), Some(14..16));
        assert_eq!(dm.x[(1, 15)], 1.0);
    }
}
