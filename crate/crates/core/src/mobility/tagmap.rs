// SPDX-License-Identifier: MIT OR Apache-2.0

use super::MobilityError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Coarse place category an OSM tag maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PlaceCategory {
    House,
    Education,
    Leisure,
}

impl PlaceCategory {
    pub const ALL: [PlaceCategory; 3] = [PlaceCategory::House, PlaceCategory::Education, PlaceCategory::Leisure];
}

impl fmt::Display for PlaceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlaceCategory::House => "house",
            PlaceCategory::Education => "education",
            PlaceCategory::Leisure => "leisure",
        })
    }
}

impl FromStr for PlaceCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "house" => Ok(PlaceCategory::House),
            "education" => Ok(PlaceCategory::Education),
            "leisure" => Ok(PlaceCategory::Leisure),
            other => Err(other.to_string()),
        }
    }
}

/// Mapping from `osm_tag` strings to place categories.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TagMap {
    tags: BTreeMap<String, PlaceCategory>,
}

impl TagMap {
    /// Parse `osm_tag = category` lines. Blank lines and `#` comments are
    /// skipped; lines naming an unknown category are ignored and reported.
    pub fn parse(text: &str) -> Result<(TagMap, Vec<String>), MobilityError> {
        let mut tags = BTreeMap::new();
        let mut warnings = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((tag, category)) = line.split_once('=') else {
                return Err(MobilityError::TagMapSyntax { line: n + 1 });
            };
            let (tag, category) = (tag.trim(), category.trim());
            if tag.is_empty() {
                return Err(MobilityError::TagMapSyntax { line: n + 1 });
            }
            match category.parse::<PlaceCategory>() {
                Ok(c) => {
                    tags.insert(tag.to_string(), c);
                }
                Err(other) => warnings.push(format!("line {}: unknown category `{other}` for tag `{tag}`", n + 1)),
            }
        }
        Ok((TagMap { tags }, warnings))
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, PlaceCategory)>) -> TagMap {
        TagMap {
            tags: pairs.into_iter().map(|(t, c)| (t.to_string(), c)).collect(),
        }
    }

    /// Every category must be reachable from at least one tag.
    pub fn validate(&self) -> Result<(), MobilityError> {
        for c in PlaceCategory::ALL {
            if !self.tags.values().any(|&v| v == c) {
                return Err(MobilityError::TagMapIncomplete(c));
            }
        }
        Ok(())
    }

    pub fn category(&self, tag: &str) -> Option<PlaceCategory> {
        self.tags.get(tag).copied()
    }

    pub fn to_text(&self) -> String {
        self.tags.iter().map(|(t, c)| format!("{t} = {c}\n")).collect()
    }
}

/// Common OSM tags for residential, education and leisure places.
pub fn default_tag_map() -> TagMap {
    use PlaceCategory::*;
    TagMap::from_pairs([
        ("apartments", House),
        ("dormitory", House),
        ("house", House),
        ("residential", House),
        ("detached", House),
        ("university", Education),
        ("college", Education),
        ("library", Education),
        ("school", Education),
        ("restaurant", Leisure),
        ("cafe", Leisure),
        ("cinema", Leisure),
        ("bar", Leisure),
        ("pub", Leisure),
        ("park", Leisure),
        ("fitness_centre", Leisure),
        ("mall", Leisure),
    ])
}
