//! Named training recipes and the data groups they draw from.
//!
//! A data group is a tag pattern over manifest records; each group becomes
//! one MultiReader source.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Tag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataGroup {
    /// Real recordings, no augmentation.
    Real,
    /// MTR copies of the real recordings.
    RealMtr,
    /// Synthesized from real speakers' embeddings.
    TtsReal,
    /// Synthesized from sampled voices.
    TtsSampled,
    /// MTR copies of the sampled-voice synthesis.
    TtsSampledMtr,
}

impl DataGroup {
    pub const ALL: [DataGroup; 5] = [
        DataGroup::Real,
        DataGroup::RealMtr,
        DataGroup::TtsReal,
        DataGroup::TtsSampled,
        DataGroup::TtsSampledMtr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DataGroup::Real => "real",
            DataGroup::RealMtr => "real-mtr",
            DataGroup::TtsReal => "tts-real",
            DataGroup::TtsSampled => "tts-sampled",
            DataGroup::TtsSampledMtr => "tts-sampled-mtr",
        }
    }

    pub fn matches(&self, tags: &BTreeSet<Tag>) -> bool {
        let real = tags.contains(&Tag::Real);
        let synth = tags.contains(&Tag::Synth);
        let mtr = tags.contains(&Tag::Mtr);
        match self {
            DataGroup::Real => real && !synth && !mtr,
            DataGroup::RealMtr => real && !synth && mtr,
            DataGroup::TtsReal => real && synth && !mtr,
            DataGroup::TtsSampled => !real && synth && !mtr,
            DataGroup::TtsSampledMtr => !real && synth && mtr,
        }
    }

    /// The tags a record of this group carries (pool tags aside).
    pub fn tags(&self) -> BTreeSet<Tag> {
        let v: &[Tag] = match self {
            DataGroup::Real => &[Tag::Real],
            DataGroup::RealMtr => &[Tag::Real, Tag::Mtr],
            DataGroup::TtsReal => &[Tag::Real, Tag::Synth],
            DataGroup::TtsSampled => &[Tag::Synth],
            DataGroup::TtsSampledMtr => &[Tag::Synth, Tag::Mtr],
        };
        v.iter().copied().collect()
    }
}

/// One MultiReader source: a data group, optionally restricted to voices
/// sampled from particular TTS pools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub group: DataGroup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pools: Option<Vec<usize>>,
}

impl SourceSpec {
    pub fn new(group: DataGroup) -> Self {
        Self { group, pools: None }
    }

    pub fn name(&self) -> String {
        match &self.pools {
            None => self.group.name().to_string(),
            Some(p) => {
                let dims: Vec<String> = p.iter().map(|d| format!("{d}d")).collect();
                format!("{}-{}", self.group.name(), dims.join("-"))
            }
        }
    }

    pub fn matches(&self, tags: &BTreeSet<Tag>) -> bool {
        self.group.matches(tags)
            && self.pools.as_ref().is_none_or(|p| {
                p.iter()
                    .any(|&d| Tag::pool(d).is_some_and(|t| tags.contains(&t)))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Recipe {
    Baseline,
    TtsReal,
    TtsSampled,
    TtsSampledSmall,
    BaselineMtr,
    TtsSampledMtr,
    CombinedMtr,
    /// Combined-MTR without the original recordings.
    TtsOnly,
}

impl Recipe {
    pub const ALL: [Recipe; 8] = [
        Recipe::Baseline,
        Recipe::TtsReal,
        Recipe::TtsSampled,
        Recipe::TtsSampledSmall,
        Recipe::BaselineMtr,
        Recipe::TtsSampledMtr,
        Recipe::CombinedMtr,
        Recipe::TtsOnly,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Recipe::Baseline => "Baseline",
            Recipe::TtsReal => "TTS-Real",
            Recipe::TtsSampled => "TTS-Sampled",
            Recipe::TtsSampledSmall => "TTS-Sampled-Small",
            Recipe::BaselineMtr => "Baseline-MTR",
            Recipe::TtsSampledMtr => "TTS-Sampled-MTR",
            Recipe::CombinedMtr => "Combined-MTR",
            Recipe::TtsOnly => "TTS-Only",
        }
    }

    /// Case-insensitive.
    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown recipe '{s}'")))
    }

    pub fn sources(&self) -> Vec<SourceSpec> {
        use DataGroup::*;
        let plain = |gs: &[DataGroup]| gs.iter().map(|g| SourceSpec::new(*g)).collect();
        match self {
            Recipe::Baseline => plain(&[Real]),
            Recipe::TtsReal => plain(&[Real, TtsReal]),
            Recipe::TtsSampled => plain(&[Real, TtsSampled]),
            Recipe::TtsSampledSmall => vec![
                SourceSpec::new(Real),
                SourceSpec {
                    group: TtsSampled,
                    pools: Some(vec![64]),
                },
            ],
            Recipe::BaselineMtr => plain(&[Real, RealMtr]),
            Recipe::TtsSampledMtr => plain(&[Real, TtsSampled, TtsSampledMtr]),
            Recipe::CombinedMtr => plain(&[Real, RealMtr, TtsSampled, TtsSampledMtr]),
            Recipe::TtsOnly => plain(&[TtsSampled, TtsSampledMtr]),
        }
    }

    pub fn with_mtr(&self) -> bool {
        self.sources()
            .iter()
            .any(|s| matches!(s.group, DataGroup::RealMtr | DataGroup::TtsSampledMtr))
    }
}

impl std::fmt::Display for Recipe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
