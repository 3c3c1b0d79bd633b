//! Closed demographic vocabularies. Values outside them are rejected on parse.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicCategory {
    Gender,
    Orientation,
    Identity,
    Ethnicity,
}

impl DemographicCategory {
    pub const ALL: [DemographicCategory; 4] = [
        DemographicCategory::Gender,
        DemographicCategory::Orientation,
        DemographicCategory::Identity,
        DemographicCategory::Ethnicity,
    ];

    pub fn vocabulary(self) -> &'static [&'static str] {
        match self {
            DemographicCategory::Gender => GENDERS,
            DemographicCategory::Orientation => ORIENTATIONS,
            DemographicCategory::Identity => IDENTITIES,
            DemographicCategory::Ethnicity => ETHNICITIES,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DemographicCategory::Gender => "Gender",
            DemographicCategory::Orientation => "Orientation",
            DemographicCategory::Identity => "Identity",
            DemographicCategory::Ethnicity => "Ethnicity",
        }
    }
}

impl fmt::Display for DemographicCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const GENDERS: &[&str] = &["Male", "Female", "Trans Male", "Trans Female", "Non-binary", "Agender"];

pub const ORIENTATIONS: &[&str] = &["Heterosexual", "Gay or Lesbian", "Bisexual", "Asexual", "Unsure"];

pub const IDENTITIES: &[&str] = &[
    "Canadian Culture",
    "Disabled",
    "Refugee",
    "Spiritual",
    "Deaf",
    "First Nations",
    "Invisible Disability",
    "Other",
    "Prefer not to Answer",
];

pub const ETHNICITIES: &[&str] = &[
    "European Ancestry",
    "African or Caribbean",
    "Indigenous",
    "East or South-East Asian",
    "Middle Eastern",
    "Latin American",
    "South Asian",
    "Unspecified",
];

/// Optional survey answers. Each present value is one entry of its
/// category's vocabulary, stored as a `&'static str`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DemographicSurvey {
    pub gender: Option<&'static str>,
    pub orientation: Option<&'static str>,
    pub identity: Option<&'static str>,
    pub ethnicity: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{category} value {value:?} is not in the closed vocabulary")]
pub struct UnknownDemographic {
    pub category: DemographicCategory,
    pub value: String,
}

pub fn canonical_value(category: DemographicCategory, value: &str) -> Result<&'static str, UnknownDemographic> {
    category
        .vocabulary()
        .iter()
        .copied()
        .find(|v| *v == value)
        .ok_or_else(|| UnknownDemographic {
            category,
            value: value.to_string(),
        })
}

impl DemographicSurvey {
    pub fn get(&self, category: DemographicCategory) -> Option<&'static str> {
        match category {
            DemographicCategory::Gender => self.gender,
            DemographicCategory::Orientation => self.orientation,
            DemographicCategory::Identity => self.identity,
            DemographicCategory::Ethnicity => self.ethnicity,
        }
    }

    pub fn set(&mut self, category: DemographicCategory, value: Option<&str>) -> Result<(), UnknownDemographic> {
        let v = value.map(|v| canonical_value(category, v)).transpose()?;
        match category {
            DemographicCategory::Gender => self.gender = v,
            DemographicCategory::Orientation => self.orientation = v,
            DemographicCategory::Identity => self.identity = v,
            DemographicCategory::Ethnicity => self.ethnicity = v,
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RawSurvey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    identity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ethnicity: Option<String>,
}

impl Serialize for DemographicSurvey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        RawSurvey {
            gender: self.gender.map(str::to_string),
            orientation: self.orientation.map(str::to_string),
            identity: self.identity.map(str::to_string),
            ethnicity: self.ethnicity.map(str::to_string),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DemographicSurvey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawSurvey::deserialize(deserializer)?;
        let mut survey = DemographicSurvey::default();
        let fields = [
            (DemographicCategory::Gender, raw.gender),
            (DemographicCategory::Orientation, raw.orientation),
            (DemographicCategory::Identity, raw.identity),
            (DemographicCategory::Ethnicity, raw.ethnicity),
        ];
        for (category, value) in fields {
            survey
                .set(category, value.as_deref())
                .map_err(serde::de::Error::custom)?;
        }
        Ok(survey)
    }
}
