//! Binary property attributes mined from listing descriptions by
//! case-insensitive phrase search.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One minable attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    SouthFacing,
    AtticConversion,
    Parking,
    DevelopmentPotential,
    OpenPlan,
    Fireplace,
    CentralHeating,
    Immersion,
    HotPress,
    Garage,
    LargeGarden,
    GroundFloorApartment,
    FirstFloorApartment,
    SecondFloorApartment,
    PenthouseApartment,
    Refurbished,
    CulDeSac,
    Garden,
}

impl Feature {
    pub const ALL: [Feature; 18] = [
        Feature::SouthFacing,
        Feature::AtticConversion,
        Feature::Parking,
        Feature::DevelopmentPotential,
        Feature::OpenPlan,
        Feature::Fireplace,
        Feature::CentralHeating,
        Feature::Immersion,
        Feature::HotPress,
        Feature::Garage,
        Feature::LargeGarden,
        Feature::GroundFloorApartment,
        Feature::FirstFloorApartment,
        Feature::SecondFloorApartment,
        Feature::PenthouseApartment,
        Feature::Refurbished,
        Feature::CulDeSac,
        Feature::Garden,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Feature::SouthFacing => "south_facing",
            Feature::AtticConversion => "attic_conversion",
            Feature::Parking => "parking",
            Feature::DevelopmentPotential => "development_potential",
            Feature::OpenPlan => "open_plan",
            Feature::Fireplace => "fireplace",
            Feature::CentralHeating => "central_heating",
            Feature::Immersion => "immersion",
            Feature::HotPress => "hot_press",
            Feature::Garage => "garage",
            Feature::LargeGarden => "large_garden",
            Feature::GroundFloorApartment => "ground_floor_apartment",
            Feature::FirstFloorApartment => "first_floor_apartment",
            Feature::SecondFloorApartment => "second_floor_apartment",
            Feature::PenthouseApartment => "penthouse_apartment",
            Feature::Refurbished => "refurbished",
            Feature::CulDeSac => "cul_de_sac",
            Feature::Garden => "garden",
        }
    }

    fn index(&self) -> usize {
        Feature::ALL.iter().position(|f| f == self).unwrap()
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown feature '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MinedFeatures {
    flags: [bool; 18],
    pub garden_cc: bool,
    pub car_space_cc: bool,
}

impl MinedFeatures {
    pub fn get(&self, f: Feature) -> bool {
        self.flags[f.index()]
    }

    pub fn set(&mut self, f: Feature, on: bool) {
        self.flags[f.index()] = on;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, bool)> + '_ {
        Feature::ALL.iter().map(move |f| (*f, self.get(*f)))
    }

    pub fn all_set() -> Self {
        Self {
            flags: [true; 18],
            garden_cc: true,
            car_space_cc: true,
        }
    }
}

/// Feature name to trigger phrases. Phrases are stored lower-cased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseLexicon {
    triggers: BTreeMap<Feature, Vec<String>>,
}

const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.txt");

impl PhraseLexicon {
    pub fn new(triggers: BTreeMap<Feature, Vec<String>>) -> Result<Self> {
        let triggers: BTreeMap<_, Vec<String>> = triggers
            .into_iter()
            .map(|(f, ps)| {
                let ps: Vec<String> = ps
                    .into_iter()
                    .map(|p| p.trim().to_lowercase())
                    .filter(|p| !p.is_empty())
                    .collect();
                (f, ps)
            })
            .collect();
        for f in Feature::ALL {
            if triggers.get(&f).is_none_or(|v| v.is_empty()) {
                return Err(Error::Config(format!("lexicon has no trigger phrase for '{f}'")));
            }
        }
        Ok(Self { triggers })
    }

    pub fn dublin_default() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses `feature_name: phrase1 | phrase2` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut triggers: BTreeMap<Feature, Vec<String>> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, phrases) = line.split_once(':').ok_or_else(|| {
                Error::Config(format!("lexicon line {}: expected 'feature: phrases'", lineno + 1))
            })?;
            let feature: Feature = name.parse()?;
            triggers
                .entry(feature)
                .or_default()
                .extend(phrases.split('|').map(str::to_string));
        }
        Self::new(triggers)
    }

    pub fn triggers(&self, f: Feature) -> &[String] {
        &self.triggers[&f]
    }
}

/// Sets each flag iff one of its triggers occurs in `description`, ignoring case.
/// Interaction flags are left unset.
pub fn mine(description: &str, lexicon: &PhraseLexicon) -> MinedFeatures {
    let text = description.to_lowercase();
    let mut out = MinedFeatures::default();
    for f in Feature::ALL {
        let hit = lexicon.triggers(f).iter().any(|p| text.contains(p.as_str()));
        out.set(f, hit);
    }
    out
}

/// City-centre interactions for gardens and parking.
pub fn apply_interactions(mut features: MinedFeatures, within_cc: bool) -> MinedFeatures {
    features.garden_cc = features.get(Feature::Garden) && within_cc;
    features.car_space_cc = features.get(Feature::Parking) && within_cc;
    features
}

/// Number of records with each flag set.
pub fn tabulate<'a, I>(corpus: I) -> BTreeMap<Feature, usize>
where
    I: IntoIterator<Item = &'a MinedFeatures>,
{
    let mut counts: BTreeMap<Feature, usize> = Feature::ALL.iter().map(|f| (*f, 0)).collect();
    for m in corpus {
        for (f, on) in m.iter() {
            if on {
                *counts.get_mut(&f).unwrap() += 1;
            }
        }
    }
    counts
}
