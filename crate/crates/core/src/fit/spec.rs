//! Model specifications: which terms enter each named model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::PropertyRecord;
use crate::error::{Error, Result};
use crate::textmine::Feature;

/// Default knot counts.
pub const BEDS_BATHS_KNOTS: usize = 5;
pub const SIZE_IFSC_KNOTS: usize = 20;
pub const SPATIAL_KNOTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelName {
    BasicLinear,
    Linear,
    Gam1,
    Gam2,
    Gam3,
    Gam4,
    Gam5,
    Gam6,
}

impl ModelName {
    pub const ALL: [ModelName; 8] = [
        ModelName::BasicLinear,
        ModelName::Linear,
        ModelName::Gam1,
        ModelName::Gam2,
        ModelName::Gam3,
        ModelName::Gam4,
        ModelName::Gam5,
        ModelName::Gam6,
    ];

    /// Models compared under given postcodes, in reporting order.
    pub const COMPARISON: [ModelName; 6] = [
        ModelName::BasicLinear,
        ModelName::Linear,
        ModelName::Gam1,
        ModelName::Gam2,
        ModelName::Gam3,
        ModelName::Gam4,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ModelName::BasicLinear => "BasicLinear",
            ModelName::Linear => "Linear",
            ModelName::Gam1 => "GAM1",
            ModelName::Gam2 => "GAM2",
            ModelName::Gam3 => "GAM3",
            ModelName::Gam4 => "GAM4",
            ModelName::Gam5 => "GAM5",
            ModelName::Gam6 => "GAM6",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            ModelName::BasicLinear => "Basic Linear Model",
            ModelName::Linear => "Linear Model",
            ModelName::Gam1 => "GAM 1",
            ModelName::Gam2 => "GAM 2",
            ModelName::Gam3 => "GAM 3",
            ModelName::Gam4 => "GAM 4",
            ModelName::Gam5 => "GAM 5",
            ModelName::Gam6 => "GAM 6",
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| !c.is_whitespace() && *c != '_').collect();
        ModelName::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| {
                let valid: Vec<_> = ModelName::ALL.iter().map(|m| m.label()).collect();
                Error::Spec(format!("unknown model spec '{s}'; valid names: {}", valid.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PostcodeMode {
    Given,
    Corrected,
    /// Corrected postcodes plus one dummy per investigated relabelling.
    CorrectedWithChanges,
}

impl PostcodeMode {
    pub fn label(&self) -> &'static str {
        match self {
            PostcodeMode::Given => "given",
            PostcodeMode::Corrected => "corrected",
            PostcodeMode::CorrectedWithChanges => "corrected+changes",
        }
    }
}

impl fmt::Display for PostcodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PostcodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "given" => Ok(PostcodeMode::Given),
            "corrected" => Ok(PostcodeMode::Corrected),
            "corrected+changes" => Ok(PostcodeMode::CorrectedWithChanges),
            other => Err(Error::Spec(format!(
                "unknown postcode mode '{other}'; valid: given, corrected, corrected+changes"
            ))),
        }
    }
}

/// A numeric covariate read off a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variable {
    Size,
    Beds,
    Baths,
    IfscKm,
    NearAirport,
    WithinCityCentre,
    NearDart,
    NearLuas,
    NearPark,
    Mined(Feature),
    GardenCc,
    CarSpaceCc,
}

impl Variable {
    pub fn name(&self) -> &'static str {
        match self {
            Variable::Size => "size",
            Variable::Beds => "beds",
            Variable::Baths => "baths",
            Variable::IfscKm => "ifsc_km",
            Variable::NearAirport => "near_airport",
            Variable::WithinCityCentre => "within_city_centre",
            Variable::NearDart => "near_dart",
            Variable::NearLuas => "near_luas",
            Variable::NearPark => "near_park",
            Variable::Mined(f) => f.name(),
            Variable::GardenCc => "garden_cc",
            Variable::CarSpaceCc => "car_space_cc",
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, Variable::Size | Variable::Beds | Variable::Baths | Variable::IfscKm)
    }

    pub fn value(&self, r: &PropertyRecord) -> f64 {
        let b = |v: bool| if v { 1.0 } else { 0.0 };
        match self {
            Variable::Size => r.size,
            Variable::Beds => r.beds as f64,
            Variable::Baths => r.baths as f64,
            Variable::IfscKm => r.distances.ifsc_km,
            Variable::NearAirport => b(r.distances.near_airport),
            Variable::WithinCityCentre => b(r.distances.within_city_centre),
            Variable::NearDart => b(r.distances.near_dart),
            Variable::NearLuas => b(r.distances.near_luas),
            Variable::NearPark => b(r.distances.near_park),
            Variable::Mined(f) => b(r.mined.get(*f)),
            Variable::GardenCc => b(r.mined.garden_cc),
            Variable::CarSpaceCc => b(r.mined.car_space_cc),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let fixed = [
            Variable::Size,
            Variable::Beds,
            Variable::Baths,
            Variable::IfscKm,
            Variable::NearAirport,
            Variable::WithinCityCentre,
            Variable::NearDart,
            Variable::NearLuas,
            Variable::NearPark,
            Variable::GardenCc,
            Variable::CarSpaceCc,
        ];
        if let Some(v) = fixed.into_iter().find(|v| v.name() == s) {
            return Ok(v);
        }
        Feature::from_str(s)
            .map(Variable::Mined)
            .map_err(|_| Error::Spec(format!("unknown term '{s}'")))
    }
}

impl Serialize for Variable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Variable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    PropertyType,
    Ber,
    Postcode,
}

impl Factor {
    pub fn name(&self) -> &'static str {
        match self {
            Factor::PropertyType => "property_type",
            Factor::Ber => "ber",
            Factor::Postcode => "postcode",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothSpec {
    pub variable: Variable,
    pub knots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialSpec {
    pub knots: usize,
    /// Kernel range in km; `None` uses the largest knot separation.
    pub rho: Option<f64>,
    pub knot_seed: u64,
}

impl Default for SpatialSpec {
    fn default() -> Self {
        Self {
            knots: SPATIAL_KNOTS,
            rho: None,
            knot_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub linear: Vec<Variable>,
    pub factors: Vec<Factor>,
    pub smooths: Vec<SmoothSpec>,
    pub spatial: Option<SpatialSpec>,
    pub postcode_mode: PostcodeMode,
}

fn mined(fs: &[Feature]) -> Vec<Variable> {
    fs.iter().copied().map(Variable::Mined).collect()
}

fn smooth(variable: Variable) -> SmoothSpec {
    let knots = match variable {
        Variable::Beds | Variable::Baths => BEDS_BATHS_KNOTS,
        _ => SIZE_IFSC_KNOTS,
    };
    SmoothSpec { variable, knots }
}

impl ModelSpec {
    pub fn intercept_only() -> Self {
        Self {
            name: "Intercept".into(),
            linear: vec![],
            factors: vec![],
            smooths: vec![],
            spatial: None,
            postcode_mode: PostcodeMode::Given,
        }
    }

    /// The term set of a named model. GAM5 and GAM6 always use corrected
    /// postcodes with relabelling dummies; other models take `mode`, and any
    /// non-given mode selects their corrected-postcode variant.
    pub fn named(name: ModelName, mode: PostcodeMode) -> Self {
        use Feature::*;
        use Variable::*;

        let mode = match name {
            ModelName::Gam5 | ModelName::Gam6 => PostcodeMode::CorrectedWithChanges,
            _ => mode,
        };
        let corrected = mode != PostcodeMode::Given;
        let all_factors = vec![Factor::PropertyType, Factor::Ber, Factor::Postcode];
        let core = [
            AtticConversion,
            SouthFacing,
            DevelopmentPotential,
            Fireplace,
            HotPress,
            Garage,
            Refurbished,
        ];
        let floors = [
            GroundFloorApartment,
            FirstFloorApartment,
            SecondFloorApartment,
            PenthouseApartment,
        ];
        let binaries = |extra: &[Feature]| -> Vec<Variable> {
            let mut v = mined(&core);
            v.extend(mined(extra));
            v.push(Mined(OpenPlan));
            v.extend(mined(&floors));
            v
        };

        let (linear, smooths, spatial) = match name {
            ModelName::BasicLinear => (vec![Size, Beds, Baths, IfscKm], vec![], false),
            ModelName::Linear => {
                let mut l = binaries(&[Immersion, Parking]);
                l.extend([NearPark, IfscKm, NearAirport, NearDart, NearLuas, Size, GardenCc, CarSpaceCc]);
                (l, vec![], false)
            }
            ModelName::Gam1 => {
                let extra: &[Feature] = if corrected { &[] } else { &[Immersion] };
                let mut l = binaries(extra);
                l.extend([NearPark, NearAirport, NearDart, NearLuas, CarSpaceCc]);
                let mut s = vec![smooth(IfscKm), smooth(Size), smooth(Beds)];
                if corrected {
                    s.push(smooth(Baths));
                } else {
                    l.push(Baths);
                }
                (l, s, false)
            }
            ModelName::Gam2 => {
                let extra: &[Feature] = if corrected { &[Parking] } else { &[] };
                let mut l = binaries(extra);
                l.extend([IfscKm, NearAirport, NearDart, NearLuas, Size, GardenCc, CarSpaceCc, Beds, Baths]);
                (l, vec![], true)
            }
            ModelName::Gam3 | ModelName::Gam5 => {
                let mut l = binaries(&[Parking]);
                l.push(CarSpaceCc);
                (l, vec![smooth(Size), smooth(Beds), smooth(Baths)], true)
            }
            ModelName::Gam4 | ModelName::Gam6 => {
                if corrected {
                    let mut l = binaries(&[Parking]);
                    l.extend([NearPark, NearAirport, NearDart, NearLuas, CarSpaceCc, Beds, Baths]);
                    (l, vec![smooth(IfscKm), smooth(Size)], true)
                } else {
                    let mut l = binaries(&[]);
                    l.extend([NearAirport, NearDart, NearLuas, CarSpaceCc]);
                    (l, vec![smooth(IfscKm), smooth(Size), smooth(Beds), smooth(Baths)], true)
                }
            }
        };
        Self {
            name: name.label().to_string(),
            linear,
            factors: all_factors,
            smooths,
            spatial: spatial.then(SpatialSpec::default),
            postcode_mode: mode,
        }
    }

    /// Builds a spec from term names, as accepted on the command line.
    pub fn custom(
        name: &str,
        linear: &[&str],
        smooths: &[(&str, usize)],
        factors: &[Factor],
        spatial: Option<SpatialSpec>,
        postcode_mode: PostcodeMode,
    ) -> Result<Self> {
        let spec = Self {
            name: name.to_string(),
            linear: linear.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            factors: factors.to_vec(),
            smooths: smooths
                .iter()
                .map(|(s, k)| Ok(SmoothSpec { variable: s.parse()?, knots: *k }))
                .collect::<Result<_>>()?,
            spatial,
            postcode_mode,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for v in self.linear.iter().chain(self.smooths.iter().map(|s| &s.variable)) {
            if !seen.insert(*v) {
                return Err(Error::Spec(format!("term '{v}' appears more than once")));
            }
        }
        for s in &self.smooths {
            if !s.variable.is_continuous() {
                return Err(Error::Spec(format!("cannot smooth binary term '{}'", s.variable)));
            }
            if s.knots < 3 {
                return Err(Error::Spec(format!("smooth of '{}' needs at least 3 knots", s.variable)));
            }
        }
        if let Some(sp) = &self.spatial {
            if sp.knots < 2 {
                return Err(Error::Spec("spatial smooth needs at least 2 knots".into()));
            }
            if let Some(r) = sp.rho {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(Error::Spec(format!("spatial range must be positive, got {r}")));
                }
            }
        }
        let mut fs = self.factors.clone();
        fs.dedup();
        if fs.len() != self.factors.len() {
            return Err(Error::Spec("factor listed more than once".into()));
        }
        Ok(())
    }

    pub fn with_spatial_knots(mut self, k: usize) -> Self {
        if let Some(sp) = self.spatial.as_mut() {
            sp.knots = k;
        }
        self
    }

    pub fn has_change_dummies(&self) -> bool {
        self.postcode_mode == PostcodeMode::CorrectedWithChanges
    }
}
