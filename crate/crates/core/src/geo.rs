//! Ellipsoidal distances, landmark proximity indicators and the local planar
//! projection used by the spatial smooth.
//!
//! Distances between properties and landmarks are measured on the WGS-84
//! ellipsoid (Vincenty's inverse formula). The spatial smooth works in a flat
//! km grid centred on the IFSC so that its kernel sees Euclidean distances.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// WGS-84 semi-major axis, metres.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// Spherical radius used by the planar projection.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// IUGG mean radius, used for the great-circle fallback.
const MEAN_RADIUS_KM: f64 = 6371.0088;
/// Projection refuses points further than this from its origin.
pub const PROJECTION_LIMIT_KM: f64 = 100.0;

/// Fixed projection origin (the IFSC, Dublin's CBD).
pub const IFSC: LatLon = LatLon {
    lat: 53.3494,
    lon: -6.2447,
};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat.is_finite() && self.lon.is_finite()) {
            return Err(Error::NonFinite("coordinate".into()));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::Parameter(format!(
                "coordinate ({}, {}) outside valid latitude/longitude range",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

/// Result of an ellipsoidal distance computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geodesic {
    pub km: f64,
    /// False when Vincenty's iteration failed to converge (near-antipodal
    /// points) and the value is a great-circle approximation.
    pub converged: bool,
}

/// Shortest distance between two points on the WGS-84 ellipsoid, in km.
///
/// The arguments are put into a canonical order first so that the result is
/// bitwise symmetric.
pub fn geodesic_distance(a: LatLon, b: LatLon) -> Geodesic {
    let (p, q) = if (a.lat, a.lon) <= (b.lat, b.lon) {
        (a, b)
    } else {
        (b, a)
    };
    if p == q {
        return Geodesic {
            km: 0.0,
            converged: true,
        };
    }
    match vincenty_inverse(p, q) {
        Some(m) => Geodesic {
            km: m / 1000.0,
            converged: true,
        },
        None => Geodesic {
            km: great_circle_km(p, q),
            converged: false,
        },
    }
}

/// Convenience wrapper returning only the distance.
pub fn distance_km(a: LatLon, b: LatLon) -> f64 {
    geodesic_distance(a, b).km
}

/// Haversine distance on a sphere of mean Earth radius.
pub fn great_circle_km(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * MEAN_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn vincenty_inverse(p: LatLon, q: LatLon) -> Option<f64> {
    let a = WGS84_A;
    let f = WGS84_F;
    let b = a * (1.0 - f);

    let l = (q.lon - p.lon).to_radians();
    let u1 = ((1.0 - f) * p.lat.to_radians().tan()).atan();
    let u2 = ((1.0 - f) * q.lat.to_radians().tan()).atan();
    let (sin_u1, cos_u1) = u1.sin_cos();
    let (sin_u2, cos_u2) = u2.sin_cos();

    let mut lambda = l;
    for _ in 0..200 {
        let (sin_l, cos_l) = lambda.sin_cos();
        let t1 = cos_u2 * sin_l;
        let t2 = cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_l;
        let sin_sigma = (t1 * t1 + t2 * t2).sqrt();
        if sin_sigma == 0.0 {
            return Some(0.0);
        }
        let cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_l;
        let sigma = sin_sigma.atan2(cos_sigma);
        let sin_alpha = cos_u1 * cos_u2 * sin_l / sin_sigma;
        let cos2_alpha = 1.0 - sin_alpha * sin_alpha;
        // Equatorial lines have cos2_alpha = 0.
        let cos_2sm = if cos2_alpha != 0.0 {
            cos_sigma - 2.0 * sin_u1 * sin_u2 / cos2_alpha
        } else {
            0.0
        };
        let c = f / 16.0 * cos2_alpha * (4.0 + f * (4.0 - 3.0 * cos2_alpha));
        let prev = lambda;
        lambda = l
            + (1.0 - c)
                * f
                * sin_alpha
                * (sigma
                    + c * sin_sigma
                        * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)));
        if lambda.abs() > std::f64::consts::PI {
            return None;
        }
        if (lambda - prev).abs() < 1e-12 {
            let u_sq = cos2_alpha * (a * a - b * b) / (b * b);
            let big_a =
                1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
            let big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
            let delta_sigma = big_b
                * sin_sigma
                * (cos_2sm
                    + big_b / 4.0
                        * (cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)
                            - big_b / 6.0
                                * cos_2sm
                                * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                                * (-3.0 + 4.0 * cos_2sm * cos_2sm)));
            return Some(b * big_a * (sigma - delta_sigma));
        }
    }
    None
}

// ── Landmarks ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkClass {
    Ifsc,
    Airport,
    CityCentre,
    Dart,
    Luas,
    Park,
}

impl LandmarkClass {
    pub const ALL: [LandmarkClass; 6] = [
        LandmarkClass::Ifsc,
        LandmarkClass::Airport,
        LandmarkClass::CityCentre,
        LandmarkClass::Dart,
        LandmarkClass::Luas,
        LandmarkClass::Park,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LandmarkClass::Ifsc => "ifsc",
            LandmarkClass::Airport => "airport",
            LandmarkClass::CityCentre => "city_centre",
            LandmarkClass::Dart => "dart",
            LandmarkClass::Luas => "luas",
            LandmarkClass::Park => "park",
        }
    }
}

impl fmt::Display for LandmarkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandmarkClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LandmarkClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown landmark class '{s}'")))
    }
}

/// Indicator radii per landmark class, km. The IFSC is continuous and has none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub airport_km: f64,
    pub city_centre_km: f64,
    pub dart_km: f64,
    pub luas_km: f64,
    pub park_km: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            airport_km: 5.0,
            city_centre_km: 2.0,
            dart_km: 1.5,
            luas_km: 1.0,
            park_km: 5.0,
        }
    }
}

impl Thresholds {
    pub fn for_class(&self, class: LandmarkClass) -> Option<f64> {
        match class {
            LandmarkClass::Ifsc => None,
            LandmarkClass::Airport => Some(self.airport_km),
            LandmarkClass::CityCentre => Some(self.city_centre_km),
            LandmarkClass::Dart => Some(self.dart_km),
            LandmarkClass::Luas => Some(self.luas_km),
            LandmarkClass::Park => Some(self.park_km),
        }
    }

    /// Parses the keyed `[thresholds]` block.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            thresholds: Thresholds,
        }
        let file: File = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        let t = file.thresholds;
        for (name, v) in [
            ("airport_km", t.airport_km),
            ("city_centre_km", t.city_centre_km),
            ("dart_km", t.dart_km),
            ("luas_km", t.luas_km),
            ("park_km", t.park_km),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("threshold {name} must be positive")));
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub class: LandmarkClass,
    pub name: String,
    pub location: LatLon,
    pub threshold_km: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LandmarkSet {
    landmarks: Vec<Landmark>,
    thresholds: Thresholds,
}

const BUNDLED_LANDMARKS: &str = include_str!("../data/landmarks.csv");
const BUNDLED_THRESHOLDS: &str = include_str!("../data/thresholds.toml");

impl LandmarkSet {
    pub fn new(landmarks: Vec<Landmark>, thresholds: Thresholds) -> Self {
        let landmarks = landmarks
            .into_iter()
            .map(|mut l| {
                l.threshold_km = thresholds.for_class(l.class);
                l
            })
            .collect();
        Self {
            landmarks,
            thresholds,
        }
    }

    /// The bundled Dublin landmark set with the default radii.
    pub fn dublin_default() -> Self {
        let landmarks =
            parse_landmarks(BUNDLED_LANDMARKS.as_bytes()).expect("bundled landmark file is valid");
        let thresholds =
            Thresholds::from_toml_str(BUNDLED_THRESHOLDS).expect("bundled thresholds are valid");
        Self::new(landmarks, thresholds)
    }

    pub fn load(landmarks_csv: &Path, thresholds_toml: Option<&Path>) -> Result<Self> {
        let file = std::fs::File::open(landmarks_csv)?;
        let landmarks = parse_landmarks(file)?;
        let thresholds = match thresholds_toml {
            Some(p) => Thresholds::from_toml_str(&std::fs::read_to_string(p)?)?,
            None => Thresholds::default(),
        };
        Ok(Self::new(landmarks, thresholds))
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn of_class(&self, class: LandmarkClass) -> impl Iterator<Item = &Landmark> {
        self.landmarks.iter().filter(move |l| l.class == class)
    }

    /// Distance to the nearest landmark of `class`, or a configuration error
    /// when the class has no entries.
    pub fn nearest_km(&self, p: LatLon, class: LandmarkClass) -> Result<f64> {
        self.of_class(class)
            .map(|l| distance_km(p, l.location))
            .min_by(f64::total_cmp)
            .ok_or_else(|| Error::Config(format!("landmark set has no '{class}' entry")))
    }
}

fn parse_landmarks<R: std::io::Read>(reader: R) -> Result<Vec<Landmark>> {
    #[derive(Deserialize)]
    struct Row {
        class: String,
        name: String,
        latitude: f64,
        longitude: f64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        let location = LatLon::new(row.latitude, row.longitude);
        location.validate()?;
        out.push(Landmark {
            class: row.class.parse()?,
            name: row.name,
            location,
            threshold_km: None,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistanceFeatures {
    pub ifsc_km: f64,
    pub near_airport: bool,
    pub within_city_centre: bool,
    pub near_dart: bool,
    pub near_luas: bool,
    pub near_park: bool,
}

/// Continuous CBD distance plus the thresholded proximity indicators.
/// A distance exactly equal to the radius counts as within.
pub fn distance_features(p: LatLon, landmarks: &LandmarkSet) -> Result<DistanceFeatures> {
    p.validate()?;
    let t = landmarks.thresholds();
    let within = |class, radius: f64| -> Result<bool> { Ok(landmarks.nearest_km(p, class)? <= radius) };
    Ok(DistanceFeatures {
        ifsc_km: landmarks.nearest_km(p, LandmarkClass::Ifsc)?,
        near_airport: within(LandmarkClass::Airport, t.airport_km)?,
        within_city_centre: within(LandmarkClass::CityCentre, t.city_centre_km)?,
        near_dart: within(LandmarkClass::Dart, t.dart_km)?,
        near_luas: within(LandmarkClass::Luas, t.luas_km)?,
        near_park: within(LandmarkClass::Park, t.park_km)?,
    })
}

/// Counts of landmarks per class, for reporting.
pub fn class_counts(landmarks: &LandmarkSet) -> BTreeMap<LandmarkClass, usize> {
    let mut m = BTreeMap::new();
    for l in landmarks.landmarks() {
        *m.entry(l.class).or_insert(0) += 1;
    }
    m
}

// ── Planar projection ───────────────────────────────────────────────────────

/// Kilometres east (`x`) and north (`y`) of a projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarCoord {
    pub x: f64,
    pub y: f64,
}

impl PlanarCoord {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &PlanarCoord) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Local equirectangular projection about `origin`.
///
/// The east-west scale uses the cosine of the point's own latitude rather
/// than the origin's; across a county-sized region this keeps Euclidean
/// distances within a fraction of a percent of the ellipsoidal ones.
pub fn project(p: LatLon, origin: LatLon) -> Result<PlanarCoord> {
    p.validate()?;
    let d = great_circle_km(p, origin);
    if d > PROJECTION_LIMIT_KM {
        return Err(Error::Projection {
            distance_km: d,
            limit_km: PROJECTION_LIMIT_KM,
        });
    }
    let dphi = (p.lat - origin.lat).to_radians();
    let dlambda = (p.lon - origin.lon).to_radians();
    Ok(PlanarCoord {
        x: EARTH_RADIUS_KM * dlambda * p.lat.to_radians().cos(),
        y: EARTH_RADIUS_KM * dphi,
    })
}

/// Inverse of [`project`].
pub fn unproject(c: PlanarCoord, origin: LatLon) -> LatLon {
    let lat = origin.lat + (c.y / EARTH_RADIUS_KM).to_degrees();
    let lon = origin.lon + (c.x / (EARTH_RADIUS_KM * lat.to_radians().cos())).to_degrees();
    LatLon { lat, lon }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OCONNELL: LatLon = LatLon {
        lat: 53.3472,
        lon: -6.2592,
    };

    #[test]
    fn zero_distance_for_identical_points() {
        let p = LatLon::new(53.3498, -6.2603);
        assert_eq!(distance_km(p, p), 0.0);
    }

    #[test]
    fn quarter_meridian_matches_known_length() {
        // Equator to pole along a meridian: 10001.965729 km on WGS-84.
        let g = geodesic_distance(LatLon::new(0.0, 0.0), LatLon::new(90.0, 0.0));
        assert!(g.converged);
        assert!((g.km - 10_001.965_729).abs() < 1e-3, "{}", g.km);
    }

    #[test]
    fn antipodal_falls_back_to_great_circle() {
        let g = geodesic_distance(LatLon::new(0.0, 0.0), LatLon::new(0.5, 179.7));
        assert!(!g.converged);
        assert!((g.km - great_circle_km(LatLon::new(0.0, 0.0), LatLon::new(0.5, 179.7))).abs() < 1e-9);
    }

    #[test]
    fn bundled_landmarks_cover_every_class() {
        let set = LandmarkSet::dublin_default();
        let counts = class_counts(&set);
        for class in LandmarkClass::ALL {
            assert!(counts.get(&class).copied().unwrap_or(0) >= 1, "{class}");
        }
        let t = set.thresholds();
        assert_eq!(
            (t.airport_km, t.city_centre_km, t.dart_km, t.luas_km, t.park_km),
            (5.0, 2.0, 1.5, 1.0, 5.0)
        );
    }

    fn point_at_distance(from: LatLon, km: f64, bearing_deg: f64) -> LatLon {
        // Bisection along a bearing on the ellipsoid.
        let b = bearing_deg.to_radians();
        let (mut lo, mut hi) = (0.0, 2.0 * km / 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let p = LatLon::new(from.lat + mid * b.cos(), from.lon + mid * b.sin() / from.lat.to_radians().cos());
            if distance_km(from, p) < km {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        LatLon::new(from.lat + hi * b.cos(), from.lon + hi * b.sin() / from.lat.to_radians().cos())
    }

    #[test]
    fn city_centre_indicator_at_1_9_km() {
        let set = LandmarkSet::dublin_default();
        let p = point_at_distance(OCONNELL, 1.9, 200.0);
        assert!(set.nearest_km(p, LandmarkClass::CityCentre).unwrap() < 2.0);
        assert!(distance_features(p, &set).unwrap().within_city_centre);
    }

    #[test]
    fn park_indicator_off_beyond_radius() {
        let park = LatLon::new(53.0, -6.0);
        let set = LandmarkSet::new(
            vec![
                Landmark { class: LandmarkClass::Ifsc, name: "i".into(), location: IFSC, threshold_km: None },
                Landmark { class: LandmarkClass::Airport, name: "a".into(), location: IFSC, threshold_km: None },
                Landmark { class: LandmarkClass::CityCentre, name: "c".into(), location: IFSC, threshold_km: None },
                Landmark { class: LandmarkClass::Dart, name: "d".into(), location: IFSC, threshold_km: None },
                Landmark { class: LandmarkClass::Luas, name: "l".into(), location: IFSC, threshold_km: None },
                Landmark { class: LandmarkClass::Park, name: "p".into(), location: park, threshold_km: None },
            ],
            Thresholds::default(),
        );
        let q = point_at_distance(park, 5.1, 30.0);
        assert!(!distance_features(q, &set).unwrap().near_park);
        let q = point_at_distance(park, 4.9, 30.0);
        assert!(distance_features(q, &set).unwrap().near_park);
    }

    #[test]
    fn point_at_ifsc_has_zero_cbd_distance() {
        let set = LandmarkSet::dublin_default();
        let f = distance_features(IFSC, &set).unwrap();
        assert_eq!(f.ifsc_km, 0.0);
        assert!(f.within_city_centre);
        assert_eq!(f.near_dart, set.nearest_km(IFSC, LandmarkClass::Dart).unwrap() <= 1.5);
    }

    #[test]
    fn missing_class_is_a_config_error() {
        let set = LandmarkSet::new(
            vec![Landmark { class: LandmarkClass::Ifsc, name: "i".into(), location: IFSC, threshold_km: None }],
            Thresholds::default(),
        );
        assert!(matches!(distance_features(IFSC, &set), Err(Error::Config(_))));
    }

    #[test]
    fn projection_basics() {
        assert_eq!(project(IFSC, IFSC).unwrap(), PlanarCoord::new(0.0, 0.0));
        let north = project(LatLon::new(IFSC.lat + 0.1, IFSC.lon), IFSC).unwrap();
        assert!(north.x.abs() < 1e-12 && north.y > 11.0);
        let far = LatLon::new(IFSC.lat + 2.0, IFSC.lon);
        assert!(matches!(project(far, IFSC), Err(Error::Projection { .. })));
        let p = LatLon::new(53.41, -6.41);
        let back = unproject(project(p, IFSC).unwrap(), IFSC);
        assert!((back.lat - p.lat).abs() < 1e-12 && (back.lon - p.lon).abs() < 1e-12);
    }

    #[test]
    fn thresholds_parse_and_reject_nonpositive() {
        let t = Thresholds::from_toml_str(BUNDLED_THRESHOLDS).unwrap();
        assert_eq!(t, Thresholds::default());
        let bad = "[thresholds]\nairport_km = 0\ncity_centre_km = 2\ndart_km = 1\nluas_km = 1\npark_km = 1\n";
        assert!(Thresholds::from_toml_str(bad).is_err());
    }
}
