//! Deterministic synthetic Dublin transactions with full ground truth.
//!
//! Log price per m² is generated additively: intercept, type/BER/postcode
//! effects, binary attribute effects, smooth effects of size, beds and baths,
//! a Gaussian-process location surface, a premium for mislabelled postcodes
//! and Gaussian noise.

pub mod regions;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{self, Ber, FeatureContext, PropertyRecord, PropertyType, Postcode, RawListing, MIN_SIZE_M2};
use crate::error::{Error, Result};
use crate::fit::spec::Variable;
use crate::geo::{self, LatLon, PlanarCoord};
use crate::textmine::{self, Feature, MinedFeatures, PhraseLexicon};

/// Reference sample size the default frequencies and counts are scaled from.
pub const REFERENCE_N: usize = 5208;
pub const REFERENCE_UNDERSIZE: usize = 77;

/// Transactions per (postcode, property type), postcode order as
/// [`Postcode::all`], type order as [`PropertyType::ALL`].
const TYPE_COUNTS: [[u32; 7]; 26] = [
    [51, 0, 1, 2, 0, 7, 0],
    [45, 0, 0, 1, 1, 5, 2],
    [27, 9, 0, 21, 33, 62, 0],
    [72, 22, 3, 20, 38, 73, 8],
    [10, 12, 3, 26, 82, 59, 0],
    [39, 15, 3, 19, 36, 60, 5],
    [17, 11, 1, 10, 57, 22, 0],
    [38, 7, 4, 32, 23, 107, 0],
    [117, 1, 5, 26, 7, 112, 4],
    [53, 9, 3, 23, 101, 59, 2],
    [5, 2, 0, 9, 0, 14, 0],
    [28, 4, 2, 15, 35, 39, 2],
    [7, 10, 0, 45, 35, 86, 0],
    [24, 15, 6, 15, 45, 30, 0],
    [26, 25, 1, 12, 93, 39, 4],
    [74, 46, 22, 20, 117, 32, 2],
    [32, 19, 1, 6, 115, 7, 2],
    [13, 3, 1, 2, 8, 4, 0],
    [76, 60, 4, 9, 59, 14, 4],
    [5, 1, 1, 1, 8, 8, 0],
    [14, 7, 2, 7, 30, 18, 0],
    [34, 7, 4, 17, 37, 28, 2],
    [145, 107, 34, 63, 176, 129, 7],
    [209, 140, 21, 42, 267, 128, 8],
    [58, 21, 12, 18, 132, 36, 5],
    [31, 14, 5, 5, 8, 8, 0],
];

/// Occurrences of each attribute in the reference corpus. Floor-level
/// attributes are counted over the 1,250 apartments only.
const PHRASE_COUNTS: [(Feature, u32); 16] = [
    (Feature::SouthFacing, 871),
    (Feature::AtticConversion, 190),
    (Feature::Parking, 3782),
    (Feature::DevelopmentPotential, 492),
    (Feature::OpenPlan, 1512),
    (Feature::Fireplace, 2403),
    (Feature::CentralHeating, 2596),
    (Feature::Immersion, 196),
    (Feature::HotPress, 993),
    (Feature::Garage, 770),
    (Feature::LargeGarden, 155),
    (Feature::GroundFloorApartment, 201),
    (Feature::FirstFloorApartment, 119),
    (Feature::SecondFloorApartment, 66),
    (Feature::PenthouseApartment, 39),
    (Feature::Refurbished, 1219),
];
const CUL_DE_SAC_COUNT: u32 = 1006;
const APARTMENTS: u32 = 1250;
const HOUSES: u32 = 5208 - 1250;

const FILLERS: [&str; 10] = [
    "Bright and spacious accommodation",
    "Close to local shops and schools",
    "Viewing highly recommended",
    "Well presented throughout",
    "Excellent transport links nearby",
    "Generous living accommodation",
    "Located in a popular residential area",
    "Walking distance to amenities",
    "Deceptively spacious interior",
    "Ideal family home",
];

fn ln(v: f64) -> f64 {
    v.ln()
}

fn centered<K: Ord + Copy>(pairs: &[(K, f64)]) -> BTreeMap<K, f64> {
    let mean = pairs.iter().map(|(_, v)| v).sum::<f64>() / pairs.len() as f64;
    pairs.iter().map(|(k, v)| (*k, v - mean)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpTruth {
    /// Range of the C(r) = (1 + r/ρ)e^{−r/ρ} covariance, km.
    pub rho_km: f64,
    /// Marginal standard deviation of the surface.
    pub sd: f64,
    /// Random Fourier features used to draw the surface.
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeEffect {
    pub from: Postcode,
    pub to: Postcode,
    /// Relabelled records at the reference sample size.
    pub count: u32,
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Records that survive cleaning.
    pub n_records: usize,
    /// Additional records planted below the size floor.
    pub n_undersize: usize,
    pub intercept: f64,
    pub type_effects: BTreeMap<PropertyType, f64>,
    pub ber_effects: BTreeMap<Ber, f64>,
    pub binary_effects: BTreeMap<Variable, f64>,
    pub postcode_effects: BTreeMap<Postcode, f64>,
    /// Multiplies the size, beds and baths effect curves.
    pub smooth_scale: f64,
    pub gp: GpTruth,
    pub noise_sd: f64,
    /// Noise level for records whose noiseless price exceeds
    /// `high_price_threshold`.
    pub noise_sd_high: f64,
    pub high_price_threshold: f64,
    /// Probability that a record carries each attribute. Floor-level
    /// attributes apply to apartments, large gardens to houses.
    pub phrase_rates: BTreeMap<Feature, f64>,
    pub garden_rate_house: f64,
    pub garden_rate_apartment: f64,
    /// Relabellings from corrected to given postcode, with their price effect.
    pub changes: Vec<ChangeEffect>,
    pub size_sdlog: f64,
}

impl GeneratorConfig {
    /// Defaults calibrated to the Dublin 2018 market.
    pub fn dublin(seed: u64) -> Self {
        use Feature::*;
        use PropertyType::*;
        let type_effects = centered(&[
            (Apartment, ln(0.91)),
            (Detached, ln(1.16)),
            (Duplex, ln(0.88)),
            (EndOfTerrace, ln(1.01)),
            (SemiDetached, ln(1.11)),
            (Terraced, ln(1.00)),
            (Townhouse, ln(0.96)),
        ]);
        let ber_effects = centered(&[
            (Ber::A, ln(1.08)),
            (Ber::B, ln(1.04)),
            (Ber::C, ln(1.00)),
            (Ber::D, ln(0.99)),
            (Ber::E, ln(0.99)),
            (Ber::F, ln(0.98)),
            (Ber::G, ln(0.94)),
            (Ber::Exempt, ln(0.98)),
        ]);
        let binary_effects: BTreeMap<Variable, f64> = [
            (Variable::Mined(AtticConversion), ln(1.00)),
            (Variable::Mined(Parking), ln(1.00)),
            (Variable::CarSpaceCc, ln(1.04)),
            (Variable::Mined(DevelopmentPotential), ln(1.04)),
            (Variable::Mined(Fireplace), ln(1.03)),
            (Variable::Mined(Garage), ln(1.07)),
            (Variable::Mined(HotPress), ln(1.01)),
            (Variable::Mined(OpenPlan), ln(1.01)),
            (Variable::Mined(Refurbished), ln(1.04)),
            (Variable::Mined(SouthFacing), ln(1.02)),
            (Variable::Mined(GroundFloorApartment), ln(0.97)),
            (Variable::Mined(FirstFloorApartment), ln(0.98)),
            (Variable::Mined(SecondFloorApartment), ln(0.98)),
            (Variable::Mined(PenthouseApartment), ln(1.14)),
        ]
        .into_iter()
        .collect();
        let pc_scalings = [
            1.09, 1.18, 1.04, 0.96, 0.99, 1.02, 1.00, 1.17, 1.10, 1.13, 0.85, 1.03, 0.95, 1.01, 0.95, 1.15, 1.00,
            1.04, 0.95, 1.01, 0.83, 0.86, 1.01, 0.88, 0.94, 1.00,
        ];
        let pcs: Vec<(Postcode, f64)> = Postcode::all().zip(pc_scalings).map(|(p, s)| (p, ln(s))).collect();
        let postcode_effects = centered(&pcs);

        let mut phrase_rates = BTreeMap::new();
        for (f, c) in PHRASE_COUNTS {
            let denom = match f {
                GroundFloorApartment | FirstFloorApartment | SecondFloorApartment | PenthouseApartment => APARTMENTS,
                LargeGarden => HOUSES,
                _ => REFERENCE_N as u32,
            };
            phrase_rates.insert(f, c as f64 / denom as f64);
        }
        phrase_rates.insert(CulDeSac, CUL_DE_SAC_COUNT as f64 / REFERENCE_N as f64);

        let counts = [3u32, 12, 3, 3, 10, 7, 19, 5, 9, 27, 101, 32, 38, 24, 45];
        let changes = dataio::postcode_changes()
            .into_iter()
            .zip(counts)
            .map(|((from, to), count)| {
                // Relabelling to a cheaper-sounding neighbour is the exception.
                let cheaper = matches!((from.label(), to.label()), ("D11", "D9") | ("D16", "D14"));
                ChangeEffect {
                    from,
                    to,
                    count,
                    effect: if cheaper { ln(0.95) } else { ln(1.05) },
                }
            })
            .collect();

        Self {
            seed,
            n_records: REFERENCE_N,
            n_undersize: REFERENCE_UNDERSIZE,
            intercept: ln(4405.0),
            type_effects,
            ber_effects,
            binary_effects,
            postcode_effects,
            smooth_scale: 1.0,
            gp: GpTruth {
                rho_km: 6.0,
                sd: 0.3,
                n_features: 500,
            },
            noise_sd: 0.12,
            noise_sd_high: 0.16,
            high_price_threshold: 1_000_000.0,
            phrase_rates,
            garden_rate_house: 0.5,
            garden_rate_apartment: 0.08,
            changes,
            size_sdlog: 0.3,
        }
    }

    /// Every effect and the noise switched off: log price per m² is the
    /// intercept for every record.
    pub fn intercept_only(seed: u64) -> Self {
        let mut c = Self::dublin(seed);
        c.type_effects.values_mut().for_each(|v| *v = 0.0);
        c.ber_effects.values_mut().for_each(|v| *v = 0.0);
        c.binary_effects.values_mut().for_each(|v| *v = 0.0);
        c.postcode_effects.values_mut().for_each(|v| *v = 0.0);
        c.changes.iter_mut().for_each(|ch| ch.effect = 0.0);
        c.smooth_scale = 0.0;
        c.gp.sd = 0.0;
        c.noise_sd = 0.0;
        c.noise_sd_high = 0.0;
        c
    }

    pub fn with_size(mut self, n_records: usize) -> Self {
        self.n_undersize = (REFERENCE_UNDERSIZE as f64 * n_records as f64 / REFERENCE_N as f64).round() as usize;
        self.n_records = n_records;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_records == 0 {
            return bad("n_records must be positive".into());
        }
        for (f, r) in &self.phrase_rates {
            if !(0.0..=1.0).contains(r) {
                return bad(format!("phrase frequency for '{f}' is {r}, outside [0, 1]"));
            }
        }
        for (name, r) in [("garden_rate_house", self.garden_rate_house), ("garden_rate_apartment", self.garden_rate_apartment)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} is {r}, outside [0, 1]"));
            }
        }
        let floors: f64 = floor_features().iter().map(|f| self.rate(*f)).sum();
        if floors > 1.0 {
            return bad(format!("apartment floor-level frequencies sum to {floors} > 1"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd_high >= 0.0) {
            return bad("noise standard deviations must be non-negative".into());
        }
        if self.gp.sd < 0.0 || (self.gp.sd > 0.0 && !(self.gp.rho_km > 0.0 && self.gp.n_features > 0)) {
            return bad("GP truth needs sd ≥ 0, and a positive range and feature count when sd > 0".into());
        }
        if !(self.size_sdlog >= 0.0) || !self.intercept.is_finite() {
            return bad("size_sdlog and intercept must be finite".into());
        }
        let mut total = 0.0;
        for ch in &self.changes {
            total += ch.count as f64 * self.n_records as f64 / REFERENCE_N as f64;
        }
        if total > self.n_records as f64 {
            return bad("more relabelled records than records".into());
        }
        Ok(())
    }

    fn rate(&self, f: Feature) -> f64 {
        self.phrase_rates.get(&f).copied().unwrap_or(0.0)
    }
}

fn floor_features() -> [Feature; 4] {
    [
        Feature::GroundFloorApartment,
        Feature::FirstFloorApartment,
        Feature::SecondFloorApartment,
        Feature::PenthouseApartment,
    ]
}

/// Effect curves of size (m²), beds and baths on log price per m².
pub fn size_curve(s: f64) -> f64 {
    0.6 * (-s / 70.0).exp() + 0.15 * (-((s - 320.0) / 60.0).powi(2)).exp() - 0.14
}

pub fn beds_curve(b: f64) -> f64 {
    0.08 * b.min(4.0) - 0.2
}

pub fn baths_curve(b: f64) -> f64 {
    0.05 * b.min(2.0) - 0.03 * (b - 2.0).max(0.0) - 0.08
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFeatures {
    pub omega: Vec<[f64; 2]>,
    pub phase: Vec<f64>,
    pub amplitude: f64,
}

impl GpFeatures {
    pub fn eval(&self, p: &PlanarCoord) -> f64 {
        self.omega
            .iter()
            .zip(&self.phase)
            .map(|(w, b)| (w[0] * p.x + w[1] * p.y + b).cos())
            .sum::<f64>()
            * self.amplitude
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTruth {
    pub id: usize,
    pub undersize: bool,
    pub postcode_true: Postcode,
    pub relabelled: bool,
    pub planted: MinedFeatures,
    pub gp_value: f64,
    pub noiseless_log_ppm2: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: GeneratorConfig,
    pub gp: GpFeatures,
    pub records: Vec<RecordTruth>,
    /// Planted attribute counts over the records that survive cleaning.
    pub planted_counts: BTreeMap<Feature, usize>,
}

impl GroundTruth {
    pub fn gp_surface(&self, p: &PlanarCoord) -> f64 {
        self.gp.eval(p)
    }

    pub fn change_effect(&self, from: Postcode, to: Postcode) -> f64 {
        self.config
            .changes
            .iter()
            .find(|c| c.from == from && c.to == to)
            .map(|c| c.effect)
            .unwrap_or(0.0)
    }

    /// Noiseless log price per m² of a cleaned record, from its own fields.
    pub fn noiseless_log_ppm2(&self, r: &PropertyRecord) -> f64 {
        let c = &self.config;
        let true_pc = r.effective_postcode();
        let mut v = c.intercept
            + c.type_effects.get(&r.property_type).copied().unwrap_or(0.0)
            + c.ber_effects.get(&r.ber).copied().unwrap_or(0.0)
            + c.postcode_effects.get(&true_pc).copied().unwrap_or(0.0)
            + c.smooth_scale * (size_curve(r.size) + beds_curve(r.beds as f64) + baths_curve(r.baths as f64))
            + self.gp.eval(&r.planar);
        for (var, eff) in &c.binary_effects {
            v += eff * var.value(r);
        }
        if true_pc != r.postcode {
            v += self.change_effect(r.postcode, true_pc);
        }
        v
    }

    /// Premium of one property type over another implied by the truth, in %.
    pub fn type_premium(&self, a: PropertyType, b: PropertyType) -> f64 {
        let e = |t| self.config.type_effects.get(&t).copied().unwrap_or(0.0);
        100.0 * (1.0 - (e(b) - e(a)).exp())
    }
}

fn sample_location(rng: &mut ChaCha8Rng, cell: usize, bx: (f64, f64, f64, f64)) -> LatLon {
    for _ in 0..10_000 {
        let p = LatLon::new(rng.random_range(bx.0..bx.1), rng.random_range(bx.2..bx.3));
        if regions::nearest_centre(p) == cell {
            return p;
        }
    }
    let (_, lat, lon) = regions::CENTRES[cell];
    LatLon::new(lat, lon)
}

fn type_size_median(t: PropertyType) -> f64 {
    match t {
        PropertyType::Apartment => 72.0,
        PropertyType::Detached => 165.0,
        PropertyType::Duplex => 90.0,
        PropertyType::EndOfTerrace => 105.0,
        PropertyType::SemiDetached => 115.0,
        PropertyType::Terraced => 95.0,
        PropertyType::Townhouse => 110.0,
    }
}

fn phrase_for(f: Feature, lexicon: &PhraseLexicon, rng: &mut ChaCha8Rng) -> String {
    let variants = lexicon.triggers(f);
    variants[rng.random_range(0..variants.len())].clone()
}

fn sentence(phrase: &str, rng: &mut ChaCha8Rng) -> String {
    if rng.random_bool(0.1) {
        return phrase.to_uppercase();
    }
    let mut c = phrase.chars();
    match c.next() {
        Some(first) => first.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

/// Generates the raw listings (including the undersize plants) and the
/// ground truth. Coordinates are projected and landmark features derived with
/// `ctx`, which the caller should also use for cleaning.
pub fn generate(config: &GeneratorConfig, ctx: &FeatureContext) -> Result<(Vec<RawListing>, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let gp = {
        let m = if config.gp.sd > 0.0 { config.gp.n_features } else { 0 };
        let chi = ChiSquared::new(3.0).expect("valid dof");
        let mut omega = Vec::with_capacity(m);
        let mut phase = Vec::with_capacity(m);
        for _ in 0..m {
            let u: f64 = chi.sample(&mut rng);
            let s = 1.0 / (config.gp.rho_km * u.sqrt());
            let g0: f64 = StandardNormal.sample(&mut rng);
            let g1: f64 = StandardNormal.sample(&mut rng);
            omega.push([g0 * s, g1 * s]);
            phase.push(rng.random_range(0.0..2.0 * PI));
        }
        let amplitude = if m > 0 { config.gp.sd * (2.0 / m as f64).sqrt() } else { 0.0 };
        GpFeatures { omega, phase, amplitude }
    };

    let cells: Vec<(usize, PropertyType)> = (0..26)
        .flat_map(|c| PropertyType::ALL.iter().map(move |t| (c, *t)))
        .collect();
    let weights: Vec<u32> = TYPE_COUNTS.iter().flat_map(|row| row.iter().copied()).collect();
    let cell_dist = WeightedIndex::new(&weights).map_err(|e| Error::Config(e.to_string()))?;
    let ber_dist = WeightedIndex::new([5.0, 15.0, 30.0, 25.0, 10.0, 6.0, 6.0, 3.0]).expect("valid weights");
    let boxes = regions::cell_boxes();
    let postcodes: Vec<Postcode> = Postcode::all().collect();

    let total = config.n_records + config.n_undersize;
    let mut undersize = vec![false; total];
    for i in index::sample(&mut rng, total, config.n_undersize) {
        undersize[i] = true;
    }

    let start = NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date");
    let days = (NaiveDate::from_ymd_opt(2018, 11, 30).expect("valid date") - start).num_days();

    let mut listings = Vec::with_capacity(total);
    let mut truths = Vec::with_capacity(total);
    for (id, &small) in undersize.iter().enumerate() {
        let (cell, ptype) = cells[cell_dist.sample(&mut rng)];
        let pc = postcodes[cell];
        let location = sample_location(&mut rng, cell, boxes[cell]);
        let size = if small {
            rng.random_range(25.0..MIN_SIZE_M2)
        } else {
            let d = Normal::new(type_size_median(ptype).ln(), config.size_sdlog).expect("valid sd");
            loop {
                let s: f64 = d.sample(&mut rng).exp();
                if (MIN_SIZE_M2..=1500.0).contains(&s) {
                    break (s * 10.0).round() / 10.0;
                }
            }
        };
        let max_beds = if ptype == PropertyType::Apartment { 4.0 } else { 7.0 };
        let bed_noise: f64 = Normal::new(0.0, 0.6).expect("valid sd").sample(&mut rng);
        let beds = (size / 28.0 + bed_noise).round().clamp(1.0, max_beds) as u32;
        let bath_noise: f64 = Normal::new(0.0, 0.5).expect("valid sd").sample(&mut rng);
        let baths = (0.5 * beds as f64 + 0.5 + bath_noise).round().clamp(1.0, 5.0) as u32;
        let ber = Ber::ALL[ber_dist.sample(&mut rng)];

        let is_apartment = ptype == PropertyType::Apartment;
        let mut planted = MinedFeatures::default();
        for (f, _) in PHRASE_COUNTS.iter().chain([(Feature::CulDeSac, 0)].iter()) {
            let eligible = match f {
                Feature::GroundFloorApartment
                | Feature::FirstFloorApartment
                | Feature::SecondFloorApartment
                | Feature::PenthouseApartment => false,
                Feature::LargeGarden => !is_apartment,
                _ => true,
            };
            if eligible && rng.random_bool(config.rate(*f)) {
                planted.set(*f, true);
            }
        }
        if is_apartment {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for f in floor_features() {
                acc += config.rate(f);
                if u < acc {
                    planted.set(f, true);
                    break;
                }
            }
        }
        let garden_rate = if is_apartment { config.garden_rate_apartment } else { config.garden_rate_house };
        let explicit_garden = rng.random_bool(garden_rate);
        planted.set(Feature::Garden, explicit_garden || planted.get(Feature::LargeGarden));

        let mut sentences: Vec<String> = Vec::new();
        for (f, on) in planted.iter() {
            if !on || (f == Feature::Garden && !explicit_garden) {
                continue;
            }
            let phrase = phrase_for(f, &ctx.lexicon, &mut rng);
            sentences.push(sentence(&phrase, &mut rng));
        }
        let n_fill = rng.random_range(1..=3);
        for _ in 0..n_fill {
            sentences.push(FILLERS[rng.random_range(0..FILLERS.len())].to_string());
        }
        sentences.shuffle(&mut rng);
        let description = sentences.join(". ") + ".";

        let within_cc = geo::distance_features(location, &ctx.landmarks)?.within_city_centre;
        let planted = textmine::apply_interactions(planted, within_cc);
        let sale_date = start + Duration::days(rng.random_range(0..=days));
        let quarter = ["North", "South", "East", "West", "Central"][rng.random_range(0..5)];

        listings.push(RawListing {
            id,
            price: 0.0,
            sale_date,
            location,
            neighbourhood: format!("{} {quarter}", pc.long_name()),
            baths,
            beds,
            ber,
            description,
            size,
            property_type: ptype,
            postcode: pc,
            postcode_corrected: Some(pc),
        });
        truths.push(RecordTruth {
            id,
            undersize: small,
            postcode_true: pc,
            relabelled: false,
            planted,
            gp_value: 0.0,
            noiseless_log_ppm2: 0.0,
            noise: 0.0,
        });
    }

    for ch in &config.changes {
        let want = (ch.count as f64 * config.n_records as f64 / REFERENCE_N as f64).round() as usize;
        let candidates: Vec<usize> = (0..total)
            .filter(|&i| truths[i].postcode_true == ch.to && !truths[i].relabelled && !truths[i].undersize)
            .collect();
        let take = want.min(candidates.len());
        if take < want {
            log::warn!("only {take} of {want} records available to relabel {}->{}", ch.from, ch.to);
        }
        for k in index::sample(&mut rng, candidates.len(), take) {
            let i = candidates[k];
            truths[i].relabelled = true;
            listings[i].postcode = ch.from;
        }
    }

    let mut gt = GroundTruth {
        config: config.clone(),
        gp,
        records: Vec::new(),
        planted_counts: BTreeMap::new(),
    };
    for (l, t) in listings.iter_mut().zip(truths.iter_mut()) {
        let planar = geo::project(l.location, ctx.origin)?;
        t.gp_value = gt.gp.eval(&planar);
        let record = PropertyRecord {
            id: l.id,
            price: 1.0,
            sale_date: l.sale_date,
            location: l.location,
            neighbourhood: String::new(),
            baths: l.baths,
            beds: l.beds,
            ber: l.ber,
            description: String::new(),
            size: l.size,
            property_type: l.property_type,
            postcode: l.postcode,
            postcode_corrected: l.postcode_corrected,
            log_price_per_m2: 0.0,
            mined: t.planted,
            distances: Default::default(),
            planar,
        };
        t.noiseless_log_ppm2 = gt.noiseless_log_ppm2(&record);
        let noiseless_price = t.noiseless_log_ppm2.exp() * l.size;
        let sd = if noiseless_price > config.high_price_threshold {
            config.noise_sd_high
        } else {
            config.noise_sd
        };
        t.noise = if sd > 0.0 {
            Normal::new(0.0, sd).expect("valid sd").sample(&mut rng)
        } else {
            0.0
        };
        l.price = (t.noiseless_log_ppm2 + t.noise).exp() * l.size;
    }
    gt.planted_counts = textmine::tabulate(truths.iter().filter(|t| !t.undersize).map(|t| &t.planted));
    gt.records = truths;
    Ok((listings, gt))
}

/// Convenience: generate and clean in one step.
pub fn generate_clean(config: &GeneratorConfig, ctx: &FeatureContext) -> Result<(Vec<PropertyRecord>, GroundTruth)> {
    let (listings, gt) = generate(config, ctx)?;
    let cleaned = dataio::clean(&listings, ctx)?;
    Ok((cleaned.records, gt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig::dublin(seed).with_size(600)
    }

    #[test]
    fn regeneration_is_identical() {
        let ctx = FeatureContext::default();
        let (a, ga) = generate(&small(3), &ctx).unwrap();
        let (b, gb) = generate(&small(3), &ctx).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
        let (c, _) = generate(&small(4), &ctx).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn intercept_only_truth_gives_constant_ppm2() {
        let ctx = FeatureContext::default();
        let cfg = GeneratorConfig::intercept_only(1).with_size(200);
        let (records, _) = generate_clean(&cfg, &ctx).unwrap();
        let expected = cfg.intercept.exp();
        for r in &records {
            assert!((r.price_per_m2() - expected).abs() / expected < 1e-12);
        }
    }

    #[test]
    fn mined_features_equal_planted() {
        let ctx = FeatureContext::default();
        let (listings, gt) = generate(&small(5), &ctx).unwrap();
        for (l, t) in listings.iter().zip(&gt.records) {
            let m = textmine::mine(&l.description, &ctx.lexicon);
            for (f, on) in t.planted.iter() {
                assert_eq!(m.get(f), on, "{f} in '{}'", l.description);
            }
        }
    }

    #[test]
    fn undersize_plants_are_exactly_the_cleaned_rows() {
        let ctx = FeatureContext::default();
        let cfg = small(6);
        let (listings, gt) = generate(&cfg, &ctx).unwrap();
        assert_eq!(listings.len(), cfg.n_records + cfg.n_undersize);
        let cleaned = dataio::clean(&listings, &ctx).unwrap();
        assert_eq!(cleaned.records.len(), cfg.n_records);
        let planted: Vec<usize> = gt.records.iter().filter(|t| t.undersize).map(|t| t.id).collect();
        assert_eq!(cleaned.removed_undersize, planted);
    }

    #[test]
    fn truth_recomputes_noiseless_response() {
        let ctx = FeatureContext::default();
        let (records, gt) = generate_clean(&small(7), &ctx).unwrap();
        for r in &records {
            let t = &gt.records[r.id];
            assert!((gt.noiseless_log_ppm2(r) - t.noiseless_log_ppm2).abs() < 1e-12);
            assert!((r.log_price_per_m2 - t.noiseless_log_ppm2 - t.noise).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_frequency_is_rejected() {
        let mut cfg = small(1);
        cfg.phrase_rates.insert(Feature::Garage, 1.2);
        assert_eq!(cfg.validate().unwrap_err().kind(), "config");
    }
}
