//! Transaction schema, CSV ingest/emit and record cleaning.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{self, DistanceFeatures, LandmarkSet, LatLon, PlanarCoord};
use crate::textmine::{self, Feature, MinedFeatures, PhraseLexicon};

/// Records with a floor area below this (m²) are removed by [`clean`].
pub const MIN_SIZE_M2: f64 = 37.0;

// ── Closed label sets ───────────────────────────────────────────────────────

macro_rules! label_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident => $label:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name { $($var),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),+];

            pub fn label(&self) -> &'static str {
                match self { $($name::$var => $label),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim();
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.label().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::Parameter(format!(
                        "'{}' is not a valid {}", s, stringify!($name)
                    )))
            }
        }
    };
}

label_enum!(
    /// Building Energy Rating.
    Ber {
        A => "A", B => "B", C => "C", D => "D", E => "E", F => "F", G => "G",
        Exempt => "Exempt",
    }
);

label_enum!(PropertyType {
    Apartment => "Apartment",
    Detached => "Detached House",
    Duplex => "Duplex",
    EndOfTerrace => "End of Terrace House",
    SemiDetached => "Semi-Detached House",
    Terraced => "Terraced House",
    Townhouse => "Townhouse",
});

/// Dublin postcode regions plus the catch-all "Dublin County" label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Postcode(u8);

const POSTCODES: [(&str, &str); 26] = [
    ("D1", "Dublin 1"),
    ("D2", "Dublin 2"),
    ("D3", "Dublin 3"),
    ("D4", "Dublin 4"),
    ("D5", "Dublin 5"),
    ("D6", "Dublin 6"),
    ("D6W", "Dublin 6W"),
    ("D7", "Dublin 7"),
    ("D8", "Dublin 8"),
    ("D9", "Dublin 9"),
    ("D10", "Dublin 10"),
    ("D11", "Dublin 11"),
    ("D12", "Dublin 12"),
    ("D13", "Dublin 13"),
    ("D14", "Dublin 14"),
    ("D15", "Dublin 15"),
    ("D16", "Dublin 16"),
    ("D17", "Dublin 17"),
    ("D18", "Dublin 18"),
    ("D20", "Dublin 20"),
    ("D22", "Dublin 22"),
    ("D24", "Dublin 24"),
    ("NCD", "North County Dublin"),
    ("SCD", "South County Dublin"),
    ("WCD", "West County Dublin"),
    ("Dublin County", "Dublin County"),
];

impl Postcode {
    pub fn all() -> impl Iterator<Item = Postcode> {
        (0..POSTCODES.len() as u8).map(Postcode)
    }

    pub fn label(&self) -> &'static str {
        POSTCODES[self.0 as usize].0
    }

    pub fn long_name(&self) -> &'static str {
        POSTCODES[self.0 as usize].1
    }

    pub fn index(&self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Postcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Postcode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        POSTCODES
            .iter()
            .position(|(short, long)| short.eq_ignore_ascii_case(s) || long.eq_ignore_ascii_case(s))
            .map(|i| Postcode(i as u8))
            .ok_or_else(|| Error::Parameter(format!("'{s}' is not a valid Postcode")))
    }
}

impl Serialize for Postcode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Postcode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The investigated (given → corrected) postcode relabellings, each modelled
/// by its own dummy variable.
pub const POSTCODE_CHANGES: [(&str, &str); 15] = [
    ("D5", "D13"),
    ("D6", "D6W"),
    ("D6W", "D12"),
    ("D9", "D3"),
    ("D9", "D17"),
    ("D11", "D9"),
    ("D14", "D16"),
    ("D16", "D14"),
    ("NCD", "D15"),
    ("SCD", "D4"),
    ("SCD", "D18"),
    ("SCD", "D24"),
    ("WCD", "D15"),
    ("WCD", "D22"),
    ("WCD", "D24"),
];

pub fn postcode_changes() -> Vec<(Postcode, Postcode)> {
    POSTCODE_CHANGES
        .iter()
        .map(|(a, b)| (a.parse().expect("valid label"), b.parse().expect("valid label")))
        .collect()
}

// ── Records ─────────────────────────────────────────────────────────────────

/// One listing as read from CSV, before cleaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawListing {
    /// Zero-based data row index in the source file.
    pub id: usize,
    pub price: f64,
    pub sale_date: NaiveDate,
    pub location: LatLon,
    pub neighbourhood: String,
    pub baths: u32,
    pub beds: u32,
    pub ber: Ber,
    pub description: String,
    pub size: f64,
    pub property_type: PropertyType,
    pub postcode: Postcode,
    pub postcode_corrected: Option<Postcode>,
}

/// A cleaned transaction with its derived features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub id: usize,
    pub price: f64,
    pub sale_date: NaiveDate,
    pub location: LatLon,
    pub neighbourhood: String,
    pub baths: u32,
    pub beds: u32,
    pub ber: Ber,
    pub description: String,
    pub size: f64,
    pub property_type: PropertyType,
    pub postcode: Postcode,
    pub postcode_corrected: Option<Postcode>,
    /// ln(price / size).
    pub log_price_per_m2: f64,
    pub mined: MinedFeatures,
    pub distances: DistanceFeatures,
    pub planar: PlanarCoord,
}

impl PropertyRecord {
    pub fn price_per_m2(&self) -> f64 {
        self.price / self.size
    }

    /// Corrected postcode when known, else the given one.
    pub fn effective_postcode(&self) -> Postcode {
        self.postcode_corrected.unwrap_or(self.postcode)
    }

    pub fn to_listing(&self) -> RawListing {
        RawListing {
            id: self.id,
            price: self.price,
            sale_date: self.sale_date,
            location: self.location,
            neighbourhood: self.neighbourhood.clone(),
            baths: self.baths,
            beds: self.beds,
            ber: self.ber,
            description: self.description.clone(),
            size: self.size,
            property_type: self.property_type,
            postcode: self.postcode,
            postcode_corrected: self.postcode_corrected,
        }
    }
}

// ── Schema and ingest ───────────────────────────────────────────────────────

/// Canonical CSV column names, in output order.
pub const COLUMNS: [&str; 13] = [
    "price",
    "sale_date",
    "latitude",
    "longitude",
    "neighbourhood",
    "baths",
    "beds",
    "ber",
    "description",
    "size",
    "property_type",
    "postcode",
    "postcode_corrected",
];

const OPTIONAL_COLUMNS: [&str; 1] = ["postcode_corrected"];

/// Maps canonical field names to the header names used in a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: BTreeMap<&'static str, String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            columns: COLUMNS.iter().map(|c| (*c, c.to_string())).collect(),
        }
    }
}

impl Schema {
    /// Overrides the header name for a canonical field.
    pub fn rename(mut self, field: &str, header: &str) -> Result<Self> {
        let key = COLUMNS
            .iter()
            .find(|c| **c == field)
            .ok_or_else(|| Error::Schema(format!("unknown field '{field}'")))?;
        self.columns.insert(key, header.to_string());
        Ok(self)
    }

    fn header_for(&self, field: &str) -> &str {
        &self.columns[field]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// One-based data row number (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub listings: Vec<RawListing>,
    pub rejects: Vec<Reject>,
}

pub fn ingest(path: &Path, schema: &Schema) -> Result<Ingested> {
    ingest_reader(std::fs::File::open(path)?, schema)
}

pub fn ingest_reader<R: Read>(reader: R, schema: &Schema) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = BTreeMap::new();
    for field in COLUMNS {
        let want = schema.header_for(field);
        match headers.iter().position(|h| h.trim() == want) {
            Some(i) => {
                index.insert(field, i);
            }
            None if OPTIONAL_COLUMNS.contains(&field) => {}
            None => return Err(Error::Schema(format!("missing required column '{want}'"))),
        }
    }

    let mut out = Ingested::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Reject { row, reason: format!("malformed row: {e}") });
                continue;
            }
        };
        let get = |f: &str| index.get(f).and_then(|&i| rec.get(i)).map(str::trim);
        match parse_row(i, &get) {
            Ok(l) => out.listings.push(l),
            Err(reason) => out.rejects.push(Reject { row, reason }),
        }
    }
    Ok(out)
}

fn parse_row<'a>(
    id: usize,
    get: &dyn Fn(&str) -> Option<&'a str>,
) -> std::result::Result<RawListing, String> {
    fn field<'a, T: FromStr>(get: &dyn Fn(&str) -> Option<&'a str>, name: &str) -> std::result::Result<T, String> {
        let raw = get(name).ok_or_else(|| format!("{name} missing"))?;
        raw.parse::<T>().map_err(|_| format!("{name} unparseable"))
    }

    let price: f64 = field(get, "price")?;
    if !(price.is_finite() && price > 0.0) {
        return Err("price must be positive".into());
    }
    let size: f64 = field(get, "size")?;
    if !(size.is_finite() && size > 0.0) {
        return Err("size must be positive".into());
    }
    let sale_date = NaiveDate::parse_from_str(get("sale_date").unwrap_or(""), "%Y-%m-%d")
        .map_err(|_| "sale_date unparseable".to_string())?;
    let location = LatLon::new(field(get, "latitude")?, field(get, "longitude")?);
    location.validate().map_err(|e| e.to_string())?;
    let postcode_corrected = match get("postcode_corrected") {
        None | Some("") => None,
        Some(s) => Some(s.parse().map_err(|_| "postcode_corrected unparseable".to_string())?),
    };
    Ok(RawListing {
        id,
        price,
        sale_date,
        location,
        neighbourhood: get("neighbourhood").unwrap_or("").to_string(),
        baths: field(get, "baths")?,
        beds: field(get, "beds")?,
        ber: field(get, "ber")?,
        description: get("description").unwrap_or("").to_string(),
        size,
        property_type: field(get, "property_type")?,
        postcode: field(get, "postcode")?,
        postcode_corrected,
    })
}

/// Writes listings in the canonical CSV layout. Row order is preserved; the
/// `id` is implied by position.
pub fn emit<W: Write>(listings: &[RawListing], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for l in listings {
        w.write_record([
            l.price.to_string(),
            l.sale_date.format("%Y-%m-%d").to_string(),
            l.location.lat.to_string(),
            l.location.lon.to_string(),
            l.neighbourhood.clone(),
            l.baths.to_string(),
            l.beds.to_string(),
            l.ber.label().to_string(),
            l.description.clone(),
            l.size.to_string(),
            l.property_type.label().to_string(),
            l.postcode.label().to_string(),
            l.postcode_corrected.map(|p| p.label().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rejects<W: Write>(rejects: &[Reject], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rejects {
        w.serialize(r)?;
    }
    if rejects.is_empty() {
        w.write_record(["row", "reason"])?;
    }
    w.flush()?;
    Ok(())
}

// ── Cleaning ────────────────────────────────────────────────────────────────

/// Lexicon, landmarks and projection origin needed to derive record features.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    pub lexicon: PhraseLexicon,
    pub landmarks: LandmarkSet,
    pub origin: LatLon,
}

impl Default for FeatureContext {
    fn default() -> Self {
        Self {
            lexicon: PhraseLexicon::dublin_default(),
            landmarks: LandmarkSet::dublin_default(),
            origin: geo::IFSC,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cleaned {
    pub records: Vec<PropertyRecord>,
    /// Ids of listings removed for falling under the size floor.
    pub removed_undersize: Vec<usize>,
}

/// Drops listings under the size floor and derives the response, the mined
/// attributes, the landmark distances and the planar coordinates.
pub fn clean(listings: &[RawListing], ctx: &FeatureContext) -> Result<Cleaned> {
    let mut records = Vec::with_capacity(listings.len());
    let mut removed_undersize = Vec::new();
    for l in listings {
        if l.size < MIN_SIZE_M2 {
            removed_undersize.push(l.id);
            continue;
        }
        records.push(derive(l, ctx)?);
    }
    if records.is_empty() {
        return Err(Error::NoUsableRecords);
    }
    Ok(Cleaned {
        records,
        removed_undersize,
    })
}

/// Feature derivation for a single listing; no filtering.
pub fn derive(l: &RawListing, ctx: &FeatureContext) -> Result<PropertyRecord> {
    let log_price_per_m2 = (l.price / l.size).ln();
    if !log_price_per_m2.is_finite() {
        return Err(Error::NonFinite(format!("log price per m² of listing {}", l.id)));
    }
    let distances = geo::distance_features(l.location, &ctx.landmarks)?;
    let mined = textmine::apply_interactions(
        textmine::mine(&l.description, &ctx.lexicon),
        distances.within_city_centre,
    );
    Ok(PropertyRecord {
        id: l.id,
        price: l.price,
        sale_date: l.sale_date,
        location: l.location,
        neighbourhood: l.neighbourhood.clone(),
        baths: l.baths,
        beds: l.beds,
        ber: l.ber,
        description: l.description.clone(),
        size: l.size,
        property_type: l.property_type,
        postcode: l.postcode,
        postcode_corrected: l.postcode_corrected,
        log_price_per_m2,
        mined,
        distances,
        planar: geo::project(l.location, ctx.origin)?,
    })
}

/// Flat feature table for `extract`: one row per record.
pub fn write_records<W: Write>(records: &[PropertyRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = [
        "id", "price", "size", "log_price_per_m2", "latitude", "longitude", "x_km", "y_km",
        "beds", "baths", "ber", "property_type", "postcode", "postcode_corrected", "ifsc_km",
        "near_airport", "within_city_centre", "near_dart", "near_luas", "near_park",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(Feature::ALL.iter().map(|f| f.name().to_string()));
    header.push("garden_cc".into());
    header.push("car_space_cc".into());
    w.write_record(&header)?;
    let b = |v: bool| if v { "1".to_string() } else { "0".to_string() };
    for r in records {
        let mut row = vec![
            r.id.to_string(),
            r.price.to_string(),
            r.size.to_string(),
            r.log_price_per_m2.to_string(),
            r.location.lat.to_string(),
            r.location.lon.to_string(),
            r.planar.x.to_string(),
            r.planar.y.to_string(),
            r.beds.to_string(),
            r.baths.to_string(),
            r.ber.to_string(),
            r.property_type.to_string(),
            r.postcode.to_string(),
            r.postcode_corrected.map(|p| p.to_string()).unwrap_or_default(),
            r.distances.ifsc_km.to_string(),
            b(r.distances.near_airport),
            b(r.distances.within_city_centre),
            b(r.distances.near_dart),
            b(r.distances.near_luas),
            b(r.distances.near_park),
        ];
        row.extend(r.mined.iter().map(|(_, on)| b(on)));
        row.push(b(r.mined.garden_cc));
        row.push(b(r.mined.car_space_cc));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "price,sale_date,latitude,longitude,neighbourhood,baths,beds,ber,description,size,property_type,postcode,postcode_corrected\n";

    fn row(price: &str, size: &str) -> String {
        format!("{price},2018-03-01,53.34,-6.26,Rathmines,1,2,C,\"bright, south facing\",{size},Apartment,D6,\n")
    }

    #[test]
    fn well_formed_rows_ingest_cleanly() {
        let csv = format!("{HEADER}{}{}{}", row("392000", "100"), row("250000", "60"), row("500000", "120"));
        let got = ingest_reader(csv.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(got.listings.len(), 3);
        assert!(got.rejects.is_empty());
        assert_eq!(got.listings[0].description, "bright, south facing");
        assert_eq!(got.listings[2].id, 2);
    }

    #[test]
    fn unparseable_size_is_rejected_with_reason() {
        let csv = format!("{HEADER}{}{}{}", row("392000", "100"), row("250000", "abc"), row("1", "50"));
        let got = ingest_reader(csv.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(got.listings.len(), 2);
        assert_eq!(got.rejects, vec![Reject { row: 2, reason: "size unparseable".into() }]);
    }

    #[test]
    fn missing_required_column_is_schema_error() {
        let csv = "price,sale_date\n1,2018-01-01\n";
        assert!(matches!(ingest_reader(csv.as_bytes(), &Schema::default()), Err(Error::Schema(_))));
    }

    #[test]
    fn optional_corrected_column_and_renames() {
        let csv = "cost,sale_date,latitude,longitude,neighbourhood,baths,beds,ber,description,size,property_type,postcode\n\
                   300000,2018-05-05,53.3,-6.2,X,1,1,Exempt,,45,Duplex,Dublin 6W\n";
        let schema = Schema::default().rename("price", "cost").unwrap();
        let got = ingest_reader(csv.as_bytes(), &schema).unwrap();
        assert_eq!(got.listings.len(), 1);
        assert_eq!(got.listings[0].postcode.label(), "D6W");
        assert_eq!(got.listings[0].postcode_corrected, None);
    }

    #[test]
    fn labels_are_closed_sets() {
        assert!("H".parse::<Ber>().is_err());
        assert!("Bungalow".parse::<PropertyType>().is_err());
        assert!("D19".parse::<Postcode>().is_err());
        assert_eq!(Postcode::all().count(), 26);
        assert_eq!("south county dublin".parse::<Postcode>().unwrap().label(), "SCD");
    }

    fn listing(id: usize, price: f64, size: f64) -> RawListing {
        RawListing {
            id,
            price,
            sale_date: NaiveDate::from_ymd_opt(2018, 6, 1).unwrap(),
            location: LatLon::new(53.33, -6.25),
            neighbourhood: "N".into(),
            baths: 1,
            beds: 2,
            ber: Ber::C,
            description: "garage and parking".into(),
            size,
            property_type: PropertyType::Terraced,
            postcode: "D6".parse().unwrap(),
            postcode_corrected: None,
        }
    }

    #[test]
    fn clean_drops_undersize_and_computes_response() {
        let ctx = FeatureContext::default();
        let got = clean(&[listing(0, 392_000.0, 100.0), listing(1, 200_000.0, 36.9)], &ctx).unwrap();
        assert_eq!(got.records.len(), 1);
        assert_eq!(got.removed_undersize, vec![1]);
        assert_eq!(got.records[0].log_price_per_m2, 3920.0f64.ln());
        assert!(got.records[0].mined.get(Feature::Garage));
    }

    #[test]
    fn clean_of_nothing_usable_is_fatal() {
        let ctx = FeatureContext::default();
        assert!(matches!(clean(&[listing(0, 1.0, 10.0)], &ctx), Err(Error::NoUsableRecords)));
    }

    #[test]
    fn clean_is_idempotent_and_reconstructs_price() {
        let ctx = FeatureContext::default();
        let input: Vec<_> = (0..20).map(|i| listing(i, 100_000.0 + 7_919.0 * i as f64, 30.0 + 3.3 * i as f64)).collect();
        let once = clean(&input, &ctx).unwrap().records;
        let again: Vec<_> = once.iter().map(PropertyRecord::to_listing).collect();
        let twice = clean(&again, &ctx).unwrap().records;
        assert_eq!(once, twice);
        for r in &once {
            let rel = (r.log_price_per_m2.exp() * r.size - r.price).abs() / r.price;
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn emit_then_ingest_round_trips() {
        let mut ls: Vec<_> = (0..5).map(|i| listing(i, 123_456.789 + i as f64, 55.5)).collect();
        ls[2].postcode_corrected = Some("D12".parse().unwrap());
        ls[3].description = "quote \"inside\", comma".into();
        let mut buf = Vec::new();
        emit(&ls, &mut buf).unwrap();
        let back = ingest_reader(buf.as_slice(), &Schema::default()).unwrap();
        assert_eq!(back.listings, ls);
    }
}
