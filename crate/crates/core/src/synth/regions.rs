//! Simplified postcode geography: each region is the Voronoi cell of a
//! representative centre, clipped to a rectangle around Dublin.

use crate::dataio::Postcode;
use crate::geo::LatLon;

pub const LAT_MIN: f64 = 53.22;
pub const LAT_MAX: f64 = 53.62;
pub const LON_MIN: f64 = -6.52;
pub const LON_MAX: f64 = -6.08;

/// (postcode, centre latitude, centre longitude), in postcode order.
pub const CENTRES: [(&str, f64, f64); 26] = [
    ("D1", 53.350, -6.260),
    ("D2", 53.338, -6.250),
    ("D3", 53.362, -6.225),
    ("D4", 53.325, -6.225),
    ("D5", 53.385, -6.190),
    ("D6", 53.320, -6.265),
    ("D6W", 53.310, -6.295),
    ("D7", 53.357, -6.285),
    ("D8", 53.337, -6.290),
    ("D9", 53.380, -6.245),
    ("D10", 53.340, -6.355),
    ("D11", 53.395, -6.290),
    ("D12", 53.322, -6.325),
    ("D13", 53.395, -6.145),
    ("D14", 53.297, -6.255),
    ("D15", 53.385, -6.400),
    ("D16", 53.275, -6.255),
    ("D17", 53.405, -6.205),
    ("D18", 53.255, -6.175),
    ("D20", 53.350, -6.395),
    ("D22", 53.320, -6.410),
    ("D24", 53.285, -6.370),
    ("NCD", 53.520, -6.200),
    ("SCD", 53.265, -6.120),
    ("WCD", 53.330, -6.470),
    ("Dublin County", 53.570, -6.380),
];

/// Longitude differences are shrunk by cos(latitude) so cells are closer to
/// metric Voronoi cells.
const LON_SCALE: f64 = 0.597;

pub fn nearest_centre(p: LatLon) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, (_, lat, lon)) in CENTRES.iter().enumerate() {
        let dy = p.lat - lat;
        let dx = (p.lon - lon) * LON_SCALE;
        let d = dx * dx + dy * dy;
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

pub fn region_of(p: LatLon) -> Postcode {
    CENTRES[nearest_centre(p)].0.parse().expect("valid label")
}

/// Bounding box (lat_min, lat_max, lon_min, lon_max) of each region's cell,
/// found by scanning a fine grid over the rectangle.
pub fn cell_boxes() -> Vec<(f64, f64, f64, f64)> {
    let steps = 400;
    let mut boxes = vec![(f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY); CENTRES.len()];
    let dlat = (LAT_MAX - LAT_MIN) / steps as f64;
    let dlon = (LON_MAX - LON_MIN) / steps as f64;
    for i in 0..=steps {
        for j in 0..=steps {
            let p = LatLon::new(LAT_MIN + i as f64 * dlat, LON_MIN + j as f64 * dlon);
            let c = nearest_centre(p);
            let b = &mut boxes[c];
            b.0 = b.0.min(p.lat - dlat);
            b.1 = b.1.max(p.lat + dlat);
            b.2 = b.2.min(p.lon - dlon);
            b.3 = b.3.max(p.lon + dlon);
        }
    }
    for b in &mut boxes {
        b.0 = b.0.max(LAT_MIN);
        b.1 = b.1.min(LAT_MAX);
        b.2 = b.2.max(LON_MIN);
        b.3 = b.3.min(LON_MAX);
    }
    boxes
}
