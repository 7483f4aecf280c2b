//! Location-value surface export and site-value-tax arithmetic.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{BBox, FittedModel};
use crate::geo::{self, LatLon, PlanarCoord};

pub const DEFAULT_RESOLUTION_KM: f64 = 0.25;
pub const DEFAULT_PADDING_KM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub at: PlanarCoord,
    pub location: LatLon,
    /// Spatial-smooth contribution to log price per m².
    pub log_value: f64,
    /// exp(log_value).
    pub location_value: f64,
}

/// Regular lattice of cell centres, row-major from (x_min, y_min).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSurface {
    pub bbox: BBox,
    pub resolution_km: f64,
    pub nx: usize,
    pub ny: usize,
    pub origin: LatLon,
    pub cells: Vec<SurfaceCell>,
}

/// Surface over the model's training extent padded by 1 km at 0.25 km.
pub fn default_surface(model: &FittedModel, origin: LatLon) -> Result<LocationSurface> {
    surface(model, model.train_bbox.padded(DEFAULT_PADDING_KM), DEFAULT_RESOLUTION_KM, origin)
}

pub fn surface(model: &FittedModel, bbox: BBox, resolution_km: f64, origin: LatLon) -> Result<LocationSurface> {
    if !model.has_spatial() {
        return Err(Error::Spec(format!("model '{}' has no spatial term", model.spec.name)));
    }
    if !(resolution_km > 0.0) || !resolution_km.is_finite() {
        return Err(Error::Parameter(format!("resolution must be positive, got {resolution_km}")));
    }
    if !(bbox.x_max >= bbox.x_min && bbox.y_max >= bbox.y_min) {
        return Err(Error::Parameter("bounding box is inverted".into()));
    }
    let nx = ((bbox.x_max - bbox.x_min) / resolution_km).floor() as usize + 1;
    let ny = ((bbox.y_max - bbox.y_min) / resolution_km).floor() as usize + 1;
    let cells = (0..nx * ny)
        .into_par_iter()
        .map(|i| {
            let at = PlanarCoord::new(
                bbox.x_min + (i % nx) as f64 * resolution_km,
                bbox.y_min + (i / nx) as f64 * resolution_km,
            );
            let log_value = model.spatial_effect(&at)?;
            Ok(SurfaceCell {
                at,
                location: geo::unproject(at, origin),
                log_value,
                location_value: log_value.exp(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocationSurface {
        bbox,
        resolution_km,
        nx,
        ny,
        origin,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingField {
    pub min_location_value: f64,
    /// Per cell, same order as the surface.
    pub scalings: Vec<f64>,
}

/// Location values divided by their minimum over the lattice.
pub fn scaling_field(surface: &LocationSurface) -> Result<ScalingField> {
    let min = surface
        .cells
        .iter()
        .map(|c| c.location_value)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Parameter("surface has no cells".into()))?;
    // The minimum's own ratio is exactly 1 by IEEE division.
    Ok(ScalingField {
        min_location_value: min,
        scalings: surface.cells.iter().map(|c| c.location_value / min).collect(),
    })
}

/// Band index (0-based) of each scaling by equal-count quantile bands.
pub fn quantile_bands(scalings: &[f64], n_bands: usize) -> Result<Vec<usize>> {
    if n_bands == 0 {
        return Err(Error::Parameter("need at least one band".into()));
    }
    let mut sorted = scalings.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f64> = (1..n_bands).map(|b| sorted[(b * n / n_bands).min(n.saturating_sub(1))]).collect();
    Ok(scalings.iter().map(|s| cuts.iter().filter(|c| s >= *c).count()).collect())
}

/// Scaling value × site size (acres) × baseline (€/acre).
pub fn site_tax(scaling: f64, site_size: f64, baseline: f64) -> Result<f64> {
    if !(scaling >= 1.0) || !scaling.is_finite() {
        return Err(Error::Parameter(format!("scaling must be at least 1, got {scaling}")));
    }
    if !(site_size > 0.0) || !site_size.is_finite() {
        return Err(Error::Parameter(format!("site size must be positive, got {site_size}")));
    }
    if !(baseline > 0.0) || !baseline.is_finite() {
        return Err(Error::Parameter(format!("baseline must be positive, got {baseline}")));
    }
    Ok(scaling * site_size * baseline)
}

/// Site tax shared equally among the apartments on the site.
pub fn apartment_site_tax(scaling: f64, site_size: f64, baseline: f64, n_apartments: u32) -> Result<f64> {
    if n_apartments < 1 {
        return Err(Error::Parameter("need at least one apartment".into()));
    }
    Ok(site_tax(scaling, site_size, baseline)? / n_apartments as f64)
}

/// Per-apartment shares whose left-to-right sum is exactly the site tax:
/// every share is the equal split except the last, which takes the remainder.
pub fn split_site_tax(scaling: f64, site_size: f64, baseline: f64, n_apartments: u32) -> Result<Vec<f64>> {
    let share = apartment_site_tax(scaling, site_size, baseline, n_apartments)?;
    let total = site_tax(scaling, site_size, baseline)?;
    let mut shares = vec![share; n_apartments as usize - 1];
    let head: f64 = shares.iter().sum();
    // total/2 ≤ head ≤ total for n ≥ 2, so this subtraction is exact.
    shares.push(total - head);
    Ok(shares)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceHeader {
    pub model: String,
    pub bbox: BBox,
    pub resolution_km: f64,
    pub nx: usize,
    pub ny: usize,
    pub origin: LatLon,
    pub min_location_value: f64,
}

pub fn header(model: &str, surface: &LocationSurface, field: &ScalingField) -> SurfaceHeader {
    SurfaceHeader {
        model: model.to_string(),
        bbox: surface.bbox,
        resolution_km: surface.resolution_km,
        nx: surface.nx,
        ny: surface.ny,
        origin: surface.origin,
        min_location_value: field.min_location_value,
    }
}

pub fn write_surface_csv<W: Write>(surface: &LocationSurface, field: &ScalingField, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x_km", "y_km", "lat", "lon", "log_value", "location_value", "scaling"])?;
    for (c, s) in surface.cells.iter().zip(&field.scalings) {
        w.write_record(&[
            c.at.x.to_string(),
            c.at.y.to_string(),
            c.location.lat.to_string(),
            c.location.lon.to_string(),
            c.log_value.to_string(),
            c.location_value.to_string(),
            s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
