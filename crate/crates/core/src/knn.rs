//! Type-stratified k-nearest-neighbour median price-per-m² baseline.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::PropertyRecord;
use crate::error::{Error, Result};
use crate::eval::{median, metrics};
use crate::geo;

pub const DEFAULT_KS: [usize; 4] = [3, 5, 7, 9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnEstimate {
    pub id: usize,
    pub k: usize,
    pub ppm2_estimate: f64,
    pub price_estimate: f64,
    /// Nearest first.
    pub neighbours_used: Vec<usize>,
    /// Fewer than `k` same-type records were available.
    pub degraded: bool,
}

fn by_distance_then_id(a: &(f64, usize, f64), b: &(f64, usize, f64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest same-type records as (distance km, id, price per m²),
/// nearest first, with the query itself excluded by id.
fn nearest(query: &PropertyRecord, pool: &[PropertyRecord], k: usize) -> Vec<(f64, usize, f64)> {
    let mut cand: Vec<(f64, usize, f64)> = pool
        .iter()
        .filter(|r| r.property_type == query.property_type && r.id != query.id)
        .map(|r| (geo::distance_km(query.location, r.location), r.id, r.price_per_m2()))
        .collect();
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, by_distance_then_id);
        cand.truncate(k);
    }
    cand.sort_by(by_distance_then_id);
    cand
}

fn estimate_from(query: &PropertyRecord, k: usize, nb: &[(f64, usize, f64)]) -> Result<KnnEstimate> {
    let used = &nb[..k.min(nb.len())];
    let ppm2: Vec<f64> = used.iter().map(|t| t.2).collect();
    let est = median(&ppm2).ok_or_else(|| {
        Error::NoComparables(format!(
            "no other '{}' records to compare record {} with",
            query.property_type, query.id
        ))
    })?;
    Ok(KnnEstimate {
        id: query.id,
        k,
        ppm2_estimate: est,
        price_estimate: est * query.size,
        neighbours_used: used.iter().map(|t| t.1).collect(),
        degraded: used.len() < k,
    })
}

/// Median price per m² of the `k` geodesically nearest records of the same
/// property type, ties in distance broken by id.
pub fn knn_estimate(query: &PropertyRecord, pool: &[PropertyRecord], k: usize) -> Result<KnnEstimate> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    estimate_from(query, k, &nearest(query, pool, k))
}

/// Estimates for several k from one neighbour search.
pub fn knn_estimates(query: &PropertyRecord, pool: &[PropertyRecord], ks: &[usize]) -> Result<Vec<KnnEstimate>> {
    if ks.contains(&0) {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let nb = nearest(query, pool, kmax);
    ks.iter().map(|&k| estimate_from(query, k, &nb)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnRow {
    pub k: usize,
    pub n: usize,
    pub mdape: f64,
    pub within5: f64,
    pub within10: f64,
    pub within20: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnReport {
    pub rows: Vec<KnnRow>,
    /// Every record's estimate at each k, in `ks` order.
    pub estimates: Vec<Vec<KnnEstimate>>,
    /// Records without any same-type comparable.
    pub excluded: Vec<usize>,
}

/// Leave-one-out evaluation of the baseline on price (ppm² × size).
pub fn knn_evaluate(records: &[PropertyRecord], ks: &[usize]) -> Result<KnnReport> {
    let results: Vec<Result<Vec<KnnEstimate>>> = records.par_iter().map(|q| knn_estimates(q, records, ks)).collect();
    let mut estimates = Vec::with_capacity(records.len());
    let mut excluded = Vec::new();
    let mut actual = Vec::with_capacity(records.len());
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(e) => {
                actual.push(r.price);
                estimates.push(e);
            }
            Err(Error::NoComparables(_)) => excluded.push(r.id),
            Err(e) => return Err(e),
        }
    }
    if !excluded.is_empty() {
        log::warn!("{} records have no same-type comparables", excluded.len());
    }
    let mut rows = Vec::with_capacity(ks.len());
    if !actual.is_empty() {
        for (j, &k) in ks.iter().enumerate() {
            let pred: Vec<f64> = estimates.iter().map(|e| e[j].price_estimate).collect();
            let m = metrics(&actual, &pred, None)?;
            rows.push(KnnRow {
                k,
                n: m.n,
                mdape: m.mdape,
                within5: m.within5,
                within10: m.within10,
                within20: m.within20,
            });
        }
    }
    Ok(KnnReport {
        rows,
        estimates,
        excluded,
    })
}
