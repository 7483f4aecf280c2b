//! Cross-validation, accuracy metrics, Moran's I, price-band tables and the
//! spatial-knot sweep.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::PropertyRecord;
use crate::error::{Error, Result};
use crate::fit::{FitMethod, FittedModel, Interval, ModelSpec};
use crate::geo::PlanarCoord;

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Accuracy on euro prices. Percentage errors use the actual price as
/// denominator and are stored as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    /// NaN when every actual price is identical.
    pub r2: f64,
    pub rmse: f64,
    pub mdape: f64,
    pub within5: f64,
    pub within10: f64,
    pub within20: f64,
    pub coverage50: Option<f64>,
    pub coverage95: Option<f64>,
}

fn check_pairs(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::Parameter(format!(
            "{} actual values but {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Parameter("no values to score".into()));
    }
    if let Some(a) = actual.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::Parameter(format!("actual price {a} is not positive")));
    }
    if predicted.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("predicted price".into()));
    }
    Ok(())
}

fn ape(actual: &[f64], predicted: &[f64]) -> Vec<f64> {
    actual.iter().zip(predicted).map(|(a, p)| (a - p).abs() / a).collect()
}

fn share(errors: &[f64], limit: f64) -> f64 {
    errors.iter().filter(|e| **e <= limit).count() as f64 / errors.len() as f64
}

fn coverage(actual: &[f64], intervals: &[Interval]) -> Result<f64> {
    if intervals.len() != actual.len() {
        return Err(Error::Parameter("one interval per actual value required".into()));
    }
    Ok(actual.iter().zip(intervals).filter(|(a, i)| i.contains(**a)).count() as f64 / actual.len() as f64)
}

/// `intervals` holds the 50% and 95% prediction intervals, if available.
pub fn metrics(actual: &[f64], predicted: &[f64], intervals: Option<(&[Interval], &[Interval])>) -> Result<Metrics> {
    check_pairs(actual, predicted)?;
    let n = actual.len();
    let mean = actual.iter().sum::<f64>() / n as f64;
    let rss: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    let tss: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    let errors = ape(actual, predicted);
    let (coverage50, coverage95) = match intervals {
        Some((i50, i95)) => (Some(coverage(actual, i50)?), Some(coverage(actual, i95)?)),
        None => (None, None),
    };
    Ok(Metrics {
        n,
        r2: if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN },
        rmse: (rss / n as f64).sqrt(),
        mdape: median(&errors).expect("non-empty"),
        within5: share(&errors, 0.05),
        within10: share(&errors, 0.10),
        within20: share(&errors, 0.20),
        coverage50,
        coverage95,
    })
}

/// Neighbour lists and weights for Moran's I.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialWeights {
    pub neighbours: Vec<Vec<usize>>,
    pub weights: Vec<Vec<f64>>,
    pub row_standardized: bool,
}

impl SpatialWeights {
    /// Binary k-nearest-neighbour weights on planar coordinates, ties in
    /// distance broken by `ids`. Row-standardized when `standardize` is set.
    pub fn knn(coords: &[PlanarCoord], ids: &[usize], k: usize, standardize: bool) -> Result<Self> {
        let n = coords.len();
        if ids.len() != n {
            return Err(Error::Parameter("one id per coordinate required".into()));
        }
        if k == 0 || k >= n {
            return Err(Error::Parameter(format!("neighbour count {k} must be in 1..{n}")));
        }
        let neighbours: Vec<Vec<usize>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut d: Vec<(f64, usize, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (coords[i].dist(&coords[j]), ids[j], j))
                    .collect();
                let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2));
                d.select_nth_unstable_by(k - 1, cmp);
                d.truncate(k);
                d.sort_by(cmp);
                d.into_iter().map(|t| t.2).collect()
            })
            .collect();
        let w = if standardize { 1.0 / k as f64 } else { 1.0 };
        let weights = neighbours.iter().map(|nb| vec![w; nb.len()]).collect();
        Ok(Self {
            neighbours,
            weights,
            row_standardized: standardize,
        })
    }

    /// Arbitrary weights; self-weights are rejected.
    pub fn from_lists(neighbours: Vec<Vec<usize>>, weights: Vec<Vec<f64>>, standardize: bool) -> Result<Self> {
        if neighbours.len() != weights.len() {
            return Err(Error::Parameter("neighbour and weight lists differ in length".into()));
        }
        let n = neighbours.len();
        let mut weights = weights;
        for (i, (nb, w)) in neighbours.iter().zip(weights.iter_mut()).enumerate() {
            if nb.len() != w.len() {
                return Err(Error::Parameter(format!("row {i}: neighbour and weight counts differ")));
            }
            if nb.iter().any(|&j| j == i || j >= n) {
                return Err(Error::Parameter(format!("row {i}: self or out-of-range neighbour")));
            }
            if standardize {
                let s: f64 = w.iter().sum();
                if s > 0.0 {
                    w.iter_mut().for_each(|v| *v /= s);
                }
            }
        }
        Ok(Self {
            neighbours,
            weights,
            row_standardized: standardize,
        })
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }
}

/// Moran's I = (n/S₀)·Σᵢⱼ wᵢⱼ(eᵢ−ē)(eⱼ−ē) / Σᵢ(eᵢ−ē)².
pub fn morans_i(residuals: &[f64], weights: &SpatialWeights) -> Result<f64> {
    let n = residuals.len();
    if n < 3 {
        return Err(Error::Parameter(format!("Moran's I needs at least 3 values, got {n}")));
    }
    if weights.len() != n {
        return Err(Error::Parameter(format!("{n} residuals but {} weight rows", weights.len())));
    }
    if residuals.iter().any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("residuals".into()));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = residuals.iter().map(|e| e - mean).collect();
    let ss: f64 = z.iter().map(|v| v * v).sum();
    if ss == 0.0 {
        return Err(Error::Degenerate("residuals have zero variance; Moran's I is undefined".into()));
    }
    let mut s0 = 0.0;
    let mut cross = 0.0;
    for (i, (nb, w)) in weights.neighbours.iter().zip(&weights.weights).enumerate() {
        for (&j, &wij) in nb.iter().zip(w) {
            s0 += wij;
            cross += wij * z[i] * z[j];
        }
    }
    if s0 == 0.0 {
        return Err(Error::Degenerate("spatial weights sum to zero".into()));
    }
    Ok(n as f64 / s0 * cross / ss)
}

pub const MORAN_NEIGHBOURS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPrediction {
    pub id: usize,
    pub fold: usize,
    pub actual: f64,
    pub predicted: f64,
    pub pi50: Interval,
    pub pi95: Interval,
    /// Residual on the log price-per-m² scale.
    pub log_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub folds: usize,
    pub seed: u64,
    pub n: usize,
    pub metrics: Metrics,
    /// Of the out-of-fold log residuals, with k-nearest-neighbour weights.
    pub morans_i: f64,
    /// Records that could not be scored, e.g. a categorical level absent from
    /// their training folds.
    pub excluded: Vec<usize>,
    pub predictions: Vec<CvPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub method: FitMethod,
    pub moran_neighbours: usize,
}

impl CvOptions {
    pub fn new(folds: usize, seed: u64) -> Self {
        Self {
            folds,
            seed,
            method: FitMethod::default(),
            moran_neighbours: MORAN_NEIGHBOURS,
        }
    }
}

/// Seeded assignment of `n` records to `folds` folds whose sizes differ by at
/// most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

pub fn kfold_cv(records: &[PropertyRecord], spec: &ModelSpec, folds: usize, seed: u64) -> Result<EvalReport> {
    kfold_cv_with(records, spec, &CvOptions::new(folds, seed))
}

pub fn kfold_cv_with(records: &[PropertyRecord], spec: &ModelSpec, opts: &CvOptions) -> Result<EvalReport> {
    let k = opts.folds;
    if k < 2 {
        return Err(Error::Parameter(format!("need at least 2 folds, got {k}")));
    }
    if records.len() < 10 * k {
        return Err(Error::Parameter(format!(
            "{} records are too few for {k}-fold cross-validation (need {})",
            records.len(),
            10 * k
        )));
    }
    spec.validate()?;
    let assignment = fold_assignment(records.len(), k, opts.seed);

    let per_fold: Vec<Result<(Vec<CvPrediction>, Vec<usize>)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<PropertyRecord> = records
                .iter()
                .zip(&assignment)
                .filter(|(_, a)| **a != f)
                .map(|(r, _)| r.clone())
                .collect();
            let model = FittedModel::fit(&train, spec, &opts.method)?;
            let mut preds = Vec::new();
            let mut excluded = Vec::new();
            for (r, _) in records.iter().zip(&assignment).filter(|(_, a)| **a == f) {
                match model.predict(r) {
                    Ok(p) => preds.push(CvPrediction {
                        id: r.id,
                        fold: f,
                        actual: r.price,
                        predicted: p.price_point,
                        pi50: p.price_pi50,
                        pi95: p.price_pi95,
                        log_residual: r.log_price_per_m2 - p.point,
                    }),
                    Err(Error::UnseenLevel { .. }) => excluded.push(r.id),
                    Err(e) => return Err(e),
                }
            }
            Ok((preds, excluded))
        })
        .collect();

    let mut predictions = Vec::with_capacity(records.len());
    let mut excluded = Vec::new();
    for r in per_fold {
        let (p, e) = r?;
        predictions.extend(p);
        excluded.extend(e);
    }
    let order: std::collections::HashMap<usize, usize> = records.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
    predictions.sort_by_key(|p| order[&p.id]);
    excluded.sort_by_key(|id| order[id]);
    if !excluded.is_empty() {
        log::warn!("{} records excluded: categorical levels unseen in training folds", excluded.len());
    }

    let actual: Vec<f64> = predictions.iter().map(|p| p.actual).collect();
    let predicted: Vec<f64> = predictions.iter().map(|p| p.predicted).collect();
    let i50: Vec<Interval> = predictions.iter().map(|p| p.pi50).collect();
    let i95: Vec<Interval> = predictions.iter().map(|p| p.pi95).collect();
    let m = metrics(&actual, &predicted, Some((&i50, &i95)))?;

    let coords: Vec<PlanarCoord> = predictions.iter().map(|p| records[order[&p.id]].planar).collect();
    let ids: Vec<usize> = predictions.iter().map(|p| p.id).collect();
    let resid: Vec<f64> = predictions.iter().map(|p| p.log_residual).collect();
    let nb = opts.moran_neighbours.min(predictions.len().saturating_sub(1));
    let w = SpatialWeights::knn(&coords, &ids, nb, true)?;
    let morans = morans_i(&resid, &w)?;

    Ok(EvalReport {
        model: spec.name.clone(),
        folds: k,
        seed: opts.seed,
        n: records.len(),
        metrics: m,
        morans_i: morans,
        excluded,
        predictions,
    })
}

/// Upper edges of the price bands, euro. Bands are (previous edge, edge].
pub const BAND_EDGES: [f64; 19] = [
    250_000.0,
    300_000.0,
    350_000.0,
    400_000.0,
    450_000.0,
    500_000.0,
    550_000.0,
    600_000.0,
    650_000.0,
    700_000.0,
    800_000.0,
    900_000.0,
    1_000_000.0,
    1_100_000.0,
    1_500_000.0,
    2_000_000.0,
    3_500_000.0,
    5_000_000.0,
    f64::INFINITY,
];

fn euro(v: f64) -> String {
    let s = format!("{}", v as u64);
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    format!("€{out}")
}

pub fn band_label(i: usize) -> String {
    match i {
        0 => format!("Under {}", euro(BAND_EDGES[0])),
        _ if BAND_EDGES[i].is_infinite() => format!("Over {}", euro(BAND_EDGES[i - 1])),
        _ => format!("{} - {}", euro(BAND_EDGES[i - 1] + 1.0), euro(BAND_EDGES[i])),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub label: String,
    pub count: usize,
    /// `None` for empty bands.
    pub mdape: Option<f64>,
    pub within5: Option<f64>,
    pub within10: Option<f64>,
    pub within20: Option<f64>,
    /// Over every record in this band and all cheaper bands.
    pub cumulative_mdape: Option<f64>,
}

/// Accuracy by band of actual price. The open-ended top band is only
/// reported when it has members.
pub fn band_table(actual: &[f64], predicted: &[f64]) -> Result<Vec<BandRow>> {
    check_pairs(actual, predicted)?;
    let errors = ape(actual, predicted);
    let band_of = |a: f64| BAND_EDGES.iter().position(|e| a <= *e).expect("last edge is infinite");
    let mut rows = Vec::with_capacity(BAND_EDGES.len());
    let mut cumulative: Vec<f64> = Vec::new();
    for (i, edge) in BAND_EDGES.iter().enumerate() {
        let e: Vec<f64> = actual
            .iter()
            .zip(&errors)
            .filter(|(a, _)| band_of(**a) == i)
            .map(|(_, e)| *e)
            .collect();
        if edge.is_infinite() && e.is_empty() {
            break;
        }
        cumulative.extend(&e);
        let stat = |lim: f64| (!e.is_empty()).then(|| share(&e, lim));
        rows.push(BandRow {
            label: band_label(i),
            count: e.len(),
            mdape: median(&e),
            within5: stat(0.05),
            within10: stat(0.10),
            within20: stat(0.20),
            cumulative_mdape: median(&cumulative),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub r2: f64,
    pub rmse: f64,
    pub coverage95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotSweep {
    pub rows: Vec<SweepRow>,
    /// Smallest k whose R² is within `ELBOW_TOLERANCE` of the largest k's.
    pub elbow: Option<usize>,
}

pub const ELBOW_TOLERANCE: f64 = 0.005;

/// Cross-validated accuracy of `spec` refitted with each spatial knot count.
pub fn knot_sweep(records: &[PropertyRecord], spec: &ModelSpec, k_values: &[usize], opts: &CvOptions) -> Result<KnotSweep> {
    if spec.spatial.is_none() {
        return Err(Error::Spec(format!("model '{}' has no spatial term to sweep", spec.name)));
    }
    if k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("knot counts must be strictly ascending".into()));
    }
    let distinct: BTreeSet<(u64, u64)> = records.iter().map(|r| (r.planar.x.to_bits(), r.planar.y.to_bits())).collect();
    let mut rows = Vec::new();
    for &k in k_values {
        if k > distinct.len() {
            log::warn!("skipping k = {k}: only {} distinct locations", distinct.len());
            continue;
        }
        let report = kfold_cv_with(records, &spec.clone().with_spatial_knots(k), opts)?;
        rows.push(SweepRow {
            k,
            r2: report.metrics.r2,
            rmse: report.metrics.rmse,
            coverage95: report.metrics.coverage95.unwrap_or(f64::NAN),
        });
    }
    let elbow = rows.last().map(|last| {
        rows.iter()
            .find(|r| r.r2 >= last.r2 - ELBOW_TOLERANCE)
            .map(|r| r.k)
            .unwrap_or(last.k)
    });
    Ok(KnotSweep { rows, elbow })
}
