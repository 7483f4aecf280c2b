//! Fitted models: prediction with intervals, coefficient scalings and
//! versioned JSON persistence.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataio::PropertyRecord;
use crate::error::{Error, Result};
use crate::fit::design::{build_design, Design, Term};
use crate::fit::penalized::{fit_penalized, FitMethod};
use crate::fit::spec::{Factor, ModelSpec, Variable};
use crate::geo::PlanarCoord;

pub const MODEL_FORMAT: &str = "geohedonic-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSummary {
    pub term: String,
    pub columns: usize,
    pub edf: f64,
    /// Smoothing parameter against the normalized penalty used in the search.
    pub lambda: Option<f64>,
    /// The same parameter against the unnormalized penalty.
    pub lambda_raw: Option<f64>,
}

/// Planar extent of the training locations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn of(points: impl IntoIterator<Item = PlanarCoord>) -> Option<Self> {
        let mut it = points.into_iter();
        let p = it.next()?;
        let mut b = BBox {
            x_min: p.x,
            x_max: p.x,
            y_min: p.y,
            y_max: p.y,
        };
        for p in it {
            b.x_min = b.x_min.min(p.x);
            b.x_max = b.x_max.max(p.x);
            b.y_min = b.y_min.min(p.y);
            b.y_max = b.y_max.max(p.y);
        }
        Some(b)
    }

    pub fn padded(&self, pad: f64) -> Self {
        BBox {
            x_min: self.x_min - pad,
            x_max: self.x_max + pad,
            y_min: self.y_min - pad,
            y_max: self.y_max + pad,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct FittedModel {
    pub spec: ModelSpec,
    design: Design,
    pub beta: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub sigma2_hat: f64,
    pub terms: Vec<TermSummary>,
    pub gcv: f64,
    pub rss: f64,
    pub trace_a: f64,
    pub n_train: usize,
    pub converged: bool,
    pub train_bbox: BBox,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    spec: ModelSpec,
    terms: Vec<Term>,
    beta: Vec<f64>,
    /// Row-major p × p.
    covariance: Vec<f64>,
    sigma2_hat: f64,
    term_summaries: Vec<TermSummary>,
    gcv: f64,
    rss: f64,
    trace_a: f64,
    n_train: usize,
    converged: bool,
    train_bbox: BBox,
}

impl From<FittedModel> for ModelDocument {
    fn from(m: FittedModel) -> Self {
        let p = m.beta.len();
        let covariance = (0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| m.covariance[(i, j)]).collect();
        ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            spec: m.spec,
            terms: m.design.terms().to_vec(),
            beta: m.beta.iter().copied().collect(),
            covariance,
            sigma2_hat: m.sigma2_hat,
            term_summaries: m.terms,
            gcv: m.gcv,
            rss: m.rss,
            trace_a: m.trace_a,
            n_train: m.n_train,
            converged: m.converged,
            train_bbox: m.train_bbox,
        }
    }
}

impl TryFrom<ModelDocument> for FittedModel {
    type Error = Error;

    fn try_from(d: ModelDocument) -> Result<Self> {
        if d.format != MODEL_FORMAT || d.version != MODEL_FORMAT_VERSION {
            return Err(Error::Spec(format!(
                "unsupported model document {} v{} (expected {MODEL_FORMAT} v{MODEL_FORMAT_VERSION})",
                d.format, d.version
            )));
        }
        let design = Design::from_terms(d.terms, d.spec.postcode_mode)?;
        let p = design.ncols();
        if d.beta.len() != p || d.covariance.len() != p * p {
            return Err(Error::Spec("model document dimensions do not match its terms".into()));
        }
        Ok(FittedModel {
            spec: d.spec,
            design,
            beta: DVector::from_vec(d.beta),
            covariance: DMatrix::from_row_slice(p, p, &d.covariance),
            sigma2_hat: d.sigma2_hat,
            terms: d.term_summaries,
            gcv: d.gcv,
            rss: d.rss,
            trace_a: d.trace_a,
            n_train: d.n_train,
            converged: d.converged,
            train_bbox: d.train_bbox,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn exp_scaled(&self, s: f64) -> Interval {
        Interval {
            lo: self.lo.exp() * s,
            hi: self.hi.exp() * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Log price per m².
    pub point: f64,
    /// Includes both coefficient uncertainty and residual variance.
    pub se: f64,
    pub pi50: Interval,
    pub pi95: Interval,
    pub price_point: f64,
    pub price_pi50: Interval,
    pub price_pi95: Interval,
}

/// exp-transformed coefficient with its 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub term: String,
    /// Factor level, or empty for single-column terms.
    pub level: String,
    pub coefficient: f64,
    pub se: f64,
    pub scaling: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn z_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

impl FittedModel {
    pub fn fit(records: &[PropertyRecord], spec: &ModelSpec, method: &FitMethod) -> Result<Self> {
        let dm = build_design(records, spec)?;
        let penalties: Vec<_> = dm.penalties.iter().map(|(_, p)| p.clone()).collect();
        let pf = fit_penalized(&dm.x, &penalties, &dm.y, method)?;
        if !pf.converged {
            log::warn!("{}: smoothing parameter search did not converge", spec.name);
        }
        let design = dm.design;
        let terms = design
            .terms()
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let r = design.range(i);
                let lambda = dm.penalties.iter().position(|(ti, _)| *ti == i).map(|k| pf.lambdas[k]);
                let scale = match t {
                    Term::Smooth { penalty_scale, .. } | Term::Spatial { penalty_scale, .. } => *penalty_scale,
                    _ => 1.0,
                };
                TermSummary {
                    term: t.label(),
                    columns: r.len(),
                    edf: pf.edf[r].iter().sum(),
                    lambda,
                    lambda_raw: lambda.map(|l| l * scale),
                }
            })
            .collect();
        let train_bbox = BBox::of(records.iter().map(|r| r.planar)).expect("non-empty training set");
        Ok(FittedModel {
            spec: spec.clone(),
            design,
            beta: pf.beta,
            covariance: pf.covariance,
            sigma2_hat: pf.sigma2,
            terms,
            gcv: pf.gcv,
            rss: pf.rss,
            trace_a: pf.trace_a,
            n_train: pf.n,
            converged: pf.converged,
            train_bbox,
        })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Fitted log price per m² (no interval).
    pub fn predict_point(&self, r: &PropertyRecord) -> Result<f64> {
        Ok(self.design.row(r)?.dot(&self.beta))
    }

    pub fn predict(&self, r: &PropertyRecord) -> Result<Prediction> {
        let x0 = self.design.row(r)?;
        let point = x0.dot(&self.beta);
        let se = (x0.dot(&(&self.covariance * &x0)) + self.sigma2_hat).sqrt();
        let z50 = z_quantile(0.75);
        let z95 = z_quantile(0.975);
        let pi50 = Interval {
            lo: point - z50 * se,
            hi: point + z50 * se,
        };
        let pi95 = Interval {
            lo: point - z95 * se,
            hi: point + z95 * se,
        };
        Ok(Prediction {
            point,
            se,
            pi50,
            pi95,
            price_point: point.exp() * r.size,
            price_pi50: pi50.exp_scaled(r.size),
            price_pi95: pi95.exp_scaled(r.size),
        })
    }

    /// Full-level coefficients of a factor with their standard errors.
    pub fn factor_effects(&self, factor: Factor) -> Option<Vec<(String, f64, f64)>> {
        let t = self.design.find_factor(factor)?;
        let enc = self.design.encoding(t)?;
        let r = self.design.range(t);
        let theta: Vec<f64> = self.beta.rows(r.start, r.len()).iter().copied().collect();
        let full = enc.recover(&theta);
        let v = self.covariance.view((r.start, r.start), (r.len(), r.len()));
        let cov = &enc.contrast * v * enc.contrast.transpose();
        Some(
            enc.levels
                .iter()
                .enumerate()
                .map(|(i, l)| (l.clone(), full[i], cov[(i, i)].max(0.0).sqrt()))
                .collect(),
        )
    }

    /// exp(coefficient) with exp(coefficient ± 1.96·se) for every parametric
    /// term; factors are reported per level.
    pub fn coefficient_scalings(&self) -> Vec<Scaling> {
        let z = 1.96;
        let mk = |term: String, level: String, c: f64, se: f64| Scaling {
            term,
            level,
            coefficient: c,
            se,
            scaling: c.exp(),
            ci_low: (c - z * se).exp(),
            ci_high: (c + z * se).exp(),
        };
        let mut out = Vec::new();
        for (i, t) in self.design.terms().iter().enumerate() {
            match t {
                Term::Linear { .. } | Term::ChangeDummy { .. } => {
                    let j = self.design.range(i).start;
                    out.push(mk(t.label(), String::new(), self.beta[j], self.covariance[(j, j)].max(0.0).sqrt()));
                }
                Term::Factor { factor, .. } => {
                    for (level, c, se) in self.factor_effects(*factor).unwrap_or_default() {
                        out.push(mk(t.label(), level, c, se));
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Coefficient of a single-column term.
    pub fn linear_coefficient(&self, variable: Variable) -> Option<(f64, f64)> {
        let i = self
            .design
            .terms()
            .iter()
            .position(|t| matches!(t, Term::Linear { variable: v } if *v == variable))?;
        let j = self.design.range(i).start;
        Some((self.beta[j], self.covariance[(j, j)].max(0.0).sqrt()))
    }

    /// Centered contribution of the smooth of `variable` at each of `xs`.
    pub fn smooth_effect(&self, variable: Variable, xs: &[f64]) -> Option<Vec<f64>> {
        let t = self.design.find_smooth(variable)?;
        let r = self.design.range(t);
        let b = self.beta.rows(r.start, r.len());
        xs.iter()
            .map(|&x| self.design.smooth_row(t, x).map(|row| row.iter().zip(b.iter()).map(|(a, c)| a * c).sum()))
            .collect()
    }

    pub fn has_spatial(&self) -> bool {
        self.design.find_spatial().is_some()
    }

    /// Contribution of the spatial smooth at a planar location.
    pub fn spatial_effect(&self, p: &PlanarCoord) -> Result<f64> {
        let t = self
            .design
            .find_spatial()
            .ok_or_else(|| Error::Spec(format!("model '{}' has no spatial term", self.spec.name)))?;
        let r = self.design.range(t);
        let row = self.design.spatial_row(t, p).expect("spatial term");
        Ok(row.iter().zip(self.beta.rows(r.start, r.len()).iter()).map(|(a, b)| a * b).sum())
    }

    /// Contribution of the spatial term for each training-style record, using
    /// the same rows as the design matrix.
    pub fn in_sample_spatial(&self, r: &PropertyRecord) -> Result<f64> {
        let t = self
            .design
            .find_spatial()
            .ok_or_else(|| Error::Spec(format!("model '{}' has no spatial term", self.spec.name)))?;
        let range = self.design.range(t);
        let row = self.design.row(r)?;
        Ok(row.rows(range.start, range.len()).dot(&self.beta.rows(range.start, range.len())))
    }
}

/// Percentage premium of `a` over `b`: 100·(1 − b/a).
pub fn premium(scaling_a: f64, scaling_b: f64) -> Result<f64> {
    if !(scaling_a > 0.0 && scaling_b > 0.0) || !scaling_a.is_finite() || !scaling_b.is_finite() {
        return Err(Error::Parameter(format!(
            "scalings must be positive, got {scaling_a} and {scaling_b}"
        )));
    }
    Ok(100.0 * (1.0 - scaling_b / scaling_a))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn premium_examples() {
        assert_eq!(premium(1.16, 1.11).unwrap().round(), 4.0);
        assert_eq!(premium(0.91, 0.88).unwrap().round(), 3.0);
        assert_eq!(premium(1.08, 0.94).unwrap().round(), 13.0);
        assert!(premium(0.0, 1.0).is_err());
        assert!(premium(1.0, -1.0).is_err());
    }

    #[test]
    fn z_quantiles() {
        assert!((z_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((z_quantile(0.75) - 0.674_489_750_196_081_7).abs() < 1e-9);
    }
}
