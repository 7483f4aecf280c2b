//! Design-matrix assembly. A [`Design`] is learned from training records
//! (knots, factor levels, centering constraints) and then evaluates rows for
//! any record, so training and prediction share one code path.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::{self, Postcode, PropertyRecord};
use crate::error::{Error, Result};
use crate::fit::penalized::Penalty;
use crate::fit::spec::{Factor, ModelSpec, PostcodeMode, Variable};
use crate::geo::PlanarCoord;
use crate::linalg;
use crate::smooth::{self, CategoricalEncoding, CubicRegressionSpline};

/// One model term as learned from training data. Smooth terms carry the
/// column means of their raw basis; the sum-to-zero constraint is rebuilt
/// from those, so a serialized term reproduces its columns exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Intercept,
    Linear {
        variable: Variable,
    },
    Factor {
        factor: Factor,
        levels: Vec<String>,
    },
    ChangeDummy {
        from: Postcode,
        to: Postcode,
    },
    Smooth {
        variable: Variable,
        knots: Vec<f64>,
        column_means: Vec<f64>,
        penalty_scale: f64,
    },
    Spatial {
        knots: Vec<PlanarCoord>,
        rho: f64,
        column_means: Vec<f64>,
        penalty_scale: f64,
    },
}

impl Term {
    pub fn label(&self) -> String {
        match self {
            Term::Intercept => "(intercept)".into(),
            Term::Linear { variable } => variable.name().into(),
            Term::Factor { factor, .. } => factor.name().into(),
            Term::ChangeDummy { from, to } => format!("change:{from}->{to}"),
            Term::Smooth { variable, .. } => format!("s({variable})"),
            Term::Spatial { .. } => "gp(x,y)".into(),
        }
    }

    pub fn is_penalized(&self) -> bool {
        matches!(self, Term::Smooth { .. } | Term::Spatial { .. })
    }
}

#[derive(Debug, Clone)]
enum Compiled {
    Intercept,
    Linear(Variable),
    Factor(Factor, CategoricalEncoding),
    Change(Postcode, Postcode),
    Smooth {
        variable: Variable,
        spline: CubicRegressionSpline,
        z: DMatrix<f64>,
    },
    Spatial {
        knots: Vec<PlanarCoord>,
        rho: f64,
        z: DMatrix<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Design {
    terms: Vec<Term>,
    compiled: Vec<Compiled>,
    ranges: Vec<Range<usize>>,
    ncols: usize,
    postcode_mode: PostcodeMode,
}

fn constraint(column_means: &[f64]) -> DMatrix<f64> {
    linalg::null_space_of_vector(&DVector::from_column_slice(column_means))
}

fn factor_level(f: Factor, r: &PropertyRecord, mode: PostcodeMode) -> &'static str {
    match f {
        Factor::PropertyType => r.property_type.label(),
        Factor::Ber => r.ber.label(),
        Factor::Postcode => match mode {
            PostcodeMode::Given => r.postcode.label(),
            _ => r.effective_postcode().label(),
        },
    }
}

fn canonical_levels(f: Factor) -> Vec<&'static str> {
    match f {
        Factor::PropertyType => dataio::PropertyType::ALL.iter().map(|t| t.label()).collect(),
        Factor::Ber => dataio::Ber::ALL.iter().map(|b| b.label()).collect(),
        Factor::Postcode => Postcode::all().map(|p| p.label()).collect(),
    }
}

impl Design {
    pub fn from_terms(terms: Vec<Term>, postcode_mode: PostcodeMode) -> Result<Self> {
        let mut compiled = Vec::with_capacity(terms.len());
        let mut ranges = Vec::with_capacity(terms.len());
        let mut col = 0;
        for t in &terms {
            let (c, len) = match t {
                Term::Intercept => (Compiled::Intercept, 1),
                Term::Linear { variable } => (Compiled::Linear(*variable), 1),
                Term::Factor { factor, levels } => {
                    let enc = smooth::sum_to_zero(factor.name(), levels)?;
                    let d = enc.dim();
                    (Compiled::Factor(*factor, enc), d)
                }
                Term::ChangeDummy { from, to } => (Compiled::Change(*from, *to), 1),
                Term::Smooth {
                    variable,
                    knots,
                    column_means,
                    ..
                } => {
                    let spline = CubicRegressionSpline::new(knots)?;
                    if column_means.len() != spline.dim() {
                        return Err(Error::Spec(format!("smooth of '{variable}' has inconsistent constraint")));
                    }
                    let z = constraint(column_means);
                    let d = z.ncols();
                    (
                        Compiled::Smooth {
                            variable: *variable,
                            spline,
                            z,
                        },
                        d,
                    )
                }
                Term::Spatial {
                    knots,
                    rho,
                    column_means,
                    ..
                } => {
                    smooth::kernel(0.0, *rho, 1.0)?;
                    if column_means.len() != knots.len() {
                        return Err(Error::Spec("spatial smooth has inconsistent constraint".into()));
                    }
                    let z = constraint(column_means);
                    let d = z.ncols();
                    (
                        Compiled::Spatial {
                            knots: knots.clone(),
                            rho: *rho,
                            z,
                        },
                        d,
                    )
                }
            };
            compiled.push(c);
            ranges.push(col..col + len);
            col += len;
        }
        Ok(Self {
            terms,
            compiled,
            ranges,
            ncols: col,
            postcode_mode,
        })
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn range(&self, term: usize) -> Range<usize> {
        self.ranges[term].clone()
    }

    pub fn postcode_mode(&self) -> PostcodeMode {
        self.postcode_mode
    }

    pub fn encoding(&self, term: usize) -> Option<&CategoricalEncoding> {
        match &self.compiled[term] {
            Compiled::Factor(_, e) => Some(e),
            _ => None,
        }
    }

    pub fn find_factor(&self, factor: Factor) -> Option<usize> {
        self.terms
            .iter()
            .position(|t| matches!(t, Term::Factor { factor: f, .. } if *f == factor))
    }

    pub fn find_smooth(&self, variable: Variable) -> Option<usize> {
        self.terms
            .iter()
            .position(|t| matches!(t, Term::Smooth { variable: v, .. } if *v == variable))
    }

    pub fn find_spatial(&self) -> Option<usize> {
        self.terms.iter().position(|t| matches!(t, Term::Spatial { .. }))
    }

    /// Writes the design row of `r` into `out` (length `ncols()`).
    pub fn row_into(&self, r: &PropertyRecord, out: &mut [f64]) -> Result<()> {
        for (c, range) in self.compiled.iter().zip(&self.ranges) {
            let dst = &mut out[range.clone()];
            match c {
                Compiled::Intercept => dst[0] = 1.0,
                Compiled::Linear(v) => dst[0] = v.value(r),
                Compiled::Factor(f, enc) => {
                    let level = factor_level(*f, r, self.postcode_mode);
                    let i = enc.level_index(level).ok_or_else(|| Error::UnseenLevel {
                        variable: f.name().into(),
                        level: level.into(),
                    })?;
                    for (j, d) in dst.iter_mut().enumerate() {
                        *d = enc.contrast[(i, j)];
                    }
                }
                Compiled::Change(from, to) => {
                    dst[0] = if r.postcode == *from && r.postcode_corrected == Some(*to) {
                        1.0
                    } else {
                        0.0
                    }
                }
                Compiled::Smooth { variable, spline, z } => {
                    let mut raw = vec![0.0; spline.dim()];
                    spline.basis_row_into(variable.value(r), &mut raw);
                    project_row(&raw, z, dst);
                }
                Compiled::Spatial { knots, rho, z } => {
                    let mut raw = vec![0.0; knots.len()];
                    smooth::gp_basis_row_into(&r.planar, knots, *rho, &mut raw);
                    project_row(&raw, z, dst);
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, r: &PropertyRecord) -> Result<DVector<f64>> {
        let mut v = vec![0.0; self.ncols];
        self.row_into(r, &mut v)?;
        Ok(DVector::from_vec(v))
    }

    pub fn matrix(&self, records: &[PropertyRecord]) -> Result<DMatrix<f64>> {
        let mut x = DMatrix::zeros(records.len(), self.ncols);
        let mut row = vec![0.0; self.ncols];
        for (i, r) in records.iter().enumerate() {
            self.row_into(r, &mut row)?;
            for (j, v) in row.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        Ok(x)
    }

    /// Constrained smooth basis at a covariate value.
    pub fn smooth_row(&self, term: usize, x: f64) -> Option<Vec<f64>> {
        match &self.compiled[term] {
            Compiled::Smooth { spline, z, .. } => {
                let mut raw = vec![0.0; spline.dim()];
                spline.basis_row_into(x, &mut raw);
                let mut out = vec![0.0; z.ncols()];
                project_row(&raw, z, &mut out);
                Some(out)
            }
            _ => None,
        }
    }

    /// Constrained spatial basis at a planar location.
    pub fn spatial_row(&self, term: usize, p: &PlanarCoord) -> Option<Vec<f64>> {
        match &self.compiled[term] {
            Compiled::Spatial { knots, rho, z } => {
                let mut raw = vec![0.0; knots.len()];
                smooth::gp_basis_row_into(p, knots, *rho, &mut raw);
                let mut out = vec![0.0; z.ncols()];
                project_row(&raw, z, &mut out);
                Some(out)
            }
            _ => None,
        }
    }

    /// Unscaled penalty of a smooth term in constrained coordinates.
    fn raw_penalty(&self, term: usize) -> Option<DMatrix<f64>> {
        let (s, z) = match &self.compiled[term] {
            Compiled::Smooth { spline, z, .. } => (spline.penalty().clone(), z),
            Compiled::Spatial { knots, rho, z } => (smooth::gp_penalty(knots, *rho), z),
            _ => return None,
        };
        let mut p = z.transpose() * s * z;
        linalg::symmetrize(&mut p);
        Some(p)
    }

    /// Scaled penalties for every smooth term, in term order, paired with the
    /// index of the term they belong to.
    pub fn penalties(&self) -> Vec<(usize, Penalty)> {
        self.terms
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                let scale = match t {
                    Term::Smooth { penalty_scale, .. } | Term::Spatial { penalty_scale, .. } => *penalty_scale,
                    _ => return None,
                };
                let m = self.raw_penalty(i)? * scale;
                Some((
                    i,
                    Penalty {
                        start: self.ranges[i].start,
                        matrix: m,
                    },
                ))
            })
            .collect()
    }
}

fn project_row(raw: &[f64], z: &DMatrix<f64>, out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        let col = z.column(j);
        *o = raw.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
    }
}

/// Design matrix, response and penalties for a spec on a training set.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// (term index, penalty) for each smooth term.
    pub penalties: Vec<(usize, Penalty)>,
    pub design: Design,
}

pub fn build_design(records: &[PropertyRecord], spec: &ModelSpec) -> Result<DesignMatrix> {
    spec.validate()?;
    if records.is_empty() {
        return Err(Error::NoUsableRecords);
    }
    let mode = spec.postcode_mode;
    let mut terms = vec![Term::Intercept];

    for v in &spec.linear {
        if is_constant(records.iter().map(|r| v.value(r))) {
            log::warn!("dropping linear term '{v}': constant over the training data");
            continue;
        }
        terms.push(Term::Linear { variable: *v });
    }

    for f in &spec.factors {
        let levels: Vec<String> = canonical_levels(*f)
            .into_iter()
            .filter(|l| records.iter().any(|r| factor_level(*f, r, mode) == *l))
            .map(str::to_string)
            .collect();
        let missing = canonical_levels(*f).len() - levels.len();
        if missing > 0 {
            log::info!("factor '{}': {missing} level(s) absent from training data dropped", f.name());
        }
        if levels.len() < 2 {
            log::warn!("dropping factor '{}': fewer than 2 observed levels", f.name());
            continue;
        }
        terms.push(Term::Factor { factor: *f, levels });
    }

    if spec.has_change_dummies() {
        for (from, to) in dataio::postcode_changes() {
            let hit = |r: &PropertyRecord| r.postcode == from && r.postcode_corrected == Some(to);
            let count = records.iter().filter(|r| hit(r)).count();
            if count == 0 || count == records.len() {
                log::warn!("dropping change dummy {from}->{to}: constant over the training data");
                continue;
            }
            terms.push(Term::ChangeDummy { from, to });
        }
    }

    for s in &spec.smooths {
        let xs: Vec<f64> = records.iter().map(|r| s.variable.value(r)).collect();
        let mut knots = smooth::choose_quantile_knots(&xs, s.knots)?;
        if knots.len() < 3 {
            let mut distinct = xs.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            if distinct.len() < 3 {
                log::warn!("'{}' has fewer than 3 distinct values; entering it linearly", s.variable);
                if !spec.linear.contains(&s.variable) {
                    terms.push(Term::Linear { variable: s.variable });
                }
                continue;
            }
            knots = smooth::choose_quantile_knots(&distinct, s.knots.min(distinct.len()))?;
        }
        let spline = CubicRegressionSpline::new(&knots)?;
        let column_means = column_means(&spline.basis(&xs));
        terms.push(Term::Smooth {
            variable: s.variable,
            knots: spline.knots().to_vec(),
            column_means,
            penalty_scale: 1.0,
        });
    }

    if let Some(sp) = &spec.spatial {
        let coords: Vec<PlanarCoord> = records.iter().map(|r| r.planar).collect();
        let knots = smooth::choose_spatial_knots(&coords, sp.knots, sp.knot_seed);
        if knots.len() < 2 {
            return Err(Error::Degenerate("spatial smooth needs at least 2 distinct locations".into()));
        }
        let rho = sp.rho.unwrap_or_else(|| smooth::default_rho(&knots));
        let column_means = column_means(&smooth::gp_basis(&coords, &knots, rho));
        terms.push(Term::Spatial {
            knots,
            rho,
            column_means,
            penalty_scale: 1.0,
        });
    }

    let design = Design::from_terms(terms, mode)?;
    let x = design.matrix(records)?;
    let y = DVector::from_iterator(records.len(), records.iter().map(|r| r.log_price_per_m2));

    // Scale each penalty to the size of its block of XᵀX so that one search
    // range for log10 λ suits every term.
    let mut terms = design.terms.clone();
    for (i, t) in terms.iter_mut().enumerate() {
        if let Term::Smooth { penalty_scale, .. } | Term::Spatial { penalty_scale, .. } = t {
            let r = design.range(i);
            let xb = x.columns(r.start, r.len());
            let gram_norm = (xb.transpose() * xb).norm();
            let pen_norm = design.raw_penalty(i).map(|p| p.norm()).unwrap_or(0.0);
            *penalty_scale = if pen_norm > 0.0 && gram_norm > 0.0 {
                gram_norm / pen_norm
            } else {
                1.0
            };
        }
    }
    let design = Design::from_terms(terms, mode)?;
    let penalties = design.penalties();
    Ok(DesignMatrix { x, y, penalties, design })
}

fn is_constant(mut it: impl Iterator<Item = f64>) -> bool {
    match it.next() {
        None => true,
        Some(first) => it.all(|v| v == first),
    }
}

fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() as f64;
    m.column_iter().map(|c| c.sum() / n).collect()
}
