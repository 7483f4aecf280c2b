//! Penalized least squares with GCV smoothing-parameter selection.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg;

/// A penalty matrix acting on the contiguous coefficient block starting at
/// `start`.
#[derive(Debug, Clone)]
pub struct Penalty {
    pub start: usize,
    pub matrix: DMatrix<f64>,
}

impl Penalty {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitMethod {
    Gcv(GcvOptions),
    /// Smoothing parameters given directly, one per penalty.
    Fixed(Vec<f64>),
}

impl Default for FitMethod {
    fn default() -> Self {
        FitMethod::Gcv(GcvOptions::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcvOptions {
    pub log10_lambda_min: f64,
    pub log10_lambda_max: f64,
    pub max_cycles: usize,
    /// Stop cycling once a full cycle improves the score by less than this
    /// relative amount.
    pub rel_tol: f64,
    /// Width, in log10 units, at which a golden-section line search stops.
    pub line_tol: f64,
}

impl Default for GcvOptions {
    fn default() -> Self {
        Self {
            log10_lambda_min: -8.0,
            log10_lambda_max: 8.0,
            max_cycles: 50,
            rel_tol: 1e-7,
            line_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PenalizedFit {
    pub beta: DVector<f64>,
    /// σ̂²(XᵀX + Σλ S)⁻¹.
    pub covariance: DMatrix<f64>,
    pub sigma2: f64,
    pub lambdas: Vec<f64>,
    /// Per-coefficient effective degrees of freedom, diag((XᵀX + Σλ S)⁻¹XᵀX).
    pub edf: Vec<f64>,
    pub trace_a: f64,
    pub rss: f64,
    pub gcv: f64,
    pub n: usize,
    /// False when the GCV search stopped on the cycle limit.
    pub converged: bool,
}

struct Problem<'a> {
    n: usize,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    penalties: &'a [Penalty],
}

struct Eval {
    chol: Cholesky<f64, Dyn>,
    beta: DVector<f64>,
    trace_a: f64,
    gcv: f64,
}

impl Problem<'_> {
    fn system(&self, lambdas: &[f64]) -> DMatrix<f64> {
        let mut h = self.xtx.clone();
        for (p, &l) in self.penalties.iter().zip(lambdas) {
            let m = p.len();
            let mut blk = h.view_mut((p.start, p.start), (m, m));
            blk += &p.matrix * l;
        }
        h
    }

    fn eval(&self, lambdas: &[f64]) -> Result<Eval> {
        let h = self.system(lambdas);
        let (chol, _) = linalg::robust_cholesky(&h)?;
        let beta = chol.solve(&self.xty);
        let rss = (self.yty - 2.0 * beta.dot(&self.xty) + beta.dot(&(&self.xtx * &beta))).max(0.0);
        let hinv = chol.inverse();
        let trace_a = hinv.component_mul(&self.xtx).sum();
        let dof = self.n as f64 - trace_a;
        let gcv = if dof > 0.0 {
            self.n as f64 * rss / (dof * dof)
        } else {
            f64::INFINITY
        };
        Ok(Eval {
            chol,
            beta,
            trace_a,
            gcv,
        })
    }

    fn gcv_at(&self, lambdas: &[f64]) -> f64 {
        self.eval(lambdas).map(|e| e.gcv).unwrap_or(f64::INFINITY)
    }
}

/// Minimizes ‖y − Xβ‖² + Σⱼ λⱼ βᵀSⱼβ. Under [`FitMethod::Gcv`] the λⱼ are
/// chosen by coordinate-wise golden-section search of the GCV score over
/// log10 λ.
pub fn fit_penalized(
    x: &DMatrix<f64>,
    penalties: &[Penalty],
    y: &DVector<f64>,
    method: &FitMethod,
) -> Result<PenalizedFit> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::Parameter(format!("design has {n} rows but response has {}", y.len())));
    }
    if n < 10 {
        return Err(Error::Degenerate(format!("need at least 10 observations, got {n}")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix".into()));
    }
    for pen in penalties {
        if pen.start + pen.len() > p || pen.matrix.ncols() != pen.len() {
            return Err(Error::Parameter("penalty block outside the design".into()));
        }
    }

    let prob = Problem {
        n,
        xtx: linalg::gram(x),
        xty: x.tr_mul(y),
        yty: y.dot(y),
        penalties,
    };

    let (lambdas, converged) = match method {
        FitMethod::Fixed(l) => {
            if l.len() != penalties.len() {
                return Err(Error::Parameter(format!(
                    "{} smoothing parameters given for {} penalties",
                    l.len(),
                    penalties.len()
                )));
            }
            if l.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Parameter("smoothing parameters must be finite and ≥ 0".into()));
            }
            (l.clone(), true)
        }
        FitMethod::Gcv(opts) => gcv_search(&prob, opts),
    };

    let e = prob.eval(&lambdas)?;
    let resid = y - x * &e.beta;
    let rss = resid.dot(&resid);
    let dof = n as f64 - e.trace_a;
    if dof <= 0.0 {
        return Err(Error::Degenerate(format!(
            "effective degrees of freedom {:.2} leave no residual degrees of freedom",
            e.trace_a
        )));
    }
    let sigma2 = rss / dof;
    let hinv = e.chol.inverse();
    let f = &hinv * &prob.xtx;
    let edf = (0..p).map(|i| f[(i, i)]).collect();
    let mut covariance = hinv * sigma2;
    linalg::symmetrize(&mut covariance);
    Ok(PenalizedFit {
        beta: e.beta,
        covariance,
        sigma2,
        lambdas,
        edf,
        trace_a: e.trace_a,
        rss,
        gcv: n as f64 * rss / (dof * dof),
        n,
        converged,
    })
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn gcv_search(prob: &Problem, opts: &GcvOptions) -> (Vec<f64>, bool) {
    let m = prob.penalties.len();
    let mut rho = vec![0.0f64; m];
    let to_lambda = |r: &[f64]| r.iter().map(|v| 10f64.powf(*v)).collect::<Vec<_>>();
    if m == 0 {
        return (vec![], true);
    }
    let mut best = prob.gcv_at(&to_lambda(&rho));
    for cycle in 0..opts.max_cycles {
        let start = best;
        for j in 0..m {
            let mut trial = rho.clone();
            let mut f = |t: f64| {
                trial[j] = t;
                prob.gcv_at(&to_lambda(&trial))
            };
            let (t, v) = golden_section(&mut f, opts.log10_lambda_min, opts.log10_lambda_max, opts.line_tol);
            if v < best {
                best = v;
                rho[j] = t;
            }
        }
        let improvement = (start - best) / start.abs().max(f64::MIN_POSITIVE);
        if cycle > 0 && improvement < opts.rel_tol {
            return (to_lambda(&rho), true);
        }
        if !start.is_finite() && !best.is_finite() {
            break;
        }
    }
    log::warn!("GCV search hit the {}-cycle limit; using the best smoothing parameters found", opts.max_cycles);
    (to_lambda(&rho), false)
}

/// Golden-section minimization on [a, b]; returns the best point evaluated.
fn golden_section(f: &mut dyn FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    while (b - a) > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    best
}
