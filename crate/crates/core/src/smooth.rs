//! Basis and penalty construction: 1-D cubic regression splines, the low-rank
//! Gaussian-process location smooth, and sum-to-zero categorical contrasts.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::PlanarCoord;
use crate::linalg;

// ── Covariance kernel ───────────────────────────────────────────────────────

/// C(r) = σ²(1 + r/ρ)·exp(−r/ρ).
pub fn kernel(r: f64, rho: f64, sigma_x2: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Parameter(format!("kernel range must be positive, got {rho}")));
    }
    if !(sigma_x2 > 0.0) {
        return Err(Error::Parameter(format!("kernel variance must be positive, got {sigma_x2}")));
    }
    if r < 0.0 {
        return Err(Error::Parameter(format!("kernel lag must be non-negative, got {r}")));
    }
    Ok(kernel_unchecked(r, rho, sigma_x2))
}

#[inline]
fn kernel_unchecked(r: f64, rho: f64, sigma_x2: f64) -> f64 {
    let u = r / rho;
    sigma_x2 * (1.0 + u) * (-u).exp()
}

// ── Cubic regression splines ────────────────────────────────────────────────

/// Natural cubic spline parameterized by its values at the knots. Outside the
/// knot range the spline continues linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicRegressionSpline {
    knots: Vec<f64>,
    /// Maps knot values to second derivatives at the knots (k × k, first and
    /// last rows zero).
    f: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

impl CubicRegressionSpline {
    /// Duplicate knots are collapsed; at least 3 distinct knots are required.
    pub fn new(knots: &[f64]) -> Result<Self> {
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::NonFinite("spline knots".into()));
        }
        let mut ks = knots.to_vec();
        ks.sort_by(f64::total_cmp);
        ks.dedup();
        if ks.len() < 3 {
            return Err(Error::Parameter(format!(
                "cubic regression spline needs at least 3 distinct knots, got {}",
                ks.len()
            )));
        }
        let k = ks.len();
        let h: Vec<f64> = ks.windows(2).map(|w| w[1] - w[0]).collect();
        let mut d = DMatrix::zeros(k - 2, k);
        let mut b = DMatrix::zeros(k - 2, k - 2);
        for i in 0..k - 2 {
            d[(i, i)] = 1.0 / h[i];
            d[(i, i + 1)] = -1.0 / h[i] - 1.0 / h[i + 1];
            d[(i, i + 2)] = 1.0 / h[i + 1];
            b[(i, i)] = (h[i] + h[i + 1]) / 3.0;
            if i + 1 < k - 2 {
                b[(i, i + 1)] = h[i + 1] / 6.0;
                b[(i + 1, i)] = h[i + 1] / 6.0;
            }
        }
        let chol = b
            .cholesky()
            .ok_or_else(|| Error::LinAlg("spline band matrix not positive definite".into()))?;
        let binv_d = chol.solve(&d);
        let mut f = DMatrix::zeros(k, k);
        f.rows_mut(1, k - 2).copy_from(&binv_d);
        let mut penalty = d.transpose() * binv_d;
        linalg::symmetrize(&mut penalty);
        Ok(Self { knots: ks, f, penalty })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    /// ∫ f''(x)² dx as a quadratic form in the knot values.
    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    /// Fills `row` (length `dim()`) with the basis functions evaluated at `x`.
    pub fn basis_row_into(&self, x: f64, row: &mut [f64]) {
        let ks = &self.knots;
        let k = ks.len();
        row.iter_mut().for_each(|v| *v = 0.0);
        if x < ks[0] {
            // f(x1) + (x − x1)·f'(x1), with f''(x1) = 0.
            let h = ks[1] - ks[0];
            let t = x - ks[0];
            row[0] += 1.0 - t / h;
            row[1] += t / h;
            for (j, r) in row.iter_mut().enumerate() {
                *r -= t * h / 6.0 * self.f[(1, j)];
            }
            return;
        }
        if x > ks[k - 1] {
            let h = ks[k - 1] - ks[k - 2];
            let t = x - ks[k - 1];
            row[k - 1] += 1.0 + t / h;
            row[k - 2] -= t / h;
            for (j, r) in row.iter_mut().enumerate() {
                *r += t * h / 6.0 * self.f[(k - 2, j)];
            }
            return;
        }
        let j = match ks.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(i) => {
                row[i] = 1.0;
                return;
            }
            Err(i) => i - 1,
        };
        let h = ks[j + 1] - ks[j];
        let am = (ks[j + 1] - x) / h;
        let ap = (x - ks[j]) / h;
        let cm = ((ks[j + 1] - x).powi(3) / h - h * (ks[j + 1] - x)) / 6.0;
        let cp = ((x - ks[j]).powi(3) / h - h * (x - ks[j])) / 6.0;
        row[j] += am;
        row[j + 1] += ap;
        for (i, r) in row.iter_mut().enumerate() {
            *r += cm * self.f[(j, i)] + cp * self.f[(j + 1, i)];
        }
    }

    pub fn basis(&self, xs: &[f64]) -> DMatrix<f64> {
        let k = self.dim();
        let mut m = DMatrix::zeros(xs.len(), k);
        let mut row = vec![0.0; k];
        for (i, &x) in xs.iter().enumerate() {
            self.basis_row_into(x, &mut row);
            for j in 0..k {
                m[(i, j)] = row[j];
            }
        }
        m
    }

    /// Spline value at `x` for knot values `beta`.
    pub fn eval(&self, beta: &[f64], x: f64) -> f64 {
        let mut row = vec![0.0; self.dim()];
        self.basis_row_into(x, &mut row);
        row.iter().zip(beta).map(|(a, b)| a * b).sum()
    }
}

/// Basis matrix (rows = `x`) and penalty for a cubic regression spline.
pub fn cr_basis(x: &[f64], knots: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = CubicRegressionSpline::new(knots)?;
    Ok((s.basis(x), s.penalty().clone()))
}

/// Knots at quantile levels 0, 1/(k−1), …, 1 (linear-interpolation quantiles),
/// deduplicated. With fewer than `k` distinct values, `k` is reduced.
pub fn choose_quantile_knots(x: &[f64], k: usize) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("knot covariate".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Degenerate(format!(
            "covariate has {} distinct value(s); at least 2 are needed for knots",
            distinct.len()
        )));
    }
    if k < 2 {
        return Err(Error::Parameter(format!("knot count must be at least 2, got {k}")));
    }
    let k = if distinct.len() < k {
        log::warn!("only {} distinct values; reducing knot count from {k}", distinct.len());
        distinct.len()
    } else {
        k
    };
    let n = sorted.len();
    let mut knots: Vec<f64> = (0..k)
        .map(|i| {
            let h = (n - 1) as f64 * i as f64 / (k - 1) as f64;
            let lo = h.floor() as usize;
            if lo + 1 >= n {
                sorted[n - 1]
            } else {
                sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
            }
        })
        .collect();
    knots.dedup();
    Ok(knots)
}

// ── Gaussian-process location smooth ────────────────────────────────────────

/// Spatial knots by farthest-point (maximin) selection over the distinct
/// coordinates, starting from a seeded random point.
pub fn choose_spatial_knots(coords: &[PlanarCoord], k: usize, seed: u64) -> Vec<PlanarCoord> {
    let mut pts: Vec<PlanarCoord> = coords.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() <= k {
        if pts.len() < k {
            log::warn!("only {} distinct locations for {k} spatial knots; using all", pts.len());
        }
        return pts;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..pts.len());
    let mut chosen = Vec::with_capacity(k);
    let mut min_d = vec![f64::INFINITY; pts.len()];
    let mut next = start;
    for _ in 0..k {
        chosen.push(pts[next]);
        let c = pts[next];
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, p) in pts.iter().enumerate() {
            let d = p.dist(&c);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best.0 {
                best = (min_d[i], i);
            }
        }
        next = best.1;
    }
    chosen
}

/// Largest distance between any two knots; the default kernel range.
pub fn default_rho(knots: &[PlanarCoord]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, a) in knots.iter().enumerate() {
        for b in &knots[i + 1..] {
            m = m.max(a.dist(b));
        }
    }
    m
}

/// Low-rank GP smooth: basis columns are kernel bumps centered at the knots and
/// the penalty is the knot Gram matrix. The kernel variance is fixed at 1.
#[derive(Debug, Clone)]
pub struct GpTerm {
    pub knots: Vec<PlanarCoord>,
    pub rho: f64,
    pub sigma_x2: f64,
    pub basis: DMatrix<f64>,
    pub penalty: DMatrix<f64>,
}

pub fn gp_term(coords: &[PlanarCoord], knots: &[PlanarCoord], rho: f64) -> Result<GpTerm> {
    kernel(0.0, rho, 1.0)?;
    if knots.is_empty() {
        return Err(Error::Parameter("GP smooth needs at least one knot".into()));
    }
    Ok(GpTerm {
        knots: knots.to_vec(),
        rho,
        sigma_x2: 1.0,
        basis: gp_basis(coords, knots, rho),
        penalty: gp_penalty(knots, rho),
    })
}

pub fn gp_basis_row_into(p: &PlanarCoord, knots: &[PlanarCoord], rho: f64, row: &mut [f64]) {
    for (r, z) in row.iter_mut().zip(knots) {
        *r = kernel_unchecked(p.dist(z), rho, 1.0);
    }
}

pub fn gp_basis(coords: &[PlanarCoord], knots: &[PlanarCoord], rho: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(coords.len(), knots.len());
    let mut row = vec![0.0; knots.len()];
    for (i, p) in coords.iter().enumerate() {
        gp_basis_row_into(p, knots, rho, &mut row);
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Knot Gram matrix with a 1e-8·trace/k diagonal jitter.
pub fn gp_penalty(knots: &[PlanarCoord], rho: f64) -> DMatrix<f64> {
    let k = knots.len();
    let mut g = DMatrix::from_fn(k, k, |i, j| kernel_unchecked(knots[i].dist(&knots[j]), rho, 1.0));
    let jitter = 1e-8 * g.trace() / k as f64;
    for i in 0..k {
        g[(i, i)] += jitter;
    }
    g
}

// ── Categorical contrasts ───────────────────────────────────────────────────

/// Sum-to-zero coding: level j < L−1 maps to the unit vector e_j, the last
/// level to (−1, …, −1). Full-level coefficients are `contrast · θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalEncoding {
    pub variable: String,
    pub levels: Vec<String>,
    pub contrast: DMatrix<f64>,
}

pub fn sum_to_zero(variable: &str, levels: &[String]) -> Result<CategoricalEncoding> {
    let l = levels.len();
    if l < 2 {
        return Err(Error::Parameter(format!(
            "categorical variable '{variable}' needs at least 2 levels, got {l}"
        )));
    }
    let mut contrast = DMatrix::zeros(l, l - 1);
    for j in 0..l - 1 {
        contrast[(j, j)] = 1.0;
        contrast[(l - 1, j)] = -1.0;
    }
    Ok(CategoricalEncoding {
        variable: variable.to_string(),
        levels: levels.to_vec(),
        contrast,
    })
}

impl CategoricalEncoding {
    pub fn dim(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }

    /// Full-level coefficients from the constrained ones.
    pub fn recover(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        (&self.contrast * t).iter().copied().collect()
    }

}
