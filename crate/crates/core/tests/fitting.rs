use geohedonic::dataio::{FeatureContext, PropertyRecord};
use geohedonic::fit::{self, Factor, FitMethod, FittedModel, ModelName, ModelSpec, Penalty, PostcodeMode};
use geohedonic::smooth;
use geohedonic::synth::{self, GeneratorConfig};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn spline_problem(seed: u64, n: usize) -> (DMatrix<f64>, Vec<Penalty>, DVector<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise = Normal::new(0.0, 0.3).unwrap();
    let y = DVector::from_fn(n, |i, _| (z[i] * 0.8).sin() + 0.5 * w[i] + noise.sample(&mut rng));
    let knots = smooth::choose_quantile_knots(&z, 8).unwrap();
    let (b, s) = smooth::cr_basis(&z, &knots).unwrap();
    // Intercept, a linear covariate, then the (unconstrained minus one column)
    // spline block so the intercept stays identifiable.
    let k = b.ncols();
    let mut x = DMatrix::zeros(n, 2 + k - 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = w[i];
        for j in 1..k {
            x[(i, 1 + j)] = b[(i, j)];
        }
    }
    let pen = Penalty {
        start: 2,
        matrix: s.view((1, 1), (k - 1, k - 1)).into_owned(),
    };
    (x, vec![pen], y, z)
}

fn objective(x: &DMatrix<f64>, pens: &[Penalty], lambdas: &[f64], y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let r = y - x * beta;
    let mut v = r.dot(&r);
    for (p, l) in pens.iter().zip(lambdas) {
        let b = beta.rows(p.start, p.len());
        v += l * (b.transpose() * &p.matrix * b)[0];
    }
    v
}

fn gradient(x: &DMatrix<f64>, pens: &[Penalty], lambdas: &[f64], y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let mut g = -2.0 * x.transpose() * (y - x * beta);
    for (p, l) in pens.iter().zip(lambdas) {
        let b = beta.rows(p.start, p.len());
        let pg = 2.0 * *l * &p.matrix * b;
        let mut blk = g.rows_mut(p.start, p.len());
        blk += pg;
    }
    g
}

#[test]
fn gcv_fit_is_stationary_and_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let n = 60 + 7 * seed as usize;
        let (x, pens, y, _) = spline_problem(seed, n);
        let f = fit::fit_penalized(&x, &pens, &y, &FitMethod::default()).unwrap();
        let g = gradient(&x, &pens, &f.lambdas, &y, &f.beta);
        assert!(g.norm() <= 1e-6 * y.norm(), "seed {seed}: |g| = {}", g.norm());

        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let at = &f.beta + DVector::from_fn(f.beta.len(), |_, _| rng.random_range(-0.5..0.5));
        let ga = gradient(&x, &pens, &f.lambdas, &y, &at);
        let h = 1e-4;
        let fd = DVector::from_fn(at.len(), |j, _| {
            let mut p = at.clone();
            let mut m = at.clone();
            p[j] += h;
            m[j] -= h;
            (objective(&x, &pens, &f.lambdas, &y, &p) - objective(&x, &pens, &f.lambdas, &y, &m)) / (2.0 * h)
        });
        assert!((&fd - &ga).norm() <= 1e-5 * ga.norm(), "seed {seed}");
    }
}

#[test]
fn gcv_choice_is_no_worse_than_a_fine_grid() {
    for seed in 0..5 {
        let (x, pens, y, _) = spline_problem(50 + seed, 150);
        let f = fit::fit_penalized(&x, &pens, &y, &FitMethod::default()).unwrap();
        let grid_best = (0..=320)
            .map(|i| {
                let l = 10f64.powf(-8.0 + 0.05 * i as f64);
                fit::fit_penalized(&x, &pens, &y, &FitMethod::Fixed(vec![l])).unwrap().gcv
            })
            .fold(f64::INFINITY, f64::min);
        assert!(f.gcv <= grid_best * (1.0 + 1e-4), "{} vs {grid_best}", f.gcv);
    }
}

#[test]
fn huge_smoothing_parameter_leaves_a_straight_line() {
    let (x, pens, y, z) = spline_problem(7, 200);
    let f = fit::fit_penalized(&x, &pens, &y, &FitMethod::Fixed(vec![1e12])).unwrap();
    // Oracle: ordinary least squares on intercept, covariate and z.
    let n = y.len();
    let xl = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => x[(i, 1)],
        _ => z[i],
    });
    let ols = (xl.transpose() * &xl).try_inverse().unwrap() * xl.transpose() * &y;
    let diff = (&x * &f.beta - &xl * ols).amax();
    assert!(diff < 1e-4, "{diff}");
}

#[test]
fn edf_sums_to_trace() {
    let (x, pens, y, _) = spline_problem(9, 120);
    let f = fit::fit_penalized(&x, &pens, &y, &FitMethod::default()).unwrap();
    assert!((f.edf.iter().sum::<f64>() - f.trace_a).abs() < 1e-9);
    assert!(f.trace_a > 2.0 && f.trace_a < x.ncols() as f64);
}

fn records(seed: u64, n: usize) -> Vec<PropertyRecord> {
    let ctx = FeatureContext::default();
    synth::generate_clean(&GeneratorConfig::dublin(seed).with_size(n), &ctx).unwrap().0
}

#[test]
fn factor_only_model_recovers_centred_group_means() {
    let recs = records(31, 400);
    let spec = ModelSpec::custom("types", &[], &[], &[Factor::PropertyType], None, PostcodeMode::Given).unwrap();
    let m = FittedModel::fit(&recs, &spec, &FitMethod::default()).unwrap();
    let effects = m.factor_effects(Factor::PropertyType).unwrap();
    let means: Vec<f64> = effects
        .iter()
        .map(|(level, _, _)| {
            let v: Vec<f64> = recs
                .iter()
                .filter(|r| r.property_type.label() == level)
                .map(|r| r.log_price_per_m2)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    for ((level, coef, _), mean) in effects.iter().zip(&means) {
        assert!((coef - (mean - grand)).abs() < 1e-10, "{level}");
    }
    assert!((m.beta[0] - grand).abs() < 1e-10);
    assert!(effects.iter().map(|e| e.1).sum::<f64>().abs() < 1e-12);
}

#[test]
fn record_order_does_not_change_the_fit() {
    let recs = records(32, 500);
    let spec = ModelSpec::named(ModelName::Gam3, PostcodeMode::Given).with_spatial_knots(30);
    let a = FittedModel::fit(&recs, &spec, &FitMethod::default()).unwrap();
    let mut shuffled = recs.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let b = FittedModel::fit(&shuffled, &spec, &FitMethod::default()).unwrap();
    for r in recs.iter().take(50) {
        let (pa, pb) = (a.predict_point(r).unwrap(), b.predict_point(r).unwrap());
        assert!((pa - pb).abs() < 1e-6, "{pa} vs {pb}");
    }
}

#[test]
fn scaling_every_price_only_moves_the_intercept() {
    let recs = records(33, 500);
    let c: f64 = 1.37;
    let scaled: Vec<PropertyRecord> = recs
        .iter()
        .cloned()
        .map(|mut r| {
            r.price *= c;
            r.log_price_per_m2 += c.ln();
            r
        })
        .collect();
    let spec = ModelSpec::named(ModelName::Gam2, PostcodeMode::Given);
    let a = FittedModel::fit(&recs, &spec, &FitMethod::default()).unwrap();
    let b = FittedModel::fit(&scaled, &spec, &FitMethod::default()).unwrap();
    assert!((b.beta[0] - a.beta[0] - c.ln()).abs() < 1e-6);
    assert!((b.beta.rows(1, a.beta.len() - 1) - a.beta.rows(1, a.beta.len() - 1)).amax() < 1e-6);
    let (pa, pb) = (a.predict(&recs[0]).unwrap(), b.predict(&scaled[0]).unwrap());
    assert!((pb.price_point / pa.price_point - c).abs() < 1e-6);
}

#[test]
fn predictions_survive_a_json_round_trip_exactly() {
    let recs = records(34, 400);
    let spec = ModelSpec::named(ModelName::Gam3, PostcodeMode::Given).with_spatial_knots(25);
    let m = FittedModel::fit(&recs, &spec, &FitMethod::default()).unwrap();
    let back = FittedModel::from_json(&m.to_json().unwrap()).unwrap();
    for r in recs.iter().take(40) {
        assert_eq!(m.predict(r).unwrap(), back.predict(r).unwrap());
    }
}

#[test]
fn intervals_are_nested_and_centred() {
    let recs = records(35, 400);
    let m = FittedModel::fit(&recs, &ModelSpec::named(ModelName::Linear, PostcodeMode::Given), &FitMethod::default()).unwrap();
    for r in recs.iter().take(40) {
        let p = m.predict(r).unwrap();
        assert!(p.se >= m.sigma2_hat.sqrt());
        assert!(p.pi95.lo < p.pi50.lo && p.pi50.lo < p.point && p.point < p.pi50.hi && p.pi50.hi < p.pi95.hi);
        assert!(((p.pi95.hi - p.point) - (p.point - p.pi95.lo)).abs() < 1e-12);
        assert!(p.price_pi95.contains(p.price_point));
    }
}

#[test]
fn unseen_level_is_reported() {
    let recs = records(36, 400);
    let train: Vec<PropertyRecord> = recs.iter().filter(|r| r.postcode.label() != "D1").cloned().collect();
    let held = recs.iter().find(|r| r.postcode.label() == "D1").expect("a D1 record");
    let m = FittedModel::fit(&train, &ModelSpec::named(ModelName::Linear, PostcodeMode::Given), &FitMethod::default()).unwrap();
    assert_eq!(m.predict(held).unwrap_err().kind(), "unseen_level");
}

#[test]
fn smooth_effects_are_centred_over_the_training_data() {
    let recs = records(37, 400);
    let m = FittedModel::fit(&recs, &ModelSpec::named(ModelName::Gam1, PostcodeMode::Given), &FitMethod::default()).unwrap();
    let sizes: Vec<f64> = recs.iter().map(|r| r.size).collect();
    let v = m.smooth_effect(geohedonic::fit::Variable::Size, &sizes).unwrap();
    assert!(v.iter().sum::<f64>().abs() / (v.len() as f64) < 1e-10);
    assert!(v.iter().any(|e| e.abs() > 1e-3));
}
