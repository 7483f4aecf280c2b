use geohedonic::dataio::{FeatureContext, PropertyRecord};
use geohedonic::eval::{self, CvOptions, SpatialWeights};
use geohedonic::fit::{Interval, ModelName, ModelSpec, PostcodeMode};
use geohedonic::geo::PlanarCoord;
use geohedonic::synth::{self, GeneratorConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PUBLISHED_BANDS: [&str; 18] = [
    "Under €250,000",
    "€250,001 - €300,000",
    "€300,001 - €350,000",
    "€350,001 - €400,000",
    "€400,001 - €450,000",
    "€450,001 - €500,000",
    "€500,001 - €550,000",
    "€550,001 - €600,000",
    "€600,001 - €650,000",
    "€650,001 - €700,000",
    "€700,001 - €800,000",
    "€800,001 - €900,000",
    "€900,001 - €1,000,000",
    "€1,000,001 - €1,100,000",
    "€1,100,001 - €1,500,000",
    "€1,500,001 - €2,000,000",
    "€2,000,001 - €3,500,000",
    "€3,500,001 - €5,000,000",
];
const UPPER: [f64; 18] = [
    250e3, 300e3, 350e3, 400e3, 450e3, 500e3, 550e3, 600e3, 650e3, 700e3, 800e3, 900e3, 1e6, 1.1e6, 1.5e6, 2e6, 3.5e6, 5e6,
];

fn naive_median(mut v: Vec<f64>) -> f64 {
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            j -= 1;
        }
    }
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn random_case(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>, Vec<Interval>, Vec<Interval>) {
    let n = rng.random_range(1..120);
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(80e3..6e6)).collect();
    let p: Vec<f64> = a.iter().map(|v| v * rng.random_range(0.6..1.4)).collect();
    let iv = |w: f64, rng: &mut dyn rand::RngCore| -> Vec<Interval> {
        p.iter()
            .map(|v| {
                let s = w * rng.random_range(0.5..1.5);
                Interval { lo: v * (1.0 - s), hi: v * (1.0 + s) }
            })
            .collect()
    };
    let i50 = iv(0.1, rng);
    let i95 = iv(0.3, rng);
    (a, p, i50, i95)
}

#[test]
fn metrics_match_naive_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..1000 {
        let (a, p, i50, i95) = random_case(&mut rng);
        let m = eval::metrics(&a, &p, Some((&i50, &i95))).unwrap();
        let n = a.len() as f64;
        let mut mean = 0.0;
        for v in &a {
            mean += v;
        }
        mean /= n;
        let (mut rss, mut tss) = (0.0, 0.0);
        for i in 0..a.len() {
            rss += (a[i] - p[i]).powi(2);
            tss += (a[i] - mean).powi(2);
        }
        let errs: Vec<f64> = (0..a.len()).map(|i| (a[i] - p[i]).abs() / a[i]).collect();
        let within = |x: f64| errs.iter().filter(|e| **e <= x).count() as f64 / n;
        let cover = |iv: &[Interval]| (0..a.len()).filter(|&i| iv[i].lo <= a[i] && a[i] <= iv[i].hi).count() as f64 / n;
        if a.len() > 1 {
            assert!(close(m.r2, 1.0 - rss / tss));
        }
        assert!(close(m.rmse, (rss / n).sqrt()));
        assert!(close(m.mdape, naive_median(errs.clone())));
        assert!(close(m.within5, within(0.05)));
        assert!(close(m.within10, within(0.10)));
        assert!(close(m.within20, within(0.20)));
        assert!(close(m.coverage50.unwrap(), cover(&i50)));
        assert!(close(m.coverage95.unwrap(), cover(&i95)));
    }
}

#[test]
fn band_table_matches_naive_recomputation_and_published_headers() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for _ in 0..1000 {
        let (a, p, _, _) = random_case(&mut rng);
        let rows = eval::band_table(&a, &p).unwrap();
        let over = a.iter().any(|v| *v > 5e6);
        assert_eq!(rows.len(), if over { 19 } else { 18 });
        let mut lower = 0.0;
        let mut cumulative = Vec::new();
        for (i, row) in rows.iter().enumerate().take(18) {
            assert_eq!(row.label, PUBLISHED_BANDS[i]);
            let errs: Vec<f64> = (0..a.len())
                .filter(|&j| a[j] > lower && a[j] <= UPPER[i])
                .map(|j| (a[j] - p[j]).abs() / a[j])
                .collect();
            lower = UPPER[i];
            assert_eq!(row.count, errs.len());
            cumulative.extend(errs.iter().copied());
            if errs.is_empty() {
                assert_eq!(row.mdape, None);
            } else {
                assert!(close(row.mdape.unwrap(), naive_median(errs.clone())));
                let w = errs.iter().filter(|e| **e <= 0.1).count() as f64 / errs.len() as f64;
                assert!(close(row.within10.unwrap(), w));
            }
            if !cumulative.is_empty() {
                assert!(close(row.cumulative_mdape.unwrap(), naive_median(cumulative.clone())));
            }
        }
        let last = rows.last().unwrap();
        assert!(close(last.cumulative_mdape.unwrap(), eval::metrics(&a, &p, None).unwrap().mdape));
    }
}

#[test]
fn metrics_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let (a, p, _, _) = random_case(&mut rng);
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.shuffle(&mut rng);
    let a2: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
    let p2: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
    let (m1, m2) = (eval::metrics(&a, &p, None).unwrap(), eval::metrics(&a2, &p2, None).unwrap());
    assert_eq!(m1.mdape, m2.mdape);
    assert_eq!(m1.within10, m2.within10);
    assert!(close(m1.rmse, m2.rmse));
}

fn scatter(n: usize, seed: u64) -> (Vec<PlanarCoord>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (0..n).map(|_| PlanarCoord::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0))).collect();
    (c, (0..n).collect())
}

#[test]
fn permuted_residuals_average_the_null_expectation() {
    let n = 200;
    let (coords, ids) = scatter(n, 54);
    let w = SpatialWeights::knn(&coords, &ids, 10, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut e: Vec<f64> = coords.iter().map(|c| (c.x / 3.0).sin() + rng.random_range(-1.0..1.0)).collect();
    let mut values = Vec::with_capacity(1000);
    for _ in 0..1000 {
        e.shuffle(&mut rng);
        values.push(eval::morans_i(&e, &w).unwrap());
    }
    let mean = values.iter().sum::<f64>() / 1000.0;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
    let expected = -1.0 / (n as f64 - 1.0);
    assert!((mean - expected).abs() < 3.0 * sd / 1000f64.sqrt(), "{mean} vs {expected}");
}

#[test]
fn moran_is_shift_and_scale_invariant() {
    let (coords, ids) = scatter(150, 56);
    let w = SpatialWeights::knn(&coords, &ids, 10, true).unwrap();
    let e: Vec<f64> = coords.iter().map(|c| (c.y / 4.0).cos() + 0.1 * c.x).collect();
    let base = eval::morans_i(&e, &w).unwrap();
    let moved: Vec<f64> = e.iter().map(|v| 3.5 * v + 11.0).collect();
    assert!((eval::morans_i(&moved, &w).unwrap() - base).abs() < 1e-12);
    assert!(base > 0.5);
}

#[test]
fn knn_weights_are_row_standardized_without_self() {
    let (coords, ids) = scatter(60, 57);
    let w = SpatialWeights::knn(&coords, &ids, 10, true).unwrap();
    for (i, (nb, wt)) in w.neighbours.iter().zip(&w.weights).enumerate() {
        assert!(!nb.contains(&i));
        assert!((wt.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}

#[test]
fn separated_clusters_give_moran_one() {
    let mut coords = Vec::new();
    for c in 0..2 {
        for i in 0..11 {
            coords.push(PlanarCoord::new(100.0 * c as f64 + i as f64 * 0.01, 0.0));
        }
    }
    let ids: Vec<usize> = (0..22).collect();
    let w = SpatialWeights::knn(&coords, &ids, 10, true).unwrap();
    let e: Vec<f64> = (0..22).map(|i| if i < 11 { 1.0 } else { -1.0 }).collect();
    assert!((eval::morans_i(&e, &w).unwrap() - 1.0).abs() < 1e-12);
}

fn records(seed: u64, n: usize) -> Vec<PropertyRecord> {
    synth::generate_clean(&GeneratorConfig::dublin(seed).with_size(n), &FeatureContext::default()).unwrap().0
}

#[test]
fn cross_validation_predicts_every_record_once() {
    let recs = records(58, 300);
    let spec = ModelSpec::named(ModelName::Linear, PostcodeMode::Given);
    let rep = eval::kfold_cv(&recs, &spec, 5, 7).unwrap();
    assert_eq!(rep.predictions.len() + rep.excluded.len(), recs.len());
    let mut ids: Vec<usize> = rep.predictions.iter().map(|p| p.id).chain(rep.excluded.iter().copied()).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), recs.len());
    let m = &rep.metrics;
    assert!(m.within5 <= m.within10 && m.within10 <= m.within20);
    assert!((0.0..=1.0).contains(&m.coverage95.unwrap()));
    assert!((-1.0..=1.0).contains(&rep.morans_i));
    assert_eq!(rep, eval::kfold_cv(&recs, &spec, 5, 7).unwrap());
    assert!(eval::kfold_cv(&recs[..40], &spec, 5, 7).is_err());
}

#[test]
fn additive_model_beats_linear_out_of_sample() {
    let recs = records(59, 2000);
    let g = eval::kfold_cv(&recs, &ModelSpec::named(ModelName::Gam3, PostcodeMode::Given), 5, 1).unwrap();
    let l = eval::kfold_cv(&recs, &ModelSpec::named(ModelName::Linear, PostcodeMode::Given), 5, 1).unwrap();
    assert!(g.metrics.mdape < l.metrics.mdape);
    assert!(g.morans_i.abs() < l.morans_i.abs());
}

#[test]
fn knot_sweep_with_one_value_picks_it() {
    let recs = records(60, 300);
    let spec = ModelSpec::named(ModelName::Gam3, PostcodeMode::Given);
    let sweep = eval::knot_sweep(&recs, &spec, &[20], &CvOptions::new(5, 1)).unwrap();
    assert_eq!(sweep.rows.len(), 1);
    assert_eq!(sweep.elbow, Some(20));
    assert!(eval::knot_sweep(&recs, &spec, &[30, 20], &CvOptions::new(5, 1)).is_err());
    let linear = ModelSpec::named(ModelName::Linear, PostcodeMode::Given);
    assert_eq!(eval::knot_sweep(&recs, &linear, &[20], &CvOptions::new(5, 1)).unwrap_err().kind(), "spec");
}
