use geohedonic::dataio::{FeatureContext, PropertyRecord};
use geohedonic::fit::{BBox, FitMethod, FittedModel, ModelName, ModelSpec, PostcodeMode};
use geohedonic::geo::IFSC;
use geohedonic::svt;
use geohedonic::synth::{self, GeneratorConfig};

fn fitted(seed: u64, n: usize, name: ModelName) -> (Vec<PropertyRecord>, FittedModel) {
    let recs = synth::generate_clean(&GeneratorConfig::dublin(seed).with_size(n), &FeatureContext::default()).unwrap().0;
    let spec = ModelSpec::named(name, PostcodeMode::Given).with_spatial_knots(40);
    let m = FittedModel::fit(&recs, &spec, &FitMethod::default()).unwrap();
    (recs, m)
}

#[test]
fn lattice_value_at_a_training_point_matches_in_sample_contribution() {
    let (recs, m) = fitted(61, 500, ModelName::Gam3);
    for r in recs.iter().take(25) {
        let p = r.planar;
        let bbox = BBox { x_min: p.x, x_max: p.x, y_min: p.y, y_max: p.y };
        let s = svt::surface(&m, bbox, 1.0, IFSC).unwrap();
        assert_eq!(s.cells.len(), 1);
        assert!((s.cells[0].log_value - m.in_sample_spatial(r).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn zero_spatial_coefficients_give_a_flat_surface() {
    let (_, mut m) = fitted(62, 400, ModelName::Gam3);
    let t = m.design().find_spatial().unwrap();
    let r = m.design().range(t);
    for i in r {
        m.beta[i] = 0.0;
    }
    let s = svt::default_surface(&m, IFSC).unwrap();
    assert!(s.cells.iter().all(|c| c.location_value == 1.0));
    let f = svt::scaling_field(&s).unwrap();
    assert!(f.scalings.iter().all(|v| *v == 1.0));
}

#[test]
fn default_surface_covers_the_padded_extent() {
    let (_, m) = fitted(63, 400, ModelName::Gam3);
    let s = svt::default_surface(&m, IFSC).unwrap();
    assert_eq!(s.cells.len(), s.nx * s.ny);
    assert_eq!(s.resolution_km, 0.25);
    assert!((s.bbox.x_min - (m.train_bbox.x_min - 1.0)).abs() < 1e-12);
    let f = svt::scaling_field(&s).unwrap();
    assert_eq!(f.scalings.iter().cloned().fold(f64::INFINITY, f64::min), 1.0);
    assert!(f.scalings.iter().all(|v| *v >= 1.0));
    let last = s.cells.last().unwrap().at;
    assert!(last.x <= s.bbox.x_max + 1e-9 && last.y <= s.bbox.y_max + 1e-9);
}

#[test]
fn scalings_ignore_constant_shifts_of_the_log_surface() {
    let (_, m) = fitted(64, 400, ModelName::Gam3);
    let s = svt::default_surface(&m, IFSC).unwrap();
    let mut shifted = s.clone();
    for c in &mut shifted.cells {
        c.log_value += 0.7;
        c.location_value = c.log_value.exp();
    }
    let (a, b) = (svt::scaling_field(&s).unwrap(), svt::scaling_field(&shifted).unwrap());
    for (x, y) in a.scalings.iter().zip(&b.scalings) {
        assert!((x - y).abs() < 1e-12 * x);
    }
}

#[test]
fn eightfold_range_gives_maximum_scaling_eight() {
    let (_, m) = fitted(65, 400, ModelName::Gam3);
    let mut s = svt::default_surface(&m, IFSC).unwrap();
    let n = s.cells.len();
    for (i, c) in s.cells.iter_mut().enumerate() {
        c.location_value = 1.0 + 7.0 * i as f64 / (n - 1) as f64;
    }
    let f = svt::scaling_field(&s).unwrap();
    assert_eq!(f.scalings.iter().cloned().fold(0.0, f64::max), 8.0);
}

#[test]
fn scalings_do_not_depend_on_the_price_level() {
    let recs = synth::generate_clean(&GeneratorConfig::dublin(66).with_size(400), &FeatureContext::default()).unwrap().0;
    let scaled: Vec<PropertyRecord> = recs
        .iter()
        .cloned()
        .map(|mut r| {
            r.price *= 2.5;
            r.log_price_per_m2 += 2.5f64.ln();
            r
        })
        .collect();
    let spec = ModelSpec::named(ModelName::Gam3, PostcodeMode::Given).with_spatial_knots(40);
    let a = FittedModel::fit(&recs, &spec, &FitMethod::default()).unwrap();
    let b = FittedModel::fit(&scaled, &spec, &FitMethod::default()).unwrap();
    let fa = svt::scaling_field(&svt::default_surface(&a, IFSC).unwrap()).unwrap();
    let fb = svt::scaling_field(&svt::default_surface(&b, IFSC).unwrap()).unwrap();
    for (x, y) in fa.scalings.iter().zip(&fb.scalings) {
        assert!((x - y).abs() < 1e-6 * x);
    }
}

#[test]
fn models_without_a_spatial_term_have_no_surface() {
    let (_, m) = fitted(67, 300, ModelName::Linear);
    assert_eq!(svt::default_surface(&m, IFSC).unwrap_err().kind(), "spec");
}

#[test]
fn surface_csv_has_the_documented_columns() {
    let (_, m) = fitted(68, 300, ModelName::Gam3);
    let s = svt::surface(&m, m.train_bbox, 2.0, IFSC).unwrap();
    let f = svt::scaling_field(&s).unwrap();
    let mut buf = Vec::new();
    svt::write_surface_csv(&s, &f, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x_km,y_km,lat,lon,log_value,location_value,scaling");
    assert_eq!(text.lines().count(), s.cells.len() + 1);
}

#[test]
fn apartment_shares_partition_the_site_tax() {
    for n in 1..=40u32 {
        for (sc, size, base) in [(1.0, 1.0, 1000.0), (2.0, 0.1, 500.0), (3.17, 0.23, 812.5), (7.9, 0.051, 1234.0)] {
            let total = svt::site_tax(sc, size, base).unwrap();
            let shares = svt::split_site_tax(sc, size, base, n).unwrap();
            assert_eq!(shares.iter().fold(0.0, |a, b| a + b), total);
            let each = svt::apartment_site_tax(sc, size, base, n).unwrap();
            assert!(shares.iter().all(|s| (s - each).abs() <= 1e-12 * total));
        }
    }
}
