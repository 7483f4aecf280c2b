use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geohedonic"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn run_with_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn piped_synth_fit_cv() {
    let dir = tempfile::tempdir().unwrap();
    let listings = run(&["synth", "--seed", "5", "--n", "400"], dir.path());
    let csv = stdout(&listings);
    assert!(csv.starts_with("price,sale_date,latitude,longitude,"));
    assert_eq!(csv::Reader::from_reader(csv.as_bytes()).records().count(), 400 + 6);

    // fit passes its input through so it can sit mid-pipeline.
    let fitted = run_with_stdin(&["fit", "--spec", "GAM2", "--out", dir.path().join("fit").to_str().unwrap()], csv.as_bytes());
    assert_eq!(stdout(&fitted), csv);
    assert!(dir.path().join("fit/model.json").exists());

    let cv = run_with_stdin(&["cv", "--spec", "Linear", "--folds", "3"], csv.as_bytes());
    let text = stdout(&cv);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("model,r2,rmse,mdape,within5,within10,within20"));
    assert!(lines.next().unwrap().starts_with("Linear Model,"));
}

#[test]
fn cv_all_reports_the_comparison_models_in_order() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&run(&["synth", "--seed", "9", "--n", "500", "--out", "s"], dir.path()));
    let text = stdout(&run(
        &["cv", "--input", "s/listings.csv", "--spec", "all", "--folds", "3", "--out", "cv"],
        dir.path(),
    ));
    assert!(text.is_empty(), "summary goes to the output directory");
    let summary = std::fs::read_to_string(dir.path().join("cv/summary.csv")).unwrap();
    let models: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(models, ["Basic Linear Model", "Linear Model", "GAM 1", "GAM 2", "GAM 3", "GAM 4"]);
    for f in ["bands.csv", "predictions.csv", "report.json", "manifest.json"] {
        assert!(dir.path().join("cv").join(f).exists(), "{f}");
    }
}

#[test]
fn fit_then_predict_and_surface() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&run(&["synth", "--seed", "11", "--n", "600", "--out", "s"], dir.path()));
    stdout(&run(&["fit", "--input", "s/listings.csv", "--out", "f"], dir.path()));

    let preds = stdout(&run(&["predict", "--model", "f/model.json", "--input", "s/listings.csv"], dir.path()));
    let rows: Vec<&str> = preds.lines().collect();
    assert_eq!(rows[0], "id,price,price_point,pi50_lo,pi50_hi,pi95_lo,pi95_hi,status");
    let n_listings = csv::Reader::from_path(dir.path().join("s/listings.csv")).unwrap().records().count();
    assert_eq!(rows.len(), 1 + n_listings);
    for r in &rows[1..] {
        let c: Vec<&str> = r.split(',').collect();
        // Undersize listings are priced too; only unseen levels fail.
        assert!(c[7] == "ok" || c[7] == "unseen_level", "{r}");
        if c[7] == "ok" {
            let v: Vec<f64> = c[2..7].iter().map(|x| x.parse().unwrap()).collect();
            assert!(v[3] <= v[1] && v[1] <= v[0] && v[0] <= v[2] && v[2] <= v[4], "{r}");
        }
    }

    let surface = stdout(&run(&["surface", "--model", "f/model.json", "--bands", "4"], dir.path()));
    let mut lines = surface.lines();
    assert_eq!(lines.next().unwrap(), "x_km,y_km,lat,lon,log_value,location_value,scaling,band");
    let scalings: Vec<f64> = lines.map(|l| l.split(',').nth(6).unwrap().parse().unwrap()).collect();
    assert_eq!(scalings.iter().copied().fold(f64::INFINITY, f64::min), 1.0);

    let tax = stdout(&run(
        &["svt", "--model", "f/model.json", "--lat", "53.35", "--lon", "-6.26", "--site-size", "0.1", "--baseline", "500"],
        dir.path(),
    ));
    let v: serde_json::Value = serde_json::from_str(&tax).unwrap();
    assert!(v["scaling"].as_f64().unwrap() >= 1.0);
}

#[test]
fn svt_from_a_scaling_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&run(
        &["svt", "--scaling", "2", "--site-size", "0.1", "--baseline", "500", "--apartments", "10"],
        dir.path(),
    ));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["site_tax"].as_f64(), Some(100.0));
    assert_eq!(v["apartment_tax"].as_f64(), Some(10.0));
}

#[test]
fn knn_and_extract_tables() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&run(&["synth", "--seed", "13", "--n", "300", "--out", "s"], dir.path()));
    let knn = stdout(&run(&["knn", "--input", "s/listings.csv", "--k", "3,5"], dir.path()));
    let rows: Vec<&str> = knn.lines().collect();
    assert_eq!(rows[0], "neighbours,mdape,within10,within20,within5,n_scored");
    assert!(rows[1].starts_with("3,") && rows[2].starts_with("5,"));

    stdout(&run(&["extract", "--input", "s/listings.csv", "--out", "e"], dir.path()));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("e/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["records"].as_u64(), Some(300));
}

#[test]
fn errors_are_one_line_with_a_kind() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["cv", "--spec", "GAM9", "--input", "missing.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.starts_with("error: kind=spec msg="), "{err}");

    let o = run(&["fit", "--input", "missing.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error: kind=io"));

    let o = run(&["svt", "--scaling", "0.5", "--site-size", "1", "--baseline", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error: kind=parameter"));

    let o = run(&["fit", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error: kind=usage"));

    let o = run_with_stdin(&["fit"], b"not,a,listing\n1,2,3\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("error: kind=schema"));
}

#[test]
fn manifests_hash_inputs_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    stdout(&run(&["synth", "--seed", "3", "--n", "200", "--out", "s"], dir.path()));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "synth");
    let listings = std::fs::read(dir.path().join("s/listings.csv")).unwrap();
    use sha2::Digest;
    let want: String = sha2::Sha256::digest(&listings).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(m["outputs"]["listings.csv"], want.as_str());
    assert!(m["outputs"]["ground_truth.json"].is_string());
}
