mod manifest;

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use geohedonic::dataio::{self, FeatureContext, PropertyRecord, Schema};
use geohedonic::eval::{self, CvOptions, EvalReport};
use geohedonic::fit::{FitMethod, FittedModel, ModelName, ModelSpec, PostcodeMode};
use geohedonic::geo::{self, LandmarkSet, LatLon};
use geohedonic::knn;
use geohedonic::svt;
use geohedonic::synth::{self, GeneratorConfig};
use geohedonic::textmine::{self, PhraseLexicon};
use geohedonic::{Error, Result};

use manifest::Run;

#[derive(Parser, Debug)]
#[command(name = "geohedonic", version, about = "Spatial hedonic price models for Dublin property")]
struct Cli {
    /// Worker threads for folds, sweeps and lattices (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clean listings and write the derived feature table.
    Extract {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model and write it as JSON.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Price listings with a fitted model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-fold cross-validation of one model or, with `--spec all`, the
    /// comparison set.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-out nearest-neighbour baseline.
    Knn {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',', default_value = "3,5,7,9")]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated accuracy against the number of spatial knots.
    KnotsSweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_value = "25,50,75,100,125,150")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the location-value surface of a fitted model.
    Surface {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = svt::DEFAULT_RESOLUTION_KM)]
        resolution: f64,
        #[arg(long, default_value_t = svt::DEFAULT_PADDING_KM)]
        padding: f64,
        /// Add a quantile band column with this many bands.
        #[arg(long)]
        bands: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Site value tax for a site, from a scaling value or a model and location.
    Svt {
        #[arg(long, conflicts_with = "model")]
        scaling: Option<f64>,
        #[arg(long, requires_all = ["lat", "lon"])]
        model: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        lat: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        lon: Option<f64>,
        /// Acres.
        #[arg(long)]
        site_size: f64,
        /// Euro per acre.
        #[arg(long)]
        baseline: f64,
        #[arg(long)]
        apartments: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic Dublin dataset with known ground truth.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        /// Records above the size floor.
        #[arg(long)]
        n: Option<usize>,
        /// Generator configuration JSON; flags override its seed and size.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Listings CSV, or `-` for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    landmarks: Option<PathBuf>,
    #[arg(long, requires = "landmarks")]
    thresholds: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, default_value = "GAM3")]
    spec: String,
    #[arg(long, default_value = "given")]
    postcodes: String,
    /// Override the spatial knot count.
    #[arg(long)]
    spatial_knots: Option<usize>,
}

struct Loaded {
    raw: Vec<u8>,
    ingested: dataio::Ingested,
    ctx: FeatureContext,
}

fn read_input(input: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if input == "-" {
        std::io::stdin().lock().read_to_end(&mut buf)?;
    } else {
        buf = std::fs::read(input)?;
    }
    Ok(buf)
}

impl DataArgs {
    fn load(&self, run: &mut Run) -> Result<Loaded> {
        let raw = read_input(&self.input)?;
        run.input("data", &raw);
        run.config("input", &self.input);
        let mut ctx = FeatureContext::default();
        if let Some(p) = &self.lexicon {
            let text = std::fs::read_to_string(p)?;
            run.input("lexicon", text.as_bytes());
            ctx.lexicon = PhraseLexicon::parse(&text)?;
        }
        if let Some(p) = &self.landmarks {
            run.input("landmarks", &std::fs::read(p)?);
            if let Some(t) = &self.thresholds {
                run.input("thresholds", &std::fs::read(t)?);
            }
            ctx.landmarks = LandmarkSet::load(p, self.thresholds.as_deref())?;
        }
        let ingested = dataio::ingest_reader(raw.as_slice(), &Schema::default())?;
        if !ingested.rejects.is_empty() {
            log::warn!("{} rows rejected", ingested.rejects.len());
        }
        Ok(Loaded { raw, ingested, ctx })
    }

    fn records(&self, run: &mut Run) -> Result<(Loaded, Vec<PropertyRecord>)> {
        let loaded = self.load(run)?;
        let cleaned = dataio::clean(&loaded.ingested.listings, &loaded.ctx)?;
        if !cleaned.removed_undersize.is_empty() {
            log::info!("{} listings under {} m² removed", cleaned.removed_undersize.len(), dataio::MIN_SIZE_M2);
        }
        Ok((loaded, cleaned.records))
    }
}

impl ModelArgs {
    fn specs(&self, allow_all: bool) -> Result<Vec<ModelSpec>> {
        let mode: PostcodeMode = self.postcodes.parse()?;
        let names: Vec<ModelName> = if self.spec.trim().eq_ignore_ascii_case("all") {
            if !allow_all {
                return Err(Error::Spec("'all' is only accepted by cv".into()));
            }
            ModelName::COMPARISON.to_vec()
        } else {
            vec![self.spec.parse()?]
        };
        Ok(names
            .into_iter()
            .map(|n| {
                let s = ModelSpec::named(n, mode);
                match self.spatial_knots {
                    Some(k) => s.with_spatial_knots(k),
                    None => s,
                }
            })
            .collect())
    }

    fn record(&self, run: &mut Run) {
        run.config("spec", &self.spec);
        run.config("postcodes", &self.postcodes);
        run.config("spatial_knots", self.spatial_knots);
    }
}

fn csv_bytes<F>(header: &[&str], rows: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        rows(&mut w)?;
        w.flush()?;
    }
    Ok(buf)
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn load_model(path: &Path, run: &mut Run) -> Result<FittedModel> {
    let text = std::fs::read_to_string(path)?;
    run.input("model", text.as_bytes());
    FittedModel::from_json(&text)
}

fn cmd_extract(data: DataArgs, out: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("extract", out)?;
    let loaded = data.load(&mut run)?;
    let cleaned = dataio::clean(&loaded.ingested.listings, &loaded.ctx)?;
    let mut features = Vec::new();
    dataio::write_records(&cleaned.records, &mut features)?;
    run.primary("features.csv", &features)?;
    let mut rejects = Vec::new();
    dataio::write_rejects(&loaded.ingested.rejects, &mut rejects)?;
    run.secondary("rejects.csv", &rejects)?;
    #[derive(Serialize)]
    struct Summary {
        rows: usize,
        rejected: usize,
        removed_undersize: usize,
        records: usize,
        feature_counts: std::collections::BTreeMap<String, usize>,
        landmark_counts: std::collections::BTreeMap<String, usize>,
    }
    let summary = Summary {
        rows: loaded.ingested.listings.len() + loaded.ingested.rejects.len(),
        rejected: loaded.ingested.rejects.len(),
        removed_undersize: cleaned.removed_undersize.len(),
        records: cleaned.records.len(),
        feature_counts: textmine::tabulate(cleaned.records.iter().map(|r| &r.mined))
            .into_iter()
            .map(|(f, c)| (f.name().to_string(), c))
            .collect(),
        landmark_counts: geo::class_counts(&loaded.ctx.landmarks)
            .into_iter()
            .map(|(c, n)| (c.as_str().to_string(), n))
            .collect(),
    };
    run.secondary("summary.json", &json_bytes(&summary)?)?;
    run.finish()
}

fn cmd_fit(data: DataArgs, model: ModelArgs, out: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("fit", out)?;
    model.record(&mut run);
    let spec = model.specs(false)?.remove(0);
    let (loaded, records) = data.records(&mut run)?;
    let m = FittedModel::fit(&records, &spec, &FitMethod::default())?;
    let coefs = csv_bytes(&["term", "level", "coefficient", "se", "scaling", "ci_low", "ci_high"], |w| {
        for s in m.coefficient_scalings() {
            w.write_record(&[
                s.term,
                s.level,
                s.coefficient.to_string(),
                s.se.to_string(),
                s.scaling.to_string(),
                s.ci_low.to_string(),
                s.ci_high.to_string(),
            ])?;
        }
        Ok(())
    })?;
    let terms = csv_bytes(&["term", "columns", "edf", "lambda", "lambda_raw"], |w| {
        for t in &m.terms {
            w.write_record(&[t.term.clone(), t.columns.to_string(), t.edf.to_string(), opt(t.lambda), opt(t.lambda_raw)])?;
        }
        Ok(())
    })?;
    let model_json = (m.to_json()? + "\n").into_bytes();
    log::info!("{}: n = {}, edf = {:.1}, gcv = {:.6}", spec.name, m.n_train, m.trace_a, m.gcv);
    if data.input == "-" {
        // Mid-pipeline: keep the data flowing to the next stage.
        run.secondary("model.json", &model_json)?;
        if !run.has_dir() {
            log::warn!("no --out directory; the fitted model is not saved");
        }
        use std::io::Write;
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(&loaded.raw)?;
        stdout.flush()?;
    } else {
        run.primary("model.json", &model_json)?;
    }
    run.secondary("coefficients.csv", &coefs)?;
    run.secondary("terms.csv", &terms)?;
    run.finish()
}

fn cmd_predict(model: PathBuf, data: DataArgs, out: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("predict", out)?;
    let m = load_model(&model, &mut run)?;
    let loaded = data.load(&mut run)?;
    let body = csv_bytes(
        &["id", "price", "price_point", "pi50_lo", "pi50_hi", "pi95_lo", "pi95_hi", "status"],
        |w| {
            for l in &loaded.ingested.listings {
                let res = dataio::derive(l, &loaded.ctx).and_then(|r| m.predict(&r));
                match res {
                    Ok(p) => w.write_record(&[
                        l.id.to_string(),
                        l.price.to_string(),
                        p.price_point.to_string(),
                        p.price_pi50.lo.to_string(),
                        p.price_pi50.hi.to_string(),
                        p.price_pi95.lo.to_string(),
                        p.price_pi95.hi.to_string(),
                        "ok".to_string(),
                    ])?,
                    Err(e) => {
                        let empty = String::new();
                        w.write_record(&[
                            l.id.to_string(),
                            l.price.to_string(),
                            empty.clone(),
                            empty.clone(),
                            empty.clone(),
                            empty.clone(),
                            empty,
                            e.kind().to_string(),
                        ])?
                    }
                }
            }
            Ok(())
        },
    )?;
    run.primary("predictions.csv", &body)?;
    run.finish()
}

fn cmd_cv(data: DataArgs, model: ModelArgs, folds: usize, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("cv", out)?;
    model.record(&mut run);
    run.config("folds", folds);
    run.config("seed", seed);
    let specs = model.specs(true)?;
    let (_, records) = data.records(&mut run)?;
    let reports: Vec<EvalReport> = specs
        .iter()
        .map(|s| eval::kfold_cv_with(&records, s, &CvOptions::new(folds, seed)))
        .collect::<Result<_>>()?;

    let display = |name: &str| {
        name.parse::<ModelName>()
            .map(|n| n.display_name().to_string())
            .unwrap_or_else(|_| name.to_string())
    };
    let summary = csv_bytes(
        &[
            "model", "r2", "rmse", "mdape", "within5", "within10", "within20", "coverage50", "coverage95", "morans_i",
            "n_scored", "n_excluded",
        ],
        |w| {
            for r in &reports {
                let m = &r.metrics;
                w.write_record(&[
                    display(&r.model),
                    m.r2.to_string(),
                    m.rmse.to_string(),
                    m.mdape.to_string(),
                    m.within5.to_string(),
                    m.within10.to_string(),
                    m.within20.to_string(),
                    opt(m.coverage50),
                    opt(m.coverage95),
                    r.morans_i.to_string(),
                    m.n.to_string(),
                    r.excluded.len().to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    let bands = csv_bytes(
        &["model", "band", "count", "mdape", "within5", "within10", "within20", "cumulative_mdape"],
        |w| {
            for r in &reports {
                let a: Vec<f64> = r.predictions.iter().map(|p| p.actual).collect();
                let p: Vec<f64> = r.predictions.iter().map(|p| p.predicted).collect();
                for b in eval::band_table(&a, &p)? {
                    w.write_record(&[
                        display(&r.model),
                        b.label,
                        b.count.to_string(),
                        opt(b.mdape),
                        opt(b.within5),
                        opt(b.within10),
                        opt(b.within20),
                        opt(b.cumulative_mdape),
                    ])?;
                }
            }
            Ok(())
        },
    )?;
    let preds = csv_bytes(
        &["model", "id", "fold", "actual", "predicted", "pi50_lo", "pi50_hi", "pi95_lo", "pi95_hi"],
        |w| {
            for r in &reports {
                for p in &r.predictions {
                    w.write_record(&[
                        r.model.clone(),
                        p.id.to_string(),
                        p.fold.to_string(),
                        p.actual.to_string(),
                        p.predicted.to_string(),
                        p.pi50.lo.to_string(),
                        p.pi50.hi.to_string(),
                        p.pi95.lo.to_string(),
                        p.pi95.hi.to_string(),
                    ])?;
                }
            }
            Ok(())
        },
    )?;
    run.primary("summary.csv", &summary)?;
    run.secondary("bands.csv", &bands)?;
    run.secondary("predictions.csv", &preds)?;
    run.secondary("report.json", &json_bytes(&reports)?)?;
    run.finish()
}

fn cmd_knn(data: DataArgs, ks: Vec<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("knn", out)?;
    run.config("k", &ks);
    let (_, records) = data.records(&mut run)?;
    let rep = knn::knn_evaluate(&records, &ks)?;
    let table = csv_bytes(&["neighbours", "mdape", "within10", "within20", "within5", "n_scored"], |w| {
        for r in &rep.rows {
            w.write_record(&[
                r.k.to_string(),
                r.mdape.to_string(),
                r.within10.to_string(),
                r.within20.to_string(),
                r.within5.to_string(),
                r.n.to_string(),
            ])?;
        }
        Ok(())
    })?;
    let estimates = csv_bytes(&["id", "k", "ppm2_estimate", "price_estimate", "degraded", "neighbours"], |w| {
        for per in &rep.estimates {
            for e in per {
                let nb: Vec<String> = e.neighbours_used.iter().map(|i| i.to_string()).collect();
                w.write_record(&[
                    e.id.to_string(),
                    e.k.to_string(),
                    e.ppm2_estimate.to_string(),
                    e.price_estimate.to_string(),
                    e.degraded.to_string(),
                    nb.join(" "),
                ])?;
            }
        }
        Ok(())
    })?;
    run.primary("knn.csv", &table)?;
    run.secondary("estimates.csv", &estimates)?;
    run.finish()
}

fn cmd_sweep(data: DataArgs, model: ModelArgs, ks: Vec<usize>, folds: usize, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("knots-sweep", out)?;
    model.record(&mut run);
    run.config("k", &ks);
    run.config("folds", folds);
    run.config("seed", seed);
    let spec = model.specs(false)?.remove(0);
    let (_, records) = data.records(&mut run)?;
    let sweep = eval::knot_sweep(&records, &spec, &ks, &CvOptions::new(folds, seed))?;
    let table = csv_bytes(&["k", "r2", "rmse", "coverage95", "elbow"], |w| {
        for r in &sweep.rows {
            w.write_record(&[
                r.k.to_string(),
                r.r2.to_string(),
                r.rmse.to_string(),
                r.coverage95.to_string(),
                (sweep.elbow == Some(r.k)).to_string(),
            ])?;
        }
        Ok(())
    })?;
    run.primary("sweep.csv", &table)?;
    run.secondary("sweep.json", &json_bytes(&sweep)?)?;
    run.finish()
}

fn cmd_surface(model: PathBuf, resolution: f64, padding: f64, bands: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("surface", out)?;
    run.config("resolution", resolution);
    run.config("padding", padding);
    run.config("bands", bands);
    let m = load_model(&model, &mut run)?;
    let s = svt::surface(&m, m.train_bbox.padded(padding), resolution, geo::IFSC)?;
    let field = svt::scaling_field(&s)?;
    let mut body = Vec::new();
    svt::write_surface_csv(&s, &field, &mut body)?;
    if let Some(n) = bands {
        // Append a band column to the plain export.
        let b = svt::quantile_bands(&field.scalings, n)?;
        let text = String::from_utf8(body).expect("csv output is utf-8");
        let mut lines = text.lines();
        let mut joined = format!("{},band\n", lines.next().unwrap_or_default());
        for (line, band) in lines.zip(b) {
            joined.push_str(&format!("{line},{band}\n"));
        }
        body = joined.into_bytes();
    }
    run.primary("surface.csv", &body)?;
    run.secondary("surface.json", &json_bytes(&svt::header(&m.spec.name, &s, &field))?)?;
    run.finish()
}

#[allow(clippy::too_many_arguments)]
fn cmd_svt(
    scaling: Option<f64>,
    model: Option<PathBuf>,
    lat: Option<f64>,
    lon: Option<f64>,
    site_size: f64,
    baseline: f64,
    apartments: Option<u32>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut run = Run::new("svt", out)?;
    run.config("site_size", site_size);
    run.config("baseline", baseline);
    run.config("apartments", apartments);
    let scaling = match (scaling, model) {
        (Some(s), _) => s,
        (None, Some(path)) => {
            let m = load_model(&path, &mut run)?;
            let (lat, lon) = (lat.expect("clap requires lat"), lon.expect("clap requires lon"));
            run.config("lat", lat);
            run.config("lon", lon);
            let field = svt::scaling_field(&svt::default_surface(&m, geo::IFSC)?)?;
            let p = geo::project(LatLon::new(lat, lon), geo::IFSC)?;
            (m.spatial_effect(&p)?.exp() / field.min_location_value).max(1.0)
        }
        (None, None) => return Err(Error::Parameter("give --scaling, or --model with --lat and --lon".into())),
    };
    run.config("scaling", scaling);
    #[derive(Serialize)]
    struct Tax {
        scaling: f64,
        site_size: f64,
        baseline: f64,
        site_tax: f64,
        apartments: Option<u32>,
        apartment_tax: Option<f64>,
    }
    let tax = Tax {
        scaling,
        site_size,
        baseline,
        site_tax: svt::site_tax(scaling, site_size, baseline)?,
        apartments,
        apartment_tax: apartments.map(|n| svt::apartment_site_tax(scaling, site_size, baseline, n)).transpose()?,
    };
    run.primary("svt.json", &json_bytes(&tax)?)?;
    run.finish()
}

fn cmd_synth(seed: Option<u64>, n: Option<usize>, config: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let mut run = Run::new("synth", out)?;
    let mut cfg = match &config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            run.input("config", text.as_bytes());
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => GeneratorConfig::dublin(0),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = n {
        cfg = cfg.with_size(n);
    }
    run.config("seed", cfg.seed);
    run.config("n", cfg.n_records);
    let ctx = FeatureContext::default();
    let (listings, truth) = synth::generate(&cfg, &ctx)?;
    let mut body = Vec::new();
    dataio::emit(&listings, &mut body)?;
    run.primary("listings.csv", &body)?;
    run.secondary("ground_truth.json", &json_bytes(&truth)?)?;
    run.finish()
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Parameter("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Extract { data, out } => cmd_extract(data, out),
        Command::Fit { data, model, out } => cmd_fit(data, model, out),
        Command::Predict { model, data, out } => cmd_predict(model, data, out),
        Command::Cv { data, model, folds, seed, out } => cmd_cv(data, model, folds, seed, out),
        Command::Knn { data, k, out } => cmd_knn(data, k, out),
        Command::KnotsSweep { data, model, k, folds, seed, out } => cmd_sweep(data, model, k, folds, seed, out),
        Command::Surface { model, resolution, padding, bands, out } => cmd_surface(model, resolution, padding, bands, out),
        Command::Svt { scaling, model, lat, lon, site_size, baseline, apartments, out } => {
            cmd_svt(scaling, model, lat, lon, site_size, baseline, apartments, out)
        }
        Command::Synth { seed, n, config, out } => cmd_synth(seed, n, config, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: kind=usage msg={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // Downstream closed the pipe (`| head`); nothing left to report.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} msg={:?}", e.kind(), e.to_string());
            ExitCode::from(1)
        }
    }
}
