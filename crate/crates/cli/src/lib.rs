//! Command-line front end. `run` parses arguments, dispatches to the library
//! and maps outcomes to exit codes: 0 success, 1 domain-level negative,
//! 2 usage or internal error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lieproj::compatibility::{
    check_volume, find_coincidences, random_compatible_volume, GridCheck, VolumeReport, DEFAULT_ANGULAR_RESOLUTION,
};
use lieproj::dataset::{generate_dataset, load_dataset, save_dataset, Dataset, DatasetConfig};
use lieproj::error::Error;
use lieproj::eval::{
    coincidence_collapse, emit_plots, infer_poses, pose_report, PoseReport, DEFAULT_FOLD_GRID, DEFAULT_MAX_ERROR_DEG,
};
use lieproj::geometry::PointVolume;
use lieproj::vae::{hyperparameter_search, train, TrainOutcome, VaeConfig, VaeModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lieproj", version, about = "Pose inference from 1D projections of planar point volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a random volume whose projections determine the pose.
    GenVolume(GenVolumeArgs),
    /// Decide whether a volume's projections form a copy of the rotation group.
    CheckVolume(CheckVolumeArgs),
    /// Render a dataset of randomly rotated projections.
    GenDataset(GenDatasetArgs),
    /// Train the rotation VAE on a dataset.
    Train(TrainArgs),
    /// Infer poses with a trained model and score them.
    Eval(EvalArgs),
    /// Run the compatible and incompatible experiments end to end.
    ReproduceFig3(ReproduceArgs),
}

#[derive(Debug, Args)]
struct GenVolumeArgs {
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 1000)]
    max_attempts: usize,
    /// Volume file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckVolumeArgs {
    #[arg(long)]
    volume: PathBuf,
    #[arg(long, default_value_t = 720)]
    grid: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Also run the algebraic injectivity solver.
    #[arg(long)]
    algebraic: bool,
    #[arg(long, default_value_t = DEFAULT_ANGULAR_RESOLUTION)]
    resolution: usize,
}

#[derive(Debug, Args)]
struct GenDatasetArgs {
    #[arg(long)]
    volume: PathBuf,
    #[arg(long, default_value_t = 2000)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Gaussian splat width; defaults to 5% of the domain radius.
    #[arg(long)]
    splat_sigma: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Output stem: writes `<stem>.csv` and `<stem>.meta`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Clone)]
struct TrainFlags {
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, value_delimiter = ',', default_value = "128,128")]
    encoder_hidden: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "128,128")]
    decoder_hidden: Vec<usize>,
}

impl TrainFlags {
    fn config(&self) -> VaeConfig {
        VaeConfig {
            k: self.k,
            encoder_hidden: self.encoder_hidden.clone(),
            decoder_hidden: self.decoder_hidden.clone(),
            lr: self.lr,
            batch: self.batch,
            epochs: self.epochs,
            restarts: self.restarts,
            seed: self.seed,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset stem (or the `.csv` file itself).
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
    /// Search encoder/decoder depths {2,3} and widths {64,128} instead of
    /// using the given hidden sizes.
    #[arg(long)]
    search: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss CSV; printed to stdout when omitted.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Report stem: writes `<stem>.txt` plus the plot files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_ERROR_DEG)]
    max_error_deg: f64,
    #[arg(long, default_value_t = DEFAULT_FOLD_GRID)]
    fold_grid: usize,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// Seed for datasets and training.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Seed of the random compatible volume.
    #[arg(long, default_value_t = 7)]
    volume_seed: u64,
    #[arg(long, default_value_t = 3)]
    points: usize,
    #[arg(long, default_value_t = 2000)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ERROR_DEG)]
    max_error_deg: f64,
    #[arg(long, default_value = "fig3")]
    out_dir: PathBuf,
}

/// Reflection-symmetric three-point volume used for the failing experiment.
pub const SYMMETRIC_VOLUME: [(f64, f64); 3] = [(0.6, 0.0), (-0.3, 0.7), (-0.3, -0.7)];

/// Parse `argv` (program name first) and run the command.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::GenVolume(a) => gen_volume(a),
        Command::CheckVolume(a) => check_volume_cmd(a),
        Command::GenDataset(a) => gen_dataset(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::ReproduceFig3(a) => reproduce(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

type CmdResult = Result<i32, Error>;

struct Manifest(String);

impl Manifest {
    fn new(command: &str) -> Self {
        Self(format!("command={command}\nversion={}\n", env!("CARGO_PKG_VERSION")))
    }

    fn set(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.0, "{key}={value}");
        self
    }

    fn train(&mut self, cfg: &VaeConfig) -> &mut Self {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        self.set("k", cfg.k)
            .set("encoder_hidden", list(&cfg.encoder_hidden))
            .set("decoder_hidden", list(&cfg.decoder_hidden))
            .set("lr", cfg.lr)
            .set("batch", cfg.batch)
            .set("epochs", cfg.epochs)
            .set("restarts", cfg.restarts)
            .set("train_seed", cfg.seed)
            .set("beta", cfg.beta)
    }

    fn dataset(&mut self, cfg: &DatasetConfig) -> &mut Self {
        self.set("count", cfg.count)
            .set("width", cfg.width)
            .set("dataset_seed", cfg.seed)
            .set(
                "splat_sigma",
                cfg.splat_sigma.map_or_else(|| "default".to_string(), |s| s.to_string()),
            )
            .set("noise_sigma", cfg.noise_sigma)
            .set("val_fraction", cfg.val_fraction)
    }

    fn write(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, &self.0)?;
        Ok(())
    }
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn dataset_file(stem: &Path) -> PathBuf {
    if stem.extension().is_some_and(|e| e == "csv") {
        stem.to_path_buf()
    } else {
        with_suffix(stem, ".csv")
    }
}

fn gen_volume(a: GenVolumeArgs) -> CmdResult {
    let v = match random_compatible_volume(a.n, a.seed, a.radius, a.max_attempts) {
        Ok(v) => v,
        Err(e @ Error::ConstructionFailure { .. }) => {
            eprintln!("{e}");
            return Ok(EXIT_NEGATIVE);
        }
        Err(e) => return Err(e),
    };
    match &a.out {
        Some(path) => {
            v.save(path)?;
            Manifest::new("gen-volume")
                .set("n", a.n)
                .set("seed", a.seed)
                .set("radius", a.radius)
                .set("max_attempts", a.max_attempts)
                .write(&with_suffix(path, ".manifest"))?;
        }
        None => print!("{}", v.to_text()),
    }
    Ok(EXIT_OK)
}

fn check_volume_cmd(a: CheckVolumeArgs) -> CmdResult {
    let v = PointVolume::load(&a.volume)?;
    let check = GridCheck {
        grid_size: a.grid,
        tol: a.tol,
        ..GridCheck::exact(v.domain_radius())
    };
    let report = check_volume(&v, &check, a.algebraic.then_some(a.resolution))?;
    print!("grid={}\ntol={:e}\n{}", a.grid, a.tol, report.render());
    Ok(if report.compatible() { EXIT_OK } else { EXIT_NEGATIVE })
}

fn gen_dataset(a: GenDatasetArgs) -> CmdResult {
    let v = PointVolume::load(&a.volume)?;
    let cfg = DatasetConfig {
        count: a.count,
        width: a.width,
        splat_sigma: a.splat_sigma,
        noise_sigma: a.noise_sigma,
        seed: a.seed,
        val_fraction: a.val_fraction,
    };
    let d = generate_dataset(&v, &cfg)?;
    save_dataset(&d, &dataset_file(&a.out))?;
    Manifest::new("gen-dataset")
        .dataset(&cfg)
        .write(&with_suffix(&a.out, ".manifest"))?;
    Ok(EXIT_OK)
}

fn train_cmd(a: TrainArgs) -> CmdResult {
    let d = load_dataset(&dataset_file(&a.dataset))?;
    let cfg = a.flags.config();
    let outcome = if a.search {
        let (outcome, table) = hyperparameter_search(&d, &cfg)?;
        for e in &table {
            eprintln!(
                "search depth={} width={} val_loss={:.6}",
                e.depth, e.width, e.val_loss
            );
        }
        outcome
    } else {
        train(&d, &cfg)?
    };
    outcome.model.save(&a.out)?;
    let csv = outcome.history_csv();
    match &a.history {
        Some(path) => fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    let used = &outcome.model.config;
    Manifest::new("train")
        .train(used)
        .set("search", a.search)
        .set("selected_restart", outcome.selected)
        .write(&with_suffix(&a.out, ".manifest"))?;
    Ok(EXIT_OK)
}

fn evaluate(model: &VaeModel, d: &Dataset, fold_grid: usize, out: &Path) -> Result<PoseReport, Error> {
    let pairs = infer_poses(model, d)?;
    let report = pose_report(&pairs, fold_grid)?;
    fs::write(with_suffix(out, ".txt"), report.render())?;
    emit_plots(&report, out)?;
    Ok(report)
}

fn eval_cmd(a: EvalArgs) -> CmdResult {
    let model = VaeModel::load(&a.model)?;
    let d = load_dataset(&dataset_file(&a.dataset))?;
    let report = evaluate(&model, &d, a.fold_grid, &a.out)?;
    print!("{}", report.render());
    let passed = report.passed(a.max_error_deg);
    println!("max_error_deg={}\npassed={passed}", a.max_error_deg);
    Ok(if passed { EXIT_OK } else { EXIT_NEGATIVE })
}

struct Experiment {
    name: &'static str,
    verdict: VolumeReport,
    outcome: TrainOutcome,
    report: PoseReport,
    collapse: Option<f64>,
}

fn run_experiment(
    name: &'static str,
    v: &PointVolume<f64>,
    dcfg: &DatasetConfig,
    tcfg: &VaeConfig,
    fold_grid: usize,
    dir: &Path,
) -> Result<Experiment, Error> {
    let verdict = check_volume(v, &GridCheck::exact(v.domain_radius()), Some(DEFAULT_ANGULAR_RESOLUTION))?;
    let sub = dir.join(name);
    fs::create_dir_all(&sub)?;
    v.save(&sub.join("volume.txt"))?;
    fs::write(sub.join("verdict.txt"), verdict.render())?;
    eprintln!("{name}: generating {} samples", dcfg.count);
    let d = generate_dataset(v, dcfg)?;
    save_dataset(&d, &sub.join("dataset.csv"))?;
    eprintln!("{name}: training {} restarts x {} epochs", tcfg.restarts, tcfg.epochs);
    let outcome = train(&d, tcfg)?;
    outcome.model.save(&sub.join("model.ckpt"))?;
    fs::write(sub.join("history.csv"), outcome.history_csv())?;
    let report = evaluate(&outcome.model, &d, fold_grid, &sub.join("report"))?;
    let collapse = if verdict.grid.coincidences.is_empty() {
        None
    } else {
        let pairs = find_coincidences(v, &GridCheck::exact(v.domain_radius()))?;
        Some(coincidence_collapse(&outcome.model, v, &d.raster, &pairs)?)
    };
    Ok(Experiment {
        name,
        verdict,
        outcome,
        report,
        collapse,
    })
}

fn reproduce(a: ReproduceArgs) -> CmdResult {
    let compatible = random_compatible_volume(a.points, a.volume_seed, 1.0, 1000)?;
    let symmetric = PointVolume::planar(&SYMMETRIC_VOLUME, &[1.0; 3], 1.0)?;
    let dcfg = DatasetConfig {
        count: a.count,
        width: a.width,
        seed: a.seed,
        ..DatasetConfig::default()
    };
    let tcfg = VaeConfig {
        epochs: a.epochs,
        restarts: a.restarts,
        seed: a.seed,
        ..VaeConfig::default()
    };
    fs::create_dir_all(&a.out_dir)?;
    let mut manifest = Manifest::new("reproduce-fig3");
    manifest
        .set("volume_seed", a.volume_seed)
        .set("points", a.points)
        .set("max_error_deg", a.max_error_deg)
        .set("fold_grid", DEFAULT_FOLD_GRID)
        .dataset(&dcfg)
        .train(&tcfg);
    manifest.write(&a.out_dir.join("manifest.txt"))?;

    let mut runs = Vec::new();
    for (name, v, expect_compatible) in [("compatible", &compatible, true), ("incompatible", &symmetric, false)] {
        let e = run_experiment(name, v, &dcfg, &tcfg, DEFAULT_FOLD_GRID, &a.out_dir)?;
        if e.verdict.compatible() != expect_compatible {
            eprintln!("{name} volume has the wrong verdict:\n{}", e.verdict.render());
            return Ok(EXIT_ERROR);
        }
        runs.push(e);
    }

    let mut s = String::new();
    let _ = writeln!(s, "{:<14}{:>22}{:>22}", "", runs[0].name, runs[1].name);
    let row = |s: &mut String, label: &str, f: &dyn Fn(&Experiment) -> String| {
        let _ = writeln!(s, "{label:<14}{:>22}{:>22}", f(&runs[0]), f(&runs[1]));
    };
    row(&mut s, "compatible", &|e| e.verdict.compatible().to_string());
    row(&mut s, "median_deg", &|e| format!("{:.3}", e.report.median_error.to_degrees()));
    row(&mut s, "fold_deg", &|e| {
        e.report
            .fold_score
            .map_or_else(|| "na".to_string(), |f| format!("{:.3}", f.to_degrees()))
    });
    row(&mut s, "spearman", &|e| format!("{:.4}", e.report.latent_spearman()));
    row(&mut s, "collapse", &|e| e.collapse.map_or_else(|| "na".to_string(), |c| format!("{c:.3e}")));
    row(&mut s, "restart", &|e| e.outcome.selected.to_string());
    row(&mut s, "passed", &|e| e.report.passed(a.max_error_deg).to_string());
    for e in &runs {
        let _ = write!(s, "\n[{}]\n{}", e.name, e.report.render());
    }
    fs::write(a.out_dir.join("summary.txt"), &s)?;
    print!("{s}");

    let reproduced = runs[0].report.passed(a.max_error_deg) && !runs[1].report.passed(a.max_error_deg);
    Ok(if reproduced { EXIT_OK } else { EXIT_NEGATIVE })
}
