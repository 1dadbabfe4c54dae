//! Batch front end: map generation, door detection, simulation,
//! calibration, tracking and evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod settings;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use doorcal::calibration::{extract_transitions, select_pairs, SearchMode};
use doorcal::doorfind::{detect_doors, generate_map, load_grid, save_grid};
use doorcal::evalkit::{
    compare, ecdf, load_points_csv, trajectory_error, write_ecdf_csv, write_points_csv, write_summary_csv,
};
use doorcal::runtime::{track, write_track_csv};
use doorcal::simkit::{
    load_toa_csv, random_walk, save_toa_csv, simulate_session, waypoint_trajectory, write_pose_csv, TourConfig,
};
use doorcal::tdoa_ekf::{all_pairs, format_pairs};
use doorcal::world::{load_scenario, DoorsSection};
use doorcal::{Error, PairTable, SimConfig};

use settings::{derive_seeds, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "doorcal",
    version,
    about = "Door-transition anchor-pair calibration for TDOA tracking"
)]
struct Cli {
    /// Seed for every random choice (map layout, walk, measurement noise).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// TOML file overriding defaults, with sections walk, tour, simulation,
    /// ekf, calibration, runtime, mapgen and detect.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Suppress progress and summary messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic occupancy grid with ground-truth doors.
    Genmap(GenmapArgs),
    /// Detect doorways on an occupancy grid.
    Detect(DetectArgs),
    /// Write the bundled demo apartment and its reference walk.
    Demo(DemoArgs),
    /// Simulate a TOA log for a walk through a scenario.
    Simulate(SimulateArgs),
    /// Choose anchor pairs per (zone, heading) from a TOA log.
    Calibrate(CalibrateArgs),
    /// Track a TOA log with a calibrated pair table.
    Track(TrackArgs),
    /// Score fixes against a reference path.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct GenmapArgs {
    /// Output graymap; metadata goes to `<out>.toml`.
    #[arg(long, value_name = "PGM")]
    out: PathBuf,
    /// Write the ground-truth doors as a doors section.
    #[arg(long, value_name = "TOML")]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Occupancy grid (PGM, with optional `.toml` sidecar).
    #[arg(long, value_name = "PGM")]
    grid: PathBuf,
    /// Output doors section.
    #[arg(long, value_name = "TOML")]
    out: PathBuf,
    /// Keep only these detection ids, e.g. `--keep 1,3`.
    #[arg(long, value_delimiter = ',', value_name = "IDS")]
    keep: Option<Vec<u32>>,
}

#[derive(Debug, Args)]
struct DemoArgs {
    /// Directory receiving `apartment.toml` and `test_path.csv`.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_name = "TOML")]
    scenario: PathBuf,
    /// Waypoint CSV with `x,y` columns. Without it a random tour is walked.
    #[arg(long, value_name = "CSV")]
    path: Option<PathBuf>,
    /// Seconds to simulate; required for random tours, truncates a path.
    #[arg(long)]
    duration: Option<f64>,
    /// Output TOA log.
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
    /// Also write the ground-truth poses.
    #[arg(long, value_name = "CSV")]
    poses: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Search {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long, value_name = "TOML")]
    scenario: PathBuf,
    #[arg(long, value_name = "CSV")]
    toa: PathBuf,
    /// Output pair table.
    #[arg(long, value_name = "TXT")]
    out: PathBuf,
    /// Output cost report.
    #[arg(long, value_name = "CSV")]
    report: PathBuf,
    /// Candidate set sizes, e.g. `--sizes 4,5,6`.
    #[arg(long, value_delimiter = ',', value_name = "N")]
    sizes: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    search: Option<Search>,
}

#[derive(Debug, Args)]
struct TrackArgs {
    #[arg(long, value_name = "TOML")]
    scenario: PathBuf,
    #[arg(long, value_name = "CSV")]
    toa: PathBuf,
    /// Pair table from `calibrate`.
    #[arg(long, value_name = "TXT")]
    pairs: PathBuf,
    /// Output fixes.
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Fix CSV with `x,y` columns.
    #[arg(long, value_name = "CSV")]
    fixes: PathBuf,
    /// Reference polyline with `x,y` columns.
    #[arg(long, value_name = "CSV")]
    reference: PathBuf,
    /// Output summary, one row per run.
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
    /// Output ECDF of the fixes' errors.
    #[arg(long, value_name = "CSV")]
    ecdf: Option<PathBuf>,
    /// Second fix file to compare against, e.g. a fixed-pair run.
    #[arg(long, value_name = "CSV")]
    baseline: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(e) if e.is_numerical() => 3,
            Failure::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Data(e) => write!(f, "{e}"),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

struct Ctx {
    seed: u64,
    quiet: bool,
    settings: Settings,
}

impl Ctx {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn create(path: &Path) -> doorcal::Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> doorcal::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn genmap(ctx: &Ctx, args: &GenmapArgs) -> Outcome {
    let (grid, doors) = generate_map(ctx.seed, &ctx.settings.mapgen)?;
    save_grid(&grid, &args.out)?;
    if let Some(truth) = &args.truth {
        write_text(truth, &DoorsSection { doors: doors.clone() }.to_toml())?;
    }
    ctx.say(format!(
        "map {}x{} cells at {} m, {} doors",
        grid.width(),
        grid.height(),
        grid.resolution(),
        doors.len()
    ));
    Ok(())
}

fn detect(ctx: &Ctx, args: &DetectArgs) -> Outcome {
    let grid = load_grid(&args.grid)?;
    let found = detect_doors(&grid, &ctx.settings.detect);
    if let Some(keep) = &args.keep {
        if let Some(bad) = keep.iter().find(|id| !found.iter().any(|d| d.door.id == **id)) {
            return Err(Failure::Usage(format!(
                "--keep names detection {bad}, which does not exist"
            )));
        }
    }
    let kept: Vec<_> = found
        .iter()
        .filter(|d| args.keep.as_ref().is_none_or(|k| k.contains(&d.door.id)))
        .collect();
    for d in &kept {
        ctx.say(format!(
            "door {} at ({:.3}, {:.3}) width {:.3} m score {:.2}",
            d.door.id, d.door.center.x, d.door.center.y, d.door.width, d.score
        ));
    }
    let section = DoorsSection {
        doors: kept.iter().map(|d| d.door).collect(),
    };
    write_text(&args.out, &section.to_toml())?;
    Ok(())
}

fn demo(ctx: &Ctx, args: &DemoArgs) -> Outcome {
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    write_text(&args.out_dir.join("apartment.toml"), doorcal::demo::APARTMENT_TOML)?;
    write_points_csv(
        &doorcal::demo::test_path(),
        create(&args.out_dir.join("test_path.csv"))?,
    )?;
    ctx.say(format!(
        "wrote apartment.toml and test_path.csv to {}",
        args.out_dir.display()
    ));
    Ok(())
}

fn simulate(ctx: &Ctx, args: &SimulateArgs) -> Outcome {
    let scenario = load_scenario(&args.scenario)?;
    let walk = ctx.settings.walk;
    let (tour_seed, sim_seed) = derive_seeds(ctx.seed);
    if let Some(d) = args.duration {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Failure::Usage(format!("--duration must be positive, got {d}")));
        }
    }
    let poses = match (&args.path, args.duration) {
        (Some(path), duration) => {
            let mut poses = waypoint_trajectory(&load_points_csv(path)?, walk.speed, walk.dt)?;
            if let Some(d) = duration {
                poses.retain(|p| p.t <= d + 1e-9);
            }
            poses
        }
        (None, Some(d)) => {
            let tour = TourConfig {
                seed: tour_seed,
                ..ctx.settings.tour.clone()
            };
            random_walk(&scenario, d, walk.speed, walk.dt, &tour)?
        }
        (None, None) => return Err(Failure::Usage("random tours need --duration".into())),
    };
    let cfg = SimConfig {
        rng_seed: sim_seed,
        ..ctx.settings.simulation.clone()
    };
    let frames = simulate_session(&scenario, &cfg, &poses)?;
    save_toa_csv(&frames, &args.out)?;
    if let Some(p) = &args.poses {
        write_pose_csv(&poses, create(p)?)?;
    }
    ctx.say(format!(
        "{} epochs over {:.1} s",
        frames.len(),
        poses.last().map_or(0.0, |p| p.t)
    ));
    Ok(())
}

fn calibrate(ctx: &Ctx, args: &CalibrateArgs) -> Outcome {
    let scenario = load_scenario(&args.scenario)?;
    let frames = load_toa_csv(&args.toa)?;
    let mut cfg = ctx.settings.calibration.clone();
    if let Some(sizes) = &args.sizes {
        cfg.candidate_sizes = sizes.clone();
    }
    if let Some(search) = args.search {
        cfg.search = match search {
            Search::Exhaustive => SearchMode::Exhaustive,
            Search::Greedy => SearchMode::Greedy,
        };
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let universe = all_pairs(&scenario.anchor_ids())?;
    if let Some(&n) = cfg.candidate_sizes.iter().find(|&&n| n > universe.len()) {
        return Err(Failure::Usage(format!(
            "candidate size {n} exceeds the {} available pairs",
            universe.len()
        )));
    }
    let ekf = &ctx.settings.ekf;
    let started = Instant::now();
    let windows = extract_transitions(&scenario, &frames, &universe, &cfg, ekf)?;
    ctx.say(format!("{} door transitions", windows.len()));
    let (table, report) = select_pairs(&scenario, &windows, &cfg, ekf)?;
    table.save(&args.out)?;
    report.write_csv(create(&args.report)?)?;
    for k in &report.keys {
        let pairs = table.get(&k.key).unwrap_or(table.fallback());
        let note = if k.flagged { " (no qualified set, fallback)" } else { "" };
        ctx.say(format!(
            "{}: {} windows, {}{note}",
            k.key,
            k.window_count,
            format_pairs(pairs)
        ));
    }
    ctx.say(format!(
        "{} keys in {:.1} s",
        table.len(),
        started.elapsed().as_secs_f64()
    ));
    Ok(())
}

fn track_cmd(ctx: &Ctx, args: &TrackArgs) -> Outcome {
    let scenario = load_scenario(&args.scenario)?;
    let frames = load_toa_csv(&args.toa)?;
    let table = PairTable::load(&args.pairs)?;
    let fixes = track(&frames, &table, &scenario, &ctx.settings.ekf, &ctx.settings.runtime)?;
    write_track_csv(&fixes, create(&args.out)?)?;
    let keyed = fixes.iter().filter(|f| f.key.is_some()).count();
    ctx.say(format!("{} fixes, {keyed} with a calibrated key", fixes.len()));
    Ok(())
}

fn evaluate(ctx: &Ctx, args: &EvaluateArgs) -> Outcome {
    let reference = load_points_csv(&args.reference)?;
    let summary = trajectory_error(&load_points_csv(&args.fixes)?, &reference)?;
    let baseline = match &args.baseline {
        Some(path) => Some(trajectory_error(&load_points_csv(path)?, &reference)?),
        None => None,
    };
    let mut runs = vec![("fixes", &summary)];
    if let Some(b) = &baseline {
        runs.push(("baseline", b));
    }
    write_summary_csv(&runs, create(&args.out)?)?;
    if let Some(path) = &args.ecdf {
        write_ecdf_csv(&ecdf(&summary.samples), create(path)?)?;
    }
    ctx.say(format!(
        "median {:.3} m, mean {:.3} m, p90 {:.3} m over {} fixes",
        summary.median,
        summary.mean,
        summary.p90,
        summary.samples.len()
    ));
    if let Some(b) = &baseline {
        let gain = compare(&summary, b);
        ctx.say(format!(
            "improvement over baseline: median {:+.3} m, mean {:+.3} m",
            gain.median_gain, gain.mean_gain
        ));
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let ctx = Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
        settings,
    };
    match &cli.command {
        Command::Genmap(a) => genmap(&ctx, a),
        Command::Detect(a) => detect(&ctx, a),
        Command::Demo(a) => demo(&ctx, a),
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Calibrate(a) => calibrate(&ctx, a),
        Command::Track(a) => track_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests go to stdout and succeed.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("doorcal: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
