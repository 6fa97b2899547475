//! Command-line driver.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};
use crate::event::{EventError, Micros, SensorGeometry, Side};
use crate::io::{
    read_augmented_file, read_event_file, read_truth_file, render_active_frame, render_disparity_map,
    write_augmented_file, write_event_file, write_truth_file, AugmentedFile, FormatError,
};
use crate::stereo::{run_pipeline, PipelineMode, PipelineOutput, StereoState};
use crate::synth::{generate_stereo_edge, sparsify, EdgeScenario, GroundTruth, SynthError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FORMAT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "evstereo", version, about = "Coupled event lifetime and disparity estimation")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coupled pipeline: lifetimes transferred through stereo matches.
    Run(RunArgs),
    /// Plane fit for every event, disparity afterwards.
    RunDecoupled(RunArgs),
    /// Fixed accumulation interval instead of lifetimes.
    RunFixed(RunArgs),
    /// Generate a synthetic moving-edge stereo scenario.
    Synth(SynthArgs),
    /// Compare two augmented-event files.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub left: Option<PathBuf>,
    #[arg(long)]
    pub right: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Columns crossed per second (`inf` for a horizontal edge).
    #[arg(long, default_value_t = 100.0)]
    pub vx: f64,
    /// Rows crossed per second (`inf` for a vertical edge).
    #[arg(long, default_value_t = f64::INFINITY)]
    pub vy: f64,
    #[arg(long, default_value_t = 5)]
    pub disparity: u16,
    #[arg(long, default_value_t = 2_000_000)]
    pub duration_us: Micros,
    /// Noise events per second per sensor.
    #[arg(long, default_value_t = 0.0)]
    pub noise_rate: f64,
    /// Fraction of right events kept.
    #[arg(long, default_value_t = 1.0)]
    pub keep_right: f64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long)]
    pub truth_a: Option<PathBuf>,
    #[arg(long)]
    pub truth_b: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Format(_) => EXIT_FORMAT,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        if e.is_input_format() {
            CliError::Format(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<EventError> for CliError {
    fn from(e: EventError) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn config_error(e: ConfigError) -> CliError {
    match e {
        ConfigError::Syntax { .. } => CliError::Format(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            PipelineConfig::parse(&text).map_err(config_error)?
        }
        None => PipelineConfig::default(),
    };
    for assignment in &cli.set {
        cfg.apply_override(assignment).map_err(config_error)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.geometry().map_err(config_error)?;
    cfg.ransac_params().map_err(config_error)?;
    cfg.stereo_params().map_err(config_error)?;
    Ok(cfg)
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let out = |r: std::io::Result<()>| r.map_err(|e| CliError::Runtime(e.to_string()));
    if cli.dump_config {
        return out(write!(stdout, "{}", cfg.dump()));
    }
    match &cli.command {
        None => Err(CliError::Usage("no subcommand given (see --help)".into())),
        Some(Command::Run(args)) => run(&cfg, args, PipelineMode::Coupled, stdout),
        Some(Command::RunDecoupled(args)) => run(&cfg, args, PipelineMode::Decoupled, stdout),
        Some(Command::RunFixed(args)) => run(&cfg, args, PipelineMode::FixedInterval, stdout),
        Some(Command::Synth(args)) => synth(&cfg, args, stdout),
        Some(Command::Compare(args)) => compare(&cfg, args, stdout),
    }
}

fn mode_name(mode: PipelineMode) -> &'static str {
    match mode {
        PipelineMode::Coupled => "coupled",
        PipelineMode::Decoupled => "decoupled",
        PipelineMode::FixedInterval => "fixed",
    }
}

fn run(cfg: &PipelineConfig, args: &RunArgs, mode: PipelineMode, stdout: &mut dyn Write) -> Result<(), CliError> {
    let geometry = cfg.geometry().map_err(config_error)?;
    let ransac = cfg.ransac_params().map_err(config_error)?;
    let stereo = cfg.stereo_params().map_err(config_error)?;
    let left_path = args
        .left
        .clone()
        .or_else(|| cfg.left.clone())
        .ok_or_else(|| CliError::Usage("no left event file (--left or config key `left`)".into()))?;
    let right_path = args.right.clone().or_else(|| cfg.right.clone());
    let out_dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());

    let left = read_event_file(&left_path, Side::Left, &geometry)?;
    let right = match &right_path {
        Some(p) => read_event_file(p, Side::Right, &geometry)?,
        None => Vec::new(),
    };
    let mut state = StereoState::new(geometry, ransac, stereo, cfg.accumulation_interval_us, cfg.seed);
    let output = run_pipeline(&mut state, &left, &right, mode)?;

    fs::create_dir_all(&out_dir).map_err(|e| io_error(&out_dir, e))?;
    let fixed = mode == PipelineMode::FixedInterval;
    for side in [Side::Left, Side::Right] {
        let meta = metadata(&output, side, mode, cfg.seed);
        let path = out_dir.join(format!("{side}.aug"));
        write_augmented_file(&path, output.side(side), &meta, fixed)?;
        for &t in &cfg.render_times {
            render_active_frame(output.side(side), t, &geometry).write_pgm(&out_dir.join(format!("frame_{side}_{t}.pgm")))?;
            render_disparity_map(output.side(side), t, &geometry, stereo.max_disparity)
                .write_pgm(&out_dir.join(format!("disparity_{side}_{t}.pgm")))?;
        }
    }
    let report = run_report(&output, mode);
    stdout.write_all(report.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))
}

fn metadata(output: &PipelineOutput, side: Side, mode: PipelineMode, seed: u64) -> Vec<(String, String)> {
    let stats = output.stats(side);
    [
        ("side", side.to_string()),
        ("pipeline", mode_name(mode).to_string()),
        ("seed", seed.to_string()),
        ("plane_fits_side", stats.plane_fits.to_string()),
        ("plane_fits_total", output.total_plane_fits().to_string()),
        ("lifetime_time_us", output.lifetime_time().as_micros().to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn run_report(output: &PipelineOutput, mode: PipelineMode) -> String {
    let mut s = format!("pipeline: {}\n", mode_name(mode));
    for side in [Side::Left, Side::Right] {
        let st = output.stats(side);
        let lifetimed = output.side(side).iter().filter(|a| !a.lifetime.is_noise()).count();
        s += &format!(
            "{side}: events {} lifetimed {lifetimed} noise {} matched {} plane_fits {} predicted {} stereo_lifetimes {}\n",
            st.events, st.noise, st.matches, st.plane_fits, st.predicted, st.stereo_lifetimes
        );
    }
    s += &format!("plane_fits_total: {}\n", output.total_plane_fits());
    s
}

fn synth(cfg: &PipelineConfig, args: &SynthArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let geometry: SensorGeometry = cfg.geometry().map_err(config_error)?;
    let scenario = EdgeScenario {
        true_disparity: args.disparity,
        duration_us: args.duration_us,
        noise_rate: args.noise_rate,
        seed: cfg.seed,
        ..EdgeScenario::with_velocity((args.vx, args.vy), geometry)
    };
    let mut streams = generate_stereo_edge(&scenario)?;
    if args.keep_right < 1.0 {
        streams.right = sparsify(&streams.right, args.keep_right, cfg.seed ^ 0x0005_9A25)?;
    }
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    for (name, stream) in [("left", &streams.left), ("right", &streams.right)] {
        write_event_file(&args.out.join(format!("{name}.txt")), &stream.events)?;
        write_truth_file(&args.out.join(format!("{name}.truth")), &stream.truth)?;
    }
    writeln!(
        stdout,
        "left: {} events\nright: {} events\ntrue_lifetime_us: {}\ntrue_disparity: {}",
        streams.left.len(),
        streams.right.len(),
        scenario.true_lifetime() * 1e6,
        scenario.true_disparity
    )
    .map_err(|e| CliError::Runtime(e.to_string()))
}

fn read_any_side(path: &Path, geometry: &SensorGeometry) -> Result<AugmentedFile, CliError> {
    let file = read_augmented_file(path, Side::Left, geometry)?;
    let side = match file.meta("side") {
        Some("right") => Side::Right,
        _ => Side::Left,
    };
    let mut file = file;
    for r in &mut file.records {
        r.event.side = side;
    }
    Ok(file)
}

/// Median absolute lifetime error (µs) over lifetimed events with a known
/// true lifetime.
fn median_tau_error(file: &AugmentedFile, truth: &[GroundTruth]) -> Result<Option<f64>, CliError> {
    if truth.len() != file.records.len() {
        return Err(CliError::Format(format!(
            "ground truth has {} entries but the augmented file has {} events",
            truth.len(),
            file.records.len()
        )));
    }
    let mut errors: Vec<f64> = file
        .records
        .iter()
        .zip(truth)
        .filter_map(|(r, g)| Some((r.lifetime?.micros()? as f64 - g.lifetime_us?).abs()))
        .collect();
    if errors.is_empty() {
        return Ok(None);
    }
    errors.sort_by(f64::total_cmp);
    Ok(Some(errors[(errors.len() - 1) / 2]))
}

fn compare(cfg: &PipelineConfig, args: &CompareArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let geometry = cfg.geometry().map_err(config_error)?;
    let a = read_any_side(&args.a, &geometry)?;
    let b = read_any_side(&args.b, &geometry)?;
    let events_a: Vec<_> = a.records.iter().map(|r| r.event).collect();
    let events_b: Vec<_> = b.records.iter().map(|r| r.event).collect();
    if events_a != events_b {
        return Err(CliError::Format("the two files describe different event streams".into()));
    }

    let mut s = String::new();
    let fits = |f: &AugmentedFile| f.meta("plane_fits_total").and_then(|v| v.parse::<f64>().ok());
    for (name, f, path) in [("a", &a, &args.a), ("b", &b, &args.b)] {
        let lifetimed = f.records.iter().filter(|r| matches!(r.lifetime, Some(l) if !l.is_noise())).count();
        let noise = f.records.iter().filter(|r| matches!(r.lifetime, Some(l) if l.is_noise())).count();
        let matched = f.records.iter().filter(|r| r.disparity.is_some()).count();
        s += &format!("{name}.file: {}\n", path.display());
        s += &format!("{name}.side: {}\n", f.meta("side").unwrap_or("left"));
        s += &format!("{name}.pipeline: {}\n", f.meta("pipeline").unwrap_or("unknown"));
        s += &format!("{name}.events: {}\n", f.records.len());
        s += &format!("{name}.lifetimed: {lifetimed}\n");
        s += &format!("{name}.noise: {noise}\n");
        s += &format!("{name}.matched: {matched}\n");
        s += &format!("{name}.plane_fits_side: {}\n", f.meta("plane_fits_side").unwrap_or("-"));
        s += &format!("{name}.plane_fits_total: {}\n", f.meta("plane_fits_total").unwrap_or("-"));
        s += &format!("{name}.lifetime_time_us: {}\n", f.meta("lifetime_time_us").unwrap_or("-"));
    }

    let (mut common, mut agree) = (0usize, 0usize);
    for (ra, rb) in a.records.iter().zip(&b.records) {
        if let (Some(da), Some(db)) = (ra.disparity, rb.disparity) {
            common += 1;
            agree += (da.abs_diff(db) <= 1) as usize;
        }
    }
    s += &format!("common_matched: {common}\n");
    if common > 0 {
        s += &format!("disparity_agreement: {:.6}\n", agree as f64 / common as f64);
    } else {
        s += "disparity_agreement: -\n";
    }
    match (fits(&a), fits(&b)) {
        (Some(fa), Some(fb)) if fb > 0.0 => s += &format!("plane_fit_ratio: {:.6}\n", fa / fb),
        _ => s += "plane_fit_ratio: -\n",
    }
    for (name, f, truth) in [("a", &a, &args.truth_a), ("b", &b, &args.truth_b)] {
        if let Some(path) = truth {
            let truth = read_truth_file(path)?;
            match median_tau_error(f, &truth)? {
                Some(e) => s += &format!("{name}.median_abs_tau_error_us: {e:.3}\n"),
                None => s += &format!("{name}.median_abs_tau_error_us: -\n"),
            }
        }
    }
    stdout.write_all(s.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))
}
