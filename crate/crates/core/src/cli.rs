//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a run fails at runtime (non-finite state,
//! I/O), 2 for usage and configuration errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::controller::{Gains, KanayamaGains};
use crate::excitation::{self, PeReport, PE_TOLERANCE};
use crate::experiment::{compare_controllers, monte_carlo_basin, ExperimentError};
use crate::linearization::{lin_check, LinCheckOptions, DEFAULT_FD_STEP};
use crate::sim::{
    simulate, ControllerSpec, InitialCondition, SimConfig, SimError, DEFAULT_DT, DEFAULT_T_END,
};
use crate::trajectory::{HeadingLockedEllipse, TrajectorySpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NonFinite { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Sim(s) => s.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "unitrack",
    version,
    about = "Unicycle tracking on SE(2) with a spatial group error"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed-loop simulation and write <out>.csv and <out>.manifest.json.
    Simulate(SimulateArgs),
    /// Estimate the persistent-excitation level of the controller regressor.
    PeCheck(PeCheckArgs),
    /// Check the linearization at the identity and fit its decay rate.
    LinCheck(LinCheckArgs),
    /// Run several controllers on one reference and write comparison data.
    Compare(CompareArgs),
    /// Monte-Carlo estimate of the basin of attraction.
    Basin(BasinArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrajKind {
    Ellipse,
    Line,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ControllerKind {
    Spatial,
    Kanayama,
    Feedforward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Convention {
    /// Heading along the path tangent (the simulated reference).
    Flatness,
    /// Heading `θ_d = ht`, for which the closed-form Gram is known.
    Locked,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrajArgs {
    #[arg(long, value_enum)]
    pub traj: Option<TrajKind>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub h: Option<f64>,
    /// Ellipse centre or line start, `x,y`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_pair)]
    pub origin: Option<[f64; 2]>,
    #[arg(long, allow_hyphen_values = true)]
    pub speed: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub heading: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub traj: TrajArgs,
    #[arg(long, value_enum)]
    pub controller: Option<ControllerKind>,
    /// `k_omega,k_v` for the spatial law or `k_x,k_y,k_theta` for Kanayama.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_gains)]
    pub gains: Option<GainList>,
    /// Initial offset `dx,dy,dtheta` from the reference at t = 0.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_triple)]
    pub offset: Option<[f64; 3]>,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long = "t-end", allow_hyphen_values = true)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON run manifest or bare simulation config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Output path; `.csv` is appended unless already present.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PeCheckArgs {
    #[command(flatten)]
    pub traj: TrajArgs,
    #[arg(long, value_enum, default_value = "flatness")]
    pub convention: Convention,
    /// Window length; defaults to one period, or a fifth of the horizon.
    #[arg(long)]
    pub window: Option<f64>,
    /// Horizon; defaults to five periods, or 40 s for aperiodic references.
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LinCheckArgs {
    #[command(flatten)]
    pub traj: TrajArgs,
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long = "fd-step", default_value_t = DEFAULT_FD_STEP)]
    pub fd_step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// JSON comparison config (see README).
    #[arg(long)]
    pub config: PathBuf,
    /// Output prefix for the per-run CSVs, summary and panel data.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BasinArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| {
            let v: f64 = x
                .trim()
                .parse()
                .map_err(|_| format!("`{x}` is not a number"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("`{x}` is not finite"))
            }
        })
        .collect()
}

/// Comma-separated gain values as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct GainList(pub Vec<f64>);

fn parse_gains(s: &str) -> Result<GainList, String> {
    parse_list(s).map(GainList)
}

fn parse_fixed<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v = parse_list(s)?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_fixed::<2>(s)
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    parse_fixed::<3>(s)
}

impl TrajArgs {
    /// Applies the flags on top of `base`; a family switch starts from that family's defaults.
    pub fn resolve(&self, base: TrajectorySpec) -> Result<TrajectorySpec, CliError> {
        let mut spec = match (self.traj, base) {
            (Some(TrajKind::Ellipse), TrajectorySpec::Line { .. }) => {
                TrajectorySpec::centered_ellipse()
            }
            (Some(TrajKind::Line), TrajectorySpec::Ellipse { .. }) => TrajectorySpec::Line {
                speed: 1.0,
                heading: 0.0,
                start: [0.0, 0.0],
            },
            _ => base,
        };
        match &mut spec {
            TrajectorySpec::Ellipse { a, b, h, origin } => {
                if self.speed.is_some() || self.heading.is_some() {
                    return Err(CliError::Usage(
                        "--speed and --heading apply to --traj line only".into(),
                    ));
                }
                *a = self.a.unwrap_or(*a);
                *b = self.b.unwrap_or(*b);
                *h = self.h.unwrap_or(*h);
                *origin = self.origin.unwrap_or(*origin);
            }
            TrajectorySpec::Line {
                speed,
                heading,
                start,
            } => {
                if self.a.is_some() || self.b.is_some() || self.h.is_some() {
                    return Err(CliError::Usage(
                        "--a, --b and --h apply to --traj ellipse only".into(),
                    ));
                }
                *speed = self.speed.unwrap_or(*speed);
                *heading = self.heading.unwrap_or(*heading);
                *start = self.origin.unwrap_or(*start);
            }
        }
        spec.build().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }
}

fn controller_from(
    kind: ControllerKind,
    gains: Option<&[f64]>,
) -> Result<ControllerSpec, CliError> {
    let bad = |want: usize, got: usize| {
        CliError::Usage(format!("--gains: {kind:?} takes {want} values, got {got}").to_lowercase())
    };
    Ok(match (kind, gains) {
        (ControllerKind::Spatial, None) => ControllerSpec::spatial(),
        (ControllerKind::Spatial, Some(&[k_omega, k_v])) => ControllerSpec::Spatial {
            gains: Gains::new(k_omega, k_v).map_err(|e| CliError::Usage(e.to_string()))?,
        },
        (ControllerKind::Spatial, Some(g)) => return Err(bad(2, g.len())),
        (ControllerKind::Kanayama, None) => ControllerSpec::kanayama(),
        (ControllerKind::Kanayama, Some(&[k_x, k_y, k_theta])) => ControllerSpec::Kanayama {
            gains: KanayamaGains::new(k_x, k_y, k_theta)
                .map_err(|e| CliError::Usage(e.to_string()))?,
        },
        (ControllerKind::Kanayama, Some(g)) => return Err(bad(3, g.len())),
        (ControllerKind::Feedforward, None) => ControllerSpec::Feedforward,
        (ControllerKind::Feedforward, Some(g)) => return Err(bad(0, g.len())),
    })
}

fn kind_of(c: &ControllerSpec) -> ControllerKind {
    match c {
        ControllerSpec::Spatial { .. } => ControllerKind::Spatial,
        ControllerSpec::Kanayama { .. } => ControllerKind::Kanayama,
        ControllerSpec::Feedforward => ControllerKind::Feedforward,
    }
}

/// What `simulate` records next to its CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: SimConfig,
    pub seed: u64,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_s: f64,
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Reads a manifest (uses its `config`) or a bare [`SimConfig`].
pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let value = read_json(path)?;
    let inner = match value.get("config") {
        Some(c) if value.get("tool").is_some() => c.clone(),
        _ => value,
    };
    serde_json::from_value(inner).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

impl RunArgs {
    pub fn resolve(&self, default_t_end: f64) -> Result<SimConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => SimConfig {
                t_end: default_t_end,
                ..SimConfig::reference(ControllerSpec::spatial())
            },
        };
        cfg.trajectory = self.traj.resolve(cfg.trajectory)?;
        let kind = self.controller.unwrap_or(kind_of(&cfg.controller));
        if self.controller.is_some() || self.gains.is_some() {
            cfg.controller = controller_from(kind, self.gains.as_ref().map(|g| g.0.as_slice()))?;
        }
        if let Some([dx, dy, dtheta]) = self.offset {
            cfg.initial = InitialCondition::Offset {
                dp: [dx, dy],
                dtheta,
            };
        }
        cfg.dt = self.dt.unwrap_or(cfg.dt);
        cfg.t_end = self.t_end.unwrap_or(cfg.t_end);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("reports serialize")
    );
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `run.csv` and `run` both give the prefix `run`.
fn output_prefix(out: &Path) -> PathBuf {
    if out.extension().is_some_and(|e| e == "csv") {
        out.with_extension("")
    } else {
        out.to_path_buf()
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = args.run.resolve(DEFAULT_T_END)?;
    let start = Instant::now();
    let log = simulate(&cfg)?;
    let prefix = output_prefix(&args.out);
    let csv = with_suffix(&prefix, ".csv");
    let manifest = with_suffix(&prefix, ".manifest.json");
    let mut w = create(&csv)?;
    log.write_csv(&mut w).map_err(|e| io_err(&csv, e))?;
    drop(w);
    write_json(
        &manifest,
        &RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg,
            seed: cfg.seed,
            outputs: vec![csv.clone(), manifest.clone()],
            wall_clock_s: start.elapsed().as_secs_f64(),
        },
    )?;
    eprintln!(
        "wrote {} ({} rows) and {}",
        csv.display(),
        log.len(),
        manifest.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct PeCheckReport {
    trajectory: TrajectorySpec,
    convention: &'static str,
    report: PeReport,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form_diagonal: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quadrature: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form_relative_residual: Option<f64>,
}

fn default_base() -> TrajectorySpec {
    TrajectorySpec::centered_ellipse()
}

fn horizon_and_window(period: Option<f64>, t_end: Option<f64>, window: Option<f64>) -> (f64, f64) {
    let horizon =
        t_end.unwrap_or_else(|| period.map_or(DEFAULT_T_END, |p| excitation::DEFAULT_PERIODS * p));
    let window = window.unwrap_or_else(|| {
        period
            .unwrap_or(horizon / excitation::DEFAULT_PERIODS)
            .min(horizon)
    });
    (horizon, window)
}

fn cmd_pe_check(args: &PeCheckArgs) -> Result<(), CliError> {
    let spec = args.traj.resolve(default_base())?;
    let traj = spec.build().map_err(|e| CliError::Usage(e.to_string()))?;
    let (horizon, window) = horizon_and_window(traj.period(), args.t_end, args.window);
    let usage = |e: excitation::ExcitationError| CliError::Usage(e.to_string());
    let n = excitation::DEFAULT_NODES;
    let windows = excitation::DEFAULT_WINDOWS;

    let out = match (args.convention, spec) {
        (Convention::Flatness, _) => {
            let report = excitation::pe_epsilon(
                excitation::controller_regressor(&traj),
                horizon,
                window,
                windows,
                n,
            )
            .map_err(usage)?;
            PeCheckReport {
                trajectory: spec,
                convention: "flatness",
                verdict: verdict(&report),
                report,
                closed_form_diagonal: None,
                quadrature: None,
                closed_form_relative_residual: None,
            }
        }
        (Convention::Locked, TrajectorySpec::Ellipse { a, b, h, origin }) => {
            let mut locked =
                HeadingLockedEllipse::new(a, b, h).map_err(|e| CliError::Usage(e.to_string()))?;
            locked.origin = origin.into();
            let f = excitation::controller_regressor(&locked);
            let report = excitation::pe_epsilon(&f, horizon, window, windows, n).map_err(usage)?;
            let closed = excitation::ellipse_pe_closed_form(a, b, h).map_err(usage)?;
            let quad = excitation::window_gram(&f, 0.0, locked.period(), n).map_err(usage)?;
            let closed_dyn = DMatrix::from_fn(3, 3, |i, j| closed[(i, j)]);
            let residual = (&quad - &closed_dyn).abs().max() / closed_dyn.abs().max();
            PeCheckReport {
                trajectory: spec,
                convention: "locked",
                verdict: verdict(&report),
                report,
                closed_form_diagonal: Some([closed[(0, 0)], closed[(1, 1)], closed[(2, 2)]]),
                quadrature: Some(
                    quad.row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect(),
                ),
                closed_form_relative_residual: Some(residual),
            }
        }
        (Convention::Locked, TrajectorySpec::Line { .. }) => {
            return Err(CliError::Usage(
                "--convention locked applies to ellipses only".into(),
            ))
        }
    };
    emit(&out, args.out.as_deref())
}

fn verdict(report: &PeReport) -> &'static str {
    if report.certifies(PE_TOLERANCE) {
        "PE on horizon"
    } else {
        "not PE on horizon"
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    print_json(value);
    if let Some(path) = out {
        write_json(path, value)?;
    }
    Ok(())
}

fn cmd_lin_check(args: &LinCheckArgs) -> Result<(), CliError> {
    let spec = args.traj.resolve(default_base())?;
    let traj = spec.build().map_err(|e| CliError::Usage(e.to_string()))?;
    let (horizon, window) = horizon_and_window(traj.period(), args.t_end, args.window);
    if !(args.dt.is_finite() && args.dt > 0.0 && args.dt <= horizon) {
        return Err(CliError::Usage(format!(
            "--dt {} invalid for horizon {horizon}",
            args.dt
        )));
    }
    let report = lin_check(
        &traj,
        &LinCheckOptions {
            samples: args.samples,
            fd_step: args.fd_step,
            window,
            t_end: horizon,
            dt: args.dt,
        },
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    emit(&report, args.out.as_deref())
}

/// Comparison config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub trajectory: TrajectorySpec,
    pub controllers: Vec<ControllerSpec>,
    pub initial: InitialCondition,
    pub dt: f64,
    pub t_end: f64,
    /// Extra origins; each controller runs once per origin.
    pub origins: Vec<[f64; 2]>,
    /// Row stride of the panel export.
    pub stride: usize,
}

const COMPARE_KEYS: [&str; 7] = [
    "trajectory",
    "controllers",
    "initial",
    "dt",
    "t_end",
    "origins",
    "stride",
];
const COMPARE_REQUIRED: [&str; 2] = ["trajectory", "controllers"];

/// Parses a comparison config, naming every offending key on failure.
pub fn parse_compare_config(value: &Value) -> Result<CompareConfig, CliError> {
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::Usage("compare config must be a JSON object".into()))?;
    let mut problems: Vec<String> = Vec::new();
    for key in obj.keys() {
        if !COMPARE_KEYS.contains(&key.as_str()) {
            problems.push(format!("{key}: unknown key"));
        }
    }
    for key in COMPARE_REQUIRED {
        if !obj.contains_key(key) {
            problems.push(format!("{key}: missing"));
        }
    }
    fn field<T: serde::de::DeserializeOwned>(
        obj: &serde_json::Map<String, Value>,
        key: &str,
        problems: &mut Vec<String>,
    ) -> Option<T> {
        let v = obj.get(key)?;
        serde_json::from_value(v.clone())
            .map_err(|e| problems.push(format!("{key}: {e}")))
            .ok()
    }
    let trajectory: Option<TrajectorySpec> = field(obj, "trajectory", &mut problems);
    let controllers: Option<Vec<ControllerSpec>> = field(obj, "controllers", &mut problems);
    let initial =
        field(obj, "initial", &mut problems).unwrap_or(InitialCondition::reference_offset());
    let dt = field(obj, "dt", &mut problems).unwrap_or(DEFAULT_DT);
    let t_end = field(obj, "t_end", &mut problems).unwrap_or(DEFAULT_T_END);
    let origins = field(obj, "origins", &mut problems).unwrap_or_default();
    let stride = field(obj, "stride", &mut problems).unwrap_or(10);
    if controllers.as_ref().is_some_and(|c| c.is_empty()) {
        problems.push("controllers: empty list".into());
    }
    if let Some(t) = &trajectory {
        if let Err(e) = t.build() {
            problems.push(format!("trajectory: {e}"));
        }
    }
    match (trajectory, controllers) {
        (Some(trajectory), Some(controllers)) if problems.is_empty() => Ok(CompareConfig {
            trajectory,
            controllers,
            initial,
            dt,
            t_end,
            origins,
            stride,
        }),
        _ => Err(CliError::Usage(format!(
            "invalid compare config:\n  {}",
            problems.join("\n  ")
        ))),
    }
}

impl CompareConfig {
    /// One run per (origin, controller), origins outermost.
    pub fn runs(&self) -> Vec<SimConfig> {
        let mut origins = vec![self.trajectory.origin()];
        for o in &self.origins {
            if !origins.contains(o) {
                origins.push(*o);
            }
        }
        origins
            .iter()
            .flat_map(|&o| {
                self.controllers.iter().map(move |&controller| SimConfig {
                    trajectory: self.trajectory.with_origin(o),
                    controller,
                    initial: self.initial,
                    dt: self.dt,
                    t_end: self.t_end,
                    seed: 0,
                })
            })
            .collect()
    }
}

fn file_tag(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let cfg = parse_compare_config(&read_json(&args.config)?)?;
    let runs = cfg.runs();
    for r in &runs {
        r.validate()?;
    }
    let table = compare_controllers(&runs)?;
    let prefix = output_prefix(&args.out);
    for (row, log) in table.rows.iter().zip(&table.logs) {
        let path = with_suffix(&prefix, &format!(".{}.csv", file_tag(&row.label)));
        let mut w = create(&path)?;
        log.write_csv(&mut w).map_err(|e| io_err(&path, e))?;
    }
    let summary = with_suffix(&prefix, ".summary.csv");
    let mut w = create(&summary)?;
    table
        .write_summary_csv(&mut w)
        .map_err(|e| io_err(&summary, e))?;
    drop(w);
    write_json(&with_suffix(&prefix, ".summary.json"), &table.rows)?;
    let panels = with_suffix(&prefix, ".panels.csv");
    let mut w = create(&panels)?;
    table
        .write_panels_csv(&mut w, cfg.stride)
        .map_err(|e| io_err(&panels, e))?;
    print_json(&table.rows);
    Ok(())
}

fn cmd_basin(args: &BasinArgs) -> Result<(), CliError> {
    let cfg = args.run.resolve(60.0)?;
    let summary = monte_carlo_basin(&cfg, args.samples, cfg.seed)?;
    emit(&summary, args.out.as_deref())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::PeCheck(a) => cmd_pe_check(a),
        Command::LinCheck(a) => cmd_lin_check(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Basin(a) => cmd_basin(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn pair_and_triple_parsing() {
        assert_eq!(parse_pair("3,-2"), Ok([3.0, -2.0]));
        assert!(parse_pair("3").is_err());
        assert!(parse_triple("1,2,x").is_err());
        assert!(parse_list("1,inf").is_err());
    }

    #[test]
    fn trajectory_flags_override_base() {
        let args = TrajArgs {
            origin: Some([3.0, 3.0]),
            a: Some(2.0),
            ..Default::default()
        };
        let spec = args.resolve(default_base()).unwrap();
        assert_eq!(spec.origin(), [3.0, 3.0]);
        assert!(matches!(spec, TrajectorySpec::Ellipse { a, b, .. } if a == 2.0 && b == 5.0));

        let line = TrajArgs {
            traj: Some(TrajKind::Line),
            a: Some(1.0),
            ..Default::default()
        };
        assert!(matches!(
            line.resolve(default_base()),
            Err(CliError::Usage(_))
        ));
        let degenerate = TrajArgs {
            a: Some(0.0),
            ..Default::default()
        };
        assert!(degenerate.resolve(default_base()).is_err());
    }

    #[test]
    fn gains_arity() {
        assert!(controller_from(ControllerKind::Spatial, Some(&[1.0])).is_err());
        assert!(controller_from(ControllerKind::Kanayama, Some(&[1.0, 2.0, 3.0])).is_ok());
        assert!(controller_from(ControllerKind::Feedforward, Some(&[1.0])).is_err());
        assert!(controller_from(ControllerKind::Spatial, Some(&[-1.0, 1.0])).is_err());
    }

    #[test]
    fn compare_config_reports_offending_keys() {
        let err = parse_compare_config(&json!({
            "trajectory": {"family": "ellipse", "a": 3.0, "b": 5.0, "h": 1.0},
            "controllers": [],
            "colour": "red",
            "dt": "fast"
        }))
        .unwrap_err();
        let msg = err.message().to_string();
        assert!(msg.contains("colour"), "{msg}");
        assert!(msg.contains("dt"), "{msg}");
        assert!(msg.contains("controllers: empty"), "{msg}");
        assert_eq!(err.code(), EXIT_USAGE);

        let err = parse_compare_config(&json!({})).unwrap_err();
        assert!(err.message().contains("trajectory: missing"));
    }

    #[test]
    fn compare_runs_expand_origins() {
        let cfg = parse_compare_config(&json!({
            "trajectory": {"family": "ellipse", "a": 3.0, "b": 5.0, "h": 1.0},
            "controllers": [{"kind": "spatial"}, {"kind": "kanayama"}],
            "origins": [[3.0, 3.0], [0.0, 0.0]]
        }))
        .unwrap();
        let runs = cfg.runs();
        assert_eq!(runs.len(), 4);
        assert_eq!(runs[2].trajectory.origin(), [3.0, 3.0]);
        assert_eq!(runs[3].controller, ControllerSpec::kanayama());
    }

    #[test]
    fn prefixes() {
        assert_eq!(
            output_prefix(Path::new("a/run.csv")),
            PathBuf::from("a/run")
        );
        assert_eq!(output_prefix(Path::new("run")), PathBuf::from("run"));
        assert_eq!(file_tag("spatial@3:3"), "spatial_3_3");
    }
}
