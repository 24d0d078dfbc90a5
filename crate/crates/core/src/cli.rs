//! Command-line experiment runner.
//!
//! Every subcommand resolves an [`ExperimentConfig`] from an optional JSON
//! document (`--config`) overridden by explicit flags, writes its outputs under
//! `--out`, and records the resolved configuration with the tool version in
//! `config.json`.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dynamics::{save_state_csv, NetworkSystem, StateVector, Trajectory};
use crate::error::Error;
use crate::estimator::{estimate, relative_error, AdjointScheme, EstimationConfig, EstimationResult, StepRule};
use crate::field::{
    error_map, field_to_state, gaussian_field, load_gridded_csv, state_to_field, synthetic_salinity, Extent,
    ScalarField,
};
use crate::graph::Graph;
use crate::observability::{compare_topologies, default_ratios, write_comparison_csv};
use crate::robustness::{energy_sweep, write_energy_csv};
use crate::VERSION;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "fieldrecon", version, about = "Scalar-field reconstruction on chain and grid robot networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a field onto the network and record the accessible outputs.
    Simulate(RunArgs),
    /// Recover the initial state from a recorded trajectory.
    Estimate(EstimateArgs),
    /// Simulate then estimate in one run.
    Pipeline(RunArgs),
    /// Gramian trace and its bounds for chain vs grid.
    Gramian(SweepArgs),
    /// First-order Laplacian energy for chain vs grid.
    Energy(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Chain,
    #[default]
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AdjointKind {
    #[default]
    Exponential,
    Rk4,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SystemArgs {
    #[arg(long, value_enum, required_unless_present = "config")]
    pub topology: Option<TopologyKind>,
    /// Chain length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Side of a square grid.
    #[arg(long)]
    pub l: Option<usize>,
    /// Nodes per grid row.
    #[arg(long)]
    pub l1: Option<usize>,
    /// Grid rows.
    #[arg(long)]
    pub l2: Option<usize>,
    /// Number of accessible nodes (nodes 1..=k).
    #[arg(long)]
    pub k: Option<usize>,
    /// Horizon in seconds.
    #[arg(long = "T", visible_alias = "horizon")]
    pub horizon: Option<f64>,
    /// Sampling rate in Hz.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Field source: gaussian, salinity, constant:VALUE or file:PATH.
    #[arg(long)]
    pub field: Option<String>,
    /// Standard deviation of Gaussian measurement noise.
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Tikhonov weight; defaults to 1e-6 * k * T.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// backtracking, bb or fixed:ALPHA.
    #[arg(long)]
    pub step_rule: Option<String>,
    #[arg(long, value_enum)]
    pub adjoint: Option<AdjointKind>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub system: SystemArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub system: SystemArgs,
    /// Trajectory CSV with header `t,y1,...,yk`.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Ground-truth field CSV; enables the error map.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Network sizes (perfect squares).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Number of evenly spaced sensor ratios.
    #[arg(long)]
    pub ratios: Option<usize>,
    #[arg(long = "T", visible_alias = "horizon")]
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianParams {
    pub center: [f64; 2],
    pub sigma: [f64; 2],
    pub amplitude: f64,
}

impl Default for GaussianParams {
    fn default() -> Self {
        Self {
            center: [0.5, 0.5],
            sigma: [0.2, 0.2],
            amplitude: 1.0,
        }
    }
}

/// Declarative description of one run. Unset sizes are filled in by
/// [`ExperimentConfig::resolve`] so the recorded copy is complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologyKind,
    pub n: Option<usize>,
    pub l1: Option<usize>,
    pub l2: Option<usize>,
    pub k: Option<usize>,
    pub horizon: f64,
    pub rate: f64,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub field: String,
    pub gaussian: GaussianParams,
    pub noise_std: f64,
    pub max_iters: usize,
    pub grad_tol: Option<f64>,
    pub step_rule: String,
    pub adjoint: AdjointKind,
    pub gramian_sizes: Vec<usize>,
    pub ratio_count: usize,
    pub energy_sizes: Vec<usize>,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: TopologyKind::Grid,
            n: None,
            l1: None,
            l2: None,
            k: None,
            horizon: 50.0,
            rate: 10.0,
            lambda: None,
            seed: 0,
            field: "gaussian".into(),
            gaussian: GaussianParams::default(),
            noise_std: 0.0,
            max_iters: 5000,
            grad_tol: None,
            step_rule: "backtracking".into(),
            adjoint: AdjointKind::Exponential,
            gramian_sizes: vec![100, 10000],
            ratio_count: 10,
            energy_sizes: vec![4, 16, 36, 64, 100, 400, 2500, 10000],
            out: PathBuf::from("out"),
        }
    }
}

/// Where a field comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Gaussian,
    Salinity,
    Constant(f64),
    File(PathBuf),
}

impl std::str::FromStr for FieldSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "gaussian" => Ok(Self::Gaussian),
            None if s == "salinity" => Ok(Self::Salinity),
            Some(("constant", v)) => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite())
                .map(Self::Constant)
                .ok_or_else(|| format!("bad constant value '{v}'")),
            Some(("file", p)) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
            _ => Err(format!(
                "unknown field '{s}'; expected gaussian, salinity, constant:VALUE or file:PATH"
            )),
        }
    }
}

fn parse_step_rule(s: &str) -> Result<StepRule<f64>, String> {
    match s.split_once(':') {
        None if s == "backtracking" => Ok(StepRule::default()),
        None if s == "bb" => Ok(StepRule::BarzilaiBorwein),
        Some(("fixed", a)) => a
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|a| *a > 0.0 && a.is_finite())
            .map(StepRule::Fixed)
            .ok_or_else(|| format!("bad fixed step '{a}'")),
        _ => Err(format!("unknown step rule '{s}'; expected backtracking, bb or fixed:ALPHA")),
    }
}

/// Largest `rows ≤ √n` dividing `n`; the field covered by a chain of `n` nodes.
pub fn chain_field_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && !n.is_multiple_of(rows) {
        rows -= 1;
    }
    (rows.max(1), n / rows.max(1))
}

impl ExperimentConfig {
    /// Reads a bare config or the `config` member of a recorded `config.json`.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        if let Some(inner) = value.get_mut("config").filter(|v| v.is_object()) {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }

    fn apply_common(&mut self, a: &CommonArgs) {
        if let Some(s) = a.seed {
            self.seed = s;
        }
        if let Some(o) = &a.out {
            self.out = o.clone();
        }
    }

    fn apply_system(&mut self, a: &SystemArgs) {
        if let Some(t) = a.topology {
            self.topology = t;
        }
        if a.n.is_some() {
            self.n = a.n;
        }
        if let Some(l) = a.l {
            self.l1 = Some(l);
            self.l2 = Some(l);
        }
        if a.l1.is_some() {
            self.l1 = a.l1;
        }
        if a.l2.is_some() {
            self.l2 = a.l2;
        }
        if a.k.is_some() {
            self.k = a.k;
        }
        if let Some(v) = a.horizon {
            self.horizon = v;
        }
        if let Some(v) = a.rate {
            self.rate = v;
        }
        if let Some(v) = &a.field {
            self.field = v.clone();
        }
        if let Some(v) = a.noise_std {
            self.noise_std = v;
        }
        if a.lambda.is_some() {
            self.lambda = a.lambda;
        }
        if let Some(v) = a.max_iters {
            self.max_iters = v;
        }
        if a.grad_tol.is_some() {
            self.grad_tol = a.grad_tol;
        }
        if let Some(v) = &a.step_rule {
            self.step_rule = v.clone();
        }
        if let Some(v) = a.adjoint {
            self.adjoint = v;
        }
    }

    /// Checks every field and fills in sizes, `k` and `lambda`.
    pub fn resolve(&mut self) -> Result<(), Failure> {
        match self.topology {
            TopologyKind::Chain => {
                let n = match (self.n, self.l1, self.l2) {
                    (Some(n), _, _) => n,
                    (None, Some(a), Some(b)) => a * b,
                    _ => return Err(Failure::config("chain topology needs --n")),
                };
                self.n = Some(n);
                self.l1 = None;
                self.l2 = None;
            }
            TopologyKind::Grid => {
                let (l1, l2) = match (self.l1, self.l2, self.n) {
                    (Some(a), Some(b), _) => (a, b),
                    (Some(a), None, _) | (None, Some(a), _) => (a, a),
                    (None, None, Some(n)) => {
                        let l = (n as f64).sqrt().round() as usize;
                        if l * l != n {
                            return Err(Failure::config(format!(
                                "grid needs --l or --l1/--l2; --n {n} is not a perfect square"
                            )));
                        }
                        (l, l)
                    }
                    _ => return Err(Failure::config("grid topology needs --l or --l1 and --l2")),
                };
                self.l1 = Some(l1);
                self.l2 = Some(l2);
                self.n = Some(l1 * l2);
            }
        }
        let n = self.n.expect("resolved above");
        let k = self
            .k
            .unwrap_or_else(|| ((0.3 * n as f64).round() as usize).clamp(1, n));
        if k == 0 || k > n {
            return Err(Failure::config(format!("--k must be in 1..={n}, got {k}")));
        }
        self.k = Some(k);
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Failure::config(format!("--T must be positive, got {}", self.horizon)));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Failure::config(format!("--rate must be positive, got {}", self.rate)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Failure::config(format!("--noise-std must be non-negative, got {}", self.noise_std)));
        }
        let lambda = self
            .lambda
            .unwrap_or_else(|| EstimationConfig::<f64>::default_lambda(k, self.horizon));
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Failure::config(format!("--lambda must be non-negative, got {lambda}")));
        }
        self.lambda = Some(lambda);
        if self.max_iters == 0 {
            return Err(Failure::config("--max-iters must be positive"));
        }
        if let Some(t) = self.grad_tol {
            if !(t > 0.0) {
                return Err(Failure::config(format!("--grad-tol must be positive, got {t}")));
            }
        }
        self.field_spec()?;
        parse_step_rule(&self.step_rule).map_err(Failure::config)?;
        Ok(())
    }

    pub fn field_spec(&self) -> Result<FieldSpec, Failure> {
        self.field.parse().map_err(Failure::config)
    }

    pub fn graph(&self) -> Result<Graph, Failure> {
        let g = match self.topology {
            TopologyKind::Chain => Graph::chain(self.n.unwrap_or(0)),
            TopologyKind::Grid => Graph::grid(self.l1.unwrap_or(0), self.l2.unwrap_or(0)),
        };
        g.map_err(Failure::from)
    }

    /// Field rows and columns the graph covers.
    pub fn field_shape(&self) -> (usize, usize) {
        match self.topology {
            TopologyKind::Chain => chain_field_shape(self.n.unwrap_or(0)),
            TopologyKind::Grid => (self.l2.unwrap_or(0), self.l1.unwrap_or(0)),
        }
    }

    pub fn estimation_config(&self) -> Result<EstimationConfig<f64>, Failure> {
        let mut cfg = EstimationConfig::new(self.lambda.unwrap_or(0.0))
            .with_max_iters(self.max_iters)
            .with_step_rule(parse_step_rule(&self.step_rule).map_err(Failure::config)?)
            .with_adjoint(match self.adjoint {
                AdjointKind::Exponential => AdjointScheme::Exponential,
                AdjointKind::Rk4 => AdjointScheme::Rk4,
            });
        if let Some(t) = self.grad_tol {
            cfg = cfg.with_grad_tol(t);
        }
        Ok(cfg)
    }

    pub fn build_field(&self) -> Result<ScalarField<f64>, Failure> {
        let (rows, cols) = self.field_shape();
        let field = match self.field_spec()? {
            FieldSpec::Gaussian => {
                let g = &self.gaussian;
                gaussian_field(
                    rows,
                    cols,
                    (g.center[0], g.center[1]),
                    (g.sigma[0], g.sigma[1]),
                    g.amplitude,
                    Extent::unit(),
                )
            }
            FieldSpec::Salinity => synthetic_salinity(rows, cols),
            FieldSpec::Constant(c) => ScalarField::constant(rows, cols, c),
            FieldSpec::File(path) => {
                let loaded = load_gridded_csv(&path).map_err(Failure::data)?;
                if loaded.fill_count > 0 {
                    println!("filled {} missing cells in {}", loaded.fill_count, path.display());
                }
                return Ok(loaded.field);
            }
        };
        field.map_err(|e| match e {
            Error::InvalidSize(_) => Failure::config(format!("cannot lay a field over this network: {e}")),
            other => Failure::from(other),
        })
    }
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(e: Error) -> Self {
        Self {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidSize(_) | Error::InvalidParameter(_) | Error::InvalidTime(_) | Error::InvalidGraph(_) => {
                EXIT_CONFIG
            }
            Error::Shape(_)
            | Error::Format { .. }
            | Error::EmptyData(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => EXIT_DATA,
            Error::NotSymmetric(_)
            | Error::InvalidSpectrum(_)
            | Error::Disconnected { .. }
            | Error::Unstable { .. }
            | Error::StepSize(_)
            | Error::HorizonTooShort { .. }
            | Error::NoConvergence(_) => EXIT_NUMERICAL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Serialize)]
struct Provenance<'a> {
    version: &'a str,
    command: &'a str,
    config: &'a ExperimentConfig,
}

fn base_config(common: &CommonArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_common(common);
    Ok(cfg)
}

fn prepare_out(cfg: &ExperimentConfig, command: &str) -> CliResult<String> {
    fs::create_dir_all(&cfg.out).map_err(|e| Failure::data(Error::io(&cfg.out, e)))?;
    let doc = Provenance {
        version: VERSION,
        command,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| Failure::from(Error::from(e)))?;
    let path = cfg.out.join("config.json");
    fs::write(&path, format!("{json}\n")).map_err(|e| Failure::data(Error::io(&path, e)))?;
    Ok(json)
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::data(Error::io(path, e)))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> CliResult {
    w.flush().map_err(|e| Failure::data(Error::io(path, e)))
}

struct Simulated {
    graph: Graph,
    field: ScalarField<f64>,
    x0: StateVector<f64>,
    trajectory: Trajectory<f64>,
}

fn run_simulation(cfg: &ExperimentConfig) -> CliResult<Simulated> {
    let graph = cfg.graph()?;
    let field = cfg.build_field()?;
    let x0 = field_to_state(&field, &graph).map_err(|e| match e {
        Error::Shape(m) => Failure::config(m),
        other => Failure::from(other),
    })?;
    let sys = NetworkSystem::with_prefix(&graph, cfg.k.unwrap_or(1))?;
    let mut trajectory = sys.simulate(&x0, cfg.horizon, cfg.rate)?;
    if cfg.noise_std > 0.0 {
        trajectory.add_measurement_noise(cfg.noise_std, cfg.seed);
    }
    Ok(Simulated {
        graph,
        field,
        x0,
        trajectory,
    })
}

fn write_simulation(cfg: &ExperimentConfig, sim: &Simulated) -> CliResult {
    let x0_path = cfg.out.join("x0.csv");
    save_state_csv(&sim.x0, &x0_path)?;
    sim.trajectory.save_csv(cfg.out.join("trajectory.csv"))?;
    sim.field.save_csv(cfg.out.join("field.csv"))?;
    Ok(())
}

fn run_estimation(
    cfg: &ExperimentConfig,
    graph: &Graph,
    trajectory: &Trajectory<f64>,
    truth: Option<&ScalarField<f64>>,
) -> CliResult {
    let sys = NetworkSystem::with_prefix(graph, cfg.k.unwrap_or(1))?;
    if trajectory.width() != sys.k() {
        return Err(Failure::data(Error::Shape(format!(
            "trajectory has {} output columns, the system declares k = {}",
            trajectory.width(),
            sys.k()
        ))));
    }
    let result: EstimationResult<f64> = estimate(&sys, trajectory, &cfg.estimation_config()?)?;
    let json = result.to_json()?;
    let path = cfg.out.join("result.json");
    fs::write(&path, format!("{json}\n")).map_err(|e| Failure::data(Error::io(&path, e)))?;
    save_state_csv(&result.x0_hat, cfg.out.join("x0_hat.csv"))?;

    println!(
        "iterations {} converged {} objective {:.6e}",
        result.iterations,
        result.converged,
        result.final_objective()
    );
    if let Some(actual) = truth {
        let truth_state = field_to_state(actual, graph)?;
        let map = error_map(actual, &result.x0_hat, graph)?;
        map.field.save_csv(cfg.out.join("error_map.csv"))?;
        state_to_field(&result.x0_hat, graph, actual)?.save_csv(cfg.out.join("estimated_field.csv"))?;
        println!(
            "relative_l2_error {:.6e} max_abs_error {:.6e}",
            relative_error(&result.x0_hat, &truth_state),
            map.summary.max_abs
        );
    }
    Ok(())
}

fn cmd_simulate(args: &RunArgs) -> CliResult {
    let mut cfg = base_config(&args.common)?;
    cfg.apply_system(&args.system);
    cfg.resolve()?;
    let sim = run_simulation(&cfg)?;
    let json = prepare_out(&cfg, "simulate")?;
    write_simulation(&cfg, &sim)?;
    println!("{json}");
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult {
    let mut cfg = base_config(&args.common)?;
    cfg.apply_system(&args.system);
    cfg.resolve()?;
    let graph = cfg.graph()?;
    let trajectory = Trajectory::load_csv(&args.trajectory)?;
    let truth = match &args.truth {
        Some(p) => Some(load_gridded_csv::<f64>(p)?.field),
        None => None,
    };
    prepare_out(&cfg, "estimate")?;
    run_estimation(&cfg, &graph, &trajectory, truth.as_ref())
}

fn cmd_pipeline(args: &RunArgs) -> CliResult {
    let mut cfg = base_config(&args.common)?;
    cfg.apply_system(&args.system);
    cfg.resolve()?;
    let sim = run_simulation(&cfg)?;
    prepare_out(&cfg, "pipeline")?;
    write_simulation(&cfg, &sim)?;
    run_estimation(&cfg, &sim.graph, &sim.trajectory, Some(&sim.field))
}

fn sweep_config(args: &SweepArgs, energy: bool) -> CliResult<ExperimentConfig> {
    let mut cfg = base_config(&args.common)?;
    if let Some(s) = &args.sizes {
        if energy {
            cfg.energy_sizes = s.clone();
        } else {
            cfg.gramian_sizes = s.clone();
        }
    }
    if let Some(r) = args.ratios {
        cfg.ratio_count = r;
    }
    if let Some(t) = args.horizon {
        cfg.horizon = t;
    }
    let sizes = if energy { &cfg.energy_sizes } else { &cfg.gramian_sizes };
    if sizes.is_empty() {
        return Err(Failure::config("--sizes must list at least one size"));
    }
    if !energy && cfg.ratio_count == 0 {
        return Err(Failure::config("--ratios must be positive"));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(Failure::config(format!("--T must be positive, got {}", cfg.horizon)));
    }
    Ok(cfg)
}

fn cmd_gramian(args: &SweepArgs) -> CliResult {
    let cfg = sweep_config(args, false)?;
    let ratios = default_ratios::<f64>(cfg.ratio_count);
    let mut rows = Vec::new();
    for &n in &cfg.gramian_sizes {
        rows.extend(compare_topologies(n, &ratios, cfg.horizon)?);
    }
    prepare_out(&cfg, "gramian")?;
    let path = cfg.out.join("gramian.csv");
    let mut w = create(&path)?;
    write_comparison_csv(&rows, &mut w, true)?;
    finish(w, &path)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_energy(args: &SweepArgs) -> CliResult {
    let cfg = sweep_config(args, true)?;
    let sweep = energy_sweep::<f64>(&cfg.energy_sizes)?;
    prepare_out(&cfg, "energy")?;
    let path = cfg.out.join("energy.csv");
    let mut w = create(&path)?;
    write_energy_csv(&sweep, &mut w)?;
    finish(w, &path)?;
    for (c, g) in &sweep {
        println!("n {:>6}  chain {:.6e}  grid {:.6e}", c.n, c.energy, g.energy);
    }
    Ok(())
}

/// Runs a parsed command.
pub fn execute(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Gramian(a) => cmd_gramian(a),
        Command::Energy(a) => cmd_energy(a),
    }
}

/// Parses `args` and runs; clap prints usage and exits on bad flags.
pub fn run<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(&cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_specs() {
        assert_eq!("gaussian".parse::<FieldSpec>(), Ok(FieldSpec::Gaussian));
        assert_eq!("salinity".parse::<FieldSpec>(), Ok(FieldSpec::Salinity));
        assert_eq!("constant:1.5".parse::<FieldSpec>(), Ok(FieldSpec::Constant(1.5)));
        assert_eq!("file:a.csv".parse::<FieldSpec>(), Ok(FieldSpec::File("a.csv".into())));
        assert!("constant:x".parse::<FieldSpec>().is_err());
        assert!("file:".parse::<FieldSpec>().is_err());
        assert!("plasma".parse::<FieldSpec>().is_err());
    }

    #[test]
    fn step_rules() {
        assert_eq!(parse_step_rule("backtracking"), Ok(StepRule::default()));
        assert_eq!(parse_step_rule("bb"), Ok(StepRule::BarzilaiBorwein));
        assert_eq!(parse_step_rule("fixed:0.1"), Ok(StepRule::Fixed(0.1)));
        assert!(parse_step_rule("fixed:-1").is_err());
        assert!(parse_step_rule("newton").is_err());
    }

    #[test]
    fn chain_shapes() {
        assert_eq!(chain_field_shape(100), (10, 10));
        assert_eq!(chain_field_shape(4), (2, 2));
        assert_eq!(chain_field_shape(12), (3, 4));
        assert_eq!(chain_field_shape(7), (1, 7));
    }

    #[test]
    fn resolve_fills_defaults() {
        let mut cfg = ExperimentConfig {
            l1: Some(10),
            l2: Some(10),
            ..Default::default()
        };
        cfg.resolve().unwrap();
        assert_eq!(cfg.n, Some(100));
        assert_eq!(cfg.k, Some(30));
        assert!((cfg.lambda.unwrap() - 1e-6 * 30.0 * 50.0).abs() < 1e-18);

        let mut chain = ExperimentConfig {
            topology: TopologyKind::Chain,
            ..Default::default()
        };
        assert_eq!(chain.resolve().unwrap_err().code, EXIT_CONFIG);
        chain.n = Some(4);
        chain.k = Some(5);
        assert_eq!(chain.resolve().unwrap_err().code, EXIT_CONFIG);
    }

    #[test]
    fn config_roundtrip_and_wrapper() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig {
            topology: TopologyKind::Chain,
            n: Some(9),
            ..Default::default()
        };
        cfg.resolve().unwrap();
        let bare = dir.path().join("bare.json");
        fs::write(&bare, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(ExperimentConfig::load(&bare).unwrap(), cfg);
        let wrapped = dir.path().join("wrapped.json");
        let doc = Provenance {
            version: VERSION,
            command: "simulate",
            config: &cfg,
        };
        fs::write(&wrapped, serde_json::to_string(&doc).unwrap()).unwrap();
        assert_eq!(ExperimentConfig::load(&wrapped).unwrap(), cfg);
        let bad = dir.path().join("bad.json");
        fs::write(&bad, r#"{"topolgy": "chain"}"#).unwrap();
        assert_eq!(ExperimentConfig::load(&bad).unwrap_err().code, EXIT_CONFIG);
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::from(Error::InvalidSize("x".into())).code, EXIT_CONFIG);
        assert_eq!(Failure::from(Error::Shape("x".into())).code, EXIT_DATA);
        assert_eq!(Failure::from(Error::StepSize(10)).code, EXIT_NUMERICAL);
    }
}
