//! Config-driven experiment runner behind the `plap` binary: parses the
//! versioned JSON config, builds the mesh and datum, dispatches to the
//! module operations and writes CSV/JSON artifacts plus a hashed manifest.
//!
//! Exit contract: 0 success, 1 config error, 2 numerical failure or
//! certificate breach.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::entropy::{self, ApproximationSchedule};
use crate::error::PlapError;
use crate::fields::{self, DiscreteFunction};
use crate::geometry::Mesh;
use crate::picone::{self, PiconeMode};
use crate::solver::{self, BcMode, SolverConfig};
use crate::Result;

pub const CONFIG_SCHEMA: &str = "plap-config/1";

#[derive(Parser, Debug)]
#[command(name = "plap", about = "p-Laplace entropy-solution laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the weak problem and write the solution
    Solve(CommonArgs),
    /// Run the truncate-and-limit pipeline with all certificates
    Entropy(CommonArgs),
    /// Distribution, weak-Lebesgue and layer-cake estimates of a solve
    Estimates(CommonArgs),
    /// Picone identity and comparison-principle checks
    Picone(CommonArgs),
    /// Uniqueness cross-check of two schedules
    Compare(CommonArgs),
    /// Mesh-refinement study against the closed-form 1D solution
    Convergence(CommonArgs),
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// JSON config path (schema plap-config/1)
    #[arg(long)]
    pub config: PathBuf,
    /// output directory (overrides the config's out_dir)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed for randomized sweeps (overrides the config's seed)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MeshSpec {
    Interval { n_cells: usize, length: f64 },
    FlatTorus { nx: usize, ny: usize, lx: f64, ly: f64 },
    Icosphere { subdivisions: u32, radius: f64 },
    File { path: String },
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        match self {
            MeshSpec::Interval { n_cells, length } => Mesh::interval(*n_cells, *length),
            MeshSpec::FlatTorus { nx, ny, lx, ly } => Mesh::flat_torus(*nx, *ny, *lx, *ly),
            MeshSpec::Icosphere { subdivisions, radius } => {
                Mesh::icosphere(*subdivisions, *radius)
            }
            MeshSpec::File { path } => Mesh::load(path),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub epsilon: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub bc_mode: String,
    pub line_search_shrink: f64,
    pub line_search_decrease: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            epsilon: 0.0,
            grad_tol: 1e-8,
            max_iter: 200,
            bc_mode: "dirichlet_zero".into(),
            line_search_shrink: 0.5,
            line_search_decrease: 1e-4,
        }
    }
}

impl SolverSettings {
    pub fn to_config(&self, p: f64) -> Result<SolverConfig> {
        let bc = match self.bc_mode.as_str() {
            "dirichlet_zero" => BcMode::DirichletZero,
            "zero_mean" => BcMode::ZeroMean,
            other => {
                return Err(PlapError::Config(format!(
                    "bc_mode must be dirichlet_zero or zero_mean, got {other:?}"
                )))
            }
        };
        Ok(SolverConfig {
            p,
            epsilon: self.epsilon,
            grad_tol: self.grad_tol,
            max_iter: self.max_iter,
            bc_mode: bc,
            line_search_shrink: self.line_search_shrink,
            line_search_decrease: self.line_search_decrease,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiconeSettings {
    #[serde(default = "default_picone_mode")]
    pub mode: String,
    #[serde(default = "default_picone_samples")]
    pub samples: usize,
}

fn default_picone_mode() -> String {
    "chain_rule".into()
}

fn default_picone_samples() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceSettings {
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema: String,
    pub mesh: MeshSpec,
    /// "constant:<c>" | "spike:center" | "spike:<vertex>" | "sin:<freq>" | "file:<path>"
    pub data: String,
    pub p: f64,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub schedule: Option<ApproximationSchedule>,
    #[serde(default)]
    pub schedule_b: Option<ApproximationSchedule>,
    #[serde(default)]
    pub k_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub picone: Option<PiconeSettings>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSettings>,
    #[serde(default)]
    pub certificate_bound: Option<f64>,
    #[serde(default)]
    pub l1_gap_bound: Option<f64>,
    #[serde(default)]
    pub min_order: Option<f64>,
    /// Log-window fractions for the solution tail fit, as `[lo, hi]`.
    #[serde(default)]
    pub fit_window: Option<[f64; 2]>,
    /// Log-window fractions for the gradient tail fit, as `[lo, hi]`.
    #[serde(default)]
    pub grad_fit_window: Option<[f64; 2]>,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| PlapError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| PlapError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(PlapError::Config(format!(
                "unsupported schema {:?}, expected {CONFIG_SCHEMA:?}",
                self.schema
            )));
        }
        if !(self.p > 1.0) {
            return Err(PlapError::Config("p must exceed 1".into()));
        }
        if let Some(s) = &self.schedule {
            s.validate().map_err(|e| PlapError::Config(format!("schedule: {e}")))?;
        }
        if let Some(s) = &self.schedule_b {
            s.validate().map_err(|e| PlapError::Config(format!("schedule_b: {e}")))?;
        }
        for w in [self.fit_window, self.grad_fit_window].into_iter().flatten() {
            if !(0.0 <= w[0] && w[0] < w[1] && w[1] <= 1.0) {
                return Err(PlapError::Config(format!(
                    "fit window [{}, {}] must satisfy 0 <= lo < hi <= 1",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    fn u_window(&self) -> (f64, f64) {
        self.fit_window.map_or(entropy::DEFAULT_FIT_WINDOW, |w| (w[0], w[1]))
    }

    fn g_window(&self) -> (f64, f64) {
        self.grad_fit_window.map_or(entropy::DEFAULT_FIT_WINDOW, |w| (w[0], w[1]))
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        self.solver.to_config(self.p)
    }
}

/// Builds the named datum on the mesh. Spikes are mean-corrected under the
/// zero_mean gauge so closed-manifold runs stay compatible.
pub fn build_datum(mesh: &Mesh, spec: &str, bc: BcMode) -> Result<DiscreteFunction> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| PlapError::Config(format!("data spec {spec:?} missing ':'")))?;
    match kind {
        "constant" => {
            let c: f64 = arg
                .parse()
                .map_err(|_| PlapError::Config(format!("bad constant value {arg:?}")))?;
            Ok(DiscreteFunction::constant(mesh, c))
        }
        "sin" => {
            let freq: f64 = arg
                .parse()
                .map_err(|_| PlapError::Config(format!("bad sin frequency {arg:?}")))?;
            let two_pi = 2.0 * std::f64::consts::PI;
            Ok(DiscreteFunction::from_fn(mesh, |pt| {
                if mesh.dimension() == 1 {
                    (two_pi * freq * pt[0]).sin()
                } else {
                    (two_pi * freq * pt[0]).sin() * (two_pi * freq * pt[1]).cos()
                }
            }))
        }
        "spike" => {
            let vertex = if arg == "center" {
                center_vertex(mesh)
            } else {
                arg.parse::<usize>()
                    .map_err(|_| PlapError::Config(format!("bad spike vertex {arg:?}")))?
            };
            entropy::spike_datum(mesh, vertex, bc == BcMode::ZeroMean)
        }
        "file" => {
            let text = fs::read_to_string(arg)
                .map_err(|e| PlapError::Config(format!("cannot read datum {arg:?}: {e}")))?;
            parse_nodal_csv(mesh, &text)
        }
        other => Err(PlapError::Config(format!("unknown data kind {other:?}"))),
    }
}

/// Vertex nearest the coordinate centroid; the default spike location.
pub fn center_vertex(mesh: &Mesh) -> usize {
    let n = mesh.n_vertices();
    let mut c = [0.0; 3];
    for i in 0..n {
        let v = mesh.vertex(i);
        for d in 0..3 {
            c[d] += v[d] / n as f64;
        }
    }
    (0..n)
        .min_by(|&a, &b| {
            let da = dist2(mesh.vertex(a), c);
            let db = dist2(mesh.vertex(b), c);
            da.partial_cmp(&db).unwrap()
        })
        .expect("nonempty mesh")
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|d| (a[d] - b[d]) * (a[d] - b[d])).sum()
}

fn parse_nodal_csv(mesh: &Mesh, text: &str) -> Result<DiscreteFunction> {
    let mut vals = vec![0.0; mesh.n_vertices()];
    let mut seen = 0usize;
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 && line.trim() == "node_index,value" {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (i, v) = line
            .split_once(',')
            .ok_or_else(|| PlapError::Config(format!("datum line {} not index,value", ln + 1)))?;
        let i: usize = i
            .trim()
            .parse()
            .map_err(|_| PlapError::Config(format!("bad node index on line {}", ln + 1)))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| PlapError::Config(format!("bad value on line {}", ln + 1)))?;
        if i >= vals.len() {
            return Err(PlapError::Config(format!("node index {i} out of range")));
        }
        vals[i] = v;
        seen += 1;
    }
    if seen != vals.len() {
        return Err(PlapError::Config(format!(
            "datum has {seen} values for {} vertices",
            vals.len()
        )));
    }
    DiscreteFunction::new(mesh, vals)
}

/// Output directory that records a SHA-256 hash of every artifact it writes.
pub struct RunDir {
    dir: PathBuf,
    artifacts: Vec<(String, String)>,
}

impl RunDir {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(RunDir { dir, artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        let mut h = Sha256::new();
        h.update(contents.as_bytes());
        let digest = h.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.artifacts.push((name.to_string(), hex));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    fn finish(&mut self, command: &str, config: &RunConfig, seed: u64) -> Result<()> {
        #[derive(Serialize)]
        struct ArtifactEntry<'a> {
            file: &'a str,
            sha256: &'a str,
        }
        #[derive(Serialize)]
        struct Manifest<'a> {
            schema: &'a str,
            command: &'a str,
            seed: u64,
            config: &'a RunConfig,
            artifacts: Vec<ArtifactEntry<'a>>,
        }
        let manifest = Manifest {
            schema: "plap-manifest/1",
            command,
            seed,
            config,
            artifacts: self
                .artifacts
                .iter()
                .map(|(f, h)| ArtifactEntry { file: f, sha256: h })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        fs::write(self.dir.join("manifest.json"), s)?;
        Ok(())
    }
}

/// Entry point used by the binary: returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (name, args) = match &cli.command {
        Command::Solve(a) => ("solve", a),
        Command::Entropy(a) => ("entropy", a),
        Command::Estimates(a) => ("estimates", a),
        Command::Picone(a) => ("picone", a),
        Command::Compare(a) => ("compare", a),
        Command::Convergence(a) => ("convergence", a),
    };
    match execute(name, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("plap {name}: {e}");
            match e {
                PlapError::Config(_)
                | PlapError::InvalidArgument(_)
                | PlapError::Json(_)
                | PlapError::MeshParse { .. } => 1,
                _ => 2,
            }
        }
    }
}

fn execute(name: &str, args: &CommonArgs) -> Result<i32> {
    let config = RunConfig::load(&args.config)?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut run_dir = RunDir::new(out_dir)?;
    let code = match name {
        "solve" => cmd_solve(&config, &mut run_dir)?,
        "entropy" => cmd_entropy(&config, &mut run_dir)?,
        "estimates" => cmd_estimates(&config, &mut run_dir)?,
        "picone" => cmd_picone(&config, &mut run_dir, seed)?,
        "compare" => cmd_compare(&config, &mut run_dir)?,
        "convergence" => cmd_convergence(&config, &mut run_dir)?,
        _ => unreachable!(),
    };
    run_dir.finish(name, &config, seed)?;
    Ok(code)
}

fn setup(config: &RunConfig) -> Result<(Mesh, DiscreteFunction, SolverConfig)> {
    let mesh = config.mesh.build()?;
    let solver_cfg = config.solver_config()?;
    solver_cfg
        .validate(&mesh)
        .map_err(|e| PlapError::Config(e.to_string()))?;
    let f = build_datum(&mesh, &config.data, solver_cfg.bc_mode)?;
    Ok((mesh, f, solver_cfg))
}

#[derive(Serialize)]
struct OutcomeJson {
    converged: bool,
    iterations: usize,
    final_residual: f64,
    energy_trace: Vec<f64>,
}

pub fn cmd_solve(config: &RunConfig, out: &mut RunDir) -> Result<i32> {
    let (mesh, f, solver_cfg) = setup(config)?;
    let outcome = solver::solve_weak(&mesh, &f, &solver_cfg)?;
    out.write("solution.csv", &outcome.solution.to_csv())?;
    out.write_json(
        "outcome.json",
        &OutcomeJson {
            converged: outcome.converged,
            iterations: outcome.iterations,
            final_residual: outcome.final_residual,
            energy_trace: outcome.energy_trace.clone(),
        },
    )?;
    Ok(if outcome.converged { 0 } else { 2 })
}

pub fn cmd_entropy(config: &RunConfig, out: &mut RunDir) -> Result<i32> {
    let (mesh, f, solver_cfg) = setup(config)?;
    let schedule = config
        .schedule
        .as_ref()
        .ok_or_else(|| PlapError::Config("missing key: schedule".into()))?;
    let report = entropy::run_approximation_with_windows(
        &mesh,
        &f,
        schedule,
        &solver_cfg,
        config.u_window(),
        config.g_window(),
    )?;
    out.write("solution.csv", &report.final_solution().to_csv())?;
    out.write("apriori.csv", &report.apriori_csv())?;
    out.write("residuals.csv", &report.residuals_csv())?;
    out.write("truncation.csv", &report.truncation_csv())?;
    out.write("cauchy.csv", &report.cauchy_csv())?;
    out.write_json("report.json", &report)?;

    let ratios_ok = report.stages.iter().all(|s| s.apriori_max_ratio <= 1.05);
    let bound = config
        .certificate_bound
        .unwrap_or_else(|| default_certificate_bound(&mesh, &f, report.final_solution(), &solver_cfg));
    let cert_ok = report
        .stages
        .last()
        .map(|s| s.certificate_max <= bound)
        .unwrap_or(false);
    let all_converged = report.stages.iter().all(|s| s.converged);
    Ok(if ratios_ok && cert_ok && all_converged { 0 } else { 2 })
}

fn default_certificate_bound(
    mesh: &Mesh,
    f: &DiscreteFunction,
    u: &DiscreteFunction,
    cfg: &SolverConfig,
) -> f64 {
    let bank = entropy::default_test_bank(mesh, u);
    let grid = entropy::certificate_k_grid(u, &bank);
    let kmax = grid.iter().fold(0.0_f64, |m, &k| m.max(k));
    let phimax = bank.iter().map(|(_, p)| p.max_abs()).fold(0.0, f64::max);
    let f_l1 = fields::integral_abs_pow(mesh, f, 1.0).unwrap_or(0.0);
    50.0 * cfg.grad_tol * (kmax + phimax) * f_l1.max(f64::MIN_POSITIVE)
}

#[derive(Serialize)]
struct EstimatesJson {
    apriori_max_ratio: f64,
    layer_cake_lhs: f64,
    layer_cake_rhs: f64,
    marcinkiewicz: Vec<(f64, f64)>,
    u_tail_fit: entropy::TailFit,
    grad_tail_fit: entropy::TailFit,
}

pub fn cmd_estimates(config: &RunConfig, out: &mut RunDir) -> Result<i32> {
    let (mesh, f, solver_cfg) = setup(config)?;
    let outcome = solver::solve_weak(&mesh, &f, &solver_cfg)?;
    if !outcome.converged {
        return Ok(2);
    }
    let u = &outcome.solution;
    out.write("solution.csv", &u.to_csv())?;

    let thresholds = fields::log_spaced_thresholds(u, 64);
    let curve = fields::distribution_function(&mesh, u, &thresholds)?;
    out.write("distribution.csv", &curve.to_csv())?;

    let g = fields::gradient(&mesh, u)?;
    let mags = g.magnitudes();
    let gmax = mags.iter().fold(0.0_f64, |m, &v| m.max(v));
    // log grid over the gradient range for the gradient curve
    let glo = mags.iter().filter(|&&v| v > 0.0).fold(f64::INFINITY, |m, &v| m.min(v));
    let gthr: Vec<f64> = if glo.is_finite() && glo < gmax {
        let (a, b) = ((glo.max(gmax * 1e-6)).ln(), gmax.ln());
        (0..64).map(|i| (a + (b - a) * i as f64 / 63.0).exp()).collect()
    } else {
        vec![gmax.max(1.0)]
    };
    let gcurve = entropy::gradient_distribution(&mesh, &mags, &gthr)?;
    out.write("grad_distribution.csv", &gcurve.to_csv())?;

    let k_grid = config.k_grid.clone().unwrap_or_else(|| entropy::default_k_grid(u));
    let apriori = entropy::apriori_estimate_check(&mesh, u, &f, &k_grid, config.p)?;
    let (lhs, rhs) = fields::layer_cake_check(&mesh, u, config.p, 10_000)?;
    let marcin: Vec<(f64, f64)> = [1.0, 1.5, 2.0, 3.0]
        .iter()
        .map(|&q| Ok((q, fields::marcinkiewicz_norm(&curve, q)?)))
        .collect::<Result<_>>()?;
    let u_fit = entropy::u_decay_check(&mesh, u, config.p, config.u_window())?;
    let g_fit = entropy::grad_decay_check(&mesh, u, config.p, config.g_window())?;

    out.write_json(
        "estimates.json",
        &EstimatesJson {
            apriori_max_ratio: apriori,
            layer_cake_lhs: lhs,
            layer_cake_rhs: rhs,
            marcinkiewicz: marcin,
            u_tail_fit: u_fit,
            grad_tail_fit: g_fit,
        },
    )?;
    Ok(if apriori <= 1.05 { 0 } else { 2 })
}

#[derive(Serialize)]
struct PiconeJson {
    samples: usize,
    min_l: f64,
    max_identity_gap: f64,
    invalid_identity_cells: usize,
    comparison_violations: usize,
    comparison_worst_gap: f64,
}

pub fn cmd_picone(config: &RunConfig, out: &mut RunDir, seed: u64) -> Result<i32> {
    let (mesh, _f, solver_cfg) = setup(config)?;
    let settings = config.picone.clone().unwrap_or(PiconeSettings {
        mode: default_picone_mode(),
        samples: default_picone_samples(),
    });
    let mode = match settings.mode.as_str() {
        "chain_rule" => PiconeMode::ChainRule,
        "interpolated" => PiconeMode::Interpolated,
        other => return Err(PlapError::Config(format!("unknown picone mode {other:?}"))),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mesh.n_vertices();
    let mut min_l = f64::INFINITY;
    let mut max_gap = 0.0_f64;
    let mut invalid_cells = 0usize;
    let mut last_field = None;
    for _ in 0..settings.samples {
        let u = DiscreteFunction::new(&mesh, (0..n).map(|_| rng.gen_range(0.0..2.0)).collect())?;
        let v =
            DiscreteFunction::new(&mesh, (0..n).map(|_| rng.gen_range(0.5..2.5)).collect())?;
        let field = picone::picone_pointwise(&mesh, &u, &v, config.p, mode)?;
        min_l = min_l.min(field.min_l());
        let max_l = field.l_values.iter().fold(0.0_f64, |m, &l| m.max(l.abs()));
        let gap = field.max_identity_gap();
        max_gap = max_gap.max(gap);
        if mode == PiconeMode::ChainRule && gap > 1e-10 * (1.0 + max_l) {
            invalid_cells += 1;
        }
        last_field = Some(field);
    }
    if let Some(field) = &last_field {
        out.write("picone.csv", &field.to_csv())?;
    }

    // comparison harness on a Dirichlet mesh when possible
    let (violations, worst) = if !mesh.boundary_nodes().is_empty() && config.p > 1.5 {
        let h = DiscreteFunction::constant(&mesh, 1.0);
        let q = (config.p - 1.0) / 2.0;
        let rep = picone::comparison_check(&mesh, &h, 1.0, q, 0.5, &solver_cfg)?;
        (rep.violations, rep.worst_gap)
    } else {
        (0, 0.0)
    };

    out.write_json(
        "picone.json",
        &PiconeJson {
            samples: settings.samples,
            min_l,
            max_identity_gap: max_gap,
            invalid_identity_cells: invalid_cells,
            comparison_violations: violations,
            comparison_worst_gap: worst,
        },
    )?;
    let ok = min_l >= -1e-12 && invalid_cells == 0 && violations == 0;
    Ok(if ok { 0 } else { 2 })
}

pub fn cmd_compare(config: &RunConfig, out: &mut RunDir) -> Result<i32> {
    let (mesh, f, solver_cfg) = setup(config)?;
    let a = config
        .schedule
        .as_ref()
        .ok_or_else(|| PlapError::Config("missing key: schedule".into()))?;
    let b = config
        .schedule_b
        .as_ref()
        .ok_or_else(|| PlapError::Config("missing key: schedule_b".into()))?;
    let (report, ra, rb) = entropy::uniqueness_crosscheck(&mesh, &f, a, b, &solver_cfg)?;
    out.write("solution_a.csv", &ra.final_solution().to_csv())?;
    out.write("solution_b.csv", &rb.final_solution().to_csv())?;
    out.write_json("compare.json", &report)?;
    let bound = config.l1_gap_bound.unwrap_or(1e-3);
    Ok(if report.rel_l1_gap <= bound { 0 } else { 2 })
}

#[derive(Serialize)]
struct ConvergenceJson {
    sizes: Vec<usize>,
    errors: Vec<f64>,
    fitted_order: f64,
}

/// Exact 1D solution of −(|u′|^{p−2}u′)′ = c with zero boundary values:
/// u(x) = c^{1/(p−1)}·[(1/2)^{p′} − |x − 1/2|^{p′}]/p′ on [0, 1], scaled to
/// length L by x → x/L, u → L^{p′}·u.
pub fn exact_interval_solution(x: f64, length: f64, c: f64, p: f64) -> f64 {
    let pp = p / (p - 1.0);
    let t = x / length;
    let profile = ((0.5_f64).powf(pp) - (t - 0.5).abs().powf(pp)) / pp;
    c.powf(1.0 / (p - 1.0)) * length.powf(pp) * profile
}

pub fn cmd_convergence(config: &RunConfig, out: &mut RunDir) -> Result<i32> {
    let settings = config
        .convergence
        .as_ref()
        .ok_or_else(|| PlapError::Config("missing key: convergence".into()))?;
    if settings.sizes.len() < 2 {
        return Err(PlapError::Config("convergence needs >= 2 sizes".into()));
    }
    let (kind, arg) = config
        .data
        .split_once(':')
        .ok_or_else(|| PlapError::Config("data spec missing ':'".into()))?;
    if kind != "constant" {
        return Err(PlapError::Config(
            "convergence study requires constant data (closed-form oracle)".into(),
        ));
    }
    let c: f64 = arg
        .parse()
        .map_err(|_| PlapError::Config(format!("bad constant value {arg:?}")))?;
    let length = match &config.mesh {
        MeshSpec::Interval { length, .. } => *length,
        _ => {
            return Err(PlapError::Config(
                "convergence study requires the interval family".into(),
            ))
        }
    };

    let solver_cfg = config.solver_config()?;
    let mut errors = Vec::new();
    let mut csv = String::from("n_cells,h,linf_error\n");
    for &n in &settings.sizes {
        let mesh = Mesh::interval(n, length)?;
        let f = DiscreteFunction::constant(&mesh, c);
        let outc = solver::solve_weak(&mesh, &f, &solver_cfg)?;
        if !outc.converged {
            return Ok(2);
        }
        // L∞ over nodes and cell midpoints (midpoints expose the
        // interpolation error that nodal superconvergence can hide)
        let mut err = 0.0_f64;
        for i in 0..mesh.n_vertices() {
            let x = mesh.vertex(i)[0];
            err = err.max(
                (outc.solution.values()[i] - exact_interval_solution(x, length, c, config.p))
                    .abs(),
            );
        }
        for cidx in 0..mesh.n_cells() {
            let cell = mesh.cell(cidx);
            let xm = (mesh.vertex(cell[0])[0] + mesh.vertex(cell[1])[0]) / 2.0;
            let um = (outc.solution.values()[cell[0]] + outc.solution.values()[cell[1]]) / 2.0;
            err = err.max((um - exact_interval_solution(xm, length, c, config.p)).abs());
        }
        errors.push(err);
        csv.push_str(&format!(
            "{},{},{}\n",
            n,
            crate::geometry::fmt17(length / n as f64),
            crate::geometry::fmt17(err)
        ));
    }
    out.write("convergence.csv", &csv)?;

    // least-squares slope of log error against log h
    let xs: Vec<f64> = settings.sizes.iter().map(|&n| (length / n as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
    let nf = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let order = sxy / sxx;

    out.write_json(
        "convergence.json",
        &ConvergenceJson { sizes: settings.sizes.clone(), errors, fitted_order: order },
    )?;
    let threshold = config.min_order.unwrap_or(if config.p == 2.0 { 1.5 } else { 1.0 });
    Ok(if order >= threshold { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_config(dir: &Path, json: &str) -> PathBuf {
        let p = dir.join("config.json");
        fs::write(&p, json).unwrap();
        p
    }

    fn base_config() -> String {
        r#"{
            "schema": "plap-config/1",
            "mesh": {"family": "interval", "n_cells": 32, "length": 1.0},
            "data": "constant:1.0",
            "p": 2.0
        }"#
        .to_string()
    }

    #[test]
    fn solve_smoke_run() {
        let dir = tempdir().unwrap();
        let cfg_path = write_config(dir.path(), &base_config());
        let args = CommonArgs { config: cfg_path, out: Some(dir.path().join("out")), seed: None };
        let code = run(Cli { command: Command::Solve(args) });
        assert_eq!(code, 0);
        for f in ["solution.csv", "outcome.json", "manifest.json"] {
            assert!(dir.path().join("out").join(f).exists(), "{f} missing");
        }
    }

    #[test]
    fn invalid_p_exits_one() {
        let dir = tempdir().unwrap();
        let cfg = base_config().replace("\"p\": 2.0", "\"p\": 0.9");
        let cfg_path = write_config(dir.path(), &cfg);
        let args = CommonArgs { config: cfg_path, out: Some(dir.path().join("out")), seed: None };
        assert_eq!(run(Cli { command: Command::Solve(args) }), 1);
    }

    #[test]
    fn zero_mean_on_boundary_mesh_exits_one() {
        let dir = tempdir().unwrap();
        let cfg = r#"{
            "schema": "plap-config/1",
            "mesh": {"family": "interval", "n_cells": 16, "length": 1.0},
            "data": "constant:1.0",
            "p": 2.0,
            "solver": {"bc_mode": "zero_mean"}
        }"#;
        let cfg_path = write_config(dir.path(), cfg);
        let args = CommonArgs { config: cfg_path, out: Some(dir.path().join("out")), seed: None };
        assert_eq!(run(Cli { command: Command::Solve(args) }), 1);
    }

    #[test]
    fn entropy_missing_schedule_exits_one() {
        let dir = tempdir().unwrap();
        let cfg_path = write_config(dir.path(), &base_config());
        let args = CommonArgs { config: cfg_path, out: Some(dir.path().join("out")), seed: None };
        assert_eq!(run(Cli { command: Command::Entropy(args) }), 1);
    }

    #[test]
    fn determinism_byte_identical() {
        let dir = tempdir().unwrap();
        let cfg_path = write_config(dir.path(), &base_config());
        let mut outputs = Vec::new();
        for sub in ["a", "b"] {
            let args = CommonArgs {
                config: cfg_path.clone(),
                out: Some(dir.path().join(sub)),
                seed: Some(7),
            };
            assert_eq!(run(Cli { command: Command::Solve(args) }), 0);
            let sol = fs::read(dir.path().join(sub).join("solution.csv")).unwrap();
            let outc = fs::read(dir.path().join(sub).join("outcome.json")).unwrap();
            let man = fs::read(dir.path().join(sub).join("manifest.json")).unwrap();
            outputs.push((sol, outc, man));
        }
        assert_eq!(outputs[0], outputs[1]);
    }

    #[test]
    fn convergence_p2_order() {
        let dir = tempdir().unwrap();
        let cfg = r#"{
            "schema": "plap-config/1",
            "mesh": {"family": "interval", "n_cells": 32, "length": 1.0},
            "data": "constant:1.0",
            "p": 2.0,
            "convergence": {"sizes": [16, 32, 64]}
        }"#;
        let cfg_path = write_config(dir.path(), cfg);
        let args = CommonArgs { config: cfg_path, out: Some(dir.path().join("out")), seed: None };
        assert_eq!(run(Cli { command: Command::Convergence(args) }), 0);
        let json: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join("out/convergence.json")).unwrap(),
        )
        .unwrap();
        assert!(json["fitted_order"].as_f64().unwrap() >= 1.5);
    }

    #[test]
    fn exact_solution_formula() {
        // p = 2: u = x(1−x)/2
        for &x in &[0.0, 0.25, 0.5, 1.0] {
            let e = exact_interval_solution(x, 1.0, 1.0, 2.0);
            assert!((e - x * (1.0 - x) / 2.0).abs() < 1e-14);
        }
        // p = 1.5: u(1/2) = 1/24
        assert!((exact_interval_solution(0.5, 1.0, 1.0, 1.5) - 1.0 / 24.0).abs() < 1e-14);
    }

    #[test]
    fn datum_specs() {
        let m = Mesh::interval(8, 1.0).unwrap();
        let c = build_datum(&m, "constant:2.5", BcMode::DirichletZero).unwrap();
        assert_eq!(c.values()[3], 2.5);
        let s = build_datum(&m, "spike:center", BcMode::DirichletZero).unwrap();
        assert!(s.values()[4] > 0.0);
        assert!(build_datum(&m, "nonsense:1", BcMode::DirichletZero).is_err());
        assert!(build_datum(&m, "constant", BcMode::DirichletZero).is_err());
    }
}
