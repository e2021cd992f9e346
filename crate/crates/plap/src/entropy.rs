//! The constructive entropy-solution pipeline: truncate the L¹-type data,
//! solve each bounded stage, and certify the limit through the truncated
//! test-function identity, the a-priori energy ratio, weak-Lebesgue tail
//! fits, Cauchy-in-measure diagnostics and a uniqueness cross-check.

use serde::{Deserialize, Serialize};

use crate::error::PlapError;
use crate::fields::{
    self, cell_fraction_abs_above, dot2, norm2, truncate, DiscreteFunction, DistributionCurve,
};
use crate::geometry::{fmt17, kahan_sum, Mesh};
use crate::solver::{self, SolverConfig};
use crate::Result;

/// How each bounded approximation f_n of the data is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// f_n = T_n(f), plain nodal truncation at the level
    TruncateData,
    /// truncate, then restore the data constraint: mean-correct when
    /// ∫f ≈ 0 (closed-manifold gauge), otherwise rescale to preserve ∫f
    ClipAndRescale,
}

/// Strictly increasing truncation levels plus the production mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproximationSchedule {
    pub levels: Vec<f64>,
    pub mode: ScheduleMode,
}

impl ApproximationSchedule {
    pub fn new(levels: Vec<f64>, mode: ScheduleMode) -> Result<Self> {
        let s = ApproximationSchedule { levels, mode };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(PlapError::invalid("schedule needs at least one level"));
        }
        if self.levels.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(PlapError::invalid("levels must be finite and positive"));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PlapError::invalid("levels must be strictly increasing"));
        }
        Ok(())
    }
}

/// Per-stage solve and certificate diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct StageDiagnostics {
    pub level: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// ‖f_n − f‖₁
    pub data_gap_l1: f64,
    /// max |entropy residual| of this stage's solution against the target data
    pub certificate_max: f64,
    /// max_k ∫_{|u|<k}|∇u|^p / (k‖f‖₁) over the stage k-grid
    pub apriori_max_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AprioriRow {
    pub level: f64,
    pub k: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualRow {
    pub test: String,
    pub k: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncPairRow {
    pub coarse_level: f64,
    pub fine_level: f64,
    pub k: f64,
    pub w1p_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CauchyRow {
    pub coarse_level: f64,
    pub fine_level: f64,
    pub t: f64,
    pub measure: f64,
}

/// Log-log tail fit of a distribution curve against its reference exponent.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    /// −slope of the fit; `None` when the curve has no usable tail
    pub fitted_exponent: Option<f64>,
    /// p₁ or p₂ from (N, p); `None` when p ≥ N
    pub reference_exponent: Option<f64>,
    pub r_squared: Option<f64>,
    /// threshold window actually used
    pub window: [f64; 2],
    pub no_tail: bool,
}

/// Everything the pipeline measured; stage solutions ride along unserialized.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub levels: Vec<f64>,
    pub stages: Vec<StageDiagnostics>,
    pub apriori_ratios: Vec<AprioriRow>,
    pub entropy_residuals: Vec<ResidualRow>,
    pub u_tail_fit: TailFit,
    pub grad_tail_fit: TailFit,
    pub truncation_convergence: Vec<TruncPairRow>,
    pub cauchy_measure: Vec<CauchyRow>,
    #[serde(skip)]
    pub stage_solutions: Vec<DiscreteFunction>,
}

impl EntropyReport {
    pub fn final_solution(&self) -> &DiscreteFunction {
        self.stage_solutions.last().expect("at least one stage")
    }

    pub fn apriori_csv(&self) -> String {
        let mut s = String::from("level,k,ratio\n");
        for r in &self.apriori_ratios {
            s.push_str(&format!("{},{},{}\n", fmt17(r.level), fmt17(r.k), fmt17(r.ratio)));
        }
        s
    }

    pub fn residuals_csv(&self) -> String {
        let mut s = String::from("test,k,residual\n");
        for r in &self.entropy_residuals {
            s.push_str(&format!("{},{},{}\n", r.test, fmt17(r.k), fmt17(r.residual)));
        }
        s
    }

    pub fn truncation_csv(&self) -> String {
        let mut s = String::from("coarse_level,fine_level,k,w1p_gap\n");
        for r in &self.truncation_convergence {
            s.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(r.coarse_level),
                fmt17(r.fine_level),
                fmt17(r.k),
                fmt17(r.w1p_gap)
            ));
        }
        s
    }

    pub fn cauchy_csv(&self) -> String {
        let mut s = String::from("coarse_level,fine_level,t,measure\n");
        for r in &self.cauchy_measure {
            s.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(r.coarse_level),
                fmt17(r.fine_level),
                fmt17(r.t),
                fmt17(r.measure)
            ));
        }
        s
    }
}

/// Reference decay exponent p₁ = N(p−1)/(N−p) of the solution tail.
pub fn reference_p1(n_dim: usize, p: f64) -> Option<f64> {
    let n = n_dim as f64;
    if p < n {
        Some(n * (p - 1.0) / (n - p))
    } else {
        None
    }
}

/// Reference decay exponent p₂ = N(p−1)/(N−1) of the gradient tail.
pub fn reference_p2(n_dim: usize, p: f64) -> Option<f64> {
    let n = n_dim as f64;
    if p < n && n > 1.0 {
        Some(n * (p - 1.0) / (n - 1.0))
    } else {
        None
    }
}

/// Builds the bounded data sequence f_n along the schedule.
pub fn make_data_sequence(
    mesh: &Mesh,
    f: &DiscreteFunction,
    schedule: &ApproximationSchedule,
) -> Result<Vec<DiscreteFunction>> {
    f.check_mesh(mesh)?;
    schedule.validate()?;
    let total = mesh.integrate_nodal(f.values());
    let l1 = fields::integral_abs_pow(mesh, f, 1.0)?;
    let mut out = Vec::with_capacity(schedule.levels.len());
    for &level in &schedule.levels {
        let clipped = truncate(f, level)?;
        let fn_ = match schedule.mode {
            ScheduleMode::TruncateData => clipped,
            ScheduleMode::ClipAndRescale => {
                if total.abs() <= 1e-10 * l1.max(f64::MIN_POSITIVE) {
                    // mean-zero data: restore the compatibility constraint
                    let mean = mesh.mean(clipped.values());
                    DiscreteFunction::new(
                        mesh,
                        clipped.values().iter().map(|v| v - mean).collect(),
                    )?
                } else {
                    let clipped_total = mesh.integrate_nodal(clipped.values());
                    if clipped_total.abs() <= f64::MIN_POSITIVE {
                        return Err(PlapError::Degenerate(
                            "clip_and_rescale: truncated data has zero integral".into(),
                        ));
                    }
                    clipped.scaled(total / clipped_total)
                }
            }
        };
        out.push(fn_);
    }
    Ok(out)
}

/// LHS − RHS of the entropy identity
/// ∫_{|u−φ|<k} |∇u|^{p−2}∇u·∇(u−φ) dσ = ∫ T_k(u−φ) f dσ,
/// with the restriction set realized through exact per-cell level-set
/// geometry of the linear interpolant of u − φ.
pub fn entropy_residual(
    mesh: &Mesh,
    u: &DiscreteFunction,
    f: &DiscreteFunction,
    phi: &DiscreteFunction,
    k: f64,
    p: f64,
) -> Result<f64> {
    u.check_mesh(mesh)?;
    f.check_mesh(mesh)?;
    phi.check_mesh(mesh)?;
    if !(k > 0.0 && p > 1.0) {
        return Err(PlapError::invalid("require k > 0 and p > 1"));
    }
    let scale = phi.max_abs().max(1.0);
    for &b in mesh.boundary_nodes() {
        if phi.values()[b].abs() > 1e-12 * scale {
            return Err(PlapError::invalid("test function must vanish on the boundary"));
        }
    }
    let w = u.axpy(1.0, phi, -1.0)?;
    let gu = fields::gradient(mesh, u)?;
    let gw = fields::gradient(mesh, &w)?;
    let lhs = kahan_sum((0..mesh.n_cells()).map(|c| {
        let wv: Vec<f64> = mesh.cell(c).iter().map(|&i| w.values()[i]).collect();
        let frac_inside = 1.0 - cell_fraction_abs_above(&wv, k);
        if frac_inside == 0.0 {
            return 0.0;
        }
        let g = gu.vectors()[c];
        let gn = norm2(g);
        let s = if gn == 0.0 { 0.0 } else { gn.powf(p - 2.0) };
        mesh.cell_volume(c) * frac_inside * s * dot2(g, gw.vectors()[c])
    }));
    let tkw = truncate(&w, k)?;
    let mut m_tkw = vec![0.0; mesh.n_vertices()];
    mesh.mass_apply(tkw.values(), &mut m_tkw);
    let rhs = kahan_sum(f.values().iter().zip(&m_tkw).map(|(a, b)| a * b));
    Ok(lhs - rhs)
}

/// ∫_{|u|<k} |∇u|^p dσ with exact sublevel fractions per cell.
pub fn restricted_gradient_integral(
    mesh: &Mesh,
    u: &DiscreteFunction,
    k: f64,
    p: f64,
) -> Result<f64> {
    u.check_mesh(mesh)?;
    if !(k > 0.0) {
        return Err(PlapError::invalid("k must be positive"));
    }
    let g = fields::gradient(mesh, u)?;
    Ok(kahan_sum((0..mesh.n_cells()).map(|c| {
        let uv: Vec<f64> = mesh.cell(c).iter().map(|&i| u.values()[i]).collect();
        let frac = 1.0 - cell_fraction_abs_above(&uv, k);
        mesh.cell_volume(c) * frac * norm2(g.vectors()[c]).powf(p)
    })))
}

/// max over k of ∫_{|u|<k}|∇u|^p / (k‖f‖₁); ≤ 1 + tolerance certifies
/// the a-priori truncation-energy estimate.
pub fn apriori_estimate_check(
    mesh: &Mesh,
    u: &DiscreteFunction,
    f: &DiscreteFunction,
    k_grid: &[f64],
    p: f64,
) -> Result<f64> {
    let rows = apriori_ratios(mesh, u, f, k_grid, p)?;
    Ok(rows.into_iter().fold(0.0, |m, (_, r)| m.max(r)))
}

/// Per-k ratios behind [`apriori_estimate_check`].
pub fn apriori_ratios(
    mesh: &Mesh,
    u: &DiscreteFunction,
    f: &DiscreteFunction,
    k_grid: &[f64],
    p: f64,
) -> Result<Vec<(f64, f64)>> {
    if k_grid.is_empty() || k_grid.iter().any(|&k| k <= 0.0) {
        return Err(PlapError::invalid("k grid must be nonempty and positive"));
    }
    let f_l1 = fields::integral_abs_pow(mesh, f, 1.0)?;
    if f_l1 == 0.0 {
        return Err(PlapError::Degenerate("a-priori ratio undefined for f = 0".into()));
    }
    k_grid
        .iter()
        .map(|&k| {
            let num = restricted_gradient_integral(mesh, u, k, p)?;
            Ok((k, num / (k * f_l1)))
        })
        .collect()
}

/// 16-point log k-grid spanning the range of the solution.
pub fn default_k_grid(u: &DiscreteFunction) -> Vec<f64> {
    let top = u.max_abs();
    if top == 0.0 {
        return vec![1.0];
    }
    let lo = (0.02 * top).ln();
    let hi = top.ln();
    (0..16).map(|i| (lo + (hi - lo) * i as f64 / 15.0).exp()).collect()
}

/// Default test bank: zero, ±hat functions, a smooth bump and truncations
/// of the solution itself; all members vanish on boundary nodes.
pub fn default_test_bank(mesh: &Mesh, u: &DiscreteFunction) -> Vec<(String, DiscreteFunction)> {
    let scale = u.max_abs().max(1.0);
    let mut bank: Vec<(String, DiscreteFunction)> =
        vec![("zero".into(), DiscreteFunction::zeros(mesh))];

    // hat functions at two deterministic interior vertices
    let interior: Vec<usize> =
        (0..mesh.n_vertices()).filter(|i| !mesh.boundary_nodes().contains(i)).collect();
    for (label, pick) in [("hat_plus", interior.len() / 3), ("hat_minus", 2 * interior.len() / 3)]
    {
        if let Some(&v) = interior.get(pick) {
            let mut vals = vec![0.0; mesh.n_vertices()];
            vals[v] = if label == "hat_plus" { scale } else { -scale };
            bank.push((label.into(), DiscreteFunction::new(mesh, vals).expect("valid nodal")));
        }
    }

    // smooth bump from the embedding coordinates
    let mut bump = DiscreteFunction::from_fn(mesh, |pt| {
        let r2 = pt[0] * pt[0] + pt[1] * pt[1] + pt[2] * pt[2];
        scale * 0.5 * (-3.0 * r2).exp()
    });
    for &b in mesh.boundary_nodes() {
        bump.values_mut()[b] = 0.0;
    }
    bank.push(("bump".into(), bump));

    // truncations of u itself (the uniqueness proof's test functions)
    let top = u.max_abs();
    if top > 0.0 {
        for frac in [0.25, 0.5, 0.75] {
            let mut t = truncate(u, frac * top).expect("positive level");
            for &b in mesh.boundary_nodes() {
                t.values_mut()[b] = 0.0;
            }
            bank.push((format!("trunc_{frac}"), t));
        }
    }
    bank
}

/// k-grid for certificates: all values exceed max|u − φ| over the bank, so
/// the identity holds at solver precision for converged bounded-data runs.
pub fn certificate_k_grid(
    u: &DiscreteFunction,
    bank: &[(String, DiscreteFunction)],
) -> Vec<f64> {
    let mut base: f64 = 0.0;
    for (_, phi) in bank {
        let gap = u
            .values()
            .iter()
            .zip(phi.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        base = base.max(gap);
    }
    let base = base.max(u.max_abs()).max(1e-6);
    [1.05, 2.0, 4.0, 8.0, 16.0].iter().map(|m| m * base).collect()
}

/// Worst-case residual over a (test function, k) bank.
#[derive(Debug, Clone)]
pub struct CertificateSummary {
    pub max_abs_residual: f64,
    pub argmax_test: String,
    pub argmax_k: f64,
    pub rows: Vec<ResidualRow>,
}

pub fn entropy_certificate(
    mesh: &Mesh,
    u: &DiscreteFunction,
    f: &DiscreteFunction,
    k_grid: &[f64],
    bank: &[(String, DiscreteFunction)],
    p: f64,
) -> Result<CertificateSummary> {
    if k_grid.is_empty() || bank.is_empty() {
        return Err(PlapError::invalid("certificate needs nonempty bank and k grid"));
    }
    let mut rows = Vec::with_capacity(k_grid.len() * bank.len());
    let mut max_abs = -1.0;
    let mut argmax = ("".to_string(), 0.0);
    for (label, phi) in bank {
        for &k in k_grid {
            let r = entropy_residual(mesh, u, f, phi, k, p)?;
            if r.abs() > max_abs {
                max_abs = r.abs();
                argmax = (label.clone(), k);
            }
            rows.push(ResidualRow { test: label.clone(), k, residual: r });
        }
    }
    Ok(CertificateSummary {
        max_abs_residual: max_abs.max(0.0),
        argmax_test: argmax.0,
        argmax_k: argmax.1,
        rows,
    })
}

/// Distribution curve of the cellwise-constant |∇u|.
pub fn gradient_distribution(
    mesh: &Mesh,
    magnitudes: &[f64],
    thresholds: &[f64],
) -> Result<DistributionCurve> {
    if magnitudes.len() != mesh.n_cells() {
        return Err(PlapError::MeshMismatch);
    }
    let measures = thresholds
        .iter()
        .map(|&t| {
            kahan_sum(
                magnitudes
                    .iter()
                    .zip(mesh.cell_volumes())
                    .map(|(&m, &vol)| if m > t { vol } else { 0.0 }),
            )
        })
        .collect();
    Ok(DistributionCurve { thresholds: thresholds.to_vec(), measures })
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if !(lo > 0.0) || lo >= hi {
        return vec![hi.max(1.0)];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

pub fn fit_window_tail(
    curve: &DistributionCurve,
    window_fracs: (f64, f64),
    reference: Option<f64>,
) -> TailFit {
    let n = curve.thresholds.len();
    let lo_idx = ((window_fracs.0 * n as f64).floor() as usize).min(n.saturating_sub(1));
    let hi_idx = ((window_fracs.1 * n as f64).ceil() as usize).clamp(lo_idx + 1, n);
    let k_lo = curve.thresholds[lo_idx];
    let k_hi = curve.thresholds[hi_idx - 1];
    match fields::tail_exponent_fit(curve, k_lo, k_hi) {
        Ok((slope, _, r2)) => TailFit {
            fitted_exponent: Some(-slope),
            reference_exponent: reference,
            r_squared: Some(r2),
            window: [k_lo, k_hi],
            no_tail: false,
        },
        Err(_) => TailFit {
            fitted_exponent: None,
            reference_exponent: reference,
            r_squared: None,
            window: [k_lo, k_hi],
            no_tail: true,
        },
    }
}

/// Default fit window: drop the smallest 40% and largest 10% of thresholds.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (0.4, 0.9);

/// Tail-exponent fit of the solution distribution against p₁ = N(p−1)/(N−p).
pub fn u_decay_check(
    mesh: &Mesh,
    u: &DiscreteFunction,
    p: f64,
    window_fracs: (f64, f64),
) -> Result<TailFit> {
    u.check_mesh(mesh)?;
    let thresholds = fields::log_spaced_thresholds(u, 64);
    let curve = fields::distribution_function(mesh, u, &thresholds)?;
    Ok(fit_window_tail(&curve, window_fracs, reference_p1(mesh.dimension(), p)))
}

/// Tail-exponent fit of the gradient distribution against p₂ = N(p−1)/(N−1).
pub fn grad_decay_check(
    mesh: &Mesh,
    u: &DiscreteFunction,
    p: f64,
    window_fracs: (f64, f64),
) -> Result<TailFit> {
    u.check_mesh(mesh)?;
    let g = fields::gradient(mesh, u)?;
    let mags = g.magnitudes();
    let hi = mags.iter().fold(0.0_f64, |m, &v| m.max(v));
    let lo = mags.iter().filter(|&&v| v > 0.0).fold(f64::INFINITY, |m, &v| m.min(v));
    let thresholds = log_grid(lo.max(hi * 1e-6), hi, 64);
    let curve = gradient_distribution(mesh, &mags, &thresholds)?;
    Ok(fit_window_tail(&curve, window_fracs, reference_p2(mesh.dimension(), p)))
}

/// meas{|∇u_i − ∇u_j| > t} for every solution pair and threshold.
pub fn cauchy_in_measure(
    mesh: &Mesh,
    solutions: &[DiscreteFunction],
    labels: &[f64],
    t_grid: &[f64],
) -> Result<Vec<CauchyRow>> {
    if solutions.len() < 2 || solutions.len() != labels.len() {
        return Err(PlapError::invalid("need >= 2 labeled solutions"));
    }
    let grads = solutions
        .iter()
        .map(|u| fields::gradient(mesh, u))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for i in 0..solutions.len() {
        for j in (i + 1)..solutions.len() {
            let diffs: Vec<f64> = grads[i]
                .vectors()
                .iter()
                .zip(grads[j].vectors())
                .map(|(a, b)| norm2([a[0] - b[0], a[1] - b[1]]))
                .collect();
            for &t in t_grid {
                let measure = kahan_sum(
                    diffs
                        .iter()
                        .zip(mesh.cell_volumes())
                        .map(|(&d, &vol)| if d > t { vol } else { 0.0 }),
                );
                rows.push(CauchyRow {
                    coarse_level: labels[i],
                    fine_level: labels[j],
                    t,
                    measure,
                });
            }
        }
    }
    Ok(rows)
}

/// Runs the full pipeline: data sequence, warm-started stage solves and all
/// recorded diagnostics. Stage non-convergence is flagged, not fatal.
pub fn run_approximation(
    mesh: &Mesh,
    f: &DiscreteFunction,
    schedule: &ApproximationSchedule,
    config: &SolverConfig,
) -> Result<EntropyReport> {
    run_approximation_with_windows(mesh, f, schedule, config, DEFAULT_FIT_WINDOW, DEFAULT_FIT_WINDOW)
}

/// [`run_approximation`] with explicit log-window fractions for the solution
/// and gradient tail fits, for benchmarks with a calibrated power-law range.
pub fn run_approximation_with_windows(
    mesh: &Mesh,
    f: &DiscreteFunction,
    schedule: &ApproximationSchedule,
    config: &SolverConfig,
    u_window: (f64, f64),
    grad_window: (f64, f64),
) -> Result<EntropyReport> {
    let data = make_data_sequence(mesh, f, schedule)?;
    let mut stage_solutions: Vec<DiscreteFunction> = Vec::with_capacity(data.len());
    let mut stages = Vec::with_capacity(data.len());
    let mut apriori_rows = Vec::new();

    for (fn_, &level) in data.iter().zip(&schedule.levels) {
        let warm = stage_solutions.last();
        let out = solver::solve_weak_from(mesh, fn_, config, warm)?;
        let diff = fn_.axpy(1.0, f, -1.0)?;
        let data_gap = fields::integral_abs_pow(mesh, &diff, 1.0)?;

        let k_grid = default_k_grid(&out.solution);
        let ratios = match apriori_ratios(mesh, &out.solution, fn_, &k_grid, config.p) {
            Ok(r) => r,
            Err(PlapError::Degenerate(_)) => Vec::new(),
            Err(e) => return Err(e),
        };
        let max_ratio = ratios.iter().fold(0.0_f64, |m, (_, r)| m.max(*r));
        for (k, r) in &ratios {
            apriori_rows.push(AprioriRow { level, k: *k, ratio: *r });
        }

        let bank = default_test_bank(mesh, &out.solution);
        let cert_grid = certificate_k_grid(&out.solution, &bank);
        let cert = entropy_certificate(mesh, &out.solution, f, &cert_grid, &bank, config.p)?;

        stages.push(StageDiagnostics {
            level,
            converged: out.converged,
            iterations: out.iterations,
            residual: out.final_residual,
            data_gap_l1: data_gap,
            certificate_max: cert.max_abs_residual,
            apriori_max_ratio: max_ratio,
        });
        stage_solutions.push(out.solution);
    }

    let last = stage_solutions.last().expect("at least one stage");
    let bank = default_test_bank(mesh, last);
    let cert_grid = certificate_k_grid(last, &bank);
    let final_cert = entropy_certificate(mesh, last, f, &cert_grid, &bank, config.p)?;

    // truncation convergence ‖T_k(u_n) − T_k(u_m)‖_{W^{1,p}} across pairs
    let top = last.max_abs();
    let trunc_ks: Vec<f64> = [0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|f| f * top.max(1e-12))
        .collect();
    let mut trunc_rows = Vec::new();
    for i in 0..stage_solutions.len() {
        for j in (i + 1)..stage_solutions.len() {
            for &k in &trunc_ks {
                let ti = truncate(&stage_solutions[i], k)?;
                let tj = truncate(&stage_solutions[j], k)?;
                let gap = fields::w1p_norm(mesh, &ti.axpy(1.0, &tj, -1.0)?, config.p)?;
                trunc_rows.push(TruncPairRow {
                    coarse_level: schedule.levels[i],
                    fine_level: schedule.levels[j],
                    k,
                    w1p_gap: gap,
                });
            }
        }
    }

    let gmax = fields::gradient(mesh, last)?
        .magnitudes()
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v));
    let t_grid: Vec<f64> = [1e-3, 1e-2, 1e-1, 1.0].iter().map(|s| s * gmax.max(1e-12)).collect();
    let cauchy = if stage_solutions.len() >= 2 {
        cauchy_in_measure(mesh, &stage_solutions, &schedule.levels, &t_grid)?
    } else {
        Vec::new()
    };

    let u_fit = u_decay_check(mesh, last, config.p, u_window)?;
    let g_fit = grad_decay_check(mesh, last, config.p, grad_window)?;

    Ok(EntropyReport {
        levels: schedule.levels.clone(),
        stages,
        apriori_ratios: apriori_rows,
        entropy_residuals: final_cert.rows,
        u_tail_fit: u_fit,
        grad_tail_fit: g_fit,
        truncation_convergence: trunc_rows,
        cauchy_measure: cauchy,
        stage_solutions,
    })
}

/// Gap report of two independent pipelines on the same data.
#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub l1_gap: f64,
    pub rel_l1_gap: f64,
    /// max over the k-grid of ‖T_k(u_a) − T_k(u_b)‖_∞
    pub max_trunc_linf_gap: f64,
}

pub fn uniqueness_crosscheck(
    mesh: &Mesh,
    f: &DiscreteFunction,
    schedule_a: &ApproximationSchedule,
    schedule_b: &ApproximationSchedule,
    config: &SolverConfig,
) -> Result<(UniquenessReport, EntropyReport, EntropyReport)> {
    let ra = run_approximation(mesh, f, schedule_a, config)?;
    let rb = run_approximation(mesh, f, schedule_b, config)?;
    let ua = ra.final_solution();
    let ub = rb.final_solution();
    let diff = ua.axpy(1.0, ub, -1.0)?;
    let l1_gap = fields::integral_abs_pow(mesh, &diff, 1.0)?;
    let ua_l1 = fields::integral_abs_pow(mesh, ua, 1.0)?;
    let mut max_trunc = 0.0_f64;
    for &k in &default_k_grid(ua) {
        let ta = truncate(ua, k)?;
        let tb = truncate(ub, k)?;
        let gap = ta
            .values()
            .iter()
            .zip(tb.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        max_trunc = max_trunc.max(gap);
    }
    let report = UniquenessReport {
        l1_gap,
        rel_l1_gap: if ua_l1 > 0.0 { l1_gap / ua_l1 } else { 0.0 },
        max_trunc_linf_gap: max_trunc,
    };
    Ok((report, ra, rb))
}

/// Unit-mass concentrated datum at a vertex: 1/(hat-function integral) at the
/// node, optionally mean-corrected so closed-manifold runs stay compatible.
pub fn spike_datum(mesh: &Mesh, vertex: usize, mean_correct: bool) -> Result<DiscreteFunction> {
    if vertex >= mesh.n_vertices() {
        return Err(PlapError::invalid("spike vertex out of range"));
    }
    let mut hat = vec![0.0; mesh.n_vertices()];
    hat[vertex] = 1.0;
    let patch = mesh.integrate_nodal(&hat);
    if patch <= 0.0 {
        return Err(PlapError::Degenerate("empty vertex patch".into()));
    }
    let mut vals = vec![0.0; mesh.n_vertices()];
    vals[vertex] = 1.0 / patch;
    if mean_correct {
        let mean = mesh.integrate_nodal(&vals) / mesh.volume();
        vals.iter_mut().for_each(|v| *v -= mean);
    }
    DiscreteFunction::new(mesh, vals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule(levels: &[f64]) -> ApproximationSchedule {
        ApproximationSchedule::new(levels.to_vec(), ScheduleMode::TruncateData).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(ApproximationSchedule::new(vec![], ScheduleMode::TruncateData).is_err());
        assert!(ApproximationSchedule::new(vec![2.0, 1.0], ScheduleMode::TruncateData).is_err());
        assert!(ApproximationSchedule::new(vec![-1.0, 2.0], ScheduleMode::TruncateData).is_err());
        assert!(ApproximationSchedule::new(vec![1.0, 2.0], ScheduleMode::TruncateData).is_ok());
    }

    #[test]
    fn data_sequence_truncation() {
        let m = Mesh::interval(16, 1.0).unwrap();
        let mut vals = vec![1.0; m.n_vertices()];
        vals[8] = 30.0; // one tall spike
        let f = DiscreteFunction::new(&m, vals).unwrap();

        let seq = make_data_sequence(&m, &f, &schedule(&[2.0, 10.0, 100.0])).unwrap();
        // level below spike: spike clipped, elsewhere unchanged
        assert_eq!(seq[0].values()[8], 2.0);
        assert_eq!(seq[0].values()[3], 1.0);
        // level over max|f|: data returned exactly
        assert_eq!(seq[2].values(), f.values());

        // L1 gaps non-increasing
        let gaps: Vec<f64> = seq
            .iter()
            .map(|fn_| {
                fields::integral_abs_pow(&m, &fn_.axpy(1.0, &f, -1.0).unwrap(), 1.0).unwrap()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn clip_and_rescale_preserves_constraints() {
        // mean-zero data on the torus keeps the gauge compatibility
        let m = Mesh::flat_torus(6, 6, 1.0, 1.0).unwrap();
        let f = spike_datum(&m, 14, true).unwrap();
        assert!(mesh_total(&m, &f).abs() < 1e-12 * fields::integral_abs_pow(&m, &f, 1.0).unwrap());
        let sched =
            ApproximationSchedule::new(vec![1.0, 10.0], ScheduleMode::ClipAndRescale).unwrap();
        for fn_ in make_data_sequence(&m, &f, &sched).unwrap() {
            assert!(mesh_total(&m, &fn_).abs() < 1e-12);
        }

        // positive-mass data keeps its integral
        let mi = Mesh::interval(16, 1.0).unwrap();
        let mut vals = vec![1.0; mi.n_vertices()];
        vals[8] = 40.0;
        let g = DiscreteFunction::new(&mi, vals).unwrap();
        let total = mesh_total(&mi, &g);
        let sched2 =
            ApproximationSchedule::new(vec![2.0, 5.0], ScheduleMode::ClipAndRescale).unwrap();
        for gn in make_data_sequence(&mi, &g, &sched2).unwrap() {
            assert!((mesh_total(&mi, &gn) - total).abs() < 1e-12 * total);
        }
    }

    fn mesh_total(m: &Mesh, f: &DiscreteFunction) -> f64 {
        m.integrate_nodal(f.values())
    }

    #[test]
    fn residual_phi_equals_u_is_exact_zero() {
        let m = Mesh::interval(16, 1.0).unwrap();
        let mut u = DiscreteFunction::from_fn(&m, |p| (4.0 * p[0]).sin());
        for &b in m.boundary_nodes() {
            u.values_mut()[b] = 0.0;
        }
        let f = DiscreteFunction::constant(&m, 1.0);
        for k in [0.1, 1.0, 10.0] {
            assert_eq!(entropy_residual(&m, &u, &f, &u, k, 2.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn residual_phi_zero_reduction() {
        let m = Mesh::interval(32, 1.0).unwrap();
        let u = DiscreteFunction::from_fn(&m, |p| p[0] * (1.0 - p[0]));
        let f = DiscreteFunction::from_fn(&m, |p| 1.0 + p[0]);
        let z = DiscreteFunction::zeros(&m);
        let (k, p) = (0.1, 2.0);
        let lhs = restricted_gradient_integral(&m, &u, k, p).unwrap();
        let tku = truncate(&u, k).unwrap();
        let mut mt = vec![0.0; m.n_vertices()];
        m.mass_apply(tku.values(), &mut mt);
        let rhs: f64 = f.values().iter().zip(&mt).map(|(a, b)| a * b).sum();
        let res = entropy_residual(&m, &u, &f, &z, k, p).unwrap();
        assert!((res - (lhs - rhs)).abs() < 1e-13);
    }

    #[test]
    fn residual_small_for_converged_bounded_solve() {
        let m = Mesh::interval(64, 1.0).unwrap();
        let f = DiscreteFunction::constant(&m, 1.0);
        let cfg = SolverConfig::new(2.0);
        let u = solver::solve_weak(&m, &f, &cfg).unwrap().solution;
        let bank = default_test_bank(&m, &u);
        let grid = certificate_k_grid(&u, &bank);
        let cert = entropy_certificate(&m, &u, &f, &grid, &bank, 2.0).unwrap();
        let f_l1 = fields::integral_abs_pow(&m, &f, 1.0).unwrap();
        let bound = 50.0
            * cfg.grad_tol
            * (grid[0] + bank.iter().map(|(_, p)| p.max_abs()).fold(0.0, f64::max))
            * f_l1;
        assert!(
            cert.max_abs_residual <= bound,
            "certificate {} vs bound {bound}",
            cert.max_abs_residual
        );
    }

    #[test]
    fn restricted_integral_monotone_in_k() {
        let m = Mesh::interval(32, 1.0).unwrap();
        let u = DiscreteFunction::from_fn(&m, |p| (7.0 * p[0]).sin());
        let mut prev = 0.0;
        for k in [0.1, 0.3, 0.5, 0.9, 2.0] {
            let v = restricted_gradient_integral(&m, &u, k, 1.7).unwrap();
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn apriori_cases() {
        let m = Mesh::interval(64, 1.0).unwrap();
        let f = DiscreteFunction::constant(&m, 1.0);
        let z = DiscreteFunction::zeros(&m);
        let grid = [0.01, 0.05, 0.1, 0.125];
        assert_eq!(apriori_estimate_check(&m, &z, &f, &grid, 2.0).unwrap(), 0.0);

        // closed form u = x(1−x)/2 satisfies the estimate for all k
        let u = solver::solve_weak(&m, &f, &SolverConfig::new(2.0)).unwrap().solution;
        let ratio = apriori_estimate_check(&m, &u, &f, &default_k_grid(&u), 2.0).unwrap();
        assert!(ratio <= 1.05, "ratio {ratio}");

        // f = 0 degenerate
        assert!(apriori_estimate_check(&m, &u, &z, &grid, 2.0).is_err());

        // saturation: ratio decreasing for k above max|u|
        let top = u.max_abs();
        let r1 = apriori_estimate_check(&m, &u, &f, &[1.1 * top], 2.0).unwrap();
        let r2 = apriori_estimate_check(&m, &u, &f, &[2.2 * top], 2.0).unwrap();
        assert!((r1 / r2 - 2.0).abs() < 1e-10);
    }

    #[test]
    fn reference_exponents() {
        assert!((reference_p1(2, 1.5).unwrap() - 2.0).abs() < 1e-14);
        assert!((reference_p1(2, 1.8).unwrap() - 8.0).abs() < 1e-12);
        assert!(reference_p1(2, 2.0).is_none());
        assert!((reference_p2(2, 1.5).unwrap() - 1.0).abs() < 1e-14);
        assert!((reference_p2(3, 2.0).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn no_tail_for_affine() {
        let m = Mesh::interval(16, 1.0).unwrap();
        let u = DiscreteFunction::from_fn(&m, |p| p[0]);
        // |∇u| constant → step curve → no usable tail
        let fit = grad_decay_check(&m, &u, 1.5, DEFAULT_FIT_WINDOW).unwrap();
        assert!(fit.no_tail);
    }

    #[test]
    fn cauchy_trivial_cases() {
        let m = Mesh::interval(16, 1.0).unwrap();
        let u = DiscreteFunction::from_fn(&m, |p| p[0] * (1.0 - p[0]));
        let rows =
            cauchy_in_measure(&m, &[u.clone(), u.clone()], &[1.0, 2.0], &[0.01, 0.1]).unwrap();
        assert!(rows.iter().all(|r| r.measure == 0.0));

        let v = DiscreteFunction::from_fn(&m, |p| (9.0 * p[0]).sin());
        let rows2 = cauchy_in_measure(&m, &[u, v], &[1.0, 2.0], &[1e-6]).unwrap();
        assert!(rows2.iter().all(|r| r.measure <= m.volume() + 1e-15));
    }

    #[test]
    fn single_level_bounded_pipeline() {
        let m = Mesh::interval(32, 1.0).unwrap();
        let f = DiscreteFunction::constant(&m, 1.0);
        let sched = schedule(&[10.0]); // above max|f|
        let cfg = SolverConfig::new(2.0);
        let report = run_approximation(&m, &f, &sched, &cfg).unwrap();
        assert_eq!(report.stages.len(), 1);
        assert!(report.stages[0].converged);
        assert_eq!(report.stages[0].data_gap_l1, 0.0);
        assert!(report.stages[0].apriori_max_ratio <= 1.05);
        let f_l1 = 1.0;
        assert!(report.stages[0].certificate_max <= 50.0 * cfg.grad_tol * 20.0 * f_l1);
    }

    #[test]
    fn monotone_stages_for_nonnegative_data() {
        let m = Mesh::interval(32, 1.0).unwrap();
        let mut vals = vec![0.5; m.n_vertices()];
        vals[16] = 20.0;
        let f = DiscreteFunction::new(&m, vals).unwrap();
        let cfg = SolverConfig::new(2.0);
        let report = run_approximation(&m, &f, &schedule(&[1.0, 5.0, 25.0]), &cfg).unwrap();
        for w in report.stage_solutions.windows(2) {
            for (a, b) in w[0].values().iter().zip(w[1].values()) {
                assert!(b + 1e-10 >= *a, "stage solutions not monotone: {a} vs {b}");
            }
        }
    }

    #[test]
    fn uniqueness_identical_schedules() {
        let m = Mesh::interval(32, 1.0).unwrap();
        let mut vals = vec![1.0; m.n_vertices()];
        vals[10] = 15.0;
        let f = DiscreteFunction::new(&m, vals).unwrap();
        let cfg = SolverConfig::new(2.0);
        let s = schedule(&[2.0, 20.0]);
        let (rep, _, _) = uniqueness_crosscheck(&m, &f, &s, &s, &cfg).unwrap();
        assert!(rep.l1_gap <= 1e-10, "gap {}", rep.l1_gap);
    }

    #[test]
    fn spike_datum_properties() {
        let m = Mesh::flat_torus(8, 8, 1.0, 1.0).unwrap();
        let raw = spike_datum(&m, 20, false).unwrap();
        assert!((m.integrate_nodal(raw.values()) - 1.0).abs() < 1e-12);
        let corrected = spike_datum(&m, 20, true).unwrap();
        assert!(m.integrate_nodal(corrected.values()).abs() < 1e-12);
        assert!(spike_datum(&m, 10_000, false).is_err());
    }
}
