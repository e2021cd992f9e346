//! Weak p-Laplace solver: minimizes the regularized convex energy
//! J(u) = (1/p)∫(|∇u|² + ε²)^{p/2} dσ − ∫ f u dσ by damped Newton with
//! backtracking line search and geometric continuation in ε, plus the
//! semilinear concave fixed point and the scalar algebraic-inequality kernel.

use crate::error::PlapError;
use crate::fields::{self, dot2, DiscreteFunction, GradientField};
use crate::geometry::{kahan_sum, Mesh};
use crate::sparse::{pcg, CsrMatrix};
use crate::Result;

/// Boundary/gauge handling for the weak problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcMode {
    /// u = 0 on boundary nodes; requires a mesh with boundary.
    DirichletZero,
    /// ∫u dσ = 0 gauge; requires a closed mesh and compatible data ∫f ≈ 0.
    ZeroMean,
}

/// Parameters of the weak solve.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// exponent of the p-Laplacian, p > 1
    pub p: f64,
    /// target gradient-magnitude regularization, ≥ 0 (0 = the true operator)
    pub epsilon: f64,
    /// residual tolerance, relative to the zero-iterate residual
    pub grad_tol: f64,
    /// Newton iteration cap per continuation stage
    pub max_iter: usize,
    pub bc_mode: BcMode,
    /// backtracking shrink factor, in (0, 1)
    pub line_search_shrink: f64,
    /// Armijo sufficient-decrease constant, in (0, 0.5)
    pub line_search_decrease: f64,
}

impl SolverConfig {
    pub fn new(p: f64) -> Self {
        SolverConfig {
            p,
            epsilon: 0.0,
            grad_tol: 1e-8,
            max_iter: 200,
            bc_mode: BcMode::DirichletZero,
            line_search_shrink: 0.5,
            line_search_decrease: 1e-4,
        }
    }

    pub fn with_bc(mut self, bc: BcMode) -> Self {
        self.bc_mode = bc;
        self
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(PlapError::invalid("p must exceed 1"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(PlapError::invalid("epsilon must be nonnegative"));
        }
        if !(self.grad_tol > 0.0) || self.max_iter == 0 {
            return Err(PlapError::invalid("grad_tol must be positive, max_iter >= 1"));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(PlapError::invalid("line search shrink must lie in (0, 1)"));
        }
        if !(self.line_search_decrease > 0.0 && self.line_search_decrease < 0.5) {
            return Err(PlapError::invalid("sufficient-decrease constant must lie in (0, 0.5)"));
        }
        match self.bc_mode {
            BcMode::DirichletZero if mesh.boundary_nodes().is_empty() => Err(PlapError::invalid(
                "dirichlet_zero needs a mesh with boundary",
            )),
            BcMode::ZeroMean if !mesh.is_closed() => {
                Err(PlapError::invalid("zero_mean gauge needs a closed mesh"))
            }
            _ => Ok(()),
        }
    }
}

/// Result of a weak or semilinear solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub solution: DiscreteFunction,
    pub iterations: usize,
    pub final_residual: f64,
    /// energies after each accepted step of the final continuation stage;
    /// non-increasing by the line search
    pub energy_trace: Vec<f64>,
    pub converged: bool,
}

fn dot_c(a: &[f64], b: &[f64]) -> f64 {
    kahan_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

/// J(u) = (1/p)∫(|∇u|² + ε²)^{p/2} dσ − ∫ f u dσ, with the load paired
/// through the exact P1 mass matrix.
pub fn energy(
    mesh: &Mesh,
    u: &DiscreteFunction,
    f: &DiscreteFunction,
    config: &SolverConfig,
) -> Result<f64> {
    u.check_mesh(mesh)?;
    f.check_mesh(mesh)?;
    let g = fields::gradient(mesh, u)?;
    Ok(energy_from_gradient(mesh, &g, config) - load_pairing(mesh, u, f))
}

fn energy_from_gradient(mesh: &Mesh, g: &GradientField, config: &SolverConfig) -> f64 {
    let (p, e2) = (config.p, config.epsilon * config.epsilon);
    kahan_sum(
        g.vectors()
            .iter()
            .zip(mesh.cell_volumes())
            .map(|(v, vol)| vol * (v[0] * v[0] + v[1] * v[1] + e2).powf(p / 2.0) / p),
    )
}

fn load_pairing(mesh: &Mesh, u: &DiscreteFunction, f: &DiscreteFunction) -> f64 {
    let mut mu = vec![0.0; mesh.n_vertices()];
    mesh.mass_apply(u.values(), &mut mu);
    dot_c(f.values(), &mu)
}

// flux a_ε(g) = (|g|² + ε²)^{(p−2)/2} g, with a_ε(0) = 0 when ε = 0
fn flux(g: [f64; 2], p: f64, eps: f64) -> [f64; 2] {
    let t = g[0] * g[0] + g[1] * g[1] + eps * eps;
    if t == 0.0 {
        return [0.0, 0.0];
    }
    let s = t.powf((p - 2.0) / 2.0);
    [s * g[0], s * g[1]]
}

/// Nodal Euler–Lagrange residual of J, with Dirichlet rows zeroed or the
/// Euclidean mean removed depending on the gauge.
pub fn energy_gradient(
    mesh: &Mesh,
    u: &DiscreteFunction,
    f: &DiscreteFunction,
    config: &SolverConfig,
) -> Result<DiscreteFunction> {
    u.check_mesh(mesh)?;
    f.check_mesh(mesh)?;
    config.validate(mesh)?;
    let g = fields::gradient(mesh, u)?;
    let mut r = vec![0.0; mesh.n_vertices()];
    for c in 0..mesh.n_cells() {
        let a = flux(g.vectors()[c], config.p, config.epsilon);
        let vol = mesh.cell_volume(c);
        for (local, &v) in mesh.cell(c).iter().enumerate() {
            r[v] += vol * dot2(a, mesh.basis_gradients(c)[local]);
        }
    }
    let mut mf = vec![0.0; mesh.n_vertices()];
    mesh.mass_apply(f.values(), &mut mf);
    for (ri, mi) in r.iter_mut().zip(&mf) {
        *ri -= mi;
    }
    apply_gauge(mesh, config.bc_mode, &mut r);
    DiscreteFunction::new(mesh, r)
}

fn apply_gauge(mesh: &Mesh, bc: BcMode, r: &mut [f64]) {
    match bc {
        BcMode::DirichletZero => {
            for &b in mesh.boundary_nodes() {
                r[b] = 0.0;
            }
        }
        BcMode::ZeroMean => {
            // the stiffness null space is the constants; remove that component
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            r.iter_mut().for_each(|x| *x -= mean);
        }
    }
}

struct Assembler {
    pattern: CsrMatrix,
}

impl Assembler {
    fn new(mesh: &Mesh) -> Self {
        Assembler { pattern: CsrMatrix::from_pattern(&mesh.node_adjacency()) }
    }

    // Hessian of the regularized energy; `floor` guards the p > 2 degeneracy
    // at ∇u = 0 (it perturbs the Newton model only, never the residual).
    fn hessian(
        &mut self,
        mesh: &Mesh,
        g: &GradientField,
        config: &SolverConfig,
        floor: f64,
    ) -> &CsrMatrix {
        let a = &mut self.pattern;
        a.zero_data();
        let p = config.p;
        let dirichlet = matches!(config.bc_mode, BcMode::DirichletZero);
        for c in 0..mesh.n_cells() {
            let gc = g.vectors()[c];
            let t = (gc[0] * gc[0] + gc[1] * gc[1] + config.epsilon * config.epsilon)
                .max(floor * floor);
            let s = t.powf((p - 2.0) / 2.0);
            let s2 = (p - 2.0) * t.powf((p - 4.0) / 2.0);
            let vol = mesh.cell_volume(c);
            let cell = mesh.cell(c);
            let bg = mesh.basis_gradients(c);
            for (la, &va) in cell.iter().enumerate() {
                if dirichlet && mesh.boundary_nodes().contains(&va) {
                    continue;
                }
                for (lb, &vb) in cell.iter().enumerate() {
                    if dirichlet && mesh.boundary_nodes().contains(&vb) {
                        continue;
                    }
                    let val = vol
                        * (s * dot2(bg[la], bg[lb])
                            + s2 * dot2(gc, bg[la]) * dot2(gc, bg[lb]));
                    a.add(va, vb, val);
                }
            }
        }
        if dirichlet {
            for &b in mesh.boundary_nodes() {
                a.set_identity_row(b);
            }
        }
        a
    }
}

const CONTINUATION_START: f64 = 1e-2;
const CONTINUATION_FLOOR: f64 = 1e-10;

fn epsilon_ladder(config: &SolverConfig) -> Vec<f64> {
    if config.p == 2.0 {
        return vec![config.epsilon];
    }
    let mut ladder = Vec::new();
    let mut e = CONTINUATION_START.max(config.epsilon);
    let stop = config.epsilon.max(CONTINUATION_FLOOR);
    while e > stop {
        ladder.push(e);
        e *= 0.1;
    }
    if config.epsilon > 0.0 || config.p < 2.0 {
        ladder.push(stop);
    }
    // final stage always runs at the requested epsilon (possibly 0)
    if *ladder.last().unwrap_or(&f64::NAN) != config.epsilon {
        ladder.push(config.epsilon);
    }
    ladder
}

/// Solves −div((|∇u|² + ε²)^{(p−2)/2} ∇u) = f in the discrete weak sense.
pub fn solve_weak(mesh: &Mesh, f: &DiscreteFunction, config: &SolverConfig) -> Result<SolveOutcome> {
    solve_weak_from(mesh, f, config, None)
}

/// As [`solve_weak`] but warm-started from `initial` when given.
pub fn solve_weak_from(
    mesh: &Mesh,
    f: &DiscreteFunction,
    config: &SolverConfig,
    initial: Option<&DiscreteFunction>,
) -> Result<SolveOutcome> {
    f.check_mesh(mesh)?;
    config.validate(mesh)?;
    if let BcMode::ZeroMean = config.bc_mode {
        let total = mesh.integrate_nodal(f.values());
        let l1 = fields::integral_abs_pow(mesh, f, 1.0)?;
        if total.abs() > 1e-10 * l1.max(f64::MIN_POSITIVE) {
            return Err(PlapError::invalid(format!(
                "incompatible data on closed manifold: |∫f| = {:.3e} exceeds 1e-10·‖f‖₁",
                total.abs()
            )));
        }
    }

    let mut u = match initial {
        Some(w) => {
            w.check_mesh(mesh)?;
            w.clone()
        }
        None => DiscreteFunction::zeros(mesh),
    };
    enforce_gauge(mesh, config.bc_mode, &mut u);

    // reference scale: residual of the zero iterate (= load norm on free dofs)
    let zero = DiscreteFunction::zeros(mesh);
    let r0 = energy_gradient(mesh, &zero, f, config)?;
    let ref_norm = dot_c(r0.values(), r0.values()).sqrt();
    let tol = config.grad_tol * ref_norm.max(f64::MIN_POSITIVE);

    let mut assembler = Assembler::new(mesh);
    let ladder = epsilon_ladder(config);
    let last = ladder.len() - 1;
    let mut total_iters = 0usize;
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    let mut converged = false;

    for (stage, &eps) in ladder.iter().enumerate() {
        let final_stage = stage == last;
        let stage_cfg = SolverConfig { epsilon: eps, ..*config };
        let stage_tol = if final_stage { tol } else { tol.max(1e-5 * ref_norm) };
        let stage_cap = if final_stage { config.max_iter } else { config.max_iter.min(60) };
        let out = newton_stage(mesh, f, &stage_cfg, &mut assembler, &mut u, stage_tol, stage_cap)?;
        total_iters += out.0;
        if final_stage {
            trace = out.2;
            residual = out.1;
            converged = residual <= tol;
        }
    }

    if !converged {
        // report the outcome; callers decide whether this is fatal
        return Ok(SolveOutcome {
            solution: u,
            iterations: total_iters,
            final_residual: residual,
            energy_trace: trace,
            converged: false,
        });
    }
    Ok(SolveOutcome {
        solution: u,
        iterations: total_iters,
        final_residual: residual,
        energy_trace: trace,
        converged,
    })
}

fn enforce_gauge(mesh: &Mesh, bc: BcMode, u: &mut DiscreteFunction) {
    match bc {
        BcMode::DirichletZero => {
            for &b in mesh.boundary_nodes() {
                u.values_mut()[b] = 0.0;
            }
        }
        BcMode::ZeroMean => {
            let m = mesh.mean(u.values());
            u.values_mut().iter_mut().for_each(|v| *v -= m);
        }
    }
}

// one continuation stage; returns (iterations, residual, energy trace)
fn newton_stage(
    mesh: &Mesh,
    f: &DiscreteFunction,
    config: &SolverConfig,
    assembler: &mut Assembler,
    u: &mut DiscreteFunction,
    tol: f64,
    max_iter: usize,
) -> Result<(usize, f64, Vec<f64>)> {
    let n = mesh.n_vertices();
    let zero_mean = matches!(config.bc_mode, BcMode::ZeroMean);
    let project: Option<Box<dyn Fn(&mut [f64])>> = if zero_mean {
        Some(Box::new(move |x: &mut [f64]| {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter_mut().for_each(|v| *v -= m);
        }))
    } else {
        None
    };

    let mut trace = vec![energy(mesh, u, f, config)?];
    let mut iters = 0usize;
    let mut residual;
    let mut plateau = 0usize;
    let mut best_residual = f64::INFINITY;

    loop {
        let r = energy_gradient(mesh, u, f, config)?;
        residual = dot_c(r.values(), r.values()).sqrt();
        if residual <= tol || iters >= max_iter {
            break;
        }
        // stop burning iterations once progress stalls at rounding level
        if residual > 0.9999 * best_residual {
            plateau += 1;
            if plateau >= 10 {
                break;
            }
        } else {
            plateau = 0;
        }
        best_residual = best_residual.min(residual);

        let g = fields::gradient(mesh, u)?;
        let gscale = {
            let m = g.magnitudes().iter().fold(0.0_f64, |a, &v| a.max(v));
            if m > 0.0 {
                m
            } else {
                1.0
            }
        };
        let h = assembler.hessian(mesh, &g, config, 1e-8 * gscale);
        let neg_r: Vec<f64> = r.values().iter().map(|v| -v).collect();
        let cg = pcg(h, &neg_r, &vec![0.0; n], 1e-10, 40 * n + 200, project.as_deref());
        let mut delta = cg.x;
        let mut slope = dot_c(r.values(), &delta);
        if !(slope < 0.0) {
            // Newton model not usable: fall back to steepest descent
            delta = neg_r.clone();
            slope = -residual * residual;
        }

        // backtracking with the Armijo condition
        let e0 = *trace.last().unwrap();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = u.clone();
            for (tv, dv) in trial.values_mut().iter_mut().zip(&delta) {
                *tv += step * dv;
            }
            enforce_gauge(mesh, config.bc_mode, &mut trial);
            let e1 = energy(mesh, &trial, f, config)?;
            if e1 <= e0 + config.line_search_decrease * step * slope {
                *u = trial;
                trace.push(e1);
                accepted = true;
                break;
            }
            step *= config.line_search_shrink;
        }
        iters += 1;
        if !accepted {
            break; // stagnation at rounding level
        }
    }
    Ok((iters, residual, trace))
}

/// Fixed-point solve of −Δ_p u = λ h u^q with 0 < q < p − 1 and h ≥ 0,
/// starting from u₀ = solve(λh); the floor 1e-12·scale prevents 0^q
/// stagnation. Dirichlet mode only.
pub fn solve_semilinear(
    mesh: &Mesh,
    h: &DiscreteFunction,
    lambda: f64,
    q: f64,
    config: &SolverConfig,
) -> Result<SolveOutcome> {
    solve_semilinear_from(mesh, h, lambda, q, config, None)
}

/// As [`solve_semilinear`] but with an explicit first iterate (used to verify
/// uniqueness by comparing distinct initializations).
pub fn solve_semilinear_from(
    mesh: &Mesh,
    h: &DiscreteFunction,
    lambda: f64,
    q: f64,
    config: &SolverConfig,
    initial: Option<&DiscreteFunction>,
) -> Result<SolveOutcome> {
    h.check_mesh(mesh)?;
    config.validate(mesh)?;
    if config.bc_mode != BcMode::DirichletZero {
        return Err(PlapError::invalid("semilinear solve requires dirichlet_zero"));
    }
    if !(q > 0.0 && q < config.p - 1.0) {
        return Err(PlapError::invalid("exponent must satisfy 0 < q < p − 1"));
    }
    if !(lambda > 0.0) {
        return Err(PlapError::invalid("lambda must be positive"));
    }
    if h.values().iter().any(|&v| v < 0.0) {
        return Err(PlapError::invalid("weight h must be nonnegative"));
    }
    if h.max_abs() == 0.0 {
        return Ok(SolveOutcome {
            solution: DiscreteFunction::zeros(mesh),
            iterations: 0,
            final_residual: 0.0,
            energy_trace: vec![0.0],
            converged: true,
        });
    }

    let mut u = match initial {
        Some(w) => {
            w.check_mesh(mesh)?;
            w.clone()
        }
        None => {
            let f0 = h.scaled(lambda);
            solve_weak(mesh, &f0, config)?.solution
        }
    };
    let floor = 1e-12 * u.max_abs().max(1.0);

    let mut last_inner = None;
    let mut gap = f64::INFINITY;
    let mut outer = 0usize;
    while outer < config.max_iter {
        let rhs: Vec<f64> = u
            .values()
            .iter()
            .zip(h.values())
            .map(|(&uv, &hv)| lambda * hv * uv.max(floor).powf(q))
            .collect();
        let f = DiscreteFunction::new(mesh, rhs)?;
        let inner = solve_weak_from(mesh, &f, config, Some(&u))?;
        gap = inner
            .solution
            .values()
            .iter()
            .zip(u.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        u = inner.solution.clone();
        last_inner = Some(inner);
        outer += 1;
        if gap <= config.grad_tol {
            break;
        }
    }
    let inner = last_inner.expect("at least one outer iteration");
    // strip solver-tolerance-sized negative undershoots
    let nonneg: Vec<f64> = u.values().iter().map(|v| v.max(0.0)).collect();
    Ok(SolveOutcome {
        solution: DiscreteFunction::new(mesh, nonneg)?,
        iterations: outer,
        final_residual: gap,
        energy_trace: inner.energy_trace,
        converged: gap <= config.grad_tol,
    })
}

// a(ξ) = |ξ|^{p−2} ξ, with a(0) = 0
fn a_map(xi: &[f64], p: f64) -> Vec<f64> {
    let n = norm_n(xi);
    if n == 0.0 {
        return vec![0.0; xi.len()];
    }
    let s = n.powf(p - 2.0);
    xi.iter().map(|&x| s * x).collect()
}

fn norm_n(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// ⟨|ξ|^{p−2}ξ − |η|^{p−2}η, ξ − η⟩; nonnegative by monotonicity of the
/// p-Laplacian flux.
pub fn monotonicity_pairing(xi: &[f64], eta: &[f64], p: f64) -> Result<f64> {
    if xi.len() != eta.len() {
        return Err(PlapError::invalid("vectors of different lengths"));
    }
    if !(p > 1.0) {
        return Err(PlapError::invalid("p must exceed 1"));
    }
    let ax = a_map(xi, p);
    let ay = a_map(eta, p);
    Ok(xi
        .iter()
        .zip(eta)
        .zip(ax.iter().zip(&ay))
        .map(|((x, y), (a, b))| (a - b) * (x - y))
        .sum())
}

/// Calibration constants for the four inequalities; inputs, not assertions.
#[derive(Debug, Clone, Copy)]
pub struct InequalityConstants {
    /// 1 < p ≤ 2: ⟨a(ξ₁)−a(ξ₂), ξ₁−ξ₂⟩·(|ξ₁|+|ξ₂|)^{2−p} ≥ c·|ξ₁−ξ₂|²
    pub small_strict: f64,
    /// 1 < p ≤ 2: |a(ξ₁)−a(ξ₂)| ≤ c·|ξ₁−ξ₂|^{p−1}
    pub small_lipschitz: f64,
    /// p ≥ 2: c·⟨a(ξ₁)−a(ξ₂), ξ₁−ξ₂⟩ ≥ |ξ₁−ξ₂|^p
    pub large_strict: f64,
    /// p ≥ 2: |a(ξ₁)−a(ξ₂)| ≤ c·(|ξ₁|+|ξ₂|)^{p−2}·|ξ₁−ξ₂|
    pub large_lipschitz: f64,
}

impl InequalityConstants {
    /// Constants admissible for the given p (validated by randomized sweeps).
    pub fn recommended(p: f64) -> Self {
        InequalityConstants {
            small_strict: p - 1.0,
            small_lipschitz: 2.0_f64.powf(2.0 - p),
            large_strict: 2.0_f64.powf(p - 2.0),
            large_lipschitz: p - 1.0,
        }
    }
}

/// Slacks (RHS − LHS, oriented so "valid" means ≥ 0) of the four inequalities.
/// The p ≤ 2 pair is meaningful for p ≤ 2, the p ≥ 2 pair for p ≥ 2.
#[derive(Debug, Clone, Copy)]
pub struct InequalitySlacks {
    pub small_strict: f64,
    pub small_lipschitz: f64,
    pub large_strict: f64,
    pub large_lipschitz: f64,
}

pub fn algebraic_inequalities(
    xi1: &[f64],
    xi2: &[f64],
    p: f64,
    c: &InequalityConstants,
) -> Result<InequalitySlacks> {
    if xi1.len() != xi2.len() {
        return Err(PlapError::invalid("vectors of different lengths"));
    }
    if !(p > 1.0) {
        return Err(PlapError::invalid("p must exceed 1"));
    }
    let d: Vec<f64> = xi1.iter().zip(xi2).map(|(a, b)| a - b).collect();
    let dn = norm_n(&d);
    let sum = norm_n(xi1) + norm_n(xi2);
    if dn == 0.0 || sum == 0.0 {
        return Ok(InequalitySlacks {
            small_strict: 0.0,
            small_lipschitz: 0.0,
            large_strict: 0.0,
            large_lipschitz: 0.0,
        });
    }
    let pairing = monotonicity_pairing(xi1, xi2, p)?;
    let a1 = a_map(xi1, p);
    let a2 = a_map(xi2, p);
    let da = norm_n(&a1.iter().zip(&a2).map(|(x, y)| x - y).collect::<Vec<f64>>());
    Ok(InequalitySlacks {
        small_strict: pairing * sum.powf(2.0 - p) - c.small_strict * dn * dn,
        small_lipschitz: c.small_lipschitz * dn.powf(p - 1.0) - da,
        large_strict: c.large_strict * pairing - dn.powf(p),
        large_lipschitz: c.large_lipschitz * sum.powf(p - 2.0) * dn - da,
    })
}
