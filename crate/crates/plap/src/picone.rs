//! Picone quantities for the p-Laplacian: the pointwise identity
//! L(u,v) = R(u,v) with L ≥ 0, the integral inequality
//! ∫|∇u|^p ≥ ∫(u^p/v^{p−1})(−Δ_p v), and the comparison harness for the
//! concave semilinear problem.

use crate::error::PlapError;
use crate::fields::{self, dot2, norm2, DiscreteFunction};
use crate::geometry::{fmt17, kahan_sum, Mesh};
use crate::solver::{self, SolverConfig};
use crate::Result;

/// How the zeroth-order factors and ∇(u^p/v^{p−1}) are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiconeMode {
    /// expand ∇(u^p/v^{p−1}) analytically with cell-averaged u, v; makes
    /// L = R an algebraic identity per cell
    ChainRule,
    /// interpolate u^p/v^{p−1} nodally, then differentiate; L − R measures
    /// the interpolation commutator
    Interpolated,
}

/// Per-cell L and R values with a validity mask (v above the positivity
/// floor on every node of the cell).
#[derive(Debug, Clone)]
pub struct PiconeField {
    mesh_id: u64,
    pub l_values: Vec<f64>,
    pub r_values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl PiconeField {
    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn min_l(&self) -> f64 {
        self.l_values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .map(|(l, _)| *l)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_identity_gap(&self) -> f64 {
        self.l_values
            .iter()
            .zip(&self.r_values)
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .map(|((l, r), _)| (l - r).abs())
            .fold(0.0, f64::max)
    }

    /// CSV serialization with header `cell_index,L,R,valid`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell_index,L,R,valid\n");
        for i in 0..self.l_values.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                i,
                fmt17(self.l_values[i]),
                fmt17(self.r_values[i]),
                if self.valid[i] { 1 } else { 0 }
            ));
        }
        s
    }
}

const FLOOR_FACTOR: f64 = 1e-8;

/// Evaluates L(u,v) = |∇u|^p + (p−1)(u/v)^p|∇v|^p − p(u/v)^{p−1}|∇v|^{p−2}∇v·∇u
/// and R(u,v) = |∇u|^p − |∇v|^{p−2}∇v·∇(u^p/v^{p−1}) per cell.
pub fn picone_pointwise(
    mesh: &Mesh,
    u: &DiscreteFunction,
    v: &DiscreteFunction,
    p: f64,
    mode: PiconeMode,
) -> Result<PiconeField> {
    u.check_mesh(mesh)?;
    v.check_mesh(mesh)?;
    if !(p > 1.0) {
        return Err(PlapError::invalid("p must exceed 1"));
    }
    if u.values().iter().any(|&x| x < 0.0) {
        return Err(PlapError::invalid("u must be nonnegative"));
    }
    let vmax = v.values().iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if !(vmax > 0.0) {
        return Err(PlapError::invalid("v must be positive somewhere"));
    }
    let floor = FLOOR_FACTOR * vmax;

    let gu = fields::gradient(mesh, u)?;
    let gv = fields::gradient(mesh, v)?;
    // nodal interpolant of u^p / v^{p-1} (only used in interpolated mode)
    let w: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(&uv, &vv)| {
            if vv <= floor {
                0.0
            } else {
                uv.powf(p) / vv.powf(p - 1.0)
            }
        })
        .collect();
    let gw = fields::gradient(mesh, &DiscreteFunction::new(mesh, w)?)?;

    let n = mesh.n_cells();
    let mut l_values = vec![0.0; n];
    let mut r_values = vec![0.0; n];
    let mut valid = vec![false; n];
    for c in 0..n {
        let cell = mesh.cell(c);
        if cell.iter().any(|&i| v.values()[i] <= floor) {
            continue;
        }
        valid[c] = true;
        let ubar: f64 = cell.iter().map(|&i| u.values()[i]).sum::<f64>() / cell.len() as f64;
        let vbar: f64 = cell.iter().map(|&i| v.values()[i]).sum::<f64>() / cell.len() as f64;
        let k = ubar / vbar;
        let gvc = gv.vectors()[c];
        let guc = gu.vectors()[c];
        let gvn = norm2(gvc);
        let gun = norm2(guc);
        let s = if gvn == 0.0 { 0.0 } else { gvn.powf(p - 2.0) };
        l_values[c] = gun.powf(p) + (p - 1.0) * k.powf(p) * gvn.powf(p)
            - p * k.powf(p - 1.0) * s * dot2(gvc, guc);
        let grad_w = match mode {
            PiconeMode::ChainRule => {
                // ∇(u^p/v^{p−1}) with cell-averaged zeroth-order factors
                let a = p * k.powf(p - 1.0);
                let b = (p - 1.0) * k.powf(p);
                [a * guc[0] - b * gvc[0], a * guc[1] - b * gvc[1]]
            }
            PiconeMode::Interpolated => gw.vectors()[c],
        };
        r_values[c] = gun.powf(p) - s * dot2(gvc, grad_w);
    }
    Ok(PiconeField { mesh_id: mesh.id(), l_values, r_values, valid })
}

/// Integral Picone inequality: returns (∫|∇u|^p, ∫|∇v|^{p−2}∇v·∇w) with
/// w the nodal interpolant of u^p/v^{p−1}; lhs ≥ rhs up to interpolation
/// error. `u` must vanish on boundary nodes; `v` must exceed the floor
/// everywhere.
pub fn picone_integral(
    mesh: &Mesh,
    u: &DiscreteFunction,
    v: &DiscreteFunction,
    p: f64,
) -> Result<(f64, f64)> {
    u.check_mesh(mesh)?;
    v.check_mesh(mesh)?;
    if !(p > 1.0) {
        return Err(PlapError::invalid("p must exceed 1"));
    }
    if u.values().iter().any(|&x| x < 0.0) {
        return Err(PlapError::invalid("u must be nonnegative"));
    }
    let scale = u.max_abs().max(1.0);
    for &b in mesh.boundary_nodes() {
        if u.values()[b].abs() > 1e-12 * scale {
            return Err(PlapError::invalid("u must vanish on boundary nodes"));
        }
    }
    let vmax = v.values().iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let floor = FLOOR_FACTOR * vmax.max(0.0);
    if v.values().iter().any(|&x| x <= floor) {
        return Err(PlapError::Degenerate("v falls below the positivity floor".into()));
    }

    let gu = fields::gradient(mesh, u)?;
    let gv = fields::gradient(mesh, v)?;
    let w: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(&uv, &vv)| uv.powf(p) / vv.powf(p - 1.0))
        .collect();
    let gw = fields::gradient(mesh, &DiscreteFunction::new(mesh, w)?)?;

    let lhs = kahan_sum(
        gu.vectors()
            .iter()
            .zip(mesh.cell_volumes())
            .map(|(g, vol)| vol * norm2(*g).powf(p)),
    );
    let rhs = kahan_sum((0..mesh.n_cells()).map(|c| {
        let gvc = gv.vectors()[c];
        let gvn = norm2(gvc);
        if gvn == 0.0 {
            0.0
        } else {
            mesh.cell_volume(c) * gvn.powf(p - 2.0) * dot2(gvc, gw.vectors()[c])
        }
    }));
    Ok((lhs, rhs))
}

/// Ordering report of the comparison harness.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonReport {
    /// nodes where supersolution < subsolution − 10·grad_tol
    pub violations: usize,
    /// max over nodes of (subsolution − supersolution); ≤ 0 means clean order
    pub worst_gap: f64,
    /// outer fixed-point iterations of the semilinear solve
    pub fixed_point_iterations: usize,
}

/// Solves −Δ_p u = λ h u^q, forms the subsolution μ·u (μ ≤ 1; a subsolution
/// by concavity of the nonlinearity), and verifies the nodal ordering
/// u ≥ μ·u − 10·grad_tol.
pub fn comparison_check(
    mesh: &Mesh,
    h: &DiscreteFunction,
    lambda: f64,
    q: f64,
    mu: f64,
    config: &SolverConfig,
) -> Result<ComparisonReport> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(PlapError::invalid("mu must lie in (0, 1]"));
    }
    let sup = solver::solve_semilinear(mesh, h, lambda, q, config)?;
    if !sup.converged {
        return Err(PlapError::NonConvergence {
            iterations: sup.iterations,
            residual: sup.final_residual,
        });
    }
    let sub = sup.solution.scaled(mu);
    let slack = 10.0 * config.grad_tol;
    let mut violations = 0usize;
    let mut worst: f64 = f64::NEG_INFINITY;
    for (s, b) in sup.solution.values().iter().zip(sub.values()) {
        let gap = b - s;
        worst = worst.max(gap);
        if gap > slack {
            violations += 1;
        }
    }
    Ok(ComparisonReport {
        violations,
        worst_gap: worst,
        fixed_point_iterations: sup.iterations,
    })
}
