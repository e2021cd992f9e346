//! Discrete functions, gradients, truncation and the functional-analytic
//! toolbox: L^p and W^{1,p} norms, distribution functions, weak-Lebesgue
//! (Marcinkiewicz) functionals, layer-cake checks and tail-exponent fits.
//!
//! Superlevel-set measures and ∫|u|^q are computed exactly for the piecewise
//! linear interpolant (subinterval lengths in 1D, polygonal clipping in 2D,
//! closed-form power integrals), not by nodal counting; this is what makes the
//! distribution-function identities verifiable to near machine precision.

use crate::error::PlapError;
use crate::geometry::{fmt17, kahan_sum, Mesh};
use crate::Result;

/// Piecewise-linear function given by one nodal value per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunction {
    mesh_id: u64,
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(PlapError::invalid(format!(
                "nodal vector has {} entries for {} vertices",
                values.len(),
                mesh.n_vertices()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PlapError::invalid("nodal values must be finite"));
        }
        Ok(DiscreteFunction { mesh_id: mesh.id(), values })
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        DiscreteFunction { mesh_id: mesh.id(), values: vec![0.0; mesh.n_vertices()] }
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        DiscreteFunction { mesh_id: mesh.id(), values: vec![c; mesh.n_vertices()] }
    }

    /// Samples `f` at vertex positions (embedding coordinates).
    pub fn from_fn(mesh: &Mesh, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..mesh.n_vertices()).map(|i| f(mesh.vertex(i))).collect();
        DiscreteFunction { mesh_id: mesh.id(), values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.values.len() != mesh.n_vertices() {
            return Err(PlapError::MeshMismatch);
        }
        Ok(())
    }

    pub fn same_mesh(&self, other: &DiscreteFunction) -> Result<()> {
        if self.mesh_id != other.mesh_id {
            return Err(PlapError::MeshMismatch);
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// a·self + b·other, nodewise.
    pub fn axpy(&self, a: f64, other: &DiscreteFunction, b: f64) -> Result<DiscreteFunction> {
        self.same_mesh(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(DiscreteFunction { mesh_id: self.mesh_id, values })
    }

    pub fn scaled(&self, a: f64) -> DiscreteFunction {
        DiscreteFunction {
            mesh_id: self.mesh_id,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// CSV serialization with header `node_index,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node_index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i, fmt17(*v)));
        }
        s
    }
}

/// Cellwise-constant tangent vectors (the gradient of a P1 function).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    mesh_id: u64,
    vectors: Vec<[f64; 2]>,
}

impl GradientField {
    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh_id != mesh.id() || self.vectors.len() != mesh.n_cells() {
            return Err(PlapError::MeshMismatch);
        }
        Ok(())
    }

    /// |∇u| per cell.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.vectors.iter().map(|g| norm2(*g)).collect()
    }
}

/// Sampled distribution function k ↦ meas{|u| > k}.
#[derive(Debug, Clone)]
pub struct DistributionCurve {
    pub thresholds: Vec<f64>,
    pub measures: Vec<f64>,
}

impl DistributionCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,measure\n");
        for (k, m) in self.thresholds.iter().zip(&self.measures) {
            s.push_str(&format!("{},{}\n", fmt17(*k), fmt17(*m)));
        }
        s
    }
}

pub fn norm2(g: [f64; 2]) -> f64 {
    (g[0] * g[0] + g[1] * g[1]).sqrt()
}

pub fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Nodal truncation T_k: clamps values to [−k, k].
pub fn truncate(u: &DiscreteFunction, k: f64) -> Result<DiscreteFunction> {
    if !(k > 0.0) {
        return Err(PlapError::invalid("truncation height k must be positive"));
    }
    Ok(DiscreteFunction {
        mesh_id: u.mesh_id,
        values: u.values.iter().map(|&v| v.clamp(-k, k)).collect(),
    })
}

/// Per-cell constant gradient of the P1 interpolant.
pub fn gradient(mesh: &Mesh, u: &DiscreteFunction) -> Result<GradientField> {
    u.check_mesh(mesh)?;
    let mut vectors = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let mut g = [0.0, 0.0];
        for (local, &v) in mesh.cell(c).iter().enumerate() {
            let bg = mesh.basis_gradients(c)[local];
            g[0] += u.values[v] * bg[0];
            g[1] += u.values[v] * bg[1];
        }
        vectors.push(g);
    }
    Ok(GradientField { mesh_id: mesh.id(), vectors })
}

/// Discrepancy report for the identity ∇T_k(u) = ∇u·1_{|u|<k}.
#[derive(Debug, Clone, Copy)]
pub struct TruncationGradientReport {
    /// max |∇T_k(u) − ∇u| over cells with all nodal values strictly below k.
    pub interior_discrepancy: f64,
    /// max |∇T_k(u)| over cells with all nodal values strictly above k.
    pub exterior_discrepancy: f64,
    /// cells crossed by the level set, where the discrete identity fails.
    pub mixed_cells: usize,
}

pub fn truncation_gradient_check(
    mesh: &Mesh,
    u: &DiscreteFunction,
    k: f64,
) -> Result<TruncationGradientReport> {
    if !(k > 0.0) {
        return Err(PlapError::invalid("k must be positive"));
    }
    let gu = gradient(mesh, u)?;
    let gt = gradient(mesh, &truncate(u, k)?)?;
    let mut interior: f64 = 0.0;
    let mut exterior: f64 = 0.0;
    let mut mixed = 0usize;
    for c in 0..mesh.n_cells() {
        let vals: Vec<f64> = mesh.cell(c).iter().map(|&v| u.values[v].abs()).collect();
        if vals.iter().all(|&v| v < k) {
            let d = [gt.vectors[c][0] - gu.vectors[c][0], gt.vectors[c][1] - gu.vectors[c][1]];
            interior = interior.max(norm2(d));
        } else if vals.iter().all(|&v| v > k) {
            exterior = exterior.max(norm2(gt.vectors[c]));
        } else {
            mixed += 1;
        }
    }
    Ok(TruncationGradientReport {
        interior_discrepancy: interior,
        exterior_discrepancy: exterior,
        mixed_cells: mixed,
    })
}

// ---- exact ∫|u|^q for P1 interpolants -------------------------------------

fn pow_abs(x: f64, q: f64) -> f64 {
    x.abs().powf(q)
}

// F' = |x|^q with F(x) = x|x|^q/(q+1)
fn f_prim(x: f64, q: f64) -> f64 {
    x * pow_abs(x, q) / (q + 1.0)
}

// G' = F with G(x) = |x|^{q+2}/((q+1)(q+2))
fn g_prim(x: f64, q: f64) -> f64 {
    pow_abs(x, q + 2.0) / ((q + 1.0) * (q + 2.0))
}

// divided difference (G(y)−G(x))/(y−x), midpoint fallback near coincidence
fn dd_g(x: f64, y: f64, q: f64) -> f64 {
    let scale = x.abs().max(y.abs());
    if (y - x).abs() <= 1e-9 * scale {
        f_prim(0.5 * (x + y), q)
    } else {
        (g_prim(y, q) - g_prim(x, q)) / (y - x)
    }
}

/// Exact ∫_cell |u|^q for one segment, u linear between a and b.
fn segment_abs_pow(a: f64, b: f64, length: f64, q: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        return 0.0;
    }
    if (b - a).abs() <= 1e-7 * scale {
        return length * pow_abs(0.5 * (a + b), q);
    }
    length * (f_prim(b, q) - f_prim(a, q)) / (b - a)
}

/// Exact ∫_cell |u|^q for one triangle with nodal values (v0, v1, v2).
fn triangle_abs_pow(v: [f64; 3], area: f64, q: f64) -> f64 {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let spread =
        v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)) - v.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    if spread <= 1e-7 * scale {
        return area * pow_abs((v[0] + v[1] + v[2]) / 3.0, q);
    }
    // pick the most separated pair as (w0, w2) so the outer division is stable
    let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
    let (i, j) = pairs
        .into_iter()
        .max_by(|&(a1, b1), &(a2, b2)| {
            (v[a1] - v[b1]).abs().partial_cmp(&(v[a2] - v[b2]).abs()).unwrap()
        })
        .unwrap();
    let k = 3 - i - j;
    let (w0, w1, w2) = (v[i], v[k], v[j]);
    2.0 * area * (dd_g(w2, w1, q) - dd_g(w0, w1, q)) / (w2 - w0)
}

/// ∫_M |u|^q dσ_g, exact for the P1 interpolant.
pub fn integral_abs_pow(mesh: &Mesh, u: &DiscreteFunction, q: f64) -> Result<f64> {
    u.check_mesh(mesh)?;
    if !(q >= 1.0) {
        return Err(PlapError::invalid("exponent must satisfy q >= 1"));
    }
    let terms = (0..mesh.n_cells()).map(|c| {
        let cell = mesh.cell(c);
        let vol = mesh.cell_volume(c);
        match cell.len() {
            2 => segment_abs_pow(u.values[cell[0]], u.values[cell[1]], vol, q),
            3 => triangle_abs_pow(
                [u.values[cell[0]], u.values[cell[1]], u.values[cell[2]]],
                vol,
                q,
            ),
            _ => unreachable!(),
        }
    });
    Ok(kahan_sum(terms))
}

/// ‖u‖_{L^p(M)} = (∫|u|^p dσ_g)^{1/p}.
pub fn lp_norm(mesh: &Mesh, u: &DiscreteFunction, p: f64) -> Result<f64> {
    Ok(integral_abs_pow(mesh, u, p)?.powf(1.0 / p))
}

/// ‖∇u‖_{L^p(M)}; the gradient is cellwise constant, so this is exact.
pub fn grad_lp_norm(mesh: &Mesh, g: &GradientField, p: f64) -> Result<f64> {
    g.check_mesh(mesh)?;
    if !(p >= 1.0) {
        return Err(PlapError::invalid("exponent must satisfy p >= 1"));
    }
    let sum = kahan_sum(
        g.vectors
            .iter()
            .zip(mesh.cell_volumes())
            .map(|(v, vol)| norm2(*v).powf(p) * vol),
    );
    Ok(sum.powf(1.0 / p))
}

/// ‖u‖_{W^{1,p}} = ‖∇u‖_p + ‖u‖_p.
pub fn w1p_norm(mesh: &Mesh, u: &DiscreteFunction, p: f64) -> Result<f64> {
    let g = gradient(mesh, u)?;
    Ok(grad_lp_norm(mesh, &g, p)? + lp_norm(mesh, u, p)?)
}

// ---- superlevel geometry ---------------------------------------------------

// fraction of a segment where the linear function exceeds k
fn frac_gt_segment(a: f64, b: f64, k: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if hi <= k {
        0.0
    } else if lo >= k {
        1.0
    } else {
        (hi - k) / (hi - lo)
    }
}

// fraction of a triangle where the linear function exceeds k
fn frac_gt_triangle(vals: [f64; 3], k: f64) -> f64 {
    let mut v = vals;
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v[2] <= k {
        0.0
    } else if v[0] >= k {
        1.0
    } else if k >= v[1] {
        (v[2] - k) * (v[2] - k) / ((v[2] - v[0]) * (v[2] - v[1]))
    } else {
        1.0 - (k - v[0]) * (k - v[0]) / ((v[1] - v[0]) * (v[2] - v[0]))
    }
}

/// Fraction of a cell where |interpolant| > k, exact for linear interpolants.
pub fn cell_fraction_abs_above(vals: &[f64], k: f64) -> f64 {
    match vals.len() {
        2 => {
            frac_gt_segment(vals[0], vals[1], k) + frac_gt_segment(-vals[0], -vals[1], k)
        }
        3 => {
            let v = [vals[0], vals[1], vals[2]];
            frac_gt_triangle(v, k) + frac_gt_triangle([-v[0], -v[1], -v[2]], k)
        }
        _ => unreachable!(),
    }
}

/// meas{|u| > k} with respect to dσ_g, exact for the P1 interpolant.
pub fn superlevel_measure(mesh: &Mesh, u: &DiscreteFunction, k: f64) -> Result<f64> {
    u.check_mesh(mesh)?;
    Ok(kahan_sum((0..mesh.n_cells()).map(|c| {
        let vals: Vec<f64> = mesh.cell(c).iter().map(|&v| u.values[v]).collect();
        mesh.cell_volume(c) * cell_fraction_abs_above(&vals, k)
    })))
}

/// Samples the distribution function φ_u on the given thresholds.
pub fn distribution_function(
    mesh: &Mesh,
    u: &DiscreteFunction,
    thresholds: &[f64],
) -> Result<DistributionCurve> {
    if thresholds.is_empty() {
        return Err(PlapError::invalid("empty threshold grid"));
    }
    if thresholds[0] <= 0.0 || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PlapError::invalid(
            "thresholds must be strictly increasing and positive",
        ));
    }
    let measures = thresholds
        .iter()
        .map(|&k| superlevel_measure(mesh, u, k))
        .collect::<Result<Vec<f64>>>()?;
    Ok(DistributionCurve { thresholds: thresholds.to_vec(), measures })
}

/// Default 64-point log-spaced threshold grid over the range of |u|.
pub fn default_thresholds(u: &DiscreteFunction, count: usize) -> Vec<f64> {
    log_spaced_thresholds(u, count)
}

pub fn log_spaced_thresholds(u: &DiscreteFunction, count: usize) -> Vec<f64> {
    let hi = u.max_abs();
    if hi == 0.0 {
        return vec![1.0];
    }
    let lo_pos = u
        .values()
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let lo = lo_pos.max(hi * 1e-6);
    if lo >= hi {
        return vec![hi];
    }
    let (lln, hln) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (lln + (hln - lln) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Weak-Lebesgue functional sup_k k^q φ(k) over the sampled grid; a lower
/// bound for the inf-C constant in φ(k) ≤ C k^{−q}.
pub fn marcinkiewicz_norm(curve: &DistributionCurve, q: f64) -> Result<f64> {
    if curve.thresholds.is_empty() {
        return Err(PlapError::invalid("empty distribution curve"));
    }
    if !(q > 0.0) {
        return Err(PlapError::invalid("q must be positive"));
    }
    Ok(curve
        .thresholds
        .iter()
        .zip(&curve.measures)
        .map(|(k, m)| k.powf(q) * m)
        .fold(0.0, f64::max))
}

/// Layer-cake identity ∫|u|^q = q ∫ t^{q−1} φ_u(t) dt. Returns (lhs, rhs).
///
/// The right side integrates φ against the exact measure d(t^q) with midpoint
/// sampling on a uniform grid over [0, max|u|], which is exact whenever φ is
/// constant between grid midpoints (in particular for constant u).
pub fn layer_cake_check(
    mesh: &Mesh,
    u: &DiscreteFunction,
    q: f64,
    n_thresholds: usize,
) -> Result<(f64, f64)> {
    if !(q >= 1.0) {
        return Err(PlapError::invalid("q must satisfy q >= 1"));
    }
    if n_thresholds == 0 {
        return Err(PlapError::invalid("n_thresholds must be positive"));
    }
    let lhs = integral_abs_pow(mesh, u, q)?;
    let top = u.max_abs();
    if top == 0.0 {
        return Ok((0.0, 0.0));
    }
    let dt = top / n_thresholds as f64;
    let rhs = kahan_sum((0..n_thresholds).map(|i| {
        let t0 = i as f64 * dt;
        let t1 = t0 + dt;
        let mid = 0.5 * (t0 + t1);
        let phi = superlevel_measure(mesh, u, mid).expect("checked mesh");
        phi * (t1.powf(q) - t0.powf(q))
    }));
    Ok((lhs, rhs))
}

/// Least-squares fit of log φ against log k on [k_lo, k_hi].
/// Returns (slope, intercept, r²); slope estimates −q for φ ~ C k^{−q}.
pub fn tail_exponent_fit(
    curve: &DistributionCurve,
    k_lo: f64,
    k_hi: f64,
) -> Result<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = curve
        .thresholds
        .iter()
        .zip(&curve.measures)
        .filter(|(&k, &m)| k >= k_lo && k <= k_hi && m > 0.0)
        .map(|(&k, &m)| (k.ln(), m.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(PlapError::Degenerate(format!(
            "tail fit needs >= 4 positive samples in window, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(PlapError::Degenerate("tail fit window has a single k".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((slope, intercept, r2))
}

/// ‖u − mean(u)‖_p / ‖∇u‖_p, the discrete Poincaré quotient.
pub fn poincare_ratio(mesh: &Mesh, u: &DiscreteFunction, p: f64) -> Result<f64> {
    let g = gradient(mesh, u)?;
    let gn = grad_lp_norm(mesh, &g, p)?;
    if gn == 0.0 {
        return Err(PlapError::Degenerate("poincare ratio of a constant function".into()));
    }
    let mean = mesh.mean(u.values());
    let centered = DiscreteFunction::new(mesh, u.values().iter().map(|v| v - mean).collect())?;
    Ok(lp_norm(mesh, &centered, p)? / gn)
}
