//! Mesh-refinement study on the interval: errors against the closed-form
//! solution and the fitted convergence order for several p.

use plap::fields::DiscreteFunction;
use plap::geometry::Mesh;
use plap::runner::exact_interval_solution;
use plap::solver::{self, SolverConfig};

fn main() -> plap::Result<()> {
    let sizes = [32usize, 64, 128, 256];
    let length = 1.0;
    let c = 1.0;

    for p in [1.5, 2.0, 3.0] {
        let config = SolverConfig::new(p);
        let mut errors = Vec::new();
        println!("p = {p}");
        for &n in &sizes {
            let mesh = Mesh::interval(n, length)?;
            let f = DiscreteFunction::constant(&mesh, c);
            let out = solver::solve_weak(&mesh, &f, &config)?;
            // measure at nodes and cell midpoints of the P1 interpolant
            let mut err: f64 = 0.0;
            for i in 0..mesh.n_vertices() {
                let x = mesh.vertex(i)[0];
                err = err.max((out.solution.values()[i] - exact_interval_solution(x, length, c, p)).abs());
            }
            for cell in 0..mesh.n_cells() {
                let [a, b] = [mesh.cell(cell)[0], mesh.cell(cell)[1]];
                let xm = 0.5 * (mesh.vertex(a)[0] + mesh.vertex(b)[0]);
                let um = 0.5 * (out.solution.values()[a] + out.solution.values()[b]);
                err = err.max((um - exact_interval_solution(xm, length, c, p)).abs());
            }
            println!("  n = {n:>4}  error = {err:.4e}");
            errors.push(err);
        }
        // log-log least-squares slope of error vs h
        let pts: Vec<(f64, f64)> = sizes
            .iter()
            .zip(&errors)
            .map(|(&n, &e)| ((length / n as f64).ln(), e.ln()))
            .collect();
        let m = pts.len() as f64;
        let (sx, sy): (f64, f64) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
        let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
        let order = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        println!("  fitted order: {order:.3}\n");
    }
    Ok(())
}
