//! Weak solves on an interval with constant data, checked against the
//! closed-form solution u(x) = c^{1/(p−1)} L^{p'} [(1/2)^{p'} − |x/L − 1/2|^{p'}] / p'.

use plap::fields::DiscreteFunction;
use plap::geometry::Mesh;
use plap::runner::exact_interval_solution;
use plap::solver::{self, SolverConfig};

fn main() -> plap::Result<()> {
    let n = 256;
    let length = 1.0;
    let c = 1.0;
    let mesh = Mesh::interval(n, length)?;
    let f = DiscreteFunction::constant(&mesh, c);

    println!("interval, {n} cells, constant data c = {c}");
    println!("{:>5}  {:>10}  {:>6}  {:>12}", "p", "max error", "iters", "residual");
    for p in [1.5, 2.0, 3.0] {
        let config = SolverConfig::new(p);
        let out = solver::solve_weak(&mesh, &f, &config)?;
        let mut err: f64 = 0.0;
        for i in 0..mesh.n_vertices() {
            let x = mesh.vertex(i)[0];
            err = err.max((out.solution.values()[i] - exact_interval_solution(x, length, c, p)).abs());
        }
        println!(
            "{p:>5.2}  {err:>10.3e}  {:>6}  {:>12.3e}  (converged: {})",
            out.iterations, out.final_residual, out.converged
        );
    }
    Ok(())
}
