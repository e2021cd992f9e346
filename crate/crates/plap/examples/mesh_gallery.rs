//! The three built-in mesh families (interval, flat torus, icosphere),
//! text-format round-tripping, and a weak solve on the sphere.

use plap::fields::DiscreteFunction;
use plap::geometry::Mesh;
use plap::solver::{self, BcMode, SolverConfig};

fn main() -> plap::Result<()> {
    let interval = Mesh::interval(64, 2.0)?;
    let torus = Mesh::flat_torus(24, 24, 1.0, 1.5)?;
    let sphere = Mesh::icosphere(3, 1.0)?;

    for (name, m) in [("interval", &interval), ("flat torus", &torus), ("icosphere", &sphere)] {
        println!(
            "{name:<11} dim {}  vertices {:>5}  cells {:>5}  volume {:.6}  closed: {}",
            m.dimension(),
            m.n_vertices(),
            m.n_cells(),
            m.volume(),
            m.is_closed()
        );
    }
    println!("(icosphere area vs 4π: {:.4e})", (sphere.volume() - 4.0 * std::f64::consts::PI).abs());

    // text round trip
    let dir = std::env::temp_dir().join("plap_mesh_gallery");
    std::fs::create_dir_all(&dir).map_err(plap::PlapError::from)?;
    let path = dir.join("torus.mesh");
    torus.save(&path)?;
    let back = Mesh::load(&path)?;
    println!(
        "round trip: {} vertices, volume drift {:.3e}",
        back.n_vertices(),
        (back.volume() - torus.volume()).abs()
    );

    // a zero-mean solve on the closed sphere surface
    let f = DiscreteFunction::from_fn(&sphere, |pt| pt[2]); // first spherical harmonic
    let config = SolverConfig::new(2.0).with_bc(BcMode::ZeroMean);
    let out = solver::solve_weak(&sphere, &f, &config)?;
    // for p = 2 on the unit sphere, −Δu = Y₁ gives u = Y₁/2
    let mut err: f64 = 0.0;
    for i in 0..sphere.n_vertices() {
        err = err.max((out.solution.values()[i] - 0.5 * sphere.vertex(i)[2]).abs());
    }
    println!("sphere solve: converged = {}, max |u − z/2| = {err:.3e}", out.converged);
    Ok(())
}
