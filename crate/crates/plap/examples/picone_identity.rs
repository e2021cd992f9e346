//! The discrete Picone inequality: nonnegativity of the cellwise field L,
//! exactness of the chain-rule identity L = R, and the four algebraic
//! inequalities for the monotone map a(ξ) = |ξ|^{p−2}ξ.

use plap::fields::DiscreteFunction;
use plap::geometry::Mesh;
use plap::picone::{self, PiconeMode};
use plap::solver::{self, InequalityConstants};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> plap::Result<()> {
    let mesh = Mesh::flat_torus(32, 32, 1.0, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    for p in [1.3, 2.0, 4.0] {
        let mut worst_gap: f64 = 0.0;
        let mut min_l = f64::INFINITY;
        for _ in 0..100 {
            let u = DiscreteFunction::new(
                &mesh,
                (0..mesh.n_vertices()).map(|_| rng.gen_range(0.0..2.0)).collect(),
            )?;
            let v = DiscreteFunction::new(
                &mesh,
                (0..mesh.n_vertices()).map(|_| rng.gen_range(0.5..2.5)).collect(),
            )?;
            let field = picone::picone_pointwise(&mesh, &u, &v, p, PiconeMode::ChainRule)?;
            worst_gap = worst_gap.max(field.max_identity_gap());
            min_l = min_l.min(field.min_l());
        }
        println!("p = {p}: max |L − R| = {worst_gap:.3e}, min L = {min_l:.3e}");
    }

    println!("\nalgebraic inequality slacks (min over 10000 random pairs, valid means >= 0):");
    for p in [1.3, 1.7, 2.0, 2.6, 4.0] {
        let c = InequalityConstants::recommended(p);
        let mut mins = [f64::INFINITY; 4];
        for _ in 0..10_000 {
            let xi1: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let xi2: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let s = solver::algebraic_inequalities(&xi1, &xi2, p, &c)?;
            if p <= 2.0 {
                mins[0] = mins[0].min(s.small_strict);
                mins[1] = mins[1].min(s.small_lipschitz);
            }
            if p >= 2.0 {
                mins[2] = mins[2].min(s.large_strict);
                mins[3] = mins[3].min(s.large_lipschitz);
            }
        }
        print!("  p = {p:<4}");
        if p <= 2.0 {
            print!("  strict(p<=2) = {:>10.3e}  lipschitz(p<=2) = {:>10.3e}", mins[0], mins[1]);
        }
        if p >= 2.0 {
            print!("  strict(p>=2) = {:>10.3e}  lipschitz(p>=2) = {:>10.3e}", mins[2], mins[3]);
        }
        println!();
    }
    Ok(())
}
