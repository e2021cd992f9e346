//! Acceptance gate: twelve checks spanning the closed-form oracles, the
//! spike benchmark, the identity/inequality sweeps and the CLI contract.
//! Each criterion prints one pass/fail line (visible with `--nocapture`
//! or on failure).

use plap::entropy::{self, ApproximationSchedule, ScheduleMode};
use plap::fields::{self, DiscreteFunction};
use plap::geometry::Mesh;
use plap::picone::{self, PiconeMode};
use plap::runner::{self, exact_interval_solution, Cli, CommonArgs, Command};
use plap::solver::{self, BcMode, InequalityConstants, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Calibrated log-window fractions for the spike-benchmark tail fits.
const U_WINDOW: (f64, f64) = (0.75, 0.95);
const G_WINDOW: (f64, f64) = (0.60, 0.92);

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn record(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{verdict}] {name}: {detail}");
        if !pass {
            self.failures.push(format!("criterion {id} ({name}): {detail}"));
        }
    }
}

fn max_nodal_error(mesh: &Mesh, u: &DiscreteFunction, length: f64, c: f64, p: f64) -> f64 {
    let mut err: f64 = 0.0;
    for i in 0..mesh.n_vertices() {
        let x = mesh.vertex(i)[0];
        err = err.max((u.values()[i] - exact_interval_solution(x, length, c, p)).abs());
    }
    err
}

/// L∞ error sampled at nodes and cell midpoints of the P1 interpolant
/// (for p = 2 the 1D solve is nodally exact, so midpoints carry the error).
fn max_interpolant_error(mesh: &Mesh, u: &DiscreteFunction, length: f64, c: f64, p: f64) -> f64 {
    let mut err = max_nodal_error(mesh, u, length, c, p);
    for cell in 0..mesh.n_cells() {
        let [a, b] = [mesh.cell(cell)[0], mesh.cell(cell)[1]];
        let xm = 0.5 * (mesh.vertex(a)[0] + mesh.vertex(b)[0]);
        let um = 0.5 * (u.values()[a] + u.values()[b]);
        err = err.max((um - exact_interval_solution(xm, length, c, p)).abs());
    }
    err
}

fn lsq_slope(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

fn random_field(mesh: &Mesh, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> DiscreteFunction {
    DiscreteFunction::new(mesh, (0..mesh.n_vertices()).map(|_| rng.gen_range(lo..hi)).collect())
        .unwrap()
}

#[test]
fn acceptance() {
    let mut gate = Gate { failures: Vec::new() };

    // 1. closed-form weak solve on the interval at n = 256
    {
        let mesh = Mesh::interval(256, 1.0).unwrap();
        let f = DiscreteFunction::constant(&mesh, 1.0);
        let mut detail = String::new();
        let mut pass = true;
        for (p, tol) in [(2.0, 1e-4), (1.5, 1e-3), (3.0, 1e-3)] {
            let out = solver::solve_weak(&mesh, &f, &SolverConfig::new(p)).unwrap();
            let err = max_nodal_error(&mesh, &out.solution, 1.0, 1.0, p);
            pass &= out.converged && err <= tol;
            detail.push_str(&format!("p={p} err={err:.2e} (tol {tol:.0e}); "));
        }
        gate.record(1, "closed-form solve", pass, detail);
    }

    // 2. convergence order over n in {32, 64, 128, 256}
    {
        let mut detail = String::new();
        let mut pass = true;
        for (p, min_order) in [(2.0, 1.5), (1.5, 1.0), (3.0, 1.0)] {
            let mut pts = Vec::new();
            for n in [32usize, 64, 128, 256] {
                let mesh = Mesh::interval(n, 1.0).unwrap();
                let f = DiscreteFunction::constant(&mesh, 1.0);
                let out = solver::solve_weak(&mesh, &f, &SolverConfig::new(p)).unwrap();
                let err = max_interpolant_error(&mesh, &out.solution, 1.0, 1.0, p).max(1e-16);
                pts.push(((1.0 / n as f64).ln(), err.ln()));
            }
            let order = lsq_slope(&pts);
            pass &= order >= min_order;
            detail.push_str(&format!("p={p} order={order:.2} (min {min_order}); "));
        }
        gate.record(2, "convergence order", pass, detail);
    }

    // 3 + 4. spike benchmark: a-priori ratios and tail decay exponents
    {
        let mesh = Mesh::flat_torus(100, 100, 1.0, 1.0).unwrap();
        let config = SolverConfig::new(1.5).with_bc(BcMode::ZeroMean);
        let f = entropy::spike_datum(&mesh, runner::center_vertex(&mesh), true).unwrap();
        let fmax = f.max_abs();
        let levels: Vec<f64> =
            (0..7).map(|i| 4.0_f64.powi(i) * fmax / 4.0_f64.powi(6)).collect();
        let schedule = ApproximationSchedule::new(levels, ScheduleMode::ClipAndRescale).unwrap();
        let report = entropy::run_approximation_with_windows(
            &mesh, &f, &schedule, &config, U_WINDOW, G_WINDOW,
        )
        .unwrap();

        let worst_ratio = report
            .stages
            .iter()
            .filter(|s| s.converged)
            .fold(0.0_f64, |m, s| m.max(s.apriori_max_ratio));
        let any_converged = report.stages.iter().any(|s| s.converged);
        gate.record(
            3,
            "a-priori estimate",
            any_converged && worst_ratio <= 1.05,
            format!("max ratio over converged stages = {worst_ratio:.4} (bound 1.05)"),
        );

        let u_exp = report.u_tail_fit.fitted_exponent.unwrap_or(f64::NAN);
        let g_exp = report.grad_tail_fit.fitted_exponent.unwrap_or(f64::NAN);
        let u_rel = (u_exp - 2.0).abs() / 2.0;
        let g_rel = (g_exp - 1.0).abs() / 1.0;
        gate.record(
            4,
            "decay exponents",
            mesh.n_cells() >= 20_000 && u_rel <= 0.15 && g_rel <= 0.20,
            format!(
                "u: {u_exp:.3} vs 2.0 ({:.1}%, max 15%); grad: {g_exp:.3} vs 1.0 ({:.1}%, max 20%)",
                100.0 * u_rel,
                100.0 * g_rel
            ),
        );
    }

    // 5. entropy certificate on bounded data, and its noise sensitivity
    {
        let mut pass = true;
        let mut detail = String::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cases: Vec<(Mesh, DiscreteFunction, SolverConfig)> = vec![
            {
                let m = Mesh::interval(128, 1.0).unwrap();
                let f = DiscreteFunction::constant(&m, 1.0);
                (m, f, SolverConfig::new(1.5))
            },
            {
                let m = Mesh::flat_torus(48, 48, 1.0, 1.0).unwrap();
                let two_pi = 2.0 * std::f64::consts::PI;
                let f = DiscreteFunction::from_fn(&m, |pt| {
                    (two_pi * pt[0]).sin() * (two_pi * pt[1]).cos()
                });
                (m, f, SolverConfig::new(2.5).with_bc(BcMode::ZeroMean))
            },
        ];
        for (mesh, f, config) in &cases {
            let out = solver::solve_weak(mesh, f, config).unwrap();
            let u = &out.solution;
            let bank = entropy::default_test_bank(mesh, u);
            let k_grid = entropy::certificate_k_grid(u, &bank);
            let cert = entropy::entropy_certificate(mesh, u, f, &k_grid, &bank, config.p).unwrap();

            let kmax = k_grid.iter().fold(0.0_f64, |m, &k| m.max(k));
            let phimax = bank.iter().fold(0.0_f64, |m, (_, phi)| m.max(phi.max_abs()));
            let f_l1 = fields::integral_abs_pow(mesh, f, 1.0).unwrap();
            let bound = 50.0 * config.grad_tol * (kmax + phimax) * f_l1;

            let scale = u.max_abs().max(1e-12);
            let noisy = DiscreteFunction::new(
                mesh,
                u.values().iter().map(|&v| v + 1e-3 * scale * rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let noisy_cert =
                entropy::entropy_certificate(mesh, &noisy, f, &k_grid, &bank, config.p).unwrap();

            let ok = out.converged
                && cert.max_abs_residual <= bound
                && noisy_cert.max_abs_residual >= 10.0 * cert.max_abs_residual;
            pass &= ok;
            detail.push_str(&format!(
                "p={}: cert={:.2e} bound={:.2e} noisy={:.2e}; ",
                config.p, cert.max_abs_residual, bound, noisy_cert.max_abs_residual
            ));
        }
        gate.record(5, "entropy certificate", pass, detail);
    }

    // 6. uniqueness across schedules on the spike benchmark
    {
        let mut pass = true;
        let mut detail = String::new();
        for (p, n, bound) in [(1.5, 64usize, 1e-3), (2.0, 48, 1e-8)] {
            let mesh = Mesh::flat_torus(n, n, 1.0, 1.0).unwrap();
            let config = SolverConfig::new(p).with_bc(BcMode::ZeroMean);
            let f = entropy::spike_datum(&mesh, runner::center_vertex(&mesh), true).unwrap();
            let fmax = f.max_abs();
            let a = ApproximationSchedule::new(
                (0..5).map(|i| fmax * 4.0_f64.powi(i - 4)).collect(),
                ScheduleMode::ClipAndRescale,
            )
            .unwrap();
            let b = ApproximationSchedule::new(
                (0..3).map(|i| fmax * 10.0_f64.powi(i - 2)).collect(),
                ScheduleMode::ClipAndRescale,
            )
            .unwrap();
            let (rep, _, _) = entropy::uniqueness_crosscheck(&mesh, &f, &a, &b, &config).unwrap();
            pass &= rep.rel_l1_gap <= bound;
            detail.push_str(&format!("p={p} rel gap={:.2e} (bound {bound:.0e}); ", rep.rel_l1_gap));
        }
        gate.record(6, "schedule uniqueness", pass, detail);
    }

    // 7. Picone identity in chain-rule mode
    {
        let mesh = Mesh::flat_torus(16, 16, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pass = true;
        let mut detail = String::new();
        for p in [1.3, 2.0, 4.0] {
            let mut max_gap: f64 = 0.0;
            let mut max_l: f64 = 0.0;
            let mut min_l = f64::INFINITY;
            for _ in 0..1000 {
                let u = random_field(&mesh, &mut rng, 0.0, 2.0);
                let v = random_field(&mesh, &mut rng, 0.5, 2.5);
                let field =
                    picone::picone_pointwise(&mesh, &u, &v, p, PiconeMode::ChainRule).unwrap();
                max_gap = max_gap.max(field.max_identity_gap());
                min_l = min_l.min(field.min_l());
                max_l = max_l.max(field.l_values.iter().fold(0.0_f64, |m, &l| m.max(l.abs())));
            }
            // proportional case u = k·v with a smooth moderate-gradient v
            let two_pi = 2.0 * std::f64::consts::PI;
            let mut prop_l: f64 = 0.0;
            for _ in 0..25 {
                let k: f64 = rng.gen_range(0.5..2.0);
                let a: f64 = rng.gen_range(-0.1..0.1);
                let v = DiscreteFunction::from_fn(&mesh, |pt| {
                    1.5 + 0.2 * (two_pi * pt[0]).sin() + a * (two_pi * pt[1]).cos()
                });
                let u = v.scaled(k);
                let field =
                    picone::picone_pointwise(&mesh, &u, &v, p, PiconeMode::ChainRule).unwrap();
                prop_l = prop_l
                    .max(field.l_values.iter().fold(0.0_f64, |m, &l| m.max(l.abs())));
            }
            let ok = max_gap <= 1e-10 * (1.0 + max_l) && min_l >= -1e-12 && prop_l <= 1e-12;
            pass &= ok;
            detail.push_str(&format!(
                "p={p}: gap={max_gap:.1e} (tol {:.1e}), minL={min_l:.1e}, u=kv |L|={prop_l:.1e}; ",
                1e-10 * (1.0 + max_l)
            ));
        }
        gate.record(7, "Picone identity", pass, detail);
    }

    // 8. algebraic inequalities for the monotone map
    {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pass = true;
        let mut worst: f64 = f64::INFINITY;
        for p in [1.3, 1.5, 1.8, 2.0, 2.5, 3.0, 4.0] {
            let c = InequalityConstants::recommended(p);
            for _ in 0..100_000 {
                let xi1: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let xi2: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let s = solver::algebraic_inequalities(&xi1, &xi2, p, &c).unwrap();
                if p <= 2.0 {
                    worst = worst.min(s.small_strict).min(s.small_lipschitz);
                }
                if p >= 2.0 {
                    worst = worst.min(s.large_strict).min(s.large_lipschitz);
                }
                pass &= worst >= -1e-12;
            }
        }
        gate.record(
            8,
            "algebraic inequalities",
            pass,
            format!("min slack over 7e5 pairs = {worst:.2e} (floor -1e-12)"),
        );
    }

    // 9. layer-cake identity
    {
        let mesh1 = Mesh::interval(200, 1.0).unwrap();
        let torus = Mesh::flat_torus(32, 32, 1.0, 1.0).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let cases: Vec<(&str, &Mesh, DiscreteFunction)> = vec![
            ("constant", &mesh1, DiscreteFunction::constant(&mesh1, 2.5)),
            ("linear", &mesh1, DiscreteFunction::from_fn(&mesh1, |pt| pt[0])),
            ("sin", &torus, DiscreteFunction::from_fn(&torus, |pt| (two_pi * pt[0]).sin())),
        ];
        let mut pass = true;
        let mut detail = String::new();
        for (name, mesh, u) in &cases {
            let (lhs, rhs) = fields::layer_cake_check(mesh, u, 2.0, 10_000).unwrap();
            let rel = (lhs - rhs).abs() / lhs.abs().max(1e-300);
            let tol = if *name == "constant" { 1e-12 } else { 1e-3 };
            pass &= rel <= tol;
            detail.push_str(&format!("{name}: rel={rel:.1e} (tol {tol:.0e}); "));
        }
        gate.record(9, "layer-cake identity", pass, detail);
    }

    // 10. semilinear uniqueness and comparison principle
    {
        let mesh = Mesh::interval(128, 1.0).unwrap();
        let h = DiscreteFunction::from_fn(&mesh, |pt| 1.0 + 0.5 * (3.0 * pt[0]).sin().abs());
        let mut pass = true;
        let mut detail = String::new();
        for (p, q, lambda) in [(2.0, 0.5, 1.0), (3.0, 1.0, 2.0)] {
            let config = SolverConfig::new(p);
            let out = solver::solve_semilinear(&mesh, &h, lambda, q, &config).unwrap();
            let init = DiscreteFunction::constant(&mesh, 10.0 * out.solution.max_abs().max(1.0));
            let alt =
                solver::solve_semilinear_from(&mesh, &h, lambda, q, &config, Some(&init)).unwrap();
            let gap = out.solution.axpy(1.0, &alt.solution, -1.0).unwrap().max_abs();
            let mut violations = 0usize;
            for mu in [0.25, 0.5, 1.0] {
                violations +=
                    picone::comparison_check(&mesh, &h, lambda, q, mu, &config).unwrap().violations;
            }
            let ok = out.converged && alt.converged
                && gap <= 10.0 * config.grad_tol
                && violations == 0;
            pass &= ok;
            detail.push_str(&format!(
                "(p={p},q={q}): gap={gap:.1e} (tol {:.0e}), violations={violations}; ",
                10.0 * config.grad_tol
            ));
        }
        gate.record(10, "semilinear uniqueness", pass, detail);
    }

    // 11. weak-Lebesgue embedding
    {
        let mesh = Mesh::flat_torus(24, 24, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pass = true;
        let mut worst_excess = f64::NEG_INFINITY;
        for _ in 0..100 {
            let u = random_field(&mesh, &mut rng, -3.0, 3.0);
            let curve =
                fields::distribution_function(&mesh, &u, &fields::log_spaced_thresholds(&u, 64))
                    .unwrap();
            for q in [1.0, 1.5, 2.0, 3.0] {
                let weak = fields::marcinkiewicz_norm(&curve, q).unwrap();
                let strong = fields::lp_norm(&mesh, &u, q).unwrap().powf(q);
                worst_excess = worst_excess.max(weak - strong);
                pass &= weak <= strong + 1e-10;
            }
        }
        gate.record(
            11,
            "weak-Lebesgue embedding",
            pass,
            format!("max (weak − strong) = {worst_excess:.2e} (tol 1e-10)"),
        );
    }

    // 12. byte-identical determinism of a CLI run
    {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("config.json");
        std::fs::write(
            &config_path,
            r#"{
              "schema": "plap-config/1",
              "mesh": { "family": "interval", "n_cells": 64, "length": 1.0 },
              "data": "constant:1.0",
              "p": 1.5
            }"#,
        )
        .unwrap();
        let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
        for run in 0..2 {
            let out_dir = dir.path().join(format!("run{run}"));
            let cli = Cli {
                command: Command::Estimates(CommonArgs {
                    config: config_path.clone(),
                    out: Some(out_dir.clone()),
                    seed: Some(42),
                }),
            };
            let code = runner::run(cli);
            assert_eq!(code, 0, "estimates run failed");
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
                .unwrap()
                .map(|e| {
                    let e = e.unwrap();
                    (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
                })
                .collect();
            files.sort();
            outputs.push(files);
        }
        let pass = outputs[0] == outputs[1] && !outputs[0].is_empty();
        gate.record(
            12,
            "determinism",
            pass,
            format!("{} artifacts byte-compared across two runs", outputs[0].len()),
        );
    }

    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
