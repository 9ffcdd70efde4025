//! End-to-end acceptance gate. Each criterion prints a single
//! pass/fail line; the suite fails if any criterion fails.

use std::process::Command;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use curved_rnbp::dynamics::{
    complex_hamiltonian, hamiltonian, hamiltonian_field, potential_closed_form,
    velocity_to_momentum, ProjectedState,
};
use curved_rnbp::equilibria::{
    omega_squared, primary_positions, projected_primaries, residual_check, OmegaSign,
    PolygonConfig,
};
use curved_rnbp::geometry::{cotn, geodesic_distance, unproject, PlanePoint, SpaceSign};
use curved_rnbp::integrate::{
    collision_experiment, restricted_states_at, simulate_primaries, simulate_restricted,
    ChartPolicy, IntegratorSettings, Termination, Trajectory,
};
use curved_rnbp::regularization::{chart_derivative, chart_map, g_polynomial, Chart};

const SPACES: [SpaceSign; 2] = [SpaceSign::Sphere, SpaceSign::Hyperboloid];

fn cfg(space: SpaceSign, n: usize, r: f64) -> PolygonConfig {
    PolygonConfig::new(space, n, r, OmegaSign::Positive).unwrap()
}

/// A random canonical state away from every primary and its inverse.
fn random_state(config: &PolygonConfig, rng: &mut ChaCha8Rng) -> ProjectedState {
    let pp = projected_primaries(config);
    loop {
        let lim = if config.space() == SpaceSign::Hyperboloid { 0.9 } else { 1.6 };
        let u = rng.gen_range(-lim..lim);
        let v = rng.gen_range(-lim..lim);
        let z = Complex64::new(u, v);
        if config.space() == SpaceSign::Hyperboloid && z.norm_sqr() > 0.92 {
            continue;
        }
        let clear = pp
            .w
            .iter()
            .chain(pp.w_hat.iter())
            .map(|w| (z - w).norm())
            .fold(f64::INFINITY, f64::min);
        if clear < 0.05 {
            continue;
        }
        return ProjectedState::new(u, v, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
}

fn report(criterion: usize, label: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("criterion {criterion} ({label}): pass"),
        Err(msg) => {
            println!("criterion {criterion} ({label}): FAIL — {msg}");
            panic!("criterion {criterion} failed: {msg}");
        }
    }
}

fn check(cond: bool, msg: impl Fn() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

#[test]
fn criterion_1_equilibrium_residuals_and_spot_values() {
    report(1, "polygon equilibrium residuals", || {
        for space in SPACES {
            for n in 2..=8usize {
                for r in [0.3, 0.5, 0.7] {
                    let res = residual_check(&cfg(space, n, r));
                    check(res < 1e-9, || {
                        format!("residual {res:e} at ({space}, n={n}, r={r})")
                    })?;
                }
            }
        }
        let spots = [
            (SpaceSign::Sphere, 3, 6.3067),
            (SpaceSign::Sphere, 2, 3.0792),
            (SpaceSign::Hyperboloid, 3, 3.5693),
        ];
        for (space, n, expected) in spots {
            let got = omega_squared(space, n, 0.5).unwrap();
            check((got - expected).abs() / expected < 5e-5, || {
                format!("omega^2({space}, {n}, 0.5) = {got}, expected {expected}")
            })?;
        }
        Ok(())
    });
}

#[test]
fn criterion_2_primaries_rotate_rigidly() {
    report(2, "rigid rotation of the primaries", || {
        // both spaces and both parities across the set
        let configs = [
            (SpaceSign::Sphere, 3, 0.5),
            (SpaceSign::Sphere, 4, 0.7),
            (SpaceSign::Hyperboloid, 2, 0.3),
            (SpaceSign::Hyperboloid, 2, 0.5),
        ];
        let settings = IntegratorSettings::with_tol(1e-12);
        for (space, n, r) in configs {
            let config = cfg(space, n, r);
            let period = 2.0 * std::f64::consts::PI / config.omega();
            let traj = simulate_primaries(&config, 5.0 * period, &settings)
                .map_err(|e| format!("({space}, n={n}, r={r}): {e}"))?;
            check(traj.termination == Termination::Completed, || {
                format!("({space}, n={n}, r={r}) terminated {:?}", traj.termination)
            })?;
            let d0: Vec<(usize, usize, f64)> = {
                let q0 = primary_positions(&config);
                let mut v = Vec::new();
                for i in 0..n {
                    for j in (i + 1)..n {
                        v.push((i, j, geodesic_distance(space, &q0[i], &q0[j]).unwrap()));
                    }
                }
                v
            };
            for sample in &traj.samples {
                for &(i, j, d) in &d0 {
                    let dij = geodesic_distance(space, &sample.bodies[i].q, &sample.bodies[j].q)
                        .unwrap();
                    check((dij - d).abs() < 1e-6, || {
                        format!(
                            "({space}, n={n}, r={r}) pair ({i},{j}) drifted {:e} at t={}",
                            (dij - d).abs(),
                            sample.t
                        )
                    })?;
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_3_closed_form_potential_and_complex_hamiltonian() {
    report(3, "closed-form potential and complex Hamiltonian", || {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for space in SPACES {
            let config = cfg(space, 4, 0.5);
            let primaries = primary_positions(&config);
            for _ in 0..1000 {
                let s = random_state(&config, &mut rng);
                let z = s.complex().z;
                let closed = potential_closed_form(&config, z)
                    .map_err(|e| format!("potential at {z}: {e}"))?;
                let q = unproject(space, &PlanePoint::new(s.u, s.v)).unwrap();
                let mut direct = 0.0;
                for p in &primaries {
                    direct += cotn(space, geodesic_distance(space, &q, p).unwrap()).unwrap();
                }
                let rel = (closed - direct).abs() / direct.abs().max(1.0);
                check(rel <= 1e-10, || {
                    format!("potential mismatch {rel:e} at {z} on {space}")
                })?;
            }
            let config = cfg(space, 3, 0.5);
            for _ in 0..100 {
                let s = random_state(&config, &mut rng);
                let hc = complex_hamiltonian(&config, &s.complex()).unwrap();
                let h = hamiltonian(&config, &s).unwrap();
                check((hc - 2.0 * h).abs() < 1e-12, || {
                    format!("H_c - 2H = {:e} on {space}", hc - 2.0 * h)
                })?;
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_4_field_derivatives_and_energy_drift() {
    report(4, "Hamiltonian field and energy conservation", || {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let h = 1e-6;
        for space in SPACES {
            let config = cfg(space, 3, 0.5);
            for _ in 0..100 {
                let s = random_state(&config, &mut rng);
                let field = hamiltonian_field(&config, &s).unwrap();
                let at = |du: f64, dv: f64, dpu: f64, dpv: f64| {
                    hamiltonian(
                        &config,
                        &ProjectedState::new(s.u + du, s.v + dv, s.p_u + dpu, s.p_v + dpv),
                    )
                    .unwrap()
                };
                let fd = [
                    (at(0.0, 0.0, h, 0.0) - at(0.0, 0.0, -h, 0.0)) / (2.0 * h),
                    (at(0.0, 0.0, 0.0, h) - at(0.0, 0.0, 0.0, -h)) / (2.0 * h),
                    -(at(h, 0.0, 0.0, 0.0) - at(-h, 0.0, 0.0, 0.0)) / (2.0 * h),
                    -(at(0.0, h, 0.0, 0.0) - at(0.0, -h, 0.0, 0.0)) / (2.0 * h),
                ];
                let scale = field.iter().map(|x| x.abs()).fold(1.0, f64::max);
                for (a, b) in field.iter().zip(&fd) {
                    check((a - b).abs() / scale < 1e-5, || {
                        format!("field vs FD mismatch {:e} on {space}", (a - b).abs() / scale)
                    })?;
                }
            }
        }
        let settings = IntegratorSettings::default();
        for (config, s0) in bound_orbits() {
            let traj = simulate_restricted(
                &config,
                &s0,
                10.0,
                &ChartPolicy::Fixed(Chart::Identity),
                &settings,
            )
            .map_err(|e| e.to_string())?;
            check(traj.termination == Termination::Completed, || {
                format!("orbit on {} terminated {:?}", config.space(), traj.termination)
            })?;
            check(traj.energy_drift() < 1e-8, || {
                format!("energy drift {:e} on {}", traj.energy_drift(), config.space())
            })?;
        }
        Ok(())
    });
}

#[test]
fn criterion_5_global_chart_identities() {
    report(5, "global chart identities", || {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for space in SPACES {
            for n in 2..=8usize {
                let config = cfg(space, n, 0.5);
                let chart = Chart::global(&config);
                let (alpha, beta) = match &chart {
                    Chart::Global { alpha, beta } => (*alpha, *beta),
                    _ => unreachable!(),
                };
                let ws = projected_primaries(&config).w;
                for wi in &ws {
                    let g = chart_map(&config, &chart, *wi).unwrap();
                    let gp = chart_derivative(&config, &chart, *wi).unwrap();
                    check((g - wi).norm() < 1e-12, || {
                        format!("g(w_i) off by {:e} ({space}, n={n})", (g - wi).norm())
                    })?;
                    check(gp.norm() < 1e-12, || {
                        format!("g'(w_i) = {:e} ({space}, n={n})", gp.norm())
                    })?;
                }
                let w1n = ws[0].powu(n as u32);
                for _ in 0..1000 {
                    let w = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                    if w.norm() < 0.05 {
                        continue;
                    }
                    let wn = w.powu(n as u32);
                    let gp = chart_derivative(&config, &chart, w).unwrap();
                    let lhs = wn * gp / alpha;
                    let err = (lhs - (wn - w1n)).norm() / (1.0 + wn.norm());
                    check(err < 1e-11, || format!("derivative identity off {err:e}"))?;
                    let g = chart_map(&config, &chart, w).unwrap();
                    let fac = (w - ws[0]).powu(2) * g_polynomial(n, ws[0], w)
                        / w.powu(n as u32 - 1);
                    let err = (fac - (g - ws[0])).norm() / (1.0 + g.norm());
                    check(err < 1e-11, || format!("factorization off {err:e}"))?;
                }
                // Vieta: e_1..e_{n-1} of the primaries vanish and
                // (-1)^n prod w_j = -(beta/alpha)(n-1)
                let mut elems = vec![Complex64::new(1.0, 0.0)];
                for wi in &ws {
                    let mut next = vec![Complex64::new(0.0, 0.0); elems.len() + 1];
                    for (i, e) in elems.iter().enumerate() {
                        next[i] += e;
                        next[i + 1] += e * wi;
                    }
                    elems = next;
                }
                for e in &elems[1..n] {
                    check(e.norm() < 1e-12, || {
                        format!("symmetric function {:e} nonzero ({space}, n={n})", e.norm())
                    })?;
                }
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let err = (sign * elems[n] + (beta / alpha) * (n as f64 - 1.0)).norm();
                check(err < 1e-12, || format!("product condition off {err:e}"))?;
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_6_collision_traversal() {
    report(6, "regularized collision traversal", || {
        let settings = IntegratorSettings::default();
        let cases = [
            (SpaceSign::Sphere, 3, 0.5, 0usize),
            (SpaceSign::Hyperboloid, 5, 0.5, 1usize),
        ];
        for (space, n, r, k) in cases {
            let config = cfg(space, n, r);
            let rep = collision_experiment(&config, k, 0.1, 1.0, &settings)
                .map_err(|e| format!("({space}, n={n}, k={}): {e}", k + 1))?;
            let tag = format!("({space}, n={n}, k={})", k + 1);
            check(rep.traversed, || format!("{tag} did not traverse (min |w| {:e})", rep.min_w))?;
            check(rep.max_field_near_collision.is_finite(), || {
                format!("{tag} field blew up near the collision")
            })?;
            check(rep.control_termination == Termination::StepUnderflow, || {
                format!("{tag} control run ended {:?}", rep.control_termination)
            })?;
            check(rep.control_min_distance > 1e-6, || {
                format!("{tag} control reached {:e}", rep.control_min_distance)
            })?;
            check(rep.h_continuity_error < 1e-6, || {
                format!("{tag} H jumped {:e} across passage", rep.h_continuity_error)
            })?;
        }
        Ok(())
    });
}

/// One dynamically bound restricted orbit per space.
fn bound_orbits() -> Vec<(PolygonConfig, ProjectedState)> {
    let s2 = cfg(SpaceSign::Sphere, 3, 0.5);
    let s2_state = velocity_to_momentum(&s2, &PlanePoint::new(0.02, 0.01), 0.0, 0.0).unwrap();
    let h2 = cfg(SpaceSign::Hyperboloid, 5, 0.5);
    let h2_state = velocity_to_momentum(&h2, &PlanePoint::new(0.4, 0.0), 0.0, -0.5).unwrap();
    vec![(s2, s2_state), (h2, h2_state)]
}

fn regularized_runs(t_max: f64) -> Vec<(PolygonConfig, ProjectedState, Chart, Trajectory)> {
    let settings = IntegratorSettings::default();
    let mut out = Vec::new();
    for (config, s0) in bound_orbits() {
        for chart in [Chart::local(0), Chart::global(&config)] {
            let traj = simulate_restricted(
                &config,
                &s0,
                t_max,
                &ChartPolicy::Fixed(chart.clone()),
                &settings,
            )
            .unwrap();
            out.push((config.clone(), s0, chart, traj));
        }
    }
    out
}

#[test]
fn criterion_7_flow_equivalence() {
    report(7, "regularized flows match direct integration", || {
        let t_max = 5.0;
        let settings = IntegratorSettings::default();
        for (config, s0, chart, traj) in regularized_runs(t_max) {
            let tag = format!("({}, {})", config.space(), chart.label());
            check(traj.termination == Termination::Completed, || {
                format!("{tag} terminated {:?}", traj.termination)
            })?;
            let picked: Vec<_> = traj.samples.iter().step_by(25).collect();
            let targets: Vec<f64> = picked.iter().map(|s| s.t).collect();
            let direct = restricted_states_at(&config, &s0, &targets, &settings)
                .map_err(|e| format!("{tag}: {e}"))?;
            let mut sup = 0.0f64;
            for (s, d) in picked.iter().zip(&direct) {
                let e = (s.state.u - d.u)
                    .abs()
                    .max((s.state.v - d.v).abs())
                    .max((s.state.p_u - d.p_u).abs())
                    .max((s.state.p_v - d.p_v).abs());
                sup = sup.max(e);
            }
            check(sup < 1e-6 * t_max, || format!("{tag} sup-error {sup:e}"))?;
        }
        Ok(())
    });
}

#[test]
fn criterion_8_shifted_hamiltonian_vanishes() {
    report(8, "shifted Hamiltonian stays at zero", || {
        for (config, _, chart, traj) in regularized_runs(5.0) {
            let tag = format!("({}, {})", config.space(), chart.label());
            let mut seen = 0usize;
            let mut worst = 0.0f64;
            for s in &traj.samples {
                if let Some(hhat) = s.hhat {
                    seen += 1;
                    worst = worst.max(hhat.abs());
                }
            }
            check(seen > 0, || format!("{tag} produced no regularized samples"))?;
            check(worst < 1e-8, || format!("{tag} |Hhat| reached {worst:e}"))?;
        }
        Ok(())
    });
}

// ---------------------------------------------------------------------
// CLI contract
// ---------------------------------------------------------------------

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_curved-rnbp"))
}

#[test]
fn criterion_9_cli_contract() {
    report(9, "command-line contract", || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

        let out = bin().arg("validate").output().map_err(|e| e.to_string())?;
        check(out.status.code() == Some(0), || {
            format!(
                "validate exited {:?}: {}",
                out.status.code(),
                String::from_utf8_lossy(&out.stdout)
            )
        })?;
        let doc: serde_json::Value =
            serde_json::from_slice(&out.stdout).map_err(|e| format!("validate JSON: {e}"))?;
        check(doc["passed"] == serde_json::json!(true), || "validate reported failure".into())?;

        // seeded runs are bit-identical
        let a = bin().args(["validate", "--seed", "99"]).output().unwrap();
        let b = bin().args(["validate", "--seed", "99"]).output().unwrap();
        check(a.stdout == b.stdout, || "seeded validate runs differ".into())?;

        // fault injection must be caught
        let out = bin().args(["validate", "--perturb-omega", "1.1"]).output().unwrap();
        check(out.status.code() == Some(1), || {
            format!("perturbed validate exited {:?}", out.status.code())
        })?;

        // CSV round trip: every field parses back to the same double
        let csv = dir.path().join("orbit.csv");
        let out = bin()
            .args(["simulate", "--space", "s2", "--n", "3", "--r", "0.5"])
            .args(["--tmax", "1", "--chart", "auto"])
            .arg("--out")
            .arg(&csv)
            .output()
            .unwrap();
        check(out.status.code() == Some(0), || {
            format!("simulate exited {:?}", out.status.code())
        })?;
        let summary: serde_json::Value =
            serde_json::from_slice(&out.stdout).map_err(|e| format!("summary JSON: {e}"))?;
        check(summary["termination"] == serde_json::json!("completed"), || {
            format!("unexpected termination {}", summary["termination"])
        })?;
        let text = std::fs::read_to_string(&csv).unwrap();
        let mut lines = text.lines();
        check(lines.next() == Some("t,s,chart,u,v,p_u,p_v,H,Hhat"), || {
            "bad CSV header".into()
        })?;
        let mut rows = 0usize;
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            check(fields.len() == 9, || format!("bad CSV row: {line}"))?;
            for (i, f) in fields.iter().enumerate() {
                if i == 2 || (i == 8 && f.is_empty()) {
                    continue;
                }
                let x: f64 = f.parse().map_err(|e| format!("CSV field '{f}': {e}"))?;
                check(format!("{x:.16e}") == *f, || format!("field '{f}' not round-trip exact"))?;
            }
            rows += 1;
        }
        check(rows > 10, || "CSV trajectory suspiciously short".into())?;

        // identical seeded simulations are bit-exact
        let csv2 = dir.path().join("orbit2.csv");
        bin()
            .args(["simulate", "--space", "s2", "--n", "3", "--r", "0.5"])
            .args(["--tmax", "1", "--chart", "auto"])
            .arg("--out")
            .arg(&csv2)
            .output()
            .unwrap();
        check(std::fs::read(&csv).unwrap() == std::fs::read(&csv2).unwrap(), || {
            "repeated simulate runs differ".into()
        })?;

        // invalid spec and forced-identity collision exit codes
        let out = bin().args(["omega", "--space", "s2", "--n", "3", "--r", "1.5"]).output().unwrap();
        check(out.status.code() == Some(2), || {
            format!("invalid spec exited {:?}", out.status.code())
        })?;
        let out = bin()
            .args(["collision", "--space", "s2", "--n", "3", "--r", "0.5"])
            .args(["--k", "1", "--chart", "identity"])
            .output()
            .unwrap();
        check(out.status.code() == Some(4), || {
            format!("forced identity collision exited {:?}", out.status.code())
        })?;

        // omega spot value through the CLI
        let out = bin().args(["omega", "--space", "s2", "--n", "3", "--r", "0.5"]).output().unwrap();
        let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let o2 = doc["omega_squared"].as_f64().unwrap();
        check((o2 - 6.3067).abs() / 6.3067 < 5e-5, || format!("omega^2 = {o2}"))?;
        Ok(())
    });
}
