//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sipop::certificate::certify;
use sipop::conic::sdpa::{export_sdpa, import_sdpa};
use sipop::conic::{Backend, ConicProgram, LinearFunctional, SdpaFileBackend, SolveStatus, SolverSettings};
use sipop::driver::{run_algorithm, solve_outer, AlgorithmParams, AlgorithmReport, Branch, OuterSpec};
use sipop::hierarchy::{solve_hierarchy, solve_order, HierarchySettings, PopInstance};
use sipop::joint_marginal::{approximate_phi, l1_gap};
use sipop::moments::MomentSequence;
use sipop::poly::{Exponent, MonomialBasis, Polynomial};
use sipop::problem::{linspace, oracle_solve, parse_problem, OracleResolution, SipProblem};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn instance_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("instances")
}

fn load(name: &str) -> SipProblem {
    let path = instance_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_problem(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn poly(dim: usize, terms: &[(f64, &[u32])]) -> Polynomial {
    Polynomial::from_terms(dim, terms.iter().map(|(c, e)| (*c, e.to_vec()))).unwrap()
}

fn random_poly(rng: &mut ChaCha8Rng, dim: usize, degree: usize) -> Polynomial {
    let basis = MonomialBasis::new(dim, degree);
    let mut p = Polynomial::zero(dim);
    for e in basis.monomials() {
        p.add_term(e.clone(), rng.random_range(-1.0..1.0));
    }
    p
}

fn timed(limit: Duration, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    match result {
        Ok(msg) if elapsed <= limit => Outcome::Pass(format!("{msg} [{:.2}s]", elapsed.as_secs_f64())),
        Ok(msg) => Outcome::Fail(format!(
            "{msg}; runtime {:.2}s exceeds {:.0}s",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        )),
        Err(msg) => Outcome::Fail(format!("{msg} [{:.2}s]", elapsed.as_secs_f64())),
    }
}

/// Dirac moment sequences: flat moment matrices and Riesz identities.
fn moment_identities() -> Outcome {
    timed(Duration::from_secs(10), || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..200 {
            let n = rng.random_range(1..=3);
            let d = rng.random_range(1..=3);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let z = MomentSequence::dirac(&x, 2 * d);
            let m = z.moment_matrix(d).map_err(|e| e.to_string())?;
            let sv = m.clone().singular_values();
            let mut s: Vec<f64> = sv.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            let ratio = s.get(1).copied().unwrap_or(0.0) / s[0];
            worst.0 = worst.0.max(ratio);
            ensure(ratio <= 1e-10, || format!("sigma2/sigma1 = {ratio:e} at n={n}, d={d}"))?;

            let f = random_poly(&mut rng, n, 2 * d);
            let err = (z.riesz(&f).map_err(|e| e.to_string())? - f.eval(&x).unwrap()).abs();
            worst.1 = worst.1.max(err);
            ensure(err <= 1e-10, || format!("|L_z(f) - f(x)| = {err:e}"))?;

            let g = random_poly(&mut rng, n, 2);
            let k = d - 1;
            let q = random_poly(&mut rng, n, k);
            let loc = z.localizing_matrix(&g, k).map_err(|e| e.to_string())?;
            let rows = MonomialBasis::new(n, k);
            let coeffs: Vec<f64> = rows.monomials().iter().map(|e| q.coeff(e)).collect();
            let v = nalgebra::DVector::from_vec(coeffs);
            let lhs = (v.transpose() * &loc * &v)[(0, 0)];
            let rhs = z.riesz(&(&(&q * &q) * &g)).map_err(|e| e.to_string())?;
            worst.2 = worst.2.max((lhs - rhs).abs());
            ensure((lhs - rhs).abs() <= 1e-9, || format!("<f, M(gz) f> - L_z(f^2 g) = {:e}", lhs - rhs))?;
        }
        Ok(format!(
            "200 sequences; max sigma2/sigma1 {:.1e}, Riesz error {:.1e}, localizer error {:.1e}",
            worst.0, worst.1, worst.2
        ))
    })
}

/// Grid minimizers of `h` over `[-1, 1]^2`, within `tol` of the minimum.
fn grid_argmins(h: &Polynomial, m: usize, tol: f64) -> (f64, Vec<Vec<f64>>) {
    let axis = linspace(-1.0, 1.0, m);
    let mut vals = Vec::with_capacity(m * m);
    for &a in &axis {
        for &b in &axis {
            vals.push((h.eval_unchecked(&[a, b]), vec![a, b]));
        }
    }
    let min = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    (min, vals.into_iter().filter(|v| v.0 <= min + tol).map(|v| v.1).collect())
}

fn generic_hierarchy() -> Outcome {
    timed(Duration::from_secs(30), || {
        let s = HierarchySettings::default();
        let interval = poly(1, &[(1.0, &[0]), (-1.0, &[2])]);
        let inst = PopInstance::new(poly(1, &[(1.0, &[2])]), vec![interval]).unwrap();
        let run = solve_hierarchy(&inst, 1, 1, &s).map_err(|e| e.to_string())?;
        let rho1 = run.results[0].value;
        ensure(rho1.abs() <= 1e-7, || format!("min x^2: rho_1 = {rho1:e}"))?;
        let ex = run.extraction.ok_or("min x^2: no extraction")?;
        ensure(ex.certified && ex.points.len() == 1, || format!("min x^2: extraction {ex:?}"))?;
        let x0 = ex.points[0][0];
        ensure(x0.abs() <= 1e-6, || format!("min x^2: x = {x0:e}"))?;

        let h = poly(2, &[(-1.0, &[2, 0]), (-1.0, &[0, 2])]);
        let (grid_min, corners) = grid_argmins(&h, 201, 1e-12);
        let cons = vec![poly(2, &[(1.0, &[0, 0]), (-1.0, &[2, 0])]), poly(2, &[(1.0, &[0, 0]), (-1.0, &[0, 2])])];
        let inst = PopInstance::new(h, cons).unwrap();
        let rho2 = solve_order(&inst, 2, &s).map_err(|e| e.to_string())?.value;
        ensure((rho2 - grid_min).abs() <= 1e-5, || format!("rho_2 = {rho2}, grid {grid_min}"))?;
        let run = solve_hierarchy(&inst, 2, 4, &s).map_err(|e| e.to_string())?;
        let ex = run.extraction.filter(|e| e.certified).ok_or("corners: no certified extraction up to order 4")?;
        let order = run.results.last().unwrap().order;
        ensure(ex.points.len() == corners.len(), || format!("extracted {:?}, grid {corners:?}", ex.points))?;
        for c in &corners {
            let hit = ex
                .points
                .iter()
                .any(|p| p.iter().zip(c).all(|(a, b)| (a - b).abs() <= 1e-4));
            ensure(hit, || format!("corner {c:?} missing from {:?}", ex.points))?;
        }
        Ok(format!(
            "rho_1 = {rho1:.1e}, x = {x0:.1e}; rho_2 = {rho2:.8}, {} corners extracted at order {order}",
            corners.len()
        ))
    })
}

fn nondecreasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] >= w[0] - tol)
}

fn nonincreasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + tol)
}

fn monotonicity() -> Outcome {
    timed(Duration::from_secs(120), || {
        let s = HierarchySettings::default();
        let tol = 1e-7;
        let mut summary = Vec::new();

        // outer (min) form: rho_l nondecreasing in l
        let unit_box = |n: usize| -> Vec<Polynomial> {
            (0..n)
                .map(|i| {
                    let mut q = Polynomial::constant(n, 1.0);
                    q.add_term(&Exponent::unit(n, i) + &Exponent::unit(n, i), -1.0);
                    q
                })
                .collect()
        };
        // sum of pairwise products on the cube: order 1 gives -3/2, the
        // minimum is -1
        let triangle = poly(3, &[(1.0, &[1, 1, 0]), (1.0, &[0, 1, 1]), (1.0, &[1, 0, 1])]);
        let outer_cases = vec![
            (
                "box quadratic",
                PopInstance::new(poly(2, &[(-1.0, &[2, 0]), (-1.0, &[0, 2])]), unit_box(2)).unwrap(),
                1..=3,
            ),
            ("cube triangle", PopInstance::new(triangle.clone(), unit_box(3)).unwrap(), 1..=3),
        ];
        for (name, inst, orders) in outer_cases {
            let mut vals = Vec::new();
            for l in orders {
                let r = solve_order(&inst, l, &s).map_err(|e| e.to_string())?;
                ensure(r.is_optimal(), || format!("{name}: order {l} status {}", r.status))?;
                vals.push(r.value);
            }
            ensure(nondecreasing(&vals, tol), || format!("{name}: rho_l = {vals:?}"))?;
            summary.push(format!("{name} {vals:.6?}"));
        }

        // inner (max) form: rho_l(x) nonincreasing in l
        let abs_half = load("abs_half.json");
        let inner_cases = vec![
            ("abs-half at 0.3", abs_half.g.clone(), abs_half.y_constraints.clone(), vec![0.3], 1..=3),
            (
                "cube triangle in y",
                &(&Polynomial::var(4, 0) * &Polynomial::var(4, 1)) - &triangle.embed(4, 1),
                unit_box(4)[1..].to_vec(),
                vec![0.4],
                1..=3,
            ),
        ];
        for (name, g, h, x, orders) in inner_cases {
            let mut vals = Vec::new();
            for l in orders {
                let c = certify(&x, &g, &h, Some(l), None, &s).map_err(|e| format!("{name}: {e}"))?;
                vals.push(c.rho);
            }
            ensure(nonincreasing(&vals, tol), || format!("{name}: rho_l(x) = {vals:?}"))?;
            summary.push(format!("{name} {vals:.6?}"));
        }

        // outer SIP relaxation: nondecreasing in t, nonincreasing in eps
        let affine = load("affine.json");
        let cases = [("affine", affine, 1usize, 0.1f64), ("abs-half", abs_half, 2, 0.05)];
        for (name, prob, d, eps) in cases {
            let phi = approximate_phi(&prob.g, &prob.y_constraints, prob.n, prob.p, d, &s).map_err(|e| e.to_string())?;
            let spec = |eps: f64, t: Option<usize>| OuterSpec {
                f: prob.f.clone(),
                p_list: prob.x_constraints.clone(),
                phi: phi.phi.clone(),
                d,
                eps,
                t,
            };
            let t0 = spec(eps, None).t0();
            let mut by_t = Vec::new();
            for t in t0..=t0 + 2 {
                let r = solve_outer(&spec(eps, Some(t)), Some(t), &s).map_err(|e| e.to_string())?;
                by_t.push(r.value.ok_or_else(|| format!("{name}: outer infeasible at t = {t}"))?);
            }
            ensure(nondecreasing(&by_t, tol), || format!("{name}: f_dt by t = {by_t:?}"))?;
            let mut by_eps = Vec::new();
            for e in [0.02, 0.05, 0.1, 0.25, 0.5, 1.0] {
                let r = solve_outer(&spec(e, Some(t0 + 1)), Some(t0 + 1), &s).map_err(|e| e.to_string())?;
                by_eps.push(r.value.ok_or_else(|| format!("{name}: outer infeasible at eps = {e}"))?);
            }
            ensure(nonincreasing(&by_eps, tol), || format!("{name}: f_dt by eps = {by_eps:?}"))?;
            summary.push(format!("{name} t {by_t:.6?} eps {by_eps:.6?}"));
        }
        Ok(summary.join("; "))
    })
}

fn dominance() -> Outcome {
    timed(Duration::from_secs(60), || {
        let s = HierarchySettings::default();
        let mut summary = Vec::new();
        for file in ["affine.json", "abs_half.json"] {
            let prob = load(file);
            let oracle = oracle_solve(&prob, OracleResolution { x_points: 3, y_points: 2001 }).map_err(|e| e.to_string())?;
            let xs = linspace(-1.0, 1.0, 1001);
            let grid: Vec<f64> = xs
                .iter()
                .map(|&x| oracle.phi(&[x]).ok_or_else(|| format!("{file}: empty Y_x at {x}")))
                .collect::<std::result::Result<_, _>>()?;
            let mut gaps = Vec::new();
            for d in [1, 2] {
                let phi = approximate_phi(&prob.g, &prob.y_constraints, 1, 1, d, &s).map_err(|e| e.to_string())?;
                for (&x, &v) in xs.iter().zip(&grid) {
                    let a = phi.eval(&[x]);
                    ensure(a >= v - 1e-6, || format!("{file}, d={d}: Phi_d({x}) = {a} < Phi_grid = {v}"))?;
                }
                let res = phi.certificate.residual(&phi.phi, &prob.g);
                ensure(res <= 1e-5, || format!("{file}, d={d}: certificate residual {res:e}"))?;
                gaps.push(l1_gap(&phi, |x| oracle.phi(x), 101));
            }
            ensure(gaps[1] <= gaps[0] + 1e-7, || format!("{file}: L1 gap d=2 {} > d=1 {}", gaps[1], gaps[0]))?;
            summary.push(format!("{file}: L1 gaps {:.3e} -> {:.3e}", gaps[0], gaps[1]));
        }
        Ok(summary.join("; "))
    })
}

fn check_schedule(rep: &AlgorithmReport, eps0: f64) -> std::result::Result<(), String> {
    let trace = &rep.trace;
    ensure(trace.first().is_some_and(|r| r.eps == 1.0), || "first eps is not 1".into())?;
    for (i, r) in trace.iter().enumerate() {
        let expected_branch = match r.rho {
            Some(rho) if (-eps0..=0.0).contains(&rho) => Some(Branch::Accept),
            Some(rho) if rho < -eps0 => Some(Branch::Double),
            Some(_) => Some(Branch::Halve),
            None => None,
        };
        if let Some(b) = expected_branch {
            ensure(b == r.branch, || format!("k={}: rho {:?} but branch {:?}", r.k, r.rho, r.branch))?;
        }
        if let Some(next) = r.next_eps {
            let want = match r.branch {
                Branch::Double | Branch::OuterInfeasible => 2.0 * r.eps,
                _ => 0.5 * r.eps,
            };
            ensure(next == want, || format!("k={}: eps {} -> {next} under {:?}", r.k, r.eps, r.branch))?;
            let following = trace.get(i + 1).ok_or_else(|| format!("k={}: next eps without a next iteration", r.k))?;
            ensure(following.eps == next, || format!("k={}: recorded eps {}", following.k, following.eps))?;
        }
    }
    Ok(())
}

fn end_to_end() -> Vec<Outcome> {
    let params = AlgorithmParams::default();
    let eps0 = params.eps0;
    let affine = timed(Duration::from_secs(120), || {
        let rep = run_algorithm(&load("affine.json"), &params).map_err(|e| e.to_string())?;
        let f = rep.f_value.ok_or("no point returned")?;
        ensure((f - 1.0).abs() <= 1e-3, || format!("f(x*) = {f}"))?;
        check_schedule(&rep, eps0)?;
        Ok(format!(
            "affine: f(x*) = {f:.6}, status {:?}, {} iterations, final eps {:e}",
            rep.status, rep.iterations, rep.final_eps
        ))
    });
    let abs_half = timed(Duration::from_secs(120), || {
        let rep = run_algorithm(&load("abs_half.json"), &params).map_err(|e| e.to_string())?;
        let f = rep.f_value.ok_or("no point returned")?;
        let rho = rep.rho.ok_or("no inner bound")?;
        ensure(rep.certified, || format!("not certified: {:?}", rep.status))?;
        ensure(f <= 0.0 + eps0, || format!("f(x*) = {f}"))?;
        ensure(rho <= 0.0, || format!("rho(x*) = {rho}"))?;
        check_schedule(&rep, eps0)?;
        Ok(format!(
            "abs-half: f(x*) = {f:.3e}, rho = {rho:.6}, status {:?}, {} iterations",
            rep.status, rep.iterations
        ))
    });
    vec![affine, abs_half]
}

fn table_one() -> Vec<Outcome> {
    let dir = instance_dir().join("table1");
    let cases = [("K", -3.0, Some(5e-2)), ("N", 1e-4, None)];
    cases
        .iter()
        .map(|&(name, target, tol)| {
            let path = dir.join(format!("{name}.json"));
            if !path.exists() {
                return Outcome::Skip(format!("problem {name}: {} not present", path.display()));
            }
            timed(Duration::from_secs(600), || {
                let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
                let prob = parse_problem(&text).map_err(|e| e.to_string())?;
                let rep = run_algorithm(&prob, &AlgorithmParams::default()).map_err(|e| e.to_string())?;
                let f = rep.f_value.ok_or("no point returned")?;
                match tol {
                    Some(t) => ensure((f - target).abs() <= t, || format!("{name}: f*_d = {f}"))?,
                    None => ensure(f <= target, || format!("{name}: f*_d = {f}"))?,
                }
                Ok(format!("problem {name}: f*_d = {f:.6}, final eps {} ({:?})", rep.final_eps, rep.status))
            })
        })
        .collect()
}

fn sym_random(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn functional(blocks: &[DMatrix<f64>]) -> LinearFunctional {
    let mut f = LinearFunctional::new();
    for (b, m) in blocks.iter().enumerate() {
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                if m[(i, j)] != 0.0 {
                    f.add(b, i, j, m[(i, j)]);
                }
            }
        }
    }
    f
}

/// Strictly primal and dual feasible program built from a random interior
/// pair.
fn random_program(rng: &mut ChaCha8Rng, index: usize) -> ConicProgram {
    let nblocks = rng.random_range(1..=3);
    let sizes: Vec<usize> = (0..nblocks).map(|_| rng.random_range(1..=4)).collect();
    let m = rng.random_range(1..=6);
    let spd = |rng: &mut ChaCha8Rng, n: usize| {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n)
    };
    let x0: Vec<DMatrix<f64>> = sizes.iter().map(|&n| spd(rng, n)).collect();
    let mut c: Vec<DMatrix<f64>> = sizes.iter().map(|&n| spd(rng, n)).collect();
    let mut prog = ConicProgram::new(sizes.clone()).with_name(format!("random-{index}"), "acceptance");
    for _ in 0..m {
        let a: Vec<DMatrix<f64>> = sizes.iter().map(|&n| sym_random(rng, n)).collect();
        let f = functional(&a);
        let rhs = f.apply(&x0);
        let y0 = rng.random_range(-1.0..1.0);
        for (cb, ab) in c.iter_mut().zip(&a) {
            *cb += ab * y0;
        }
        prog.add_equality(f, rhs);
    }
    prog.set_objective(functional(&c));
    prog
}

fn interop() -> Outcome {
    timed(Duration::from_secs(60), || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let settings = SolverSettings::default();
        let file = Backend::SdpaFile(SdpaFileBackend::default());
        let mut worst: f64 = 0.0;
        for k in 0..10 {
            let prog = random_program(&mut rng, k);
            let back = import_sdpa(&export_sdpa(&prog)).map_err(|e| e.to_string())?;
            ensure(back == prog.canonical(), || format!("program {k}: round trip differs"))?;
            let a = Backend::Embedded.solve(&prog, &settings).map_err(|e| e.to_string())?;
            let b = file.solve(&prog, &settings).map_err(|e| e.to_string())?;
            ensure(a.status == SolveStatus::Optimal && b.status == SolveStatus::Optimal, || {
                format!("program {k}: statuses {} / {}", a.status, b.status)
            })?;
            let diff = (a.primal_objective - b.primal_objective).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-6, || format!("program {k}: objectives differ by {diff:e}"))?;
        }
        Ok(format!("10 round trips exact; max objective difference {worst:.1e}"))
    })
}

fn main() {
    let mut rows: Vec<(String, Outcome)> = vec![
        ("1 moment identities".into(), moment_identities()),
        ("2 generic hierarchy".into(), generic_hierarchy()),
        ("3 monotonicity".into(), monotonicity()),
        ("4 joint+marginal dominance".into(), dominance()),
    ];
    for (i, o) in end_to_end().into_iter().enumerate() {
        rows.push((format!("5{} end-to-end", ['a', 'b'][i]), o));
    }
    for (i, o) in table_one().into_iter().enumerate() {
        rows.push((format!("6{} table reproduction", ['a', 'b'][i]), o));
    }
    rows.push(("7 solver interop".into(), interop()));

    let mut failed = 0;
    for (name, outcome) in &rows {
        match outcome {
            Outcome::Pass(m) => println!("PASS criterion {name}: {m}"),
            Outcome::Fail(m) => {
                failed += 1;
                println!("FAIL criterion {name}: {m}")
            }
            Outcome::Skip(m) => println!("SKIP criterion {name}: {m}"),
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
