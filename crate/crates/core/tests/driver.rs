use std::path::PathBuf;

use sipop::conic::SolveStatus;
use sipop::driver::{run_algorithm, solve_outer, AlgorithmParams, Branch, OuterSpec, RunStatus};
use sipop::hierarchy::HierarchySettings;
use sipop::joint_marginal::approximate_phi;
use sipop::problem::{oracle_solve, parse_problem, OracleResolution, SipProblem};

fn load(name: &str) -> SipProblem {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("instances").join(name);
    parse_problem(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn outer_spec(prob: &SipProblem, d: usize, eps: f64) -> OuterSpec {
    let phi = approximate_phi(&prob.g, &prob.y_constraints, prob.n, prob.p, d, &HierarchySettings::default()).unwrap();
    OuterSpec {
        f: prob.f.clone(),
        p_list: prob.x_constraints.clone(),
        phi: phi.phi,
        d,
        eps,
        t: None,
    }
}

#[test]
fn affine_run() {
    let rep = run_algorithm(&load("affine.json"), &AlgorithmParams::default()).unwrap();
    assert!((rep.f_value.unwrap() - 1.0).abs() <= 1e-3);
}

#[test]
fn abs_half_run() {
    let rep = run_algorithm(&load("abs_half.json"), &AlgorithmParams::default()).unwrap();
    assert!(rep.certified);
    assert!(rep.f_value.unwrap() <= 0.1);
    assert!(rep.rho.unwrap() <= 0.0);
    assert!(matches!(rep.status, RunStatus::LastIterate | RunStatus::Accepted | RunStatus::Incumbent));
    for (a, b) in rep.trace.iter().zip(rep.trace.iter().skip(1)) {
        assert_eq!(b.k, a.k + 1);
        assert_eq!(Some(b.eps), a.next_eps);
        match a.branch {
            Branch::Double | Branch::OuterInfeasible => assert_eq!(b.eps, 2.0 * a.eps),
            Branch::Halve | Branch::CertificateFailed | Branch::OutsideX => assert_eq!(b.eps, 0.5 * a.eps),
            Branch::Accept => panic!("iteration continued after acceptance"),
        }
    }
}

#[test]
fn outer_abs_half_at_small_eps() {
    let prob = load("abs_half.json");
    let res = solve_outer(&outer_spec(&prob, 2, 0.05), None, &HierarchySettings::default()).unwrap();
    assert_eq!(res.status, SolveStatus::Optimal);
    assert!(res.value.unwrap().abs() <= 1e-4, "value {:?}", res.value);
    let x = res.candidate.unwrap();
    assert!(x[0].abs() <= 0.5, "candidate {x:?}");
}

#[test]
fn outer_at_zero_eps_bounds_grid_optimum() {
    for name in ["affine.json", "abs_half.json"] {
        let prob = load(name);
        let oracle = oracle_solve(&prob, OracleResolution::default()).unwrap();
        let f_star = oracle.f_star.unwrap();
        let res = solve_outer(&outer_spec(&prob, 1, 0.0), None, &HierarchySettings::default()).unwrap();
        match res.status {
            SolveStatus::Optimal => {
                let v = res.value.unwrap();
                assert!(v >= f_star - 1e-6, "{name}: {v} < {f_star}");
            }
            SolveStatus::Infeasible => {}
            s => panic!("{name}: unexpected status {s:?}"),
        }
    }
}
