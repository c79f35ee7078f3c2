use std::sync::Arc;

use gradlab_core::calculus::{gradient, DiffusionSpec, HamiltonianSpec, InitialDatum, ProblemSpec};
use gradlab_core::experiments::{parabolic_gates, run_scaling_study, LadderSpec, Sequential, Slack};
use gradlab_core::identities::boundary_sign_check;
use gradlab_core::mesh::{BoxDomain, Grid};
use gradlab_core::registry::{ConstantFn, Profile};
use gradlab_core::solver::{solve_parabolic, SolveConfig};

fn cosine(domain: &BoxDomain, amplitude: f64, k: [u32; 3]) -> Arc<dyn gradlab_core::calculus::SpaceTimeFn> {
    Profile::Cosine { amplitude, k, time_power: 0.0 }.build(domain)
}

#[test]
fn nonlinear_smoke_run_keeps_its_invariants() {
    let domain = BoxDomain::unit(2).unwrap();
    let spec = ProblemSpec {
        diffusion: DiffusionSpec::power(3.0).unwrap(),
        hamiltonian: HamiltonianSpec::new(1.0, cosine(&domain, 2.0, [1, 2, 0])),
        epsilon: 1e-1,
        domain,
        horizon: 0.2,
        initial: InitialDatum::Function(cosine(&domain, 0.3, [1, 1, 0])),
        lambda: 0.0,
    };
    let grid = Grid::uniform(domain, 33).unwrap();
    let result = solve_parabolic(&spec, &SolveConfig::new(grid).with_stride(50)).unwrap();
    assert!(result.field.len() > 3);
    for (dt, bound) in result.dt_history.iter().zip(&result.cfl_bound_history) {
        assert!(*dt > 0.0 && dt <= bound);
    }
    for u in result.field.snapshots() {
        assert!(u.values().iter().all(|v| v.is_finite()));
        let g = gradient(u);
        let grid = u.grid();
        for face in grid.faces() {
            for (k, _) in grid.face_nodes(face) {
                assert_eq!(g.values()[k][face.axis], 0.0);
            }
        }
    }
}

/// The outward normal difference of `w` on computed snapshots, on data the
/// grid resolves. Near corners the diffusion is weakest and features have
/// width about `√ε/|D²u|`, so small ε needs finer grids.
#[test]
fn computed_snapshots_satisfy_the_boundary_sign() {
    let domain = BoxDomain::unit(2).unwrap();
    for (p, gamma) in [(1.5, 0.0), (2.0, 0.5), (3.0, 1.0)] {
        let spec = ProblemSpec {
            diffusion: DiffusionSpec::power(p).unwrap(),
            hamiltonian: HamiltonianSpec::new(gamma, cosine(&domain, 1.0, [1, 2, 0])),
            epsilon: 0.5,
            domain,
            horizon: 0.05,
            initial: InitialDatum::Function(cosine(&domain, 0.2, [1, 1, 0])),
            lambda: 0.0,
        };
        let grid = Grid::uniform(domain, 33).unwrap();
        let h = grid.h_max();
        let result = solve_parabolic(&spec, &SolveConfig::new(grid).with_stride(20)).unwrap();
        for u in result.field.snapshots() {
            let sign = boundary_sign_check(u).unwrap();
            assert!(sign <= 10.0 * h * h, "p={p}: {sign}");
        }
    }
}

/// Fitted slopes and implied constants of one ladder at three values of ε.
#[test]
fn ladder_is_robust_in_epsilon() {
    let domain = BoxDomain::unit(2).unwrap();
    let mut medians = Vec::new();
    for epsilon in [1e-1, 1e-2, 1e-3] {
        let base = ProblemSpec {
            diffusion: DiffusionSpec::power(3.0).unwrap(),
            hamiltonian: HamiltonianSpec::new(0.0, cosine(&domain, 1.0, [1, 1, 0])),
            epsilon,
            domain,
            horizon: 0.25,
            initial: InitialDatum::Function(Arc::new(ConstantFn(0.0))),
            lambda: 0.0,
        };
        let ladder = LadderSpec {
            base_problem: base,
            scalings: vec![8.0, 16.0, 32.0, 64.0, 128.0],
            m: 3.0,
            gates: parabolic_gates(3.0, 2, 3.0, 0.0).unwrap(),
            slack: Slack::default(),
        };
        let cfg = SolveConfig::new(Grid::uniform(domain, 33).unwrap());
        let report = run_scaling_study(&ladder, &cfg, &Sequential).unwrap();
        assert!(report.passed(), "eps={epsilon}: {:?}", report.checks);
        medians.push(report.fits[0].c_hat_median);
    }
    let (lo, hi) = medians.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    assert!(hi / lo < 1.5, "implied constants {medians:?}");
}
