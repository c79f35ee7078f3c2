use std::sync::Arc;

use gradlab_core::calculus::{DiffusionSpec, HamiltonianSpec, InitialDatum, ProblemSpec};
use gradlab_core::experiments::{run_convergence_study, ConvergenceSpec, Sequential};
use gradlab_core::mesh::BoxDomain;
use gradlab_core::registry::{smooth_corpus, ConstantFn};

fn skeleton(p: f64, gamma: f64) -> ProblemSpec {
    ProblemSpec {
        diffusion: DiffusionSpec::power(p).unwrap(),
        hamiltonian: HamiltonianSpec::new(gamma, Arc::new(ConstantFn(0.0))),
        epsilon: 0.1,
        domain: BoxDomain::unit(2).unwrap(),
        horizon: 0.1,
        initial: InitialDatum::Function(Arc::new(ConstantFn(0.0))),
        lambda: 0.0,
    }
}

#[test]
fn smooth_corpus_orders() {
    for (p, gamma) in [(2.0, 0.0), (3.0, 1.0), (1.5, 0.5)] {
        let base = skeleton(p, gamma);
        for (name, solution) in smooth_corpus(&base.domain) {
            let spec = ConvergenceSpec {
                skeleton: base.clone(),
                case: name.into(),
                solution,
                grids: vec![17, 33],
                cfl_fraction: 0.5,
                time_fractions: vec![0.8, 0.4, 0.2, 0.1],
                min_space_order: 1.9,
                min_time_order: 0.9,
            };
            let report = run_convergence_study(&spec, &Sequential).unwrap();
            println!("p={p} {name}: h {:.3} {:?} dt {:.3}", report.space_order, report.space, report.time_order);
            assert!(report.passed(), "p={p} {name}: {:?}", report.checks);
        }
    }
}
