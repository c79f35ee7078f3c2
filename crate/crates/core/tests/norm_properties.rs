use gradlab_core::mesh::{BoxDomain, Grid, ScalarField, SpaceTimeField};
use gradlab_core::norms::{lebesgue_qt, mixed_inf_rho, superlevel_measure};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random field on `[0,1]² × (0,1)`, so `|Q_T| = 1`.
fn random_field(seed: u64, n: usize, steps: usize) -> SpaceTimeField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::uniform(BoxDomain::unit(2).unwrap(), n).unwrap();
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let snapshots = times
        .iter()
        .map(|_| {
            let values = (0..grid.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            ScalarField::new(grid, values).unwrap()
        })
        .collect();
    SpaceTimeField::new(times, snapshots).unwrap()
}

fn product(a: &SpaceTimeField, b: &SpaceTimeField) -> SpaceTimeField {
    let snapshots = a
        .snapshots()
        .iter()
        .zip(b.snapshots())
        .map(|(x, y)| {
            let values = x.values().iter().zip(y.values()).map(|(u, v)| u * v).collect();
            ScalarField::new(*x.grid(), values).unwrap()
        })
        .collect();
    SpaceTimeField::new(a.times().to_vec(), snapshots).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn superlevel_is_non_increasing(seed in any::<u64>(), eps in 0.0..0.5f64) {
        let w = random_field(seed, 9, 4).map(|v| v * v);
        let mut last = f64::INFINITY;
        for j in 0..=40 {
            let m = superlevel_measure(&w, 0.1 * f64::from(j), eps).unwrap();
            prop_assert!(m <= last);
            last = m;
        }
        prop_assert_eq!(superlevel_measure(&w, 0.0, eps).unwrap(), 1.0);
    }

    #[test]
    fn holder(seed in any::<u64>(), m in 1.1..8.0f64) {
        let f = random_field(seed, 9, 4);
        let g = random_field(seed.wrapping_add(1), 9, 4);
        let conj = m / (m - 1.0);
        let lhs = lebesgue_qt(&product(&f, &g), 1.0).unwrap();
        let rhs = lebesgue_qt(&f, m).unwrap() * lebesgue_qt(&g, conj).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12), "{lhs} > {rhs}");
    }

    #[test]
    fn lebesgue_norm_grows_with_m(seed in any::<u64>()) {
        let f = random_field(seed, 9, 4);
        let mut last = 0.0;
        for m in [1.0, 1.5, 2.0, 3.0, 5.0, 8.0, 16.0] {
            let v = lebesgue_qt(&f, m).unwrap();
            prop_assert!(v >= last * (1.0 - 1e-12), "m={m}: {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn sup_in_time_dominates_the_time_average(seed in any::<u64>(), rho in 1.0..8.0f64) {
        let f = random_field(seed, 9, 4);
        let sup = mixed_inf_rho(&f, rho).unwrap().value;
        let avg = lebesgue_qt(&f, rho).unwrap() / f.horizon().powf(1.0 / rho);
        prop_assert!(sup >= avg * (1.0 - 1e-12), "{sup} < {avg}");
    }
}
