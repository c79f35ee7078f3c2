use gradlab_core::exponents::*;
use num_rational::BigRational;
use proptest::prelude::*;

fn r(n: i64, d: i64) -> BigRational {
    rational(n, d)
}

/// `p ∈ (1, 5]`, `N ∈ 1..=4`, and `m` strictly inside `(m_p, N+2)`.
fn admissible() -> impl Strategy<Value = ParamPoint<BigRational>> {
    (1i64..=400, 1u32..=4, 1i64..64).prop_map(|(pn, dim, k)| {
        let p = r(1, 1) + r(pn, 100);
        let m_p = parabolic_threshold(&p, dim).unwrap();
        let top = r(i64::from(dim) + 2, 1);
        let m = m_p.clone() + (top - m_p) * r(k, 64);
        ParamPoint::new(p, dim, m, r(0, 1))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn exact_relations(pt in admissible()) {
        let t = parabolic_table(&pt).unwrap();
        let one = r(1, 1);
        let two = r(2, 1);
        let n = r(i64::from(pt.dim), 1);
        let s = two.clone() * (n.clone() + two.clone()) / n.clone() - (pt.p.clone() - two.clone()) / (t.mu.clone() * n);
        prop_assert_eq!(&t.s, &s);
        prop_assert_eq!(t.q.clone(), two.clone() * t.mu.clone() * t.s.clone());
        prop_assert_eq!(t.rho.clone(), r(4, 1) * t.mu.clone() - (pt.p.clone() - two.clone()));
        prop_assert_eq!(t.omega.clone(), two * t.mu.clone() - one.clone());
        prop_assert_eq!(one.clone() / t.nu.clone() + one / t.nu_prime.clone(), r(1, 1));
    }

    #[test]
    fn growth_threshold_dominates_branches(pn in 1i64..=400, dim in 1u32..=4) {
        let p = r(1, 1) + r(pn, 100);
        let ell = growth_threshold(&p, dim).unwrap();
        let (half, shifted) = growth_branches(&p, dim);
        prop_assert!(ell >= half && ell >= shifted);
    }
}

#[test]
fn heat_case_gives_the_sobolev_exponent() {
    for dim in 1..=4u32 {
        let n2 = r(i64::from(dim) + 2, 1);
        for k in 1..16 {
            let m = r(2, 1) + (n2.clone() - r(2, 1)) * r(k, 16);
            let t = parabolic_table(&ParamPoint::new(r(2, 1), dim, m.clone(), r(0, 1))).unwrap();
            assert_eq!(t.q, n2.clone() * m.clone() / (n2.clone() - m));
        }
        let (half, shifted) = growth_branches(&r(2, 1), dim);
        assert_eq!(half, shifted);
        assert_eq!(growth_threshold(&r(2, 1), dim).unwrap(), half);
    }
}

#[test]
fn q_approaches_the_heat_value_as_p_goes_to_two() {
    let (dim, m) = (2u32, 3.0);
    let heat = 4.0 * m / (4.0 - m);
    for sign in [1.0, -1.0] {
        let gaps: Vec<f64> = (1..=12)
            .map(|k| {
                let p = 2.0 + sign * 0.5f64.powi(k);
                (parabolic_table(&ParamPoint::new(p, dim, m, 0.0)).unwrap().q - heat).abs()
            })
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(*gaps.last().unwrap() < 1e-2);
    }
}

#[test]
fn formal_limit_as_m_goes_to_two() {
    for p in [2.0, 2.5, 3.0, 4.0] {
        let mut last = (f64::INFINITY, f64::INFINITY);
        for k in 1..=20 {
            let m = 2.0 + 0.5f64.powi(k);
            let t = parabolic_table(&ParamPoint::new(p, 3, m, 0.0)).unwrap();
            let gaps = ((t.omega - (p - 2.0)).abs(), (t.rho - p).abs());
            assert!(gaps.0 <= last.0 && gaps.1 <= last.1);
            last = gaps;
        }
        assert!(last.0 < 1e-5 && last.1 < 1e-5, "p={p}: {last:?}");
    }
}
