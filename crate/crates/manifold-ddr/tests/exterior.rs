use manifold_ddr::exterior::{ext_d, koszul, pullback_affine, rat, wedge, AffineMap, IndexSet, Monomial, PolyForm};
use proptest::prelude::*;

/// Random polynomial `l`-form on `R^d` with up to five terms of degree ≤ 3.
fn form(d: usize, l: usize) -> impl Strategy<Value = PolyForm> {
    let n_idx = IndexSet::all(d, l).len();
    prop::collection::vec((prop::collection::vec(0u32..=3, d), 0..n_idx, -6i64..=6, 1i64..=4), 1..=5).prop_map(move |terms| {
        let idx = IndexSet::all(d, l);
        terms
            .into_iter()
            .fold(PolyForm::zero(d, l), |acc, (m, i, p, q)| acc.add(&PolyForm::term(d, Monomial(m), idx[i], rat(p, q))))
    })
}

fn dyadic_map(target: usize, source: usize) -> impl Strategy<Value = AffineMap<f64>> {
    (prop::collection::vec(-8i32..=8, target * source), prop::collection::vec(-8i32..=8, target)).prop_map(move |(m, b)| {
        let matrix = (0..target).map(|i| (0..source).map(|j| m[i * source + j] as f64 / 4.0).collect()).collect();
        AffineMap::new(matrix, b.iter().map(|v| *v as f64 / 4.0).collect())
    })
}

proptest! {
    #[test]
    fn leibniz_rule((a, b, k) in (0usize..=1, 0usize..=1).prop_flat_map(|(k, l)| (form(3, k), form(3, l), Just(k)))) {
        let lhs = ext_d(&wedge(&a, &b).unwrap());
        let first = wedge(&ext_d(&a), &b).unwrap();
        let second = wedge(&a, &ext_d(&b)).unwrap();
        let sign = if k % 2 == 0 { rat(1, 1) } else { rat(-1, 1) };
        prop_assert_eq!(lhs, first.add(&second.scale(&sign)));
    }

    #[test]
    fn pullback_commutes_with_d((a, t) in (0usize..=1).prop_flat_map(|l| (form(2, l), dyadic_map(2, 2)))) {
        let t = t.to_rational();
        let lhs = pullback_affine(&t, &ext_d(&a)).unwrap();
        let rhs = ext_d(&pullback_affine(&t, &a).unwrap());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn pullback_respects_wedge(a in form(3, 1), b in form(3, 1), t in dyadic_map(3, 2)) {
        let t = t.to_rational();
        let lhs = pullback_affine(&t, &wedge(&a, &b).unwrap()).unwrap();
        let rhs = wedge(&pullback_affine(&t, &a).unwrap(), &pullback_affine(&t, &b).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn homotopy_formula_on_mixed_degrees(a in form(2, 1)) {
        // (dκ + κd) scales each homogeneous part of degree s by s + 1
        let lhs = ext_d(&koszul(&a)).add(&koszul(&ext_d(&a)));
        let rhs = a
            .homogeneous_parts()
            .into_iter()
            .fold(PolyForm::zero(2, 1), |acc, (s, p)| acc.add(&p.scale(&rat(s as i64 + 1, 1))));
        prop_assert_eq!(lhs, rhs);
    }
}
