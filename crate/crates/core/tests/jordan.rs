use kvwb_core::jordan::{complex_herm, identify_algebra, quat_herm, real_sym, spin_factor, JordanAlgebra, Kind};
use kvwb_core::linalg::{Mat, Vector};
use kvwb_core::scalar::{qi, Q};
use proptest::prelude::*;

fn int_vec(d: usize) -> impl Strategy<Value = Vector<Q>> {
    prop::collection::vec(-5i64..=5, d).prop_map(|v| Vector::from_iterator(v.len(), v.into_iter().map(qi)))
}

/// `(x, s)∘(y, t) = (t x + s y, ⟨x, y⟩ + s t)` by hand.
fn spin_product(a: &Vector<Q>, b: &Vector<Q>) -> Vector<Q> {
    let n = a.len() - 1;
    let (s, t) = (a[n].clone(), b[n].clone());
    let mut out = Vector::from_element(n + 1, qi(0));
    for i in 0..n {
        out[i] = &t * &a[i] + &s * &b[i];
        out[n] += &a[i] * &b[i];
    }
    out[n] += s * t;
    out
}

fn catalog() -> Vec<JordanAlgebra<Q>> {
    vec![real_sym(3), complex_herm(2), quat_herm(2), spin_factor(4)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spin_factor_matches_formula(a in int_vec(5), b in int_vec(5)) {
        let j = spin_factor(4);
        prop_assert_eq!(j.product(&a, &b), spin_product(&a, &b));
    }

    #[test]
    fn jordan_identity_holds_exactly(k in 0usize..4, a in int_vec(6), b in int_vec(6)) {
        let j = &catalog()[k];
        let (a, b) = (a.rows(0, j.dim).into_owned(), b.rows(0, j.dim).into_owned());
        // (a² ∘ b) ∘ a = a² ∘ (b ∘ a)
        let a2 = j.product(&a, &a);
        let lhs = j.product(&j.product(&a2, &b), &a);
        let rhs = j.product(&a2, &j.product(&b, &a));
        prop_assert_eq!(lhs, rhs);
        prop_assert_eq!(j.product(&a, &b), j.product(&b, &a));
        prop_assert_eq!(j.product(&j.unit, &a), a);
    }

    #[test]
    fn transport_keeps_the_type(entries in prop::collection::vec(-2i64..=2, 16)) {
        let t = Mat::from_fn(4, 4, |r, c| qi(entries[r * 4 + c]) + if r == c { qi(5) } else { qi(0) });
        let moved = complex_herm(2).transport(&t).unwrap();
        let id = identify_algebra(&moved).unwrap();
        prop_assert!(id.candidates.contains(&Kind::ComplexHerm(2)));
    }
}
