use kvwb_core::cones::{dual_cone, is_self_dual, verify_duality_certificate, PolyhedralCone};
use kvwb_core::linalg::{identity, Mat};
use kvwb_core::scalar::{qi, Q};
use proptest::prelude::*;

fn cone() -> impl Strategy<Value = PolyhedralCone> {
    (2usize..=4).prop_flat_map(|d| {
        prop::collection::vec(prop::collection::vec(-3i64..=3, d), 1..=6)
            .prop_map(move |gs| PolyhedralCone::new(d, gs.into_iter().map(|g| g.into_iter().map(qi).collect())).unwrap())
    })
}

fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_rays_pair_nonnegatively(k in cone()) {
        let dual = dual_cone(&k, &identity(k.dim)).unwrap();
        for y in &dual.generators {
            for g in &k.generators {
                prop_assert!(dot(y, g) >= qi(0));
            }
        }
    }

    #[test]
    fn bidual_is_the_cone(k in cone()) {
        let id: Mat<Q> = identity(k.dim);
        let bidual = dual_cone(&dual_cone(&k, &id).unwrap(), &id).unwrap();
        prop_assert!(bidual.equals(&k));
    }

    #[test]
    fn certificates_reverify(k in cone()) {
        let (cert, dual) = is_self_dual(&k, &identity(k.dim)).unwrap();
        prop_assert!(verify_duality_certificate(&cert, &k, &dual));
    }

    #[test]
    fn scaling_the_form_scales_nothing(k in cone(), c in 1i64..5) {
        let id: Mat<Q> = identity(k.dim);
        let a = dual_cone(&k, &id).unwrap();
        let b = dual_cone(&k, &id.map(|x| x * qi(c))).unwrap();
        prop_assert!(a.equals(&b));
    }
}

#[test]
fn orthant_is_self_dual() {
    for d in 1..=5 {
        let k = PolyhedralCone::orthant(d);
        let (cert, _) = is_self_dual(&k, &identity(d)).unwrap();
        assert!(cert.verdict);
    }
}
