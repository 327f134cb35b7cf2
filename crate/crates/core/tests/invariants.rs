use lieforge::lie::dist_to_identity;
use lieforge::sampling::{random_algebra_in_ball, rng};
use lieforge::words::{evaluate, word_derivative, word_jacobian};
use lieforge::{adjoint, distance, AlgebraElement, GroupElement, GroupKind, Tuple, Word};
use nalgebra::DVector;
use proptest::prelude::*;

fn letters(max_len: usize) -> impl Strategy<Value = Vec<i32>> {
    prop::collection::vec(prop::sample::select(vec![1, -1, 2, -2]), 0..max_len)
}

fn kind() -> impl Strategy<Value = GroupKind> {
    prop::sample::select(GroupKind::ALL.to_vec())
}

fn element(kind: GroupKind, radius: f64, seed: u64) -> GroupElement {
    random_algebra_in_ball(kind, radius, &mut rng(seed)).exp()
}

fn pair(kind: GroupKind, seed: u64) -> Tuple {
    Tuple::pair(element(kind, 1.0, seed), element(kind, 1.0, seed ^ 0x9e37)).unwrap()
}

fn close(a: &GroupElement, b: &GroupElement, tol: f64) -> bool {
    (a.matrix() - b.matrix()).norm() <= tol * (1.0 + a.matrix().norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reduction_is_free_and_idempotent(raw in letters(40)) {
        let w = Word::reduce(&raw, 2).unwrap();
        prop_assert!(w.letters().windows(2).all(|p| p[0] != -p[1]));
        prop_assert_eq!(Word::reduce(w.letters(), 2).unwrap(), w.clone());
        prop_assert_eq!(w.len() % 2, raw.len() % 2);
    }

    #[test]
    fn inverse_cancels(raw in letters(30)) {
        let w = Word::reduce(&raw, 2).unwrap();
        prop_assert!(w.concat(&w.inverse()).is_empty());
        prop_assert_eq!(w.inverse().inverse(), w);
    }

    #[test]
    fn text_round_trip(raw in letters(30)) {
        let w = Word::reduce(&raw, 2).unwrap();
        prop_assert_eq!(Word::parse_text(&w.to_text(), 2).unwrap(), w);
    }

    #[test]
    fn evaluation_is_a_homomorphism(k in kind(), u in letters(12), v in letters(12), seed in 0u64..1000) {
        let t = pair(k, seed);
        let (u, v) = (Word::reduce(&u, 2).unwrap(), Word::reduce(&v, 2).unwrap());
        let uv = evaluate(&u.concat(&v), &t).unwrap();
        let prod = evaluate(&u, &t).unwrap().mul(&evaluate(&v, &t).unwrap());
        prop_assert!(close(&uv, &prod, 1e-10));
        let inv = evaluate(&u.inverse(), &t).unwrap();
        prop_assert!(close(&inv, &evaluate(&u, &t).unwrap().inverse(), 1e-10));
    }

    #[test]
    fn log_inverts_exp_near_identity(k in kind(), seed in 0u64..1000) {
        let x = random_algebra_in_ball(k, 0.8, &mut rng(seed));
        let back = x.exp().log().unwrap();
        prop_assert!(back.sub(&x).norm() <= 1e-10 * (1.0 + x.norm()));
        prop_assert!((dist_to_identity(&x.exp()) - x.norm()).abs() <= 1e-10);
    }

    #[test]
    fn adjoint_is_a_homomorphism(k in kind(), seed in 0u64..1000) {
        let (g, h) = (element(k, 1.0, seed), element(k, 1.0, seed + 1));
        let lhs = adjoint(&g.mul(&h));
        let rhs = adjoint(&g) * adjoint(&h);
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn adjoint_matches_conjugation(k in kind(), seed in 0u64..1000) {
        let g = element(k, 1.0, seed);
        let x = random_algebra_in_ball(k, 1.0, &mut rng(seed + 7));
        let conj = k.spec().vee(&(g.matrix() * x.matrix() * g.inverse().matrix()));
        prop_assert!((adjoint(&g) * &x.coords - conj).norm() <= 1e-10 * (1.0 + x.norm()));
    }

    #[test]
    fn distance_is_symmetric_and_left_invariant(k in kind(), seed in 0u64..1000) {
        let (a, b) = (element(k, 0.5, seed), element(k, 0.5, seed + 1));
        let c = element(k, 0.5, seed + 2);
        prop_assert!((distance(&a, &b) - distance(&b, &a)).abs() <= 1e-10);
        prop_assert!((distance(&c.mul(&a), &c.mul(&b)) - distance(&a, &b)).abs() <= 1e-9);
    }

    #[test]
    fn triangle_inequality_on_compact_groups(
        k in prop::sample::select(vec![GroupKind::Su2, GroupKind::So3]),
        seed in 0u64..1000,
    ) {
        let (a, b, c) = (element(k, 0.5, seed), element(k, 0.5, seed + 1), element(k, 0.5, seed + 2));
        prop_assert!(distance(&a, &c) <= distance(&a, &b) + distance(&b, &c) + 1e-12);
    }

    #[test]
    fn jacobian_is_the_linear_map_of_the_derivative(k in kind(), raw in letters(14), seed in 0u64..1000) {
        let t = pair(k, seed);
        let w = Word::reduce(&raw, 2).unwrap();
        let n = k.spec().algebra_dim;
        let mut r = rng(seed + 11);
        let dirs = [random_algebra_in_ball(k, 1.0, &mut r), random_algebra_in_ball(k, 1.0, &mut r)];
        let xi = DVector::from_iterator(2 * n, dirs.iter().flat_map(|d| d.coords.iter().copied()));
        let via_jac = word_jacobian(&w, &t).unwrap() * xi;
        let d = word_derivative(&w, &t, &dirs).unwrap();
        prop_assert!((via_jac - &d.coords).norm() <= 1e-9 * (1.0 + d.norm()));
    }

    #[test]
    fn jacobian_matches_finite_differences(k in kind(), raw in letters(10), seed in 0u64..1000) {
        let t = pair(k, seed);
        let w = Word::reduce(&raw, 2).unwrap();
        let n = k.spec().algebra_dim;
        let jac = word_jacobian(&w, &t).unwrap();
        let base_inv = evaluate(&w, &t).unwrap().inverse();
        let h = 1e-5;
        for j in 0..2 * n {
            let mut e = DVector::zeros(2 * n);
            e[j] = h;
            let plus = base_inv.mul(&evaluate(&w, &t.perturbed(&e)).unwrap()).log().unwrap();
            let minus = base_inv.mul(&evaluate(&w, &t.perturbed(&(-&e))).unwrap()).log().unwrap();
            let fd = plus.sub(&minus).scale(0.5 / h);
            let col = AlgebraElement::new(k, jac.column(j).into_owned());
            prop_assert!(fd.sub(&col).norm() <= 1e-5 * (1.0 + col.norm()), "column {} of {}", j, w);
        }
    }
}
