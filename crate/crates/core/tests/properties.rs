use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use proptest::prelude::*;

use ring_core::catalog;
use ring_core::fixed::{shr_round, QFormat};
use ring_core::ring::{isomorphic_matrix, ring_multiply, RingElement, RingSpec};
use ring_core::tensor::unity_of;

fn ring() -> impl Strategy<Value = RingSpec> {
    (0..12usize).prop_map(|i| catalog::all().swap_remove(i))
}

fn element(n: usize) -> impl Strategy<Value = RingElement> {
    prop::collection::vec(-4.0f64..4.0, n).prop_map(RingElement)
}

fn ring_and(count: usize) -> impl Strategy<Value = (RingSpec, Vec<RingElement>)> {
    ring().prop_flat_map(move |s| {
        let n = s.n();
        (Just(s), prop::collection::vec(element(n), count))
    })
}

fn close(a: &RingElement, b: &RingElement, tol: f64) -> bool {
    a.max_abs_diff(b) <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bilinear((spec, e) in ring_and(3), alpha in -3.0f64..3.0) {
        let lhs = ring_multiply(&spec, &e[0].scaled(alpha).add(&e[1]), &e[2]).unwrap();
        let rhs = ring_multiply(&spec, &e[0], &e[2]).unwrap().scaled(alpha).add(&ring_multiply(&spec, &e[1], &e[2]).unwrap());
        prop_assert!(close(&lhs, &rhs, 1e-10));
        let lhs = ring_multiply(&spec, &e[2], &e[0].scaled(alpha).add(&e[1])).unwrap();
        let rhs = ring_multiply(&spec, &e[2], &e[0]).unwrap().scaled(alpha).add(&ring_multiply(&spec, &e[2], &e[1]).unwrap());
        prop_assert!(close(&lhs, &rhs, 1e-10));
    }

    #[test]
    fn associative((spec, e) in ring_and(3)) {
        let ab_c = ring_multiply(&spec, &ring_multiply(&spec, &e[0], &e[1]).unwrap(), &e[2]).unwrap();
        let a_bc = ring_multiply(&spec, &e[0], &ring_multiply(&spec, &e[1], &e[2]).unwrap()).unwrap();
        prop_assert!(close(&ab_c, &a_bc, 1e-9));
    }

    #[test]
    fn fast_equals_direct((spec, e) in ring_and(2)) {
        let direct = ring_multiply(&spec, &e[0], &e[1]).unwrap();
        let fast = RingElement(spec.fast().unwrap().apply(&e[0].0, &e[1].0));
        prop_assert!(close(&direct, &fast, 1e-10));
    }

    #[test]
    fn unity_is_neutral((spec, e) in ring_and(1)) {
        let one = RingElement(unity_of(&spec));
        prop_assert!(close(&ring_multiply(&spec, &one, &e[0]).unwrap(), &e[0], 1e-12));
        prop_assert!(close(&ring_multiply(&spec, &e[0], &one).unwrap(), &e[0], 1e-12));
    }

    #[test]
    fn isomorphic_matrix_multiplies((spec, e) in ring_and(2)) {
        let g = isomorphic_matrix(&spec, &e[0]).unwrap();
        let z = g * nalgebra::DVector::from_column_slice(&e[1].0);
        let direct = ring_multiply(&spec, &e[0], &e[1]).unwrap();
        prop_assert!(close(&direct, &RingElement(z.iter().copied().collect()), 1e-10));
    }

    #[test]
    fn commutative_except_quaternions((spec, e) in ring_and(2)) {
        let ab = ring_multiply(&spec, &e[0], &e[1]).unwrap();
        let ba = ring_multiply(&spec, &e[1], &e[0]).unwrap();
        if spec.name != "H" {
            prop_assert!(close(&ab, &ba, 1e-10));
        }
    }

    #[test]
    fn quantize_round_trip(f in -4i32..12, code in -128i64..=127, frac in -0.49f64..0.49) {
        let q = QFormat::q8(f);
        let v = (code as f64 + frac) * (-f64::from(f)).exp2();
        let (c, sat) = q.quantize(v);
        prop_assert!(!sat);
        prop_assert!((q.dequantize(i64::from(c)) - v).abs() <= (-f64::from(f) - 1.0).exp2());
    }

    #[test]
    fn rounding_shift_matches_rational(v in -(1i64 << 40)..(1i64 << 40), t in 0i32..30) {
        let exact = BigRational::new(BigInt::from(v), BigInt::from(1i64) << t as usize).round();
        prop_assert_eq!(shr_round(v, t), exact.to_integer().to_i64().unwrap());
    }
}

#[test]
fn quaternions_do_not_commute() {
    let h = catalog::quaternion();
    let i = RingElement(vec![0.0, 1.0, 0.0, 0.0]);
    let j = RingElement(vec![0.0, 0.0, 1.0, 0.0]);
    assert_eq!(ring_multiply(&h, &i, &j).unwrap().0, vec![0.0, 0.0, 0.0, 1.0]);
    assert_eq!(ring_multiply(&h, &j, &i).unwrap().0, vec![0.0, 0.0, 0.0, -1.0]);
}
