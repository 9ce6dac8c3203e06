use lce_core::convexity::{is_log_concave_extensible, log_concave_1d};
use lce_core::*;
use proptest::prelude::*;

fn pmf_1d(weights: &[f64], lo: i64) -> LatticePmf {
    let total: f64 = weights.iter().sum();
    let dom = BoxDomain::new(IndexVector::new(vec![lo]), IndexVector::new(vec![lo + weights.len() as i64 - 1])).unwrap();
    LatticePmf::new(dom, weights.iter().map(|w| w / total).collect(), 0.0).unwrap()
}

fn pmf_2d(weights: &[f64], w: usize) -> LatticePmf {
    let total: f64 = weights.iter().sum();
    let h = weights.len() / w;
    let dom = BoxDomain::new(IndexVector::new(vec![0, 0]), IndexVector::new(vec![h as i64 - 1, w as i64 - 1])).unwrap();
    LatticePmf::new(dom, weights.iter().map(|x| x / total).collect(), 0.0).unwrap()
}

fn small_set_2d() -> impl Strategy<Value = LatticeSet> {
    prop::collection::btree_set((0i64..4, 0i64..4), 1..8).prop_map(|pts| {
        LatticeSet::new(2, pts.into_iter().map(|(a, b)| IndexVector::new(vec![a, b]))).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_preserves_mass_and_adds_means(
        a in prop::collection::vec(0.01f64..1.0, 1..12),
        b in prop::collection::vec(0.01f64..1.0, 1..12),
        shift in -5i64..5,
    ) {
        let p = pmf_1d(&a, shift);
        let q = pmf_1d(&b, 0);
        let direct = convolve(&p, &q, &ConvolveOptions::with_method(ConvolveMethod::Direct)).unwrap();
        let fft = convolve(&p, &q, &ConvolveOptions::with_method(ConvolveMethod::Fft)).unwrap();
        prop_assert!((direct.total_mass() - 1.0).abs() < 1e-13);
        let mp = discrete_moments(&p).mean[0];
        let mq = discrete_moments(&q).mean[0];
        prop_assert!((discrete_moments(&direct).mean[0] - mp - mq).abs() < 1e-11);
        for (x, y) in direct.values().iter().zip(fft.values()) {
            prop_assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn one_dimensional_fast_path_matches_lp(a in prop::collection::vec(0.0f64..1.0, 1..10)) {
        prop_assume!(a.iter().any(|x| *x > 0.0));
        let p = pmf_1d(&a, 0);
        let fast = log_concave_1d(&p, 1e-9).unwrap();
        let lp = is_log_concave_extensible(&p, 1e-9, ArithmeticMode::Float).unwrap();
        prop_assert_eq!(fast.is_extensible, lp.is_extensible);
    }

    #[test]
    fn extensibility_is_scale_and_shift_invariant(a in prop::collection::vec(0.05f64..1.0, 6..=6), dx in -3i64..3) {
        let p = pmf_2d(&a, 3);
        let base = is_log_concave_extensible(&p, 1e-9, ArithmeticMode::Float).unwrap().is_extensible;
        let moved = p.shift(&[dx, -dx]).unwrap();
        prop_assert_eq!(base, is_log_concave_extensible(&moved, 1e-9, ArithmeticMode::Float).unwrap().is_extensible);
        let scaled = LatticePmf::new(p.domain().clone(), p.values().iter().map(|v| v * 7.5).collect(), 0.0).unwrap();
        prop_assert_eq!(base, is_log_concave_extensible(&scaled, 1e-9, ArithmeticMode::Float).unwrap().is_extensible);
    }

    #[test]
    fn uniform_on_a_set_is_extensible_iff_convex(a in small_set_2d()) {
        let u = make_uniform_on_set(&a).unwrap();
        let convex = is_zd_convex(&a).unwrap().is_convex;
        let ext = is_log_concave_extensible(&u, 1e-9, ArithmeticMode::Float).unwrap();
        prop_assert_eq!(convex, ext.is_extensible);
        prop_assert_eq!(convex, ext.support_convex);
    }

    #[test]
    fn planar_self_sums_of_convex_sets_are_convex(a in small_set_2d()) {
        prop_assume!(is_zd_convex(&a).unwrap().is_convex);
        let aa = minkowski_sum(&a, &a).unwrap();
        prop_assert!(is_zd_convex(&aa).unwrap().is_convex);
    }

    #[test]
    fn entropy_of_products_adds(a in prop::collection::vec(0.01f64..1.0, 1..8), b in prop::collection::vec(0.01f64..1.0, 1..8)) {
        let p = pmf_1d(&a, 0);
        let q = pmf_1d(&b, 2);
        let pq = make_product(&[p.clone(), q.clone()]).unwrap();
        let lhs = shannon_entropy(&pq).unwrap();
        let rhs = shannon_entropy(&p).unwrap() + shannon_entropy(&q).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}

#[test]
fn exact_and_float_agree_on_a_binomial_grid() {
    let b = [1.0, 4.0, 6.0, 4.0, 1.0];
    let w: Vec<f64> = b.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect();
    let p = pmf_2d(&w, 5);
    let f = is_log_concave_extensible(&p, 1e-12, ArithmeticMode::Float).unwrap();
    let e = is_log_concave_extensible(&p, 0.0, ArithmeticMode::Exact).unwrap();
    assert!(f.is_extensible && e.is_extensible);
}

#[test]
fn non_convex_support_is_never_extensible() {
    let a = LatticeSet::from_coords(2, &[&[1, 0], &[0, 1], &[2, 1], &[1, 2]]).unwrap();
    let r = is_zd_convex(&a).unwrap();
    assert_eq!(r.witnesses, vec![IndexVector::new(vec![1, 1])]);
    let u = make_uniform_on_set(&a).unwrap();
    assert!(!is_log_concave_extensible(&u, 1e-9, ArithmeticMode::Float).unwrap().is_extensible);
}
