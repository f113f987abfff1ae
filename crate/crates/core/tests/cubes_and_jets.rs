use approx::assert_relative_eq;
use proptest::prelude::*;
use whitney_core::dyadic::{dist_box_to_points, exp2i};
use whitney_core::{AxisBox, DyadicCube, Field, Jet, MultiIndex, TestFunction};

fn cube_strategy(n: usize) -> impl Strategy<Value = DyadicCube> {
    (-2i32..5, prop::collection::vec(-40i64..40, n)).prop_map(|(level, coords)| {
        let scale = 1i64 << (level + 2);
        let coords: Vec<i64> = coords.iter().map(|c| c * scale / 40).collect();
        DyadicCube::new(level, &coords)
    })
}

/// Closed-box overlap in floating point; exact here since all corners are dyadic.
fn boxes_overlap(a: &DyadicCube, b: &DyadicCube) -> bool {
    let (x, y) = (a.to_box(), b.to_box());
    (0..x.dim()).all(|i| x.lo[i] <= y.hi[i] && y.lo[i] <= x.hi[i])
}

fn poly2() -> TestFunction {
    TestFunction::polynomial(2, &[(0.5, &[0, 0]), (-1.25, &[1, 0]), (2.0, &[1, 1]), (0.75, &[0, 2]), (-0.5, &[2, 1])])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn touch_is_symmetric_and_matches_box_overlap(a in cube_strategy(2), b in cube_strategy(2)) {
        prop_assert!(a.touches(&a));
        prop_assert_eq!(a.touches(&b), b.touches(&a));
        prop_assert_eq!(a.touches(&b), boxes_overlap(&a, &b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn touch_oracle_in_three_dimensions(a in cube_strategy(3), b in cube_strategy(3)) {
        prop_assert_eq!(a.touches(&b), boxes_overlap(&a, &b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn derivative_jet_reproduces_coefficients(
        coeffs in prop::collection::vec(-5.0f64..5.0, 10),
        ax in -2.0f64..2.0,
        ay in -2.0f64..2.0,
    ) {
        // order 3 in two variables has 10 coefficients
        let jet = Jet::new(vec![ax, ay], 3, coeffs).unwrap();
        for i in MultiIndex::all_upto(2, 3) {
            let d = jet.derivative(&i).unwrap();
            prop_assert_eq!(d.eval(&[ax, ay]), jet.coeff(&i).unwrap());
        }
    }

    #[test]
    fn polynomial_jets_agree_everywhere(
        x in prop::collection::vec(-1.0f64..1.0, 2),
        y in prop::collection::vec(-1.0f64..1.0, 2),
        t in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let f = poly2();
        let jx = Jet::of_field(&f, &x, 3).unwrap();
        let jy = Jet::of_field(&f, &y, 3).unwrap();
        let exact = f.value(&t).unwrap();
        prop_assert!((jx.eval(&t) - exact).abs() <= 1e-10 * (1.0 + exact.abs()));
        prop_assert!((jx.eval(&t) - jy.eval(&t)).abs() <= 1e-10 * (1.0 + exact.abs()));
    }

    #[test]
    fn distance_grows_when_sites_are_removed(
        pts in prop::collection::vec(prop::collection::vec(-64i32..64, 2), 2..8),
        lo in prop::collection::vec(-16i32..16, 2),
        side in 1i32..6,
    ) {
        let points: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|&v| v as f64 / 8.0).collect()).collect();
        let lo: Vec<f64> = lo.iter().map(|&v| v as f64 / 4.0).collect();
        let b = AxisBox::cube(&lo, side as f64 / 4.0);
        let mut prev = 0.0;
        for k in (1..=points.len()).rev() {
            let d = dist_box_to_points(&b, &points[..k]).unwrap();
            prop_assert!(d >= prev);
            // squared distance is a sum of squares of multiples of 1/8
            let d2 = d * d * 64.0;
            prop_assert!((d2 - d2.round()).abs() < 1e-9);
            prev = d;
        }
    }
}

#[test]
fn dyadic_geometry_is_exact() {
    let q = DyadicCube::new(3, &[5, -2]);
    assert_eq!(q.side(), 0.125);
    assert_eq!(q.lower(), vec![0.625, -0.25]);
    assert_eq!(q.center(), vec![0.6875, -0.1875]);
    assert_eq!(q.parent(), DyadicCube::new(2, &[2, -1]));
    assert!(q.parent().contains_cube(&q));
    assert_eq!(q.children().len(), 4);
    assert_relative_eq!(q.diameter(), 0.125 * 2f64.sqrt());
    assert_eq!(exp2i(-44), 2f64.powi(-44));
}
