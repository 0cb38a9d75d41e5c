//! Property tests for the structural invariants that hold over whole
//! parameter families, not just at golden points.

use farfield::diffcalc::{
    cross_shift_stencil, forward_differences, one_scale_stencil, slow_order, two_scale_stencil,
    TwoScaleOrders,
};
use farfield::models::{LatticeModel, SolveDirection, DEFAULT_SING_REL};
use farfield::numeric::{rat, Rat};
use num::traits::Zero;
use proptest::prelude::*;

fn eval_poly(coeffs: &[Rat], x: Rat) -> Rat {
    let mut acc = Rat::zero();
    for c in coeffs.iter().rev() {
        acc = acc * x.clone() + c;
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// exactness on polynomials of the declared order, any divisor M of N
    #[test]
    fn one_scale_stencils_exact(
        p in 1usize..=3,
        n in 2i64..=12,
        coeffs in proptest::collection::vec(-9i64..=9, 4),
        base in -8i64..=8,
        shift_plus in proptest::bool::ANY,
        symmetric in proptest::bool::ANY,
    ) {
        let symmetric = symmetric && p % 2 == 0;
        let shift = if shift_plus { 1 } else { -1 };
        // pick a divisor of n deterministically from the inputs
        let divisors: Vec<i64> = (1..=n).filter(|d| n % d == 0).collect();
        let m = divisors[(base.unsigned_abs() as usize) % divisors.len()];
        let cs: Vec<Rat> = coeffs.iter().take(p + 1).map(|c| rat(*c, 1)).collect();
        let st = one_scale_stencil(p, n, m, shift, symmetric).unwrap();
        prop_assert!(st.reproduces_constants());
        let predicted = st.apply(|s| eval_poly(&cs, rat(base, 1) + rat(s[0] as i64, 1)));
        let direct = eval_poly(&cs, rat(base, 1) + rat(shift as i64 * m, n));
        prop_assert_eq!(predicted, direct);
    }

    /// slow_order detects the exact degree of a polynomial sample
    #[test]
    fn slow_order_is_polynomial_degree(
        deg in 0usize..=4,
        coeffs in proptest::collection::vec(-9i64..=9, 5),
        lead in 1i64..=9,
    ) {
        let mut cs: Vec<Rat> = coeffs.iter().take(deg + 1).map(|c| rat(*c, 1)).collect();
        cs[deg] = rat(lead, 1); // nonzero leading coefficient
        let vals: Vec<Rat> = (0..(deg as i64 + 3)).map(|i| eval_poly(&cs, rat(i, 1))).collect();
        prop_assert_eq!(slow_order(&vals).unwrap(), deg);
    }

    /// top difference of an order-p sample is shift invariant
    #[test]
    fn top_difference_shift_invariant(
        deg in 1usize..=3,
        coeffs in proptest::collection::vec(-9i64..=9, 4),
    ) {
        let cs: Vec<Rat> = coeffs.iter().take(deg + 1).map(|c| rat(*c, 1)).collect();
        let vals: Vec<Rat> = (0..(deg as i64 + 5)).map(|i| eval_poly(&cs, rat(i, 1))).collect();
        let d = forward_differences(&vals, deg);
        let top = &d[deg];
        for w in top.windows(2) {
            prop_assert_eq!(&w[0], &w[1]);
        }
    }

    /// order preservation across lattices: f-samples and g-samples of the
    /// same slow polynomial report the same order
    #[test]
    fn order_preserved_across_lattices(
        deg in 1usize..=3,
        n in 2i64..=8,
        coeffs in proptest::collection::vec(-9i64..=9, 4),
        lead in 1i64..=9,
    ) {
        let mut cs: Vec<Rat> = coeffs.iter().take(deg + 1).map(|c| rat(*c, 1)).collect();
        cs[deg] = rat(lead, 1);
        let fine: Vec<Rat> = (0..(deg as i64 + 3)).map(|i| eval_poly(&cs, rat(i, n))).collect();
        let slow: Vec<Rat> = (0..(deg as i64 + 3)).map(|i| eval_poly(&cs, rat(i, 1))).collect();
        prop_assert_eq!(slow_order(&fine).unwrap(), slow_order(&slow).unwrap());
    }

    /// two-scale and cross-shift stencils reproduce constants exactly
    #[test]
    fn multi_scale_stencils_reproduce_constants(
        n in 2i64..=10,
        two_two in proptest::bool::ANY,
        shift_plus in proptest::bool::ANY,
    ) {
        let shift = if shift_plus { 1 } else { -1 };
        let orders = if two_two { TwoScaleOrders::TwoTwo } else { TwoScaleOrders::TwoOne };
        let st = two_scale_stencil(n, 1, n, orders, shift).unwrap();
        prop_assert!(st.reproduces_constants());
        let st = cross_shift_stencil(n, 1, 1).unwrap();
        prop_assert!(st.reproduces_constants());
    }

    /// quad-solve involution: up-right then up-left recovers the corner
    #[test]
    fn quad_solve_involution(
        which in 0usize..3,
        u00 in 0.5f64..1.5,
        u10 in 0.5f64..1.5,
        u01 in 0.5f64..1.5,
    ) {
        let model = match which {
            0 => LatticeModel::mkdv("2", "1").unwrap(),
            1 => LatticeModel::vkvm("2").unwrap(),
            _ => LatticeModel::hietarinta_real("2", "1", "3").unwrap(),
        };
        // shift hietarinta inputs to its zero background
        let (a, b, c) = if which == 2 { (u00 - 1.0, u10 - 1.0, u01 - 1.0) } else { (u00, u10, u01) };
        if let Ok(u11) = model.step_quad(SolveDirection::UpRight, a, b, c, DEFAULT_SING_REL) {
            let back = model.step_quad(SolveDirection::UpLeft, a, b, u11, DEFAULT_SING_REL);
            if let Ok(back) = back {
                prop_assert!((back - c).abs() < 1e-9 * (1.0 + c.abs()),
                    "involution broke: {back} vs {c}");
            }
        }
    }

    /// unit-modulus dispersion along the whole admissible family
    #[test]
    fn omega_unit_modulus(
        p in 1i64..=6,
        q in 1i64..=6,
        k_frac in 0.05f64..0.95,
    ) {
        let model = LatticeModel::mkdv(&p.to_string(), &q.to_string()).unwrap();
        let k = std::f64::consts::PI * k_frac;
        let cw = model.dispersion(k).unwrap();
        prop_assert!((cw.big_omega.norm() - 1.0).abs() < 1e-13);
    }
}
