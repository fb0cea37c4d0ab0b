mod common;

use approx::assert_abs_diff_eq;
use common::{combo_deriv, combo_value, curve, space, Lcg};
use hilbert_heston::{Error, HwElement};
use proptest::prelude::*;

const DX: f64 = 1.0 / 64.0;

fn combo_strategy() -> impl Strategy<Value = [f64; 8]> {
    prop::array::uniform8(-1.0f64..1.0)
}

fn kernel_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, (0usize..256).prop_map(|k| k as f64 * DX)), 0..3)
}

#[test]
fn seed_combination_analytic_values() {
    // oracle: closed-form values plus the leading midpoint-rule error term
    let dx = 1.0 / 256.0;
    let sp = space(dx, 8);
    let mut rng = Lcg(11);
    let second = |c: &[f64; 8], y: f64| -> f64 {
        (1..8).map(|k| -c[k] * (k * k) as f64 * (-(k as f64) * y).exp()).sum()
    };
    for _ in 0..20 {
        let c = rng.combo();
        let f = sp.from_derivative(c[0], |y| combo_deriv(&c, y));
        for x in [0.0, 0.5, 1.0, 3.0] {
            let predicted = combo_value(&c, x) - dx * dx / 24.0 * (second(&c, x) - second(&c, 0.0));
            assert_abs_diff_eq!(f.eval(x).unwrap(), predicted, epsilon = 1e-8);
        }
    }
}

#[test]
fn kernel_against_its_analytic_profile() {
    let sp = space(DX, 8);
    for x in [0.25, 1.0, 2.5] {
        let hx = sp.kernel_hx(x).unwrap();
        for k in 0..400 {
            let y = k as f64 * DX;
            let expect = 1.0 + (1.0 - (-x.min(y)).exp());
            assert_abs_diff_eq!(hx.eval(y).unwrap(), expect, epsilon = 1e-12);
        }
    }
}

#[test]
fn delivery_kernel_against_analytic_average() {
    // oracle: (1/d)∫_x^{x+d} (1 − e^{−2y}) dy in closed form
    let sp = space(DX, 8);
    let f = sp.from_values(|y| 1.0 - (-2.0 * y).exp());
    for (x, d) in [(0.0f64, 0.75f64), (0.25, 0.25), (1.0, 0.1)] {
        let exact = 1.0 - ((-2.0 * x).exp() - (-2.0 * (x + d)).exp()) / (2.0 * d);
        let k = sp.kernel_hxd(x, d).unwrap();
        assert_abs_diff_eq!(f.inner_product(&k).unwrap(), exact, epsilon = 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reproducing_property(c in combo_strategy(), ks in kernel_strategy(), node in 0usize..600) {
        let sp = space(DX, 8);
        let f = curve(&sp, &c, &ks);
        let x = node as f64 * DX;
        let ip = f.inner_product(&sp.kernel_hx(x).unwrap()).unwrap();
        prop_assert!((ip - f.eval(x).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn inner_product_is_symmetric_bilinear_psd(a in combo_strategy(), b in combo_strategy(), s in -2.0f64..2.0) {
        let sp = space(DX, 8);
        let f = curve(&sp, &a, &[]);
        let g = curve(&sp, &b, &[(0.5, 1.0)]);
        let fg = f.inner_product(&g).unwrap();
        prop_assert!((fg - g.inner_product(&f).unwrap()).abs() <= 1e-12 * (1.0 + fg.abs()));
        let comb = f.scaled(s).add(&g).unwrap();
        let lhs = comb.inner_product(&g).unwrap();
        let rhs = s * fg + g.norm_sq().unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        prop_assert!(f.norm_sq().unwrap() >= 0.0);
    }

    #[test]
    fn adjointness(a in combo_strategy(), b in combo_strategy(), ks in kernel_strategy(), m in 0usize..=64) {
        let sp = space(DX, 64);
        let f = curve(&sp, &a, &ks);
        let g = curve(&sp, &b, &[]);
        let s = m as f64 * DX;
        let lhs = f.shift(s).unwrap().inner_product(&g).unwrap();
        let rhs = f.inner_product(&g.shift_adjoint(s).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn semigroup_law(a in combo_strategy(), m1 in 0usize..32, m2 in 0usize..32) {
        let sp = space(DX, 64);
        let f = curve(&sp, &a, &[]);
        let two = f.shift(m1 as f64 * DX).unwrap().shift(m2 as f64 * DX).unwrap();
        let one = f.shift((m1 + m2) as f64 * DX).unwrap();
        prop_assert_eq!(two.deriv(), one.deriv());
        prop_assert!((two.f0() - one.f0()).abs() <= 1e-13 * (1.0 + one.f0().abs()));
    }

    #[test]
    fn shift_norm_bound(a in combo_strategy(), ks in kernel_strategy(), m in 0usize..=64) {
        let sp = space(DX, 64);
        let f = curve(&sp, &a, &ks);
        let n = f.norm().unwrap();
        prop_assume!(n > 1e-12);
        let ratio = f.shift(m as f64 * DX).unwrap().norm().unwrap() / n;
        prop_assert!(ratio <= sp.shift_norm_bound() + 1e-9);
    }

    #[test]
    fn delivery_functionals_match_kernels(a in combo_strategy(), xm in 0usize..64, dm in 1usize..64, frac in 0.0f64..1.0) {
        let sp = space(DX, 64);
        let f = curve(&sp, &a, &[(0.3, 0.5)]);
        let x = xm as f64 * DX;
        let d = (dm as f64 - frac) * DX;
        let id = f.integ_id(d).unwrap();
        prop_assert!((id - f.inner_product(&sp.kernel_hdi(d).unwrap()).unwrap()).abs() <= 1e-10);
        let j = f.integ_jxd(x, d).unwrap();
        prop_assert!((j - f.inner_product(&sp.kernel_hxd(x, d).unwrap()).unwrap()).abs() <= 1e-10);
        prop_assert!((j - f.shift(x).unwrap().integ_id(d).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn norm_lemma(node in 0usize..1800) {
        let sp = space(DX, 8);
        let x = node as f64 * DX;
        let hx = sp.kernel_hx(x).unwrap();
        let lemma = sp.eval_norm_sq(x).unwrap();
        prop_assert!((lemma - hx.norm_sq().unwrap()).abs() <= 1e-10);
        prop_assert!((lemma - (2.0 - (-x).exp())).abs() <= 1e-12);
    }
}

#[test]
fn domain_and_argument_errors() {
    let sp = space(DX, 4);
    let f = sp.constant(1.0);
    assert!(matches!(f.eval(31.0), Err(Error::Domain(_))));
    assert!(matches!(f.integ_jxd(0.0, 0.0), Err(Error::Argument(_))));
    assert!(matches!(sp.kernel_hxd(0.0, -1.0), Err(Error::Argument(_))));
    assert!(matches!(sp.kernel_hx(-0.5), Err(Error::Domain(_))));
    assert!(matches!(f.shift(0.5), Err(Error::Domain(_))));
    let short = HwElement::from_parts(&sp, 1.0, vec![0.0; 10]);
    assert!(matches!(short.inner_product(&f), Err(Error::Domain(_))));
}
