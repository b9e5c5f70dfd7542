use hyperwalk::asymptotic::{
    decide_adequal, decide_infinitely_close, AsymptoticNumber, Decision, DEFAULT_TRUNCATION as K,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn coeff() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

/// Finite series whose leading coefficient has modulus at least 1/2.
fn series(min_lead: i32, max_lead: i32) -> impl Strategy<Value = AsymptoticNumber> {
    (
        min_lead..=max_lead,
        0.5..1.0f64,
        0.0..std::f64::consts::TAU,
        prop::collection::vec(coeff(), K),
    )
        .prop_map(|(lead, r, theta, rest)| {
            let mut coeffs = vec![Complex64::from_polar(r, theta)];
            coeffs.extend(rest);
            AsymptoticNumber::from_coeffs(lead, coeffs, K)
        })
}

fn finite() -> impl Strategy<Value = AsymptoticNumber> {
    series(0, 2)
}

/// Max coefficient gap over the orders both sides know.
fn gap(x: &AsymptoticNumber, y: &AsymptoticNumber) -> f64 {
    let lo = x.leading_order().min(y.leading_order());
    let top = |s: &AsymptoticNumber| s.known_through().unwrap_or(s.leading_order() + K as i32);
    let hi = top(x).min(top(y));
    (lo..=hi)
        .map(|k| (x.coeff(k) - y.coeff(k)).norm())
        .fold(0.0, f64::max)
}

fn eps() -> AsymptoticNumber {
    AsymptoticNumber::epsilon(K)
}

proptest! {
    #[test]
    fn addition_is_associative_and_commutative(a in finite(), b in finite(), c in finite()) {
        prop_assert!(gap(&(&(&a + &b) + &c), &(&a + &(&b + &c))) <= 1e-12);
        prop_assert!(gap(&(&a + &b), &(&b + &a)) <= 1e-12);
    }

    #[test]
    fn multiplication_is_commutative_and_distributive(a in finite(), b in finite(), c in finite()) {
        prop_assert!(gap(&(&a * &b), &(&b * &a)) <= 1e-12);
        prop_assert!(gap(&(&(&a * &b) * &c), &(&a * &(&b * &c))) <= 1e-12);
        // same leading orders keep b + c from cancelling its leading term
        let c = AsymptoticNumber::from_coeffs(b.leading_order(), c.coefficients().to_vec(), K);
        prop_assert!(gap(&(&a * &(&b + &c)), &(&(&a * &b) + &(&a * &c))) <= 1e-10);
    }

    #[test]
    fn nonzero_numbers_have_inverses(a in series(-2, 2)) {
        let one = AsymptoticNumber::constant(1.0, K);
        prop_assert!(gap(&(&a * &a.recip().unwrap()), &one) <= 1e-10);
        prop_assert!(gap(&(&a - &a), &AsymptoticNumber::zero(K)) <= 1e-15);
    }

    #[test]
    fn pythagorean_identity(a in finite()) {
        let (s, c) = (a.sin().unwrap(), a.cos().unwrap());
        let residual = &(&(&s * &s) + &(&c * &c)) - &AsymptoticNumber::constant(1.0, K);
        prop_assert!(residual.coefficients().iter().all(|c| c.norm() <= 1e-12), "{residual}");
    }

    #[test]
    fn adequality_survives_multiplication(x in series(-1, 2), w in finite(), z in series(-1, 2)) {
        let y = &x * &(&AsymptoticNumber::constant(1.0, K) + &(&eps() * &w));
        prop_assert!(decide_adequal(&x, &y).unwrap().as_bool());
        prop_assert!(decide_adequal(&(&x * &z), &(&y * &z)).unwrap().as_bool());
    }

    #[test]
    fn closeness_survives_addition(x in finite(), w in finite(), z in finite()) {
        let y = &x + &(&eps() * &w);
        prop_assert!(decide_infinitely_close(&x, &y).unwrap().as_bool());
        prop_assert!(decide_infinitely_close(&(&x + &z), &(&y + &z)).unwrap().as_bool());
    }

    #[test]
    fn adequal_infinitesimals_are_close(x in series(1, 3), w in finite()) {
        let y = &x * &(&AsymptoticNumber::constant(1.0, K) + &(&eps() * &w));
        prop_assert!(decide_adequal(&x, &y).unwrap().as_bool());
        prop_assert!(decide_infinitely_close(&x, &y).unwrap().as_bool());
    }

    #[test]
    fn relations_agree_on_appreciable_numbers(x in series(0, 0), w in finite(), shift in -1.0..1.0f64) {
        // y differs from x by an infinitesimal plus a standard shift
        let y = &(&x + &(&eps() * &w)) + &AsymptoticNumber::constant(shift, K);
        prop_assume!(y.leading_order() == 0 && !y.is_zero());
        prop_assert_eq!(
            decide_adequal(&x, &y).unwrap().as_bool(),
            decide_infinitely_close(&x, &y).unwrap().as_bool()
        );
    }
}

#[test]
fn close_does_not_imply_adequal() {
    let (e, two_e) = (eps(), eps().scale(2.0));
    assert_eq!(
        decide_infinitely_close(&e, &two_e).unwrap(),
        Decision::Holds
    );
    assert_eq!(decide_adequal(&e, &two_e).unwrap(), Decision::Fails);
}
