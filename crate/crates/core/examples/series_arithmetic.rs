//! Truncated series in a formal infinitesimal ε: arithmetic, standard
//! parts, and the two closeness relations.

use hyperwalk::asymptotic::{
    adequality_defect, decide_adequal, decide_infinitely_close, AsymptoticNumber,
    DEFAULT_TRUNCATION as K,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let eps = AsymptoticNumber::epsilon(K);
    let one = AsymptoticNumber::constant(1.0, K);

    // 1/(1 − ε) = 1 + ε + ε² + …
    let geometric = one.checked_div(&(&one - &eps))?;
    println!("1/(1−ε)       = {geometric}");
    println!("standard part = {}", geometric.standard_part()?);

    let s = &one + &eps;
    let (sin, cos) = (s.sin()?, s.cos()?);
    println!("sin(1+ε)      = {sin}");
    println!("sin²+cos²     = {}", &(&sin * &sin) + &(&cos * &cos));

    // ε and 2ε are infinitely close but not adequal; ε and ε+ε² are both.
    let two_eps = eps.scale(2.0);
    let nearby = &eps + &(&eps * &eps);
    println!("ε ≈ 2ε: {:?}", decide_infinitely_close(&eps, &two_eps)?);
    println!("ε ≍ 2ε: {:?}", decide_adequal(&eps, &two_eps)?);
    println!("ε ≍ ε+ε²: {:?}", decide_adequal(&eps, &nearby)?);
    println!(
        "defect of ε against ε+ε²: {:?}",
        adequality_defect(&eps, &nearby)?
    );

    // sin(ε⁵) − ε⁵ vanishes through every computed order, yet is not known
    // to be exactly zero, so comparing it with 0 is reported as undecidable.
    let e5 = AsymptoticNumber::monomial(1.0, 5, K);
    let residue = &e5.sin()? - &e5;
    println!("sin(ε⁵) − ε⁵ = {residue}");
    let zero = AsymptoticNumber::zero(K);
    println!("sin(ε⁵) − ε⁵ ≍ 0: {:?}", decide_adequal(&residue, &zero)?);
    Ok(())
}
