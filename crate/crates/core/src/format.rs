//! Number formatting shared by the CSV writers.

/// Seventeen significant digits in scientific notation; parses back to the
/// identical `f64`.
pub fn float17(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exactly() {
        for x in [
            0.0,
            -0.0,
            1.0,
            std::f64::consts::PI,
            1e-300,
            6.02214076e23,
            -2.5e-17,
        ] {
            let s = float17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            assert!(!s.contains(','));
        }
        assert_eq!(float17(0.5), "5.0000000000000000e-1");
    }
}
