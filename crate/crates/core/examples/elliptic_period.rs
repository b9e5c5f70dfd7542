//! The exact pendulum period through the arithmetic-geometric mean, set
//! against the classical small-angle series.

use std::f64::consts::PI;

use hyperwalk::pendulum::{agm, exact_period_oracle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "agm(1, √2) = {:.15}  (Gauss: 1.198140234735592)",
        agm(1.0, 2f64.sqrt())
    );
    println!(
        "{:>6} {:>18} {:>18} {:>10}",
        "a", "T/2π (AGM)", "1 + a²/16 + …", "gap"
    );
    for a in [0.025, 0.1, 0.4, 1.0, 2.0, 3.0] {
        let exact = exact_period_oracle(a, 1.0, 1.0)? / (2.0 * PI);
        let series = 1.0 + a * a / 16.0 + 11.0 * a.powi(4) / 3072.0;
        println!(
            "{a:>6} {exact:>18.12} {series:>18.12} {:>10.2e}",
            exact - series
        );
    }
    Ok(())
}
