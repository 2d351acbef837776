//! The seven collapse metrics on a perfect simplex ETF and on noisy
//! features drawn around it.
//!
//! ```bash
//! cargo run --example collapse_metrics
//! ```

use nc_ood::linalg::RealMatrix;
use nc_ood::metrics::{nc_report, simplex_etf};
use nc_ood::rng::Stream;
use nc_ood::{FeatureBank, NcReport, Result};

fn bank_around(means: &RealMatrix, per_class: usize, noise: f64, rng: &mut Stream) -> Result<FeatureBank> {
    let (c, d) = means.shape();
    let mut data = Vec::with_capacity(c * per_class * d);
    let mut labels = Vec::with_capacity(c * per_class);
    for y in 0..c {
        for _ in 0..per_class {
            data.extend(means.row(y).iter().map(|m| m + noise * rng.standard_normal()));
            labels.push(y);
        }
    }
    FeatureBank::new(RealMatrix::new(c * per_class, d, data)?, labels, c)
}

fn print(label: &str, r: &NcReport) {
    print!("{label:>12}");
    for (_, v) in r.named_values() {
        print!(" {v:>11.3e}");
    }
    println!();
}

fn main() -> Result<()> {
    let classes = 5;
    let etf = simplex_etf(classes);
    let mut rng = Stream::derive(7, "collapse-metrics-example");

    print!("{:>12}", "noise");
    for name in NcReport::METRIC_NAMES {
        print!(" {name:>11}");
    }
    println!();
    for noise in [0.0, 0.05, 0.2, 0.5] {
        let bank = bank_around(&etf, 20, noise, &mut rng)?;
        print(&format!("{noise}"), &nc_report(&bank, &etf)?);
    }
    // a classifier that ignores the geometry breaks self-duality
    let bank = bank_around(&etf, 20, 0.05, &mut rng)?;
    let random_w = RealMatrix::from_fn(classes, classes, |_, _| rng.standard_normal());
    print("random W", &nc_report(&bank, &random_w)?);
    Ok(())
}
