//! Rank-based AUROC with tied scores, and the false-positive count at the
//! ID-set-size cutoff.
//!
//! ```bash
//! cargo run --example auroc_and_false_positives
//! ```

use nc_ood::eval::{auroc, false_positive_count, ScoreSource, ScoredPopulations};
use nc_ood::Result;

fn main() -> Result<()> {
    let cases = [
        ("separated", vec![5.0, 6.0, 7.0], vec![1.0, 2.0]),
        ("reversed", vec![1.0, 2.0], vec![5.0, 6.0, 7.0]),
        ("all tied", vec![3.0, 3.0], vec![3.0, 3.0, 3.0]),
        ("overlap", vec![2.0, 4.0, 6.0, 8.0], vec![1.0, 3.0, 5.0, 7.5]),
    ];
    for (name, id, ood) in cases {
        let pop = ScoredPopulations::new(id, ood, ScoreSource::GmmFeature)?;
        println!(
            "{name:<10} AUROC {:.4} (swapped {:.4}), false positives {}",
            auroc(&pop),
            auroc(&pop.swapped()),
            false_positive_count(&pop)
        );
    }
    // any strictly increasing transform leaves the ranking alone
    let id = vec![0.1, 0.4, 0.35, 0.8];
    let ood = vec![0.05, 0.3, 0.5];
    let raw = auroc(&ScoredPopulations::new(id.clone(), ood.clone(), ScoreSource::SoftmaxMax)?);
    let exp = |v: &[f64]| v.iter().map(|x| (10.0 * x).exp()).collect::<Vec<_>>();
    let moved = auroc(&ScoredPopulations::new(exp(&id), exp(&ood), ScoreSource::SoftmaxMax)?);
    println!("raw {raw} vs exp-transformed {moved}");
    Ok(())
}
