//! A small ablation grid run through the harness, then the report tables.
//! Same result files as `nc-ood ablate --config configs/ablation.json`.
//!
//! ```bash
//! cargo run --release --example experiment_harness [output-dir]
//! ```

use std::path::PathBuf;

use nc_ood::harness::{report, run_experiment, ExperimentConfig, ExperimentKind, SUMMARY_FILE};
use nc_ood::Result;

fn main() -> Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nc-ood-harness-example"));
    let text = include_str!("configs/ablation.json");
    let mut config = ExperimentConfig::from_json(text)?;
    config.output_dir = out.clone();
    assert_eq!(config.experiment_kind, ExperimentKind::AblationGrid);

    let run = run_experiment(&config, 4)?;
    println!(
        "{} artifacts, {} failures, manifest {}",
        run.manifest.artifacts.len(),
        run.manifest.failures.len(),
        run.manifest_path.display()
    );
    let summary = std::fs::read_to_string(out.join(SUMMARY_FILE)).map_err(|e| nc_ood::Error::Io {
        path: out.join(SUMMARY_FILE),
        source: e,
    })?;
    for line in summary.lines() {
        let cells: Vec<&str> = line.split(',').collect();
        // condition, runs, failed, then the AUROC(gmm-feature) mean
        println!("{:<12} {:>5} {:>7} {:>24}", cells[0], cells[1], cells[2], cells[5]);
    }
    for path in report(&run.manifest_path, &out.join("report"))? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
