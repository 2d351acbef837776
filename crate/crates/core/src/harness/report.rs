//! Plot-ready long-format tables derived from a verified run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eval::pearson_r;
use crate::formats::write_bytes;
use crate::harness::manifest::Manifest;
use crate::harness::run::{SCORES_FILE, TRAJECTORY_FILE};
use crate::harness::tables::{csv_bytes, parse_real, real, Table};
use crate::metrics::NcReport;

pub const NC_TRAJECTORY_FILE: &str = "nc_trajectory.csv";
pub const SCORE_CURVES_FILE: &str = "score_curves.csv";
pub const FALSE_POSITIVE_FILE: &str = "false_positives.csv";
pub const CORRELATION_FILE: &str = "correlation.csv";
pub const CORRELATION_SUMMARY_FILE: &str = "correlation_summary.csv";

const AUROC_COLUMNS: [(&str, &str); 3] = [
    ("auroc_gmm_feature", "gmm-feature"),
    ("auroc_gmm_logit", "gmm-logit"),
    ("auroc_softmax_max", "softmax-max"),
];
/// Correlations pair every collapse metric with this score.
const CORRELATION_TARGET: &str = "auroc_gmm_feature";

type Key = (String, String, String);

fn key(table: &Table, row: &[String]) -> Result<Key> {
    Ok((
        row[table.column("condition")?].clone(),
        row[table.column("seed")?].clone(),
        row[table.column("epoch")?].clone(),
    ))
}

/// Verifies every artifact against `manifest_path`, then writes the report
/// tables into `out_dir` and returns their paths.
pub fn report(manifest_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let manifest = Manifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.verify(root)?;
    if manifest.artifact(TRAJECTORY_FILE).is_none() {
        return Err(Error::invalid(format!(
            "{} lists no {TRAJECTORY_FILE}; nothing to report",
            manifest_path.display()
        )));
    }
    let trajectory = Table::parse(&manifest.read_verified(root, TRAJECTORY_FILE)?, TRAJECTORY_FILE)?;
    let scores = match manifest.artifact(SCORES_FILE) {
        Some(_) => Some(Table::parse(&manifest.read_verified(root, SCORES_FILE)?, SCORES_FILE)?),
        None => None,
    };

    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = out_dir.join(name);
        write_bytes(&path, &bytes)?;
        written.push(path);
        Ok(())
    };

    let metric_cols: Vec<(usize, &str)> = NcReport::METRIC_NAMES
        .iter()
        .map(|&m| Ok((trajectory.column(m)?, m)))
        .collect::<Result<_>>()?;
    let (cc, sc, ec) = (
        trajectory.column("condition")?,
        trajectory.column("seed")?,
        trajectory.column("epoch")?,
    );
    let nc_rows = trajectory.rows.iter().flat_map(|row| {
        metric_cols.iter().map(move |&(i, m)| {
            vec![row[cc].clone(), row[ec].clone(), row[sc].clone(), m.to_string(), row[i].clone()]
        })
    });
    emit(
        NC_TRAJECTORY_FILE,
        csv_bytes(&["condition", "epoch", "seed", "metric", "value"], nc_rows)?,
    )?;

    let Some(scores) = scores else {
        return Ok(written);
    };
    let (scc, ssc, sec) = (scores.column("condition")?, scores.column("seed")?, scores.column("epoch")?);
    let auroc_cols: Vec<(usize, &str)> = AUROC_COLUMNS
        .iter()
        .map(|&(col, source)| Ok((scores.column(col)?, source)))
        .collect::<Result<_>>()?;
    let curve_rows = scores.rows.iter().flat_map(|row| {
        auroc_cols.iter().map(move |&(i, source)| {
            vec![row[scc].clone(), row[sec].clone(), row[ssc].clone(), source.to_string(), row[i].clone()]
        })
    });
    emit(
        SCORE_CURVES_FILE,
        csv_bytes(&["condition", "epoch", "seed", "auroc_source", "auroc"], curve_rows)?,
    )?;
    let fpc = scores.column("false_positives")?;
    let fp_rows = scores
        .rows
        .iter()
        .map(|row| vec![row[scc].clone(), row[sec].clone(), row[ssc].clone(), row[fpc].clone()]);
    emit(
        FALSE_POSITIVE_FILE,
        csv_bytes(&["condition", "epoch", "seed", "false_positives"], fp_rows)?,
    )?;

    // pair each scored epoch with the trajectory row of the same run
    let mut nc_by_key: BTreeMap<Key, &Vec<String>> = BTreeMap::new();
    for row in &trajectory.rows {
        nc_by_key.insert(key(&trajectory, row)?, row);
    }
    let target = scores.column(CORRELATION_TARGET)?;
    let mut pairs: Vec<(Key, Vec<String>, f64)> = Vec::new();
    for row in &scores.rows {
        if let Some(nc) = nc_by_key.get(&key(&scores, row)?) {
            pairs.push((key(&scores, row)?, nc.to_vec(), parse_real(&row[target])?));
        }
    }
    let mut corr_rows = Vec::new();
    let mut summary_rows = Vec::new();
    let mut conditions: Vec<String> = Vec::new();
    for (k, _, _) in &pairs {
        if !conditions.contains(&k.0) {
            conditions.push(k.0.clone());
        }
    }
    conditions.push("all".into());
    for &(i, metric) in &metric_cols {
        for (k, nc, y) in &pairs {
            corr_rows.push(vec![
                k.0.clone(),
                k.1.clone(),
                k.2.clone(),
                metric.to_string(),
                nc[i].clone(),
                CORRELATION_TARGET.to_string(),
                real(*y),
            ]);
        }
        for c in &conditions {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs
                .iter()
                .filter(|(k, _, _)| c == "all" || k.0 == *c)
                .map(|(_, nc, y)| Ok((parse_real(&nc[i])?, *y)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .unzip();
            let r = match pearson_r(&xs, &ys) {
                Ok(r) => real(r),
                Err(Error::Degenerate(_) | Error::InvalidInput(_)) => String::new(),
                Err(e) => return Err(e),
            };
            summary_rows.push(vec![
                c.clone(),
                metric.to_string(),
                CORRELATION_TARGET.to_string(),
                xs.len().to_string(),
                r,
            ]);
        }
    }
    emit(
        CORRELATION_FILE,
        csv_bytes(&["condition", "seed", "epoch", "x_metric", "x", "y_metric", "y"], corr_rows)?,
    )?;
    emit(
        CORRELATION_SUMMARY_FILE,
        csv_bytes(&["condition", "x_metric", "y_metric", "points", "pearson_r"], summary_rows)?,
    )?;
    Ok(written)
}
