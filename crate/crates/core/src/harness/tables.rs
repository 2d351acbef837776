//! Row types and CSV encoding for experiment outputs.

use crate::error::{Error, Result};
use crate::harness::pipeline::EvalSummary;
use crate::metrics::NcReport;
use crate::model::EpochRecord;

/// Reals are written with Rust's shortest round-trip formatting.
pub(crate) fn real(x: f64) -> String {
    format!("{x:?}")
}

pub(crate) fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(&row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))
}

/// Parsed CSV with a header row.
pub(crate) struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(bytes: &[u8], name: &str) -> Result<Self> {
        let fail = |e: csv::Error| Error::Format(format!("{name}: {e}"));
        let mut r = csv::ReaderBuilder::new().from_reader(bytes);
        let header = r.headers().map_err(fail)?.iter().map(str::to_owned).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_owned).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(fail)?;
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column {name}")))
    }
}

pub(crate) fn parse_real(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

#[derive(Debug, Clone)]
pub(crate) struct TrajectoryRow {
    pub condition: String,
    pub seed: u64,
    pub record: EpochRecord,
}

pub(crate) const TRAJECTORY_HEADER: [&str; 13] = [
    "condition",
    "seed",
    "epoch",
    "cross_entropy",
    "train_accuracy",
    "learning_rate",
    "nc1",
    "en_means",
    "en_classifier",
    "ea_means",
    "ea_classifier",
    "nc3",
    "nc4_error",
];

impl TrajectoryRow {
    pub fn cells(&self) -> Vec<String> {
        let r = &self.record;
        let mut cells = vec![
            self.condition.clone(),
            self.seed.to_string(),
            r.epoch.to_string(),
            real(r.cross_entropy),
            real(r.train_accuracy),
            real(r.learning_rate),
        ];
        cells.extend(r.nc.values().map(real));
        cells
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ScoreRow {
    pub condition: String,
    pub seed: u64,
    pub epoch: usize,
    pub summary: EvalSummary,
}

pub(crate) const SCORE_HEADER: [&str; 8] = [
    "condition",
    "seed",
    "epoch",
    "auroc_gmm_feature",
    "auroc_gmm_logit",
    "auroc_softmax_max",
    "id_accuracy",
    "false_positives",
];

impl ScoreRow {
    pub fn cells(&self) -> Vec<String> {
        let s = &self.summary;
        vec![
            self.condition.clone(),
            self.seed.to_string(),
            self.epoch.to_string(),
            real(s.auroc_gmm_feature),
            real(s.auroc_gmm_logit),
            real(s.auroc_softmax_max),
            real(s.id_accuracy),
            s.false_positives.to_string(),
        ]
    }
}

/// Metrics summarized per condition, in column order.
pub const RESULT_METRICS: [&str; 12] = [
    "auroc_gmm_feature",
    "auroc_gmm_logit",
    "auroc_softmax_max",
    "id_accuracy",
    "false_positives",
    "nc1",
    "en_means",
    "en_classifier",
    "ea_means",
    "ea_classifier",
    "nc3",
    "nc4_error",
];

/// One (condition, seed) outcome; `metrics` is `None` for a failed run.
#[derive(Debug, Clone)]
pub(crate) struct ResultRow {
    pub condition: String,
    pub seed: u64,
    pub epoch: usize,
    pub error: Option<String>,
    pub metrics: Option<[f64; 12]>,
}

impl ResultRow {
    pub fn ok(condition: &str, seed: u64, epoch: usize, s: &EvalSummary, nc: &NcReport) -> Self {
        let mut m = [0.0; 12];
        m[..5].copy_from_slice(&[
            s.auroc_gmm_feature,
            s.auroc_gmm_logit,
            s.auroc_softmax_max,
            s.id_accuracy,
            s.false_positives as f64,
        ]);
        m[5..].copy_from_slice(&nc.values());
        Self {
            condition: condition.into(),
            seed,
            epoch,
            error: None,
            metrics: Some(m),
        }
    }

    pub fn failed(condition: &str, seed: u64, error: String) -> Self {
        Self {
            condition: condition.into(),
            seed,
            epoch: 0,
            error: Some(error),
            metrics: None,
        }
    }

    pub fn header() -> Vec<&'static str> {
        let mut h = vec!["condition", "seed", "epoch", "status", "error"];
        h.extend(RESULT_METRICS);
        h
    }

    pub fn cells(&self) -> Vec<String> {
        let mut cells = vec![self.condition.clone(), self.seed.to_string()];
        match (&self.metrics, &self.error) {
            (Some(m), _) => {
                cells.extend([self.epoch.to_string(), "ok".into(), String::new()]);
                cells.extend(m.iter().enumerate().map(|(i, &x)| {
                    // the false-positive count stays an integer
                    if i == 4 { (x as usize).to_string() } else { real(x) }
                }));
            }
            (None, e) => {
                cells.extend([String::new(), "failed".into(), e.clone().unwrap_or_default()]);
                cells.extend(std::iter::repeat_n(String::new(), RESULT_METRICS.len()));
            }
        }
        cells
    }
}

/// Minimum, maximum, mean and sample standard deviation (`n − 1`
/// denominator, zero for a single value), accumulated in the given order.
pub fn describe(values: &[f64]) -> Option<[f64; 4]> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some([min, max, mean, std])
}

pub(crate) fn summary_header() -> Vec<String> {
    let mut h: Vec<String> = ["condition", "runs", "failed"].map(String::from).to_vec();
    for m in RESULT_METRICS {
        for stat in ["min", "max", "mean", "std"] {
            h.push(format!("{m}_{stat}"));
        }
    }
    h
}

/// One summary row per condition, conditions in first-appearance order.
pub(crate) fn summary_rows(rows: &[ResultRow]) -> Vec<Vec<String>> {
    let mut conditions: Vec<&str> = Vec::new();
    for r in rows {
        if !conditions.contains(&r.condition.as_str()) {
            conditions.push(&r.condition);
        }
    }
    conditions
        .into_iter()
        .map(|c| {
            let group: Vec<&ResultRow> = rows.iter().filter(|r| r.condition == c).collect();
            let ok: Vec<&[f64; 12]> = group.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let mut cells = vec![
                c.to_owned(),
                group.len().to_string(),
                (group.len() - ok.len()).to_string(),
            ];
            for i in 0..RESULT_METRICS.len() {
                let values: Vec<f64> = ok.iter().map(|m| m[i]).collect();
                match describe(&values) {
                    Some(stats) => cells.extend(stats.map(real)),
                    None => cells.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            cells
        })
        .collect()
}
