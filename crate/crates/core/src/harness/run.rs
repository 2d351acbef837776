//! Running experiments: one task per (condition, seed), executed in
//! parallel, with every file written afterwards in a fixed order.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::datagen::{generate, SyntheticData, SyntheticSpec};
use crate::error::{Error, Result};
use crate::formats::{encode_checkpoint, encode_feature_dump, FeatureDump};
use crate::harness::config::{ExperimentConfig, ExperimentKind};
use crate::harness::manifest::{ArtifactSet, FailureRecord, Manifest};
use crate::harness::pipeline::{evaluate, Evaluation};
use crate::harness::tables::{
    csv_bytes, real, summary_header, summary_rows, ResultRow, ScoreRow, TrajectoryRow, SCORE_HEADER,
    TRAJECTORY_HEADER,
};
use crate::model::{
    intervene_observed, train_observed, Activation, Arm, EpochRecord, LossMode, MlpClassifier, ModelSpec,
    TrainConfig,
};
use crate::stats::FeatureBank;

pub const CONFIG_FILE: &str = "config.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SCORES_FILE: &str = "scores.csv";

/// Where a finished run left its manifest.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
}

#[derive(Debug, Clone)]
struct Condition {
    name: String,
    model: ModelSpec,
    train: TrainConfig,
}

fn template(config: &ExperimentConfig, name: &str) -> Condition {
    Condition {
        name: name.into(),
        model: config.model.clone(),
        train: config.train.clone(),
    }
}

fn grid_name(l2: bool, spectral: bool, leaky: bool) -> String {
    let parts: Vec<&str> = [(l2, "l2"), (spectral, "sn"), (leaky, "leaky")]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join("+")
    }
}

fn conditions(config: &ExperimentConfig) -> Vec<Condition> {
    match config.experiment_kind {
        ExperimentKind::TrainEval | ExperimentKind::OvertrainSweep => vec![template(config, "template")],
        ExperimentKind::Intervention => vec![template(config, "intervention")],
        ExperimentKind::BaselineCompare => [false, true]
            .into_iter()
            .map(|l2| Condition {
                name: if l2 { "l2" } else { "baseline" }.into(),
                model: ModelSpec {
                    l2_normalize_features: l2,
                    ..config.model.clone()
                },
                train: config.train.clone(),
            })
            .collect(),
        ExperimentKind::AblationGrid => {
            let leaky_activation = match config.model.activation {
                a @ Activation::LeakyRelu { .. } => a,
                Activation::Relu => Activation::leaky(),
            };
            let mut out = Vec::with_capacity(8);
            for l2 in [false, true] {
                for spectral in [false, true] {
                    for leaky in [false, true] {
                        out.push(Condition {
                            name: grid_name(l2, spectral, leaky),
                            model: ModelSpec {
                                l2_normalize_features: l2,
                                spectral_normalize: spectral,
                                activation: if leaky { leaky_activation } else { Activation::Relu },
                                ..config.model.clone()
                            },
                            train: config.train.clone(),
                        });
                    }
                }
            }
            out
        }
    }
}

/// Names the result rows of one condition carry.
fn result_conditions(config: &ExperimentConfig, cond: &Condition) -> Vec<String> {
    match config.experiment_kind {
        ExperimentKind::Intervention => vec!["control".into(), "intervention".into()],
        ExperimentKind::OvertrainSweep => config
            .scoring_epochs()
            .iter()
            .map(|e| format!("epoch-{e}"))
            .collect(),
        _ => vec![cond.name.clone()],
    }
}

#[derive(Debug, Default)]
struct TaskOutput {
    results: Vec<ResultRow>,
    trajectory: Vec<TrajectoryRow>,
    scores: Vec<ScoreRow>,
    files: ArtifactSet,
}

fn seeded_data(config: &ExperimentConfig, seed: u64) -> Result<SyntheticData> {
    generate(&SyntheticSpec {
        seed,
        ..config.data.clone()
    })
}

fn run_dir(condition: &str, seed: u64) -> String {
    format!("runs/{condition}/seed-{seed}")
}

/// Checkpoint, train-feature dump and, when scored, OoD-feature dump and
/// both fitted densities.
fn model_artifacts(
    files: &mut ArtifactSet,
    dir: &str,
    model: &MlpClassifier,
    data: &SyntheticData,
    evaluation: Option<&Evaluation>,
) -> Result<()> {
    files.add(format!("{dir}/model.ncck"), encode_checkpoint(model)?);
    let (z, _) = model.forward(data.train.features())?;
    let bank = FeatureBank::new(z, data.train.labels().to_vec(), data.train.num_classes())?;
    files.add(
        format!("{dir}/train_features.ncfb"),
        encode_feature_dump(&FeatureDump::Labeled(bank))?,
    );
    if let Some(ev) = evaluation {
        let (ood_z, _) = model.forward(&data.ood_test)?;
        files.add(
            format!("{dir}/ood_features.ncfb"),
            encode_feature_dump(&FeatureDump::Unlabeled(ood_z))?,
        );
        files.add(format!("{dir}/gmm_feature.json"), ev.feature_gmm.to_json()?.into_bytes());
        files.add(format!("{dir}/gmm_logit.json"), ev.logit_gmm.to_json()?.into_bytes());
    }
    Ok(())
}

fn run_training_task(config: &ExperimentConfig, cond: &Condition, seed: u64, score: bool) -> Result<TaskOutput> {
    let data = seeded_data(config, seed)?;
    let mut model = MlpClassifier::init(&cond.model, data.train.dim(), data.train.num_classes(), seed)?;
    let train_config = TrainConfig {
        seed,
        ..cond.train.clone()
    };
    let scoring = config.scoring_epochs();
    let mut scored: Vec<(EpochRecord, Evaluation)> = Vec::new();
    let trace = train_observed(&mut model, &data.train, &train_config, |r, m| {
        if score && scoring.contains(&r.epoch) {
            scored.push((*r, evaluate(m, &data)?));
        }
        Ok(())
    })?;

    let mut out = TaskOutput::default();
    out.trajectory = trace
        .records
        .iter()
        .map(|&record| TrajectoryRow {
            condition: cond.name.clone(),
            seed,
            record,
        })
        .collect();
    for (record, ev) in &scored {
        out.scores.push(ScoreRow {
            condition: cond.name.clone(),
            seed,
            epoch: record.epoch,
            summary: ev.summary,
        });
        let name = if config.experiment_kind == ExperimentKind::OvertrainSweep {
            format!("epoch-{}", record.epoch)
        } else if record.epoch == train_config.epochs {
            cond.name.clone()
        } else {
            continue;
        };
        out.results.push(ResultRow::ok(&name, seed, record.epoch, &ev.summary, &record.nc));
    }
    let final_eval = scored.last().map(|(_, ev)| ev);
    model_artifacts(&mut out.files, &run_dir(&cond.name, seed), &model, &data, final_eval)?;
    Ok(out)
}

fn run_intervention_task(config: &ExperimentConfig, seed: u64) -> Result<TaskOutput> {
    let branch = config
        .branch_epoch()
        .ok_or_else(|| Error::Config("intervention needs a branch epoch".into()))?;
    let data = seeded_data(config, seed)?;
    let full = TrainConfig {
        seed,
        ..config.train.clone()
    };
    let base_config = TrainConfig {
        epochs: branch,
        lr_milestones: full.lr_milestones.iter().copied().filter(|&m| m < branch).collect(),
        ..full.clone()
    };
    let mut checkpoint = MlpClassifier::init(&config.model, data.train.dim(), data.train.num_classes(), seed)?;
    let base = train_observed(&mut checkpoint, &data.train, &base_config, |_, _| Ok(()))?;
    let start = evaluate(&checkpoint, &data)?;

    let s = &config.intervention;
    let control_config = full.continuation(branch, LossMode::CrossEntropy, s.arm_epochs, s.lr_factor);
    let intervention_config = full.continuation(branch, LossMode::NcLoss, s.arm_epochs, s.lr_factor);
    let mut out = TaskOutput::default();
    out.trajectory = base
        .records
        .iter()
        .map(|&record| TrajectoryRow {
            condition: "base".into(),
            seed,
            record,
        })
        .collect();
    for arm in ["control", "intervention"] {
        out.scores.push(ScoreRow {
            condition: arm.into(),
            seed,
            epoch: branch,
            summary: start.summary,
        });
    }
    let mut finals: Vec<Evaluation> = Vec::new();
    let outcome = intervene_observed(&checkpoint, &data.train, &control_config, &intervention_config, |arm, r, m| {
        let name = match arm {
            Arm::Control => "control",
            Arm::Intervention => "intervention",
        };
        let record = EpochRecord {
            epoch: branch + r.epoch,
            ..*r
        };
        let ev = evaluate(m, &data)?;
        out.trajectory.push(TrajectoryRow {
            condition: name.into(),
            seed,
            record,
        });
        out.scores.push(ScoreRow {
            condition: name.into(),
            seed,
            epoch: record.epoch,
            summary: ev.summary,
        });
        if r.epoch == s.arm_epochs {
            out.results.push(ResultRow::ok(name, seed, record.epoch, &ev.summary, &record.nc));
            finals.push(ev);
        }
        Ok(())
    })?;
    model_artifacts(&mut out.files, &run_dir("base", seed), &checkpoint, &data, None)?;
    for (name, model, ev) in [
        ("control", &outcome.control_model, &finals[0]),
        ("intervention", &outcome.intervention_model, &finals[1]),
    ] {
        model_artifacts(&mut out.files, &run_dir(name, seed), model, &data, Some(ev))?;
    }
    Ok(out)
}

/// The configuration as saved beside its results: the output directory is
/// written as `.`, so artifacts do not depend on where a run lives.
fn saved_config(config: &ExperimentConfig) -> Result<Vec<u8>> {
    let local = ExperimentConfig {
        output_dir: PathBuf::from("."),
        ..config.clone()
    };
    Ok((local.to_json()? + "\n").into_bytes())
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run_tasks(config: &ExperimentConfig, jobs: usize, score: bool) -> Result<RunOutcome> {
    config.validate()?;
    let intervention = score && config.experiment_kind == ExperimentKind::Intervention;
    let conds = if score {
        conditions(config)
    } else {
        match config.experiment_kind {
            ExperimentKind::AblationGrid | ExperimentKind::BaselineCompare => conditions(config),
            _ => vec![template(config, "template")],
        }
    };
    let tasks: Vec<(&Condition, u64)> = conds
        .iter()
        .flat_map(|c| config.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let pool = thread_pool(jobs)?;
    let outputs: Vec<Result<TaskOutput>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(cond, seed)| {
                if intervention {
                    run_intervention_task(config, seed)
                } else {
                    run_training_task(config, cond, seed, score)
                }
            })
            .collect()
    });

    let mut files = ArtifactSet::default();
    let mut results = Vec::new();
    let mut trajectory = Vec::new();
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (&(cond, seed), output) in tasks.iter().zip(outputs) {
        match output {
            Ok(o) => {
                results.extend(o.results);
                trajectory.extend(o.trajectory);
                scores.extend(o.scores);
                files.extend(o.files);
            }
            Err(e @ Error::Io { .. }) => return Err(e),
            Err(e) => {
                let names = if score { result_conditions(config, cond) } else { vec![cond.name.clone()] };
                for name in names {
                    failures.push(FailureRecord {
                        condition: name.clone(),
                        seed,
                        error: e.to_string(),
                    });
                    if score {
                        results.push(ResultRow::failed(&name, seed, e.to_string()));
                    }
                }
            }
        }
    }
    // results grouped by condition, seeds in config order
    let mut order: Vec<String> = Vec::new();
    for c in &conds {
        for name in if score { result_conditions(config, c) } else { vec![c.name.clone()] } {
            if !order.contains(&name) {
                order.push(name);
            }
        }
    }
    results.sort_by_key(|r| order.iter().position(|n| *n == r.condition));

    files.add(CONFIG_FILE, saved_config(config)?);
    files.add(
        TRAJECTORY_FILE,
        csv_bytes(&TRAJECTORY_HEADER, trajectory.iter().map(TrajectoryRow::cells))?,
    );
    if score {
        files.add(SCORES_FILE, csv_bytes(&SCORE_HEADER, scores.iter().map(ScoreRow::cells))?);
        files.add(RESULTS_FILE, csv_bytes(&ResultRow::header(), results.iter().map(ResultRow::cells))?);
        let header = summary_header();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        files.add(SUMMARY_FILE, csv_bytes(&header, summary_rows(&results))?);
    }
    let command = if score { config.experiment_kind.as_str() } else { "train" };
    let (manifest_path, manifest) = files.write(&config.output_dir, command, &config.seeds, order, failures)?;
    Ok(RunOutcome {
        manifest_path,
        manifest,
    })
}

/// Runs the configured experiment with up to `jobs` seeds in parallel.
/// Training failures are recorded per seed; only I/O errors abort.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<RunOutcome> {
    run_tasks(config, jobs, true)
}

/// Trains every condition without scoring: checkpoints, train-feature
/// dumps and the per-epoch trajectory.
pub fn train_models(config: &ExperimentConfig, jobs: usize) -> Result<RunOutcome> {
    run_tasks(config, jobs, false)
}

/// Writes every seed's datasets as feature dumps plus the class means.
pub fn generate_datasets(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let mut files = ArtifactSet::default();
    for &seed in &config.seeds {
        let data = seeded_data(config, seed)?;
        let dir = format!("data/seed-{seed}");
        files.add(format!("{dir}/train.ncfb"), encode_feature_dump(&FeatureDump::Labeled(data.train))?);
        files.add(format!("{dir}/id_test.ncfb"), encode_feature_dump(&FeatureDump::Labeled(data.id_test))?);
        files.add(
            format!("{dir}/ood_test.ncfb"),
            encode_feature_dump(&FeatureDump::Unlabeled(data.ood_test))?,
        );
        let mut header = vec!["class".to_string()];
        header.extend((0..data.class_means.cols()).map(|j| format!("x{j}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = data.class_means.row_iter().enumerate().map(|(c, row)| {
            let mut cells = vec![c.to_string()];
            cells.extend(row.iter().map(|&x| real(x)));
            cells
        });
        files.add(format!("{dir}/class_means.csv"), csv_bytes(&header, rows)?);
    }
    files.add(CONFIG_FILE, saved_config(config)?);
    let (manifest_path, manifest) = files.write(&config.output_dir, "generate", &config.seeds, Vec::new(), Vec::new())?;
    Ok(RunOutcome {
        manifest_path,
        manifest,
    })
}
