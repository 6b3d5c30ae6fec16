//! Nested leave-one-person-out runs and the ablation driver.
//!
//! Run directory:
//!
//! ```text
//! <run>/config.json           config and its hash
//! <run>/splits.json           every section plan
//! <run>/sections/<id>/        model.slc, metrics.json, confusion.csv, audit.json
//! <run>/report.json|csv       aggregate over completed sections
//! ```
//!
//! `metrics.json` is written last and marks a section complete; a rerun with
//! the same config skips complete sections.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use signenc::classifier::{save_model, train, EpochStats, Pipeline};
use signenc::landmarks::{DatasetManifest, SignSample};
use signenc::metrics::{confusion, LatencyStats, RunReport, SectionResult};
use signenc::splits::{generate_splits, materialize, SplitPlan};
use signenc::transforms::compute_target_from_lengths;
use signenc::{Error, Result};

use crate::config::RunConfig;
use crate::report::{read_json, rebuild_report, write_json};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory name under the configured output; derived from the config
    /// hash when absent.
    pub run_id: Option<String>,
    /// Discard artifacts from a run with a different config.
    pub force: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredConfig {
    config_hash: String,
    config: Value,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SectionAudit {
    pub section_id: usize,
    pub test_signer: String,
    pub val_signer: String,
    pub train_signers: Vec<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    /// Every sample id that entered training or model selection.
    pub touched: Vec<String>,
    pub uniformize_target: Option<usize>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub history: Vec<EpochStats>,
}

pub fn default_run_id(cfg: &RunConfig) -> String {
    format!("run-{}", &cfg.hash()[..12])
}

pub fn section_dir(run_dir: &Path, id: usize) -> PathBuf {
    run_dir.join("sections").join(id.to_string())
}

fn remove_if_exists(p: &Path) -> Result<()> {
    let r = if p.is_dir() {
        std::fs::remove_dir_all(p)
    } else {
        std::fs::remove_file(p)
    };
    match r {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(p, e)),
        _ => Ok(()),
    }
}

/// Creates or reopens `run_dir` for `cfg`, refusing a config change unless forced.
fn prepare_run_dir(run_dir: &Path, cfg: &RunConfig, force: bool) -> Result<()> {
    let path = run_dir.join("config.json");
    let hash = cfg.hash();
    if path.exists() {
        let stored: StoredConfig = read_json(&path)?;
        if stored.config_hash != hash {
            if !force {
                return Err(Error::Config(format!(
                    "{} was created with a different configuration (hash {} vs {}); rerun with --force to discard it",
                    run_dir.display(),
                    &stored.config_hash[..12.min(stored.config_hash.len())],
                    &hash[..12]
                )));
            }
            log::warn!("discarding results in {} (config changed, --force)", run_dir.display());
            for stale in ["sections", "report.json", "report.csv", "confusion.csv", "confusion.png"] {
                remove_if_exists(&run_dir.join(stale))?;
            }
        }
    }
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    write_json(
        &path,
        &StoredConfig {
            config_hash: hash,
            config: cfg.to_value(),
        },
    )
}

struct Context<'a> {
    cfg: &'a RunConfig,
    manifest: &'a DatasetManifest,
    samples: &'a BTreeMap<String, SignSample>,
    run_dir: &'a Path,
}

fn pick(ctx: &Context<'_>, ids: &[String]) -> Vec<SignSample> {
    ids.iter().map(|id| ctx.samples[id].clone()).collect()
}

fn run_section(ctx: &Context<'_>, plan: &SplitPlan) -> Result<SectionResult> {
    let dir = section_dir(ctx.run_dir, plan.section_id);
    let part = materialize(plan, ctx.manifest)?;
    for (name, list) in [("training", &part.train), ("validation", &part.val), ("test", &part.test)] {
        if list.is_empty() {
            return Err(Error::Consistency(format!(
                "section {}: {name} set is empty",
                plan.section_id
            )));
        }
    }
    let ids = |l: &[signenc::landmarks::ManifestEntry]| l.iter().map(|e| e.id()).collect::<Vec<_>>();
    let (train_ids, val_ids, test_ids) = (ids(&part.train), ids(&part.val), ids(&part.test));
    let train_set = pick(ctx, &train_ids);
    let val_set = pick(ctx, &val_ids);
    let test_set = pick(ctx, &test_ids);

    let uniformize = if ctx.cfg.uniformize_enabled {
        Some(compute_target_from_lengths(train_set.iter().map(|s| s.sequence.len()))?)
    } else {
        None
    };
    let pipeline = Pipeline {
        augment: ctx.cfg.augment_params(),
        uniformize,
    };
    let tcfg = ctx.cfg.train_config(plan.section_id);
    let started = Instant::now();
    let outcome = train(&train_set, &val_set, &ctx.manifest.classes, &tcfg, &pipeline)?;
    let test_lookup: BTreeSet<&String> = test_ids.iter().collect();
    if let Some(leak) = outcome.touched.iter().find(|id| test_lookup.contains(id)) {
        return Err(Error::Consistency(format!(
            "section {}: test sample {leak} was used during training",
            plan.section_id
        )));
    }

    let state = &outcome.state;
    let mut truth = Vec::with_capacity(test_set.len());
    let mut predicted = Vec::with_capacity(test_set.len());
    let mut latency = Vec::with_capacity(test_set.len());
    for s in &test_set {
        let t0 = Instant::now();
        let input = pipeline.eval_input(&s.sequence, state.input_size())?;
        let p = state.predict(&input)?;
        latency.push(t0.elapsed().as_secs_f64() * 1e3);
        truth.push(s.label.clone());
        predicted.push(state.label(&p).to_string());
    }
    let cm = confusion(&truth, &predicted, &ctx.manifest.classes)?;
    let mut result = SectionResult::from_confusion(plan.section_id, &plan.test_signer, &plan.val_signer, cm)?;
    result.timing = LatencyStats::from_samples(latency);

    save_model(state, &dir.join("model.slc"))?;
    std::fs::write(dir.join("confusion.csv"), result.confusion.to_csv()).map_err(|e| Error::io(&dir, e))?;
    write_json(
        &dir.join("audit.json"),
        &SectionAudit {
            section_id: plan.section_id,
            test_signer: plan.test_signer.clone(),
            val_signer: plan.val_signer.clone(),
            train_signers: plan.train_signers.clone(),
            train: train_ids,
            val: val_ids,
            test: test_ids,
            touched: outcome.touched.clone(),
            uniformize_target: pipeline.uniformize.map(|u| u.target_frames),
            best_epoch: state.epoch,
            stopped_early: outcome.stopped_early,
            history: outcome.history.clone(),
        },
    )?;
    let tmp = dir.join("metrics.json.tmp");
    write_json(&tmp, &result)?;
    std::fs::rename(&tmp, dir.join("metrics.json")).map_err(|e| Error::io(&dir, e))?;
    log::info!(
        "section {} (test {}, val {}): accuracy {:.3}, best epoch {}, {:.1}s",
        plan.section_id,
        plan.test_signer,
        plan.val_signer,
        result.accuracy,
        state.epoch,
        started.elapsed().as_secs_f64()
    );
    Ok(result)
}

/// Upper bound on concurrent sections from `SIGNENC_THREADS`.
pub fn thread_cap() -> Option<usize> {
    std::env::var("SIGNENC_THREADS").ok()?.parse().ok().filter(|&n: &usize| n > 0)
}

/// Runs (or resumes) every planned section in `run_dir` and writes the report.
pub fn execute_run_in(cfg: &RunConfig, run_dir: &Path, force: bool) -> Result<RunReport> {
    cfg.validate()?;
    let manifest = DatasetManifest::open(&cfg.dataset)?;
    manifest.validate()?;
    let mut plans = generate_splits(&manifest)?;
    prepare_run_dir(run_dir, cfg, force)?;
    write_json(&run_dir.join("splits.json"), &plans)?;
    if let Some(limit) = cfg.splits_limit {
        plans.truncate(limit);
    }

    let samples: BTreeMap<String, SignSample> = manifest
        .samples
        .iter()
        .map(|e| Ok((e.id(), manifest.load_sample(&cfg.dataset, e)?)))
        .collect::<Result<_>>()?;
    let ctx = Context {
        cfg,
        manifest: &manifest,
        samples: &samples,
        run_dir,
    };

    let mut pending = Vec::new();
    for plan in &plans {
        let dir = section_dir(run_dir, plan.section_id);
        if dir.join("metrics.json").is_file() {
            log::info!("section {} already complete, skipping", plan.section_id);
            continue;
        }
        remove_if_exists(&dir)?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        pending.push(plan);
    }
    log::info!(
        "{} sections planned, {} to run, {} classes, {} signers",
        plans.len(),
        pending.len(),
        manifest.classes.len(),
        manifest.signers.len()
    );

    let workers = cfg.workers.min(thread_cap().unwrap_or(usize::MAX)).max(1);
    if workers == 1 {
        for plan in &pending {
            run_section(&ctx, plan)?;
        }
    } else {
        let next = AtomicUsize::new(0);
        let errors: Mutex<Vec<(usize, Error)>> = Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..workers.min(pending.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(plan) = pending.get(i) else { break };
                    if let Err(e) = run_section(&ctx, plan) {
                        errors.lock().expect("error list").push((plan.section_id, e));
                    }
                });
            }
        });
        let mut errors = errors.into_inner().expect("error list");
        errors.sort_by_key(|(id, _)| *id);
        if let Some((_, e)) = errors.into_iter().next() {
            return Err(e);
        }
    }
    rebuild_report(run_dir)
}

pub fn execute_run(cfg: &RunConfig, opts: &RunOptions) -> Result<(PathBuf, RunReport)> {
    let id = opts.run_id.clone().unwrap_or_else(|| default_run_id(cfg));
    let dir = cfg.output.join(id);
    let report = execute_run_in(cfg, &dir, opts.force)?;
    Ok((dir, report))
}

/// One configuration of the ablation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub augmentation: bool,
    pub uniformization: bool,
    pub report: RunReport,
}

/// Variants toggled one at a time from the default (augmentation on,
/// uniformization off); `grid` adds the remaining combination.
pub fn ablation_variants(grid: bool) -> Vec<(&'static str, bool, bool)> {
    let mut v = vec![
        ("default", true, false),
        ("no-augmentation", false, false),
        ("uniformization", true, true),
    ];
    if grid {
        v.push(("no-augmentation+uniformization", false, true));
    }
    v
}

pub fn execute_ablation(cfg: &RunConfig, opts: &RunOptions, grid: bool) -> Result<(PathBuf, Vec<AblationRow>)> {
    let id = opts.run_id.clone().unwrap_or_else(|| format!("ablate-{}", &cfg.hash()[..12]));
    let root = cfg.output.join(id);
    let mut rows = Vec::new();
    for (name, aug, unif) in ablation_variants(grid) {
        let variant = RunConfig {
            augment_enabled: aug,
            uniformize_enabled: unif,
            ..cfg.clone()
        };
        log::info!("ablation variant `{name}`");
        let report = execute_run_in(&variant, &root.join(name), opts.force)?;
        rows.push(AblationRow {
            name: name.to_string(),
            augmentation: aug,
            uniformization: unif,
            report,
        });
    }
    write_json(&root.join("ablation.json"), &rows)?;
    std::fs::write(root.join("ablation.csv"), ablation_table(&rows)).map_err(|e| Error::io(&root, e))?;
    Ok((root, rows))
}

/// `Configuration,Accuracy,Precision,Recall,F1-score` with `mean ± std` cells.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("Configuration,Accuracy,Precision,Recall,F1-score\n");
    for r in rows {
        let a = &r.report.aggregate;
        out.push_str(&format!("{},{},{},{},{}\n", r.name, a.accuracy, a.precision, a.recall, a.f1));
    }
    out
}
