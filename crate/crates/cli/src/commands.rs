//! Implementations of the CLI verbs. Each returns the text it would print;
//! files are written through [`write_atomic`] so a killed run never leaves a
//! half-written output behind.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mcrl_core::env::{ConditionId, TrialFile};
use mcrl_core::features::FeatureRegistry;
use mcrl_core::fitkit::{bic_matrix, fit_participant, ingest_records, FitResult, ParamSpace, ParamVector, ParticipantRecord};
use mcrl_core::metacontrol::{build_grid, grid_manifest, parse_grid_manifest, GridOptions, ModelConfig};
use mcrl_core::modelselect::{
    classify_learner, partition_by_base, partition_from_map, partition_singletons, select as bms_select, BicMatrix,
    Direction,
};
use mcrl_core::simlab::{aggregate_curves, curves_to_csv, simulate_cohort, CurveSet, Measure, SimTrace};

use crate::session::TrialSet;

/// Write `bytes` to a sibling temp file, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

fn pretty_json(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

// ---------------------------------------------------------------- gen-env

/// File name of trial `t` written by `gen-env`.
pub fn trial_file_name(condition: ConditionId, t: usize) -> String {
    format!("{condition}-{t:03}.json")
}

/// Write `count` trials; returns the number of files written.
pub fn gen_env(condition: &ConditionId, count: usize, seed: u64, out: &Path) -> Result<usize> {
    if count == 0 {
        return Ok(0);
    }
    let set = TrialSet::generate(*condition, count, seed)?;
    for (t, file) in set.trials.iter().enumerate() {
        write_atomic(&out.join(trial_file_name(*condition, t)), pretty_json(file).as_bytes())?;
    }
    Ok(count)
}

/// Trials from a directory of `gen-env` files, in file-name order.
pub fn load_trial_dir(dir: &Path) -> Result<TrialSet> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    let mut trials = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p)?;
        let file: TrialFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        file.truth.validate(&file.spec).with_context(|| format!("checking {}", p.display()))?;
        trials.push(file);
    }
    let conditions: BTreeSet<String> = trials.iter().map(|f| f.spec.condition.clone().unwrap_or_default()).collect();
    if conditions.len() > 1 {
        bail!("{} mixes conditions {conditions:?}", dir.display());
    }
    let condition = conditions.into_iter().next().filter(|c| !c.is_empty()).unwrap_or_else(|| "custom".into());
    if trials.is_empty() {
        bail!("no trial files in {}", dir.display());
    }
    Ok(TrialSet { condition, trials })
}

// ----------------------------------------------------------------- ingest

pub fn ingest(records: &Path, normalized: Option<&Path>) -> Result<String> {
    let recs = ingest_records(records).with_context(|| format!("ingesting {}", records.display()))?;
    let mut s = String::new();
    let w = recs.iter().map(|r| r.participant.len()).max().unwrap_or(11).max(11);
    let _ = writeln!(s, "{:<w$}  {:<26}  {:>6}  {:>6}  {:>10}", "participant", "condition", "trials", "clicks", "mean score");
    for r in &recs {
        let clicks: usize = r.trials.iter().map(|t| t.n_clicks()).sum();
        let mean = r.trials.iter().map(|t| t.score).sum::<f64>() / r.trials.len().max(1) as f64;
        let _ = writeln!(s, "{:<w$}  {:<26}  {:>6}  {:>6}  {:>10.2}", r.participant, r.condition, r.trials.len(), clicks, mean);
    }
    let decisions: usize = recs.iter().map(|r| r.n_decisions()).sum();
    let _ = writeln!(s, "{} participants, {decisions} meta-decisions, all valid", recs.len());
    if let Some(p) = normalized {
        let mut buf = Vec::new();
        mcrl_core::fitkit::write_records(&mut buf, &recs)?;
        write_atomic(p, &buf)?;
        let _ = writeln!(s, "wrote {}", p.display());
    }
    Ok(s)
}

// -------------------------------------------------------------------- fit

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub models: String,
    pub grid: Option<PathBuf>,
    pub budget: usize,
    pub seed: u64,
    pub jobs: usize,
}

fn load_grid(path: Option<&Path>) -> Result<Vec<ModelConfig>> {
    match path {
        Some(p) => Ok(parse_grid_manifest(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?),
        None => Ok(build_grid(&GridOptions::default())),
    }
}

/// Resolve a comma-separated filter (`all` = whole grid; empty = nothing).
pub fn resolve_models(filter: &str, grid: &[ModelConfig]) -> Result<Vec<ModelConfig>> {
    if filter.trim() == "all" {
        return Ok(grid.to_vec());
    }
    let mut out: Vec<ModelConfig> = Vec::new();
    for id in filter.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let c = grid.iter().find(|c| c.id() == id).ok_or_else(|| mcrl_core::Error::UnknownModel(id.to_string()))?;
        if !out.contains(c) {
            out.push(c.clone());
        }
    }
    Ok(out)
}

/// Previously written fit results. A torn final line (killed mid-append)
/// is dropped; corruption anywhere else is an error.
pub fn read_fits(path: &Path) -> Result<Vec<FitResult>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<FitResult>(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !complete => {
                eprintln!("warning: dropping incomplete last line of {}", path.display());
            }
            Err(e) => bail!("{} line {}: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn append_line(file: &Mutex<fs::File>, line: &str) -> Result<()> {
    let mut f = file.lock().expect("append lock");
    f.write_all(line.as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn fit(records: &Path, opts: &FitOptions, out: &Path) -> Result<String> {
    let recs = ingest_records(records).with_context(|| format!("ingesting {}", records.display()))?;
    let grid = load_grid(opts.grid.as_deref())?;
    let models = resolve_models(&opts.models, &grid)?;
    let fits_path = out.join("fits.jsonl");
    let bic_path = out.join("bic.csv");
    fs::create_dir_all(out)?;
    let mut results = read_fits(&fits_path)?;
    // drop a torn tail before appending
    write_atomic(&fits_path, results.iter().map(|r| r.to_json_line()).collect::<String>().as_bytes())?;

    let done: BTreeSet<_> = results.iter().map(FitResult::key).collect();
    let jobs: Vec<(&ParticipantRecord, &ModelConfig)> = recs
        .iter()
        .flat_map(|r| models.iter().map(move |m| (r, m)))
        .filter(|(r, m)| !done.contains(&(r.participant.clone(), m.id(), opts.budget, opts.seed)))
        .collect();
    let skipped = recs.len() * models.len() - jobs.len();

    let registry = FeatureRegistry::default_registry();
    let file = Mutex::new(OpenOptions::new().append(true).create(true).open(&fits_path)?);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build()?;
    let total = jobs.len();
    let counter = std::sync::atomic::AtomicUsize::new(0);
    let new: Vec<FitResult> = pool.install(|| {
        jobs.par_iter()
            .map(|(rec, config)| {
                let r = fit_participant(config, rec, &registry, opts.budget, opts.seed)
                    .with_context(|| format!("fitting {} to {}", config.id(), rec.participant))?;
                append_line(&file, &r.to_json_line())?;
                let k = counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                eprintln!("[{k}/{total}] {} {} BIC {:.2}", r.participant, r.model, r.bic);
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    drop(file);

    results.extend(new);
    results.sort_by(|a, b| a.key().cmp(&b.key()));
    results.dedup_by(|a, b| a.key() == b.key());
    write_atomic(&fits_path, results.iter().map(|r| r.to_json_line()).collect::<String>().as_bytes())?;
    let current: Vec<FitResult> =
        results.iter().filter(|r| r.budget == opts.budget && r.seed == opts.seed).cloned().collect();
    let matrix = bic_matrix(&current);
    write_atomic(&bic_path, matrix.to_csv().as_bytes())?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} participants x {} models: {} fitted, {} already done",
        recs.len(),
        models.len(),
        total,
        skipped
    );
    let holes = matrix.holes();
    if !holes.is_empty() {
        let _ = writeln!(s, "BIC matrix has {} missing cells", holes.len());
    }
    let _ = writeln!(s, "wrote {} and {}", fits_path.display(), bic_path.display());
    Ok(s)
}

// ----------------------------------------------------------------- select

fn load_partition(spec: &str, models: &[String]) -> Result<Vec<mcrl_core::modelselect::Family>> {
    match spec {
        "base" => Ok(partition_by_base(models)),
        "singletons" => Ok(partition_singletons(models)),
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("reading partition {path}"))?;
            let map: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)?;
            Ok(partition_from_map(models, &map)?)
        }
    }
}

pub fn select(bic: &Path, partition: &str, mc: usize, seed: u64, out: &Path) -> Result<String> {
    let text = fs::read_to_string(bic).with_context(|| format!("reading {}", bic.display()))?;
    let m = BicMatrix::from_csv(&text)?;
    let holes = m.holes();
    if !holes.is_empty() {
        let mut msg = format!("BIC matrix has {} missing cells:\n", holes.len());
        for (p, model) in &holes {
            let _ = writeln!(msg, "  {p} / {model}");
        }
        bail!(msg);
    }
    let families = load_partition(partition, &m.models)?;
    let report = bms_select(&m, &families, mc, seed)?;
    let table = report.to_table();
    write_atomic(&out.join("selection.json"), pretty_json(&report).as_bytes())?;
    write_atomic(&out.join("selection.txt"), table.as_bytes())?;
    Ok(table)
}

// ------------------------------------------------------ simulate / analyze

/// One Mann–Kendall test of a cohort-mean curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub condition: String,
    pub model: String,
    pub measure: Measure,
    pub n_agents: usize,
    pub n_trials: usize,
    pub s: i64,
    pub z: f64,
    pub p: f64,
    pub direction: Direction,
}

fn measures_for(condition: ConditionId) -> Vec<Measure> {
    Measure::ALL
        .into_iter()
        .filter(|m| *m != Measure::Adaptive || condition.experiment() == 1)
        .collect()
}

/// Curves and trends for one aligned cohort; notices go to `notes`.
fn cohort_curves(traces: &[SimTrace], condition: ConditionId, notes: &mut Vec<String>) -> Result<(Vec<CurveSet>, Vec<TrendRow>)> {
    let mut curves = Vec::new();
    let mut trends = Vec::new();
    for m in measures_for(condition) {
        let c = aggregate_curves(traces, m)?;
        if c.n_trials() < 3 {
            notes.push(format!("{} {} {}: fewer than 3 trials, no trend test", c.condition, c.model, m.as_str()));
        } else {
            let t = c.trend()?;
            trends.push(TrendRow {
                condition: c.condition.clone(),
                model: c.model.clone(),
                measure: m,
                n_agents: c.n_agents,
                n_trials: c.n_trials(),
                s: t.s,
                z: t.z,
                p: t.p,
                direction: t.direction,
            });
        }
        curves.push(c);
    }
    Ok((curves, trends))
}

fn trend_table(trends: &[TrendRow], notes: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<26}  {:<22}  {:<8}  {:>6}  {:>8}  {:>9}  direction", "condition", "model", "measure", "agents", "S", "p");
    for t in trends {
        let _ = writeln!(
            s,
            "{:<26}  {:<22}  {:<8}  {:>6}  {:>8}  {:>9.3e}  {}",
            t.condition,
            t.model,
            t.measure.as_str(),
            t.n_agents,
            t.s,
            t.p,
            serde_json::to_value(t.direction).expect("serializable").as_str().unwrap_or_default()
        );
    }
    for n in notes {
        let _ = writeln!(s, "notice: {n}");
    }
    s
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub models: String,
    pub conditions: String,
    pub agents: usize,
    pub trials: usize,
    pub seed: u64,
    pub params: Option<PathBuf>,
    pub set: Vec<String>,
}

/// Default parameters of `config`, overlaid with a JSON file and
/// `name=value` overrides.
pub fn sim_params(
    config: &ModelConfig,
    registry: &FeatureRegistry,
    file: Option<&Path>,
    set: &[String],
) -> Result<mcrl_core::metacontrol::ModelParams> {
    let space = ParamSpace::for_config(config, registry)?;
    let mut v = space.defaults();
    let mut overlay = ParamVector::default();
    if let Some(p) = file {
        overlay = serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?;
    }
    for kv in set {
        let (k, x) = kv.split_once('=').with_context(|| format!("`{kv}` is not NAME=VALUE"))?;
        overlay.set(k.trim(), x.trim().parse::<f64>().with_context(|| format!("`{kv}`: bad number"))?);
    }
    for (k, x) in overlay.0 {
        if !v.0.contains_key(&k) {
            bail!("{} has no parameter `{k}` (has: {})", config.id(), v.0.keys().cloned().collect::<Vec<_>>().join(", "));
        }
        v.set(k, x);
    }
    space.check(&v)?;
    Ok(space.decode(&v)?)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(anyhow::Error::from))
        .collect()
}

pub fn simulate(opts: &SimulateOptions, out: &Path) -> Result<String> {
    let registry = FeatureRegistry::default_registry();
    let models: Vec<ModelConfig> = parse_list(&opts.models)?;
    let conditions: Vec<ConditionId> = parse_list(&opts.conditions)?;
    let mut traces_out = String::new();
    let mut curves = Vec::new();
    let mut trends = Vec::new();
    let mut notes = Vec::new();
    for config in &models {
        let params = sim_params(config, &registry, opts.params.as_deref(), &opts.set)?;
        for &cond in &conditions {
            let traces = simulate_cohort(config, |_| params.clone(), cond, opts.agents, opts.trials, &registry, opts.seed)?;
            for t in &traces {
                traces_out.push_str(&t.record.to_json_line());
            }
            if traces.is_empty() {
                notes.push(format!("{cond} {}: zero agents, empty curves", config.id()));
                continue;
            }
            let (c, t) = cohort_curves(&traces, cond, &mut notes)?;
            curves.extend(c);
            trends.extend(t);
        }
    }
    write_atomic(&out.join("traces.jsonl"), traces_out.as_bytes())?;
    write_atomic(&out.join("curves.csv"), curves_to_csv(&curves).as_bytes())?;
    write_atomic(&out.join("trends.json"), pretty_json(&trends).as_bytes())?;
    let table = trend_table(&trends, &notes);
    write_atomic(&out.join("trends.txt"), table.as_bytes())?;
    Ok(table)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub n_participants: usize,
    pub n_trials: usize,
    pub learners: usize,
    pub trends: Vec<TrendRow>,
}

/// Model name used for recorded (non-simulated) sessions in curve files.
pub const OBSERVED: &str = "observed";

pub fn analyze(records: &Path, out: &Path) -> Result<String> {
    let recs = ingest_records(records).with_context(|| format!("ingesting {}", records.display()))?;
    let mut by_cond: BTreeMap<ConditionId, Vec<ParticipantRecord>> = BTreeMap::new();
    let mut notes = Vec::new();
    for r in recs {
        match r.condition.parse::<ConditionId>() {
            Ok(c) => by_cond.entry(c).or_default().push(r),
            Err(_) => notes.push(format!("{}: unknown condition `{}`, skipped", r.participant, r.condition)),
        }
    }
    let mut curves = Vec::new();
    let mut summaries = Vec::new();
    let mut all_trends = Vec::new();
    for (cond, recs) in by_cond {
        let learners = recs.iter().map(|r| classify_learner(r, cond)).collect::<mcrl_core::Result<Vec<bool>>>()?;
        let n_trials = recs.iter().map(|r| r.trials.len()).min().unwrap_or(0);
        if recs.iter().any(|r| r.trials.len() != n_trials) {
            notes.push(format!("{cond}: sessions differ in length, curves use the first {n_trials} trials"));
        }
        let traces: Vec<SimTrace> = recs
            .iter()
            .map(|r| {
                let mut record = r.clone();
                record.trials.truncate(n_trials);
                SimTrace { model: OBSERVED.into(), condition: cond, record }
            })
            .collect();
        let (c, t) = if n_trials == 0 {
            notes.push(format!("{cond}: no trials"));
            (Vec::new(), Vec::new())
        } else {
            cohort_curves(&traces, cond, &mut notes)?
        };
        curves.extend(c);
        all_trends.extend(t.iter().cloned());
        summaries.push(ConditionSummary {
            condition: cond.as_str().into(),
            n_participants: recs.len(),
            n_trials,
            learners: learners.iter().filter(|&&l| l).count(),
            trends: t,
        });
    }
    write_atomic(&out.join("curves.csv"), curves_to_csv(&curves).as_bytes())?;
    write_atomic(&out.join("analysis.json"), pretty_json(&summaries).as_bytes())?;
    let mut s = String::new();
    for c in &summaries {
        let _ = writeln!(s, "{}: {} participants, {} learners", c.condition, c.n_participants, c.learners);
    }
    s.push_str(&trend_table(&all_trends, &notes));
    write_atomic(&out.join("analysis.txt"), s.as_bytes())?;
    Ok(s)
}

// ------------------------------------------------------------------- grid

pub fn grid_text() -> String {
    grid_manifest(&build_grid(&GridOptions::default()))
}
