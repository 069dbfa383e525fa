//! The config-driven pipeline behind the `mdpfam` binary.
//!
//! Stages: `enumerate` writes the family table, `evaluate` fills the score
//! matrix (through the on-disk cache), `estimate` runs budget sweeps over an
//! existing score file, `report` writes profiles, rankings and the summary,
//! and `run` does all of them. `estimate` and `report` never train.
//!
//! Everything written under the output directory is a deterministic function
//! of the config, the global seed and any injected score file.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{
    AnchorConfig, DistributionConfig, EstimationConfig, ExperimentConfig, FamilyConfig, FeatureConfig, SchemeConfig,
    SensitivityConfig,
};

use crate::approx::{budget_sweep, Estimator, SweepConfig, SweepDetail, SweepRow};
use crate::controllers::MethodSpec;
use crate::envs::Task;
use crate::eval::{weighted_sum, Engine, PointSummary, ScoreCache, ScoreMatrix, ScoreRow};
use crate::family::{
    build_failure_weighted, build_random, build_uniform, FailureMode, FailureWeighting, ImportanceDistribution,
    MdpFamily,
};
use crate::par::{self, Execution};
use crate::reporting::{self, Dominance, OrderRule, PerformanceProfile, RankReport, SensitivityTable};
use crate::{seed, Error, MetricDirection, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Enumerate,
    Evaluate,
    Estimate,
    Report,
    Run,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    /// Score file used instead of evaluating.
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// Some evaluation failed or some method lacked complete scores.
    pub partial_failures: bool,
    /// Models trained in this invocation.
    pub trainings: usize,
    pub cache_hits: usize,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.partial_failures {
            2
        } else {
            0
        }
    }
}

pub const CACHE_FILE: &str = "cache.jsonl";
pub const SCORES_FILE: &str = "scores.csv";

struct Context<'a> {
    config: &'a ExperimentConfig,
    task: Task,
    family: MdpFamily,
    seed: u64,
    exec: Execution,
    out: PathBuf,
    files: Vec<PathBuf>,
    warnings: Vec<String>,
    partial: bool,
}

impl Context<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_file(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        if !self.files.contains(&path) {
            self.files.push(path);
        }
        Ok(())
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }

    fn engine<'c>(&'c self, cache: &'c ScoreCache) -> Engine<'c> {
        Engine::new(self.task, &self.family, cache)
            .eval_seeds(self.config.eval_seeds.clone())
            .root_seed(self.seed)
            .anchor(self.config.anchor(self.task))
            .execution(self.exec)
    }

    fn empty_matrix(&self) -> ScoreMatrix {
        ScoreMatrix::new(
            self.task.id(),
            self.task.direction(),
            self.family.feature_names().to_vec(),
            self.family.members().iter().map(|m| m.tau.clone()).collect(),
        )
    }

    fn needs_reference(&self) -> bool {
        matches!(
            self.config.distribution.scheme,
            SchemeConfig::FailureLow | SchemeConfig::FailureHigh
        )
    }

    /// Builds the importance distribution; failure schemes read the
    /// reference method's mean raw returns from `matrix`.
    fn distribution(&self, matrix: Option<&ScoreMatrix>) -> Result<ImportanceDistribution> {
        let d = &self.config.distribution;
        let dist_seed = d.seed.unwrap_or_else(|| seed::derive(self.seed, "distribution"));
        match d.scheme {
            SchemeConfig::Uniform => Ok(build_uniform(&self.family)),
            SchemeConfig::Random => Ok(build_random(&self.family, dist_seed)),
            SchemeConfig::Explicit => ImportanceDistribution::explicit(d.weights.clone()),
            SchemeConfig::FailureLow | SchemeConfig::FailureHigh => {
                let reference = d.reference_method.as_deref().expect("validated");
                let matrix = matrix.ok_or_else(|| {
                    Error::InvalidConfig(vec![format!(
                        "distribution: scores of `{reference}` are needed for a failure scheme"
                    )])
                })?;
                let row = matrix.row(reference)?;
                let missing = row.unusable();
                if !missing.is_empty() {
                    return Err(Error::IncompleteScores {
                        method: reference.to_string(),
                        missing,
                    });
                }
                let raw: Vec<f64> = row
                    .cells
                    .iter()
                    .map(|c| c.as_ref().expect("complete").raw_mean())
                    .collect();
                let mode = if d.scheme == SchemeConfig::FailureLow {
                    FailureMode::Low
                } else {
                    FailureMode::High
                };
                let mut cfg = FailureWeighting::new(d.threshold.expect("validated"), self.task.direction(), mode);
                if let Some(r) = d.ratio {
                    cfg.low_high_ratio = r;
                }
                cfg.jitter = d.jitter.map(|a| (a, dist_seed));
                build_failure_weighted(&self.family, &raw, &cfg)
            }
        }
    }

    fn read_scores(&self, path: &Path) -> Result<ScoreMatrix> {
        let file = File::open(path)
            .map_err(|e| Error::InvalidConfig(vec![format!("scores: cannot open {}: {e}", path.display())]))?;
        let m = ScoreMatrix::read(file, self.task.direction(), Some(self.family.size()))?;
        if !m.task.is_empty() && m.task != self.task.id() {
            return Err(Error::Parse(format!(
                "score file is for task `{}`, config is `{}`",
                m.task,
                self.task.id()
            )));
        }
        if m.feature_names != self.family.feature_names() {
            return Err(Error::Parse(format!(
                "score file features {:?} differ from the family's {:?}",
                m.feature_names,
                self.family.feature_names()
            )));
        }
        for (i, row) in m.rows.iter().flat_map(|r| r.cells.iter().enumerate()) {
            let given = &m.taus[i];
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            if row.is_some() && bits(given) != bits(&self.family.members()[i].tau) {
                return Err(Error::Parse(format!(
                    "point {i} of the score file has a different context vector"
                )));
            }
        }
        Ok(ScoreMatrix {
            taus: self.family.members().iter().map(|p| p.tau.clone()).collect(),
            ..m
        })
    }

    fn scores_path(&self, opts: &RunOptions) -> PathBuf {
        opts.scores.clone().unwrap_or_else(|| self.path(SCORES_FILE))
    }
}

/// Validates `config` and runs one pipeline stage.
pub fn run_experiment(config: &ExperimentConfig, command: Command, opts: &RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    if let Some(p) = &opts.scores {
        if !p.is_file() {
            return Err(Error::InvalidConfig(vec![format!(
                "--scores: {} is not a file",
                p.display()
            )]));
        }
    }
    if opts.jobs == Some(0) {
        return Err(Error::InvalidConfig(vec!["--jobs: must be at least 1".into()]));
    }
    par::with_jobs(opts.jobs, || run_validated(config, command, opts))
}

fn run_validated(config: &ExperimentConfig, command: Command, opts: &RunOptions) -> Result<RunOutcome> {
    let task = config.task()?;
    let family = config.build_family(task)?;
    let out = opts.out.clone().unwrap_or_else(|| config.output_dir());
    fs::create_dir_all(&out)?;
    let mut cx = Context {
        config,
        task,
        family,
        seed: opts.seed.unwrap_or(config.seed),
        exec: if opts.jobs == Some(1) {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        out,
        files: Vec::new(),
        warnings: Vec::new(),
        partial: false,
    };
    log::info!(
        "{}: {} on {} ({} points)",
        config.experiment_id,
        format!("{command:?}").to_lowercase(),
        task.id(),
        cx.family.size()
    );

    let cache = ScoreCache::load(&cx.path(CACHE_FILE))?;
    let mut sweeps: Option<Vec<MethodSweep>> = None;

    match command {
        Command::Enumerate => enumerate(&mut cx)?,
        Command::Evaluate => {
            enumerate(&mut cx)?;
            evaluate(&mut cx, &cache, None)?;
        }
        Command::Estimate => {
            let matrix = cx.read_scores(&cx.scores_path(opts))?;
            estimate(&mut cx, &matrix)?;
        }
        Command::Report => {
            let matrix = cx.read_scores(&cx.scores_path(opts))?;
            report(&mut cx, &matrix, None)?;
        }
        Command::Run => {
            enumerate(&mut cx)?;
            let lazy = config.estimation.as_ref().is_some_and(|e| !e.exact);
            let matrix = match &opts.scores {
                Some(p) => cx.read_scores(p)?,
                None if lazy => lazy_run(&mut cx, &cache, &mut sweeps)?,
                None => evaluate(&mut cx, &cache, None)?,
            };
            if sweeps.is_none() && config.estimation.is_some() {
                sweeps = Some(estimate(&mut cx, &matrix)?);
            }
            report(&mut cx, &matrix, sweeps.as_deref())?;
        }
    }

    if !cache.is_empty() {
        cache.save(&cx.path(CACHE_FILE))?;
    }
    Ok(RunOutcome {
        out_dir: cx.out.clone(),
        files: cx.files,
        partial_failures: cx.partial,
        trainings: cache.trainings(),
        cache_hits: cache.hits(),
        warnings: cx.warnings,
    })
}

fn enumerate(cx: &mut Context) -> Result<()> {
    let dist = if cx.needs_reference() {
        None
    } else {
        Some(cx.distribution(None)?)
    };
    let family = cx.family.clone();
    cx.write_file("family.csv", |w| family.write_table(dist.as_ref(), w))
}

/// Evaluates every method on every point (or only `only` methods).
fn evaluate(cx: &mut Context, cache: &ScoreCache, only: Option<&[&MethodSpec]>) -> Result<ScoreMatrix> {
    let mut matrix = cx.empty_matrix();
    let methods: Vec<&MethodSpec> = match only {
        Some(m) => m.to_vec(),
        None => cx.config.methods.iter().collect(),
    };
    let mut summaries = Vec::new();
    {
        let engine = cx.engine(cache);
        for m in &methods {
            log::info!("evaluating `{}` on {} points", m.id, cx.family.size());
            let row = engine.evaluate_row(m)?;
            summaries.push(PointSummary::of(&row));
            matrix.set_row(row)?;
        }
    }
    finish_evaluation(cx, cache, &matrix, &summaries)?;
    Ok(matrix)
}

fn finish_evaluation(
    cx: &mut Context,
    cache: &ScoreCache,
    matrix: &ScoreMatrix,
    summaries: &[PointSummary],
) -> Result<()> {
    for row in &matrix.rows {
        let failed: Vec<usize> = row
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.as_ref().is_some_and(|c| !c.is_usable()))
            .map(|(i, _)| i)
            .collect();
        if !failed.is_empty() {
            cx.partial = true;
            cx.warn(format!(
                "`{}` failed on {} points: {:?}",
                row.method,
                failed.len(),
                failed
            ));
        }
    }
    cx.write_file(SCORES_FILE, |w| matrix.write(w))?;
    let policies = policy_lines(cx, cache, matrix)?;
    cx.write_file("policies.txt", |w| {
        for line in &policies {
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    cx.write_file("evaluation.csv", |w| write_summaries(summaries, w))
}

fn policy_lines(cx: &Context, cache: &ScoreCache, matrix: &ScoreMatrix) -> Result<Vec<String>> {
    let engine = cx.engine(cache);
    let mut lines = Vec::new();
    for row in &matrix.rows {
        let method = cx
            .config
            .methods
            .iter()
            .find(|m| m.id == row.method)
            .expect("evaluated methods are configured");
        for (i, cell) in row.cells.iter().enumerate() {
            if cell.is_none() {
                continue;
            }
            let (e, _) = engine.evaluate_point(method, i)?;
            let text = match (&e.failure, &e.policy) {
                (Some(f), _) => format!("failed: {f}"),
                (None, Some(p)) => p.clone(),
                (None, None) => "none".into(),
            };
            lines.push(format!("{} {} {}", row.method, i, text));
        }
    }
    Ok(lines)
}

fn write_summaries<W: Write>(summaries: &[PointSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "evaluated",
        "failed",
        "mean",
        "std",
        "min",
        "min_index",
        "max",
        "max_index",
    ])?;
    for s in summaries {
        w.write_record([
            s.method.clone(),
            s.evaluated.to_string(),
            s.failed.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.min.to_string(),
            s.min_index.to_string(),
            s.max.to_string(),
            s.max_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSweep {
    pub method: String,
    pub rows: Vec<SweepRow>,
    #[serde(skip)]
    pub details: Vec<SweepDetail>,
}

fn sweep_config(cx: &Context) -> Option<SweepConfig> {
    let est = cx.config.estimation.as_ref()?;
    Some(SweepConfig {
        estimators: est.estimators.clone(),
        budgets: est.budgets.clone(),
        repetitions: est.repetitions,
        rng_seed: est.seed.unwrap_or_else(|| seed::derive(cx.seed, "estimation")),
        kmeans: cx.config.kmeans(),
        exec: cx.exec,
    })
}

/// Budget sweeps over an existing score matrix; never trains.
fn estimate(cx: &mut Context, matrix: &ScoreMatrix) -> Result<Vec<MethodSweep>> {
    let Some(cfg) = sweep_config(cx) else {
        cx.warn("no [estimation] section; nothing to estimate".into());
        return Ok(Vec::new());
    };
    let dist = cx.distribution(Some(matrix))?;
    let mut out = Vec::new();
    for row in &matrix.rows {
        let scores = match row.scores() {
            Ok(s) => s,
            Err(e) => {
                cx.partial = true;
                cx.warn(format!("skipping estimates for `{}`: {e}", row.method));
                continue;
            }
        };
        let (exact, _) = weighted_sum(&scores, dist.mass())?;
        let sw = budget_sweep(&cx.family, &dist, &scores, &cfg, Some(exact))?;
        for w in sw.warnings {
            cx.warn(format!("{}: {w}", row.method));
        }
        out.push(MethodSweep {
            method: row.method.clone(),
            rows: sw.rows,
            details: sw.details,
        });
    }
    write_sweeps(cx, &out)?;
    Ok(out)
}

/// Estimation with scores evaluated only where estimators look.
fn lazy_run(cx: &mut Context, cache: &ScoreCache, sweeps: &mut Option<Vec<MethodSweep>>) -> Result<ScoreMatrix> {
    let cfg = sweep_config(cx).expect("lazy mode implies an estimation section");
    let reference = if cx.needs_reference() {
        let id = cx.config.distribution.reference_method.clone().expect("validated");
        let m = cx.config.methods.iter().find(|m| m.id == id).expect("validated");
        let engine = cx.engine(cache);
        let mut matrix = cx.empty_matrix();
        matrix.set_row(engine.evaluate_row(m)?)?;
        Some(matrix)
    } else {
        None
    };
    let dist = cx.distribution(reference.as_ref())?;
    let mut out = Vec::new();
    let mut matrix = cx.empty_matrix();
    let mut summaries = Vec::new();
    for m in &cx.config.methods {
        let engine = cx.engine(cache);
        let provider = engine.lazy(m);
        let sw = match budget_sweep(&cx.family, &dist, &provider, &cfg, None) {
            Ok(sw) => sw,
            Err(Error::IncompleteScores { method, missing }) => {
                cx.partial = true;
                let msg = format!("estimates for `{method}` hit failed points {missing:?}");
                cx.warn(msg);
                continue;
            }
            Err(e) => return Err(e),
        };
        let cells = (0..cx.family.size())
            .map(|i| engine.cached_cell(m, i))
            .collect::<Result<Vec<_>>>()?;
        let row = ScoreRow {
            method: m.id.clone(),
            cells,
        };
        summaries.push(PointSummary::of(&row));
        matrix.set_row(row)?;
        out.push(MethodSweep {
            method: m.id.clone(),
            rows: sw.rows,
            details: sw.details,
        });
        for w in sw.warnings {
            cx.warn(format!("{}: {w}", m.id));
        }
    }
    finish_evaluation(cx, cache, &matrix, &summaries)?;
    write_sweeps(cx, &out)?;
    *sweeps = Some(out);
    Ok(matrix)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn write_sweeps(cx: &mut Context, sweeps: &[MethodSweep]) -> Result<()> {
    cx.write_file("sweep.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "method",
            "estimator",
            "budget",
            "mean",
            "std",
            "single_repetition",
            "exact",
            "mean_abs_error",
        ])?;
        for s in sweeps {
            for r in &s.rows {
                w.write_record([
                    s.method.clone(),
                    r.estimator.as_str().to_string(),
                    r.budget.to_string(),
                    r.mean.to_string(),
                    r.std.to_string(),
                    r.single_repetition.to_string(),
                    opt(r.exact),
                    opt(r.mean_abs_error),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    cx.write_file("sweep_detail.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["method", "estimator", "budget", "repetition", "estimate", "selected"])?;
        for s in sweeps {
            for d in &s.details {
                let sel: Vec<String> = d.selected.iter().map(usize::to_string).collect();
                w.write_record([
                    s.method.clone(),
                    d.estimator.as_str().to_string(),
                    d.budget.to_string(),
                    d.repetition.to_string(),
                    d.value.to_string(),
                    sel.join(" "),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    cx.write_file("sweep_plot.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["x", "y", "series"])?;
        for s in sweeps {
            for r in &s.rows {
                w.write_record([
                    r.budget.to_string(),
                    r.mean.to_string(),
                    format!("{}/{}/mean", s.method, r.estimator.as_str()),
                ])?;
                w.write_record([
                    r.budget.to_string(),
                    (r.mean - r.std).to_string(),
                    format!("{}/{}/lower", s.method, r.estimator.as_str()),
                ])?;
                w.write_record([
                    r.budget.to_string(),
                    (r.mean + r.std).to_string(),
                    format!("{}/{}/upper", s.method, r.estimator.as_str()),
                ])?;
            }
            let exact_rows = s
                .rows
                .iter()
                .filter(|r| r.estimator == Estimator::M1 || s.rows.iter().all(|x| x.estimator != Estimator::M1));
            let mut seen = Vec::new();
            for r in exact_rows {
                if let (Some(e), false) = (r.exact, seen.contains(&r.budget)) {
                    seen.push(r.budget);
                    w.write_record([r.budget.to_string(), e.to_string(), format!("{}/exact", s.method)])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct DominanceEntry {
    a: String,
    b: String,
    #[serde(flatten)]
    result: Dominance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Summary<'a> {
    experiment_id: &'a str,
    task: &'a str,
    direction: MetricDirection,
    seed: u64,
    family_size: usize,
    feature_names: &'a [String],
    distribution_scheme: &'static str,
    distribution_degraded: bool,
    methods: Vec<String>,
    exact_e: BTreeMap<String, Option<f64>>,
    unusable_points: BTreeMap<String, Vec<usize>>,
    estimator_sweeps: Option<&'a [MethodSweep]>,
    rankings: Option<&'a RankReport>,
    dominance: Vec<DominanceEntry>,
    sensitivity: Option<&'a SensitivityTable>,
    profiles: &'a [PerformanceProfile],
    warnings: &'a [String],
}

/// Profiles, rankings, dominance, sensitivity and the summary document.
fn report(cx: &mut Context, matrix: &ScoreMatrix, sweeps: Option<&[MethodSweep]>) -> Result<()> {
    let dist = cx.distribution(Some(matrix))?;
    let mut complete = cx.empty_matrix();
    let mut exact_e = BTreeMap::new();
    let mut unusable = BTreeMap::new();
    for row in &matrix.rows {
        let bad = row.unusable();
        if bad.is_empty() {
            let (e, _) = weighted_sum(&row.scores()?, dist.mass())?;
            exact_e.insert(row.method.clone(), Some(e));
            complete.set_row(row.clone())?;
        } else {
            let failed = row.cells.iter().flatten().any(|c| !c.is_usable());
            cx.partial |= failed;
            let msg = format!(
                "`{}` has no score on {} points; left out of profiles and rankings",
                row.method,
                bad.len()
            );
            cx.warn(msg);
            exact_e.insert(row.method.clone(), None);
            unusable.insert(row.method.clone(), bad);
        }
    }

    let profiles = reporting::build_profiles(&complete, &dist, OrderRule::DescendingWeight)?;
    cx.write_file("profiles.csv", |w| reporting::write_profiles(&profiles, w))?;
    cx.write_file("profile_plot.csv", |w| reporting::write_profile_plot(&profiles, w))?;

    let mut dominance = Vec::new();
    for (i, a) in profiles.iter().enumerate() {
        for b in &profiles[i + 1..] {
            dominance.push(DominanceEntry {
                a: a.method.clone(),
                b: b.method.clone(),
                result: reporting::dominance(a, b, matrix.direction)?,
            });
        }
    }
    cx.write_file("dominance.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["a", "b", "outcome", "a_weakly_dominates", "b_weakly_dominates"])?;
        for d in &dominance {
            let outcome = serde_json::to_value(d.result.outcome)?;
            w.write_record([
                d.a.clone(),
                d.b.clone(),
                outcome.as_str().unwrap_or_default().to_string(),
                d.result.a_weakly_dominates.to_string(),
                d.result.b_weakly_dominates.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let ranks = if complete.rows.is_empty() {
        None
    } else {
        let r = reporting::rank_report_for(&complete, &dist)?;
        cx.write_file("ranks.csv", |w| reporting::write_rank_report(&r, w))?;
        cx.write_file("flips.csv", |w| reporting::write_flip_pairs(&r, w))?;
        Some(r)
    };

    let sensitivity = match (&cx.config.sensitivity, complete.rows.is_empty()) {
        (Some(s), false) => {
            let root = s.seed.unwrap_or_else(|| seed::derive(cx.seed, "sensitivity"));
            let mut dists = vec![("main".to_string(), dist.clone())];
            for k in 0..s.random_distributions {
                dists.push((
                    format!("random_{}", k + 1),
                    build_random(&cx.family, seed::derive_indexed(root, "sensitivity", k as u64)),
                ));
            }
            let t = reporting::distribution_sensitivity(&complete, &dists)?;
            cx.write_file("sensitivity.csv", |w| reporting::write_sensitivity(&t, w))?;
            Some(t)
        }
        _ => None,
    };

    let family = cx.family.clone();
    cx.write_file("family.csv", |w| family.write_table(Some(&dist), w))?;

    let warnings = cx.warnings.clone();
    let summary = Summary {
        experiment_id: &cx.config.experiment_id,
        task: cx.task.id(),
        direction: matrix.direction,
        seed: cx.seed,
        family_size: cx.family.size(),
        feature_names: cx.family.feature_names(),
        distribution_scheme: dist.scheme().as_str(),
        distribution_degraded: dist.degraded(),
        methods: matrix.methods().into_iter().map(String::from).collect(),
        exact_e,
        unusable_points: unusable,
        estimator_sweeps: sweeps,
        rankings: ranks.as_ref(),
        dominance,
        sensitivity: sensitivity.as_ref(),
        profiles: &profiles,
        warnings: &warnings,
    };
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    cx.write_file("summary.json", |w| Ok(w.write_all(&bytes)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
experiment_id = "t"
task = "pendulum"
eval_seeds = [0]
{extra}

[family]
features = [
  {{ name = "mass", values = [1.0, 2.0] }},
  {{ name = "length", values = [1.0] }},
  {{ name = "gravity", values = [5.0, 10.0] }},
]

[[methods]]
id = "baseline"
trainer = "baseline"
"#
        ))
        .unwrap()
    }

    #[test]
    fn baseline_self_normalizes() {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let out = run_experiment(&config(""), Command::Run, &opts).unwrap();
        assert_eq!(out.exit_code(), 0);
        let summary: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["exact_e"]["baseline"], 1.0);
        assert_eq!(out.trainings, 0);
    }

    #[test]
    fn estimate_without_scores_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let c = config("");
        assert!(matches!(
            run_experiment(&c, Command::Estimate, &opts),
            Err(Error::InvalidConfig(_))
        ));
    }
}
