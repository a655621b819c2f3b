//! Experiment orchestration behind the `chest` binary: TOML configs with
//! dotted overrides, JSONL metrics streams, config snapshots, and the five
//! subcommands (train, eval, ablate, and the two check suites).
//!
//! Everything here is a thin layer over the library: configs deserialize
//! into the same structs the modules validate, and every run writes a
//! snapshot of its effective config next to its outputs so the run can be
//! reproduced exactly from the artifact directory alone.

use std::fs;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;

use crate::checks;
use crate::data::{self, HierarchySpec, Split, VectorDataset};
use crate::error::{io_context, ChestError, Result};
use crate::eval::{self, MetricsReport};
use crate::geometry::BallConfig;
use crate::losses::{LossBreakdown, LossParams};
use crate::model::{ChestModel, EncoderSpec};
use crate::train::{self, StepMetrics, TrainConfig};

/// Size and width of the proxy bank attached to the model.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxySection {
    /// Proxies per class (`K`).
    pub per_class: usize,
    /// Dimension of the hyperbolic embedding and proxy space.
    pub hyperbolic_dim: usize,
}

impl Default for ProxySection {
    fn default() -> Self {
        ProxySection {
            per_class: 2,
            hyperbolic_dim: 16,
        }
    }
}

/// Where the splits come from: a pair of CSV files, or the synthetic
/// hierarchy generator when neither path is given.
#[derive(Clone, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    pub hierarchy: HierarchySpec,
}

/// Retrieval evaluation settings.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Cutoffs for recall@k; entries outside `1 <= k < N` are dropped at
    /// evaluation time.
    pub recall_ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            recall_ks: vec![1, 2, 4, 8],
        }
    }
}

/// Everything one run needs, mirroring the sections of the TOML file.
/// Every field has a default, so an empty file is a valid config.
#[derive(Clone, Debug, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ball: BallConfig,
    pub loss: LossParams,
    pub encoder: EncoderSpec,
    pub proxies: ProxySection,
    pub train: TrainConfig,
    pub data: DataSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    /// Reads `path`, applies dotted `key=value` overrides and the optional
    /// seed override (which wins over a `train.seed` override), and
    /// validates the result.
    pub fn load(path: &Path, overrides: &[(String, String)], seed: Option<u64>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_context("read", path, e))?;
        Self::from_toml_str(&text, path, overrides, seed)
    }

    fn from_toml_str(
        text: &str,
        path: &Path,
        overrides: &[(String, String)],
        seed: Option<u64>,
    ) -> Result<Self> {
        let mut value: toml::Value = text.parse().map_err(|e: toml::de::Error| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0);
            ChestError::Parse {
                path: path.display().to_string(),
                line,
                message: e.message().to_string(),
            }
        })?;
        for (key, raw) in overrides {
            apply_override(&mut value, key, raw)?;
        }
        if let Some(s) = seed {
            apply_override(&mut value, "train.seed", &s.to_string())?;
        }
        let config = ExperimentConfig::deserialize(value)
            .map_err(|e| ChestError::Config(vec![e.to_string()]))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every field and cross-field rule, reporting all violations
    /// at once instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut rules = Vec::new();
        collect(&mut rules, self.ball.validate());
        collect(&mut rules, self.loss.validate());
        collect(&mut rules, self.encoder.validate());
        if self.proxies.per_class == 0 {
            rules.push("proxies.per_class must be at least 1".into());
        }
        if self.proxies.hyperbolic_dim == 0 {
            rules.push("proxies.hyperbolic_dim must be at least 1".into());
        }
        collect(
            &mut rules,
            self.train.validate(&self.loss, self.proxies.per_class),
        );
        match (&self.data.train_path, &self.data.test_path) {
            (Some(_), Some(_)) => {}
            (None, None) => {
                collect(&mut rules, self.data.hierarchy.validate());
                if self.data.hierarchy.input_dim != self.encoder.input_dim {
                    rules.push(format!(
                        "data.hierarchy.input_dim {} must match encoder.input_dim {}",
                        self.data.hierarchy.input_dim, self.encoder.input_dim
                    ));
                }
            }
            _ => rules.push(
                "data.train_path and data.test_path must be given together \
                 (or both omitted for synthetic data)"
                    .into(),
            ),
        }
        if self.eval.recall_ks.is_empty() {
            rules.push("eval.recall_ks must list at least one cutoff".into());
        } else if self.eval.recall_ks.contains(&0) {
            rules.push("eval.recall_ks entries must be at least 1".into());
        }
        if rules.is_empty() {
            Ok(())
        } else {
            Err(ChestError::Config(rules))
        }
    }
}

/// Folds a section validator into the combined rule list: configuration
/// errors contribute each rule, any other error contributes its message.
fn collect(rules: &mut Vec<String>, result: Result<()>) {
    match result {
        Ok(()) => {}
        Err(ChestError::Config(list)) => rules.extend(list),
        Err(other) => rules.push(other.to_string()),
    }
}

/// Applies one dotted `key=value` override onto the parsed TOML tree,
/// creating intermediate tables as needed.
fn apply_override(root: &mut toml::Value, key: &str, raw: &str) -> Result<()> {
    let segments: Vec<&str> = key.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(ChestError::InvalidInput(format!(
            "override key {key:?} has an empty segment"
        )));
    }
    let mut node = root;
    for segment in &segments[..segments.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            ChestError::InvalidInput(format!(
                "override key {key:?}: cannot enter {segment:?}, the value above it is not a table"
            ))
        })?;
        node = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let last = segments[segments.len() - 1];
    let table = node.as_table_mut().ok_or_else(|| {
        ChestError::InvalidInput(format!(
            "override key {key:?}: cannot set {last:?} inside a non-table value"
        ))
    })?;
    table.insert(last.to_string(), parse_override_value(raw));
    Ok(())
}

/// Parses an override value with TOML syntax so numbers, booleans, and
/// arrays work as written, falling back to a plain string so bare words
/// like `encoder.kind=mlp2` need no quoting.
fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut table) => table
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// One metrics line: the loss components at a step, optional retrieval
/// reports, and seconds of wall-clock time since the run started.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub l_hyperbolic: f64,
    pub l_euclidean: f64,
    pub l_hyphc: f64,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub euclidean: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperbolic: Option<MetricsReport>,
    pub wall_time: f64,
}

impl MetricsRecord {
    /// Loss-only record for one training step.
    pub fn from_step(metrics: &StepMetrics, wall_time: f64) -> Self {
        MetricsRecord {
            step: metrics.step,
            l_hyperbolic: metrics.breakdown.l_hyperbolic,
            l_euclidean: metrics.breakdown.l_euclidean,
            l_hyphc: metrics.breakdown.l_hyphc,
            total: metrics.breakdown.total,
            euclidean: None,
            hyperbolic: None,
            wall_time,
        }
    }

    fn is_finite(&self) -> bool {
        let core = [
            self.l_hyperbolic,
            self.l_euclidean,
            self.l_hyphc,
            self.total,
            self.wall_time,
        ];
        core.iter().all(|v| v.is_finite())
            && [&self.euclidean, &self.hyperbolic]
                .iter()
                .all(|report| match report {
                    None => true,
                    Some(r) => {
                        r.map_at_r.is_finite() && r.recall_at.values().all(|v| v.is_finite())
                    }
                })
    }
}

/// Streams records to a JSONL file, one object per line, flushed per line
/// so a crashed run keeps everything written so far.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
    last_step: usize,
}

impl MetricsWriter {
    /// Creates (or truncates) the file at `path`.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| io_context("create", path, e))?;
        Ok(MetricsWriter {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            last_step: 0,
        })
    }

    /// Appends one record. Non-finite values and steps that go backwards
    /// are refused before anything reaches the file; a repeated step is
    /// allowed so a final evaluation can share the last step number.
    pub fn append(&mut self, record: &MetricsRecord) -> Result<()> {
        if !record.is_finite() {
            return Err(ChestError::NonFinite(format!(
                "metrics record at step {}",
                record.step
            )));
        }
        if record.step < self.last_step {
            return Err(ChestError::InvalidInput(format!(
                "metrics step {} after step {}: steps must not decrease",
                record.step, self.last_step
            )));
        }
        let line = serde_json::to_string(record)
            .map_err(|e| ChestError::InvalidInput(format!("metrics serialization: {e}")))?;
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .and_then(|_| self.out.flush())
            .map_err(|e| io_context("write", &self.path, e))?;
        self.last_step = record.step;
        Ok(())
    }
}

/// Reads a metrics stream back, citing the 1-based line of any corrupt
/// row. Blank lines are skipped.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = File::open(path).map_err(|e| io_context("open", path, e))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_context("read", path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| ChestError::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Subcommand selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Eval,
    Ablate,
    CheckGeometry,
    CheckGrad,
}

/// One parsed invocation of the `chest` binary.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub command: Command,
    pub config: PathBuf,
    /// Dotted `key=value` pairs applied on top of the file.
    pub overrides: Vec<(String, String)>,
    /// Output directory; defaults to `chest-out`.
    pub out: Option<PathBuf>,
    /// Overrides `train.seed`, winning over `--set train.seed=...`.
    pub seed: Option<u64>,
}

/// Runs one invocation end to end and maps the outcome to a process exit
/// code: 0 success, 1 invalid input or configuration, 2 runtime failure,
/// 3 a check suite found violations.
pub fn run(opts: &RunOptions) -> i32 {
    match execute(opts) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(opts: &RunOptions) -> Result<i32> {
    let config = ExperimentConfig::load(&opts.config, &opts.overrides, opts.seed)?;
    let out = opts
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("chest-out"));
    match opts.command {
        Command::Train => {
            run_train(&config, &out)?;
            Ok(0)
        }
        Command::Eval => {
            run_eval(&config, &out)?;
            Ok(0)
        }
        Command::Ablate => {
            run_ablation(&config, Some(&out))?;
            Ok(0)
        }
        Command::CheckGeometry => {
            let report = checks::geometry_suite(config.train.seed)?;
            emit(&report.render());
            Ok(if report.passed() { 0 } else { 3 })
        }
        Command::CheckGrad => {
            let report = checks::gradient_suite(config.train.seed)?;
            emit(&report.render());
            Ok(if report.passed() { 0 } else { 3 })
        }
    }
}

/// Loads the file-backed splits or synthesizes the hierarchy, per the
/// config. The pairing rule is also enforced by `validate`, so the error
/// branch here only fires for hand-built configs.
fn resolve_datasets(config: &ExperimentConfig) -> Result<(VectorDataset, VectorDataset)> {
    match (&config.data.train_path, &config.data.test_path) {
        (Some(train), Some(test)) => {
            let (train_set, _) = data::load_dataset(train, Split::Train)?;
            let (test_set, _) = data::load_dataset(test, Split::Test)?;
            Ok((train_set, test_set))
        }
        (None, None) => data::generate_hierarchy(&config.data.hierarchy),
        _ => Err(ChestError::Config(vec![
            "data.train_path and data.test_path must be given together \
             (or both omitted for synthetic data)"
                .into(),
        ])),
    }
}

fn build_model(config: &ExperimentConfig, train_set: &VectorDataset) -> Result<ChestModel> {
    ChestModel::init(
        config.encoder,
        config.proxies.hyperbolic_dim,
        train_set.classes(),
        config.proxies.per_class,
        config.ball.clone(),
        config.train.seed,
    )
}

/// Serializes the effective config next to the run's outputs so the exact
/// settings can be re-run later.
fn write_snapshot(config: &ExperimentConfig, path: &Path) -> Result<()> {
    let text = toml::to_string_pretty(config)
        .map_err(|e| ChestError::InvalidInput(format!("config serialization: {e}")))?;
    fs::write(path, text).map_err(|e| io_context("write", path, e))
}

/// Keeps the cutoffs valid for a split of `n` examples (`1 <= k < n`),
/// sorted and deduplicated.
fn usable_ks(ks: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut kept: Vec<usize> = ks.iter().copied().filter(|&k| k >= 1 && k < n).collect();
    kept.sort_unstable();
    kept.dedup();
    if kept.is_empty() {
        return Err(ChestError::InvalidInput(format!(
            "no usable recall cutoff in {ks:?} for a split of {n} examples (need 1 <= k < n)"
        )));
    }
    Ok(kept)
}

struct TrainRun {
    model: ChestModel,
    last: LossBreakdown,
    writer: Option<MetricsWriter>,
    clock: Instant,
}

/// Initializes and trains one model. With a directory, the config
/// snapshot, metrics stream, and checkpoint land there as the run goes.
fn train_model(
    config: &ExperimentConfig,
    train_set: &VectorDataset,
    dir: Option<&Path>,
) -> Result<TrainRun> {
    let mut model = build_model(config, train_set)?;
    let mut writer = match dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| io_context("create", d, e))?;
            write_snapshot(config, &d.join("config.toml"))?;
            Some(MetricsWriter::create(&d.join("metrics.jsonl"))?)
        }
        None => None,
    };
    let clock = Instant::now();
    let mut last: Option<LossBreakdown> = None;
    train::run_training(
        &mut model,
        train_set,
        &config.loss,
        &config.train,
        |metrics| {
            if let Some(w) = writer.as_mut() {
                w.append(&MetricsRecord::from_step(
                    metrics,
                    clock.elapsed().as_secs_f64(),
                ))?;
            }
            last = Some(metrics.breakdown);
            Ok(())
        },
    )?;
    if let Some(d) = dir {
        model.save(&d.join("model.ckpt"))?;
    }
    let last = last.ok_or_else(|| ChestError::InvalidInput("training ran zero steps".into()))?;
    Ok(TrainRun {
        model,
        last,
        writer,
        clock,
    })
}

/// Prints a line to stdout. When stdout is a closed pipe (the reader went
/// away, as in `chest train ... | head`), exits quietly instead of
/// panicking; artifacts are always on disk before their summary prints.
fn emit(line: &str) {
    if writeln!(std::io::stdout(), "{line}").is_err() {
        std::process::exit(0);
    }
}

fn print_reports(report_e: &MetricsReport, report_h: &MetricsReport) {
    for report in [report_e, report_h] {
        let recalls: Vec<String> = report
            .recall_at
            .iter()
            .map(|(k, v)| format!("R@{k} {v:.4}"))
            .collect();
        emit(&format!(
            "  {:<10} {}  MAP@R {:.4}",
            report.space.to_string(),
            recalls.join("  "),
            report.map_at_r
        ));
    }
}

/// Trains a model from the config and evaluates it on the test split.
/// Artifacts under `out`: `config.toml`, `metrics.jsonl` (one record per
/// step plus a final one carrying the retrieval reports), `model.ckpt`.
pub fn run_train(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let (train_set, test_set) = resolve_datasets(config)?;
    let mut run = train_model(config, &train_set, Some(out))?;
    let ks = usable_ks(&config.eval.recall_ks, test_set.len())?;
    let (report_e, report_h) = eval::evaluate_both(&run.model, &test_set, &ks)?;
    let record = MetricsRecord {
        step: config.train.steps,
        l_hyperbolic: run.last.l_hyperbolic,
        l_euclidean: run.last.l_euclidean,
        l_hyphc: run.last.l_hyphc,
        total: run.last.total,
        euclidean: Some(report_e.clone()),
        hyperbolic: Some(report_h.clone()),
        wall_time: run.clock.elapsed().as_secs_f64(),
    };
    if let Some(w) = run.writer.as_mut() {
        w.append(&record)?;
    }
    emit(&format!(
        "trained {} steps on {} examples ({} classes); final loss {:.6}",
        config.train.steps,
        train_set.len(),
        train_set.classes(),
        run.last.total
    ));
    print_reports(&report_e, &report_h);
    emit(&format!("artifacts written to {}", out.display()));
    Ok(())
}

/// Evaluates the checkpoint at `out/model.ckpt` on the configured test
/// split, writing `eval.jsonl` and an `eval-config.toml` snapshot (named
/// so the training snapshot in the same directory survives).
pub fn run_eval(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let (_train_set, test_set) = resolve_datasets(config)?;
    let model = ChestModel::load(&out.join("model.ckpt"))?;
    if model.encoder().input_dim != test_set.input_dim() {
        return Err(ChestError::DimensionMismatch {
            context: "checkpoint encoder input vs evaluation features".into(),
            expected: model.encoder().input_dim,
            got: test_set.input_dim(),
        });
    }
    let clock = Instant::now();
    let indices: Vec<usize> = (0..test_set.len()).collect();
    let breakdown = train::evaluate_batch(&model, &test_set, &indices, &[], &config.loss)?;
    let ks = usable_ks(&config.eval.recall_ks, test_set.len())?;
    let (report_e, report_h) = eval::evaluate_both(&model, &test_set, &ks)?;
    let record = MetricsRecord {
        step: 0,
        l_hyperbolic: breakdown.l_hyperbolic,
        l_euclidean: breakdown.l_euclidean,
        l_hyphc: breakdown.l_hyphc,
        total: breakdown.total,
        euclidean: Some(report_e.clone()),
        hyperbolic: Some(report_h.clone()),
        wall_time: clock.elapsed().as_secs_f64(),
    };
    fs::create_dir_all(out).map_err(|e| io_context("create", out, e))?;
    let mut writer = MetricsWriter::create(&out.join("eval.jsonl"))?;
    writer.append(&record)?;
    write_snapshot(config, &out.join("eval-config.toml"))?;
    emit(&format!(
        "evaluated {} examples ({} classes); loss {:.6}",
        test_set.len(),
        test_set.classes(),
        breakdown.total
    ));
    print_reports(&report_e, &report_h);
    Ok(())
}

/// One cell of the ablation grid and its test R@1 in both spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub name: String,
    pub eta_h: f64,
    pub eta_e: f64,
    pub per_class: usize,
    pub tau: f64,
    pub recall1_euclidean: f64,
    pub recall1_hyperbolic: f64,
}

/// The eight-cell grid: each space alone and combined, each with the full
/// and a single proxy bank (regularizer off), plus the regularized
/// hyperbolic and combined cells at the full bank.
fn ablation_grid(base: &ExperimentConfig) -> Vec<(String, f64, f64, usize, f64)> {
    let k_full = base.proxies.per_class.max(2);
    let tau = if base.loss.tau > 0.0 {
        base.loss.tau
    } else {
        crate::defaults::TAU
    };
    vec![
        (format!("h-k{k_full}"), 1.0, 0.0, k_full, 0.0),
        (format!("e-k{k_full}"), 0.0, 1.0, k_full, 0.0),
        (format!("he-k{k_full}"), 1.0, 1.0, k_full, 0.0),
        ("h-k1".to_string(), 1.0, 0.0, 1, 0.0),
        ("e-k1".to_string(), 0.0, 1.0, 1, 0.0),
        ("he-k1".to_string(), 1.0, 1.0, 1, 0.0),
        (format!("h-k{k_full}-reg"), 1.0, 0.0, k_full, tau),
        (format!("he-k{k_full}-reg"), 1.0, 1.0, k_full, tau),
    ]
}

/// Runs the ablation grid sequentially on shared data, one training run
/// per cell. Each cell reuses the base config with only the loss weights,
/// proxy count, and regularizer strength changed, so a cell's numbers
/// match an independent `train` run with the same overrides and seed.
/// With an output directory, each cell's artifacts land in
/// `out/cells/<name>/` and the summary table in `out/ablation.tsv`.
pub fn run_ablation(config: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<AblationCell>> {
    let (train_set, test_set) = resolve_datasets(config)?;
    let ks = usable_ks(&[1], test_set.len())?;
    if let Some(o) = out {
        fs::create_dir_all(o).map_err(|e| io_context("create", o, e))?;
        write_snapshot(config, &o.join("config.toml"))?;
    }
    let mut cells = Vec::new();
    for (name, eta_h, eta_e, per_class, tau) in ablation_grid(config) {
        let mut cell_cfg = config.clone();
        cell_cfg.loss.eta_h = eta_h;
        cell_cfg.loss.eta_e = eta_e;
        cell_cfg.loss.tau = tau;
        cell_cfg.proxies.per_class = per_class;
        cell_cfg.validate()?;
        let cell_dir = out.map(|o| o.join("cells").join(&name));
        let run = train_model(&cell_cfg, &train_set, cell_dir.as_deref())?;
        let (report_e, report_h) = eval::evaluate_both(&run.model, &test_set, &ks)?;
        let cell = AblationCell {
            name: name.clone(),
            eta_h,
            eta_e,
            per_class,
            tau,
            recall1_euclidean: report_e.recall_at[&1],
            recall1_hyperbolic: report_h.recall_at[&1],
        };
        emit(&format!(
            "ablation {:<12} R@1 euclidean {:.4}, hyperbolic {:.4}",
            cell.name, cell.recall1_euclidean, cell.recall1_hyperbolic
        ));
        cells.push(cell);
    }
    if let Some(o) = out {
        write_ablation_tsv(&cells, &o.join("ablation.tsv"))?;
    }
    Ok(cells)
}

fn write_ablation_tsv(cells: &[AblationCell], path: &Path) -> Result<()> {
    let mut text =
        String::from("cell\teta_h\teta_e\tper_class\ttau\tr1_euclidean\tr1_hyperbolic\n");
    for c in cells {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\n",
            c.name, c.eta_h, c.eta_e, c.per_class, c.tau, c.recall1_euclidean, c.recall1_hyperbolic
        ));
    }
    fs::write(path, text).map_err(|e| io_context("write", path, e))
}
