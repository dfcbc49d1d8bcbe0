//! Experiment orchestration behind the `hvac-koopman` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{
    assemble_snapshots, params_hash, read_trajectory, simulate_batch, simulate_closed_loop,
    write_trajectory, DataError, DatasetManifest, ExcitationSpec, ManifestEntry, Role,
    SnapshotDataset, Trajectory,
};
use crate::dictionary::{
    build_polynomial_dictionary, build_rbf_dictionary, polynomial_dim, train_nn_dictionary,
    Dictionary, NnHyperparams, RbfKind, TrainingReport,
};
use crate::edmd::{
    consistency_index, fit_koopman_with, fit_residuals, Correction, EdmdError, FitOptions,
    KoopmanModel, PredictionResult,
};
use crate::metrics::{
    energy_error_pct, evaluate_model, grid_search, pct_rmse, total_power, MetricsReport,
    TuneGrid, REPORT_CSV_HEADER,
};
use crate::plant::{load_drive_cycle, ControlBounds, PiGains, PlantParams, PlantState};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } | DataError::Format { .. } => CliError::Io(e.to_string()),
            DataError::Spec(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train_count: usize,
    pub train_duration_s: usize,
    pub test_count: usize,
    pub test_duration_s: usize,
    /// Template for every trajectory; `duration_s` and `rng_seed` are
    /// overridden per trajectory.
    pub excitation: ExcitationSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_count: 20,
            train_duration_s: 2000,
            test_count: 20,
            test_duration_s: 1500,
            excitation: ExcitationSpec::default(),
        }
    }
}

fn default_eps() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DictionarySpec {
    State,
    Polynomial {
        degrees: Vec<usize>,
    },
    Rbf {
        rbf: RbfKind,
        n: Vec<usize>,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Neural {
        n: Vec<usize>,
        #[serde(default)]
        hyperparams: NnHyperparams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictionConfig {
    pub correction: Correction,
    pub fit: FitOptions,
    /// Number of test trajectories whose traces are written per model.
    pub trace_count: usize,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        Self { correction: Correction::On, fit: FitOptions::default(), trace_count: 3 }
    }
}

fn default_x0() -> [f64; 3] {
    [450.0, 1300.0, 35.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// `t_s,v_kmh` speed profile, relative to the config file.
    pub cycle: PathBuf,
    pub t_ac_in: f64,
    pub omega_blw: f64,
    pub t_ref: f64,
    #[serde(default = "default_x0")]
    pub x0: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub gains: PiGains,
    pub bounds: ControlBounds,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { gains: PiGains::default(), bounds: ControlBounds::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Plant parameter file; built-in defaults when absent.
    #[serde(default)]
    pub plant_params: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    pub dictionaries: Vec<DictionarySpec>,
    #[serde(default)]
    pub prediction: PredictionConfig,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
    /// Model labels replayed by `cycle`.
    #[serde(default = "default_cycle_models")]
    pub cycle_models: Vec<String>,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub tuning: Option<TuneGrid>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_cycle_models() -> Vec<String> {
    vec!["thin_plate_spline_n35".into()]
}

impl ExperimentConfig {
    /// Parses a config; relative paths are resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        cfg.plant_params = cfg.plant_params.as_deref().map(abs);
        cfg.out_dir = abs(&cfg.out_dir);
        for s in &mut cfg.scenarios {
            s.cycle = abs(&s.cycle);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| Err(CliError::Config(m));
        if let Some(p) = &self.plant_params {
            if !p.exists() {
                return cfg(format!("plant parameter file {} does not exist", p.display()));
            }
        }
        for s in &self.scenarios {
            if !s.cycle.exists() {
                return cfg(format!("scenario {}: cycle file {} does not exist", s.name, s.cycle.display()));
            }
        }
        for d in &self.dictionaries {
            let list: &[usize] = match d {
                DictionarySpec::State => &[],
                DictionarySpec::Polynomial { degrees } => degrees,
                DictionarySpec::Rbf { n, .. } | DictionarySpec::Neural { n, .. } => n,
            };
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return cfg("dimension lists must be strictly ascending".into());
            }
            if let DictionarySpec::Neural { hyperparams, .. } = d {
                hyperparams.validate().map_err(|e| CliError::Config(e.to_string()))?;
            }
        }
        let mut spec = self.data.excitation.clone();
        spec.duration_s = 1;
        spec.validate()?;
        if let Some(g) = &self.tuning {
            g.validate().map_err(CliError::Config)?;
        }
        Ok(())
    }

    /// 200 training trajectories of 8500 s and 200 test trajectories of 1500 s.
    pub fn paper_scale(&mut self) {
        self.data.train_count = 200;
        self.data.train_duration_s = 8500;
        self.data.test_count = 200;
        self.data.test_duration_s = 1500;
    }

    pub fn plant(&self) -> Result<PlantParams, CliError> {
        match &self.plant_params {
            Some(p) => PlantParams::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
            None => Ok(PlantParams::default()),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }
}

/// Writes every train and test trajectory plus the manifest.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<DatasetManifest, CliError> {
    cfg.validate()?;
    let p = cfg.plant()?;
    let d = &cfg.data;
    let mut entries = Vec::new();
    let dir = cfg.data_dir();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    for (role, count, dur) in [
        (Role::Train, d.train_count, d.train_duration_s),
        (Role::Test, d.test_count, d.test_duration_s),
    ] {
        let spec = ExcitationSpec { duration_s: dur, ..d.excitation.clone() };
        let batch = simulate_batch(role, count, &spec, cfg.seed, &p)?;
        for (i, t) in batch.iter().enumerate() {
            let file = format!("{}_{i:03}.csv", role.as_str());
            write_trajectory(&dir.join(&file), t)?;
            entries.push(ManifestEntry { file, role, index: i, duration_s: dur });
        }
    }
    let manifest = DatasetManifest {
        seed: cfg.seed,
        plant_params_sha256: params_hash(&p),
        excitation: d.excitation.clone(),
        trajectories: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_file(&dir.join("manifest.json"), &json)?;
    Ok(manifest)
}

pub fn load_manifest(cfg: &ExperimentConfig) -> Result<DatasetManifest, CliError> {
    let path = cfg.data_dir().join("manifest.json");
    serde_json::from_str(&read_file(&path)?).map_err(|e| io_err(&path, e))
}

pub fn load_role(cfg: &ExperimentConfig, m: &DatasetManifest, role: Role) -> Result<Vec<Trajectory>, CliError> {
    let dir = cfg.data_dir();
    let files: Vec<_> = m.files(role).collect();
    files
        .par_iter()
        .map(|e| read_trajectory(&dir.join(&e.file)).map_err(CliError::from))
        .collect()
}

/// One concrete model to fit, expanded from a [`DictionarySpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub label: String,
    pub build: BuildSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuildSpec {
    State,
    Polynomial(usize),
    Rbf { kind: RbfKind, n: usize, eps: f64 },
    Neural { n: usize, hp: NnHyperparams },
}

fn eps_label(eps: f64) -> String {
    eps.to_string().replace('.', "p")
}

pub fn expand_models(specs: &[DictionarySpec]) -> Vec<ModelSpec> {
    let mut out = Vec::new();
    for s in specs {
        match s {
            DictionarySpec::State => out.push(ModelSpec { label: "state_n3".into(), build: BuildSpec::State }),
            DictionarySpec::Polynomial { degrees } => {
                for &m in degrees {
                    out.push(ModelSpec {
                        label: format!("polynomial_m{m}_n{}", polynomial_dim(m)),
                        build: BuildSpec::Polynomial(m),
                    });
                }
            }
            DictionarySpec::Rbf { rbf, n, eps } => {
                for &n in n {
                    let label = if rbf.uses_eps() {
                        format!("{}_n{n}_eps{}", rbf.as_str(), eps_label(*eps))
                    } else {
                        format!("{}_n{n}", rbf.as_str())
                    };
                    out.push(ModelSpec { label, build: BuildSpec::Rbf { kind: *rbf, n, eps: *eps } });
                }
            }
            DictionarySpec::Neural { n, hyperparams } => {
                for &n in n {
                    out.push(ModelSpec {
                        label: format!("neural_n{n}"),
                        build: BuildSpec::Neural { n, hp: hyperparams.clone() },
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub label: String,
    pub file: Option<String>,
    pub dict_kind: String,
    pub n: usize,
    pub eps: Option<f64>,
    /// Relative Frobenius residual of the lifted state fit.
    pub fit_residual: Option<f64>,
    /// Relative Frobenius residual of the output fit.
    pub output_residual: Option<f64>,
    pub ci: Option<f64>,
    pub nn: Option<TrainingReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub models: Vec<TrainLogEntry>,
}

struct Trained {
    entry: TrainLogEntry,
    model: Option<KoopmanModel>,
}

fn build_dictionary(
    spec: &BuildSpec,
    train: &SnapshotDataset,
    seed: u64,
) -> Result<(Dictionary, Option<TrainingReport>), String> {
    match spec {
        BuildSpec::State => Ok((Dictionary::State, None)),
        BuildSpec::Polynomial(m) => build_polynomial_dictionary(&train.x, *m)
            .map(|d| (Dictionary::Polynomial(d), None))
            .map_err(|e| e.to_string()),
        BuildSpec::Rbf { kind, n, eps } => build_rbf_dictionary(&train.x, *n, *kind, *eps, seed)
            .map(|d| (Dictionary::Rbf(d), None))
            .map_err(|e| e.to_string()),
        BuildSpec::Neural { n, hp } => train_nn_dictionary(train, *n, hp, seed)
            .map(|(d, r)| (Dictionary::Neural(d), Some(r)))
            .map_err(|e| e.to_string()),
    }
}

fn train_one(spec: &ModelSpec, train: &SnapshotDataset, seed: u64, fit: &FitOptions) -> Trained {
    let started = Instant::now();
    let mut entry = TrainLogEntry {
        label: spec.label.clone(),
        file: None,
        dict_kind: String::new(),
        n: 0,
        eps: None,
        fit_residual: None,
        output_residual: None,
        ci: None,
        nn: None,
        error: None,
    };
    let result = build_dictionary(&spec.build, train, seed).and_then(|(dict, nn)| {
        entry.dict_kind = dict.kind_name().into();
        entry.n = crate::dictionary::Lift::dim(&dict);
        entry.eps = dict.eps();
        entry.nn = nn;
        let model = fit_koopman_with(train, dict, fit).map_err(|e| e.to_string())?;
        let (r, ry) = fit_residuals(&model, train);
        entry.fit_residual = Some(r);
        entry.output_residual = Some(ry);
        entry.ci = consistency_index(train, &model.dictionary, fit.rcond).ok();
        Ok(model)
    });
    // Wall time is reported on stderr only so that written files stay reproducible.
    eprintln!("trained {} in {:.2} s", spec.label, started.elapsed().as_secs_f64());
    match result {
        Ok(model) => {
            entry.file = Some(format!("{}.json", spec.label));
            Trained { entry, model: Some(model) }
        }
        Err(e) => {
            entry.error = Some(e);
            Trained { entry, model: None }
        }
    }
}

/// Fits every configured model on the training trajectories.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainLog, CliError> {
    cfg.validate()?;
    let manifest = load_manifest(cfg)?;
    let train = load_role(cfg, &manifest, Role::Train)?;
    let ds = assemble_snapshots(&train)?;
    let specs = expand_models(&cfg.dictionaries);
    let fit = cfg.prediction.fit;
    let trained: Vec<Trained> = specs.par_iter().map(|s| train_one(s, &ds, cfg.seed, &fit)).collect();
    let dir = cfg.model_dir();
    for t in &trained {
        if let (Some(m), Some(f)) = (&t.model, &t.entry.file) {
            write_file(&dir.join(f), &m.to_json())?;
        }
    }
    let log = TrainLog { models: trained.into_iter().map(|t| t.entry).collect() };
    write_file(&dir.join("training_log.json"), &serde_json::to_string_pretty(&log).expect("log serialises"))?;
    Ok(log)
}

pub fn load_train_log(cfg: &ExperimentConfig) -> Result<TrainLog, CliError> {
    let path = cfg.model_dir().join("training_log.json");
    serde_json::from_str(&read_file(&path)?).map_err(|e| io_err(&path, e))
}

pub fn load_model(cfg: &ExperimentConfig, label: &str) -> Result<KoopmanModel, CliError> {
    let path = cfg.model_dir().join(format!("{label}.json"));
    let text = read_file(&path)?;
    KoopmanModel::from_json(&text).map_err(|e| match e {
        EdmdError::Json(_) | EdmdError::Codec(_) | EdmdError::Shape(_) => io_err(&path, e),
        other => CliError::Numeric(other.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReport {
    pub label: String,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub correction: Correction,
    pub n_test: usize,
    pub models: Vec<LabeledReport>,
}

pub const TRACE_HEADER: &str =
    "t_s,p_e_true,p_e_pred,p_c_true,p_c_pred,t_cab_true,t_cab_pred,p_total_true,p_total_pred";

/// Side-by-side truth and prediction, one row per time step.
pub fn trace_csv(truth: &Trajectory, pred: &PredictionResult) -> String {
    let x = truth.state_matrix();
    let y = total_power(&truth.output_matrix());
    let yp = total_power(&pred.outputs);
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for k in 0..x.ncols() {
        let cells = [
            k as f64 * truth.dt,
            x[(0, k)],
            pred.states[(0, k)],
            x[(1, k)],
            pred.states[(1, k)],
            x[(2, k)],
            pred.states[(2, k)],
            y.get(k).copied().unwrap_or(f64::NAN),
            yp.get(k).copied().unwrap_or(f64::NAN),
        ];
        let row: Vec<String> = cells.iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Scores every trained model on the test trajectories.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvaluationSummary, CliError> {
    cfg.validate()?;
    let manifest = load_manifest(cfg)?;
    let test = load_role(cfg, &manifest, Role::Test)?;
    let log = load_train_log(cfg)?;
    let correction = cfg.prediction.correction;
    let mut rows = Vec::new();
    let mut csv = String::from(REPORT_CSV_HEADER);
    csv.push('\n');
    for entry in &log.models {
        if let Some(err) = &entry.error {
            rows.push(LabeledReport { label: entry.label.clone(), report: None, error: Some(err.clone()) });
            csv.push_str(&format!("{},{},{},,,,,,\n", entry.dict_kind, entry.n, entry.eps.map_or(String::new(), |e| e.to_string())));
            continue;
        }
        let model = load_model(cfg, &entry.label)?;
        let ev = evaluate_model(&model, &test, correction);
        if ev.report.n_diverged > 0 {
            eprintln!("warning: {} diverged on {} of {} test trajectories", entry.label, ev.report.n_diverged, test.len());
        }
        let mut report = ev.report;
        report.ci = entry.ci;
        csv.push_str(&report.csv_row());
        csv.push('\n');
        for (i, (t, p)) in test.iter().zip(&ev.predictions).enumerate().take(cfg.prediction.trace_count) {
            if let Some(p) = p {
                let path = cfg.out_dir.join("traces").join(&entry.label).join(format!("test_{i:03}.csv"));
                write_file(&path, &trace_csv(t, p))?;
            }
        }
        rows.push(LabeledReport { label: entry.label.clone(), report: Some(report), error: None });
    }
    let summary = EvaluationSummary { correction, n_test: test.len(), models: rows };
    write_file(&cfg.out_dir.join("metrics.json"), &serde_json::to_string_pretty(&summary).expect("metrics serialise"))?;
    write_file(&cfg.out_dir.join("rmse_vs_N.csv"), &csv)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub scenario: String,
    pub model: String,
    pub t_ac_in: f64,
    pub omega_blw: f64,
    pub t_ref: f64,
    pub pct_rmse: [f64; 3],
    pub pct_power: f64,
    pub energy_error_pct: f64,
}

pub const CYCLE_CSV_HEADER: &str =
    "scenario,model,t_ac_in,omega_blw,t_ref,pct_pe,pct_pc,pct_tcab,pct_power,energy_err_pct";

/// Closed-loop truth on the plant, then an open-loop replay of the recorded
/// inputs through the model.
pub fn run_cycle(
    model: &KoopmanModel,
    truth: &Trajectory,
    correction: Correction,
) -> Result<(PredictionResult, [f64; 3], f64, f64), CliError> {
    let pred = model
        .predict_trajectory(truth, correction)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let x = truth.state_matrix();
    let y = truth.output_matrix();
    let num = |e: crate::metrics::MetricsError| CliError::Numeric(e.to_string());
    let row = |m: &DMatrix<f64>, i: usize| m.row(i).iter().copied().collect::<Vec<_>>();
    let pct = [
        pct_rmse(&row(&pred.states, 0), &row(&x, 0)).map_err(num)?,
        pct_rmse(&row(&pred.states, 1), &row(&x, 1)).map_err(num)?,
        pct_rmse(&row(&pred.states, 2), &row(&x, 2)).map_err(num)?,
    ];
    let pct_power = pct_rmse(&total_power(&pred.outputs), &total_power(&y)).map_err(num)?;
    let energy = energy_error_pct(&pred.outputs, &y, truth.dt).map_err(num)?;
    Ok((pred, pct, pct_power, energy))
}

pub fn simulate_scenario(cfg: &ExperimentConfig, s: &Scenario, p: &PlantParams) -> Result<Trajectory, CliError> {
    let cycle = load_drive_cycle(&s.cycle).map_err(|e| io_err(&s.cycle, e))?;
    let w = cycle.disturbances(s.t_ac_in, s.omega_blw);
    let x0 = PlantState::from_array(s.x0);
    simulate_closed_loop(x0, &w, s.t_ref, &cfg.controller.gains, &cfg.controller.bounds, p)
        .map_err(|e| CliError::Numeric(format!("scenario {}: {e}", s.name)))
}

/// Drive-cycle validation for every scenario and cycle model.
pub fn cmd_cycle(cfg: &ExperimentConfig) -> Result<Vec<CycleRow>, CliError> {
    cfg.validate()?;
    if cfg.scenarios.is_empty() {
        return Err(CliError::Config("no scenarios configured".into()));
    }
    let p = cfg.plant()?;
    let models: Vec<(String, KoopmanModel)> = cfg
        .cycle_models
        .iter()
        .map(|l| load_model(cfg, l).map(|m| (l.clone(), m)))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut csv = String::from(CYCLE_CSV_HEADER);
    csv.push('\n');
    for s in &cfg.scenarios {
        let truth = simulate_scenario(cfg, s, &p)?;
        for (label, model) in &models {
            let (pred, pct, pct_power, energy) = run_cycle(model, &truth, cfg.prediction.correction)?;
            let path = cfg.out_dir.join("cycle_traces").join(format!("{}_{label}.csv", s.name));
            write_file(&path, &trace_csv(&truth, &pred))?;
            let row = CycleRow {
                scenario: s.name.clone(),
                model: label.clone(),
                t_ac_in: s.t_ac_in,
                omega_blw: s.omega_blw,
                t_ref: s.t_ref,
                pct_rmse: pct,
                pct_power,
                energy_error_pct: energy,
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                row.scenario, row.model, row.t_ac_in, row.omega_blw, row.t_ref,
                pct[0], pct[1], pct[2], pct_power, energy
            ));
            rows.push(row);
        }
    }
    write_file(&cfg.out_dir.join("cycle_report.csv"), &csv)?;
    Ok(rows)
}

/// RBF hyperparameter grid search on the generated data.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<crate::metrics::TuneResult, CliError> {
    cfg.validate()?;
    let grid = cfg.tuning.clone().ok_or_else(|| CliError::Config("no tuning grid configured".into()))?;
    let manifest = load_manifest(cfg)?;
    let train = assemble_snapshots(&load_role(cfg, &manifest, Role::Train)?)?;
    let test = load_role(cfg, &manifest, Role::Test)?;
    let result = grid_search(&train, &test, &grid, cfg.seed, &cfg.prediction.fit).map_err(CliError::Numeric)?;
    write_file(&cfg.out_dir.join("tuning.csv"), &result.to_csv())?;
    write_file(&cfg.out_dir.join("tuning.json"), &serde_json::to_string_pretty(&result).expect("tuning serialises"))?;
    Ok(result)
}

#[derive(Debug, Parser)]
#[command(name = "hvac-koopman", version, about = "Koopman / eDMD models of an EV air-conditioning plant")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// 200 × 8500 s training and 200 × 1500 s test trajectories.
    #[arg(long, global = true)]
    pub paper_scale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate train/test trajectories and write the dataset manifest.
    Generate,
    /// Fit every configured dictionary and write model files.
    Train,
    /// Score trained models on the test set.
    Evaluate,
    /// Closed-loop drive-cycle validation.
    Cycle,
    /// RBF hyperparameter grid search.
    Sweep,
}

/// Loads the config and applies command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        CliError::Io(m) => CliError::Config(m),
        other => other,
    })?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.paper_scale {
        cfg.paper_scale();
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli)?;
    match cli.command {
        Command::Generate => {
            let m = cmd_generate(&cfg)?;
            println!("wrote {} trajectories to {}", m.trajectories.len(), cfg.data_dir().display());
        }
        Command::Train => {
            let log = cmd_train(&cfg)?;
            for e in &log.models {
                match &e.error {
                    None => println!("{:<32} N={:<4} residual={:.3e} ci={}", e.label, e.n, e.fit_residual.unwrap_or(f64::NAN), e.ci.map_or("-".into(), |c| format!("{c:.3e}"))),
                    Some(err) => println!("{:<32} failed: {err}", e.label),
                }
            }
        }
        Command::Evaluate => {
            let s = cmd_evaluate(&cfg)?;
            for r in &s.models {
                match &r.report {
                    Some(m) => println!(
                        "{:<32} rmse p_e={:.4} p_c={:.4} T={:.4} diverged={}",
                        r.label, m.rmse_avg[0], m.rmse_avg[1], m.rmse_avg[2], m.n_diverged
                    ),
                    None => println!("{:<32} skipped: {}", r.label, r.error.as_deref().unwrap_or("")),
                }
            }
        }
        Command::Cycle => {
            for r in cmd_cycle(&cfg)? {
                println!(
                    "{} / {}: pct p_e={:.2}% p_c={:.2}% T={:.2}% power={:.2}% energy={:.2}%",
                    r.scenario, r.model, r.pct_rmse[0], r.pct_rmse[1], r.pct_rmse[2], r.pct_power, r.energy_error_pct
                );
            }
        }
        Command::Sweep => {
            let r = cmd_sweep(&cfg)?;
            println!("best: {} N={} eps={} score={:.5}", r.best.kind.as_str(), r.best.n, r.best.eps, r.best_score);
        }
    }
    Ok(())
}
