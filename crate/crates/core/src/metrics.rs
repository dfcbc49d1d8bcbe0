//! Prediction metrics and the RBF hyperparameter grid search.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{SnapshotDataset, Trajectory};
use crate::dictionary::{build_rbf_dictionary, Dictionary, RbfKind};
use crate::edmd::{fit_koopman_with, Correction, FitOptions, KoopmanModel, PredictionResult};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("truth series is constant; range normalization undefined")]
    DegenerateRange,
    #[error("total true energy is zero")]
    ZeroEnergy,
    #[error("empty {0}")]
    Empty(&'static str),
}

/// Per-channel RMSE over the columns of `channels × K` series.
pub fn rmse(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Vec<f64>, MetricsError> {
    if pred.shape() != truth.shape() {
        return Err(MetricsError::Length(format!("{:?} vs {:?}", pred.shape(), truth.shape())));
    }
    if truth.ncols() == 0 {
        return Err(MetricsError::Empty("series"));
    }
    let k = truth.ncols() as f64;
    Ok((0..truth.nrows())
        .map(|i| {
            let s: f64 = pred.row(i).iter().zip(truth.row(i).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            (s / k).sqrt()
        })
        .collect())
}

/// Average over trajectories of the per-channel RMSE.
pub fn rmse_avg(preds: &[DMatrix<f64>], truths: &[DMatrix<f64>]) -> Result<Vec<f64>, MetricsError> {
    if preds.len() != truths.len() {
        return Err(MetricsError::Length(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty("trajectory list"));
    }
    let mut acc = vec![0.0; truths[0].nrows()];
    for (p, t) in preds.iter().zip(truths) {
        let r = rmse(p, t)?;
        if r.len() != acc.len() {
            return Err(MetricsError::Length("channel count differs between trajectories".into()));
        }
        acc.iter_mut().zip(r).for_each(|(a, v)| *a += v);
    }
    let n_sim = preds.len() as f64;
    Ok(acc.into_iter().map(|a| a / n_sim).collect())
}

/// RMSE as a percentage of the true series' range.
pub fn pct_rmse(pred: &[f64], truth: &[f64]) -> Result<f64, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::Length(format!("{} vs {}", pred.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty("series"));
    }
    let (lo, hi) = truth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return Err(MetricsError::DegenerateRange);
    }
    let ms: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / truth.len() as f64;
    Ok(100.0 * ms.sqrt() / (hi - lo))
}

/// Relative error of the summed output energy, in percent.
pub fn energy_error_pct(pred: &DMatrix<f64>, truth: &DMatrix<f64>, dt: f64) -> Result<f64, MetricsError> {
    if pred.shape() != truth.shape() {
        return Err(MetricsError::Length(format!("{:?} vs {:?}", pred.shape(), truth.shape())));
    }
    let e_true = truth.sum() * dt;
    if e_true == 0.0 {
        return Err(MetricsError::ZeroEnergy);
    }
    let e_pred = pred.sum() * dt;
    Ok(100.0 * (e_pred - e_true).abs() / e_true.abs())
}

/// Sum of both output rows (total electrical power) as a flat series.
pub fn total_power(y: &DMatrix<f64>) -> Vec<f64> {
    y.row_sum().iter().copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dict_kind: String,
    pub n: usize,
    pub eps: Option<f64>,
    pub n_sim: usize,
    /// Trajectories whose prediction diverged; excluded from the averages.
    pub n_diverged: usize,
    pub rmse_avg: [f64; 3],
    /// Percentage RMSE per state, averaged over trajectories.
    pub pct_rmse: [f64; 3],
    pub pct_power: f64,
    pub energy_error_pct: f64,
    pub ci: Option<f64>,
}

pub const REPORT_CSV_HEADER: &str = "dict_kind,N,eps,rmse_pe,rmse_pc,rmse_tcab,pct_power,energy_err_pct,ci";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.dict_kind,
            self.n,
            opt(self.eps),
            self.rmse_avg[0],
            self.rmse_avg[1],
            self.rmse_avg[2],
            self.pct_power,
            self.energy_error_pct,
            opt(self.ci)
        )
    }
}

/// Predictions on a test set and the metrics derived from them.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// One entry per trajectory; `None` where the rollout diverged.
    pub predictions: Vec<Option<PredictionResult>>,
}

fn nan3() -> [f64; 3] {
    [f64::NAN; 3]
}

/// Replays every test trajectory through the model and aggregates metrics
/// over the trajectories that did not diverge.
pub fn evaluate_model(model: &KoopmanModel, test: &[Trajectory], correction: Correction) -> Evaluation {
    let predictions: Vec<Option<PredictionResult>> = test
        .par_iter()
        .map(|t| model.predict_trajectory(t, correction).ok())
        .collect();
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    let mut pct = [0.0; 3];
    let mut pct_power = 0.0;
    let mut energy = 0.0;
    let mut n_pct = 0usize;
    for (p, t) in predictions.iter().zip(test) {
        let Some(p) = p else { continue };
        let truth = t.state_matrix();
        if let (Ok(a), Ok(b), Ok(c)) = (
            pct_rmse(p.states.row(0).transpose().as_slice(), truth.row(0).transpose().as_slice()),
            pct_rmse(p.states.row(1).transpose().as_slice(), truth.row(1).transpose().as_slice()),
            pct_rmse(p.states.row(2).transpose().as_slice(), truth.row(2).transpose().as_slice()),
        ) {
            let y = t.output_matrix();
            if let (Ok(pp), Ok(en)) = (
                pct_rmse(&total_power(&p.outputs), &total_power(&y)),
                energy_error_pct(&p.outputs, &y, t.dt),
            ) {
                pct[0] += a;
                pct[1] += b;
                pct[2] += c;
                pct_power += pp;
                energy += en;
                n_pct += 1;
            }
        }
        preds.push(p.states.clone());
        truths.push(truth);
    }
    let n_diverged = test.len() - preds.len();
    let rmse = rmse_avg(&preds, &truths).map_or(nan3(), |v| [v[0], v[1], v[2]]);
    let d = n_pct.max(1) as f64;
    let (pct, pct_power, energy) = if n_pct == 0 {
        (nan3(), f64::NAN, f64::NAN)
    } else {
        (pct.map(|v| v / d), pct_power / d, energy / d)
    };
    Evaluation {
        report: MetricsReport {
            dict_kind: model.dictionary.kind_name().to_string(),
            n: model.n(),
            eps: model.dictionary.eps(),
            n_sim: test.len(),
            n_diverged,
            rmse_avg: rmse,
            pct_rmse: pct,
            pct_power,
            energy_error_pct: energy,
            ci: None,
        },
        predictions,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneGrid {
    pub eps: Vec<f64>,
    pub n: Vec<usize>,
    pub kinds: Vec<RbfKind>,
}

impl TuneGrid {
    pub fn validate(&self) -> Result<(), String> {
        if self.eps.is_empty() || self.n.is_empty() || self.kinds.is_empty() {
            return Err("tuning grid must be non-empty in every axis".into());
        }
        Ok(())
    }

    /// Grid points in table order: kinds, then N, then ε.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for (ki, &kind) in self.kinds.iter().enumerate() {
            for &n in &self.n {
                for &eps in &self.eps {
                    out.push(GridPoint { kind, kind_index: ki, n, eps });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub kind: RbfKind,
    /// Position of `kind` in the grid's kind list; used for tie-breaking.
    pub kind_index: usize,
    pub n: usize,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub point: GridPoint,
    /// Sum over states of rmse_avg divided by the training standard deviation.
    pub score: Option<f64>,
    pub rmse_avg: Option<[f64; 3]>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: GridPoint,
    pub best_score: f64,
    pub table: Vec<ScoreRow>,
}

pub const TUNING_CSV_HEADER: &str = "dict_kind,N,eps,score,rmse_pe,rmse_pc,rmse_tcab,error";

impl TuneResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TUNING_CSV_HEADER);
        s.push('\n');
        for r in &self.table {
            let rm = r.rmse_avg.map(|v| v.map(|x| x.to_string())).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.point.kind.as_str(),
                r.point.n,
                r.point.eps,
                opt(r.score),
                rm[0],
                rm[1],
                rm[2],
                r.error.as_deref().unwrap_or("").replace(',', ";")
            ));
        }
        s
    }
}

fn score_point(
    train: &SnapshotDataset,
    test: &[Trajectory],
    p: &GridPoint,
    std: &[f64; 3],
    seed: u64,
    opts: &FitOptions,
) -> ScoreRow {
    let fail = |e: String| ScoreRow { point: *p, score: None, rmse_avg: None, error: Some(e) };
    let dict = match build_rbf_dictionary(&train.x, p.n, p.kind, p.eps, seed) {
        Ok(d) => d,
        Err(e) => return fail(e.to_string()),
    };
    let model = match fit_koopman_with(train, Dictionary::Rbf(dict), opts) {
        Ok(m) => m,
        Err(e) => return fail(e.to_string()),
    };
    let ev = evaluate_model(&model, test, Correction::On);
    if ev.report.n_diverged > 0 {
        return fail(format!("prediction diverged on {} trajectories", ev.report.n_diverged));
    }
    let r = ev.report.rmse_avg;
    let score: f64 = (0..3).map(|i| r[i] / std[i]).sum();
    if !score.is_finite() {
        return fail("non-finite score".into());
    }
    ScoreRow { point: *p, score: Some(score), rmse_avg: Some(r), error: None }
}

/// Fits one RBF model per grid point and picks the lowest normalized test
/// RMSE. Ties go to the smallest N, then the smallest ε, then the earliest kind.
pub fn grid_search(
    train: &SnapshotDataset,
    test: &[Trajectory],
    grid: &TuneGrid,
    seed: u64,
    opts: &FitOptions,
) -> Result<TuneResult, String> {
    grid.validate()?;
    let m = train.len().max(1) as f64;
    let std: [f64; 3] = std::array::from_fn(|i| {
        let row = train.x.row(i);
        let mu = row.sum() / m;
        let s = (row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m).sqrt();
        if s > 0.0 { s } else { 1.0 }
    });
    let table: Vec<ScoreRow> = grid
        .points()
        .par_iter()
        .map(|p| score_point(train, test, p, &std, seed, opts))
        .collect();
    let key = |r: &ScoreRow| (r.point.n, r.point.eps, r.point.kind_index);
    let best = table
        .iter()
        .filter_map(|r| r.score.map(|s| (s, r)))
        .min_by(|(sa, ra), (sb, rb)| {
            sa.total_cmp(sb).then_with(|| {
                let (a, b) = (key(ra), key(rb));
                a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2))
            })
        })
        .ok_or_else(|| "every grid point failed".to_string())?;
    Ok(TuneResult { best: best.1.point, best_score: best.0, table: table.clone() })
}
