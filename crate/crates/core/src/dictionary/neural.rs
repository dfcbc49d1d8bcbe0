//! Learned dictionary: `Ψ(x) = [x ; g_θ(x̃)]` with `g_θ` a tanh MLP, trained
//! by alternating a closed-form operator fit with minibatch Adam on θ.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DictError, Lift, Normalization};
use crate::codec::{decode_f64s, encode_f64s};
use crate::datagen::SnapshotDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NnHyperparams {
    pub learning_rate: f64,
    /// Full-batch loss below which training stops.
    pub tolerance: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub hidden_layers: usize,
    /// Hidden width as a multiple of N.
    pub width_factor: usize,
    pub batch_size: usize,
    pub ridge: f64,
}

impl Default for NnHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            tolerance: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 50,
            hidden_layers: 3,
            width_factor: 2,
            batch_size: 256,
            ridge: 1e-6,
        }
    }
}

impl NnHyperparams {
    pub fn validate(&self) -> Result<(), DictError> {
        let bad = |m: &str| Err(DictError::Hyperparams(m.into()));
        if !(self.learning_rate > 0.0) || !(self.tolerance > 0.0) {
            return bad("learning rate and tolerance must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.width_factor == 0 {
            return bad("epochs, batch size and width factor must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) || !(self.ridge >= 0.0) {
            return bad("Adam epsilon must be positive and ridge non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl DenseLayer {
    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NeuralRepr", into = "NeuralRepr")]
pub struct NeuralDictionary {
    n: usize,
    pub normalization: Normalization,
    /// Hidden layers use tanh, the last layer is linear. Empty when N = 3.
    pub layers: Vec<DenseLayer>,
}

#[derive(Serialize, Deserialize)]
struct NeuralRepr {
    n: usize,
    normalization: Normalization,
    /// `[out, in]` per layer.
    layer_shapes: Vec<[usize; 2]>,
    weights: String,
}

impl TryFrom<NeuralRepr> for NeuralDictionary {
    type Error = String;

    fn try_from(r: NeuralRepr) -> Result<Self, String> {
        let mut d = NeuralDictionary {
            n: r.n,
            normalization: r.normalization,
            layers: r
                .layer_shapes
                .iter()
                .map(|&[o, i]| DenseLayer { w: DMatrix::zeros(o, i), b: DVector::zeros(o) })
                .collect(),
        };
        let p = decode_f64s(&r.weights).map_err(|e| e.to_string())?;
        if p.len() != d.n_params() {
            return Err(format!("expected {} weights, found {}", d.n_params(), p.len()));
        }
        let expect_out = r.n.checked_sub(3).ok_or("N must be at least 3")?;
        match d.layers.last() {
            Some(l) if l.w.nrows() != expect_out => return Err("output width must be N − 3".into()),
            None if expect_out != 0 => return Err("missing layers".into()),
            _ => {}
        }
        d.set_params(&p);
        Ok(d)
    }
}

impl From<NeuralDictionary> for NeuralRepr {
    fn from(d: NeuralDictionary) -> Self {
        NeuralRepr {
            n: d.n,
            normalization: d.normalization,
            layer_shapes: d.layers.iter().map(|l| [l.w.nrows(), l.w.ncols()]).collect(),
            weights: encode_f64s(&d.params()),
        }
    }
}

/// Activations kept for the backward pass.
struct Tape {
    /// Input followed by each layer's output.
    acts: Vec<DMatrix<f64>>,
}

impl NeuralDictionary {
    /// Fan-in scaled uniform initialisation, `U(±√(3/fan_in))`.
    pub fn init(n: usize, hp: &NnHyperparams, normalization: Normalization, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        if n > 3 {
            let width = hp.width_factor * n;
            let mut fan_in = 3;
            for l in 0..=hp.hidden_layers {
                let out = if l == hp.hidden_layers { n - 3 } else { width };
                // LeCun uniform: unit-variance pre-activations for tanh
                let a = (3.0 / fan_in as f64).sqrt();
                let w = DMatrix::from_fn(out, fan_in, |_, _| rng.random_range(-a..a));
                let b = DVector::from_fn(out, |_, _| rng.random_range(-a..a));
                layers.push(DenseLayer { w, b });
                fan_in = out;
            }
        }
        Self { n, normalization, layers }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::n_params).sum()
    }

    /// Flattened parameters: per layer, weights column-major then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(l.w.as_slice());
            p.extend_from_slice(l.b.as_slice());
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
    }

    fn forward(&self, xn: &DMatrix<f64>) -> Tape {
        let mut acts = vec![xn.clone()];
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            let mut h = &l.w * acts.last().unwrap();
            for mut col in h.column_iter_mut() {
                col += &l.b;
            }
            if i < last {
                h.apply(|v| *v = v.tanh());
            }
            acts.push(h);
        }
        Tape { acts }
    }

    /// Accumulates dL/dθ into `grad` given dL/d(output).
    fn backward(&self, tape: &Tape, d_out: DMatrix<f64>, grad: &mut [f64]) {
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |o, l| {
                let s = *o;
                *o += l.n_params();
                Some(s)
            })
            .collect();
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let input = &tape.acts[i];
            let gw = &delta * input.transpose();
            let gb = delta.column_sum();
            let off = offsets[i];
            for (g, v) in grad[off..off + gw.len()].iter_mut().zip(gw.as_slice()) {
                *g += v;
            }
            let ob = off + gw.len();
            for (g, v) in grad[ob..ob + gb.len()].iter_mut().zip(gb.as_slice()) {
                *g += v;
            }
            if i > 0 {
                let mut d = l.w.transpose() * &delta;
                // input is the tanh output of the previous layer
                d.zip_apply(input, |dv, h| *dv *= 1.0 - h * h);
                delta = d;
            }
        }
    }

    /// Training-space lift `[x̃ + offset ; g(x̃)]` of normalized states.
    fn psi_normalized(&self, xn: &DMatrix<f64>, offset: &[f64; 3]) -> (DMatrix<f64>, Option<Tape>) {
        let mut psi = DMatrix::zeros(self.n, xn.ncols());
        for (i, mut row) in psi.rows_mut(0, 3).row_iter_mut().enumerate() {
            row.copy_from(&xn.row(i).add_scalar(offset[i]));
        }
        if self.layers.is_empty() {
            return (psi, None);
        }
        let tape = self.forward(xn);
        psi.rows_mut(3, self.n - 3).copy_from(tape.acts.last().unwrap());
        (psi, Some(tape))
    }
}

impl Lift for NeuralDictionary {
    fn dim(&self) -> usize {
        self.n
    }

    fn lift_into(&self, x: &[f64; 3], out: &mut [f64]) {
        out[..3].copy_from_slice(x);
        if self.layers.is_empty() {
            return;
        }
        let xn = self.normalization.apply(x);
        let mut h: Vec<f64> = xn.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut next = l.b.as_slice().to_vec();
            for (c, &hc) in h.iter().enumerate() {
                for (r, nv) in next.iter_mut().enumerate() {
                    *nv += l.w[(r, c)] * hc;
                }
            }
            if i < last {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            h = next;
        }
        out[3..].copy_from_slice(&h);
    }
}

/// Training data in rescaled coordinates.
///
/// The MLP sees the normalized state `x̃`. The regression rows are only
/// rescaled, not centered (`x / scale`, and inputs by their RMS), so they
/// span the same space as the raw rows the final operator fit uses.
pub struct NnProblem {
    xn: DMatrix<f64>,
    xn_next: DMatrix<f64>,
    /// `mean / scale`, added back to `x̃` in the pass-through rows.
    offset: [f64; 3],
    uw: DMatrix<f64>,
}

fn rms_scale_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = m.ncols().max(1) as f64;
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let rms = (row.norm_squared() / cols).sqrt();
        let s = if rms > 0.0 { rms } else { 1.0 };
        row.apply(|v| *v /= s);
    }
    out
}

impl NnProblem {
    pub fn new(ds: &SnapshotDataset, normalization: &Normalization) -> Self {
        let mut uw = DMatrix::zeros(ds.u.nrows() + ds.w.nrows(), ds.len());
        uw.rows_mut(0, ds.u.nrows()).copy_from(&ds.u);
        uw.rows_mut(ds.u.nrows(), ds.w.nrows()).copy_from(&ds.w);
        Self {
            xn: normalization.apply_columns(&ds.x),
            xn_next: normalization.apply_columns(&ds.x_next),
            offset: std::array::from_fn(|i| normalization.mean[i] / normalization.scale[i]),
            uw: rms_scale_rows(&uw),
        }
    }

    pub fn len(&self) -> usize {
        self.xn.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn regressors(&self, psi: &DMatrix<f64>, uw: &DMatrix<f64>) -> DMatrix<f64> {
        let mut phi = DMatrix::zeros(psi.nrows() + uw.nrows(), psi.ncols());
        phi.rows_mut(0, psi.nrows()).copy_from(psi);
        phi.rows_mut(psi.nrows(), uw.nrows()).copy_from(uw);
        phi
    }

    /// Ridge least squares `K = argmin ‖Ψ⁺ − KΦ‖² + ridge‖K‖²`.
    pub fn fit_k(&self, dict: &NeuralDictionary, ridge: f64) -> Result<DMatrix<f64>, DictError> {
        let (psi, _) = dict.psi_normalized(&self.xn, &self.offset);
        let (psi_next, _) = dict.psi_normalized(&self.xn_next, &self.offset);
        let phi = self.regressors(&psi, &self.uw);
        let mut gram = &phi * phi.transpose();
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
        let cross = &psi_next * phi.transpose();
        // gram is symmetric, so K = cross · gram⁻¹ solves gram · Kᵀ = crossᵀ
        let kt = match gram.clone().cholesky() {
            Some(ch) => ch.solve(&cross.transpose()),
            None => gram
                .lu()
                .solve(&cross.transpose())
                .ok_or_else(|| DictError::Numeric("singular Gram matrix in operator fit".into()))?,
        };
        Ok(kt.transpose())
    }

    /// Squared one-step residual summed over all columns.
    pub fn loss(&self, dict: &NeuralDictionary, k: &DMatrix<f64>) -> f64 {
        let (psi, _) = dict.psi_normalized(&self.xn, &self.offset);
        let (psi_next, _) = dict.psi_normalized(&self.xn_next, &self.offset);
        let r = psi_next - k * self.regressors(&psi, &self.uw);
        r.norm_squared()
    }

    fn gather(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
    }

    /// Minibatch loss (summed over `cols`) and its gradient in the layout of
    /// [`NeuralDictionary::params`], with `K` held fixed.
    pub fn loss_and_grad(
        &self,
        dict: &NeuralDictionary,
        k: &DMatrix<f64>,
        cols: &[usize],
    ) -> (f64, Vec<f64>) {
        let n = dict.n;
        let xb = Self::gather(&self.xn, cols);
        let xb_next = Self::gather(&self.xn_next, cols);
        let uwb = Self::gather(&self.uw, cols);
        let (psi, tape) = dict.psi_normalized(&xb, &self.offset);
        let (psi_next, tape_next) = dict.psi_normalized(&xb_next, &self.offset);
        let r = &psi_next - k * self.regressors(&psi, &uwb);
        let loss = r.norm_squared();
        let mut grad = vec![0.0; dict.n_params()];
        if let (Some(tape), Some(tape_next)) = (tape, tape_next) {
            let d_next = &r * 2.0;
            let d_cur = -(k.columns(0, n).transpose() * &d_next);
            dict.backward(&tape_next, d_next.rows(3, n - 3).into_owned(), &mut grad);
            dict.backward(&tape, d_cur.rows(3, n - 3).into_owned(), &mut grad);
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Full-batch loss of the initial θ with its closed-form K.
    pub initial_loss: f64,
    /// Full-batch loss after each epoch.
    pub loss_history: Vec<f64>,
    /// Running minimum of `initial_loss` and `loss_history`; the kept checkpoint.
    pub best_history: Vec<f64>,
    pub best_loss: f64,
    /// 0 when the initial parameters were never improved on.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64], hp: &NnHyperparams) {
        self.t += 1;
        let c1 = 1.0 - hp.beta1.powi(self.t);
        let c2 = 1.0 - hp.beta2.powi(self.t);
        for i in 0..p.len() {
            self.m[i] = hp.beta1 * self.m[i] + (1.0 - hp.beta1) * g[i];
            self.v[i] = hp.beta2 * self.v[i] + (1.0 - hp.beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            p[i] -= hp.learning_rate * mh / (vh.sqrt() + hp.adam_eps);
        }
    }
}

/// Trains an N-dimensional neural dictionary and returns the best checkpoint.
pub fn train_nn_dictionary(
    ds: &SnapshotDataset,
    n: usize,
    hp: &NnHyperparams,
    seed: u64,
) -> Result<(NeuralDictionary, TrainingReport), DictError> {
    hp.validate()?;
    if n < 3 {
        return Err(DictError::Dimension(format!("neural dictionary needs N ≥ 3, got {n}")));
    }
    if ds.is_empty() {
        return Err(DictError::Dimension("empty training set".into()));
    }
    let normalization = Normalization::fit(&ds.x);
    let problem = NnProblem::new(ds, &normalization);
    let mut dict = NeuralDictionary::init(n, hp, normalization, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_ba7c4);

    let mut k = problem.fit_k(&dict, hp.ridge)?;
    let initial_loss = problem.loss(&dict, &k);
    if !initial_loss.is_finite() {
        return Err(DictError::TrainingDiverged { epoch: 0 });
    }
    let mut report = TrainingReport {
        initial_loss,
        loss_history: Vec::new(),
        best_history: Vec::new(),
        best_loss: initial_loss,
        best_epoch: 0,
        stopped_early: initial_loss < hp.tolerance,
    };
    if dict.layers.is_empty() || report.stopped_early {
        return Ok((dict, report));
    }

    let mut best = dict.params();
    let mut params = best.clone();
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..problem.len()).collect();
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            let (_, g) = problem.loss_and_grad(&dict, &k, batch);
            adam.step(&mut params, &g, hp);
            dict.set_params(&params);
        }
        k = problem.fit_k(&dict, hp.ridge)?;
        let loss = problem.loss(&dict, &k);
        if !loss.is_finite() {
            return Err(DictError::TrainingDiverged { epoch });
        }
        report.loss_history.push(loss);
        if loss < report.best_loss {
            report.best_loss = loss;
            report.best_epoch = epoch;
            best.copy_from_slice(&params);
        }
        report.best_history.push(report.best_loss);
        if loss < hp.tolerance {
            report.stopped_early = true;
            break;
        }
    }
    dict.set_params(&best);
    Ok((dict, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe_dict() -> NeuralDictionary {
        let hp = NnHyperparams::default();
        NeuralDictionary::init(
            6,
            &hp,
            Normalization { mean: [1.0, 2.0, 3.0], scale: [2.0, 0.5, 1.5] },
            4,
        )
    }

    #[test]
    fn shapes_follow_hyperparameters() {
        let d = probe_dict();
        let shapes: Vec<_> = d.layers.iter().map(|l| l.w.shape()).collect();
        assert_eq!(shapes, vec![(12, 3), (12, 12), (12, 12), (3, 12)]);
    }

    #[test]
    fn pointwise_lift_matches_batch_forward() {
        let d = probe_dict();
        let x = [0.3, 2.2, 4.0];
        let z = d.lift(&x);
        let xn = DMatrix::from_column_slice(3, 1, &d.normalization.apply(&x));
        let (psi, _) = d.psi_normalized(&xn, &[0.0; 3]);
        assert_eq!(&z.as_slice()[..3], &x);
        for i in 3..6 {
            assert!((z[i] - psi[(i, 0)]).abs() < 1e-14);
        }
    }

    #[test]
    fn serde_round_trip_is_bitwise() {
        let d = probe_dict();
        let back: NeuralDictionary =
            serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let hp = NnHyperparams { epochs: 0, ..Default::default() };
        assert!(hp.validate().is_err());
        let hp = NnHyperparams { learning_rate: -1.0, ..Default::default() };
        assert!(hp.validate().is_err());
    }
}
