//! Least-squares Koopman operators in lifted coordinates, corrected rollout and
//! the consistency index.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, MatrixPayload};
use crate::datagen::{SnapshotDataset, Trajectory};
use crate::dictionary::{Dictionary, Lift};

pub const DEFAULT_RCOND: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EdmdError {
    #[error("underdetermined fit: M = {m} snapshots but N = {n} lifted states plus {extra} input channels")]
    Underdetermined { m: usize, n: usize, extra: usize },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("SVD did not converge")]
    SvdFailed,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("prediction diverged at step {step}")]
    Diverged { step: usize },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Moore–Penrose pseudoinverse; singular values below `rcond · σ_max` are
/// treated as zero.
pub fn pinv(m: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>, EdmdError> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(DMatrix::zeros(c, r));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(EdmdError::NonFinite("pseudoinverse input"));
    }
    // Very wide or tall inputs are first reduced by a thin QR so the SVD runs
    // on a square factor with the same singular values.
    if c > 4 * r {
        let qr = m.transpose().qr();
        let (q, rr) = (qr.q(), qr.r());
        return Ok(q * pinv_svd(&rr.transpose(), rcond)?);
    }
    if r > 4 * c {
        let qr = m.clone().qr();
        let (q, rr) = (qr.q(), qr.r());
        return Ok(pinv_svd(&rr, rcond)? * q.transpose());
    }
    pinv_svd(m, rcond)
}

/// One-sided Jacobi SVD of a matrix with at least as many rows as columns.
/// Returns `(U·Σ, σ, V)`; the columns of `U·Σ` are mutually orthogonal.
fn jacobi_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>), EdmdError> {
    let n = m.ncols();
    let mut us = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (us.column(p), us.column(q));
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut us, &mut v] {
                    for i in 0..mat.nrows() {
                        let (a, b) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * a - s * b;
                        mat[(i, q)] = s * a + c * b;
                    }
                }
            }
        }
        if !rotated {
            let sigma = us.column_iter().map(|c| c.norm()).collect();
            return Ok((us, sigma, v));
        }
    }
    Err(EdmdError::SvdFailed)
}

fn pinv_svd(m: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>, EdmdError> {
    if m.nrows() < m.ncols() {
        return Ok(pinv_svd(&m.transpose(), rcond)?.transpose());
    }
    let (us, sigma, v) = jacobi_svd(m)?;
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let cut = rcond * smax;
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (i, &s) in sigma.iter().enumerate() {
        if s > cut && s > 0.0 {
            // u_i = (UΣ)_i / σ_i, so the term is v_i u_iᵀ / σ_i
            out += v.column(i) * us.column(i).transpose() / (s * s);
        }
    }
    Ok(out)
}

fn stack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

/// How outputs are mapped from lifted coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMap {
    /// `y = E z`.
    StateOnly,
    /// `y = E z + F_u u + F_w w`, with the inputs held at the state's time.
    #[default]
    WithInputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub rcond: f64,
    pub output_map: OutputMap,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { rcond: DEFAULT_RCOND, output_map: OutputMap::WithInputs }
    }
}

/// `[A B D]` and the lifted data they were fit on.
#[derive(Debug, Clone)]
pub struct Operators {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub z_next: DMatrix<f64>,
    /// `pinv([Z; U; W])`.
    pub regressor_pinv: DMatrix<f64>,
}

impl Operators {
    /// `Z⁺ − A Z − B U − D W`.
    pub fn residual(&self, ds: &SnapshotDataset) -> DMatrix<f64> {
        &self.z_next - &self.a * &self.z - &self.b * &ds.u - &self.d * &ds.w
    }
}

fn lifted_data(ds: &SnapshotDataset, lift: &dyn Lift) -> Result<(DMatrix<f64>, DMatrix<f64>), EdmdError> {
    let n = lift.dim();
    let extra = ds.u.nrows() + ds.w.nrows();
    if ds.len() < n + extra {
        return Err(EdmdError::Underdetermined { m: ds.len(), n, extra });
    }
    let z = lift.lift_columns(&ds.x);
    let z_next = lift.lift_columns(&ds.x_next);
    if z.iter().chain(z_next.iter()).any(|v| !v.is_finite()) {
        return Err(EdmdError::NonFinite("lifted snapshots"));
    }
    Ok((z, z_next))
}

/// `[A B D] = Z⁺ · pinv([Z; U; W])`. `U` and `W` may have zero rows.
pub fn fit_operators(ds: &SnapshotDataset, lift: &dyn Lift, rcond: f64) -> Result<Operators, EdmdError> {
    let (z, z_next) = lifted_data(ds, lift)?;
    let n = z.nrows();
    let (nu, nw) = (ds.u.nrows(), ds.w.nrows());
    let regressor_pinv = pinv(&stack(&[&z, &ds.u, &ds.w]), rcond)?;
    let k = &z_next * &regressor_pinv;
    Ok(Operators {
        a: k.columns(0, n).into_owned(),
        b: k.columns(n, nu).into_owned(),
        d: k.columns(n + nu, nw).into_owned(),
        z,
        z_next,
        regressor_pinv,
    })
}

/// `E = Y · pinv(Z)`.
pub fn fit_output_map(z: &DMatrix<f64>, y: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>, EdmdError> {
    if z.ncols() != y.ncols() {
        return Err(EdmdError::Shape(format!("Z has {} columns, Y has {}", z.ncols(), y.ncols())));
    }
    if z.ncols() < z.nrows() {
        return Err(EdmdError::Underdetermined { m: z.ncols(), n: z.nrows(), extra: 0 });
    }
    Ok(y * pinv(z, rcond)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanModel {
    pub dictionary: Dictionary,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    /// Output feedthrough of inputs; zero columns under [`OutputMap::StateOnly`].
    pub f_u: DMatrix<f64>,
    pub f_w: DMatrix<f64>,
    pub output_map: OutputMap,
}

/// Fits the lifted operators and the output map.
pub fn fit_koopman(ds: &SnapshotDataset, dictionary: Dictionary) -> Result<KoopmanModel, EdmdError> {
    fit_koopman_with(ds, dictionary, &FitOptions::default())
}

pub fn fit_koopman_with(
    ds: &SnapshotDataset,
    dictionary: Dictionary,
    opts: &FitOptions,
) -> Result<KoopmanModel, EdmdError> {
    let ops = fit_operators(ds, &dictionary, opts.rcond)?;
    let n = ops.z.nrows();
    let (nu, nw) = (ds.u.nrows(), ds.w.nrows());
    let (e, f_u, f_w) = match opts.output_map {
        OutputMap::StateOnly => (
            fit_output_map(&ops.z, &ds.y, opts.rcond)?,
            DMatrix::zeros(ds.y.nrows(), nu),
            DMatrix::zeros(ds.y.nrows(), nw),
        ),
        OutputMap::WithInputs => {
            let g = &ds.y * &ops.regressor_pinv;
            (
                g.columns(0, n).into_owned(),
                g.columns(n, nu).into_owned(),
                g.columns(n + nu, nw).into_owned(),
            )
        }
    };
    let model = KoopmanModel { dictionary, a: ops.a, b: ops.b, d: ops.d, e, f_u, f_w, output_map: opts.output_map };
    model.check_finite()?;
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct PredictionResult {
    /// `3 × (T+1)`; column 0 is the supplied initial state.
    pub states: DMatrix<f64>,
    /// `2 × (T+1)`.
    pub outputs: DMatrix<f64>,
    /// `N × (T+1)` lifted trace, before any correction, when requested.
    pub lifted: Option<DMatrix<f64>>,
}

impl KoopmanModel {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_disturbances(&self) -> usize {
        self.d.ncols()
    }

    /// `C = [I₃ 0]`.
    pub fn projection(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(3, self.n());
        c.fill_diagonal(1.0);
        c
    }

    fn check_finite(&self) -> Result<(), EdmdError> {
        let all = [&self.a, &self.b, &self.d, &self.e, &self.f_u, &self.f_w];
        if all.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(EdmdError::NonFinite("fitted operators"));
        }
        Ok(())
    }

    fn output(&self, z: &DVector<f64>, u: Option<(&DMatrix<f64>, &DMatrix<f64>, usize)>) -> DVector<f64> {
        let mut y = &self.e * z;
        if let Some((us, ws, j)) = u {
            if self.output_map == OutputMap::WithInputs {
                y += &self.f_u * us.column(j) + &self.f_w * ws.column(j);
            }
        }
        y
    }

    /// Open-loop rollout from `x0` under input columns `u` (`n_u × T`) and
    /// disturbance columns `w` (`n_w × T`).
    pub fn predict(
        &self,
        x0: &[f64; 3],
        u: &DMatrix<f64>,
        w: &DMatrix<f64>,
        correction: Correction,
    ) -> Result<PredictionResult, EdmdError> {
        self.rollout(x0, u, w, correction, false)
    }

    /// As [`predict`](Self::predict), also returning the lifted trace.
    pub fn predict_traced(
        &self,
        x0: &[f64; 3],
        u: &DMatrix<f64>,
        w: &DMatrix<f64>,
        correction: Correction,
    ) -> Result<PredictionResult, EdmdError> {
        self.rollout(x0, u, w, correction, true)
    }

    fn rollout(
        &self,
        x0: &[f64; 3],
        u: &DMatrix<f64>,
        w: &DMatrix<f64>,
        correction: Correction,
        keep: bool,
    ) -> Result<PredictionResult, EdmdError> {
        let t = u.ncols();
        if w.ncols() != t {
            return Err(EdmdError::Shape(format!("{t} inputs but {} disturbances", w.ncols())));
        }
        if u.nrows() != self.n_inputs() || w.nrows() != self.n_disturbances() {
            return Err(EdmdError::Shape("input channel count does not match the model".into()));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(EdmdError::Diverged { step: 0 });
        }
        let mut states = DMatrix::zeros(3, t + 1);
        let mut outputs = DMatrix::zeros(self.e.nrows(), t + 1);
        let mut lifted = keep.then(|| DMatrix::zeros(self.n(), t + 1));

        let mut z = self.dictionary.lift(x0);
        states.set_column(0, &DVector::from_column_slice(x0));
        let held = |k: usize| (t > 0).then(|| (u, w, k.min(t - 1)));
        outputs.set_column(0, &self.output(&z, held(0)));
        if let Some(l) = lifted.as_mut() {
            l.set_column(0, &z);
        }
        for k in 0..t {
            z = &self.a * &z + &self.b * u.column(k) + &self.d * w.column(k);
            let x = [z[0], z[1], z[2]];
            if x.iter().any(|v| !v.is_finite()) {
                return Err(EdmdError::Diverged { step: k + 1 });
            }
            states.set_column(k + 1, &DVector::from_column_slice(&x));
            outputs.set_column(k + 1, &self.output(&z, held(k + 1)));
            if let Some(l) = lifted.as_mut() {
                l.set_column(k + 1, &z);
            }
            if correction == Correction::On {
                z = self.dictionary.lift(&x);
            }
        }
        Ok(PredictionResult { states, outputs, lifted })
    }

    /// Replays a recorded trajectory's inputs from its initial state.
    pub fn predict_trajectory(&self, traj: &Trajectory, correction: Correction) -> Result<PredictionResult, EdmdError> {
        let t = traj.inputs.len();
        let u = DMatrix::from_fn(2, t, |i, k| traj.inputs[k].to_array()[i]);
        let w = DMatrix::from_fn(3, t, |i, k| traj.disturbances[k].to_array()[i]);
        self.predict(&traj.states[0].to_array(), &u, &w, correction)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, EdmdError> {
        let f: ModelFile = serde_json::from_str(text)?;
        f.into_model()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    n: usize,
    n_u: usize,
    n_w: usize,
    n_y: usize,
    output_map: OutputMap,
    a: MatrixPayload,
    b: MatrixPayload,
    d: MatrixPayload,
    e: MatrixPayload,
    f_u: MatrixPayload,
    f_w: MatrixPayload,
    dictionary: Dictionary,
}

impl From<&KoopmanModel> for ModelFile {
    fn from(m: &KoopmanModel) -> Self {
        ModelFile {
            n: m.n(),
            n_u: m.n_inputs(),
            n_w: m.n_disturbances(),
            n_y: m.e.nrows(),
            output_map: m.output_map,
            a: MatrixPayload::encode(&m.a),
            b: MatrixPayload::encode(&m.b),
            d: MatrixPayload::encode(&m.d),
            e: MatrixPayload::encode(&m.e),
            f_u: MatrixPayload::encode(&m.f_u),
            f_w: MatrixPayload::encode(&m.f_w),
            dictionary: m.dictionary.clone(),
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<KoopmanModel, EdmdError> {
        let shaped = |p: &MatrixPayload, r: usize, c: usize, name: &str| -> Result<DMatrix<f64>, EdmdError> {
            if p.rows != r || p.cols != c {
                return Err(EdmdError::Shape(format!("{name} is {}×{}, expected {r}×{c}", p.rows, p.cols)));
            }
            Ok(p.decode()?)
        };
        let (n, nu, nw, ny) = (self.n, self.n_u, self.n_w, self.n_y);
        if self.dictionary.dim() != n {
            return Err(EdmdError::Shape(format!("dictionary has N = {}, model N = {n}", self.dictionary.dim())));
        }
        let m = KoopmanModel {
            a: shaped(&self.a, n, n, "A")?,
            b: shaped(&self.b, n, nu, "B")?,
            d: shaped(&self.d, n, nw, "D")?,
            e: shaped(&self.e, ny, n, "E")?,
            f_u: shaped(&self.f_u, ny, nu, "F_u")?,
            f_w: shaped(&self.f_w, ny, nw, "F_w")?,
            output_map: self.output_map,
            dictionary: self.dictionary,
        };
        m.check_finite()?;
        Ok(m)
    }
}

/// Relative Frobenius residuals of the state and output fits on `ds`.
pub fn fit_residuals(model: &KoopmanModel, ds: &SnapshotDataset) -> (f64, f64) {
    let z = model.dictionary.lift_columns(&ds.x);
    let z_next = model.dictionary.lift_columns(&ds.x_next);
    let r = &z_next - &model.a * &z - &model.b * &ds.u - &model.d * &ds.w;
    let mut y_hat = &model.e * &z;
    if model.output_map == OutputMap::WithInputs {
        y_hat += &model.f_u * &ds.u + &model.f_w * &ds.w;
    }
    let ry = &ds.y - y_hat;
    (r.norm() / z_next.norm().max(f64::MIN_POSITIVE), ry.norm() / ds.y.norm().max(f64::MIN_POSITIVE))
}

/// Largest eigenvalue modulus of `I − A_f A_b`, where the forward and
/// backward maps are fit between `Z` and the input-compensated targets
/// `Z⁺ − B U − D W`. Zero for an exactly invariant subspace.
pub fn consistency_index(ds: &SnapshotDataset, lift: &dyn Lift, rcond: f64) -> Result<f64, EdmdError> {
    let ops = fit_operators(ds, lift, rcond)?;
    let target = &ops.z_next - &ops.b * &ds.u - &ops.d * &ds.w;
    let a_f = &target * pinv(&ops.z, rcond)?;
    let a_b = &ops.z * pinv(&target, rcond)?;
    let n = ops.z.nrows();
    let m = DMatrix::identity(n, n) - a_f * a_b;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(EdmdError::NonFinite("consistency matrix"));
    }
    let eig = m.complex_eigenvalues();
    Ok(eig.iter().map(|c| c.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_identity_and_diag() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert!((pinv(&i, DEFAULT_RCOND).unwrap() - &i).norm() < 1e-14);
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = pinv(&d, DEFAULT_RCOND).unwrap();
        assert!((p - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn pinv_wide_path_matches_direct() {
        let m = DMatrix::from_fn(3, 40, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64);
        let a = pinv(&m, DEFAULT_RCOND).unwrap();
        let b = pinv_svd(&m, DEFAULT_RCOND).unwrap();
        assert!((a - b).norm() < 1e-10);
    }

    #[test]
    fn pinv_of_empty() {
        let p = pinv(&DMatrix::zeros(0, 5), DEFAULT_RCOND).unwrap();
        assert_eq!(p.shape(), (5, 0));
    }

    #[test]
    fn underdetermined_is_reported() {
        let x = DMatrix::from_fn(3, 5, |i, k| (i + k) as f64);
        let ds = SnapshotDataset::from_matrices(
            x.clone(),
            x,
            DMatrix::zeros(2, 5),
            DMatrix::zeros(3, 5),
            DMatrix::zeros(2, 5),
        )
        .unwrap();
        let err = fit_koopman(&ds, Dictionary::State).unwrap_err();
        assert!(matches!(err, EdmdError::Underdetermined { m: 5, n: 3, .. }));
        assert!(err.to_string().contains("M = 5"));
    }

    #[test]
    fn zero_horizon_returns_initial_point() {
        let x = DMatrix::from_fn(3, 20, |i, k| ((i + 1) * (k + 3) % 7) as f64);
        let ds = SnapshotDataset::from_matrices(
            x.clone(),
            x.clone(),
            DMatrix::zeros(0, 20),
            DMatrix::zeros(0, 20),
            DMatrix::from_fn(2, 20, |i, k| x[(i, k)]),
        )
        .unwrap();
        let m = fit_koopman(&ds, Dictionary::State).unwrap();
        let r = m.predict(&[1.0, 2.0, 3.0], &DMatrix::zeros(0, 0), &DMatrix::zeros(0, 0), Correction::On).unwrap();
        assert_eq!(r.states.shape(), (3, 1));
        assert_eq!(r.states.column(0).as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(r.outputs.ncols(), 1);
    }
}
