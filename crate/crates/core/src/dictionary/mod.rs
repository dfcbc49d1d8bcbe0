//! Lifting functions Ψ: R³ → R^N.
//!
//! Every dictionary keeps the raw state in its first three coordinates so the
//! projection back to the state is the fixed `[I₃ 0]` block.

mod neural;
mod polynomial;
mod rbf;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::CodecError;

pub use neural::{
    train_nn_dictionary, DenseLayer, NeuralDictionary, NnHyperparams, NnProblem, TrainingReport,
};
pub use polynomial::{
    build_polynomial_dictionary, lift_polynomial, monomial_exponents, polynomial_dim,
    PolynomialDictionary,
};
pub use rbf::{build_rbf_dictionary, kmeans, rbf_eval, KMeansResult, RbfDictionary, RbfKind};

#[derive(Debug, Error)]
pub enum DictError {
    #[error("cannot form {k} clusters from {m} points")]
    TooFewPoints { k: usize, m: usize },
    #[error("invalid dictionary dimension: {0}")]
    Dimension(String),
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// A lifting map evaluated one state at a time.
pub trait Lift: Send + Sync {
    /// Lifted dimension N.
    fn dim(&self) -> usize;

    /// Writes Ψ(x) into `out`, which has length `dim()`.
    fn lift_into(&self, x: &[f64; 3], out: &mut [f64]);

    fn lift(&self, x: &[f64; 3]) -> DVector<f64> {
        let mut z = DVector::zeros(self.dim());
        self.lift_into(x, z.as_mut_slice());
        z
    }

    /// Columnwise lift of a `3 × M` matrix. Identical to lifting each column.
    fn lift_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), 3, "states must have 3 rows");
        let n = self.dim();
        let mut z = DMatrix::zeros(n, x.ncols());
        if n == 0 {
            return z;
        }
        z.as_mut_slice()
            .par_chunks_mut(n)
            .zip(x.as_slice().par_chunks(3))
            .for_each(|(out, col)| self.lift_into(&[col[0], col[1], col[2]], out));
        z
    }
}

/// Per-channel affine map `x̃ = (x − mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; 3],
    pub scale: [f64; 3],
}

impl Normalization {
    pub fn identity() -> Self {
        Self { mean: [0.0; 3], scale: [1.0; 3] }
    }

    /// Zero mean, unit (population) variance over the columns of `x`.
    /// Constant channels keep unit scale.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let m = x.ncols().max(1) as f64;
        let mut mean = [0.0; 3];
        let mut scale = [1.0; 3];
        for i in 0..3 {
            let row = x.row(i);
            let mu = row.sum() / m;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
            mean[i] = mu;
            let s = var.sqrt();
            if s > 1e-12 * mu.abs().max(1.0) {
                scale[i] = s;
            }
        }
        Self { mean, scale }
    }

    #[inline]
    pub fn apply(&self, x: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| (x[i] - self.mean[i]) / self.scale[i])
    }

    pub fn apply_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| (x[(i, k)] - self.mean[i]) / self.scale[i])
    }
}

/// Every dictionary family behind one serialisable type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dictionary {
    /// Ψ(x) = x: plain DMD with control.
    State,
    Polynomial(PolynomialDictionary),
    Rbf(RbfDictionary),
    Neural(NeuralDictionary),
}

impl Dictionary {
    /// Short family label used in reports.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Dictionary::State => "state",
            Dictionary::Polynomial(_) => "polynomial",
            Dictionary::Rbf(r) => r.kind.as_str(),
            Dictionary::Neural(_) => "neural",
        }
    }

    /// Shape parameter for RBF dictionaries.
    pub fn eps(&self) -> Option<f64> {
        match self {
            Dictionary::Rbf(r) => Some(r.eps),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dictionary serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl Lift for Dictionary {
    fn dim(&self) -> usize {
        match self {
            Dictionary::State => 3,
            Dictionary::Polynomial(d) => d.dim(),
            Dictionary::Rbf(d) => d.dim(),
            Dictionary::Neural(d) => d.dim(),
        }
    }

    fn lift_into(&self, x: &[f64; 3], out: &mut [f64]) {
        match self {
            Dictionary::State => out.copy_from_slice(x),
            Dictionary::Polynomial(d) => d.lift_into(x, out),
            Dictionary::Rbf(d) => d.lift_into(x, out),
            Dictionary::Neural(d) => d.lift_into(x, out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_is_zero_mean_unit_variance() {
        let x = DMatrix::from_row_slice(3, 4, &[
            1.0, 2.0, 3.0, 4.0, //
            10.0, 10.0, 10.0, 10.0, //
            -1.0, 1.0, -1.0, 1.0,
        ]);
        let n = Normalization::fit(&x);
        let y = n.apply_columns(&x);
        assert!(y.row(0).sum().abs() < 1e-12);
        assert!((y.row(0).norm_squared() / 4.0 - 1.0).abs() < 1e-12);
        assert_eq!(n.scale[1], 1.0);
        assert_eq!(y.row(2).iter().copied().collect::<Vec<_>>(), vec![-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn state_dictionary_passes_through() {
        let d = Dictionary::State;
        let x = [401.5, 1388.25, 27.125];
        assert_eq!(d.lift(&x).as_slice(), &x);
    }

    #[test]
    fn batch_lift_matches_columns() {
        let d = Dictionary::Polynomial(PolynomialDictionary::new(3, Normalization::identity()));
        let x = DMatrix::from_fn(3, 17, |i, k| (i as f64 + 1.0) * 0.1 * k as f64 - 0.3);
        let z = d.lift_columns(&x);
        for k in 0..17 {
            let xk = [x[(0, k)], x[(1, k)], x[(2, k)]];
            assert_eq!(z.column(k).as_slice(), d.lift(&xk).as_slice());
        }
    }
}
