use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DictError, Lift, Normalization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbfKind {
    ThinPlateSpline,
    Gaussian,
    InverseQuadratic,
}

impl RbfKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RbfKind::ThinPlateSpline => "thin_plate_spline",
            RbfKind::Gaussian => "gaussian",
            RbfKind::InverseQuadratic => "inverse_quadratic",
        }
    }

    pub fn uses_eps(self) -> bool {
        !matches!(self, RbfKind::ThinPlateSpline)
    }

    #[inline]
    fn of_r2(self, r2: f64, eps: f64) -> f64 {
        match self {
            RbfKind::ThinPlateSpline => {
                if r2 > 0.0 {
                    // r² log r = ½ r² log r²
                    0.5 * r2 * r2.ln()
                } else {
                    0.0
                }
            }
            RbfKind::Gaussian => (-eps * eps * r2).exp(),
            RbfKind::InverseQuadratic => 1.0 / (1.0 + eps * eps * r2),
        }
    }
}

impl std::str::FromStr for RbfKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "thin_plate_spline" | "tps" => Ok(RbfKind::ThinPlateSpline),
            "gaussian" => Ok(RbfKind::Gaussian),
            "inverse_quadratic" => Ok(RbfKind::InverseQuadratic),
            other => Err(format!("unknown rbf kind `{other}`")),
        }
    }
}

/// Kernel value at `x` for a center `xc`.
pub fn rbf_eval(kind: RbfKind, x: &[f64], xc: &[f64], eps: f64) -> f64 {
    let r2: f64 = x.iter().zip(xc).map(|(a, b)| (a - b) * (a - b)).sum();
    kind.of_r2(r2, eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfDictionary {
    #[serde(rename = "rbf")]
    pub kind: RbfKind,
    pub eps: f64,
    /// Centers in normalized coordinates.
    pub centers: Vec<[f64; 3]>,
    pub normalization: Normalization,
}

impl Lift for RbfDictionary {
    fn dim(&self) -> usize {
        3 + self.centers.len()
    }

    fn lift_into(&self, x: &[f64; 3], out: &mut [f64]) {
        out[..3].copy_from_slice(x);
        let xn = self.normalization.apply(x);
        for (o, c) in out[3..].iter_mut().zip(&self.centers) {
            *o = rbf_eval(self.kind, &xn, c, self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<const D: usize> {
    pub centers: Vec<[f64; D]>,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

fn nearest<const D: usize>(p: &[f64; D], centers: &[[f64; D]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_pp<const D: usize>(points: &[[f64; D]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; D]> {
    let m = points.len();
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..m)]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` beyond the accumulated sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..m)
        };
        let c = points[idx];
        centers.push(c);
        for (dd, p) in d2.iter_mut().zip(points) {
            *dd = dd.min(dist2(p, &c));
        }
    }
    centers
}

/// Lloyd iterations from a k-means++ start.
///
/// An empty cluster is re-seeded to the point farthest from its assigned
/// center. Stops when no center moves by more than `tol`.
pub fn kmeans<const D: usize>(
    points: &[[f64; D]],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult<D>, DictError> {
    let m = points.len();
    if k == 0 || k > m {
        return Err(DictError::TooFewPoints { k, m });
    }
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(DictError::Numeric("k-means input contains non-finite values".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(points, k, &mut rng);
    let mut inertia = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let assign: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centers)).collect();
        inertia.push(assign.iter().map(|a| a.1).sum());

        let mut sums = vec![[0.0; D]; k];
        let mut counts = vec![0usize; k];
        for (p, &(j, _)) in points.iter().zip(&assign) {
            counts[j] += 1;
            for i in 0..D {
                sums[j][i] += p[i];
            }
        }
        let mut taken = vec![false; m];
        let mut next = centers.clone();
        for j in 0..k {
            if counts[j] > 0 {
                next[j] = std::array::from_fn(|i| sums[j][i] / counts[j] as f64);
            } else {
                let far = assign
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken[*i])
                    .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                    .map(|(i, _)| i)
                    .expect("k ≤ m leaves a free point");
                taken[far] = true;
                next[j] = points[far];
            }
        }
        let shift = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        if shift < tol {
            converged = true;
            break;
        }
    }
    Ok(KMeansResult { centers, inertia, iterations, converged })
}

/// RBF dictionary with `n − 3` k-means centers on the normalized states of
/// `x` (3 × M).
pub fn build_rbf_dictionary(
    x: &DMatrix<f64>,
    n: usize,
    kind: RbfKind,
    eps: f64,
    seed: u64,
) -> Result<RbfDictionary, DictError> {
    if n < 4 {
        return Err(DictError::Dimension(format!("RBF dictionary needs N ≥ 4, got {n}")));
    }
    if kind.uses_eps() && !(eps > 0.0 && eps.is_finite()) {
        return Err(DictError::Hyperparams(format!("shape parameter must be positive, got {eps}")));
    }
    let normalization = Normalization::fit(x);
    let pts: Vec<[f64; 3]> = x
        .column_iter()
        .map(|c| normalization.apply(&[c[0], c[1], c[2]]))
        .collect();
    let km = kmeans(&pts, n - 3, seed, 100, 1e-6)?;
    Ok(RbfDictionary { kind, eps, centers: km.centers, normalization })
}
