//! Test-side oracles. Each one is written independently of the production
//! code path it checks.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use hvac_koopman::cli::ExperimentConfig;
use hvac_koopman::datagen::{assemble_snapshots, simulate_batch, ExcitationSpec, Role};
use hvac_koopman::edmd::{Correction, OutputMap};
use hvac_koopman::plant::plant_derivative;
use hvac_koopman::{
    ControlInput, Disturbance, KoopmanModel, Lift, PlantParams, PlantState, SnapshotDataset, Trajectory,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn desk_config() -> ExperimentConfig {
    ExperimentConfig::load(&repo_root().join("configs/desk.json")).expect("desk config loads")
}

pub struct DeskData {
    pub train: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
    pub ds: SnapshotDataset,
}

/// The desk-scale surrogate dataset as the CLI would generate it.
pub fn desk_data() -> &'static DeskData {
    static DATA: OnceLock<DeskData> = OnceLock::new();
    DATA.get_or_init(|| {
        let cfg = desk_config();
        let p = cfg.plant().unwrap();
        let d = &cfg.data;
        let spec = |dur| ExcitationSpec { duration_s: dur, ..d.excitation.clone() };
        let train = simulate_batch(Role::Train, d.train_count, &spec(d.train_duration_s), cfg.seed, &p).unwrap();
        let test = simulate_batch(Role::Test, d.test_count, &spec(d.test_duration_s), cfg.seed, &p).unwrap();
        let ds = assemble_snapshots(&train).unwrap();
        DeskData { train, test, ds }
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * r.sample::<f64, _>(StandardNormal))
}

// ---------------------------------------------------------------- plant

/// Damped Newton on `plant_derivative` with a central-difference Jacobian.
pub fn equilibrium(guess: [f64; 3], u: &ControlInput, w: &Disturbance, p: &PlantParams) -> [f64; 3] {
    let f = |x: &[f64; 3]| -> DVector<f64> {
        let d = plant_derivative(&PlantState::from_array(*x), u, w, p).expect("derivative inside envelope");
        DVector::from_column_slice(&d)
    };
    let mut x = guess;
    for _ in 0..200 {
        let fx = f(&x);
        if fx.amax() < 1e-12 {
            break;
        }
        let mut jac = DMatrix::zeros(3, 3);
        for j in 0..3 {
            let h = 1e-6 * x[j].abs().max(1.0);
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            jac.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
        }
        let step = jac.lu().solve(&(-&fx)).expect("nonsingular Jacobian");
        let mut alpha = 1.0;
        loop {
            let cand = [x[0] + alpha * step[0], x[1] + alpha * step[1], x[2] + alpha * step[2]];
            let ok = p.envelope.contains(&PlantState::from_array(cand))
                && cand[1] > cand[0]
                && f(&cand).norm() < fx.norm();
            if ok || alpha < 1e-8 {
                x = cand;
                break;
            }
            alpha *= 0.5;
        }
    }
    x
}

// ---------------------------------------------------------------- datagen

/// Mean of N(mu, sigma²) truncated to [lo, hi].
pub fn truncated_normal_mean(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
    mu + sigma * (n.pdf(a) - n.pdf(b)) / (n.cdf(b) - n.cdf(a))
}

/// Variance of the same truncated normal.
pub fn truncated_normal_var(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
    let z = n.cdf(b) - n.cdf(a);
    let t1 = (a * n.pdf(a) - b * n.pdf(b)) / z;
    let t2 = (n.pdf(a) - n.pdf(b)) / z;
    sigma * sigma * (1.0 + t1 - t2 * t2)
}

// ---------------------------------------------------------------- dictionary

/// Every monomial of total degree 1..=m in graded order, descending
/// lexicographic on the exponent tuple within a degree.
pub fn brute_force_monomials(x: &[f64; 3], m: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for deg in 1..=m as u32 {
        let mut exps = Vec::new();
        for a in 0..=deg {
            for b in 0..=deg {
                for c in 0..=deg {
                    if a + b + c == deg {
                        exps.push((a, b, c));
                    }
                }
            }
        }
        exps.sort_by(|p, q| q.cmp(p));
        for (a, b, c) in exps {
            out.push(x[0].powi(a as i32) * x[1].powi(b as i32) * x[2].powi(c as i32));
        }
    }
    out
}

/// States followed by deterministic pseudo-random features of the state bits.
pub struct NoiseFeatures {
    pub n: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Lift for NoiseFeatures {
    fn dim(&self) -> usize {
        self.n
    }

    fn lift_into(&self, x: &[f64; 3], out: &mut [f64]) {
        out[..3].copy_from_slice(x);
        let h = x.iter().fold(0u64, |acc, v| splitmix(acc ^ v.to_bits()));
        for (j, o) in out[3..].iter_mut().enumerate() {
            let r = splitmix(h ^ (j as u64 + 1).wrapping_mul(0x2545_f491_4f6c_dd1d));
            *o = (r >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
        }
    }
}

/// Central finite difference of `f` along coordinate `i` of `p`.
pub fn central_difference(p: &[f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut q = p.to_vec();
    q[i] = p[i] + h;
    let fp = f(&q);
    q[i] = p[i] - h;
    let fm = f(&q);
    (fp - fm) / (2.0 * h)
}

// ---------------------------------------------------------------- edmd

/// Largest relative violation of the four Moore–Penrose identities.
pub fn moore_penrose_violation(a: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let rel = |m: DMatrix<f64>, scale: f64| m.norm() / scale.max(1.0);
    let ax = a * x;
    let xa = x * a;
    [
        rel(&ax * a - a, a.norm()),
        rel(&xa * x - x, x.norm()),
        rel(ax.transpose() - &ax, ax.norm()),
        rel(xa.transpose() - &xa, xa.norm()),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Random `rows × cols` matrix of the given rank.
pub fn random_rank_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> DMatrix<f64> {
    gaussian_matrix(r, rows, rank, 1.0) * gaussian_matrix(r, rank, cols, 1.0)
}

fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// `x⁺ = A x + B u + D w`, `y = E x + F_u u + F_w w` on three states.
pub struct LiftedLinear {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f_u: DMatrix<f64>,
    pub f_w: DMatrix<f64>,
}

impl LiftedLinear {
    pub fn random(seed: u64) -> Self {
        let mut r = rng(seed);
        let a0 = gaussian_matrix(&mut r, 3, 3, 1.0);
        let a = &a0 * (0.9 / spectral_radius(&a0));
        Self {
            a,
            b: gaussian_matrix(&mut r, 3, 2, 1.0),
            d: gaussian_matrix(&mut r, 3, 3, 0.5),
            e: gaussian_matrix(&mut r, 2, 3, 1.0),
            f_u: gaussian_matrix(&mut r, 2, 2, 1.0),
            f_w: gaussian_matrix(&mut r, 2, 3, 1.0),
        }
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    /// State columns `3 × (T+1)` driven by `u`, `w` (`· × T`).
    pub fn rollout(&self, x0: &[f64; 3], u: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
        let t = u.ncols();
        let mut x = DMatrix::zeros(3, t + 1);
        x.set_column(0, &DVector::from_column_slice(x0));
        for k in 0..t {
            let next = &self.a * x.column(k) + &self.b * u.column(k) + &self.d * w.column(k);
            x.set_column(k + 1, &next);
        }
        x
    }

    /// `samples` snapshot pairs from one trajectory under white-noise inputs.
    pub fn dataset(&self, samples: usize, seed: u64) -> SnapshotDataset {
        let mut r = rng(seed);
        let u = gaussian_matrix(&mut r, 2, samples, 1.0);
        let w = gaussian_matrix(&mut r, 3, samples, 1.0);
        let x = self.rollout(&[1.0, -0.5, 0.25], &u, &w);
        let xc = x.columns(0, samples).into_owned();
        let y = &self.e * &xc + &self.f_u * &u + &self.f_w * &w;
        SnapshotDataset::from_matrices(xc, x.columns(1, samples).into_owned(), u, w, y).unwrap()
    }

    pub fn stacked(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(3, 8);
        m.columns_mut(0, 3).copy_from(&self.a);
        m.columns_mut(3, 2).copy_from(&self.b);
        m.columns_mut(5, 3).copy_from(&self.d);
        m
    }
}

/// Row-by-row `M v`, summing columns in index order.
fn matvec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| {
            let mut s = m[(i, 0)] * v[0];
            for j in 1..m.ncols() {
                s += m[(i, j)] * v[j];
            }
            s
        })
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Corrected open-loop prediction written out one step at a time.
/// Returns the predicted states and outputs, initial point first.
pub fn naive_rollout(
    model: &KoopmanModel,
    x0: [f64; 3],
    u: &[Vec<f64>],
    w: &[Vec<f64>],
    correction: Correction,
) -> (Vec<[f64; 3]>, Vec<Vec<f64>>) {
    let t = u.len();
    let output = |z: &[f64], k: usize| -> Vec<f64> {
        let ez = matvec(&model.e, z);
        if model.output_map == OutputMap::StateOnly || t == 0 {
            return ez;
        }
        let j = k.min(t - 1);
        add(&ez, &add(&matvec(&model.f_u, &u[j]), &matvec(&model.f_w, &w[j])))
    };
    let mut z: Vec<f64> = model.dictionary.lift(&x0).iter().copied().collect();
    let mut xs = vec![x0];
    let mut ys = vec![output(&z, 0)];
    for k in 0..t {
        let az = matvec(&model.a, &z);
        let bu = matvec(&model.b, &u[k]);
        let dw = matvec(&model.d, &w[k]);
        z = add(&add(&az, &bu), &dw);
        let x = [z[0], z[1], z[2]];
        xs.push(x);
        ys.push(output(&z, k + 1));
        if correction == Correction::On {
            z = model.dictionary.lift(&x).iter().copied().collect();
        }
    }
    (xs, ys)
}

// ---------------------------------------------------------------- synthetic trajectories

/// Packs state, input and output columns into a [`Trajectory`].
pub fn trajectory_from(x: &DMatrix<f64>, u: &DMatrix<f64>, w: &DMatrix<f64>, y: &DMatrix<f64>) -> Trajectory {
    use hvac_koopman::PlantOutput;
    Trajectory {
        states: x.column_iter().map(|c| PlantState::new(c[0], c[1], c[2])).collect(),
        inputs: u.column_iter().map(|c| ControlInput::new(c[0], c[1])).collect(),
        disturbances: w.column_iter().map(|c| Disturbance::new(c[0], c[1], c[2])).collect(),
        outputs: y.column_iter().map(|c| PlantOutput { p_cmp: c[0], p_fan: c[1] }).collect(),
        dt: 1.0,
    }
}

impl LiftedLinear {
    /// A trajectory of this system with outputs logged under held inputs.
    pub fn trajectory(&self, x0: &[f64; 3], steps: usize, seed: u64) -> Trajectory {
        let mut r = rng(seed);
        let u = gaussian_matrix(&mut r, 2, steps, 1.0);
        let w = gaussian_matrix(&mut r, 3, steps, 1.0);
        let x = self.rollout(x0, &u, &w);
        let held = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), steps + 1, |i, k| m[(i, k.min(steps - 1))]);
        let (uh, wh) = (held(&u), held(&w));
        let y = &self.e * &x + &self.f_u * &uh + &self.f_w * &wh;
        trajectory_from(&x, &u, &w, &y)
    }
}

/// `x⁺ = A x + G φ(x) + B u + D w`, with `φ` the gaussian (ε = 1) features
/// that the RBF builder produces on the training states.
pub struct GaussianPlant {
    pub features: hvac_koopman::dictionary::RbfDictionary,
    pub a: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl GaussianPlant {
    /// Builds the plant and its training set of `samples` iid snapshots.
    pub fn new(n: usize, samples: usize, seed: u64, grid_seed: u64) -> (Self, SnapshotDataset) {
        use hvac_koopman::dictionary::{build_rbf_dictionary, RbfKind};
        let mut r = rng(seed);
        let x = gaussian_matrix(&mut r, 3, samples, 1.0);
        let features = build_rbf_dictionary(&x, n, RbfKind::Gaussian, 1.0, grid_seed).unwrap();
        let a0 = gaussian_matrix(&mut r, 3, 3, 1.0);
        let plant = Self {
            features,
            a: &a0 * (0.6 / spectral_radius(&a0)),
            g: gaussian_matrix(&mut r, 3, n - 3, 0.4),
            b: gaussian_matrix(&mut r, 3, 2, 0.3),
            d: gaussian_matrix(&mut r, 3, 3, 0.3),
        };
        let u = gaussian_matrix(&mut r, 2, samples, 1.0);
        let w = gaussian_matrix(&mut r, 3, samples, 1.0);
        let x_next = DMatrix::from_fn(3, samples, |_, _| 0.0);
        let mut ds = SnapshotDataset::from_matrices(x, x_next, u, w, DMatrix::zeros(2, samples)).unwrap();
        for j in 0..samples {
            let next = plant.step(&[ds.x[(0, j)], ds.x[(1, j)], ds.x[(2, j)]], &ds.u.column(j).into_owned(), &ds.w.column(j).into_owned());
            ds.x_next.set_column(j, &next);
        }
        (plant, ds)
    }

    pub fn step(&self, x: &[f64; 3], u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let z = self.features.lift(x);
        let phi = z.rows(3, z.len() - 3);
        &self.a * DVector::from_column_slice(x) + &self.g * phi + &self.b * u + &self.d * w
    }

    pub fn trajectory(&self, steps: usize, seed: u64) -> Trajectory {
        let mut r = rng(seed);
        let u = gaussian_matrix(&mut r, 2, steps, 1.0);
        let w = gaussian_matrix(&mut r, 3, steps, 1.0);
        let mut x = DMatrix::zeros(3, steps + 1);
        x.set_column(0, &gaussian_matrix(&mut r, 3, 1, 1.0).column(0));
        for k in 0..steps {
            let next = self.step(&[x[(0, k)], x[(1, k)], x[(2, k)]], &u.column(k).into_owned(), &w.column(k).into_owned());
            x.set_column(k + 1, &next);
        }
        trajectory_from(&x, &u, &w, &DMatrix::from_element(2, steps + 1, 1.0))
    }
}
