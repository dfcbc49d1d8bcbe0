//! Koopman / extended DMD system identification for an electric-vehicle
//! air-conditioning loop and cabin.
//!
//! The crate is organised as a pipeline:
//!
//! * [`plant`]: a structure-preserving surrogate of the vapor-compression
//!   circuit and cabin that produces the "truth" trajectories.
//! * [`datagen`]: truncated-normal excitation, trajectory batches and the
//!   snapshot matrices `X, X⁺, U, W, Y`.
//! * [`dictionary`]: lifting functions (polynomial, RBF with k-means centers,
//!   learned neural dictionary).
//! * [`edmd`]: least-squares fit of the lifted LTI operators, output map,
//!   corrected open-loop prediction and the consistency index.
//! * [`metrics`]: RMSE and energy metrics plus an RBF grid search.
//! * [`cli`]: the `generate / train / evaluate / cycle / sweep` commands.

pub mod cli;
pub mod codec;
pub mod datagen;
pub mod dictionary;
pub mod edmd;
pub mod metrics;
pub mod plant;

pub use datagen::{SnapshotDataset, Trajectory};
pub use dictionary::{Dictionary, Lift};
pub use edmd::{KoopmanModel, PredictionResult};
pub use plant::{ControlInput, Disturbance, PlantOutput, PlantParams, PlantState};

/// Number of plant states (p_e, p_c, T_cabin).
pub const N_STATES: usize = 3;
/// Number of control inputs (ṁ_fan, ω_cmp).
pub const N_INPUTS: usize = 2;
/// Number of disturbances (T_ac,in, v_veh, ω_blw).
pub const N_DISTURBANCES: usize = 3;
/// Number of measured outputs (P_cmp, P_fan).
pub const N_OUTPUTS: usize = 2;
