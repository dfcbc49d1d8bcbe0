//! Lumped vapor-compression circuit + cabin surrogate.
//!
//! Three states are integrated: evaporator pressure, condenser pressure and
//! cabin air temperature. The capacitances, saturation temperatures and
//! enthalpies are affine closures in the pressures, which keeps the
//! energy-balance structure of the full model while staying cheap to
//! evaluate:
//!
//! ```text
//! d11(p_e) ṗ_e = Q̇_e + ṁ_r (h_4 − h_g(p_e))
//! d22(p_c) ṗ_c = −Q̇_c + ṁ_r (h_2 − h_l(p_c))
//! d33      Ṫ   = −Q̇_e + Q̇_in + Q̇_gen
//! ```
//!
//! Pressures are in kPa, temperatures in °C, heat rates in kW and enthalpies
//! in kJ/kg. Electrical powers are reported in W.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("capacitance {term} is not positive ({value})")]
    NonPositiveCapacitance { term: &'static str, value: f64 },
    #[error("non-finite value in {term}")]
    NonFinite { term: &'static str },
    #[error("state violates plant invariants: {0}")]
    InvalidState(String),
    #[error("negative {which} power ({value} W): parameters outside their envelope")]
    NegativePower { which: &'static str, value: f64 },
    #[error("trajectory diverged at step {step}: {state:?} left the sanity envelope")]
    Diverged { step: usize, state: [f64; 3] },
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
}

impl PlantError {
    /// Attaches a step index to a divergence raised by a single step.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            PlantError::Diverged { state, .. } => PlantError::Diverged { step, state },
            other => other,
        }
    }
}

#[derive(Debug, Error)]
pub enum CycleError {
    #[error("io error reading drive cycle: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Evaporator pressure [kPa].
    pub p_e: f64,
    /// Condenser pressure [kPa].
    pub p_c: f64,
    /// Cabin air temperature [°C].
    pub t_cabin: f64,
}

impl PlantState {
    pub fn new(p_e: f64, p_c: f64, t_cabin: f64) -> Self {
        Self { p_e, p_c, t_cabin }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.p_e, self.p_c, self.t_cabin]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    fn check(&self) -> Result<(), PlantError> {
        if !self.is_finite() {
            return Err(PlantError::NonFinite { term: "state" });
        }
        if self.p_e <= 0.0 {
            return Err(PlantError::InvalidState(format!("p_e = {} <= 0", self.p_e)));
        }
        if self.p_c <= self.p_e {
            return Err(PlantError::InvalidState(format!(
                "p_c = {} <= p_e = {}",
                self.p_c, self.p_e
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    /// Condenser fan air mass flow [kg/s].
    pub mdot_fan: f64,
    /// Compressor speed [Hz].
    pub omega_cmp: f64,
}

impl ControlInput {
    pub fn new(mdot_fan: f64, omega_cmp: f64) -> Self {
        Self { mdot_fan, omega_cmp }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.mdot_fan, self.omega_cmp]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    /// Inlet / ambient air temperature [°C].
    pub t_ac_in: f64,
    /// Vehicle speed [km/h].
    pub v_veh: f64,
    /// Blower air velocity [m/s].
    pub omega_blw: f64,
}

impl Disturbance {
    pub fn new(t_ac_in: f64, v_veh: f64, omega_blw: f64) -> Self {
        Self { t_ac_in, v_veh, omega_blw }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.t_ac_in, self.v_veh, self.omega_blw]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantOutput {
    /// Compressor electrical power [W].
    pub p_cmp: f64,
    /// Condenser fan electrical power [W].
    pub p_fan: f64,
}

impl PlantOutput {
    pub fn to_array(self) -> [f64; 2] {
        [self.p_cmp, self.p_fan]
    }

    pub fn total(&self) -> f64 {
        self.p_cmp + self.p_fan
    }
}

/// Which enthalpy difference drives the compressor power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompressorPowerForm {
    /// `ṁ_r (h_2 − h_l) / η`.
    #[default]
    AsPrinted,
    /// `ṁ_r (h_2 − h_g) / η`, the compression work.
    Isentropic,
}

/// Open box the state has to stay in during integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanityEnvelope {
    pub p_e: (f64, f64),
    pub p_c: (f64, f64),
    pub t_cabin: (f64, f64),
}

impl Default for SanityEnvelope {
    fn default() -> Self {
        Self {
            p_e: (50.0, 900.0),
            p_c: (400.0, 3000.0),
            t_cabin: (-10.0, 70.0),
        }
    }
}

impl SanityEnvelope {
    pub fn contains(&self, x: &PlantState) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v > lo && v < hi;
        inside(x.p_e, self.p_e) && inside(x.p_c, self.p_c) && inside(x.t_cabin, self.t_cabin)
    }

    pub fn bounds(&self) -> [(f64, f64); 3] {
        [self.p_e, self.p_c, self.t_cabin]
    }
}

/// Closure coefficients of the surrogate.
///
/// Field names follow the closures they parameterise, e.g.
/// `d11(p_e) = delta_e0 + delta_e1·p_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    // capacitances [kJ/kPa], [kJ/K]
    pub delta_e0: f64,
    pub delta_e1: f64,
    pub delta_c0: f64,
    pub delta_c1: f64,
    pub d33: f64,
    // saturation temperatures [°C]
    pub alpha_e0: f64,
    pub alpha_e1: f64,
    pub alpha_c0: f64,
    pub alpha_c1: f64,
    // enthalpies [kJ/kg]
    pub gamma_g0: f64,
    pub gamma_g1: f64,
    pub gamma_l0: f64,
    pub gamma_l1: f64,
    pub c_h: f64,
    pub kappa: f64,
    // refrigerant mass flow
    pub c_v: f64,
    pub rho_0: f64,
    pub rho_1: f64,
    // heat exchanger conductances [kW/K]
    pub u_e0: f64,
    pub u_e1: f64,
    pub u_c0: f64,
    pub u_c1: f64,
    pub u_c2: f64,
    // cabin loads
    pub ua_cab: f64,
    pub q_solar: f64,
    pub q_gen: f64,
    // electrical side
    pub eta_e_cmp: f64,
    pub eta_e_fan: f64,
    pub p_max: f64,
    pub omega_max: f64,
    pub mdot_fan_max: f64,
    #[serde(default)]
    pub compressor_power_form: CompressorPowerForm,
    #[serde(default)]
    pub envelope: SanityEnvelope,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            delta_e0: 0.35,
            delta_e1: 1.0e-4,
            delta_c0: 0.1,
            delta_c1: 1.0e-4,
            d33: 15.0,
            alpha_e0: -21.0,
            alpha_e1: 0.0735,
            alpha_c0: 9.0,
            alpha_c1: 0.03,
            gamma_g0: 386.5,
            gamma_g1: 0.035,
            gamma_l0: 211.0,
            gamma_l1: 0.044,
            c_h: 100.0,
            kappa: 0.25,
            c_v: 1.5e-5,
            rho_0: 0.0,
            rho_1: 0.05,
            u_e0: 0.05,
            u_e1: 0.1,
            u_c0: 0.01,
            u_c1: 0.25,
            u_c2: 0.001,
            ua_cab: 0.12,
            q_solar: 1.5,
            q_gen: 0.1,
            eta_e_cmp: 0.9,
            eta_e_fan: 0.8,
            p_max: 300.0,
            omega_max: 300.0,
            mdot_fan_max: 0.48,
            compressor_power_form: CompressorPowerForm::AsPrinted,
            envelope: SanityEnvelope::default(),
        }
    }
}

impl PlantParams {
    pub fn from_json(text: &str) -> Result<Self, PlantError> {
        let p: PlantParams =
            serde_json::from_str(text).map_err(|e| PlantError::InvalidParams(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, PlantError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PlantError::InvalidParams(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |m: &str| Err(PlantError::InvalidParams(m.to_string()));
        if !(self.eta_e_cmp > 0.0 && self.eta_e_cmp <= 1.0) {
            return bad("eta_e_cmp must lie in (0, 1]");
        }
        if !(self.eta_e_fan > 0.0 && self.eta_e_fan <= 1.0) {
            return bad("eta_e_fan must lie in (0, 1]");
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return bad("kappa must lie in (0, 1]");
        }
        if self.d33 <= 0.0 {
            return bad("d33 must be positive");
        }
        if self.omega_max <= 0.0 || self.mdot_fan_max <= 0.0 || self.p_max < 0.0 {
            return bad("fan map needs omega_max > 0, mdot_fan_max > 0, p_max >= 0");
        }
        let env = &self.envelope;
        for (lo, hi) in env.bounds() {
            if !(lo < hi) {
                return bad("envelope bounds must satisfy min < max");
            }
        }
        // capacitances are affine, so checking the envelope corners suffices
        for p in [env.p_e.0.max(0.0), env.p_e.1] {
            if self.d11(p) <= 0.0 {
                return bad("d11 not positive over the envelope");
            }
        }
        for p in [env.p_c.0.max(0.0), env.p_c.1] {
            if self.d22(p) <= 0.0 {
                return bad("d22 not positive over the envelope");
            }
        }
        Ok(())
    }

    pub fn d11(&self, p_e: f64) -> f64 {
        self.delta_e0 + self.delta_e1 * p_e
    }

    pub fn d22(&self, p_c: f64) -> f64 {
        self.delta_c0 + self.delta_c1 * p_c
    }

    pub fn t_evap(&self, p_e: f64) -> f64 {
        self.alpha_e0 + self.alpha_e1 * p_e
    }

    pub fn t_cond(&self, p_c: f64) -> f64 {
        self.alpha_c0 + self.alpha_c1 * p_c
    }

    pub fn h_g(&self, p_e: f64) -> f64 {
        self.gamma_g0 + self.gamma_g1 * p_e
    }

    pub fn h_l(&self, p_c: f64) -> f64 {
        self.gamma_l0 + self.gamma_l1 * p_c
    }

    /// Compressor discharge enthalpy.
    pub fn h_2(&self, p_e: f64, p_c: f64) -> f64 {
        self.h_g(p_e) + self.c_h * ((p_c / p_e).powf(self.kappa) - 1.0)
    }

    /// Refrigerant mass flow [kg/s].
    pub fn mdot_r(&self, omega_cmp: f64, p_e: f64) -> f64 {
        self.c_v * omega_cmp * (self.rho_0 + self.rho_1 * p_e)
    }

    /// Evaporator heat removed from the cabin air [kW].
    pub fn q_evap(&self, x: &PlantState, w: &Disturbance) -> f64 {
        (self.u_e0 + self.u_e1 * w.omega_blw) * (x.t_cabin - self.t_evap(x.p_e))
    }

    /// Condenser heat rejected to ambient [kW].
    pub fn q_cond(&self, x: &PlantState, u: &ControlInput, w: &Disturbance) -> f64 {
        (self.u_c0 + self.u_c1 * u.mdot_fan + self.u_c2 * w.v_veh)
            * (self.t_cond(x.p_c) - w.t_ac_in)
    }

    /// Cabin envelope load [kW].
    pub fn q_in(&self, x: &PlantState, w: &Disturbance) -> f64 {
        self.ua_cab * (w.t_ac_in - x.t_cabin) + self.q_solar
    }

    /// Fan speed from the linear fan map.
    pub fn omega_fan(&self, mdot_fan: f64) -> f64 {
        self.omega_max * mdot_fan / self.mdot_fan_max
    }
}

/// Right-hand side of the plant ODE: `[ṗ_e, ṗ_c, Ṫ_cabin]`.
pub fn plant_derivative(
    x: &PlantState,
    u: &ControlInput,
    w: &Disturbance,
    p: &PlantParams,
) -> Result<[f64; 3], PlantError> {
    x.check()?;
    let d11 = p.d11(x.p_e);
    if !(d11 > 0.0) {
        return Err(PlantError::NonPositiveCapacitance { term: "d11", value: d11 });
    }
    let d22 = p.d22(x.p_c);
    if !(d22 > 0.0) {
        return Err(PlantError::NonPositiveCapacitance { term: "d22", value: d22 });
    }
    if !(p.d33 > 0.0) {
        return Err(PlantError::NonPositiveCapacitance { term: "d33", value: p.d33 });
    }

    let mdot_r = p.mdot_r(u.omega_cmp, x.p_e);
    let h_g = p.h_g(x.p_e);
    let h_l = p.h_l(x.p_c);
    // isenthalpic expansion
    let h_4 = h_l;
    let h_2 = p.h_2(x.p_e, x.p_c);
    let q_e = p.q_evap(x, w);
    let q_c = p.q_cond(x, u, w);
    let q_in = p.q_in(x, w);

    let dp_e = (q_e + mdot_r * (h_4 - h_g)) / d11;
    let dp_c = (-q_c + mdot_r * (h_2 - h_l)) / d22;
    let dt_cab = (-q_e + q_in + p.q_gen) / p.d33;

    for (term, v) in [("dp_e/dt", dp_e), ("dp_c/dt", dp_c), ("dT_cabin/dt", dt_cab)] {
        if !v.is_finite() {
            return Err(PlantError::NonFinite { term });
        }
    }
    Ok([dp_e, dp_c, dt_cab])
}

/// Compressor and fan electrical power for the current state and input.
pub fn plant_outputs(
    x: &PlantState,
    u: &ControlInput,
    p: &PlantParams,
) -> Result<PlantOutput, PlantError> {
    x.check()?;
    let mdot_r = p.mdot_r(u.omega_cmp, x.p_e);
    let h_2 = p.h_2(x.p_e, x.p_c);
    let dh = match p.compressor_power_form {
        CompressorPowerForm::AsPrinted => h_2 - p.h_l(x.p_c),
        CompressorPowerForm::Isentropic => h_2 - p.h_g(x.p_e),
    };
    // kW -> W
    let p_cmp = 1000.0 * mdot_r * dh / p.eta_e_cmp;
    let omega_fan = p.omega_fan(u.mdot_fan);
    let p_fan = (1.0 / p.eta_e_fan) * (p.p_max / p.omega_max.powi(3)) * omega_fan.powi(3);

    if !p_cmp.is_finite() || !p_fan.is_finite() {
        return Err(PlantError::NonFinite { term: "power" });
    }
    if p_cmp < 0.0 {
        return Err(PlantError::NegativePower { which: "compressor", value: p_cmp });
    }
    if p_fan < 0.0 {
        return Err(PlantError::NegativePower { which: "fan", value: p_fan });
    }
    Ok(PlantOutput { p_cmp, p_fan })
}

/// One classical fourth-order Runge–Kutta step of `ẋ = f(x)`.
pub fn rk4_step<const D: usize, E>(
    x: &[f64; D],
    dt: f64,
    mut f: impl FnMut(&[f64; D]) -> Result<[f64; D], E>,
) -> Result<[f64; D], E> {
    let axpy = |a: &[f64; D], s: f64, b: &[f64; D]| -> [f64; D] {
        std::array::from_fn(|i| a[i] + s * b[i])
    };
    let k1 = f(x)?;
    let k2 = f(&axpy(x, 0.5 * dt, &k1))?;
    let k3 = f(&axpy(x, 0.5 * dt, &k2))?;
    let k4 = f(&axpy(x, dt, &k3))?;
    Ok(std::array::from_fn(|i| {
        x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

/// Advances the plant by `dt` seconds with `u` and `w` held constant.
pub fn step_plant(
    x: &PlantState,
    u: &ControlInput,
    w: &Disturbance,
    dt: f64,
    p: &PlantParams,
) -> Result<PlantState, PlantError> {
    assert!(dt > 0.0, "step size must be positive");
    let diverged = |s: [f64; 3]| PlantError::Diverged { step: 0, state: s };
    let next = rk4_step(&x.to_array(), dt, |s| {
        let xs = PlantState::from_array(*s);
        // intermediate stages may leave the physical domain before the
        // envelope check on the final state gets a chance to report it
        if !p.envelope.contains(&xs) {
            return Err(diverged(*s));
        }
        plant_derivative(&xs, u, w, p)
    })?;
    let next = PlantState::from_array(next);
    if !next.is_finite() || !p.envelope.contains(&next) {
        return Err(diverged(next.to_array()));
    }
    Ok(next)
}

/// Bounds of a scalar channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelBounds {
    pub min: f64,
    pub max: f64,
}

impl ChannelBounds {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBounds {
    pub mdot_fan: ChannelBounds,
    pub omega_cmp: ChannelBounds,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            mdot_fan: ChannelBounds::new(0.01, 0.48),
            omega_cmp: ChannelBounds::new(13.0, 83.0),
        }
    }
}

/// PI gains of the cabin-temperature tracking controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiGains {
    /// Proportional gain [Hz/K].
    pub kp: f64,
    /// Integral gain [Hz/(K·s)].
    pub ki: f64,
    /// Compressor speed at zero error and zero integral [Hz].
    pub bias: f64,
    /// Fan flow scheduled per compressor Hz [kg/s/Hz].
    pub fan_per_hz: f64,
    /// Controller sample time [s].
    pub dt: f64,
}

impl Default for PiGains {
    fn default() -> Self {
        Self {
            kp: 15.0,
            ki: 0.1,
            bias: 40.0,
            fan_per_hz: 0.48 / 83.0,
            dt: 1.0,
        }
    }
}

/// PI law on `T_cabin − T_ref` with conditional-integration anti-windup.
///
/// Returns the clamped command and the updated integral state. The integral
/// is frozen while the compressor command saturates, unless the error would
/// drive it back out of saturation.
pub fn baseline_controller(
    x: &PlantState,
    t_ref: f64,
    gains: &PiGains,
    bounds: &ControlBounds,
    integral: f64,
) -> (ControlInput, f64) {
    let err = x.t_cabin - t_ref;
    let raw = gains.bias + gains.kp * err + gains.ki * integral;
    let omega_cmp = if raw.is_finite() {
        bounds.omega_cmp.clamp(raw)
    } else if err > 0.0 {
        bounds.omega_cmp.max
    } else {
        bounds.omega_cmp.min
    };
    let saturated_high = raw > bounds.omega_cmp.max;
    let saturated_low = raw < bounds.omega_cmp.min;
    let integrate = err.is_finite()
        && ((!saturated_high && !saturated_low)
            || (saturated_high && err < 0.0)
            || (saturated_low && err > 0.0));
    let integral = if integrate { integral + err * gains.dt } else { integral };
    let mdot_fan = bounds.mdot_fan.clamp(gains.fan_per_hz * omega_cmp);
    (ControlInput { mdot_fan, omega_cmp }, integral)
}

/// Vehicle speed profile on a 1 s grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveCycle {
    /// Speed [km/h] at t = 0, 1, 2, ... s.
    pub speed_kmh: Vec<f64>,
}

impl DriveCycle {
    pub fn duration_s(&self) -> usize {
        self.speed_kmh.len().saturating_sub(1)
    }

    /// Disturbance sequence with constant inlet temperature and blower speed.
    pub fn disturbances(&self, t_ac_in: f64, omega_blw: f64) -> Vec<Disturbance> {
        self.speed_kmh
            .iter()
            .map(|&v| Disturbance::new(t_ac_in, v, omega_blw))
            .collect()
    }
}

/// Reads a `t_s,v_kmh` CSV file.
pub fn load_drive_cycle(path: &Path) -> Result<DriveCycle, CycleError> {
    let mut text = String::new();
    fs::File::open(path)?.read_to_string(&mut text)?;
    parse_drive_cycle(&text)
}

/// Parses a `t_s,v_kmh` CSV document and resamples it onto a 1 s grid by
/// linear interpolation.
pub fn parse_drive_cycle(text: &str) -> Result<DriveCycle, CycleError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let perr = |line: usize, message: String| CycleError::Parse { line, message };

    let headers = reader.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let t_col = col("t_s").ok_or_else(|| perr(1, "missing column `t_s`".into()))?;
    let v_col = col("v_kmh").ok_or_else(|| perr(1, "missing column `v_kmh`".into()))?;

    let mut samples: Vec<(f64, f64)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        let field = |c: usize, name: &str| -> Result<f64, CycleError> {
            let s = rec.get(c).ok_or_else(|| perr(line, format!("missing `{name}`")))?;
            s.parse::<f64>()
                .map_err(|_| perr(line, format!("`{name}` is not a number: {s:?}")))
        };
        let t = field(t_col, "t_s")?;
        let v = field(v_col, "v_kmh")?;
        if !t.is_finite() || !v.is_finite() {
            return Err(perr(line, "non-finite value".into()));
        }
        if v < 0.0 {
            return Err(perr(line, format!("negative speed {v}")));
        }
        if let Some(&(t_prev, _)) = samples.last() {
            if t <= t_prev {
                return Err(perr(line, format!("time {t} is not increasing (previous {t_prev})")));
            }
        }
        samples.push((t, v));
    }
    if samples.is_empty() {
        return Err(perr(2, "no samples".into()));
    }

    let t0 = samples[0].0;
    let span = samples.last().unwrap().0 - t0;
    let n = span.floor() as usize + 1;
    let mut speed = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64;
        while j + 1 < samples.len() && samples[j + 1].0 < t {
            j += 1;
        }
        let (ta, va) = samples[j];
        let v = if j + 1 < samples.len() {
            let (tb, vb) = samples[j + 1];
            va + (vb - va) * (t - ta) / (tb - ta)
        } else {
            va
        };
        speed.push(v);
    }
    Ok(DriveCycle { speed_kmh: speed })
}
