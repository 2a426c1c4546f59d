//! Unicycle source seeker with a servo-swept sensor arm.
//!
//! The sensor sits at `r_s = r_c + a·Rot(θ)·p(ωt)` where `p = (cos φ, sin φ)`
//! and `φ` is the triangle arm angle. The control law is
//! `(v_c, ω_c) = diag(k_v, k_ω)·h(ωt, a)·J(r_s)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demod::{DemodSpec, Variant};
use crate::error::{param, Error, Result};
use crate::esc::rk4;
use crate::estimator::CostMap;
use crate::multiindex::DerivativeBasis;
use crate::signals::{triangle_arm_angle, DitherSpec, ExtendedDither, TrigSignal, TrigTerm};

/// Reference pressure of the sound pressure level, in pascal.
pub const P_REF: f64 = 20e-6;
/// Source strength giving 80 dB at one meter.
pub const ACOUSTIC_S: f64 = 0.2;
pub const ACOUSTIC_R0: f64 = 1e-3;
/// Fitted photoresistor weights `w₁ … w₆`.
pub const PHOTORESISTOR_WEIGHTS: [f64; 6] = [
    8.28082113e3,
    7.90425287,
    4.42130406e2,
    5.36416164e-13,
    1.68542637e-16,
    2.18515692e-18,
];
pub const DEFAULT_REACH_RADIUS: f64 = 0.5;

/// Pose of the vehicle center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading in radians.
    pub theta: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }
}

/// Arm angle in radians at dither time `τ` (period 2, range `[−π/2, π/2]`).
pub fn arm_angle(tau: f64) -> f64 {
    triangle_arm_angle(tau)
}

/// Sensor position at time `t` for arm length `a` and dither rate `omega`.
pub fn sensor_position(state: &VehicleState, t: f64, a: f64, omega: f64) -> [f64; 2] {
    let dir = state.theta + arm_angle(omega * t);
    [state.x + a * dir.cos(), state.y + a * dir.sin()]
}

/// Signed angle in degrees from the bearing of the source to the arm axis,
/// wrapped to `(−180, 180]`. Negative when the source lies counterclockwise
/// of the arm.
pub fn sensor_orientation_angle(
    state: &VehicleState,
    t: f64,
    a: f64,
    omega: f64,
    source: [f64; 2],
) -> Result<f64> {
    let rs = sensor_position(state, t, a, omega);
    bearing_offset(state.theta + arm_angle(omega * t), rs, source)
}

fn bearing_offset(arm_dir: f64, rs: [f64; 2], source: [f64; 2]) -> Result<f64> {
    let (dx, dy) = (source[0] - rs[0], source[1] - rs[1]);
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::UndefinedBearing);
    }
    Ok(wrap_degrees((arm_dir - dy.atan2(dx)).to_degrees()))
}

fn wrap_degrees(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Sound pressure level in dB of a monopole at `source`.
pub fn acoustic_j(rs: [f64; 2], source: [f64; 2], s: f64, p_ref: f64, r0: f64) -> f64 {
    let d = (rs[0] - source[0]).hypot(rs[1] - source[1]);
    -20.0 * d.max(r0).log10() + 20.0 * (s / p_ref).log10()
}

/// Quadratic resistance fit in distance `d` (m) and orientation `beta` (deg).
pub fn photoresistor_j(d: f64, beta: f64, w: &[f64; 6]) -> f64 {
    w[0] * d * d + w[1] * beta * beta + w[2] * d * beta + w[3] * d + w[4] * beta + w[5]
}

/// Cost field seen by the sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldConfig {
    Acoustic {
        source: [f64; 2],
        #[serde(default = "default_s")]
        s: f64,
        #[serde(default = "default_p_ref")]
        p_ref: f64,
        #[serde(default = "default_r0")]
        r0: f64,
    },
    Photoresistor {
        source: [f64; 2],
        #[serde(default = "default_weights")]
        weights: [f64; 6],
    },
    /// A built-in cost map evaluated at `r_s − r*`.
    Map { source: [f64; 2], name: String },
}

fn default_s() -> f64 {
    ACOUSTIC_S
}
fn default_p_ref() -> f64 {
    P_REF
}
fn default_r0() -> f64 {
    ACOUSTIC_R0
}
fn default_weights() -> [f64; 6] {
    PHOTORESISTOR_WEIGHTS
}

/// A validated field, ready to evaluate.
#[derive(Clone)]
pub enum CostField {
    Acoustic { source: [f64; 2], s: f64, p_ref: f64, r0: f64 },
    Photoresistor { source: [f64; 2], weights: [f64; 6] },
    Map { source: [f64; 2], map: Arc<CostMap> },
}

impl std::fmt::Debug for CostField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Acoustic { source, .. } => write!(f, "Acoustic({source:?})"),
            Self::Photoresistor { source, .. } => write!(f, "Photoresistor({source:?})"),
            Self::Map { source, .. } => write!(f, "Map({source:?})"),
        }
    }
}

impl CostField {
    pub fn acoustic(source: [f64; 2]) -> Self {
        Self::Acoustic { source, s: ACOUSTIC_S, p_ref: P_REF, r0: ACOUSTIC_R0 }
    }

    pub fn photoresistor(source: [f64; 2]) -> Self {
        Self::Photoresistor { source, weights: PHOTORESISTOR_WEIGHTS }
    }

    pub fn from_config(cfg: &FieldConfig) -> Result<Self> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        Ok(match cfg {
            FieldConfig::Acoustic { source, s, p_ref, r0 } => {
                if !(finite(source) && *s > 0.0 && *p_ref > 0.0 && *r0 > 0.0) {
                    return Err(Error::Config("acoustic field needs finite source and positive s, p_ref, r0".into()));
                }
                Self::Acoustic { source: *source, s: *s, p_ref: *p_ref, r0: *r0 }
            }
            FieldConfig::Photoresistor { source, weights } => {
                if !(finite(source) && finite(weights)) {
                    return Err(Error::Config("photoresistor field needs finite source and weights".into()));
                }
                Self::Photoresistor { source: *source, weights: *weights }
            }
            FieldConfig::Map { source, name } => {
                if !finite(source) {
                    return Err(Error::Config("map field needs a finite source".into()));
                }
                let map = CostMap::builtin(name, 2).map_err(|e| Error::Config(e.to_string()))?;
                Self::Map { source: *source, map: Arc::new(map) }
            }
        })
    }

    pub fn source(&self) -> [f64; 2] {
        match self {
            Self::Acoustic { source, .. } | Self::Photoresistor { source, .. } | Self::Map { source, .. } => *source,
        }
    }

    /// Whether the reading depends on the sensor orientation.
    pub fn orientation_sensitive(&self) -> bool {
        matches!(self, Self::Photoresistor { .. })
    }

    /// Reading at sensor position `rs` with the arm pointing along `arm_dir` (rad).
    pub fn eval(&self, rs: [f64; 2], arm_dir: f64) -> Result<f64> {
        match self {
            Self::Acoustic { source, s, p_ref, r0 } => Ok(acoustic_j(rs, *source, *s, *p_ref, *r0)),
            Self::Photoresistor { source, weights } => {
                let d = (rs[0] - source[0]).hypot(rs[1] - source[1]);
                // on the source the bearing is undefined but the reading is not
                let beta = match bearing_offset(arm_dir, rs, *source) {
                    Ok(b) => b,
                    Err(_) => 0.0,
                };
                Ok(photoresistor_j(d, beta, weights))
            }
            Self::Map { source, map } => map.eval(&[rs[0] - source[0], rs[1] - source[1]]),
        }
    }
}

/// Which relative-gradient demodulator the vehicle uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VehicleDemod {
    /// Centered covariance inverse applied to the raw arm signal.
    PaperVerbatim,
    /// Centered covariance inverse applied to the centered arm signal.
    ZeroMean,
    /// Cross-variance route with `r(t) = (−cos 2πt, −cos πt)`.
    Crossvariance,
}

impl VehicleDemod {
    pub fn from_variant(v: Variant) -> Result<Self> {
        match v {
            Variant::PaperVerbatim => Ok(Self::PaperVerbatim),
            Variant::ZeroMean => Ok(Self::ZeroMean),
            Variant::CrossVariance => Ok(Self::Crossvariance),
            other => Err(Error::Config(format!("variant {} is not available for the vehicle", other.name()))),
        }
    }

    /// Synthesize the gradient demodulator for the rotating arm.
    pub fn synthesize(self, tol: f64) -> Result<DemodSpec> {
        let ext = ExtendedDither::new(DitherSpec::triangle_arm(), DerivativeBasis::enumerate(2, 1, 1)?)?;
        match self {
            Self::PaperVerbatim => DemodSpec::paper_verbatim(ext, tol),
            Self::ZeroMean => DemodSpec::covariance(ext, true, tol),
            Self::Crossvariance => DemodSpec::cross_variance(Arc::new(arm_auxiliary()), ext, true, tol),
        }
    }
}

/// The auxiliary signal `r(t) = (−cos 2πt, −cos πt)`.
pub fn arm_auxiliary() -> TrigSignal {
    TrigSignal::new(vec![vec![TrigTerm::cos(-1.0, 2.0 * PI)], vec![TrigTerm::cos(-1.0, PI)]])
        .expect("static auxiliary signal is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPose {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub heading_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub k_v: f64,
    pub k_omega: f64,
}

/// Dither rate in rad/s, or in rpm with `omega_rpm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_rpm: Option<f64>,
    pub amplitude: f64,
}

impl ArmConfig {
    pub fn omega_rad_s(&self) -> Result<f64> {
        match (self.omega, self.omega_rpm) {
            (Some(w), None) => Ok(w),
            (None, Some(rpm)) => Ok(rpm * 2.0 * PI / 60.0),
            _ => Err(Error::Config("set exactly one of dither.omega and dither.omega_rpm".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "default_reach")]
    pub reach_radius: f64,
    /// Log every `stride`-th step.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_reach() -> f64 {
    DEFAULT_REACH_RADIUS
}
fn default_stride() -> usize {
    1
}

/// A scenario file. Angles are in degrees, lengths in meters, rates in rad/s.
///
/// ```toml
/// name = "example"
/// demod = "crossvariance"
///
/// [initial]
/// x = 0.0
/// y = 0.0
/// heading_deg = 0.0
///
/// [gains]
/// k_v = 2e-4
/// k_omega = 9.5e-3
///
/// [dither]
/// omega_rpm = 40.0
/// amplitude = 0.154
///
/// [field]
/// kind = "acoustic"
/// source = [3.0, 3.0]
///
/// [run]
/// horizon = 100.0
/// dt = 0.002
/// stride = 10
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub demod: VehicleDemod,
    #[serde(default = "default_demod_tol")]
    pub demod_tol: f64,
    pub initial: InitialPose,
    pub gains: Gains,
    pub dither: ArmConfig,
    pub field: FieldConfig,
    pub run: RunConfig,
}

fn default_demod_tol() -> f64 {
    1e-11
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("scenario: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("scenario: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let omega = self.dither.omega_rad_s()?;
        let bad = |m: &str| Err(Error::Config(format!("scenario {}: {m}", self.name)));
        if !(omega > 0.0 && omega.is_finite()) {
            return bad("dither rate must be positive");
        }
        if !(self.dither.amplitude > 0.0 && self.dither.amplitude < 1.0) {
            return bad("arm length must lie in (0, 1)");
        }
        if !(self.run.horizon > 0.0 && self.run.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if !(self.run.dt > 0.0 && self.run.dt <= self.run.horizon) {
            return bad("dt must be positive and no larger than the horizon");
        }
        if !(self.run.reach_radius > 0.0) {
            return bad("reach radius must be positive");
        }
        if !(self.demod_tol > 0.0) {
            return bad("demod_tol must be positive");
        }
        let p = &self.initial;
        if ![p.x, p.y, p.heading_deg, self.gains.k_v, self.gains.k_omega].iter().all(|v| v.is_finite()) {
            return bad("pose and gains must be finite");
        }
        CostField::from_config(&self.field)?;
        Ok(())
    }

    pub fn initial_state(&self) -> VehicleState {
        VehicleState::new(self.initial.x, self.initial.y, self.initial.heading_deg.to_radians())
    }
}

/// `(v_c, ω_c)` and the sensor reading at time `t`.
#[allow(clippy::too_many_arguments)]
pub fn control_law(
    demod: &DemodSpec,
    field: &CostField,
    state: &VehicleState,
    t: f64,
    gains: Gains,
    a: f64,
    omega: f64,
) -> Result<(f64, f64, f64)> {
    let tau = omega * t;
    let dir = state.theta + arm_angle(tau);
    let rs = [state.x + a * dir.cos(), state.y + a * dir.sin()];
    let j = field.eval(rs, dir)?;
    let mut h = [0.0; 2];
    demod.h_into(tau, a, &mut h);
    Ok((gains.k_v * h[0] * j, gains.k_omega * h[1] * j, j))
}

/// One logged row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSample {
    pub t: f64,
    pub state: VehicleState,
    pub phi: f64,
    pub sensor: [f64; 2],
    pub j: f64,
    pub v: f64,
    pub omega_c: f64,
    pub dist: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioMetrics {
    /// First time the center is within the reach radius.
    pub reach_time: Option<f64>,
    /// Mean center distance over the last 20% of the horizon.
    pub terminal_mean_distance: f64,
    pub path_length: f64,
    /// Largest center distance at or after `reach_time`.
    pub max_distance_after_reach: Option<f64>,
}

impl std::fmt::Display for ScenarioMetrics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.reach_time {
            Some(t) => write!(f, "reach time: {t:.3} s")?,
            None => write!(f, "reach time: none")?,
        }
        write!(
            f,
            ", terminal mean distance: {:.4} m, path length: {:.4} m",
            self.terminal_mean_distance, self.path_length
        )
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub name: String,
    pub samples: Vec<VehicleSample>,
    pub metrics: ScenarioMetrics,
    /// Set when the integrator stopped on a non-finite state; samples end there.
    pub diverged_at: Option<f64>,
}

impl ScenarioRun {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x_c", "y_c", "theta", "phi", "x_s", "y_s", "J", "v_c", "omega_c", "dist_to_source"])?;
        for s in &self.samples {
            let row = [
                s.t, s.state.x, s.state.y, s.state.theta, s.phi, s.sensor[0], s.sensor[1], s.j, s.v, s.omega_c, s.dist,
            ];
            out.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Whether the center, once within `radius`, never left it among the logged samples.
    pub fn settled_within(&self, radius: f64) -> bool {
        match self.samples.iter().position(|s| s.dist < radius) {
            Some(i) => self.samples[i..].iter().all(|s| s.dist < radius),
            None => false,
        }
    }
}

/// Integrate a scenario with fixed-step RK4.
///
/// A non-finite state ends the run early; the partial run is returned with
/// `diverged_at` set.
pub fn simulate_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    cfg.validate()?;
    let demod = cfg.demod.synthesize(cfg.demod_tol)?;
    let field = CostField::from_config(&cfg.field)?;
    simulate_with(cfg, &demod, &field)
}

/// Integrate with a prebuilt demodulator and field.
pub fn simulate_with(cfg: &ScenarioConfig, demod: &DemodSpec, field: &CostField) -> Result<ScenarioRun> {
    if demod.len() != 2 || demod.basis().max_order() != 1 {
        return Err(param("vehicle demodulator must estimate the two-component gradient"));
    }
    let omega = cfg.dither.omega_rad_s()?;
    let a = cfg.dither.amplitude;
    let gains = cfg.gains;
    let source = field.source();
    let horizon = cfg.run.horizon;
    let stride = cfg.run.stride.max(1);
    let reach_radius = cfg.run.reach_radius;

    let mut err = None;
    let rhs = |t: f64, x: &[f64], dx: &mut [f64]| {
        let st = VehicleState::new(x[0], x[1], x[2]);
        match control_law(demod, field, &st, t, gains, a, omega) {
            Ok((v, w, _)) => {
                dx[0] = v * x[2].cos();
                dx[1] = v * x[2].sin();
                dx[2] = w;
                dx.iter().all(|d| d.is_finite())
            }
            Err(e) => {
                err = Some(e);
                false
            }
        }
    };

    let mut samples = Vec::new();
    let mut step = 0usize;
    let mut reach_time = None;
    let mut max_after = None::<f64>;
    let mut path = 0.0;
    let mut prev = [cfg.initial.x, cfg.initial.y];
    let (mut tail_sum, mut tail_n) = (0.0, 0usize);
    let tail_start = 0.8 * horizon;
    let mut observe = |t: f64, x: &[f64]| -> Result<()> {
        let st = VehicleState::new(x[0], x[1], x[2]);
        let dist = (x[0] - source[0]).hypot(x[1] - source[1]);
        path += (x[0] - prev[0]).hypot(x[1] - prev[1]);
        prev = [x[0], x[1]];
        if reach_time.is_none() && dist < reach_radius {
            reach_time = Some(t);
        }
        if reach_time.is_some() {
            max_after = Some(max_after.map_or(dist, |m| m.max(dist)));
        }
        if t >= tail_start {
            tail_sum += dist;
            tail_n += 1;
        }
        let last = t >= horizon - 1e-12 * horizon.max(1.0);
        if step % stride == 0 || last {
            let (v, w, j) = control_law(demod, field, &st, t, gains, a, omega)?;
            samples.push(VehicleSample {
                t,
                state: st,
                phi: arm_angle(omega * t),
                sensor: sensor_position(&st, t, a, omega),
                j,
                v,
                omega_c: w,
                dist,
            });
        }
        step += 1;
        Ok(())
    };
    let x0 = [cfg.initial.x, cfg.initial.y, cfg.initial.heading_deg.to_radians()];
    let result = rk4(rhs, &x0, horizon, cfg.run.dt, 1, &mut observe);
    let diverged_at = match result {
        Ok(_) => None,
        Err(Error::Divergence { t, .. }) => match err {
            Some(e) => return Err(e),
            None => Some(t),
        },
        Err(e) => return Err(e),
    };
    let terminal_mean_distance = if tail_n > 0 { tail_sum / tail_n as f64 } else { f64::NAN };
    Ok(ScenarioRun {
        name: cfg.name.clone(),
        samples,
        metrics: ScenarioMetrics {
            reach_time,
            terminal_mean_distance,
            path_length: path,
            max_distance_after_reach: max_after,
        },
        diverged_at,
    })
}

/// Run independent scenarios in parallel; results keep the input order.
pub fn simulate_batch(cfgs: &[ScenarioConfig]) -> Vec<Result<ScenarioRun>> {
    cfgs.par_iter().map(simulate_scenario).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Acoustic scenario with a fast dither, where averaging is accurate.
    pub(crate) fn fast_acoustic(demod: VehicleDemod, heading_deg: f64, horizon: f64) -> ScenarioConfig {
        ScenarioConfig {
            name: "fast".into(),
            demod,
            demod_tol: 1e-11,
            initial: InitialPose { x: 0.0, y: 0.0, heading_deg },
            gains: Gains { k_v: 2e-2, k_omega: 0.1 },
            dither: ArmConfig { omega: Some(1000.0), omega_rpm: None, amplitude: 0.154 },
            field: FieldConfig::Acoustic { source: [3.0, 3.0], s: ACOUSTIC_S, p_ref: P_REF, r0: ACOUSTIC_R0 },
            run: RunConfig { horizon, dt: 1e-4, reach_radius: 0.5, stride: 20 },
        }
    }

    #[test]
    fn arm_angle_examples() {
        assert!(close(arm_angle(0.0), -FRAC_PI_2, 1e-15));
        assert!(close(arm_angle(0.5), 0.0, 1e-15));
        assert!(close(arm_angle(1.0), FRAC_PI_2, 1e-15));
        assert!(close(arm_angle(1.5), 0.0, 1e-15));
        assert!(close(arm_angle(7.25), FRAC_PI_4, 1e-14));
    }

    #[test]
    fn sensor_position_examples() {
        let a = 0.154;
        // arm straight ahead at τ = 0.5
        let r = sensor_position(&VehicleState::new(1.0, 2.0, 0.0), 0.5, a, 1.0);
        assert!(close(r[0], 1.0 + a, 1e-15) && close(r[1], 2.0, 1e-15));
        let r = sensor_position(&VehicleState::new(1.0, 2.0, FRAC_PI_2), 0.5, a, 1.0);
        assert!(close(r[0], 1.0, 1e-15) && close(r[1], 2.0 + a, 1e-15));
        // φ(0.75) = π/4 composes with θ = π/4
        let r = sensor_position(&VehicleState::new(0.0, 0.0, FRAC_PI_4), 0.75, a, 1.0);
        assert!(close(r[0], 0.0, 1e-15) && close(r[1], a, 1e-15));
    }

    #[test]
    fn acoustic_examples() {
        let src = [3.0, 3.0];
        let j = |d: f64| acoustic_j([3.0 + d, 3.0], src, ACOUSTIC_S, P_REF, ACOUSTIC_R0);
        assert!(close(j(1.0), 80.0, 1e-12));
        assert!(close(j(10.0), 60.0, 1e-12));
        assert_eq!(j(1e-5), j(ACOUSTIC_R0));
        assert_eq!(j(0.0), j(ACOUSTIC_R0));
    }

    #[test]
    fn photoresistor_examples() {
        let w = &PHOTORESISTOR_WEIGHTS;
        assert_eq!(photoresistor_j(0.0, 0.0, w), 2.18515692e-18);
        assert!(close(photoresistor_j(1.0, 0.0, w), 8280.82113, 1e-9));
        let want = 8.28082113e3 + 100.0 * 7.90425287 + 10.0 * 4.42130406e2;
        assert!(close(photoresistor_j(1.0, 10.0, w), want, 1e-9));
        assert!(close(photoresistor_j(1.0, 10.0, w), 13492.5505, 1e-4));
    }

    #[test]
    fn photoresistor_nonnegative_on_desk() {
        let w = &PHOTORESISTOR_WEIGHTS;
        for i in 0..=50 {
            for k in 0..=72 {
                let d = i as f64 * 0.1;
                let beta = -180.0 + 5.0 * k as f64;
                assert!(photoresistor_j(d, beta, w) >= 0.0, "d={d} beta={beta}");
            }
        }
    }

    #[test]
    fn bearing_examples() {
        let a = 0.154;
        let st = VehicleState::new(0.0, 0.0, 0.0);
        // τ = 0.5 puts the arm straight ahead, sensor at (a, 0)
        let ahead = sensor_orientation_angle(&st, 0.5, a, 1.0, [5.0, 0.0]).unwrap();
        assert!(close(ahead, 0.0, 1e-12));
        let behind = sensor_orientation_angle(&st, 0.5, a, 1.0, [-5.0, 0.0]).unwrap();
        assert_eq!(behind, 180.0);
        let left = sensor_orientation_angle(&st, 0.5, a, 1.0, [a + 1.0, 1.0]).unwrap();
        assert!(close(left, -45.0, 1e-12));
        assert!(matches!(
            sensor_orientation_angle(&st, 0.5, a, 1.0, [a, 0.0]),
            Err(Error::UndefinedBearing)
        ));
    }

    #[test]
    fn photoresistor_prefers_facing_the_source() {
        let f = CostField::photoresistor([2.0, 0.0]);
        let facing = f.eval([1.0, 0.0], 0.0).unwrap();
        let away = f.eval([1.0, 0.0], PI).unwrap();
        assert!(facing < away);
        assert!(f.orientation_sensitive() && !CostField::acoustic([0.0, 0.0]).orientation_sensitive());
    }

    #[test]
    fn zero_field_gives_zero_command() {
        let demod = VehicleDemod::Crossvariance.synthesize(1e-11).unwrap();
        let field = CostField::Map { source: [0.0, 0.0], map: Arc::new(CostMap::new("zero", 2, |_| 0.0)) };
        let gains = Gains { k_v: 1.0, k_omega: 1.0 };
        for k in 0..20 {
            let (v, w, _) = control_law(&demod, &field, &VehicleState::new(1.0, 2.0, 0.3), k as f64 * 0.13, gains, 0.154, 3.0).unwrap();
            assert_eq!((v, w), (0.0, 0.0));
        }
    }

    #[test]
    fn demodulators_match_closed_forms() {
        let a = 0.154;
        let pv = VehicleDemod::PaperVerbatim.synthesize(1e-12).unwrap();
        let zm = VehicleDemod::ZeroMean.synthesize(1e-12).unwrap();
        let hr = VehicleDemod::Crossvariance.synthesize(1e-12).unwrap();
        let c1 = 2.0 / (a * (1.0 - 8.0 / (PI * PI)));
        for k in 0..40 {
            let t = k as f64 * 0.0517;
            let phi = arm_angle(t);
            let (p, z, r) = (pv.h(t, a), zm.h(t, a), hr.h(t, a));
            assert!(close(p[0], c1 * phi.cos(), 1e-8 * c1));
            assert!(close(p[1], 2.0 * phi.sin() / a, 1e-8));
            assert!(close(z[0], c1 * (phi.cos() - 2.0 / PI), 1e-8 * c1));
            assert!(close(r[0], -3.0 * PI / (2.0 * a) * (2.0 * PI * t).cos(), 1e-7));
            assert!(close(r[1], -2.0 / a * (PI * t).cos(), 1e-7));
        }
    }

    #[test]
    fn zero_gains_stay_put() {
        let mut cfg = fast_acoustic(VehicleDemod::ZeroMean, 30.0, 1.0);
        cfg.gains = Gains { k_v: 0.0, k_omega: 0.0 };
        let run = simulate_scenario(&cfg).unwrap();
        assert_eq!(run.metrics.reach_time, None);
        assert_eq!(run.metrics.path_length, 0.0);
        assert!(run.samples.iter().all(|s| s.state == run.samples[0].state));
        assert!(run.metrics.to_string().contains("reach time: none"));
    }

    #[test]
    fn turn_only_keeps_position() {
        let mut cfg = fast_acoustic(VehicleDemod::Crossvariance, 0.0, 1.0);
        cfg.gains.k_v = 0.0;
        let run = simulate_scenario(&cfg).unwrap();
        assert!(run.samples.iter().all(|s| s.state.x == 0.0 && s.state.y == 0.0));
        assert!(run.samples.last().unwrap().state.theta != 0.0);
    }

    #[test]
    fn no_turn_gain_keeps_heading() {
        let mut cfg = fast_acoustic(VehicleDemod::ZeroMean, 20.0, 2.0);
        cfg.gains.k_omega = 0.0;
        let run = simulate_scenario(&cfg).unwrap();
        let h0 = 20f64.to_radians();
        assert!(run.samples.iter().all(|s| s.state.theta == h0));
        // the center moves along the fixed heading line
        for s in &run.samples {
            assert!((s.state.y - s.state.x * h0.tan()).abs() < 1e-12);
        }
    }

    #[test]
    fn heading_drifts_toward_the_source() {
        for (source, sign) in [([0.0, 3.0], 1.0), ([0.0, -3.0], -1.0)] {
            let mut cfg = fast_acoustic(VehicleDemod::Crossvariance, 0.0, 0.2);
            cfg.field = FieldConfig::Acoustic { source, s: ACOUSTIC_S, p_ref: P_REF, r0: ACOUSTIC_R0 };
            cfg.run.stride = 1;
            let run = simulate_scenario(&cfg).unwrap();
            let mean: f64 = run.samples[..run.samples.len() - 1].iter().map(|s| s.omega_c).sum::<f64>()
                / (run.samples.len() - 1) as f64;
            assert!(mean * sign > 0.0, "mean ω_c {mean}");
        }
    }

    #[test]
    fn fast_dither_seeks_and_transits_monotonically() {
        let cfg = fast_acoustic(VehicleDemod::Crossvariance, 0.0, 60.0);
        let run = simulate_scenario(&cfg).unwrap();
        assert!(run.metrics.reach_time.is_some(), "{}", run.metrics);
        assert!(run.settled_within(1.0));
        // stride 20 × dt = one dither period
        let a = cfg.dither.amplitude;
        let transit: Vec<f64> = run.samples.iter().map(|s| s.dist).take_while(|&d| d > 5.0 * a).collect();
        assert!(transit.len() > 100);
        for w in transit.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn kinematics_match_logged_commands() {
        let mut cfg = fast_acoustic(VehicleDemod::ZeroMean, 10.0, 0.05);
        cfg.run.stride = 1;
        let run = simulate_scenario(&cfg).unwrap();
        let dt = cfg.run.dt;
        for w in run.samples.windows(2) {
            let (s0, s1) = (&w[0], &w[1]);
            // trapezoid over one step, against the logged commands
            let vx = |s: &VehicleSample| s.v * s.state.theta.cos();
            let vy = |s: &VehicleSample| s.v * s.state.theta.sin();
            let scale = dt * (s0.v.abs() + s1.v.abs() + s0.omega_c.abs() + s1.omega_c.abs());
            let rx = s1.state.x - s0.state.x - dt * (vx(s0) + vx(s1)) / 2.0;
            let ry = s1.state.y - s0.state.y - dt * (vy(s0) + vy(s1)) / 2.0;
            let rt = s1.state.theta - s0.state.theta - dt * (s0.omega_c + s1.omega_c) / 2.0;
            assert!(rx.abs().max(ry.abs()).max(rt.abs()) < 2e-2 * scale, "{rx} {ry} {rt} vs {scale}");
        }
    }

    #[test]
    fn config_round_trip_and_units() {
        let text = r#"
            name = "t"
            demod = "zero-mean"
            [initial]
            heading_deg = 90.0
            [gains]
            k_v = 1e-3
            k_omega = 1e-2
            [dither]
            omega_rpm = 40.0
            amplitude = 0.154
            [field]
            kind = "photoresistor"
            source = [2.5, 2.5]
            [run]
            horizon = 1.0
            dt = 0.001
        "#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert!(close(cfg.dither.omega_rad_s().unwrap(), 4.0 * PI / 3.0, 1e-15));
        assert!(close(cfg.initial_state().theta, FRAC_PI_2, 1e-15));
        assert_eq!(cfg.run.reach_radius, 0.5);
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_configs_rejected() {
        let mut cfg = fast_acoustic(VehicleDemod::ZeroMean, 0.0, 1.0);
        cfg.dither.amplitude = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = fast_acoustic(VehicleDemod::ZeroMean, 0.0, 1.0);
        cfg.dither.omega_rpm = Some(40.0);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = fast_acoustic(VehicleDemod::ZeroMean, 0.0, 1.0);
        cfg.field = FieldConfig::Map { source: [0.0, 0.0], name: "nope".into() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(matches!(ScenarioConfig::from_toml_str("name = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn batch_preserves_order_and_determinism() {
        let cfgs: Vec<_> = [0.0, 45.0, -45.0].iter().map(|&h| fast_acoustic(VehicleDemod::ZeroMean, h, 0.5)).collect();
        let a = simulate_batch(&cfgs);
        let b: Vec<_> = cfgs.iter().map(simulate_scenario).collect();
        for (x, y) in a.iter().zip(&b) {
            let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
            let (mut bx, mut by) = (Vec::new(), Vec::new());
            x.write_csv(&mut bx).unwrap();
            y.write_csv(&mut by).unwrap();
            assert_eq!(bx, by);
        }
    }

    proptest! {
        #[test]
        fn rigid_arm(x in -5.0..5.0f64, y in -5.0..5.0f64, th in -7.0..7.0f64, t in 0.0..50.0f64, a in 0.01..0.99f64) {
            let st = VehicleState::new(x, y, th);
            let r = sensor_position(&st, t, a, 4.0 * PI / 3.0);
            prop_assert!(((r[0] - x).hypot(r[1] - y) - a).abs() < 1e-12);
            let phi = arm_angle(t);
            prop_assert!((-FRAC_PI_2..=FRAC_PI_2).contains(&phi));
        }

        #[test]
        fn acoustic_radially_symmetric(d in 0.0..20.0f64, ang in -PI..PI, rot in -PI..PI) {
            let src = [3.0, -1.0];
            let p = [src[0] + d * ang.cos(), src[1] + d * ang.sin()];
            let q = [src[0] + d * (ang + rot).cos(), src[1] + d * (ang + rot).sin()];
            let (jp, jq) = (acoustic_j(p, src, ACOUSTIC_S, P_REF, ACOUSTIC_R0), acoustic_j(q, src, ACOUSTIC_S, P_REF, ACOUSTIC_R0));
            prop_assert!((jp - jq).abs() < 1e-9);
        }

        #[test]
        fn bearing_is_wrapped(th in -20.0..20.0f64, t in 0.0..10.0f64, sx in -5.0..5.0f64, sy in -5.0..5.0f64) {
            let st = VehicleState::new(0.0, 0.0, th);
            if let Ok(b) = sensor_orientation_angle(&st, t, 0.1, 1.0, [sx, sy]) {
                prop_assert!(b > -180.0 && b <= 180.0);
            }
        }
    }
}
