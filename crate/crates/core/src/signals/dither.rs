use std::f64::consts::{FRAC_PI_2, PI};

use super::{common_period, AveragingWindow, Periodicity, VectorSignal, WaveformTable};
use crate::error::{param, Result};

/// Servo arm angle: a triangle wave of period 2 sweeping `[-π/2, π/2]` at slope `±π`.
pub fn triangle_arm_angle(t: f64) -> f64 {
    let s = t.rem_euclid(2.0);
    if s < 1.0 {
        -FRAC_PI_2 + PI * s
    } else {
        FRAC_PI_2 - PI * (t - 1.0).rem_euclid(2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    /// `p_i(t) = d_i sin(r_i t)`.
    Sinusoidal { amplitudes: Vec<f64>, rates: Vec<f64> },
    /// `p(t) = (cos φ(t), sin φ(t))` with `φ` the servo triangle wave.
    TriangleArm,
    Table(WaveformTable),
}

/// A continuous, (almost) periodic dither normalized to `sup ‖p‖₂ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DitherSpec {
    waveform: Waveform,
    dim: usize,
    periodicity: Periodicity,
    scale: f64,
    breakpoints: Vec<f64>,
}

impl DitherSpec {
    /// Sinusoidal dither, rescaled so that the supremum of its norm is one.
    ///
    /// Commensurate rates give a periodic dither. Otherwise the rates are
    /// grouped into commensurate classes, which are assumed rationally
    /// independent of each other, so the supremum is the root sum of the
    /// per-class suprema.
    pub fn sinusoidal(amplitudes: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if amplitudes.is_empty() || amplitudes.len() != rates.len() {
            return Err(param("sinusoidal dither needs one rate per amplitude"));
        }
        if amplitudes.iter().chain(&rates).any(|v| !v.is_finite()) {
            return Err(param("sinusoidal dither parameters must be finite"));
        }
        if rates.iter().any(|&r| r <= 0.0) {
            return Err(param("sinusoidal rates must be positive"));
        }
        if amplitudes.iter().all(|&d| d == 0.0) {
            return Err(param("sinusoidal dither is identically zero"));
        }
        let dim = amplitudes.len();
        let (periodicity, breakpoints, sup) = match common_period(&rates) {
            Ok(Some(period)) => {
                let raw = |t: f64, out: &mut [f64]| sinusoid(&amplitudes, &rates, t, out);
                let sup = sup_norm_periodic(raw, dim, period, &[]);
                // channel zero crossings: kinks of |θ|-type maps land there
                let mut bp = Vec::new();
                for &r in &rates {
                    let count = (period * r / PI).round() as usize;
                    if count <= 256 {
                        bp.extend((1..count).map(|k| k as f64 * PI / r));
                    }
                }
                let window = AveragingWindow::periodic(period, bp);
                (window.periodicity, window.breakpoints, sup)
            }
            _ => {
                let mut sup2 = 0.0;
                for (amps, rs) in commensurate_classes(&amplitudes, &rates) {
                    let period = common_period(&rs).ok().flatten().unwrap_or(1.0);
                    let raw = |t: f64, out: &mut [f64]| sinusoid(&amps, &rs, t, out);
                    sup2 += sup_norm_periodic(raw, amps.len(), period, &[]).powi(2);
                }
                let base = 2.0 * PI / rates.iter().cloned().fold(f64::INFINITY, f64::min);
                (
                    Periodicity::AlmostPeriodic { base_horizon: base },
                    Vec::new(),
                    sup2.sqrt(),
                )
            }
        };
        Ok(Self {
            waveform: Waveform::Sinusoidal { amplitudes, rates },
            dim,
            periodicity,
            scale: 1.0 / sup,
            breakpoints,
        })
    }

    /// The rotating-arm dither; already unit norm.
    pub fn triangle_arm() -> Self {
        Self {
            waveform: Waveform::TriangleArm,
            dim: 2,
            periodicity: Periodicity::Periodic { period: 2.0 },
            scale: 1.0,
            breakpoints: vec![1.0],
        }
    }

    pub fn from_table(table: WaveformTable) -> Result<Self> {
        table.validate()?;
        let dim = table.channels;
        let period = table.period();
        let t0 = table.start();
        let breakpoints = table.interior_breakpoints();
        let sup = sup_norm_periodic(|t, out| table.eval_into(t0 + t, out), dim, period, &breakpoints);
        if !(sup > 0.0) {
            return Err(param("waveform table is identically zero"));
        }
        let window = AveragingWindow::periodic(period, breakpoints);
        Ok(Self {
            waveform: Waveform::Table(table),
            dim,
            periodicity: window.periodicity,
            scale: 1.0 / sup,
            breakpoints: window.breakpoints,
        })
    }

    pub fn waveform(&self) -> &Waveform {
        &self.waveform
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn periodicity(&self) -> Periodicity {
        self.periodicity
    }

    /// Factor applied to the raw waveform to reach unit supremum norm.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Effective `(d_i, r_i)` after normalization, for sinusoidal dithers.
    pub fn sinusoid_params(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.waveform {
            Waveform::Sinusoidal { amplitudes, rates } => Some((
                amplitudes.iter().map(|d| d * self.scale).collect(),
                rates.clone(),
            )),
            _ => None,
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        match &self.waveform {
            Waveform::Sinusoidal { amplitudes, rates } => sinusoid(amplitudes, rates, t, out),
            Waveform::TriangleArm => {
                let phi = triangle_arm_angle(t);
                out[0] = phi.cos();
                out[1] = phi.sin();
            }
            Waveform::Table(tab) => tab.eval_into(t, out),
        }
        if self.scale != 1.0 {
            out.iter_mut().for_each(|v| *v *= self.scale);
        }
    }
}

impl VectorSignal for DitherSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        DitherSpec::eval_into(self, t, out)
    }

    fn window(&self) -> AveragingWindow {
        AveragingWindow {
            periodicity: self.periodicity,
            breakpoints: self.breakpoints.clone(),
        }
    }
}

fn sinusoid(amplitudes: &[f64], rates: &[f64], t: f64, out: &mut [f64]) {
    for ((o, d), r) in out.iter_mut().zip(amplitudes).zip(rates) {
        *o = d * (r * t).sin();
    }
}

fn commensurate_classes(amplitudes: &[f64], rates: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut classes: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (&d, &r) in amplitudes.iter().zip(rates) {
        let home = classes
            .iter_mut()
            .find(|(_, rs)| common_period(&[rs[0], r]).is_ok());
        match home {
            Some((ds, rs)) => {
                ds.push(d);
                rs.push(r);
            }
            None => classes.push((vec![d], vec![r])),
        }
    }
    classes
}

/// `sup ‖f(t)‖₂` over one period: dense sampling, then golden-section refinement
/// around the best local maxima.
pub(crate) fn sup_norm_periodic<F>(f: F, dim: usize, period: f64, breakpoints: &[f64]) -> f64
where
    F: Fn(f64, &mut [f64]),
{
    let mut buf = vec![0.0; dim];
    let mut norm2 = |t: f64| {
        f(t, &mut buf);
        buf.iter().map(|v| v * v).sum::<f64>()
    };
    const SAMPLES: usize = 8192;
    let h = period / SAMPLES as f64;
    let values: Vec<f64> = (0..SAMPLES).map(|k| norm2(k as f64 * h)).collect();
    let mut best = values.iter().cloned().fold(0.0, f64::max);
    for &b in breakpoints {
        best = best.max(norm2(b));
    }

    let mut peaks: Vec<usize> = (0..SAMPLES)
        .filter(|&k| {
            let l = values[(k + SAMPLES - 1) % SAMPLES];
            let r = values[(k + 1) % SAMPLES];
            values[k] >= l && values[k] >= r
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks.truncate(16);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for k in peaks {
        let (mut lo, mut hi) = ((k as f64 - 1.0) * h, (k as f64 + 1.0) * h);
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let (mut f1, mut f2) = (norm2(x1), norm2(x2));
        for _ in 0..80 {
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = norm2(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = norm2(x2);
            }
        }
        best = best.max(f1).max(f2);
    }
    best.sqrt()
}
