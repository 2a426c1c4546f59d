//! Dither waveforms, the extended dither, and time averaging.
//!
//! Everything here is expressed in the dither's own time variable `τ`; a
//! controller running at dither rate `ω` evaluates at `τ = ωt`.

mod average;
mod aux;
mod dither;
mod extended;
mod table;

pub use average::{time_average, AverageReport, DEFAULT_TOL, HORIZON_CAP_DOUBLINGS};
pub use aux::{TrigSignal, TrigTerm};
pub use dither::{triangle_arm_angle, DitherSpec, Waveform};
pub use extended::{covariance, cross_variance, mean_rho, Centered, ExtendedDither};
pub use table::{TableKnot, WaveformTable};

/// Whether a signal repeats exactly, or only has a well-defined long-run mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Periodicity {
    Periodic { period: f64 },
    /// `base_horizon` is the shortest averaging horizon tried.
    AlmostPeriodic { base_horizon: f64 },
}

impl Periodicity {
    pub fn base(&self) -> f64 {
        match *self {
            Periodicity::Periodic { period } => period,
            Periodicity::AlmostPeriodic { base_horizon } => base_horizon,
        }
    }
}

/// Periodicity plus the kinks of a signal inside one period.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragingWindow {
    pub periodicity: Periodicity,
    /// Sorted points in `(0, period)` where the signal may be non-smooth.
    pub breakpoints: Vec<f64>,
}

impl AveragingWindow {
    pub fn periodic(period: f64, breakpoints: Vec<f64>) -> Self {
        let mut bp: Vec<f64> = breakpoints
            .into_iter()
            .map(|b| b.rem_euclid(period))
            .filter(|&b| b > 1e-12 * period && b < period * (1.0 - 1e-12))
            .collect();
        bp.sort_by(f64::total_cmp);
        bp.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * period);
        Self {
            periodicity: Periodicity::Periodic { period },
            breakpoints: bp,
        }
    }

    pub fn almost_periodic(base_horizon: f64) -> Self {
        Self {
            periodicity: Periodicity::AlmostPeriodic { base_horizon },
            breakpoints: Vec::new(),
        }
    }

    /// Window on which the product of two signals can be averaged.
    pub fn combine(&self, other: &AveragingWindow) -> AveragingWindow {
        use Periodicity::*;
        match (self.periodicity, other.periodicity) {
            (Periodic { period: p1 }, Periodic { period: p2 }) => {
                match rational_ratio(p2 / p1, 64) {
                    Some((num, den)) => {
                        // den * p2 == num * p1
                        let period = p1 * num as f64;
                        let mut bp = Vec::new();
                        for k in 0..num {
                            bp.push(k as f64 * p1);
                            bp.extend(self.breakpoints.iter().map(|b| b + k as f64 * p1));
                        }
                        for k in 0..den {
                            bp.push(k as f64 * p2);
                            bp.extend(other.breakpoints.iter().map(|b| b + k as f64 * p2));
                        }
                        AveragingWindow::periodic(period, bp)
                    }
                    None => AveragingWindow::almost_periodic(p1.max(p2)),
                }
            }
            (a, b) => AveragingWindow::almost_periodic(a.base().max(b.base())),
        }
    }
}

/// A vector-valued function of time with a known averaging window.
pub trait VectorSignal: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, t: f64, out: &mut [f64]);
    fn window(&self) -> AveragingWindow;

    fn eval(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.eval_into(t, &mut v);
        v
    }
}

/// Best `(num, den)` with `x ≈ num/den`, `den <= max_den`, or `None`.
pub(crate) fn rational_ratio(x: f64, max_den: u64) -> Option<(u64, u64)> {
    if !(x.is_finite() && x > 0.0) {
        return None;
    }
    for den in 1..=max_den {
        let num = (x * den as f64).round();
        if num >= 1.0 && (x * den as f64 - num).abs() <= 1e-9 * num {
            return Some((num as u64, den));
        }
    }
    None
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Common period of `Σ c_i cos(ω_i t + φ_i)` for nonzero angular rates, if one exists.
/// `Ok(None)` means every rate is zero (a constant).
pub(crate) fn common_period(rates: &[f64]) -> std::result::Result<Option<f64>, ()> {
    let nonzero: Vec<f64> = rates.iter().map(|r| r.abs()).filter(|&r| r > 0.0).collect();
    let Some(&base) = nonzero.first() else {
        return Ok(None);
    };
    let mut ratios = Vec::with_capacity(nonzero.len());
    let mut lcm_den = 1u64;
    for &r in &nonzero {
        let (num, den) = rational_ratio(r / base, 64).ok_or(())?;
        ratios.push((num, den));
        lcm_den = lcm_den / gcd(lcm_den, den) * den;
    }
    let g = ratios
        .iter()
        .map(|&(num, den)| num * (lcm_den / den))
        .fold(0, gcd);
    Ok(Some(2.0 * std::f64::consts::PI * lcm_den as f64 / (base * g as f64)))
}
