//! Long-run time means.
//!
//! Periodic signals are averaged over exactly one period with composite
//! Simpson on panels split at the window's breakpoints. Each panel is refined
//! by interval doubling until two consecutive refinements move the panel's
//! contribution to the mean by less than its share of `tol`.
//!
//! Almost-periodic signals have no period to integrate over. Their mean is
//! approached with a smooth bump-weighted average on horizons `2^k T₀`, which
//! converges far faster than the plain box average for quasi-periodic inputs,
//! and stops once successive horizons agree within `tol`.

use super::{AveragingWindow, Periodicity};
use crate::error::{param, Result};

/// Default averaging tolerance used throughout the crate.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Almost-periodic averaging gives up after horizon `2^20 T₀`.
pub const HORIZON_CAP_DOUBLINGS: u32 = 20;

const MIN_LEVEL: u32 = 4;
const MAX_LEVEL: u32 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct AverageReport {
    pub value: Vec<f64>,
    /// Length of the time interval the final value was computed over.
    pub horizon: f64,
    pub error_estimate: f64,
    pub converged: bool,
}

/// Mean of the vector-valued `f` over the window.
///
/// Non-convergence is not an error here: the report carries `converged =
/// false` along with the best estimate and callers decide what to do.
pub fn time_average<F>(f: F, dim: usize, window: &AveragingWindow, tol: f64) -> Result<AverageReport>
where
    F: Fn(f64, &mut [f64]),
{
    if !(tol > 0.0) {
        return Err(param(format!("averaging tolerance must be positive, got {tol}")));
    }
    match window.periodicity {
        Periodicity::Periodic { period } => {
            if !(period > 0.0 && period.is_finite()) {
                return Err(param(format!("period must be positive, got {period}")));
            }
            Ok(periodic_mean(&f, dim, period, &window.breakpoints, tol))
        }
        Periodicity::AlmostPeriodic { base_horizon } => {
            if !(base_horizon > 0.0 && base_horizon.is_finite()) {
                return Err(param(format!("base horizon must be positive, got {base_horizon}")));
            }
            Ok(almost_periodic_mean(&f, dim, base_horizon, tol))
        }
    }
}

fn periodic_mean<F: Fn(f64, &mut [f64])>(
    f: &F,
    dim: usize,
    period: f64,
    breakpoints: &[f64],
    tol: f64,
) -> AverageReport {
    let mut edges = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(0.0);
    edges.extend(breakpoints.iter().copied().filter(|&b| b > 0.0 && b < period));
    edges.push(period);

    let mut total = vec![0.0; dim];
    let mut err = 0.0;
    let mut converged = true;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        // panel contributes (b - a)/period of the mean, so it gets that share of tol
        let panel = simpson_panel(|t, out| f(t, out), dim, a, b, tol * (b - a));
        for (t, v) in total.iter_mut().zip(&panel.value) {
            *t += v;
        }
        err += panel.change;
        converged &= panel.converged;
    }
    for t in &mut total {
        *t /= period;
    }
    AverageReport {
        value: total,
        horizon: period,
        error_estimate: err / period,
        converged,
    }
}

struct Panel {
    value: Vec<f64>,
    change: f64,
    converged: bool,
}

/// Composite Simpson on `[a, b]` with interval doubling and node reuse.
fn simpson_panel<F: FnMut(f64, &mut [f64])>(mut f: F, dim: usize, a: f64, b: f64, abs_tol: f64) -> Panel {
    let mut buf = vec![0.0; dim];
    let mut ends = vec![0.0; dim];
    f(a, &mut buf);
    add(&mut ends, &buf);
    f(b, &mut buf);
    add(&mut ends, &buf);

    // interior: sum over all nodes of the previous level except the ends
    let mut interior = vec![0.0; dim];
    let mut prev: Option<Vec<f64>> = None;
    let mut agreed = 0;
    let mut last_change = f64::INFINITY;
    let mut mids = vec![0.0; dim];
    for level in 1..=MAX_LEVEL {
        let n = 1usize << level;
        let h = (b - a) / n as f64;
        mids.iter_mut().for_each(|m| *m = 0.0);
        for j in (1..n).step_by(2) {
            f(a + j as f64 * h, &mut buf);
            add(&mut mids, &buf);
        }
        let s: Vec<f64> = (0..dim)
            .map(|i| h / 3.0 * (ends[i] + 4.0 * mids[i] + 2.0 * interior[i]))
            .collect();
        add(&mut interior, &mids);

        if let Some(p) = &prev {
            let change = s
                .iter()
                .zip(p)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            last_change = change;
            if level >= MIN_LEVEL && change <= abs_tol {
                agreed += 1;
                if agreed >= 2 {
                    return Panel {
                        value: s,
                        change,
                        converged: true,
                    };
                }
            } else {
                agreed = 0;
            }
        }
        prev = Some(s);
    }
    Panel {
        value: prev.unwrap_or_else(|| vec![0.0; dim]),
        change: last_change,
        converged: false,
    }
}

fn add(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

// Smooth compactly supported weight on (0, 1).
fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

fn almost_periodic_mean<F: Fn(f64, &mut [f64])>(
    f: &F,
    dim: usize,
    base: f64,
    tol: f64,
) -> AverageReport {
    // ∫₀¹ bump(s) ds, computed once with the same panel routine
    let norm = simpson_panel(|s, out| out[0] = bump(s), 1, 0.0, 1.0, 1e-15).value[0];

    let mut prev: Option<Vec<f64>> = None;
    let mut last = AverageReport {
        value: vec![0.0; dim],
        horizon: 0.0,
        error_estimate: f64::INFINITY,
        converged: false,
    };
    let mut buf = vec![0.0; dim];
    for k in 1..=HORIZON_CAP_DOUBLINGS {
        let horizon = base * (1u64 << k) as f64;
        let chunks = 1usize << k;
        let mut total = vec![0.0; dim];
        for c in 0..chunks {
            let a = c as f64 * base;
            let panel = simpson_panel(
                |t, out| {
                    f(t, &mut buf[..]);
                    let w = bump(t / horizon);
                    for (o, v) in out.iter_mut().zip(&buf) {
                        *o = w * v;
                    }
                },
                dim,
                a,
                a + base,
                tol * norm * base,
            );
            add(&mut total, &panel.value);
        }
        for t in &mut total {
            *t /= horizon * norm;
        }
        if let Some(p) = &prev {
            let change = total
                .iter()
                .zip(p)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            last = AverageReport {
                value: total.clone(),
                horizon,
                error_estimate: change,
                converged: change < tol,
            };
            if k >= 3 && change < tol {
                return last;
            }
        }
        prev = Some(total);
    }
    last.converged = false;
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn half_power_identity() {
        let w = AveragingWindow::periodic(2.0 * PI, vec![]);
        let r = time_average(|t, o| o[0] = t.sin().powi(2), 1, &w, 1e-12).unwrap();
        assert!(r.converged);
        assert!((r.value[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn incommensurate_product_has_zero_mean() {
        let w = AveragingWindow::almost_periodic(2.0 * PI);
        let r = time_average(|t, o| o[0] = t.sin() * (2f64.sqrt() * t).sin(), 1, &w, 1e-8).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.value[0].abs() < 1e-8);
        assert!(r.error_estimate < 1e-8);
    }

    #[test]
    fn almost_periodic_recovers_constant_part() {
        let w = AveragingWindow::almost_periodic(2.0 * PI);
        let r = time_average(
            |t, o| {
                o[0] = (t.sin()).powi(2);
                o[1] = 0.25 + (3f64.sqrt() * t).cos();
            },
            2,
            &w,
            1e-9,
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.value[0] - 0.5).abs() < 1e-9);
        assert!((r.value[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn kinked_integrand_with_and_without_breakpoints() {
        // |sin(πt)|-style kink at t = 1 inside period 2
        let f = |t: f64, o: &mut [f64]| o[0] = (t - 1.0).abs().powi(3) + (t - 1.0).abs();
        let split = AveragingWindow::periodic(2.0, vec![1.0]);
        let plain = AveragingWindow::periodic(2.0, vec![]);
        let tol = 1e-9;
        let a = time_average(f, 1, &split, tol).unwrap();
        let b = time_average(f, 1, &plain, tol).unwrap();
        // exact mean: ∫₀² |t-1|³ + |t-1| dt / 2 = (1/4 + 1/2)
        assert!((a.value[0] - 0.75).abs() < tol);
        assert!((a.value[0] - b.value[0]).abs() < 10.0 * tol);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let w = AveragingWindow::periodic(1.0, vec![]);
        assert!(time_average(|_, o| o[0] = 1.0, 1, &w, 0.0).is_err());
    }

    #[test]
    fn cap_reports_non_convergence() {
        // a discontinuous integrand can't meet an absurd tolerance
        let w = AveragingWindow::periodic(1.0, vec![]);
        let r = time_average(
            |t, o| o[0] = if t < 1.0 / 3.0 { 1.0 } else { 0.0 },
            1,
            &w,
            1e-300,
        )
        .unwrap();
        assert!(!r.converged);
        assert!((r.value[0] - 1.0 / 3.0).abs() < 1e-5);
    }
}
