use serde::{Deserialize, Serialize};

use super::{common_period, AveragingWindow, VectorSignal};
use crate::error::{param, Result};

/// One term `amplitude · cos(rate · t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub rate: f64,
    #[serde(default)]
    pub phase: f64,
}

impl TrigTerm {
    pub fn cos(amplitude: f64, rate: f64) -> Self {
        Self { amplitude, rate, phase: 0.0 }
    }

    pub fn sin(amplitude: f64, rate: f64) -> Self {
        Self {
            amplitude,
            rate,
            phase: -std::f64::consts::FRAC_PI_2,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.rate * t + self.phase).cos()
    }
}

/// Auxiliary signal vector `r(t)` built from trigonometric sums, one sum per component.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigSignal {
    components: Vec<Vec<TrigTerm>>,
    window: AveragingWindow,
}

impl TrigSignal {
    pub fn new(components: Vec<Vec<TrigTerm>>) -> Result<Self> {
        if components.is_empty() {
            return Err(param("auxiliary signal needs at least one component"));
        }
        let rates: Vec<f64> = components.iter().flatten().map(|t| t.rate).collect();
        if components
            .iter()
            .flatten()
            .any(|t| !(t.amplitude.is_finite() && t.rate.is_finite() && t.phase.is_finite()))
        {
            return Err(param("auxiliary signal terms must be finite"));
        }
        let window = match common_period(&rates) {
            Ok(Some(period)) => AveragingWindow::periodic(period, vec![]),
            // constants only: any period will do
            Ok(None) => AveragingWindow::periodic(1.0, vec![]),
            Err(()) => {
                let slowest = rates
                    .iter()
                    .map(|r| r.abs())
                    .filter(|&r| r > 0.0)
                    .fold(f64::INFINITY, f64::min);
                AveragingWindow::almost_periodic(2.0 * std::f64::consts::PI / slowest)
            }
        };
        Ok(Self { components, window })
    }

    pub fn components(&self) -> &[Vec<TrigTerm>] {
        &self.components
    }
}

impl VectorSignal for TrigSignal {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        for (o, terms) in out.iter_mut().zip(&self.components) {
            *o = terms.iter().map(|term| term.eval(t)).sum();
        }
    }

    fn window(&self) -> AveragingWindow {
        self.window.clone()
    }
}
