//! Derivative estimates from demodulated cost measurements.

use std::cell::RefCell;
use std::fmt;
use std::io;
use std::sync::Arc;

use rayon::prelude::*;

use crate::demod::{check_amplitude, DemodSpec};
use crate::error::{param, Error, Result};
use crate::multiindex::{factorial, powu, DerivativeBasis, MultiIndex};
use crate::signals::time_average;

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type DerivativeFn = Arc<dyn Fn(&[f64], &MultiIndex) -> f64 + Send + Sync>;

/// A scalar cost `J: Rⁿ → R`, optionally with exact partial derivatives.
#[derive(Clone)]
pub struct CostMap {
    name: String,
    dim: usize,
    eval: Evaluator,
    derivative: Option<DerivativeFn>,
    smoothness: Option<u32>,
}

impl fmt::Debug for CostMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostMap")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_derivatives", &self.derivative.is_some())
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

/// Names accepted by [`CostMap::builtin`].
pub const BUILTIN_MAPS: &[&str] = &["remark2", "quartic", "exp", "quadratic", "linear"];

impl CostMap {
    pub fn new(name: impl Into<String>, dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(f),
            derivative: None,
            smoothness: None,
        }
    }

    /// Attach exact partial derivatives `D^α J(θ)`.
    pub fn with_derivatives(
        mut self,
        d: impl Fn(&[f64], &MultiIndex) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }

    /// Record the claimed differentiability class `C^k`.
    pub fn with_smoothness(mut self, k: u32) -> Self {
        self.smoothness = Some(k);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smoothness(&self) -> Option<u32> {
        self.smoothness
    }

    pub fn has_derivatives(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn eval(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: theta.len(),
            });
        }
        let v = (self.eval)(theta);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteCost { at: theta.to_vec() })
        }
    }

    /// Exact `D^α J(θ)`; a capability error when the map has none.
    pub fn derivative(&self, theta: &[f64], alpha: &MultiIndex) -> Result<f64> {
        let d = self.derivative.as_ref().ok_or_else(|| {
            Error::Capability(format!("cost map `{}` has no analytic derivatives", self.name))
        })?;
        Ok(d(theta, alpha))
    }

    /// Exact derivative when available, otherwise a central finite difference
    /// with step `ε^{1/(k+2)} · max(1, ‖θ‖_∞)` for order `k`.
    pub fn derivative_or_fd(&self, theta: &[f64], alpha: &MultiIndex) -> Result<f64> {
        if self.derivative.is_some() {
            return self.derivative(theta, alpha);
        }
        let k = alpha.order();
        if k == 0 {
            return self.eval(theta);
        }
        let scale = theta.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let h = f64::EPSILON.powf(1.0 / (k as f64 + 2.0)) * scale;
        // tensor product of 1-D central stencils δ^{α_i}
        let stencils: Vec<Vec<(f64, f64)>> = alpha
            .entries()
            .iter()
            .map(|&q| {
                (0..=q)
                    .map(|j| {
                        let c = binomial(q, j) * if j % 2 == 0 { 1.0 } else { -1.0 };
                        (c, (q as f64 / 2.0 - j as f64) * h)
                    })
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        let mut idx = vec![0usize; theta.len()];
        let mut point = theta.to_vec();
        loop {
            let mut c = 1.0;
            for (i, st) in stencils.iter().enumerate() {
                let (ci, off) = st[idx[i]];
                c *= ci;
                point[i] = theta[i] + off;
            }
            total += c * self.eval(&point)?;
            // odometer increment
            let mut i = 0;
            loop {
                if i == idx.len() {
                    return Ok(total / powu(h, k));
                }
                idx[i] += 1;
                if idx[i] < stencils[i].len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }

    /// Look up a named built-in map in `dim` variables.
    pub fn builtin(name: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(param("cost map dimension must be at least 1"));
        }
        let one_d = |m: Result<Self>| {
            if dim == 1 {
                m
            } else {
                Err(Error::Config(format!("built-in map `{name}` is one-dimensional")))
            }
        };
        match name {
            "remark2" => one_d(Ok(remark2_map())),
            "quartic" => one_d(Ok(quartic_map())),
            "exp" => Ok(exp_map(dim)),
            "quadratic" => {
                let h: Vec<f64> = (0..dim).map(|i| 2.0 * 4f64.powi(i as i32)).collect();
                Ok(quadratic_map(&h, &vec![0.0; dim]))
            }
            "linear" => {
                let c: Vec<f64> = (0..dim).map(|i| 3.0 + 2.0 * i as f64).collect();
                Ok(Polynomial::linear(&c).into_cost_map("linear"))
            }
            other => Err(Error::Config(format!(
                "unknown cost map `{other}`; available: {}",
                BUILTIN_MAPS.join(", ")
            ))),
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `(4/15)|θ|^{5/2}`: twice differentiable with a square-root Hessian at 0.
pub fn remark2_map() -> CostMap {
    CostMap::new("remark2", 1, |x| 4.0 / 15.0 * x[0].abs().powf(2.5))
        .with_derivatives(|x, alpha| {
            let t = x[0];
            let s = t.signum();
            match alpha.order() {
                0 => 4.0 / 15.0 * t.abs().powf(2.5),
                1 => 2.0 / 3.0 * s * t.abs().powf(1.5),
                2 => t.abs().sqrt(),
                // unbounded at 0
                3 => s / (2.0 * t.abs().sqrt()),
                _ => f64::NAN,
            }
        })
        .with_smoothness(2)
}

/// `θ⁴/12`, whose second derivative is `θ²`.
pub fn quartic_map() -> CostMap {
    Polynomial::new(1, vec![(MultiIndex::unit(1, 0).scaled(4), 1.0 / 12.0)])
        .expect("valid polynomial")
        .into_cost_map("quartic")
}

/// `exp(θ₁ + … + θₙ)`.
pub fn exp_map(dim: usize) -> CostMap {
    CostMap::new("exp", dim, |x| x.iter().sum::<f64>().exp())
        .with_derivatives(|x, _| x.iter().sum::<f64>().exp())
}

/// `½ Σ h_i (θ_i − c_i)²`.
pub fn quadratic_map(diag: &[f64], center: &[f64]) -> CostMap {
    let n = diag.len();
    let mut terms = Vec::new();
    for i in 0..n {
        // ½h(θ−c)² = ½hθ² − hcθ + ½hc²
        terms.push((MultiIndex::unit(n, i).scaled(2), 0.5 * diag[i]));
        terms.push((MultiIndex::unit(n, i), -diag[i] * center[i]));
        terms.push((MultiIndex::zeros(n), 0.5 * diag[i] * center[i] * center[i]));
    }
    Polynomial::new(n, terms)
        .expect("valid polynomial")
        .into_cost_map("quadratic")
}

/// A multivariate polynomial `Σ c_α x^α`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<(MultiIndex, f64)>,
}

impl Polynomial {
    pub fn new(dim: usize, terms: Vec<(MultiIndex, f64)>) -> Result<Self> {
        if let Some((alpha, _)) = terms.iter().find(|(a, _)| a.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: alpha.dim(),
            });
        }
        Ok(Self { dim, terms })
    }

    pub fn linear(coeffs: &[f64]) -> Self {
        let n = coeffs.len();
        Self {
            dim: n,
            terms: coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| (MultiIndex::unit(n, i), c))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(MultiIndex, f64)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(a, _)| a.order()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(a, c)| c * a.monomial(x)).sum()
    }

    /// Exact `D^β` at `x`: `D^β x^α = α!/(α−β)! · x^{α−β}` when `β ≤ α`.
    pub fn derivative(&self, x: &[f64], beta: &MultiIndex) -> f64 {
        self.terms
            .iter()
            .filter(|(a, _)| a.entries().iter().zip(beta.entries()).all(|(p, q)| p >= q))
            .map(|(a, c)| {
                let mut v = *c;
                for ((&p, &q), &xi) in a.entries().iter().zip(beta.entries()).zip(x) {
                    v *= factorial(p) / factorial(p - q) * powu(xi, p - q);
                }
                v
            })
            .sum()
    }

    pub fn into_cost_map(self, name: &str) -> CostMap {
        let shared = Arc::new(self);
        let (p, q) = (shared.clone(), shared.clone());
        CostMap::new(name, shared.dim, move |x| p.eval(x))
            .with_derivatives(move |x, beta| q.derivative(x, beta))
    }
}

/// `P_m(Δ) = Σ_{|α| ≤ m} D^α J(θ̂) Δ^α / α!`, as a polynomial in the offset `Δ`.
pub fn taylor_polynomial(cost: &CostMap, theta_hat: &[f64], m: u32) -> Result<Polynomial> {
    let basis = DerivativeBasis::enumerate(cost.dim(), 0, m)?;
    let terms = basis
        .iter()
        .map(|alpha| Ok((alpha.clone(), cost.derivative(theta_hat, alpha)? / alpha.factorial())))
        .collect::<Result<Vec<_>>>()?;
    Polynomial::new(cost.dim(), terms)
}

fn check_problem(demod: &DemodSpec, cost: &CostMap, theta_hat: &[f64]) -> Result<()> {
    let n = demod.basis().dim();
    if cost.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cost.dim(),
        });
    }
    if theta_hat.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: theta_hat.len(),
        });
    }
    Ok(())
}

/// `ξ̂(t) = h(t, a) · J(θ̂ + a p(t))`. Time dilation by `ω` is the caller's job.
pub fn pointwise_estimate(
    demod: &DemodSpec,
    cost: &CostMap,
    theta_hat: &[f64],
    t: f64,
    a: f64,
) -> Result<Vec<f64>> {
    check_amplitude(a)?;
    check_problem(demod, cost, theta_hat)?;
    let mut out = vec![0.0; demod.len()];
    let mut p = vec![0.0; theta_hat.len()];
    pointwise_into(demod, cost, theta_hat, t, a, &mut p, &mut out)?;
    Ok(out)
}

pub(crate) fn pointwise_into(
    demod: &DemodSpec,
    cost: &CostMap,
    theta_hat: &[f64],
    t: f64,
    a: f64,
    scratch: &mut [f64],
    out: &mut [f64],
) -> Result<f64> {
    demod.dither().eval_into(t, scratch);
    for (s, th) in scratch.iter_mut().zip(theta_hat) {
        *s = th + a * *s;
    }
    let j = cost.eval(scratch)?;
    demod.h_into(t, a, out);
    out.iter_mut().for_each(|v| *v *= j);
    Ok(j)
}

/// Time mean of [`pointwise_estimate`].
pub fn averaged_estimate(
    demod: &DemodSpec,
    cost: &CostMap,
    theta_hat: &[f64],
    a: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    check_amplitude(a)?;
    check_problem(demod, cost, theta_hat)?;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let n = theta_hat.len();
    let f = |t: f64, out: &mut [f64]| {
        let mut p = vec![0.0; n];
        if let Err(e) = pointwise_into(demod, cost, theta_hat, t, a, &mut p, out) {
            failure.borrow_mut().get_or_insert(e);
            out.iter_mut().for_each(|v| *v = 0.0);
        }
    };
    let report = time_average(f, demod.len(), &demod.window(), tol)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if !report.converged {
        return Err(Error::Averaging {
            best: report.value,
            horizon: report.horizon,
            error_estimate: report.error_estimate,
        });
    }
    Ok(report.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub a: f64,
    pub estimate: Vec<f64>,
    pub truth: Vec<f64>,
    /// `max_i |estimate_i − truth_i|`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSweep {
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of `log error` against `log a`, over points above the
    /// exactness floor. `None` when fewer than two such points remain.
    pub slope: Option<f64>,
    /// Every error sits below the floor: the estimate is exact up to quadrature.
    pub exact: bool,
}

impl EstimateSweep {
    /// Columns `a, component, estimate, truth, abs_error`.
    pub fn write_csv<W: io::Write>(&self, w: W, basis: &DerivativeBasis) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["a", "component", "estimate", "truth", "abs_error"])?;
        for p in &self.points {
            for (i, (e, t)) in p.estimate.iter().zip(&p.truth).enumerate() {
                out.write_record([
                    format!("{:e}", p.a),
                    basis.get(i).to_string(),
                    format!("{e:e}"),
                    format!("{t:e}"),
                    format!("{:e}", (e - t).abs()),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Averaged estimates over a strictly decreasing list of amplitudes, with the
/// truth from exact derivatives (or finite differences) and a fitted rate.
pub fn convergence_sweep(
    demod: &DemodSpec,
    cost: &CostMap,
    theta_hat: &[f64],
    amplitudes: &[f64],
    tol: f64,
) -> Result<EstimateSweep> {
    if amplitudes.windows(2).any(|w| w[1] >= w[0]) {
        return Err(param("sweep amplitudes must be strictly decreasing"));
    }
    for &a in amplitudes {
        check_amplitude(a)?;
    }
    let truth = demod
        .basis()
        .iter()
        .map(|alpha| cost.derivative_or_fd(theta_hat, alpha))
        .collect::<Result<Vec<_>>>()?;
    let points = amplitudes
        .par_iter()
        .map(|&a| {
            let estimate = averaged_estimate(demod, cost, theta_hat, a, tol)?;
            let error = estimate
                .iter()
                .zip(&truth)
                .map(|(e, t)| (e - t).abs())
                .fold(0.0, f64::max);
            Ok(SweepPoint {
                a,
                estimate,
                truth: truth.clone(),
                error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let floor = 100.0 * tol;
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.error >= floor)
        .map(|p| (p.a.ln(), p.error.ln()))
        .collect();
    let exact = usable.is_empty();
    let slope = fit_slope(&usable);
    Ok(EstimateSweep {
        points,
        slope,
        exact,
    })
}

/// Least-squares slope through `(x, y)` pairs.
pub fn fit_slope(xy: &[(f64, f64)]) -> Option<f64> {
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `n` amplitudes log-spaced from `hi` down to `lo`.
pub fn log_spaced(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (lh, ll) = (hi.ln(), lo.ln());
    (0..n)
        .map(|k| (lh + (ll - lh) * k as f64 / (n - 1) as f64).exp())
        .collect()
}
