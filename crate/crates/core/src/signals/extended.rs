use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{time_average, AverageReport, AveragingWindow, DitherSpec, VectorSignal};
use crate::error::{Error, Result};
use crate::multiindex::DerivativeBasis;

/// `ρ(t)` with `ρ_i(t) = p(t)^{α_i}` over a derivative basis.
#[derive(Debug, Clone)]
pub struct ExtendedDither {
    dither: Arc<DitherSpec>,
    basis: DerivativeBasis,
}

impl ExtendedDither {
    pub fn new(dither: impl Into<Arc<DitherSpec>>, basis: DerivativeBasis) -> Result<Self> {
        let dither = dither.into();
        if dither.dim() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: dither.dim(),
                got: basis.dim(),
            });
        }
        Ok(Self { dither, basis })
    }

    pub fn dither(&self) -> &Arc<DitherSpec> {
        &self.dither
    }

    pub fn basis(&self) -> &DerivativeBasis {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Interior kinks of `ρ` within one period, inherited from the dither.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.dither.window().breakpoints
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let mut p = [0.0; 8];
        let n = self.dither.dim();
        if n <= p.len() {
            self.dither.eval_into(t, &mut p[..n]);
            self.basis.monomials_into(&p[..n], out);
        } else {
            let mut p = vec![0.0; n];
            self.dither.eval_into(t, &mut p);
            self.basis.monomials_into(&p, out);
        }
    }
}

impl VectorSignal for ExtendedDither {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        ExtendedDither::eval_into(self, t, out)
    }

    fn window(&self) -> AveragingWindow {
        self.dither.window()
    }
}

/// `s(t) − mean` for a wrapped signal.
#[derive(Debug, Clone)]
pub struct Centered<S> {
    inner: S,
    mean: Vec<f64>,
}

impl<S: VectorSignal> Centered<S> {
    pub fn new(inner: S, mean: Vec<f64>) -> Self {
        assert_eq!(inner.dim(), mean.len(), "mean length must match signal dimension");
        Self { inner, mean }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

impl<S: VectorSignal> VectorSignal for Centered<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.inner.eval_into(t, out);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o -= m;
        }
    }

    fn window(&self) -> AveragingWindow {
        self.inner.window()
    }
}

fn require(report: AverageReport) -> Result<AverageReport> {
    if report.converged {
        Ok(report)
    } else {
        Err(Error::Averaging {
            best: report.value,
            horizon: report.horizon,
            error_estimate: report.error_estimate,
        })
    }
}

/// `ρ̄`, the time mean of the extended dither.
pub fn mean_rho(ext: &ExtendedDither, tol: f64) -> Result<DVector<f64>> {
    let r = require(time_average(|t, o| ext.eval_into(t, o), ext.len(), &ext.window(), tol)?)?;
    Ok(DVector::from_vec(r.value))
}

/// Covariance `Q = avg ρ ρᵀ`, or of `ρ̃ = ρ − ρ̄` when `centered`.
///
/// Only the upper triangle is averaged and then mirrored, so the result is
/// exactly symmetric.
pub fn covariance(ext: &ExtendedDither, centered: bool, tol: f64) -> Result<DMatrix<f64>> {
    let mean = if centered {
        mean_rho(ext, tol)?.as_slice().to_vec()
    } else {
        vec![0.0; ext.len()]
    };
    let o = ext.len();
    let pairs = o * (o + 1) / 2;
    let f = |t: f64, out: &mut [f64]| {
        let mut rho = vec![0.0; o];
        ext.eval_into(t, &mut rho);
        for (r, m) in rho.iter_mut().zip(&mean) {
            *r -= m;
        }
        let mut k = 0;
        for i in 0..o {
            for j in i..o {
                out[k] = rho[i] * rho[j];
                k += 1;
            }
        }
    };
    let report = require(time_average(f, pairs, &ext.window(), tol)?)?;
    let mut q = DMatrix::zeros(o, o);
    let mut k = 0;
    for i in 0..o {
        for j in i..o {
            q[(i, j)] = report.value[k];
            q[(j, i)] = report.value[k];
            k += 1;
        }
    }
    Ok(q)
}

/// Cross-variance `R = avg r ρᵀ` (or `r ρ̃ᵀ` when `centered`), averaged over the
/// combined window of both signals.
pub fn cross_variance(
    r: &dyn VectorSignal,
    ext: &ExtendedDither,
    centered: bool,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let o = ext.len();
    let q = r.dim();
    if q != o {
        return Err(Error::DimensionMismatch { expected: o, got: q });
    }
    let mean = if centered {
        mean_rho(ext, tol)?.as_slice().to_vec()
    } else {
        vec![0.0; o]
    };
    let window = r.window().combine(&ext.window());
    let f = |t: f64, out: &mut [f64]| {
        let mut rv = vec![0.0; q];
        let mut rho = vec![0.0; o];
        r.eval_into(t, &mut rv);
        ext.eval_into(t, &mut rho);
        for i in 0..q {
            for j in 0..o {
                out[i * o + j] = rv[i] * (rho[j] - mean[j]);
            }
        }
    };
    let report = require(time_average(f, q * o, &window, tol)?)?;
    Ok(DMatrix::from_row_slice(q, o, &report.value))
}
