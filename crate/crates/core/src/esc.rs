//! Extremum seeking controllers in the affine form `ẋ = f₀(x) + f₁(x) ξ̂`.

use std::io;

use nalgebra::{DMatrix, DVector};

use crate::demod::{check_amplitude, DemodSpec};
use crate::error::{param, Error, Result};
use crate::estimator::{averaged_estimate, pointwise_into, CostMap};
use crate::multiindex::MultiIndex;
use crate::signals::Periodicity;

/// Half-vectorization with its duplication and elimination matrices.
///
/// `vech` stacks the lower triangle column by column, which for a Hessian is
/// the same order as the second-order block of a [`crate::multiindex::DerivativeBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct VechToolkit {
    n: usize,
    duplication: DMatrix<f64>,
    elimination: DMatrix<f64>,
}

impl VechToolkit {
    pub fn new(n: usize) -> Self {
        let m = n * (n + 1) / 2;
        let mut duplication = DMatrix::zeros(n * n, m);
        let mut elimination = DMatrix::zeros(m, n * n);
        for j in 0..n {
            for i in j..n {
                let k = vech_pos(n, i, j);
                duplication[(i + j * n, k)] = 1.0;
                duplication[(j + i * n, k)] = 1.0;
                elimination[(k, i + j * n)] = 1.0;
            }
        }
        Self {
            n,
            duplication,
            elimination,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `D_n` with `D_n vech(S) = vec(S)` for symmetric `S`.
    pub fn duplication(&self) -> &DMatrix<f64> {
        &self.duplication
    }

    /// `L_n` with `L_n vec(S) = vech(S)`.
    pub fn elimination(&self) -> &DMatrix<f64> {
        &self.elimination
    }

    pub fn vech(&self, s: &DMatrix<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.len());
        for j in 0..self.n {
            for i in j..self.n {
                v[vech_pos(self.n, i, j)] = s[(i, j)];
            }
        }
        v
    }

    pub fn unvech(&self, v: &[f64]) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for i in j..self.n {
                let x = v[vech_pos(self.n, i, j)];
                s[(i, j)] = x;
                s[(j, i)] = x;
            }
        }
        s
    }
}

fn vech_pos(n: usize, i: usize, j: usize) -> usize {
    // columns before j hold n, n-1, …, n-j+1 entries
    j * n - j * (j.saturating_sub(1)) / 2 + (i - j)
}

/// Where the controller's derivative estimates come from.
#[derive(Debug, Clone)]
pub enum DerivativeSource {
    /// `ξ̂(t) = h(ωt, a) J(θ̂ + a p(ωt))`.
    Pointwise {
        demod: DemodSpec,
        cost: CostMap,
        a: f64,
        omega: f64,
    },
    /// The exact time mean of the pointwise estimate at the current `θ̂`.
    Averaged {
        demod: DemodSpec,
        cost: CostMap,
        a: f64,
        tol: f64,
    },
}

impl DerivativeSource {
    pub fn pointwise(demod: DemodSpec, cost: CostMap, a: f64, omega: f64) -> Result<Self> {
        check_amplitude(a)?;
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(param(format!("dither rate must be positive, got {omega}")));
        }
        Ok(Self::Pointwise {
            demod,
            cost,
            a,
            omega,
        })
    }

    pub fn averaged(demod: DemodSpec, cost: CostMap, a: f64, tol: f64) -> Result<Self> {
        check_amplitude(a)?;
        Ok(Self::Averaged {
            demod,
            cost,
            a,
            tol,
        })
    }

    pub fn demod(&self) -> &DemodSpec {
        match self {
            Self::Pointwise { demod, .. } | Self::Averaged { demod, .. } => demod,
        }
    }

    pub fn cost(&self) -> &CostMap {
        match self {
            Self::Pointwise { cost, .. } | Self::Averaged { cost, .. } => cost,
        }
    }

    /// Fill `out` with `ξ̂` and return the measured cost.
    pub fn estimate_into(&self, t: f64, theta_hat: &[f64], out: &mut [f64]) -> Result<f64> {
        match self {
            Self::Pointwise {
                demod,
                cost,
                a,
                omega,
            } => {
                let mut scratch = vec![0.0; theta_hat.len()];
                pointwise_into(demod, cost, theta_hat, omega * t, *a, &mut scratch, out)
            }
            Self::Averaged {
                demod,
                cost,
                a,
                tol,
            } => {
                let v = averaged_estimate(demod, cost, theta_hat, *a, *tol)?;
                out.copy_from_slice(&v);
                cost.eval(theta_hat)
            }
        }
    }

    /// Largest step the integrator accepts: `min(T/200, 10⁻²)/ω` for periodic
    /// dithers (`T₀` stands in for almost-periodic ones).
    pub fn max_step(&self) -> f64 {
        match self {
            Self::Pointwise { demod, omega, .. } => {
                let base = match demod.window().periodicity {
                    Periodicity::Periodic { period } => period,
                    Periodicity::AlmostPeriodic { base_horizon } => base_horizon,
                };
                (base / 200.0).min(1e-2) / omega
            }
            Self::Averaged { .. } => 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Gradient { k: f64 },
    HeavyBall { k: f64, beta: f64 },
    Newton { k: f64, omega_l: f64 },
}

/// An extremum seeker written as `ẋ = f₀(x) + f₁(x) ξ̂(t)`.
#[derive(Debug, Clone)]
pub struct AffineESC {
    law: Law,
    n: usize,
    o: usize,
    source: DerivativeSource,
    gradient: Vec<usize>,
    hessian: Vec<usize>,
    vech: VechToolkit,
}

fn block_positions(source: &DerivativeSource, order: u32) -> Result<Vec<usize>> {
    let basis = source.demod().basis();
    let n = basis.dim();
    let wanted: Vec<MultiIndex> = crate::multiindex::DerivativeBasis::enumerate(n, order, order)?
        .iter()
        .cloned()
        .collect();
    wanted
        .iter()
        .map(|alpha| {
            basis.position(alpha).ok_or_else(|| {
                Error::Config(format!(
                    "estimator basis lacks the order-{order} component {alpha}"
                ))
            })
        })
        .collect()
}

/// `dθ̂/dt = −k ĝ`.
pub fn gradient_esc(k: f64, source: DerivativeSource) -> Result<AffineESC> {
    AffineESC::build(Law::Gradient { k }, source)
}

/// `dθ̂/dt = φ`, `dφ/dt = −βφ − k ĝ`, with `β > 0`.
pub fn heavy_ball_esc(k: f64, beta: f64, source: DerivativeSource) -> Result<AffineESC> {
    if !(beta > 0.0) {
        return Err(Error::Config(format!(
            "heavy-ball damping must be positive, got {beta}"
        )));
    }
    AffineESC::build(Law::HeavyBall { k, beta }, source)
}

/// `dθ̂/dt = −k Γ̂ ĝ`, `dΓ̂/dt = ω_ℓ (Γ̂ − Γ̂ Ĥ Γ̂)`, carried as `(θ̂, vech Γ̂)`.
pub fn newton_esc(k: f64, omega_l: f64, source: DerivativeSource) -> Result<AffineESC> {
    AffineESC::build(Law::Newton { k, omega_l }, source)
}

impl AffineESC {
    fn build(law: Law, source: DerivativeSource) -> Result<Self> {
        let n = source.demod().basis().dim();
        if source.cost().dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: source.cost().dim(),
            });
        }
        let gradient = block_positions(&source, 1)?;
        let hessian = match law {
            Law::Newton { .. } => block_positions(&source, 2)?,
            _ => Vec::new(),
        };
        Ok(Self {
            law,
            n,
            o: source.demod().len(),
            source,
            gradient,
            hessian,
            vech: VechToolkit::new(n),
        })
    }

    pub fn law(&self) -> Law {
        self.law
    }

    pub fn source(&self) -> &DerivativeSource {
        &self.source
    }

    pub fn param_dim(&self) -> usize {
        self.n
    }

    pub fn state_dim(&self) -> usize {
        match self.law {
            Law::Gradient { .. } => self.n,
            Law::HeavyBall { .. } => 2 * self.n,
            Law::Newton { .. } => self.n + self.vech.len(),
        }
    }

    pub fn estimate_dim(&self) -> usize {
        self.o
    }

    /// Initial state from `θ̂₀`: zero momentum, and for Newton the symmetric
    /// nonsingular `Γ̂₀` (default `+I`, suited to minimization; use `−I` for
    /// maximization).
    pub fn initial_state(&self, theta0: &[f64], gamma0: Option<&DMatrix<f64>>) -> Result<Vec<f64>> {
        if theta0.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: theta0.len(),
            });
        }
        let mut x = theta0.to_vec();
        match self.law {
            Law::Gradient { .. } => {}
            Law::HeavyBall { .. } => x.extend(std::iter::repeat(0.0).take(self.n)),
            Law::Newton { .. } => {
                let g = gamma0
                    .cloned()
                    .unwrap_or_else(|| DMatrix::identity(self.n, self.n));
                if g.shape() != (self.n, self.n) {
                    return Err(Error::DimensionMismatch {
                        expected: self.n,
                        got: g.nrows(),
                    });
                }
                if (&g - g.transpose()).abs().max() > 1e-12 {
                    return Err(Error::Config("initial Γ̂ must be symmetric".into()));
                }
                if g.clone().lu().determinant().abs() < 1e-300 {
                    return Err(Error::Config("initial Γ̂ must be nonsingular".into()));
                }
                x.extend(self.vech.vech(&g).iter());
            }
        }
        Ok(x)
    }

    pub fn theta<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[..self.n]
    }

    /// `Γ̂` from a Newton state.
    pub fn gamma(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        matches!(self.law, Law::Newton { .. }).then(|| self.vech.unvech(&x[self.n..]))
    }

    pub fn f0(&self, x: &[f64]) -> DVector<f64> {
        let n = self.n;
        match self.law {
            Law::Gradient { .. } => DVector::zeros(n),
            Law::HeavyBall { beta, .. } => DVector::from_iterator(
                2 * n,
                x[n..].iter().copied().chain(x[n..].iter().map(|p| -beta * p)),
            ),
            Law::Newton { omega_l, .. } => DVector::from_iterator(
                self.state_dim(),
                std::iter::repeat(0.0)
                    .take(n)
                    .chain(x[n..].iter().map(|g| omega_l * g)),
            ),
        }
    }

    /// `f₁(x)`, one column per estimator component; unused components get zero columns.
    pub fn f1(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(self.state_dim(), self.o);
        match self.law {
            Law::Gradient { k } => {
                for (i, &c) in self.gradient.iter().enumerate() {
                    m[(i, c)] = -k;
                }
            }
            Law::HeavyBall { k, .. } => {
                for (i, &c) in self.gradient.iter().enumerate() {
                    m[(n + i, c)] = -k;
                }
            }
            Law::Newton { k, omega_l } => {
                let g = self.vech.unvech(&x[n..]);
                for (j, &c) in self.gradient.iter().enumerate() {
                    for i in 0..n {
                        m[(i, c)] = -k * g[(i, j)];
                    }
                }
                // d vech Γ̂ = ω_ℓ vech Γ̂ − ω_ℓ L (Γ̂⊗Γ̂) D vech Ĥ
                let block = self.vech.elimination() * g.kronecker(&g) * self.vech.duplication();
                for (j, &c) in self.hessian.iter().enumerate() {
                    for i in 0..self.vech.len() {
                        m[(n + i, c)] = -omega_l * block[(i, j)];
                    }
                }
            }
        }
        m
    }

    /// `f₀(x) + f₁(x) ξ̂`.
    pub fn affine_rhs(&self, x: &[f64], xi: &[f64]) -> DVector<f64> {
        self.f0(x) + self.f1(x) * DVector::from_column_slice(xi)
    }

    /// Right-hand side at time `t`; returns the measured cost.
    pub fn rhs(&self, t: f64, x: &[f64], xi: &mut [f64], dx: &mut [f64]) -> Result<f64> {
        let j = self.source.estimate_into(t, self.theta(x), xi)?;
        self.apply(x, xi, dx);
        Ok(j)
    }

    /// `f₀(x) + f₁(x) ξ̂` without materializing `f₁`; the Newton block uses
    /// `L(Γ̂⊗Γ̂)D vech Ĥ = vech(Γ̂ Ĥ Γ̂)`.
    pub fn apply(&self, x: &[f64], xi: &[f64], dx: &mut [f64]) {
        let n = self.n;
        match self.law {
            Law::Gradient { k } => {
                for (d, &c) in dx.iter_mut().zip(&self.gradient) {
                    *d = -k * xi[c];
                }
            }
            Law::HeavyBall { k, beta } => {
                for i in 0..n {
                    dx[i] = x[n + i];
                    dx[n + i] = -beta * x[n + i] - k * xi[self.gradient[i]];
                }
            }
            Law::Newton { k, omega_l } => {
                let g = self.vech.unvech(&x[n..]);
                let hess: Vec<f64> = self.hessian.iter().map(|&c| xi[c]).collect();
                let h = self.vech.unvech(&hess);
                for i in 0..n {
                    dx[i] = -k * (0..n).map(|j| g[(i, j)] * xi[self.gradient[j]]).sum::<f64>();
                }
                let ghg = &g * h * &g;
                let v = self.vech.vech(&ghg);
                for (i, (gv, q)) in x[n..].iter().zip(v.iter()).enumerate() {
                    dx[n + i] = omega_l * (gv - q);
                }
            }
        }
    }

    /// Integrate from `x0` over `[0, horizon]` with fixed step `dt`, keeping
    /// every `stride`-th step.
    pub fn integrate(&self, x0: &[f64], horizon: f64, dt: f64, stride: usize) -> Result<Trajectory> {
        let limit = self.source.max_step();
        if dt > limit * (1.0 + 1e-12) {
            return Err(param(format!(
                "step {dt} exceeds the resolution limit {limit} for this dither"
            )));
        }
        let mut xi = vec![0.0; self.o];
        let mut traj = Trajectory::default();
        let record = |t: f64, x: &[f64], traj: &mut Trajectory| -> Result<()> {
            let mut xi_rec = vec![0.0; self.o];
            let j = self.source.estimate_into(t, self.theta(x), &mut xi_rec)?;
            traj.t.push(t);
            traj.state.push(x.to_vec());
            traj.estimate.push(xi_rec);
            traj.cost.push(j);
            Ok(())
        };
        let mut failure = None;
        let result = rk4(
            |t, x, dx| match self.rhs(t, x, &mut xi, dx) {
                Ok(_) => true,
                Err(e) => {
                    failure.get_or_insert(e);
                    false
                }
            },
            x0,
            horizon,
            dt,
            stride,
            |t, x| record(t, x, &mut traj),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        result?;
        Ok(traj)
    }
}

/// A recorded controller run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub state: Vec<Vec<f64>>,
    pub estimate: Vec<Vec<f64>>,
    pub cost: Vec<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&[f64]> {
        self.state.last().map(|v| v.as_slice())
    }

    /// Mean state over samples with `t ≥ from`.
    pub fn tail_mean(&self, from: f64) -> Vec<f64> {
        let rows: Vec<&Vec<f64>> = self
            .t
            .iter()
            .zip(&self.state)
            .filter(|(t, _)| **t >= from)
            .map(|(_, s)| s)
            .collect();
        let dim = rows.first().map_or(0, |r| r.len());
        let mut m = vec![0.0; dim];
        for r in &rows {
            for (a, b) in m.iter_mut().zip(r.iter()) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= rows.len().max(1) as f64);
        m
    }

    /// Columns `t, x0…, xi0…, J`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let ns = self.state.first().map_or(0, |s| s.len());
        let ne = self.estimate.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..ns).map(|i| format!("x{i}")));
        header.extend((0..ne).map(|i| format!("xi{i}")));
        header.push("J".into());
        out.write_record(&header)?;
        for i in 0..self.t.len() {
            let mut row = vec![format!("{:e}", self.t[i])];
            row.extend(self.state[i].iter().map(|v| format!("{v:e}")));
            row.extend(self.estimate[i].iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", self.cost[i]));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Classical fixed-step fourth-order Runge–Kutta on `[0, horizon]`.
///
/// `f(t, x, dx)` returns `false` to abort. `observe` sees the initial state and
/// every `stride`-th step (plus the last). A non-finite state yields
/// [`Error::Divergence`] carrying the last finite state.
pub fn rk4<F, O>(mut f: F, x0: &[f64], horizon: f64, dt: f64, stride: usize, mut observe: O) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
    O: FnMut(f64, &[f64]) -> Result<()>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(param(format!("step must be positive, got {dt}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(param(format!("horizon must be nonnegative, got {horizon}")));
    }
    let stride = stride.max(1);
    let n = x0.len();
    let steps = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    observe(0.0, &x)?;
    for step in 0..steps {
        let t = step as f64 * dt;
        let h = dt.min(horizon - t);
        let stage = |x: &[f64], k: &[f64], c: f64, tmp: &mut [f64]| {
            for i in 0..n {
                tmp[i] = x[i] + c * k[i];
            }
        };
        if !f(t, &x, &mut k1) {
            return Err(Error::Divergence { t, state: x });
        }
        stage(&x, &k1, h / 2.0, &mut tmp);
        if !f(t + h / 2.0, &tmp, &mut k2) {
            return Err(Error::Divergence { t, state: x });
        }
        stage(&x, &k2, h / 2.0, &mut tmp);
        if !f(t + h / 2.0, &tmp, &mut k3) {
            return Err(Error::Divergence { t, state: x });
        }
        stage(&x, &k3, h, &mut tmp);
        if !f(t + h, &tmp, &mut k4) {
            return Err(Error::Divergence { t, state: x });
        }
        for i in 0..n {
            tmp[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if tmp.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t, state: x });
        }
        std::mem::swap(&mut x, &mut tmp);
        if (step + 1) % stride == 0 || step + 1 == steps {
            observe(t + h, &x)?;
        }
    }
    Ok(x)
}
