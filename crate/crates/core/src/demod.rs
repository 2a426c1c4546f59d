//! Existence test and synthesis of demodulation signals.
//!
//! A demodulation signal `h(t, a)` turns the measured cost into derivative
//! estimates: the time mean of `h(τ, a) J(θ̂ + a p(τ))` recovers the basis
//! derivatives of `J` at `θ̂` whenever `J` is a polynomial in the span of the
//! basis. Every variant here has the form
//!
//! ```text
//! h(t, a) = A(a)⁻¹ · W · s(t)
//! ```
//!
//! with `A(a) = diag(a^{|α|} / α!)`, a fixed weight matrix `W` and a source
//! signal `s`: the (optionally centered) extended dither, or an auxiliary
//! signal for the cross-variance route.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{param, Error, Result};
use crate::multiindex::{factorial, powu, DerivativeBasis};
use crate::signals::{
    covariance, cross_variance, mean_rho, time_average, AveragingWindow, DitherSpec,
    ExtendedDither, Periodicity, VectorSignal, WaveformTable,
};

/// Relative singular-value threshold below which a direction counts as null.
pub const RANK_TOL: f64 = 1e-8;

const MAX_NULL_VECTORS: usize = 3;

/// Verdict on whether a demodulation signal exists.
#[derive(Debug, Clone, PartialEq)]
pub enum Existence {
    Estimable { dim: usize },
    /// `null_vectors` are unit vectors `β` with `avg (ρᵀβ)² ≈ 0`.
    Singular {
        rank: usize,
        dim: usize,
        null_vectors: Vec<Vec<f64>>,
    },
}

impl Existence {
    pub fn is_estimable(&self) -> bool {
        matches!(self, Existence::Estimable { .. })
    }

    pub fn rank(&self) -> usize {
        match self {
            Existence::Estimable { dim } => *dim,
            Existence::Singular { rank, .. } => *rank,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Existence::Estimable { dim } | Existence::Singular { dim, .. } => *dim,
        }
    }
}

impl fmt::Display for Existence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Existence::Estimable { dim } => write!(f, "estimable, rank {dim}/{dim}"),
            Existence::Singular {
                rank,
                dim,
                null_vectors,
            } => {
                write!(f, "singular, rank {rank}/{dim}")?;
                for v in null_vectors {
                    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
                    write!(f, "; null direction ({})", parts.join(", "))?;
                }
                Ok(())
            }
        }
    }
}

/// Numerical rank of `m` from its singular values.
///
/// A singular value counts as zero when it is below `rank_tol · σ_max` or
/// below `abs_floor`; the floor catches matrices that vanish entirely.
pub fn rank_verdict(m: &DMatrix<f64>, rank_tol: f64, abs_floor: f64) -> Existence {
    let dim = m.ncols();
    let svd = m.clone().svd(false, true);
    let sigma_max = svd.singular_values.max();
    let cut = (rank_tol * sigma_max).max(abs_floor);
    let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
    if rank == dim {
        return Existence::Estimable { dim };
    }
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let null_vectors = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] <= cut)
        .take(MAX_NULL_VECTORS)
        .map(|i| canonical_sign(v_t.row(i).iter().copied().collect()))
        .collect();
    Existence::Singular {
        rank,
        dim,
        null_vectors,
    }
}

// Flip so the largest-magnitude entry is positive; keeps reports deterministic.
fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let s = if big < 0.0 { -1.0 } else { 1.0 } / norm;
    v.iter_mut().for_each(|x| *x *= s);
    v
}

fn noise_floor(tol: f64) -> f64 {
    100.0 * tol
}

/// Decide whether a demodulation signal exists for `ext`.
pub fn check_existence(ext: &ExtendedDither, centered: bool, tol: f64) -> Result<Existence> {
    let q = covariance(ext, centered, tol)?;
    Ok(rank_verdict(&q, RANK_TOL, noise_floor(tol)))
}

/// `A(a) = diag(a^{|α_i|} / α_i!)` over a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeMatrix {
    a: f64,
    diag: Vec<f64>,
}

impl AmplitudeMatrix {
    pub fn new(basis: &DerivativeBasis, a: f64) -> Result<Self> {
        check_amplitude(a)?;
        let diag = basis
            .iter()
            .map(|alpha| powu(a, alpha.order()) / alpha.factorial())
            .collect();
        Ok(Self { a, diag })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag))
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.diag.len(),
            self.diag.iter().map(|d| 1.0 / d),
        ))
    }
}

pub(crate) fn check_amplitude(a: f64) -> Result<()> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(param(format!("dither amplitude must lie in (0, 1), got {a}")))
    }
}

/// How `h` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `A⁻¹ Q⁻¹ ρ` with the raw covariance.
    Covariance,
    /// `A⁻¹ Q̃⁻¹ ρ̃`: centered covariance and centered dither, so `h` has zero mean.
    ZeroMean,
    /// `A⁻¹ Q̃⁻¹ ρ`: centered covariance applied to the raw dither.
    PaperVerbatim,
    /// `A⁻¹ R⁻¹ r` for an auxiliary signal `r`.
    CrossVariance,
    /// Per-component sinusoidal rules for `p_k = d_k sin(r_k t)`, orders 1 and 2.
    SinusoidalRules,
    /// Single-harmonic closed form for `p = sin τ`.
    ClosedForm,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Covariance => "covariance",
            Variant::ZeroMean => "zero-mean",
            Variant::PaperVerbatim => "paper-verbatim",
            Variant::CrossVariance => "crossvariance",
            Variant::SinusoidalRules => "sinusoidal-rules",
            Variant::ClosedForm => "closed-form",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "covariance" => Variant::Covariance,
            "zero-mean" => Variant::ZeroMean,
            "paper-verbatim" => Variant::PaperVerbatim,
            "crossvariance" | "cross-variance" => Variant::CrossVariance,
            "sinusoidal-rules" => Variant::SinusoidalRules,
            "closed-form" => Variant::ClosedForm,
            other => {
                return Err(Error::Config(format!(
                    "unknown variant `{other}` (expected covariance, crossvariance, zero-mean or paper-verbatim)"
                )))
            }
        })
    }
}

#[derive(Clone)]
enum Source {
    /// `ρ(t) − offset`.
    Rho { offset: Vec<f64> },
    Aux(Arc<dyn VectorSignal>),
    /// `2^m (−1)^{⌊m/2⌋} · {sin mτ, cos mτ}` for odd/even `m`.
    Harmonic { m: u32 },
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Rho { offset } => f.debug_struct("Rho").field("offset", offset).finish(),
            Source::Aux(r) => f.debug_struct("Aux").field("dim", &r.dim()).finish(),
            Source::Harmonic { m } => f.debug_struct("Harmonic").field("m", m).finish(),
        }
    }
}

/// A synthesized demodulation signal. Immutable and cheap to clone.
#[derive(Debug, Clone)]
pub struct DemodSpec {
    variant: Variant,
    ext: ExtendedDither,
    source: Source,
    weights: DMatrix<f64>,
    averaging: Option<DMatrix<f64>>,
    verdict: Existence,
    /// Mean subtracted from `ρ` in the defining condition, if any.
    condition_mean: Option<Vec<f64>>,
    orders: Vec<u32>,
    factorials: Vec<f64>,
}

impl DemodSpec {
    fn assemble(
        variant: Variant,
        ext: ExtendedDither,
        source: Source,
        weights: DMatrix<f64>,
        averaging: Option<DMatrix<f64>>,
        verdict: Existence,
        condition_mean: Option<Vec<f64>>,
    ) -> Self {
        let orders = ext.basis().iter().map(|a| a.order()).collect();
        let factorials = ext.basis().iter().map(|a| a.factorial()).collect();
        Self {
            variant,
            ext,
            source,
            weights,
            averaging,
            verdict,
            condition_mean,
            orders,
            factorials,
        }
    }

    /// Covariance route. `centered` selects the zero-mean variant.
    pub fn covariance(ext: ExtendedDither, centered: bool, tol: f64) -> Result<Self> {
        let q = covariance(&ext, centered, tol)?;
        let verdict = rank_verdict(&q, RANK_TOL, noise_floor(tol));
        if !verdict.is_estimable() {
            return Err(Error::Singular(verdict));
        }
        let w = symmetric_inverse(&q);
        let (variant, offset, cond) = if centered {
            let mean = mean_rho(&ext, tol)?.as_slice().to_vec();
            (Variant::ZeroMean, mean.clone(), Some(mean))
        } else {
            (Variant::Covariance, vec![0.0; ext.len()], None)
        };
        Ok(Self::assemble(
            variant,
            ext,
            Source::Rho { offset },
            w,
            Some(q),
            verdict,
            cond,
        ))
    }

    /// Centered covariance inverse applied to the uncentered dither.
    ///
    /// Its mean is generally nonzero, so constant cost offsets leak into the
    /// estimate. Its defining condition still holds against `ρ̃`.
    pub fn paper_verbatim(ext: ExtendedDither, tol: f64) -> Result<Self> {
        let q = covariance(&ext, true, tol)?;
        let verdict = rank_verdict(&q, RANK_TOL, noise_floor(tol));
        if !verdict.is_estimable() {
            return Err(Error::Singular(verdict));
        }
        let mean = mean_rho(&ext, tol)?.as_slice().to_vec();
        let w = symmetric_inverse(&q);
        let zeros = vec![0.0; ext.len()];
        Ok(Self::assemble(
            Variant::PaperVerbatim,
            ext,
            Source::Rho { offset: zeros },
            w,
            Some(q),
            verdict,
            Some(mean),
        ))
    }

    /// Cross-variance route `A⁻¹ R⁻¹ r(t)`.
    pub fn cross_variance(
        r: Arc<dyn VectorSignal>,
        ext: ExtendedDither,
        centered: bool,
        tol: f64,
    ) -> Result<Self> {
        let rm = cross_variance(r.as_ref(), &ext, centered, tol)?;
        let verdict = rank_verdict(&rm, RANK_TOL, noise_floor(tol));
        if !verdict.is_estimable() {
            return Err(Error::SingularCrossVariance(verdict));
        }
        let w = rm
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::SingularCrossVariance(verdict.clone()))?;
        let cond = if centered {
            Some(mean_rho(&ext, tol)?.as_slice().to_vec())
        } else {
            None
        };
        Ok(Self::assemble(
            Variant::CrossVariance,
            ext,
            Source::Aux(r),
            w,
            Some(rm),
            verdict,
            cond,
        ))
    }

    /// Per-component rules for a sinusoidal dither `p_k = d_k sin(r_k t)` with
    /// distinct rates, over a basis of orders 1 and/or 2:
    ///
    /// * `e_k`: `2/(a d_k) sin(r_k t)`
    /// * `2e_k`: `16/(a² d_k²)(sin²(r_k t) − ½)`
    /// * `e_j + e_k`: `4/(a² d_j d_k) sin(r_j t) sin(r_k t)`
    ///
    /// The rules are only correct when the rates avoid the usual resonances
    /// (no rate equal to another, to twice another, or to a sum or difference
    /// of two others); that is not checked here.
    pub fn sinusoidal_rules(ext: ExtendedDither) -> Result<Self> {
        let (d, _) = ext.dither().sinusoid_params().ok_or_else(|| {
            Error::Capability("sinusoidal rules need a sinusoidal dither".into())
        })?;
        let basis = ext.basis();
        if basis.min_order() < 1 || basis.max_order() > 2 {
            return Err(Error::Capability(
                "sinusoidal rules cover derivative orders 1 and 2 only".into(),
            ));
        }
        let o = ext.len();
        let mut w = DMatrix::zeros(o, o);
        let mut offset = vec![0.0; o];
        for (i, alpha) in basis.iter().enumerate() {
            let active: Vec<usize> = (0..alpha.dim()).filter(|&k| alpha.entries()[k] > 0).collect();
            w[(i, i)] = match (alpha.order(), active.as_slice()) {
                (1, [k]) => 2.0 / (d[*k] * d[*k]),
                (2, [k]) => {
                    offset[i] = d[*k] * d[*k] / 2.0;
                    8.0 / powu(d[*k], 4)
                }
                (2, [j, k]) => 4.0 / (d[*j] * d[*j] * d[*k] * d[*k]),
                _ => unreachable!("orders restricted to 1..=2"),
            };
            if w[(i, i)].is_infinite() {
                return Err(param("sinusoidal rules need nonzero channel amplitudes"));
            }
        }
        let verdict = Existence::Estimable { dim: o };
        let cond = Some(offset.clone());
        Ok(Self::assemble(
            Variant::SinusoidalRules,
            ext,
            Source::Rho { offset },
            w,
            None,
            verdict,
            cond,
        ))
    }

    /// Closed-form demodulator of the `m`-th derivative for `p = sin τ`.
    pub fn closed_form(m: u32) -> Result<Self> {
        let ext = ExtendedDither::new(
            DitherSpec::sinusoidal(vec![1.0], vec![1.0])?,
            DerivativeBasis::enumerate(1, m, m)?,
        )?;
        let cond = (m > 0).then(|| vec![if m % 2 == 0 { binom_half(m) } else { 0.0 }]);
        Ok(Self::assemble(
            Variant::ClosedForm,
            ext,
            Source::Harmonic { m },
            DMatrix::identity(1, 1),
            None,
            Existence::Estimable { dim: 1 },
            cond,
        ))
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn extended_dither(&self) -> &ExtendedDither {
        &self.ext
    }

    pub fn dither(&self) -> &Arc<DitherSpec> {
        self.ext.dither()
    }

    pub fn basis(&self) -> &DerivativeBasis {
        self.ext.basis()
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `W`, i.e. `Q⁻¹` or `R⁻¹` for the synthesized variants.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// `Q` or `R`, when the variant was synthesized from one.
    pub fn averaging_matrix(&self) -> Option<&DMatrix<f64>> {
        self.averaging.as_ref()
    }

    pub fn verdict(&self) -> &Existence {
        &self.verdict
    }

    /// Averaging window for means of `h · (anything driven by the dither)`.
    pub fn window(&self) -> AveragingWindow {
        match &self.source {
            Source::Aux(r) => r.window().combine(&self.ext.window()),
            _ => self.ext.window(),
        }
    }

    /// Evaluate `h(t, a)` into `out` (length `len()`).
    pub fn h_into(&self, t: f64, a: f64, out: &mut [f64]) {
        let q = self.weights.ncols();
        let mut stack = [0.0; 32];
        let mut heap = Vec::new();
        let s: &mut [f64] = if q <= stack.len() {
            &mut stack[..q]
        } else {
            heap.resize(q, 0.0);
            &mut heap
        };
        match &self.source {
            Source::Rho { offset } => {
                self.ext.eval_into(t, s);
                for (v, m) in s.iter_mut().zip(offset) {
                    *v -= m;
                }
            }
            Source::Aux(r) => r.eval_into(t, s),
            Source::Harmonic { m } => s[0] = harmonic(*m, t),
        }
        for (i, o) in out.iter_mut().enumerate() {
            let row: f64 = (0..q).map(|j| self.weights[(i, j)] * s[j]).sum();
            *o = row * self.factorials[i] / powu(a, self.orders[i]);
        }
    }

    pub fn h(&self, t: f64, a: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.h_into(t, a, &mut out);
        out
    }

    /// `‖avg h(τ,a) ρ̂(τ)ᵀ − A(a)⁻¹‖_∞`, with `ρ̂` centered when the variant is.
    pub fn defining_residual(&self, a: f64, tol: f64) -> Result<f64> {
        check_amplitude(a)?;
        let o = self.len();
        let mean = self.condition_mean.clone().unwrap_or_else(|| vec![0.0; o]);
        let f = |t: f64, out: &mut [f64]| {
            let mut h = vec![0.0; o];
            let mut rho = vec![0.0; o];
            self.h_into(t, a, &mut h);
            self.ext.eval_into(t, &mut rho);
            for i in 0..o {
                for j in 0..o {
                    out[i * o + j] = h[i] * (rho[j] - mean[j]);
                }
            }
        };
        let report = time_average(f, o * o, &self.window(), tol)?;
        let target = AmplitudeMatrix::new(self.basis(), a)?.inverse();
        let got = DMatrix::from_row_slice(o, o, &report.value);
        // relative to each row's scale so high-order rows (~a^{-m}) are comparable
        let worst = (0..o)
            .map(|i| {
                let scale = target[(i, i)];
                (0..o)
                    .map(|j| (got[(i, j)] - target[(i, j)]).abs() / scale)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        Ok(worst)
    }

    /// Sample `h(·, a)` over one period into a waveform table.
    pub fn to_table(&self, a: f64, samples: usize) -> Result<WaveformTable> {
        check_amplitude(a)?;
        let window = self.window();
        let Periodicity::Periodic { period } = window.periodicity else {
            return Err(Error::Capability(
                "only periodic demodulation signals can be tabulated".into(),
            ));
        };
        Ok(WaveformTable::sample(
            |t, out| self.h_into(t, a, out),
            self.len(),
            0.0,
            period,
            samples.max(2),
            &window.breakpoints,
        ))
    }
}

fn symmetric_inverse(q: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = q.clone().symmetric_eigen();
    let inv = eig.eigenvalues.map(|l| 1.0 / l);
    let v = &eig.eigenvectors;
    let w = v * DMatrix::from_diagonal(&inv) * v.transpose();
    (&w + w.transpose()) * 0.5
}

// avg sin^m τ for even m: binom(m, m/2) / 2^m
fn binom_half(m: u32) -> f64 {
    factorial(m) / (factorial(m / 2).powi(2) * powu(2.0, m))
}

fn harmonic(m: u32, tau: f64) -> f64 {
    let sign = if (m / 2) % 2 == 0 { 1.0 } else { -1.0 };
    let wave = if m % 2 == 1 {
        (m as f64 * tau).sin()
    } else {
        (m as f64 * tau).cos()
    };
    powu(2.0, m) * sign * wave
}

/// Closed-form demodulator of the `m`-th derivative for the scalar dither `sin τ`:
/// `(2^m m!/a^m) (−1)^{(m−1)/2} sin mτ` for odd `m`, `(2^m m!/a^m) (−1)^{m/2} cos mτ`
/// for even `m`. For `m = 0` this is the constant 1.
pub fn closed_form_sinusoidal_h(m: u32, a: f64) -> Result<impl Fn(f64) -> f64> {
    check_amplitude(a)?;
    let scale = factorial(m) / powu(a, m);
    Ok(move |tau: f64| {
        if m == 0 {
            1.0
        } else {
            scale * harmonic(m, tau)
        }
    })
}

/// Lower-triangular `G` with `G ρ = ρ_⊥` for `ρ = (1, sin τ, …, sin^m τ)` and
/// `ρ_⊥ = (1, sin τ, cos 2τ, sin 3τ, cos 4τ, …)`.
///
/// Row `i` holds `(−1)^{⌊i/2⌋}` times the coefficients of the Chebyshev
/// polynomial `T_i`, since `T_i(sin τ)` is `± sin iτ` or `± cos iτ`.
pub fn appendix_g_matrix(m: usize) -> DMatrix<f64> {
    let mut t: Vec<Vec<f64>> = vec![vec![1.0]];
    if m >= 1 {
        t.push(vec![0.0, 1.0]);
    }
    for k in 2..=m {
        let mut next = vec![0.0; k + 1];
        for (j, c) in t[k - 1].iter().enumerate() {
            next[j + 1] += 2.0 * c;
        }
        for (j, c) in t[k - 2].iter().enumerate() {
            next[j] -= c;
        }
        t.push(next);
    }
    let mut g = DMatrix::zeros(m + 1, m + 1);
    for (i, coeffs) in t.iter().enumerate() {
        let sign = if (i / 2) % 2 == 0 { 1.0 } else { -1.0 };
        for (j, c) in coeffs.iter().enumerate() {
            g[(i, j)] = sign * c;
        }
    }
    g
}

/// `Q_⊥ = diag(1, ½, …, ½)`, the covariance of `ρ_⊥`.
pub fn appendix_q_perp(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m + 1, m + 1, |i, j| match (i, j) {
        (0, 0) => 1.0,
        (i, j) if i == j => 0.5,
        _ => 0.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppendixRow {
    pub m: u32,
    /// Sup-norm gap between the synthesized top component and the closed form.
    pub sup_gap: f64,
    pub worst_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppendixReport {
    pub rows: Vec<AppendixRow>,
    /// `max |Q⁻¹ − Gᵀ Q_⊥⁻¹ G|` for the basis `0..=m_max`.
    pub inverse_gap: f64,
    pub tol: f64,
}

impl AppendixReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.sup_gap < self.tol) && self.inverse_gap < self.tol
    }
}

const APPENDIX_SAMPLES: usize = 4096;

/// Synthesize `h` numerically for `p = sin τ` over bases `0..=m` and compare
/// the top-order component with [`closed_form_sinusoidal_h`], for every
/// `m ≤ m_max`; also check `Q⁻¹ = Gᵀ Q_⊥⁻¹ G` at `m_max`.
pub fn verify_appendix_equivalence(m_max: u32, a: f64, tol: f64) -> Result<AppendixReport> {
    if m_max > 8 {
        return Err(param(format!("appendix check supports m ≤ 8, got {m_max}")));
    }
    check_amplitude(a)?;
    let quad_tol = 1e-14;
    let dither = Arc::new(DitherSpec::sinusoidal(vec![1.0], vec![1.0])?);
    let mut rows = Vec::new();
    let mut inverse_gap = 0.0;
    for m in 0..=m_max {
        let ext = ExtendedDither::new(dither.clone(), DerivativeBasis::enumerate(1, 0, m)?)?;
        let spec = DemodSpec::covariance(ext, false, quad_tol)?;
        let closed = closed_form_sinusoidal_h(m, a)?;
        let top = m as usize;
        let mut h = vec![0.0; top + 1];
        let (mut sup_gap, mut worst_t) = (0.0, 0.0);
        for k in 0..APPENDIX_SAMPLES {
            let t = 2.0 * PI * k as f64 / APPENDIX_SAMPLES as f64;
            spec.h_into(t, a, &mut h);
            let gap = (h[top] - closed(t)).abs();
            if gap > sup_gap {
                sup_gap = gap;
                worst_t = t;
            }
        }
        rows.push(AppendixRow { m, sup_gap, worst_t });
        if m == m_max {
            let g = appendix_g_matrix(top);
            let qp_inv = appendix_q_perp(top)
                .try_inverse()
                .expect("diagonal with positive entries");
            let via_g = g.transpose() * qp_inv * &g;
            inverse_gap = (spec.weights() - via_g).abs().max();
        }
    }
    Ok(AppendixReport {
        rows,
        inverse_gap,
        tol,
    })
}
