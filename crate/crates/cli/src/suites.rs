//! Named verification suites for `dither-esc verify`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use dither_esc::demod::{check_existence, verify_appendix_equivalence, DemodSpec, Existence};
use dither_esc::estimator::{
    averaged_estimate, convergence_sweep, log_spaced, quartic_map, remark2_map, EstimateSweep, Polynomial,
};
use dither_esc::multiindex::{DerivativeBasis, MultiIndex};
use dither_esc::signals::{covariance, mean_rho, DitherSpec, ExtendedDither};
use dither_esc::vehicle::arm_auxiliary;
use dither_esc::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SUITES: &[&str] = &["appendix", "remark2", "eq37", "crossvariance", "polynomial-exactness"];

/// One line of a suite report.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub error: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn near(name: impl Into<String>, value: f64, reference: f64, tol: f64) -> Self {
        let error = (value - reference).abs();
        Self { name: name.into(), value, reference, error, tol, pass: error < tol }
    }

    fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            reference: bound,
            error: (bound - value).max(0.0),
            tol: 0.0,
            pass: value >= bound,
        }
    }

    fn flag(name: impl Into<String>, pass: bool) -> Self {
        let v = if pass { 1.0 } else { 0.0 };
        Self { name: name.into(), value: v, reference: 1.0, error: 1.0 - v, tol: 0.5, pass }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
    /// Informational lines that do not affect the verdict.
    pub notes: Vec<String>,
    /// Extra CSV outputs: file stem and contents.
    pub extras: Vec<(String, Vec<u8>)>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn worst(&self) -> Option<&Check> {
        self.checks.iter().filter(|c| c.tol > 0.0).max_by(|a, b| (a.error / a.tol).total_cmp(&(b.error / b.tol)))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "check,value,reference,abs_error,tolerance,pass")?;
        for c in &self.checks {
            writeln!(w, "\"{}\",{:e},{:e},{:e},{:e},{}", c.name.replace('"', "\"\""), c.value, c.reference, c.error, c.tol, c.pass)?;
        }
        Ok(())
    }
}

pub fn run(suite: &str, tol: Option<f64>, seed: u64) -> Result<SuiteReport> {
    match suite {
        "appendix" => appendix(tol.unwrap_or(1e-6)),
        "remark2" => remark2(),
        "eq37" => arm_covariance(tol.unwrap_or(1e-8)),
        "crossvariance" => arm_crossvariance(tol.unwrap_or(1e-8)),
        "polynomial-exactness" => polynomial_exactness(tol.unwrap_or(1e-6), seed),
        other => Err(Error::Config(format!("unknown suite `{other}`; available: {}", SUITES.join(", ")))),
    }
}

fn report(suite: &str, checks: Vec<Check>) -> SuiteReport {
    SuiteReport { suite: suite.into(), checks, notes: Vec::new(), extras: Vec::new() }
}

fn appendix(tol: f64) -> Result<SuiteReport> {
    let rep = verify_appendix_equivalence(4, 0.1, tol)?;
    let mut checks: Vec<Check> = rep
        .rows
        .iter()
        .map(|r| Check::near(format!("h_m sup gap m={}", r.m), r.sup_gap, 0.0, tol))
        .collect();
    checks.push(Check::near("inverse factorization gap", rep.inverse_gap, 0.0, 1e-8));
    Ok(report("appendix", checks))
}

fn sweep_csv(sweep: &EstimateSweep, basis: &DerivativeBasis) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    sweep.write_csv(&mut buf, basis)?;
    Ok(buf)
}

fn remark2() -> Result<SuiteReport> {
    let demod = DemodSpec::closed_form(2)?;
    let amps = log_spaced(1e-1, 1e-4, 8);
    let rough = convergence_sweep(&demod, &remark2_map(), &[0.0], &amps, 1e-13)?;
    let smooth = convergence_sweep(&demod, &quartic_map(), &[0.0], &amps, 1e-13)?;
    let nan = f64::NAN;
    let mut rep = report(
        "remark2",
        vec![
            Check::near("slope (4/15)|x|^(5/2)", rough.slope.unwrap_or(nan), 0.5, 0.02),
            Check::at_least("slope x^4/12", smooth.slope.unwrap_or(nan), 0.95),
        ],
    );
    rep.extras.push(("remark2_sweep".into(), sweep_csv(&rough, demod.basis())?));
    rep.extras.push(("quartic_sweep".into(), sweep_csv(&smooth, demod.basis())?));
    Ok(rep)
}

fn arm(min: u32, max: u32) -> Result<ExtendedDither> {
    ExtendedDither::new(DitherSpec::triangle_arm(), DerivativeBasis::enumerate(2, min, max)?)
}

fn arm_covariance(tol: f64) -> Result<SuiteReport> {
    let ext = arm(1, 2)?;
    let quad = 1e-13;
    let mean = mean_rho(&ext, quad)?;
    let q = covariance(&ext, true, quad)?;
    let mut checks = Vec::new();
    let rho_bar = [2.0 / PI, 0.0, 0.5, 0.0, 0.5];
    for (i, want) in rho_bar.iter().enumerate() {
        checks.push(Check::near(format!("rho_bar[{i}]"), mean[i], *want, tol));
    }
    let t = 1.0 / (3.0 * PI);
    let want = [
        [0.5 - 4.0 / (PI * PI), 0.0, t, 0.0, -t],
        [0.0, 0.5, 0.0, 2.0 * t, 0.0],
        [t, 0.0, 0.125, 0.0, -0.125],
        [0.0, 2.0 * t, 0.0, 0.125, 0.0],
        [-t, 0.0, -0.125, 0.0, 0.125],
    ];
    for i in 0..5 {
        for j in i..5 {
            checks.push(Check::near(format!("Q[{i}][{j}]"), q[(i, j)], want[i][j], tol));
        }
    }
    let grad = check_existence(&arm(1, 1)?, true, quad)?;
    checks.push(Check::flag("gradient block estimable", grad.is_estimable()));
    let full = check_existence(&ext, true, quad)?;
    checks.push(Check::flag(
        format!("gradient+Hessian verdict: {full}"),
        matches!(full, Existence::Singular { rank: 4, dim: 5, .. }),
    ));
    let mut rep = report("eq37", checks);
    let printed = -1.0 / (2.0 * PI);
    rep.notes.push(format!(
        "Q[0][4] = {:.12} ; the printed block entry -1/(2 pi) = {printed:.12} differs by {:.3e}",
        q[(0, 4)],
        (q[(0, 4)] - printed).abs()
    ));
    Ok(rep)
}

fn arm_crossvariance(tol: f64) -> Result<SuiteReport> {
    let a = 0.154;
    let demod = DemodSpec::cross_variance(Arc::new(arm_auxiliary()), arm(1, 1)?, true, 1e-13)?;
    let r = demod.averaging_matrix().expect("cross-variance keeps R");
    let mut checks = vec![
        Check::near("R[0][0]", r[(0, 0)], 2.0 / (3.0 * PI), tol),
        Check::near("R[0][1]", r[(0, 1)], 0.0, tol),
        Check::near("R[1][0]", r[(1, 0)], 0.0, tol),
        Check::near("R[1][1]", r[(1, 1)], 0.5, tol),
    ];
    // h_R(t) = (c0 cos 2πt, c1 cos πt); read the coefficients at t = 0
    let h0 = demod.h(0.0, a);
    let want = [-3.0 * PI / (2.0 * a), -2.0 / a];
    for (i, w) in want.iter().enumerate() {
        let rel = ((h0[i] - w) / w).abs();
        checks.push(Check::near(format!("h_R coefficient {i} (relative)"), rel, 0.0, 1e-6));
    }
    Ok(report("crossvariance", checks))
}

fn polynomial_exactness(tol: f64, seed: u64) -> Result<SuiteReport> {
    let ext = ExtendedDither::new(
        DitherSpec::sinusoidal(vec![1.0, 1.0], vec![1.0, 2.0])?,
        DerivativeBasis::enumerate(2, 0, 2)?,
    )?;
    let basis = ext.basis().clone();
    let demod = DemodSpec::covariance(ext, false, 1e-13)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for k in 0..20 {
        let terms: Vec<(MultiIndex, f64)> =
            basis.iter().map(|alpha| (alpha.clone(), rng.random_range(-2.0..2.0))).collect();
        let poly = Polynomial::new(2, terms)?;
        let theta: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let truth: Vec<f64> = basis.iter().map(|alpha| poly.derivative(&theta, alpha)).collect();
        let cost = poly.into_cost_map("random");
        let mut worst: f64 = 0.0;
        for a in [0.05, 0.1, 0.5] {
            let est = averaged_estimate(&demod, &cost, &theta, a, 1e-10)?;
            for (e, t) in est.iter().zip(&truth) {
                worst = worst.max((e - t).abs());
            }
        }
        checks.push(Check::near(format!("polynomial {k}"), worst, 0.0, tol));
    }
    let mut rep = report("polynomial-exactness", checks);
    rep.notes.push(format!("seed {seed}"));
    Ok(rep)
}
