mod config;
mod manifest;
mod suites;

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dither_esc::demod::{DemodSpec, Variant};
use dither_esc::estimator::{convergence_sweep, CostMap};
use dither_esc::signals::covariance;
use dither_esc::vehicle::{simulate_scenario, ScenarioConfig};
use dither_esc::Error;
use nalgebra::DMatrix;

use config::DemodFile;
use manifest::RunManifest;

const DEFAULT_TOL: f64 = 1e-11;

#[derive(Parser)]
#[command(name = "dither-esc", version, about = "Demodulation synthesis, derivative estimation and source-seeking simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide existence of a demodulation signal and export it as a table.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        /// Absolute tolerance of the time averages.
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Averaged derivative estimates over a list of amplitudes.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Simulate a source-seeking scenario.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a verification suite.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the suite's own tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Seed for the randomized polynomial suite.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Failure with its exit status.
#[derive(Debug)]
enum Failure {
    Core(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(e) => match e {
                Error::Config(_) | Error::Parameter(_) | Error::DimensionMismatch { .. } | Error::Capability(_) => 2,
                Error::Singular(_) | Error::SingularCrossVariance(_) => 3,
                Error::Divergence { .. } => 4,
                _ => 1,
            },
            Failure::Verification(_) => 5,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synthesize { config, out, variant, tol } => synthesize(&config, &out, variant, tol),
        Command::Estimate { config, out, variant, tol } => estimate(&config, &out, variant, tol),
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Verify { suite, out, tol, seed } => verify(&suite, &out, tol, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:>14.10}", m[(i, j)])).collect();
        let _ = writeln!(s, "  [{}]", row.join(", "));
    }
    s
}

fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> std::io::Result<()> {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    fs::write(path, s)
}

fn finish(manifest: &RunManifest, out: &Path, stem: &str) -> Result<(), Failure> {
    let path = manifest.write(out, stem)?;
    println!("manifest: {}", path.display());
    Ok(())
}

fn synthesize(config: &Path, out: &Path, flag: Option<Variant>, tol: f64) -> Result<(), Failure> {
    let (file, bytes) = DemodFile::load(config)?;
    let variant = file.variant(flag)?;
    let a = file.demod.amplitude;
    let mut manifest = RunManifest::new(
        "synthesize",
        &bytes,
        &[("variant", variant.to_string()), ("tol", format!("{tol:e}"))],
    );
    fs::create_dir_all(out)?;
    println!("variant: {variant}");
    let demod = match file.build(variant, tol) {
        Ok(d) => d,
        Err(Error::Singular(verdict)) => {
            // show the matrix that failed before exiting
            let ext = file.extended()?;
            let centered = !matches!(variant, Variant::Covariance);
            let q = covariance(&ext, centered, tol)?;
            println!("verdict: {verdict}");
            println!("Q:\n{}", format_matrix(&q));
            let path = out.join("averaging_matrix.csv");
            write_matrix_csv(&path, &q)?;
            manifest.add_output(&path);
            finish(&manifest, out, "synthesize")?;
            return Err(Error::Singular(verdict).into());
        }
        Err(e) => return Err(e.into()),
    };
    println!("verdict: {}", demod.verdict());
    if let Some(m) = demod.averaging_matrix() {
        let label = if variant == Variant::CrossVariance { "R" } else { "Q" };
        println!("{label}:\n{}", format_matrix(m));
        let path = out.join("averaging_matrix.csv");
        write_matrix_csv(&path, m)?;
        manifest.add_output(&path);
    }
    let path = out.join("h_table.csv");
    write_h_table(&path, &demod, a, file.demod.samples)?;
    manifest.add_output(&path);
    println!("h table: {} (a = {a})", path.display());
    finish(&manifest, out, "synthesize")
}

fn write_h_table(path: &Path, demod: &DemodSpec, a: f64, samples: usize) -> Result<(), Failure> {
    let span = demod.window().periodicity.base();
    let samples = samples.max(2);
    let mut s = String::from("t");
    for alpha in demod.basis().iter() {
        let _ = write!(s, ",\"h[{alpha}]\"");
    }
    s.push('\n');
    for k in 0..samples {
        let t = span * k as f64 / (samples - 1) as f64;
        let _ = write!(s, "{t:e}");
        for v in demod.h(t, a) {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

fn estimate(config: &Path, out: &Path, flag: Option<Variant>, tol: f64) -> Result<(), Failure> {
    let (file, bytes) = DemodFile::load(config)?;
    let section = file
        .estimate
        .clone()
        .ok_or_else(|| Error::Config("estimate needs an [estimate] section".into()))?;
    let variant = file.variant(flag)?;
    let demod = file.build(variant, tol)?;
    let cost = CostMap::builtin(&section.map, demod.basis().dim())?;
    let amps = section.amplitude_list()?;
    let sweep = convergence_sweep(&demod, &cost, &section.theta_hat, &amps, tol)?;
    let mut manifest = RunManifest::new(
        "estimate",
        &bytes,
        &[("variant", variant.to_string()), ("tol", format!("{tol:e}"))],
    );
    fs::create_dir_all(out)?;
    let path = out.join("sweep.csv");
    sweep.write_csv(BufWriter::new(fs::File::create(&path)?), demod.basis())?;
    manifest.add_output(&path);
    for p in &sweep.points {
        println!("a = {:.6e}  max error = {:.6e}", p.a, p.error);
    }
    match (sweep.exact, sweep.slope) {
        (true, _) => println!("exact: every error is below the quadrature floor"),
        (false, Some(s)) => println!("slope: {s:.4}"),
        (false, None) => println!("slope: undetermined (fewer than two usable points)"),
    }
    println!("sweep: {}", path.display());
    finish(&manifest, out, "estimate")
}

fn simulate(config: &Path, out: &Path) -> Result<(), Failure> {
    let bytes = fs::read(config)?;
    let cfg = ScenarioConfig::from_path(config)?;
    let run = simulate_scenario(&cfg)?;
    let mut manifest = RunManifest::new("simulate", &bytes, &[]);
    fs::create_dir_all(out)?;
    let path = out.join(format!("{}.csv", cfg.name));
    run.write_csv(BufWriter::new(fs::File::create(&path)?))?;
    manifest.add_output(&path);
    println!("{}: {}", cfg.name, run.metrics);
    println!("trajectory: {}", path.display());
    finish(&manifest, out, &cfg.name)?;
    match run.diverged_at {
        Some(t) => Err(Error::Divergence { t, state: run.samples.last().map(|s| vec![s.state.x, s.state.y, s.state.theta]).unwrap_or_default() }.into()),
        None => Ok(()),
    }
}

fn verify(suite: &str, out: &Path, tol: Option<f64>, seed: u64) -> Result<(), Failure> {
    let report = suites::run(suite, tol, seed)?;
    let mut manifest = RunManifest::new(
        "verify",
        suite.as_bytes(),
        &[("tol", format!("{tol:?}")), ("seed", seed.to_string())],
    );
    fs::create_dir_all(out)?;
    let path = out.join(format!("verify_{suite}.csv"));
    report.write_csv(BufWriter::new(fs::File::create(&path)?))?;
    manifest.add_output(&path);
    for (stem, data) in &report.extras {
        let p = out.join(format!("{stem}.csv"));
        fs::write(&p, data)?;
        manifest.add_output(&p);
    }
    for c in &report.checks {
        println!(
            "{} {}: value {:.6e}, reference {:.6e}, error {:.3e} (tol {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.reference,
            c.error,
            c.tol
        );
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    if let Some(w) = report.worst() {
        println!("worst: {} (error {:.3e})", w.name, w.error);
    }
    finish(&manifest, out, &format!("verify_{suite}"))?;
    if report.passed() {
        println!("suite {}: PASS", report.suite);
        Ok(())
    } else {
        let failed = report.checks.iter().filter(|c| !c.pass).count();
        Err(Failure::Verification(format!("suite {suite}: {failed} check(s) failed")))
    }
}
