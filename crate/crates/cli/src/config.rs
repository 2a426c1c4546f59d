//! Dither and estimation config files (TOML).
//!
//! ```toml
//! [dither]
//! kind = "sinusoidal"          # or "triangle-arm", "table"
//! amplitudes = [1.0, 1.0]
//! rates = [1.0, 2.0]
//! # table = "arm.toml"         # for kind = "table", relative to this file
//!
//! [basis]
//! min_order = 1
//! max_order = 2
//!
//! [demod]
//! variant = "zero-mean"        # default: zero-mean without order 0, covariance with it
//! amplitude = 0.1
//! samples = 400
//! # auxiliary = [[{ amplitude = -1.0, rate = 6.283185307179586 }], ...]
//!
//! [estimate]                   # only read by `estimate`
//! map = "remark2"
//! theta_hat = [0.0]
//! a_max = 0.1
//! a_min = 1e-4
//! points = 8
//! # amplitudes = [0.1, 0.05]   # instead of the log-spaced range
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use dither_esc::demod::{DemodSpec, Variant};
use dither_esc::multiindex::DerivativeBasis;
use dither_esc::signals::{DitherSpec, ExtendedDither, TrigSignal, TrigTerm, WaveformTable};
use dither_esc::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemodFile {
    pub dither: DitherSection,
    pub basis: BasisSection,
    #[serde(default)]
    pub demod: DemodSection,
    pub estimate: Option<EstimateSection>,
    #[serde(skip)]
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DitherSection {
    Sinusoidal { amplitudes: Vec<f64>, rates: Vec<f64> },
    TriangleArm,
    Table { table: PathBuf },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub min_order: u32,
    pub max_order: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemodSection {
    pub variant: Option<String>,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub auxiliary: Vec<Vec<TrigTerm>>,
}

impl Default for DemodSection {
    fn default() -> Self {
        Self {
            variant: None,
            amplitude: default_amplitude(),
            samples: default_samples(),
            auxiliary: Vec::new(),
        }
    }
}

fn default_amplitude() -> f64 {
    0.1
}
fn default_samples() -> usize {
    400
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub map: String,
    pub theta_hat: Vec<f64>,
    pub amplitudes: Option<Vec<f64>>,
    pub a_max: Option<f64>,
    pub a_min: Option<f64>,
    pub points: Option<usize>,
}

impl EstimateSection {
    pub fn amplitude_list(&self) -> Result<Vec<f64>> {
        match (&self.amplitudes, self.a_max, self.a_min, self.points) {
            (Some(a), None, None, None) => Ok(a.clone()),
            (None, Some(hi), Some(lo), Some(n)) if n >= 1 && hi > lo => {
                Ok(dither_esc::estimator::log_spaced(hi, lo, n))
            }
            _ => Err(Error::Config(
                "estimate needs either `amplitudes` or all of `a_max > a_min` and `points`".into(),
            )),
        }
    }
}

impl DemodFile {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::Config(format!("{}: not UTF-8", path.display())))?;
        let mut file: DemodFile =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        file.dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((file, bytes))
    }

    pub fn dither_spec(&self) -> Result<DitherSpec> {
        match &self.dither {
            DitherSection::Sinusoidal { amplitudes, rates } => {
                DitherSpec::sinusoidal(amplitudes.clone(), rates.clone())
            }
            DitherSection::TriangleArm => Ok(DitherSpec::triangle_arm()),
            DitherSection::Table { table } => {
                let path = self.dir.join(table);
                let text = std::fs::read_to_string(&path)?;
                DitherSpec::from_table(WaveformTable::from_toml_str(&text)?)
            }
        }
    }

    pub fn extended(&self) -> Result<ExtendedDither> {
        let dither = self.dither_spec()?;
        let basis = DerivativeBasis::enumerate(dither.dim(), self.basis.min_order, self.basis.max_order)?;
        ExtendedDither::new(dither, basis)
    }

    /// Variant from the command line, else the file, else the default for the basis.
    pub fn variant(&self, flag: Option<Variant>) -> Result<Variant> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match &self.demod.variant {
            Some(name) => name.parse(),
            None if self.basis.min_order == 0 => Ok(Variant::Covariance),
            None => Ok(Variant::ZeroMean),
        }
    }

    pub fn auxiliary(&self) -> Result<TrigSignal> {
        if self.demod.auxiliary.is_empty() {
            return Err(Error::Config("crossvariance needs `demod.auxiliary`".into()));
        }
        TrigSignal::new(self.demod.auxiliary.clone())
    }

    pub fn build(&self, variant: Variant, tol: f64) -> Result<DemodSpec> {
        let ext = self.extended()?;
        match variant {
            Variant::Covariance => DemodSpec::covariance(ext, false, tol),
            Variant::ZeroMean => DemodSpec::covariance(ext, true, tol),
            Variant::PaperVerbatim => DemodSpec::paper_verbatim(ext, tol),
            Variant::CrossVariance => {
                let centered = self.basis.min_order > 0;
                DemodSpec::cross_variance(Arc::new(self.auxiliary()?), ext, centered, tol)
            }
            Variant::SinusoidalRules => DemodSpec::sinusoidal_rules(ext),
            Variant::ClosedForm => {
                if self.basis.min_order != self.basis.max_order {
                    return Err(Error::Config("closed-form needs a single derivative order".into()));
                }
                DemodSpec::closed_form(self.basis.max_order)
            }
        }
    }
}
