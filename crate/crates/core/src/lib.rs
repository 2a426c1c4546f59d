pub mod demod;
pub mod error;
pub mod esc;
pub mod estimator;
pub mod multiindex;
pub mod signals;
pub mod vehicle;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/multiindex.md")]
    pub struct MultiIndices;
    #[doc = include_str!("../../../book/src/signals.md")]
    pub struct Signals;
    #[doc = include_str!("../../../book/src/demodulation.md")]
    pub struct Demodulation;
    #[doc = include_str!("../../../book/src/estimation.md")]
    pub struct Estimation;
    #[doc = include_str!("../../../book/src/esc.md")]
    pub struct Controllers;
    #[doc = include_str!("../../../book/src/vehicle.md")]
    pub struct Vehicle;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
    #[doc = include_str!("../../../book/src/numerics.md")]
    pub struct Numerics;
}
