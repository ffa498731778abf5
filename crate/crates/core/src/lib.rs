//! Nonlocal cubic-quintic Schrödinger equation in a symmetric double well.
//!
//! The crate covers the discretization of the model, the linear two-mode
//! basis, the nonlocal overlap integrals and the resulting two-mode reduction,
//! Newton/pseudo-arclength continuation of stationary states, their
//! Bogoliubov-de Gennes stability and time evolution.

pub mod continuation;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod overlaps;
pub mod presets;
pub mod spectrum;
pub mod stability;
pub mod twomode;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};
pub use grid::{Convolver, Grid, GridFunction, Kernel, KernelFamily, PotentialParams};
pub use spectrum::LinearBasis;

/// Reflection class of a stationary state or fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    Symmetric,
    Antisymmetric,
    Asymmetric,
}

impl Symmetry {
    /// `+1` for even, `−1` for odd, `None` for asymmetric.
    pub fn parity(self) -> Option<f64> {
        match self {
            Symmetry::Symmetric => Some(1.0),
            Symmetry::Antisymmetric => Some(-1.0),
            Symmetry::Asymmetric => None,
        }
    }
}

impl std::fmt::Display for Symmetry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Symmetry::Symmetric => "symmetric",
            Symmetry::Antisymmetric => "antisymmetric",
            Symmetry::Asymmetric => "asymmetric",
        })
    }
}
