//! Nonlocal overlap integrals `η₀…η₁₁` of the rotated basis and the
//! truncation regime they select.
//!
//! Each `η_k = ∬ R(x − x′) f(x′) g(x) dx′dx` is evaluated as
//! `∫ g · (R ∗ f) dx`, one convolution per distinct `f`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Convolver, Grid, Kernel, KernelFamily};
use crate::spectrum::LinearBasis;

/// Threshold on `η_rel` separating negligible from significant terms.
pub const ETA_REL_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `η₀, η₄` kept.
    #[serde(rename = "case1_eta0_eta4")]
    Case1,
    /// `η₀, η₁, η₄` kept.
    #[serde(rename = "case2_eta0_eta1_eta4")]
    Case2,
    /// `η₀, η₁` kept, `η₄` dropped.
    #[serde(rename = "case3_eta0_eta1")]
    Case3,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Case1 => "case1_eta0_eta4",
            Regime::Case2 => "case2_eta0_eta1_eta4",
            Regime::Case3 => "case3_eta0_eta1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSet {
    pub eta: [f64; 12],
    pub sigma: f64,
    pub kernel_family: KernelFamily,
    pub regime: Regime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaRelTarget {
    Eta1,
    Eta4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub sigma_b: f64,
    pub sigma_c: f64,
    pub kernel_family: KernelFamily,
}

/// Raw overlap integrals, without regime classification.
pub fn overlap_integrals(grid: &Grid, basis: &LinearBasis, k1: &Kernel, k2: &Kernel) -> Result<[f64; 12]> {
    overlap_integrals_of(grid, &basis.phi_l, &basis.phi_r, k1, k2)
}

/// Overlap integrals for an arbitrary `(φ_L, φ_R)` pair.
pub fn overlap_integrals_of(
    grid: &Grid,
    l: &[f64],
    r: &[f64],
    k1: &Kernel,
    k2: &Kernel,
) -> Result<[f64; 12]> {
    grid.check_len(l.len())?;
    grid.check_len(r.len())?;
    let c1 = Convolver::new(grid, *k1);
    let c2 = if k2 == k1 { c1.clone() } else { Convolver::new(grid, *k2) };
    let prod = |a: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        l.iter().zip(r).map(|(&x, &y)| a(x, y)).collect()
    };
    let l2 = prod(&|x, _| x * x);
    let r2 = prod(&|_, y| y * y);
    let lr = prod(&|x, y| x * y);
    let l4 = prod(&|x, _| x.powi(4));
    let l2r2 = prod(&|x, y| x * x * y * y);
    let l3r = prod(&|x, y| x.powi(3) * y);

    let a = c1.apply(&l2);
    let b = c1.apply(&lr);
    let c = c2.apply(&l4);
    let d = c2.apply(&l2r2);
    let e = c2.apply(&l3r);
    let q = |g: &[f64], h: &[f64]| grid.inner(g, h);
    Ok([
        q(&l2, &a),
        q(&r2, &a),
        q(&lr, &a),
        q(&lr, &b),
        q(&l2, &c),
        q(&r2, &c),
        q(&lr, &c),
        q(&l2, &d),
        q(&lr, &d),
        q(&l2, &e),
        q(&r2, &e),
        q(&lr, &e),
    ])
}

/// Overlap set with its regime classified against `thresholds` (delta kernels are always case 1).
pub fn compute_overlaps_with(
    grid: &Grid,
    basis: &LinearBasis,
    k1: &Kernel,
    k2: &Kernel,
    thresholds: Option<&RegimeThresholds>,
) -> Result<OverlapSet> {
    let eta = overlap_integrals(grid, basis, k1, k2)?;
    let regime = match (k1.family, thresholds) {
        (KernelFamily::Delta, _) => Regime::Case1,
        (_, Some(t)) => classify_regime(k1.range, t),
        (_, None) => classify_regime(k1.range, &RegimeThresholds::compute(grid, basis, k1.family)?),
    };
    Ok(OverlapSet {
        eta,
        sigma: k1.range,
        kernel_family: k1.family,
        regime,
    })
}

/// Overlap set; the regime thresholds for the kernel family are recomputed.
pub fn compute_overlaps(grid: &Grid, basis: &LinearBasis, k1: &Kernel, k2: &Kernel) -> Result<OverlapSet> {
    compute_overlaps_with(grid, basis, k1, k2, None)
}

pub fn eta_rel(set: &OverlapSet, which: EtaRelTarget) -> f64 {
    eta_rel_of(&set.eta, which)
}

fn eta_rel_of(eta: &[f64; 12], which: EtaRelTarget) -> f64 {
    let lead = match which {
        EtaRelTarget::Eta1 => eta[1],
        EtaRelTarget::Eta4 => eta[4],
    };
    lead - eta[2].abs().max(eta[3].abs())
}

pub fn classify_regime(sigma: f64, t: &RegimeThresholds) -> Regime {
    if sigma < t.sigma_b {
        Regime::Case1
    } else if sigma < t.sigma_c {
        Regime::Case2
    } else {
        Regime::Case3
    }
}

impl RegimeThresholds {
    /// Locates `σ_b` (η_rel(η₁) rises through 0.01) and `σ_c` (η_rel(η₄)
    /// falls through 0.01) by a scan in σ followed by bisection.
    pub fn compute(grid: &Grid, basis: &LinearBasis, family: KernelFamily) -> Result<Self> {
        if family == KernelFamily::Delta {
            return Err(Error::InvalidParameter {
                name: "kernel.family",
                reason: "regime thresholds are undefined for the delta kernel".into(),
            });
        }
        let rel = |sigma: f64, which: EtaRelTarget| -> Result<f64> {
            let k = Kernel::new(family, sigma)?;
            Ok(eta_rel_of(&overlap_integrals(grid, basis, &k, &k)?, which) - ETA_REL_THRESHOLD)
        };
        let sigma_b = first_crossing(|s| rel(s, EtaRelTarget::Eta1), 0.05, 40.0, true)?;
        let sigma_c = first_crossing(|s| rel(s, EtaRelTarget::Eta4), sigma_b, 80.0, false)?;
        Ok(Self {
            sigma_b,
            sigma_c,
            kernel_family: family,
        })
    }
}

/// First σ in `[lo, hi]` where `f` changes sign in the requested direction.
fn first_crossing<F: Fn(f64) -> Result<f64>>(f: F, lo: f64, hi: f64, upward: bool) -> Result<f64> {
    let step = 0.05;
    let sign_ok = |v: f64| if upward { v >= 0.0 } else { v < 0.0 };
    let mut a = lo;
    let mut fa = f(a)?;
    if sign_ok(fa) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("criterion already satisfied at the scan start σ = {lo}"),
        });
    }
    while a < hi {
        let b = a + step;
        let fb = f(b)?;
        if sign_ok(fb) {
            let (mut x0, mut x1) = (a, b);
            for _ in 0..50 {
                let m = 0.5 * (x0 + x1);
                if sign_ok(f(m)?) {
                    x1 = m;
                } else {
                    x0 = m;
                }
            }
            return Ok(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    let _ = fa;
    Err(Error::InvalidParameter {
        name: "sigma",
        reason: format!("no threshold crossing below σ = {hi}"),
    })
}
