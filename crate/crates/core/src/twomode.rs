//! Two-mode reduction in the population imbalance `z` and relative phase `θ`.
//!
//! With `g(N) = sηN + δη₄N²` the reduced flow is
//! `ż = 2ω√(1−z²) sinθ`, `θ̇ = −2ωz cosθ/√(1−z²) − g z`,
//! Hamiltonian with `𝓗 = 2ω√(1−z²) cosθ − ½ g z²`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlaps::{OverlapSet, Regime};
use crate::spectrum::LinearBasis;
use crate::Symmetry;

/// Reduced-model coefficients that do not depend on the norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub s: f64,
    pub delta: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub eta4: f64,
    pub omega: f64,
    pub big_omega: f64,
    pub regime: Regime,
}

/// Parameters of the `(z, θ)` flow at fixed norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub s: f64,
    pub delta: f64,
    pub n: f64,
    pub eta: f64,
    pub eta4: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeState {
    pub z: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedPointType {
    Center,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub state: TwoModeState,
    pub family: Symmetry,
    pub stability: FixedPointType,
    pub lambda_sq: f64,
}

/// `N₀ᶜʳ ≤ N₁ᶜʳ` solve `g(N) = −2sω`, `N₂ᶜʳ ≤ N₃ᶜʳ` solve `g(N) = +2sω`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CriticalNorms {
    pub n0: Option<f64>,
    pub n1: Option<f64>,
    pub n2: Option<f64>,
    pub n3: Option<f64>,
}

fn check_sign(name: &'static str, v: f64) -> Result<()> {
    if v == 1.0 || v == -1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be ±1, got {v}"),
        })
    }
}

impl Reduction {
    pub fn new(basis: &LinearBasis, overlaps: &OverlapSet, s: f64, delta: f64) -> Result<Self> {
        Self::with_regime(basis, overlaps, s, delta, overlaps.regime)
    }

    pub fn with_regime(basis: &LinearBasis, overlaps: &OverlapSet, s: f64, delta: f64, regime: Regime) -> Result<Self> {
        check_sign("s", s)?;
        check_sign("delta", delta)?;
        Ok(Self {
            s,
            delta,
            eta0: overlaps.eta[0],
            eta1: overlaps.eta[1],
            eta4: overlaps.eta[4],
            omega: basis.omega,
            big_omega: basis.big_omega,
            regime,
        })
    }

    pub fn omega0(&self) -> f64 {
        self.big_omega - self.omega
    }

    pub fn omega1(&self) -> f64 {
        self.big_omega + self.omega
    }

    /// Cubic coefficient of the `(z, θ)` flow: `η₀` in case 1, `η₀ − η₁` otherwise.
    pub fn eta(&self) -> f64 {
        match self.regime {
            Regime::Case1 => self.eta0,
            Regime::Case2 | Regime::Case3 => self.eta0 - self.eta1,
        }
    }

    /// Cubic coefficient of the symmetric/antisymmetric amplitudes: `η₀` or `η₀ + η₁`.
    pub fn eta_amplitude(&self) -> f64 {
        match self.regime {
            Regime::Case1 => self.eta0,
            Regime::Case2 | Regime::Case3 => self.eta0 + self.eta1,
        }
    }

    /// Retained `η₁` (zero in case 1).
    pub fn eta1_kept(&self) -> f64 {
        match self.regime {
            Regime::Case1 => 0.0,
            Regime::Case2 | Regime::Case3 => self.eta1,
        }
    }

    /// Retained `η₄` (zero in case 3).
    pub fn eta4_kept(&self) -> f64 {
        match self.regime {
            Regime::Case3 => 0.0,
            Regime::Case1 | Regime::Case2 => self.eta4,
        }
    }

    pub fn at_norm(&self, n: f64) -> ModeParams {
        ModeParams {
            s: self.s,
            delta: self.delta,
            n,
            eta: self.eta(),
            eta4: self.eta4_kept(),
            omega: self.omega,
        }
    }

    /// μ on the symmetric (`θ = 0`) or antisymmetric (`θ = π`) branch at norm `n`.
    pub fn branch_mu(&self, family: Symmetry, n: f64) -> f64 {
        let base = match family {
            Symmetry::Antisymmetric => self.omega1(),
            _ => self.omega0(),
        };
        base + 0.5 * self.s * self.eta_amplitude() * n + 0.25 * self.delta * self.eta4_kept() * n * n
    }
}

impl ModeParams {
    pub fn validate(&self) -> Result<()> {
        check_sign("s", self.s)?;
        check_sign("delta", self.delta)?;
        if !(self.n > 0.0) {
            return Err(Error::InvalidParameter {
                name: "N",
                reason: format!("must be > 0, got {}", self.n),
            });
        }
        if !(self.omega > 0.0) {
            return Err(Error::InvalidParameter {
                name: "omega",
                reason: format!("must be > 0, got {}", self.omega),
            });
        }
        Ok(())
    }

    /// `g = sηN + δη₄N²`.
    pub fn g(&self) -> f64 {
        self.s * self.eta * self.n + self.delta * self.eta4 * self.n * self.n
    }

    pub fn with_norm(&self, n: f64) -> Self {
        Self { n, ..*self }
    }
}

pub fn reduced_rhs(state: TwoModeState, p: &ModeParams) -> Result<(f64, f64)> {
    let z = state.z;
    if z.abs() >= 1.0 {
        return Err(Error::Singularity { z });
    }
    let root = (1.0 - z * z).sqrt();
    let (sin, cos) = state.theta.sin_cos();
    let zdot = 2.0 * p.omega * root * sin;
    let thetadot = -2.0 * p.omega * z * cos / root - p.g() * z;
    Ok((zdot, thetadot))
}

pub fn hamiltonian(state: TwoModeState, p: &ModeParams) -> f64 {
    let z = state.z;
    2.0 * p.omega * (1.0 - z * z).max(0.0).sqrt() * state.theta.cos() - 0.5 * p.g() * z * z
}

/// Asymmetric fixed points `(±z, θ)`; `θ = π` when `g > 0`, `θ = 0` when `g < 0`.
pub fn asymmetric_z(p: &ModeParams) -> Vec<TwoModeState> {
    let g = p.g();
    if g == 0.0 {
        return Vec::new();
    }
    let z2 = 1.0 - 4.0 * p.omega * p.omega / (g * g);
    if z2 < 0.0 {
        return Vec::new();
    }
    let z = z2.sqrt();
    let theta = if g > 0.0 { std::f64::consts::PI } else { 0.0 };
    vec![TwoModeState { z, theta }, TwoModeState { z: -z, theta }]
}

fn positive_quadratic_roots(a: f64, b: f64, c: f64) -> (Option<f64>, Option<f64>) {
    let keep = |r: f64| if r > 0.0 && r.is_finite() { Some(r) } else { None };
    if a == 0.0 {
        if b == 0.0 {
            return (None, None);
        }
        return (keep(-c / b), None);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return (None, None);
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let (mut r1, mut r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    (keep(r1), keep(r2))
}

/// Norms where asymmetric fixed points are born or absorbed (`z → 0`).
pub fn critical_norms(p: &ModeParams) -> CriticalNorms {
    let a = p.delta * p.eta4;
    let b = p.s * p.eta;
    let two_s_omega = 2.0 * p.s * p.omega;
    let (n0, n1) = positive_quadratic_roots(a, b, two_s_omega);
    let (n2, n3) = positive_quadratic_roots(a, b, -two_s_omega);
    CriticalNorms { n0, n1, n2, n3 }
}

/// Jacobian of the flow at a fixed point on the `θ ∈ {0, π}` section.
fn section_jacobian(state: TwoModeState, p: &ModeParams) -> [[f64; 2]; 2] {
    let z = state.z;
    let c = state.theta.cos();
    let s = state.theta.sin();
    let one = 1.0 - z * z;
    let root = one.sqrt();
    let w = p.omega;
    [
        [-2.0 * w * z * s / root, 2.0 * w * root * c],
        [-2.0 * w * c / (one * root) - p.g(), 2.0 * w * z * s / root],
    ]
}

/// λ² of the linearization and the resulting type.
pub fn fixed_point_stability(fp: &FixedPoint, p: &ModeParams) -> Result<(f64, FixedPointType)> {
    let (a, b) = reduced_rhs(fp.state, p)?;
    let res = a.abs().max(b.abs());
    if res > 1e-10 {
        return Err(Error::NotFixedPoint(res));
    }
    let j = section_jacobian(fp.state, p);
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    // λ² − tr λ + det = 0 with tr = 0 at every fixed point
    let lambda_sq = 0.25 * tr * tr - det;
    let kind = if lambda_sq > 0.0 {
        FixedPointType::Saddle
    } else {
        FixedPointType::Center
    };
    Ok((lambda_sq, kind))
}

/// All fixed points on the `θ ∈ {0, π}` section with their stability.
pub fn fixed_points(p: &ModeParams) -> Result<Vec<FixedPoint>> {
    let mut out = Vec::with_capacity(4);
    let mut push = |state: TwoModeState, family: Symmetry| -> Result<()> {
        let mut fp = FixedPoint {
            state,
            family,
            stability: FixedPointType::Center,
            lambda_sq: 0.0,
        };
        let (l2, kind) = fixed_point_stability(&fp, p)?;
        fp.lambda_sq = l2;
        fp.stability = kind;
        out.push(fp);
        Ok(())
    };
    push(TwoModeState { z: 0.0, theta: 0.0 }, Symmetry::Symmetric)?;
    push(
        TwoModeState {
            z: 0.0,
            theta: std::f64::consts::PI,
        },
        Symmetry::Antisymmetric,
    )?;
    for st in asymmetric_z(p) {
        if st.z != 0.0 {
            push(st, Symmetry::Asymmetric)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryAmplitudes {
    /// `(ρ_L², ρ_R²)` pairs, equal components for the symmetric and antisymmetric families.
    pub solutions: Vec<(f64, f64)>,
    /// Whether μ lies in the existence interval of the family.
    pub exists: bool,
    /// The μ bound of that interval (`ω_k ± η′²/4η₄`; infinite without quintic term).
    pub mu_bound: f64,
}

/// Symmetric (`θ = 0`) or antisymmetric (`θ = π`) amplitude solutions at chemical potential `mu`.
pub fn stationary_amplitudes(red: &Reduction, mu: f64, family: Symmetry) -> Result<StationaryAmplitudes> {
    let omega_k = match family {
        Symmetry::Symmetric => red.omega0(),
        Symmetry::Antisymmetric => red.omega1(),
        Symmetry::Asymmetric => {
            return Err(Error::InvalidParameter {
                name: "family",
                reason: "amplitude formulas cover the symmetric and antisymmetric families".into(),
            })
        }
    };
    let eta = red.eta_amplitude();
    let e4 = red.eta4_kept();
    let (s, d) = (red.s, red.delta);
    // δη₄ρ⁴ + sη′ρ² + (ω_k − μ) = 0
    if e4 == 0.0 {
        let r = (mu - omega_k) / (s * eta);
        let solutions = if r >= 0.0 { vec![(r, r)] } else { Vec::new() };
        return Ok(StationaryAmplitudes {
            exists: !solutions.is_empty(),
            solutions,
            mu_bound: f64::INFINITY * -s,
        });
    }
    let mu_bound = omega_k - d * eta * eta / (4.0 * e4);
    let disc = eta * eta - 4.0 * d * e4 * (omega_k - mu);
    let mut solutions = Vec::new();
    if disc >= 0.0 {
        let sq = disc.sqrt();
        for sign in [-1.0, 1.0] {
            let r = (-s * eta + sign * sq) / (2.0 * d * e4);
            if r >= -1e-15 {
                let r = r.max(0.0);
                if !solutions.iter().any(|&(a, _): &(f64, f64)| (a - r).abs() <= 1e-15) {
                    solutions.push((r, r));
                }
            }
        }
    }
    solutions.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(StationaryAmplitudes {
        exists: disc >= 0.0,
        solutions,
        mu_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormPolynomial {
    /// Coefficients of `N⁴, N³, N², N, 1`.
    pub coeffs: [f64; 5],
    /// Positive real roots whose back-substituted `z²` lies in `[0, 1]`.
    pub roots: Vec<f64>,
    /// Real or complex roots rejected by the filter.
    pub rejected: usize,
}

/// Quartic in N whose roots are the norms of asymmetric states at chemical potential `mu`:
/// `(sη₀N + δη₄N² − (μ − Ω))(sΔη + δη₄N)² − δη₄ω² = 0`, `Δη = η₀ − η₁`.
pub fn asymmetric_norm_polynomial(red: &Reduction, mu: f64) -> NormPolynomial {
    let (s, d) = (red.s, red.delta);
    let e1 = red.eta1_kept();
    let de = red.eta0 - e1;
    let e4 = red.eta4_kept();
    let m = mu - red.big_omega;
    let w2 = red.omega * red.omega;
    let coeffs = [
        d * e4.powi(3),
        3.0 * s * de * e4 * e4 + s * e1 * e4 * e4,
        3.0 * d * e4 * de * de + 2.0 * d * e4 * de * e1 - m * e4 * e4,
        s * de.powi(3) + s * e1 * de * de - 2.0 * s * d * de * e4 * m,
        -m * de * de - d * e4 * w2,
    ];
    filtered(red, coeffs)
}

/// The same quartic with the reference coefficient signs for the `η₀, η₁, η₄` truncation.
/// In case 1 it coincides with [`asymmetric_norm_polynomial`].
pub fn reference_norm_polynomial(red: &Reduction, mu: f64) -> NormPolynomial {
    let (s, d) = (red.s, red.delta);
    let e1 = red.eta1_kept();
    let de = red.eta0 - e1;
    let e4 = red.eta4_kept();
    let m = mu - red.big_omega;
    let w2 = red.omega * red.omega;
    let coeffs = [
        d * e4.powi(3),
        3.0 * s * e4 * e4 * de - s * e4 * e4 * e1,
        3.0 * d * e4 * de * de - e4 * e4 * m - 2.0 * d * e4 * de * e1,
        s * de.powi(3) - 2.0 * s * d * de * e4 * m - s * e1 * e4 * e4,
        -d * e4 * w2 - de * de * m,
    ];
    filtered(red, coeffs)
}

pub fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

/// Real roots of a polynomial (highest power first) from its companion matrix.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = coeffs.to_vec();
    while c.len() > 1 && c[0] == 0.0 {
        c.remove(0);
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let scale = c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let companion = DMatrix::from_fn(deg, deg, |i, j| {
        if i == 0 {
            -c[j + 1] / c[0]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|r| r.im.abs() <= 1e-7 * (1.0 + r.re.abs()))
        .map(|r| polish_root(&c, r.re))
        .collect();
    roots.retain(|r| r.is_finite() && eval_poly(&c, *r).abs() <= 1e-6 * scale * (1.0 + r.abs()).powi(deg as i32));
    roots.sort_by(f64::total_cmp);
    roots
}

fn polish_root(c: &[f64], mut x: f64) -> f64 {
    let deriv: Vec<f64> = c[..c.len() - 1]
        .iter()
        .enumerate()
        .map(|(i, v)| v * (c.len() - 1 - i) as f64)
        .collect();
    for _ in 0..5 {
        let f = eval_poly(c, x);
        let df = eval_poly(&deriv, x);
        if df == 0.0 {
            break;
        }
        x -= f / df;
    }
    x
}

fn filtered(red: &Reduction, coeffs: [f64; 5]) -> NormPolynomial {
    let all = real_roots(&coeffs);
    let degree = coeffs.iter().position(|c| *c != 0.0).map(|i| 4 - i).unwrap_or(0);
    let mut roots = Vec::new();
    for &n in &all {
        if n <= 0.0 {
            continue;
        }
        let g = red.at_norm(n).g();
        let z2 = 1.0 - 4.0 * red.omega * red.omega / (g * g);
        if (0.0..=1.0).contains(&z2) {
            roots.push(n);
        }
    }
    NormPolynomial {
        coeffs,
        rejected: degree - roots.len(),
        roots,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SymmetryBreaking,
    SymmetryRestoring,
    Pitchfork,
}

/// A reduction-predicted bifurcation on the symmetric or antisymmetric branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeEvent {
    pub kind: EventKind,
    pub parent: Symmetry,
    pub n: f64,
    pub mu: f64,
}

/// Bifurcation points of the reduction: critical norms mapped onto the parent branch.
pub fn predicted_events(red: &Reduction) -> Vec<TwoModeEvent> {
    let p = red.at_norm(1.0);
    let cn = critical_norms(&p);
    let mut out = Vec::new();
    for (lo, hi, g_sign) in [(cn.n2, cn.n3, red.s), (cn.n0, cn.n1, -red.s)] {
        let parent = if g_sign > 0.0 {
            Symmetry::Antisymmetric
        } else {
            Symmetry::Symmetric
        };
        let both = lo.is_some() && hi.is_some();
        for (n, kind) in [(lo, EventKind::SymmetryBreaking), (hi, EventKind::SymmetryRestoring)] {
            if let Some(n) = n {
                out.push(TwoModeEvent {
                    kind: if both { kind } else { EventKind::Pitchfork },
                    parent,
                    n,
                    mu: red.branch_mu(parent, n),
                });
            }
        }
    }
    out
}

/// μ values along the antisymmetric amplitude branch at which the reference
/// quartic changes sign, i.e. where its asymmetric root meets that branch.
pub fn reference_polynomial_contacts(red: &Reduction, mu_lo: f64, mu_hi: f64, step: f64) -> Vec<(f64, f64)> {
    let branch_n = |mu: f64| -> Option<f64> {
        stationary_amplitudes(red, mu, Symmetry::Antisymmetric)
            .ok()
            .and_then(|a| a.solutions.iter().map(|s| 2.0 * s.0).find(|&n| n > 0.0))
    };
    let value = |mu: f64| -> Option<(f64, f64)> {
        let n = branch_n(mu)?;
        Some((eval_poly(&reference_norm_polynomial(red, mu).coeffs, n), n))
    };
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    let mut k = 0usize;
    loop {
        let mu = mu_lo + k as f64 * step;
        if mu > mu_hi {
            break;
        }
        k += 1;
        let cur = value(mu).map(|(v, _)| (mu, v));
        if let (Some((pm, pv)), Some((_, cv))) = (prev, cur) {
            if pv.signum() != cv.signum() {
                let (mut a, mut b) = (pm, mu);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    match value(m) {
                        Some((v, _)) if v.signum() == pv.signum() => a = m,
                        Some(_) => b = m,
                        None => break,
                    }
                }
                let m = 0.5 * (a + b);
                if let Some(n) = branch_n(m) {
                    out.push((m, n));
                }
            }
        }
        prev = cur;
    }
    out
}

/// Sampled trajectory in both coordinate systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub energy: Vec<f64>,
    pub max_relative_drift: f64,
    pub dt_used: f64,
}

/// Relative Hamiltonian drift tolerated by [`integrate_orbit`].
pub const ORBIT_DRIFT_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 10;

/// Classical RK4 with a Hamiltonian-drift monitor. The step is halved and the
/// orbit recomputed while the drift exceeds [`ORBIT_DRIFT_TOL`]. Drift is
/// measured relative to `max(|𝓗₀|, 2ω)`. Samples are kept at the requested `dt`.
pub fn integrate_orbit(initial: TwoModeState, p: &ModeParams, t_end: f64, dt: f64) -> Result<Orbit> {
    if initial.z.abs() >= 1.0 {
        return Err(Error::Singularity { z: initial.z });
    }
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("dt must be > 0 and t_end ≥ 0 (dt={dt}, t_end={t_end})"),
        });
    }
    let mut last_drift = f64::NAN;
    for halvings in 0..=MAX_HALVINGS {
        let sub = 1usize << halvings;
        let orbit = rk4_orbit(initial, p, t_end, dt, sub)?;
        if orbit.max_relative_drift <= ORBIT_DRIFT_TOL {
            return Ok(orbit);
        }
        last_drift = orbit.max_relative_drift;
    }
    Err(Error::HamiltonianDrift {
        drift: last_drift,
        halvings: MAX_HALVINGS,
    })
}

fn rk4_orbit(initial: TwoModeState, p: &ModeParams, t_end: f64, dt: f64, sub: usize) -> Result<Orbit> {
    let steps = (t_end / dt).round() as usize;
    let h = dt / sub as f64;
    let h0 = hamiltonian(initial, p);
    let scale = h0.abs().max(2.0 * p.omega);
    let mut orbit = Orbit {
        t: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        theta: Vec::with_capacity(steps + 1),
        p: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        max_relative_drift: 0.0,
        dt_used: h,
    };
    let mut y = initial;
    let record = |t: f64, y: TwoModeState, orbit: &mut Orbit| -> Result<()> {
        let (zdot, _) = reduced_rhs(y, p)?;
        let e = hamiltonian(y, p);
        orbit.t.push(t);
        orbit.z.push(y.z);
        orbit.theta.push(y.theta);
        orbit.p.push(zdot);
        orbit.energy.push(e);
        orbit.max_relative_drift = orbit.max_relative_drift.max((e - h0).abs() / scale);
        Ok(())
    };
    record(0.0, y, &mut orbit)?;
    let f = |s: TwoModeState, t: f64| -> Result<(f64, f64)> {
        reduced_rhs(s, p).map_err(|_| Error::OrbitSingularity { t })
    };
    let add = |s: TwoModeState, k: (f64, f64), c: f64| TwoModeState {
        z: s.z + c * k.0,
        theta: s.theta + c * k.1,
    };
    for step in 0..steps {
        for j in 0..sub {
            let t = step as f64 * dt + j as f64 * h;
            let k1 = f(y, t)?;
            let k2 = f(add(y, k1, 0.5 * h), t)?;
            let k3 = f(add(y, k2, 0.5 * h), t)?;
            let k4 = f(add(y, k3, h), t)?;
            y = TwoModeState {
                z: y.z + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                theta: y.theta + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
            };
            if y.z.abs() >= 1.0 || !y.z.is_finite() {
                return Err(Error::OrbitSingularity { t: t + h });
            }
        }
        record((step + 1) as f64 * dt, y, &mut orbit)?;
    }
    Ok(orbit)
}

/// Position-momentum form: `ż = p`,
/// `ṗ = −4ω²z − g z · sgn(cosθ) · √(4ω²(1 − z²) − p²)`.
pub fn position_momentum_rhs(z: f64, pm: f64, cos_sign: f64, p: &ModeParams) -> (f64, f64) {
    let w2 = p.omega * p.omega;
    let rad = (4.0 * w2 * (1.0 - z * z) - pm * pm).max(0.0).sqrt();
    (pm, -4.0 * w2 * z - p.g() * z * cos_sign * rad)
}

/// Bundle of orbits started from `seeds`; seeds whose orbit fails are skipped.
pub fn phase_portrait(p: &ModeParams, seeds: &[TwoModeState], t_end: f64, dt: f64) -> Vec<(TwoModeState, Result<Orbit>)> {
    seeds
        .iter()
        .map(|&s| (s, integrate_orbit(s, p, t_end, dt)))
        .collect()
}
