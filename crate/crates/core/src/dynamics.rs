//! Time evolution of `i∂ₜψ + μψ = 𝓛ψ + (s R₁∗|ψ|² + δ R₂∗|ψ|⁴)ψ`, projection
//! onto the two-mode phase plane and the screened-Poisson thermal model.
//!
//! The integrator is the implicit midpoint rule: with `ψ̄ = (ψⁿ + ψⁿ⁺¹)/2`,
//! `(1 + i Δt/2 (𝓛 − μ)) ψ̄ = ψⁿ − i Δt/2 V(|ψ̄|²) ψ̄`, solved by fixed-point
//! iteration with a prefactored tridiagonal left-hand side. It is symplectic
//! and conserves the discrete norm up to the iteration tolerance.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuation::Model;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, Kernel};
use crate::linalg::solve_tridiagonal;
use crate::spectrum::{lowest_eigenpairs, LinearBasis};

pub const NORM_DRIFT_TOL: f64 = 1e-8;
pub const DEFAULT_DT: f64 = 5e-3;
/// `|z|` at which the density asymmetry counts as order unity.
pub const ONSET_THRESHOLD: f64 = 0.5;
/// Perturbation size relative to `‖ψ‖`.
pub const PERTURBATION_AMPLITUDE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Snapshot cadence in time units; `0` keeps only the initial and final states.
    pub snapshot_every: f64,
    /// Cadence of the phase-plane and imbalance series.
    pub sample_every: f64,
    pub norm_tol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            t_end: 300.0,
            dt: DEFAULT_DT,
            snapshot_every: 1.0,
            sample_every: 0.2,
            norm_tol: NORM_DRIFT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub t: f64,
    pub z: f64,
    /// `None` when either projection is below `1e−12`.
    pub theta: Option<f64>,
    /// `1 − N_proj/N`
    pub residual_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRun {
    pub mu: f64,
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
    pub snapshots: Vec<GridFunction>,
    /// Sample instants of the scalar series.
    pub times: Vec<f64>,
    pub norm_series: Vec<f64>,
    /// Density imbalance `(N_L − N_R)/N`.
    pub imbalance: Vec<f64>,
    /// Norm of the part of `ψ` with the opposite parity to the initial state's parent.
    pub odd_amplitude: Vec<f64>,
    pub even_amplitude: Vec<f64>,
    pub projection: Vec<PhaseSample>,
    pub max_norm_drift: f64,
    pub final_state: Vec<Complex64>,
}

/// Prefactored `(1 + i h (𝓛 − μ))` for repeated tridiagonal solves.
struct MidpointSolver {
    c: Vec<Complex64>,
    inv_beta: Vec<Complex64>,
    lower: Vec<Complex64>,
}

impl MidpointSolver {
    fn new(model: &Model, mu: f64, h: f64) -> Result<Self> {
        let i = Complex64::new(0.0, 1.0);
        let n = model.n();
        let diag: Vec<Complex64> = model.op.diag.iter().map(|d| 1.0 + i * h * (d - mu)).collect();
        let off: Vec<Complex64> = model.op.off.iter().map(|o| i * h * o).collect();
        let mut c = vec![Complex64::new(0.0, 0.0); n];
        let mut inv_beta = vec![Complex64::new(0.0, 0.0); n];
        let mut beta = diag[0];
        for k in 0..n {
            if k > 0 {
                beta = diag[k] - off[k - 1] * c[k - 1];
            }
            if beta.norm() == 0.0 {
                return Err(Error::Singular);
            }
            inv_beta[k] = 1.0 / beta;
            if k + 1 < n {
                c[k] = off[k] * inv_beta[k];
            }
        }
        Ok(Self { c, inv_beta, lower: off })
    }

    fn solve(&self, rhs: &mut [Complex64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_beta[0];
        for k in 1..n {
            rhs[k] = (rhs[k] - self.lower[k - 1] * rhs[k - 1]) * self.inv_beta[k];
        }
        for k in (0..n - 1).rev() {
            rhs[k] = rhs[k] - self.c[k] * rhs[k + 1];
        }
    }
}

/// `Δx Σ|ψ|²`, the quadratic invariant of the scheme: the Dirichlet operator
/// is symmetric in the unweighted sum, so this is what the midpoint rule
/// conserves exactly. It differs from the trapezoid norm only at the ends.
pub fn conserved_norm(grid: &Grid, psi: &[Complex64]) -> f64 {
    grid.spacing() * psi.iter().map(|p| p.norm_sqr()).sum::<f64>()
}

fn density(psi: &[Complex64]) -> Vec<f64> {
    psi.iter().map(|p| p.norm_sqr()).collect()
}

fn check_finite(psi: &[Complex64], t: f64) -> Result<()> {
    if psi.iter().all(|p| p.re.is_finite() && p.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t })
    }
}

/// One implicit-midpoint step of size `dt`.
fn step(model: &Model, solver: &MidpointSolver, psi: &[Complex64], h: f64) -> Vec<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    let mut bar = psi.to_vec();
    let scale = psi.iter().map(|p| p.norm()).fold(0.0, f64::max).max(1e-300);
    for _ in 0..100 {
        let v = model.nonlinear_potential(&density(&bar));
        let mut next: Vec<Complex64> = psi.iter().zip(&bar).zip(&v).map(|((p, b), vi)| p - i * h * vi * b).collect();
        solver.solve(&mut next);
        let change = next.iter().zip(&bar).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        bar = next;
        if change <= 1e-15 * scale {
            break;
        }
    }
    bar.iter().zip(psi).map(|(b, p)| 2.0 * b - p).collect()
}

/// Reflection-class amplitudes `(‖even part‖, ‖odd part‖)`.
fn parity_amplitudes(grid: &Grid, psi: &[Complex64]) -> (f64, f64) {
    let r = grid.reflect(psi);
    let even: Vec<Complex64> = psi.iter().zip(&r).map(|(a, b)| 0.5 * (a + b)).collect();
    let odd: Vec<Complex64> = psi.iter().zip(&r).map(|(a, b)| 0.5 * (a - b)).collect();
    (grid.norm_sq_complex(&even).sqrt(), grid.norm_sq_complex(&odd).sqrt())
}

/// Density imbalance `(N_L − N_R)/N` with the centre point split evenly.
pub fn density_imbalance(grid: &Grid, psi: &[Complex64]) -> f64 {
    let c = grid.center();
    let w = grid.weights();
    let (mut l, mut r) = (0.0, 0.0);
    for (k, p) in psi.iter().enumerate() {
        let d = w[k] * p.norm_sqr();
        match k.cmp(&c) {
            std::cmp::Ordering::Less => l += d,
            std::cmp::Ordering::Greater => r += d,
            std::cmp::Ordering::Equal => {
                l += 0.5 * d;
                r += 0.5 * d;
            }
        }
    }
    if l + r == 0.0 {
        0.0
    } else {
        (l - r) / (l + r)
    }
}

/// Projects one state onto `(φ_L, φ_R)`.
pub fn project_state(grid: &Grid, basis: &LinearBasis, psi: &[Complex64], t: f64) -> PhaseSample {
    let cl = grid.inner_complex(&basis.phi_l, psi);
    let cr = grid.inner_complex(&basis.phi_r, psi);
    let np = cl.norm_sqr() + cr.norm_sqr();
    let n = grid.norm_sq_complex(psi);
    let z = if np > 0.0 { (cl.norm_sqr() - cr.norm_sqr()) / np } else { 0.0 };
    let theta = (cl.norm() >= 1e-12 && cr.norm() >= 1e-12).then(|| {
        let d = cl.arg() - cr.arg();
        (d + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
    });
    PhaseSample {
        t,
        z,
        theta,
        residual_fraction: if n > 0.0 { 1.0 - np / n } else { 0.0 },
    }
}

/// Evolves `initial` to `t_end`, sampling on the requested cadences.
pub fn evolve(model: &Model, initial: &[Complex64], mu: f64, opts: &EvolveOptions) -> Result<EvolutionRun> {
    let grid = &model.grid;
    grid.check_len(initial.len())?;
    if !(opts.dt > 0.0 && opts.t_end >= 0.0 && opts.dt.is_finite() && opts.t_end.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: "dt must be positive and t_end non-negative".into(),
        });
    }
    check_finite(initial, 0.0)?;
    let h = 0.5 * opts.dt;
    let solver = MidpointSolver::new(model, mu, h)?;
    let steps = (opts.t_end / opts.dt).round() as usize;
    let cadence = |every: f64| if every > 0.0 { ((every / opts.dt).round() as usize).max(1) } else { usize::MAX };
    let snap_every = cadence(opts.snapshot_every);
    let sample_every = cadence(opts.sample_every);

    let n0 = conserved_norm(grid, initial);
    let mut run = EvolutionRun {
        mu,
        dt: opts.dt,
        snapshot_times: Vec::new(),
        snapshots: Vec::new(),
        times: Vec::new(),
        norm_series: Vec::new(),
        imbalance: Vec::new(),
        odd_amplitude: Vec::new(),
        even_amplitude: Vec::new(),
        projection: Vec::new(),
        max_norm_drift: 0.0,
        final_state: Vec::new(),
    };
    let mut psi = initial.to_vec();
    let record = |run: &mut EvolutionRun, psi: &[Complex64], k: usize, t: f64| -> Result<()> {
        if k % sample_every == 0 || k == steps {
            let n = conserved_norm(grid, psi);
            let (e, o) = parity_amplitudes(grid, psi);
            run.times.push(t);
            run.norm_series.push(n);
            run.imbalance.push(density_imbalance(grid, psi));
            run.even_amplitude.push(e);
            run.odd_amplitude.push(o);
            run.projection.push(project_state(grid, &model.basis, psi, t));
        }
        if k % snap_every == 0 || k == 0 || k == steps {
            run.snapshot_times.push(t);
            run.snapshots.push(GridFunction::from_complex(grid, psi)?);
        }
        Ok(())
    };
    record(&mut run, &psi, 0, 0.0)?;
    for k in 1..=steps {
        let t = k as f64 * opts.dt;
        psi = step(model, &solver, &psi, h);
        check_finite(&psi, t)?;
        let n = conserved_norm(grid, &psi);
        let drift = if n0 > 0.0 { (n - n0).abs() / n0 } else { n };
        run.max_norm_drift = run.max_norm_drift.max(drift);
        if drift > opts.norm_tol {
            return Err(Error::NormDrift { t, drift });
        }
        record(&mut run, &psi, k, t)?;
    }
    run.final_state = psi;
    Ok(run)
}

/// The phase-plane series of a finished run.
pub fn project_phase_plane(run: &EvolutionRun, grid: &Grid, basis: &LinearBasis) -> Result<Vec<PhaseSample>> {
    run.snapshots
        .iter()
        .zip(&run.snapshot_times)
        .map(|(s, &t)| {
            grid.check_len(s.n_points)?;
            Ok(project_state(grid, basis, &s.values(), t))
        })
        .collect()
}

/// Linear eigenmodes spanning the random perturbations.
pub const PERTURBATION_MODES: usize = 16;

/// Adds a seeded random complex combination of the lowest linear eigenmodes,
/// of norm `amplitude·‖ψ‖`. Drawing from resolved modes keeps the
/// perturbation independent of the grid spacing.
pub fn random_perturbation(model: &Model, psi: &[f64], amplitude: f64, seed: u64) -> Result<Vec<Complex64>> {
    let grid = &model.grid;
    grid.check_len(psi.len())?;
    let count = PERTURBATION_MODES.min(grid.n_points());
    let modes = lowest_eigenpairs(grid, &model.op, count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = vec![Complex64::new(0.0, 0.0); psi.len()];
    for m in &modes {
        let c = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        for (v, u) in noise.iter_mut().zip(&m.mode) {
            *v += c * u;
        }
    }
    Ok(add_scaled(grid, psi, &noise, amplitude))
}

/// Adds `amplitude·‖ψ‖` times the normalized `mode`.
pub fn mode_perturbation(grid: &Grid, psi: &[f64], mode: &[Complex64], amplitude: f64) -> Vec<Complex64> {
    add_scaled(grid, psi, mode, amplitude)
}

fn add_scaled(grid: &Grid, psi: &[f64], dir: &[Complex64], amplitude: f64) -> Vec<Complex64> {
    let scale = amplitude * grid.norm_sq(psi).sqrt() / grid.norm_sq_complex(dir).sqrt().max(1e-300);
    psi.iter().zip(dir).map(|(p, d)| Complex64::new(*p, 0.0) + scale * d).collect()
}

/// First sample time with `|z| ≥ threshold`.
pub fn asymmetry_onset(run: &EvolutionRun, threshold: f64) -> Option<f64> {
    run.times
        .iter()
        .zip(&run.imbalance)
        .find(|(_, z)| z.abs() >= threshold)
        .map(|(t, _)| *t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub rate: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: usize,
}

/// Least-squares slope of `ln a(t)` over samples with `lo ≤ a/‖ψ‖ ≤ hi`,
/// where `a` is the amplitude of the symmetry-breaking component.
pub fn growth_rate_fit(run: &EvolutionRun, breaking_is_even: bool, lo: f64, hi: f64) -> Option<GrowthFit> {
    let amp = if breaking_is_even { &run.even_amplitude } else { &run.odd_amplitude };
    let mut pts = Vec::new();
    for (k, &t) in run.times.iter().enumerate() {
        let rel = amp[k] / run.norm_series[k].sqrt();
        if rel > hi {
            break;
        }
        if rel >= lo {
            pts.push((t, amp[k].ln()));
        }
    }
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let tx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ty = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tx) * (p.1 - ty)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tx).powi(2)).sum();
    Some(GrowthFit {
        rate: sxy / sxx,
        t_start: pts[0].0,
        t_end: pts[pts.len() - 1].0,
        samples: pts.len(),
    })
}

/// Effective coefficient making the three-point screened-Poisson stencil's
/// Green's function equal the unit-mass exponential kernel samples.
pub fn effective_diffusion(d: f64, spacing: f64) -> f64 {
    let a = spacing / d.sqrt();
    spacing * spacing / (2.0 * a.cosh() - 2.0)
}

/// Solves `m − d m_xx = source` with decaying exterior: beyond the grid the
/// source vanishes and the lattice solution falls off as `e^{−Δx/√d}` per point.
pub fn screened_poisson(grid: &Grid, source: &[f64], d: f64) -> Result<Vec<f64>> {
    grid.check_len(source.len())?;
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: format!("must be positive, got {d}"),
        });
    }
    let n = grid.n_points();
    let c = effective_diffusion(d, grid.spacing()) / grid.spacing().powi(2);
    let decay = (-grid.spacing() / d.sqrt()).exp();
    let mut diag = vec![1.0 + 2.0 * c; n];
    diag[0] -= c * decay;
    diag[n - 1] -= c * decay;
    let off = vec![-c; n - 1];
    solve_tridiagonal(&off, &diag, &off, source)
}

/// Thermal index change `m` for the beam `u`: `m − d m_xx = σ₀(|u|² − |u|⁴)`.
pub fn solve_screened_poisson(grid: &Grid, u: &[Complex64], d: f64, sigma0: f64) -> Result<Vec<f64>> {
    let source: Vec<f64> = u
        .iter()
        .map(|v| {
            let i = v.norm_sqr();
            sigma0 * (i - i * i)
        })
        .collect();
    screened_poisson(grid, &source, d)
}

/// The equivalent nonlocal kernel: exponential with range `√d`.
pub fn thermal_kernel(d: f64) -> Result<Kernel> {
    Kernel::exponential(d.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{seed_from_linear, GridConfig, RunConfig};
    use crate::grid::convolve;
    use crate::Symmetry;

    fn model() -> Model {
        Model::new(RunConfig {
            grid: GridConfig {
                half_width: 12.0,
                spacing: 0.1,
            },
            seed_norm: 0.5,
            ..RunConfig::default()
        })
        .unwrap()
    }

    fn gaussian_u(grid: &Grid, x0: f64, w: f64, a: f64) -> Vec<Complex64> {
        grid.points()
            .iter()
            .map(|x| Complex64::new(a * (-(x - x0).powi(2) / (w * w)).exp(), 0.3 * a * (x / 3.0).sin() * (-(x * x) / 9.0).exp()))
            .collect()
    }

    #[test]
    fn stationary_state_is_an_equilibrium() {
        let m = model();
        let st = seed_from_linear(&m, Symmetry::Symmetric).unwrap();
        let psi0: Vec<Complex64> = st.psi.iter().map(|p| Complex64::new(*p, 0.0)).collect();
        let opts = EvolveOptions {
            t_end: 20.0,
            snapshot_every: 0.0,
            ..EvolveOptions::default()
        };
        let run = evolve(&m, &psi0, st.mu, &opts).unwrap();
        let diff: Vec<Complex64> = run.final_state.iter().zip(&psi0).map(|(a, b)| a - b).collect();
        let rel = (m.grid.norm_sq_complex(&diff) / m.grid.norm_sq_complex(&psi0)).sqrt();
        assert!(rel < 1e-6, "{rel}");
        assert!(run.max_norm_drift <= NORM_DRIFT_TOL);
        for p in &run.projection {
            assert!(p.z.abs() < 1e-8);
            assert!(p.theta.unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn antisymmetric_projection_has_phase_pi() {
        let m = model();
        let st = seed_from_linear(&m, Symmetry::Antisymmetric).unwrap();
        let psi: Vec<Complex64> = st.psi.iter().map(|p| Complex64::new(*p, 0.0)).collect();
        let p = project_state(&m.grid, &m.basis, &psi, 0.0);
        assert!(p.z.abs() < 1e-10);
        assert!((p.theta.unwrap().abs() - std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn mirror_equivariance() {
        let m = model();
        let u = gaussian_u(&m.grid, 1.5, 3.0, 0.6);
        let opts = EvolveOptions {
            t_end: 5.0,
            snapshot_every: 0.0,
            ..EvolveOptions::default()
        };
        let a = evolve(&m, &u, 0.1, &opts).unwrap();
        let b = evolve(&m, &m.grid.reflect(&u), 0.1, &opts).unwrap();
        let rb = m.grid.reflect(&b.final_state);
        let d = a.final_state.iter().zip(&rb).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(d <= 1e-8, "{d}");
        assert!(a.max_norm_drift <= NORM_DRIFT_TOL);
    }

    #[test]
    fn screened_poisson_matches_exponential_kernel() {
        let g = Grid::new(20.0, 0.1).unwrap();
        let u = gaussian_u(&g, -2.0, 1.5, 0.9);
        for d in [0.25, 1.0, 4.0] {
            let m = solve_screened_poisson(&g, &u, d, 0.7).unwrap();
            let src: Vec<f64> = u.iter().map(|v| 0.7 * (v.norm_sqr() - v.norm_sqr().powi(2))).collect();
            let c = convolve(&g, &thermal_kernel(d).unwrap(), &src).unwrap();
            let err = m.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-6, "d={d}: {err}");
        }
    }

    #[test]
    fn screened_poisson_trivial_sources() {
        let g = Grid::new(60.0, 0.1).unwrap();
        let zero = vec![Complex64::new(0.0, 0.0); g.n_points()];
        assert!(solve_screened_poisson(&g, &zero, 1.0, 1.0).unwrap().iter().all(|v| *v == 0.0));
        let m = screened_poisson(&g, &vec![0.3; g.n_points()], 1.0).unwrap();
        assert!((m[g.center()] - 0.3).abs() < 1e-12);
        assert!(screened_poisson(&g, &vec![0.3; g.n_points()], 0.0).is_err());
    }

    #[test]
    fn seeded_perturbation_is_deterministic() {
        let m = model();
        let g = &m.grid;
        let psi: Vec<f64> = g.points().iter().map(|x| (-x * x).exp()).collect();
        let a = random_perturbation(&m, &psi, 1e-3, 7).unwrap();
        let b = random_perturbation(&m, &psi, 1e-3, 7).unwrap();
        let c = random_perturbation(&m, &psi, 1e-3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let diff: Vec<Complex64> = a.iter().zip(&psi).map(|(x, p)| x - p).collect();
        let rel = (g.norm_sq_complex(&diff) / g.norm_sq(&psi)).sqrt();
        assert!((rel - 1e-3).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(5))]

            #[test]
            fn screened_poisson_equals_kernel_convolution(
                d in 0.3f64..4.0,
                centre in -3.0f64..3.0,
                width in 0.8f64..3.0,
                amp in 0.1f64..1.0,
            ) {
                let grid = Grid::new(20.0, 0.1).unwrap();
                let src: Vec<f64> = grid.points().iter().map(|x| amp * (-(x - centre).powi(2) / (width * width)).exp()).collect();
                let m = screened_poisson(&grid, &src, d).unwrap();
                let c = convolve(&grid, &thermal_kernel(d).unwrap(), &src).unwrap();
                let err = m.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                prop_assert!(err <= 1e-6, "{err}");
            }
        }
    }
}
