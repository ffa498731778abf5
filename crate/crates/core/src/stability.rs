//! Bogoliubov-de Gennes linearization about real stationary states.
//!
//! With `ψ = ψ₀ + a e^{λt} + b̄ e^{λ̄t}` the perturbation obeys
//! `iλ (a, b) = [[L₁, L₂], [−L₂, −L₁]] (a, b)` where
//! `L₁ = L₋ + s ψ₀R₁[ψ₀·] + 2δ ψ₀R₂[ψ₀³·]` and `L₂ = s ψ₀R₁[ψ₀·] + 2δ ψ₀R₂[ψ₀³·]`.
//! For real `ψ₀` this is equivalent to `λ² = eig(−L₋L₊)` with
//! `L₊ = L₁ + L₂`, `L₋ = L₁ − L₂`, which is what the solver uses.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::continuation::{Model, StationaryState, Subspace, SubspaceKind};
use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::Symmetry;

/// Default threshold on `Re λ` above which a state is unstable.
pub const INSTABILITY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct BdgOperator {
    pub l1: DMatrix<f64>,
    pub l2: DMatrix<f64>,
}

impl BdgOperator {
    /// The `2n × 2n` block matrix `[[L₁, L₂], [−L₂, −L₁]]`.
    pub fn block(&self) -> DMatrix<f64> {
        let n = self.l1.nrows();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.l1);
        m.view_mut((0, n), (n, n)).copy_from(&self.l2);
        m.view_mut((n, 0), (n, n)).copy_from(&(-&self.l2));
        m.view_mut((n, n), (n, n)).copy_from(&(-&self.l1));
        m
    }

    pub fn l_plus(&self) -> DMatrix<f64> {
        &self.l1 + &self.l2
    }

    pub fn l_minus(&self) -> DMatrix<f64> {
        &self.l1 - &self.l2
    }
}

pub fn build_bdg(model: &Model, state: &StationaryState) -> Result<BdgOperator> {
    model.grid.check_len(state.psi.len())?;
    let psi = &state.psi;
    let l_minus = model.l_minus(psi, state.mu);
    let mut l2 = DMatrix::zeros(psi.len(), psi.len());
    model.add_exchange(&mut l2, psi, 1.0, 2.0);
    let l1 = &l_minus + &l2;
    Ok(BdgOperator { l1, l2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdgSpectrum {
    pub eigenvalues: Vec<Complex64>,
    pub max_real_part: f64,
    /// Eigenvalues with `Re λ > threshold`.
    pub unstable_count: usize,
    /// `min |λ|`, the phase-invariance mode.
    pub min_abs: f64,
    /// `|λ|` of the phase-invariance pair, which is neutral by symmetry and
    /// excluded from `max_real_part` and `unstable_count`.
    pub phase_mode: Option<f64>,
    /// Largest distance from any member of a quartet `{λ, −λ, λ̄, −λ̄}` to the spectrum.
    pub quartet_defect: f64,
}

impl BdgSpectrum {
    pub fn is_stable(&self) -> bool {
        self.unstable_count == 0
    }
}

/// Full spectrum of the linearization about `state`, split by parity when
/// the state is symmetric or antisymmetric.
pub fn solve_bdg(model: &Model, state: &StationaryState, threshold: f64) -> Result<BdgSpectrum> {
    let op = build_bdg(model, state)?;
    let lp = op.l_plus();
    let lm = op.l_minus();
    let subs: Vec<Subspace> = match state.symmetry {
        Symmetry::Asymmetric => vec![Subspace::new(&model.grid, SubspaceKind::Full)],
        _ => vec![
            Subspace::new(&model.grid, SubspaceKind::Even),
            Subspace::new(&model.grid, SubspaceKind::Odd),
        ],
    };
    let own = Subspace::for_symmetry(&model.grid, state.symmetry).kind;
    let mut nus: Vec<Complex64> = Vec::with_capacity(model.n());
    let mut gauge = None;
    for sub in subs {
        let a = sub.restrict_matrix(&lp);
        let b = sub.restrict_matrix(&lm);
        let p = &b * &a;
        let mut vals: Vec<Complex64> = p.complex_eigenvalues().iter().copied().collect();
        if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::EigenNoConvergence { residual: f64::NAN });
        }
        if sub.kind == own || sub.kind == SubspaceKind::Full {
            let refined = gauge_eigenvalue(&a, &b, &sub.restrict(&state.psi))?;
            if let Some(k) = (0..vals.len()).min_by(|&i, &j| vals[i].norm().total_cmp(&vals[j].norm())) {
                vals.remove(k);
                gauge = Some((-Complex64::new(refined, 0.0)).sqrt());
            }
        }
        nus.extend(vals);
    }
    let mut eigenvalues = Vec::with_capacity(2 * nus.len());
    for nu in nus {
        // λ² = −ν
        let lam = (-nu).sqrt();
        eigenvalues.push(lam);
        eigenvalues.push(-lam);
    }
    Ok(summarize(eigenvalues, gauge, threshold))
}

/// Two-sided Rayleigh quotient for the phase mode of `L₋L₊`: the left null
/// vector is `ψ₀` and the right one `L₊⁻¹ψ₀`.
fn gauge_eigenvalue(lp: &DMatrix<f64>, lm: &DMatrix<f64>, psi: &[f64]) -> Result<f64> {
    let v = DVector::from_column_slice(psi);
    let r = solve_dense(lp.clone(), &v)?;
    let num = (lm * &v).dot(&v);
    let den = v.dot(&r);
    if den == 0.0 || !den.is_finite() {
        return Ok(0.0);
    }
    Ok(num / den)
}

fn summarize(mut eigenvalues: Vec<Complex64>, gauge: Option<Complex64>, threshold: f64) -> BdgSpectrum {
    let max_real_part = eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max).max(0.0) + 0.0;
    let unstable_count = eigenvalues.iter().filter(|l| l.re > threshold).count();
    if let Some(g) = gauge {
        eigenvalues.push(g);
        eigenvalues.push(-g);
    }
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let min_abs = eigenvalues.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
    let quartet_defect = quartet_defect(&eigenvalues);
    BdgSpectrum {
        eigenvalues,
        max_real_part,
        unstable_count,
        min_abs,
        phase_mode: gauge.map(|g| g.norm()),
        quartet_defect,
    }
}

/// Largest distance from `−λ`, `λ̄` or `−λ̄` to the nearest spectrum member.
pub fn quartet_defect(eigs: &[Complex64]) -> f64 {
    let nearest = |z: Complex64| eigs.iter().map(|e| (e - z).norm()).fold(f64::INFINITY, f64::min);
    eigs.iter()
        .map(|&l| nearest(-l).max(nearest(l.conj())).max(nearest(-l.conj())))
        .fold(0.0, f64::max)
}

/// Spectrum of the block operator by a direct `2n × 2n` eigensolve (`λ = −iν`).
pub fn solve_bdg_block(op: &BdgOperator, threshold: f64) -> BdgSpectrum {
    let i = Complex64::new(0.0, 1.0);
    let eigs = op.block().complex_eigenvalues().iter().map(|nu| -i * nu).collect();
    summarize(eigs, None, threshold)
}

/// Unstable eigenpair `(λ, p + iq)` with the largest real growth rate, for a
/// real unstable eigenvalue; `None` if the state is stable.
pub fn unstable_mode(model: &Model, state: &StationaryState) -> Result<Option<(f64, Vec<Complex64>)>> {
    let op = build_bdg(model, state)?;
    let lp = op.l_plus();
    let lm = op.l_minus();
    let p = &lm * &lp;
    let eig = p.clone().complex_eigenvalues();
    let Some(k) = (0..eig.len())
        .filter(|&k| eig[k].im.abs() < 1e-10 && eig[k].re < 0.0)
        .min_by(|&a, &b| eig[a].re.total_cmp(&eig[b].re))
    else {
        return Ok(None);
    };
    let nu = eig[k].re;
    let lambda = (-nu).sqrt();
    if lambda <= INSTABILITY_THRESHOLD {
        return Ok(None);
    }
    // inverse iteration for the right eigenvector of L₋L₊ at ν
    let n = p.nrows();
    let shift = nu * (1.0 + 1e-10);
    let shifted = &p - DMatrix::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 37) % 11) as f64 * 0.1);
    for _ in 0..6 {
        v = lu.solve(&v).ok_or(Error::Singular)?;
        let nv = v.norm();
        v /= nv;
    }
    let q = -(&lp * &v) / lambda;
    let mode = v.iter().zip(q.iter()).map(|(a, b)| Complex64::new(*a, *b)).collect();
    Ok(Some((lambda, mode)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaComparison {
    pub pde_growth: f64,
    pub two_mode_growth: f64,
    /// `|pde − two_mode| / two_mode` when the reduction predicts instability.
    pub relative_difference: Option<f64>,
    /// Both pipelines agree on stable vs unstable.
    pub classification_agrees: bool,
}

/// Compares the PDE growth rate with `√λ²` from the reduction.
pub fn two_mode_lambda_check(spectrum: &BdgSpectrum, lambda_sq: f64, threshold: f64) -> LambdaComparison {
    let pde = spectrum.max_real_part.max(0.0);
    let tm = if lambda_sq > 0.0 { lambda_sq.sqrt() } else { 0.0 };
    LambdaComparison {
        pde_growth: pde,
        two_mode_growth: tm,
        relative_difference: (tm > 0.0).then(|| (pde - tm).abs() / tm),
        classification_agrees: (pde > threshold) == (tm > threshold),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub mu: f64,
    pub n: f64,
    pub max_real_part: f64,
    pub unstable_count: usize,
    pub min_abs: f64,
    pub quartet_defect: f64,
}

pub fn stability_record(model: &Model, state: &StationaryState) -> Result<StabilityRecord> {
    let sp = solve_bdg(model, state, INSTABILITY_THRESHOLD)?;
    Ok(StabilityRecord {
        mu: state.mu,
        n: state.norm,
        max_real_part: sp.max_real_part,
        unstable_count: sp.unstable_count,
        min_abs: sp.min_abs,
        quartet_defect: sp.quartet_defect,
    })
}
