//! Named reference scenarios and the regression runner that checks their
//! measured quantities against stored expectations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::continuation::{
    continue_branch, continue_from, seed_from_linear, state_at_mu, switch_branch, Branch, EventKind, Model, RunConfig,
};
use crate::dynamics::{
    asymmetry_onset, evolve, mode_perturbation, random_perturbation, EvolveOptions, ONSET_THRESHOLD,
    PERTURBATION_AMPLITUDE,
};
use crate::error::Result;
use crate::grid::{Grid, Kernel, KernelFamily};
use crate::overlaps::{compute_overlaps_with, Regime, RegimeThresholds};
use crate::spectrum::LinearBasis;
use crate::stability::{solve_bdg, unstable_mode, INSTABILITY_THRESHOLD};
use crate::twomode::{
    critical_norms, predicted_events, reference_polynomial_contacts, EventKind as TwoModeEventKind, Reduction,
};
use crate::Symmetry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// Seeded random combination of the lowest linear modes.
    Random,
    /// Along the most unstable linearization eigenvector.
    Eigenvector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pipeline {
    /// Linear eigenvalues.
    Spectrum,
    /// `σ_b`, `σ_c` for a kernel family.
    Thresholds { family: KernelFamily },
    /// Critical norms of the reduction and the asymmetric `z` at norm `probe_norm`.
    CriticalNorms { probe_norm: f64 },
    /// Kernel range at which `N₂ᶜʳ` and `N₃ᶜʳ` coalesce.
    Coalescence { family: KernelFamily, sigma_lo: f64, sigma_hi: f64 },
    /// Parent branch trace, optionally followed by the daughter of its first pitchfork.
    Branch { parent: Symmetry, follow_daughter: bool },
    /// Evolution of a perturbed parent state at `mu`.
    Evolve {
        parent: Symmetry,
        mu: f64,
        perturbation: Perturbation,
        options: EvolveOptions,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub quantity: String,
    pub value: f64,
    pub tolerance: f64,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPreset {
    pub name: String,
    pub description: String,
    pub pipeline: Pipeline,
    pub config: RunConfig,
    pub expected: Vec<Expectation>,
}

fn expect(quantity: &str, value: f64, tolerance: f64, provenance: &str) -> Expectation {
    Expectation {
        quantity: quantity.into(),
        value,
        tolerance,
        provenance: provenance.into(),
    }
}

fn config(kernel: Kernel, s: f64, delta: f64) -> RunConfig {
    RunConfig {
        kernel,
        s,
        delta,
        ..RunConfig::default()
    }
}

fn gaussian(sigma: f64) -> Kernel {
    Kernel::gaussian(sigma).expect("preset kernel range is positive")
}

const REFERENCE_PDE: &str = "reference continuation result";
const REFERENCE_TWO_MODE: &str = "reference two-mode prediction";

/// All built-in presets.
pub fn presets() -> Vec<ScenarioPreset> {
    let mut out = vec![
        ScenarioPreset {
            name: "linear-spectrum".into(),
            description: "lowest eigenpairs and rotated basis of the double well".into(),
            pipeline: Pipeline::Spectrum,
            config: RunConfig::default(),
            expected: vec![
                expect("omega0", 0.13282, 5e-4, "reference linear eigenvalue"),
                expect("omega1", 0.15571, 5e-4, "reference linear eigenvalue"),
            ],
        },
        ScenarioPreset {
            name: "overlaps-gaussian".into(),
            description: "overlap integrals against range and the regime thresholds, Gaussian kernel".into(),
            pipeline: Pipeline::Thresholds {
                family: KernelFamily::Gaussian,
            },
            config: RunConfig::default(),
            expected: vec![
                expect("sigma_b", 2.96, 0.05, "reference regime threshold"),
                expect("sigma_c", 9.15, 0.15, "reference regime threshold"),
            ],
        },
        ScenarioPreset {
            name: "overlaps-exponential".into(),
            description: "overlap integrals against range and the regime thresholds, exponential kernel".into(),
            pipeline: Pipeline::Thresholds {
                family: KernelFamily::Exponential,
            },
            config: config(Kernel::exponential(1.0).expect("positive"), 1.0, -1.0),
            expected: vec![
                expect("sigma_b", 1.56, 0.05, "reference regime threshold"),
                expect("sigma_c", 7.01, 0.15, "reference regime threshold"),
            ],
        },
        ScenarioPreset {
            name: "twomode-critical-norms".into(),
            description: "critical norms against kernel range and their coalescence".into(),
            pipeline: Pipeline::Coalescence {
                family: KernelFamily::Gaussian,
                sigma_lo: 5.0,
                sigma_hi: 9.0,
            },
            config: RunConfig::default(),
            expected: vec![expect("coalescence_sigma", 7.52, 0.1, "reference coalescence range")],
        },
        ScenarioPreset {
            name: "twomode-phase-portrait".into(),
            description: "fixed points and phase portrait of the reduction at N = 5, σ = 1".into(),
            pipeline: Pipeline::CriticalNorms { probe_norm: 5.0 },
            config: RunConfig::default(),
            expected: vec![
                expect("n1_critical", 4.9862, 1e-3, "reference critical norm"),
                expect("z_asymmetric_at_probe", 0.4318, 1e-3, "reference fixed-point location"),
            ],
        },
        ScenarioPreset {
            name: "twomode-sigma01".into(),
            description: "stability windows of the reduction at σ = 0.1".into(),
            pipeline: Pipeline::CriticalNorms { probe_norm: 1.0 },
            config: config(gaussian(0.1), 1.0, -1.0),
            expected: vec![
                expect("antisymmetric_lambda_sq_zero_lo", 0.14, 0.02, "reference stability change"),
                expect("antisymmetric_lambda_sq_zero_hi", 4.63, 0.05, "reference stability change"),
                expect("asymmetric_existence_lo", 0.03, 0.01, "reference existence endpoint"),
                expect("asymmetric_existence_hi", 4.75, 0.05, "reference existence endpoint"),
            ],
        },
    ];

    let branch = |name: &str, desc: &str, kernel: Kernel, s: f64, delta: f64, parent: Symmetry, follow: bool, expected: Vec<Expectation>| {
        ScenarioPreset {
            name: name.into(),
            description: desc.into(),
            pipeline: Pipeline::Branch {
                parent,
                follow_daughter: follow,
            },
            config: config(kernel, s, delta),
            expected,
        }
    };
    out.extend([
        branch(
            "sigma01-antisym",
            "antisymmetric branch and its asymmetric daughter, σ = 0.1",
            gaussian(0.1),
            1.0,
            -1.0,
            Symmetry::Antisymmetric,
            true,
            vec![
                expect("pitchfork_1_mu", 0.1686, 0.002, REFERENCE_PDE),
                expect("merge_mu", 0.381, 0.005, REFERENCE_PDE),
                expect("twomode_breaking_mu", 0.1679, 1e-3, REFERENCE_TWO_MODE),
                expect("twomode_restoring_mu", 0.3723, 1e-3, REFERENCE_TWO_MODE),
            ],
        ),
        branch(
            "sigma01-sym",
            "symmetric branch, σ = 0.1",
            gaussian(0.1),
            1.0,
            -1.0,
            Symmetry::Symmetric,
            false,
            vec![
                expect("pitchfork_1_mu", 0.359, 0.005, REFERENCE_PDE),
                expect("twomode_pitchfork_mu", 0.3492, 1e-3, REFERENCE_TWO_MODE),
            ],
        ),
        branch(
            "sigma1-antisym",
            "antisymmetric branch and its asymmetric daughter, σ = 1",
            gaussian(1.0),
            1.0,
            -1.0,
            Symmetry::Antisymmetric,
            true,
            vec![
                expect("pitchfork_1_mu", 0.168, 0.002, REFERENCE_PDE),
                expect("merge_mu", 0.374, 0.005, REFERENCE_PDE),
                expect("twomode_breaking_mu", 0.1673, 1e-3, REFERENCE_TWO_MODE),
                expect("twomode_restoring_mu", 0.364, 1e-3, REFERENCE_TWO_MODE),
            ],
        ),
        branch(
            "sigma1-sym",
            "symmetric branch, σ = 1",
            gaussian(1.0),
            1.0,
            -1.0,
            Symmetry::Symmetric,
            false,
            vec![
                expect("pitchfork_1_mu", 0.355, 0.005, REFERENCE_PDE),
                expect("twomode_pitchfork_mu", 0.342, 1e-3, REFERENCE_TWO_MODE),
            ],
        ),
        branch(
            "sigma8-antisym",
            "antisymmetric branch and its asymmetric daughter, σ = 8",
            gaussian(8.0),
            1.0,
            -1.0,
            Symmetry::Antisymmetric,
            true,
            vec![
                expect("pitchfork_1_mu", 0.195, 0.003, REFERENCE_PDE),
                expect("merge_found", 1.0, 0.0, REFERENCE_PDE),
                expect("reference_quartic_contact_mu", 0.1981, 1e-3, REFERENCE_TWO_MODE),
            ],
        ),
        branch(
            "sigma8-sym",
            "symmetric branch, σ = 8",
            gaussian(8.0),
            1.0,
            -1.0,
            Symmetry::Symmetric,
            false,
            vec![expect("pitchfork_count", 0.0, 0.0, "reference absence of a symmetric-branch pitchfork")],
        ),
        branch(
            "sigma1-focusing",
            "symmetric branch for focusing cubic and defocusing quintic terms, σ = 1",
            gaussian(1.0),
            -1.0,
            1.0,
            Symmetry::Symmetric,
            false,
            vec![
                expect("pitchfork_1_mu", 0.1212, 0.002, REFERENCE_PDE),
                expect("pitchfork_2_mu", -0.0727, 0.003, REFERENCE_PDE),
                expect("twomode_breaking_mu", 0.1212, 1e-3, REFERENCE_TWO_MODE),
                expect("twomode_restoring_mu", -0.0755, 1e-3, REFERENCE_TWO_MODE),
            ],
        ),
        branch(
            "sigma1-focusing-antisym",
            "antisymmetric branch for focusing cubic and defocusing quintic terms, σ = 1",
            gaussian(1.0),
            -1.0,
            1.0,
            Symmetry::Antisymmetric,
            false,
            vec![
                expect("pitchfork_1_mu", -0.0465, 0.003, REFERENCE_PDE),
                expect("twomode_pitchfork_mu", -0.0526, 1e-3, REFERENCE_TWO_MODE),
            ],
        ),
    ]);

    let dynamics = |name: &str, mu: f64, t_end: f64, lo: f64, hi: f64| ScenarioPreset {
        name: name.into(),
        description: format!("evolution of the perturbed antisymmetric state at μ = {mu}, σ = 1"),
        pipeline: Pipeline::Evolve {
            parent: Symmetry::Antisymmetric,
            mu,
            perturbation: Perturbation::Eigenvector,
            options: EvolveOptions {
                t_end,
                ..EvolveOptions::default()
            },
        },
        config: RunConfig::default(),
        expected: vec![expect(
            "onset_time",
            0.5 * (lo + hi),
            0.5 * (hi - lo),
            "reference onset of order-unity asymmetry, widened for perturbation amplitude",
        )],
    };
    out.push(dynamics("dynamics-mu019", 0.19, 300.0, 150.0, 300.0));
    out.push(dynamics("dynamics-mu025", 0.25, 200.0, 70.0, 150.0));
    out
}

pub fn find_preset(name: &str) -> Option<ScenarioPreset> {
    presets().into_iter().find(|p| p.name == name)
}

/// Measured quantities of a pipeline run.
pub type Measurements = BTreeMap<String, f64>;

/// Two-mode reduction for the model's kernels, classified against recomputed thresholds.
pub fn reduction(model: &Model) -> Result<Reduction> {
    let cfg = &model.config;
    let k2 = cfg.kernel2();
    let thresholds = match cfg.kernel.family {
        KernelFamily::Delta => None,
        f => Some(RegimeThresholds::compute(&model.grid, &model.basis, f)?),
    };
    let set = compute_overlaps_with(&model.grid, &model.basis, &cfg.kernel, &k2, thresholds.as_ref())?;
    Reduction::new(&model.basis, &set, cfg.s, cfg.delta)
}

/// Kernel range in `[lo, hi]` where `N₂ᶜʳ`, `N₃ᶜʳ` coalesce (`(sη)² + 8sδη₄ω = 0`).
pub fn coalescence_sigma(
    grid: &Grid,
    basis: &LinearBasis,
    family: KernelFamily,
    s: f64,
    delta: f64,
    lo: f64,
    hi: f64,
) -> Result<Option<f64>> {
    let thresholds = RegimeThresholds::compute(grid, basis, family)?;
    let disc = |sigma: f64| -> Result<f64> {
        let k = Kernel::new(family, sigma)?;
        let set = compute_overlaps_with(grid, basis, &k, &k, Some(&thresholds))?;
        let red = Reduction::new(basis, &set, s, delta)?;
        let eta = red.eta();
        Ok(eta * eta + 8.0 * s * delta * red.eta4_kept() * red.omega)
    };
    let steps = 80;
    let mut a = lo;
    let mut fa = disc(a)?;
    for k in 1..=steps {
        let b = lo + (hi - lo) * k as f64 / steps as f64;
        let fb = disc(b)?;
        if fa.signum() != fb.signum() {
            let (mut x0, mut x1, f0) = (a, b, fa);
            for _ in 0..50 {
                let m = 0.5 * (x0 + x1);
                if disc(m)?.signum() == f0.signum() {
                    x0 = m;
                } else {
                    x1 = m;
                }
            }
            return Ok(Some(0.5 * (x0 + x1)));
        }
        a = b;
        fa = fb;
    }
    Ok(None)
}

/// Parent branch and, if requested and a pitchfork exists, the daughter of its first pitchfork.
pub fn trace_scenario(model: &Model, parent: Symmetry, follow_daughter: bool) -> Result<(Branch, Option<Branch>)> {
    let seed = seed_from_linear(model, parent)?;
    let branch = continue_branch(model, &seed)?;
    let daughter = match (follow_daughter, branch.events_of(EventKind::Pitchfork).next()) {
        (true, Some(ev)) => {
            let (st, dir) = switch_branch(model, ev)?;
            Some(continue_from(model, &st, dir)?)
        }
        _ => None,
    };
    Ok((branch, daughter))
}

pub fn branch_measurements(branch: &Branch, daughter: Option<&Branch>, out: &mut Measurements) {
    let pitchforks: Vec<_> = branch.events_of(EventKind::Pitchfork).collect();
    let folds: Vec<_> = branch.events_of(EventKind::Fold).collect();
    out.insert("pitchfork_count".into(), pitchforks.len() as f64);
    out.insert("fold_count".into(), folds.len() as f64);
    for (k, e) in pitchforks.iter().enumerate() {
        out.insert(format!("pitchfork_{}_mu", k + 1), e.mu);
        out.insert(format!("pitchfork_{}_n", k + 1), e.n);
    }
    for (k, e) in folds.iter().enumerate() {
        out.insert(format!("fold_{}_mu", k + 1), e.mu);
        out.insert(format!("fold_{}_n", k + 1), e.n);
    }
    if let Some(d) = daughter {
        let merge = d.events_of(EventKind::Merge).next();
        out.insert("merge_found".into(), if merge.is_some() { 1.0 } else { 0.0 });
        if let Some(m) = merge {
            out.insert("merge_mu".into(), m.mu);
            out.insert("merge_n".into(), m.n);
        }
        out.insert("daughter_fold_count".into(), d.events_of(EventKind::Fold).count() as f64);
    }
}

pub fn twomode_measurements(model: &Model, parent: Symmetry, out: &mut Measurements) -> Result<()> {
    let red = reduction(model)?;
    for ev in predicted_events(&red).iter().filter(|e| e.parent == parent) {
        let key = match ev.kind {
            TwoModeEventKind::SymmetryBreaking => "twomode_breaking_mu",
            TwoModeEventKind::SymmetryRestoring => "twomode_restoring_mu",
            TwoModeEventKind::Pitchfork => "twomode_pitchfork_mu",
        };
        out.insert(key.into(), ev.mu);
    }
    if red.regime != Regime::Case1 && parent == Symmetry::Antisymmetric {
        if let Some((mu, _)) = reference_polynomial_contacts(&red, red.omega1(), model.config.mu_max, 1e-3).first() {
            out.insert("reference_quartic_contact_mu".into(), *mu);
        }
    }
    Ok(())
}

/// Runs the preset's pipeline and returns every quantity it measures.
pub fn measure(preset: &ScenarioPreset, seed: u64) -> Result<Measurements> {
    let model = Model::new(preset.config.clone())?;
    let mut out = Measurements::new();
    match &preset.pipeline {
        Pipeline::Spectrum => {
            out.insert("omega0".into(), model.basis.omega0);
            out.insert("omega1".into(), model.basis.omega1);
        }
        Pipeline::Thresholds { family } => {
            let t = RegimeThresholds::compute(&model.grid, &model.basis, *family)?;
            out.insert("sigma_b".into(), t.sigma_b);
            out.insert("sigma_c".into(), t.sigma_c);
        }
        Pipeline::Coalescence {
            family,
            sigma_lo,
            sigma_hi,
        } => {
            let cfg = &model.config;
            if let Some(s) = coalescence_sigma(&model.grid, &model.basis, *family, cfg.s, cfg.delta, *sigma_lo, *sigma_hi)? {
                out.insert("coalescence_sigma".into(), s);
            }
        }
        Pipeline::CriticalNorms { probe_norm } => {
            let red = reduction(&model)?;
            let p = red.at_norm(*probe_norm);
            let cn = critical_norms(&p);
            for (k, v) in [("n0", cn.n0), ("n1", cn.n1), ("n2", cn.n2), ("n3", cn.n3)] {
                if let Some(v) = v {
                    out.insert(format!("{k}_critical"), v);
                }
            }
            let antisym_parent = red.s > 0.0;
            let (lo, hi) = if antisym_parent { (cn.n2, cn.n3) } else { (cn.n0, cn.n1) };
            // Antisymmetric λ² and the asymmetric existence window share their endpoints.
            for (k, v) in [("lo", lo), ("hi", hi)] {
                if let Some(v) = v {
                    out.insert(format!("antisymmetric_lambda_sq_zero_{k}"), v);
                    out.insert(format!("asymmetric_existence_{k}"), v);
                }
            }
            if let Some(z) = crate::twomode::asymmetric_z(&p).iter().map(|s| s.z).find(|z| *z > 0.0) {
                out.insert("z_asymmetric_at_probe".into(), z);
            }
        }
        Pipeline::Branch { parent, follow_daughter } => {
            let (branch, daughter) = trace_scenario(&model, *parent, *follow_daughter)?;
            branch_measurements(&branch, daughter.as_ref(), &mut out);
            twomode_measurements(&model, *parent, &mut out)?;
        }
        Pipeline::Evolve {
            parent,
            mu,
            perturbation,
            options,
        } => {
            let run = run_evolution(&model, *parent, *mu, *perturbation, options, seed)?;
            if let Some(t) = run.onset {
                out.insert("onset_time".into(), t);
            }
            out.insert("max_norm_drift".into(), run.run.max_norm_drift);
            out.insert("max_real_part".into(), run.max_real_part);
        }
    }
    Ok(out)
}

pub struct ScenarioRun {
    pub run: crate::dynamics::EvolutionRun,
    pub onset: Option<f64>,
    pub max_real_part: f64,
}

/// Locates the parent state at `mu`, perturbs it and evolves it.
pub fn run_evolution(
    model: &Model,
    parent: Symmetry,
    mu: f64,
    perturbation: Perturbation,
    options: &EvolveOptions,
    seed: u64,
) -> Result<ScenarioRun> {
    let seed_state = seed_from_linear(model, parent)?;
    let branch = continue_branch(model, &seed_state)?;
    let state = state_at_mu(model, &branch, mu)?;
    let spectrum = solve_bdg(model, &state, INSTABILITY_THRESHOLD)?;
    let initial = match perturbation {
        Perturbation::Random => random_perturbation(model, &state.psi, PERTURBATION_AMPLITUDE, seed)?,
        Perturbation::Eigenvector => match unstable_mode(model, &state)? {
            Some((_, mode)) => mode_perturbation(&model.grid, &state.psi, &mode, PERTURBATION_AMPLITUDE),
            None => random_perturbation(model, &state.psi, PERTURBATION_AMPLITUDE, seed)?,
        },
    };
    let run = evolve(model, &initial, mu, options)?;
    Ok(ScenarioRun {
        onset: asymmetry_onset(&run, ONSET_THRESHOLD),
        max_real_part: spectrum.max_real_part,
        run,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressRow {
    pub quantity: String,
    pub expected: f64,
    pub tolerance: f64,
    pub measured: Option<f64>,
    pub status: Status,
    pub provenance: String,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressReport {
    pub preset: String,
    pub rows: Vec<RegressRow>,
    pub status: Status,
    pub warnings: Vec<String>,
}

/// Compares measured quantities with the preset's expectations.
pub fn compare(preset: &ScenarioPreset, measured: &std::result::Result<Measurements, String>) -> RegressReport {
    let mut warnings = Vec::new();
    if preset.expected.is_empty() {
        warnings.push("preset has no expectations; vacuous pass".to_string());
    }
    let rows: Vec<RegressRow> = preset
        .expected
        .iter()
        .map(|e| {
            let (measured, status, note) = match measured {
                Err(msg) => (None, Status::Error, Some(msg.clone())),
                Ok(m) => match m.get(&e.quantity) {
                    None => (None, Status::Fail, Some("quantity not produced by the run".into())),
                    Some(&v) if (v - e.value).abs() <= e.tolerance => (Some(v), Status::Pass, None),
                    Some(&v) => (Some(v), Status::Fail, None),
                },
            };
            RegressRow {
                quantity: e.quantity.clone(),
                expected: e.value,
                tolerance: e.tolerance,
                measured,
                status,
                provenance: e.provenance.clone(),
                note,
            }
        })
        .collect();
    let status = if rows.iter().any(|r| r.status == Status::Error) {
        Status::Error
    } else if rows.iter().any(|r| r.status == Status::Fail) {
        Status::Fail
    } else {
        Status::Pass
    };
    RegressReport {
        preset: preset.name.clone(),
        rows,
        status,
        warnings,
    }
}

/// Runs a preset and compares it with its expectations.
pub fn regress(preset: &ScenarioPreset, seed: u64) -> RegressReport {
    let measured = measure(preset, seed).map_err(|e| e.to_string());
    compare(preset, &measured)
}
