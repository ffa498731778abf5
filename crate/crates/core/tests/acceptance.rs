use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use dwell::continuation::{Branch, EventKind, Model, RunConfig};
use dwell::dynamics::{
    growth_rate_fit, screened_poisson, thermal_kernel, EvolveOptions, EvolutionRun, NORM_DRIFT_TOL,
};
use dwell::grid::convolve;
use dwell::overlaps::{overlap_integrals, RegimeThresholds};
use dwell::presets::{
    branch_measurements, coalescence_sigma, find_preset, reduction, run_evolution, trace_scenario,
    twomode_measurements, Measurements, Perturbation, Pipeline,
};
use dwell::stability::{solve_bdg, BdgSpectrum, INSTABILITY_THRESHOLD};
use dwell::twomode::{asymmetric_z, critical_norms, fixed_points, integrate_orbit, ModeParams, TwoModeState};
use dwell::{Error, Grid, Kernel, KernelFamily, Symmetry};

struct Failure(String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.to_string())
    }
}

type Check = std::result::Result<(bool, String), Failure>;

fn within(measured: f64, expected: f64, tol: f64) -> bool {
    (measured - expected).abs() <= tol
}

fn fmt_check(name: &str, measured: f64, expected: f64, tol: f64) -> (bool, String) {
    let ok = within(measured, expected, tol);
    (ok, format!("{name} = {measured:.5} (target {expected} ± {tol:e})"))
}

fn all(parts: Vec<(bool, String)>) -> (bool, String) {
    let ok = parts.iter().all(|p| p.0);
    let text = parts
        .into_iter()
        .map(|(ok, s)| if ok { s } else { format!("[x] {s}") })
        .collect::<Vec<_>>()
        .join("; ");
    (ok, text)
}

fn config_of(preset: &str) -> RunConfig {
    find_preset(preset).expect("preset exists").config
}

struct Traced {
    preset: &'static str,
    model: Model,
    parent: Branch,
    daughter: Option<Branch>,
    measured: Measurements,
}

const BRANCH_PRESETS: [&str; 8] = [
    "sigma01-antisym",
    "sigma01-sym",
    "sigma1-antisym",
    "sigma1-sym",
    "sigma8-antisym",
    "sigma8-sym",
    "sigma1-focusing",
    "sigma1-focusing-antisym",
];

fn trace_all() -> Result<Vec<Traced>, Error> {
    BRANCH_PRESETS
        .iter()
        .map(|&name| {
            let preset = find_preset(name).expect("preset exists");
            let Pipeline::Branch { parent, follow_daughter } = preset.pipeline else {
                panic!("{name} is not a branch preset");
            };
            let model = Model::new(preset.config)?;
            let (branch, daughter) = trace_scenario(&model, parent, follow_daughter)?;
            let mut measured = Measurements::new();
            branch_measurements(&branch, daughter.as_ref(), &mut measured);
            twomode_measurements(&model, parent, &mut measured)?;
            Ok(Traced {
                preset: name,
                model,
                parent: branch,
                daughter,
                measured,
            })
        })
        .collect()
}

fn get(traced: &[Traced], preset: &str, key: &str) -> f64 {
    traced
        .iter()
        .find(|t| t.preset == preset)
        .and_then(|t| t.measured.get(key).copied())
        .unwrap_or(f64::NAN)
}

struct Spectra {
    per_branch: Vec<(String, Vec<BdgSpectrum>)>,
}

fn spectra_of(traced: &[Traced]) -> Result<Spectra, Error> {
    let mut per_branch = Vec::new();
    for t in traced {
        let mut branches = vec![(format!("{} parent", t.preset), &t.parent)];
        if let Some(d) = &t.daughter {
            branches.push((format!("{} daughter", t.preset), d));
        }
        for (label, b) in branches {
            let sp = b
                .states
                .iter()
                .map(|s| solve_bdg(&t.model, s, INSTABILITY_THRESHOLD))
                .collect::<Result<Vec<_>, _>>()?;
            per_branch.push((label, sp));
        }
    }
    Ok(Spectra { per_branch })
}

struct Dynamics {
    runs: Vec<(f64, EvolutionRun, Option<f64>, f64)>,
    halved_onset: Option<f64>,
    halved_drift: f64,
    random_onsets: Vec<(f64, u64, Option<f64>)>,
}

fn dynamics() -> Result<Dynamics, Error> {
    let mut runs = Vec::new();
    let mut halved_onset = None;
    let mut halved_drift = 0.0;
    let mut random_onsets = Vec::new();
    for name in ["dynamics-mu019", "dynamics-mu025"] {
        let preset = find_preset(name).expect("preset exists");
        let Pipeline::Evolve {
            parent,
            mu,
            perturbation,
            options,
        } = preset.pipeline
        else {
            panic!("{name} is not an evolution preset");
        };
        let model = Model::new(preset.config)?;
        let r = run_evolution(&model, parent, mu, perturbation, &options, 0)?;
        runs.push((mu, r.run, r.onset, r.max_real_part));
        if name == "dynamics-mu025" {
            let half = EvolveOptions {
                dt: 0.5 * options.dt,
                ..options.clone()
            };
            let h = run_evolution(&model, parent, mu, perturbation, &half, 0)?;
            halved_onset = h.onset;
            halved_drift = h.run.max_norm_drift;
        }
        for seed in 0..2 {
            let r = run_evolution(&model, parent, mu, Perturbation::Random, &options, seed)?;
            random_onsets.push((mu, seed, r.onset));
            halved_drift = halved_drift.max(r.run.max_norm_drift);
        }
    }
    Ok(Dynamics {
        runs,
        halved_onset,
        halved_drift,
        random_onsets,
    })
}

fn criterion_1() -> Check {
    let m = Model::new(RunConfig::default())?;
    Ok(all(vec![
        fmt_check("ω₀", m.basis.omega0, 0.13282, 5e-4),
        fmt_check("ω₁", m.basis.omega1, 0.15571, 5e-4),
    ]))
}

fn criterion_2() -> Check {
    let m = Model::new(RunConfig::default())?;
    let g = RegimeThresholds::compute(&m.grid, &m.basis, KernelFamily::Gaussian)?;
    let e = RegimeThresholds::compute(&m.grid, &m.basis, KernelFamily::Exponential)?;
    Ok(all(vec![
        fmt_check("σ_b Gaussian", g.sigma_b, 2.96, 0.05),
        fmt_check("σ_b exponential", e.sigma_b, 1.56, 0.05),
        fmt_check("σ_c Gaussian", g.sigma_c, 9.15, 0.15),
        fmt_check("σ_c exponential", e.sigma_c, 7.01, 0.15),
    ]))
}

fn criterion_3() -> Check {
    let m = Model::new(config_of("twomode-phase-portrait"))?;
    let red = reduction(&m)?;
    let cn = critical_norms(&red.at_norm(1.0));
    let z = asymmetric_z(&red.at_norm(5.0))
        .iter()
        .map(|s| s.z)
        .find(|z| *z > 0.0)
        .unwrap_or(f64::NAN);
    let sigma = coalescence_sigma(&m.grid, &m.basis, KernelFamily::Gaussian, 1.0, -1.0, 5.0, 10.0)?.unwrap_or(f64::NAN);
    Ok(all(vec![
        fmt_check("N₁ᶜʳ", cn.n1.unwrap_or(f64::NAN), 4.9862, 1e-3),
        fmt_check("z(N=5)", z, 0.4318, 1e-3),
        fmt_check("coalescence σ", sigma, 7.52, 0.1),
    ]))
}

fn bisect(f: impl Fn(f64) -> bool, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) == fa {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-13 {
            break;
        }
    }
    0.5 * (a + b)
}

fn transitions(f: impl Fn(f64) -> bool, lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev = f(lo);
    for k in 1..=steps {
        let b = lo + (hi - lo) * k as f64 / steps as f64;
        let cur = f(b);
        if cur != prev {
            let a = lo + (hi - lo) * (k - 1) as f64 / steps as f64;
            out.push(bisect(&f, a, b));
        }
        prev = cur;
    }
    out
}

struct Windows {
    lambda_zeros: Vec<f64>,
    existence: Vec<f64>,
}

fn windows(p: &ModeParams, n_max: f64) -> Windows {
    let unstable = |family: Symmetry| {
        move |n: f64| {
            fixed_points(&p.with_norm(n))
                .map(|fps| fps.iter().any(|f| f.family == family && f.lambda_sq > 0.0))
                .unwrap_or(false)
        }
    };
    let exists = |n: f64| !asymmetric_z(&p.with_norm(n)).is_empty();
    let mut lambda_zeros = transitions(unstable(Symmetry::Antisymmetric), 1e-4, n_max, 4000);
    lambda_zeros.extend(transitions(unstable(Symmetry::Symmetric), 1e-4, n_max, 4000));
    lambda_zeros.sort_by(f64::total_cmp);
    Windows {
        lambda_zeros,
        existence: transitions(exists, 1e-4, n_max, 4000),
    }
}

fn criterion_4() -> Check {
    let m = Model::new(config_of("twomode-sigma01"))?;
    let p = reduction(&m)?.at_norm(1.0);
    let anti = |n: f64| {
        fixed_points(&p.with_norm(n))
            .map(|fps| fps.iter().any(|f| f.family == Symmetry::Antisymmetric && f.lambda_sq > 0.0))
            .unwrap_or(false)
    };
    let w = Windows {
        lambda_zeros: transitions(anti, 1e-4, 8.0, 4000),
        existence: windows(&p, 8.0).existence,
    };
    let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(f64::NAN);
    Ok(all(vec![
        fmt_check("λ² zero lo", at(&w.lambda_zeros, 0), 0.14, 0.02),
        fmt_check("λ² zero hi", at(&w.lambda_zeros, 1), 4.63, 0.05),
        fmt_check("existence lo", at(&w.existence, 0), 0.03, 0.01),
        fmt_check("existence hi", at(&w.existence, 1), 4.75, 0.05),
    ]))
}

fn criterion_5(t: &[Traced]) -> (bool, String) {
    all(vec![
        fmt_check("σ=0.1 SSB", get(t, "sigma01-antisym", "pitchfork_1_mu"), 0.1686, 0.002),
        fmt_check("σ=0.1 merge", get(t, "sigma01-antisym", "merge_mu"), 0.381, 0.005),
        fmt_check("σ=0.1 symmetric pitchfork", get(t, "sigma01-sym", "pitchfork_1_mu"), 0.359, 0.005),
        fmt_check("σ=1 SSB", get(t, "sigma1-antisym", "pitchfork_1_mu"), 0.168, 0.002),
        fmt_check("σ=1 merge", get(t, "sigma1-antisym", "merge_mu"), 0.374, 0.005),
        fmt_check("σ=1 symmetric pitchfork", get(t, "sigma1-sym", "pitchfork_1_mu"), 0.355, 0.005),
        fmt_check("σ=8 SSB", get(t, "sigma8-antisym", "pitchfork_1_mu"), 0.195, 0.003),
        (
            get(t, "sigma8-antisym", "merge_found") == 1.0,
            format!("σ=8 merge found = {}", get(t, "sigma8-antisym", "merge_found") == 1.0),
        ),
        {
            let count = get(t, "sigma8-sym", "pitchfork_count");
            let at = get(t, "sigma8-sym", "pitchfork_1_mu");
            (
                count == 0.0,
                format!("σ=8 symmetric pitchforks = {count} (expected none; first at μ = {at:.5})"),
            )
        },
    ])
}

fn criterion_6(t: &[Traced]) -> (bool, String) {
    all(vec![
        fmt_check("symmetric SSB", get(t, "sigma1-focusing", "pitchfork_1_mu"), 0.1212, 0.002),
        fmt_check("restoring", get(t, "sigma1-focusing", "pitchfork_2_mu"), -0.0727, 0.003),
        fmt_check("antisymmetric event", get(t, "sigma1-focusing-antisym", "pitchfork_1_mu"), -0.0465, 0.003),
    ])
}

fn criterion_7(t: &[Traced]) -> Check {
    let m8 = Model::new(config_of("sigma8-antisym"))?;
    let cn8 = critical_norms(&reduction(&m8)?.at_norm(1.0));
    let coalesced = cn8.n2.is_none() && cn8.n3.is_none();
    Ok(all(vec![
        fmt_check("σ=0.1 breaking", get(t, "sigma01-antisym", "twomode_breaking_mu"), 0.1679, 1e-3),
        fmt_check("σ=0.1 restoring", get(t, "sigma01-antisym", "twomode_restoring_mu"), 0.3723, 1e-3),
        fmt_check("σ=0.1 symmetric", get(t, "sigma01-sym", "twomode_pitchfork_mu"), 0.3492, 1e-3),
        fmt_check("σ=1 breaking", get(t, "sigma1-antisym", "twomode_breaking_mu"), 0.1673, 1e-3),
        fmt_check("σ=1 restoring", get(t, "sigma1-antisym", "twomode_restoring_mu"), 0.364, 1e-3),
        fmt_check("σ=1 symmetric", get(t, "sigma1-sym", "twomode_pitchfork_mu"), 0.342, 1e-3),
        fmt_check("σ=8 reference quartic", get(t, "sigma8-antisym", "reference_quartic_contact_mu"), 0.1981, 1e-3),
        (coalesced, format!("σ=8 N₂ᶜʳ/N₃ᶜʳ coalesced = {coalesced}")),
        fmt_check("(−1,1) breaking", get(t, "sigma1-focusing", "twomode_breaking_mu"), 0.1212, 1e-3),
        fmt_check("(−1,1) restoring", get(t, "sigma1-focusing", "twomode_restoring_mu"), -0.0755, 1e-3),
        fmt_check("(−1,1) antisymmetric", get(t, "sigma1-focusing-antisym", "twomode_pitchfork_mu"), -0.0526, 1e-3),
    ]))
}

fn criterion_8(d: &Dynamics) -> (bool, String) {
    let windows = [(0.19, 150.0, 300.0), (0.25, 70.0, 150.0)];
    let mut parts = Vec::new();
    for ((mu, _, onset, _), (_, lo, hi)) in d.runs.iter().zip(windows) {
        let t = onset.unwrap_or(f64::NAN);
        parts.push((t >= lo && t <= hi, format!("μ={mu} onset t = {t:.1} (window [{lo}, {hi}])")));
    }
    all(parts)
}

fn criterion_9(d: &Dynamics) -> Check {
    let drift = d
        .runs
        .iter()
        .map(|r| r.1.max_norm_drift)
        .fold(d.halved_drift, f64::max);
    let mut orbits = 0;
    let mut singular = 0;
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for (preset, norms) in [
        ("twomode-phase-portrait", [1.0, 3.0, 5.0]),
        ("twomode-sigma01", [0.5, 2.0, 4.7]),
        ("sigma1-focusing", [0.5, 2.0, 4.0]),
    ] {
        let m = Model::new(config_of(preset))?;
        let red = reduction(&m)?;
        for n in norms {
            let p = red.at_norm(n);
            for k in -4..=4 {
                for theta in [0.0, 0.5 * PI, PI] {
                    let seed = TwoModeState {
                        z: 0.2 * k as f64 + 0.01,
                        theta,
                    };
                    match integrate_orbit(seed, &p, 400.0, 0.1) {
                        Ok(o) => {
                            orbits += 1;
                            worst = worst.max(o.max_relative_drift);
                        }
                        Err(Error::OrbitSingularity { .. }) => singular += 1,
                        Err(e) => failed.push(e.to_string()),
                    }
                }
            }
        }
    }
    Ok(all(vec![
        (drift <= NORM_DRIFT_TOL, format!("max norm drift {drift:.2e} over {} runs", d.runs.len() + 5)),
        (
            worst <= 1e-8 && failed.is_empty(),
            format!(
                "max Hamiltonian drift {worst:.2e} over {orbits} orbits ({singular} reached |z| = 1, {} drift failures)",
                failed.len()
            ),
        ),
    ]))
}

fn criterion_10(s: &Spectra) -> (bool, String) {
    let mut states = 0;
    let mut quartet: f64 = 0.0;
    let mut zero: f64 = 0.0;
    for (_, sp) in &s.per_branch {
        for b in sp {
            states += 1;
            quartet = quartet.max(b.quartet_defect);
            zero = zero.max(b.min_abs);
        }
    }
    all(vec![
        (quartet <= 1e-6, format!("max quartet defect {quartet:.2e}")),
        (zero <= 1e-6, format!("max min|λ| {zero:.2e} over {states} states")),
    ])
}

fn kernel_value(k: &Kernel, x: f64) -> f64 {
    let s = k.range;
    match k.family {
        KernelFamily::Gaussian => (-(x * x) / (s * s)).exp() / (s * PI.sqrt()),
        KernelFamily::Exponential => (-x.abs() / s).exp() / (2.0 * s),
        KernelFamily::Delta => unreachable!(),
    }
}

fn brute_matrix(grid: &Grid, k: &Kernel) -> Vec<Vec<f64>> {
    let dx = grid.spacing();
    let mass = dx * (-20000..=20000).map(|j| kernel_value(k, j as f64 * dx)).sum::<f64>();
    let n = grid.n_points();
    let x = grid.points();
    let w: Vec<f64> = (0..n).map(|j| if j == 0 || j == n - 1 { 0.5 * dx } else { dx }).collect();
    (0..n)
        .map(|i| (0..n).map(|j| kernel_value(k, x[i] - x[j]) / mass * w[j]).collect())
        .collect()
}

fn criterion_11() -> Check {
    let m = Model::new(RunConfig::default())?;
    let grid = &m.grid;
    let n = grid.n_points();
    let dx = grid.spacing();
    let w: Vec<f64> = (0..n).map(|j| if j == 0 || j == n - 1 { 0.5 * dx } else { dx }).collect();
    let (l, r) = (&m.basis.phi_l, &m.basis.phi_r);
    let kernels = [
        Kernel::gaussian(0.1)?,
        Kernel::gaussian(1.0)?,
        Kernel::gaussian(8.0)?,
        Kernel::exponential(1.0)?,
        Kernel::exponential(5.0)?,
    ];
    let probe: Vec<f64> = grid.points().iter().map(|x| (-(x - 1.5) * (x - 1.5) / 3.0).exp() * (1.0 + 0.3 * x.sin())).collect();
    let mut conv_err: f64 = 0.0;
    let mut eta_err: f64 = 0.0;
    for k in &kernels {
        let mat = brute_matrix(grid, k);
        let fast = convolve(grid, k, &probe)?;
        for i in 0..n {
            let slow: f64 = (0..n).map(|j| mat[i][j] * probe[j]).sum();
            conv_err = conv_err.max((fast[i] - slow).abs());
        }
        let eta = overlap_integrals(grid, &m.basis, k, k)?;
        let double = |g: &dyn Fn(usize) -> f64, f: &dyn Fn(usize) -> f64| -> f64 {
            (0..n).map(|i| w[i] * g(i) * (0..n).map(|j| mat[i][j] * f(j)).sum::<f64>()).sum()
        };
        let (l, r) = (l.as_slice(), r.as_slice());
        let ll = |i: usize| l[i] * l[i];
        let rr = |i: usize| r[i] * r[i];
        let lr = |i: usize| l[i] * r[i];
        let l4 = |i: usize| l[i].powi(4);
        let l2r2 = |i: usize| l[i] * l[i] * r[i] * r[i];
        let l3r = |i: usize| l[i].powi(3) * r[i];
        let brute = [
            double(&ll, &ll),
            double(&rr, &ll),
            double(&lr, &ll),
            double(&lr, &lr),
            double(&ll, &l4),
            double(&rr, &l4),
            double(&lr, &l4),
            double(&ll, &l2r2),
            double(&lr, &l2r2),
            double(&ll, &l3r),
            double(&rr, &l3r),
            double(&lr, &l3r),
        ];
        for (a, b) in eta.iter().zip(&brute) {
            eta_err = eta_err.max((a - b).abs());
        }
    }
    let mut poisson_err: f64 = 0.0;
    for d in [0.5, 1.0, 4.0] {
        let src: Vec<f64> = grid.points().iter().map(|x| 0.6 * (-(x - 0.7).powi(2) / 2.0).exp()).collect();
        let a = screened_poisson(grid, &src, d)?;
        let b = convolve(grid, &thermal_kernel(d)?, &src)?;
        for (x, y) in a.iter().zip(&b) {
            poisson_err = poisson_err.max((x - y).abs());
        }
    }
    Ok(all(vec![
        (conv_err <= 1e-8, format!("convolution vs direct sum {conv_err:.2e}")),
        (eta_err <= 1e-8, format!("η vs double sum {eta_err:.2e}")),
        (poisson_err <= 1e-6, format!("screened Poisson vs kernel {poisson_err:.2e}")),
    ]))
}

fn real_unstable(sp: &BdgSpectrum) -> usize {
    sp.eigenvalues
        .iter()
        .filter(|l| l.re > INSTABILITY_THRESHOLD && l.im.abs() < 1e-9)
        .count()
}

fn criterion_12(t: &[Traced], s: &Spectra) -> Check {
    let mut worst: f64 = 0.0;
    let mut matched = true;
    for preset in ["twomode-sigma01", "twomode-phase-portrait", "sigma1-focusing-antisym"] {
        let m = Model::new(config_of(preset))?;
        let w = windows(&reduction(&m)?.at_norm(1.0), 8.0);
        if w.lambda_zeros.len() != w.existence.len() {
            matched = false;
            continue;
        }
        for (a, b) in w.lambda_zeros.iter().zip(&w.existence) {
            worst = worst.max((a - b).abs());
        }
    }
    let mut changes = 0;
    let mut misplaced = Vec::new();
    let mut fold_changes = 0;
    let mut folds = 0;
    let branches = t.iter().flat_map(|x| std::iter::once(&x.parent).chain(x.daughter.iter()));
    for (b, (label, sp)) in branches.zip(&s.per_branch) {
        let bifurcations: Vec<usize> = b
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Pitchfork | EventKind::Merge))
            .map(|e| e.after_index)
            .collect();
        for e in b.events_of(EventKind::Fold) {
            folds += 1;
            let i = e.after_index;
            let shared = bifurcations.contains(&i);
            if !shared && i + 1 < sp.len() && sp[i].unstable_count != sp[i + 1].unstable_count {
                fold_changes += 1;
                misplaced.push(format!(
                    "{label} at the fold μ = {:.4}: {} → {} unstable",
                    e.mu,
                    sp[i].unstable_count,
                    sp[i + 1].unstable_count
                ));
            }
        }
        for i in 0..sp.len().saturating_sub(1) {
            if sp[i].unstable_count != sp[i + 1].unstable_count {
                changes += 1;
                if !bifurcations.iter().any(|&k| k.abs_diff(i) <= 1) {
                    let kind = if real_unstable(&sp[i]) != real_unstable(&sp[i + 1]) { "real" } else { "oscillatory" };
                    misplaced.push(format!(
                        "{label} {kind} at μ = {:.4}..{:.4}, N = {:.3}",
                        b.states[i].mu,
                        b.states[i + 1].mu,
                        b.states[i + 1].norm
                    ));
                }
            }
        }
    }
    Ok(all(vec![
        (
            matched && worst <= 1e-8,
            format!("λ² zeros vs existence endpoints {worst:.2e} (counts match: {matched})"),
        ),
        (
            misplaced.is_empty() && fold_changes == 0,
            format!(
                "{changes} stability changes, {} away from pitchforks, {fold_changes} at {folds} folds not shared with a pitchfork{}",
                misplaced.len(),
                if misplaced.is_empty() { String::new() } else { format!(" ({})", misplaced.join(", ")) }
            ),
        ),
    ]))
}

fn criterion_13(d: &Dynamics) -> (bool, String) {
    let mut parts = Vec::new();
    for (mu, run, _, lambda) in &d.runs {
        match growth_rate_fit(run, true, 3e-3, 5e-2) {
            Some(fit) => {
                let rel = (fit.rate - lambda).abs() / lambda;
                parts.push((
                    rel <= 0.1,
                    format!("μ={mu} fitted {:.5} vs Re λ {lambda:.5} ({:.2}%)", fit.rate, 100.0 * rel),
                ));
            }
            None => parts.push((false, format!("μ={mu} no linear window"))),
        }
    }
    all(parts)
}

fn report(id: usize, started: Instant, result: Check, failures: &mut Vec<usize>) {
    let (ok, text) = match result {
        Ok(r) => r,
        Err(Failure(e)) => (false, format!("error: {e}")),
    };
    if !ok {
        failures.push(id);
    }
    println!(
        "criterion {id:>2}: {} [{:.1}s] {text}",
        if ok { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
}

fn main() -> ExitCode {
    let mut failures = Vec::new();
    for (id, f) in [
        (1, criterion_1 as fn() -> Check),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
    ] {
        report(id, Instant::now(), f(), &mut failures);
    }

    let started = Instant::now();
    let traced = trace_all().map_err(|e| e.to_string());
    let spectra = match &traced {
        Ok(t) => spectra_of(t).map_err(|e| e.to_string()),
        Err(e) => Err(e.clone()),
    };
    let with_traced = |f: &dyn Fn(&[Traced]) -> Check| -> Check {
        match &traced {
            Ok(t) => f(t),
            Err(e) => Err(Failure(e.clone())),
        }
    };
    report(5, started, with_traced(&|t| Ok(criterion_5(t))), &mut failures);
    report(6, Instant::now(), with_traced(&|t| Ok(criterion_6(t))), &mut failures);
    report(7, Instant::now(), with_traced(&criterion_7), &mut failures);

    let started = Instant::now();
    let dyn_runs = dynamics().map_err(|e| e.to_string());
    let with_dyn = |f: &dyn Fn(&Dynamics) -> Check| -> Check {
        match &dyn_runs {
            Ok(d) => f(d),
            Err(e) => Err(Failure(e.clone())),
        }
    };
    report(8, started, with_dyn(&|d| Ok(criterion_8(d))), &mut failures);
    report(9, Instant::now(), with_dyn(&criterion_9), &mut failures);
    report(
        10,
        Instant::now(),
        match &spectra {
            Ok(s) => Ok(criterion_10(s)),
            Err(e) => Err(Failure(e.clone())),
        },
        &mut failures,
    );
    report(11, Instant::now(), criterion_11(), &mut failures);
    report(
        12,
        Instant::now(),
        match (&traced, &spectra) {
            (Ok(t), Ok(s)) => criterion_12(t, s),
            (Err(e), _) | (_, Err(e)) => Err(Failure(e.clone())),
        },
        &mut failures,
    );
    report(13, Instant::now(), with_dyn(&|d| Ok(criterion_13(d))), &mut failures);

    if let Ok(d) = &dyn_runs {
        let base = d.runs.get(1).and_then(|r| r.2);
        if let (Some(a), Some(b)) = (base, d.halved_onset) {
            println!("info: μ=0.25 onset {a:.1} at dt, {b:.1} at dt/2 ({:.2}% change)", 100.0 * (a - b).abs() / a);
        }
        for (mu, seed, onset) in &d.random_onsets {
            println!("info: μ={mu} random perturbation seed {seed}: onset {onset:?}");
        }
    }

    if failures.is_empty() {
        println!("acceptance: all 13 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 13 criteria fail: {failures:?}", failures.len());
        ExitCode::FAILURE
    }
}
