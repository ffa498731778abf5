use std::fs;
use std::path::Path;
use std::process::ExitCode;

use rayon::prelude::*;
use serde_json::json;

use dwell::continuation::{continue_branch, seed_from_linear, state_at_mu, Branch, Model, StationaryState};
use dwell::dynamics::{
    asymmetry_onset, evolve as run_evolve, mode_perturbation, random_perturbation, solve_screened_poisson,
    thermal_kernel, EvolveOptions, ONSET_THRESHOLD, PERTURBATION_AMPLITUDE,
};
use dwell::grid::convolve;
use dwell::overlaps::{compute_overlaps_with, eta_rel, EtaRelTarget, RegimeThresholds};
use dwell::presets::{self, compare, measure, presets as all_presets, trace_scenario, Perturbation, Pipeline, Status};
use dwell::stability::{solve_bdg, stability_record, unstable_mode, StabilityRecord, INSTABILITY_THRESHOLD};
use dwell::twomode::{critical_norms, fixed_points, integrate_orbit, predicted_events, FixedPointType, Reduction, TwoModeState};
use dwell::{Kernel, KernelFamily, Symmetry};
use num_complex::Complex64;

use crate::output::{load_config, Cell, CliError, CliResult, RunDir};
use crate::{Common, ParentArg, PerturbationArg};

fn sweep(lo: f64, hi: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0 && hi >= lo && lo > 0.0) {
        return Err(CliError::usage(format!(
            "sweep needs 0 < min ≤ max and step > 0 (got {lo}, {hi}, {step})"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

fn symmetry_label(s: Symmetry) -> &'static str {
    match s {
        Symmetry::Symmetric => "symmetric",
        Symmetry::Antisymmetric => "antisymmetric",
        Symmetry::Asymmetric => "asymmetric",
    }
}

pub fn spectrum(common: &Common) -> CliResult<ExitCode> {
    let (config, _) = load_config(common)?;
    let model = Model::new(config.clone())?;
    let b = &model.basis;
    let mut dir = RunDir::create(&common.out)?;
    dir.json(
        "spectrum.json",
        &json!({
            "omega0": b.omega0,
            "omega1": b.omega1,
            "big_omega": b.big_omega,
            "omega": b.omega,
        }),
    )?;
    let rows: Vec<Vec<Cell>> = model
        .grid
        .points()
        .iter()
        .enumerate()
        .map(|(i, &x)| vec![x.into(), b.u0[i].into(), b.u1[i].into(), b.phi_l[i].into(), b.phi_r[i].into()])
        .collect();
    dir.csv("modes.csv", &["x", "u0", "u1", "phi_l", "phi_r"], &rows)?;
    dir.finish("spectrum", &config, common)?;
    Ok(ExitCode::SUCCESS)
}

pub fn overlaps(common: &Common, lo: f64, hi: f64, step: f64) -> CliResult<ExitCode> {
    let (config, preset) = load_config(common)?;
    let family = match preset.map(|p| p.pipeline) {
        Some(Pipeline::Thresholds { family }) => family,
        _ => config.kernel.family,
    };
    if family == KernelFamily::Delta {
        return Err(CliError::usage("the range sweep needs a Gaussian or exponential kernel"));
    }
    let model = Model::new(config.clone())?;
    let thresholds = RegimeThresholds::compute(&model.grid, &model.basis, family)?;
    let sigmas = sweep(lo, hi, step)?;
    let rows: Vec<Vec<Cell>> = sigmas
        .par_iter()
        .map(|&sigma| -> CliResult<Vec<Cell>> {
            let k = Kernel::new(family, sigma)?;
            let set = compute_overlaps_with(&model.grid, &model.basis, &k, &k, Some(&thresholds))?;
            let mut row: Vec<Cell> = vec![sigma.into()];
            row.extend(set.eta.iter().map(|&e| Cell::from(e)));
            row.push(eta_rel(&set, EtaRelTarget::Eta1).into());
            row.push(eta_rel(&set, EtaRelTarget::Eta4).into());
            row.push(set.regime.to_string().into());
            Ok(row)
        })
        .collect::<CliResult<_>>()?;
    let mut dir = RunDir::create(&common.out)?;
    let mut header = vec!["sigma".to_string()];
    header.extend((0..12).map(|k| format!("eta{k}")));
    header.extend(["eta_rel_1".into(), "eta_rel_4".into(), "regime".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    dir.csv("overlaps.csv", &header, &rows)?;
    dir.json("thresholds.json", &thresholds)?;
    dir.finish("overlaps", &config, common)?;
    Ok(ExitCode::SUCCESS)
}

pub struct TwomodeArgs {
    pub n_max: f64,
    pub n_step: f64,
    pub probe_norm: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_step: f64,
    pub t_end: f64,
}

pub fn twomode(common: &Common, args: &TwomodeArgs) -> CliResult<ExitCode> {
    let (config, preset) = load_config(common)?;
    let probe = match preset.map(|p| p.pipeline) {
        Some(Pipeline::CriticalNorms { probe_norm }) => probe_norm,
        _ => args.probe_norm,
    };
    let model = Model::new(config.clone())?;
    let red = presets::reduction(&model)?;
    let mut dir = RunDir::create(&common.out)?;

    let mut fp_rows = Vec::new();
    for n in sweep(args.n_step, args.n_max, args.n_step)? {
        for fp in fixed_points(&red.at_norm(n))? {
            fp_rows.push(vec![
                n.into(),
                symmetry_label(fp.family).into(),
                fp.state.z.into(),
                fp.state.theta.into(),
                fp.lambda_sq.into(),
                match fp.stability {
                    FixedPointType::Center => "center",
                    FixedPointType::Saddle => "saddle",
                }
                .into(),
            ]);
        }
    }
    dir.csv("fixed_points.csv", &["n", "family", "z", "theta", "lambda_sq", "type"], &fp_rows)?;

    let family = config.kernel.family;
    if family != KernelFamily::Delta {
        let thresholds = RegimeThresholds::compute(&model.grid, &model.basis, family)?;
        let sigmas = sweep(args.sigma_min, args.sigma_max, args.sigma_step)?;
        let rows: Vec<Vec<Cell>> = sigmas
            .par_iter()
            .map(|&sigma| -> CliResult<Vec<Cell>> {
                let k = Kernel::new(family, sigma)?;
                let set = compute_overlaps_with(&model.grid, &model.basis, &k, &k, Some(&thresholds))?;
                let r = Reduction::new(&model.basis, &set, config.s, config.delta)?;
                let cn = critical_norms(&r.at_norm(1.0));
                Ok(vec![sigma.into(), cn.n0.into(), cn.n1.into(), cn.n2.into(), cn.n3.into(), set.regime.to_string().into()])
            })
            .collect::<CliResult<_>>()?;
        dir.csv("critical_norms.csv", &["sigma", "n0", "n1", "n2", "n3", "regime"], &rows)?;
    }

    let p = red.at_norm(probe);
    dir.json(
        "events.json",
        &json!({
            "reduction": red,
            "critical_norms": critical_norms(&p),
            "events": predicted_events(&red),
            "probe_fixed_points": fixed_points(&p)?,
        }),
    )?;

    let mut seeds = Vec::new();
    for k in -4..=4 {
        for theta in [0.0, 0.5 * std::f64::consts::PI, std::f64::consts::PI] {
            seeds.push(TwoModeState {
                z: 0.2 * k as f64 + 0.01,
                theta,
            });
        }
    }
    let orbits: Vec<_> = seeds.par_iter().map(|&s| (s, integrate_orbit(s, &p, args.t_end, 0.1))).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, (seed, orbit)) in orbits.into_iter().enumerate() {
        match orbit {
            Ok(o) => {
                for i in 0..o.t.len() {
                    rows.push(vec![k.into(), o.t[i].into(), o.z[i].into(), o.theta[i].into(), o.p[i].into(), o.energy[i].into()]);
                }
            }
            Err(e) => failures.push(json!({"orbit": k, "z0": seed.z, "theta0": seed.theta, "error": e.to_string()})),
        }
    }
    dir.csv("portrait.csv", &["orbit", "t", "z", "theta", "p", "energy"], &rows)?;
    dir.json("portrait_failures.json", &failures)?;
    dir.finish("twomode", &config, common)?;
    Ok(ExitCode::SUCCESS)
}

fn stability_rows(model: &Model, states: &[StationaryState], stride: usize) -> CliResult<Vec<Option<StabilityRecord>>> {
    states
        .par_iter()
        .enumerate()
        .map(|(i, st)| {
            if stride == 0 || i % stride != 0 {
                Ok(None)
            } else {
                Ok(Some(stability_record(model, st)?))
            }
        })
        .collect()
}

fn branch_csv(dir: &mut RunDir, name: &str, branch: &Branch, records: &[Option<StabilityRecord>]) -> CliResult<()> {
    let rows: Vec<Vec<Cell>> = branch
        .states
        .iter()
        .zip(records)
        .enumerate()
        .map(|(i, (st, r))| {
            vec![
                i.into(),
                st.mu.into(),
                st.norm.into(),
                symmetry_label(st.symmetry).into(),
                st.imbalance.into(),
                r.map_or(Cell::Empty, |r| r.unstable_count.into()),
                r.map(|r| r.max_real_part).into(),
            ]
        })
        .collect();
    dir.csv(
        name,
        &["index", "mu", "n", "symmetry", "imbalance", "n_unstable", "max_real_part"],
        &rows,
    )
}

pub fn continuation(common: &Common, parent: ParentArg, daughters: bool, stride: usize, profiles: bool) -> CliResult<ExitCode> {
    let (config, preset) = load_config(common)?;
    let (parents, daughters) = match preset.map(|p| p.pipeline) {
        Some(Pipeline::Branch { parent, follow_daughter }) => (vec![parent], follow_daughter || daughters),
        _ => match parent {
            ParentArg::Symmetric => (vec![Symmetry::Symmetric], daughters),
            ParentArg::Antisymmetric => (vec![Symmetry::Antisymmetric], daughters),
            ParentArg::Both => (vec![Symmetry::Symmetric, Symmetry::Antisymmetric], daughters),
        },
    };
    let model = Model::new(config.clone())?;
    let traced: Vec<(Symmetry, Branch, Option<Branch>)> = parents
        .par_iter()
        .map(|&p| -> CliResult<_> {
            let (b, d) = trace_scenario(&model, p, daughters)?;
            Ok((p, b, d))
        })
        .collect::<CliResult<_>>()?;
    let mut dir = RunDir::create(&common.out)?;
    let mut events = serde_json::Map::new();
    for (p, branch, daughter) in &traced {
        let label = symmetry_label(*p);
        let mut pairs = vec![(label.to_string(), branch)];
        if let Some(d) = daughter {
            pairs.push((format!("{label}_daughter"), d));
        }
        for (name, b) in pairs {
            let records = stability_rows(&model, &b.states, stride)?;
            branch_csv(&mut dir, &format!("branch_{name}.csv"), b, &records)?;
            events.insert(
                name.clone(),
                json!({
                    "events": b.events,
                    "termination": b.termination,
                    "states": b.states.len(),
                }),
            );
            if profiles {
                dir.json(&format!("states_{name}.json"), &b.states)?;
            }
        }
    }
    dir.json("events.json", &events)?;
    dir.finish("continue", &config, common)?;
    Ok(ExitCode::SUCCESS)
}

pub fn stability(common: &Common, path: &Path, spectra: bool) -> CliResult<ExitCode> {
    let (config, _) = load_config(common)?;
    let model = Model::new(config.clone())?;
    let text = fs::read_to_string(path).map_err(|e| CliError::from(e).at(path))?;
    let states: Vec<StationaryState> = match serde_json::from_str::<Vec<StationaryState>>(&text) {
        Ok(v) => v,
        Err(_) => vec![serde_json::from_str::<StationaryState>(&text).map_err(|e| CliError::from(e).at(path))?],
    };
    for st in &states {
        model.grid.check_len(st.psi.len()).map_err(|e| CliError::from(e).at(path))?;
    }
    let solved: Vec<_> = states
        .par_iter()
        .map(|st| solve_bdg(&model, st, INSTABILITY_THRESHOLD))
        .collect::<Result<_, _>>()?;
    let rows: Vec<Vec<Cell>> = states
        .iter()
        .zip(&solved)
        .map(|(st, sp)| {
            vec![
                st.mu.into(),
                st.norm.into(),
                symmetry_label(st.symmetry).into(),
                sp.max_real_part.into(),
                sp.unstable_count.into(),
                sp.min_abs.into(),
                sp.quartet_defect.into(),
            ]
        })
        .collect();
    let mut dir = RunDir::create(&common.out)?;
    dir.csv(
        "stability.csv",
        &["mu", "n", "symmetry", "max_real_part", "unstable_count", "min_abs", "quartet_defect"],
        &rows,
    )?;
    if spectra {
        dir.json("spectra.json", &solved)?;
    }
    dir.finish("stability", &config, common)?;
    Ok(ExitCode::SUCCESS)
}

pub fn evolve(
    common: &Common,
    mu: Option<f64>,
    parent: Option<ParentArg>,
    perturbation: Option<PerturbationArg>,
    t_end: Option<f64>,
    dt: Option<f64>,
) -> CliResult<ExitCode> {
    let (config, preset) = load_config(common)?;
    let (mut opts, mut mu_p, mut parent_p, mut pert_p) = (EvolveOptions::default(), None, Symmetry::Antisymmetric, PerturbationArg::Random);
    if let Some(Pipeline::Evolve {
        parent,
        mu,
        perturbation,
        options,
    }) = preset.map(|p| p.pipeline)
    {
        opts = options;
        mu_p = Some(mu);
        parent_p = parent;
        pert_p = match perturbation {
            Perturbation::Random => PerturbationArg::Random,
            Perturbation::Eigenvector => PerturbationArg::Eigenvector,
        };
    }
    let mu = mu.or(mu_p).ok_or_else(|| CliError::usage("`evolve` needs --mu or an evolution preset"))?;
    let parent = match parent {
        Some(ParentArg::Symmetric) => Symmetry::Symmetric,
        Some(ParentArg::Antisymmetric) => Symmetry::Antisymmetric,
        Some(ParentArg::Both) => return Err(CliError::usage("`evolve` needs a single parent branch")),
        None => parent_p,
    };
    let perturbation = perturbation.unwrap_or(pert_p);
    if let Some(t) = t_end {
        opts.t_end = t;
    }
    if let Some(d) = dt {
        opts.dt = d;
    }

    let model = Model::new(config.clone())?;
    let seed_state = seed_from_linear(&model, parent)?;
    let branch = continue_branch(&model, &seed_state)?;
    let state = state_at_mu(&model, &branch, mu)?;
    let spectrum = solve_bdg(&model, &state, INSTABILITY_THRESHOLD)?;
    let initial: Vec<Complex64> = match perturbation {
        PerturbationArg::None => state.psi.iter().map(|&p| Complex64::new(p, 0.0)).collect(),
        PerturbationArg::Random => random_perturbation(&model, &state.psi, PERTURBATION_AMPLITUDE, common.seed)?,
        PerturbationArg::Eigenvector => match unstable_mode(&model, &state)? {
            Some((_, mode)) => mode_perturbation(&model.grid, &state.psi, &mode, PERTURBATION_AMPLITUDE),
            None => return Err(CliError::usage(format!("the state at μ = {mu} has no unstable eigenvector"))),
        },
    };
    let run = run_evolve(&model, &initial, mu, &opts)?;

    let mut dir = RunDir::create(&common.out)?;
    let mut header = vec!["t".to_string()];
    header.extend(model.grid.points().iter().map(|x| format!("{x:.4}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<Cell>> = run
        .snapshots
        .iter()
        .zip(&run.snapshot_times)
        .map(|(s, &t)| {
            let mut row: Vec<Cell> = vec![t.into()];
            row.extend(s.re.iter().zip(&s.im).map(|(a, b)| Cell::from(a * a + b * b)));
            row
        })
        .collect();
    dir.csv("density.csv", &header, &rows)?;
    let rows: Vec<Vec<Cell>> = (0..run.times.len())
        .map(|k| {
            let p = &run.projection[k];
            vec![
                run.times[k].into(),
                p.z.into(),
                p.theta.into(),
                p.residual_fraction.into(),
                run.imbalance[k].into(),
                run.norm_series[k].into(),
                run.even_amplitude[k].into(),
                run.odd_amplitude[k].into(),
            ]
        })
        .collect();
    dir.csv(
        "phase_plane.csv",
        &["t", "z", "theta", "residual_fraction", "imbalance", "norm", "even_amplitude", "odd_amplitude"],
        &rows,
    )?;
    dir.json(
        "summary.json",
        &json!({
            "mu": mu,
            "parent": parent,
            "perturbation": format!("{perturbation:?}").to_lowercase(),
            "state_norm": state.norm,
            "onset_threshold": ONSET_THRESHOLD,
            "onset_time": asymmetry_onset(&run, ONSET_THRESHOLD),
            "max_norm_drift": run.max_norm_drift,
            "max_real_part": spectrum.max_real_part,
            "unstable_count": spectrum.unstable_count,
            "options": opts,
        }),
    )?;
    dir.finish("evolve", &config, common)?;
    Ok(ExitCode::SUCCESS)
}

pub fn thermal(common: &Common, d: f64, sigma0: f64, amplitude: f64, width: f64) -> CliResult<ExitCode> {
    let (config, _) = load_config(common)?;
    let grid = dwell::Grid::new(config.grid.half_width, config.grid.spacing)?;
    let u: Vec<Complex64> = grid
        .points()
        .iter()
        .map(|x| Complex64::new(amplitude * (-(x * x) / (width * width)).exp(), 0.0))
        .collect();
    let m = solve_screened_poisson(&grid, &u, d, sigma0)?;
    let source: Vec<f64> = u.iter().map(|v| sigma0 * (v.norm_sqr() - v.norm_sqr().powi(2))).collect();
    let kernel = thermal_kernel(d)?;
    let c = convolve(&grid, &kernel, &source)?;
    let diff = m.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rows: Vec<Vec<Cell>> = (0..grid.n_points())
        .map(|i| vec![grid.points()[i].into(), u[i].norm_sqr().into(), m[i].into(), c[i].into()])
        .collect();
    let mut dir = RunDir::create(&common.out)?;
    dir.csv("thermal.csv", &["x", "intensity", "m_screened_poisson", "m_convolution"], &rows)?;
    dir.json(
        "summary.json",
        &json!({"d": d, "sigma0": sigma0, "kernel": kernel, "max_abs_difference": diff}),
    )?;
    dir.finish("thermal", &config, common)?;
    Ok(ExitCode::SUCCESS)
}

pub fn regress(common: &Common, list: bool) -> CliResult<ExitCode> {
    if common.config.is_some() {
        return Err(CliError::usage("`regress` runs presets; use --preset instead of --config"));
    }
    let selected: Vec<_> = match &common.preset {
        Some(name) => vec![presets::find_preset(name).ok_or_else(|| CliError {
            error: "unknown_preset".into(),
            message: format!("no preset named `{name}`"),
            path: None,
            violations: Vec::new(),
        })?],
        None => all_presets(),
    };
    if list {
        for p in &selected {
            println!("{:<26} {}", p.name, p.description);
        }
        return Ok(ExitCode::SUCCESS);
    }
    let reports: Vec<_> = selected
        .par_iter()
        .map(|p| compare(p, &measure(p, common.seed).map_err(|e| e.to_string())))
        .collect();
    println!("{:<26} {:<34} {:>14} {:>14} {:>10}  STATUS", "PRESET", "QUANTITY", "EXPECTED", "MEASURED", "TOL");
    for r in &reports {
        for w in &r.warnings {
            println!("{:<26} warning: {w}", r.preset);
        }
        for row in &r.rows {
            let measured = row.measured.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
            println!(
                "{:<26} {:<34} {:>14.6} {:>14} {:>10.1e}  {}",
                r.preset, row.quantity, row.expected, measured, row.tolerance, row.status
            );
        }
    }
    let mut dir = RunDir::create(&common.out)?;
    dir.json("regress.json", &reports)?;
    let config = selected.first().map(|p| p.config.clone()).unwrap_or_default();
    dir.finish("regress", &config, common)?;
    let ok = reports.iter().all(|r| r.status == Status::Pass);
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
