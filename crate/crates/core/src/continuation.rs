//! Stationary states of the full nonlocal equation and their continuation in μ.
//!
//! Stationary profiles are real and solve
//! `F(ψ, μ) = 𝓛ψ − μψ + s (R₁∗ψ²) ψ + δ (R₂∗ψ⁴) ψ = 0`.
//! Symmetric and antisymmetric branches are traced in the corresponding
//! reflection subspace; asymmetric branches in the full space. Branches are
//! followed by pseudo-arclength continuation in `(ψ, μ)` with the metric
//! `‖δψ‖²_w + δμ²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Convolver, Grid, Kernel, KernelFamily, PotentialParams};
use crate::linalg::{max_abs, solve_dense, sym_eigen};
use crate::spectrum::{discretize_operator, LinearBasis, TridiagonalOperator};
use crate::Symmetry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub spacing: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            half_width: 20.0,
            spacing: 0.1,
        }
    }
}

/// Everything needed to build the model and trace its branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub potential: PotentialParams,
    /// Cubic kernel `R₁`.
    pub kernel: Kernel,
    /// Quintic kernel `R₂`; defaults to `kernel`.
    pub kernel2: Option<Kernel>,
    pub s: f64,
    pub delta: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub ds_init: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Branches stop once N exceeds this cap.
    pub n_max: f64,
    pub max_steps: usize,
    /// Norm of the seed state on each linear branch.
    pub seed_norm: f64,
    /// Bracket width (in μ) below which bifurcation points are considered located.
    pub refine_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            potential: PotentialParams::default(),
            kernel: Kernel {
                family: KernelFamily::Gaussian,
                range: 1.0,
            },
            kernel2: None,
            s: 1.0,
            delta: -1.0,
            mu_min: -0.3,
            mu_max: 0.6,
            ds_min: 1e-3,
            ds_max: 5e-2,
            ds_init: 1e-2,
            newton_tol: 1e-11,
            newton_max_iter: 30,
            n_max: 15.0,
            max_steps: 5000,
            seed_norm: 1e-3,
            refine_tol: 1e-5,
        }
    }
}

impl RunConfig {
    pub fn kernel2(&self) -> Kernel {
        self.kernel2.unwrap_or(self.kernel)
    }

    /// Every violated constraint, one message per field.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = Grid::new(self.grid.half_width, self.grid.spacing) {
            errs.push(format!("grid: {e}"));
        }
        errs.extend(self.potential.validate());
        errs.extend(self.kernel.validate().into_iter().map(|e| format!("kernel: {e}")));
        if let Some(k) = &self.kernel2 {
            errs.extend(k.validate().into_iter().map(|e| format!("kernel2: {e}")));
        }
        for (name, v) in [("s", self.s), ("delta", self.delta)] {
            if v != 1.0 && v != -1.0 {
                errs.push(format!("{name} must be ±1 (got {v})"));
            }
        }
        if !(self.mu_min < self.mu_max) {
            errs.push(format!("mu range is empty ({} ≥ {})", self.mu_min, self.mu_max));
        }
        if !(self.ds_min > 0.0 && self.ds_min <= self.ds_max) {
            errs.push(format!("ds bounds must satisfy 0 < ds_min ≤ ds_max (got {}, {})", self.ds_min, self.ds_max));
        }
        if !(self.ds_init >= self.ds_min && self.ds_init <= self.ds_max) {
            errs.push(format!("ds_init must lie in [ds_min, ds_max] (got {})", self.ds_init));
        }
        if !(self.newton_tol > 0.0) {
            errs.push(format!("newton_tol must be > 0 (got {})", self.newton_tol));
        }
        if self.newton_max_iter == 0 {
            errs.push("newton_max_iter must be ≥ 1".into());
        }
        if !(self.n_max > 0.0) {
            errs.push(format!("n_max must be > 0 (got {})", self.n_max));
        }
        if !(self.seed_norm > 0.0) {
            errs.push(format!("seed_norm must be > 0 (got {})", self.seed_norm));
        }
        if !(self.refine_tol > 0.0) {
            errs.push(format!("refine_tol must be > 0 (got {})", self.refine_tol));
        }
        errs
    }
}

/// Discretized model: linear operator, convolvers and dense kernel matrices.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: RunConfig,
    pub grid: Grid,
    pub op: TridiagonalOperator,
    pub conv1: Convolver,
    pub conv2: Convolver,
    /// `R₁(x_i − x_j) w_j`
    pub k1: DMatrix<f64>,
    /// `R₂(x_i − x_j) w_j`
    pub k2: DMatrix<f64>,
    pub basis: LinearBasis,
}

impl Model {
    pub fn new(config: RunConfig) -> Result<Self> {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let grid = Grid::new(config.grid.half_width, config.grid.spacing)?;
        let op = discretize_operator(&grid, &config.potential);
        let conv1 = Convolver::new(&grid, config.kernel);
        let conv2 = Convolver::new(&grid, config.kernel2());
        let k1 = conv1.matrix();
        let k2 = conv2.matrix();
        let basis = LinearBasis::compute(&grid, &config.potential)?;
        Ok(Self {
            config,
            grid,
            op,
            conv1,
            conv2,
            k1,
            k2,
            basis,
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n_points()
    }

    pub fn s(&self) -> f64 {
        self.config.s
    }

    pub fn delta(&self) -> f64 {
        self.config.delta
    }

    /// `s R₁∗|ψ|² + δ R₂∗|ψ|⁴` from the density `|ψ|²`.
    pub fn nonlinear_potential(&self, density: &[f64]) -> Vec<f64> {
        let d2: Vec<f64> = density.iter().map(|d| d * d).collect();
        let a = self.conv1.apply(density);
        let b = self.conv2.apply(&d2);
        a.iter()
            .zip(&b)
            .map(|(x, y)| self.s() * x + self.delta() * y)
            .collect()
    }

    pub fn norm(&self, psi: &[f64]) -> f64 {
        self.grid.norm_sq(psi)
    }

    /// Stationary residual `F(ψ, μ)`.
    pub fn residual(&self, psi: &[f64], mu: f64) -> Vec<f64> {
        let dens: Vec<f64> = psi.iter().map(|p| p * p).collect();
        let vnl = self.nonlinear_potential(&dens);
        let hpsi = self.op.apply(psi);
        (0..psi.len())
            .map(|i| hpsi[i] - mu * psi[i] + vnl[i] * psi[i])
            .collect()
    }

    /// `L₋ = 𝓛 − μ + s R₁∗ψ² + δ R₂∗ψ⁴`.
    pub fn l_minus(&self, psi: &[f64], mu: f64) -> DMatrix<f64> {
        let dens: Vec<f64> = psi.iter().map(|p| p * p).collect();
        let vnl = self.nonlinear_potential(&dens);
        let mut m = self.op.to_dense();
        for i in 0..psi.len() {
            m[(i, i)] += vnl[i] - mu;
        }
        m
    }

    /// `L₊ = L₋ + 2s ψ R₁[ψ ·] + 4δ ψ R₂[ψ³ ·]`, the Jacobian `∂F/∂ψ`.
    pub fn l_plus(&self, psi: &[f64], mu: f64) -> DMatrix<f64> {
        let mut m = self.l_minus(psi, mu);
        self.add_exchange(&mut m, psi, 2.0, 4.0);
        m
    }

    /// Adds `a·s ψ R₁[ψ ·] + b·δ ψ R₂[ψ³ ·]` to `m`.
    pub fn add_exchange(&self, m: &mut DMatrix<f64>, psi: &[f64], a: f64, b: f64) {
        let n = psi.len();
        let (s, d) = (self.s() * a, self.delta() * b);
        let psi3: Vec<f64> = psi.iter().map(|p| p * p * p).collect();
        let k1_is_id = self.conv1.is_identity();
        let k2_is_id = self.conv2.is_identity();
        for j in 0..n {
            for i in 0..n {
                let mut v = 0.0;
                if !k1_is_id {
                    v += s * psi[i] * self.k1[(i, j)] * psi[j];
                }
                if !k2_is_id {
                    v += d * psi[i] * self.k2[(i, j)] * psi3[j];
                }
                m[(i, j)] += v;
            }
            if k1_is_id {
                m[(j, j)] += s * psi[j] * psi[j];
            }
            if k2_is_id {
                m[(j, j)] += d * psi[j] * psi3[j];
            }
        }
    }

    pub fn classify(&self, psi: &[f64]) -> Symmetry {
        if self.grid.parity_defect(psi, 1.0) <= 1e-6 {
            Symmetry::Symmetric
        } else if self.grid.parity_defect(psi, -1.0) <= 1e-6 {
            Symmetry::Antisymmetric
        } else {
            Symmetry::Asymmetric
        }
    }

    /// Population imbalance `(N_L − N_R)/N` of a profile.
    pub fn imbalance(&self, psi: &[f64]) -> f64 {
        let c = self.grid.center();
        let w = self.grid.weights();
        let mut left = 0.0;
        let mut right = 0.0;
        for i in 0..psi.len() {
            let d = w[i] * psi[i] * psi[i];
            match i.cmp(&c) {
                std::cmp::Ordering::Less => left += d,
                std::cmp::Ordering::Greater => right += d,
                std::cmp::Ordering::Equal => {
                    left += 0.5 * d;
                    right += 0.5 * d;
                }
            }
        }
        (left - right) / (left + right)
    }

    pub fn make_state(&self, psi: Vec<f64>, mu: f64) -> StationaryState {
        let residual = max_abs(&self.residual(&psi, mu));
        StationaryState {
            norm: self.norm(&psi),
            symmetry: self.classify(&psi),
            imbalance: self.imbalance(&psi),
            psi,
            mu,
            residual,
        }
    }
}

/// Reflection-invariant coordinate subspace with an orthonormal basis `E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subspace {
    pub kind: SubspaceKind,
    n: usize,
    c: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceKind {
    Even,
    Odd,
    Full,
}

impl Subspace {
    pub fn new(grid: &Grid, kind: SubspaceKind) -> Self {
        Self {
            kind,
            n: grid.n_points(),
            c: grid.center(),
        }
    }

    pub fn for_symmetry(grid: &Grid, sym: Symmetry) -> Self {
        Self::new(
            grid,
            match sym {
                Symmetry::Symmetric => SubspaceKind::Even,
                Symmetry::Antisymmetric => SubspaceKind::Odd,
                Symmetry::Asymmetric => SubspaceKind::Full,
            },
        )
    }

    pub fn opposite(&self) -> Self {
        let kind = match self.kind {
            SubspaceKind::Even => SubspaceKind::Odd,
            SubspaceKind::Odd => SubspaceKind::Even,
            SubspaceKind::Full => SubspaceKind::Full,
        };
        Self { kind, ..*self }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SubspaceKind::Even => self.c + 1,
            SubspaceKind::Odd => self.c,
            SubspaceKind::Full => self.n,
        }
    }

    /// Nonzero entries `(row, value)` of basis column `k`.
    fn column(&self, k: usize) -> [(usize, f64); 2] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self.kind {
            SubspaceKind::Full => [(k, 1.0), (k, 0.0)],
            SubspaceKind::Even if k == 0 => [(self.c, 1.0), (self.c, 0.0)],
            SubspaceKind::Even => [(self.c + k, r), (self.c - k, r)],
            SubspaceKind::Odd => [(self.c + 1 + k, r), (self.c - 1 - k, -r)],
        }
    }

    pub fn expand(&self, y: &[f64]) -> Vec<f64> {
        if self.kind == SubspaceKind::Full {
            return y.to_vec();
        }
        let mut out = vec![0.0; self.n];
        for (k, &v) in y.iter().enumerate() {
            for (i, e) in self.column(k) {
                out[i] += e * v;
            }
        }
        out
    }

    /// `Eᵀ f`.
    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        if self.kind == SubspaceKind::Full {
            return f.to_vec();
        }
        (0..self.dim())
            .map(|k| self.column(k).iter().map(|&(i, e)| e * f[i]).sum())
            .collect()
    }

    /// `Eᵀ A E`.
    pub fn restrict_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        if self.kind == SubspaceKind::Full {
            return a.clone();
        }
        let m = self.dim();
        let cols: Vec<[(usize, f64); 2]> = (0..m).map(|k| self.column(k)).collect();
        DMatrix::from_fn(m, m, |k, l| {
            let mut v = 0.0;
            for &(i, ei) in &cols[k] {
                for &(j, ej) in &cols[l] {
                    v += ei * a[(i, j)] * ej;
                }
            }
            v
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryState {
    pub psi: Vec<f64>,
    pub mu: f64,
    pub norm: f64,
    pub symmetry: Symmetry,
    pub residual: f64,
    /// `(N_L − N_R)/N`
    pub imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Newton's method at fixed μ in `subspace`. Iterates until the max-norm
/// residual reaches `tol` and then stops as soon as it no longer decreases.
pub fn newton_in(model: &Model, guess: &[f64], mu: f64, sub: Subspace) -> Result<(StationaryState, NewtonReport)> {
    model.grid.check_len(guess.len())?;
    let tol = model.config.newton_tol;
    let mut y = sub.restrict(guess);
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for it in 0..=model.config.newton_max_iter {
        let psi = sub.expand(&y);
        let r = model.residual(&psi, mu);
        let res = max_abs(&r);
        history.push(res);
        if !res.is_finite() {
            break;
        }
        let improved = best.as_ref().is_none_or(|(b, _)| res < *b);
        if improved {
            best = Some((res, y.clone()));
        }
        if let Some((b, _)) = &best {
            if *b <= tol && (!improved || res <= 1e-3 * tol || it == model.config.newton_max_iter) {
                break;
            }
        }
        if it == model.config.newton_max_iter {
            break;
        }
        let j = sub.restrict_matrix(&model.l_plus(&psi, mu));
        let rhs = DVector::from_vec(sub.restrict(&r));
        let d = solve_dense(j, &rhs)?;
        for (a, b) in y.iter_mut().zip(d.iter()) {
            *a -= b;
        }
    }
    match best {
        Some((b, y)) if b <= tol => {
            let psi = sub.expand(&y);
            let st = model.make_state(psi, mu);
            if st.norm < 1e-8 {
                return Err(Error::TrivialSolution { norm: st.norm });
            }
            Ok((
                st,
                NewtonReport {
                    iterations: history.len() - 1,
                    history,
                },
            ))
        }
        _ => Err(Error::NewtonFailed { history }),
    }
}

/// Newton solve with the subspace inferred from the symmetry of the guess.
pub fn newton_solve(model: &Model, guess: &[f64], mu: f64) -> Result<StationaryState> {
    let sub = Subspace::for_symmetry(&model.grid, model.classify(guess));
    newton_in(model, guess, mu, sub).map(|r| r.0)
}

/// State on `branch` at chemical potential `mu`, taken from the first segment
/// that brackets `mu` and refined by Newton's method in the branch's subspace.
pub fn state_at_mu(model: &Model, branch: &Branch, mu: f64) -> Result<StationaryState> {
    let sub = Subspace::for_symmetry(&model.grid, branch.symmetry);
    for w in branch.states.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if (a.mu - mu) * (b.mu - mu) <= 0.0 && a.mu != b.mu {
            let f = (mu - a.mu) / (b.mu - a.mu);
            let guess: Vec<f64> = a.psi.iter().zip(&b.psi).map(|(x, y)| x + f * (y - x)).collect();
            return newton_in(model, &guess, mu, sub).map(|r| r.0);
        }
    }
    Err(Error::InvalidParameter {
        name: "mu",
        reason: format!("branch does not reach μ = {mu}"),
    })
}

/// Point in `(y, μ)` with `y` the subspace coordinates.
#[derive(Debug, Clone)]
struct Point {
    y: Vec<f64>,
    mu: f64,
}

impl Point {
    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.y.clone();
        v.push(self.mu);
        v
    }

    fn from_vec(mut v: Vec<f64>) -> Self {
        let mu = v.pop().unwrap();
        Self { y: v, mu }
    }
}

struct Tracer<'a> {
    model: &'a Model,
    sub: Subspace,
    metric: f64,
}

impl<'a> Tracer<'a> {
    fn new(model: &'a Model, sub: Subspace) -> Self {
        Self {
            model,
            sub,
            metric: model.grid.spacing(),
        }
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let m = a.len() - 1;
        self.metric * a[..m].iter().zip(&b[..m]).map(|(x, y)| x * y).sum::<f64>() + a[m] * b[m]
    }

    fn normalize(&self, mut t: Vec<f64>) -> Vec<f64> {
        let n = self.dot(&t, &t).sqrt();
        t.iter_mut().for_each(|v| *v /= n);
        t
    }

    /// Bordered Jacobian `[[Eᵀ L₊ E, −Eᵀψ], [c]]` with last row `c`.
    fn bordered(&self, p: &Point, last_row: &[f64]) -> DMatrix<f64> {
        let psi = self.sub.expand(&p.y);
        let j = self.sub.restrict_matrix(&self.model.l_plus(&psi, p.mu));
        let m = j.nrows();
        let mut a = DMatrix::zeros(m + 1, m + 1);
        a.view_mut((0, 0), (m, m)).copy_from(&j);
        for (i, v) in self.sub.restrict(&psi).iter().enumerate() {
            a[(i, m)] = -v;
        }
        for (k, v) in last_row.iter().enumerate() {
            a[(m, k)] = *v;
        }
        a
    }

    /// Newton on `F = 0` plus the linear constraint `c·(u − u₀) = rhs`.
    fn correct(&self, start: Point, c: &[f64], anchor: &[f64], rhs: f64) -> Option<(Point, usize)> {
        let tol = self.model.config.newton_tol;
        let mut u = start.to_vec();
        let mut best = f64::INFINITY;
        for it in 0..self.model.config.newton_max_iter {
            let p = Point::from_vec(u.clone());
            let psi = self.sub.expand(&p.y);
            let mut r = self.sub.restrict(&self.model.residual(&psi, p.mu));
            let cons = c.iter().zip(u.iter().zip(anchor)).map(|(ci, (ui, ai))| ci * (ui - ai)).sum::<f64>() - rhs;
            let res = max_abs(&r);
            if !res.is_finite() {
                return None;
            }
            if res <= tol && cons.abs() <= 1e-12 {
                if res >= 0.5 * best || res <= 1e-3 * tol {
                    return Some((p, it));
                }
            }
            best = best.min(res);
            r.push(cons);
            let a = self.bordered(&p, c);
            let d = solve_dense(a, &DVector::from_vec(r)).ok()?;
            for (x, dx) in u.iter_mut().zip(d.iter()) {
                *x -= dx;
            }
        }
        let p = Point::from_vec(u);
        let res = max_abs(&self.sub.restrict(&self.model.residual(&self.sub.expand(&p.y), p.mu)));
        (res <= tol).then_some((p, self.model.config.newton_max_iter))
    }

    fn tangent(&self, p: &Point, prev: &[f64]) -> Option<Vec<f64>> {
        let row: Vec<f64> = {
            let m = prev.len() - 1;
            let mut r: Vec<f64> = prev[..m].iter().map(|v| v * self.metric).collect();
            r.push(prev[m]);
            r
        };
        let a = self.bordered(p, &row);
        let mut rhs = DVector::zeros(prev.len());
        rhs[prev.len() - 1] = 1.0;
        let t = solve_dense(a, &rhs).ok()?;
        let t = self.normalize(t.iter().copied().collect());
        Some(if self.dot(&t, prev) < 0.0 {
            t.into_iter().map(|v| -v).collect()
        } else {
            t
        })
    }

    /// Corrects onto the hyperplane through `base` normal to `dir` (metric sense).
    fn correct_on_plane(&self, base: &[f64], dir: &[f64]) -> Option<Point> {
        let m = dir.len() - 1;
        let mut row: Vec<f64> = dir[..m].iter().map(|v| v * self.metric).collect();
        row.push(dir[m]);
        self.correct(Point::from_vec(base.to_vec()), &row, base, 0.0).map(|r| r.0)
    }

    fn state(&self, p: &Point) -> StationaryState {
        self.model.make_state(self.sub.expand(&p.y), p.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Pitchfork,
    Fold,
    Merge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEvent {
    pub kind: EventKind,
    pub mu: f64,
    pub n: f64,
    /// Index of the last branch state before the event.
    pub after_index: usize,
    /// Symmetry-breaking negative count of `L₊` before and after (pitchforks only).
    pub counts: Option<(usize, usize)>,
    /// Located state at the event.
    #[serde(skip)]
    pub state: Option<StationaryState>,
    /// Symmetry-breaking null vector at a pitchfork.
    #[serde(skip)]
    pub critical_vector: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub symmetry: Symmetry,
    pub states: Vec<StationaryState>,
    /// Number of negative eigenvalues of `L₊` on the opposite-parity subspace (parent branches only).
    pub breaking_counts: Vec<Option<usize>>,
    pub events: Vec<BranchEvent>,
    /// Why the trace stopped.
    pub termination: String,
}

impl Branch {
    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &BranchEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

/// Negative eigenvalue count of `Eᵀ L₊ E` and the eigenvector of the
/// eigenvalue closest to zero (expanded to the full grid).
pub fn inertia(model: &Model, psi: &[f64], mu: f64, sub: Subspace) -> (usize, f64, Vec<f64>) {
    let a = sub.restrict_matrix(&model.l_plus(psi, mu));
    let (vals, vecs) = sym_eigen(&a);
    let neg = vals.iter().filter(|&&v| v < 0.0).count();
    let k = (0..vals.len())
        .min_by(|&i, &j| vals[i].abs().total_cmp(&vals[j].abs()))
        .unwrap();
    let v: Vec<f64> = vecs.column(k).iter().copied().collect();
    (neg, vals[k], sub.expand(&v))
}

/// Seed state of norm `config.seed_norm` on the branch bifurcating from the
/// linear mode of the given parity.
pub fn seed_from_linear(model: &Model, symmetry: Symmetry) -> Result<StationaryState> {
    let (mode, omega_k) = match symmetry {
        Symmetry::Symmetric => (&model.basis.u0, model.basis.omega0),
        Symmetry::Antisymmetric => (&model.basis.u1, model.basis.omega1),
        Symmetry::Asymmetric => {
            return Err(Error::InvalidParameter {
                name: "symmetry",
                reason: "linear seeds are symmetric or antisymmetric".into(),
            })
        }
    };
    let sub = Subspace::for_symmetry(&model.grid, symmetry);
    solve_at_norm(model, sub, mode, omega_k, model.config.seed_norm)
}

/// Solves `F = 0` with the norm pinned to `target`, starting from a scaled `shape`.
pub fn solve_at_norm(model: &Model, sub: Subspace, shape: &[f64], mu_guess: f64, target: f64) -> Result<StationaryState> {
    let scale = (target / model.norm(shape)).sqrt();
    let mut y = sub.restrict(&shape.iter().map(|v| v * scale).collect::<Vec<_>>());
    let mut mu = mu_guess;
    let mut history = Vec::new();
    let w = model.grid.weights();
    for _ in 0..model.config.newton_max_iter {
        let psi = sub.expand(&y);
        let mut r = sub.restrict(&model.residual(&psi, mu));
        let cons = model.norm(&psi) - target;
        let res = max_abs(&r);
        history.push(res);
        if res <= model.config.newton_tol && cons.abs() <= 1e-12 * target.max(1.0) {
            return Ok(model.make_state(psi, mu));
        }
        let row: Vec<f64> = sub.restrict(&psi.iter().zip(w).map(|(p, wi)| 2.0 * p * wi).collect::<Vec<_>>());
        let mut row = row;
        row.push(0.0);
        let tr = Tracer::new(model, sub);
        let a = tr.bordered(&Point { y: y.clone(), mu }, &row);
        r.push(cons);
        let d = solve_dense(a, &DVector::from_vec(r))?;
        let m = y.len();
        for k in 0..m {
            y[k] -= d[k];
        }
        mu -= d[m];
    }
    Err(Error::NewtonFailed { history })
}

/// Pseudo-arclength continuation from `seed` in the direction of increasing norm.
pub fn continue_branch(model: &Model, seed: &StationaryState) -> Result<Branch> {
    let sub = Subspace::for_symmetry(&model.grid, seed.symmetry);
    let tr = Tracer::new(model, sub);
    let second = solve_at_norm(model, sub, &seed.psi, seed.mu, seed.norm * 1.5)?;
    let p0 = Point {
        y: sub.restrict(&seed.psi),
        mu: seed.mu,
    };
    let p1 = Point {
        y: sub.restrict(&second.psi),
        mu: second.mu,
    };
    let dir: Vec<f64> = p1.to_vec().iter().zip(p0.to_vec()).map(|(a, b)| a - b).collect();
    let t0 = tr.normalize(dir);
    trace(model, &tr, vec![p0], t0)
}

/// Continues an asymmetric branch starting at `start` with initial tangent `dir` (full coordinates `(ψ, μ)`).
pub fn continue_from(model: &Model, start: &StationaryState, dir: Vec<f64>) -> Result<Branch> {
    let sub = Subspace::for_symmetry(&model.grid, start.symmetry);
    let tr = Tracer::new(model, sub);
    let p0 = Point {
        y: sub.restrict(&start.psi),
        mu: start.mu,
    };
    let mut d = sub.restrict(&dir[..dir.len() - 1]);
    d.push(dir[dir.len() - 1]);
    let t0 = tr.normalize(d);
    trace(model, &tr, vec![p0], t0)
}

fn trace(model: &Model, tr: &Tracer, mut points: Vec<Point>, mut t: Vec<f64>) -> Result<Branch> {
    let cfg = &model.config;
    let sub = tr.sub;
    let parent = sub.kind != SubspaceKind::Full;
    let opp = sub.opposite();
    let mut states = vec![tr.state(&points[0])];
    let symmetry = states[0].symmetry;
    let mut counts = vec![parent.then(|| inertia(model, &states[0].psi, states[0].mu, opp).0)];
    let mut tangents = vec![t.clone()];
    let mut events = Vec::new();
    let mut ds = cfg.ds_init;
    let mut termination = String::from("max_steps reached");
    let mut failures = 0usize;
    for _step in 0..cfg.max_steps {
        let last = points.last().unwrap().clone();
        let lv = last.to_vec();
        let pred: Vec<f64> = lv.iter().zip(&t).map(|(a, b)| a + ds * b).collect();
        let mut row: Vec<f64> = t[..t.len() - 1].iter().map(|v| v * tr.metric).collect();
        row.push(t[t.len() - 1]);
        let Some((p, iters)) = tr.correct(Point::from_vec(pred), &row, &lv, ds) else {
            ds *= 0.5;
            failures += 1;
            if ds < cfg.ds_min {
                termination = format!("Newton failed with ds below ds_min after {} states", states.len());
                break;
            }
            continue;
        };
        let Some(tn) = tr.tangent(&p, &t) else {
            ds *= 0.5;
            if ds < cfg.ds_min {
                termination = "singular bordered system".into();
                break;
            }
            continue;
        };
        // guard against jumping across branches: consecutive tangents must stay aligned
        if tr.dot(&tn, &t) < 0.5 && ds > cfg.ds_min {
            ds = (ds * 0.5).max(cfg.ds_min);
            continue;
        }
        let st = tr.state(&p);
        let count = parent.then(|| inertia(model, &st.psi, st.mu, opp).0);
        let prev_idx = states.len() - 1;
        let prev_mu_dir = t[t.len() - 1];
        let new_mu_dir = tn[tn.len() - 1];

        if let (Some(a), Some(b)) = (counts[prev_idx], count) {
            if a != b {
                events.push(locate_pitchfork(model, tr, &points[prev_idx], &p, a, prev_idx));
            }
        }
        let merged = !parent && states[prev_idx].imbalance.signum() != st.imbalance.signum();
        // μ is extremal where an asymmetric branch passes through its parent; that is not a fold
        if prev_mu_dir.signum() != new_mu_dir.signum() && prev_mu_dir != 0.0 && !merged {
            events.push(locate_fold(model, tr, &points[prev_idx], &p, prev_mu_dir, prev_idx));
        }
        if merged {
            events.push(locate_merge(model, tr, &points[prev_idx], &p, states[prev_idx].imbalance, prev_idx));
        }
        points.push(p);
        states.push(st);
        counts.push(count);
        tangents.push(tn.clone());
        t = tn;
        if iters <= 3 {
            ds = (ds * 1.5).min(cfg.ds_max);
        } else if iters >= 7 {
            ds = (ds * 0.7).max(cfg.ds_min);
        }
        let last = states.last().unwrap();
        if merged {
            termination = "merged into the parent branch".into();
            break;
        }
        if last.mu < cfg.mu_min || last.mu > cfg.mu_max {
            termination = "left the mu range".into();
            break;
        }
        if last.norm > cfg.n_max {
            termination = "reached n_max".into();
            break;
        }
        if last.norm < 0.5 * cfg.seed_norm && states.len() > 2 {
            termination = "returned to the linear limit".into();
            break;
        }
    }
    let _ = failures;
    events.sort_by_key(|e| e.after_index);
    Ok(Branch {
        symmetry,
        states,
        breaking_counts: counts,
        events,
        termination,
    })
}

/// Bisects along the secant between `a` and `b`; `side(p)` tells whether a
/// corrected point lies on `a`'s side. Returns the final bracket.
fn bisect<F: FnMut(&Point) -> bool>(model: &Model, tr: &Tracer, a: &Point, b: &Point, mut side: F) -> (Point, Point) {
    let mut lo = a.clone();
    let mut hi = b.clone();
    for _ in 0..60 {
        let lv = lo.to_vec();
        let hv = hi.to_vec();
        let dist = {
            let d: Vec<f64> = hv.iter().zip(&lv).map(|(x, y)| x - y).collect();
            tr.dot(&d, &d).sqrt()
        };
        if (hi.mu - lo.mu).abs() <= model.config.refine_tol && dist <= 10.0 * model.config.refine_tol {
            break;
        }
        let dir: Vec<f64> = hv.iter().zip(&lv).map(|(x, y)| x - y).collect();
        let mid: Vec<f64> = hv.iter().zip(&lv).map(|(x, y)| 0.5 * (x + y)).collect();
        let Some(p) = tr.correct_on_plane(&mid, &dir) else {
            break;
        };
        if side(&p) {
            lo = p;
        } else {
            hi = p;
        }
    }
    (lo, hi)
}

fn midpoint_state(tr: &Tracer, lo: &Point, hi: &Point) -> StationaryState {
    let mid = Point {
        y: lo.y.iter().zip(&hi.y).map(|(a, b)| 0.5 * (a + b)).collect(),
        mu: 0.5 * (lo.mu + hi.mu),
    };
    tr.state(&mid)
}

fn locate_pitchfork(model: &Model, tr: &Tracer, a: &Point, b: &Point, count_a: usize, idx: usize) -> BranchEvent {
    let opp = tr.sub.opposite();
    let count_b = inertia(model, &tr.sub.expand(&b.y), b.mu, opp).0;
    let (lo, hi) = bisect(model, tr, a, b, |p| {
        inertia(model, &tr.sub.expand(&p.y), p.mu, opp).0 == count_a
    });
    let st = midpoint_state(tr, &lo, &hi);
    let (_, _, v) = inertia(model, &st.psi, st.mu, opp);
    let norm = model.norm(&v).sqrt();
    let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
    BranchEvent {
        kind: EventKind::Pitchfork,
        mu: st.mu,
        n: st.norm,
        after_index: idx,
        counts: Some((count_a, count_b)),
        state: Some(st),
        critical_vector: Some(v),
    }
}

fn locate_fold(model: &Model, tr: &Tracer, a: &Point, b: &Point, dir_a: f64, idx: usize) -> BranchEvent {
    let mut prev_t: Vec<f64> = {
        let d: Vec<f64> = b.to_vec().iter().zip(a.to_vec()).map(|(x, y)| x - y).collect();
        tr.normalize(d)
    };
    let (lo, hi) = bisect(model, tr, a, b, |p| match tr.tangent(p, &prev_t) {
        Some(t) => {
            let s = t[t.len() - 1].signum() == dir_a.signum();
            prev_t = t;
            s
        }
        None => false,
    });
    let st = midpoint_state(tr, &lo, &hi);
    BranchEvent {
        kind: EventKind::Fold,
        mu: st.mu,
        n: st.norm,
        after_index: idx,
        counts: None,
        state: Some(st),
        critical_vector: None,
    }
}

fn locate_merge(model: &Model, tr: &Tracer, a: &Point, b: &Point, z_a: f64, idx: usize) -> BranchEvent {
    let (lo, hi) = bisect(model, tr, a, b, |p| {
        model.imbalance(&tr.sub.expand(&p.y)).signum() == z_a.signum()
    });
    let st = midpoint_state(tr, &lo, &hi);
    BranchEvent {
        kind: EventKind::Merge,
        mu: st.mu,
        n: st.norm,
        after_index: idx,
        counts: None,
        state: Some(st),
        critical_vector: None,
    }
}

/// Kick factors tried in turn when seeding a daughter branch.
const KICK_RETRIES: [f64; 2] = [1.0, 10.0];
/// Relative amplitude of the kick along the critical vector.
pub const KICK_AMPLITUDE: f64 = 1e-3;

/// Seeds the asymmetric daughter branch at a pitchfork by solving with the
/// projection onto the critical vector pinned to `ε = 10⁻³‖ψ‖`, and returns
/// the daughter state together with a tangent pointing away from the parent.
pub fn switch_branch(model: &Model, event: &BranchEvent) -> Result<(StationaryState, Vec<f64>)> {
    let (Some(st), Some(v)) = (&event.state, &event.critical_vector) else {
        return Err(Error::InvalidParameter {
            name: "event",
            reason: "branch switching needs a located pitchfork".into(),
        });
    };
    let full = Subspace::new(&model.grid, SubspaceKind::Full);
    let tr = Tracer::new(model, full);
    let w = model.grid.weights();
    let mut row: Vec<f64> = v.iter().zip(w).map(|(a, b)| a * b).collect();
    row.push(0.0);
    let base = {
        let mut b = st.psi.clone();
        b.push(st.mu);
        b
    };
    let amp = model.norm(&st.psi).sqrt();
    let mut last_err = String::new();
    for factor in KICK_RETRIES {
        let eps = KICK_AMPLITUDE * factor * amp;
        let solve = |e: f64| {
            let mut guess = base.clone();
            for (g, vi) in guess.iter_mut().zip(v) {
                *g += e * vi;
            }
            tr.correct(Point::from_vec(guess), &row, &base, e)
        };
        match (solve(eps), solve(2.0 * eps)) {
            (Some((p1, _)), Some((p2, _))) => {
                let s1 = tr.state(&p1);
                if s1.symmetry != Symmetry::Asymmetric {
                    last_err = format!("kick ×{factor} fell back to a symmetric state");
                    continue;
                }
                let dir: Vec<f64> = p2.to_vec().iter().zip(p1.to_vec()).map(|(a, b)| a - b).collect();
                return Ok((s1, tr.normalize(dir)));
            }
            _ => last_err = format!("Newton failed for kick ×{factor}"),
        }
    }
    Err(Error::ContinuationAborted {
        steps: 0,
        reason: last_err,
    })
}
