//! Uniform symmetric mesh, the double-well potential, nonlocal kernels and
//! their discrete convolution.
//!
//! Every double integral in the crate is reduced to one convolution followed
//! by a trapezoid quadrature. Convolution is the zero-padded (linear)
//! convolution of the trapezoid-weighted samples with a discrete kernel; it is
//! never periodic, since the parabolic trap breaks periodicity.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform 1D mesh symmetric about the origin, with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spacing: f64,
    half_points: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Builds the mesh `x_i = (i - m)·spacing`, `i = 0..=2m`, with `m = half_width / spacing`.
    pub fn new(half_width: f64, spacing: f64) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!("half_width must be positive, got {half_width}")));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        let ratio = half_width / spacing;
        let half_points = ratio.round();
        if (ratio - half_points).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "half_width / spacing = {ratio} is not an integer"
            )));
        }
        let half_points = half_points as usize;
        if half_points < 1 {
            return Err(Error::InvalidGrid(format!(
                "grid would have {} points, need at least 3",
                2 * half_points + 1
            )));
        }
        let n = 2 * half_points + 1;
        let points: Vec<f64> = (0..n)
            .map(|i| (i as f64 - half_points as f64) * spacing)
            .collect();
        let mut weights = vec![spacing; n];
        weights[0] = 0.5 * spacing;
        weights[n - 1] = 0.5 * spacing;
        Ok(Self {
            spacing,
            half_points,
            points,
            weights,
        })
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn x_min(&self) -> f64 {
        self.points[0]
    }

    pub fn x_max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the grid point at x = 0.
    pub fn center(&self) -> usize {
        self.half_points
    }

    /// Index of the mirror point `-x_i`.
    pub fn mirror(&self, i: usize) -> usize {
        self.points.len() - 1 - i
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.points.len() {
            return Err(Error::GridMismatch {
                expected: self.points.len(),
                got: len,
            });
        }
        Ok(())
    }

    /// Trapezoid quadrature of `f`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Weighted inner product `∫ f g dx`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn inner_complex(&self, f: &[f64], g: &[Complex64]) -> Complex64 {
        f.iter()
            .zip(g)
            .zip(&self.weights)
            .map(|((a, b), w)| b * (a * w))
            .sum()
    }

    /// `∫ |f|² dx`.
    pub fn norm_sq(&self, f: &[f64]) -> f64 {
        self.inner(f, f)
    }

    pub fn norm_sq_complex(&self, f: &[Complex64]) -> f64 {
        f.iter()
            .zip(&self.weights)
            .map(|(v, w)| v.norm_sqr() * w)
            .sum()
    }

    /// `f(-x)` sampled on the grid.
    pub fn reflect<T: Copy>(&self, f: &[T]) -> Vec<T> {
        f.iter().rev().copied().collect()
    }

    /// Relative reflection defect `‖f(x) - parity·f(-x)‖ / ‖f‖`.
    pub fn parity_defect(&self, f: &[f64], parity: f64) -> f64 {
        let norm = self.norm_sq(f).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let diff: Vec<f64> = f
            .iter()
            .zip(f.iter().rev())
            .map(|(a, b)| a - parity * b)
            .collect();
        self.norm_sq(&diff).sqrt() / norm
    }
}

/// Parameters of `V(x) = ½Ω̂²x² + V₀ sech²(x/w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    pub trap_strength: f64,
    pub barrier_height: f64,
    pub barrier_width: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self {
            trap_strength: 0.1,
            barrier_height: 1.0,
            barrier_width: 0.5,
        }
    }
}

impl PotentialParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.trap_strength > 0.0) {
            errs.push(format!("potential.trap_strength must be > 0 (got {})", self.trap_strength));
        }
        if !(self.barrier_width > 0.0) {
            errs.push(format!("potential.barrier_width must be > 0 (got {})", self.barrier_width));
        }
        if !self.barrier_height.is_finite() {
            errs.push("potential.barrier_height must be finite".into());
        }
        errs
    }

    pub fn eval(&self, x: f64) -> f64 {
        let sech = 1.0 / (x / self.barrier_width).cosh();
        0.5 * self.trap_strength * self.trap_strength * x * x + self.barrier_height * sech * sech
    }

    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        grid.points().iter().map(|&x| self.eval(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Exponential,
    Delta,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Exponential => "exponential",
            KernelFamily::Delta => "delta",
        })
    }
}

/// Even, unit-mass interaction kernel of range σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    #[serde(default)]
    pub range: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, range: f64) -> Result<Self> {
        let k = Self { family, range };
        k.validate_strict()?;
        Ok(k)
    }

    pub fn gaussian(range: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, range)
    }

    pub fn exponential(range: f64) -> Result<Self> {
        Self::new(KernelFamily::Exponential, range)
    }

    pub fn delta() -> Self {
        Self {
            family: KernelFamily::Delta,
            range: 0.0,
        }
    }

    fn validate_strict(&self) -> Result<()> {
        if self.family != KernelFamily::Delta && !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "kernel.range",
                reason: format!("must be > 0 for the {} family, got {}", self.family, self.range),
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Vec<String> {
        self.validate_strict()
            .err()
            .map(|e| vec![e.to_string()])
            .unwrap_or_default()
    }

    /// Pointwise value of the continuum kernel.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let s = self.range;
        match self.family {
            KernelFamily::Gaussian => {
                Ok((-(x * x) / (s * s)).exp() / (s * std::f64::consts::PI.sqrt()))
            }
            KernelFamily::Exponential => Ok((-x.abs() / s).exp() / (2.0 * s)),
            KernelFamily::Delta => Err(Error::DeltaPointwise),
        }
    }

    /// `Δx·Σ_{k∈ℤ} R(kΔx)`: mass of the kernel sampled on an infinite lattice.
    pub fn lattice_mass(&self, spacing: f64) -> f64 {
        let s = self.range;
        match self.family {
            KernelFamily::Delta => 1.0,
            KernelFamily::Exponential => {
                let a = 0.5 * spacing / s;
                a / a.tanh()
            }
            KernelFamily::Gaussian => {
                let norm = spacing / (s * std::f64::consts::PI.sqrt());
                let mut total = 1.0;
                let mut k = 1.0_f64;
                loop {
                    let u = k * spacing / s;
                    let term = (-u * u).exp();
                    total += 2.0 * term;
                    if term < 1e-18 {
                        break;
                    }
                    k += 1.0;
                }
                norm * total
            }
        }
    }

    /// Discrete kernel at lag `k·Δx`, scaled to unit lattice mass. As σ → 0 the
    /// lag-0 sample tends to `1/Δx`, so the convolution tends to the identity.
    pub fn discrete_samples(&self, spacing: f64, max_lag: usize) -> Vec<f64> {
        match self.family {
            KernelFamily::Delta => {
                let mut v = vec![0.0; max_lag + 1];
                v[0] = 1.0 / spacing;
                v
            }
            _ => {
                let mass = self.lattice_mass(spacing);
                (0..=max_lag)
                    .map(|k| self.eval(k as f64 * spacing).unwrap_or(0.0) / mass)
                    .collect()
            }
        }
    }
}

/// Samples attached to the mesh they live on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub n_points: usize,
    pub spacing: f64,
    pub x_min: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl GridFunction {
    pub fn from_real(grid: &Grid, values: &[f64]) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(Self {
            n_points: grid.n_points(),
            spacing: grid.spacing(),
            x_min: grid.x_min(),
            re: values.to_vec(),
            im: vec![0.0; values.len()],
        })
    }

    pub fn from_complex(grid: &Grid, values: &[Complex64]) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(Self {
            n_points: grid.n_points(),
            spacing: grid.spacing(),
            x_min: grid.x_min(),
            re: values.iter().map(|c| c.re).collect(),
            im: values.iter().map(|c| c.im).collect(),
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect()
    }

    /// Rebuilds the grid this function was sampled on.
    pub fn grid(&self) -> Result<Grid> {
        let half = -self.x_min;
        let g = Grid::new(half, self.spacing)?;
        g.check_len(self.re.len())?;
        Ok(g)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,re,im")?;
        for i in 0..self.re.len() {
            writeln!(w, "{:.6},{:.17e},{:.17e}", self.x(i), self.re[i], self.im[i])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut xs = Vec::new();
        let mut re = Vec::new();
        let mut im = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::InvalidGrid(format!("line {}: expected 3 columns", lineno + 1)));
            }
            let parse = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidGrid(format!("line {}: {e}", lineno + 1))
                })
            };
            xs.push(parse(cols[0])?);
            re.push(parse(cols[1])?);
            im.push(parse(cols[2])?);
        }
        if xs.len() < 3 {
            return Err(Error::InvalidGrid("fewer than 3 samples".into()));
        }
        let spacing = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        Ok(Self {
            n_points: xs.len(),
            spacing,
            x_min: xs[0],
            re,
            im,
        })
    }
}

/// Discrete convolution `(R ∗ f)(x_i) ≈ Σ_j w_j R(x_i − x_j) f_j`, evaluated by FFT.
#[derive(Clone)]
pub struct Convolver {
    kernel: Kernel,
    n: usize,
    weights: Vec<f64>,
    samples: Vec<f64>,
    plan: Option<FftPlan>,
}

#[derive(Clone)]
struct FftPlan {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex64>,
}

impl fmt::Debug for Convolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Convolver")
            .field("kernel", &self.kernel)
            .field("n", &self.n)
            .finish()
    }
}

impl Convolver {
    pub fn new(grid: &Grid, kernel: Kernel) -> Self {
        let n = grid.n_points();
        let samples = kernel.discrete_samples(grid.spacing(), n - 1);
        let plan = if kernel.family == KernelFamily::Delta {
            None
        } else {
            let len = (2 * n - 1).next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(len);
            let inverse = planner.plan_fft_inverse(len);
            let mut kernel_hat = vec![Complex64::new(0.0, 0.0); len];
            kernel_hat[0] = Complex64::new(samples[0], 0.0);
            for k in 1..n {
                kernel_hat[k] = Complex64::new(samples[k], 0.0);
                kernel_hat[len - k] = Complex64::new(samples[k], 0.0);
            }
            forward.process(&mut kernel_hat);
            Some(FftPlan {
                len,
                forward,
                inverse,
                kernel_hat,
            })
        };
        Self {
            kernel,
            n,
            weights: grid.weights().to_vec(),
            samples,
            plan,
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn is_identity(&self) -> bool {
        self.plan.is_none()
    }

    /// Discrete kernel values at lags `0..n`.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n, "convolution input length mismatch");
        let Some(plan) = &self.plan else {
            return f.to_vec();
        };
        let mut buf = vec![Complex64::new(0.0, 0.0); plan.len];
        for (b, (v, w)) in buf.iter_mut().zip(f.iter().zip(&self.weights)) {
            b.re = v * w;
        }
        plan.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&plan.kernel_hat) {
            *b *= k;
        }
        plan.inverse.process(&mut buf);
        let scale = 1.0 / plan.len as f64;
        buf[..self.n].iter().map(|c| c.re * scale).collect()
    }

    pub fn try_apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.n {
            return Err(Error::GridMismatch {
                expected: self.n,
                got: f.len(),
            });
        }
        Ok(self.apply(f))
    }

    /// Dense matrix `M_ij = R(x_i − x_j)·w_j` so that `M f` is the convolution.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        if self.plan.is_none() {
            return DMatrix::identity(n, n);
        }
        DMatrix::from_fn(n, n, |i, j| {
            let lag = i.abs_diff(j);
            self.samples[lag] * self.weights[j]
        })
    }
}

/// Convenience wrapper building a one-off convolver.
pub fn convolve(grid: &Grid, kernel: &Kernel, f: &[f64]) -> Result<Vec<f64>> {
    Convolver::new(grid, *kernel).try_apply(f)
}
