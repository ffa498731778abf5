//! Finite-difference discretization of `𝓛 = −½∂²ₓ + V(x)`, its lowest
//! eigenpairs and the rotated left/right two-mode basis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, PotentialParams};
use crate::linalg::solve_tridiagonal;

/// Symmetric tridiagonal matrix with homogeneous Dirichlet closure.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalOperator {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl TridiagonalOperator {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * f[i];
                if i > 0 {
                    v += self.off[i - 1] * f[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * f[i + 1];
                }
                v
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        for i in 0..n - 1 {
            m[(i, i + 1)] = self.off[i];
            m[(i + 1, i)] = self.off[i];
        }
        m
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence count).
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.dim() {
            let e2 = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
            q = self.diag[i] - x - if i == 0 { 0.0 } else { e2 / q };
            if q == 0.0 {
                q = f64::EPSILON * (self.diag[i].abs() + e2.sqrt()).max(f64::MIN_POSITIVE);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }
}

/// Second-order centred finite-difference matrix of `−½∂²ₓ + V`.
pub fn discretize_operator(grid: &Grid, params: &PotentialParams) -> TridiagonalOperator {
    let h2 = grid.spacing() * grid.spacing();
    let diag = grid
        .points()
        .iter()
        .map(|&x| 1.0 / h2 + params.eval(x))
        .collect();
    let off = vec![-0.5 / h2; grid.n_points() - 1];
    TridiagonalOperator { diag, off }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    pub energy: f64,
    pub mode: Vec<f64>,
    pub residual: f64,
}

/// The `count` lowest eigenpairs, normalized in the trapezoid norm and
/// sign-fixed so even modes are positive at the centre and odd modes rise
/// through it.
pub fn lowest_eigenpairs(grid: &Grid, op: &TridiagonalOperator, count: usize) -> Result<Vec<Eigenpair>> {
    let n = op.dim();
    grid.check_len(n)?;
    if count == 0 || count >= n {
        return Err(Error::InvalidParameter {
            name: "count",
            reason: format!("must lie in 1..{n}, got {count}"),
        });
    }
    let (glo, ghi) = op.gershgorin();
    let c = grid.center();
    let mut pairs = Vec::with_capacity(count);
    for k in 0..count {
        let (mut lo, mut hi) = (glo, ghi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if op.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let lambda = 0.5 * (lo + hi);
        let mode = inverse_iteration(op, lambda)?;
        let mut mode = normalize(grid, mode);
        let flip = if k % 2 == 0 {
            mode[c] < 0.0
        } else {
            mode[c + 1] - mode[c - 1] < 0.0
        };
        if flip {
            mode.iter_mut().for_each(|v| *v = -*v);
        }
        let lu = op.apply(&mode);
        let energy = mode.iter().zip(&lu).map(|(a, b)| a * b).sum::<f64>()
            / mode.iter().map(|a| a * a).sum::<f64>();
        let residual = lu
            .iter()
            .zip(&mode)
            .map(|(a, b)| (a - energy * b).abs())
            .fold(0.0, f64::max);
        if residual > 1e-10 {
            return Err(Error::EigenNoConvergence { residual });
        }
        pairs.push(Eigenpair {
            energy,
            mode,
            residual,
        });
    }
    Ok(pairs)
}

fn inverse_iteration(op: &TridiagonalOperator, lambda: f64) -> Result<Vec<f64>> {
    let n = op.dim();
    let shift = lambda + 1e-13 * lambda.abs().max(1.0);
    let diag: Vec<f64> = op.diag.iter().map(|d| d - shift).collect();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 97) as f64).collect();
    for _ in 0..4 {
        v = solve_tridiagonal(&op.off, &diag, &op.off, &v)?;
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::EigenNoConvergence { residual: f64::NAN });
        }
        v.iter_mut().for_each(|a| *a /= norm);
    }
    Ok(v)
}

fn normalize(grid: &Grid, mut f: Vec<f64>) -> Vec<f64> {
    let n = grid.norm_sq(&f).sqrt();
    f.iter_mut().for_each(|a| *a /= n);
    f
}

/// Lowest symmetric/antisymmetric pair and the rotated left/right states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBasis {
    pub omega0: f64,
    pub omega1: f64,
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
    pub phi_l: Vec<f64>,
    pub phi_r: Vec<f64>,
    /// `(ω₀ + ω₁)/2`
    pub big_omega: f64,
    /// `(ω₁ − ω₀)/2`
    pub omega: f64,
}

impl LinearBasis {
    pub fn compute(grid: &Grid, params: &PotentialParams) -> Result<Self> {
        let op = discretize_operator(grid, params);
        let pairs = lowest_eigenpairs(grid, &op, 2)?;
        rotated_basis(&pairs)
    }

    /// Weighted projections `(⟨φ_L, f⟩, ⟨φ_R, f⟩)`.
    pub fn project(&self, grid: &Grid, f: &[f64]) -> (f64, f64) {
        (grid.inner(&self.phi_l, f), grid.inner(&self.phi_r, f))
    }
}

pub fn rotated_basis(pairs: &[Eigenpair]) -> Result<LinearBasis> {
    if pairs.len() != 2 {
        return Err(Error::InvalidParameter {
            name: "eigenpairs",
            reason: format!("expected exactly 2, got {}", pairs.len()),
        });
    }
    let (p0, p1) = (&pairs[0], &pairs[1]);
    if p1.energy - p0.energy <= 1e-14 * p0.energy.abs().max(1.0) {
        return Err(Error::DegenerateSpectrum(p0.energy, p1.energy));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let phi_l = p0.mode.iter().zip(&p1.mode).map(|(a, b)| (a - b) * r).collect();
    let phi_r = p0.mode.iter().zip(&p1.mode).map(|(a, b)| (a + b) * r).collect();
    Ok(LinearBasis {
        omega0: p0.energy,
        omega1: p1.energy,
        u0: p0.mode.clone(),
        u1: p1.mode.clone(),
        phi_l,
        phi_r,
        big_omega: 0.5 * (p0.energy + p1.energy),
        omega: 0.5 * (p1.energy - p0.energy),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_setup() -> (Grid, PotentialParams) {
        (Grid::new(20.0, 0.1).unwrap(), PotentialParams::default())
    }

    #[test]
    fn stencil_entries() {
        let (g, p) = default_setup();
        let op = discretize_operator(&g, &p);
        assert!((op.diag[200] - (100.0 + 1.0)).abs() < 1e-12);
        assert!(op.off.iter().all(|&o| (o + 50.0).abs() < 1e-12));
    }

    #[test]
    fn constant_in_flat_region() {
        let g = Grid::new(5.0, 0.1).unwrap();
        let p = PotentialParams {
            trap_strength: 1e-9,
            barrier_height: 0.0,
            barrier_width: 1.0,
        };
        let op = discretize_operator(&g, &p);
        let out = op.apply(&vec![1.0; g.n_points()]);
        for v in &out[1..out.len() - 1] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn harmonic_limit() {
        let g = Grid::new(20.0, 0.1).unwrap();
        let p = PotentialParams {
            barrier_height: 0.0,
            ..PotentialParams::default()
        };
        let op = discretize_operator(&g, &p);
        let pairs = lowest_eigenpairs(&g, &op, 2).unwrap();
        assert!((pairs[0].energy - 0.05).abs() < 1e-4);
        assert!((pairs[1].energy - 0.15).abs() < 1e-4);
    }

    #[test]
    fn sturm_count_matches_dense() {
        let g = Grid::new(3.0, 0.25).unwrap();
        let op = discretize_operator(&g, &PotentialParams::default());
        let dense = crate::linalg::sym_eigenvalues(&op.to_dense());
        for x in [0.0, 1.0, 5.0, 20.0, 40.0] {
            let expected = dense.iter().filter(|&&e| e < x).count();
            assert_eq!(op.count_below(x), expected);
        }
    }

    #[test]
    fn default_basis_properties() {
        let (g, p) = default_setup();
        let op = discretize_operator(&g, &p);
        let pairs = lowest_eigenpairs(&g, &op, 3).unwrap();
        for pair in &pairs {
            assert!(pair.residual <= 1e-10);
        }
        let b = rotated_basis(&pairs[..2]).unwrap();
        assert!(b.omega0 < b.omega1);
        for f in [&b.u0, &b.u1, &b.phi_l, &b.phi_r] {
            assert!((g.norm_sq(f) - 1.0).abs() < 1e-12);
        }
        assert!(g.inner(&b.u0, &b.u1).abs() < 1e-10);
        assert!(g.inner(&b.phi_l, &b.phi_r).abs() < 1e-10);
        assert!(g.parity_defect(&b.u0, 1.0) < 1e-8);
        assert!(g.parity_defect(&b.u1, -1.0) < 1e-8);
        assert!(b.u0.iter().all(|&v| v > 0.0 || v.abs() < 1e-12));
        let refl = g.reflect(&b.phi_l);
        let err = refl.iter().zip(&b.phi_r).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
        let left: f64 = (0..g.center())
            .map(|i| g.weights()[i] * b.phi_l[i] * b.phi_l[i])
            .sum::<f64>()
            + 0.5 * g.weights()[g.center()] * b.phi_l[g.center()].powi(2);
        assert!(left > 0.9, "{left}");
    }

    #[test]
    fn operator_expansion_identity() {
        let (g, p) = default_setup();
        let op = discretize_operator(&g, &p);
        let b = LinearBasis::compute(&g, &p).unwrap();
        let (cl, cr) = (0.8, -0.35);
        let psi: Vec<f64> = b.phi_l.iter().zip(&b.phi_r).map(|(l, r)| cl * l + cr * r).collect();
        let lpsi = op.apply(&psi);
        let (pl, pr) = b.project(&g, &lpsi);
        assert!((pl - (b.big_omega * cl - b.omega * cr)).abs() < 1e-10);
        assert!((pr - (b.big_omega * cr - b.omega * cl)).abs() < 1e-10);
    }

    #[test]
    fn degenerate_rejected() {
        let p = Eigenpair {
            energy: 1.0,
            mode: vec![1.0],
            residual: 0.0,
        };
        assert!(matches!(
            rotated_basis(&[p.clone(), p]),
            Err(Error::DegenerateSpectrum(..))
        ));
    }
}
