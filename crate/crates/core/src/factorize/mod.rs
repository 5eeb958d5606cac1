//! Non-negative factorization kernels.
//!
//! Everything here factorizes a non-negative `I x K` matrix `S` into
//! `W (I x J)` and `V (J x K)`. Three solvers share one multiplicative-update
//! core:
//!
//! * [`nmf_multiplicative`]: Euclidean NMF (Lee-Seung updates).
//! * [`nmu_global`]: NMF with the additional elementwise constraint `WV <= S`,
//!   enforced by Lagrangian relaxation with projected multiplier ascent.
//! * [`nmu_recursive`]: rank-one underapproximations extracted one at a time,
//!   deflating the residual after each.

mod mu;
mod nmf;
mod nmu;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nmf::{nmf_multiplicative, nmf_multiplicative_traced, NmfRun};
pub use nmu::{nmu_global, nmu_rank1, nmu_recursive, nmu_resume, NmuState};

/// Floor applied to every multiplicative-update denominator.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Relative feasibility tolerance for `WV <= S`, as a fraction of `max(S)`.
pub const FEASIBILITY_TOL: f64 = 1e-2;

/// Non-negative factors `W` (frequency dictionary) and `V` (activations).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub w: Array2<f64>,
    pub v: Array2<f64>,
}

impl FactorPair {
    pub fn new(w: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        if w.ncols() != v.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "W is {}x{} but V is {}x{}",
                w.nrows(),
                w.ncols(),
                v.nrows(),
                v.ncols()
            )));
        }
        if w.iter()
            .chain(v.iter())
            .any(|&x| !(x >= 0.0 && x.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "factor entries must be finite and non-negative".into(),
            ));
        }
        Ok(FactorPair { w, v })
    }

    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    /// `(I, K)` of the approximated matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.w.nrows(), self.v.ncols())
    }

    pub fn product(&self) -> Array2<f64> {
        self.w.dot(&self.v)
    }
}

/// Iteration limits and seeding shared by all solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    /// Multiplicative sweeps per multiplier update (NMU only).
    pub inner_iters: usize,
    pub rel_tol: f64,
    pub rng_seed: u64,
    pub init_scale: f64,
    /// Initial multiplier step; step `t` is `mu0 / t`.
    pub mu0: f64,
    /// Cap on feasibility-preserving refinement sweeps after relaxation (NMU only).
    pub polish_sweeps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 500,
            inner_iters: 1,
            rel_tol: 1e-6,
            rng_seed: 0,
            init_scale: 1.0,
            mu0: 1.0,
            polish_sweeps: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::InvalidParameter(
                "iteration counts must be positive".into(),
            ));
        }
        for (name, x) in [
            ("rel_tol", self.rel_tol),
            ("init_scale", self.init_scale),
            ("mu0", self.mu0),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {x}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_rank(rows: usize, cols: usize, rank: usize) -> Result<()> {
    if rank == 0 || rank >= rows.min(cols) {
        return Err(Error::RankOutOfRange { rank, rows, cols });
    }
    Ok(())
}

/// Random strictly positive starting point, entries uniform on `(0, scale]`.
pub fn init_random(i: usize, k: usize, rank: usize, seed: u64, scale: f64) -> Result<FactorPair> {
    check_rank(i, k, rank)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "init scale must be positive, got {scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 1 - U[0,1) lies in (0, 1].
    let mut draw = || scale * (1.0 - rng.random::<f64>());
    let w = Array2::from_shape_simple_fn((i, rank), &mut draw);
    let v = Array2::from_shape_simple_fn((rank, k), &mut draw);
    Ok(FactorPair { w, v })
}

/// Squared Frobenius norm of `S - WV`.
pub fn reconstruction_error(s: ArrayView2<f64>, pair: &FactorPair) -> Result<f64> {
    check_shapes(s, pair)?;
    Ok(squared_residual(s, &pair.product()))
}

/// Largest entry of `WV - S` (positive means the underapproximation
/// constraint is violated there).
pub fn feasibility_violation(s: ArrayView2<f64>, pair: &FactorPair) -> Result<f64> {
    check_shapes(s, pair)?;
    Ok(max_violation(s, &pair.product()))
}

pub(crate) fn check_shapes(s: ArrayView2<f64>, pair: &FactorPair) -> Result<()> {
    let (i, k) = pair.shape();
    if s.dim() != (i, k) {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but factors give {}x{}",
            s.nrows(),
            s.ncols(),
            i,
            k
        )));
    }
    Ok(())
}

pub(crate) fn check_nonnegative(s: ArrayView2<f64>) -> Result<()> {
    if s.iter().any(|&x| !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "matrix has non-finite entries".into(),
        ));
    }
    if s.iter().any(|&x| x < 0.0) {
        return Err(Error::NegativeInput);
    }
    Ok(())
}

pub(crate) fn squared_residual(s: ArrayView2<f64>, approx: &Array2<f64>) -> f64 {
    s.iter()
        .zip(approx.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum()
}

pub(crate) fn max_violation(s: ArrayView2<f64>, approx: &Array2<f64>) -> f64 {
    s.iter()
        .zip(approx.iter())
        .map(|(&a, &b)| b - a)
        .fold(f64::NEG_INFINITY, f64::max)
}
