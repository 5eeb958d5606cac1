//! Non-negative matrix underapproximation by Lagrangian relaxation.
//!
//! The constraint `WV <= S` is relaxed with a multiplier matrix `Λ >= 0`. Each
//! outer iteration takes `inner_iters` multiplicative sweeps on the relaxed
//! objective and then one projected ascent step on the multipliers,
//! `Λ <- max(0, Λ + (mu0 / t)(WV - S))`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mu::{update_v, update_w};
use super::{
    check_nonnegative, check_rank, check_shapes, max_violation, squared_residual, FactorPair,
    SolverConfig, FEASIBILITY_TOL,
};
use crate::error::{Error, Result};

/// Terminal state of the global NMU solver.
#[derive(Debug, Clone)]
pub struct NmuState {
    pub factors: FactorPair,
    /// Lagrange multipliers, one per entry of `S`.
    pub lambda: Array2<f64>,
    pub outer_iter: usize,
    /// `max(WV - S)` at termination.
    pub violation: f64,
    /// `||S - WV||_F^2` at termination.
    pub residual: f64,
}

fn ascend_multipliers(
    lambda: &mut Array2<f64>,
    approx: &Array2<f64>,
    s: ArrayView2<f64>,
    step: f64,
) {
    Zip::from(lambda)
        .and(approx)
        .and(s)
        .for_each(|l, &a, &b| *l = (*l + step * (a - b)).max(0.0));
}

/// G-NMU: all `J` components at once.
///
/// The relaxation phase alternates multiplicative sweeps on the shifted
/// target `max(S - Λ, 0)` with multiplier ascent; `Λ` starts at zero, so the
/// first sweep is plain NMF on `S`. Relaxation alone only approaches
/// feasibility, so the iterate is then made feasible by shrinking offending
/// columns of `V` and refined by block-coordinate sweeps that keep
/// `WV <= S` exactly.
pub fn nmu_global(s: ArrayView2<f64>, init: FactorPair, cfg: &SolverConfig) -> Result<NmuState> {
    check_shapes(s, &init)?;
    if init.w.iter().chain(init.v.iter()).any(|&x| x <= 0.0) {
        return Err(Error::InvalidParameter(
            "NMU initialization must be strictly positive".into(),
        ));
    }
    let state = NmuState {
        lambda: Array2::zeros(s.raw_dim()),
        outer_iter: 0,
        violation: f64::INFINITY,
        residual: f64::INFINITY,
        factors: init,
    };
    nmu_resume(s, state, cfg.max_outer_iters, cfg)
}

/// Continue G-NMU from a previous state for up to `extra_iters` outer
/// iterations, keeping its multipliers and step schedule.
pub fn nmu_resume(
    s: ArrayView2<f64>,
    state: NmuState,
    extra_iters: usize,
    cfg: &SolverConfig,
) -> Result<NmuState> {
    cfg.validate()?;
    check_shapes(s, &state.factors)?;
    check_nonnegative(s)?;
    if state.lambda.dim() != s.dim() {
        return Err(Error::DimensionMismatch(
            "multiplier matrix does not match S".into(),
        ));
    }

    let tol = FEASIBILITY_TOL * s.iter().fold(0.0_f64, |m, &x| m.max(x));
    let NmuState {
        factors: FactorPair { mut w, mut v },
        mut lambda,
        mut outer_iter,
        ..
    } = state;
    let mut previous = squared_residual(s, &w.dot(&v));
    let mut target = Array2::<f64>::zeros(s.raw_dim());
    Zip::from(&mut target)
        .and(s)
        .and(&lambda)
        .for_each(|t, &a, &l| *t = (a - l).max(0.0));

    for _ in 0..extra_iters {
        outer_iter += 1;
        for _ in 0..cfg.inner_iters {
            update_w(target.view(), &mut w, &v);
            update_v(target.view(), &w, &mut v);
        }
        // One pass: score the iterate, step the multipliers and rebuild the
        // shifted target for the next sweep.
        let approx = w.dot(&v);
        let step = cfg.mu0 / outer_iter as f64;
        let mut residual = 0.0;
        let mut violation = f64::NEG_INFINITY;
        Zip::from(&mut lambda)
            .and(&mut target)
            .and(&approx)
            .and(s)
            .for_each(|l, t, &a, &b| {
                let d = a - b;
                residual += d * d;
                violation = violation.max(d);
                *l = (*l + step * d).max(0.0);
                *t = (b - *l).max(0.0);
            });
        let converged = (previous - residual).abs() < cfg.rel_tol * previous.max(f64::MIN_POSITIVE);
        if converged && violation <= tol {
            break;
        }
        previous = residual;
    }

    restore_feasibility(s, &mut w, &mut v);
    feasible_sweeps(s, &mut w, &mut v, cfg.polish_sweeps, cfg.rel_tol);
    let approx = w.dot(&v);
    Ok(NmuState {
        residual: squared_residual(s, &approx),
        violation: max_violation(s, &approx),
        factors: FactorPair { w, v },
        lambda,
        outer_iter,
    })
}

/// Scale rows of `W` and columns of `V` down until `WV <= S`.
///
/// Each violated entry `(i, k)` is charged to row `i` or column `k`,
/// whichever carries less energy in `WV`, and that side is shrunk by
/// `S_ik / (WV)_ik`. Scaling never raises an entry, so one pass suffices.
/// Factor entries below `NEGLIGIBLE` of their component's peak are zeroed
/// first; otherwise a zero in `S` that the multiplicative updates only
/// approach asymptotically would wipe out a whole row or column.
pub(crate) fn restore_feasibility(s: ArrayView2<f64>, w: &mut Array2<f64>, v: &mut Array2<f64>) {
    const NEGLIGIBLE: f64 = 1e-3;
    for mut column in w.columns_mut() {
        let cut = NEGLIGIBLE * column.fold(0.0_f64, |m, &x| m.max(x));
        column.mapv_inplace(|x| if x < cut { 0.0 } else { x });
    }
    for mut row in v.rows_mut() {
        let cut = NEGLIGIBLE * row.fold(0.0_f64, |m, &x| m.max(x));
        row.mapv_inplace(|x| if x < cut { 0.0 } else { x });
    }
    let approx = w.dot(&*v);
    let row_energy: Vec<f64> = approx.rows().into_iter().map(|r| r.dot(&r)).collect();
    let col_energy: Vec<f64> = approx.columns().into_iter().map(|c| c.dot(&c)).collect();
    let mut row_factor = vec![1.0_f64; s.nrows()];
    let mut col_factor = vec![1.0_f64; s.ncols()];
    for ((i, k), &a) in approx.indexed_iter() {
        let b = s[[i, k]];
        if a > b {
            let f = b / a;
            if row_energy[i] <= col_energy[k] {
                row_factor[i] = row_factor[i].min(f);
            } else {
                col_factor[k] = col_factor[k].min(f);
            }
        }
    }
    for (mut row, &f) in w.rows_mut().into_iter().zip(&row_factor) {
        if f < 1.0 {
            row.mapv_inplace(|x| x * f);
        }
    }
    for (mut column, &f) in v.columns_mut().into_iter().zip(&col_factor) {
        if f < 1.0 {
            column.mapv_inplace(|x| x * f);
        }
    }
}

/// Block-coordinate descent over the rank-one terms that never leaves the
/// feasible set: each entry of `v_j` (then `w_j`) moves to its unconstrained
/// least-squares value clipped to `[0, largest value keeping WV <= S]`.
/// Requires a feasible start; returns the number of sweeps taken.
pub(crate) fn feasible_sweeps(
    s: ArrayView2<f64>,
    w: &mut Array2<f64>,
    v: &mut Array2<f64>,
    max_sweeps: usize,
    rel_tol: f64,
) -> usize {
    let (rows, cols) = s.dim();
    // Slack E = S - WV, kept non-negative up to rounding.
    let mut slack = &s - &w.dot(&*v);
    let mut previous = slack.iter().map(|e| e * e).sum::<f64>();
    let mut dot = vec![0.0; cols.max(rows)];
    let mut room = vec![0.0; cols.max(rows)];

    for sweep in 1..=max_sweeps {
        for j in 0..w.ncols() {
            // v_j given w_j.
            let wj = w.column(j).to_owned();
            let ww = wj.dot(&wj);
            if ww > 0.0 {
                dot[..cols].fill(0.0);
                room[..cols].fill(f64::INFINITY);
                for (i, e_row) in slack.axis_iter(Axis(0)).enumerate() {
                    let wi = wj[i];
                    if wi <= 0.0 {
                        continue;
                    }
                    for (k, &e) in e_row.iter().enumerate() {
                        dot[k] += wi * e;
                        room[k] = room[k].min(e.max(0.0) / wi);
                    }
                }
                let mut delta = vec![0.0; cols];
                for k in 0..cols {
                    let old = v[[j, k]];
                    let new = (old + dot[k] / ww).clamp(0.0, old + room[k]);
                    delta[k] = new - old;
                    v[[j, k]] = new;
                }
                for (i, mut e_row) in slack.axis_iter_mut(Axis(0)).enumerate() {
                    let wi = wj[i];
                    if wi != 0.0 {
                        e_row.iter_mut().zip(&delta).for_each(|(e, d)| *e -= wi * d);
                    }
                }
            }

            // w_j given v_j.
            let vj = v.row(j).to_owned();
            let vv = vj.dot(&vj);
            if vv > 0.0 {
                for (i, mut e_row) in slack.axis_iter_mut(Axis(0)).enumerate() {
                    let mut d = 0.0;
                    let mut r = f64::INFINITY;
                    for (&e, &vk) in e_row.iter().zip(vj.iter()) {
                        if vk > 0.0 {
                            d += vk * e;
                            r = r.min(e.max(0.0) / vk);
                        }
                    }
                    let old = w[[i, j]];
                    let new = (old + d / vv).clamp(0.0, old + r);
                    let change = new - old;
                    if change != 0.0 {
                        w[[i, j]] = new;
                        e_row
                            .iter_mut()
                            .zip(vj.iter())
                            .for_each(|(e, vk)| *e -= change * vk);
                    }
                }
            }
        }
        let current = slack.iter().map(|e| e * e).sum::<f64>();
        if previous - current < rel_tol * previous {
            return sweep;
        }
        previous = current;
    }
    max_sweeps
}

/// Rank-one underapproximation of `max(R, 0)`.
///
/// Alternates exact non-negative least-squares steps for `w` and `v` against
/// `R - Λ` (each a clipped matrix-vector product), with the same multiplier
/// ascent and feasibility finish as [`nmu_global`]. Returns zero vectors when
/// `R` has no positive entry.
pub fn nmu_rank1(r: ArrayView2<f64>, cfg: &SolverConfig) -> Result<(Array1<f64>, Array1<f64>)> {
    cfg.validate()?;
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "matrix has non-finite entries".into(),
        ));
    }
    let (rows, cols) = r.dim();
    let positive = r.mapv(|x| x.max(0.0));
    let rmax = positive.iter().fold(0.0_f64, |m, &x| m.max(x));
    if rmax <= 0.0 {
        return Ok((Array1::zeros(rows), Array1::zeros(cols)));
    }
    let tol = FEASIBILITY_TOL * rmax;

    // Seeded positive start refined by a few power iterations on max(R, 0).
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut w = Array1::from_shape_simple_fn(rows, || cfg.init_scale * (1.0 - rng.random::<f64>()));
    let mut v = Array1::zeros(cols);
    for _ in 0..10 {
        v = positive.t().dot(&w) / w.dot(&w);
        let norm = v.dot(&v);
        if norm <= 0.0 {
            break;
        }
        w = positive.dot(&v) / norm;
    }

    let mut lambda = Array2::<f64>::zeros((rows, cols));
    let mut previous = f64::INFINITY;
    for t in 1..=cfg.max_outer_iters {
        let shifted = &positive - &lambda;
        let vv = v.dot(&v);
        if vv <= 0.0 {
            break;
        }
        let w_next = shifted.dot(&v).mapv(|x| x.max(0.0)) / vv;
        let ww = w_next.dot(&w_next);
        if ww <= 0.0 {
            break;
        }
        let v_next = shifted.t().dot(&w_next).mapv(|x| x.max(0.0)) / ww;
        if v_next.iter().all(|&x| x <= 0.0) {
            break;
        }
        w = w_next;
        v = v_next;

        let approx = outer(&w, &v);
        let residual = squared_residual(positive.view(), &approx);
        let violation = max_violation(positive.view(), &approx);
        if (previous - residual).abs() < cfg.rel_tol * previous.max(f64::MIN_POSITIVE)
            && violation <= tol
        {
            break;
        }
        previous = residual;
        ascend_multipliers(&mut lambda, &approx, positive.view(), cfg.mu0 / t as f64);
    }

    let mut w2 = w.insert_axis(Axis(1));
    let mut v2 = v.insert_axis(Axis(0));
    restore_feasibility(positive.view(), &mut w2, &mut v2);
    feasible_sweeps(
        positive.view(),
        &mut w2,
        &mut v2,
        cfg.polish_sweeps,
        cfg.rel_tol,
    );
    Ok((w2.column(0).to_owned(), v2.row(0).to_owned()))
}

/// R-NMU: extract `rank` rank-one underapproximations, deflating after each.
pub fn nmu_recursive(s: ArrayView2<f64>, rank: usize, cfg: &SolverConfig) -> Result<FactorPair> {
    check_nonnegative(s)?;
    let (rows, cols) = s.dim();
    check_rank(rows, cols, rank)?;

    let mut residual = s.to_owned();
    let mut w = Array2::<f64>::zeros((rows, rank));
    let mut v = Array2::<f64>::zeros((rank, cols));
    for j in 0..rank {
        let step_cfg = SolverConfig {
            rng_seed: cfg.rng_seed.wrapping_add(j as u64),
            ..cfg.clone()
        };
        let (wj, vj) = nmu_rank1(residual.view(), &step_cfg)?;
        residual -= &outer(&wj, &vj);
        residual.mapv_inplace(|x| x.max(0.0));
        w.column_mut(j).assign(&wj);
        v.row_mut(j).assign(&vj);
    }
    Ok(FactorPair { w, v })
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a = a.view().insert_axis(Axis(1));
    let b = b.view().insert_axis(Axis(0));
    a.dot(&b)
}
