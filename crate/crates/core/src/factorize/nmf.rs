use ndarray::ArrayView2;

use super::mu::{update_v, update_w};
use super::{check_nonnegative, check_shapes, squared_residual, FactorPair, SolverConfig};
use crate::error::Result;

/// Result of an NMF run together with its objective history.
#[derive(Debug, Clone)]
pub struct NmfRun {
    pub factors: FactorPair,
    /// `||S - WV||_F^2`; entry 0 is the initial point, entry `t` follows sweep `t`.
    pub objective: Vec<f64>,
}

/// Euclidean NMF by alternating multiplicative updates.
pub fn nmf_multiplicative(
    s: ArrayView2<f64>,
    init: FactorPair,
    cfg: &SolverConfig,
) -> Result<FactorPair> {
    nmf_multiplicative_traced(s, init, cfg).map(|run| run.factors)
}

pub fn nmf_multiplicative_traced(
    s: ArrayView2<f64>,
    init: FactorPair,
    cfg: &SolverConfig,
) -> Result<NmfRun> {
    cfg.validate()?;
    check_shapes(s, &init)?;
    check_nonnegative(s)?;

    let FactorPair { mut w, mut v } = init;
    let mut objective = Vec::with_capacity(cfg.max_outer_iters + 1);
    objective.push(squared_residual(s, &w.dot(&v)));

    for _ in 0..cfg.max_outer_iters {
        update_w(s, &mut w, &v);
        update_v(s, &w, &mut v);
        let current = squared_residual(s, &w.dot(&v));
        let previous = *objective.last().expect("seeded with the initial objective");
        objective.push(current);
        if previous - current < cfg.rel_tol * previous {
            break;
        }
    }

    Ok(NmfRun {
        factors: FactorPair { w, v },
        objective,
    })
}
