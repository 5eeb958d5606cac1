//! Shared multiplicative-update core.
//!
//! Lee-Seung Euclidean updates for `||T - WV||_F^2` with a non-negative
//! target `T`. Every iterate stays non-negative.

use ndarray::{Array2, ArrayView2, Zip};

use super::DENOMINATOR_FLOOR;

fn apply(factor: &mut Array2<f64>, numer: &Array2<f64>, denom: &Array2<f64>) {
    Zip::from(factor)
        .and(numer)
        .and(denom)
        .for_each(|f, &n, &d| *f *= n.max(0.0) / d.max(DENOMINATOR_FLOOR));
}

/// `W <- W * (T V^T) / (W V V^T)`
pub(crate) fn update_w(target: ArrayView2<f64>, w: &mut Array2<f64>, v: &Array2<f64>) {
    let numer = target.dot(&v.t());
    let denom = w.dot(&v.dot(&v.t()));
    apply(w, &numer, &denom);
}

/// `V <- V * (W^T T) / (W^T W V)`
pub(crate) fn update_v(target: ArrayView2<f64>, w: &Array2<f64>, v: &mut Array2<f64>) {
    let numer = w.t().dot(&target);
    let denom = w.t().dot(w).dot(&*v);
    apply(v, &numer, &denom);
}
