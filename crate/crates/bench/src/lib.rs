//! Fixtures shared by the benchmarks.

use divbandit_core::geometry::{HalfspaceConstraint, Polytope, Sense};
use divbandit_core::lp::{LpRow, RowSense};

/// `{p : p_1 ≥ ell, p_2 ≥ ell}` on three arms.
pub fn two_floor_polytope(ell: f64) -> Polytope {
    Polytope::group(3, &[vec![0], vec![1]], &[ell, ell], &[1.0, 1.0]).expect("valid polytope")
}

/// Pairwise caps `p_a + p_{a+1} ≤ 0.6` on `k` arms; its vertex count grows
/// with `k`, which makes it a useful enumeration workload.
pub fn chain_polytope(k: usize) -> Polytope {
    let constraints = (0..k - 1)
        .map(|a| {
            let mut c = vec![0.0; k];
            c[a] = 1.0;
            c[a + 1] = 1.0;
            HalfspaceConstraint::new(c, Sense::Le, 0.6).expect("finite coefficients")
        })
        .collect();
    Polytope::from_constraints(k, constraints).expect("valid polytope")
}

/// A dense covering LP `min c·n s.t. A n ≥ 1` with `m` rows and `n` columns.
pub fn covering_lp(m: usize, n: usize) -> (Vec<f64>, Vec<LpRow>) {
    let cost = (0..n).map(|j| 1.0 + (j % 7) as f64 / 7.0).collect();
    let rows = (0..m)
        .map(|i| {
            let coeffs = (0..n)
                .map(|j| ((i * 31 + j * 17) % 11) as f64 / 10.0)
                .collect();
            LpRow::new(coeffs, RowSense::Ge, 1.0)
        })
        .collect();
    (cost, rows)
}
