//! Property suite for the GCV machinery, checked against brute-force
//! oracles that build the full N x N influence matrix and refit
//! leave-one-out systems from scratch.

use gcvflow_core::solver::{
    gcv_value, influence_stats, rls_solve, LinearSystem, RegMatrix,
};
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// Test-local linear algebra, independent of the solver's 2x2 shortcuts.
// ---------------------------------------------------------------------------

/// 2x2 solve by explicit inversion; the oracle's own copy.
fn solve2(m: [[f64; 2]; 2], b: [f64; 2]) -> [f64; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    assert!(det.abs() > 1e-300, "oracle system is singular");
    [
        (m[1][1] * b[0] - m[0][1] * b[1]) / det,
        (m[0][0] * b[1] - m[1][0] * b[0]) / det,
    ]
}

/// Full influence matrix A = G (G'G + L)^-1 G', materialized.
fn full_influence(rows: &[[f64; 2]], reg: (f64, f64)) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut gtg = [[0.0f64; 2]; 2];
    for r in rows {
        gtg[0][0] += r[0] * r[0];
        gtg[0][1] += r[0] * r[1];
        gtg[1][0] += r[1] * r[0];
        gtg[1][1] += r[1] * r[1];
    }
    let m = [
        [gtg[0][0] + reg.0, gtg[0][1]],
        [gtg[1][0], gtg[1][1] + reg.1],
    ];
    // columns of M^-1 via two solves
    let inv_c0 = solve2(m, [1.0, 0.0]);
    let inv_c1 = solve2(m, [0.0, 1.0]);
    let minv = [[inv_c0[0], inv_c1[0]], [inv_c0[1], inv_c1[1]]];
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..2 {
                for q in 0..2 {
                    acc += rows[i][p] * minv[p][q] * rows[j][q];
                }
            }
            a[i][j] = acc;
        }
    }
    a
}

/// RLS fit of the system with row `skip` deleted, evaluated at row `skip`.
fn loo_prediction(rows: &[[f64; 2]], z: &[f64], lambda: f64, skip: usize) -> f64 {
    let mut gtg = [[0.0f64; 2]; 2];
    let mut gtz = [0.0f64; 2];
    for (i, (r, &zi)) in rows.iter().zip(z).enumerate() {
        if i == skip {
            continue;
        }
        gtg[0][0] += r[0] * r[0];
        gtg[0][1] += r[0] * r[1];
        gtg[1][0] += r[1] * r[0];
        gtg[1][1] += r[1] * r[1];
        gtz[0] += r[0] * zi;
        gtz[1] += r[1] * zi;
    }
    let m = [
        [gtg[0][0] + lambda, gtg[0][1]],
        [gtg[1][0], gtg[1][1] + lambda],
    ];
    let u = solve2(m, gtz);
    rows[skip][0] * u[0] + rows[skip][1] * u[1]
}

/// Gram-Schmidt orthonormalization of a random square matrix; None when the
/// draw is too close to singular to normalize safely.
fn orthonormalize(raw: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = raw.len();
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    for row in raw {
        let mut v = row.clone();
        for existing in &q {
            let dot: f64 = v.iter().zip(existing).map(|(a, b)| a * b).sum();
            for (vi, ei) in v.iter_mut().zip(existing) {
                *vi -= dot * ei;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            return None;
        }
        for vi in &mut v {
            *vi /= norm;
        }
        q.push(v);
    }
    Some(q)
}

fn apply(mat: &[Vec<f64>], rows: &[[f64; 2]], z: &[f64]) -> (Vec<[f64; 2]>, Vec<f64>) {
    let n = z.len();
    let mut out_rows = vec![[0.0; 2]; n];
    let mut out_z = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            out_rows[i][0] += mat[i][j] * rows[j][0];
            out_rows[i][1] += mat[i][j] * rows[j][1];
            out_z[i] += mat[i][j] * z[j];
        }
    }
    (out_rows, out_z)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

fn system_strategy(
    n_range: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<f64>)> {
    n_range.prop_flat_map(|n| {
        (
            prop::collection::vec(
                (-20.0..20.0f64, -20.0..20.0f64).prop_map(|(a, b)| [a, b]),
                n,
            ),
            prop::collection::vec(-30.0..30.0f64, n),
        )
    })
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 100,
        ..ProptestConfig::default()
    }
}

// ---------------------------------------------------------------------------
// Properties
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(config())]

    /// GCV is invariant under orthonormal transforms of (G, z).
    #[test]
    fn gcv_orthonormal_invariance(
        (rows, z) in system_strategy(4..=9),
        raw in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 9), 9),
        l1 in 1e-3..1e4f64,
        l2 in 1e-3..1e4f64,
    ) {
        let n = z.len();
        let square: Vec<Vec<f64>> = raw.iter().take(n).map(|r| r[..n].to_vec()).collect();
        let gamma = match orthonormalize(&square) {
            Some(g) => g,
            None => return Ok(()), // singular draw, skip
        };
        let (t_rows, t_z) = apply(&gamma, &rows, &z);

        let sys = LinearSystem::new(rows, z).unwrap();
        let t_sys = LinearSystem::new(t_rows, t_z).unwrap();
        let reg = RegMatrix::diag(l1, l2);
        let a = gcv_value(&sys, reg);
        let b = gcv_value(&t_sys, reg);
        prop_assert!(rel_close(a, b, 1e-9), "{a} vs {b}");
    }

    /// The ridge leave-one-out identity:
    /// z_i - (A z)_i == (1 - a_ii) (z_i - LOO prediction at i).
    #[test]
    fn leave_one_out_identity(
        (rows, z) in system_strategy(4..=9),
        lambda in 1e-2..1e4f64,
    ) {
        let a = full_influence(&rows, (lambda, lambda));
        let n = z.len();
        for i in 0..n {
            let az_i: f64 = (0..n).map(|j| a[i][j] * z[j]).sum();
            let lhs = z[i] - az_i;
            let rhs = (1.0 - a[i][i]) * (z[i] - loo_prediction(&rows, &z, lambda, i));
            prop_assert!(rel_close(lhs, rhs, 1e-9), "row {i}: {lhs} vs {rhs}");
        }
    }

    /// N - 2 <= Tr{I - A} <= N for any nonnegative regularization.
    #[test]
    fn trace_bounds_hold(
        (rows, z) in system_strategy(3..=9),
        l1 in 1e-6..1e6f64,
        l2 in 1e-6..1e6f64,
    ) {
        let sys = LinearSystem::new(rows, z).unwrap();
        let n = sys.len() as f64;
        let (_, tr) = influence_stats(&sys, RegMatrix::diag(l1, l2)).unwrap();
        prop_assert!(tr >= n - 2.0 - 1e-9 && tr <= n + 1e-9, "trace {tr} outside [{}, {n}]", n - 2.0);
    }

    /// ||u(lambda)|| is non-increasing along an ascending lambda grid.
    #[test]
    fn shrinkage_is_monotone(
        (rows, z) in system_strategy(3..=9),
    ) {
        let sys = LinearSystem::new(rows, z).unwrap();
        let mut prev_norm = f64::INFINITY;
        for k in 0..40 {
            let lambda = 10f64.powf(-3.0 + 9.0 * k as f64 / 39.0);
            let u = rls_solve(&sys, RegMatrix::scalar(lambda)).unwrap();
            let norm = u.norm();
            prop_assert!(
                norm <= prev_norm * (1.0 + 1e-12) + 1e-300,
                "lambda {lambda}: {norm} > {prev_norm}"
            );
            prev_norm = norm;
        }
    }

    /// The 2x2-identity influence stats equal the materialized N x N ones.
    #[test]
    fn influence_shortcut_matches_brute_force(
        (rows, z) in system_strategy(3..=9),
        l1 in 1e-3..1e5f64,
        l2 in 1e-3..1e5f64,
    ) {
        let sys = LinearSystem::new(rows.clone(), z.clone()).unwrap();
        let (res, tr) = influence_stats(&sys, RegMatrix::diag(l1, l2)).unwrap();

        let a = full_influence(&rows, (l1, l2));
        let n = z.len();
        let mut brute_res = 0.0;
        let mut brute_tr = 0.0;
        for i in 0..n {
            let az_i: f64 = (0..n).map(|j| a[i][j] * z[j]).sum();
            let r = z[i] - az_i;
            brute_res += r * r;
            brute_tr += 1.0 - a[i][i];
        }
        prop_assert!(rel_close(res, brute_res, 1e-9), "residual {res} vs {brute_res}");
        prop_assert!(rel_close(tr, brute_tr, 1e-9), "trace {tr} vs {brute_tr}");
    }
}
