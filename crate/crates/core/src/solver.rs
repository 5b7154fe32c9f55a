//! Per-pixel linear system assembly and its regularized solvers.
//!
//! Stacking the linearized displaced-frame-difference equation over a
//! neighborhood gives the observation model `z = G u + n` with an `N x 2`
//! gradient matrix `G`. The update is the ridge solution
//! `u = (G'G + L)^-1 G' z` where the regularization matrix
//! `L = diag(l1, l2)` is either fixed (Wiener) or selected by minimizing
//! the Generalized Cross-Validation score
//!
//! ```text
//! GCV(L) = (1/N) ||(I - A(L)) z||^2 / [(1/N) Tr{I - A(L)}]^2,
//! A(L)   = G (G'G + L)^-1 G'.
//! ```
//!
//! Because `A` has rank at most 2, both the residual and the trace reduce to
//! 2x2 arithmetic; the `N x N` influence matrix is never materialized.

use thiserror::Error;

use crate::imgseq::Frame;
use crate::interp::{self, GradientField};
use crate::masks::MIN_OBSERVATIONS;
use crate::Vec2;

/// Fixed regularization weight of the Wiener/LMMSE baseline, also the last
/// rung of the minimizer fallback ladder.
pub const WIENER_MU: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("degenerate neighborhood: {0} observations, need at least {MIN_OBSERVATIONS}")]
    DegenerateSystem(usize),
    #[error("singular normal matrix (rank-deficient gradients with zero regularization)")]
    Singular,
    #[error("GCV minimizer failed: no finite evaluation in the search box")]
    MinimizerFailed,
}

/// The stacked observation system for one pixel, mask and iterate.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    rows: Vec<[f64; 2]>,
    z: Vec<f64>,
}

impl LinearSystem {
    pub fn new(rows: Vec<[f64; 2]>, z: Vec<f64>) -> Result<Self, SolverError> {
        if rows.len() < MIN_OBSERVATIONS || rows.len() != z.len() {
            return Err(SolverError::DegenerateSystem(rows.len().min(z.len())));
        }
        Ok(LinearSystem { rows, z })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        false // N >= MIN_OBSERVATIONS by construction
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// `G'G` as `[g11, g12, g22]` and `G'z`.
    fn normal_parts(&self) -> ([f64; 3], [f64; 2]) {
        let mut gtg = [0.0; 3];
        let mut gtz = [0.0; 2];
        for (row, &zi) in self.rows.iter().zip(&self.z) {
            gtg[0] += row[0] * row[0];
            gtg[1] += row[0] * row[1];
            gtg[2] += row[1] * row[1];
            gtz[0] += row[0] * zi;
            gtz[1] += row[1] * zi;
        }
        (gtg, gtz)
    }
}

/// Diagonal regularization matrix `diag(l1, l2)`, entries nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegMatrix {
    l1: f64,
    l2: f64,
}

impl RegMatrix {
    pub fn diag(l1: f64, l2: f64) -> Self {
        assert!(
            l1.is_finite() && l2.is_finite() && l1 >= 0.0 && l2 >= 0.0,
            "regularization entries must be finite and nonnegative"
        );
        RegMatrix { l1, l2 }
    }

    pub fn scalar(l: f64) -> Self {
        Self::diag(l, l)
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }
}

/// Solves the symmetric 2x2 system `M x = b` by the adjugate formula,
/// guarding the determinant against the matrix scale.
fn solve_sym_2x2(m11: f64, m12: f64, m22: f64, b: [f64; 2]) -> Result<[f64; 2], SolverError> {
    let det = m11 * m22 - m12 * m12;
    let scale = m11.abs().max(m12.abs()).max(m22.abs());
    if scale == 0.0 || det.abs() <= 1e-12 * scale {
        return Err(SolverError::Singular);
    }
    Ok([
        (m22 * b[0] - m12 * b[1]) / det,
        (m11 * b[1] - m12 * b[0]) / det,
    ])
}

/// Builds the stacked system at the prediction `d_i`: for each neighborhood
/// position `p`, the observation is the negated DFD
/// `I_{k-1}(p - d_i) - I_k(p)` and the matching row holds the previous
/// frame's gradient sampled at `p - d_i`. With this pairing the model reads
/// `z = G u + n` where `u` is the correction toward the true displacement.
pub fn build_system(
    cur: &Frame,
    prev: &Frame,
    prev_grad: &GradientField,
    d_i: Vec2,
    positions: &[(usize, usize)],
) -> Result<LinearSystem, SolverError> {
    if positions.len() < MIN_OBSERVATIONS {
        return Err(SolverError::DegenerateSystem(positions.len()));
    }
    let mut rows = Vec::with_capacity(positions.len());
    let mut z = Vec::with_capacity(positions.len());
    for &p in positions {
        let sx = p.0 as f64 - d_i.x;
        let sy = p.1 as f64 - d_i.y;
        let (gx, gy) = interp::sample_gradient(prev_grad, sx, sy);
        rows.push([gx, gy]);
        z.push(interp::bilinear_sample(prev, sx, sy) - cur.getf(p.0, p.1));
    }
    LinearSystem::new(rows, z)
}

/// Regularized least-squares update `u = (G'G + L)^-1 G' z`.
pub fn rls_solve(sys: &LinearSystem, reg: RegMatrix) -> Result<Vec2, SolverError> {
    let (gtg, gtz) = sys.normal_parts();
    let u = solve_sym_2x2(gtg[0] + reg.l1, gtg[1], gtg[2] + reg.l2, gtz)?;
    Ok(Vec2::new(u[0], u[1]))
}

/// The Wiener/LMMSE baseline: RLS with the fixed matrix `mu * I`.
pub fn wiener_solve(sys: &LinearSystem, mu: f64) -> Result<Vec2, SolverError> {
    rls_solve(sys, RegMatrix::scalar(mu))
}

/// Residual energy `||(I - A)z||^2` and `Tr{I - A}` for the influence matrix
/// `A = G (G'G + L)^-1 G'`, both via 2x2 identities:
/// the residual is `z - G u` with `u` the RLS solution, and
/// `Tr{A} = Tr{(G'G + L)^-1 G'G}`.
pub fn influence_stats(sys: &LinearSystem, reg: RegMatrix) -> Result<(f64, f64), SolverError> {
    let (gtg, gtz) = sys.normal_parts();
    let m11 = gtg[0] + reg.l1;
    let m12 = gtg[1];
    let m22 = gtg[2] + reg.l2;
    let u = solve_sym_2x2(m11, m12, m22, gtz)?;

    let mut residual_sq = 0.0;
    for (row, &zi) in sys.rows.iter().zip(&sys.z) {
        let r = zi - (row[0] * u[0] + row[1] * u[1]);
        residual_sq += r * r;
    }

    // Tr{M^-1 B} for symmetric 2x2 M, B.
    let det = m11 * m22 - m12 * m12;
    let trace_a = (m22 * gtg[0] - 2.0 * m12 * gtg[1] + m11 * gtg[2]) / det;
    Ok((residual_sq, sys.len() as f64 - trace_a))
}

/// The GCV score `(1/N)||(I - A)z||^2 / [(1/N)Tr{I - A}]^2`; NaN when the
/// normal matrix is numerically singular, which minimizers treat as a failed
/// evaluation.
pub fn gcv_value(sys: &LinearSystem, reg: RegMatrix) -> f64 {
    match influence_stats(sys, reg) {
        Ok((residual_sq, trace)) => {
            let n = sys.len() as f64;
            (residual_sq / n) / (trace / n).powi(2)
        }
        Err(_) => f64::NAN,
    }
}

/// Search box and stopping rules for the GCV minimizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcvSearchParams {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Log-spaced coarse grid size for the scalar scan.
    pub grid_points: usize,
    /// Golden-section stops when the bracket's relative width is below this.
    pub golden_rel_tol: f64,
    /// Maximum coordinate-descent sweeps for the diagonal minimizer.
    pub sweeps: usize,
    /// Relative GCV improvement under which coordinate descent stops.
    pub sweep_tol: f64,
}

impl Default for GcvSearchParams {
    fn default() -> Self {
        GcvSearchParams {
            lambda_min: 1e-3,
            lambda_max: 1e6,
            grid_points: 28,
            golden_rel_tol: 1e-3,
            sweeps: 5,
            sweep_tol: 1e-6,
        }
    }
}

/// Golden-section minimization over `ln(lambda)` in `[lo, hi]`. Non-finite
/// evaluations count as +inf; exact ties prefer the larger lambda. Returns
/// the best evaluated point, never an unevaluated midpoint.
fn golden_min_log<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Option<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo.ln();
    let mut b = hi.ln();
    let mut best: Option<(f64, f64)> = None;
    let mut eval = |t: f64, best: &mut Option<(f64, f64)>| -> f64 {
        let lambda = t.exp();
        let v = f(lambda);
        if v.is_finite() {
            let better = match *best {
                None => true,
                Some((bl, bv)) => v < bv || (v == bv && lambda > bl),
            };
            if better {
                *best = Some((lambda, v));
            }
            v
        } else {
            f64::INFINITY
        }
    };

    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = eval(x1, &mut best);
    let mut f2 = eval(x2, &mut best);
    while b - a > rel_tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = eval(x1, &mut best);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = eval(x2, &mut best);
        }
    }
    best.map(|(l, v)| (l, v))
}

/// Scalar GCV minimization `L = lambda * I`: a coarse log-spaced grid scan
/// bracketing the best point, refined by golden section. Grid ties resolve
/// to the largest lambda (maximal smoothing of degenerate data).
pub fn minimize_gcv_scalar(
    sys: &LinearSystem,
    params: &GcvSearchParams,
) -> Result<RegMatrix, SolverError> {
    let n = params.grid_points.max(2);
    let lo = params.lambda_min.ln();
    let hi = params.lambda_max.ln();
    let step = (hi - lo) / (n - 1) as f64;

    let grid_lambda = |i: usize| {
        // Pin the endpoints so the box bounds are hit exactly.
        if i == 0 {
            params.lambda_min
        } else if i == n - 1 {
            params.lambda_max
        } else {
            (lo + step * i as f64).exp()
        }
    };

    let mut best: Option<(usize, f64, f64)> = None; // (index, lambda, value)
    for i in 0..n {
        let lambda = grid_lambda(i);
        let v = gcv_value(sys, RegMatrix::scalar(lambda));
        if v.is_finite() && best.map_or(true, |(_, _, bv)| v <= bv) {
            best = Some((i, lambda, v));
        }
    }
    let (bi, blambda, bvalue) = best.ok_or(SolverError::MinimizerFailed)?;

    // Refine inside the bracket formed by the best grid point's neighbors.
    let bracket_lo = grid_lambda(bi.saturating_sub(1));
    let bracket_hi = grid_lambda((bi + 1).min(n - 1));
    let refined = golden_min_log(
        |l| gcv_value(sys, RegMatrix::scalar(l)),
        bracket_lo,
        bracket_hi,
        params.golden_rel_tol,
    );
    let lambda = match refined {
        Some((l, v)) if v < bvalue => l,
        _ => blambda,
    };
    Ok(RegMatrix::scalar(lambda.max(params.lambda_min)))
}

/// Diagonal GCV minimization by coordinate descent from the scalar solution,
/// alternating golden-section passes over `l1` and `l2`. Each pass is
/// accepted only if it lowers the score, so the result is never worse than
/// the scalar start. Failures fall back down the ladder: diagonal to scalar
/// to the fixed Wiener weight.
pub fn minimize_gcv_diag(sys: &LinearSystem, params: &GcvSearchParams) -> RegMatrix {
    let scalar = match minimize_gcv_scalar(sys, params) {
        Ok(reg) => reg,
        Err(_) => return RegMatrix::scalar(WIENER_MU),
    };
    let mut l1 = scalar.l1();
    let mut l2 = scalar.l2();
    let mut current = gcv_value(sys, RegMatrix::diag(l1, l2));
    if !current.is_finite() {
        return scalar;
    }

    for _ in 0..params.sweeps {
        let before = current;
        if let Some((cand, v)) = golden_min_log(
            |l| gcv_value(sys, RegMatrix::diag(l, l2)),
            params.lambda_min,
            params.lambda_max,
            params.golden_rel_tol,
        ) {
            if v < current {
                l1 = cand;
                current = v;
            }
        }
        if let Some((cand, v)) = golden_min_log(
            |l| gcv_value(sys, RegMatrix::diag(l1, l)),
            params.lambda_min,
            params.lambda_max,
            params.golden_rel_tol,
        ) {
            if v < current {
                l2 = cand;
                current = v;
            }
        }
        if before - current <= params.sweep_tol * before.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    RegMatrix::diag(l1.max(params.lambda_min), l2.max(params.lambda_min))
}
