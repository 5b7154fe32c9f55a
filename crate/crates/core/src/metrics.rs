//! Flow-quality metrics: component MSE and bias against ground truth,
//! mean-squared plain and displaced frame differences, and the improvement
//! in motion compensation in decibels.
//!
//! All reductions run over the entire frame, borders and static pixels
//! included, in fixed raster order. The displaced frame difference warps the
//! previous frame with the same clamped bilinear sampler the estimator uses,
//! so metric and objective agree.

use std::fmt::Write as _;

use thiserror::Error;

use crate::imgseq::{FlowField, Frame, Sequence};
use crate::interp;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("flow count {got} does not match frame pair count {want}")]
    FlowCountMismatch { got: usize, want: usize },
    #[error("IMC undefined: both frame difference and displaced difference are zero")]
    UndefinedImc,
}

fn check_dims(
    (aw, ah): (usize, usize),
    (bw, bh): (usize, usize),
) -> Result<(), MetricsError> {
    if (aw, ah) != (bw, bh) {
        return Err(MetricsError::DimensionMismatch(aw, ah, bw, bh));
    }
    Ok(())
}

/// Component-wise mean squared error between estimate and truth.
pub fn mse(est: &FlowField, truth: &FlowField) -> Result<(f64, f64), MetricsError> {
    check_dims((est.width(), est.height()), (truth.width(), truth.height()))?;
    let n = est.dx().len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for i in 0..est.dx().len() {
        let ex = truth.dx()[i] - est.dx()[i];
        let ey = truth.dy()[i] - est.dy()[i];
        sx += ex * ex;
        sy += ey * ey;
    }
    Ok((sx / n, sy / n))
}

/// Mean signed error, true value minus estimate, per component.
pub fn bias(est: &FlowField, truth: &FlowField) -> Result<(f64, f64), MetricsError> {
    check_dims((est.width(), est.height()), (truth.width(), truth.height()))?;
    let n = est.dx().len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for i in 0..est.dx().len() {
        sx += truth.dx()[i] - est.dx()[i];
        sy += truth.dy()[i] - est.dy()[i];
    }
    Ok((sx / n, sy / n))
}

/// Mean squared plain frame difference over one pair.
pub fn mean_sq_fd(cur: &Frame, prev: &Frame) -> Result<f64, MetricsError> {
    check_dims((cur.width(), cur.height()), (prev.width(), prev.height()))?;
    Ok(sum_sq_fd(cur, prev) / cur.samples().len() as f64)
}

fn sum_sq_fd(cur: &Frame, prev: &Frame) -> f64 {
    cur.samples()
        .iter()
        .zip(prev.samples())
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum()
}

fn sum_sq_dfd(cur: &Frame, prev: &Frame, flow: &FlowField) -> f64 {
    let mut sum = 0.0;
    for y in 0..cur.height() {
        for x in 0..cur.width() {
            let (dx, dy) = flow.get(x, y);
            let warped = interp::bilinear_sample(prev, x as f64 - dx, y as f64 - dy);
            let d = cur.getf(x, y) - warped;
            sum += d * d;
        }
    }
    sum
}

fn check_sequence(seq: &Sequence, flows: &[FlowField]) -> Result<(), MetricsError> {
    if flows.len() != seq.len() - 1 {
        return Err(MetricsError::FlowCountMismatch {
            got: flows.len(),
            want: seq.len() - 1,
        });
    }
    for f in flows {
        check_dims((f.width(), f.height()), (seq.width(), seq.height()))?;
    }
    Ok(())
}

/// Mean squared displaced frame difference over the whole sequence:
/// the warped prediction error summed over every pair and pixel, divided by
/// `R*C*(K-1)`.
pub fn mean_sq_dfd(seq: &Sequence, flows: &[FlowField]) -> Result<f64, MetricsError> {
    check_sequence(seq, flows)?;
    let mut sum = 0.0;
    for (k, flow) in flows.iter().enumerate() {
        sum += sum_sq_dfd(&seq.frames()[k + 1], &seq.frames()[k], flow);
    }
    Ok(sum / (seq.width() * seq.height() * flows.len()) as f64)
}

/// Improvement in motion compensation over the sequence, in decibels:
/// `10 log10(sum FD^2 / sum DFD^2)` with both sums taken over every pair and
/// pixel. Perfect registration of a changing sequence yields `+inf`; a fully
/// static sequence under zero flow has no defined ratio and errors.
pub fn imc_db(seq: &Sequence, flows: &[FlowField]) -> Result<f64, MetricsError> {
    check_sequence(seq, flows)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, flow) in flows.iter().enumerate() {
        let (cur, prev) = (&seq.frames()[k + 1], &seq.frames()[k]);
        num += sum_sq_fd(cur, prev);
        den += sum_sq_dfd(cur, prev, flow);
    }
    if den == 0.0 {
        if num == 0.0 {
            return Err(MetricsError::UndefinedImc);
        }
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (num / den).log10())
}

/// Per-pair breakdown entry of a [`MetricsReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats {
    /// Mean squared frame difference of the pair.
    pub fd2: f64,
    /// Mean squared displaced frame difference of the pair.
    pub dfd2: f64,
    /// Pairwise improvement in motion compensation, dB.
    pub imc_db: f64,
}

/// All metrics of one estimation run; MSE and bias are present only when
/// ground truth was supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mse_x: Option<f64>,
    pub mse_y: Option<f64>,
    pub bias_x: Option<f64>,
    pub bias_y: Option<f64>,
    pub mean_sq_dfd: f64,
    pub mean_sq_fd: f64,
    pub imc_db: f64,
    pub per_frame: Vec<PairStats>,
}

/// Evaluates a run. `truth` must hold one field per frame pair when present;
/// truth-dependent rows average the per-pair values over the sequence.
pub fn build_report(
    seq: &Sequence,
    flows: &[FlowField],
    truth: Option<&[FlowField]>,
) -> Result<MetricsReport, MetricsError> {
    check_sequence(seq, flows)?;
    let mut per_frame = Vec::with_capacity(flows.len());
    for (k, flow) in flows.iter().enumerate() {
        let (cur, prev) = (&seq.frames()[k + 1], &seq.frames()[k]);
        let n = (seq.width() * seq.height()) as f64;
        let fd2 = sum_sq_fd(cur, prev) / n;
        let dfd2 = sum_sq_dfd(cur, prev, flow) / n;
        let pair_imc = if dfd2 == 0.0 {
            f64::INFINITY
        } else {
            10.0 * (fd2 / dfd2).log10()
        };
        per_frame.push(PairStats {
            fd2,
            dfd2,
            imc_db: pair_imc,
        });
    }

    let (mut mse_x, mut mse_y, mut bias_x, mut bias_y) = (None, None, None, None);
    if let Some(truth) = truth {
        if truth.len() != flows.len() {
            return Err(MetricsError::FlowCountMismatch {
                got: truth.len(),
                want: flows.len(),
            });
        }
        let (mut sx, mut sy, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0);
        for (flow, t) in flows.iter().zip(truth) {
            let (mx, my) = mse(flow, t)?;
            let (ax, ay) = bias(flow, t)?;
            sx += mx;
            sy += my;
            bx += ax;
            by += ay;
        }
        let k = flows.len() as f64;
        mse_x = Some(sx / k);
        mse_y = Some(sy / k);
        bias_x = Some(bx / k);
        bias_y = Some(by / k);
    }

    Ok(MetricsReport {
        mse_x,
        mse_y,
        bias_x,
        bias_y,
        mean_sq_dfd: mean_sq_dfd(seq, flows)?,
        mean_sq_fd: flows
            .iter()
            .enumerate()
            .map(|(k, _)| sum_sq_fd(&seq.frames()[k + 1], &seq.frames()[k]))
            .sum::<f64>()
            / (seq.width() * seq.height() * flows.len()) as f64,
        imc_db: imc_db(seq, flows)?,
        per_frame,
    })
}

fn fmt_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.4}")
    }
}

/// CSV sentinel for an infinite IMC.
fn csv_db(v: f64) -> String {
    if v == f64::INFINITY {
        "999.0".into()
    } else if v == f64::NEG_INFINITY {
        "-999.0".into()
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4}"))
}

/// Fixed-width comparison table, metrics as rows and variants as columns.
/// Truth-dependent rows are omitted when no column carries them.
pub fn render_table(columns: &[(String, MetricsReport)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10}", "");
    for (name, _) in columns {
        let _ = write!(out, "{name:>12}");
    }
    out.push('\n');
    let has_truth = columns.iter().any(|(_, r)| r.mse_x.is_some());
    let mut row = |label: &str, cells: Vec<String>| {
        let _ = write!(out, "{label:<10}");
        for c in cells {
            let _ = write!(out, "{c:>12}");
        }
        out.push('\n');
    };
    if has_truth {
        row("MSE_x", columns.iter().map(|(_, r)| opt(r.mse_x)).collect());
        row("MSE_y", columns.iter().map(|(_, r)| opt(r.mse_y)).collect());
        row("bias_x", columns.iter().map(|(_, r)| opt(r.bias_x)).collect());
        row("bias_y", columns.iter().map(|(_, r)| opt(r.bias_y)).collect());
    }
    row(
        "IMC(dB)",
        columns.iter().map(|(_, r)| fmt_db(r.imc_db)).collect(),
    );
    row(
        "DFD2",
        columns
            .iter()
            .map(|(_, r)| format!("{:.4}", r.mean_sq_dfd))
            .collect(),
    );
    out
}

/// The same table as CSV, `metric` first column, one column per variant.
pub fn render_csv(columns: &[(String, MetricsReport)]) -> String {
    let mut out = String::from("metric");
    for (name, _) in columns {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    let has_truth = columns.iter().any(|(_, r)| r.mse_x.is_some());
    let mut row = |label: &str, cells: Vec<String>| {
        out.push_str(label);
        for c in cells {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    };
    let plain = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
    if has_truth {
        row("mse_x", columns.iter().map(|(_, r)| plain(r.mse_x)).collect());
        row("mse_y", columns.iter().map(|(_, r)| plain(r.mse_y)).collect());
        row("bias_x", columns.iter().map(|(_, r)| plain(r.bias_x)).collect());
        row("bias_y", columns.iter().map(|(_, r)| plain(r.bias_y)).collect());
    }
    row(
        "imc_db",
        columns.iter().map(|(_, r)| csv_db(r.imc_db)).collect(),
    );
    row(
        "dfd2",
        columns
            .iter()
            .map(|(_, r)| format!("{}", r.mean_sq_dfd))
            .collect(),
    );
    out
}
