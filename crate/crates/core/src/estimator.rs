//! The pel-recursive driver: per-pixel iterative displacement refinement
//! with neighborhood-mask cycling, convergence tests and fallbacks, plus
//! whole-frame and whole-sequence orchestration.
//!
//! Five variants share the loop and differ in the regularizer and mask list:
//!
//! | variant  | regularization              | masks |
//! |----------|-----------------------------|-------|
//! | `wiener` | fixed `mu * I`              | m0    |
//! | `lscrv`  | GCV scalar `lambda * I`     | m0    |
//! | `lscrvb` | GCV scalar `lambda * I`     | all 9 |
//! | `lscrv1` | GCV diagonal `(l1, l2)`     | m0    |
//! | `lscrv2` | GCV diagonal `(l1, l2)`     | all 9 |
//!
//! Each mask trial restarts from the initial displacement so every geometry
//! gets an independent hypothesis test; convergence ends the pixel, otherwise
//! the smallest-|DFD| candidate across trials is kept when it beats zero
//! displacement.

use rayon::prelude::*;
use thiserror::Error;

use crate::imgseq::{FlowField, Frame, Sequence};
use crate::interp::{self, GradientField, InterpError};
use crate::masks::{self, MaskTemplate, MIN_OBSERVATIONS};
use crate::solver::{self, GcvSearchParams, RegMatrix, WIENER_MU};
use crate::Vec2;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("frame sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("external initialization requires a prior flow field")]
    MissingPrior,
    #[error("prior flow field is {0}x{1}, frames are {2}x{3}")]
    PriorSizeMismatch(usize, usize, usize, usize),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

/// The five algorithm variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Wiener,
    Lscrv,
    Lscrvb,
    Lscrv1,
    Lscrv2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Wiener,
        Algorithm::Lscrv,
        Algorithm::Lscrvb,
        Algorithm::Lscrv1,
        Algorithm::Lscrv2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Wiener => "wiener",
            Algorithm::Lscrv => "lscrv",
            Algorithm::Lscrvb => "lscrvb",
            Algorithm::Lscrv1 => "lscrv1",
            Algorithm::Lscrv2 => "lscrv2",
        }
    }

    /// Number of neighborhood masks the variant cycles through.
    pub fn mask_count(self) -> usize {
        match self {
            Algorithm::Wiener | Algorithm::Lscrv | Algorithm::Lscrv1 => 1,
            Algorithm::Lscrvb | Algorithm::Lscrv2 => 9,
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wiener" => Ok(Algorithm::Wiener),
            "lscrv" => Ok(Algorithm::Lscrv),
            "lscrvb" => Ok(Algorithm::Lscrvb),
            "lscrv1" => Ok(Algorithm::Lscrv1),
            "lscrv2" => Ok(Algorithm::Lscrv2),
            other => Err(format!(
                "unknown algorithm {other:?}, expected one of wiener|lscrv|lscrvb|lscrv1|lscrv2"
            )),
        }
    }
}

/// Where each pixel's starting displacement comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Final displacement of the nearest preceding non-static neighbor in
    /// scan order: left if available, else above, else zero. Sequential by
    /// contract.
    Causal,
    /// Zero start everywhere; safe for parallel execution.
    Zero,
    /// Start from a caller-supplied prior field; safe for parallel execution.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub algorithm: Algorithm,
    /// `T`: |DFD| below this counts as registered, in gray levels.
    pub dfd_threshold: f64,
    /// Moving-area gate: pixels whose plain frame difference is at or below
    /// this are marked static and skipped.
    pub move_threshold: f64,
    /// Update-norm convergence threshold, pixels.
    pub update_epsilon: f64,
    /// Iteration budget per mask trial.
    pub max_iterations: usize,
    /// Wiener regularization weight.
    pub mu: f64,
    pub init_mode: InitMode,
    pub search: GcvSearchParams,
    /// Optional cap on the variant's mask list (prefix of the trial order).
    pub max_masks: Option<usize>,
    /// Chebyshev bound on |d|; exceeding it aborts the mask trial.
    pub max_displacement: f64,
    /// Process pixels concurrently; requires a scan-order-independent init.
    pub parallel: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            algorithm: Algorithm::Wiener,
            dfd_threshold: 3.0,
            move_threshold: 3.0,
            update_epsilon: 0.01,
            max_iterations: 10,
            mu: WIENER_MU,
            init_mode: InitMode::Causal,
            search: GcvSearchParams::default(),
            max_masks: None,
            max_displacement: 15.0,
            parallel: false,
        }
    }
}

impl EstimatorConfig {
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        EstimatorConfig {
            algorithm,
            ..Default::default()
        }
    }

    /// The mask prefix this configuration actually cycles through.
    pub fn effective_masks(&self) -> Vec<MaskTemplate> {
        let n = self
            .algorithm
            .mask_count()
            .min(self.max_masks.unwrap_or(usize::MAX))
            .max(1);
        let mut set = masks::mask_set();
        set.truncate(n);
        set
    }
}

/// Outcome label for one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelStatus {
    /// Skipped by the moving-area gate.
    Static,
    /// A mask trial met both stopping tests.
    Converged,
    /// No trial converged; the stored displacement is the best-|DFD|
    /// candidate or zero, whichever registers better.
    FallbackZero,
}

/// Result of estimating a single pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelResult {
    pub d: Vec2,
    pub status: PixelStatus,
    /// Mask that produced the stored displacement.
    pub mask_id: u8,
    /// Iterations consumed across all mask trials.
    pub iterations: usize,
    /// |DFD| at the stored displacement.
    pub final_dfd: f64,
}

/// Per-pixel status labels of one frame pair, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatusMap {
    width: usize,
    height: usize,
    cells: Vec<PixelStatus>,
}

impl StatusMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> PixelStatus {
        self.cells[y * self.width + x]
    }

    pub fn cells(&self) -> &[PixelStatus] {
        &self.cells
    }

    /// `(static, converged, fallback)` pixel counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for s in &self.cells {
            match s {
                PixelStatus::Static => c.0 += 1,
                PixelStatus::Converged => c.1 += 1,
                PixelStatus::FallbackZero => c.2 += 1,
            }
        }
        c
    }
}

fn select_regularizer(
    sys: &solver::LinearSystem,
    cfg: &EstimatorConfig,
) -> RegMatrix {
    match cfg.algorithm {
        Algorithm::Wiener => RegMatrix::scalar(cfg.mu),
        Algorithm::Lscrv | Algorithm::Lscrvb => {
            solver::minimize_gcv_scalar(sys, &cfg.search)
                .unwrap_or_else(|_| RegMatrix::scalar(WIENER_MU))
        }
        Algorithm::Lscrv1 | Algorithm::Lscrv2 => solver::minimize_gcv_diag(sys, &cfg.search),
    }
}

/// Runs the per-pixel recursion at `r` starting from `d0`, cycling through
/// `mask_list`. Always yields a defined result.
pub fn estimate_pixel(
    cur: &Frame,
    prev: &Frame,
    prev_grad: &GradientField,
    r: (usize, usize),
    d0: Vec2,
    cfg: &EstimatorConfig,
    mask_list: &[MaskTemplate],
) -> PixelResult {
    let t = cfg.dfd_threshold;
    let start_dfd = interp::dfd(cur, prev, r, d0).abs();
    if start_dfd < t {
        return PixelResult {
            d: d0,
            status: PixelStatus::Converged,
            mask_id: mask_list.first().map_or(0, |m| m.id()),
            iterations: 0,
            final_dfd: start_dfd,
        };
    }

    let (w, h) = (cur.width(), cur.height());
    let mut total_iterations = 0usize;
    let mut best: Option<(Vec2, f64, u8)> = None;

    for mask in mask_list {
        let positions = masks::gather(mask, r, w, h);
        if positions.len() < MIN_OBSERVATIONS {
            continue;
        }
        let mut d = d0;
        for _ in 0..cfg.max_iterations {
            let sys = match solver::build_system(cur, prev, prev_grad, d, &positions) {
                Ok(s) => s,
                Err(_) => break,
            };
            let reg = select_regularizer(&sys, cfg);
            let u = match solver::rls_solve(&sys, reg) {
                Ok(u) => u,
                Err(_) => break,
            };
            let stepped = d + u;
            if stepped.norm_inf() > cfg.max_displacement {
                break; // runaway update; the trial counts as non-converged
            }
            d = stepped;
            total_iterations += 1;
            if u.norm() <= cfg.update_epsilon {
                let now_dfd = interp::dfd(cur, prev, r, d).abs();
                if now_dfd < t {
                    return PixelResult {
                        d,
                        status: PixelStatus::Converged,
                        mask_id: mask.id(),
                        iterations: total_iterations,
                        final_dfd: now_dfd,
                    };
                }
                if u.norm() == 0.0 {
                    break; // exact fixed point, further iterations are no-ops
                }
            }
        }
        let trial_dfd = interp::dfd(cur, prev, r, d).abs();
        if best.map_or(true, |(_, b, _)| trial_dfd < b) {
            best = Some((d, trial_dfd, mask.id()));
        }
    }

    // No trial converged: keep the best candidate only if it registers
    // better than staying put.
    let zero_dfd = interp::dfd(cur, prev, r, Vec2::ZERO).abs();
    match best {
        Some((d, bdfd, mask_id)) if bdfd < zero_dfd => PixelResult {
            d,
            status: PixelStatus::FallbackZero,
            mask_id,
            iterations: total_iterations,
            final_dfd: bdfd,
        },
        other => PixelResult {
            d: Vec2::ZERO,
            status: PixelStatus::FallbackZero,
            mask_id: other.map_or(mask_list.first().map_or(0, |m| m.id()), |b| b.2),
            iterations: total_iterations,
            final_dfd: zero_dfd,
        },
    }
}

/// Estimates the dense field registering `cur` against `prev`.
pub fn estimate_frame_pair(
    cur: &Frame,
    prev: &Frame,
    cfg: &EstimatorConfig,
) -> Result<(FlowField, StatusMap), EstimatorError> {
    estimate_frame_pair_with_prior(cur, prev, cfg, None)
}

/// As [`estimate_frame_pair`], with an optional prior field required by
/// [`InitMode::External`].
pub fn estimate_frame_pair_with_prior(
    cur: &Frame,
    prev: &Frame,
    cfg: &EstimatorConfig,
    prior: Option<&FlowField>,
) -> Result<(FlowField, StatusMap), EstimatorError> {
    let (w, h) = (cur.width(), cur.height());
    if (prev.width(), prev.height()) != (w, h) {
        return Err(EstimatorError::SizeMismatch(
            w,
            h,
            prev.width(),
            prev.height(),
        ));
    }
    if cfg.init_mode == InitMode::External {
        let p = prior.ok_or(EstimatorError::MissingPrior)?;
        if (p.width(), p.height()) != (w, h) {
            return Err(EstimatorError::PriorSizeMismatch(
                p.width(),
                p.height(),
                w,
                h,
            ));
        }
    }
    let grad = interp::gradient_field(prev)?;
    let mask_list = cfg.effective_masks();

    let run_pixel = |x: usize, y: usize, d0: Vec2| -> (Vec2, PixelStatus) {
        let fd = (cur.getf(x, y) - prev.getf(x, y)).abs();
        if fd <= cfg.move_threshold {
            return (Vec2::ZERO, PixelStatus::Static);
        }
        let res = estimate_pixel(cur, prev, &grad, (x, y), d0, cfg, &mask_list);
        (res.d, res.status)
    };

    let mut flow = FlowField::zeros(w, h);
    let mut cells = vec![PixelStatus::Static; w * h];

    let parallel_ok = cfg.parallel && cfg.init_mode != InitMode::Causal;
    if parallel_ok {
        let results: Vec<(Vec2, PixelStatus)> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let d0 = match cfg.init_mode {
                    InitMode::Zero | InitMode::Causal => Vec2::ZERO,
                    InitMode::External => {
                        let (dx, dy) = prior.expect("validated above").get(x, y);
                        Vec2::new(dx, dy)
                    }
                };
                run_pixel(x, y, d0)
            })
            .collect();
        for (i, (d, status)) in results.into_iter().enumerate() {
            flow.set(i % w, i / w, d.x, d.y);
            cells[i] = status;
        }
    } else {
        for y in 0..h {
            for x in 0..w {
                let d0 = match cfg.init_mode {
                    InitMode::Zero => Vec2::ZERO,
                    InitMode::External => {
                        let (dx, dy) = prior.expect("validated above").get(x, y);
                        Vec2::new(dx, dy)
                    }
                    InitMode::Causal => causal_init(&flow, &cells, w, x, y),
                };
                let (d, status) = run_pixel(x, y, d0);
                flow.set(x, y, d.x, d.y);
                cells[y * w + x] = status;
            }
        }
    }

    Ok((
        flow,
        StatusMap {
            width: w,
            height: h,
            cells,
        },
    ))
}

fn causal_init(
    flow: &FlowField,
    cells: &[PixelStatus],
    width: usize,
    x: usize,
    y: usize,
) -> Vec2 {
    if x > 0 && cells[y * width + x - 1] != PixelStatus::Static {
        let (dx, dy) = flow.get(x - 1, y);
        return Vec2::new(dx, dy);
    }
    if y > 0 && cells[(y - 1) * width + x] != PixelStatus::Static {
        let (dx, dy) = flow.get(x, y - 1);
        return Vec2::new(dx, dy);
    }
    Vec2::ZERO
}

/// Estimates every consecutive pair of the sequence independently, yielding
/// `K - 1` fields with their status maps.
pub fn estimate_sequence(
    seq: &Sequence,
    cfg: &EstimatorConfig,
) -> Result<Vec<(FlowField, StatusMap)>, EstimatorError> {
    let pairs: Vec<(&Frame, &Frame)> = seq
        .frames()
        .windows(2)
        .map(|w| (&w[1], &w[0]))
        .collect();
    if cfg.parallel {
        pairs
            .into_par_iter()
            .map(|(cur, prev)| estimate_frame_pair(cur, prev, cfg))
            .collect()
    } else {
        pairs
            .into_iter()
            .map(|(cur, prev)| estimate_frame_pair(cur, prev, cfg))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::gradient_field;

    /// Smoothly textured frame with full-rank local structure.
    fn textured(w: usize, h: usize) -> Frame {
        let samples: Vec<u8> = (0..h)
            .flat_map(|y| {
                (0..w).map(move |x| {
                    let v = 90.0
                        + 60.0 * ((x as f64) * 0.55).sin()
                        + 50.0 * ((y as f64) * 0.45).cos()
                        + 20.0 * ((x as f64) * 0.2 + (y as f64) * 0.3).sin();
                    v.round().clamp(0.0, 255.0) as u8
                })
            })
            .collect();
        Frame::new(w, h, samples).unwrap()
    }

    fn shifted(frame: &Frame, dx: i64, dy: i64) -> Frame {
        let (w, h) = (frame.width(), frame.height());
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let sx = (x as i64 - dx).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 - dy).clamp(0, h as i64 - 1) as usize;
                out[y * w + x] = frame.get(sx, sy);
            }
        }
        Frame::new(w, h, out).unwrap()
    }

    #[test]
    fn registered_start_converges_immediately() {
        let f = textured(16, 16);
        let grad = gradient_field(&f).unwrap();
        let cfg = EstimatorConfig::default();
        let res = estimate_pixel(&f, &f, &grad, (8, 8), Vec2::ZERO, &cfg, &cfg.effective_masks());
        assert_eq!(res.status, PixelStatus::Converged);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.d, Vec2::ZERO);
    }

    #[test]
    fn constant_region_falls_back_to_zero() {
        let prev = Frame::constant(16, 16, 80);
        let mut cur_samples = vec![80u8; 256];
        cur_samples[8 * 16 + 8] = 140;
        let cur = Frame::new(16, 16, cur_samples).unwrap();
        let grad = gradient_field(&prev).unwrap();
        let cfg = EstimatorConfig::for_algorithm(Algorithm::Lscrv2);
        let res = estimate_pixel(&cur, &prev, &grad, (8, 8), Vec2::ZERO, &cfg, &cfg.effective_masks());
        assert_eq!(res.status, PixelStatus::FallbackZero);
        assert_eq!(res.d, Vec2::ZERO);
    }

    #[test]
    fn fallback_keeps_dfd_no_worse_than_zero_displacement() {
        let prev = textured(20, 20);
        let cur = shifted(&prev, 7, 0); // beyond what 10 iterations reach
        let grad = gradient_field(&prev).unwrap();
        let mut cfg = EstimatorConfig::for_algorithm(Algorithm::Lscrv2);
        cfg.max_iterations = 2;
        let masks = cfg.effective_masks();
        for &r in &[(10, 10), (5, 12), (14, 6)] {
            let res = estimate_pixel(&cur, &prev, &grad, r, Vec2::ZERO, &cfg, &masks);
            let zero_dfd = interp::dfd(&cur, &prev, r, Vec2::ZERO).abs();
            assert!(res.final_dfd <= zero_dfd + 1e-12);
        }
    }

    #[test]
    fn recovers_integer_shift_on_textured_frames() {
        let prev = textured(32, 32);
        let cur = shifted(&prev, 2, 1);
        let grad = gradient_field(&prev).unwrap();
        for algorithm in Algorithm::ALL {
            let cfg = EstimatorConfig::for_algorithm(algorithm);
            let masks = cfg.effective_masks();
            let res = estimate_pixel(&cur, &prev, &grad, (16, 16), Vec2::ZERO, &cfg, &masks);
            assert_eq!(res.status, PixelStatus::Converged, "{}", algorithm.name());
            assert!(
                (res.d.x - 2.0).abs() < 0.35 && (res.d.y - 1.0).abs() < 0.35,
                "{}: {:?}",
                algorithm.name(),
                res.d
            );
        }
    }

    #[test]
    fn identical_frames_are_all_static() {
        let f = textured(24, 18);
        for init_mode in [InitMode::Causal, InitMode::Zero] {
            let cfg = EstimatorConfig {
                init_mode,
                ..EstimatorConfig::default()
            };
            let (flow, status) = estimate_frame_pair(&f, &f, &cfg).unwrap();
            let (stat, conv, fall) = status.counts();
            assert_eq!(stat, 24 * 18);
            assert_eq!((conv, fall), (0, 0));
            assert!(flow.dx().iter().chain(flow.dy().iter()).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn every_pixel_gets_exactly_one_status() {
        let prev = textured(20, 14);
        let cur = shifted(&prev, 1, 0);
        let cfg = EstimatorConfig::for_algorithm(Algorithm::Lscrv);
        let (_, status) = estimate_frame_pair(&cur, &prev, &cfg).unwrap();
        let (a, b, c) = status.counts();
        assert_eq!(a + b + c, 20 * 14);
    }

    #[test]
    fn variant_nesting_is_bit_exact() {
        let prev = textured(24, 20);
        let cur = shifted(&prev, 2, 1);
        for (multi, single) in [
            (Algorithm::Lscrvb, Algorithm::Lscrv),
            (Algorithm::Lscrv2, Algorithm::Lscrv1),
        ] {
            let mut multi_cfg = EstimatorConfig::for_algorithm(multi);
            multi_cfg.max_masks = Some(1);
            let single_cfg = EstimatorConfig::for_algorithm(single);
            let (fa, sa) = estimate_frame_pair(&cur, &prev, &multi_cfg).unwrap();
            let (fb, sb) = estimate_frame_pair(&cur, &prev, &single_cfg).unwrap();
            assert_eq!(fa, fb, "{} vs {}", multi.name(), single.name());
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn runs_are_deterministic_and_parallel_matches_sequential() {
        let prev = textured(24, 20);
        let cur = shifted(&prev, 1, 2);
        let seq_cfg = EstimatorConfig {
            algorithm: Algorithm::Lscrvb,
            init_mode: InitMode::Zero,
            parallel: false,
            ..EstimatorConfig::default()
        };
        let par_cfg = EstimatorConfig {
            parallel: true,
            ..seq_cfg.clone()
        };
        let (fa, sa) = estimate_frame_pair(&cur, &prev, &seq_cfg).unwrap();
        let (fb, sb) = estimate_frame_pair(&cur, &prev, &par_cfg).unwrap();
        let (fc, sc) = estimate_frame_pair(&cur, &prev, &seq_cfg).unwrap();
        assert_eq!(fa, fb);
        assert_eq!(sa, sb);
        assert_eq!(fa, fc);
        assert_eq!(sa, sc);
    }

    #[test]
    fn external_init_requires_prior() {
        let f = textured(8, 8);
        let cfg = EstimatorConfig {
            init_mode: InitMode::External,
            ..EstimatorConfig::default()
        };
        assert!(matches!(
            estimate_frame_pair(&f, &f, &cfg),
            Err(EstimatorError::MissingPrior)
        ));
        let prior = FlowField::zeros(8, 8);
        assert!(estimate_frame_pair_with_prior(&f, &f, &cfg, Some(&prior)).is_ok());
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let a = textured(8, 8);
        let b = textured(9, 8);
        assert!(matches!(
            estimate_frame_pair(&a, &b, &EstimatorConfig::default()),
            Err(EstimatorError::SizeMismatch(..))
        ));
    }

    #[test]
    fn sequence_yields_one_field_per_pair() {
        let f1 = textured(16, 12);
        let f2 = shifted(&f1, 1, 0);
        let f3 = shifted(&f2, 1, 0);
        let seq = Sequence::new(vec![f1, f2.clone(), f3]).unwrap();
        let cfg = EstimatorConfig::default();
        let fields = estimate_sequence(&seq, &cfg).unwrap();
        assert_eq!(fields.len(), 2);
        // K = 2 reduces to the single-pair call.
        let sub = Sequence::new(seq.frames()[..2].to_vec()).unwrap();
        let single = estimate_sequence(&sub, &cfg).unwrap();
        let (pair_flow, _) = estimate_frame_pair(&f2, &seq.frames()[0], &cfg).unwrap();
        assert_eq!(single[0].0, pair_flow);
    }
}
