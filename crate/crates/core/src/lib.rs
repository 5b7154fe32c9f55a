//! Dense optical flow by regularized pel-recursive motion estimation.
//!
//! The displacement of every pixel between two frames is refined iteratively
//! from the displaced frame difference (DFD) linearized over a small
//! neighborhood. The update solves a ridge-regularized 2x2 system; the
//! regularization matrix is either fixed (the Wiener/LMMSE baseline) or
//! selected per pixel by minimizing the Generalized Cross-Validation score,
//! optionally over a set of adaptive neighborhood masks.
//!
//! Modules follow the processing pipeline:
//!
//! * [`imgseq`] — frame, sequence and flow-field containers plus PGM/.flo I/O
//! * [`synth`] — synthetic moving-rectangle scenes with known ground truth
//! * [`interp`] — bilinear sampling, spatial gradients and the DFD primitive
//! * [`masks`] — the nine neighborhood geometries
//! * [`solver`] — per-pixel linear system assembly, RLS/Wiener/GCV solvers
//! * [`estimator`] — the pel-recursive driver and the five algorithm variants
//! * [`metrics`] — MSE, bias, mean-squared DFD and motion-compensation gain

pub mod estimator;
pub mod imgseq;
pub mod interp;
pub mod masks;
pub mod metrics;
pub mod solver;
pub mod synth;

pub use estimator::{
    Algorithm, EstimatorConfig, InitMode, PixelResult, PixelStatus, StatusMap,
};
pub use imgseq::{FlowField, Frame, Sequence};
pub use interp::GradientField;
pub use masks::MaskTemplate;
pub use metrics::MetricsReport;
pub use solver::{GcvSearchParams, LinearSystem, RegMatrix};
pub use synth::RectSceneParams;

/// A 2-D real-valued displacement in pixels, `x` rightward and `y` downward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Chebyshev norm, used for the divergence clamp.
    pub fn norm_inf(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}
