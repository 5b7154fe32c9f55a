//! Sub-pixel intensity and gradient evaluation, and the displaced frame
//! difference built on it.
//!
//! All sampling is bilinear over the four surrounding grid points, with
//! coordinates clamped to the frame rectangle so every lookup is total.
//! Spatial gradients are precomputed per frame as central differences and
//! then sampled bilinearly, rather than differentiating the interpolant.

use thiserror::Error;

use crate::imgseq::Frame;
use crate::Vec2;

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("gradient field needs at least 2x2 samples, frame is {width}x{height}")]
    DegenerateFrame { width: usize, height: usize },
}

/// Per-pixel spatial partial derivatives of one frame.
#[derive(Debug, Clone)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl GradientField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn gx(&self) -> &[f64] {
        &self.gx
    }

    pub fn gy(&self) -> &[f64] {
        &self.gy
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.gx[i], self.gy[i])
    }
}

#[inline]
fn clampf(v: f64, max_index: usize) -> f64 {
    v.clamp(0.0, max_index as f64)
}

/// Bilinear blend of the four grid samples around `(x, y)`; coordinates are
/// clamped to the frame, so the function is total. Exact at integer
/// coordinates.
#[inline]
pub fn bilinear_sample(frame: &Frame, x: f64, y: f64) -> f64 {
    bilinear_raw(
        frame.samples(),
        frame.width(),
        frame.height(),
        x,
        y,
        |s, i| f64::from(s[i]),
    )
}

#[inline]
fn bilinear_raw<T, F: Fn(&[T], usize) -> f64>(
    data: &[T],
    width: usize,
    height: usize,
    x: f64,
    y: f64,
    at: F,
) -> f64 {
    let x = clampf(x, width - 1);
    let y = clampf(y, height - 1);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;

    let v00 = at(data, y0 * width + x0);
    let v10 = at(data, y0 * width + x1);
    let v01 = at(data, y1 * width + x0);
    let v11 = at(data, y1 * width + x1);

    (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
}

/// Central-difference gradient field, `(I(x+1) - I(x-1)) / 2` with indices
/// clamped to the frame at the borders.
pub fn gradient_field(frame: &Frame) -> Result<GradientField, InterpError> {
    let (w, h) = (frame.width(), frame.height());
    if w < 2 || h < 2 {
        return Err(InterpError::DegenerateFrame {
            width: w,
            height: h,
        });
    }
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let xr = (x + 1).min(w - 1);
            let xl = x.saturating_sub(1);
            let yd = (y + 1).min(h - 1);
            let yu = y.saturating_sub(1);
            gx[y * w + x] = (frame.getf(xr, y) - frame.getf(xl, y)) / 2.0;
            gy[y * w + x] = (frame.getf(x, yd) - frame.getf(x, yu)) / 2.0;
        }
    }
    Ok(GradientField {
        width: w,
        height: h,
        gx,
        gy,
    })
}

/// Bilinear sample of both gradient channels at `(x, y)`.
#[inline]
pub fn sample_gradient(g: &GradientField, x: f64, y: f64) -> (f64, f64) {
    let gx = bilinear_raw(&g.gx, g.width, g.height, x, y, |s, i| s[i]);
    let gy = bilinear_raw(&g.gy, g.width, g.height, x, y, |s, i| s[i]);
    (gx, gy)
}

/// Displaced frame difference at pixel `r` under candidate displacement `d`:
/// `I_k(r) - I_{k-1}(r - d)`, the previous frame sampled bilinearly.
#[inline]
pub fn dfd(cur: &Frame, prev: &Frame, r: (usize, usize), d: Vec2) -> f64 {
    let (x, y) = r;
    cur.getf(x, y) - bilinear_sample(prev, x as f64 - d.x, y as f64 - d.y)
}
