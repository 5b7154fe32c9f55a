//! Synthetic moving-rectangle sequences with known ground-truth motion.
//!
//! A textured rectangle translates over a textured background; both regions
//! are driven by the auto-regressive model
//!
//! ```text
//! I(m,n) = (1/3) [I(m,n-1) + I(m-1,n) + I(m-1,n-1)] + e(m,n)
//! ```
//!
//! with i.i.d. Gaussian innovations and the boundary row and column drawn
//! i.i.d. The recursion's coefficients sum to one, so the raw field is a
//! drifting random walk; to hit the requested per-region sample mean and
//! variance the zero-mean field is standardized to the target moments before
//! the mean offset, rounding and clamping to `[0, 255]`. The background is
//! synthesized once, wide enough for the whole sequence, so pixels exposed
//! by the motion come from the same texture.
//!
//! All randomness flows from one `u64` seed through `ChaCha8Rng` and
//! `rand_distr::Normal`; outputs are bit-reproducible for a fixed seed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::imgseq::{FlowField, Frame, Sequence};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("texture needs at least 1x1 samples")]
    EmptyTexture,
    #[error("variance must be finite and nonnegative, got {0}")]
    BadVariance(f64),
    #[error("sequence length must be at least 2, got {0}")]
    TooFewFrames(usize),
    #[error("rectangle leaves the frame at frame {frame}")]
    RectOutOfFrame { frame: usize },
    #[error("rectangle is empty or larger than the frame")]
    BadRect,
    #[error("SNR is undefined for a constant frame")]
    ConstantFrame,
}

/// Scene description for [`gen_rect_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct RectSceneParams {
    pub width: usize,
    pub height: usize,
    /// Rectangle origin (left, top) in the first frame.
    pub rect_x: usize,
    pub rect_y: usize,
    pub rect_w: usize,
    pub rect_h: usize,
    /// Background displacement per frame, pixels.
    pub d_b: (i32, i32),
    /// Rectangle displacement per frame, pixels.
    pub d_r: (i32, i32),
    pub bg_mean: f64,
    pub bg_var: f64,
    pub rect_mean: f64,
    pub rect_var: f64,
    /// Number of frames K (>= 2).
    pub frames: usize,
    pub seed: u64,
}

impl Default for RectSceneParams {
    /// The benchmark scene: QCIF frame, 40x40 centered rectangle, background
    /// drifting right by (2,0), rectangle moving diagonally by (1,2),
    /// textures (mean 50, variance 49) and (mean 100, variance 25).
    fn default() -> Self {
        RectSceneParams {
            width: 176,
            height: 144,
            rect_x: (176 - 40) / 2,
            rect_y: (144 - 40) / 2,
            rect_w: 40,
            rect_h: 40,
            d_b: (2, 0),
            d_r: (1, 2),
            bg_mean: 50.0,
            bg_var: 49.0,
            rect_mean: 100.0,
            rect_var: 25.0,
            frames: 2,
            seed: 7,
        }
    }
}

impl RectSceneParams {
    /// Rectangle origin at frame index `k` (0-based).
    fn rect_origin(&self, k: usize) -> (i64, i64) {
        (
            self.rect_x as i64 + self.d_r.0 as i64 * k as i64,
            self.rect_y as i64 + self.d_r.1 as i64 * k as i64,
        )
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.frames < 2 {
            return Err(SynthError::TooFewFrames(self.frames));
        }
        for &v in &[self.bg_var, self.rect_var] {
            if !v.is_finite() || v < 0.0 {
                return Err(SynthError::BadVariance(v));
            }
        }
        if self.rect_w == 0
            || self.rect_h == 0
            || self.rect_w > self.width
            || self.rect_h > self.height
        {
            return Err(SynthError::BadRect);
        }
        for k in 0..self.frames {
            let (ox, oy) = self.rect_origin(k);
            if ox < 0
                || oy < 0
                || ox + self.rect_w as i64 > self.width as i64
                || oy + self.rect_h as i64 > self.height as i64
            {
                return Err(SynthError::RectOutOfFrame { frame: k + 1 });
            }
        }
        Ok(())
    }
}

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// AR texture of the given size, standardized to the requested sample mean
/// and variance, quantized to 8 bits. Zero variance yields the constant
/// field. Deterministic in `seed`.
pub fn gen_ar_texture(
    rows: usize,
    cols: usize,
    mean: f64,
    variance: f64,
    seed: u64,
) -> Result<Frame, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_ar_texture_rng(rows, cols, mean, variance, &mut rng)
}

fn gen_ar_texture_rng(
    rows: usize,
    cols: usize,
    mean: f64,
    variance: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Frame, SynthError> {
    if rows == 0 || cols == 0 {
        return Err(SynthError::EmptyTexture);
    }
    if !variance.is_finite() || variance < 0.0 {
        return Err(SynthError::BadVariance(variance));
    }
    if variance == 0.0 {
        return Ok(Frame::constant(cols, rows, quantize(mean)));
    }

    let normal = Normal::new(0.0, variance.sqrt()).expect("validated variance");
    let mut field = vec![0.0f64; rows * cols];
    for m in 0..rows {
        for n in 0..cols {
            let innovation = normal.sample(rng);
            field[m * cols + n] = if m == 0 || n == 0 {
                innovation
            } else {
                (field[m * cols + n - 1]
                    + field[(m - 1) * cols + n]
                    + field[(m - 1) * cols + n - 1])
                    / 3.0
                    + innovation
            };
        }
    }

    // Standardize to the target moments; the raw recursion drifts.
    let count = field.len() as f64;
    let sample_mean = field.iter().sum::<f64>() / count;
    let sample_var = field
        .iter()
        .map(|v| (v - sample_mean) * (v - sample_mean))
        .sum::<f64>()
        / count;
    let gain = if sample_var > 0.0 {
        (variance / sample_var).sqrt()
    } else {
        0.0
    };
    let samples = field
        .iter()
        .map(|v| quantize((v - sample_mean) * gain + mean))
        .collect();
    Ok(Frame::new(cols, rows, samples).expect("sized buffer"))
}

/// Generates the scene: frame 1 is the background plane with the rectangle
/// stamped on top; each later frame shifts both regions by their integer
/// displacements. The background is drawn once as a plane wide enough to
/// cover every frame's window, so pixels exposed by the motion are unseen
/// samples of the same texture and the sequence stays stationary. The
/// per-pair ground truth holds the rectangle vector at pixels covered by the
/// rectangle in the EARLIER frame and the background vector elsewhere.
pub fn gen_rect_sequence(
    params: &RectSceneParams,
) -> Result<(Sequence, Vec<FlowField>), SynthError> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let travel = params.frames as i64 - 1;
    let span_x = (travel * i64::from(params.d_b.0)).unsigned_abs() as usize;
    let span_y = (travel * i64::from(params.d_b.1)).unsigned_abs() as usize;
    let (plane_w, plane_h) = (w + span_x, h + span_y);

    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let bg_seed = master.next_u64();
    let rect_seed = master.next_u64();

    let mut bg_rng = ChaCha8Rng::seed_from_u64(bg_seed);
    let plane = gen_ar_texture_rng(plane_h, plane_w, params.bg_mean, params.bg_var, &mut bg_rng)?;
    let mut rect_rng = ChaCha8Rng::seed_from_u64(rect_seed);
    let rect_tex = gen_ar_texture_rng(
        params.rect_h,
        params.rect_w,
        params.rect_mean,
        params.rect_var,
        &mut rect_rng,
    )?;

    // Background content moving by d_b equals a window sliding by -d_b over
    // the static plane; the start offset keeps every window inside it.
    let window = |k: i64| -> (usize, usize) {
        let off = |d: i64| -> i64 {
            if d >= 0 {
                (travel - k) * d
            } else {
                k * -d
            }
        };
        (
            off(i64::from(params.d_b.0)) as usize,
            off(i64::from(params.d_b.1)) as usize,
        )
    };

    let compose = |k: usize| -> Frame {
        let (wx, wy) = window(k as i64);
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = plane.get(wx + x, wy + y);
            }
        }
        let (ox, oy) = params.rect_origin(k);
        for ry in 0..params.rect_h {
            for rx in 0..params.rect_w {
                let x = (ox + rx as i64) as usize;
                let y = (oy + ry as i64) as usize;
                out[y * w + x] = rect_tex.get(rx, ry);
            }
        }
        Frame::new(w, h, out).expect("sized buffer")
    };

    let mut frames = vec![compose(0)];
    let mut truths = Vec::with_capacity(params.frames - 1);

    for k in 1..params.frames {
        frames.push(compose(k));

        // Truth for the pair (k-1, k), labeled by the earlier frame's rect.
        let mut truth = FlowField::zeros(w, h);
        let (ox, oy) = params.rect_origin(k - 1);
        for y in 0..h {
            for x in 0..w {
                let in_rect = (x as i64) >= ox
                    && (y as i64) >= oy
                    && (x as i64) < ox + params.rect_w as i64
                    && (y as i64) < oy + params.rect_h as i64;
                let d = if in_rect { params.d_r } else { params.d_b };
                truth.set(x, y, f64::from(d.0), f64::from(d.1));
            }
        }
        truths.push(truth);
    }

    Ok((Sequence::new(frames).expect("K >= 2 validated"), truths))
}

/// Noise variance implied by Eq.-style SNR: `sigma^2 / 10^(snr/10)` where
/// `sigma^2` is the frame's sample variance.
pub fn noise_variance(frame_variance: f64, snr_db: f64) -> f64 {
    frame_variance / 10f64.powf(snr_db / 10.0)
}

/// Adds i.i.d. zero-mean Gaussian noise at the requested SNR, clamping to
/// `[0, 255]`. An infinite SNR returns the frame unchanged. Deterministic in
/// `seed`.
pub fn add_noise(frame: &Frame, snr_db: f64, seed: u64) -> Result<Frame, SynthError> {
    let (_, variance) = frame.mean_variance();
    if variance <= 0.0 {
        return Err(SynthError::ConstantFrame);
    }
    let sigma_c_sq = noise_variance(variance, snr_db);
    if sigma_c_sq == 0.0 {
        return Ok(frame.clone());
    }
    let normal = Normal::new(0.0, sigma_c_sq.sqrt()).expect("positive variance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = frame
        .samples()
        .iter()
        .map(|&v| quantize(f64::from(v) + normal.sample(&mut rng)))
        .collect();
    Ok(Frame::new(frame.width(), frame.height(), samples).expect("sized buffer"))
}

/// Convenience used by tests and the CLI for mixing independent noise seeds
/// per frame off one master seed.
pub fn frame_noise_seed(master: u64, frame_index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    let mut seed = 0;
    for _ in 0..=frame_index {
        seed = rng.gen();
    }
    seed
}
