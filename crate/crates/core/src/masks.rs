//! Neighborhood geometries for the spatially adaptive estimator.
//!
//! Nine fixed templates over the 3x3 window around the working pixel: the
//! full window, the four half-planes and the four quadrants. Half-plane and
//! quadrant subsets span all motion-boundary orientations while keeping each
//! stacked system overdetermined. The full window comes first so that
//! single-mask variants are a prefix of the multi-mask trial order.

/// Fewest neighborhood observations accepted for a 2-unknown system.
pub const MIN_OBSERVATIONS: usize = 3;

/// One neighborhood shape: ordered pixel offsets relative to the working
/// pixel, each component in `{-1, 0, 1}`, always containing `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskTemplate {
    id: u8,
    offsets: Vec<(i32, i32)>,
}

impl MaskTemplate {
    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// Renders the 3x3 footprint: `X` marks the working pixel, `O` a
    /// neighboring pixel, `.` an unused cell.
    pub fn ascii_grid(&self) -> String {
        let mut out = String::with_capacity(12);
        for dy in -1..=1 {
            for dx in -1..=1 {
                out.push(if (dx, dy) == (0, 0) {
                    'X'
                } else if self.offsets.contains(&(dx, dy)) {
                    'O'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}

fn template(id: u8, dxs: &[i32], dys: &[i32]) -> MaskTemplate {
    let mut offsets = Vec::with_capacity(dxs.len() * dys.len());
    for &dy in dys {
        for &dx in dxs {
            offsets.push((dx, dy));
        }
    }
    MaskTemplate { id, offsets }
}

/// The nine templates in trial order: full 3x3 window first, then the four
/// half-planes (top, bottom, left, right), then the four quadrants.
pub fn mask_set() -> Vec<MaskTemplate> {
    let all = [-1, 0, 1];
    let neg = [-1, 0];
    let pos = [0, 1];
    vec![
        template(0, &all, &all),
        template(1, &all, &neg), // top half
        template(2, &all, &pos), // bottom half
        template(3, &neg, &all), // left half
        template(4, &pos, &all), // right half
        template(5, &neg, &neg), // up-left quadrant
        template(6, &pos, &neg), // up-right
        template(7, &neg, &pos), // down-left
        template(8, &pos, &pos), // down-right
    ]
}

/// Absolute in-bounds positions `r + offset` in template order; offsets that
/// fall outside the frame are dropped. Fewer than [`MIN_OBSERVATIONS`]
/// survivors means the neighborhood is degenerate and the caller must fall
/// back.
pub fn gather(
    mask: &MaskTemplate,
    r: (usize, usize),
    width: usize,
    height: usize,
) -> Vec<(usize, usize)> {
    let (x, y) = (r.0 as i64, r.1 as i64);
    mask.offsets
        .iter()
        .filter_map(|&(dx, dy)| {
            let nx = x + i64::from(dx);
            let ny = y + i64::from(dy);
            if nx >= 0 && ny >= 0 && nx < width as i64 && ny < height as i64 {
                Some((nx as usize, ny as usize))
            } else {
                None
            }
        })
        .collect()
}
