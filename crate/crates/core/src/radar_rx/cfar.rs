//! Two-dimensional cell-averaging CFAR on a power map with circular edges.

use crate::error::{invalid, IsacError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarConfig {
    pub pfa: f64,
    /// Guard half-extent per axis (cells excluded around the cell under test).
    pub guard: usize,
    /// Training depth beyond the guard, per axis.
    pub train: usize,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            pfa: 1e-4,
            guard: 2,
            train: 8,
        }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(invalid("pfa", format!("must lie in (0, 1), got {}", self.pfa)));
        }
        if self.train == 0 {
            return Err(invalid("cfar_train", "must be at least 1"));
        }
        Ok(())
    }

    pub fn half_size(&self) -> usize {
        self.guard + self.train
    }

    pub fn window(&self) -> usize {
        2 * self.half_size() + 1
    }

    /// Number of training cells `N`.
    pub fn training_cells(&self) -> usize {
        let outer = self.window();
        let inner = 2 * self.guard + 1;
        outer * outer - inner * inner
    }

    /// `α_T = N (Pfa^{−1/N} − 1)`: exact for exponentially distributed
    /// cell powers.
    pub fn threshold_factor(&self) -> f64 {
        let n = self.training_cells() as f64;
        n * (self.pfa.powf(-1.0 / n) - 1.0)
    }
}

/// A cell whose power exceeded its adaptive threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub row: usize,
    pub col: usize,
    pub power: f64,
    /// Mean training-cell power.
    pub noise: f64,
}

/// Summed-area table over the circularly extended map.
struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(power: &[f64], rows: usize, cols: usize, h: usize) -> Self {
        let er = rows + 2 * h;
        let ec = cols + 2 * h;
        let width = ec + 1;
        let mut sums = vec![0.0; (er + 1) * width];
        for i in 0..er {
            let src_r = (i + rows - h % rows) % rows;
            let mut run = 0.0;
            for j in 0..ec {
                let src_c = (j + cols - h % cols) % cols;
                run += power[src_r * cols + src_c];
                sums[(i + 1) * width + j + 1] = sums[i * width + j + 1] + run;
            }
        }
        Self { width, sums }
    }

    /// Sum over extended rows `r0..r1`, cols `c0..c1` (half-open).
    #[inline]
    fn rect(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let w = self.width;
        self.sums[r1 * w + c1] - self.sums[r0 * w + c1] - self.sums[r1 * w + c0] + self.sums[r0 * w + c0]
    }
}

fn check_size(rows: usize, cols: usize, cfg: &CfarConfig) -> Result<()> {
    let w = cfg.window();
    if rows < w || cols < w {
        return Err(IsacError::MapTooSmall {
            rows,
            cols,
            win_rows: w,
            win_cols: w,
        });
    }
    Ok(())
}

/// Threshold every cell of the rows in `eval_rows` (all columns).
pub fn cfar_crossings(
    power: &[f64],
    rows: usize,
    cols: usize,
    eval_rows: &[usize],
    cfg: &CfarConfig,
) -> Result<Vec<Crossing>> {
    cfg.validate()?;
    check_size(rows, cols, cfg)?;
    if power.len() != rows * cols {
        return Err(IsacError::LengthMismatch {
            expected: rows * cols,
            actual: power.len(),
        });
    }
    let h = cfg.half_size();
    let g = cfg.guard;
    let n = cfg.training_cells() as f64;
    let alpha = cfg.threshold_factor();
    let table = Integral::new(power, rows, cols, h);
    let mut out = Vec::new();
    for &r in eval_rows {
        for c in 0..cols {
            // Cell (r, c) sits at extended (r + h, c + h).
            let outer = table.rect(r, r + 2 * h + 1, c, c + 2 * h + 1);
            let inner = table.rect(r + h - g, r + h + g + 1, c + h - g, c + h + g + 1);
            let noise = ((outer - inner) / n).max(0.0);
            let p = power[r * cols + c];
            if p > alpha * noise {
                out.push(Crossing {
                    row: r,
                    col: c,
                    power: p,
                    noise,
                });
            }
        }
    }
    Ok(out)
}

/// Count threshold crossings over the given rows without collecting them.
pub fn count_crossings(
    power: &[f64],
    rows: usize,
    cols: usize,
    eval_rows: &[usize],
    cfg: &CfarConfig,
) -> Result<usize> {
    Ok(cfar_crossings(power, rows, cols, eval_rows, cfg)?.len())
}

/// Keep crossings that are local power maxima within `±radius_r` rows and
/// `±radius_c` columns; sorted by decreasing power. Ties between equal
/// neighbours keep the first in row-major order.
pub fn merge_local_maxima(
    power: &[f64],
    rows: usize,
    cols: usize,
    crossings: &[Crossing],
    radius_r: usize,
    radius_c: usize,
) -> Vec<Crossing> {
    let mut kept: Vec<Crossing> = crossings
        .iter()
        .copied()
        .filter(|x| {
            let idx = x.row * cols + x.col;
            for dr in -(radius_r as i64)..=radius_r as i64 {
                for dc in -(radius_c as i64)..=radius_c as i64 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let r = (x.row as i64 + dr).rem_euclid(rows as i64) as usize;
                    let c = (x.col as i64 + dc).rem_euclid(cols as i64) as usize;
                    let j = r * cols + c;
                    let q = power[j];
                    if q > x.power || (q == x.power && j < idx) {
                        return false;
                    }
                }
            }
            true
        })
        .collect();
    kept.sort_by(|a, b| {
        b.power
            .partial_cmp(&a.power)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.row, a.col).cmp(&(b.row, b.col)))
    });
    kept
}
