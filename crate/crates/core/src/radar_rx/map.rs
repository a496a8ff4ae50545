use num_complex::Complex64;

use crate::dsp::{self, signed_bin};
use crate::waveform::{PulseMatrix, WaveformParams};

/// Zero-padded 2D DFT of compensated fast/slow-time samples.
///
/// Rows are fast-time (beat) bins, columns Doppler bins, stored row-major.
/// The transform is unnormalized, so `Σ|X|² = rows·cols·Σ|z|²` and an
/// exact on-grid exponential of amplitude `γ` peaks at `γ·N_fast·P`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<Complex64>,
    pub zero_pad_fast: usize,
    pub zero_pad_doppler: usize,
    /// Tone frequency per fast-time bin (Hz).
    pub fast_spacing: f64,
    /// Doppler frequency per slow-time bin (Hz).
    pub doppler_spacing: f64,
    /// Unpadded sample counts along each axis.
    pub fast_len: usize,
    pub slow_len: usize,
}

impl DelayDopplerMap {
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.values[r * self.cols + c]
    }

    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn energy(&self) -> f64 {
        dsp::energy(&self.values)
    }

    /// Fast-time tone frequency of row `r` (Hz). A path with beat frequency
    /// `f_B` produces the tone `−f_B`.
    pub fn tone_of_row(&self, r: usize) -> f64 {
        signed_bin(r, self.rows) * self.fast_spacing
    }

    pub fn beat_of_row(&self, r: usize) -> f64 {
        -self.tone_of_row(r)
    }

    pub fn doppler_of_col(&self, c: usize) -> f64 {
        signed_bin(c, self.cols) * self.doppler_spacing
    }

    /// Row whose centre is nearest to beat frequency `f_b`.
    pub fn row_of_beat(&self, f_b: f64) -> usize {
        let k = (-f_b / self.fast_spacing).round() as i64;
        k.rem_euclid(self.rows as i64) as usize
    }

    pub fn col_of_doppler(&self, f_d: f64) -> usize {
        let k = (f_d / self.doppler_spacing).round() as i64;
        k.rem_euclid(self.cols as i64) as usize
    }

    /// Circular distance in bins between two rows / two columns.
    pub fn row_distance(&self, a: usize, b: usize) -> usize {
        circ(a, b, self.rows)
    }

    pub fn col_distance(&self, a: usize, b: usize) -> usize {
        circ(a, b, self.cols)
    }

    /// Rows whose beat frequency lies in `[lo, hi]`.
    pub fn rows_in_beat_range(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.rows)
            .filter(|&r| {
                let f = self.beat_of_row(r);
                f >= lo - 1e-9 * self.fast_spacing && f <= hi + 1e-9 * self.fast_spacing
            })
            .collect()
    }
}

fn circ(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b) % n;
    d.min(n - d)
}

/// Zero-pad and 2D-transform a compensated `N_fast × P` matrix.
pub fn delay_doppler(
    z: &PulseMatrix,
    params: &WaveformParams,
    zero_pad_fast: usize,
    zero_pad_doppler: usize,
) -> DelayDopplerMap {
    let nf = z.rows * (1 + zero_pad_fast);
    let ns = z.cols * (1 + zero_pad_doppler);
    let zero = Complex64::new(0.0, 0.0);
    // Fast-time transforms, one per pulse; kept column-major for now.
    let fft_f = dsp::forward(nf);
    let mut cols_buf = vec![zero; nf * z.cols];
    for p in 0..z.cols {
        let col = &mut cols_buf[p * nf..(p + 1) * nf];
        col[..z.rows].copy_from_slice(z.column(p));
        fft_f.process(col);
    }
    let fft_s = dsp::forward(ns);
    let mut values = vec![zero; nf * ns];
    for r in 0..nf {
        let row = &mut values[r * ns..(r + 1) * ns];
        for p in 0..z.cols {
            row[p] = cols_buf[p * nf + r];
        }
        fft_s.process(row);
    }
    DelayDopplerMap {
        rows: nf,
        cols: ns,
        values,
        zero_pad_fast,
        zero_pad_doppler,
        fast_spacing: 1.0 / ((1 + zero_pad_fast) as f64 * z.rows as f64 * params.sample_period()),
        doppler_spacing: 1.0 / ((1 + zero_pad_doppler) as f64 * params.cpi()),
        fast_len: z.rows,
        slow_len: z.cols,
    }
}
