//! Phase-coded FMCW waveform generation.
//!
//! Time is measured from the start of the frame on the uniform sample grid
//! `t_n = n·Ts`. Pulse `p` occupies `[p·T_PRI, p·T_PRI + T)`; the guard interval
//! that follows is silent.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dsp::{cis, snap};
use crate::error::{invalid, IsacError, Result};

/// Timing and frequency parameters of a PC-FMCW frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformParams {
    /// Carrier frequency (Hz).
    pub carrier: f64,
    /// Sweep bandwidth `B` (Hz).
    pub bandwidth: f64,
    /// Pulse (chirp) duration `T` (s).
    pub pulse_duration: f64,
    /// Pulse repetition interval `T_PRI` (s).
    pub pri: f64,
    /// Pulses per frame `P`.
    pub pulses: usize,
    /// Symbols per pulse `Lc`.
    pub symbols_per_pulse: usize,
    /// Samples per symbol period `Mos`.
    pub oversampling: usize,
}

impl WaveformParams {
    pub fn new(
        carrier: f64,
        bandwidth: f64,
        pulse_duration: f64,
        pri: f64,
        pulses: usize,
        symbols_per_pulse: usize,
        oversampling: usize,
    ) -> Result<Self> {
        let p = Self {
            carrier,
            bandwidth,
            pulse_duration,
            pri,
            pulses,
            symbols_per_pulse,
            oversampling,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive and finite, got {v}")))
            }
        };
        positive("carrier", self.carrier)?;
        positive("bandwidth", self.bandwidth)?;
        positive("pulse_duration", self.pulse_duration)?;
        positive("pri", self.pri)?;
        if self.pulses == 0 {
            return Err(invalid("pulses", "must be at least 1"));
        }
        if self.symbols_per_pulse == 0 {
            return Err(invalid("symbols_per_pulse", "must be at least 1"));
        }
        if self.oversampling == 0 {
            return Err(invalid("oversampling", "must be at least 1"));
        }
        if self.pri < self.pulse_duration * (1.0 - 1e-12) {
            return Err(invalid(
                "pri",
                format!(
                    "pulse repetition interval {} s is shorter than the pulse {} s",
                    self.pri, self.pulse_duration
                ),
            ));
        }
        let ratio = self.pri / self.sample_period();
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(invalid(
                "pri",
                format!("T_PRI/Ts = {ratio} is not an integer number of samples"),
            ));
        }
        Ok(())
    }

    /// Symbol period `Tc = T / Lc`.
    pub fn chip_duration(&self) -> f64 {
        self.pulse_duration / self.symbols_per_pulse as f64
    }

    /// Sample period `Ts = Tc / Mos`.
    pub fn sample_period(&self) -> f64 {
        self.chip_duration() / self.oversampling as f64
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.sample_period()
    }

    /// Guard interval `Tg = T_PRI − T`.
    pub fn guard(&self) -> f64 {
        (self.pri - self.pulse_duration).max(0.0)
    }

    /// Coherent processing interval `P·T_PRI`.
    pub fn cpi(&self) -> f64 {
        self.pulses as f64 * self.pri
    }

    /// Chirp slope `B/T` (Hz/s).
    pub fn sweep_rate(&self) -> f64 {
        self.bandwidth / self.pulse_duration
    }

    pub fn samples_per_pulse(&self) -> usize {
        self.symbols_per_pulse * self.oversampling
    }

    pub fn samples_per_pri(&self) -> usize {
        (self.pri / self.sample_period()).round() as usize
    }

    pub fn guard_samples(&self) -> usize {
        self.samples_per_pri() - self.samples_per_pulse()
    }

    pub fn frame_len(&self) -> usize {
        self.pulses * self.samples_per_pri()
    }

    pub fn frame_duration(&self) -> f64 {
        self.frame_len() as f64 * self.sample_period()
    }

    pub fn with_pulses(mut self, pulses: usize) -> Self {
        self.pulses = pulses;
        self
    }
}

/// Modulation alphabet, Gray mapped with unit average energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constellation {
    Bpsk,
    Qpsk,
    Psk16,
    Qam16,
}

impl Constellation {
    pub const ALL: [Constellation; 4] = [Self::Bpsk, Self::Qpsk, Self::Psk16, Self::Qam16];

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Self::Bpsk => 1,
            Self::Qpsk => 2,
            Self::Psk16 | Self::Qam16 => 4,
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    pub fn is_psk(self) -> bool {
        !matches!(self, Self::Qam16)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bpsk => "bpsk",
            Self::Qpsk => "qpsk",
            Self::Psk16 => "16psk",
            Self::Qam16 => "16qam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bpsk" => Some(Self::Bpsk),
            "qpsk" => Some(Self::Qpsk),
            "16psk" | "psk16" | "16-psk" => Some(Self::Psk16),
            "16qam" | "qam16" | "16-qam" => Some(Self::Qam16),
            _ => None,
        }
    }

    /// Constellation point for the bit word `word` (MSB first).
    pub fn point(self, word: usize) -> Complex64 {
        debug_assert!(word < self.order());
        match self {
            Self::Bpsk => {
                if word == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(-1.0, 0.0)
                }
            }
            Self::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let i = if word & 0b10 == 0 { s } else { -s };
                let q = if word & 0b01 == 0 { s } else { -s };
                Complex64::new(i, q)
            }
            Self::Psk16 => {
                // Gray word -> ring position.
                let mut k = word;
                let mut shift = word >> 1;
                while shift != 0 {
                    k ^= shift;
                    shift >>= 1;
                }
                cis(2.0 * PI * k as f64 / 16.0)
            }
            Self::Qam16 => {
                let level = |two: usize| match two {
                    0b00 => -3.0,
                    0b01 => -1.0,
                    0b11 => 1.0,
                    _ => 3.0,
                };
                let norm = 1.0 / 10f64.sqrt();
                Complex64::new(level(word >> 2) * norm, level(word & 0b11) * norm)
            }
        }
    }

    pub fn points(self) -> Vec<Complex64> {
        (0..self.order()).map(|w| self.point(w)).collect()
    }

    /// Minimum-distance decision; ties go to the lower word.
    pub fn decide(self, y: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for w in 0..self.order() {
            let d = (y - self.point(w)).norm_sqr();
            if d < best_d {
                best_d = d;
                best = w;
            }
        }
        best
    }

    /// Append the bits of `word` (MSB first) to `out`.
    pub fn push_bits(self, word: usize, out: &mut Vec<u8>) {
        let m = self.bits_per_symbol();
        for b in (0..m).rev() {
            out.push(((word >> b) & 1) as u8);
        }
    }

    /// Max-log LLRs (positive favours bit 0) of equalized `y` under
    /// complex Gaussian noise of variance `noise_var`.
    pub fn llrs(self, y: Complex64, noise_var: f64, out: &mut Vec<f64>) {
        let m = self.bits_per_symbol();
        let d: Vec<f64> = (0..self.order())
            .map(|w| (y - self.point(w)).norm_sqr())
            .collect();
        for b in (0..m).rev() {
            let mut d0 = f64::INFINITY;
            let mut d1 = f64::INFINITY;
            for (w, &dw) in d.iter().enumerate() {
                if (w >> b) & 1 == 0 {
                    d0 = d0.min(dw);
                } else {
                    d1 = d1.min(dw);
                }
            }
            out.push((d1 - d0) / noise_var);
        }
    }
}

/// Map a bit vector to constellation points.
pub fn map_bits(bits: &[u8], c: Constellation) -> Result<Vec<Complex64>> {
    let m = c.bits_per_symbol();
    if bits.len() % m != 0 {
        return Err(IsacError::LengthMismatch {
            expected: bits.len().div_ceil(m) * m,
            actual: bits.len(),
        });
    }
    Ok(bits
        .chunks(m)
        .map(|g| {
            let word = g.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
            c.point(word)
        })
        .collect())
}

/// Hard-decide symbols back to bits.
pub fn demap(symbols: &[Complex64], c: Constellation) -> Vec<u8> {
    let mut out = Vec::with_capacity(symbols.len() * c.bits_per_symbol());
    for &s in symbols {
        c.push_bits(c.decide(s), &mut out);
    }
    out
}

/// `Lc × P` symbol matrix, column-major (one column per pulse).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    rows: usize,
    cols: usize,
    symbols: Vec<Complex64>,
    pilot_mask: Vec<bool>,
    constellation: Constellation,
}

impl SymbolFrame {
    pub fn new(
        rows: usize,
        cols: usize,
        symbols: Vec<Complex64>,
        pilot_mask: Vec<bool>,
        constellation: Constellation,
    ) -> Result<Self> {
        if symbols.len() != rows * cols {
            return Err(IsacError::LengthMismatch {
                expected: rows * cols,
                actual: symbols.len(),
            });
        }
        if pilot_mask.len() != rows * cols {
            return Err(IsacError::LengthMismatch {
                expected: rows * cols,
                actual: pilot_mask.len(),
            });
        }
        if pilot_mask[..rows].iter().any(|&m| !m) {
            return Err(invalid("pilot_mask", "first pulse must be entirely pilots"));
        }
        Ok(Self {
            rows,
            cols,
            symbols,
            pilot_mask,
            constellation,
        })
    }

    /// Frame of `+1` symbols; the first pulse is flagged as pilots.
    pub fn ones(rows: usize, cols: usize) -> Self {
        let mut mask = vec![false; rows * cols];
        mask[..rows].iter_mut().for_each(|m| *m = true);
        Self {
            rows,
            cols,
            symbols: vec![Complex64::new(1.0, 0.0); rows * cols],
            pilot_mask: mask,
            constellation: Constellation::Bpsk,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn constellation(&self) -> Constellation {
        self.constellation
    }

    #[inline]
    pub fn get(&self, l: usize, p: usize) -> Complex64 {
        self.symbols[l + p * self.rows]
    }

    #[inline]
    pub fn is_pilot(&self, l: usize, p: usize) -> bool {
        self.pilot_mask[l + p * self.rows]
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn pilot_mask(&self) -> &[bool] {
        &self.pilot_mask
    }

    pub fn column(&self, p: usize) -> &[Complex64] {
        &self.symbols[p * self.rows..(p + 1) * self.rows]
    }

    pub fn check_params(&self, params: &WaveformParams) -> Result<()> {
        let want = (params.symbols_per_pulse, params.pulses);
        if self.shape() != want {
            return Err(IsacError::ShapeMismatch {
                expected: want,
                actual: self.shape(),
            });
        }
        Ok(())
    }
}

/// Sampled complex baseband signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pub samples: Vec<Complex64>,
    pub sample_period: f64,
    pub start_time: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_period: f64) -> Self {
        Self {
            samples,
            sample_period,
            start_time: 0.0,
        }
    }

    pub fn zeros(len: usize, sample_period: f64) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); len], sample_period)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        crate::dsp::energy(&self.samples)
    }

    pub fn time(&self, n: usize) -> f64 {
        self.start_time + n as f64 * self.sample_period
    }
}

/// Fast-time × slow-time matrix, one contiguous column per pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl PulseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r + c * self.rows]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r + c * self.rows] = v;
    }

    pub fn column(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn column_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn flatten(&self) -> Vec<Complex64> {
        self.data.clone()
    }
}

/// Chirp phase at local pulse time `u ∈ [0, T)`.
#[inline]
pub fn chirp_phase(u: f64, params: &WaveformParams) -> f64 {
    let b = params.bandwidth;
    -PI * b * u + PI * b / params.pulse_duration * u * u
}

/// One pulse of the chirp, `Lc·Mos` samples.
pub fn chirp_pulse(params: &WaveformParams) -> Vec<Complex64> {
    let ts = params.sample_period();
    (0..params.samples_per_pulse())
        .map(|n| cis(chirp_phase(n as f64 * ts, params)))
        .collect()
}

/// Linear chirp train of `P` pulses; guard intervals are zero.
pub fn chirp_train(params: &WaveformParams) -> ComplexSignal {
    let pulse = chirp_pulse(params);
    let npri = params.samples_per_pri();
    let mut out = vec![Complex64::new(0.0, 0.0); params.frame_len()];
    for p in 0..params.pulses {
        out[p * npri..p * npri + pulse.len()].copy_from_slice(&pulse);
    }
    ComplexSignal::new(out, params.sample_period())
}

/// Rectangular-shaped communication payload.
pub fn payload(frame: &SymbolFrame, params: &WaveformParams) -> Result<ComplexSignal> {
    frame.check_params(params)?;
    let npri = params.samples_per_pri();
    let mos = params.oversampling;
    let mut out = vec![Complex64::new(0.0, 0.0); params.frame_len()];
    for p in 0..params.pulses {
        for (l, &s) in frame.column(p).iter().enumerate() {
            let start = p * npri + l * mos;
            out[start..start + mos].iter_mut().for_each(|v| *v = s);
        }
    }
    Ok(ComplexSignal::new(out, params.sample_period()))
}

/// Joint PC-FMCW waveform: chirp train times payload.
pub fn pc_fmcw(frame: &SymbolFrame, params: &WaveformParams) -> Result<ComplexSignal> {
    let mut sig = payload(frame, params)?;
    let pulse = chirp_pulse(params);
    let npri = params.samples_per_pri();
    for p in 0..params.pulses {
        for (v, c) in sig.samples[p * npri..p * npri + pulse.len()]
            .iter_mut()
            .zip(&pulse)
        {
            *v *= c;
        }
    }
    Ok(sig)
}

/// Reshape a frame-length signal to `samples_per_pri × P`.
pub fn reshape_fast_slow(sig: &ComplexSignal, params: &WaveformParams) -> Result<PulseMatrix> {
    let npri = params.samples_per_pri();
    let want = params.pulses * npri;
    if sig.len() != want {
        return Err(IsacError::LengthMismatch {
            expected: want,
            actual: sig.len(),
        });
    }
    Ok(PulseMatrix {
        rows: npri,
        cols: params.pulses,
        data: sig.samples.clone(),
    })
}

/// Samples of `α·e^{j2πf_D t}·x(t − τ)` on the frame grid, with `x` the
/// PC-FMCW waveform of `frame`, evaluated in closed form.
///
/// The chirp phase is exact for any sub-sample delay. The symbol envelope
/// (pulse window times symbols) is averaged over each sample period, so the
/// output is continuous in `τ`; on-grid delays reduce to point sampling. For
/// `τ = 0`, `f_D = 0`, `α = 1` this equals [`pc_fmcw`].
pub fn render_path(
    frame: &SymbolFrame,
    params: &WaveformParams,
    alpha: Complex64,
    tau: f64,
    doppler: f64,
) -> Result<ComplexSignal> {
    frame.check_params(params)?;
    let mut out = ComplexSignal::zeros(params.frame_len(), params.sample_period());
    accumulate_path(&mut out.samples, frame, params, alpha, tau, doppler);
    Ok(out)
}

/// Add the closed-form path response of [`render_path`] into `out`.
pub fn accumulate_path(
    out: &mut [Complex64],
    frame: &SymbolFrame,
    params: &WaveformParams,
    alpha: Complex64,
    tau: f64,
    doppler: f64,
) {
    let ts = params.sample_period();
    let npri = params.samples_per_pri() as f64;
    let npulse = params.samples_per_pulse() as f64;
    let mos = params.oversampling as f64;
    let lc = params.symbols_per_pulse as i64;
    let delay = tau / ts;
    let len = out.len();
    let w_d = 2.0 * PI * doppler * ts;
    let zero = Complex64::new(0.0, 0.0);
    for p in 0..params.pulses {
        let symbol = |l: i64| {
            if (0..lc).contains(&l) {
                frame.get(l as usize, p)
            } else {
                zero
            }
        };
        let origin = p as f64 * npri + delay;
        let first = (snap(origin - 1.0).floor() + 1.0).max(0.0) as usize;
        let last = (snap(origin + npulse).ceil().max(0.0) as usize).min(len);
        for (n, v) in out.iter_mut().enumerate().take(last).skip(first) {
            // Source interval [s, s + 1) in samples from the pulse start.
            let s = snap(n as f64 - origin);
            if s <= -1.0 || s >= npulse {
                continue;
            }
            let l = snap(s / mos).floor() as i64;
            let edge = (l + 1) as f64 * mos;
            let env = if edge >= s + 1.0 || edge - s >= 1.0 - 1e-9 {
                symbol(l)
            } else {
                let w = edge - s;
                symbol(l) * w + symbol(l + 1) * (1.0 - w)
            };
            if env == zero {
                continue;
            }
            let phase = chirp_phase(s * ts, params) + w_d * n as f64;
            *v += alpha * env * cis(phase);
        }
    }
}
