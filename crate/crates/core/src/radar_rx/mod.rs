//! Radar receiver: dechirp and low-pass, group-delay alignment, symbol
//! compensation, delay-Doppler map, CA-CFAR and parameter estimation.

pub mod cfar;
pub mod map;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::PropagationPath;
use crate::dsp::{self, cis, signed_bin};
use crate::error::{invalid, IsacError, Result};
use crate::waveform::{chirp_pulse, ComplexSignal, PulseMatrix, SymbolFrame, WaveformParams};

pub use cfar::{CfarConfig, Crossing};
pub use map::{delay_doppler, DelayDopplerMap};

/// How the beat frequency of a detection is read off the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeatEstimator {
    /// Centre of the peak bin.
    BinCenter,
    /// Three-bin complex interpolation around the peak.
    Interpolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarConfig {
    pub cfar: CfarConfig,
    pub zero_pad_fast: usize,
    pub zero_pad_doppler: usize,
    /// Extra low-pass bandwidth beyond `(B/T)·Tg` (Hz). `None` uses `2/Tc`.
    pub lpf_margin: Option<f64>,
    pub beat: BeatEstimator,
    /// Detections passed on for reconstruction.
    pub max_targets: usize,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            cfar: CfarConfig::default(),
            zero_pad_fast: 0,
            zero_pad_doppler: 0,
            lpf_margin: None,
            beat: BeatEstimator::Interpolated,
            max_targets: 1,
        }
    }
}

impl RadarConfig {
    pub fn lpf_cutoff(&self, params: &WaveformParams) -> f64 {
        let margin = self.lpf_margin.unwrap_or(2.0 / params.chip_duration());
        params.sweep_rate() * params.guard() + margin
    }
}

/// Dechirp each pulse over its `T` window; no filtering.
pub fn dechirp_raw(r: &ComplexSignal, params: &WaveformParams) -> Result<PulseMatrix> {
    dechirp_at(r, params, 0)
}

/// Dechirp with the windows starting `offset` samples into each PRI.
pub(crate) fn dechirp_at(r: &ComplexSignal, params: &WaveformParams, offset: usize) -> Result<PulseMatrix> {
    let npri = params.samples_per_pri();
    let npulse = params.samples_per_pulse();
    if r.len() != params.frame_len() {
        return Err(IsacError::LengthMismatch {
            expected: params.frame_len(),
            actual: r.len(),
        });
    }
    let chirp = chirp_pulse(params);
    let mut out = PulseMatrix::zeros(npulse, params.pulses);
    for p in 0..params.pulses {
        let start = p * npri + offset;
        let col = out.column_mut(p);
        for (n, v) in col.iter_mut().enumerate() {
            if let Some(x) = r.samples.get(start + n) {
                *v = x * chirp[n].conj();
            }
        }
    }
    Ok(out)
}

/// Multiply every pulse spectrum by `response`.
fn apply_response(y: &mut PulseMatrix, response: &[Complex64]) {
    let n = y.rows;
    let fwd = dsp::forward(n);
    let inv = dsp::inverse(n);
    let scale = 1.0 / n as f64;
    for p in 0..y.cols {
        let col = y.column_mut(p);
        fwd.process(col);
        for (v, h) in col.iter_mut().zip(response) {
            *v *= h * scale;
        }
        inv.process(col);
    }
}

/// Tone frequency of per-pulse DFT bin `k`.
fn bin_frequency(k: usize, params: &WaveformParams) -> f64 {
    signed_bin(k, params.samples_per_pulse()) / params.pulse_duration
}

fn lowpass_response(params: &WaveformParams, cutoff: f64) -> Vec<Complex64> {
    (0..params.samples_per_pulse())
        .map(|k| {
            if bin_frequency(k, params).abs() <= cutoff * (1.0 + 1e-12) {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect()
}

fn group_delay_response(params: &WaveformParams) -> Vec<Complex64> {
    let k_t = params.pulse_duration / params.bandwidth;
    (0..params.samples_per_pulse())
        .map(|k| {
            let f = bin_frequency(k, params);
            cis(-PI * k_t * f * f)
        })
        .collect()
}

/// Ideal per-pulse low-pass with the given cutoff (Hz).
pub fn lowpass(y: &PulseMatrix, params: &WaveformParams, cutoff: f64) -> PulseMatrix {
    let mut out = y.clone();
    apply_response(&mut out, &lowpass_response(params, cutoff));
    out
}

/// Dechirp followed by the ideal low-pass of cutoff `(B/T)·Tg + margin`.
pub fn dechirp(r: &ComplexSignal, params: &WaveformParams, margin: f64) -> Result<PulseMatrix> {
    let y = dechirp_raw(r, params)?;
    Ok(lowpass(&y, params, params.sweep_rate() * params.guard() + margin))
}

/// All-pass filter with phase `−π(T/B)f²`, applied per pulse.
pub fn group_delay_filter(y: &PulseMatrix, params: &WaveformParams) -> PulseMatrix {
    let mut out = y.clone();
    apply_response(&mut out, &group_delay_response(params));
    out
}

/// Divide out the transmitted symbols: multiply by `conj(I)/|I|²` over each
/// symbol period.
pub fn compensate_symbols(
    y: &PulseMatrix,
    frame: &SymbolFrame,
    params: &WaveformParams,
) -> Result<PulseMatrix> {
    frame.check_params(params)?;
    if y.rows != params.samples_per_pulse() || y.cols != params.pulses {
        return Err(IsacError::ShapeMismatch {
            expected: (params.samples_per_pulse(), params.pulses),
            actual: (y.rows, y.cols),
        });
    }
    let mos = params.oversampling;
    let mut out = y.clone();
    for p in 0..y.cols {
        for l in 0..params.symbols_per_pulse {
            let s = frame.get(l, p);
            let m = s.norm_sqr();
            if m == 0.0 {
                return Err(IsacError::ZeroSymbol { row: l, col: p });
            }
            let w = s.conj() / m;
            for v in &mut out.column_mut(p)[l * mos..(l + 1) * mos] {
                *v *= w;
            }
        }
    }
    Ok(out)
}

/// Dechirp, low-pass, group-delay filter and compensate in one pass per
/// pulse. Equal to the composition of the separate stages.
pub fn front_end(
    r: &ComplexSignal,
    frame: &SymbolFrame,
    params: &WaveformParams,
    cfg: &RadarConfig,
) -> Result<PulseMatrix> {
    let mut y = dechirp_raw(r, params)?;
    let lp = lowpass_response(params, cfg.lpf_cutoff(params));
    let gd = group_delay_response(params);
    let h: Vec<Complex64> = lp.iter().zip(&gd).map(|(a, b)| a * b).collect();
    apply_response(&mut y, &h);
    compensate_symbols(&y, frame, params)
}

/// Beat-frequency search region `[lo, hi]` (Hz) for delays in `[0, Tg]`
/// with Doppler up to the slow-time Nyquist rate.
pub fn beat_search_range(params: &WaveformParams) -> (f64, f64) {
    let margin = 1.0 / (2.0 * params.pri) + 1.0 / params.pulse_duration;
    (-margin, params.sweep_rate() * params.guard() + margin)
}

pub fn search_rows(map: &DelayDopplerMap, params: &WaveformParams) -> Vec<usize> {
    let (lo, hi) = beat_search_range(params);
    map.rows_in_beat_range(lo, hi)
}

/// A merged CFAR detection and the path it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub row: usize,
    pub col: usize,
    pub peak: Complex64,
    pub power: f64,
    pub noise: f64,
    pub beat: f64,
    pub path: PropagationPath,
    /// Delay estimate fell inside `[0, Tg]` (after a half-resolution
    /// tolerance and clamping).
    pub valid: bool,
}

/// Detect local maxima over the search region.
pub fn cfar_detect(
    map: &DelayDopplerMap,
    params: &WaveformParams,
    cfg: &RadarConfig,
) -> Result<Vec<Crossing>> {
    let power = map.power();
    let rows = search_rows(map, params);
    let xs = cfar::cfar_crossings(&power, map.rows, map.cols, &rows, &cfg.cfar)?;
    Ok(cfar::merge_local_maxima(
        &power,
        map.rows,
        map.cols,
        &xs,
        1 + map.zero_pad_fast,
        1 + map.zero_pad_doppler,
    ))
}

/// Fractional bin offset of a peak from three complex DFT samples, with the
/// rectangular-window bias correction.
fn interpolate_peak(left: Complex64, mid: Complex64, right: Complex64, n: usize) -> f64 {
    let den = 2.0 * mid - left - right;
    if den.norm_sqr() == 0.0 {
        return 0.0;
    }
    let delta = ((left - right) / den).re;
    let a = PI / n as f64;
    (a.tan() / a * delta).clamp(-0.5, 0.5)
}

/// Turn a map cell into path estimates.
pub fn estimate_params(
    row: usize,
    col: usize,
    map: &DelayDopplerMap,
    params: &WaveformParams,
    beat_mode: BeatEstimator,
) -> (PropagationPath, f64, bool) {
    let peak = map.get(row, col);
    let f_d = map.doppler_of_col(col);
    let mut tone_bins = signed_bin(row, map.rows);
    if beat_mode == BeatEstimator::Interpolated && map.zero_pad_fast == 0 {
        let up = (row + 1) % map.rows;
        let down = (row + map.rows - 1) % map.rows;
        tone_bins += interpolate_peak(map.get(down, col), peak, map.get(up, col), map.rows);
    }
    let f_b = -tone_bins * map.fast_spacing;
    let k_t = params.pulse_duration / params.bandwidth;
    let raw_tau = k_t * (f_b + f_d);
    let tol = 0.5 / params.bandwidth;
    let valid = raw_tau >= -tol && raw_tau <= params.guard() + tol;
    let tau = raw_tau.clamp(0.0, params.guard());
    let gamma = peak / (map.fast_len * map.slow_len) as f64;
    let alpha = gamma * cis(-PI * params.bandwidth * tau);
    (
        PropagationPath {
            alpha,
            tau,
            doppler: f_d,
        },
        f_b,
        valid,
    )
}

/// Output of one radar block.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarOutput {
    /// All merged detections, strongest first.
    pub detections: Vec<Detection>,
    /// Cells that crossed the threshold before merging.
    pub crossings: usize,
}

impl RadarOutput {
    /// Strongest detections with a plausible delay, at most `n`.
    pub fn targets(&self, n: usize) -> Vec<Detection> {
        self.detections.iter().filter(|d| d.valid).take(n).copied().collect()
    }
}

/// The complete radar chain on received samples `r`.
pub fn process(
    r: &ComplexSignal,
    frame: &SymbolFrame,
    params: &WaveformParams,
    cfg: &RadarConfig,
) -> Result<(RadarOutput, DelayDopplerMap)> {
    let z = front_end(r, frame, params, cfg)?;
    let map = delay_doppler(&z, params, cfg.zero_pad_fast, cfg.zero_pad_doppler);
    let power = map.power();
    let rows = search_rows(&map, params);
    let xs = cfar::cfar_crossings(&power, map.rows, map.cols, &rows, &cfg.cfar)?;
    let merged = cfar::merge_local_maxima(
        &power,
        map.rows,
        map.cols,
        &xs,
        1 + map.zero_pad_fast,
        1 + map.zero_pad_doppler,
    );
    let detections = merged
        .iter()
        .map(|x| {
            let (path, beat, valid) = estimate_params(x.row, x.col, &map, params, cfg.beat);
            Detection {
                row: x.row,
                col: x.col,
                peak: map.get(x.row, x.col),
                power: x.power,
                noise: x.noise,
                beat,
                path,
                valid,
            }
        })
        .collect();
    Ok((
        RadarOutput {
            detections,
            crossings: xs.len(),
        },
        map,
    ))
}

pub fn validate(cfg: &RadarConfig) -> Result<()> {
    cfg.cfar.validate()?;
    if let Some(m) = cfg.lpf_margin {
        if !(m.is_finite() && m >= 0.0) {
            return Err(invalid("lpf_margin", "must be >= 0"));
        }
    }
    Ok(())
}
