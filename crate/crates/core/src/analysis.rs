//! Closed-form dispersion of interference and echoes in the delay-Doppler
//! map, a Monte-Carlo autocorrelation oracle, and Doppler grid arithmetic.
//!
//! Axes are normalized as in the map: delay in unpadded fast-time bins,
//! Doppler in unpadded slow-time bins.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::dsp::cis;
use crate::error::{invalid, Result};
use crate::waveform::{Constellation, PulseMatrix, WaveformParams};

/// Relative guard on a kernel denominator before the limit is used.
const SINGULAR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionSpec {
    /// Mean channel power `E|α|²`.
    pub sigma2: f64,
    /// Beat frequency (Hz).
    pub beat: f64,
    /// Doppler frequency (Hz); used for echoes only.
    pub doppler: f64,
    pub params: WaveformParams,
}

impl DispersionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(invalid("sigma2", "must be finite and >= 0"));
        }
        self.params.validate()
    }

    /// Fast-time bins per pulse.
    fn fast_bins(&self) -> usize {
        self.params.samples_per_pulse()
    }
}

/// `sin(πx·n/m) / sin(πx/m)` with its limit `±n` where the denominator
/// vanishes.
fn ratio(x: f64, n: f64, m: f64) -> f64 {
    let d = (PI * x / m).sin();
    if d.abs() < SINGULAR {
        // x/m is an integer k: the limit is n·(−1)^{k(n−1)}.
        let k = (x / m).round() as i64;
        let sign = if (k * (n.round() as i64 - 1)).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        return n * sign;
    }
    (PI * x * n / m).sin() / d
}

/// Mean power of an uncompensated PSK interferer at delay bin `tau` (any
/// Doppler bin): `σ²·P·Lc·sin²(π(τ + f_B·T)/Lc) / sin²(π(τ + f_B·T)/(Mos·Lc))`.
pub fn interference_power(spec: &DispersionSpec, tau: f64) -> f64 {
    let p = &spec.params;
    let x = tau + spec.beat * p.pulse_duration;
    let n = spec.fast_bins() as f64;
    let m = p.oversampling as f64;
    let r = ratio(x, m, n);
    spec.sigma2 * p.pulses as f64 * p.symbols_per_pulse as f64 * r * r
}

/// Grid of [`interference_power`], rows over `tau_bins`, columns over
/// `f_bins` (constant along columns).
pub fn interference_dispersion(spec: &DispersionSpec, tau_bins: &[f64], f_bins: &[f64]) -> Vec<Vec<f64>> {
    tau_bins
        .iter()
        .map(|&t| vec![interference_power(spec, t); f_bins.len()])
        .collect()
}

/// Power of a compensated echo at `(tau, f)`: the squared Dirichlet kernels
/// centred on the echo's tone bin `−f_B·T` and Doppler bin `f_D·T_CPI`,
/// scaled so the peak is `σ²·P²·Lc²·Mos²`.
pub fn echo_power(spec: &DispersionSpec, tau: f64, f: f64) -> f64 {
    let p = &spec.params;
    let n = spec.fast_bins() as f64;
    let pulses = p.pulses as f64;
    let u = f - spec.doppler * p.cpi();
    let v = tau + spec.beat * p.pulse_duration;
    let a = ratio(u, pulses, pulses);
    let b = ratio(v, n, n);
    spec.sigma2 * a * a * b * b
}

pub fn echo_dispersion(spec: &DispersionSpec, tau_bins: &[f64], f_bins: &[f64]) -> Vec<Vec<f64>> {
    tau_bins
        .iter()
        .map(|&t| f_bins.iter().map(|&f| echo_power(spec, t, f)).collect())
        .collect()
}

/// Peak echo power over peak interference power at equal `σ²`, in dB.
pub fn processing_gain_db(params: &WaveformParams) -> f64 {
    10.0 * (params.pulses as f64 * params.symbols_per_pulse as f64).log10()
}

/// One processed interferer frame: a tone at `−f_B` and slow-time rotation
/// at `f_D`, multiplied by the staircase of independent PSK symbol ratios.
pub fn interferer_frame<R: Rng + ?Sized>(
    gamma: Complex64,
    beat: f64,
    doppler: f64,
    params: &WaveformParams,
    c: Constellation,
    rng: &mut R,
) -> PulseMatrix {
    let n = params.samples_per_pulse();
    let mos = params.oversampling;
    let ts = params.sample_period();
    let order = c.order();
    let tone: Vec<Complex64> = (0..n).map(|l| cis(-2.0 * PI * beat * ts * l as f64)).collect();
    let mut z = PulseMatrix::zeros(n, params.pulses);
    for p in 0..params.pulses {
        let slow = gamma * cis(2.0 * PI * doppler * params.pri * p as f64);
        let col = z.column_mut(p);
        for s in 0..params.symbols_per_pulse {
            let own = c.point(rng.gen_range(0..order));
            let other = c.point(rng.gen_range(0..order));
            let sym = slow * other * own.conj() / own.norm_sqr();
            for l in s * mos..(s + 1) * mos {
                col[l] = sym * tone[l];
            }
        }
    }
    z
}

/// Monte-Carlo autocorrelation of processed interferer frames,
/// `E Σ_p Σ_l z(l,p)·conj(z(l−Δl, p−Δp))` over the lags
/// `|Δl| ≤ max_fast`, `|Δp| ≤ max_slow`.
#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation {
    pub max_fast: usize,
    pub max_slow: usize,
    /// Row-major over `Δl = −max_fast..=max_fast`, then `Δp`.
    pub values: Vec<Complex64>,
    /// Sample standard error of each mean (magnitude).
    pub std_error: Vec<f64>,
}

impl Autocorrelation {
    pub fn get(&self, dl: i64, dp: i64) -> Complex64 {
        self.values[self.index(dl, dp)]
    }

    pub fn error(&self, dl: i64, dp: i64) -> f64 {
        self.std_error[self.index(dl, dp)]
    }

    fn index(&self, dl: i64, dp: i64) -> usize {
        let w = 2 * self.max_slow + 1;
        (dl + self.max_fast as i64) as usize * w + (dp + self.max_slow as i64) as usize
    }
}

#[allow(clippy::too_many_arguments)]
pub fn autocorr_interference<R: Rng + ?Sized>(
    params: &WaveformParams,
    gamma: Complex64,
    beat: f64,
    doppler: f64,
    frames: usize,
    max_fast: usize,
    max_slow: usize,
    rng: &mut R,
) -> Result<Autocorrelation> {
    if frames == 0 {
        return Err(invalid("frames", "at least one frame is needed"));
    }
    let n = params.samples_per_pulse() as i64;
    let pulses = params.pulses as i64;
    let cells = (2 * max_fast + 1) * (2 * max_slow + 1);
    let mut sum = vec![Complex64::new(0.0, 0.0); cells];
    let mut sq = vec![0.0; cells];
    let w = 2 * max_slow + 1;
    for _ in 0..frames {
        let z = interferer_frame(gamma, beat, doppler, params, Constellation::Qpsk, rng);
        for (i, dl) in (-(max_fast as i64)..=max_fast as i64).enumerate() {
            for (j, dp) in (-(max_slow as i64)..=max_slow as i64).enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in dp.max(0)..pulses.min(pulses + dp) {
                    let a = z.column(p as usize);
                    let b = z.column((p - dp) as usize);
                    for l in dl.max(0)..n.min(n + dl) {
                        acc += a[l as usize] * b[(l - dl) as usize].conj();
                    }
                }
                sum[i * w + j] += acc;
                sq[i * w + j] += acc.norm_sqr();
            }
        }
    }
    let f = frames as f64;
    let values: Vec<Complex64> = sum.iter().map(|s| s / f).collect();
    let std_error = values
        .iter()
        .zip(&sq)
        .map(|(m, s)| ((s / f - m.norm_sqr()).max(0.0) / f).sqrt())
        .collect();
    Ok(Autocorrelation {
        max_fast,
        max_slow,
        values,
        std_error,
    })
}

/// Closed form of the same autocorrelation:
/// `σ²·Mos·Lc·P·δ(Δp)·e^{−j2π f_B Ts Δl}·Λ(Δl/Mos)`.
pub fn autocorr_closed_form(params: &WaveformParams, sigma2: f64, beat: f64, dl: i64, dp: i64) -> Complex64 {
    if dp != 0 {
        return Complex64::new(0.0, 0.0);
    }
    let m = params.oversampling as f64;
    let tri = (1.0 - (dl as f64 / m).abs()).max(0.0);
    let scale = sigma2 * params.samples_per_pulse() as f64 * params.pulses as f64 * tri;
    cis(-2.0 * PI * beat * params.sample_period() * dl as f64) * scale
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerGrid {
    /// Bin spacing (Hz).
    pub resolution: f64,
    /// Distance from the true Doppler to the nearest bin centre (Hz).
    pub accuracy: f64,
}

/// Doppler bin spacing after zero-padding and the quantization error of a
/// given Doppler.
pub fn resolution_accuracy(params: &WaveformParams, doppler: f64, zero_pad: usize) -> DopplerGrid {
    let resolution = 1.0 / ((1 + zero_pad) as f64 * params.cpi());
    let x = crate::dsp::snap(doppler / resolution);
    DopplerGrid {
        resolution,
        accuracy: (x - x.round()).abs() * resolution,
    }
}
