//! Communication receiver: pilot-pulse time synchronization, dechirp, fine
//! timing, CFO estimation, integrate-and-dump, one-tap equalization and
//! symbol decision or soft decoding.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::PropagationPath;
use crate::dsp::{self, cis};
use crate::error::{IsacError, Result};
use crate::link::LinkFormat;
use crate::radar_rx::dechirp_at;
use crate::waveform::{pc_fmcw, render_path, ComplexSignal, PulseMatrix, SymbolFrame, WaveformParams};

/// Zero-padding factor of the spectrum used for fine timing.
const FINE_PAD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommConfig {
    pub format: LinkFormat,
    /// Estimate the sub-sample delay from the pilot pulse.
    pub fine_timing: bool,
    /// Refine the CFO by a least-squares phase slope across pulses.
    pub cfo_refine: bool,
    /// Largest Doppler shift the tone search allows for (Hz).
    pub max_doppler: f64,
}

impl CommConfig {
    pub fn new(format: LinkFormat) -> Self {
        Self {
            format,
            fine_timing: true,
            cfo_refine: true,
            max_doppler: 20e3,
        }
    }
}

/// Everything the communication block learned about its link.
#[derive(Debug, Clone, PartialEq)]
pub struct CommEstimate {
    /// Coarse timing lag (samples).
    pub lag: usize,
    pub tau_hat: f64,
    pub f_d_hat: f64,
    /// In-pulse tone after dechirp and pilot removal (Hz).
    pub tone_hat: f64,
    /// Complex path gain for reconstruction.
    pub alpha_hat: Complex64,
    /// One-tap equalizer gain on the integrated symbols.
    pub gain: Complex64,
    /// Post-equalization noise variance estimated from the pilots.
    pub noise_var: f64,
    /// Integrated, derotated symbols before equalization (`Lc × P`,
    /// column-major).
    pub soft_symbols: Vec<Complex64>,
    /// Equalized symbols.
    pub equalized: Vec<Complex64>,
    pub decided_bits: Vec<u8>,
    /// Frame regenerated from the decided bits.
    pub frame: SymbolFrame,
}

impl CommEstimate {
    pub fn path(&self) -> PropagationPath {
        PropagationPath {
            alpha: self.alpha_hat,
            tau: self.tau_hat,
            doppler: self.f_d_hat,
        }
    }
}

/// Samples of the pilot pulse as transmitted.
pub fn pilot_waveform(format: &LinkFormat, params: &WaveformParams) -> Result<Vec<Complex64>> {
    let frame = format.pilot_frame(params)?;
    let x = pc_fmcw(&frame, params)?;
    Ok(x.samples[..params.samples_per_pulse()].to_vec())
}

/// Lag in `0..=max_lag` maximizing `|Σ r[lag+n]·conj(pilot[n])|`; ties go to
/// the smaller lag.
pub fn time_sync(r: &ComplexSignal, pilot: &[Complex64], max_lag: usize) -> Result<usize> {
    if pilot.len() > r.len() {
        return Err(IsacError::LengthMismatch {
            expected: pilot.len(),
            actual: r.len(),
        });
    }
    let last = max_lag.min(r.len() - pilot.len());
    let mut best = 0.0;
    let mut lag = 0;
    for k in 0..=last {
        let c = dsp::inner(&r.samples[k..k + pilot.len()], pilot).norm_sqr();
        if c > best {
            best = c;
            lag = k;
        }
    }
    if best == 0.0 {
        return Err(IsacError::NoSyncPeak);
    }
    Ok(lag)
}

/// Dechirp with the pulse windows starting `lag` samples into each PRI.
pub fn comm_dechirp(r: &ComplexSignal, lag: usize, params: &WaveformParams) -> Result<PulseMatrix> {
    if lag >= params.frame_len() {
        return Err(IsacError::DelayOutOfFrame {
            delay: lag as f64 * params.sample_period(),
            frame: params.frame_duration(),
        });
    }
    dechirp_at(r, params, lag)
}

/// Integrate-and-dump of pulse `p`, symbol `l` after removing the phase
/// `2π(tone·nTs + f_D·p·T_PRI)`.
fn integrate(y: &PulseMatrix, params: &WaveformParams, tone: f64, f_d: f64) -> Vec<Complex64> {
    let mos = params.oversampling;
    let ts = params.sample_period();
    let lc = params.symbols_per_pulse;
    let w_in = -2.0 * PI * tone * ts;
    let mut out = Vec::with_capacity(lc * y.cols);
    let rot: Vec<Complex64> = (0..y.rows).map(|n| cis(w_in * n as f64)).collect();
    for p in 0..y.cols {
        let slow = cis(-2.0 * PI * f_d * p as f64 * params.pri);
        let col = y.column(p);
        for l in 0..lc {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in l * mos..(l + 1) * mos {
                acc += col[n] * rot[n];
            }
            out.push(acc * slow / mos as f64);
        }
    }
    out
}

/// CFO from the lag-one slow-time autocorrelation of pilot-bearing symbols.
pub fn cfo_estimate(y: &PulseMatrix, pilots: &SymbolFrame, params: &WaveformParams) -> Result<f64> {
    let soft = integrate(y, params, 0.0, 0.0);
    cfo_from_soft(&soft, pilots, params)
}

fn cfo_from_soft(soft: &[Complex64], pilots: &SymbolFrame, params: &WaveformParams) -> Result<f64> {
    let lc = params.symbols_per_pulse;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut pairs = 0;
    for p in 0..params.pulses.saturating_sub(1) {
        for l in 0..lc {
            if pilots.is_pilot(l, p) && pilots.is_pilot(l, p + 1) {
                let a = pilots.get(l, p);
                let b = pilots.get(l, p + 1);
                if a.norm_sqr() == 0.0 || b.norm_sqr() == 0.0 {
                    continue;
                }
                let ratio = b / a;
                acc += soft[p * lc + l + lc] * soft[p * lc + l].conj() * ratio.conj();
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(IsacError::InsufficientPilots(
            "no pilot position repeats in consecutive pulses".into(),
        ));
    }
    Ok(acc.arg() / (2.0 * PI * params.pri))
}

/// Per-pulse pilot correlations `Σ soft·conj(pilot)`.
fn pilot_phasors(soft: &[Complex64], pilots: &SymbolFrame, params: &WaveformParams) -> Vec<Complex64> {
    let lc = params.symbols_per_pulse;
    (0..params.pulses)
        .map(|p| {
            (0..lc)
                .filter(|&l| pilots.is_pilot(l, p))
                .map(|l| soft[p * lc + l] * pilots.get(l, p).conj())
                .sum()
        })
        .collect()
}

/// Least-squares slope (radians per pulse) of the unwrapped phases.
fn phase_slope(h: &[Complex64]) -> f64 {
    let mut phases = Vec::with_capacity(h.len());
    let mut prev = 0.0;
    for (i, v) in h.iter().enumerate() {
        let a = v.arg();
        let u = if i == 0 {
            a
        } else {
            prev + (a - prev + PI).rem_euclid(2.0 * PI) - PI
        };
        phases.push(u);
        prev = u;
    }
    let n = phases.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = phases.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in phases.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Peak of the zero-padded spectrum of `x` within `|f| ≤ limit`, refined by
/// a parabola through the neighbouring magnitudes. Returns `(|peak|, f)`.
fn spectral_peak(
    x: &mut Vec<Complex64>,
    n: usize,
    fft: &dyn rustfft::Fft<f64>,
    ts: f64,
    limit: f64,
) -> (f64, f64) {
    let len = x.len();
    x[n..].iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    fft.process(x);
    let df = 1.0 / (len as f64 * ts);
    let kmax = ((limit / df).ceil() as usize).min(len / 2 - 1);
    let mag = |k: i64| x[k.rem_euclid(len as i64) as usize].norm();
    let mut best = (-1.0, 0i64);
    for k in -(kmax as i64)..=kmax as i64 {
        let m = mag(k);
        if m > best.0 {
            best = (m, k);
        }
    }
    let (peak, k) = best;
    let (a, c) = (mag(k - 1), mag(k + 1));
    let den = a - 2.0 * peak + c;
    let delta = if den != 0.0 { (0.5 * (a - c) / den).clamp(-0.5, 0.5) } else { 0.0 };
    (peak, (k as f64 + delta) * df)
}

/// Joint lag and tone search: for each lag the pilot pulse is removed from
/// the input and the strongest tone within `|f| ≤ tone_limit` is measured.
///
/// A fractional delay leaves the residual chirp slope as a tone after pilot
/// removal, so this metric stays near its peak where the plain correlation
/// (the zero-frequency bin) can vanish when the sample rate is below the
/// sweep bandwidth. Returns `(lag, tone)`; ties go to the smaller lag.
pub fn tone_sync(
    r: &ComplexSignal,
    pilot: &[Complex64],
    max_lag: usize,
    tone_limit: f64,
) -> Result<(usize, f64)> {
    let n = pilot.len();
    if n > r.len() {
        return Err(IsacError::LengthMismatch {
            expected: n,
            actual: r.len(),
        });
    }
    let len = (n * FINE_PAD).next_power_of_two();
    let fft = dsp::forward(len);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    let mut best = (0.0, 0, 0.0);
    for k in 0..=max_lag.min(r.len() - n) {
        for (i, (x, p)) in r.samples[k..k + n].iter().zip(pilot).enumerate() {
            buf[i] = x * p.conj();
        }
        let (m, f) = spectral_peak(&mut buf, n, fft.as_ref(), r.sample_period, tone_limit);
        if m > best.0 {
            best = (m, k, f);
        }
    }
    if best.0 == 0.0 {
        return Err(IsacError::NoSyncPeak);
    }
    Ok((best.1, best.2))
}

/// Least-squares gain of `soft` on the pilots and the residual variance.
fn pilot_gain(soft: &[Complex64], pilots: &SymbolFrame) -> Result<(Complex64, f64)> {
    let mut num = Complex64::new(0.0, 0.0);
    let mut den = 0.0;
    let mut count = 0usize;
    for (i, (&m, &s)) in pilots.pilot_mask().iter().zip(pilots.symbols()).enumerate() {
        if m {
            num += soft[i] * s.conj();
            den += s.norm_sqr();
            count += 1;
        }
    }
    if count < 2 || den == 0.0 {
        return Err(IsacError::InsufficientPilots(format!("{count} pilots")));
    }
    let g = num / den;
    let mut res = 0.0;
    for (i, (&m, &s)) in pilots.pilot_mask().iter().zip(pilots.symbols()).enumerate() {
        if m {
            res += (soft[i] - g * s).norm_sqr();
        }
    }
    Ok((g, res / (count - 1) as f64))
}

/// One-tap equalization and decision. Returns the information bits and the
/// equalized symbols.
pub fn equalize_and_decide(
    soft: &[Complex64],
    gain: Complex64,
    noise_var: f64,
    format: &LinkFormat,
    params: &WaveformParams,
) -> Result<(Vec<u8>, Vec<Complex64>)> {
    if gain.norm_sqr() == 0.0 || !gain.norm().is_finite() {
        return Err(IsacError::ZeroGain);
    }
    let eq: Vec<Complex64> = soft.iter().map(|s| s / gain).collect();
    let nv = noise_var / gain.norm_sqr();
    let bits = format.recover(&eq, nv, params)?;
    Ok((bits, eq))
}

/// Least-squares gain of `x` onto `basis`: `<x, u>/<u, u>`.
pub fn project_gain(x: &[Complex64], basis: &[Complex64]) -> Complex64 {
    let den = dsp::energy(basis);
    if den == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        dsp::inner(x, basis) / den
    }
}

/// Run the full communication chain on `r`.
pub fn process(r: &ComplexSignal, cfg: &CommConfig, params: &WaveformParams) -> Result<CommEstimate> {
    let format = &cfg.format;
    format.validate(params)?;
    let pilots = format.pilot_frame(params)?;
    let pw = pilot_waveform(format, params)?;
    let max_lag = params.samples_per_pri() - params.samples_per_pulse();
    let (lag, tone) = if cfg.fine_timing {
        let limit = params.sweep_rate() * params.sample_period() + cfg.max_doppler;
        tone_sync(r, &pw, max_lag, limit)?
    } else {
        (time_sync(r, &pw, max_lag)?, 0.0)
    };
    let y = comm_dechirp(r, lag, params)?;

    let raw = integrate(&y, params, tone, 0.0);
    let mut f_d = if params.pulses > 1 {
        cfo_from_soft(&raw, &pilots, params)?
    } else {
        0.0
    };
    let tone = if cfg.fine_timing { tone } else { f_d };
    if cfg.cfo_refine && params.pulses > 2 {
        let soft = integrate(&y, params, tone, f_d);
        let slope = phase_slope(&pilot_phasors(&soft, &pilots, params));
        f_d += slope / (2.0 * PI * params.pri);
    }
    let soft = integrate(&y, params, tone, f_d);
    let (gain, noise_var) = pilot_gain(&soft, &pilots)?;
    let (bits, equalized) = equalize_and_decide(&soft, gain, noise_var, format, params)?;
    let frame = format.build(&bits, params)?;

    let ts = params.sample_period();
    let delta = if cfg.fine_timing {
        (f_d - tone) / params.sweep_rate()
    } else {
        0.0
    };
    let tau = (lag as f64 * ts + delta).max(0.0);
    let unit = render_path(&frame, params, Complex64::new(1.0, 0.0), tau, f_d)?;
    let alpha = project_gain(&r.samples, &unit.samples);
    Ok(CommEstimate {
        lag,
        tau_hat: tau,
        f_d_hat: f_d,
        tone_hat: tone,
        alpha_hat: alpha,
        gain,
        noise_var: noise_var / gain.norm_sqr(),
        soft_symbols: soft,
        equalized,
        decided_bits: bits,
        frame,
    })
}

/// Bit errors between two equal-length bit vectors.
pub fn bit_errors(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{noise, render_paths, CommLink, PropagationPath, Scenario};
    use crate::waveform::Constellation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params4() -> WaveformParams {
        WaveformParams::new(77e9, 20e6, 100e-6, 105e-6, 20, 50, 8).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn received(
        fmt: &LinkFormat,
        p: &WaveformParams,
        path: PropagationPath,
        sigma2: f64,
        rng: &mut ChaCha8Rng,
    ) -> (ComplexSignal, SymbolFrame, Vec<u8>) {
        let (frame, bits) = fmt.random(p, rng).unwrap();
        let sc = Scenario {
            radar_paths: vec![],
            comm_links: vec![CommLink {
                path,
                frame: frame.clone(),
            }],
            noise_sigma2: sigma2,
        };
        let tx = SymbolFrame::ones(p.symbols_per_pulse, p.pulses);
        let r = crate::channel::superpose(&sc, &tx, p, rng).unwrap();
        (r, frame, bits)
    }

    #[test]
    fn integer_delay_sync_exact() {
        let p = params4();
        let fmt = LinkFormat::uncoded(Constellation::Qpsk, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in [0usize, 3, 20, 40] {
            let path = PropagationPath::new(c(1.0, 0.0), k as f64 * p.sample_period(), 0.0).unwrap();
            let (r, _, _) = received(&fmt, &p, path, 0.0, &mut rng);
            let pw = pilot_waveform(&fmt, &p).unwrap();
            assert_eq!(time_sync(&r, &pw, 40).unwrap(), k);
        }
    }

    #[test]
    fn sync_rejects_zero_input_and_breaks_ties_low() {
        let p = params4();
        let fmt = LinkFormat::uncoded(Constellation::Qpsk, 9);
        let pw = pilot_waveform(&fmt, &p).unwrap();
        let z = ComplexSignal::zeros(p.frame_len(), p.sample_period());
        assert_eq!(time_sync(&z, &pw, 40), Err(IsacError::NoSyncPeak));
        // Pilot of ones, input of ones: every lag has the same metric.
        let ones = vec![c(1.0, 0.0); 8];
        let r = ComplexSignal::new(vec![c(1.0, 0.0); 32], 1.0);
        assert_eq!(time_sync(&r, &ones, 10).unwrap(), 0);
    }

    #[test]
    fn dechirp_of_aligned_signal_is_staircase() {
        let p = params4();
        let fmt = LinkFormat::uncoded(Constellation::Qpsk, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let path = PropagationPath::new(c(1.0, 0.0), 0.0, 0.0).unwrap();
        let (r, frame, _) = received(&fmt, &p, path, 0.0, &mut rng);
        let y = comm_dechirp(&r, 0, &p).unwrap();
        for q in 0..p.pulses {
            for n in 0..p.samples_per_pulse() {
                assert!((y.get(n, q) - frame.get(n / 8, q)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_chirp_slope_for_timing_offset() {
        // Window d samples early: tone slope (B/T)·d·Ts after dechirp.
        let p = params4();
        let frame = SymbolFrame::ones(p.symbols_per_pulse, p.pulses);
        let d = 3;
        let r = render_paths(&frame, &[PropagationPath::new(c(1.0, 0.0), d as f64 * p.sample_period(), 0.0).unwrap()], &p).unwrap();
        let y = comm_dechirp(&r, 0, &p).unwrap();
        let ph = (y.get(101, 0) * y.get(100, 0).conj()).arg();
        let want = -2.0 * PI * p.sweep_rate() * d as f64 * p.sample_period() * p.sample_period();
        let diff = (ph - want + PI).rem_euclid(2.0 * PI) - PI;
        assert!(diff.abs() < 1e-9, "{ph} vs {want}");
    }

    #[test]
    fn cfo_exact_on_clean_tone() {
        let p = params4();
        let fmt = LinkFormat::uncoded(Constellation::Qpsk, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = PropagationPath::new(c(1.0, 0.0), 0.0, -300.0).unwrap();
        let (r, _, _) = received(&fmt, &p, path, 0.0, &mut rng);
        let y = comm_dechirp(&r, 0, &p).unwrap();
        let est = cfo_estimate(&y, &fmt.pilot_frame(&p).unwrap(), &p).unwrap();
        assert!((est + 300.0).abs() < 1e-6, "{est}");
        // Beyond the unambiguous range the estimate aliases.
        let fa = 1.0 / (2.0 * p.pri) + 500.0;
        let path = PropagationPath::new(c(1.0, 0.0), 0.0, fa).unwrap();
        let (r, _, _) = received(&fmt, &p, path, 0.0, &mut rng);
        let y = comm_dechirp(&r, 0, &p).unwrap();
        let est = cfo_estimate(&y, &fmt.pilot_frame(&p).unwrap(), &p).unwrap();
        assert!((est - (fa - 1.0 / p.pri)).abs() < 1e-6, "{est}");
    }

    #[test]
    fn cfo_requires_repeated_pilots() {
        let p = WaveformParams::new(77e9, 20e6, 100e-6, 105e-6, 1, 50, 8).unwrap();
        let fmt = LinkFormat::uncoded(Constellation::Qpsk, 9);
        let y = PulseMatrix::zeros(400, 1);
        assert!(matches!(
            cfo_estimate(&y, &fmt.pilot_frame(&p).unwrap(), &p),
            Err(IsacError::InsufficientPilots(_))
        ));
    }

    #[test]
    fn noiseless_identity_all_constellations() {
        let p = params4();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for cst in Constellation::ALL {
            let fmt = LinkFormat::uncoded(cst, 9);
            let path = PropagationPath::new(c(1.0, 0.0), 0.0, 0.0).unwrap();
            let (r, frame, bits) = received(&fmt, &p, path, 0.0, &mut rng);
            let est = process(&r, &CommConfig::new(fmt), &p).unwrap();
            assert_eq!(est.decided_bits, bits, "{cst:?}");
            assert_eq!(est.frame, frame);
            assert!((est.alpha_hat - c(1.0, 0.0)).norm() < 1e-9);
            for (s, t) in est.soft_symbols.iter().zip(frame.symbols()) {
                assert!((s - t).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn recovers_fractional_delay_and_doppler() {
        let p = params4();
        let fmt = LinkFormat::uncoded(Constellation::Qpsk, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let alpha = c(0.6, -0.8);
        for tau in [47.4e-9, 2.5e-6, 1.33e-6] {
            let path = PropagationPath::new(alpha, tau, -300.0).unwrap();
            let (r, _, bits) = received(&fmt, &p, path, 0.0, &mut rng);
            let est = process(&r, &CommConfig::new(fmt), &p).unwrap();
            assert_eq!(bit_errors(&est.decided_bits, &bits), 0);
            assert!((est.tau_hat - tau).abs() < 2e-9, "{tau}: {}", est.tau_hat);
            // Samples straddling a symbol edge leak data into the pilots.
            assert!((est.f_d_hat + 300.0).abs() < 2.0, "{tau}: {}", est.f_d_hat);
            // Reconstruction cancels the signal to within -30 dB.
            let rec = render_paths(&est.frame, &[est.path()], &p).unwrap();
            let res: f64 = r.samples.iter().zip(&rec.samples).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(res / r.energy() < 1e-3, "{tau}: {}", res / r.energy());
        }
    }

    #[test]
    fn matched_filter_gain() {
        // Integrate-and-dump over Mos samples divides the noise variance by Mos.
        let p = params4();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = noise(p.frame_len(), 1.0, p.sample_period(), &mut rng);
        let y = comm_dechirp(&w, 0, &p).unwrap();
        let soft = integrate(&y, &p, 0.0, 0.0);
        let v = dsp::mean_power(&soft);
        assert!((dsp::db(1.0 / v) - dsp::db(8.0)).abs() < 0.2, "{}", dsp::db(1.0 / v));
    }

    #[test]
    fn decision_invariant_to_common_scaling() {
        let p = params4();
        let fmt = LinkFormat::uncoded(Constellation::Qam16, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (frame, bits) = fmt.random(&p, &mut rng).unwrap();
        let w = noise(frame.symbols().len(), 0.01, 1.0, &mut rng);
        let soft: Vec<Complex64> = frame.symbols().iter().zip(&w.samples).map(|(s, n)| s + n).collect();
        let (b1, _) = equalize_and_decide(&soft, c(1.0, 0.0), 0.01, &fmt, &p).unwrap();
        let k = c(-0.3, 2.2);
        let scaled: Vec<Complex64> = soft.iter().map(|s| s * k).collect();
        let (b2, _) = equalize_and_decide(&scaled, k, 0.01, &fmt, &p).unwrap();
        assert_eq!(b1, b2);
        assert!(bit_errors(&b1, &bits) < bits.len() / 20);
        assert_eq!(
            equalize_and_decide(&soft, c(0.0, 0.0), 0.01, &fmt, &p),
            Err(IsacError::ZeroGain)
        );
    }
}
