//! Propagation paths, received-signal superposition and the vehicular link
//! model.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dsp::{self, cis, signed_bin};
use crate::error::{invalid, IsacError, Result};
use crate::waveform::{accumulate_path, ComplexSignal, SymbolFrame, WaveformParams};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One propagation path: complex gain, delay and Doppler shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationPath {
    pub alpha: Complex64,
    pub tau: f64,
    pub doppler: f64,
}

impl PropagationPath {
    pub fn new(alpha: Complex64, tau: f64, doppler: f64) -> Result<Self> {
        let p = Self { alpha, tau, doppler };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.re.is_finite() && self.alpha.im.is_finite()) {
            return Err(invalid("alpha", "must be finite"));
        }
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(invalid("tau", format!("must be finite and >= 0, got {}", self.tau)));
        }
        if !self.doppler.is_finite() {
            return Err(invalid("doppler", "must be finite"));
        }
        Ok(())
    }

    pub fn power(&self) -> f64 {
        self.alpha.norm_sqr()
    }
}

/// Delay, Doppler-shift and scale a sampled signal.
///
/// The delay is applied as a linear phase ramp on the spectrum of the whole
/// signal, so it is circular over the frame and exact for content below the
/// Nyquist rate. The Doppler rotation uses absolute time.
pub fn apply_path(x: &ComplexSignal, path: &PropagationPath) -> Result<ComplexSignal> {
    path.validate()?;
    let n = x.len();
    let duration = n as f64 * x.sample_period;
    if path.tau > duration {
        return Err(IsacError::DelayOutOfFrame {
            delay: path.tau,
            frame: duration,
        });
    }
    let mut buf = x.samples.clone();
    if n > 0 && path.tau != 0.0 {
        let shift = path.tau / x.sample_period;
        let k = dsp::snap(shift);
        if k.fract() == 0.0 {
            let k = k as usize % n;
            buf.rotate_right(k);
        } else {
            dsp::forward(n).process(&mut buf);
            for (i, v) in buf.iter_mut().enumerate() {
                *v *= cis(-2.0 * PI * signed_bin(i, n) * shift / n as f64);
            }
            dsp::inverse(n).process(&mut buf);
            let scale = 1.0 / n as f64;
            buf.iter_mut().for_each(|v| *v *= scale);
        }
    }
    let w = 2.0 * PI * path.doppler;
    for (i, v) in buf.iter_mut().enumerate() {
        let t = x.start_time + i as f64 * x.sample_period;
        *v *= path.alpha * cis(w * t);
    }
    Ok(ComplexSignal {
        samples: buf,
        sample_period: x.sample_period,
        start_time: x.start_time,
    })
}

/// A communication link and the frame sent over it.
#[derive(Debug, Clone, PartialEq)]
pub struct CommLink {
    pub path: PropagationPath,
    pub frame: SymbolFrame,
}

/// Everything that reaches the receiver during one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub radar_paths: Vec<PropagationPath>,
    pub comm_links: Vec<CommLink>,
    /// Noise power per complex sample.
    pub noise_sigma2: f64,
}

/// The received frame and its noiseless constituents.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub radar: ComplexSignal,
    pub comm: ComplexSignal,
    pub noise: ComplexSignal,
    pub total: ComplexSignal,
}

/// Circular complex Gaussian noise of power `sigma2` per sample.
pub fn noise<R: Rng + ?Sized>(len: usize, sigma2: f64, sample_period: f64, rng: &mut R) -> ComplexSignal {
    let s = (sigma2.max(0.0) / 2.0).sqrt();
    let samples = (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        })
        .collect();
    ComplexSignal::new(samples, sample_period)
}

/// Sum of the paths of `frame`, evaluated in closed form on the frame grid.
pub fn render_paths(
    frame: &SymbolFrame,
    paths: &[PropagationPath],
    params: &WaveformParams,
) -> Result<ComplexSignal> {
    frame.check_params(params)?;
    let mut out = ComplexSignal::zeros(params.frame_len(), params.sample_period());
    for path in paths {
        check_delay(path, params)?;
        accumulate_path(&mut out.samples, frame, params, path.alpha, path.tau, path.doppler);
    }
    Ok(out)
}

fn check_delay(path: &PropagationPath, params: &WaveformParams) -> Result<()> {
    path.validate()?;
    if path.tau > params.frame_duration() {
        return Err(IsacError::DelayOutOfFrame {
            delay: path.tau,
            frame: params.frame_duration(),
        });
    }
    Ok(())
}

/// Build the received frame `r = r_R + r_C + w`, keeping the constituents.
///
/// Delayed waveforms are evaluated analytically rather than through
/// [`apply_path`]: the sampled chirp is aliased whenever the sample rate is
/// below the sweep bandwidth, and a spectral phase ramp would then delay the
/// alias rather than the chirp.
pub fn superpose_parts<R: Rng + ?Sized>(
    scenario: &Scenario,
    tx_frame: &SymbolFrame,
    params: &WaveformParams,
    rng: &mut R,
) -> Result<Received> {
    if !(scenario.noise_sigma2 >= 0.0) {
        return Err(invalid("noise_sigma2", "must be >= 0"));
    }
    let radar = render_paths(tx_frame, &scenario.radar_paths, params)?;
    let mut comm = ComplexSignal::zeros(params.frame_len(), params.sample_period());
    for link in &scenario.comm_links {
        link.frame.check_params(params)?;
        check_delay(&link.path, params)?;
        let p = &link.path;
        accumulate_path(&mut comm.samples, &link.frame, params, p.alpha, p.tau, p.doppler);
    }
    let w = if scenario.noise_sigma2 > 0.0 {
        noise(params.frame_len(), scenario.noise_sigma2, params.sample_period(), rng)
    } else {
        ComplexSignal::zeros(params.frame_len(), params.sample_period())
    };
    let mut total = radar.clone();
    for ((t, c), n) in total.samples.iter_mut().zip(&comm.samples).zip(&w.samples) {
        *t = (*t + c) + n;
    }
    Ok(Received {
        radar,
        comm,
        noise: w,
        total,
    })
}

pub fn superpose<R: Rng + ?Sized>(
    scenario: &Scenario,
    tx_frame: &SymbolFrame,
    params: &WaveformParams,
    rng: &mut R,
) -> Result<ComplexSignal> {
    Ok(superpose_parts(scenario, tx_frame, params, rng)?.total)
}

/// Samplewise sum of equal-length signals.
pub fn sum_signals(parts: &[&ComplexSignal]) -> Result<ComplexSignal> {
    let first = parts.first().ok_or_else(|| invalid("parts", "nothing to sum"))?;
    let mut out = (*first).clone();
    for s in &parts[1..] {
        if s.len() != out.len() {
            return Err(IsacError::LengthMismatch {
                expected: out.len(),
                actual: s.len(),
            });
        }
        out.samples.iter_mut().zip(&s.samples).for_each(|(a, b)| *a += b);
    }
    Ok(out)
}

/// Noise power per sample giving symbol SNR `es_n0` (linear) for a signal of
/// per-sample power `signal_power` after integrating `oversampling` samples.
pub fn noise_for_es_n0(es_n0: f64, signal_power: f64, oversampling: usize) -> f64 {
    oversampling as f64 * signal_power / es_n0
}

/// Geometry of the roadside-unit / following-vehicle scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// Roadside unit position (m).
    pub rsu: [f64; 2],
    /// Target position at step 0 (m).
    pub target: [f64; 2],
    /// Closing speed toward the receiver at the origin (m/s).
    pub speed: f64,
    /// Reflection coefficient of the target.
    pub reflection: f64,
    /// Time between frames (s).
    pub interval: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleLinks {
    pub comm: PropagationPath,
    pub radar: PropagationPath,
}

fn norm(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

impl VehicleState {
    pub fn validate(&self) -> Result<()> {
        if norm(self.rsu) <= 0.0 {
            return Err(IsacError::ZeroDistance("rsu"));
        }
        if norm(self.target) <= 0.0 {
            return Err(IsacError::ZeroDistance("target"));
        }
        if !(self.reflection > 0.0 && self.reflection <= 1.0) {
            return Err(invalid("reflection", "must lie in (0, 1]"));
        }
        if !(self.interval.is_finite() && self.interval >= 0.0) {
            return Err(invalid("interval", "must be >= 0"));
        }
        Ok(())
    }

    /// Target position at step `n`, moving straight toward the origin.
    pub fn target_at(&self, n: usize) -> Result<[f64; 2]> {
        let r0 = norm(self.target);
        if r0 <= 0.0 {
            return Err(IsacError::ZeroDistance("target"));
        }
        let r = r0 - self.speed * self.interval * n as f64;
        if r <= 0.0 {
            return Err(IsacError::ZeroDistance("target"));
        }
        let s = r / r0;
        Ok([self.target[0] * s, self.target[1] * s])
    }

    /// Number of steps at which the target is still short of the receiver.
    pub fn horizon(&self) -> usize {
        if self.speed <= 0.0 || self.interval <= 0.0 {
            return usize::MAX;
        }
        let r0 = norm(self.target);
        let steps = dsp::snap(r0 / (self.speed * self.interval));
        if steps.fract() == 0.0 {
            steps as usize
        } else {
            steps.floor() as usize + 1
        }
    }
}

/// Link parameters at step `n`.
pub fn vehicular_link(state: &VehicleState, n: usize, fc: f64) -> Result<VehicleLinks> {
    state.validate()?;
    let c = SPEED_OF_LIGHT;
    let dc = norm(state.rsu);
    let dr = norm(state.target_at(n)?);
    let tau_c = dc / c;
    let tau_r = 2.0 * dr / c;
    let alpha_c = c * cis(-2.0 * PI * fc * tau_c) / (4.0 * PI * fc * dc);
    let alpha_r = c * state.reflection * cis(-2.0 * PI * fc * tau_r) / (4.0 * PI * fc * 2.0 * dr);
    Ok(VehicleLinks {
        comm: PropagationPath {
            alpha: alpha_c,
            tau: tau_c,
            doppler: 0.0,
        },
        radar: PropagationPath {
            alpha: alpha_r,
            tau: tau_r,
            doppler: 2.0 * fc * state.speed / c,
        },
    })
}

/// Radar echo to communication signal power ratio at step `n` (linear).
pub fn radar_sir(state: &VehicleState, n: usize) -> Result<f64> {
    state.validate()?;
    let dc = norm(state.rsu);
    let dr = norm(state.target_at(n)?);
    Ok(dc * dc / (4.0 * dr * dr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::random_frame;
    use crate::waveform::{pc_fmcw, Constellation};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> WaveformParams {
        WaveformParams::new(77e9, 1e6, 32e-6, 40e-6, 4, 8, 4).unwrap()
    }

    fn random_signal(n: usize, seed: u64) -> ComplexSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        noise(n, 1.0, 1e-6, &mut rng)
    }

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn identity_path() {
        let x = random_signal(64, 1);
        let y = apply_path(&x, &PropagationPath::new(one(), 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn integer_delay_is_circular_shift() {
        let x = random_signal(64, 2);
        let y = apply_path(&x, &PropagationPath::new(one(), 5e-6, 0.0).unwrap()).unwrap();
        for n in 0..64 {
            assert!((y.samples[(n + 5) % 64] - x.samples[n]).norm() < 1e-12);
        }
    }

    #[test]
    fn fractional_delay_matches_dft_oracle() {
        // Direct evaluation of the band-limited interpolant.
        let n = 32;
        let x = random_signal(n, 3);
        let d = 0.37;
        let y = apply_path(&x, &PropagationPath::new(one(), d * 1e-6, 0.0).unwrap()).unwrap();
        for m in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                let mut xk = Complex64::new(0.0, 0.0);
                for (i, v) in x.samples.iter().enumerate() {
                    xk += v * cis(-2.0 * PI * (k * i) as f64 / n as f64);
                }
                let f = signed_bin(k, n);
                acc += xk * cis(2.0 * PI * f * (m as f64 - d) / n as f64);
            }
            acc /= n as f64;
            assert!((acc - y.samples[m]).norm() < 1e-9);
        }
    }

    #[test]
    fn rejects_delay_beyond_frame() {
        let x = random_signal(16, 4);
        let p = PropagationPath::new(one(), 20e-6, 0.0).unwrap();
        assert!(matches!(apply_path(&x, &p), Err(IsacError::DelayOutOfFrame { .. })));
        assert!(PropagationPath::new(one(), -1.0, 0.0).is_err());
    }

    #[test]
    fn delays_compose() {
        let x = random_signal(128, 5);
        let a = PropagationPath::new(one(), 1.3e-6, 0.0).unwrap();
        let b = PropagationPath::new(one(), 2.4e-6, 0.0).unwrap();
        let ab = PropagationPath::new(one(), 3.7e-6, 0.0).unwrap();
        let y1 = apply_path(&apply_path(&x, &a).unwrap(), &b).unwrap();
        let y2 = apply_path(&x, &ab).unwrap();
        for (u, v) in y1.samples.iter().zip(&y2.samples) {
            assert!((u - v).norm() < 1e-9);
        }
    }

    #[test]
    fn analytic_and_spectral_routes_agree_when_not_aliased() {
        // Sample rate 4 MHz over a 1 MHz sweep: the spectral route is valid
        // away from symbol edges, where the interpolant rings.
        let p = WaveformParams::new(77e9, 1e6, 32e-6, 40e-6, 4, 8, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let frame = random_frame(&p, Constellation::Bpsk, 2, 1, &mut rng);
        let tau = 0.5 * p.sample_period();
        let x = pc_fmcw(&frame, &p).unwrap();
        let path = PropagationPath::new(Complex64::new(0.5, 0.2), tau, 300.0).unwrap();
        let spectral = apply_path(&x, &path).unwrap();
        let analytic = render_paths(&frame, &[path], &p).unwrap();
        let mos = p.oversampling;
        let npri = p.samples_per_pri();
        let mut worst = 0.0f64;
        for q in 0..p.pulses {
            for l in 1..p.symbols_per_pulse - 1 {
                if frame.get(l, q) != frame.get(l - 1, q) || frame.get(l, q) != frame.get(l + 1, q) {
                    continue;
                }
                for m in 1..mos - 1 {
                    let n = q * npri + l * mos + m;
                    worst = worst.max((spectral.samples[n] - analytic.samples[n]).norm());
                }
            }
        }
        assert!(worst < 0.1, "worst {worst}");
    }

    #[test]
    fn superpose_empty_and_single_path() {
        let p = small();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frame = random_frame(&p, Constellation::Qpsk, 2, 1, &mut rng);
        let empty = Scenario {
            radar_paths: vec![],
            comm_links: vec![],
            noise_sigma2: 0.0,
        };
        let r = superpose(&empty, &frame, &p, &mut rng).unwrap();
        assert!(r.samples.iter().all(|v| v.norm() == 0.0));
        let path = PropagationPath::new(Complex64::new(0.1, 0.0), 2.0 * p.sample_period(), 0.0).unwrap();
        let single = Scenario {
            radar_paths: vec![path],
            ..empty
        };
        let r = superpose(&single, &frame, &p, &mut rng).unwrap();
        let direct = apply_path(&pc_fmcw(&frame, &p).unwrap(), &path).unwrap();
        for (a, b) in r.samples.iter().zip(&direct.samples) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn superposition_is_linear() {
        let p = small();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tx = random_frame(&p, Constellation::Qpsk, 2, 1, &mut rng);
        let cf = random_frame(&p, Constellation::Qpsk, 2, 2, &mut rng);
        let rp = PropagationPath::new(Complex64::new(0.3, -0.1), 0.3e-6, 500.0).unwrap();
        let cp = PropagationPath::new(Complex64::new(1.0, 0.2), 1.1e-6, -300.0).unwrap();
        let both = Scenario {
            radar_paths: vec![rp],
            comm_links: vec![CommLink {
                path: cp,
                frame: cf.clone(),
            }],
            noise_sigma2: 0.0,
        };
        let r = superpose(&both, &tx, &p, &mut rng).unwrap();
        let a = render_paths(&tx, &[rp], &p).unwrap();
        let b = render_paths(&cf, &[cp], &p).unwrap();
        for ((x, y), z) in r.samples.iter().zip(&a.samples).zip(&b.samples) {
            assert!((x - (y + z)).norm() < 1e-12);
        }
    }

    #[test]
    fn noise_variance_and_reproducibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = noise(1_000_000, 0.7, 1.0, &mut rng);
        let var = w.energy() / w.len() as f64;
        assert!((var / 0.7 - 1.0).abs() < 0.02, "{var}");
        let a = noise(100, 1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
        let b = noise(100, 1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    fn closing_vehicle() -> VehicleState {
        VehicleState {
            rsu: [14.0, 2.5],
            target: [30.0, 0.0],
            speed: 15.0,
            reflection: 1.0,
            interval: 66.6e-3,
        }
    }

    #[test]
    fn vehicular_reference_values() {
        let s = closing_vehicle();
        let l = vehicular_link(&s, 0, 77e9).unwrap();
        assert_relative_eq!(l.radar.tau, 60.0 / SPEED_OF_LIGHT, max_relative = 1e-12);
        assert!((l.radar.tau - 0.2e-6).abs() < 1e-9);
        assert_relative_eq!(l.radar.doppler, 2.0 * 77e9 * 15.0 / SPEED_OF_LIGHT);
        assert!((l.radar.doppler - 7.7e3).abs() < 10.0);
        let sir = radar_sir(&s, 0).unwrap();
        assert_relative_eq!(sir, 202.25 / 3600.0, max_relative = 1e-12);
        assert!((dsp::db(sir) + 12.5).abs() < 0.05);
        // SIR equals the ratio of the two path powers.
        assert_relative_eq!(l.radar.power() / l.comm.power(), sir, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_geometry_balances_gains() {
        let s = VehicleState {
            rsu: [20.0, 0.0],
            target: [0.0, 10.0],
            ..closing_vehicle()
        };
        let l = vehicular_link(&s, 0, 77e9).unwrap();
        assert_relative_eq!(l.radar.alpha.norm(), l.comm.alpha.norm(), max_relative = 1e-12);
        assert_relative_eq!(radar_sir(&s, 0).unwrap(), 1.0, max_relative = 1e-12);
        let halved = VehicleState {
            target: [0.0, 5.0],
            ..s
        };
        let gain = dsp::db(radar_sir(&halved, 0).unwrap() / radar_sir(&s, 0).unwrap());
        assert_relative_eq!(gain, 20.0 * 2f64.log10(), epsilon = 1e-12);
    }

    #[test]
    fn zero_distance_rejected() {
        let s = VehicleState {
            rsu: [0.0, 0.0],
            ..closing_vehicle()
        };
        assert!(matches!(vehicular_link(&s, 0, 77e9), Err(IsacError::ZeroDistance(_))));
        assert!(radar_sir(&closing_vehicle(), 31).is_err());
        assert_eq!(closing_vehicle().horizon(), 31);
    }

    proptest! {
        #[test]
        fn path_preserves_energy(seed in any::<u64>(), d in 0.0f64..20.0, fd in -2e4f64..2e4) {
            let x = random_signal(64, seed);
            let path = PropagationPath::new(Complex64::new(0.6, -0.3), d * 1e-6, fd).unwrap();
            let y = apply_path(&x, &path).unwrap();
            prop_assert!((y.energy() - path.power() * x.energy()).abs() < 1e-9 * x.energy());
        }
    }
}
