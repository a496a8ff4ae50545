//! Flat `key = value` experiment configuration.

use std::fmt;

use crate::cancellation::StructureKind;
use crate::channel::VehicleState;
use crate::comm_rx::CommConfig;
use crate::error::{IsacError, Result};
use crate::link::{LinkFormat, DEFAULT_PILOT_HEAD};
use crate::radar_rx::{BeatEstimator, CfarConfig, RadarConfig};
use crate::waveform::{Constellation, WaveformParams};

/// Pilot seeds of the two transmitters.
pub const OWN_PILOT_SEED: u64 = 0x5eed_0001;
pub const UPLINK_PILOT_SEED: u64 = 0x5eed_0002;

/// Quantity varied across sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Eb/N0 of the uplink (dB).
    EbN0,
    /// Symbol SNR of the uplink (dB).
    Snr,
    /// Echo to uplink power ratio (dB); scales the echo gain.
    Sir,
    /// Slow-time zero-padding factor.
    ZeroPad,
    /// Pulses per frame.
    Pulses,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::EbN0 => "ebn0",
            SweepAxis::Snr => "snr",
            SweepAxis::Sir => "sir",
            SweepAxis::ZeroPad => "zero_pad",
            SweepAxis::Pulses => "pulses",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ebn0" => SweepAxis::EbN0,
            "snr" => SweepAxis::Snr,
            "sir" => SweepAxis::Sir,
            "zero_pad" | "zero_pad_doppler" => SweepAxis::ZeroPad,
            "pulses" => SweepAxis::Pulses,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub carrier: f64,
    pub bandwidth: f64,
    pub pulse_duration: f64,
    pub guard: f64,
    pub pulses: usize,
    pub symbols_per_pulse: usize,
    pub oversampling: usize,

    pub constellation: Constellation,
    pub coded: bool,
    pub interleaver: usize,
    pub pilot_head: usize,

    pub pfa: f64,
    pub cfar_guard: usize,
    pub cfar_train: usize,
    pub zero_pad_fast: usize,
    pub zero_pad_doppler: usize,
    pub lpf_margin: Option<f64>,
    pub beat_estimator: BeatEstimator,
    pub refine_radar_gain: bool,

    pub radar_enabled: bool,
    pub radar_gain: f64,
    pub radar_delay: f64,
    pub radar_doppler: f64,
    pub comm_enabled: bool,
    pub comm_gain: f64,
    pub comm_delay: f64,
    pub comm_doppler: f64,
    /// Draw the path phases uniformly per trial.
    pub random_phase: bool,
    pub ebn0_db: f64,

    pub sweep: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub structures: Vec<StructureKind>,
    pub trials: usize,
    pub seed: u64,
    pub threads: usize,

    pub rsu: [f64; 2],
    pub target: [f64; 2],
    pub speed: f64,
    pub reflection: f64,
    pub interval: f64,
    pub steps: usize,
}

impl Default for ExperimentConfig {
    /// The iterative-structure scenario at desk scale.
    fn default() -> Self {
        Self {
            carrier: 77e9,
            bandwidth: 20e6,
            pulse_duration: 100e-6,
            guard: 5e-6,
            pulses: 50,
            symbols_per_pulse: 100,
            oversampling: 8,
            constellation: Constellation::Qpsk,
            coded: false,
            interleaver: 0,
            pilot_head: DEFAULT_PILOT_HEAD,
            pfa: 1e-4,
            cfar_guard: 2,
            cfar_train: 8,
            zero_pad_fast: 0,
            zero_pad_doppler: 3,
            lpf_margin: None,
            beat_estimator: BeatEstimator::Interpolated,
            refine_radar_gain: true,
            radar_enabled: true,
            radar_gain: 0.1,
            radar_delay: 1e-6,
            radar_doppler: 1000.0,
            comm_enabled: true,
            comm_gain: 1.0,
            comm_delay: 2.5e-6,
            comm_doppler: -300.0,
            random_phase: true,
            ebn0_db: 10.0,
            sweep: SweepAxis::Sir,
            sweep_values: vec![0.0],
            structures: vec![StructureKind::CR],
            trials: 500,
            seed: 1,
            threads: 0,
            rsu: [14.0, 2.5],
            target: [30.0, 0.0],
            speed: 15.0,
            reflection: 1.0,
            interval: 66.6e-3,
            steps: 20,
        }
    }
}

#[derive(Clone, Copy)]
enum Unit {
    Time,
    Frequency,
    None,
}

fn config_err(key: &str, msg: impl fmt::Display) -> IsacError {
    IsacError::Config(format!("`{key}`: {msg}"))
}

/// Split `"100 us"` into a number and a lower-case unit suffix.
fn split_unit(value: &str) -> (&str, String) {
    let v = value.trim();
    let end = v
        .char_indices()
        .find(|&(i, ch)| {
            ch.is_alphabetic() && ch != 'e' && ch != 'E' || (ch == 'e' || ch == 'E') && i == v.len() - 1 || ch == 'µ'
        })
        .map(|(i, _)| i)
        .unwrap_or(v.len());
    let (num, unit) = v.split_at(end);
    (num.trim(), unit.trim().to_lowercase())
}

fn parse_quantity(key: &str, value: &str, unit: Unit) -> Result<f64> {
    let (num, suffix) = split_unit(value);
    let x: f64 = num
        .parse()
        .map_err(|_| config_err(key, format!("`{value}` is not a number")))?;
    let scale = match (unit, suffix.as_str()) {
        (_, "") => 1.0,
        (Unit::Time, "s") => 1.0,
        (Unit::Time, "ms") => 1e-3,
        (Unit::Time, "us") | (Unit::Time, "µs") => 1e-6,
        (Unit::Time, "ns") => 1e-9,
        (Unit::Frequency, "hz") => 1.0,
        (Unit::Frequency, "khz") => 1e3,
        (Unit::Frequency, "mhz") => 1e6,
        (Unit::Frequency, "ghz") => 1e9,
        (Unit::None, "db") => 1.0,
        _ => return Err(config_err(key, format!("unknown unit `{suffix}`"))),
    };
    let v = x * scale;
    if !v.is_finite() {
        return Err(config_err(key, "must be finite"));
    }
    Ok(v)
}

fn parse_count(key: &str, value: &str) -> Result<usize> {
    value
        .trim()
        .parse()
        .map_err(|_| config_err(key, format!("`{value}` is not a non-negative integer")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(config_err(key, format!("`{value}` is not a boolean"))),
    }
}

fn parse_point(key: &str, value: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = value.trim().trim_matches(|c| c == '(' || c == ')').split(',').collect();
    if parts.len() != 2 {
        return Err(config_err(key, "expected `x, y`"));
    }
    Ok([
        parse_quantity(key, parts[0], Unit::None)?,
        parse_quantity(key, parts[1], Unit::None)?,
    ])
}

/// `a, b, c` or `start:step:stop` (inclusive).
fn parse_values(key: &str, value: &str) -> Result<Vec<f64>> {
    let v = value.trim();
    if v.contains(':') {
        let parts: Vec<&str> = v.split(':').collect();
        if parts.len() != 3 {
            return Err(config_err(key, "range must be `start:step:stop`"));
        }
        let a = parse_quantity(key, parts[0], Unit::None)?;
        let step = parse_quantity(key, parts[1], Unit::None)?;
        let b = parse_quantity(key, parts[2], Unit::None)?;
        if step == 0.0 || (b - a) / step < 0.0 {
            return Err(config_err(key, "step does not reach the stop value"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| a + step * k as f64).collect());
    }
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_quantity(key, s, Unit::None))
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| IsacError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = |v: &str| parse_quantity(key, v, Unit::Time);
        let f = |v: &str| parse_quantity(key, v, Unit::Frequency);
        let x = |v: &str| parse_quantity(key, v, Unit::None);
        match key {
            "carrier" => self.carrier = f(value)?,
            "bandwidth" => self.bandwidth = f(value)?,
            "pulse_duration" => self.pulse_duration = t(value)?,
            "guard" => self.guard = t(value)?,
            "pri" => self.guard = t(value)? - self.pulse_duration,
            "pulses" => self.pulses = parse_count(key, value)?,
            "symbols_per_pulse" => self.symbols_per_pulse = parse_count(key, value)?,
            "oversampling" => self.oversampling = parse_count(key, value)?,
            "constellation" => {
                self.constellation = Constellation::parse(value)
                    .ok_or_else(|| config_err(key, format!("unknown constellation `{value}`")))?
            }
            "coded" => self.coded = parse_bool(key, value)?,
            "interleaver" => self.interleaver = parse_count(key, value)?,
            "pilot_head" => self.pilot_head = parse_count(key, value)?,
            "pfa" => self.pfa = x(value)?,
            "cfar_guard" => self.cfar_guard = parse_count(key, value)?,
            "cfar_train" => self.cfar_train = parse_count(key, value)?,
            "zero_pad_fast" => self.zero_pad_fast = parse_count(key, value)?,
            "zero_pad_doppler" => self.zero_pad_doppler = parse_count(key, value)?,
            "lpf_margin" => {
                self.lpf_margin = if value.trim() == "auto" { None } else { Some(f(value)?) }
            }
            "beat_estimator" => {
                self.beat_estimator = match value.trim() {
                    "bin" | "bin_center" => BeatEstimator::BinCenter,
                    "interpolated" => BeatEstimator::Interpolated,
                    _ => return Err(config_err(key, "expected `bin` or `interpolated`")),
                }
            }
            "refine_radar_gain" => self.refine_radar_gain = parse_bool(key, value)?,
            "radar_enabled" => self.radar_enabled = parse_bool(key, value)?,
            "radar_gain" => self.radar_gain = x(value)?,
            "radar_delay" => self.radar_delay = t(value)?,
            "radar_doppler" => self.radar_doppler = f(value)?,
            "comm_enabled" => self.comm_enabled = parse_bool(key, value)?,
            "comm_gain" => self.comm_gain = x(value)?,
            "comm_delay" => self.comm_delay = t(value)?,
            "comm_doppler" => self.comm_doppler = f(value)?,
            "random_phase" => self.random_phase = parse_bool(key, value)?,
            "ebn0" => self.ebn0_db = x(value)?,
            "sweep" => {
                self.sweep = SweepAxis::parse(value.trim())
                    .ok_or_else(|| config_err(key, format!("unknown sweep axis `{value}`")))?
            }
            "sweep_values" => self.sweep_values = parse_values(key, value)?,
            "structures" => {
                self.structures = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(StructureKind::parse)
                    .collect::<Result<_>>()
                    .map_err(|e| config_err(key, e))?
            }
            "trials" => self.trials = parse_count(key, value)?,
            "seed" => {
                self.seed = value
                    .trim()
                    .parse()
                    .map_err(|_| config_err(key, "expected an unsigned integer"))?
            }
            "threads" => self.threads = parse_count(key, value)?,
            "rsu" => self.rsu = parse_point(key, value)?,
            "target" => self.target = parse_point(key, value)?,
            "speed" => self.speed = x(value)?,
            "reflection" => self.reflection = x(value)?,
            "interval" => self.interval = t(value)?,
            "steps" => self.steps = parse_count(key, value)?,
            _ => return Err(IsacError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: IsacError| match e {
            IsacError::InvalidParameter { field, reason } => config_err(field, reason),
            other => other,
        };
        self.params().map_err(wrap)?;
        self.own_format().validate(&self.params()?).map_err(wrap)?;
        self.radar_config().cfar.validate().map_err(wrap)?;
        let params = self.params()?;
        let win = self.radar_config().cfar.window();
        let rows = params.samples_per_pulse() * (1 + self.zero_pad_fast);
        let cols = params.pulses * (1 + self.zero_pad_doppler);
        if rows < win || cols < win {
            return Err(config_err(
                "cfar_train",
                format!("CFAR window {win} exceeds the {rows} x {cols} map"),
            ));
        }
        if self.trials == 0 {
            return Err(config_err("trials", "must be at least 1"));
        }
        if self.sweep_values.is_empty() || self.sweep_values.iter().any(|v| !v.is_finite()) {
            return Err(config_err("sweep_values", "need at least one finite value"));
        }
        if matches!(self.sweep, SweepAxis::ZeroPad | SweepAxis::Pulses)
            && self.sweep_values.iter().any(|v| *v < 0.0 || v.fract() != 0.0)
        {
            return Err(config_err("sweep_values", "counts must be non-negative integers"));
        }
        if self.structures.is_empty() {
            return Err(config_err("structures", "name at least one structure"));
        }
        for (k, v) in [
            ("radar_gain", self.radar_gain),
            ("comm_gain", self.comm_gain),
            ("radar_delay", self.radar_delay),
            ("comm_delay", self.comm_delay),
        ] {
            if v < 0.0 {
                return Err(config_err(k, "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<WaveformParams> {
        WaveformParams::new(
            self.carrier,
            self.bandwidth,
            self.pulse_duration,
            self.pulse_duration + self.guard,
            self.pulses,
            self.symbols_per_pulse,
            self.oversampling,
        )
    }

    fn format(&self, pilot_seed: u64) -> LinkFormat {
        LinkFormat {
            constellation: self.constellation,
            coded: self.coded,
            interleaver: (self.interleaver > 1).then_some(self.interleaver),
            pilot_head: self.pilot_head,
            pilot_seed,
        }
    }

    /// Format of the node's own transmission.
    pub fn own_format(&self) -> LinkFormat {
        self.format(OWN_PILOT_SEED)
    }

    /// Format of the received uplink.
    pub fn uplink_format(&self) -> LinkFormat {
        self.format(UPLINK_PILOT_SEED)
    }

    pub fn radar_config(&self) -> RadarConfig {
        RadarConfig {
            cfar: CfarConfig {
                pfa: self.pfa,
                guard: self.cfar_guard,
                train: self.cfar_train,
            },
            zero_pad_fast: self.zero_pad_fast,
            zero_pad_doppler: self.zero_pad_doppler,
            lpf_margin: self.lpf_margin,
            beat: self.beat_estimator,
            max_targets: 1,
        }
    }

    pub fn comm_config(&self) -> CommConfig {
        CommConfig::new(self.uplink_format())
    }

    pub fn vehicle(&self) -> VehicleState {
        VehicleState {
            rsu: self.rsu,
            target: self.target,
            speed: self.speed,
            reflection: self.reflection,
            interval: self.interval,
        }
    }

    /// Uplink symbol SNR implied by the Eb/N0 setting.
    pub fn es_n0(&self, ebn0_db: f64) -> f64 {
        let rate = if self.coded { 0.5 } else { 1.0 };
        self.constellation.bits_per_symbol() as f64 * rate * crate::dsp::from_db(ebn0_db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units_and_defaults() {
        let cfg = ExperimentConfig::parse(
            "# scenario\nbandwidth = 20 MHz\npulse_duration = 100us\nguard = 0.5 µs  # short\n\
             radar_doppler = 1 khz\ninterval = 66.6 ms\nsweep = snr\nsweep_values = -4:2:4\n\
             structures = noic, cr\nradar_delay = 1e-7\n",
        )
        .unwrap();
        assert_eq!(cfg.bandwidth, 20e6);
        assert!((cfg.guard - 0.5e-6).abs() < 1e-18);
        assert_eq!(cfg.radar_doppler, 1e3);
        assert!((cfg.interval - 0.0666).abs() < 1e-15);
        assert_eq!(cfg.sweep_values, vec![-4.0, -2.0, 0.0, 2.0, 4.0]);
        assert_eq!(cfg.structures, vec![StructureKind::NoIC, StructureKind::CR]);
        assert_eq!(cfg.radar_delay, 1e-7);
        assert_eq!(cfg.params().unwrap().samples_per_pri(), 804);
    }

    #[test]
    fn errors_name_the_field() {
        let e = ExperimentConfig::parse("trials = 0").unwrap_err();
        assert!(e.to_string().contains("trials"), "{e}");
        let e = ExperimentConfig::parse("bandwidth = 20 parsecs").unwrap_err();
        assert!(e.to_string().contains("bandwidth"), "{e}");
        let e = ExperimentConfig::parse("nonsense = 1").unwrap_err();
        assert!(e.to_string().contains("nonsense"));
        let e = ExperimentConfig::parse("guard = 0.3 us").unwrap_err();
        assert!(e.to_string().contains("pri"), "{e}");
        let e = ExperimentConfig::parse("structures = cr, xyz").unwrap_err();
        assert!(e.to_string().contains("structures"));
        assert!(ExperimentConfig::parse("coded = true\nconstellation = bpsk").is_err());
    }

    #[test]
    fn equal_noise_for_coded_qpsk_and_bpsk() {
        let mut a = ExperimentConfig::default();
        a.constellation = Constellation::Bpsk;
        let mut b = ExperimentConfig::default();
        b.coded = true;
        assert!((a.es_n0(6.0) - b.es_n0(6.0)).abs() < 1e-12);
    }
}
