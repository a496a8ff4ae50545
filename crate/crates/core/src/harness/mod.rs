//! Monte Carlo driver: static sweeps, the moving-target trajectory and
//! noise-only false-alarm runs, with CSV output.
//!
//! Every trial draws from its own ChaCha8 stream keyed by `(seed, point,
//! trial)`, so results do not depend on the thread count.

pub mod config;

use std::io::{self, Write};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis;
use crate::cancellation::{
    track_update, Oracle, ReceiverContext, ReceiverOutput, ReceiverStructure, StageCache, StructureKind,
    StructureRegistry, TrackState,
};
use crate::channel::{self, noise_for_es_n0, vehicular_link, CommLink, PropagationPath, Scenario};
use crate::comm_rx::bit_errors;
use crate::dsp::{cis, db, from_db, signed_bin};
use crate::error::{IsacError, Result};
use crate::radar_rx::{self, cfar, delay_doppler, RadarConfig};
use crate::waveform::{ComplexSignal, SymbolFrame, WaveformParams};

pub use config::{ExperimentConfig, SweepAxis};

pub const CSV_HEADER: &str = "structure,sweep,pd,ber,detections,trials,bit_errors,bits,seed";

/// Aggregated result of one structure at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub structure: String,
    pub sweep: f64,
    pub pd: f64,
    pub ber: f64,
    pub detections: usize,
    pub trials: usize,
    pub bit_errors: u64,
    pub bits: u64,
    pub seed: u64,
    /// Seconds spent on the point. Not written to CSV.
    pub wall_time: f64,
}

impl MetricRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.structure,
            fmt_sig(self.sweep),
            fmt_sig(self.pd),
            fmt_sig(self.ber),
            self.detections,
            self.trials,
            self.bit_errors,
            self.bits,
            self.seed
        )
    }
}

/// `x` with 9 significant digits, trailing zeros dropped.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.8e}");
        let (m, exp) = s.split_once('e').unwrap_or((&s, "0"));
        let m = if m.contains('.') {
            m.trim_end_matches('0').trim_end_matches('.')
        } else {
            m
        };
        format!("{m}e{exp}")
    }
}

pub fn write_csv<W: Write>(rows: &[MetricRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

pub fn to_csv(rows: &[MetricRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii csv")
}

/// Random stream of one trial.
pub fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| IsacError::Config(format!("`threads`: {e}")))
}

/// Whether any detection lies within one unpadded resolution cell of the
/// true echo, on both axes.
pub fn detection_hit(output: &ReceiverOutput, truth: &PropagationPath, params: &WaveformParams, map: MapShape) -> bool {
    let Some(radar) = &output.radar else {
        return false;
    };
    let beat = params.sweep_rate() * truth.tau - truth.doppler;
    let true_fast = (-beat * params.pulse_duration).round();
    let true_slow = (truth.doppler * params.cpi()).round();
    let nf = params.samples_per_pulse() as f64;
    let ns = params.pulses as f64;
    radar.detections.iter().any(|d| {
        let fast = (signed_bin(d.row, map.rows) / (1 + map.zero_pad_fast) as f64).round();
        let slow = (signed_bin(d.col, map.cols) / (1 + map.zero_pad_doppler) as f64).round();
        circular_gap(fast - true_fast, nf) <= 1.0 && circular_gap(slow - true_slow, ns) <= 1.0
    })
}

/// Dimensions of the delay-Doppler map produced under a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapShape {
    pub rows: usize,
    pub cols: usize,
    pub zero_pad_fast: usize,
    pub zero_pad_doppler: usize,
}

impl MapShape {
    pub fn new(params: &WaveformParams, cfg: &RadarConfig) -> Self {
        Self {
            rows: params.samples_per_pulse() * (1 + cfg.zero_pad_fast),
            cols: params.pulses * (1 + cfg.zero_pad_doppler),
            zero_pad_fast: cfg.zero_pad_fast,
            zero_pad_doppler: cfg.zero_pad_doppler,
        }
    }
}

fn circular_gap(d: f64, n: f64) -> f64 {
    let m = d.rem_euclid(n);
    m.min(n - m)
}

/// Concrete settings of one sweep point.
#[derive(Debug, Clone)]
pub struct PointSetup {
    pub cfg: ExperimentConfig,
    pub params: WaveformParams,
    pub noise_sigma2: f64,
}

impl PointSetup {
    /// Apply sweep value `value` to `cfg`. Noise is referenced to the uplink
    /// power `comm_gain²` whether or not the uplink is switched on.
    pub fn new(cfg: &ExperimentConfig, value: f64) -> Result<Self> {
        let mut c = cfg.clone();
        let mut es_n0 = None;
        match cfg.sweep {
            SweepAxis::EbN0 => c.ebn0_db = value,
            SweepAxis::Snr => es_n0 = Some(from_db(value)),
            SweepAxis::Sir => c.radar_gain = c.comm_gain * from_db(value / 2.0),
            SweepAxis::ZeroPad => c.zero_pad_doppler = value as usize,
            SweepAxis::Pulses => c.pulses = value as usize,
        }
        c.validate()?;
        let params = c.params()?;
        let es_n0 = es_n0.unwrap_or_else(|| c.es_n0(c.ebn0_db));
        let noise_sigma2 = noise_for_es_n0(es_n0, c.comm_gain * c.comm_gain, params.oversampling);
        Ok(Self {
            cfg: c,
            params,
            noise_sigma2,
        })
    }
}

/// Per-structure result of one trial.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrialScore {
    pub detected: bool,
    pub bit_errors: usize,
    pub bits: usize,
}

fn score(out: &ReceiverOutput, truth: Option<&PropagationPath>, bits: &[u8], setup: &PointSetup) -> TrialScore {
    let shape = MapShape::new(&setup.params, &setup.cfg.radar_config());
    let detected = truth.is_some_and(|t| detection_hit(out, t, &setup.params, shape));
    let errors = match &out.comm {
        Some(est) if est.decided_bits.len() == bits.len() => bit_errors(&est.decided_bits, bits),
        _ => bits.len(),
    };
    TrialScore {
        detected,
        bit_errors: errors,
        bits: bits.len(),
    }
}

/// One received frame with the ground truth behind it.
pub struct TrialFrame {
    pub tx_frame: SymbolFrame,
    pub received: ComplexSignal,
    pub radar_path: Option<PropagationPath>,
    pub comm: Option<(PropagationPath, SymbolFrame)>,
    pub bits: Vec<u8>,
}

impl TrialFrame {
    pub fn oracle(&self) -> Oracle {
        Oracle {
            radar_paths: self.radar_path.into_iter().collect(),
            comm: self.comm.clone(),
        }
    }
}

/// Draw frames and render the received signal for the given paths.
pub fn draw_frame<R: Rng + ?Sized>(
    setup: &PointSetup,
    radar_path: Option<PropagationPath>,
    comm_path: Option<PropagationPath>,
    rng: &mut R,
) -> Result<TrialFrame> {
    let cfg = &setup.cfg;
    let (tx_frame, _) = cfg.own_format().random(&setup.params, rng)?;
    let (comm_frame, bits) = cfg.uplink_format().random(&setup.params, rng)?;
    let scenario = Scenario {
        radar_paths: radar_path.into_iter().collect(),
        comm_links: comm_path
            .map(|path| CommLink {
                path,
                frame: comm_frame.clone(),
            })
            .into_iter()
            .collect(),
        noise_sigma2: setup.noise_sigma2,
    };
    let received = channel::superpose(&scenario, &tx_frame, &setup.params, rng)?;
    Ok(TrialFrame {
        tx_frame,
        received,
        radar_path,
        comm: comm_path.map(|p| (p, comm_frame)),
        bits,
    })
}

fn static_paths<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> (Option<PropagationPath>, Option<PropagationPath>) {
    let mut phase = || {
        if cfg.random_phase {
            cis(rng.gen_range(0.0..std::f64::consts::TAU))
        } else {
            Complex64::new(1.0, 0.0)
        }
    };
    let pr = phase();
    let pc = phase();
    let radar = cfg.radar_enabled.then_some(PropagationPath {
        alpha: pr * cfg.radar_gain,
        tau: cfg.radar_delay,
        doppler: cfg.radar_doppler,
    });
    let comm = cfg.comm_enabled.then_some(PropagationPath {
        alpha: pc * cfg.comm_gain,
        tau: cfg.comm_delay,
        doppler: cfg.comm_doppler,
    });
    (radar, comm)
}

fn context<'a>(setup: &'a PointSetup, frame: &'a TrialFrame) -> ReceiverContext<'a> {
    let mut ctx = ReceiverContext::new(
        &setup.params,
        &frame.tx_frame,
        setup.cfg.radar_config(),
        setup.cfg.comm_config(),
    );
    ctx.refine_radar_gain = setup.cfg.refine_radar_gain;
    ctx
}

/// Run one static trial: every structure on the same received frame.
pub fn run_trial(
    setup: &PointSetup,
    structures: &[&dyn ReceiverStructure],
    oracle: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrialScore>> {
    let (radar, comm) = static_paths(&setup.cfg, rng);
    let frame = draw_frame(setup, radar, comm, rng)?;
    let truth = frame.oracle();
    let mut ctx = context(setup, &frame);
    if oracle {
        ctx.oracle = Some(&truth);
    }
    let mut cache = StageCache::new();
    structures
        .iter()
        .map(|s| {
            let out = cache.run(s.kind(), s.stages(), s.cancels(), &frame.received, &ctx)?;
            Ok(score(&out, frame.radar_path.as_ref(), &frame.bits, setup))
        })
        .collect()
}

fn accumulate(rows: &mut [MetricRow], scores: &[Vec<TrialScore>]) {
    for trial in scores {
        for (row, s) in rows.iter_mut().zip(trial) {
            row.trials += 1;
            row.detections += s.detected as usize;
            row.bit_errors += s.bit_errors as u64;
            row.bits += s.bits as u64;
        }
    }
    for row in rows.iter_mut() {
        row.pd = row.detections as f64 / row.trials.max(1) as f64;
        row.ber = if row.bits > 0 {
            row.bit_errors as f64 / row.bits as f64
        } else {
            0.0
        };
    }
}

fn empty_rows(names: &[String], sweep: f64, seed: u64) -> Vec<MetricRow> {
    names
        .iter()
        .map(|n| MetricRow {
            structure: n.clone(),
            sweep,
            pd: 0.0,
            ber: 0.0,
            detections: 0,
            trials: 0,
            bit_errors: 0,
            bits: 0,
            seed,
            wall_time: 0.0,
        })
        .collect()
}

fn sort_rows(rows: &mut [MetricRow]) {
    rows.sort_by(|a, b| a.structure.cmp(&b.structure).then(a.sweep.total_cmp(&b.sweep)));
}

/// Monte Carlo sweep over `cfg.sweep_values`. With `oracle`, the
/// reconstructions are replaced by the true paths and frames.
pub fn run_sweep(cfg: &ExperimentConfig, oracle: bool) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    if let Some(k) = cfg.structures.iter().find(|k| k.is_dynamic()) {
        return Err(IsacError::Config(format!(
            "`structures`: {k} needs a trajectory; use the dynamic run"
        )));
    }
    let registry = StructureRegistry::default();
    let structures: Vec<&dyn ReceiverStructure> = cfg
        .structures
        .iter()
        .map(|k| registry.get(k.name()))
        .collect::<Result<_>>()?;
    let names: Vec<String> = structures.iter().map(|s| s.name().to_string()).collect();
    let pool = thread_pool(cfg.threads)?;
    let mut rows = Vec::new();
    for (point, &value) in cfg.sweep_values.iter().enumerate() {
        let start = Instant::now();
        let setup = PointSetup::new(cfg, value)?;
        let scores: Vec<Vec<TrialScore>> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| run_trial(&setup, &structures, oracle, &mut trial_rng(cfg.seed, point, t)))
                .collect::<Result<_>>()
        })?;
        let mut point_rows = empty_rows(&names, value, cfg.seed);
        accumulate(&mut point_rows, &scores);
        let dt = start.elapsed().as_secs_f64();
        point_rows.iter_mut().for_each(|r| r.wall_time = dt);
        rows.extend(point_rows);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Ground truth and tracking quality at one step of the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub sir_db: f64,
    pub tau_radar: f64,
    pub doppler_radar: f64,
    /// Physical echo gain magnitude (before normalization).
    pub alpha_radar: f64,
    pub tau_comm: f64,
    /// Per dynamic structure: largest and mean `|τ̂ − τ|` of the prediction
    /// used at this step, and how many predictions were clamped.
    pub tracks: Vec<TrackRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub structure: String,
    pub max_tau_error: f64,
    pub mean_tau_error: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicReport {
    /// One row per structure and step; `sweep` is the step index.
    pub rows: Vec<MetricRow>,
    pub steps: Vec<StepRecord>,
}

pub const STEP_CSV_HEADER: &str = "step,time,sir_db,tau_radar,doppler_radar,alpha_radar,tau_comm,structure,max_tau_error,mean_tau_error,clamped";

impl DynamicReport {
    /// Per-step truth, one line per dynamic structure (or one line with an
    /// empty structure when none ran).
    pub fn steps_csv(&self) -> String {
        let mut s = String::from(STEP_CSV_HEADER);
        s.push('\n');
        for st in &self.steps {
            let head = format!(
                "{},{},{},{},{},{},{}",
                st.step,
                fmt_sig(st.time),
                fmt_sig(st.sir_db),
                fmt_sig(st.tau_radar),
                fmt_sig(st.doppler_radar),
                fmt_sig(st.alpha_radar),
                fmt_sig(st.tau_comm)
            );
            if st.tracks.is_empty() {
                s.push_str(&format!("{head},,,,\n"));
            }
            for t in &st.tracks {
                s.push_str(&format!(
                    "{head},{},{},{},{}\n",
                    t.structure,
                    fmt_sig(t.max_tau_error),
                    fmt_sig(t.mean_tau_error),
                    t.clamped
                ));
            }
        }
        s
    }
}

fn static_counterpart(kind: StructureKind) -> StructureKind {
    match kind {
        StructureKind::DynamicCR => StructureKind::CR,
        StructureKind::DynamicCRC => StructureKind::CRC,
        k => k,
    }
}

struct DynamicTrial {
    scores: Vec<TrialScore>,
    /// Next prediction per dynamic structure.
    next: Vec<Option<TrackState>>,
    used: Vec<Option<TrackState>>,
}

/// Moving-target run over `cfg.steps` transmissions (cut at the geometric
/// horizon). Path gains are normalized so the uplink has unit magnitude;
/// powers relative to noise and between paths are unchanged.
pub fn run_dynamic(cfg: &ExperimentConfig) -> Result<DynamicReport> {
    cfg.validate()?;
    let vehicle = cfg.vehicle();
    vehicle.validate()?;
    let steps = cfg.steps.min(vehicle.horizon());
    let registry = StructureRegistry::default();
    let kinds = &cfg.structures;
    let static_structs: Vec<&dyn ReceiverStructure> = kinds
        .iter()
        .filter(|k| !k.is_dynamic())
        .map(|k| registry.get(k.name()))
        .collect::<Result<_>>()?;
    let dynamic_kinds: Vec<StructureKind> = kinds.iter().copied().filter(|k| k.is_dynamic()).collect();
    let names: Vec<String> = kinds
        .iter()
        .filter(|k| !k.is_dynamic())
        .chain(dynamic_kinds.iter())
        .map(|k| k.name().to_string())
        .collect();
    let mut base = cfg.clone();
    base.sweep = SweepAxis::EbN0;
    let pool = thread_pool(cfg.threads)?;

    let first = vehicular_link(&vehicle, 0, cfg.carrier)?;
    let scale = 1.0 / first.comm.alpha.norm();
    base.comm_gain = 1.0;
    let setup = PointSetup::new(&base, cfg.ebn0_db)?;

    let mut tracks: Vec<Vec<Option<TrackState>>> = vec![vec![None; dynamic_kinds.len()]; cfg.trials];
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for n in 0..steps {
        let start = Instant::now();
        let links = vehicular_link(&vehicle, n, cfg.carrier)?;
        let radar_path = PropagationPath {
            alpha: links.radar.alpha * scale,
            ..links.radar
        };
        let comm_path = PropagationPath {
            alpha: links.comm.alpha * scale,
            ..links.comm
        };
        let results: Vec<DynamicTrial> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = trial_rng(cfg.seed, n, t);
                    dynamic_trial(
                        &setup,
                        &static_structs,
                        &dynamic_kinds,
                        &tracks[t],
                        n,
                        (cfg.radar_enabled.then_some(radar_path), cfg.comm_enabled.then_some(comm_path)),
                        &mut rng,
                    )
                })
                .collect::<Result<_>>()
        })?;
        let mut step_rows = empty_rows(&names, n as f64, cfg.seed);
        let scores: Vec<Vec<TrialScore>> = results.iter().map(|r| r.scores.clone()).collect();
        accumulate(&mut step_rows, &scores);
        let dt = start.elapsed().as_secs_f64();
        step_rows.iter_mut().for_each(|r| r.wall_time = dt);
        rows.extend(step_rows);

        let track_records = dynamic_kinds
            .iter()
            .enumerate()
            .map(|(k, kind)| {
                let errs: Vec<f64> = results
                    .iter()
                    .filter_map(|r| r.used[k])
                    .map(|ts| (ts.tau - links.radar.tau).abs())
                    .collect();
                TrackRecord {
                    structure: kind.name().to_string(),
                    max_tau_error: errs.iter().copied().fold(0.0, f64::max),
                    mean_tau_error: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
                    clamped: results.iter().filter(|r| r.used[k].is_some_and(|t| t.clamped)).count(),
                }
            })
            .collect();
        records.push(StepRecord {
            step: n,
            time: n as f64 * cfg.interval,
            sir_db: db(channel::radar_sir(&vehicle, n)?),
            tau_radar: links.radar.tau,
            doppler_radar: links.radar.doppler,
            alpha_radar: links.radar.alpha.norm(),
            tau_comm: links.comm.tau,
            tracks: track_records,
        });
        for (t, r) in results.into_iter().enumerate() {
            tracks[t] = r.next;
        }
    }
    sort_rows(&mut rows);
    Ok(DynamicReport { rows, steps: records })
}

#[allow(clippy::too_many_arguments)]
fn dynamic_trial(
    setup: &PointSetup,
    static_structs: &[&dyn ReceiverStructure],
    dynamic_kinds: &[StructureKind],
    prior: &[Option<TrackState>],
    step: usize,
    paths: (Option<PropagationPath>, Option<PropagationPath>),
    rng: &mut ChaCha8Rng,
) -> Result<DynamicTrial> {
    let frame = draw_frame(setup, paths.0, paths.1, rng)?;
    let ctx = context(setup, &frame);
    let truth = frame.radar_path.as_ref();
    let mut cache = StageCache::new();
    let mut scores = Vec::new();
    for s in static_structs {
        let out = cache.run(s.kind(), s.stages(), s.cancels(), &frame.received, &ctx)?;
        scores.push(score(&out, truth, &frame.bits, setup));
    }

    let params = &setup.params;
    let bootstrap = if step == 0 {
        let (radar, _) = radar_rx::process(&frame.received, &frame.tx_frame, params, &ctx.radar)?;
        radar.targets(1).first().map(|d| TrackState::from_path(&d.path, 0))
    } else {
        None
    };
    let mut next = Vec::with_capacity(dynamic_kinds.len());
    let mut used = Vec::with_capacity(dynamic_kinds.len());
    for (k, &kind) in dynamic_kinds.iter().enumerate() {
        let track = if step == 0 { bootstrap } else { prior[k] };
        let mut dctx = ctx.clone();
        dctx.track = track;
        let out = match track {
            Some(_) => StageCache::new().run(kind, kind.stages(), kind.cancels(), &frame.received, &dctx)?,
            None => {
                let fallback = static_counterpart(kind);
                cache.run(fallback, fallback.stages(), fallback.cancels(), &frame.received, &ctx)?
            }
        };
        scores.push(score(&out, truth, &frame.bits, setup));
        let latest = out.track(step).or(track);
        next.push(latest.map(|ts| track_update(&ts, setup.cfg.interval, params.carrier, params.guard())));
        used.push(track);
    }
    Ok(DynamicTrial { scores, next, used })
}

/// Outcome of a noise-only false-alarm run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfaEstimate {
    pub cells: u64,
    pub crossings: u64,
    pub pfa: f64,
}

/// Rows used for false-alarm counting: tones within one chip rate of DC,
/// where the compensated noise floor is flat over the CFAR window.
pub fn pfa_rows(shape: MapShape, params: &WaveformParams) -> Vec<usize> {
    let spacing = 1.0 / (params.pulse_duration * (1 + shape.zero_pad_fast) as f64);
    let limit = 1.0 / params.chip_duration();
    (0..shape.rows)
        .filter(|&r| (signed_bin(r, shape.rows) * spacing).abs() <= limit)
        .collect()
}

/// Fraction of CFAR crossings over the `eval_rows` of each power map.
pub fn pfa_from_maps(maps: &[(Vec<f64>, usize, usize, Vec<usize>)], cfg: &cfar::CfarConfig) -> Result<PfaEstimate> {
    if maps.is_empty() {
        return Err(IsacError::Numeric("no maps to count false alarms on".into()));
    }
    let mut cells = 0u64;
    let mut crossings = 0u64;
    for (power, rows, cols, eval) in maps {
        crossings += cfar::count_crossings(power, *rows, *cols, eval, cfg)? as u64;
        cells += (eval.len() * cols) as u64;
    }
    if cells == 0 {
        return Err(IsacError::Numeric("no cells evaluated".into()));
    }
    Ok(PfaEstimate {
        cells,
        crossings,
        pfa: crossings as f64 / cells as f64,
    })
}

/// Count CFAR crossings on noise-only frames until at least `min_cells`
/// cells have been tested.
pub fn estimate_pfa(cfg: &ExperimentConfig, min_cells: u64) -> Result<PfaEstimate> {
    cfg.validate()?;
    let params = cfg.params()?;
    let radar = cfg.radar_config();
    let shape = MapShape::new(&params, &radar);
    let rows = pfa_rows(shape, &params);
    let per_frame = (rows.len() * shape.cols) as u64;
    if per_frame == 0 {
        return Err(IsacError::Numeric("no rows to count false alarms on".into()));
    }
    let frames = min_cells.div_ceil(per_frame).max(1) as usize;
    let pool = thread_pool(cfg.threads)?;
    let counts: Vec<u64> = pool.install(|| {
        (0..frames)
            .into_par_iter()
            .map(|f| {
                let mut rng = trial_rng(cfg.seed, 0, f);
                let (tx, _) = cfg.own_format().random(&params, &mut rng)?;
                let r = channel::noise(params.frame_len(), 1.0, params.sample_period(), &mut rng);
                let z = radar_rx::front_end(&r, &tx, &params, &radar)?;
                let map = delay_doppler(&z, &params, radar.zero_pad_fast, radar.zero_pad_doppler);
                Ok(cfar::count_crossings(&map.power(), map.rows, map.cols, &rows, &radar.cfar)? as u64)
            })
            .collect::<Result<_>>()
    })?;
    let crossings: u64 = counts.iter().sum();
    let cells = per_frame * frames as u64;
    Ok(PfaEstimate {
        cells,
        crossings,
        pfa: crossings as f64 / cells as f64,
    })
}

/// Closed-form dispersion grids of the configured uplink (as interference)
/// and echo, over signed fast-time and slow-time bins. CSV with columns
/// `grid,fast,slow,power`.
pub fn oracle_grids(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let params = cfg.params()?;
    let nf = params.samples_per_pulse();
    let fast: Vec<f64> = (0..nf).map(|k| signed_bin(k, nf)).collect();
    let slow: Vec<f64> = (0..params.pulses).map(|k| signed_bin(k, params.pulses)).collect();
    let beat = |tau: f64, fd: f64| params.sweep_rate() * tau - fd;
    let grids = [
        (
            "interference",
            analysis::DispersionSpec {
                sigma2: cfg.comm_gain * cfg.comm_gain,
                beat: beat(cfg.comm_delay, cfg.comm_doppler),
                doppler: cfg.comm_doppler,
                params,
            },
        ),
        (
            "echo",
            analysis::DispersionSpec {
                sigma2: cfg.radar_gain * cfg.radar_gain,
                beat: beat(cfg.radar_delay, cfg.radar_doppler),
                doppler: cfg.radar_doppler,
                params,
            },
        ),
    ];
    let mut out = String::from("grid,fast,slow,power\n");
    for (name, spec) in &grids {
        spec.validate()?;
        let g = if *name == "echo" {
            analysis::echo_dispersion(spec, &fast, &slow)
        } else {
            analysis::interference_dispersion(spec, &fast, &slow)
        };
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out.push_str(&format!("{name},{},{},{}\n", fmt_sig(fast[i]), fmt_sig(slow[j]), fmt_sig(*v)));
            }
        }
    }
    Ok(out)
}

/// Doppler resolution and on-grid error of the echo for the configured
/// pulse counts and zero-padding factors. CSV with columns
/// `pulses,zero_pad,doppler,resolution,accuracy`.
pub fn doppler_table(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let mut pulses = vec![cfg.pulses];
    let mut pads = vec![cfg.zero_pad_doppler];
    match cfg.sweep {
        SweepAxis::Pulses => pulses = cfg.sweep_values.iter().map(|&v| v as usize).collect(),
        SweepAxis::ZeroPad => pads = cfg.sweep_values.iter().map(|&v| v as usize).collect(),
        _ => {}
    }
    let mut out = String::from("pulses,zero_pad,doppler,resolution,accuracy\n");
    for &p in &pulses {
        let params = cfg.params()?.with_pulses(p);
        for &z in &pads {
            let g = analysis::resolution_accuracy(&params, cfg.radar_doppler, z);
            out.push_str(&format!(
                "{p},{z},{},{},{}\n",
                fmt_sig(cfg.radar_doppler),
                fmt_sig(g.resolution),
                fmt_sig(g.accuracy)
            ));
        }
    }
    Ok(out)
}
