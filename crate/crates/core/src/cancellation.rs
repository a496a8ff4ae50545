//! Signal reconstruction, subtraction and the receiver structures built from
//! them.
//!
//! A structure is a sequence of blocks. Each radar or communication block
//! runs on the received frame minus the latest reconstruction of the other
//! function; a prediction block stands in for a radar block using a track.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

use crate::channel::{render_paths, PropagationPath};
use crate::comm_rx::{self, project_gain, CommConfig, CommEstimate};
use crate::dsp;
use crate::error::{IsacError, Result};
use crate::radar_rx::{self, RadarConfig, RadarOutput};
use crate::waveform::{ComplexSignal, SymbolFrame, WaveformParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureKind {
    NoIC,
    CR,
    RC,
    RCR,
    CRC,
    RCRC,
    DynamicCR,
    DynamicCRC,
}

impl StructureKind {
    pub const ALL: [StructureKind; 8] = [
        StructureKind::NoIC,
        StructureKind::CR,
        StructureKind::RC,
        StructureKind::RCR,
        StructureKind::CRC,
        StructureKind::RCRC,
        StructureKind::DynamicCR,
        StructureKind::DynamicCRC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureKind::NoIC => "noic",
            StructureKind::CR => "cr",
            StructureKind::RC => "rc",
            StructureKind::RCR => "rcr",
            StructureKind::CRC => "crc",
            StructureKind::RCRC => "rcrc",
            StructureKind::DynamicCR => "dyn-cr",
            StructureKind::DynamicCRC => "dyn-crc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == t)
            .ok_or_else(|| IsacError::UnknownStructure(s.trim().to_string()))
    }

    /// Blocks in processing order.
    pub fn stages(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            StructureKind::NoIC => &[Radar, Comm],
            StructureKind::CR => &[Comm, Radar],
            StructureKind::RC => &[Radar, Comm],
            StructureKind::RCR => &[Radar, Comm, Radar],
            StructureKind::CRC => &[Comm, Radar, Comm],
            StructureKind::RCRC => &[Radar, Comm, Radar, Comm],
            StructureKind::DynamicCR => &[Predict, Comm, Radar],
            StructureKind::DynamicCRC => &[Predict, Comm, Radar, Comm],
        }
    }

    pub fn cancels(self) -> bool {
        self != StructureKind::NoIC
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, StructureKind::DynamicCR | StructureKind::DynamicCRC)
    }
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Radar,
    Comm,
    /// Radar estimates from the track instead of a detection.
    Predict,
}

/// Delay and Doppler carried between transmissions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub tau: f64,
    pub doppler: f64,
    pub alpha: Complex64,
    pub step: usize,
    /// The last update hit the `[0, Tg]` bounds.
    pub clamped: bool,
}

impl TrackState {
    pub fn from_path(path: &PropagationPath, step: usize) -> Self {
        Self {
            tau: path.tau,
            doppler: path.doppler,
            alpha: path.alpha,
            step,
            clamped: false,
        }
    }
}

/// Predict the next transmission: Doppler held, delay moved by
/// `−Δt·f_D/fc` (positive Doppler closes the range), kept inside `[0, Tg]`.
pub fn track_update(ts: &TrackState, delta_t: f64, fc: f64, guard: f64) -> TrackState {
    let raw = ts.tau - delta_t / fc * ts.doppler;
    let tau = raw.clamp(0.0, guard);
    TrackState {
        tau,
        doppler: ts.doppler,
        alpha: ts.alpha,
        step: ts.step + 1,
        clamped: tau != raw,
    }
}

/// Regenerate a decoded communication signal at its estimated path.
pub fn reconstruct_comm(est: &CommEstimate, params: &WaveformParams) -> Result<ComplexSignal> {
    render_paths(&est.frame, &[est.path()], params)
}

/// Regenerate the own echo(es) from the known transmitted frame.
pub fn reconstruct_radar(
    paths: &[PropagationPath],
    tx_frame: &SymbolFrame,
    params: &WaveformParams,
) -> Result<ComplexSignal> {
    render_paths(tx_frame, paths, params)
}

pub fn subtract(r: &ComplexSignal, r_hat: &ComplexSignal) -> Result<ComplexSignal> {
    if r.len() != r_hat.len() {
        return Err(IsacError::LengthMismatch {
            expected: r.len(),
            actual: r_hat.len(),
        });
    }
    let samples = r.samples.iter().zip(&r_hat.samples).map(|(a, b)| a - b).collect();
    Ok(ComplexSignal {
        samples,
        sample_period: r.sample_period,
        start_time: r.start_time,
    })
}

/// Ground truth handed to the reconstructions instead of the estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub radar_paths: Vec<PropagationPath>,
    pub comm: Option<(PropagationPath, SymbolFrame)>,
}

/// Everything a structure needs besides the received frame.
#[derive(Debug, Clone)]
pub struct ReceiverContext<'a> {
    pub params: &'a WaveformParams,
    pub tx_frame: &'a SymbolFrame,
    pub radar: RadarConfig,
    pub comm: CommConfig,
    /// Prediction for the dynamic structures.
    pub track: Option<TrackState>,
    /// Refit echo gains by least squares against the received frame before
    /// reconstruction. The uplink is nearly orthogonal to the echo, so the
    /// fit does not depend on how well an earlier block removed it.
    pub refine_radar_gain: bool,
    pub oracle: Option<&'a Oracle>,
}

impl<'a> ReceiverContext<'a> {
    pub fn new(
        params: &'a WaveformParams,
        tx_frame: &'a SymbolFrame,
        radar: RadarConfig,
        comm: CommConfig,
    ) -> Self {
        Self {
            params,
            tx_frame,
            radar,
            comm,
            track: None,
            refine_radar_gain: true,
            oracle: None,
        }
    }
}

/// Power of the input to one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageDiagnostic {
    pub stage: Stage,
    pub input_power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverOutput {
    pub kind: StructureKind,
    /// Last radar block, if any ran.
    pub radar: Option<RadarOutput>,
    /// Echo paths behind the latest radar reconstruction.
    pub radar_paths: Vec<PropagationPath>,
    /// Last communication block.
    pub comm: Option<CommEstimate>,
    pub diagnostics: Vec<StageDiagnostic>,
}

impl ReceiverOutput {
    /// Track for the next transmission, from the latest echo estimate.
    pub fn track(&self, step: usize) -> Option<TrackState> {
        self.radar_paths.first().map(|p| TrackState::from_path(p, step))
    }
}

/// A receiver structure selectable by name.
pub trait ReceiverStructure: Send + Sync {
    fn name(&self) -> &str;
    fn kind(&self) -> StructureKind;
    fn stages(&self) -> &[Stage];
    /// Whether blocks see the original frame minus the other function's
    /// reconstruction.
    fn cancels(&self) -> bool;

    fn run(&self, r: &ComplexSignal, ctx: &ReceiverContext) -> Result<ReceiverOutput> {
        let mut cache = StageCache::default();
        cache.run(self.kind(), self.stages(), self.cancels(), r, ctx)
    }
}

/// Blocks run in order with cancellation in between.
#[derive(Debug, Clone, Copy)]
pub struct SequentialStructure {
    kind: StructureKind,
}

impl SequentialStructure {
    pub fn new(kind: StructureKind) -> Self {
        Self { kind }
    }
}

impl ReceiverStructure for SequentialStructure {
    fn name(&self) -> &str {
        self.kind.name()
    }
    fn kind(&self) -> StructureKind {
        self.kind
    }
    fn stages(&self) -> &[Stage] {
        self.kind.stages()
    }
    fn cancels(&self) -> bool {
        true
    }
}

/// Both functions on the raw frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoCancellation;

impl ReceiverStructure for NoCancellation {
    fn name(&self) -> &str {
        StructureKind::NoIC.name()
    }
    fn kind(&self) -> StructureKind {
        StructureKind::NoIC
    }
    fn stages(&self) -> &[Stage] {
        StructureKind::NoIC.stages()
    }
    fn cancels(&self) -> bool {
        false
    }
}

/// Structures by name.
pub struct StructureRegistry {
    entries: Vec<Box<dyn ReceiverStructure>>,
}

impl Default for StructureRegistry {
    fn default() -> Self {
        let mut reg = Self { entries: Vec::new() };
        reg.register(Box::new(NoCancellation));
        for k in StructureKind::ALL.into_iter().filter(|k| k.cancels()) {
            reg.register(Box::new(SequentialStructure::new(k)));
        }
        reg
    }
}

impl StructureRegistry {
    /// Add a structure; a later entry with the same name replaces an earlier
    /// one.
    pub fn register(&mut self, s: Box<dyn ReceiverStructure>) {
        self.entries.retain(|e| e.name() != s.name());
        self.entries.push(s);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ReceiverStructure> {
        let t = name.trim().to_ascii_lowercase();
        self.entries
            .iter()
            .find(|e| e.name() == t)
            .map(|e| e.as_ref())
            .ok_or_else(|| IsacError::UnknownStructure(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

/// State after a prefix of blocks.
#[derive(Debug, Clone, Default)]
struct Progress {
    radar: Option<RadarOutput>,
    radar_paths: Vec<PropagationPath>,
    radar_hat: Option<ComplexSignal>,
    comm: Option<CommEstimate>,
    comm_hat: Option<ComplexSignal>,
    diagnostics: Vec<StageDiagnostic>,
}

/// Results of block prefixes shared between structures run on the same
/// frame (CR and CRC share their first two blocks, for instance).
#[derive(Default)]
pub struct StageCache {
    done: HashMap<(bool, Vec<Stage>), Progress>,
}

impl StageCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn run(
        &mut self,
        kind: StructureKind,
        stages: &[Stage],
        cancels: bool,
        r: &ComplexSignal,
        ctx: &ReceiverContext,
    ) -> Result<ReceiverOutput> {
        if stages.contains(&Stage::Predict) && ctx.track.is_none() {
            return Err(IsacError::MissingTrack(kind.name().to_string()));
        }
        let mut start = 0;
        for k in (1..=stages.len()).rev() {
            if self.done.contains_key(&(cancels, stages[..k].to_vec())) {
                start = k;
                break;
            }
        }
        let mut state = if start == 0 {
            Progress::default()
        } else {
            self.done[&(cancels, stages[..start].to_vec())].clone()
        };
        for k in start..stages.len() {
            run_stage(&mut state, stages[k], cancels, r, ctx)?;
            self.done.insert((cancels, stages[..=k].to_vec()), state.clone());
        }
        Ok(ReceiverOutput {
            kind,
            radar: state.radar,
            radar_paths: state.radar_paths,
            comm: state.comm,
            diagnostics: state.diagnostics,
        })
    }
}

/// Run several structures on one frame, sharing common block prefixes.
pub fn run_many(
    structures: &[&dyn ReceiverStructure],
    r: &ComplexSignal,
    ctx: &ReceiverContext,
) -> Result<Vec<ReceiverOutput>> {
    let mut cache = StageCache::new();
    structures
        .iter()
        .map(|s| cache.run(s.kind(), s.stages(), s.cancels(), r, ctx))
        .collect()
}

/// Run one structure by kind.
pub fn run_structure(kind: StructureKind, r: &ComplexSignal, ctx: &ReceiverContext) -> Result<ReceiverOutput> {
    StageCache::new().run(kind, kind.stages(), kind.cancels(), r, ctx)
}

fn block_input(r: &ComplexSignal, other: Option<&ComplexSignal>, cancels: bool) -> Result<ComplexSignal> {
    match other {
        Some(hat) if cancels => subtract(r, hat),
        _ => Ok(r.clone()),
    }
}

fn refit_gains(
    paths: &mut [PropagationPath],
    x: &ComplexSignal,
    ctx: &ReceiverContext,
) -> Result<()> {
    for path in paths.iter_mut() {
        let unit = PropagationPath {
            alpha: Complex64::new(1.0, 0.0),
            ..*path
        };
        let u = render_paths(ctx.tx_frame, &[unit], ctx.params)?;
        path.alpha = project_gain(&x.samples, &u.samples);
    }
    Ok(())
}

fn run_stage(
    state: &mut Progress,
    stage: Stage,
    cancels: bool,
    r: &ComplexSignal,
    ctx: &ReceiverContext,
) -> Result<()> {
    match stage {
        Stage::Radar | Stage::Predict => {
            let x = block_input(r, state.comm_hat.as_ref(), cancels)?;
            state.diagnostics.push(StageDiagnostic {
                stage,
                input_power: dsp::mean_power(&x.samples),
            });
            let mut paths = if stage == Stage::Radar {
                let (out, _) = radar_rx::process(&x, ctx.tx_frame, ctx.params, &ctx.radar)?;
                let paths: Vec<PropagationPath> =
                    out.targets(ctx.radar.max_targets).iter().map(|d| d.path).collect();
                state.radar = Some(out);
                paths
            } else {
                let t = ctx.track.expect("checked by the caller");
                vec![PropagationPath {
                    alpha: t.alpha,
                    tau: t.tau,
                    doppler: t.doppler,
                }]
            };
            if ctx.refine_radar_gain || stage == Stage::Predict {
                refit_gains(&mut paths, r, ctx)?;
            }
            let used = match ctx.oracle {
                Some(o) => o.radar_paths.clone(),
                None => paths,
            };
            state.radar_hat = if used.is_empty() {
                None
            } else {
                Some(reconstruct_radar(&used, ctx.tx_frame, ctx.params)?)
            };
            state.radar_paths = used;
        }
        Stage::Comm => {
            let x = block_input(r, state.radar_hat.as_ref(), cancels)?;
            state.diagnostics.push(StageDiagnostic {
                stage,
                input_power: dsp::mean_power(&x.samples),
            });
            let est = comm_rx::process(&x, &ctx.comm, ctx.params)?;
            state.comm_hat = Some(match ctx.oracle.and_then(|o| o.comm.as_ref()) {
                Some((path, frame)) => render_paths(frame, &[*path], ctx.params)?,
                None => reconstruct_comm(&est, ctx.params)?,
            });
            state.comm = Some(est);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{superpose_parts, CommLink, Scenario};
    use crate::link::LinkFormat;
    use crate::waveform::Constellation;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn params() -> WaveformParams {
        // Lc = 40, Mos = 4, P = 32, Tg = 10 samples.
        WaveformParams::new(77e9, 20e6, 40e-6, 42.5e-6, 32, 40, 4).unwrap()
    }

    struct Setup {
        p: WaveformParams,
        tx: SymbolFrame,
        fmt: LinkFormat,
        comm_frame: SymbolFrame,
        comm_bits: Vec<u8>,
        radar: PropagationPath,
        comm: PropagationPath,
    }

    fn setup(seed: u64, radar_gain: f64) -> Setup {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let own = LinkFormat::uncoded(Constellation::Qpsk, 1);
        let (tx, _) = own.random(&p, &mut rng).unwrap();
        let fmt = LinkFormat::uncoded(Constellation::Qpsk, 2);
        let (comm_frame, comm_bits) = fmt.random(&p, &mut rng).unwrap();
        Setup {
            p,
            tx,
            fmt,
            comm_frame,
            comm_bits,
            radar: PropagationPath::new(c(radar_gain, 0.0), 0.6e-6, 800.0).unwrap(),
            comm: PropagationPath::new(c(0.0, 1.0), 1.3e-6, -300.0).unwrap(),
        }
    }

    fn ctx<'a>(s: &'a Setup) -> ReceiverContext<'a> {
        let radar = RadarConfig {
            cfar: radar_rx::CfarConfig {
                guard: 1,
                train: 4,
                ..Default::default()
            },
            ..Default::default()
        };
        ReceiverContext::new(&s.p, &s.tx, radar, CommConfig::new(s.fmt))
    }

    fn scenario(s: &Setup, sigma2: f64) -> Scenario {
        Scenario {
            radar_paths: vec![s.radar],
            comm_links: vec![CommLink {
                path: s.comm,
                frame: s.comm_frame.clone(),
            }],
            noise_sigma2: sigma2,
        }
    }

    #[test]
    fn names_round_trip_and_registry() {
        let reg = StructureRegistry::default();
        assert_eq!(reg.names().len(), 8);
        for k in StructureKind::ALL {
            assert_eq!(StructureKind::parse(k.name()).unwrap(), k);
            assert_eq!(reg.get(k.name()).unwrap().kind(), k);
        }
        assert!(matches!(StructureKind::parse("rrc"), Err(IsacError::UnknownStructure(_))));
        assert!(!reg.get("noic").unwrap().cancels());
    }

    #[test]
    fn subtract_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = crate::channel::noise(64, 1.0, 1.0, &mut rng);
        let a = crate::channel::noise(64, 1.0, 1.0, &mut rng);
        let b = crate::channel::noise(64, 1.0, 1.0, &mut rng);
        assert!(subtract(&r, &r).unwrap().samples.iter().all(|v| v.norm() == 0.0));
        assert_eq!(subtract(&r, &ComplexSignal::zeros(64, 1.0)).unwrap(), r);
        let ab = ComplexSignal::new(a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect(), 1.0);
        let one = subtract(&r, &ab).unwrap();
        let two = subtract(&subtract(&r, &a).unwrap(), &b).unwrap();
        for (x, y) in one.samples.iter().zip(&two.samples) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!(subtract(&r, &ComplexSignal::zeros(63, 1.0)).is_err());
    }

    #[test]
    fn exact_reconstructions_cancel() {
        let s = setup(2, 0.5);
        let parts = superpose_parts(&scenario(&s, 0.0), &s.tx, &s.p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let rr = reconstruct_radar(&[s.radar], &s.tx, &s.p).unwrap();
        assert!(subtract(&parts.radar, &rr).unwrap().energy() < 1e-20);
        let est = CommEstimate {
            lag: 0,
            tau_hat: s.comm.tau,
            f_d_hat: s.comm.doppler,
            tone_hat: 0.0,
            alpha_hat: s.comm.alpha,
            gain: c(1.0, 0.0),
            noise_var: 0.0,
            soft_symbols: vec![],
            equalized: vec![],
            decided_bits: s.comm_bits.clone(),
            frame: s.comm_frame.clone(),
        };
        let rc = reconstruct_comm(&est, &s.p).unwrap();
        assert!(subtract(&parts.comm, &rc).unwrap().energy() < 1e-20);
    }

    #[test]
    fn one_symbol_error_residual() {
        // Residual of a single wrong symbol: |α|²·|ΔI|² times the summed
        // squared envelope weights, Mos − 1 + f² + (1 − f)² for a delay
        // that is `f` samples off the grid.
        let s = setup(3, 0.5);
        let x = render_paths(&s.comm_frame, &[s.comm], &s.p).unwrap();
        let mut syms = s.comm_frame.symbols().to_vec();
        let k = 5 * 40 + 17;
        let old = syms[k];
        syms[k] = -old;
        let wrong = SymbolFrame::new(40, 32, syms, s.comm_frame.pilot_mask().to_vec(), Constellation::Qpsk).unwrap();
        let y = render_paths(&wrong, &[s.comm], &s.p).unwrap();
        let res = subtract(&x, &y).unwrap().energy();
        let f = (s.comm.tau / s.p.sample_period()).fract();
        let weight = s.p.oversampling as f64 - 1.0 + f * f + (1.0 - f) * (1.0 - f);
        let want = s.comm.alpha.norm_sqr() * weight * (2.0 * old).norm_sqr();
        assert!((res - want).abs() < 1e-6 * want, "{res} vs {want}");
    }

    #[test]
    fn radar_one_sample_delay_error_matches_autocorrelation() {
        let s = setup(4, 1.0);
        let x = render_paths(&s.tx, &[s.radar], &s.p).unwrap();
        let off = PropagationPath {
            tau: s.radar.tau + s.p.sample_period(),
            ..s.radar
        };
        let y = render_paths(&s.tx, &[off], &s.p).unwrap();
        let res = subtract(&x, &y).unwrap().energy() / x.energy();
        // Same quantity from the correlation of the two renders.
        let rho = dsp::inner(&x.samples, &y.samples).re / x.energy();
        assert!((res - (2.0 - 2.0 * rho)).abs() < 1e-6, "{res} vs {}", 2.0 - 2.0 * rho);
        assert!(res > 0.1);
    }

    #[test]
    fn doppler_error_residual_is_monotone() {
        let s = setup(5, 1.0);
        let x = render_paths(&s.comm_frame, &[s.comm], &s.p).unwrap();
        let cpi = s.p.cpi();
        let mut last = -1.0;
        for k in 0..=10 {
            let df = k as f64 / (10.0 * cpi);
            let y = render_paths(&s.comm_frame, &[PropagationPath { doppler: s.comm.doppler + df, ..s.comm }], &s.p).unwrap();
            // Gain refitted as the receivers do: the residual is E(1 − |sinc|²).
            let g = project_gain(&x.samples, &y.samples);
            let fitted = ComplexSignal::new(y.samples.iter().map(|v| v * g).collect(), y.sample_period);
            let res = subtract(&x, &fitted).unwrap().energy();
            assert!(res >= last - 1e-9, "{k}");
            last = res;
        }
    }

    #[test]
    fn track_update_rules() {
        let t = TrackState {
            tau: 1e-6,
            doppler: 0.0,
            alpha: c(1.0, 0.0),
            step: 0,
            clamped: false,
        };
        assert_eq!(track_update(&t, 0.0666, 77e9, 5e-6).tau, 1e-6);
        let closing = TrackState { doppler: 7.7e3, ..t };
        let next = track_update(&closing, 0.0666, 77e9, 5e-6);
        assert!(next.tau < closing.tau && !next.clamped);
        assert_eq!(next.doppler, closing.doppler);
        assert_eq!(next.step, 1);
        let far = TrackState { tau: 1e-9, ..closing };
        let n = track_update(&far, 0.0666, 77e9, 5e-6);
        assert_eq!(n.tau, 0.0);
        assert!(n.clamped);
    }

    #[test]
    fn track_follows_constant_velocity() {
        // Kinematic truth: τ(n) = 2(r0 − v·n·Δt)/c, f_D = 2fc·v/c.
        let (r0, v, dt, fc) = (30.0, 15.0, 0.0666, 77e9);
        let cl = crate::channel::SPEED_OF_LIGHT;
        let fd = 2.0 * fc * v / cl;
        let mut t = TrackState {
            tau: 2.0 * r0 / cl,
            doppler: fd,
            alpha: c(1.0, 0.0),
            step: 0,
            clamped: false,
        };
        let ts = 100e-6 / 800.0;
        for n in 1..=10 {
            t = track_update(&t, dt, fc, 5e-6);
            let truth = 2.0 * (r0 - v * n as f64 * dt) / cl;
            assert!((t.tau - truth).abs() < ts, "{n}");
        }
    }

    #[test]
    fn missing_track_is_rejected() {
        let s = setup(6, 1.0);
        let r = render_paths(&s.tx, &[s.radar], &s.p).unwrap();
        for k in [StructureKind::DynamicCR, StructureKind::DynamicCRC] {
            assert!(matches!(run_structure(k, &r, &ctx(&s)), Err(IsacError::MissingTrack(_))));
        }
    }

    #[test]
    fn structures_recover_both_functions() {
        let s = setup(7, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let r = crate::channel::superpose(&scenario(&s, 0.05), &s.tx, &s.p, &mut rng).unwrap();
        let cx = ctx(&s);
        // Equal powers: every structure with a radar block ahead of its last
        // communication block decodes cleanly.
        for k in [StructureKind::RC, StructureKind::RCR, StructureKind::CRC, StructureKind::RCRC] {
            let out = run_structure(k, &r, &cx).unwrap();
            let comm = out.comm.unwrap();
            assert_eq!(comm_rx::bit_errors(&comm.decided_bits, &s.comm_bits), 0, "{k}");
            let radar = out.radar.unwrap();
            let d = radar.targets(1)[0];
            assert!((d.path.tau - s.radar.tau).abs() < 2.0 * s.p.sample_period(), "{k}");
            assert_eq!(out.diagnostics.len(), k.stages().len());
        }
    }

    #[test]
    fn cr_recovers_weak_echo_under_strong_comm() {
        let s = setup(12, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(120);
        let r = crate::channel::superpose(&scenario(&s, 0.05), &s.tx, &s.p, &mut rng).unwrap();
        let out = run_structure(StructureKind::CR, &r, &ctx(&s)).unwrap();
        assert_eq!(comm_rx::bit_errors(&out.comm.unwrap().decided_bits, &s.comm_bits), 0);
        let d = out.radar.unwrap().targets(1)[0];
        assert!((d.path.tau - s.radar.tau).abs() < 2.0 * s.p.sample_period());
        assert!((d.path.doppler - s.radar.doppler).abs() <= 1.0 / s.p.cpi());
    }

    #[test]
    fn cancellation_lowers_block_input_power() {
        let s = setup(8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let r = crate::channel::superpose(&scenario(&s, 0.01), &s.tx, &s.p, &mut rng).unwrap();
        let out = run_structure(StructureKind::RCRC, &r, &ctx(&s)).unwrap();
        let total = dsp::mean_power(&r.samples);
        for d in &out.diagnostics[1..] {
            assert!(d.input_power < 0.7 * total, "{:?} {total}", d);
        }
    }

    #[test]
    fn shared_prefixes_match_independent_runs() {
        let s = setup(9, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let r = crate::channel::superpose(&scenario(&s, 0.1), &s.tx, &s.p, &mut rng).unwrap();
        let mut cx = ctx(&s);
        cx.track = Some(TrackState::from_path(&s.radar, 0));
        let reg = StructureRegistry::default();
        let all: Vec<&dyn ReceiverStructure> = reg.names().iter().map(|n| reg.get(n).unwrap()).collect();
        let shared = run_many(&all, &r, &cx).unwrap();
        for (st, out) in all.iter().zip(&shared) {
            assert_eq!(&st.run(&r, &cx).unwrap(), out, "{}", st.name());
        }
    }

    #[test]
    fn noic_without_interferer_matches_cr_and_rc() {
        let s = setup(10, 1.0);
        let mut sc = scenario(&s, 0.05);
        sc.comm_links.clear();
        let r = crate::channel::superpose(&sc, &s.tx, &s.p, &mut ChaCha8Rng::seed_from_u64(100)).unwrap();
        let cx = ctx(&s);
        let none = run_structure(StructureKind::NoIC, &r, &cx).unwrap();
        let cr = run_structure(StructureKind::CR, &r, &cx).unwrap();
        // No comm signal: the CR reconstruction is tiny but nonzero, so only
        // the detection cells are compared.
        let cells = |o: &ReceiverOutput| -> Vec<(usize, usize)> {
            o.radar.as_ref().unwrap().targets(1).iter().map(|d| (d.row, d.col)).collect()
        };
        assert_eq!(cells(&none), cells(&cr));
        let mut sc = scenario(&s, 0.05);
        sc.radar_paths.clear();
        let r = crate::channel::superpose(&sc, &s.tx, &s.p, &mut ChaCha8Rng::seed_from_u64(101)).unwrap();
        let none = run_structure(StructureKind::NoIC, &r, &cx).unwrap();
        let rc = run_structure(StructureKind::RC, &r, &cx).unwrap();
        assert_eq!(none.comm.unwrap().decided_bits, rc.comm.unwrap().decided_bits);
    }

    #[test]
    fn oracle_reconstruction_matches_interference_free() {
        let s = setup(11, 0.2);
        let sc = scenario(&s, 0.2);
        let parts = superpose_parts(&sc, &s.tx, &s.p, &mut ChaCha8Rng::seed_from_u64(110)).unwrap();
        let oracle = Oracle {
            radar_paths: vec![s.radar],
            comm: Some((s.comm, s.comm_frame.clone())),
        };
        let mut cx = ctx(&s);
        cx.oracle = Some(&oracle);
        let radar_only = crate::channel::sum_signals(&[&parts.radar, &parts.noise]).unwrap();
        let comm_only = crate::channel::sum_signals(&[&parts.comm, &parts.noise]).unwrap();
        let mut plain = ctx(&s);
        plain.oracle = None;
        let (ref_radar, _) = radar_rx::process(&radar_only, &s.tx, &s.p, &plain.radar).unwrap();
        let ref_comm = comm_rx::process(&comm_only, &plain.comm, &s.p).unwrap();
        let out = run_structure(StructureKind::CRC, &parts.total, &cx).unwrap();
        let cells = |o: &RadarOutput| -> Vec<(usize, usize)> { o.detections.iter().map(|d| (d.row, d.col)).collect() };
        assert_eq!(cells(out.radar.as_ref().unwrap()), cells(&ref_radar));
        assert_eq!(out.comm.unwrap().decided_bits, ref_comm.decided_bits);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn track_update_stays_in_guard(tau in 0.0f64..5e-6, fd in -2e4f64..2e4, dt in 0.0f64..1.0) {
            let t = TrackState { tau, doppler: fd, alpha: c(1.0, 0.0), step: 3, clamped: false };
            let n = track_update(&t, dt, 77e9, 5e-6);
            prop_assert!(n.tau >= 0.0 && n.tau <= 5e-6);
            prop_assert_eq!(n.clamped, n.tau != tau - dt / 77e9 * fd);
        }

        #[test]
        fn run_is_deterministic(seed in 0u64..1000) {
            let s = setup(seed, 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = crate::channel::superpose(&scenario(&s, 0.1), &s.tx, &s.p, &mut rng).unwrap();
            let cx = ctx(&s);
            prop_assert_eq!(
                run_structure(StructureKind::RCR, &r, &cx).unwrap(),
                run_structure(StructureKind::RCR, &r, &cx).unwrap()
            );
        }
    }
}
