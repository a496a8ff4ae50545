use isac::cancellation::StructureKind;
use isac::dsp::q_function;
use isac::harness::config::SweepAxis;
use isac::harness::{self, ExperimentConfig};
use isac::IsacError;

fn compact() -> ExperimentConfig {
    ExperimentConfig {
        pulses: 8,
        symbols_per_pulse: 20,
        oversampling: 4,
        pulse_duration: 20e-6,
        guard: 2e-6,
        bandwidth: 10e6,
        radar_delay: 0.6e-6,
        comm_delay: 1.1e-6,
        radar_doppler: 2000.0,
        comm_doppler: -500.0,
        zero_pad_doppler: 1,
        cfar_guard: 1,
        cfar_train: 3,
        structures: vec![StructureKind::CR, StructureKind::RCRC],
        sweep: SweepAxis::Sir,
        sweep_values: vec![0.0],
        trials: 1,
        seed: 77,
        threads: 1,
        ..ExperimentConfig::default()
    }
}

#[test]
fn single_trial_csv_is_reproducible() {
    let cfg = compact();
    let a = harness::to_csv(&harness::run_sweep(&cfg, false).unwrap());
    let b = harness::to_csv(&harness::run_sweep(&cfg, false).unwrap());
    assert_eq!(a, b);
    assert!(a.starts_with(harness::CSV_HEADER));
}

#[test]
fn thread_count_does_not_change_results() {
    let mut cfg = compact();
    cfg.trials = 6;
    let one = harness::to_csv(&harness::run_sweep(&cfg, false).unwrap());
    cfg.threads = 3;
    let three = harness::to_csv(&harness::run_sweep(&cfg, false).unwrap());
    assert_eq!(one, three);
}

#[test]
fn interference_free_qpsk_follows_awgn_curve() {
    // Full-size frame, uplink only; BER near 4e-6 needs a few million bits.
    let cfg = ExperimentConfig {
        radar_enabled: false,
        structures: vec![StructureKind::NoIC],
        sweep: SweepAxis::EbN0,
        sweep_values: vec![10.0],
        trials: 350,
        seed: 8,
        ..ExperimentConfig::default()
    };
    let rows = harness::run_sweep(&cfg, false).unwrap();
    let ber = rows[0].ber;
    let curve = |db: f64| q_function((2.0 * 10f64.powf(db / 10.0)).sqrt());
    assert!(
        ber >= curve(10.5) && ber <= curve(9.5),
        "ber {ber:.3e} ({} errors in {} bits), curve at 10 dB {:.3e}",
        rows[0].bit_errors,
        rows[0].bits,
        curve(10.0)
    );
}

#[test]
fn dynamic_structures_are_rejected_by_static_sweep() {
    let mut cfg = compact();
    cfg.structures = vec![StructureKind::DynamicCRC];
    assert!(matches!(harness::run_sweep(&cfg, false), Err(IsacError::Config(_))));
}

#[test]
fn config_errors_name_the_key() {
    let err = ExperimentConfig::parse("pulses = 0").unwrap_err().to_string();
    assert!(err.contains("pulses"), "{err}");
    let err = ExperimentConfig::parse("structures = cr, xyz").unwrap_err().to_string();
    assert!(err.contains("structures") && err.contains("`xyz`"), "{err}");
    let err = ExperimentConfig::parse("no_such_key = 1").unwrap_err().to_string();
    assert!(err.contains("no_such_key"), "{err}");
    let err = ExperimentConfig::parse("trials = 0").unwrap_err().to_string();
    assert!(err.contains("trials"), "{err}");
}

#[test]
fn bundled_configs_parse() {
    for text in [
        include_str!("../../../configs/cr_snr.conf"),
        include_str!("../../../configs/rc_zero_pad.conf"),
        include_str!("../../../configs/iterative_sir.conf"),
        include_str!("../../../configs/dynamic_vehicle.conf"),
        include_str!("../../../configs/pfa.conf"),
    ] {
        let cfg = ExperimentConfig::parse(text).unwrap();
        cfg.validate().unwrap();
    }
}
