use proptest::prelude::*;
use qtask_fabric::config::entry;
use qtask_fabric::regmap::*;
use qtask_fabric::{CostKind, Fabric, FabricConfig, FabricError, SeqInstr, SequencerProgram};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn noiseless(seed: u64) -> FabricConfig {
    let mut cfg = FabricConfig::with_seed(seed);
    cfg.qubit.readout_sigma = 0.0;
    cfg
}

/// One shot the way a task would issue it: relax, start, wait for the result.
fn shot(f: &mut Fabric, pc: u32) -> qtask_fabric::RecordingResult {
    f.wait_until_relaxed();
    f.sequencer_run(pc).unwrap();
    f.run_until_idle();
    f.recording_result(0).unwrap()
}

fn binomial_sigma(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

#[test]
fn half_pi_pulses_give_even_odds() {
    let mut f = Fabric::new(noiseless(21)).unwrap();
    let n = 100_000;
    let ones = (0..n)
        .filter(|_| shot(&mut f, entry::HALF_PI_READOUT).detected_state == 1)
        .count();
    let frac = ones as f64 / n as f64;
    assert!((frac - 0.5).abs() <= 0.005, "P(1) = {frac}");
}

#[test]
fn excitation_probability_follows_rotation_angle() {
    for theta_mrad in [500, 1000, 2000, 2600] {
        let mut f = Fabric::new(noiseless(u64::from(theta_mrad as u32))).unwrap();
        let prog = SequencerProgram::new(vec![
            SeqInstr::PulseManip { theta_mrad },
            SeqInstr::PulseReadout { channel: 0 },
            SeqInstr::End,
        ]);
        f.load_program(&prog).unwrap();
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| shot(&mut f, 0).detected_state == 1)
            .count();
        let expected = (f64::from(theta_mrad) / 2000.0).sin().powi(2);
        let frac = ones as f64 / n as f64;
        let tol = 3.0 * binomial_sigma(expected, n as f64) + 1e-4;
        assert!(
            (frac - expected).abs() <= tol,
            "theta {theta_mrad}: {frac} vs {expected}"
        );
    }
}

#[test]
fn leakage_fraction_matches_configuration() {
    let mut cfg = noiseless(99);
    cfg.qubit.leakage_prob = 0.02;
    let mut f = Fabric::new(cfg).unwrap();
    let n = 1_000_000;
    let mut leaked = 0usize;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        let s = shot(&mut f, entry::PI_READOUT).detected_state;
        counts[s as usize] += 1;
        if s >= 2 {
            leaked += 1;
        }
    }
    let frac = leaked as f64 / n as f64;
    let sigma = binomial_sigma(0.02, n as f64);
    assert!(
        (frac - 0.02).abs() <= 3.0 * sigma,
        "leak fraction {frac}, counts {counts:?}"
    );
    assert!(counts[2] > 0 && counts[3] > 0);
}

#[test]
fn excited_survival_after_relaxation_delay() {
    let cfg = noiseless(5);
    let t1 = cfg.qubit.t1_ns;
    let mut q = qtask_fabric::QubitModel::new(cfg.qubit, ChaCha8Rng::seed_from_u64(8));

    // one T1: e^-1
    let n = 100_000;
    let survived = (0..n)
        .filter(|_| {
            q.prepare(1, 0);
            q.relax_until(t1 as u64);
            q.definite_level() == Some(1)
        })
        .count();
    let p = (-1.0f64).exp();
    let frac = survived as f64 / n as f64;
    assert!((frac - p).abs() <= 4.0 * binomial_sigma(p, n as f64));

    // ten T1: e^-10
    let n = 2_000_000;
    let survived = (0..n)
        .filter(|_| {
            q.prepare(1, 0);
            q.relax_until(100_000);
            q.definite_level() == Some(1)
        })
        .count() as f64;
    let mean = n as f64 * (-10.0f64).exp();
    assert!(
        (survived - mean).abs() <= 4.0 * mean.sqrt(),
        "{survived} vs {mean}"
    );
}

#[test]
fn relaxation_wait_is_split_into_decay_steps_not_time() {
    // Relaxation happens in virtual time only through wait_until_relaxed.
    let mut f = Fabric::new(noiseless(1)).unwrap();
    f.poke(SEQ_RELAX_DELAY, 100_000).unwrap();
    shot(&mut f, entry::PI_READOUT);
    let end = f.last_sequence_end().unwrap();
    let before = f.clock().total_for(CostKind::Relaxation);
    f.wait_until_relaxed();
    assert_eq!(f.now(), end + 100_000);
    assert_eq!(
        f.clock().total_for(CostKind::Relaxation) - before,
        end + 100_000 - 500
    );
}

#[test]
fn register_block_copy_cost() {
    let mut f = Fabric::new(FabricConfig::with_seed(0)).unwrap();
    for _ in 0..1024 {
        f.bus_read(SEQ_BUSY).unwrap();
    }
    assert_eq!(f.now(), 313_344);
    let rel = (313_344.0 - 312_401.0) / 312_401.0;
    assert!(rel < 0.005);
}

#[test]
fn repeated_reads_without_events_agree() {
    let mut f = Fabric::new(FabricConfig::with_seed(0)).unwrap();
    let a = f.bus_read(PG_MANIP_SCALE).unwrap();
    let b = f.bus_read(PG_MANIP_SCALE).unwrap();
    assert_eq!(a, b);
}

#[test]
fn write_to_status_register_is_rejected() {
    let mut f = Fabric::new(FabricConfig::with_seed(0)).unwrap();
    assert_eq!(
        f.bus_write(SEQ_BUSY, 1),
        Err(FabricError::ReadOnlyRegister(SEQ_BUSY))
    );
}

#[test]
fn now_registers_track_the_clock() {
    let mut f = Fabric::new(FabricConfig::with_seed(0)).unwrap();
    f.clock_mut().charge(CostKind::Idle, 0x1_0000_0000);
    let lo = f.bus_read(NOW_LO).unwrap();
    let hi = f.bus_read(NOW_HI).unwrap();
    assert_eq!(hi, 1);
    assert_eq!(lo, 306);
}

#[test]
fn drift_shifts_in_phase_component_only() {
    let mut cfg = noiseless(3);
    cfg.qubit.drift.amplitude = 2000.0;
    cfg.qubit.drift.frequency_hz = 50.0;
    let mut f = Fabric::new(cfg.clone()).unwrap();
    // reach t = 5 ms exactly at the readout
    f.clock_mut().charge(CostKind::Idle, 5_000_000);
    f.sequencer_run(entry::GROUND_READOUT).unwrap();
    f.run_until_idle();
    let r = f.recording_result(0).unwrap();
    let [i0, q0] = cfg.qubit.cluster_means[0];
    assert_eq!(r.i, (i0 + 2000.0) as i32);
    assert_eq!(r.q, q0 as i32);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wait_sequences_sum_exactly(k in 1usize..500) {
        let mut f = Fabric::new(FabricConfig::with_seed(0)).unwrap();
        let mut instrs = vec![SeqInstr::Wait { duration_ns: 4 }; k];
        instrs.push(SeqInstr::End);
        f.load_program(&SequencerProgram::new(instrs)).unwrap();
        f.sequencer_run(0).unwrap();
        f.run_until_idle();
        prop_assert_eq!(f.now(), 4 * k as u64);
        prop_assert_eq!(f.last_sequence_end(), Some(4 * k as u64));
    }

    #[test]
    fn ledger_matches_clock_and_runs_repeat(
        seed in any::<u64>(),
        ops in proptest::collection::vec((0u8..6, 0u32..4), 1..120),
    ) {
        let run = |seed: u64| {
            let mut f = Fabric::new(FabricConfig::with_seed(seed)).unwrap();
            let mut results = Vec::new();
            for &(op, arg) in &ops {
                match op {
                    0 => { let _ = f.bus_write(SEQ_START, arg * 3 % 11); }
                    1 => results.push(f.bus_read(rec_reg(0, REC_I)).unwrap()),
                    2 => f.wait_until_relaxed(),
                    3 => f.run_until_idle(),
                    4 => { f.bus_write(PG_MANIP_SCALE, 500 + arg * 250).unwrap(); }
                    _ => results.push(f.bus_read(SEQ_BUSY).unwrap()),
                }
            }
            f.run_until_idle();
            assert_eq!(f.clock().ledger_total(), f.now());
            (results, f.now(), f.clock().trace_digest())
        };
        prop_assert_eq!(run(seed), run(seed));
    }
}
