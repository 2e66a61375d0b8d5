//! Four-level stochastic qubit with dispersive IQ readout.
//!
//! Levels 0 and 1 form the computational subspace and are tracked as a pure
//! state with real amplitudes, so consecutive rotations compose coherently.
//! Levels 2 and 3 are reached only through leakage and are classical.
//!
//! Energy relaxation is simulated with a quantum-jump unravelling: over an
//! interval `dt`, a subspace state with excited population `p` jumps to the
//! ground state with probability `p (1 - e^{-dt/T1})` and is otherwise
//! renormalised with the excited amplitude damped by `e^{-dt/2T1}`. Leaked
//! levels decay sequentially 3 -> 2 -> 1 -> 0 with the same T1.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::config::QubitConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Level {
    Subspace { a0: f64, a1: f64 },
    Leaked(u8),
}

impl Level {
    const GROUND: Level = Level::Subspace { a0: 1.0, a1: 0.0 };
    const EXCITED: Level = Level::Subspace { a0: 0.0, a1: 1.0 };
}

/// Outcome of a single readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Measurement {
    pub i: i32,
    pub q: i32,
    /// Nearest-cluster assignment of the IQ point.
    pub detected_state: u8,
    /// Level the qubit occupied when the readout projected it.
    pub true_state: u8,
}

#[derive(Debug, Clone)]
pub struct QubitModel {
    config: QubitConfig,
    level: Level,
    last_update_ns: u64,
    rng: ChaCha8Rng,
}

impl QubitModel {
    pub fn new(config: QubitConfig, rng: ChaCha8Rng) -> Self {
        Self {
            config,
            level: Level::GROUND,
            last_update_ns: 0,
            rng,
        }
    }

    pub fn config(&self) -> &QubitConfig {
        &self.config
    }

    /// Population of level 1 (or 1.0/0.0 for a leaked level ≥ 1).
    pub fn excited_population(&self) -> f64 {
        match self.level {
            Level::Subspace { a1, .. } => a1 * a1,
            Level::Leaked(_) => 1.0,
        }
    }

    /// Occupied level if the state is not a superposition.
    pub fn definite_level(&self) -> Option<u8> {
        match self.level {
            Level::Leaked(l) => Some(l),
            Level::Subspace { a1, .. } if a1 == 0.0 => Some(0),
            Level::Subspace { a0, .. } if a0 == 0.0 => Some(1),
            Level::Subspace { .. } => None,
        }
    }

    /// Forces the qubit into `level` (test and calibration helper).
    pub fn prepare(&mut self, level: u8, at_ns: u64) {
        self.level = match level {
            0 => Level::GROUND,
            1 => Level::EXCITED,
            l => Level::Leaked(l.min(3)),
        };
        self.last_update_ns = at_ns;
    }

    /// Additive slow I offset at `at_ns`.
    pub fn drift_offset(&self, at_ns: u64) -> f64 {
        let d = &self.config.drift;
        if d.amplitude == 0.0 {
            return 0.0;
        }
        d.amplitude * (std::f64::consts::TAU * d.frequency_hz * at_ns as f64 * 1e-9).sin()
    }

    /// Applies relaxation for the time elapsed since the last interaction.
    pub fn relax_until(&mut self, at_ns: u64) {
        if at_ns <= self.last_update_ns {
            return;
        }
        let dt = (at_ns - self.last_update_ns) as f64;
        self.last_update_ns = at_ns;
        let t1 = self.config.t1_ns;
        if t1 <= 0.0 {
            return;
        }

        let mut remaining = dt;
        if let Level::Leaked(mut l) = self.level {
            let step = Exp::new(1.0 / t1).expect("positive rate");
            loop {
                let t: f64 = step.sample(&mut self.rng);
                if t > remaining {
                    self.level = Level::Leaked(l);
                    return;
                }
                remaining -= t;
                l -= 1;
                if l == 1 {
                    self.level = Level::EXCITED;
                    break;
                }
            }
        }

        if let Level::Subspace { a0, a1 } = self.level {
            let p = a1 * a1;
            if p == 0.0 {
                return;
            }
            let survive = (-remaining / t1).exp();
            let jump = p * (1.0 - survive);
            let u: f64 = self.rng.gen();
            if u < jump {
                self.level = Level::GROUND;
            } else {
                let b = a1 * survive.sqrt();
                let norm = (a0 * a0 + b * b).sqrt();
                self.level = Level::Subspace {
                    a0: a0 / norm,
                    a1: b / norm,
                };
            }
        }
    }

    /// Rotation about a fixed axis of the 0/1 subspace.
    pub fn pulse(&mut self, theta_rad: f64, at_ns: u64) {
        self.relax_until(at_ns);
        let Level::Subspace { a0, a1 } = self.level else {
            return;
        };
        let leak = self.config.leakage_prob;
        if leak > 0.0 && self.rng.gen::<f64>() < leak {
            let to_three = self.rng.gen::<f64>() < self.config.leakage_to_3_fraction;
            self.level = Level::Leaked(if to_three { 3 } else { 2 });
            return;
        }
        let (s, c) = (theta_rad / 2.0).sin_cos();
        self.level = Level::Subspace {
            a0: c * a0 - s * a1,
            a1: s * a0 + c * a1,
        };
    }

    /// Projective readout at `at_ns`. The qubit collapses onto the detected
    /// state.
    pub fn measure(&mut self, at_ns: u64) -> Measurement {
        self.relax_until(at_ns);
        let true_state = match self.level {
            Level::Leaked(l) => l,
            Level::Subspace { a1, .. } => {
                let p = a1 * a1;
                if p <= 0.0 {
                    0
                } else if p >= 1.0 {
                    1
                } else if self.rng.gen::<f64>() < p {
                    1
                } else {
                    0
                }
            }
        };

        let [mut i, mut q] = self.config.cluster_means[true_state as usize];
        let sigma = self.config.readout_sigma;
        if sigma > 0.0 {
            let ni: f64 = StandardNormal.sample(&mut self.rng);
            let nq: f64 = StandardNormal.sample(&mut self.rng);
            i += sigma * ni;
            q += sigma * nq;
        }
        i += self.drift_offset(at_ns);

        let detected_state = nearest_cluster(&self.config.cluster_means, i, q);
        self.prepare(detected_state, at_ns);

        Measurement {
            i: to_i32(i),
            q: to_i32(q),
            detected_state,
            true_state,
        }
    }
}

/// Index of the closest cluster mean; ties go to the lower level.
pub fn nearest_cluster(means: &[[f64; 2]; 4], i: f64, q: f64) -> u8 {
    let mut best = 0u8;
    let mut best_d = f64::INFINITY;
    for (idx, [mi, mq]) in means.iter().enumerate() {
        let d = (i - mi).powi(2) + (q - mq).powi(2);
        if d < best_d {
            best_d = d;
            best = idx as u8;
        }
    }
    best
}

fn to_i32(v: f64) -> i32 {
    v.round().clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn model(cfg: QubitConfig) -> QubitModel {
        QubitModel::new(cfg, ChaCha8Rng::seed_from_u64(11))
    }

    fn quiet() -> QubitConfig {
        QubitConfig {
            readout_sigma: 0.0,
            ..QubitConfig::default()
        }
    }

    #[test]
    fn noiseless_readout_hits_cluster_mean() {
        let mut q = model(quiet());
        for level in 0..4u8 {
            q.prepare(level, 0);
            let m = q.measure(0);
            let [ci, cq] = q.config().cluster_means[level as usize];
            assert_eq!((m.i, m.q), (ci as i32, cq as i32));
            assert_eq!(m.detected_state, level);
        }
    }

    #[test]
    fn drift_quarter_period_is_full_amplitude() {
        let mut cfg = quiet();
        cfg.drift.amplitude = 1234.0;
        cfg.drift.frequency_hz = 50.0;
        let q = model(cfg);
        assert!((q.drift_offset(5_000_000) - 1234.0).abs() < 1e-9);
        assert_eq!(q.drift_offset(0), 0.0);
    }

    #[test]
    fn immediate_remeasurement_is_stable() {
        let mut q = model(QubitConfig::default());
        q.pulse(std::f64::consts::FRAC_PI_2, 0);
        let first = q.measure(0).detected_state;
        for _ in 0..20 {
            assert_eq!(q.measure(0).detected_state, first);
        }
    }

    #[test]
    fn two_half_rotations_compose() {
        let mut q = model(quiet());
        q.pulse(std::f64::consts::FRAC_PI_2, 0);
        q.pulse(std::f64::consts::FRAC_PI_2, 0);
        assert!((q.excited_population() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_t1_disables_relaxation() {
        let mut cfg = quiet();
        cfg.t1_ns = 0.0;
        let mut q = model(cfg);
        q.prepare(1, 0);
        q.relax_until(1_000_000_000);
        assert_eq!(q.definite_level(), Some(1));
    }

    #[test]
    fn leaked_levels_decay_to_ground_eventually() {
        let mut cfg = quiet();
        cfg.t1_ns = 10.0;
        let mut q = model(cfg);
        q.prepare(3, 0);
        q.relax_until(100_000);
        assert_eq!(q.definite_level(), Some(0));
    }

    #[test]
    fn nearest_cluster_prefers_lower_on_tie() {
        let means = [[0.0, 0.0], [2.0, 0.0], [100.0, 0.0], [200.0, 0.0]];
        assert_eq!(nearest_cluster(&means, 1.0, 0.0), 0);
        assert_eq!(nearest_cluster(&means, 1.5, 0.0), 1);
    }
}
