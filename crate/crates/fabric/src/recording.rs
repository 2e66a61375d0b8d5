//! Recording module: result-level readout plus optional trace capture.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::SignalConfig;
use crate::qubit::Measurement;

/// Result registers of one recording channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordingResult {
    pub channel: u32,
    pub i: i32,
    pub q: i32,
    pub detected_state: u8,
    pub valid: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Pending {
    pub measurement: Measurement,
    pub complete_ns: u64,
    pub trace: Vec<u32>,
}

#[derive(Debug, Clone)]
pub(crate) struct Channel {
    pub result: Option<Pending>,
    pub duration_ns: u32,
    pub trace_len: u32,
    pub trace_index: u32,
}

impl Channel {
    pub fn new(duration_ns: u32) -> Self {
        Self {
            result: None,
            duration_ns,
            trace_len: 0,
            trace_index: 0,
        }
    }

    pub fn busy(&self, now: u64) -> bool {
        self.result.as_ref().is_some_and(|p| p.complete_ns > now)
    }

    pub fn completed(&self, now: u64) -> Option<&Pending> {
        self.result.as_ref().filter(|p| p.complete_ns <= now)
    }

    pub fn snapshot(&self, channel: u32, now: u64) -> RecordingResult {
        match self.completed(now) {
            Some(p) => RecordingResult {
                channel,
                i: p.measurement.i,
                q: p.measurement.q,
                detected_state: p.measurement.detected_state,
                valid: true,
            },
            None => RecordingResult {
                channel,
                i: 0,
                q: 0,
                detected_state: 0,
                valid: false,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cplx {
    re: f64,
    im: f64,
}

/// Shared complex AR(1) field observed by every channel.
#[derive(Debug, Clone)]
pub(crate) struct SignalSource {
    config: SignalConfig,
    sample_period_ns: u64,
    rng: ChaCha8Rng,
    cached: Option<(u64, Vec<Cplx>)>,
}

impl SignalSource {
    pub fn new(config: SignalConfig, sample_period_ns: u64, rng: ChaCha8Rng) -> Self {
        Self {
            config,
            sample_period_ns,
            rng,
            cached: None,
        }
    }

    fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Source samples for a capture starting at `at_ns`. Channels triggered
    /// at the same instant observe the same realisation.
    fn field(&mut self, at_ns: u64, len: usize) -> Vec<Cplx> {
        if let Some((t, ref samples)) = self.cached {
            if t == at_ns && samples.len() >= len {
                return samples[..len].to_vec();
            }
        }
        let rho = (-(self.sample_period_ns as f64) / self.config.source_corr_ns).exp();
        let innovation = (1.0 - rho * rho).sqrt();
        let amp = self.config.source_amplitude / std::f64::consts::SQRT_2;
        let mut z = Cplx {
            re: amp * self.gaussian(),
            im: amp * self.gaussian(),
        };
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(z);
            let (gr, gi) = (self.gaussian(), self.gaussian());
            z = Cplx {
                re: rho * z.re + innovation * amp * gr,
                im: rho * z.im + innovation * amp * gi,
            };
        }
        self.cached = Some((at_ns, out.clone()));
        out
    }

    /// Packed 16-bit IQ samples for one channel.
    pub fn capture(&mut self, at_ns: u64, len: usize) -> Vec<u32> {
        let field = self.field(at_ns, len);
        let sigma = self.config.noise_sigma;
        field
            .into_iter()
            .map(|z| {
                let (ni, nq) = if sigma > 0.0 {
                    (sigma * self.gaussian(), sigma * self.gaussian())
                } else {
                    (0.0, 0.0)
                };
                pack_sample(quantize(z.re + ni), quantize(z.im + nq))
            })
            .collect()
    }
}

fn quantize(v: f64) -> i16 {
    v.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16
}

/// Packs one sample: I in bits 15..0, Q in bits 31..16.
pub fn pack_sample(i: i16, q: i16) -> u32 {
    u32::from(i as u16) | (u32::from(q as u16) << 16)
}

pub fn unpack_sample(word: u32) -> (i16, i16) {
    ((word & 0xFFFF) as u16 as i16, (word >> 16) as u16 as i16)
}
