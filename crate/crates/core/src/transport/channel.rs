//! Seeded simulated datagram channel with configurable delay and loss.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

/// Per-datagram delay spread around the base delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jitter {
    /// Symmetric uniform jitter in `[-half_width, +half_width]` seconds.
    Uniform { half_width: f64 },
    /// One-sided exponential tail with the given mean, seconds.
    Exponential { mean: f64 },
}

impl Jitter {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Jitter::Uniform { half_width } if *half_width >= 0.0 && half_width.is_finite() => Ok(()),
            Jitter::Exponential { mean } if *mean >= 0.0 && mean.is_finite() => Ok(()),
            _ => Err("jitter parameter must be a nonnegative finite number".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    /// Fixed one-way delay, seconds.
    pub base_delay: f64,
    pub jitter: Jitter,
    /// Probability that a datagram is silently dropped.
    pub loss_prob: f64,
    pub seed: u64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        // Midpoints of the measured internet delay and loss ranges.
        Self {
            base_delay: 0.02,
            jitter: Jitter::Uniform { half_width: 0.005 },
            loss_prob: 0.004,
            seed: 0,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_delay >= 0.0) || !self.base_delay.is_finite() {
            return Err("base_delay must be a nonnegative finite number".into());
        }
        self.jitter.validate()?;
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err("loss_prob must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// A datagram delivered by [`SimChannel::poll`].
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    /// Time the datagram arrived at the receiver, microseconds.
    pub at_us: u64,
    pub payload: Vec<u8>,
}

/// One direction of a point-to-point lossy channel.
///
/// Every datagram independently samples a drop decision and a delay, so later
/// sends can overtake earlier ones. The whole decision sequence is a pure
/// function of `(seed, stream, send order)`.
#[derive(Debug, Clone)]
pub struct SimChannel {
    model: ChannelModel,
    rng: ChaCha8Rng,
    in_flight: BinaryHeap<(Reverse<(u64, u64)>, Vec<u8>)>,
    sent: u64,
    dropped: u64,
    delivered: u64,
}

impl SimChannel {
    pub fn new(model: ChannelModel) -> Self {
        Self::with_stream(model, 0)
    }

    /// Distinct `stream` values give independent decision sequences from the
    /// same seed (e.g. uplink vs downlink).
    pub fn with_stream(model: ChannelModel, stream: u64) -> Self {
        model.validate().expect("invalid channel model");
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        rng.set_stream(stream);
        Self {
            model,
            rng,
            in_flight: BinaryHeap::new(),
            sent: 0,
            dropped: 0,
            delivered: 0,
        }
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    fn sample_delay(&mut self) -> f64 {
        let jitter = match self.model.jitter {
            Jitter::Uniform { half_width } => {
                if half_width > 0.0 {
                    self.rng.random_range(-half_width..=half_width)
                } else {
                    0.0
                }
            }
            Jitter::Exponential { mean } => {
                if mean > 0.0 {
                    self.rng.sample(Exp::new(1.0 / mean).expect("positive rate"))
                } else {
                    0.0
                }
            }
        };
        (self.model.base_delay + jitter).max(0.0)
    }

    /// Accepts a datagram for (possible) delivery.
    pub fn send(&mut self, payload: Vec<u8>, now_us: u64) {
        self.sent += 1;
        if self.model.loss_prob > 0.0 && self.rng.random_bool(self.model.loss_prob) {
            self.dropped += 1;
            return;
        }
        let delay_us = (self.sample_delay() * 1e6).round() as u64;
        let deliver_at = now_us + delay_us;
        self.in_flight
            .push((Reverse((deliver_at, self.sent)), payload));
    }

    /// Pops every datagram whose delivery time has been reached, in delivery
    /// order (ties broken by send order).
    pub fn poll(&mut self, now_us: u64) -> Vec<Delivery> {
        let mut out = Vec::new();
        while let Some((Reverse((at, _)), _)) = self.in_flight.peek() {
            if *at > now_us {
                break;
            }
            let (Reverse((at, _)), payload) = self.in_flight.pop().unwrap();
            self.delivered += 1;
            out.push(Delivery { at_us: at, payload });
        }
        out
    }

    pub fn next_delivery_us(&self) -> Option<u64> {
        self.in_flight.peek().map(|(Reverse((at, _)), _)| *at)
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }
}
