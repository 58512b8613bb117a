use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Gaussian random-walk proposal with batch-wise scale adaptation.
///
/// While adapting, after every `batch` proposals the log-scale moves by
/// `(rate - target) / (target (1 - target)) * 0.5 / sqrt(b)` for the `b`-th
/// batch. Freezing stops adaptation and resets the counters, so the reported
/// acceptance rate refers to the fixed kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomWalk {
    pub scale: f64,
    adapting: bool,
    target: f64,
    batch: usize,
    batch_proposed: usize,
    batch_accepted: usize,
    batches: usize,
    proposed: usize,
    accepted: usize,
}

impl RandomWalk {
    pub fn new(scale: f64) -> Self {
        Self {
            scale,
            adapting: false,
            target: 0.3,
            batch: 25,
            batch_proposed: 0,
            batch_accepted: 0,
            batches: 0,
            proposed: 0,
            accepted: 0,
        }
    }

    pub(crate) fn configure(&mut self, adapting: bool, target: f64, batch: usize) {
        self.adapting = adapting;
        self.target = target;
        self.batch = batch;
    }

    pub(crate) fn freeze(&mut self) {
        self.adapting = false;
        self.proposed = 0;
        self.accepted = 0;
    }

    /// `current + scale * N(0, I)`.
    pub fn propose<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Vec<f64> {
        current
            .iter()
            .map(|c| {
                let e: f64 = rng.sample(StandardNormal);
                c + self.scale * e
            })
            .collect()
    }

    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += usize::from(accepted);
        if !self.adapting {
            return;
        }
        self.batch_proposed += 1;
        self.batch_accepted += usize::from(accepted);
        if self.batch_proposed == self.batch {
            self.batches += 1;
            let rate = self.batch_accepted as f64 / self.batch_proposed as f64;
            let gain = 0.5 / (self.batches as f64).sqrt();
            let step = (rate - self.target) / (self.target * (1.0 - self.target)) * gain;
            self.scale = (self.scale * step.exp()).clamp(1e-8, 1e4);
            self.batch_proposed = 0;
            self.batch_accepted = 0;
        }
    }

    /// Accepted fraction since the last freeze (NaN before any proposal).
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed as f64
    }
}

/// Metropolis accept/reject on a log ratio; non-finite ratios reject.
pub(crate) fn metropolis<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}
