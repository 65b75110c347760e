use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{DistributionSpec, GapSampler};

/// Law of the first epoch of a renewal stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayMode {
    /// First gap drawn from the same law as the rest.
    Ordinary,
    /// First gap drawn from the integrated-tail law, which makes the
    /// stream's increments stationary.
    Equilibrium,
    /// First epoch at a fixed offset.
    Fixed(f64),
}

/// A seeded renewal event stream emitting strictly increasing epochs.
#[derive(Debug, Clone)]
pub struct RenewalStream {
    dist: DistributionSpec,
    sampler: GapSampler,
    delay_mode: DelayMode,
    rng: ChaCha8Rng,
    last_epoch: f64,
    emitted: u64,
}

impl RenewalStream {
    pub fn new(dist: DistributionSpec, delay_mode: DelayMode, rng: ChaCha8Rng) -> Self {
        Self {
            sampler: dist.sampler(),
            dist,
            delay_mode,
            rng,
            last_epoch: 0.0,
            emitted: 0,
        }
    }

    pub fn dist(&self) -> &DistributionSpec {
        &self.dist
    }

    /// Next arrival epoch. Gaps after the first are i.i.d. from the gap law.
    pub fn next_epoch(&mut self) -> f64 {
        let gap = self.next_gap();
        self.last_epoch += gap;
        self.last_epoch
    }

    /// Next inter-event gap (first one honors the delay mode). Zero draws
    /// carry probability zero but would break the strict event order, so
    /// they are skipped deterministically.
    pub fn next_gap(&mut self) -> f64 {
        let mut gap = if self.emitted == 0 {
            match self.delay_mode {
                DelayMode::Ordinary => self.sampler.sample(&mut self.rng),
                DelayMode::Equilibrium => self.dist.sample_equilibrium(&mut self.rng),
                DelayMode::Fixed(d) => d,
            }
        } else {
            self.sampler.sample(&mut self.rng)
        };
        if self.emitted > 0 || !matches!(self.delay_mode, DelayMode::Fixed(_)) {
            while gap <= 0.0 {
                gap = self.sampler.sample(&mut self.rng);
            }
        }
        self.emitted += 1;
        gap
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }
}

/// Sample one delay from the equilibrium (integrated-tail) law of `dist`.
pub fn equilibrium_delay_sample(dist: &DistributionSpec, seed: u64) -> f64 {
    let mut rng = super::rng::tagged_rng(seed, &[0x65716c]);
    dist.sample_equilibrium(&mut rng)
}

/// Routing decisions of one station: i.i.d. draws over `{0, 1, ..., K}`
/// where `0` is the exit. Decision sequences are replayable from the stored
/// initial generator state, so tallies at different depths are consistent
/// prefixes of one sequence.
#[derive(Debug, Clone)]
pub struct RoutingSequence {
    /// Cumulative probabilities over targets `1..=K`; the tail above the
    /// last entry is the exit mass.
    cumulative: Vec<f64>,
    initial_rng: ChaCha8Rng,
    rng: ChaCha8Rng,
}

impl RoutingSequence {
    /// `row` is the routing row `p_k1 ... p_kK`.
    pub fn new(row: &[f64], rng: ChaCha8Rng) -> Self {
        let mut cumulative = Vec::with_capacity(row.len());
        let mut acc = 0.0;
        for &p in row {
            acc += p;
            cumulative.push(acc);
        }
        Self { cumulative, initial_rng: rng.clone(), rng }
    }

    /// Draw the next decision: `Some(l)` for a transfer to station `l`
    /// (zero-based), `None` for an exit.
    pub fn next_decision(&mut self) -> Option<usize> {
        let u: f64 = self.rng.random();
        self.cumulative.iter().position(|&c| u < c)
    }

    /// Tally of the first `m` decisions: entry `0` counts exits, entry
    /// `l + 1` counts transfers to station `l`. Replays from the start, so
    /// the result is a consistent prefix regardless of interleaved calls.
    pub fn route(&self, m: u64) -> Vec<u64> {
        let mut counts = vec![0u64; self.cumulative.len() + 1];
        let mut replay = Self {
            cumulative: self.cumulative.clone(),
            initial_rng: self.initial_rng.clone(),
            rng: self.initial_rng.clone(),
        };
        for _ in 0..m {
            match replay.next_decision() {
                Some(l) => counts[l + 1] += 1,
                None => counts[0] += 1,
            }
        }
        counts
    }
}

/// Center a counting path: `values[i] - rate * times[i]`.
pub fn center_counting(times: &[f64], values: &[f64], rate: f64) -> Vec<f64> {
    assert_eq!(times.len(), values.len());
    times.iter().zip(values).map(|(&t, &v)| v - rate * t).collect()
}
