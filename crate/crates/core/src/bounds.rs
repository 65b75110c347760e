//! Tails of negative-drift random-walk suprema.
//!
//! The fluctuation terms of the reflection majorants converge, for a
//! stationary network, to suprema of random walks built from centered
//! interarrival or service times (and routing indicators), with a linear
//! drift subtracted. This module evaluates
//!
//! ```text
//! P( sup_{i >= 1} (W_i - d i) >= x ),    W_i = F + X_2 + ... + X_i,
//! ```
//!
//! where the first term `F` may carry an equilibrium delay, by truncated
//! Monte Carlo with a certified truncation depth, and dominates it with
//! three analytic routes:
//!
//! * the Lundberg bound `E e^{theta* F} e^{-theta* (x + d)}` from the
//!   positive root of `E e^{theta (X - d)} = 1`;
//! * a Chernoff head term plus a dyadic-block tail sum (light tails);
//! * Markov plus Kolmogorov block bounds from first/second moments
//!   (heavy tails with finite variance).

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DistributionSpec, DriftReport, NetworkSpec};
use crate::primitives::tagged_rng;
use crate::stats::Proportion;

/// Law of the first walk term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstTermMode {
    /// Same law as the later increments.
    Iid,
    /// Renewal part drawn from the integrated-tail law (stationary start).
    EquilibriumDelay,
}

/// Increment structure of the walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncrementModel {
    /// `X = coef * (xi - E xi)` for an interarrival variable `xi`.
    ScaledInterarrival { coef: f64 },
    /// `X = coef * (eta - E eta)` for a service variable `eta`.
    ScaledService { coef: f64 },
    /// `X = (1{transfer} - p) + coef * (eta - E eta)`: a centered routing
    /// indicator plus a scaled centered service time, drawn independently.
    RoutingPlusService { transfer_prob: f64, coef: f64 },
}

/// A negative-drift random-walk supremum problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SupWalkSpec {
    pub increment: IncrementModel,
    /// Gap law behind the centered renewal part.
    pub source: DistributionSpec,
    /// Per-step drift `d > 0`.
    pub drift: f64,
    /// Threshold offset `c` carried by the originating tail identity: the
    /// identity maps a fluctuation level `u` to the walk event
    /// `sup_i (W_i - d (i-1)) >= u + c`.
    pub offset: f64,
    pub first_term: FirstTermMode,
}

impl SupWalkSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.drift > 0.0) {
            return Err(Error::Precondition(format!(
                "drift {} is not positive; the supremum may be infinite",
                self.drift
            )));
        }
        Ok(())
    }

    /// Walk-level threshold for a fluctuation level `u`, in the
    /// `sup_i (W_i - d i)` convention used throughout this module:
    /// `sup_i (W_i - d (i-1)) = sup_i (W_i - d i) + d`.
    pub fn threshold_for_level(&self, u: f64) -> f64 {
        u + self.offset - self.drift
    }

    fn renewal_coef(&self) -> f64 {
        match self.increment {
            IncrementModel::ScaledInterarrival { coef } | IncrementModel::ScaledService { coef } => coef,
            IncrementModel::RoutingPlusService { coef, .. } => coef,
        }
    }

    /// Mean of the first renewal epoch under the first-term mode. Falls back
    /// to a fixed-seed Monte Carlo average of the equilibrium law when the
    /// integrated-tail mean is infinite.
    pub fn first_epoch_mean(&self) -> f64 {
        match self.first_term {
            FirstTermMode::Iid => self.source.mean(),
            FirstTermMode::EquilibriumDelay => self.source.equilibrium_mean().unwrap_or_else(|| {
                let mut rng = tagged_rng(0x657175696d63, &[]);
                let n = 1_000_000;
                (0..n).map(|_| self.source.sample_equilibrium(&mut rng)).sum::<f64>() / n as f64
            }),
        }
    }

    /// Closed-form mgf of a generic increment at `theta >= 0`, when the
    /// source family supports one.
    pub fn increment_mgf(&self, theta: f64) -> Option<f64> {
        let coef = self.renewal_coef();
        let renewal = centered_mgf(&self.source, self.source.mean(), theta * coef)?;
        Some(self.bernoulli_mgf(theta) * renewal)
    }

    /// Closed-form mgf of the first term.
    pub fn first_term_mgf(&self, theta: f64) -> Option<f64> {
        match self.first_term {
            FirstTermMode::Iid => self.increment_mgf(theta),
            FirstTermMode::EquilibriumDelay => {
                let coef = self.renewal_coef();
                let m_e = self.first_epoch_mean();
                let renewal = equilibrium_centered_mgf(&self.source, m_e, theta * coef)?;
                Some(self.bernoulli_mgf(theta) * renewal)
            }
        }
    }

    fn bernoulli_mgf(&self, theta: f64) -> f64 {
        match self.increment {
            IncrementModel::RoutingPlusService { transfer_prob: p, .. } => {
                p * (theta * (1.0 - p)).exp() + (1.0 - p) * (-theta * p).exp()
            }
            _ => 1.0,
        }
    }

    /// Supremum of `theta > 0` where the increment mgf stays finite.
    pub fn mgf_theta_sup(&self) -> f64 {
        let coef = self.renewal_coef();
        if coef <= 0.0 {
            f64::INFINITY
        } else {
            self.source.mgf_boundary() / coef
        }
    }

    /// Whether the light-tailed (exponential-moment) route applies.
    pub fn exp_capable(&self) -> bool {
        self.source.capabilities().exp_moment.is_some()
    }

    /// Variance of a generic increment; `None` without a second moment.
    pub fn increment_variance(&self) -> Option<f64> {
        let coef = self.renewal_coef();
        let v = self.source.variance()? * coef * coef;
        Some(match self.increment {
            IncrementModel::RoutingPlusService { transfer_prob: p, .. } => v + p * (1.0 - p),
            _ => v,
        })
    }

    /// Upper bound on `E F^+` used by the Markov block terms.
    pub fn first_term_positive_part_bound(&self) -> f64 {
        let coef = self.renewal_coef().abs();
        let base = coef * self.first_epoch_mean();
        match self.increment {
            IncrementModel::RoutingPlusService { transfer_prob: p, .. } => base + 2.0 * p * (1.0 - p),
            _ => base,
        }
    }

    fn sample_first(&self, rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        let gap = match self.first_term {
            FirstTermMode::Iid => self.source.sample(rng),
            FirstTermMode::EquilibriumDelay => self.source.sample_equilibrium(rng),
        };
        let centered = gap - self.first_epoch_mean();
        self.apply_increment(centered, rng)
    }

    fn sample_increment(&self, rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        let centered = self.source.sample(rng) - self.source.mean();
        self.apply_increment(centered, rng)
    }

    fn apply_increment(&self, centered_gap: f64, rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
        match self.increment {
            IncrementModel::ScaledInterarrival { coef } | IncrementModel::ScaledService { coef } => {
                coef * centered_gap
            }
            IncrementModel::RoutingPlusService { transfer_prob: p, coef } => {
                let b = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                (b - p) + coef * centered_gap
            }
        }
    }
}

fn centered_mgf(dist: &DistributionSpec, mean: f64, s: f64) -> Option<f64> {
    Some((-s * mean).exp() * dist.mgf(s)?)
}

/// Mgf of the centered equilibrium first epoch: the integrated-tail law of
/// `dist` has mgf `(M(s) - 1) / (s * mean)`.
fn equilibrium_centered_mgf(dist: &DistributionSpec, eq_mean: f64, s: f64) -> Option<f64> {
    if s == 0.0 {
        return Some(1.0);
    }
    let m = dist.mgf(s)?;
    Some((-s * eq_mean).exp() * (m - 1.0) / (s * dist.mean()))
}

/// Per-replicate supremum samples for a truncated walk.
struct SupSamples {
    /// `sup_{i <= steps} (W_i - d i)` per replicate.
    full: Vec<f64>,
    /// Same supremum truncated at `steps / 2`.
    half: Vec<f64>,
}

fn simulate_sup_samples(spec: &SupWalkSpec, steps: u64, reps: u64, seed: u64) -> SupSamples {
    let half_at = (steps / 2).max(1);
    let results: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = tagged_rng(seed, &[rep, 0x77616c6b]);
            let d = spec.drift;
            let mut w = spec.sample_first(&mut rng);
            let mut best = w - d;
            let mut best_half = best;
            for i in 2..=steps {
                w += spec.sample_increment(&mut rng);
                let v = w - d * i as f64;
                if v > best {
                    best = v;
                }
                if i == half_at {
                    best_half = best;
                }
            }
            if steps == 1 {
                best_half = best;
            }
            (best, best_half)
        })
        .collect();
    SupSamples {
        full: results.iter().map(|r| r.0).collect(),
        half: results.iter().map(|r| r.1).collect(),
    }
}

/// Monte Carlo estimate of a supremum tail, with truncation diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct SupTailEstimate {
    pub threshold: f64,
    pub prob: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub standard_error: f64,
    pub replications: u64,
    /// Truncation depth actually used.
    pub i_max: u64,
    /// Estimate change over the last truncation doubling, in SE units.
    pub stabilization_gap_se: f64,
    /// Analytic residual bound beyond `i_max` when the Lundberg route was
    /// available to certify the truncation.
    pub residual_bound: Option<f64>,
}

/// Estimate `P(sup_i (W_i - d i) >= threshold)`.
///
/// The infinite supremum is truncated at `i_max`; when absent, the depth is
/// certified by the Lundberg residual bound (light tails) or grown by
/// doubling until the estimate moves by less than half a standard error.
pub fn supwalk_tail_mc(
    spec: &SupWalkSpec,
    threshold: f64,
    i_max: Option<u64>,
    reps: u64,
    seed: u64,
) -> Result<SupTailEstimate> {
    spec.validate()?;
    if reps < 2 {
        return Err(Error::Precondition("need at least 2 replications".into()));
    }

    let lundberg = if spec.exp_capable() { lundberg_exponent(spec)? } else { None };
    let mut residual_bound = None;
    let mut depth = match i_max {
        Some(d) => d.max(1),
        None => match lundberg {
            Some(theta) => {
                let (d, r) = certified_depth(spec, theta, threshold)?;
                residual_bound = Some(r);
                d
            }
            None => 256,
        },
    };

    let mut last = simulate_sup_samples(spec, depth, reps, seed);
    let mut gap_se;
    loop {
        let hits = last.full.iter().filter(|&&v| v >= threshold).count() as u64;
        let hits_half = last.half.iter().filter(|&&v| v >= threshold).count() as u64;
        let p = hits as f64 / reps as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        gap_se = if se > 0.0 { (hits - hits_half) as f64 / reps as f64 / se } else { 0.0 };
        let stabilized = (hits - hits_half) as f64 / reps as f64 <= 0.5 * se.max(f64::MIN_POSITIVE)
            || hits == hits_half;
        if i_max.is_some() || stabilized || depth >= (1 << 22) {
            let w = Proportion::wilson(hits, reps, 1.96);
            return Ok(SupTailEstimate {
                threshold,
                prob: w.estimate,
                ci_low: w.ci_low,
                ci_high: w.ci_high,
                standard_error: w.standard_error(),
                replications: reps,
                i_max: depth,
                stabilization_gap_se: gap_se,
                residual_bound,
            });
        }
        depth *= 2;
        last = simulate_sup_samples(spec, depth, reps, seed);
    }
}

/// Smallest dyadic depth whose residual bound is below one hundredth of the
/// Lundberg bound of the event itself.
fn certified_depth(spec: &SupWalkSpec, theta_star: f64, threshold: f64) -> Result<(u64, f64)> {
    let target = lundberg_tail_bound(spec, theta_star, threshold).min(1.0) / 100.0;
    // contraction for the position term P(W_{I+1} >= d I / 2)
    let mut theta0 = theta_star / 2.0;
    let mut contraction = f64::INFINITY;
    for _ in 0..60 {
        if let Some(m) = spec.increment_mgf(theta0) {
            contraction = m * (-theta0 * spec.drift / 2.0).exp();
            if contraction < 1.0 {
                break;
            }
        }
        theta0 /= 2.0;
    }
    if !(contraction < 1.0) {
        return Err(Error::Numerical("no contraction for the truncation certificate".into()));
    }
    let c0 = spec.first_term_mgf(theta0).unwrap_or(f64::INFINITY);
    let mut depth = 64u64;
    for _ in 0..40 {
        let position = c0 * contraction.powf(depth as f64);
        let fresh = (-theta_star * (threshold + spec.drift + spec.drift * depth as f64 / 2.0)).exp();
        let residual = position + fresh;
        if residual < target || depth >= (1 << 22) {
            return Ok((depth, residual));
        }
        depth *= 2;
    }
    Ok((depth, f64::NAN))
}

/// Positive root of `E e^{theta (X - d)} = 1`, by bisection to 1e-10.
///
/// Returns `Ok(None)` when no positive root exists below the mgf boundary
/// (increments bounded below the drift). Heavy-tailed sources are rejected
/// with a capability error pointing at the second-moment route.
pub fn lundberg_exponent(spec: &SupWalkSpec) -> Result<Option<f64>> {
    spec.validate()?;
    if !spec.exp_capable() {
        return Err(Error::Capability(format!(
            "source family {} has no exponential moment; use the second-moment block bound",
            spec.source.family_name()
        )));
    }
    let theta_sup = spec.mgf_theta_sup();
    // g(theta) = E e^{theta (X - d)} - 1; g(0) = 0, g'(0) = -d < 0.
    let g = |theta: f64| -> f64 {
        match spec.increment_mgf(theta) {
            Some(m) => m * (-theta * spec.drift).exp() - 1.0,
            None => f64::INFINITY,
        }
    };
    // find a sign change by pushing toward the boundary
    let mut hi = if theta_sup.is_finite() { theta_sup * 0.5 } else { 1.0 };
    let mut found = g(hi) > 0.0;
    for _ in 0..200 {
        if found {
            break;
        }
        hi = if theta_sup.is_finite() { 0.5 * (hi + theta_sup) } else { hi * 2.0 };
        if !theta_sup.is_finite() && hi > 1e12 {
            break;
        }
        if theta_sup.is_finite() && (theta_sup - hi) / theta_sup < 1e-13 {
            break;
        }
        found = g(hi) > 0.0;
    }
    if !found {
        return Ok(None);
    }
    let mut lo = 0.0f64;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Lundberg bound for `P(sup_i (W_i - d i) >= threshold)`:
/// `e^{theta* (W_i - d (i-1))}` is a nonnegative martingale, so the maximal
/// inequality gives `E e^{theta* F} e^{-theta* (threshold + d)}`.
pub fn lundberg_tail_bound(spec: &SupWalkSpec, theta_star: f64, threshold: f64) -> f64 {
    let prefactor = spec.first_term_mgf(theta_star).unwrap_or(f64::INFINITY);
    prefactor * (-theta_star * (threshold + spec.drift)).exp()
}

/// Chernoff bound for one block event `P(max_{1<=i<=steps} W_i >= level)`
/// (`delayed`) or the same event for a fresh walk of i.i.d. increments
/// without the first-term law (`!delayed`). Doob's submartingale inequality
/// applied to `e^{theta W_i}`.
pub fn chernoff_block_term(
    spec: &SupWalkSpec,
    theta: f64,
    steps: f64,
    level: f64,
    delayed: bool,
) -> Result<f64> {
    let m = spec
        .increment_mgf(theta)
        .ok_or_else(|| Error::Capability("increment mgf unavailable at this theta".into()))?;
    let log_term = if delayed {
        let c = spec
            .first_term_mgf(theta)
            .ok_or_else(|| Error::Capability("first-term mgf unavailable at this theta".into()))?;
        -theta * level + c.ln() + (steps - 1.0) * m.ln()
    } else {
        -theta * level + steps * m.ln()
    };
    Ok(log_term.exp())
}

/// Markov + Kolmogorov bound for the same block events: splitting the level
/// between the first term and the centered walk,
/// `P(max W_i >= a) <= 2 E F^+ / a + 4 (steps - 1) Var X / a^2`; the fresh
/// walk needs no split, `P(max T_i >= a) <= steps Var X / a^2`.
pub fn second_moment_block_term(
    spec: &SupWalkSpec,
    steps: f64,
    level: f64,
    delayed: bool,
) -> Result<f64> {
    let var = spec
        .increment_variance()
        .ok_or_else(|| Error::Capability("increment variance unavailable (no second moment)".into()))?;
    Ok(if delayed {
        2.0 * spec.first_term_positive_part_bound() / level + 4.0 * (steps - 1.0) * var / (level * level)
    } else {
        steps * var / (level * level)
    })
}

/// Value and internals of the dyadic-block Chernoff bound.
#[derive(Debug, Clone, Serialize)]
pub struct DyadicBound {
    pub value: f64,
    pub head_term: f64,
    pub tail_sum: f64,
    /// Chernoff parameter actually used.
    pub theta: f64,
    /// Per-step contraction `E e^{theta X} e^{-theta d / 4}` at that theta.
    pub contraction: f64,
    pub head_len: u64,
    pub first_block_exponent: u32,
    pub blocks_summed: u32,
}

/// Dyadic-block Chernoff upper bound for
/// `P(sup_i (W_i - d i) >= n u / 5)`: a Doob/Chernoff head term over the
/// first `floor(n u)` steps plus block terms `P(max_{i <= 2^j} W_i >= d
/// 2^{j-1})` for `j >= floor(log2 floor(n u))`, each block contributing its
/// delayed and fresh Chernoff terms. The series is summed until terms fall
/// below 1e-16 of the partial sum.
pub fn chernoff_dyadic_bound(
    spec: &SupWalkSpec,
    u: f64,
    n_scale: f64,
    theta: Option<f64>,
) -> Result<DyadicBound> {
    let nu = n_scale * u;
    dyadic_bound_at_threshold(spec, nu / 5.0, nu.floor().max(1.0) as u64, theta)
}

/// The same machinery for an arbitrary walk threshold `a`, with head range
/// `floor(5a)`; used to compare against Monte Carlo estimates of the exact
/// same event.
pub fn dyadic_bound_at_threshold(
    spec: &SupWalkSpec,
    a: f64,
    head_len: u64,
    theta: Option<f64>,
) -> Result<DyadicBound> {
    spec.validate()?;
    if !spec.exp_capable() {
        return Err(Error::Capability(format!(
            "source family {} has no exponential moment; use the second-moment block bound",
            spec.source.family_name()
        )));
    }
    if !(a > 0.0) {
        return Err(Error::Precondition(format!("threshold {a} must be positive")));
    }
    let d = spec.drift;
    let mut th = match theta {
        Some(t) => t,
        None => match lundberg_exponent(spec)? {
            Some(t) => t / 2.0,
            None => 1.0,
        },
    };
    // shrink until the per-step contraction is below one
    let mut contraction = f64::INFINITY;
    let mut ok = false;
    for _ in 0..60 {
        if let Some(m) = spec.increment_mgf(th) {
            contraction = m * (-th * d / 4.0).exp();
            if contraction < 1.0 {
                ok = true;
                break;
            }
        }
        th /= 2.0;
    }
    if !ok {
        return Err(Error::Numerical(
            "no Chernoff parameter with contraction below one after 60 halvings".into(),
        ));
    }

    let head_len = head_len.max(1);
    let head = chernoff_block_term(spec, th, head_len as f64, a, true)?;
    let j0 = (head_len as f64).log2().floor() as u32;
    let mut tail = 0.0;
    let mut blocks = 0u32;
    for j in j0..=(j0 + 4000) {
        let steps = (2.0f64).powi(j as i32);
        let level = d * (2.0f64).powi(j as i32 - 1);
        let term =
            chernoff_block_term(spec, th, steps, level, true)? + chernoff_block_term(spec, th, steps, level, false)?;
        tail += term;
        blocks += 1;
        if term < 1e-16 * tail.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(DyadicBound {
        value: head + tail,
        head_term: head,
        tail_sum: tail,
        theta: th,
        contraction,
        head_len,
        first_block_exponent: j0,
        blocks_summed: blocks,
    })
}

/// Value and internals of the first/second-moment block bound.
#[derive(Debug, Clone, Serialize)]
pub struct SecondMomentBound {
    pub value: f64,
    pub head_term: f64,
    pub tail_sum: f64,
    /// Markov (first-moment) part of the tail sum.
    pub tail_markov: f64,
    /// Kolmogorov (variance) part of the tail sum.
    pub tail_kolmogorov: f64,
    pub head_len: u64,
    pub first_block_exponent: u32,
}

/// Markov + Kolmogorov block bound for `P(sup_i (W_i - d i) >= n u / 5)`,
/// the heavy-tailed counterpart of the dyadic Chernoff bound. The dyadic
/// tail is a geometric series in `2^{-j}`, summed in closed form; with a
/// zero-variance increment only the first-moment Markov terms remain.
pub fn second_moment_block_bound(spec: &SupWalkSpec, u: f64, n_scale: f64) -> Result<SecondMomentBound> {
    let nu = n_scale * u;
    second_moment_bound_at_threshold(spec, nu / 5.0, nu.floor().max(1.0) as u64)
}

pub fn second_moment_bound_at_threshold(
    spec: &SupWalkSpec,
    a: f64,
    head_len: u64,
) -> Result<SecondMomentBound> {
    spec.validate()?;
    if !(a > 0.0) {
        return Err(Error::Precondition(format!("threshold {a} must be positive")));
    }
    let var = spec
        .increment_variance()
        .ok_or_else(|| Error::Capability("missing second moment for the block bound".into()))?;
    let ef_plus = spec.first_term_positive_part_bound();
    let d = spec.drift;
    let head_len = head_len.max(1);
    let head = second_moment_block_term(spec, head_len as f64, a, true)?;
    let j0 = (head_len as f64).log2().floor() as u32;
    // per block j: level a_j = d 2^{j-1};
    //   delayed: 2 EF+ / a_j + 4 * 2^j Var / a_j^2  (steps - 1 <= 2^j)
    //   fresh:   2^j Var / a_j^2
    // every piece is proportional to 2^{-j}; sum_{j >= j0} 2^{-j} = 2^{1-j0}
    let geom = (2.0f64).powi(1 - j0 as i32);
    let tail_markov = (4.0 * ef_plus / d) * geom;
    let tail_kolmogorov = (16.0 * var / (d * d) + 4.0 * var / (d * d)) * geom;
    let tail = tail_markov + tail_kolmogorov;
    Ok(SecondMomentBound {
        value: head + tail,
        head_term: head,
        tail_sum: tail,
        tail_markov,
        tail_kolmogorov,
        head_len,
        first_block_exponent: j0,
    })
}

/// Monte Carlo estimate of one block event
/// `P(max_{1<=i<=steps} W_i >= level)` (`delayed`) or the fresh-walk
/// analogue (`!delayed`); the oracle the analytic block terms must dominate.
pub fn block_max_exceed_mc(
    spec: &SupWalkSpec,
    steps: u64,
    level: f64,
    delayed: bool,
    reps: u64,
    seed: u64,
) -> Proportion {
    let hits: u64 = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = tagged_rng(seed, &[rep, 0x626c6f636b]);
            let mut w = if delayed { spec.sample_first(&mut rng) } else { spec.sample_increment(&mut rng) };
            let mut best = w;
            for _ in 2..=steps {
                w += spec.sample_increment(&mut rng);
                if w > best {
                    best = w;
                }
            }
            u64::from(best >= level)
        })
        .sum();
    Proportion::wilson(hits, reps, 1.96)
}

/// Which fluctuation term a walk spec bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TailKind {
    /// Arrival burst term of the tagged station.
    Arrival,
    /// Routing fluctuation sourced at `l`.
    Routing,
    /// Service fluctuation sourced at `l` (two one-sided branches).
    Service,
}

/// Walk specs whose supremum tails bound the limiting fluctuation terms of
/// station `k`; `source` names the feeding station for the routing/service
/// kinds. The arrival kind of a station without exogenous arrivals yields no
/// walks (its burst term is identically zero).
pub fn fluctuation_walk_specs(
    net: &NetworkSpec,
    drift: &DriftReport,
    station: usize,
    source: usize,
    kind: TailKind,
) -> Result<Vec<SupWalkSpec>> {
    let k = station;
    let kk = net.station_count();
    if k >= kk || source >= kk {
        return Err(Error::Precondition("station index out of range".into()));
    }
    let nu = drift.nu[k];
    if nu <= 0.0 {
        return Err(Error::Precondition(format!("station {k} needs positive drift, has nu = {nu}")));
    }
    let share = nu / (4.0 * kk as f64);
    Ok(match kind {
        TailKind::Arrival => match net.stations[k].arrival {
            None => Vec::new(),
            Some(dist) => {
                let lam = drift.lambda[k];
                let coef = -(lam + nu / 4.0);
                let spec = SupWalkSpec {
                    increment: IncrementModel::ScaledInterarrival { coef },
                    source: dist,
                    drift: nu / (4.0 * lam),
                    offset: -1.0 + (lam + nu / 4.0) * equilibrium_or_mc_mean(&dist),
                    first_term: FirstTermMode::EquilibriumDelay,
                };
                vec![spec]
            }
        },
        TailKind::Routing => {
            let l = source;
            let dist = net.stations[l].service;
            let mu_l = drift.mu[l];
            let p = net.routing.prob(l, k);
            vec![SupWalkSpec {
                increment: IncrementModel::RoutingPlusService { transfer_prob: p, coef: -share },
                source: dist,
                drift: share / mu_l,
                offset: share * equilibrium_or_mc_mean(&dist),
                first_term: FirstTermMode::EquilibriumDelay,
            }]
        }
        TailKind::Service => {
            let l = source;
            let dist = net.stations[l].service;
            let mu_l = drift.mu[l];
            let m_e = equilibrium_or_mc_mean(&dist);
            let up = SupWalkSpec {
                increment: IncrementModel::ScaledService { coef: -(mu_l + share) },
                source: dist,
                drift: share / mu_l,
                offset: -1.0 + (mu_l + share) * m_e,
                first_term: FirstTermMode::EquilibriumDelay,
            };
            let down = SupWalkSpec {
                increment: IncrementModel::ScaledService { coef: mu_l - share },
                source: dist,
                drift: share / mu_l,
                offset: -(mu_l - share) * m_e,
                first_term: FirstTermMode::EquilibriumDelay,
            };
            vec![up, down]
        }
    })
}

fn equilibrium_or_mc_mean(dist: &DistributionSpec) -> f64 {
    dist.equilibrium_mean().unwrap_or_else(|| {
        let mut rng = tagged_rng(0x657175696d63, &[]);
        let n = 1_000_000;
        (0..n).map(|_| dist.sample_equilibrium(&mut rng)).sum::<f64>() / n as f64
    })
}

/// Aggregated Monte Carlo estimate of one limiting fluctuation tail
/// `P(Y >= u)` via its walk representation (branches summed).
#[derive(Debug, Clone, Serialize)]
pub struct FluctuationTail {
    pub kind: TailKind,
    pub station: usize,
    pub source: usize,
    pub level: f64,
    pub prob: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub standard_error: f64,
    pub branches: Vec<SupTailEstimate>,
}

/// Evaluate the walk-supremum tail that bounds (for the arrival kind:
/// equals) the limiting fluctuation term of station `k` at level `u`.
#[allow(clippy::too_many_arguments)]
pub fn fluctuation_tail_mc(
    net: &NetworkSpec,
    drift: &DriftReport,
    station: usize,
    source: usize,
    kind: TailKind,
    u: f64,
    reps: u64,
    seed: u64,
    i_max: Option<u64>,
) -> Result<FluctuationTail> {
    let specs = fluctuation_walk_specs(net, drift, station, source, kind)?;
    let mut branches = Vec::with_capacity(specs.len());
    for (idx, spec) in specs.iter().enumerate() {
        let threshold = spec.threshold_for_level(u);
        branches.push(supwalk_tail_mc(spec, threshold, i_max, reps, seed.wrapping_add(idx as u64))?);
    }
    let prob: f64 = branches.iter().map(|b| b.prob).sum::<f64>().min(1.0);
    let se = branches.iter().map(|b| b.standard_error * b.standard_error).sum::<f64>().sqrt();
    let ci_low = (prob - 1.96 * se).max(0.0);
    let ci_high = (prob + 1.96 * se).min(1.0);
    Ok(FluctuationTail {
        kind,
        station,
        source,
        level: u,
        prob,
        ci_low,
        ci_high,
        standard_error: se,
        branches,
    })
}

/// One row of a bound-verification table: every analytic bound evaluated at
/// the same walk event as the Monte Carlo estimate.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub which: String,
    pub u: f64,
    pub mc_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub standard_error: f64,
    pub lundberg_bound: Option<f64>,
    pub dyadic_bound: Option<f64>,
    pub second_moment_bound: Option<f64>,
    pub i_max: u64,
}

/// Evaluate one walk spec across a level grid: Monte Carlo tail plus every
/// applicable analytic bound at the identical threshold.
pub fn bound_table(
    spec: &SupWalkSpec,
    which: &str,
    u_grid: &[f64],
    reps: u64,
    seed: u64,
) -> Result<Vec<BoundRow>> {
    spec.validate()?;
    let theta_star = if spec.exp_capable() { lundberg_exponent(spec)? } else { None };
    let mut rows = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let x = spec.threshold_for_level(u);
        let mc = supwalk_tail_mc(spec, x, None, reps, seed)?;
        let lundberg = theta_star.map(|t| lundberg_tail_bound(spec, t, x));
        let dyadic = if spec.exp_capable() && x > 0.0 {
            Some(dyadic_bound_at_threshold(spec, x, (5.0 * x).floor().max(1.0) as u64, None)?.value)
        } else {
            None
        };
        let second = if spec.increment_variance().is_some() && x > 0.0 {
            Some(second_moment_bound_at_threshold(spec, x, (5.0 * x).floor().max(1.0) as u64)?.value)
        } else {
            None
        };
        rows.push(BoundRow {
            which: which.to_string(),
            u,
            mc_estimate: mc.prob,
            ci_low: mc.ci_low,
            ci_high: mc.ci_high,
            standard_error: mc.standard_error,
            lundberg_bound: lundberg,
            dyadic_bound: dyadic,
            second_moment_bound: second,
            i_max: mc.i_max,
        });
    }
    Ok(rows)
}

/// CSV dump of bound rows:
/// `which,u,mc_estimate,ci_low,ci_high,lundberg_bound,dyadic_bound,second_moment_bound`.
pub fn write_bounds_csv<W: std::io::Write>(rows: &[BoundRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "which,u,mc_estimate,ci_low,ci_high,lundberg_bound,dyadic_bound,second_moment_bound"
    )?;
    for r in rows {
        let fmt = |o: Option<f64>| o.map_or(String::new(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.which,
            r.u,
            r.mc_estimate,
            r.ci_low,
            r.ci_high,
            fmt(r.lundberg_bound),
            fmt(r.dyadic_bound),
            fmt(r.second_moment_bound)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RoutingMatrix, StationSpec};

    fn unit_exp_walk() -> SupWalkSpec {
        // increments xi - 2 with xi unit-mean exponential: coef 1 on the
        // centered gap, drift 1
        SupWalkSpec {
            increment: IncrementModel::ScaledInterarrival { coef: 1.0 },
            source: DistributionSpec::exponential(1.0).unwrap(),
            drift: 1.0,
            offset: 0.0,
            first_term: FirstTermMode::Iid,
        }
    }

    /// Root of e^{-2 theta} = 1 - theta by direct bisection on the scalar
    /// equation (independent of the walk machinery).
    fn exp_walk_theta_oracle() -> f64 {
        let f = |t: f64| (-2.0 * t).exp() - (1.0 - t);
        let (mut lo, mut hi) = (1e-6, 0.999999);
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lundberg_root_matches_scalar_oracle() {
        let spec = unit_exp_walk();
        let theta = lundberg_exponent(&spec).unwrap().unwrap();
        let oracle = exp_walk_theta_oracle();
        assert!((theta - oracle).abs() < 1e-9, "{theta} vs {oracle}");
        assert!((theta - 0.797).abs() < 1e-3);
    }

    #[test]
    fn lundberg_residual_vanishes_by_quadrature() {
        // independent quadrature of E e^{theta (X - d)} over the exponential
        // density
        let spec = unit_exp_walk();
        let theta = lundberg_exponent(&spec).unwrap().unwrap();
        let n = 2_000_000;
        let hi = 60.0;
        let h = hi / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let x = i as f64 * h;
            // X - d = (xi - 1) - 1 = xi - 2
            acc += w * (theta * (x - 2.0)).exp() * (-x).exp();
        }
        acc *= h / 3.0;
        assert!((acc - 1.0).abs() <= 1e-8, "residual {}", acc - 1.0);
    }

    #[test]
    fn lundberg_absent_for_bounded_negative_increments() {
        // deterministic source: centered increment is identically zero, so
        // X - d = -d < 0 and no positive root exists
        let spec = SupWalkSpec {
            increment: IncrementModel::ScaledService { coef: 1.0 },
            source: DistributionSpec::deterministic(1.0).unwrap(),
            drift: 0.5,
            offset: 0.0,
            first_term: FirstTermMode::Iid,
        };
        assert_eq!(lundberg_exponent(&spec).unwrap(), None);
    }

    #[test]
    fn lundberg_root_for_symmetric_bernoulli() {
        // X = Bern(1/2) - 1/2 (pure routing part), d = 0.25:
        // residual must vanish at the reported root
        let spec = SupWalkSpec {
            increment: IncrementModel::RoutingPlusService { transfer_prob: 0.5, coef: 0.0 },
            source: DistributionSpec::deterministic(1.0).unwrap(),
            drift: 0.25,
            offset: 0.0,
            first_term: FirstTermMode::Iid,
        };
        let theta = lundberg_exponent(&spec).unwrap().unwrap();
        let m = spec.increment_mgf(theta).unwrap();
        assert!((m * (-theta * 0.25).exp() - 1.0).abs() < 1e-9);
        assert!(theta > 0.0);
    }

    #[test]
    fn heavy_tail_is_redirected_to_second_moment_route() {
        let spec = SupWalkSpec {
            increment: IncrementModel::ScaledService { coef: 1.0 },
            source: DistributionSpec::pareto(3.0, 1.0).unwrap(),
            drift: 0.5,
            offset: 0.0,
            first_term: FirstTermMode::Iid,
        };
        let err = lundberg_exponent(&spec).unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
        assert!(err.to_string().contains("second-moment"));
    }

    #[test]
    fn nonpositive_drift_rejected() {
        let mut spec = unit_exp_walk();
        spec.drift = 0.0;
        let err = supwalk_tail_mc(&spec, 1.0, Some(64), 100, 1).unwrap_err();
        assert!(err.to_string().contains("infinite"));
    }

    #[test]
    fn pure_drift_walk_never_crosses_zero() {
        // deterministic increments: W_i - d i = -i for d = 1
        let spec = SupWalkSpec {
            increment: IncrementModel::ScaledInterarrival { coef: 1.0 },
            source: DistributionSpec::deterministic(1.0).unwrap(),
            drift: 1.0,
            offset: 0.0,
            first_term: FirstTermMode::Iid,
        };
        let est = supwalk_tail_mc(&spec, 0.0, Some(128), 500, 3).unwrap();
        assert_eq!(est.prob, 0.0);
    }

    #[test]
    fn threshold_below_all_values_gives_one() {
        let est = supwalk_tail_mc(&unit_exp_walk(), -1e9, Some(64), 500, 3).unwrap();
        assert_eq!(est.prob, 1.0);
    }

    #[test]
    fn exponential_walk_matches_exact_supremum_law() {
        // P(sup_{i>=1} sum (xi_j - 2) >= u) = (1 - theta*) e^{-theta* u}
        let spec = unit_exp_walk();
        let theta = exp_walk_theta_oracle();
        for &u in &[1.0, 3.0, 5.0] {
            let exact = (1.0 - theta) * (-theta * u).exp();
            let est = supwalk_tail_mc(&spec, u, None, 40_000, 11).unwrap();
            let wiggle = 3.0 * est.standard_error.max(1e-4);
            assert!(
                (est.prob - exact).abs() < wiggle,
                "u={u}: estimate {} vs exact {exact} (se {})",
                est.prob,
                est.standard_error
            );
            assert!(est.residual_bound.is_some());
        }
    }

    #[test]
    fn lundberg_bound_dominates_exact_law() {
        let spec = unit_exp_walk();
        let theta = lundberg_exponent(&spec).unwrap().unwrap();
        for &u in &[0.5, 1.0, 2.0, 4.0, 8.0] {
            let exact = (1.0 - theta) * (-theta * u).exp();
            assert!(lundberg_tail_bound(&spec, theta, u) >= exact);
        }
    }

    #[test]
    fn mc_estimates_nonincreasing_in_threshold_under_coupling() {
        let spec = unit_exp_walk();
        let mut prev = f64::INFINITY;
        for &u in &[0.5, 1.0, 2.0, 4.0] {
            let est = supwalk_tail_mc(&spec, u, Some(2048), 5_000, 5).unwrap();
            assert!(est.prob <= prev + 1e-12);
            prev = est.prob;
        }
    }

    #[test]
    fn truncation_doubling_changes_estimate_by_less_than_one_se() {
        let spec = unit_exp_walk();
        let est = supwalk_tail_mc(&spec, 2.0, None, 20_000, 9).unwrap();
        let double = supwalk_tail_mc(&spec, 2.0, Some(est.i_max * 2), 20_000, 9).unwrap();
        let se = est.standard_error.max(1e-6);
        assert!(
            (double.prob - est.prob").abs() < se,
            "doubling moved the estimate from {} to {}",
            est.prob,
            double.prob
        );
    }

    #[test]
    fn dyadic_bound_decreases_in_level() {
        let spec = unit_exp_walk();
        let mut prev = f64::INFINITY;
        for &u in &[1.0, 2.0, 4.0, 8.0] {
            let b = chernoff_dyadic_bound(&spec, u, 10.0, None).unwrap();
            assert!(b.value <= prev);
            assert!(b.contraction < 1.0);
            prev = b.value;
        }
    }

    #[test]
    fn dyadic_bound_small_head_boundary() {
        // n u < 1: head range collapses to a single step
        let spec = unit_exp_walk();
        let b = chernoff_dyadic_bound(&spec, 0.05, 10.0, None).unwrap();
        assert_eq!(b.head_len, 1);
        assert!(b.value.is_finite());
    }

    #[test]
    fn dyadic_bound_dominates_mc_of_same_event() {
        let spec = unit_exp_walk();
        let (u, n) = (2.0, 10.0);
        let b = chernoff_dyadic_bound(&spec, u, n, None).unwrap();
        let est = supwalk_tail_mc(&spec, n * u / 5.0, None, 20_000, 13).unwrap();
        assert!(b.value >= est.prob - 3.0 * est.standard_error);
    }

    #[test]
    fn second_moment_bound_zero_variance_has_markov_terms_only() {
        let spec = SupWalkSpec {
            increment: IncrementModel::ScaledService { coef: -2.0 },
            source: DistributionSpec::deterministic(0.7).unwrap(),
            drift: 0.5,
            offset: 0.0,
            first_term: FirstTermMode::EquilibriumDelay,
        };
        let b = second_moment_block_bound(&spec, 1.0, 20.0).unwrap();
        assert_eq!(b.tail_kolmogorov, 0.0);
        assert!(b.tail_markov > 0.0);
        // head term likewise reduces to the Markov part
        let head_markov = 2.0 * spec.first_term_positive_part_bound() / (20.0 / 5.0);
        assert!((b.head_term - head_markov).abs() < 1e-12);
    }

    #[test]
    fn second_moment_tail_sum_halves_when_n_doubles() {
        let spec = unit_exp_walk();
        let b1 = second_moment_block_bound(&spec, 1.0, 64.0).unwrap();
        let b2 = second_moment_block_bound(&spec, 1.0, 128.0).unwrap();
        assert!((b2.tail_sum - 0.5 * b1.tail_sum).abs() < 1e-12 * b1.tail_sum);
    }

    #[test]
    fn second_moment_bound_dominates_mc_of_same_event() {
        let spec = unit_exp_walk();
        let (u, n) = (1.0, 100.0);
        let b = second_moment_block_bound(&spec, u, n).unwrap();
        let est = supwalk_tail_mc(&spec, n * u / 5.0, None, 20_000, 17).unwrap();
        assert!(b.value >= est.prob - 3.0 * est.standard_error);
    }

    #[test]
    fn missing_second_moment_is_a_capability_error() {
        let spec = SupWalkSpec {
            increment: IncrementModel::ScaledService { coef: 1.0 },
            source: DistributionSpec::pareto(1.5, 1.0).unwrap(),
            drift: 1.0,
            offset: 0.0,
            first_term: FirstTermMode::Iid,
        };
        assert!(matches!(second_moment_block_bound(&spec, 1.0, 10.0), Err(Error::Capability(_))));
    }

    fn mm1_net(lambda: f64, mu: f64) -> (NetworkSpec, DriftReport) {
        let net = NetworkSpec {
            stations: vec![StationSpec {
                arrival: Some(DistributionSpec::exponential(lambda).unwrap()),
                service: DistributionSpec::exponential(mu).unwrap(),
                initial_queue: 0,
            }],
            routing: RoutingMatrix::new(vec![vec![0.0]]).unwrap(),
        };
        let drift = crate::model::solve_traffic(&net).unwrap();
        (net, drift)
    }

    #[test]
    fn arrival_walk_spec_fields_for_mm1() {
        let (net, drift) = mm1_net(0.5, 1.0);
        let specs = fluctuation_walk_specs(&net, &drift, 0, 0, TailKind::Arrival).unwrap();
        assert_eq!(specs.len(), 1);
        let s = &specs[0];
        // lambda = 0.5, nu = 0.5: coef = -(0.5 + 0.125) = -0.625,
        // d = 0.125 / 0.5 = 0.25, equilibrium mean of exp(1/2) is 2:
        // offset = -1 + 0.625 * 2 = 0.25
        match s.increment {
            IncrementModel::ScaledInterarrival { coef } => assert!((coef + 0.625).abs() < 1e-12),
            _ => panic!("wrong increment model"),
        }
        assert!((s.drift - 0.25).abs() < 1e-12);
        assert!((s.offset - 0.25).abs() < 1e-12);
        assert_eq!(s.first_term, FirstTermMode::EquilibriumDelay);
        // threshold for level u: u + c - d
        assert!((s.threshold_for_level(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn service_kind_yields_two_branches_with_opposite_scalings() {
        let (net, drift) = mm1_net(0.5, 1.0);
        let specs = fluctuation_walk_specs(&net, &drift, 0, 0, TailKind::Service).unwrap();
        assert_eq!(specs.len(), 2);
        let c0 = match specs[0].increment {
            IncrementModel::ScaledService { coef } => coef,
            _ => panic!(),
        };
        let c1 = match specs[1].increment {
            IncrementModel::ScaledService { coef } => coef,
            _ => panic!(),
        };
        // share = nu / 4K = 0.125: coefs -(1 + 0.125) and (1 - 0.125)
        assert!((c0 + 1.125).abs() < 1e-12);
        assert!((c1 - 0.875).abs() < 1e-12);
    }

    #[test]
    fn arrival_kind_without_exogenous_arrivals_is_empty() {
        let net = NetworkSpec {
            stations: vec![
                StationSpec {
                    arrival: Some(DistributionSpec::exponential(0.5).unwrap()),
                    service: DistributionSpec::exponential(1.0).unwrap(),
                    initial_queue: 0,
                },
                StationSpec {
                    arrival: None,
                    service: DistributionSpec::exponential(1.5).unwrap(),
                    initial_queue: 0,
                },
            ],
            routing: RoutingMatrix::new(vec![vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap(),
        };
        let drift = crate::model::solve_traffic(&net).unwrap();
        assert!(drift.strong_drift);
        let specs = fluctuation_walk_specs(&net, &drift, 1, 1, TailKind::Arrival).unwrap();
        assert!(specs.is_empty());
    }

    #[test]
    fn walk_increments_are_centered_empirically() {
        let (net, drift) = mm1_net(0.5, 1.0);
        for kind in [TailKind::Arrival, TailKind::Routing, TailKind::Service] {
            for spec in fluctuation_walk_specs(&net, &drift, 0, 0, kind).unwrap() {
                let mut rng = tagged_rng(3, &[kind as u64]);
                let n = 1_000_000;
                let mut acc = 0.0;
                for _ in 0..n {
                    acc += spec.sample_increment(&mut rng);
                }
                let mean = acc / n as f64;
                let se = (spec.increment_variance().unwrap() / n as f64).sqrt();
                assert!(mean.abs() < 4.0 * se, "{kind:?}: drifted increment mean {mean}");
            }
        }
    }

    #[test]
    fn routing_branch_reduces_to_one_when_deterministic_service() {
        // service fluctuation of a deterministic server: centered gap is
        // zero, so both branches are pure drift and the tail vanishes for
        // positive thresholds
        let net = NetworkSpec {
            stations: vec![StationSpec {
                arrival: Some(DistributionSpec::exponential(0.5).unwrap()),
                service: DistributionSpec::deterministic(1.0).unwrap(),
                initial_queue: 0,
            }],
            routing: RoutingMatrix::new(vec![vec![0.0]]).unwrap(),
        };
        let drift = crate::model::solve_traffic(&net).unwrap();
        let tail = fluctuation_tail_mc(&net, &drift, 0, 0, TailKind::Service, 2.0, 2_000, 7, Some(512)).unwrap();
        assert_eq!(tail.prob, 0.0);
    }

    #[test]
    fn bound_table_rows_are_internally_dominated() {
        let spec = unit_exp_walk();
        let rows = bound_table(&spec, "walk", &[1.0, 2.0, 4.0], 10_000, 23).unwrap();
        for r in &rows {
            let slack = r.mc_estimate - 3.0 * r.standard_error;
            assert!(r.lundberg_bound.unwrap() >= slack, "lundberg at u={}", r.u);
            assert!(r.dyadic_bound.unwrap() >= slack, "dyadic at u={}", r.u);
            assert!(r.second_moment_bound.unwrap() >= slack, "second moment at u={}", r.u);
        }
        let mut buf = Vec::new();
        write_bounds_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().count() == 4);
    }
}
