//! Interarrival/service time distributions.
//!
//! Six families are supported. Each spec knows its analytic mean, second
//! moment, cdf, moment generating function (where a closed form exists) and
//! integrated-tail (equilibrium) cdf, plus the moment capabilities that
//! decide which tail-bound route applies to it: an exponential moment, a
//! `2+eps` moment, or a stretched-exponential moment.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_lr;

/// Distribution family with its parameters. All parameters are time-scale
/// positive reals; Pareto requires `shape > 1` so the mean is finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Uniform { min: f64, max: f64 },
    Gamma { shape: f64, rate: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Pareto { shape: f64, scale: f64 },
}

/// Moment capabilities of a distribution, with witnesses where meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capabilities {
    /// `Some(theta_max)` when `E exp(theta X) < infinity` for `theta <
    /// theta_max` and a closed-form mgf is available on that range.
    pub exp_moment: Option<f64>,
    /// `Some(eps)` when `E X^(2+eps) < infinity`.
    pub two_plus_eps_moment: Option<f64>,
    /// `Some((alpha, beta))` when `E exp(alpha X^beta) < infinity`.
    pub stretched_exp_moment: Option<(f64, f64)>,
}

/// A fully validated distribution specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    family: Family,
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self, String> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(format!("exponential rate must be positive and finite, got {rate}"));
        }
        Ok(Self { family: Family::Exponential { rate } })
    }

    pub fn deterministic(value: f64) -> Result<Self, String> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(format!("deterministic value must be positive and finite, got {value}"));
        }
        Ok(Self { family: Family::Deterministic { value } })
    }

    pub fn uniform(min: f64, max: f64) -> Result<Self, String> {
        if !(min >= 0.0 && max > min && max.is_finite()) {
            return Err(format!("uniform needs 0 <= min < max, got [{min}, {max}]"));
        }
        Ok(Self { family: Family::Uniform { min, max } })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self, String> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(format!("gamma needs positive shape and rate, got ({shape}, {rate})"));
        }
        Ok(Self { family: Family::Gamma { shape, rate } })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self, String> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(format!("lognormal needs finite mu and positive sigma, got ({mu}, {sigma})"));
        }
        Ok(Self { family: Family::LogNormal { mu, sigma } })
    }

    pub fn pareto(shape: f64, scale: f64) -> Result<Self, String> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(format!("pareto scale must be positive and finite, got {scale}"));
        }
        if !(shape > 1.0 && shape.is_finite()) {
            return Err(format!("pareto shape must exceed 1 so the mean is finite, got {shape}"));
        }
        Ok(Self { family: Family::Pareto { shape, scale } })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Exponential { .. } => "exponential",
            Family::Deterministic { .. } => "deterministic",
            Family::Uniform { .. } => "uniform",
            Family::Gamma { .. } => "gamma",
            Family::LogNormal { .. } => "lognormal",
            Family::Pareto { .. } => "pareto",
        }
    }

    /// Analytic mean. Finite for every accepted parameterization.
    pub fn mean(&self) -> f64 {
        match self.family {
            Family::Exponential { rate } => 1.0 / rate,
            Family::Deterministic { value } => value,
            Family::Uniform { min, max } => 0.5 * (min + max),
            Family::Gamma { shape, rate } => shape / rate,
            Family::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            Family::Pareto { shape, scale } => shape * scale / (shape - 1.0),
        }
    }

    /// Analytic second moment, `None` when infinite (Pareto with shape <= 2).
    pub fn second_moment(&self) -> Option<f64> {
        match self.family {
            Family::Exponential { rate } => Some(2.0 / (rate * rate)),
            Family::Deterministic { value } => Some(value * value),
            Family::Uniform { min, max } => Some((min * min + min * max + max * max) / 3.0),
            Family::Gamma { shape, rate } => Some(shape * (shape + 1.0) / (rate * rate)),
            Family::LogNormal { mu, sigma } => Some((2.0 * mu + 2.0 * sigma * sigma).exp()),
            Family::Pareto { shape, scale } => {
                (shape > 2.0).then(|| shape * scale * scale / (shape - 2.0))
            }
        }
    }

    pub fn variance(&self) -> Option<f64> {
        self.second_moment().map(|m2| (m2 - self.mean() * self.mean()).max(0.0))
    }

    /// Mean of the integrated-tail (equilibrium) distribution,
    /// `second_moment / (2 mean)`; `None` when infinite.
    pub fn equilibrium_mean(&self) -> Option<f64> {
        self.second_moment().map(|m2| m2 / (2.0 * self.mean()))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            // All families live on the nonnegative halfline.
            return if x == 0.0 { self.cdf_at_zero() } else { 0.0 };
        }
        match self.family {
            Family::Exponential { rate } => -(-rate * x).exp_m1(),
            Family::Deterministic { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Uniform { min, max } => ((x - min) / (max - min)).clamp(0.0, 1.0),
            Family::Gamma { shape, rate } => gamma_lr(shape, rate * x),
            Family::LogNormal { mu, sigma } => normal_cdf((x.ln() - mu) / sigma),
            Family::Pareto { shape, scale } => {
                if x < scale {
                    0.0
                } else {
                    1.0 - (scale / x).powf(shape)
                }
            }
        }
    }

    fn cdf_at_zero(&self) -> f64 {
        match self.family {
            Family::Uniform { min, .. } if min == 0.0 => 0.0,
            _ => 0.0,
        }
    }

    /// Closed-form moment generating function `E exp(s X)`, `None` when the
    /// mgf is infinite at `s` or no closed form is available (lognormal and
    /// Pareto, whose analyses go through the second-moment route instead).
    pub fn mgf(&self, s: f64) -> Option<f64> {
        if s == 0.0 {
            return Some(1.0);
        }
        match self.family {
            Family::Exponential { rate } => (s < rate).then(|| rate / (rate - s)),
            Family::Deterministic { value } => Some((s * value).exp()),
            Family::Uniform { min, max } => {
                let w = s * (max - min);
                Some((s * min).exp() * w.exp_m1() / w)
            }
            Family::Gamma { shape, rate } => (s < rate).then(|| (-shape * (1.0 - s / rate).ln()).exp()),
            Family::LogNormal { .. } | Family::Pareto { .. } => None,
        }
    }

    /// Supremum of the set where a closed-form mgf is available; zero for the
    /// heavy-tailed families.
    pub fn mgf_boundary(&self) -> f64 {
        match self.family {
            Family::Exponential { rate } | Family::Gamma { rate, .. } => rate,
            Family::Deterministic { .. } | Family::Uniform { .. } => f64::INFINITY,
            Family::LogNormal { .. } | Family::Pareto { .. } => 0.0,
        }
    }

    pub fn capabilities(&self) -> Capabilities {
        match self.family {
            Family::Exponential { rate } => Capabilities {
                exp_moment: Some(rate),
                two_plus_eps_moment: Some(1.0),
                stretched_exp_moment: Some((0.5 * rate, 1.0)),
            },
            Family::Deterministic { .. } | Family::Uniform { .. } => Capabilities {
                exp_moment: Some(f64::INFINITY),
                two_plus_eps_moment: Some(1.0),
                stretched_exp_moment: Some((1.0, 1.0)),
            },
            Family::Gamma { rate, .. } => Capabilities {
                exp_moment: Some(rate),
                two_plus_eps_moment: Some(1.0),
                stretched_exp_moment: Some((0.5 * rate, 1.0)),
            },
            // Lognormal has every polynomial moment but no exponential or
            // stretched-exponential moment of any order beta in (0, 1].
            Family::LogNormal { .. } => Capabilities {
                exp_moment: None,
                two_plus_eps_moment: Some(1.0),
                stretched_exp_moment: None,
            },
            Family::Pareto { shape, .. } => Capabilities {
                exp_moment: None,
                two_plus_eps_moment: (shape > 2.0).then(|| 0.5 * (shape - 2.0)),
                stretched_exp_moment: None,
            },
        }
    }

    /// Integral of the survival function, `int_0^x (1 - F(y)) dy`.
    pub fn integrated_tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Exponential { rate } => -(-rate * x).exp_m1() / rate,
            Family::Deterministic { value } => x.min(value),
            Family::Uniform { min, max } => {
                if x <= min {
                    x
                } else if x >= max {
                    self.mean()
                } else {
                    let w = max - min;
                    min + (w * w - (max - x) * (max - x)) / (2.0 * w)
                }
            }
            Family::Gamma { shape, rate } => {
                x * (1.0 - gamma_lr(shape, rate * x)) + self.mean() * gamma_lr(shape + 1.0, rate * x)
            }
            Family::LogNormal { mu, sigma } => {
                let z = (x.ln() - mu) / sigma;
                x * (1.0 - normal_cdf(z)) + self.mean() * normal_cdf(z - sigma)
            }
            Family::Pareto { shape, scale } => {
                if x <= scale {
                    x
                } else {
                    scale + scale / (shape - 1.0) * (1.0 - (scale / x).powf(shape - 1.0))
                }
            }
        }
    }

    /// Cdf of the equilibrium (integrated-tail) distribution.
    pub fn equilibrium_cdf(&self, x: f64) -> f64 {
        (self.integrated_tail(x) / self.mean()).clamp(0.0, 1.0)
    }

    /// Rescale the time axis so the mean becomes `new_mean`, keeping the
    /// family shape fixed.
    pub fn with_mean(&self, new_mean: f64) -> Result<Self, String> {
        if !(new_mean > 0.0 && new_mean.is_finite()) {
            return Err(format!("target mean must be positive and finite, got {new_mean}"));
        }
        let c = new_mean / self.mean();
        match self.family {
            Family::Exponential { rate } => Self::exponential(rate / c),
            Family::Deterministic { .. } => Self::deterministic(new_mean),
            Family::Uniform { min, max } => Self::uniform(c * min, c * max),
            Family::Gamma { shape, rate } => Self::gamma(shape, rate / c),
            Family::LogNormal { mu, sigma } => Self::lognormal(mu + c.ln(), sigma),
            Family::Pareto { shape, scale } => Self::pareto(shape, c * scale),
        }
    }

    /// Build the reusable sampler for this distribution.
    pub fn sampler(&self) -> GapSampler {
        match self.family {
            Family::Exponential { rate } => GapSampler::Exponential(rand_distr::Exp::new(rate).unwrap()),
            Family::Deterministic { value } => GapSampler::Deterministic(value),
            Family::Uniform { min, max } => GapSampler::Uniform { min, width: max - min },
            Family::Gamma { shape, rate } => {
                GapSampler::Gamma(rand_distr::Gamma::new(shape, 1.0 / rate).unwrap())
            }
            Family::LogNormal { mu, sigma } => {
                GapSampler::LogNormal(rand_distr::LogNormal::new(mu, sigma).unwrap())
            }
            Family::Pareto { shape, scale } => {
                GapSampler::Pareto(rand_distr::Pareto::new(scale, shape).unwrap())
            }
        }
    }

    /// Draw one variate.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.sampler().sample(rng)
    }

    /// Draw from the equilibrium (integrated-tail) distribution.
    ///
    /// Exponential is fixed by memorylessness, deterministic and uniform
    /// invert in closed form, the remaining families invert the equilibrium
    /// cdf numerically to absolute tolerance 1e-10.
    pub fn sample_equilibrium(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        match self.family {
            Family::Exponential { rate } => -(1.0 - u).ln() / rate,
            Family::Deterministic { value } => u * value,
            Family::Uniform { min, max } => {
                let y = u * self.mean();
                if y <= min {
                    y
                } else {
                    let w = max - min;
                    max - (w * w - 2.0 * w * (y - min)).max(0.0).sqrt()
                }
            }
            _ => self.invert_equilibrium_cdf(u),
        }
    }

    fn invert_equilibrium_cdf(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let mut lo = 0.0_f64;
        let mut hi = self.mean();
        while self.equilibrium_cdf(hi) < u {
            hi *= 2.0;
            if hi > 1e300 {
                return hi;
            }
        }
        while hi - lo > 1e-10 * (1.0 + hi) {
            let mid = 0.5 * (lo + hi);
            if self.equilibrium_cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Prebuilt sampler, cheap to call in the event loop.
#[derive(Debug, Clone, Copy)]
pub enum GapSampler {
    Exponential(rand_distr::Exp<f64>),
    Deterministic(f64),
    Uniform { min: f64, width: f64 },
    Gamma(rand_distr::Gamma<f64>),
    LogNormal(rand_distr::LogNormal<f64>),
    Pareto(rand_distr::Pareto<f64>),
}

impl GapSampler {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            GapSampler::Exponential(d) => d.sample(rng),
            GapSampler::Deterministic(v) => *v,
            GapSampler::Uniform { min, width } => min + width * rng.random::<f64>(),
            GapSampler::Gamma(d) => d.sample(rng),
            GapSampler::LogNormal(d) => d.sample(rng),
            GapSampler::Pareto(d) => d.sample(rng),
        }
    }
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

// JSON wire format: {"family": "...", <family-specific params>}. Unknown
// keys are rejected, as are parameters that do not belong to the family.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistJson {
    family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shape: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

impl DistJson {
    fn params_present(&self) -> Vec<&'static str> {
        let mut present = Vec::new();
        if self.rate.is_some() {
            present.push("rate");
        }
        if self.value.is_some() {
            present.push("value");
        }
        if self.min.is_some() {
            present.push("min");
        }
        if self.max.is_some() {
            present.push("max");
        }
        if self.shape.is_some() {
            present.push("shape");
        }
        if self.scale.is_some() {
            present.push("scale");
        }
        if self.mu.is_some() {
            present.push("mu");
        }
        if self.sigma.is_some() {
            present.push("sigma");
        }
        present
    }
}

impl Serialize for DistributionSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut j = DistJson {
            family: self.family_name().to_string(),
            rate: None,
            value: None,
            min: None,
            max: None,
            shape: None,
            scale: None,
            mu: None,
            sigma: None,
        };
        match self.family {
            Family::Exponential { rate } => j.rate = Some(rate),
            Family::Deterministic { value } => j.value = Some(value),
            Family::Uniform { min, max } => {
                j.min = Some(min);
                j.max = Some(max);
            }
            Family::Gamma { shape, rate } => {
                j.shape = Some(shape);
                j.rate = Some(rate);
            }
            Family::LogNormal { mu, sigma } => {
                j.mu = Some(mu);
                j.sigma = Some(sigma);
            }
            Family::Pareto { shape, scale } => {
                j.shape = Some(shape);
                j.scale = Some(scale);
            }
        }
        j.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DistributionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let j = DistJson::deserialize(deserializer)?;
        let expect = |keys: &[&str]| -> Result<(), D::Error> {
            let present = j.params_present();
            if present != keys {
                return Err(DeError::custom(format!(
                    "family '{}' takes parameters {:?}, got {:?}",
                    j.family, keys, present
                )));
            }
            Ok(())
        };
        let built = match j.family.as_str() {
            "exponential" => {
                expect(&["rate"])?;
                DistributionSpec::exponential(j.rate.unwrap())
            }
            "deterministic" => {
                expect(&["value"])?;
                DistributionSpec::deterministic(j.value.unwrap())
            }
            "uniform" => {
                expect(&["min", "max"])?;
                DistributionSpec::uniform(j.min.unwrap(), j.max.unwrap())
            }
            "gamma" => {
                expect(&["rate", "shape"])?;
                DistributionSpec::gamma(j.shape.unwrap(), j.rate.unwrap())
            }
            "lognormal" => {
                expect(&["mu", "sigma"])?;
                DistributionSpec::lognormal(j.mu.unwrap(), j.sigma.unwrap())
            }
            "pareto" => {
                expect(&["shape", "scale"])?;
                DistributionSpec::pareto(j.shape.unwrap(), j.scale.unwrap())
            }
            other => Err(format!("unknown distribution family '{other}'")),
        };
        built.map_err(DeError::custom)
    }
}
