//! Scalar sampling laws shared by the model and fixed-point simulators.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::Serialize;

/// A real-valued sampling law. Signed values are allowed; laws used as
/// multiplicative factors are wrapped by `cramer::FactorLaw` instead.
#[derive(Clone)]
pub enum ScalarLaw {
    Constant(f64),
    /// Takes value `x` with probability `p`, else `y`.
    TwoPoint { x: f64, y: f64, p: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// Standard-exponential scaled by `1/rate`.
    Exponential { rate: f64 },
    Custom(Arc<dyn Fn(&mut ChaCha8Rng) -> f64 + Send + Sync>),
}

impl fmt::Debug for ScalarLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarLaw::Constant(c) => write!(f, "Constant({c})"),
            ScalarLaw::TwoPoint { x, y, p } => write!(f, "TwoPoint({x}, {y}; p={p})"),
            ScalarLaw::Uniform { lo, hi } => write!(f, "Uniform({lo}, {hi})"),
            ScalarLaw::Normal { mean, sd } => write!(f, "Normal({mean}, {sd})"),
            ScalarLaw::LogNormal { mu, sigma } => write!(f, "LogNormal({mu}, {sigma})"),
            ScalarLaw::Exponential { rate } => write!(f, "Exponential({rate})"),
            ScalarLaw::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ScalarLaw {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ScalarLaw::Constant(c) => *c,
            ScalarLaw::TwoPoint { x, y, p } => {
                if rng.random::<f64>() < *p {
                    *x
                } else {
                    *y
                }
            }
            ScalarLaw::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            ScalarLaw::Normal { mean, sd } => {
                Normal::new(*mean, *sd).expect("normal params").sample(rng)
            }
            ScalarLaw::LogNormal { mu, sigma } => {
                LogNormal::new(*mu, *sigma).expect("lognormal params").sample(rng)
            }
            ScalarLaw::Exponential { rate } => {
                Exp::new(*rate).expect("exponential rate").sample(rng)
            }
            ScalarLaw::Custom(s) => s(rng),
        }
    }

    /// Exact mean where a closed form exists.
    pub fn mean(&self) -> Option<f64> {
        match self {
            ScalarLaw::Constant(c) => Some(*c),
            ScalarLaw::TwoPoint { x, y, p } => Some(p * x + (1.0 - p) * y),
            ScalarLaw::Uniform { lo, hi } => Some(0.5 * (lo + hi)),
            ScalarLaw::Normal { mean, .. } => Some(*mean),
            ScalarLaw::LogNormal { mu, sigma } => Some((mu + 0.5 * sigma * sigma).exp()),
            ScalarLaw::Exponential { rate } => Some(1.0 / rate),
            ScalarLaw::Custom(_) => None,
        }
    }

    /// `E log X` where a closed form exists (law must be positive).
    pub fn mean_log(&self) -> Option<f64> {
        match self {
            ScalarLaw::Constant(c) if *c > 0.0 => Some(c.ln()),
            ScalarLaw::TwoPoint { x, y, p } if *x > 0.0 && *y > 0.0 => {
                Some(p * x.ln() + (1.0 - p) * y.ln())
            }
            ScalarLaw::LogNormal { mu, .. } => Some(*mu),
            _ => None,
        }
    }

    /// An upper bound of the support where one exists (used by first-passage
    /// truncation heuristics).
    pub fn support_hi(&self) -> Option<f64> {
        match self {
            ScalarLaw::Constant(c) => Some(*c),
            ScalarLaw::TwoPoint { x, y, .. } => Some(x.max(*y)),
            ScalarLaw::Uniform { hi, .. } => Some(*hi),
            _ => None,
        }
    }
}

/// Serializable description used in report metadata.
impl Serialize for ScalarLaw {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{self:?}"))
    }
}

/// Config-file representation of the samplable laws (everything except
/// `Custom`, which has no serialized form).
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarLawCfg {
    Constant(f64),
    TwoPoint { x: f64, y: f64, p: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
}

impl From<ScalarLawCfg> for ScalarLaw {
    fn from(cfg: ScalarLawCfg) -> Self {
        match cfg {
            ScalarLawCfg::Constant(c) => ScalarLaw::Constant(c),
            ScalarLawCfg::TwoPoint { x, y, p } => ScalarLaw::TwoPoint { x, y, p },
            ScalarLawCfg::Uniform { lo, hi } => ScalarLaw::Uniform { lo, hi },
            ScalarLawCfg::Normal { mean, sd } => ScalarLaw::Normal { mean, sd },
            ScalarLawCfg::LogNormal { mu, sigma } => ScalarLaw::LogNormal { mu, sigma },
            ScalarLawCfg::Exponential { rate } => ScalarLaw::Exponential { rate },
        }
    }
}

impl ScalarLaw {
    /// A lower bound of the support where one exists.
    pub fn support_lo(&self) -> Option<f64> {
        match self {
            ScalarLaw::Constant(c) => Some(*c),
            ScalarLaw::TwoPoint { x, y, .. } => Some(x.min(*y)),
            ScalarLaw::Uniform { lo, .. } => Some(*lo),
            ScalarLaw::LogNormal { .. } | ScalarLaw::Exponential { .. } => Some(0.0),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;

    #[test]
    fn two_point_frequencies() {
        let law = ScalarLaw::TwoPoint { x: 0.5, y: 3.0, p: 0.8 };
        let mut rng = rng_stream(1, 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| law.sample(&mut rng) == 0.5).count();
        let p_hat = hits as f64 / n as f64;
        assert!((p_hat - 0.8).abs() < 0.01, "p_hat = {p_hat}");
    }

    #[test]
    fn closed_form_means() {
        let law = ScalarLaw::LogNormal { mu: -0.5, sigma: 1.0 };
        assert!((law.mean().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(law.mean_log().unwrap(), -0.5);
    }
}
