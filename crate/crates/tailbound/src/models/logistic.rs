//! Random logistic transforms `Phi(x) = x(1-x)/xi` on `(0,1)` with
//! `xi >= 1/4`, and the conjugate chain `W = 1/X` on `(1,&infin;)` whose tail
//! at infinity is the behavior of the stationary law at zero.
//!
//! When `4 xi >= a > 1` almost surely, `[a, oo)` absorbs the conjugate
//! chain and the sandwich `xi (w + 1) <= Psi(w) <= xi (w + 1 + 1/(a-1))`
//! holds there. Without such an `a`, the chain is analyzed through the
//! embedded chain observed at the epochs `sigma` with `xi >= 1/2`.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::core_ifs::{Env, MapFamily, SampleMode, SampleSet, ValueKind};
use crate::cramer::{FactorLaw, Nonarithmetic};
use crate::error::{Error, Result};
use crate::laws::{ScalarLaw, ScalarLawCfg};
use crate::rng::EnvStream;
use crate::sandwich::{BoundCoeffs, LowerForm, SandwichBounds, Theorem3Inputs};

use super::loguniform;

#[derive(Debug, Clone, Deserialize)]
pub struct LogisticSpec {
    pub xi_law: ScalarLawCfg,
    /// When set, `4 xi >= a_lower` almost surely and `[a_lower, oo)` is
    /// absorbing for the conjugate chain.
    #[serde(default)]
    pub a_lower: Option<f64>,
    /// Caller's declaration that `log xi` is nonarithmetic (e.g. a two-point
    /// law with irrational log-ratio). Never inferred.
    #[serde(default)]
    pub declare_nonarithmetic: bool,
}

impl LogisticSpec {
    pub fn new(xi_law: ScalarLawCfg, a_lower: Option<f64>) -> Result<Self> {
        let spec = LogisticSpec { xi_law, a_lower, declare_nonarithmetic: false };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let law: ScalarLaw = self.xi_law.clone().into();
        let lo = law.support_lo();
        match lo {
            Some(lo) if lo >= 0.25 => {}
            Some(lo) => {
                return Err(Error::InvalidParam(format!(
                    "xi must take values in [1/4, oo), support reaches {lo}"
                )))
            }
            None => {
                let mut rng = EnvStream::new(0x10515, 0).rng_at(0);
                for _ in 0..10_000 {
                    if law.sample(&mut rng) < 0.25 {
                        return Err(Error::InvalidParam("sampled xi below 1/4".into()));
                    }
                }
            }
        }
        if let Some(a) = self.a_lower {
            if !(1.0 < a && a < 4.0) {
                return Err(Error::InvalidParam("a_lower must lie in (1, 4)".into()));
            }
            if let Some(lo) = lo {
                if 4.0 * lo < a {
                    return Err(Error::InvalidParam(format!(
                        "4 xi >= {a} fails: xi support reaches {lo}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn xi(&self) -> ScalarLaw {
        self.xi_law.clone().into()
    }

    fn flag(&self) -> Nonarithmetic {
        if self.declare_nonarithmetic {
            Nonarithmetic::Declared
        } else {
            Nonarithmetic::Unknown
        }
    }

    pub fn xi_factor_law(&self) -> Result<FactorLaw> {
        let base = FactorLaw::from_scalar_law(&self.xi())?;
        Ok(match base.nonarithmetic {
            Nonarithmetic::Declared => base,
            _ => base.with_nonarithmetic(self.flag()),
        })
    }
}

fn phi_x(xi: f64, x: f64) -> f64 {
    x * (1.0 - x) / xi
}

/// The chain on `(0, 1)`. Lipschitz factor `1/xi` (attained at the ends).
pub fn x_family(spec: &LogisticSpec) -> MapFamily {
    let xi = spec.xi();
    MapFamily::scalar(
        "logistic_x",
        0.0,
        Arc::new(move |rng: &mut ChaCha8Rng| vec![xi.sample(rng)]),
        |env, x| phi_x(env[0], x),
        Arc::new(|env: &Env| 1.0 / env[0]),
        |rng| rng.random_range(1e-6..1.0),
    )
}

/// The conjugate chain on `(1, oo)`, evaluated literally as `1/Phi(1/w)` so
/// that it matches the reciprocal of the raw chain bit for bit when driven
/// by the same environment stream.
pub fn w_family(spec: &LogisticSpec) -> MapFamily {
    let xi = spec.xi();
    let a = spec.a_lower;
    let reference = a.unwrap_or(2.0);
    let lip: Arc<dyn Fn(&Env) -> f64 + Send + Sync> = match a {
        // sup over [a, oo) of |Psi'| = xi max(1, |1 - (a-1)^{-2}|)
        Some(a) => {
            let c = (1.0 - (a - 1.0).powi(-2)).abs();
            Arc::new(move |env: &Env| env[0] * c.max(1.0))
        }
        // no certified bound on all of (1, oo)
        None => Arc::new(|_| f64::INFINITY),
    };
    let sample_lo = a.unwrap_or(1.01);
    MapFamily::scalar(
        "logistic_w",
        reference,
        Arc::new(move |rng: &mut ChaCha8Rng| vec![xi.sample(rng)]),
        |env, w| 1.0 / phi_x(env[0], 1.0 / w),
        lip,
        move |rng| loguniform(rng, sample_lo, 1e6),
    )
}

/// Sandwich on the absorbing set `[a, oo)`:
/// `xi (t + 1) <= Psi(t) <= xi (t + 1 + 1/(a-1))`, observable = chain value.
pub fn bounds(spec: &LogisticSpec, r: f64) -> Result<SandwichBounds> {
    let a = spec.a_lower.ok_or_else(|| {
        Error::InvalidParam("closed-form bounds require a_lower (the absorbing set)".into())
    })?;
    let slack = 1.0 + 1.0 / (a - 1.0);
    Ok(SandwichBounds::new(
        "logistic_w",
        r,
        LowerForm::Affine,
        Arc::new(move |env: &Env| BoundCoeffs {
            m_lo: env[0],
            m_hi: env[0],
            q_lo: env[0],
            q_hi: env[0] * slack,
        }),
    )
    .with_observable(Arc::new(|_, x| x[0])))
}

/// Both bounding factors equal `xi`.
pub fn factor_laws(spec: &LogisticSpec) -> Result<(FactorLaw, FactorLaw)> {
    Ok((spec.xi_factor_law()?, spec.xi_factor_law()?))
}

pub fn theorem3(spec: &LogisticSpec) -> Result<Theorem3Inputs> {
    let a = spec.a_lower.ok_or_else(|| {
        Error::InvalidParam("shared-factor form requires a_lower".into())
    })?;
    let xi = spec.xi();
    let slack = 1.0 + 1.0 / (a - 1.0);
    Ok(Theorem3Inputs {
        m_law: spec.xi_factor_law()?,
        r: 0.0,
        lower_form: LowerForm::Affine,
        coeff_sampler: Arc::new(move |rng: &mut ChaCha8Rng| {
            let v = xi.sample(rng);
            (v, v, v * slack)
        }),
    })
}

/// Output of the embedded-chain construction: the chain observed at the
/// epochs `sigma_n` with `xi >= 1/2`, together with the stopped sums
/// bounding one embedded step from below and above.
#[derive(Debug)]
pub struct EmbeddedChain {
    /// Draws of the embedded chain's stationary law.
    pub w_star: SampleSet,
    /// `Q_1 = sum_{n <= sigma} xi_n`.
    pub q1: SampleSet,
    /// `Q_2 = sum_{n=2..sigma} xi_n / (4 xi_{n-1} - 1) + xi_1`.
    pub q2: SampleSet,
    pub sigma_mean: f64,
    /// Pathwise checks of `Pi_sigma x v Q_1 <= Psi_{sigma:1}(x) <= Pi_sigma x + Q_1 + Q_2`.
    pub pathwise_checks: u64,
    pub pathwise_violations: u64,
}

const SIGMA_CAP: usize = 1_000_000;

/// `(S1, S2)` of a sigma-block, intercepts weighted by their downstream
/// factor products.
fn sharp_stopped_sums(xs: &[f64]) -> (f64, f64) {
    let k = xs.len();
    // suffix[n] = prod_{j > n} xs[j] (0-indexed: product of xs[n+1..])
    let mut suffix = vec![1.0; k + 1];
    for n in (0..k).rev() {
        suffix[n] = suffix[n + 1] * xs[n];
    }
    let s1: f64 = (0..k).map(|n| xs[n] * suffix[n + 1]).sum();
    let mut s2: f64 = xs[0] * suffix[1]; // the x >= 2 first-step term
    for n in 1..k {
        s2 += xs[n] / (4.0 * xs[n - 1] - 1.0) * suffix[n + 1];
    }
    (s1, s2)
}

fn draw_sigma_block(xi: &ScalarLaw, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let mut xs = Vec::new();
    for _ in 0..SIGMA_CAP {
        let v = xi.sample(rng);
        xs.push(v);
        if v >= 0.5 {
            return Ok(xs);
        }
    }
    Err(Error::ModelContract(
        "sigma exceeded 1e6: P(xi >= 1/2) is numerically zero".into(),
    ))
}

/// Sample the embedded chain and its stopped-sum bounds.
///
/// The embedded stationary law is the one-step image of the stationary law
/// conditioned on `xi >= 1/2`; `W` draws come from a thinned long run of
/// the conjugate chain.
pub fn logistic_embedded(spec: &LogisticSpec, n_samples: usize, seed: u64) -> Result<EmbeddedChain> {
    let xi = spec.xi();
    {
        let mut rng = EnvStream::new(seed, 0).rng_at(0);
        let hits = (0..10_000).filter(|_| xi.sample(&mut rng) >= 0.5).count();
        if hits == 0 {
            return Err(Error::ModelContract("P(xi >= 1/2) appears to be zero".into()));
        }
    }
    let fam = w_family(spec);
    let stationary = crate::core_ifs::sample_stationary(
        &fam,
        SampleMode::LongRun { burn_in: 2_000, thin: 2, start: None },
        n_samples,
        seed,
        ValueKind::RawState,
    )?;

    // One conditioned step: W* = Psi_xi(W) with xi drawn given xi >= 1/2.
    let mut rng = EnvStream::new(seed, 1).rng_at(0);
    let mut w_star = Vec::with_capacity(n_samples);
    for &w in &stationary.values {
        let mut xi_cond = xi.sample(&mut rng);
        let mut tries = 0usize;
        while xi_cond < 0.5 {
            xi_cond = xi.sample(&mut rng);
            tries += 1;
            if tries > SIGMA_CAP {
                return Err(Error::ModelContract("conditioning on xi >= 1/2 failed".into()));
            }
        }
        w_star.push(1.0 / phi_x(xi_cond, 1.0 / w));
    }

    // Independent draws of (sigma, Q1, Q2).
    let mut q1 = Vec::with_capacity(n_samples);
    let mut q2 = Vec::with_capacity(n_samples);
    let mut sigma_sum = 0usize;
    let mut rng = EnvStream::new(seed, 2).rng_at(0);
    for _ in 0..n_samples {
        let xs = draw_sigma_block(&xi, &mut rng)?;
        sigma_sum += xs.len();
        let s1: f64 = xs.iter().sum();
        let mut s2 = xs[0];
        for n in 1..xs.len() {
            s2 += xs[n] / (4.0 * xs[n - 1] - 1.0);
        }
        q1.push(s1);
        q2.push(s2);
    }

    // Pathwise sandwich of the stopped composition on a state grid, using
    // the sharp stopped sums: step `n`'s intercept is carried through the
    // remaining factors, i.e.
    //   S1 = sum_n xi_n prod_{j>n} xi_j,
    //   S2 = sum_{n>=2} (xi_n / (4 xi_{n-1} - 1)) prod_{j>n} xi_j
    //        + xi_1 prod_{j>=2} xi_j,
    // so that `Pi x v S1 <= Psi_{sigma:1}(x) <= Pi x + S1 + S2` holds for
    // every realization on `x >= 2`. (Dropping the downstream products is
    // only valid when they stay below one, which fails for blocks ending in
    // a large factor.)
    let grid = crate::numeric::log_grid(2.0, 1e4, 20);
    let mut rng = EnvStream::new(seed, 3).rng_at(0);
    let mut checks = 0u64;
    let mut violations = 0u64;
    for _ in 0..500 {
        let xs = draw_sigma_block(&xi, &mut rng)?;
        let (s1, s2) = sharp_stopped_sums(&xs);
        let pi: f64 = xs.iter().product();
        for &x0 in &grid {
            let mut w = x0;
            for &x in &xs {
                w = 1.0 / phi_x(x, 1.0 / w);
            }
            let f = (pi * x0).max(s1);
            let g = pi * x0 + s1 + s2;
            checks += 1;
            let scale = w.abs().max(1.0);
            if w - f < -1e-9 * scale || g - w < -1e-9 * scale {
                violations += 1;
            }
        }
    }

    let mk = |id: &str, values: Vec<f64>| {
        SampleSet::from_values(id, seed, format!("embedded(n={n_samples})"), ValueKind::RawState, values)
    };
    Ok(EmbeddedChain {
        w_star: mk("logistic_w_star", w_star),
        q1: mk("logistic_q1", q1),
        q2: mk("logistic_q2", q2),
        sigma_mean: sigma_sum as f64 / n_samples as f64,
        pathwise_checks: checks,
        pathwise_violations: violations,
    })
}
