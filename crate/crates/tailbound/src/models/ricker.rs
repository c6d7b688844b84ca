//! The stochastic Ricker model `X_n = (X_{n-1}/beta_n) e^{-gamma_n X_{n-1}}`
//! on the positive half-line, and its conjugate chain
//! `W_n = beta_n W_{n-1} e^{gamma_n / W_{n-1}}`.
//!
//! The conjugate map is convex with minimum `rho e` at `w = gamma`
//! (`rho = beta gamma`), so `rho e v beta w` is a global lower bound. When
//! `rho >= a/e` almost surely, `[a, oo)` absorbs the chain and the affine
//! upper bound `r rho e^{1/r} + beta e^{1/r} w` is valid there for every
//! large enough threshold `r`.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::core_ifs::{Env, MapFamily};
use crate::cramer::{FactorLaw, Nonarithmetic};
use crate::error::{Error, Result};
use crate::laws::{ScalarLaw, ScalarLawCfg};
use crate::rng::EnvStream;
use crate::sandwich::{BoundCoeffs, LowerForm, SandwichBounds};

use super::loguniform;

#[derive(Debug, Clone, Deserialize)]
pub struct RickerSpec {
    pub beta_law: ScalarLawCfg,
    pub gamma_law: ScalarLawCfg,
    /// Caller's declaration that `log beta` is nonarithmetic.
    #[serde(default)]
    pub declare_nonarithmetic: bool,
}

impl RickerSpec {
    pub fn new(beta_law: ScalarLawCfg, gamma_law: ScalarLawCfg) -> Self {
        RickerSpec { beta_law, gamma_law, declare_nonarithmetic: false }
    }

    fn beta(&self) -> ScalarLaw {
        self.beta_law.clone().into()
    }

    fn gamma(&self) -> ScalarLaw {
        self.gamma_law.clone().into()
    }

    /// Essential infimum of `rho = beta gamma` when the supports are known
    /// (independent coupling), else `None`.
    pub fn rho_min(&self) -> Option<f64> {
        let b = self.beta().support_lo()?;
        let g = self.gamma().support_lo()?;
        let rho = b * g;
        (rho > 0.0).then_some(rho)
    }

    /// The absorbing threshold `a = e * essinf(rho)`.
    pub fn absorbing_a(&self) -> Option<f64> {
        self.rho_min().map(|r| r * std::f64::consts::E)
    }

    pub fn beta_factor_law(&self) -> Result<FactorLaw> {
        let base = FactorLaw::from_scalar_law(&self.beta())?;
        Ok(match base.nonarithmetic {
            Nonarithmetic::Declared => base,
            _ if self.declare_nonarithmetic => base.with_nonarithmetic(Nonarithmetic::Declared),
            _ => base,
        })
    }
}

fn phi_x(beta: f64, gamma: f64, x: f64) -> f64 {
    (x / beta) * (-gamma * x).exp()
}

/// The population chain on `(0, oo)`. Lipschitz factor `1/beta` (the
/// derivative's supremum, attained as `x -> 0`).
pub fn x_family(spec: &RickerSpec) -> MapFamily {
    let beta = spec.beta();
    let gamma = spec.gamma();
    MapFamily::scalar(
        "ricker_x",
        0.0,
        Arc::new(move |rng: &mut ChaCha8Rng| vec![beta.sample(rng), gamma.sample(rng)]),
        |env, x| phi_x(env[0], env[1], x),
        Arc::new(|env: &Env| 1.0 / env[0]),
        |rng| loguniform(rng, 1e-6, 1e3),
    )
}

/// The conjugate chain, evaluated as `1/Phi(1/w)` so it matches the
/// reciprocal of the raw chain bit for bit under a shared stream.
pub fn w_family(spec: &RickerSpec) -> MapFamily {
    let beta = spec.beta();
    let gamma = spec.gamma();
    let a = spec.absorbing_a();
    let reference = a.unwrap_or(1.0);
    let lip: Arc<dyn Fn(&Env) -> f64 + Send + Sync> = match a {
        // sup over [a, oo) of |Psi'(w)| = beta e^{g/w} |1 - g/w| is attained
        // at w = a or in the limit: beta * max(1, e^s |1 - s|), s = gamma/a.
        Some(a) => Arc::new(move |env: &Env| {
            let s = env[1] / a;
            env[0] * (s.exp() * (1.0 - s).abs()).max(1.0)
        }),
        None => Arc::new(|_| f64::INFINITY),
    };
    let sample_lo = a.unwrap_or(1e-3);
    MapFamily::scalar(
        "ricker_w",
        reference,
        Arc::new(move |rng: &mut ChaCha8Rng| vec![beta.sample(rng), gamma.sample(rng)]),
        |env, w| 1.0 / phi_x(env[0], env[1], 1.0 / w),
        lip,
        move |rng| loguniform(rng, sample_lo, 1e6),
    )
}

/// `rho e v beta t <= Psi(t) <= r rho e^{1/r} + beta e^{1/r} t` on the
/// absorbing set, the upper bound being valid once
/// `r gamma e^{1/r} >= a e^{gamma/a}` (checked per environment over a
/// Monte Carlo probe; fails advise a larger `r`).
pub fn bounds(spec: &RickerSpec, r: f64) -> Result<SandwichBounds> {
    let a = spec.absorbing_a().ok_or_else(|| {
        Error::InvalidParam("closed-form bounds require essinf(rho) > 0".into())
    })?;
    if !(r > 0.0) {
        return Err(Error::InvalidParam("upper-bound threshold r must be positive".into()));
    }
    // Validity of the affine upper bound: the max of the convex map on
    // [a, r gamma] must sit at the right endpoint.
    {
        let gamma = spec.gamma();
        let mut rng = EnvStream::new(0x41c3, 0).rng_at(0);
        for _ in 0..10_000 {
            let g = gamma.sample(&mut rng);
            if g <= 0.0 {
                continue;
            }
            if r * g * (1.0 / r).exp() < a * (g / a).exp() - 1e-12 {
                return Err(Error::InvalidParam(format!(
                    "upper bound invalid at r = {r} for gamma = {g}: increase r"
                )));
            }
        }
    }
    let e1r = (1.0 / r).exp();
    Ok(SandwichBounds::new(
        "ricker_w",
        0.0, // the max-type lower bound has threshold zero
        LowerForm::MaxType,
        Arc::new(move |env: &Env| {
            let (beta, gamma) = (env[0], env[1]);
            let rho = beta * gamma;
            BoundCoeffs {
                m_lo: beta,
                m_hi: beta * e1r,
                q_lo: rho * std::f64::consts::E,
                q_hi: r * rho * e1r,
            }
        }),
    )
    .with_observable(Arc::new(|_, x| x[0])))
}

/// Lower factor `beta`; upper factor `beta e^{1/r}`, which tightens to
/// `beta` as `r` grows.
pub fn factor_laws(spec: &RickerSpec, r: f64) -> Result<(FactorLaw, FactorLaw)> {
    if !(r > 0.0) {
        return Err(Error::InvalidParam("factor laws need r > 0".into()));
    }
    let base = spec.beta_factor_law()?;
    let upper = base.scaled((1.0 / r).exp())?;
    Ok((base, upper))
}
