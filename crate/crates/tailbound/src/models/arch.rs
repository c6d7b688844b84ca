//! The AR(1) chain with ARCH(1) errors,
//! `X_n = alpha X_{n-1} + (beta + lambda X_{n-1}^2)^{1/2} eps_n`,
//! and its squared chain `W = X^2`.
//!
//! The stationary law is symmetric, so `W` carries all tail information:
//! `P(X > t) = P(W > t^2) / 2`. Squaring the recursion and absorbing the
//! sign of `X` into a fresh symmetric innovation `eta` turns the `W`-chain
//! into `W' = (alpha sqrt(W) + (beta + lambda W)^{1/2} eta)^2`, which is
//! sandwiched by affine maps sharing the factor
//! `M = (alpha + lambda^{1/2} eta)^2`.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::core_ifs::{Env, MapFamily};
use crate::cramer::FactorLaw;
use crate::error::Result;
use crate::laws::{ScalarLaw, ScalarLawCfg};
use crate::sandwich::{BoundCoeffs, LowerForm, SandwichBounds, Theorem3Inputs};

use super::{loguniform, loguniform_signed};

fn default_eps() -> ScalarLawCfg {
    ScalarLawCfg::Normal { mean: 0.0, sd: 1.0 }
}

/// Parameters of the AR(1)-ARCH(1) recursion. The innovation law must be
/// symmetric (the default is standard normal). `alpha` is stored as its
/// absolute value: the chain driven by `-alpha` has the same stationary law.
#[derive(Debug, Clone, Deserialize)]
pub struct ArchSpec {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    #[serde(default = "default_eps")]
    pub eps_law: ScalarLawCfg,
}

impl ArchSpec {
    pub fn new(alpha: f64, beta: f64, lambda: f64) -> Self {
        assert!(beta > 0.0 && lambda > 0.0, "beta and lambda must be positive");
        ArchSpec { alpha: alpha.abs(), beta, lambda, eps_law: default_eps() }
    }

    fn eps(&self) -> ScalarLaw {
        self.eps_law.clone().into()
    }

    fn is_gaussian(&self) -> bool {
        matches!(self.eps_law, ScalarLawCfg::Normal { mean, sd } if mean == 0.0 && sd == 1.0)
    }

    /// Law of the shared multiplicative factor `(alpha + lambda^{1/2} eta)^2`.
    pub fn m_law(&self) -> FactorLaw {
        if self.is_gaussian() {
            FactorLaw::squared_affine_gaussian(self.alpha, self.lambda)
                .expect("lambda validated positive")
        } else {
            let (a, sl) = (self.alpha, self.lambda.sqrt());
            let eps = self.eps();
            FactorLaw::custom(
                Arc::new(move |rng: &mut ChaCha8Rng| {
                    let v = a + sl * eps.sample(rng);
                    v * v
                }),
                crate::cramer::Nonarithmetic::Unknown,
            )
        }
    }
}

/// The raw chain on the real line. Lipschitz factor
/// `alpha + lambda^{1/2} |eps|`.
pub fn x_family(spec: &ArchSpec) -> MapFamily {
    let (a, b, l) = (spec.alpha, spec.beta, spec.lambda);
    let eps = spec.eps();
    let sl = l.sqrt();
    MapFamily::scalar(
        "arch_x",
        0.0,
        Arc::new(move |rng: &mut ChaCha8Rng| vec![eps.sample(rng)]),
        move |env, x| a * x + (b + l * x * x).sqrt() * env[0],
        Arc::new(move |env: &Env| a + sl * env[0].abs()),
        |rng| loguniform_signed(rng, 1e-3, 1e3),
    )
}

/// The squared chain, evaluated through the signed form
/// `W' = (alpha sqrt(W) + (beta + lambda W)^{1/2} eta)^2` (algebraically
/// identical to the usual three-term expression but free of cancellation).
///
/// The metric is `|sqrt(w) - sqrt(w')|`, the pullback of the raw chain's
/// metric: under it the family is certified Lipschitz with the same factor
/// `alpha + lambda^{1/2} |eta|`, and the distance to the reference `0` is
/// `sqrt(W) = |X|`, exactly the quantity whose tail is estimated.
pub fn w_family(spec: &ArchSpec) -> MapFamily {
    let (a, b, l) = (spec.alpha, spec.beta, spec.lambda);
    let eps = spec.eps();
    let sl = l.sqrt();
    MapFamily::new(
        "arch_w",
        1,
        vec![0.0],
        Arc::new(move |rng: &mut ChaCha8Rng| vec![eps.sample(rng)]),
        Arc::new(move |env: &Env, x: &[f64]| {
            let w = x[0].max(0.0);
            let v = a * w.sqrt() + (b + l * w).sqrt() * env[0];
            vec![v * v]
        }),
        Arc::new(move |env: &Env| a + sl * env[0].abs()),
        Arc::new(|x: &[f64], y: &[f64]| (x[0].max(0.0).sqrt() - y[0].max(0.0).sqrt()).abs()),
        Arc::new(|rng| vec![loguniform(rng, 1e-6, 1e6)]),
    )
}

fn coeffs(spec: &ArchSpec) -> impl Fn(&Env) -> BoundCoeffs + Send + Sync {
    let (a, b, l) = (spec.alpha, spec.beta, spec.lambda);
    let sl = l.sqrt();
    move |env: &Env| {
        let eta = env[0];
        let m = (a + sl * eta) * (a + sl * eta);
        let eta_neg = (-eta).max(0.0);
        BoundCoeffs {
            m_lo: m,
            m_hi: m,
            q_lo: b * (eta * eta - a / sl * eta_neg),
            q_hi: b * (eta * eta + a / sl * eta.abs()),
        }
    }
}

/// Affine sandwich for the squared chain:
/// `R_lo + M t <= W' <= R_hi + M t` with
/// `R_lo = beta (eta^2 - alpha lambda^{-1/2} eta^-)`,
/// `R_hi = beta (eta^2 + alpha lambda^{-1/2} |eta|)`,
/// `M = (alpha + lambda^{1/2} eta)^2`, valid for every threshold.
/// The bounded observable is the chain value `W` itself.
pub fn bounds(spec: &ArchSpec, r: f64) -> SandwichBounds {
    SandwichBounds::new("arch_w", r, LowerForm::Affine, Arc::new(coeffs(spec)))
        .with_observable(Arc::new(|_, x| x[0]))
}

/// Lower and upper factor laws coincide: both equal the law of `M`.
pub fn factor_laws(spec: &ArchSpec) -> Result<(FactorLaw, FactorLaw)> {
    Ok((spec.m_law(), spec.m_law()))
}

/// Shared-factor certificate inputs (affine lower route: `R_lo` is signed).
pub fn theorem3(spec: &ArchSpec) -> Result<Theorem3Inputs> {
    let c = coeffs(spec);
    let eps = spec.eps();
    Ok(Theorem3Inputs {
        m_law: spec.m_law(),
        r: 0.0,
        lower_form: LowerForm::Affine,
        coeff_sampler: Arc::new(move |rng: &mut ChaCha8Rng| {
            let env = vec![eps.sample(rng)];
            let bc = c(&env);
            (bc.m_lo, bc.q_lo, bc.q_hi)
        }),
    })
}
