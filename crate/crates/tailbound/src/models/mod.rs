//! The worked example systems: an AR(1) chain with ARCH errors, random
//! logistic transforms, the stochastic Ricker model, a class of randomly
//! rotated Lipschitz maps on `R^m`, and a chain with two stationary laws on
//! disjoint invariant sets. Each exposes its chain(s) as `MapFamily`
//! instances together with closed-form sandwich coefficients.

pub mod arch;
pub mod dual_law;
pub mod logistic;
pub mod mirek;
pub mod ricker;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::core_ifs::MapFamily;
use crate::cramer::FactorLaw;
use crate::error::{Error, Result};
use crate::sandwich::{SandwichBounds, Theorem3Inputs};

pub use arch::ArchSpec;
pub use dual_law::{DualLawSpec, ExactDualChain, ExactState};
pub use logistic::{logistic_embedded, EmbeddedChain, LogisticSpec};
pub use mirek::{MirekSpec, Perturbation};
pub use ricker::RickerSpec;

/// Log-uniform draw on `[lo, hi]`.
pub(crate) fn loguniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Log-uniform magnitude with a random sign.
pub(crate) fn loguniform_signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let v = loguniform(rng, lo, hi);
    if rng.random::<bool>() {
        v
    } else {
        -v
    }
}

/// Model ids accepted by the registry. `dual_exact` is the exact-arithmetic
/// branch and is sampled through `dual_law::simulate_exact` rather than as a
/// float family.
pub const REGISTERED: [&str; 12] = [
    "affine",
    "lindley",
    "arch_x",
    "arch_w",
    "logistic_x",
    "logistic_w",
    "ricker_x",
    "ricker_w",
    "mirek",
    "dual_real",
    "dual_exact_float",
    "dual_exact",
];

fn parse<T: serde::de::DeserializeOwned>(params: &Value) -> Result<T> {
    serde_json::from_value(params.clone())
        .map_err(|e| Error::Config(format!("bad model params: {e}")))
}

/// Generic affine chain `x -> M x + Q` on the reals, mostly for tests and
/// the command line.
#[derive(Debug, Clone, serde::Deserialize)]
pub struct AffineParams {
    pub m_law: crate::laws::ScalarLawCfg,
    pub q_law: crate::laws::ScalarLawCfg,
    #[serde(default)]
    pub declare_nonarithmetic: bool,
}

/// Thresholded max-type chain `x -> Q v (M x 1{x > r})`.
#[derive(Debug, Clone, serde::Deserialize)]
pub struct LindleyParams {
    pub r: f64,
    pub m_law: crate::laws::ScalarLawCfg,
    pub q_law: crate::laws::ScalarLawCfg,
    #[serde(default)]
    pub declare_nonarithmetic: bool,
}

fn affine_family(p: &AffineParams) -> MapFamily {
    use std::sync::Arc;
    let m_law: crate::laws::ScalarLaw = p.m_law.clone().into();
    let q_law: crate::laws::ScalarLaw = p.q_law.clone().into();
    MapFamily::scalar(
        "affine",
        0.0,
        Arc::new(move |rng: &mut ChaCha8Rng| vec![m_law.sample(rng), q_law.sample(rng)]),
        |env, x| env[0] * x + env[1],
        Arc::new(|env: &Vec<f64>| env[0].abs()),
        |rng| loguniform_signed(rng, 1e-3, 1e6),
    )
}

fn affine_bounds(r: f64) -> SandwichBounds {
    use crate::sandwich::{BoundCoeffs, LowerForm};
    use std::sync::Arc;
    // |M x + Q| as a function of |x|: between (M|x| - |Q|)^+ and M|x| + |Q|.
    SandwichBounds::new(
        "affine",
        r,
        LowerForm::Affine,
        Arc::new(|env: &Vec<f64>| BoundCoeffs {
            m_lo: env[0].abs(),
            m_hi: env[0].abs(),
            q_lo: -env[1].abs(),
            q_hi: env[1].abs(),
        }),
    )
}

fn lindley_family(p: &LindleyParams) -> MapFamily {
    use std::sync::Arc;
    let m_law: crate::laws::ScalarLaw = p.m_law.clone().into();
    let q_law: crate::laws::ScalarLaw = p.q_law.clone().into();
    let r = p.r;
    // For r > 0 the map jumps at t = r and carries no finite Lipschitz
    // certificate; at r = 0 it is Lipschitz with factor M.
    let lip: Arc<dyn Fn(&Vec<f64>) -> f64 + Send + Sync> = if r == 0.0 {
        Arc::new(|env: &Vec<f64>| env[0])
    } else {
        Arc::new(|_| f64::INFINITY)
    };
    MapFamily::scalar(
        "lindley",
        0.0,
        Arc::new(move |rng: &mut ChaCha8Rng| vec![m_law.sample(rng), q_law.sample(rng)]),
        move |env, x| env[1].max(if x > r { env[0] * x } else { 0.0 }),
        lip,
        |rng| loguniform(rng, 1e-3, 1e6),
    )
}

/// Build the `MapFamily` registered under `model_id`.
pub fn family(model_id: &str, params: &Value) -> Result<MapFamily> {
    match model_id {
        "affine" => Ok(affine_family(&parse::<AffineParams>(params)?)),
        "lindley" => Ok(lindley_family(&parse::<LindleyParams>(params)?)),
        "arch_x" => Ok(arch::x_family(&parse::<ArchSpec>(params)?)),
        "arch_w" => Ok(arch::w_family(&parse::<ArchSpec>(params)?)),
        "logistic_x" => Ok(logistic::x_family(&parse::<LogisticSpec>(params)?)),
        "logistic_w" => Ok(logistic::w_family(&parse::<LogisticSpec>(params)?)),
        "ricker_x" => Ok(ricker::x_family(&parse::<RickerSpec>(params)?)),
        "ricker_w" => Ok(ricker::w_family(&parse::<RickerSpec>(params)?)),
        "mirek" => mirek::family(&parse::<MirekSpec>(params)?),
        "dual_real" => Ok(dual_law::real_family(&parse::<DualLawSpec>(params)?)),
        "dual_exact_float" => Ok(dual_law::exact_float_family(&parse::<DualLawSpec>(params)?)),
        "dual_exact" => Err(Error::InvalidParam(
            "dual_exact runs in exact arithmetic; sample it via the runner or dual_law::simulate_exact".into(),
        )),
        other => Err(Error::UnknownModel(other.into())),
    }
}

/// Draw `(Psi(X), M X)` pairs for models of multiplicative type (`affine`,
/// `lindley`, `dual_real`): stationary draws `x` paired with fresh
/// environments.
pub fn goldie_pairs(
    model_id: &str,
    params: &Value,
    x_samples: &[f64],
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let fam = match model_id {
        "affine" | "lindley" | "dual_real" => family(model_id, params)?,
        other => {
            return Err(Error::InvalidParam(format!(
                "no generic (Psi(X), MX) pairing for model {other}"
            )))
        }
    };
    let mut rng = crate::rng::EnvStream::new(seed, 0).rng_at(0);
    Ok(x_samples
        .iter()
        .map(|&x| {
            let env = fam.sample_env(&mut rng);
            let psi = fam.apply(&env, &[x])[0];
            (psi, env[0] * x)
        })
        .collect())
}

/// Closed-form sandwich coefficients for the model at threshold `r`.
pub fn bounds_from_model(model_id: &str, params: &Value, r: f64) -> Result<SandwichBounds> {
    match model_id {
        "affine" => Ok(affine_bounds(r)),
        "arch_w" => Ok(arch::bounds(&parse::<ArchSpec>(params)?, r)),
        "logistic_w" => logistic::bounds(&parse::<LogisticSpec>(params)?, r),
        "ricker_w" => ricker::bounds(&parse::<RickerSpec>(params)?, r),
        "mirek" => Ok(mirek::bounds(&parse::<MirekSpec>(params)?)),
        "dual_real" | "dual_exact_float" | "dual_exact" => {
            Ok(dual_law::bounds(&parse::<DualLawSpec>(params)?))
        }
        other => Err(Error::UnknownModel(format!("no closed-form bounds for {other}"))),
    }
}

fn declared_factor(law: &crate::laws::ScalarLawCfg, declare: bool) -> Result<FactorLaw> {
    let base = FactorLaw::from_scalar_law(&law.clone().into())?;
    Ok(if declare && base.nonarithmetic != crate::cramer::Nonarithmetic::Declared {
        base.with_nonarithmetic(crate::cramer::Nonarithmetic::Declared)
    } else {
        base
    })
}

/// Per-threshold closed-form laws of the lower and upper Lipschitz factors.
pub fn factor_laws(model_id: &str, params: &Value, r: f64) -> Result<(FactorLaw, FactorLaw)> {
    match model_id {
        "affine" => {
            let p: AffineParams = parse(params)?;
            let law = declared_factor(&p.m_law, p.declare_nonarithmetic)?;
            Ok((law.clone(), law))
        }
        "lindley" => {
            let p: LindleyParams = parse(params)?;
            let law = declared_factor(&p.m_law, p.declare_nonarithmetic)?;
            Ok((law.clone(), law))
        }
        "arch_w" => arch::factor_laws(&parse::<ArchSpec>(params)?),
        "logistic_w" => logistic::factor_laws(&parse::<LogisticSpec>(params)?),
        "ricker_w" => ricker::factor_laws(&parse::<RickerSpec>(params)?, r),
        "mirek" => mirek::factor_laws(&parse::<MirekSpec>(params)?),
        "dual_real" | "dual_exact_float" | "dual_exact" => {
            dual_law::factor_laws(&parse::<DualLawSpec>(params)?)
        }
        other => Err(Error::UnknownModel(format!("no closed-form factor laws for {other}"))),
    }
}

/// Inputs for the exact-index certificate, where the model admits the
/// shared-factor form.
pub fn theorem3_inputs(model_id: &str, params: &Value) -> Result<Theorem3Inputs> {
    match model_id {
        "arch_w" => arch::theorem3(&parse::<ArchSpec>(params)?),
        "logistic_w" => logistic::theorem3(&parse::<LogisticSpec>(params)?),
        "mirek" => mirek::theorem3(&parse::<MirekSpec>(params)?),
        "dual_real" | "dual_exact_float" | "dual_exact" => {
            dual_law::theorem3(&parse::<DualLawSpec>(params)?)
        }
        "ricker_w" | "ricker_x" => Err(Error::InvalidParam(
            "no shared-factor form: the lower and upper factor laws differ at every threshold"
                .into(),
        )),
        other => Err(Error::UnknownModel(other.into())),
    }
}
