//! Randomly rotated Lipschitz maps on `R^m`:
//! `Psi(x) = beta Gamma x + perturbation(theta, x)` with `Gamma` a random
//! orthogonal matrix and the perturbation norm bounded by `Q(theta)`.
//! Then `(beta |x| - Q)^+ <= |Psi(x)| <= beta |x| + Q`; the radial
//! perturbation sharpens the lower bound to `beta |x| + Q'` with `Q' > 0`,
//! which is what makes an exact tail index certifiable. A vanishing
//! perturbation leaves the stationary law possibly bounded, and the
//! certificate declines.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::core_ifs::{euclidean, Env, MapFamily};
use crate::cramer::FactorLaw;
use crate::error::{Error, Result};
use crate::laws::{ScalarLaw, ScalarLawCfg};
use crate::sandwich::{BoundCoeffs, LowerForm, SandwichBounds, Theorem3Inputs};

use super::loguniform;

/// Perturbation structure. `Radial` points along the rotated image (the
/// only shape for which `|Psi(x)| = beta |x| + u` exactly, giving the
/// sharpened lower bound); `Fixed` pushes along a constant direction;
/// `None` is the control with possibly bounded stationary support.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    None,
    Fixed { u_law: ScalarLawCfg },
    Radial { u_law: ScalarLawCfg },
}

#[derive(Debug, Clone, Deserialize)]
pub struct MirekSpec {
    pub dim: usize,
    pub beta_law: ScalarLawCfg,
    pub perturbation: Perturbation,
}

impl MirekSpec {
    pub fn new(dim: usize, beta_law: ScalarLawCfg, perturbation: Perturbation) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParam("dim must be at least 2".into()));
        }
        if let Perturbation::Fixed { u_law } | Perturbation::Radial { u_law } = &perturbation {
            let law: ScalarLaw = u_law.clone().into();
            if law.support_lo().is_some_and(|lo| lo < 0.0) {
                return Err(Error::InvalidParam("perturbation size law must be nonnegative".into()));
            }
        }
        Ok(MirekSpec { dim, beta_law, perturbation })
    }

    fn beta(&self) -> ScalarLaw {
        self.beta_law.clone().into()
    }

    fn u_law(&self) -> ScalarLaw {
        match &self.perturbation {
            Perturbation::None => ScalarLaw::Constant(0.0),
            Perturbation::Fixed { u_law } | Perturbation::Radial { u_law } => u_law.clone().into(),
        }
    }

    pub fn beta_factor_law(&self) -> Result<FactorLaw> {
        FactorLaw::from_scalar_law(&self.beta())
    }
}

/// Haar-ish random orthogonal matrix: Gram-Schmidt of a Gaussian matrix
/// with positive diagonal correction. Returned row-major.
pub fn sample_rotation(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if dim == 2 {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        // reflectionless rotation is enough for an isometry
        return vec![c, -s, s, c];
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut cols: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..dim).map(|_| normal.sample(rng)).collect())
        .collect();
    for i in 0..dim {
        for j in 0..i {
            let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            let proj: Vec<f64> = cols[j].iter().map(|v| v * dot).collect();
            for (a, p) in cols[i].iter_mut().zip(proj) {
                *a -= p;
            }
        }
        let norm: f64 = cols[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in cols[i].iter_mut() {
            *v /= norm;
        }
    }
    let mut mat = vec![0.0; dim * dim];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..dim {
            mat[i * dim + j] = col[i];
        }
    }
    mat
}

fn mat_vec(dim: usize, mat: &[f64], x: &[f64]) -> Vec<f64> {
    (0..dim)
        .map(|i| (0..dim).map(|j| mat[i * dim + j] * x[j]).sum())
        .collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Environment layout: `[beta, u, gamma_00, gamma_01, ..., gamma_{m-1,m-1}]`.
fn env_sampler(spec: &MirekSpec) -> Arc<dyn Fn(&mut ChaCha8Rng) -> Env + Send + Sync> {
    let beta = spec.beta();
    let u = spec.u_law();
    let dim = spec.dim;
    Arc::new(move |rng: &mut ChaCha8Rng| {
        let mut env = Vec::with_capacity(2 + dim * dim);
        env.push(beta.sample(rng));
        env.push(u.sample(rng));
        env.extend(sample_rotation(dim, rng));
        env
    })
}

pub fn family(spec: &MirekSpec) -> Result<MapFamily> {
    let dim = spec.dim;
    let pert = spec.perturbation.clone();
    let eval = Arc::new(move |env: &Env, x: &[f64]| -> Vec<f64> {
        let (beta, u) = (env[0], env[1]);
        let gamma = &env[2..];
        let gx = mat_vec(dim, gamma, x);
        match pert {
            Perturbation::None => gx.iter().map(|v| beta * v).collect(),
            Perturbation::Fixed { .. } => {
                let mut y: Vec<f64> = gx.iter().map(|v| beta * v).collect();
                y[0] += u;
                y
            }
            Perturbation::Radial { .. } => {
                let n = norm(&gx);
                if n == 0.0 {
                    let mut y = vec![0.0; dim];
                    y[0] = u;
                    y
                } else {
                    gx.iter().map(|v| (beta + u / n) * v).collect()
                }
            }
        }
    });
    // Certified on {|x| >= 1} (the declared test domain): the radial
    // direction field is discontinuous at the origin, where no finite
    // Lipschitz constant exists.
    let lip: Arc<dyn Fn(&Env) -> f64 + Send + Sync> = match spec.perturbation {
        Perturbation::Radial { .. } => Arc::new(|env: &Env| env[0] + 2.0 * env[1]),
        _ => Arc::new(|env: &Env| env[0]),
    };
    Ok(MapFamily::new(
        "mirek",
        dim,
        vec![0.0; dim],
        env_sampler(spec),
        eval,
        lip,
        Arc::new(euclidean),
        Arc::new(move |rng| {
            let normal = Normal::new(0.0, 1.0).unwrap();
            let dir: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
            let n = norm(&dir).max(1e-12);
            let radius = 1.0 + loguniform(rng, 1e-3, 1e6);
            dir.iter().map(|v| v / n * radius).collect()
        }),
    ))
}

/// `(beta t + q_lo)^+ <= |Psi(x)| <= beta t + u` with `q_lo = u` for the
/// radial perturbation and `q_lo = -u` otherwise.
pub fn bounds(spec: &MirekSpec) -> SandwichBounds {
    let radial = matches!(spec.perturbation, Perturbation::Radial { .. });
    SandwichBounds::new(
        "mirek",
        0.0,
        LowerForm::Affine,
        Arc::new(move |env: &Env| {
            let (beta, u) = (env[0], env[1]);
            BoundCoeffs {
                m_lo: beta,
                m_hi: beta,
                q_lo: if radial { u } else { -u },
                q_hi: u,
            }
        }),
    )
}

pub fn factor_laws(spec: &MirekSpec) -> Result<(FactorLaw, FactorLaw)> {
    Ok((spec.beta_factor_law()?, spec.beta_factor_law()?))
}

pub fn theorem3(spec: &MirekSpec) -> Result<Theorem3Inputs> {
    let radial = matches!(spec.perturbation, Perturbation::Radial { .. });
    let beta = spec.beta();
    let u = spec.u_law();
    Ok(Theorem3Inputs {
        m_law: spec.beta_factor_law()?,
        r: 0.0,
        lower_form: LowerForm::MaxType,
        coeff_sampler: Arc::new(move |rng: &mut ChaCha8Rng| {
            let b = beta.sample(rng);
            let uv = u.sample(rng);
            let q_prime = if radial { uv } else { 0.0 };
            (b, q_prime, uv)
        }),
    })
}
