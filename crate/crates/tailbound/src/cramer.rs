//! The Cramér condition `E M^kappa = 1`: moment function evaluation, root
//! solving, and the implicit-renewal tail constants.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{gauss_integral, mean_se};
use crate::rng::rng_stream;

/// Whether the law of `log M` (given `M != 0`) was declared nonarithmetic.
/// This is a constructor-level declaration, never inferred from samples:
/// lattice structure is undecidable from finitely many draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Nonarithmetic {
    Declared,
    DeclaredNot,
    Unknown,
}

/// Law of a nonnegative multiplicative factor `M`.
#[derive(Clone)]
pub enum FactorKind {
    /// `M = a` w.p. `p`, `M = b` w.p. `1-p`, with `0 < a < 1 < b`.
    TwoPoint { a: f64, b: f64, p: f64 },
    /// General finite law on nonnegative atoms.
    Discrete { atoms: Vec<(f64, f64)> },
    LogNormal { mu: f64, sigma: f64 },
    /// Law of `(alpha + sqrt(lambda) * eta)^2`, `eta` standard normal.
    SquaredAffineGaussian { alpha: f64, lambda: f64 },
    Empirical { samples: Arc<Vec<f64>> },
    Custom { sampler: Arc<dyn Fn(&mut ChaCha8Rng) -> f64 + Send + Sync> },
}

#[derive(Clone)]
pub struct FactorLaw {
    pub kind: FactorKind,
    pub nonarithmetic: Nonarithmetic,
}

impl fmt::Debug for FactorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FactorKind::TwoPoint { a, b, p } => write!(f, "TwoPoint({a}, {b}; p={p})"),
            FactorKind::Discrete { atoms } => write!(f, "Discrete({atoms:?})"),
            FactorKind::LogNormal { mu, sigma } => write!(f, "LogNormal({mu}, {sigma})"),
            FactorKind::SquaredAffineGaussian { alpha, lambda } => {
                write!(f, "SquaredAffineGaussian(alpha={alpha}, lambda={lambda})")
            }
            FactorKind::Empirical { samples } => write!(f, "Empirical(n={})", samples.len()),
            FactorKind::Custom { .. } => write!(f, "Custom"),
        }?;
        write!(f, " [{:?}]", self.nonarithmetic)
    }
}

impl Serialize for FactorLaw {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{self:?}"))
    }
}

impl FactorLaw {
    /// Two-point law. Requires `0 < a < 1 < b` and `0 < p < 1` so that a
    /// Cramér root can exist. Nonarithmeticity (irrational `ln a / ln b`)
    /// must be declared by the caller.
    pub fn two_point(a: f64, b: f64, p: f64, nonarithmetic: Nonarithmetic) -> Result<Self> {
        if !(0.0 < a && a < 1.0 && 1.0 < b) {
            return Err(Error::InvalidParam(format!(
                "two_point requires 0 < a < 1 < b, got a={a}, b={b}"
            )));
        }
        if !(0.0 < p && p < 1.0) {
            return Err(Error::InvalidParam(format!("two_point requires 0 < p < 1, got {p}")));
        }
        Ok(FactorLaw { kind: FactorKind::TwoPoint { a, b, p }, nonarithmetic })
    }

    /// Finite law with arbitrary nonnegative atoms (probabilities must sum
    /// to 1 within 1e-12).
    pub fn discrete(atoms: Vec<(f64, f64)>, nonarithmetic: Nonarithmetic) -> Result<Self> {
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-12 || atoms.iter().any(|&(v, p)| v < 0.0 || p < 0.0) {
            return Err(Error::InvalidParam("discrete law atoms invalid".into()));
        }
        Ok(FactorLaw { kind: FactorKind::Discrete { atoms }, nonarithmetic })
    }

    /// Lognormal laws are continuous, hence nonarithmetic by construction.
    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::InvalidParam("lognormal sigma must be positive".into()));
        }
        Ok(FactorLaw {
            kind: FactorKind::LogNormal { mu, sigma },
            nonarithmetic: Nonarithmetic::Declared,
        })
    }

    /// Law of `(alpha + sqrt(lambda) eta)^2` with standard normal `eta`;
    /// continuous, hence nonarithmetic.
    pub fn squared_affine_gaussian(alpha: f64, lambda: f64) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(Error::InvalidParam("lambda must be positive".into()));
        }
        Ok(FactorLaw {
            kind: FactorKind::SquaredAffineGaussian { alpha, lambda },
            nonarithmetic: Nonarithmetic::Declared,
        })
    }

    /// Empirical law of observed factors. There is no sound nonarithmeticity
    /// check for samples, so the flag is `Unknown` and downstream claims
    /// carry it.
    pub fn empirical(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParam("empirical factor samples invalid".into()));
        }
        Ok(FactorLaw {
            kind: FactorKind::Empirical { samples: Arc::new(samples) },
            nonarithmetic: Nonarithmetic::Unknown,
        })
    }

    pub fn custom(
        sampler: Arc<dyn Fn(&mut ChaCha8Rng) -> f64 + Send + Sync>,
        nonarithmetic: Nonarithmetic,
    ) -> Self {
        FactorLaw { kind: FactorKind::Custom { sampler }, nonarithmetic }
    }

    /// Override the nonarithmeticity declaration (e.g. a two-point law whose
    /// log-ratio the caller knows to be irrational).
    pub fn with_nonarithmetic(mut self, flag: Nonarithmetic) -> Self {
        self.nonarithmetic = flag;
        self
    }

    /// View a nonnegative scalar law as a multiplicative factor law.
    /// Continuous laws are declared nonarithmetic; discrete ones start
    /// `Unknown` until the caller declares them.
    pub fn from_scalar_law(law: &crate::laws::ScalarLaw) -> Result<Self> {
        use crate::laws::ScalarLaw as S;
        match law {
            S::Constant(c) if *c >= 0.0 => {
                FactorLaw::discrete(vec![(*c, 1.0)], Nonarithmetic::DeclaredNot)
            }
            S::TwoPoint { x, y, p } if *x >= 0.0 && *y >= 0.0 => {
                FactorLaw::discrete(vec![(*x, *p), (*y, 1.0 - p)], Nonarithmetic::Unknown)
            }
            S::LogNormal { mu, sigma } => FactorLaw::lognormal(*mu, *sigma),
            S::Uniform { lo, hi } if *lo >= 0.0 => {
                let (lo, hi) = (*lo, *hi);
                Ok(FactorLaw::custom(
                    Arc::new(move |rng| rng.random_range(lo..hi)),
                    Nonarithmetic::Declared,
                ))
            }
            S::Exponential { rate } => {
                let rate = *rate;
                Ok(FactorLaw::custom(
                    Arc::new(move |rng| {
                        rand_distr::Distribution::sample(
                            &rand_distr::Exp::new(rate).expect("rate"),
                            rng,
                        )
                    }),
                    Nonarithmetic::Declared,
                ))
            }
            other => Err(Error::InvalidParam(format!(
                "cannot view {other:?} as a nonnegative factor law"
            ))),
        }
    }

    /// Law of `c * M` for `c > 0`, staying in a closed-form family whenever
    /// possible (needed for threshold-dependent factors like `b e^{1/r}`).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParam("scale must be positive and finite".into()));
        }
        let kind = match &self.kind {
            FactorKind::TwoPoint { a, b, p } => {
                FactorKind::Discrete { atoms: vec![(c * a, *p), (c * b, 1.0 - p)] }
            }
            FactorKind::Discrete { atoms } => FactorKind::Discrete {
                atoms: atoms.iter().map(|&(v, p)| (c * v, p)).collect(),
            },
            FactorKind::LogNormal { mu, sigma } => {
                FactorKind::LogNormal { mu: mu + c.ln(), sigma: *sigma }
            }
            FactorKind::SquaredAffineGaussian { alpha, lambda } => {
                FactorKind::SquaredAffineGaussian {
                    alpha: c.sqrt() * alpha,
                    lambda: c * lambda,
                }
            }
            FactorKind::Empirical { samples } => FactorKind::Empirical {
                samples: Arc::new(samples.iter().map(|v| c * v).collect()),
            },
            FactorKind::Custom { sampler } => {
                let inner = Arc::clone(sampler);
                FactorKind::Custom { sampler: Arc::new(move |rng| c * inner(rng)) }
            }
        };
        Ok(FactorLaw { kind, nonarithmetic: self.nonarithmetic })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match &self.kind {
            FactorKind::TwoPoint { a, b, p } => {
                if rng.random::<f64>() < *p {
                    *a
                } else {
                    *b
                }
            }
            FactorKind::Discrete { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                atoms.last().map(|&(v, _)| v).unwrap_or(f64::NAN)
            }
            FactorKind::LogNormal { mu, sigma } => {
                let z: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                (mu + sigma * z).exp()
            }
            FactorKind::SquaredAffineGaussian { alpha, lambda } => {
                let eta: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                let v = alpha + lambda.sqrt() * eta;
                v * v
            }
            FactorKind::Empirical { samples } => {
                samples[rng.random_range(0..samples.len())]
            }
            FactorKind::Custom { sampler } => sampler(rng),
        }
    }

    /// `P(M = 1) = 1`?
    fn is_degenerate_at_one(&self) -> bool {
        match &self.kind {
            FactorKind::Discrete { atoms } => {
                atoms.iter().all(|&(v, p)| v == 1.0 || p == 0.0)
            }
            FactorKind::Empirical { samples } => samples.iter().all(|&v| v == 1.0),
            _ => false,
        }
    }

    fn has_closed_form(&self) -> bool {
        matches!(
            self.kind,
            FactorKind::TwoPoint { .. } | FactorKind::Discrete { .. } | FactorKind::LogNormal { .. }
        )
    }

    fn gamma_ratio(kappa: f64) -> f64 {
        // Gamma(kappa + 1/2) / sqrt(pi)
        (libm::lgamma(kappa + 0.5) - 0.5 * std::f64::consts::PI.ln()).exp()
    }

    /// `E M^kappa` by closed form or quadrature. `None` for sampler-only laws.
    pub fn phi_exact(&self, kappa: f64) -> Option<f64> {
        match &self.kind {
            FactorKind::TwoPoint { a, b, p } => Some(p * a.powf(kappa) + (1.0 - p) * b.powf(kappa)),
            FactorKind::Discrete { atoms } => Some(
                atoms
                    .iter()
                    .map(|&(v, p)| if p == 0.0 { 0.0 } else { p * v.powf(kappa) })
                    .sum(),
            ),
            FactorKind::LogNormal { mu, sigma } => {
                Some((kappa * mu + 0.5 * kappa * kappa * sigma * sigma).exp())
            }
            FactorKind::SquaredAffineGaussian { alpha, lambda } => {
                if *alpha == 0.0 {
                    // E (lambda eta^2)^kappa = (2 lambda)^kappa Gamma(kappa+1/2)/sqrt(pi)
                    Some((2.0 * lambda).powf(kappa) * Self::gamma_ratio(kappa))
                } else {
                    let (al, sl) = (*alpha, lambda.sqrt());
                    Some(gauss_integral(
                        move |x| {
                            let v = (al + sl * x).abs();
                            if v == 0.0 && kappa == 0.0 {
                                1.0
                            } else {
                                v.powf(2.0 * kappa)
                            }
                        },
                        2.0 * kappa,
                        1e-12,
                    ))
                }
            }
            FactorKind::Empirical { samples } => {
                Some(samples.iter().map(|v| v.powf(kappa)).sum::<f64>() / samples.len() as f64)
            }
            FactorKind::Custom { .. } => None,
        }
    }

    /// `E M^kappa log M` by closed form or quadrature.
    pub fn mu_exact(&self, kappa: f64) -> Option<f64> {
        let xlogx = |v: f64| if v == 0.0 { 0.0 } else { v.powf(kappa) * v.ln() };
        match &self.kind {
            FactorKind::TwoPoint { a, b, p } => Some(p * xlogx(*a) + (1.0 - p) * xlogx(*b)),
            FactorKind::Discrete { atoms } => {
                Some(atoms.iter().map(|&(v, p)| p * xlogx(v)).sum())
            }
            FactorKind::LogNormal { mu, sigma } => {
                // d/dkappa of exp(kappa mu + kappa^2 sigma^2 / 2)
                let phi = (kappa * mu + 0.5 * kappa * kappa * sigma * sigma).exp();
                Some(phi * (mu + kappa * sigma * sigma))
            }
            FactorKind::SquaredAffineGaussian { alpha, lambda } => {
                let (al, sl) = (*alpha, lambda.sqrt());
                Some(gauss_integral(
                    move |x| {
                        let m = (al + sl * x) * (al + sl * x);
                        if m == 0.0 {
                            0.0
                        } else {
                            m.powf(kappa) * m.ln()
                        }
                    },
                    2.0 * kappa + 1.0,
                    1e-12,
                ))
            }
            FactorKind::Empirical { samples } => {
                Some(samples.iter().map(|&v| xlogx(v)).sum::<f64>() / samples.len() as f64)
            }
            FactorKind::Custom { .. } => None,
        }
    }

    /// `E log M` by closed form or quadrature (`-inf` allowed when `P(M=0)>0`).
    pub fn mean_log_exact(&self) -> Option<f64> {
        let safe_log = |v: f64| if v == 0.0 { f64::NEG_INFINITY } else { v.ln() };
        match &self.kind {
            FactorKind::TwoPoint { a, b, p } => Some(p * a.ln() + (1.0 - p) * b.ln()),
            FactorKind::Discrete { atoms } => Some(
                atoms
                    .iter()
                    .map(|&(v, p)| if p == 0.0 { 0.0 } else { p * safe_log(v) })
                    .sum(),
            ),
            FactorKind::LogNormal { mu, .. } => Some(*mu),
            FactorKind::SquaredAffineGaussian { alpha, lambda } => {
                let (al, sl) = (*alpha, lambda.sqrt());
                Some(gauss_integral(
                    move |x| {
                        let v = (al + sl * x).abs();
                        if v == 0.0 {
                            0.0 // measure-zero point; integrable singularity
                        } else {
                            2.0 * v.ln()
                        }
                    },
                    1.0,
                    1e-10,
                ))
            }
            FactorKind::Empirical { samples } => {
                Some(samples.iter().map(|&v| safe_log(v)).sum::<f64>() / samples.len() as f64)
            }
            FactorKind::Custom { .. } => None,
        }
    }

    /// Draw `n` iid factors from stream `(seed, 0)`.
    pub fn draw(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_stream(seed, 0);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

/// How a moment-function value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PhiMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo { n: usize, seed: u64 },
}

/// `phi(kappa) = E M^kappa`, with a standard error when Monte Carlo is used.
pub fn phi(law: &FactorLaw, kappa: f64, method: PhiMethod) -> Result<(f64, Option<f64>)> {
    if kappa < 0.0 {
        return Err(Error::InvalidParam("kappa must be nonnegative".into()));
    }
    match method {
        PhiMethod::ClosedForm | PhiMethod::Quadrature => law
            .phi_exact(kappa)
            .map(|v| (v, None))
            .ok_or_else(|| Error::InvalidParam("law has no closed form; use Monte Carlo".into())),
        PhiMethod::MonteCarlo { n, seed } => {
            let samples = law.draw(n, seed);
            if samples.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: "Monte Carlo factor sample".into() });
            }
            let powered: Vec<f64> = samples.iter().map(|v| v.powf(kappa)).collect();
            let (m, se) = mean_se(&powered);
            Ok((m, Some(se)))
        }
    }
}

/// Solution of the Cramér condition.
#[derive(Debug, Clone, Serialize)]
pub struct CramerSolution {
    pub kappa: f64,
    /// `mu_kappa = E M^kappa log M` (positive at the root).
    pub mu_kappa: f64,
    pub phi_at_kappa: f64,
    pub method: PhiMethod,
    pub bracket: (f64, f64),
    pub tolerance: f64,
    pub nonarithmetic: Nonarithmetic,
}

/// Default search ceiling: beyond this the tail is numerically
/// indistinguishable from a light tail at desk scale.
pub const KAPPA_MAX_DEFAULT: f64 = 64.0;

/// Configuration for `solve_kappa`.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub kappa_max: f64,
    pub tol: f64,
    /// When set, evaluate `phi` on a single fixed Monte Carlo sample of this
    /// size (common random numbers make the empirical `phi` smooth in
    /// `kappa`, so the root is well defined).
    pub monte_carlo: Option<(usize, u64)>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { kappa_max: KAPPA_MAX_DEFAULT, tol: 1e-10, monte_carlo: None }
    }
}

/// Solve `E M^kappa = 1` for the unique positive root.
///
/// `phi` is convex with `phi(0) = 1` and `phi'(0) = E log M < 0, so it dips
/// below one and crosses back up exactly once (if at all below `kappa_max`).
pub fn solve_kappa(law: &FactorLaw, opts: SolveOptions) -> Result<CramerSolution> {
    if law.is_degenerate_at_one() {
        return Err(Error::DegenerateFactor);
    }

    // Monte Carlo path: freeze one sample, then solve on the empirical law.
    if let Some((n, seed)) = opts.monte_carlo {
        let samples = law.draw(n, seed);
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "Monte Carlo factor sample".into() });
        }
        let empirical = FactorLaw {
            kind: FactorKind::Empirical { samples: Arc::new(samples) },
            nonarithmetic: law.nonarithmetic,
        };
        let inner = solve_kappa(
            &empirical,
            SolveOptions { monte_carlo: None, ..opts },
        )?;
        return Ok(CramerSolution {
            method: PhiMethod::MonteCarlo { n, seed },
            nonarithmetic: law.nonarithmetic,
            ..inner
        });
    }

    let mean_log = law
        .mean_log_exact()
        .ok_or_else(|| Error::InvalidParam("sampler-only law: pass monte_carlo options".into()))?;
    if !(mean_log < 0.0) {
        return Err(Error::NotMeanDominated { mean_log });
    }

    let f = |k: f64| law.phi_exact(k).expect("closed form available") - 1.0;

    // Upper bracket: first power-of-two grid point with phi > 1.
    let mut hi = 1.0_f64.min(opts.kappa_max);
    while f(hi) <= 0.0 {
        if hi >= opts.kappa_max {
            return Err(Error::NoCramerIndex { kappa_max: opts.kappa_max });
        }
        hi = (hi * 2.0).min(opts.kappa_max);
    }
    // Lower bracket: halve until phi < 1 (guaranteed since phi'(0) < 0).
    let mut lo = 0.5 * hi;
    while f(lo) >= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::DegenerateFactor);
        }
    }
    let bracket = (lo, hi);

    // Bisection with a secant acceleration step.
    let (mut lo, mut hi) = bracket;
    let (mut flo, mut fhi) = (f(lo), f(hi));
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..256 {
        // secant proposal, fall back to midpoint if outside
        let sec = lo - flo * (hi - lo) / (fhi - flo);
        mid = if sec.is_finite() && sec > lo && sec < hi { sec } else { 0.5 * (lo + hi) };
        let fm = f(mid);
        if fm.abs() <= opts.tol && (hi - lo) <= opts.tol * mid.max(1.0) {
            break;
        }
        if fm < 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        // plain midpoint every other step keeps worst-case convergence
        let m2 = 0.5 * (lo + hi);
        let f2 = f(m2);
        if f2 < 0.0 {
            lo = m2;
            flo = f2;
        } else {
            hi = m2;
            fhi = f2;
        }
        if (hi - lo) <= 0.25 * opts.tol * mid.max(1.0) {
            mid = 0.5 * (lo + hi);
            break;
        }
    }
    let kappa = mid;
    let mu_kappa = law.mu_exact(kappa).expect("closed form available");
    Ok(CramerSolution {
        kappa,
        mu_kappa,
        phi_at_kappa: f(kappa) + 1.0,
        method: if law.has_closed_form() { PhiMethod::ClosedForm } else { PhiMethod::Quadrature },
        bracket,
        tolerance: opts.tol,
        nonarithmetic: law.nonarithmetic,
    })
}

/// The implicit-renewal tail constants estimated from paired samples of
/// `(Psi(X), M X)` with `X` stationary and independent of the environment.
#[derive(Debug, Clone, Serialize)]
pub struct GoldieConstants {
    pub c_plus: f64,
    pub c_plus_se: f64,
    pub c_minus: f64,
    pub c_minus_se: f64,
    pub kappa: f64,
    pub mu_kappa: f64,
    pub n_samples: usize,
}

/// `C_+ = E((Psi(X)^+)^kappa - ((MX)^+)^kappa) / (kappa mu_kappa)` and the
/// negative-part analogue. The pairwise difference is averaged directly:
/// for heavy tails each term alone has infinite mean, only the difference
/// is integrable.
pub fn goldie_constants(
    pairs: &[(f64, f64)],
    solution: &CramerSolution,
) -> Result<GoldieConstants> {
    let (kappa, mu) = (solution.kappa, solution.mu_kappa);
    if !kappa.is_finite() || !mu.is_finite() || mu <= 0.0 {
        return Err(Error::NonFinite { context: "kappa or mu_kappa".into() });
    }
    let pos = |v: f64| v.max(0.0);
    let neg = |v: f64| (-v).max(0.0);
    let plus: Vec<f64> = pairs
        .iter()
        .map(|&(psi, mx)| pos(psi).powf(kappa) - pos(mx).powf(kappa))
        .collect();
    let minus: Vec<f64> = pairs
        .iter()
        .map(|&(psi, mx)| neg(psi).powf(kappa) - neg(mx).powf(kappa))
        .collect();
    let (mp, sp) = mean_se(&plus);
    let (mm, sm) = mean_se(&minus);
    let scale = 1.0 / (kappa * mu);
    Ok(GoldieConstants {
        c_plus: mp * scale,
        c_plus_se: sp * scale,
        c_minus: mm * scale,
        c_minus_se: sm * scale,
        kappa,
        mu_kappa: mu,
        n_samples: pairs.len(),
    })
}
