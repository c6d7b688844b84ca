//! An affine chain `x -> alpha x + beta` with `alpha in {1/3, 2}`, `E alpha = 1`,
//! whose additive part is 3 on the countable dense set `I = N_0 3^Z` and a
//! standard exponential off it. Both `I` and its complement are invariant,
//! carrying distinct stationary laws with the same exact tail index one.
//!
//! The `I` branch is simulated in exact arithmetic (states `m 3^n` with an
//! arbitrary-width numerator), since the invariance claim is algebraic and
//! meaningless at float precision. Floats cannot faithfully represent the
//! complement either (`I` is dense); the float chain here plays the
//! complement branch, an idealization that does not affect the tail.

use std::sync::Arc;

use num_bigint::BigUint;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::core_ifs::{Env, MapFamily, SampleSet, ValueKind};
use crate::cramer::{FactorLaw, Nonarithmetic};
use crate::error::{Error, Result};
use crate::laws::ScalarLaw;
use crate::rng::EnvStream;
use crate::sandwich::{BoundCoeffs, LowerForm, SandwichBounds, Theorem3Inputs};

use super::loguniform;

fn default_p() -> f64 {
    0.6
}

/// `p = P(alpha = 1/3)`; the default `3/5` makes `E alpha = 1` and the
/// Cramér index one. `log(1/3)/log 2` is irrational, so the factor law is
/// nonarithmetic by construction.
#[derive(Debug, Clone, Deserialize)]
pub struct DualLawSpec {
    #[serde(default = "default_p")]
    pub p: f64,
}

impl Default for DualLawSpec {
    fn default() -> Self {
        DualLawSpec { p: default_p() }
    }
}

impl DualLawSpec {
    fn alpha_law(&self) -> ScalarLaw {
        ScalarLaw::TwoPoint { x: 1.0 / 3.0, y: 2.0, p: self.p }
    }

    pub fn alpha_factor_law(&self) -> Result<FactorLaw> {
        FactorLaw::discrete(vec![(1.0 / 3.0, self.p), (2.0, 1.0 - self.p)], Nonarithmetic::Declared)
    }
}

/// Environment layout `[alpha, gamma]`; the exact branch uses `alpha` only.
fn env_sampler(spec: &DualLawSpec) -> Arc<dyn Fn(&mut ChaCha8Rng) -> Env + Send + Sync> {
    let alpha = spec.alpha_law();
    Arc::new(move |rng: &mut ChaCha8Rng| {
        let a = alpha.sample(rng);
        let g: f64 = rand_distr::Distribution::sample(
            &rand_distr::Exp::new(1.0).expect("unit rate"),
            rng,
        );
        vec![a, g]
    })
}

/// The complement branch: `x -> alpha x + gamma` in floating point.
pub fn real_family(spec: &DualLawSpec) -> MapFamily {
    let sampler = env_sampler(spec);
    MapFamily::scalar(
        "dual_real",
        0.0,
        sampler,
        |env, x| env[0] * x + env[1],
        Arc::new(|env: &Env| env[0]),
        |rng| loguniform(rng, 1e-3, 1e6),
    )
}

/// The `I` branch as floats (`x -> alpha x + 3`), sharing the environment
/// stream with the exact chain for replay comparisons.
pub fn exact_float_family(spec: &DualLawSpec) -> MapFamily {
    let sampler = env_sampler(spec);
    MapFamily::scalar(
        "dual_exact_float",
        0.0,
        sampler,
        |env, x| env[0] * x + 3.0,
        Arc::new(|env: &Env| env[0]),
        |rng| loguniform(rng, 1e-3, 1e6),
    )
}

/// Pathwise coefficients valid on both branches: the additive part is 3 or
/// `gamma`, so `min(3, gamma)` and `max(3, gamma)` bracket it.
pub fn bounds(spec: &DualLawSpec) -> SandwichBounds {
    let _ = spec;
    SandwichBounds::new(
        "dual_law",
        0.0,
        LowerForm::Affine,
        Arc::new(|env: &Env| BoundCoeffs {
            m_lo: env[0],
            m_hi: env[0],
            q_lo: env[1].min(3.0),
            q_hi: env[1].max(3.0),
        }),
    )
}

pub fn factor_laws(spec: &DualLawSpec) -> Result<(FactorLaw, FactorLaw)> {
    Ok((spec.alpha_factor_law()?, spec.alpha_factor_law()?))
}

pub fn theorem3(spec: &DualLawSpec) -> Result<Theorem3Inputs> {
    let alpha = spec.alpha_law();
    Ok(Theorem3Inputs {
        m_law: spec.alpha_factor_law()?,
        r: 0.0,
        lower_form: LowerForm::MaxType,
        coeff_sampler: Arc::new(move |rng: &mut ChaCha8Rng| {
            let a = alpha.sample(rng);
            let g: f64 = rand_distr::Distribution::sample(
                &rand_distr::Exp::new(1.0).expect("unit rate"),
                rng,
            );
            (a, g.min(3.0), g.max(3.0))
        }),
    })
}

/// A point of `I = N_0 3^Z`, stored as `m * 3^n` with `3 ∤ m` (canonical),
/// or `(0, 0)` for zero. The numerator is arbitrary-width: under the chain
/// dynamics `n` drifts down and `m` grows without bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactState {
    pub m: BigUint,
    pub n: i64,
}

const LN_3: f64 = 1.0986122886681098;

impl ExactState {
    pub fn new(m: u64, n: i64) -> Self {
        let mut s = ExactState { m: BigUint::from(m), n };
        s.canonicalize();
        s
    }

    pub fn zero() -> Self {
        ExactState { m: BigUint::ZERO, n: 0 }
    }

    fn canonicalize(&mut self) {
        if self.m == BigUint::ZERO {
            self.n = 0;
            return;
        }
        let three = BigUint::from(3u32);
        while (&self.m % &three) == BigUint::ZERO {
            self.m /= &three;
            self.n += 1;
        }
    }

    pub fn is_canonical(&self) -> bool {
        if self.m == BigUint::ZERO {
            self.n == 0
        } else {
            (&self.m % BigUint::from(3u32)) != BigUint::ZERO
        }
    }

    /// `x / 3`.
    pub fn third(&mut self) {
        if self.m != BigUint::ZERO {
            self.n -= 1;
        }
    }

    /// `2 x` (doubling never introduces a factor of 3).
    pub fn double(&mut self) {
        self.m *= 2u32;
    }

    /// `x + 3`, via a common power of three.
    pub fn add_three(&mut self) {
        let e = self.n.min(1);
        let pow = |k: i64| -> BigUint { BigUint::from(3u32).pow(k as u32) };
        self.m = &self.m * pow(self.n - e) + pow(1 - e);
        self.n = e;
        self.canonicalize();
    }

    /// Approximate float value `m * 3^n`, computed in log space (the
    /// numerator may have far more bits than a double).
    pub fn value_f64(&self) -> f64 {
        if self.m == BigUint::ZERO {
            return 0.0;
        }
        let bits = self.m.bits();
        let ln_m = if bits <= 52 {
            let small: u64 = (&self.m).try_into().expect("fits in 52 bits");
            (small as f64).ln()
        } else {
            let shift = bits - 52;
            let top: u64 = (&self.m >> shift).try_into().expect("52 bits");
            (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
        };
        (ln_m + self.n as f64 * LN_3).exp()
    }
}

/// The `I`-branch chain in exact arithmetic.
pub struct ExactDualChain {
    pub spec: DualLawSpec,
    pub state: ExactState,
}

/// Guard against runaway exponents (a sign of misuse, not of the model).
const EXPONENT_LIMIT: i64 = 1 << 40;

impl ExactDualChain {
    pub fn new(spec: DualLawSpec, start: ExactState) -> Self {
        ExactDualChain { spec, state: start }
    }

    /// One step `x -> alpha x + 3`, consuming the same environment layout
    /// as the float families (`alpha` is `env[0]`).
    pub fn step_with(&mut self, env: &Env) -> Result<()> {
        if env[0] < 1.0 {
            self.state.third();
        } else {
            self.state.double();
        }
        self.state.add_three();
        if self.state.n.abs() > EXPONENT_LIMIT {
            return Err(Error::ModelContract("exact-state exponent out of range".into()));
        }
        Ok(())
    }
}

/// Closure evidence for a single exact trajectory.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ClosureReport {
    pub steps: usize,
    /// Canonical-form failures (must be zero: closure is exact).
    pub violations: u64,
    pub max_numerator_bits: u64,
    pub min_exponent: i64,
    pub max_exponent: i64,
    pub final_value: f64,
}

/// Run the exact chain `steps` steps from `start` and check closure in
/// `I = N_0 3^Z` with zero tolerance at every step.
pub fn exact_closure_run(
    spec: &DualLawSpec,
    start: ExactState,
    steps: usize,
    seed: u64,
) -> Result<ClosureReport> {
    let sampler = env_sampler(spec);
    let stream = EnvStream::new(seed, 0);
    let mut chain = ExactDualChain::new(spec.clone(), start);
    let mut violations = 0u64;
    let mut max_bits = 0u64;
    let mut min_n = i64::MAX;
    let mut max_n = i64::MIN;
    for k in 1..=steps {
        let env = sampler(&mut stream.rng_at(k as u64));
        chain.step_with(&env)?;
        if !chain.state.is_canonical() {
            violations += 1;
        }
        max_bits = max_bits.max(chain.state.m.bits());
        min_n = min_n.min(chain.state.n);
        max_n = max_n.max(chain.state.n);
    }
    Ok(ClosureReport {
        steps,
        violations,
        max_numerator_bits: max_bits,
        min_exponent: min_n,
        max_exponent: max_n,
        final_value: chain.state.value_f64(),
    })
}

/// Pooled stationary draws from the exact branch: independent restarted
/// chains, each burned in and then recorded. Restarting keeps the
/// numerators small (the exponent drift is what makes single long runs
/// expensive).
pub fn simulate_exact(
    spec: &DualLawSpec,
    reps: usize,
    burn_in: usize,
    per_rep: usize,
    seed: u64,
) -> Result<SampleSet> {
    use rayon::prelude::*;
    let sampler = env_sampler(spec);
    let chunks: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let stream = EnvStream::new(seed, i as u64 + 1);
            let mut chain = ExactDualChain::new(spec.clone(), ExactState::new(1, 1));
            let mut out = Vec::with_capacity(per_rep);
            for k in 1..=(burn_in + per_rep) {
                let env = sampler(&mut stream.rng_at(k as u64));
                chain.step_with(&env)?;
                if k > burn_in {
                    out.push(chain.state.value_f64());
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = chunks.into_iter().flatten().collect();
    Ok(SampleSet::from_values(
        "dual_exact",
        seed,
        format!("exact_restarts(reps={reps},burn_in={burn_in},per_rep={per_rep})"),
        ValueKind::RawState,
        values,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_ifs::iterate_forward;

    #[test]
    fn exact_arithmetic_basics() {
        // 1/3 -> (1, -1); +3 -> 10/3 -> (10, -1); x2 -> (20, -1); +3 -> 29/3.
        let mut s = ExactState::new(1, 0);
        s.third();
        assert_eq!(s, ExactState { m: BigUint::from(1u32), n: -1 });
        s.add_three();
        assert_eq!(s, ExactState { m: BigUint::from(10u32), n: -1 });
        s.double();
        s.add_three();
        assert_eq!(s, ExactState { m: BigUint::from(29u32), n: -1 });
        assert!((s.value_f64() - 29.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn add_three_canonicalizes() {
        // 6 = 2*3: new(6,0) -> (2,1); +3 -> 9 -> (1,2).
        let mut s = ExactState::new(6, 0);
        assert_eq!(s, ExactState { m: BigUint::from(2u32), n: 1 });
        s.add_three();
        assert_eq!(s, ExactState { m: BigUint::from(1u32), n: 2 });
        // zero is canonical and 0 + 3 = 3.
        let mut z = ExactState::zero();
        z.add_three();
        assert_eq!(z, ExactState { m: BigUint::from(1u32), n: 1 });
    }

    #[test]
    fn closure_over_ten_thousand_steps_matches_float_replay() {
        let spec = DualLawSpec::default();
        let report = exact_closure_run(&spec, ExactState::new(1, 1), 10_000, 1).unwrap();
        assert_eq!(report.violations, 0);

        // The float family driven by the same stream tracks the exact chain.
        let fam = exact_float_family(&spec);
        let t = iterate_forward(&fam, &[3.0], 10_000, 1).unwrap();
        let float_final = t.final_state()[0];
        assert!(
            (float_final - report.final_value).abs() <= 1e-6 * (1.0 + float_final.abs()),
            "float {float_final} vs exact {}",
            report.final_value
        );
    }

    #[test]
    fn expected_alpha_is_one() {
        let spec = DualLawSpec::default();
        let law = spec.alpha_factor_law().unwrap();
        assert!((law.phi_exact(1.0).unwrap() - 1.0).abs() < 1e-15);
        // mean log alpha = 0.6 ln(1/3) + 0.4 ln 2 (mean contraction)
        let oracle = 0.6 * (1.0f64 / 3.0).ln() + 0.4 * 2.0f64.ln();
        assert!((law.mean_log_exact().unwrap() - oracle).abs() < 1e-15);
        assert!(oracle < 0.0);
    }

    #[test]
    fn exact_sampler_reproducible() {
        let spec = DualLawSpec::default();
        let a = simulate_exact(&spec, 8, 50, 20, 3).unwrap();
        let b = simulate_exact(&spec, 8, 50, 20, 3).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.n(), 160);
    }
}
