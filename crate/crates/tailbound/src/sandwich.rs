//! Bounding maps for the distance-to-reference process: a max-type or
//! affine lower map `F` and an affine upper map `G` with
//! `F(d(x0,x)) <= d(x0, Psi(x)) <= G(d(x0,x))` pathwise, per environment.
//! Their own stationary tails bracket the chain's tail index.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::core_ifs::{Env, MapFamily, SampleSet, ValueKind, DIVERGENCE_LIMIT};
use crate::cramer::{
    solve_kappa, CramerSolution, FactorLaw, Nonarithmetic, SolveOptions,
};
use crate::error::{Error, Result};
use crate::fixed_points::{
    simulate_lindley_variant, simulate_perpetuity, AffineSpec, Coupling, LindleySpec, Truncation,
};
use crate::numeric::{mean_se, moment_stability, ols, MomentStability};
use crate::rng::EnvStream;
use crate::tail_stats::ks_two_sample_values;

/// Shape of the lower bounding map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LowerForm {
    /// `F(t) = q_lo v (m_lo * t * 1{t > r})`.
    MaxType,
    /// `F(t) = (q_lo + m_lo * t)^+` with possibly signed `q_lo`.
    Affine,
}

/// Realized bound coefficients for one environment.
#[derive(Debug, Clone, Copy)]
pub struct BoundCoeffs {
    pub m_lo: f64,
    pub m_hi: f64,
    pub q_lo: f64,
    pub q_hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub enum Provenance {
    ClosedForm,
    /// inf/sup taken over a finite mesh; sound only on the meshed range.
    NumericMesh { nodes: usize, r_max: f64 },
}

type CoeffFn = Arc<dyn Fn(&Env) -> BoundCoeffs + Send + Sync>;
type ObservableFn = Arc<dyn Fn(&MapFamily, &[f64]) -> f64 + Send + Sync>;

/// The pair `(F, G)` realized per environment, sharing the family's
/// environment stream: the same `theta` drives the chain and its bounds.
#[derive(Clone)]
pub struct SandwichBounds {
    pub model_id: String,
    pub r: f64,
    pub lower_form: LowerForm,
    pub provenance: Provenance,
    coeffs: CoeffFn,
    observable: ObservableFn,
    /// Reference-shift offsets: the realized maps are `(F(t) - lower_offset)^+`
    /// and `G(t) + upper_offset`.
    pub lower_offset: f64,
    pub upper_offset: f64,
}

impl SandwichBounds {
    pub fn new(
        model_id: impl Into<String>,
        r: f64,
        lower_form: LowerForm,
        coeffs: CoeffFn,
    ) -> Self {
        SandwichBounds {
            model_id: model_id.into(),
            r,
            lower_form,
            provenance: Provenance::ClosedForm,
            coeffs,
            observable: Arc::new(|family, x| family.dist_ref(x)),
            lower_offset: 0.0,
            upper_offset: 0.0,
        }
    }

    /// Replace the bounded functional. The default is `d(x0, .)`; models
    /// whose bounds are stated on the raw chain value (scalar chains on
    /// nonnegative states) set `|x|` or `x` itself.
    pub fn with_observable(mut self, observable: ObservableFn) -> Self {
        self.observable = observable;
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn coeffs(&self, env: &Env) -> BoundCoeffs {
        (self.coeffs)(env)
    }

    pub fn observe(&self, family: &MapFamily, x: &[f64]) -> f64 {
        (self.observable)(family, x)
    }

    /// Realized lower map at `t`.
    pub fn lower(&self, c: &BoundCoeffs, t: f64) -> f64 {
        let raw = match self.lower_form {
            LowerForm::MaxType => c.q_lo.max(if t > self.r { c.m_lo * t } else { 0.0 }),
            LowerForm::Affine => c.q_lo + c.m_lo * t,
        };
        (raw - self.lower_offset).max(0.0)
    }

    /// Realized upper map at `t`.
    pub fn upper(&self, c: &BoundCoeffs, t: f64) -> f64 {
        c.q_hi + c.m_hi * t + self.upper_offset
    }

    /// Re-reference the bounds to a point at distance `delta` from the
    /// original one: the lower map drops by `delta` (floored at zero), the
    /// upper map rises by `delta`, Lipschitz parts unchanged.
    pub fn shift_reference(&self, delta: f64) -> Result<SandwichBounds> {
        if !(delta >= 0.0) {
            return Err(Error::InvalidParam("shift delta must be nonnegative".into()));
        }
        let mut shifted = self.clone();
        shifted.lower_offset += delta;
        shifted.upper_offset += delta;
        Ok(shifted)
    }

    /// Negative control: scale the upper Lipschitz factor (e.g. halve it) so
    /// that verification must find violations.
    pub fn corrupt_upper(&self, factor: f64) -> SandwichBounds {
        let inner = Arc::clone(&self.coeffs);
        let mut out = self.clone();
        out.coeffs = Arc::new(move |env| {
            let mut c = inner(env);
            c.m_hi *= factor;
            c
        });
        out
    }

    /// Generic fallback: per-environment inf/sup over a log-spaced mesh of
    /// states. Sound only on the meshed range, and marked as such.
    pub fn numeric_mesh(family: &MapFamily, r: f64, nodes: usize, r_max: f64) -> SandwichBounds {
        let fam = family.clone();
        let dim = family.state_dim;
        let coeffs: CoeffFn = Arc::new(move |env| {
            let mut m_lo = f64::INFINITY;
            let mut m_hi: f64 = 0.0;
            let mut q_lo = f64::INFINITY;
            let mut q_hi: f64 = 0.0;
            let probe = |dist: f64, dir: &[f64]| -> (f64, f64) {
                let x: Vec<f64> = fam
                    .reference_point
                    .iter()
                    .zip(dir)
                    .map(|(x0, d)| x0 + dist * d)
                    .collect();
                (fam.dist_ref(&x), fam.dist_ref(&fam.apply(env, &x)))
            };
            // Directions: +/- e_1 for scalars, a fixed direction set otherwise.
            let mut dirs: Vec<Vec<f64>> = Vec::new();
            for i in 0..dim {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                dirs.push(e.clone());
                e[i] = -1.0;
                dirs.push(e);
            }
            for dir in &dirs {
                // Ball part {d <= r}: inf/sup of d(x0, Psi(x)).
                let ball_nodes = (nodes / 10).max(8);
                for i in 0..=ball_nodes {
                    let dist = r * i as f64 / ball_nodes as f64;
                    let (_, dy) = probe(dist, dir);
                    q_lo = q_lo.min(dy);
                    q_hi = q_hi.max(dy);
                }
                // Outside {d > r}: inf/sup of the ratio.
                let lo = (r.max(1e-9)) * 1.0000001;
                for t in crate::numeric::log_grid(lo, r_max, nodes) {
                    let (dx, dy) = probe(t, dir);
                    if dx > r {
                        m_lo = m_lo.min(dy / dx);
                        m_hi = m_hi.max(dy / dx);
                    }
                }
            }
            BoundCoeffs { m_lo, m_hi, q_lo, q_hi }
        });
        SandwichBounds::new(format!("{}::mesh", family.model_id), r, LowerForm::MaxType, coeffs)
            .with_provenance(Provenance::NumericMesh { nodes, r_max })
    }
}

/// Per-depth violation counts.
#[derive(Debug, Clone, Serialize)]
pub struct DepthStats {
    pub depth: usize,
    pub violations_lower: u64,
    pub violations_upper: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub model_id: String,
    pub n_envs: usize,
    pub n_points: usize,
    pub seed: u64,
    pub slack_tol: f64,
    pub violations_lower: u64,
    pub violations_upper: u64,
    /// Smallest relative margin seen (negative = violation).
    pub worst_slack_lower: f64,
    pub worst_slack_upper: f64,
    pub by_depth: Vec<DepthStats>,
}

impl SandwichReport {
    pub fn total_violations(&self) -> u64 {
        self.violations_lower + self.violations_upper
    }
}

/// Relative slack floor: floating-point noise on two algebraically equal
/// routes stays orders of magnitude above this.
pub const SLACK_TOL: f64 = 1e-9;

/// Depths at which the composed inequality is checked (depth 1 is the raw
/// per-step condition).
pub const VERIFY_DEPTHS: [usize; 3] = [1, 2, 5];

/// Count pathwise violations of the sandwich condition at depth 1 and of
/// its composition at depths 2 and 5.
///
/// `point_sampler` draws test states; `None` uses the family's own domain
/// sampler. The same point set is shared across environments.
pub fn verify_sandwich(
    family: &MapFamily,
    bounds: &SandwichBounds,
    n_envs: usize,
    n_points: usize,
    point_sampler: Option<&(dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync)>,
    seed: u64,
) -> Result<SandwichReport> {
    if n_points == 0 || n_envs == 0 {
        return Err(Error::InvalidParam("n_envs and n_points must be positive".into()));
    }
    let points: Vec<Vec<f64>> = {
        let mut rng = EnvStream::new(seed, 0).rng_at(0);
        (0..n_points)
            .map(|_| match point_sampler {
                Some(s) => s(&mut rng),
                None => family.sample_point(&mut rng),
            })
            .collect()
    };

    let mut by_depth = Vec::new();
    let mut violations_lower = 0u64;
    let mut violations_upper = 0u64;
    let mut worst_lower = f64::INFINITY;
    let mut worst_upper = f64::INFINITY;

    for (di, &depth) in VERIFY_DEPTHS.iter().enumerate() {
        let stats: Vec<(u64, u64, f64, f64)> = (0..n_envs)
            .into_par_iter()
            .map(|i| {
                let stream = EnvStream::new(seed, di as u64 + 1);
                let envs: Vec<Env> = (0..depth)
                    .map(|j| {
                        family.sample_env(&mut stream.rng_at((i * depth + j) as u64 + 1))
                    })
                    .collect();
                let mut vl = 0u64;
                let mut vu = 0u64;
                let mut wl = f64::INFINITY;
                let mut wu = f64::INFINITY;
                for p in &points {
                    let mut x = p.clone();
                    let mut t_lo = bounds.observe(family, &x);
                    let mut t_hi = t_lo;
                    for env in &envs {
                        let c = bounds.coeffs(env);
                        t_lo = bounds.lower(&c, t_lo);
                        t_hi = bounds.upper(&c, t_hi);
                        x = family.apply(env, &x);
                    }
                    let d = bounds.observe(family, &x);
                    if !d.is_finite() || !t_lo.is_finite() || !t_hi.is_finite() {
                        return Err(Error::NonFinite { context: "sandwich evaluation".into() });
                    }
                    let scale_lo = d.abs().max(t_lo.abs()).max(1.0);
                    let scale_hi = d.abs().max(t_hi.abs()).max(1.0);
                    let slack_lo = (d - t_lo) / scale_lo;
                    let slack_hi = (t_hi - d) / scale_hi;
                    wl = wl.min(slack_lo);
                    wu = wu.min(slack_hi);
                    if slack_lo < -SLACK_TOL {
                        vl += 1;
                    }
                    if slack_hi < -SLACK_TOL {
                        vu += 1;
                    }
                }
                Ok((vl, vu, wl, wu))
            })
            .collect::<Result<Vec<_>>>()?;
        let dl: u64 = stats.iter().map(|s| s.0).sum();
        let du: u64 = stats.iter().map(|s| s.1).sum();
        violations_lower += dl;
        violations_upper += du;
        worst_lower = stats.iter().fold(worst_lower, |a, s| a.min(s.2));
        worst_upper = stats.iter().fold(worst_upper, |a, s| a.min(s.3));
        by_depth.push(DepthStats { depth, violations_lower: dl, violations_upper: du });
    }

    Ok(SandwichReport {
        model_id: bounds.model_id.clone(),
        n_envs,
        n_points,
        seed,
        slack_tol: SLACK_TOL,
        violations_lower,
        violations_upper,
        worst_slack_lower: worst_lower,
        worst_slack_upper: worst_upper,
        by_depth,
    })
}

/// Verify the reference-shift inequality: with `x1` as the new target
/// reference and `delta = d(x0, x1)`, the shifted maps satisfy
/// `(F(t) - delta)^+ <= d(x1, Psi(x)) <= G(t) + delta` where `t` is the
/// original observable of `x`. (This is the triangle-inequality form; the
/// bounds keep their original argument.)
pub fn verify_shifted(
    family: &MapFamily,
    bounds: &SandwichBounds,
    x1: &[f64],
    n_envs: usize,
    n_points: usize,
    seed: u64,
) -> Result<SandwichReport> {
    let delta = family.distance(&family.reference_point, x1);
    let shifted = bounds.shift_reference(delta)?;
    let x1 = x1.to_vec();
    let fam = family.clone();
    // Bound arguments keep the original observable; the bounded quantity is
    // the distance to the new reference.
    let inner_obs: ObservableFn = Arc::clone(&bounds.observable);

    let points: Vec<Vec<f64>> = {
        let mut rng = EnvStream::new(seed, 0).rng_at(0);
        (0..n_points).map(|_| fam.sample_point(&mut rng)).collect()
    };
    let stats: Vec<(u64, u64, f64, f64)> = (0..n_envs)
        .into_par_iter()
        .map(|i| {
            let stream = EnvStream::new(seed, 1);
            let env = fam.sample_env(&mut stream.rng_at(i as u64 + 1));
            let c = shifted.coeffs(&env);
            let mut vl = 0u64;
            let mut vu = 0u64;
            let mut wl = f64::INFINITY;
            let mut wu = f64::INFINITY;
            for p in &points {
                let t = inner_obs(&fam, p);
                let y = fam.apply(&env, p);
                let d1 = fam.distance(&x1, &y);
                let lo = shifted.lower(&c, t);
                let hi = shifted.upper(&c, t);
                let slack_lo = (d1 - lo) / d1.abs().max(lo.abs()).max(1.0);
                let slack_hi = (hi - d1) / d1.abs().max(hi.abs()).max(1.0);
                wl = wl.min(slack_lo);
                wu = wu.min(slack_hi);
                if slack_lo < -SLACK_TOL {
                    vl += 1;
                }
                if slack_hi < -SLACK_TOL {
                    vu += 1;
                }
            }
            (vl, vu, wl, wu)
        })
        .collect();

    Ok(SandwichReport {
        model_id: format!("{}::shifted", bounds.model_id),
        n_envs,
        n_points,
        seed,
        slack_tol: SLACK_TOL,
        violations_lower: stats.iter().map(|s| s.0).sum(),
        violations_upper: stats.iter().map(|s| s.1).sum(),
        worst_slack_lower: stats.iter().fold(f64::INFINITY, |a, s| a.min(s.2)),
        worst_slack_upper: stats.iter().fold(f64::INFINITY, |a, s| a.min(s.3)),
        by_depth: vec![DepthStats {
            depth: 1,
            violations_lower: stats.iter().map(|s| s.0).sum(),
            violations_upper: stats.iter().map(|s| s.1).sum(),
        }],
    })
}

/// Stationary draws of the bounded observable via backward iteration.
pub fn sample_observable(
    family: &MapFamily,
    bounds: &SandwichBounds,
    n_samples: usize,
    depth: usize,
    seed: u64,
) -> Result<SampleSet> {
    let start = family.reference_point.clone();
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let stream = EnvStream::new(seed, i as u64 + 1);
            let mut x = start.clone();
            for k in (1..=depth).rev() {
                let env = family.sample_env(&mut stream.rng_at(k as u64));
                x = family.apply(&env, &x);
                if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                    return Err(Error::Diverged { step: depth - k + 1, replicate: i });
                }
            }
            Ok(bounds.observe(family, &x))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet::from_values(
        family.model_id.clone(),
        seed,
        format!("observable_backward(depth={depth})"),
        ValueKind::MetricDistance,
        values,
    ))
}

/// Stationary draws of the lower and upper bound chains, via the matching
/// fixed-point simulators driven by the family's own environment draws.
pub fn sample_bound_chains(
    family: &MapFamily,
    bounds: &SandwichBounds,
    n_samples: usize,
    depth: usize,
    seed: u64,
) -> Result<(SampleSet, SampleSet)> {
    if bounds.lower_offset != 0.0 || bounds.upper_offset != 0.0 {
        return Err(Error::InvalidParam("bound chains require unshifted bounds".into()));
    }
    let fam = family.clone();
    let b = bounds.clone();
    let lower_pair = Coupling::Joint(Arc::new(move |rng: &mut ChaCha8Rng| {
        let c = b.coeffs(&fam.sample_env(rng));
        (c.m_lo, c.q_lo)
    }));
    let fam = family.clone();
    let b = bounds.clone();
    let upper_pair = Coupling::Joint(Arc::new(move |rng: &mut ChaCha8Rng| {
        let c = b.coeffs(&fam.sample_env(rng));
        (c.m_hi, c.q_hi)
    }));
    let fam = family.clone();
    let b = bounds.clone();
    let m_lo_law = FactorLaw::custom(
        Arc::new(move |rng| b.coeffs(&fam.sample_env(rng)).m_lo),
        Nonarithmetic::Unknown,
    );
    let fam = family.clone();
    let b = bounds.clone();
    let m_hi_law = FactorLaw::custom(
        Arc::new(move |rng| b.coeffs(&fam.sample_env(rng)).m_hi),
        Nonarithmetic::Unknown,
    );

    let lower_samples = match bounds.lower_form {
        LowerForm::MaxType => {
            let spec = LindleySpec {
                r: bounds.r,
                m_law: m_lo_law,
                q_law: crate::laws::ScalarLaw::Constant(0.0), // unused under Joint
                coupling: lower_pair,
            };
            simulate_lindley_variant(&spec, n_samples, depth, seed ^ 0x0f0f)?
        }
        LowerForm::Affine => {
            let spec = AffineSpec {
                m_law: m_lo_law,
                q_law: crate::laws::ScalarLaw::Constant(0.0),
                coupling: lower_pair,
            };
            let mut set =
                simulate_perpetuity(&spec, n_samples, Truncation::default(), seed ^ 0x0f0f)?;
            // distances are nonnegative; the affine lower chain is a lower
            // bound of one, so clip at zero
            for v in &mut set.values {
                *v = v.max(0.0);
            }
            set
        }
    };
    let upper_spec = AffineSpec {
        m_law: m_hi_law,
        q_law: crate::laws::ScalarLaw::Constant(0.0),
        coupling: upper_pair,
    };
    let upper_samples =
        simulate_perpetuity(&upper_spec, n_samples, Truncation::default(), seed ^ 0xf0f0)?;
    Ok((lower_samples, upper_samples))
}

/// One row of the stochastic-ordering comparison.
#[derive(Debug, Clone, Serialize)]
pub struct OrderingRow {
    pub t: f64,
    pub survival_lower_chain: f64,
    pub survival_model: f64,
    pub survival_upper_chain: f64,
    pub pooled_se: f64,
    pub ordered: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderingReport {
    pub model_id: String,
    pub rows: Vec<OrderingRow>,
    pub all_ordered: bool,
    pub n_samples: usize,
    pub seed: u64,
}

/// Empirical check of the survival ordering
/// `P(Y > t) <= P(observable > t) <= P(Z > t)` on a quantile grid, within
/// three pooled standard errors.
pub fn ordering_check(
    family: &MapFamily,
    bounds: &SandwichBounds,
    n_samples: usize,
    depth: usize,
    grid_size: usize,
    seed: u64,
) -> Result<OrderingReport> {
    let model = sample_observable(family, bounds, n_samples, depth, seed)?;
    let (lower, upper) = sample_bound_chains(family, bounds, n_samples, depth, seed)?;

    let sorted = model.sorted();
    let n = sorted.len();
    let q = |p: f64| sorted[((n as f64 * p) as usize).min(n - 1)];
    let (t_lo, t_hi) = (q(0.5).max(1e-9), q(0.999));
    if !(t_hi > t_lo) {
        return Err(Error::TailEstimation("degenerate observable grid".into()));
    }
    let grid = crate::numeric::log_grid(t_lo, t_hi, grid_size.max(2));

    let mut rows = Vec::with_capacity(grid.len());
    for &t in &grid {
        let sf = lower.survival(t);
        let sm = model.survival(t);
        let sg = upper.survival(t);
        let se = |p: f64| (p * (1.0 - p) / n_samples as f64).sqrt();
        let pooled = (se(sf).powi(2) + se(sm).powi(2)).max(se(sm).powi(2) + se(sg).powi(2)).sqrt();
        let ordered = sf <= sm + 3.0 * pooled && sm <= sg + 3.0 * pooled;
        rows.push(OrderingRow {
            t,
            survival_lower_chain: sf,
            survival_model: sm,
            survival_upper_chain: sg,
            pooled_se: pooled,
            ordered,
        });
    }
    let all_ordered = rows.iter().all(|r| r.ordered);
    Ok(OrderingReport { model_id: bounds.model_id.clone(), rows, all_ordered, n_samples, seed })
}

/// Bracket data at one threshold.
#[derive(Debug, Clone, Serialize)]
pub struct RBracket {
    pub r: f64,
    /// Cramér root for the lower factor `m_lo(r)` (upper end of the bracket).
    pub alpha: Option<f64>,
    pub alpha_error: Option<String>,
    /// Cramér root for the upper factor `m_hi(r)` (lower end of the bracket).
    pub beta: Option<f64>,
    pub beta_error: Option<String>,
    /// `P(q_lo(r) > r)` estimate (moment-mass condition for the lower chain).
    pub q_lo_mass: f64,
    pub q_lo_moment: Option<MomentStability>,
    pub q_hi_positive_mass: f64,
    pub q_hi_moment: Option<MomentStability>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexBracket {
    pub model_id: String,
    pub r_grid: Vec<f64>,
    pub per_r: Vec<RBracket>,
    /// Monotone-extrapolated limits from the last three valid thresholds.
    pub alpha_limit: Option<f64>,
    pub beta_limit: Option<f64>,
    /// Set when the two limits agree within `point_tol`.
    pub point_index: Option<f64>,
    pub point_tol: f64,
    /// Uniform-integrability diagnostic: two-sample KS distance between the
    /// lower and upper factor draws at the largest threshold (small distance
    /// suggests a single limiting factor law; a diagnostic, not a proof).
    pub factor_ks_distance: Option<f64>,
    pub factor_laws_converge: Option<bool>,
    pub nonarithmetic: Nonarithmetic,
}

#[derive(Clone)]
pub struct BracketConfig {
    pub solve: SolveOptions,
    /// Monte Carlo size for coefficient-law estimates and moment checks.
    pub mc_n: usize,
    pub seed: u64,
    pub point_tol: f64,
}

impl Default for BracketConfig {
    fn default() -> Self {
        BracketConfig {
            solve: SolveOptions::default(),
            mc_n: 100_000,
            seed: 1,
            point_tol: 0.02,
        }
    }
}

/// Per-threshold Cramér roots for the lower/upper factor laws, with
/// moment-condition estimates and monotone-extrapolated limits.
///
/// `laws_at` supplies closed-form factor laws per threshold when the model
/// has them; otherwise empirical laws are built from the coefficient
/// sampler (provenance is then only as sound as the mesh/sampler).
pub fn index_bracket(
    family: &MapFamily,
    bounds_at: &dyn Fn(f64) -> Result<SandwichBounds>,
    laws_at: Option<&dyn Fn(f64) -> Result<(FactorLaw, FactorLaw)>>,
    r_grid: &[f64],
    cfg: &BracketConfig,
) -> Result<IndexBracket> {
    if r_grid.is_empty() {
        return Err(Error::InvalidParam("empty r grid".into()));
    }
    let mut per_r = Vec::with_capacity(r_grid.len());
    let mut nonarith = Nonarithmetic::Declared;
    let mut last_factors: Option<(Vec<f64>, Vec<f64>)> = None;

    for (ri, &r) in r_grid.iter().enumerate() {
        let bounds = bounds_at(r)?;
        // Coefficient draws at this threshold.
        let mut rng = EnvStream::new(cfg.seed, ri as u64 + 1).rng_at(0);
        let mut m_lo = Vec::with_capacity(cfg.mc_n);
        let mut m_hi = Vec::with_capacity(cfg.mc_n);
        let mut q_lo = Vec::with_capacity(cfg.mc_n);
        let mut q_hi = Vec::with_capacity(cfg.mc_n);
        for _ in 0..cfg.mc_n {
            let env = family.sample_env(&mut rng);
            let c = bounds.coeffs(&env);
            m_lo.push(c.m_lo);
            m_hi.push(c.m_hi);
            q_lo.push(c.q_lo);
            q_hi.push(c.q_hi);
        }

        let (law_lo, law_hi) = match laws_at {
            Some(f) => f(r)?,
            None => (FactorLaw::empirical(m_lo.clone())?, FactorLaw::empirical(m_hi.clone())?),
        };
        if law_lo.nonarithmetic != Nonarithmetic::Declared
            || law_hi.nonarithmetic != Nonarithmetic::Declared
        {
            nonarith = Nonarithmetic::Unknown;
        }

        let solve_one = |law: &FactorLaw| -> (Option<f64>, Option<String>, Option<f64>) {
            match solve_kappa(law, cfg.solve) {
                Ok(sol) => (Some(sol.kappa), None, Some(sol.kappa)),
                Err(e) => (None, Some(e.to_string()), None),
            }
        };
        let (alpha, alpha_error, alpha_k) = solve_one(&law_lo);
        let (beta, beta_error, beta_k) = solve_one(&law_hi);

        let q_lo_mass = q_lo.iter().filter(|&&q| q > r).count() as f64 / q_lo.len() as f64;
        let q_hi_pos = q_hi.iter().filter(|&&q| q > 0.0).count() as f64 / q_hi.len() as f64;
        let q_lo_moment = alpha_k.map(|k| {
            let abs: Vec<f64> = q_lo.iter().map(|q| q.abs()).collect();
            moment_stability(&abs, k)
        });
        let q_hi_moment = beta_k.map(|k| moment_stability(&q_hi, k));

        per_r.push(RBracket {
            r,
            alpha,
            alpha_error,
            beta,
            beta_error,
            q_lo_mass,
            q_lo_moment,
            q_hi_positive_mass: q_hi_pos,
            q_hi_moment,
        });
        if ri == r_grid.len() - 1 {
            last_factors = Some((m_lo, m_hi));
        }
    }

    let alpha_limit = extrapolate_monotone(
        &per_r.iter().filter_map(|b| b.alpha.map(|a| (b.r, a))).collect::<Vec<_>>(),
        false,
    );
    let beta_limit = extrapolate_monotone(
        &per_r.iter().filter_map(|b| b.beta.map(|a| (b.r, a))).collect::<Vec<_>>(),
        true,
    );
    let point_index = match (alpha_limit, beta_limit) {
        (Some(a), Some(b)) if (a - b).abs() <= cfg.point_tol => Some(0.5 * (a + b)),
        _ => None,
    };
    let (ks, converge) = match &last_factors {
        Some((lo, hi)) => {
            let ks = ks_two_sample_values(lo, hi)?.statistic;
            (Some(ks), Some(ks < 0.05))
        }
        None => (None, None),
    };

    Ok(IndexBracket {
        model_id: family.model_id.clone(),
        r_grid: r_grid.to_vec(),
        per_r,
        alpha_limit,
        beta_limit,
        point_index,
        point_tol: cfg.point_tol,
        factor_ks_distance: ks,
        factor_laws_converge: converge,
        nonarithmetic: nonarith,
    })
}

/// Fit `limit + c / r` through the last three points and clamp to keep the
/// extrapolation on the monotone side of the final value.
fn extrapolate_monotone(points: &[(f64, f64)], nondecreasing: bool) -> Option<f64> {
    let last = points.last()?.1;
    if points.len() < 3 {
        return Some(last);
    }
    let tail = &points[points.len() - 3..];
    let xs: Vec<f64> = tail.iter().map(|p| 1.0 / p.0).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1).collect();
    let fit = ols(&xs, &ys)?;
    let limit = fit.intercept;
    Some(if nondecreasing { limit.max(last) } else { limit.min(last) })
}

/// Premise record of the exact-index certificate.
#[derive(Debug, Clone, Serialize)]
pub struct CertificatePremise {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactIndexCertificate {
    pub model_id: String,
    pub kappa: Option<f64>,
    pub solution: Option<CramerSolution>,
    pub premises: Vec<CertificatePremise>,
    pub granted: bool,
}

/// Inputs for the exact-index certificate: a shared multiplicative factor
/// `M` with lower/upper additive parts `(R_lo, R_hi)`, where
/// `F(t) = R_lo v (M t 1{t>r})` (or `R_lo + M t` in the affine variant) and
/// `G(t) = R_hi + M t`.
pub struct Theorem3Inputs {
    pub m_law: FactorLaw,
    pub r: f64,
    pub lower_form: LowerForm,
    /// Joint draw of `(m, r_lo, r_hi)` under one environment.
    pub coeff_sampler: Arc<dyn Fn(&mut ChaCha8Rng) -> (f64, f64, f64) + Send + Sync>,
}

/// Check the premises for an exact tail index and emit a certificate or the
/// list of failed premises. Failed premises are data, not errors.
pub fn exact_index_certificate(
    model_id: &str,
    inputs: &Theorem3Inputs,
    n_mc: usize,
    seed: u64,
) -> ExactIndexCertificate {
    let mut premises = Vec::new();

    let solution = match solve_kappa(&inputs.m_law, SolveOptions::default()) {
        Ok(sol) => {
            premises.push(CertificatePremise {
                name: "cramer_root".into(),
                passed: true,
                detail: format!("kappa = {:.6}, mu_kappa = {:.6}", sol.kappa, sol.mu_kappa),
            });
            Some(sol)
        }
        Err(e) => {
            premises.push(CertificatePremise {
                name: "cramer_root".into(),
                passed: false,
                detail: e.to_string(),
            });
            None
        }
    };

    premises.push(CertificatePremise {
        name: "nonarithmetic_declared".into(),
        passed: inputs.m_law.nonarithmetic == Nonarithmetic::Declared,
        detail: format!("{:?}", inputs.m_law.nonarithmetic),
    });

    let mut rng = EnvStream::new(seed, 0).rng_at(0);
    let draws: Vec<(f64, f64, f64)> = (0..n_mc).map(|_| (inputs.coeff_sampler)(&mut rng)).collect();

    let lower_mass =
        draws.iter().filter(|d| d.1 > inputs.r).count() as f64 / draws.len() as f64;
    premises.push(CertificatePremise {
        name: "lower_mass".into(),
        passed: lower_mass > 0.0,
        detail: format!("P(R_lo > r) ~= {lower_mass:.4}"),
    });

    if inputs.lower_form == LowerForm::Affine {
        // Signed affine lower route: no invariant half-line, via
        // P(M <= 1, R_lo > 0) > 0 and P(M >= 1, R_lo > 0) > 0.
        let p1 = draws.iter().filter(|d| d.0 <= 1.0 && d.1 > 0.0).count() as f64
            / draws.len() as f64;
        let p2 = draws.iter().filter(|d| d.0 >= 1.0 && d.1 > 0.0).count() as f64
            / draws.len() as f64;
        premises.push(CertificatePremise {
            name: "no_invariant_halfline".into(),
            passed: p1 > 0.0 && p2 > 0.0,
            detail: format!("P(M<=1, R_lo>0) ~= {p1:.4}, P(M>=1, R_lo>0) ~= {p2:.4}"),
        });
    }

    let upper_mass = draws.iter().filter(|d| d.2 > 0.0).count() as f64 / draws.len() as f64;
    premises.push(CertificatePremise {
        name: "upper_mass".into(),
        passed: upper_mass > 0.0,
        detail: format!("P(R_hi > 0) ~= {upper_mass:.4}"),
    });

    if let Some(sol) = &solution {
        let r_hi: Vec<f64> = draws.iter().map(|d| d.2).collect();
        let stab = moment_stability(&r_hi, sol.kappa);
        premises.push(CertificatePremise {
            name: "upper_moment".into(),
            passed: stab.stable,
            detail: format!(
                "E R_hi^kappa running means {:?} (max rel step {:.3})",
                stab.running, stab.max_rel_step
            ),
        });
    }

    let granted = premises.iter().all(|p| p.passed);
    ExactIndexCertificate {
        model_id: model_id.into(),
        kappa: solution.as_ref().map(|s| s.kappa),
        solution,
        premises,
        granted,
    }
}

/// Consistency of the model's estimated tail index with the bracket, within
/// slack (desk-scale Monte Carlo).
pub fn bracket_contains(bracket: &IndexBracket, index: f64, slack: f64) -> bool {
    match (bracket.alpha_limit, bracket.beta_limit) {
        (Some(a), Some(b)) => index >= b - slack && index <= a + slack,
        _ => false,
    }
}

/// Pooled mean/se convenience for report assembly.
pub fn pooled(values: &[f64]) -> (f64, f64) {
    mean_se(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Random affine family on nonnegative reals with exact bounds:
    /// `Psi(x) = M x + Q`, `d(0, Psi(x)) = M x + Q` exactly.
    fn affine_family() -> (MapFamily, SandwichBounds) {
        let family = MapFamily::scalar(
            "affine",
            0.0,
            Arc::new(|rng: &mut ChaCha8Rng| {
                vec![rng.random_range(0.2..1.8), rng.random_range(0.0..2.0)]
            }),
            |env, x| env[0] * x + env[1],
            Arc::new(|env: &Env| env[0]),
            |rng| rng.random_range(0.0..100.0),
        );
        let bounds = SandwichBounds::new(
            "affine",
            0.0,
            LowerForm::Affine,
            Arc::new(|env: &Env| BoundCoeffs {
                m_lo: env[0],
                m_hi: env[0],
                q_lo: env[1],
                q_hi: env[1],
            }),
        );
        (family, bounds)
    }

    #[test]
    fn exact_bounds_zero_violations_zero_slack() {
        let (family, bounds) = affine_family();
        let rep = verify_sandwich(&family, &bounds, 500, 50, None, 1).unwrap();
        assert_eq!(rep.total_violations(), 0);
        assert_eq!(rep.worst_slack_lower, 0.0);
        assert_eq!(rep.worst_slack_upper, 0.0);
    }

    #[test]
    fn corrupted_bounds_detected() {
        let (family, bounds) = affine_family();
        let bad = bounds.corrupt_upper(0.5);
        let rep = verify_sandwich(&family, &bad, 200, 50, None, 1).unwrap();
        assert!(rep.violations_upper > 0, "negative control must find violations");
    }

    #[test]
    fn zero_points_rejected() {
        let (family, bounds) = affine_family();
        assert!(verify_sandwich(&family, &bounds, 10, 0, None, 1).is_err());
    }

    #[test]
    fn shift_zero_is_identity() {
        let (_, bounds) = affine_family();
        let shifted = bounds.shift_reference(0.0).unwrap();
        let env = vec![0.7, 1.3];
        let c = bounds.coeffs(&env);
        for t in [0.0, 0.5, 2.0, 10.0] {
            assert_eq!(bounds.lower(&c, t), shifted.lower(&shifted.coeffs(&env), t));
            assert_eq!(bounds.upper(&c, t), shifted.upper(&shifted.coeffs(&env), t));
        }
    }

    #[test]
    fn shift_moves_additive_parts() {
        let (_, bounds) = affine_family();
        let shifted = bounds.shift_reference(2.0).unwrap();
        let env = vec![0.7, 1.3];
        let c = shifted.coeffs(&env);
        // upper: G(t) + 2
        assert_eq!(shifted.upper(&c, 5.0), 1.3 + 0.7 * 5.0 + 2.0);
        // lower: (F(t) - 2)^+
        assert_eq!(shifted.lower(&c, 5.0), (1.3f64 + 0.7 * 5.0 - 2.0).max(0.0));
        assert_eq!(shifted.lower(&c, 0.0), 0.0);
    }

    #[test]
    fn shifted_verification_passes() {
        let (family, bounds) = affine_family();
        let rep = verify_shifted(&family, &bounds, &[2.0], 300, 40, 3).unwrap();
        assert_eq!(rep.total_violations(), 0, "worst {}", rep.worst_slack_lower);
    }

    #[test]
    fn numeric_mesh_brackets_affine() {
        let (family, _) = affine_family();
        let mesh = SandwichBounds::numeric_mesh(&family, 1.0, 200, 1e4);
        // Mesh coefficients must bracket the exact ones for each env.
        let mut rng = EnvStream::new(2, 0).rng_at(0);
        for _ in 0..20 {
            let env = family.sample_env(&mut rng);
            let c = mesh.coeffs(&env);
            assert!(c.m_lo <= env[0] + 1e-9 && env[0] <= c.m_hi + 1e-9);
            assert!(c.q_lo <= env[1] + 1e-9 && c.q_hi + 1e-9 >= env[1]);
        }
        matches!(mesh.provenance, Provenance::NumericMesh { .. });
    }

    #[test]
    fn ordering_affine_chains() {
        let (family, bounds) = affine_family();
        // E log M for U(0.2, 1.8): negative, so everything is contractive.
        let rep = ordering_check(&family, &bounds, 20_000, 100, 10, 5).unwrap();
        assert!(rep.all_ordered);
        // with exact bounds the three survival curves coincide up to noise
        for row in &rep.rows {
            assert!((row.survival_lower_chain - row.survival_upper_chain).abs() < 0.02);
        }
    }

    #[test]
    fn bracket_identical_laws_collapse() {
        let (family, bounds_proto) = affine_family();
        let bounds = bounds_proto.clone();
        let law = FactorLaw::custom(
            {
                let fam = family.clone();
                let b = bounds.clone();
                Arc::new(move |rng: &mut ChaCha8Rng| b.coeffs(&fam.sample_env(rng)).m_lo)
            },
            Nonarithmetic::Unknown,
        );
        let _ = law;
        let bracket = index_bracket(
            &family,
            &|r| {
                let mut b = bounds_proto.clone();
                b.r = r;
                Ok(b)
            },
            None,
            &[1.0, 2.0, 4.0],
            &BracketConfig { mc_n: 60_000, seed: 9, ..Default::default() },
        )
        .unwrap();
        // Lower and upper factor laws coincide, so alpha(r) = beta(r) and the
        // point index is reported.
        assert!(bracket.point_index.is_some(), "bracket: {bracket:?}");
        assert_eq!(bracket.factor_laws_converge, Some(true));
        for b in &bracket.per_r {
            let (a, be) = (b.alpha.unwrap(), b.beta.unwrap());
            assert!((a - be).abs() < 1e-6);
        }
    }

    #[test]
    fn bracket_flags_solver_failure_per_threshold() {
        // Lower factor <= 1 almost surely: alpha(r) has no Cramér root; the
        // threshold is flagged and the bracket still carries beta(r).
        let (family, _) = affine_family();
        let degenerate = SandwichBounds::new(
            "degenerate_lower",
            0.0,
            LowerForm::MaxType,
            Arc::new(|env: &Env| BoundCoeffs {
                m_lo: 0.5,
                m_hi: env[0],
                q_lo: 0.1,
                q_hi: env[1],
            }),
        );
        let bracket = index_bracket(
            &family,
            &|r| {
                let mut b = degenerate.clone();
                b.r = r;
                Ok(b)
            },
            None,
            &[1.0, 2.0],
            &BracketConfig { mc_n: 5_000, seed: 5, ..Default::default() },
        )
        .unwrap();
        for b in &bracket.per_r {
            assert!(b.alpha.is_none());
            assert!(b.alpha_error.as_deref().unwrap_or("").contains("no Cramér index"));
            assert!(b.beta.is_some(), "upper root still solvable");
        }
        assert!(bracket.alpha_limit.is_none());
        assert!(bracket.point_index.is_none());
    }

    #[test]
    fn certificate_positive_and_negative() {
        // Shared M two-point with kappa = 1, R_lo = R_hi = const 1.
        let m = FactorLaw::two_point(0.5, 3.0, 0.8, Nonarithmetic::Declared).unwrap();
        let m2 = m.clone();
        let inputs = Theorem3Inputs {
            m_law: m,
            r: 0.0,
            lower_form: LowerForm::MaxType,
            coeff_sampler: Arc::new(move |rng| {
                let mv = m2.sample(rng);
                (mv, 1.0, 1.0)
            }),
        };
        let cert = exact_index_certificate("toy", &inputs, 10_000, 1);
        assert!(cert.granted, "premises: {:?}", cert.premises);
        assert!((cert.kappa.unwrap() - 1.0).abs() < 1e-8);

        // R_lo = 0: the lower mass condition fails and the certificate
        // declines.
        let m = FactorLaw::two_point(0.5, 3.0, 0.8, Nonarithmetic::Declared).unwrap();
        let m2 = m.clone();
        let inputs = Theorem3Inputs {
            m_law: m,
            r: 0.0,
            lower_form: LowerForm::MaxType,
            coeff_sampler: Arc::new(move |rng| {
                let mv = m2.sample(rng);
                (mv, 0.0, 1.0)
            }),
        };
        let cert = exact_index_certificate("toy", &inputs, 10_000, 1);
        assert!(!cert.granted);
        assert!(cert
            .premises
            .iter()
            .any(|p| p.name == "lower_mass" && !p.passed));
    }
}
