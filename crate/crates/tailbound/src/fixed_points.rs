//! Exact simulators for the two canonical bounding fixed points: random
//! affine recursions (perpetuities) solving `X =d= MX + Q`, and the
//! thresholded max-type recursion `X =d= Q v (M X 1{X > r})`.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::core_ifs::{SampleSet, ValueKind, DIVERGENCE_LIMIT};
use crate::cramer::FactorLaw;
use crate::error::{Error, Result};
use crate::laws::ScalarLaw;
use crate::numeric::mean_se;
use crate::rng::EnvStream;

/// Joint law of the pair `(M, Q)`.
#[derive(Clone)]
pub enum Coupling {
    Independent,
    Joint(Arc<dyn Fn(&mut ChaCha8Rng) -> (f64, f64) + Send + Sync>),
}

/// Random affine recursion `x -> M x + Q` (`Q` may be signed).
#[derive(Clone)]
pub struct AffineSpec {
    pub m_law: FactorLaw,
    pub q_law: ScalarLaw,
    pub coupling: Coupling,
}

impl AffineSpec {
    pub fn independent(m_law: FactorLaw, q_law: ScalarLaw) -> Self {
        AffineSpec { m_law, q_law, coupling: Coupling::Independent }
    }

    pub fn sample_mq(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        match &self.coupling {
            Coupling::Independent => (self.m_law.sample(rng), self.q_law.sample(rng)),
            Coupling::Joint(s) => s(rng),
        }
    }

    /// `E log M`, closed form if available else Monte Carlo.
    pub fn mean_log_m(&self, seed: u64) -> f64 {
        self.m_law.mean_log_exact().unwrap_or_else(|| {
            let draws = self.m_law.draw(20_000, seed ^ 0xa5a5_a5a5);
            draws
                .iter()
                .map(|&m| if m > 0.0 { m.ln() } else { f64::MIN_POSITIVE.ln() })
                .sum::<f64>()
                / draws.len() as f64
        })
    }
}

/// Thresholded max-type recursion `x -> Q v (M x 1{x > r})` on nonnegative
/// states with nonnegative `(M, Q)`.
#[derive(Clone)]
pub struct LindleySpec {
    pub r: f64,
    pub m_law: FactorLaw,
    pub q_law: ScalarLaw,
    pub coupling: Coupling,
}

impl LindleySpec {
    pub fn independent(r: f64, m_law: FactorLaw, q_law: ScalarLaw) -> Result<Self> {
        if r < 0.0 {
            return Err(Error::InvalidParam("threshold r must be nonnegative".into()));
        }
        Ok(LindleySpec { r, m_law, q_law, coupling: Coupling::Independent })
    }

    pub fn sample_mq(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        match &self.coupling {
            Coupling::Independent => (self.m_law.sample(rng), self.q_law.sample(rng)),
            Coupling::Joint(s) => s(rng),
        }
    }

    fn affine_view(&self) -> AffineSpec {
        AffineSpec {
            m_law: self.m_law.clone(),
            q_law: self.q_law.clone(),
            coupling: self.coupling.clone(),
        }
    }
}

/// Series truncation control for `simulate_perpetuity`.
#[derive(Debug, Clone, Copy)]
pub struct Truncation {
    pub max_terms: usize,
    /// Relative cutoff: stop once `|Pi_n| < eps * running scale`.
    pub eps: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        // Truncation error far below tail-estimation noise at these sizes.
        Truncation { max_terms: 10_000, eps: 1e-12 }
    }
}

/// Sample the perpetuity `X = sum_n Pi_{n-1} Q_n` by direct series
/// summation, one independent environment stream per replicate.
pub fn simulate_perpetuity(
    spec: &AffineSpec,
    n_samples: usize,
    trunc: Truncation,
    seed: u64,
) -> Result<SampleSet> {
    let mean_log = spec.mean_log_m(seed);
    if !(mean_log < 0.0) {
        return Err(Error::NotMeanDominated { mean_log });
    }
    let results: Vec<(f64, bool)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = EnvStream::new(seed, i as u64 + 1).rng_at(0);
            let mut x = 0.0f64;
            let mut pi = 1.0f64;
            let mut scale = 1.0f64;
            let mut hit_cap = true;
            for step in 0..trunc.max_terms {
                let (m, q) = spec.sample_mq(&mut rng);
                x += pi * q;
                if !x.is_finite() || x.abs() > DIVERGENCE_LIMIT {
                    return Err(Error::Diverged { step, replicate: i });
                }
                scale = scale.max(x.abs());
                pi *= m;
                if pi.abs() < trunc.eps * scale {
                    hit_cap = false;
                    break;
                }
            }
            Ok((x, hit_cap))
        })
        .collect::<Result<Vec<_>>>()?;

    let capped = results.iter().filter(|r| r.1).count();
    let mut set = SampleSet::from_values(
        "perpetuity",
        seed,
        format!("perpetuity(eps={:e},max_terms={})", trunc.eps, trunc.max_terms),
        ValueKind::RawState,
        results.into_iter().map(|r| r.0).collect(),
    );
    if capped > 0 {
        set.warnings.push(format!("{capped} replicates truncated at max_terms"));
    }
    Ok(set)
}

/// Sample the stationary law of the thresholded max-type recursion by
/// backward iteration of `F(t) = Q v (M t 1{t > r})` to the given depth.
/// (The explicit indicator series of the solution has the same law; it is
/// kept as a test oracle only, having more numerical branches.)
pub fn simulate_lindley_variant(
    spec: &LindleySpec,
    n_samples: usize,
    depth: usize,
    seed: u64,
) -> Result<SampleSet> {
    let mean_log = spec.affine_view().mean_log_m(seed);
    if !(mean_log < 0.0) {
        return Err(Error::NotMeanDominated { mean_log });
    }
    let r = spec.r;
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let stream = EnvStream::new(seed, i as u64 + 1);
            let mut t = 0.0f64;
            for k in (1..=depth).rev() {
                let (m, q) = spec.sample_mq(&mut stream.rng_at(k as u64));
                t = q.max(if t > r { m * t } else { 0.0 });
                if !t.is_finite() || t > DIVERGENCE_LIMIT {
                    return Err(Error::Diverged { step: depth - k + 1, replicate: i });
                }
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleSet::from_values(
        "lindley_variant",
        seed,
        format!("lindley_backward(depth={depth},r={r})"),
        ValueKind::RawState,
        values,
    ))
}

/// Nondegeneracy probes for the affine recursion, estimated on a grid of
/// candidate fixed points `c`. The for-all-c conditions are necessarily
/// incomplete on a grid; only the grid evidence is reported.
#[derive(Debug, Clone, Serialize)]
pub struct DegeneracyReport {
    pub c_grid: Vec<f64>,
    /// `P(Mc + Q = c)` per grid point (equality within 1e-12 relative).
    pub p_fixed: Vec<f64>,
    /// `P(Mc + Q > c)` per grid point.
    pub p_above: Vec<f64>,
    /// `P(M <= 1, Q > 0)`.
    pub p_m_le1_q_pos: f64,
    /// `P(M >= 1, Q > 0)`.
    pub p_m_ge1_q_pos: f64,
    /// Some grid point is almost surely fixed.
    pub degenerate_point: Option<f64>,
    /// Some grid point saw no exceedance: an invariant half-line below it is
    /// possible (grid evidence only, not a verdict).
    pub invariant_halfline_possible: Option<f64>,
    /// `P(M<=1, Q>0) > 0` and `P(M>=1, Q>0) > 0`.
    pub sufficient_condition_holds: bool,
    pub n: usize,
    pub seed: u64,
}

pub fn check_degeneracy(
    spec: &AffineSpec,
    c_grid: &[f64],
    n: usize,
    seed: u64,
) -> DegeneracyReport {
    let mut rng = EnvStream::new(seed, 0).rng_at(0);
    let draws: Vec<(f64, f64)> = (0..n).map(|_| spec.sample_mq(&mut rng)).collect();

    let mut p_fixed = Vec::with_capacity(c_grid.len());
    let mut p_above = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let tol = 1e-12 * (1.0 + c.abs());
        let mut fixed = 0usize;
        let mut above = 0usize;
        for &(m, q) in &draws {
            let v = m * c + q;
            if (v - c).abs() <= tol {
                fixed += 1;
            }
            if v > c {
                above += 1;
            }
        }
        p_fixed.push(fixed as f64 / n as f64);
        p_above.push(above as f64 / n as f64);
    }
    let p_le = draws.iter().filter(|&&(m, q)| m <= 1.0 && q > 0.0).count() as f64 / n as f64;
    let p_ge = draws.iter().filter(|&&(m, q)| m >= 1.0 && q > 0.0).count() as f64 / n as f64;

    let degenerate_point = c_grid
        .iter()
        .zip(&p_fixed)
        .find(|(_, &p)| p == 1.0)
        .map(|(&c, _)| c);
    let invariant_halfline_possible = c_grid
        .iter()
        .zip(&p_above)
        .find(|(_, &p)| p == 0.0)
        .map(|(&c, _)| c);

    DegeneracyReport {
        c_grid: c_grid.to_vec(),
        p_fixed,
        p_above,
        p_m_le1_q_pos: p_le,
        p_m_ge1_q_pos: p_ge,
        degenerate_point,
        invariant_halfline_possible,
        sufficient_condition_holds: p_le > 0.0 && p_ge > 0.0,
        n,
        seed,
    }
}

/// One grid row of the first-passage comparison.
#[derive(Debug, Clone, Serialize)]
pub struct FirstPassageRow {
    pub t: f64,
    /// `P(sup_n Pi_{n-1} Q_n > t)`.
    pub lhs: f64,
    /// `P(Q > r) * P(tau(t) < infinity)`.
    pub rhs: f64,
    pub pooled_se: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstPassageReport {
    pub rows: Vec<FirstPassageRow>,
    pub p_q_above_r: f64,
    pub n: usize,
    pub seed: u64,
    pub all_hold: bool,
}

/// Log-headroom before declaring a negative-drift walk will never reach a
/// level again (`exp(-46) ~ 1e-20` under the Cramér tilting).
const WALK_KILL_WINDOW: f64 = 46.0;
const WALK_STEP_CAP: usize = 1_000_000;

/// Check `P(sup_n Pi_{n-1} Q_n > t) >= P(Q > r) P(tau(t) < inf)` on a grid,
/// where `tau(t)` is the first passage of `Pi_{n-1}` above `t/r`.
pub fn first_passage_lower_bound_check(
    spec: &LindleySpec,
    t_grid: &[f64],
    n: usize,
    seed: u64,
) -> Result<FirstPassageReport> {
    if !(spec.r > 0.0) {
        return Err(Error::InvalidParam("first-passage check requires r > 0".into()));
    }
    let mean_log = spec.affine_view().mean_log_m(seed);
    if !(mean_log < 0.0) {
        return Err(Error::NotMeanDominated { mean_log });
    }
    let q_hi = spec.q_law.support_hi().unwrap_or_else(|| {
        let mut rng = EnvStream::new(seed, 0).rng_at(1);
        (0..10_000).map(|_| spec.q_law.sample(&mut rng)).fold(0.0f64, f64::max) * 4.0
    });
    let log_q_hi = q_hi.max(1e-12).ln();

    // One walk per replicate; record sup_n Pi_{n-1} Q_n and the running max
    // of log Pi (enough to settle tau(t) for every t at once).
    let per_rep: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = EnvStream::new(seed, i as u64 + 1).rng_at(0);
            let mut log_pi = 0.0f64; // log Pi_{n-1}, starts at Pi_0 = 1
            let mut max_log_pi = 0.0f64;
            let mut sup_term = f64::NEG_INFINITY;
            let mut q_first = f64::NAN;
            for step in 0..WALK_STEP_CAP {
                let (m, q) = spec.sample_mq(&mut rng);
                if step == 0 {
                    q_first = q;
                }
                if q > 0.0 {
                    sup_term = sup_term.max(log_pi + q.ln());
                }
                let lm = if m > 0.0 { m.ln() } else { f64::MIN_POSITIVE.ln() };
                log_pi += lm;
                max_log_pi = max_log_pi.max(log_pi);
                if log_pi < max_log_pi - WALK_KILL_WINDOW && log_pi + log_q_hi < sup_term {
                    break;
                }
            }
            (sup_term, max_log_pi, q_first)
        })
        .collect();

    let p_q: Vec<f64> =
        per_rep.iter().map(|&(_, _, q)| if q > spec.r { 1.0 } else { 0.0 }).collect();
    let (p_q_mean, p_q_se) = mean_se(&p_q);

    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let log_t = t.max(1e-300).ln();
        let level = (t / spec.r).max(1e-300).ln();
        let lhs_ind: Vec<f64> =
            per_rep.iter().map(|&(s, _, _)| if s > log_t { 1.0 } else { 0.0 }).collect();
        let tau_ind: Vec<f64> = per_rep
            .iter()
            .map(|&(_, m, _)| if m > level { 1.0 } else { 0.0 })
            .collect();
        let (lhs, lhs_se) = mean_se(&lhs_ind);
        let (p_tau, p_tau_se) = mean_se(&tau_ind);
        let rhs = p_q_mean * p_tau;
        let rhs_se = ((p_tau * p_q_se).powi(2) + (p_q_mean * p_tau_se).powi(2)).sqrt();
        let pooled = (lhs_se * lhs_se + rhs_se * rhs_se).sqrt();
        rows.push(FirstPassageRow { t, lhs, rhs, pooled_se: pooled, holds: lhs >= rhs - 3.0 * pooled });
    }
    let all_hold = rows.iter().all(|r| r.holds);
    Ok(FirstPassageReport { rows, p_q_above_r: p_q_mean, n, seed, all_hold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cramer::Nonarithmetic;
    use crate::numeric::moment_stability;
    use crate::tail_stats::{hill, ks_two_sample_values};

    fn m_two_point() -> FactorLaw {
        FactorLaw::two_point(0.5, 3.0, 0.8, Nonarithmetic::Declared).unwrap()
    }

    #[test]
    fn deterministic_geometric_series() {
        let spec = AffineSpec::independent(
            FactorLaw::discrete(vec![(0.5, 1.0)], Nonarithmetic::DeclaredNot).unwrap(),
            ScalarLaw::Constant(1.0),
        );
        let set = simulate_perpetuity(&spec, 32, Truncation::default(), 1).unwrap();
        for v in &set.values {
            assert!((v - 2.0).abs() < 1e-9, "sum should be 2, got {v}");
        }
    }

    #[test]
    fn zero_q_is_degenerate_at_zero() {
        let spec = AffineSpec::independent(m_two_point(), ScalarLaw::Constant(0.0));
        let set = simulate_perpetuity(&spec, 64, Truncation::default(), 1).unwrap();
        assert!(set.values.iter().all(|&v| v == 0.0));
        let rep = check_degeneracy(&spec, &[0.0], 10_000, 1);
        assert_eq!(rep.degenerate_point, Some(0.0));
    }

    #[test]
    fn kappa_one_half_moment_stable() {
        // kappa = 1: E X^p finite exactly for p < 1.
        let spec = AffineSpec::independent(m_two_point(), ScalarLaw::Constant(1.0));
        let set = simulate_perpetuity(&spec, 200_000, Truncation::default(), 3).unwrap();
        assert!(moment_stability(&set.values, 0.5).stable);
    }

    #[test]
    fn perpetuity_requires_mean_domination() {
        let spec = AffineSpec::independent(
            FactorLaw::two_point(0.5, 3.0, 0.2, Nonarithmetic::Declared).unwrap(),
            ScalarLaw::Constant(1.0),
        );
        assert!(matches!(
            simulate_perpetuity(&spec, 4, Truncation::default(), 1),
            Err(Error::NotMeanDominated { .. })
        ));
    }

    #[test]
    fn lindley_r0_deterministic() {
        // r = 0, M = 0.5, Q = 1: X = 1 v sup_n 0.5^{n-1} = 1 a.s.
        let spec = LindleySpec::independent(
            0.0,
            FactorLaw::discrete(vec![(0.5, 1.0)], Nonarithmetic::DeclaredNot).unwrap(),
            ScalarLaw::Constant(1.0),
        )
        .unwrap();
        let set = simulate_lindley_variant(&spec, 32, 100, 1).unwrap();
        assert!(set.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn lindley_absorbed_below_threshold() {
        // Q = 1 <= r = 2: every sample equals Q.
        let spec =
            LindleySpec::independent(2.0, m_two_point(), ScalarLaw::Constant(1.0)).unwrap();
        let set = simulate_lindley_variant(&spec, 64, 200, 1).unwrap();
        assert!(set.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn lindley_hill_index_near_one() {
        // r = 0, Q = 1, M two-point with kappa = 1.
        let spec =
            LindleySpec::independent(0.0, m_two_point(), ScalarLaw::Constant(1.0)).unwrap();
        let set = simulate_lindley_variant(&spec, 400_000, 250, 7).unwrap();
        let est = hill(&set, 4000).unwrap();
        assert!(
            est.index > 0.85 && est.index < 1.15,
            "hill index {} outside [0.85, 1.15]",
            est.index
        );
    }

    /// Indicator-series oracle for the max-type solution
    /// `Q_1 v max_n Pi_{n-1} Q_n 1{Q_n > r, ..., M_2...M_{n-1} Q_n > r}`.
    ///
    /// `(M_k, Q_k)` is the environment at stream step `k`; the backward
    /// iteration applies step `depth` first and step 1 last, so the series
    /// index coincides with the stream step.
    fn lindley_series_oracle(spec: &LindleySpec, depth: usize, stream: EnvStream) -> f64 {
        let envs: Vec<(f64, f64)> = (1..=depth)
            .map(|k| spec.sample_mq(&mut stream.rng_at(k as u64)))
            .collect();
        let mut best = envs[0].1; // Q_1, unconditional
        for n in 2..=depth {
            let mut v = envs[n - 1].1; // Q_n
            let mut ok = v > spec.r;
            for j in (2..=n - 1).rev() {
                v *= envs[j - 1].0; // multiply M_{n-1}, ..., M_2 outward
                ok &= v > spec.r;
            }
            if ok {
                best = best.max(envs[0].0 * v); // final factor M_1
            }
        }
        best
    }

    #[test]
    fn lindley_series_matches_backward_pathwise() {
        let spec = LindleySpec::independent(
            1.0,
            m_two_point(),
            ScalarLaw::Uniform { lo: 0.0, hi: 4.0 },
        )
        .unwrap();
        for i in 0..200u64 {
            let stream = EnvStream::new(99, i + 1);
            let depth = 60;
            let oracle = lindley_series_oracle(&spec, depth, stream);
            let mut t = 0.0f64;
            for k in (1..=depth).rev() {
                let (m, q) = spec.sample_mq(&mut stream.rng_at(k as u64));
                t = q.max(if t > spec.r { m * t } else { 0.0 });
            }
            assert!(
                (t - oracle).abs() <= 1e-9 * (1.0 + t.abs()),
                "replicate {i}: backward {t} vs series {oracle}"
            );
        }
    }

    #[test]
    fn lindley_series_matches_backward_in_law() {
        let spec = LindleySpec::independent(
            1.0,
            m_two_point(),
            ScalarLaw::Uniform { lo: 0.0, hi: 4.0 },
        )
        .unwrap();
        let backward = simulate_lindley_variant(&spec, 30_000, 80, 5).unwrap();
        let series: Vec<f64> = (0..30_000u64)
            .map(|i| lindley_series_oracle(&spec, 80, EnvStream::new(123_456, i + 1)))
            .collect();
        let ks = ks_two_sample_values(&backward.values, &series).unwrap();
        assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
    }

    #[test]
    fn degeneracy_two_point_sufficient_condition() {
        let spec = AffineSpec::independent(m_two_point(), ScalarLaw::Constant(1.0));
        let rep = check_degeneracy(&spec, &[-2.0, 0.0, 2.0, 10.0], 20_000, 3);
        assert!(rep.sufficient_condition_holds);
        assert!(rep.degenerate_point.is_none());
        assert!(rep.invariant_halfline_possible.is_none());
    }

    #[test]
    fn degeneracy_finds_fixed_point() {
        // M = 0.5, Q = 1: c = 2 is fixed.
        let spec = AffineSpec::independent(
            FactorLaw::discrete(vec![(0.5, 1.0)], Nonarithmetic::DeclaredNot).unwrap(),
            ScalarLaw::Constant(1.0),
        );
        let rep = check_degeneracy(&spec, &[0.0, 2.0, 4.0], 1000, 3);
        assert_eq!(rep.degenerate_point, Some(2.0));
    }

    #[test]
    fn degeneracy_invariant_halfline() {
        // M = 0.9, Q = -1: c = -10 solves c = 0.9c - 1, so (-inf, c] is
        // invariant for every c >= -10; the first such grid point flags it.
        let spec = AffineSpec::independent(
            FactorLaw::discrete(vec![(0.9, 1.0)], Nonarithmetic::DeclaredNot).unwrap(),
            ScalarLaw::Constant(-1.0),
        );
        let rep = check_degeneracy(&spec, &[-12.0, -10.0, 0.0], 1000, 3);
        assert_eq!(rep.invariant_halfline_possible, Some(-10.0));
        assert!(!rep.sufficient_condition_holds);
    }

    #[test]
    fn first_passage_inequality_holds() {
        let spec = LindleySpec::independent(
            1.0,
            m_two_point(),
            ScalarLaw::Uniform { lo: 0.0, hi: 4.0 },
        )
        .unwrap();
        let rep =
            first_passage_lower_bound_check(&spec, &[0.5, 2.0, 4.0, 8.0], 40_000, 11).unwrap();
        assert!(rep.all_hold, "rows: {:?}", rep.rows);
    }

    #[test]
    fn first_passage_rhs_zero_when_q_below_r() {
        let spec =
            LindleySpec::independent(2.0, m_two_point(), ScalarLaw::Constant(1.0)).unwrap();
        let rep = first_passage_lower_bound_check(&spec, &[4.0], 5_000, 1).unwrap();
        assert_eq!(rep.p_q_above_r, 0.0);
        assert!(rep.all_hold);
    }

    #[test]
    fn first_passage_requires_positive_r() {
        let spec =
            LindleySpec::independent(0.0, m_two_point(), ScalarLaw::Constant(1.0)).unwrap();
        assert!(first_passage_lower_bound_check(&spec, &[1.0], 10, 1).is_err());
    }

    #[test]
    fn joint_coupling_marginals() {
        // A comonotone coupling: marginals must still match declared laws.
        let spec = AffineSpec {
            m_law: m_two_point(),
            q_law: ScalarLaw::Uniform { lo: 0.0, hi: 1.0 },
            coupling: Coupling::Joint(Arc::new(|rng| {
                let u: f64 = rand::Rng::random(rng);
                let m = if u < 0.8 { 0.5 } else { 3.0 };
                (m, u)
            })),
        };
        let mut rng = EnvStream::new(4, 0).rng_at(0);
        let draws: Vec<(f64, f64)> = (0..50_000).map(|_| spec.sample_mq(&mut rng)).collect();
        let p_half = draws.iter().filter(|d| d.0 == 0.5).count() as f64 / draws.len() as f64;
        assert!((p_half - 0.8).abs() < 0.01);
        let qs: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let mut rng2 = EnvStream::new(5, 0).rng_at(0);
        let ref_q: Vec<f64> =
            (0..50_000).map(|_| spec.q_law.sample(&mut rng2)).collect();
        let ks = ks_two_sample_values(&qs, &ref_q).unwrap();
        assert!(ks.p_value > 0.01, "KS p = {}", ks.p_value);
    }
}
