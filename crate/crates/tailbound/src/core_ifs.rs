//! Iterated function systems of iid random Lipschitz maps: the random-map
//! abstraction, forward/backward iteration, contraction diagnostics and
//! stationary-law sampling.
//!
//! Environments are drawn from counter-based streams (see `rng`), so the
//! `k`-th environment of a replicate is a pure function of
//! `(seed, replicate, k)`. Forward and backward iterations therefore replay
//! the identical environment sequence without storing it, and parallel
//! replicates are deterministic regardless of scheduling.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::EnvStream;

/// Finite-dimensional real state.
pub type State = Vec<f64>;
/// Realized random environment (the coordinates a model draws per step).
pub type Env = Vec<f64>;

/// Any coordinate beyond this aborts the replicate: it distinguishes model
/// misuse from genuine tail events, which stay far below this scale.
pub const DIVERGENCE_LIMIT: f64 = 1e300;

type EnvSampler = Arc<dyn Fn(&mut ChaCha8Rng) -> Env + Send + Sync>;
type EvalFn = Arc<dyn Fn(&Env, &[f64]) -> State + Send + Sync>;
type LipFn = Arc<dyn Fn(&Env) -> f64 + Send + Sync>;
type MetricFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type PointSampler = Arc<dyn Fn(&mut ChaCha8Rng) -> State + Send + Sync>;

/// A family of iid random Lipschitz maps `x -> Psi(theta, x)`.
///
/// `lipschitz_bound` must return `L(Psi(theta, .))` or a certified upper
/// bound of it, valid on the family's declared domain (the range of
/// `point_sampler`).
#[derive(Clone)]
pub struct MapFamily {
    pub model_id: String,
    pub state_dim: usize,
    pub reference_point: State,
    env_sampler: EnvSampler,
    eval: EvalFn,
    lipschitz: LipFn,
    metric: MetricFn,
    point_sampler: PointSampler,
}

/// Euclidean metric on `R^m`.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl MapFamily {
    pub fn new(
        model_id: impl Into<String>,
        state_dim: usize,
        reference_point: State,
        env_sampler: EnvSampler,
        eval: EvalFn,
        lipschitz: LipFn,
        metric: MetricFn,
        point_sampler: PointSampler,
    ) -> Self {
        assert_eq!(reference_point.len(), state_dim);
        MapFamily {
            model_id: model_id.into(),
            state_dim,
            reference_point,
            env_sampler,
            eval,
            lipschitz,
            metric,
            point_sampler,
        }
    }

    /// Scalar family with Euclidean metric.
    pub fn scalar(
        model_id: impl Into<String>,
        reference: f64,
        env_sampler: EnvSampler,
        eval: impl Fn(&Env, f64) -> f64 + Send + Sync + 'static,
        lipschitz: LipFn,
        point_sampler: impl Fn(&mut ChaCha8Rng) -> f64 + Send + Sync + 'static,
    ) -> Self {
        MapFamily::new(
            model_id,
            1,
            vec![reference],
            env_sampler,
            Arc::new(move |env, x| vec![eval(env, x[0])]),
            lipschitz,
            Arc::new(|a, b| (a[0] - b[0]).abs()),
            Arc::new(move |rng| vec![point_sampler(rng)]),
        )
    }

    pub fn sample_env(&self, rng: &mut ChaCha8Rng) -> Env {
        (self.env_sampler)(rng)
    }

    pub fn apply(&self, env: &Env, x: &[f64]) -> State {
        (self.eval)(env, x)
    }

    pub fn lipschitz_bound(&self, env: &Env) -> f64 {
        (self.lipschitz)(env)
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        (self.metric)(a, b)
    }

    /// Distance from the reference point.
    pub fn dist_ref(&self, x: &[f64]) -> f64 {
        (self.metric)(&self.reference_point, x)
    }

    /// A random state from the family's declared domain.
    pub fn sample_point(&self, rng: &mut ChaCha8Rng) -> State {
        (self.point_sampler)(rng)
    }

    fn check_state(x: &[f64], step: usize, replicate: Option<usize>) -> Result<()> {
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            match replicate {
                Some(r) => Err(Error::Diverged { step, replicate: r }),
                None => Err(Error::NonFiniteState { step, replicate: None }),
            }
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// A realized orbit. For `Forward`, `states[k] = Psi_k(states[k-1])` with
/// environments `theta_1..theta_n` in stream order. For `Backward`,
/// `states[j]` is the inner partial composition
/// `Psi_{n-j+1} o ... o Psi_n(start)`, so the final state equals
/// `Psi_1(Psi_2(...Psi_n(start)))` over the same environment sequence.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub direction: Direction,
    pub seed: u64,
    pub env_count: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory has at least the start state")
    }
}

/// Forward iteration `X_k = Psi(theta_k, X_{k-1})` over the stream's
/// environments `theta_1..theta_n`.
pub fn iterate_forward_on(
    family: &MapFamily,
    start: &[f64],
    n: usize,
    stream: EnvStream,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(n + 1);
    states.push(start.to_vec());
    for k in 1..=n {
        let env = family.sample_env(&mut stream.rng_at(k as u64));
        let next = family.apply(&env, states.last().unwrap());
        MapFamily::check_state(&next, k, None)?;
        states.push(next);
    }
    Ok(Trajectory { states, direction: Direction::Forward, seed: stream.seed, env_count: n })
}

pub fn iterate_forward(family: &MapFamily, start: &[f64], n: usize, seed: u64) -> Result<Trajectory> {
    iterate_forward_on(family, start, n, EnvStream::new(seed, 0))
}

/// Backward iteration: the same environments as `iterate_forward_on`
/// composed in reverse, `Psi_1 o ... o Psi_n(start)`. The counter-based
/// stream replays `theta_k` by index, so nothing is materialized.
pub fn iterate_backward_on(
    family: &MapFamily,
    start: &[f64],
    n: usize,
    stream: EnvStream,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(n + 1);
    states.push(start.to_vec());
    for (j, k) in (1..=n).rev().enumerate() {
        let env = family.sample_env(&mut stream.rng_at(k as u64));
        let next = family.apply(&env, states.last().unwrap());
        MapFamily::check_state(&next, j + 1, None)?;
        states.push(next);
    }
    Ok(Trajectory { states, direction: Direction::Backward, seed: stream.seed, env_count: n })
}

pub fn iterate_backward(family: &MapFamily, start: &[f64], n: usize, seed: u64) -> Result<Trajectory> {
    iterate_backward_on(family, start, n, EnvStream::new(seed, 0))
}

/// Monte Carlo contraction and jump-size diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    /// Estimate of `E log L(Psi)` with standard error.
    pub mean_log_lipschitz: f64,
    pub mean_log_lipschitz_se: f64,
    /// Estimate of `(1/n) log L(Psi_{n:1})` at depth `n_depth`, via the
    /// certified per-step bounds (submultiplicativity), with standard error.
    pub top_lyapunov: f64,
    pub top_lyapunov_se: f64,
    /// Estimate of `E log^+ d(x0, Psi(x0))`.
    pub jump_size_moment: f64,
    pub jump_size_se: f64,
    pub n_depth: usize,
    pub reps: usize,
    pub seed: u64,
    /// `mean_log_lipschitz + 2 SE < 0`.
    pub mean_contractive: bool,
    /// `top_lyapunov + 2 SE < 0`.
    pub contractive: bool,
}

fn safe_ln(v: f64) -> f64 {
    if v <= 0.0 {
        f64::MIN_POSITIVE.ln()
    } else {
        v.ln()
    }
}

pub fn diagnose_contraction(
    family: &MapFamily,
    depth: usize,
    reps: usize,
    seed: u64,
) -> Result<ContractionReport> {
    if reps < 2 {
        return Err(Error::InvalidParam("diagnose_contraction requires reps >= 2".into()));
    }
    let depth = depth.max(1);

    // Replicate r uses stream r+1; stream 0 is reserved for the single-draw
    // estimates below.
    let per_rep: Vec<(f64, f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let stream = EnvStream::new(seed, r as u64 + 1);
            let mut log_sum = 0.0;
            let mut first_log = 0.0;
            let mut first_jump = 0.0;
            for k in 1..=depth {
                let mut rng = stream.rng_at(k as u64);
                let env = family.sample_env(&mut rng);
                let lip = family.lipschitz_bound(&env);
                if !lip.is_finite() {
                    return Err(Error::NonFinite { context: "lipschitz_bound".into() });
                }
                let l = safe_ln(lip);
                log_sum += l;
                if k == 1 {
                    first_log = l;
                    let moved = family.apply(&env, &family.reference_point);
                    first_jump =
                        family.dist_ref(&moved).ln().max(0.0);
                }
            }
            Ok((log_sum / depth as f64, first_log, first_jump))
        })
        .collect::<Result<Vec<_>>>()?;

    let lyap: Vec<f64> = per_rep.iter().map(|t| t.0).collect();
    let single_logs: Vec<f64> = per_rep.iter().map(|t| t.1).collect();
    let jumps: Vec<f64> = per_rep.iter().map(|t| t.2).collect();

    let (lyap_mean, lyap_se) = crate::numeric::mean_se(&lyap);
    let (mll, mll_se) = crate::numeric::mean_se(&single_logs);
    let (jump, jump_se) = crate::numeric::mean_se(&jumps);

    Ok(ContractionReport {
        mean_log_lipschitz: mll,
        mean_log_lipschitz_se: mll_se,
        top_lyapunov: lyap_mean,
        top_lyapunov_se: lyap_se,
        jump_size_moment: jump,
        jump_size_se: jump_se,
        n_depth: depth,
        reps,
        seed,
        mean_contractive: mll + 2.0 * mll_se < 0.0,
        contractive: lyap_mean + 2.0 * lyap_se < 0.0,
    })
}

/// What a `SampleSet` records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    /// `d(x0, X)` per draw.
    MetricDistance,
    /// The raw scalar state (only for `state_dim == 1`).
    RawState,
}

/// How to sample the stationary law.
#[derive(Debug, Clone)]
pub enum SampleMode {
    /// One long forward run, recording every `thin` steps after `burn_in`.
    LongRun { burn_in: usize, thin: usize, start: Option<State> },
    /// Independent backward iterations, one replicate per sample. With
    /// `depth: None` the depth is chosen so that
    /// `depth * top_lyapunov < ln(1e-12)`, making the truncation error
    /// negligible against Monte Carlo noise.
    Backward { depth: Option<usize>, start: Option<State> },
}

/// A seeded, provenance-stamped collection of stationary-law draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSet {
    pub model_id: String,
    pub seed: u64,
    /// Human-readable mode echo, e.g. `backward(depth=60)`.
    pub mode: String,
    /// The start state used (the stationary law may depend on it when the
    /// system is not contractive; it is surfaced rather than hidden).
    pub start: Vec<f64>,
    pub kind: ValueKind,
    pub warnings: Vec<String>,
    pub values: Vec<f64>,
}

impl SampleSet {
    pub fn from_values(
        model_id: impl Into<String>,
        seed: u64,
        mode: impl Into<String>,
        kind: ValueKind,
        values: Vec<f64>,
    ) -> Self {
        SampleSet {
            model_id: model_id.into(),
            seed,
            mode: mode.into(),
            start: Vec::new(),
            kind,
            warnings: Vec::new(),
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Ascending copy of the values.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    /// Empirical `E |X|^p`.
    pub fn moment(&self, p: f64) -> f64 {
        self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / self.values.len() as f64
    }

    /// Right-continuous empirical survival `P(X > x)` (strict inequality).
    pub fn survival(&self, x: f64) -> f64 {
        self.values.iter().filter(|&&v| v > x).count() as f64 / self.values.len() as f64
    }

    /// CSV: a header line naming the metadata columns, the metadata row,
    /// then one value per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 20 + 64);
        out.push_str("model_id,seed,mode\n");
        out.push_str(&format!("{},{},{}\n", self.model_id, self.seed, self.mode));
        for v in &self.values {
            // RFC-compatible shortest round-trip float formatting
            out.push_str(&format!("{v:?}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "model_id,seed,mode" {
            return Err(Error::Config(format!("unexpected CSV header: {header}")));
        }
        let meta = lines.next().ok_or_else(|| Error::Config("missing metadata row".into()))?;
        let mut parts = meta.splitn(3, ',');
        let model_id = parts.next().unwrap_or_default().to_string();
        let seed: u64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Config("bad seed in CSV".into()))?;
        let mode = parts.next().unwrap_or_default().to_string();
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad value: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleSet {
            model_id,
            seed,
            mode,
            start: Vec::new(),
            kind: ValueKind::MetricDistance,
            warnings: Vec::new(),
            values,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Salt separating the depth-probe stream from the sampling streams.
const DEPTH_PROBE_SALT: u64 = 0x7ead_5eed_0dd5_eed7;

/// Pick a backward depth from the contraction diagnostics: geometric
/// convergence makes the truncation error below `1e-12` of scale once
/// `depth * rate < ln(1e-12)`.
pub fn default_backward_depth(family: &MapFamily, seed: u64) -> (usize, Vec<String>) {
    let mut warnings = Vec::new();
    match diagnose_contraction(family, 32, 256, seed ^ DEPTH_PROBE_SALT) {
        Ok(rep) => {
            let rate = rep.top_lyapunov + 2.0 * rep.top_lyapunov_se;
            if rate < -0.01 {
                let depth = ((1e-12f64.ln() / rate).ceil() as usize).clamp(8, 100_000);
                (depth, warnings)
            } else {
                warnings.push(format!(
                    "family not certified contractive (top Lyapunov {:.4} +/- {:.4}); using fallback depth 256",
                    rep.top_lyapunov, rep.top_lyapunov_se
                ));
                (256, warnings)
            }
        }
        Err(e) => {
            warnings.push(format!("contraction diagnostics failed ({e}); using fallback depth 256"));
            (256, warnings)
        }
    }
}

/// Draw from the stationary law.
///
/// Backward replicates are independent (`stream = replicate + 1`) and may
/// run in parallel; the result is identical regardless of scheduling.
pub fn sample_stationary(
    family: &MapFamily,
    mode: SampleMode,
    n_samples: usize,
    seed: u64,
    record: ValueKind,
) -> Result<SampleSet> {
    if record == ValueKind::RawState && family.state_dim != 1 {
        return Err(Error::InvalidParam("RawState recording requires scalar state".into()));
    }
    let record_value = |family: &MapFamily, x: &State| -> f64 {
        match record {
            ValueKind::MetricDistance => family.dist_ref(x),
            ValueKind::RawState => x[0],
        }
    };
    match mode {
        SampleMode::Backward { depth, start } => {
            let start = start.unwrap_or_else(|| family.reference_point.clone());
            let mut warnings = Vec::new();
            let depth = match depth {
                Some(d) => d,
                None => {
                    let (d, w) = default_backward_depth(family, seed);
                    warnings.extend(w);
                    d
                }
            };
            let values: Vec<f64> = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let stream = EnvStream::new(seed, i as u64 + 1);
                    let mut x = start.clone();
                    for (j, k) in (1..=depth).rev().enumerate() {
                        let env = family.sample_env(&mut stream.rng_at(k as u64));
                        x = family.apply(&env, &x);
                        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                            return Err(Error::Diverged { step: j + 1, replicate: i });
                        }
                    }
                    Ok(record_value(family, &x))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampleSet {
                model_id: family.model_id.clone(),
                seed,
                mode: format!("backward(depth={depth})"),
                start,
                kind: record,
                warnings,
                values,
            })
        }
        SampleMode::LongRun { burn_in, thin, start } => {
            let thin = thin.max(1);
            let start = start.unwrap_or_else(|| family.reference_point.clone());
            let stream = EnvStream::new(seed, 0);
            let total = burn_in + n_samples * thin;
            let mut x = start.clone();
            let mut values = Vec::with_capacity(n_samples);
            for k in 1..=total {
                let env = family.sample_env(&mut stream.rng_at(k as u64));
                x = family.apply(&env, &x);
                if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                    return Err(Error::NonFiniteState { step: k, replicate: None });
                }
                if k > burn_in && (k - burn_in) % thin == 0 {
                    values.push(record_value(family, &x));
                }
            }
            Ok(SampleSet {
                model_id: family.model_id.clone(),
                seed,
                mode: format!("long_run(burn_in={burn_in},thin={thin})"),
                start,
                kind: record,
                warnings: Vec::new(),
                values,
            })
        }
    }
}
