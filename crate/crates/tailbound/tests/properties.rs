//! Cross-module invariants and randomized property tests: certified
//! Lipschitz bounds, metric axioms, stationary-law symmetries, and the
//! structural properties of the moment function and serialization.

use proptest::prelude::*;
use serde_json::json;

use tailbound::core_ifs::{
    iterate_forward, sample_stationary, MapFamily, SampleMode, SampleSet, ValueKind,
};
use tailbound::cramer::{solve_kappa, FactorLaw, Nonarithmetic, SolveOptions};
use tailbound::fixed_points::{simulate_perpetuity, AffineSpec, Truncation};
use tailbound::laws::ScalarLaw;
use tailbound::models;
use tailbound::rng::rng_stream;
use tailbound::tail_stats::{ks_two_sample_values, KsResult};

fn all_families() -> Vec<MapFamily> {
    let mut fams = vec![
        models::family("arch_x", &json!({"alpha": 0.3, "beta": 1.0, "lambda": 0.5})).unwrap(),
        models::family("arch_w", &json!({"alpha": 0.3, "beta": 1.0, "lambda": 0.5})).unwrap(),
        models::family(
            "logistic_x",
            &json!({"xi_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}}, "a_lower": 2.0}),
        )
        .unwrap(),
        models::family(
            "logistic_w",
            &json!({"xi_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}}, "a_lower": 2.0}),
        )
        .unwrap(),
        models::family(
            "ricker_x",
            &json!({"beta_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}},
                    "gamma_law": {"constant": 1.0}}),
        )
        .unwrap(),
        models::family(
            "ricker_w",
            &json!({"beta_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}},
                    "gamma_law": {"constant": 1.0}}),
        )
        .unwrap(),
        models::family("dual_real", &json!({"p": 0.6})).unwrap(),
        models::family("dual_exact_float", &json!({"p": 0.6})).unwrap(),
        models::family(
            "affine",
            &json!({"m_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}},
                    "q_law": {"constant": 1.0}}),
        )
        .unwrap(),
    ];
    for pert in [
        json!({"radial": {"u_law": {"uniform": {"lo": 0.0, "hi": 1.0}}}}),
        json!({"fixed": {"u_law": {"uniform": {"lo": 0.0, "hi": 1.0}}}}),
    ] {
        fams.push(
            models::family(
                "mirek",
                &json!({"dim": 2, "beta_law": {"log_normal": {"mu": -0.5, "sigma": 1.0}},
                        "perturbation": pert}),
            )
            .unwrap(),
        );
    }
    fams
}

#[test]
fn lipschitz_certificate_every_model() {
    // d(Psi x, Psi y) <= L(theta) d(x, y) with relative slack >= -1e-9, on
    // one thousand (theta, x, y) triples from each family's declared domain.
    for family in all_families() {
        let mut rng = rng_stream(2024, 0);
        for i in 0..1000 {
            let env = family.sample_env(&mut rng);
            let lip = family.lipschitz_bound(&env);
            assert!(lip.is_finite(), "{}: certified bound must be finite", family.model_id);
            let x = family.sample_point(&mut rng);
            let y = family.sample_point(&mut rng);
            let lhs = family.distance(&family.apply(&env, &x), &family.apply(&env, &y));
            let rhs = lip * family.distance(&x, &y);
            assert!(
                lhs <= rhs * (1.0 + 1e-9) + 1e-12,
                "{}: triple {i}: d(Psi x, Psi y) = {lhs} > L d(x,y) = {rhs}",
                family.model_id
            );
        }
    }
}

#[test]
fn metric_axioms_every_model() {
    for family in all_families() {
        let mut rng = rng_stream(77, 0);
        for _ in 0..300 {
            let x = family.sample_point(&mut rng);
            let y = family.sample_point(&mut rng);
            let z = family.sample_point(&mut rng);
            let dxy = family.distance(&x, &y);
            assert!(dxy >= 0.0);
            assert_eq!(dxy, family.distance(&y, &x), "{}: symmetry", family.model_id);
            assert_eq!(family.distance(&x, &x), 0.0);
            let dyz = family.distance(&y, &z);
            let dxz = family.distance(&x, &z);
            assert!(
                dxz <= (dxy + dyz) * (1.0 + 1e-12) + 1e-12,
                "{}: triangle inequality: {dxz} vs {dxy} + {dyz}",
                family.model_id
            );
        }
    }
}

#[test]
fn arch_stationary_law_is_symmetric() {
    // P(X > t) ~ P(|X| > t) / 2 on a grid, within 3 binomial SE.
    let family = models::family("arch_x", &json!({"alpha": 0.3, "beta": 1.0, "lambda": 0.5}))
        .unwrap();
    let samples = sample_stationary(
        &family,
        SampleMode::LongRun { burn_in: 5_000, thin: 2, start: None },
        200_000,
        5,
        ValueKind::RawState,
    )
    .unwrap();
    let n = samples.n() as f64;
    let mut abs: Vec<f64> = samples.values.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| abs[(abs.len() as f64 * p) as usize];
    for t in tailbound::numeric::log_grid(q(0.5), q(0.995), 12) {
        let p_signed = samples.values.iter().filter(|&&v| v > t).count() as f64 / n;
        let p_abs = abs.iter().filter(|&&v| v > t).count() as f64 / n;
        let se = (p_abs / n).sqrt(); // binomial scale
        assert!(
            (p_signed - 0.5 * p_abs).abs() <= 3.0 * se + 1.0 / n,
            "symmetry violated at t = {t}: {p_signed} vs {}",
            0.5 * p_abs
        );
    }
}

#[test]
fn ricker_absorbing_set_one_million_steps() {
    let family = models::family(
        "ricker_w",
        &json!({"beta_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}},
                "gamma_law": {"constant": 1.0}}),
    )
    .unwrap();
    let a = 0.5 * std::f64::consts::E;
    let t = iterate_forward(&family, &[a], 1_000_000, 3).unwrap();
    assert!(t.states.iter().all(|s| s[0] >= a - 1e-12));
}

#[test]
fn perpetuity_matches_backward_affine_iteration() {
    // The series sampler and the backward iteration of x -> Mx + Q target
    // the same law: two-sample KS at level 0.01.
    let m = FactorLaw::two_point(0.5, 3.0, 0.8, Nonarithmetic::Declared).unwrap();
    let series = simulate_perpetuity(
        &AffineSpec::independent(m, ScalarLaw::Constant(1.0)),
        100_000,
        Truncation::default(),
        11,
    )
    .unwrap();
    let family = models::family(
        "affine",
        &json!({"m_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}},
                "q_law": {"constant": 1.0}}),
    )
    .unwrap();
    let backward = sample_stationary(
        &family,
        SampleMode::Backward { depth: Some(250), start: None },
        100_000,
        13,
        ValueKind::RawState,
    )
    .unwrap();
    let ks = ks_two_sample_values(&series.values, &backward.values).unwrap();
    assert!(ks.p_value > 0.01, "KS D = {}, p = {}", ks.statistic, ks.p_value);
}

#[test]
fn shifted_bounds_verify_on_models() {
    for (model_id, params, r, x1) in [
        ("dual_real", json!({"p": 0.6}), 0.0, vec![2.0]),
        (
            "mirek",
            json!({"dim": 2, "beta_law": {"log_normal": {"mu": -0.5, "sigma": 1.0}},
                   "perturbation": {"radial": {"u_law": {"uniform": {"lo": 0.0, "hi": 1.0}}}}}),
            0.0,
            vec![1.0, -1.0],
        ),
    ] {
        let family = models::family(model_id, &params).unwrap();
        let bounds = models::bounds_from_model(model_id, &params, r).unwrap();
        let rep =
            tailbound::sandwich::verify_shifted(&family, &bounds, &x1, 2_000, 50, 17).unwrap();
        assert_eq!(
            rep.total_violations(),
            0,
            "{model_id}: shifted verification failed (worst {} / {})",
            rep.worst_slack_lower,
            rep.worst_slack_upper
        );
    }
}

#[test]
fn hill_ordering_surrogate_for_bound_chains() {
    // The Hill indices of the lower chain, the model chain and the upper
    // chain are reverse-ordered (the heavier upper chain has the smaller
    // index), within pooled confidence intervals. The Ricker chain at a
    // small threshold separates the two factor laws.
    let params = json!({"beta_law": {"two_point": {"x": 0.5, "y": 3.0, "p": 0.8}},
                        "gamma_law": {"constant": 1.0}});
    let family = models::family("ricker_w", &params).unwrap();
    let bounds = models::bounds_from_model("ricker_w", &params, 4.0).unwrap();
    let model = tailbound::sandwich::sample_observable(&family, &bounds, 120_000, 150, 3).unwrap();
    let (lower, upper) =
        tailbound::sandwich::sample_bound_chains(&family, &bounds, 120_000, 150, 3).unwrap();
    let h = |s: &SampleSet| tailbound::tail_stats::hill(s, 1_200).unwrap();
    let (hf, hm, hg) = (h(&lower), h(&model), h(&upper));
    // index_G <= index_model <= index_F up to CI overlap
    assert!(
        hg.index <= hm.index + (hm.index - hm.ci_low) + (hg.ci_high - hg.index),
        "upper-chain index {} above model {}",
        hg.index,
        hm.index
    );
    assert!(
        hm.index <= hf.index + (hf.index - hf.ci_low) + (hm.ci_high - hm.index),
        "model index {} above lower-chain {}",
        hm.index,
        hf.index
    );
    // and the chains are genuinely separated at this threshold
    assert!(hg.index < hf.index, "expected separation: {} vs {}", hg.index, hf.index);
}

#[test]
fn numeric_mesh_sound_on_meshed_range() {
    // Mesh-derived coefficients must themselves verify pathwise on points
    // drawn inside the meshed range.
    let family = models::family("dual_real", &json!({"p": 0.6})).unwrap();
    let mesh = tailbound::sandwich::SandwichBounds::numeric_mesh(&family, 1.0, 400, 1e5);
    let rep = tailbound::sandwich::verify_sandwich(
        &family,
        &mesh,
        500,
        50,
        Some(&|rng: &mut rand_chacha::ChaCha8Rng| {
            vec![rand::Rng::random_range(rng, 1.0..1e5f64)]
        }),
        23,
    )
    .unwrap();
    assert_eq!(rep.total_violations(), 0, "mesh bounds violated on meshed range");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// log phi is convex for any admissible two-point law.
    #[test]
    fn phi_log_convex(a in 0.05f64..0.95, b in 1.05f64..40.0, p in 0.05f64..0.95) {
        let law = FactorLaw::two_point(a, b, p, Nonarithmetic::Unknown).unwrap();
        let grid: Vec<f64> = (0..25).map(|i| 0.1 + 0.2 * i as f64).collect();
        let logphi: Vec<f64> = grid.iter().map(|&k| law.phi_exact(k).unwrap().ln()).collect();
        for w in logphi.windows(3) {
            prop_assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-9);
        }
    }

    /// Wherever a root exists, it is bracketed: phi dips below one before it
    /// and exceeds one after it.
    #[test]
    fn root_is_bracketed(a in 0.05f64..0.95, b in 1.05f64..40.0, p in 0.05f64..0.95) {
        let law = FactorLaw::two_point(a, b, p, Nonarithmetic::Unknown).unwrap();
        prop_assume!(law.mean_log_exact().unwrap() < -0.01);
        let sol = solve_kappa(&law, SolveOptions::default()).unwrap();
        let tol = sol.tolerance;
        prop_assert!(law.phi_exact(sol.kappa - 10.0 * tol).unwrap() < 1.0);
        prop_assert!(law.phi_exact(sol.kappa + 10.0 * tol).unwrap() > 1.0);
        prop_assert!(sol.mu_kappa > 0.0);
    }

    /// CSV and JSON serialization round-trip the values exactly.
    #[test]
    fn sample_set_round_trips(values in proptest::collection::vec(-1e12f64..1e12, 1..200)) {
        let set = SampleSet::from_values("prop", 9, "mode(x=1)", ValueKind::RawState, values);
        let back = SampleSet::from_csv(&set.to_csv()).unwrap();
        prop_assert_eq!(&back.values, &set.values);
        let back = SampleSet::from_json(&set.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back.values, &set.values);
    }

    /// The KS statistic is a pseudo-distance with p in [0, 1], symmetric in
    /// its arguments.
    #[test]
    fn ks_statistic_sane(
        xs in proptest::collection::vec(-100f64..100.0, 8..200),
        ys in proptest::collection::vec(-100f64..100.0, 8..200),
    ) {
        let KsResult { statistic, p_value, .. } = ks_two_sample_values(&xs, &ys).unwrap();
        prop_assert!((0.0..=1.0).contains(&statistic));
        prop_assert!((0.0..=1.0).contains(&p_value));
        let swapped = ks_two_sample_values(&ys, &xs).unwrap();
        prop_assert_eq!(statistic, swapped.statistic);
    }

    /// Scaling a two-point law scales its root reciprocally in the log:
    /// kappa decreases strictly as the heavy atom grows.
    #[test]
    fn kappa_monotone_in_heavy_atom(b in 1.5f64..9.0) {
        // with p = 0.8, E log M < 0 requires b < exp(4 ln 2) = 16; cap at
        // 9 * 1.5 so the scaled law stays mean-dominated too
        let k1 = solve_kappa(
            &FactorLaw::two_point(0.5, b, 0.8, Nonarithmetic::Unknown).unwrap(),
            SolveOptions::default(),
        )
        .unwrap()
        .kappa;
        let k2 = solve_kappa(
            &FactorLaw::two_point(0.5, b * 1.5, 0.8, Nonarithmetic::Unknown).unwrap(),
            SolveOptions::default(),
        )
        .unwrap()
        .kappa;
        prop_assert!(k2 < k1);
    }
}
