mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpps_core::algorithms::{
    deflection, evaluate_dual, run_dp_admm, run_dp_ps, step_rule, AdmmConfig, DualContext, DualState, Rule, RuleConfig,
    RunOptions, RunTrace, Termination, TRACE_CSV_HEADER,
};
use dpps_core::partition::{project_onto_lambda_space, DualVector, ZonePartition};
use dpps_core::privacy::PrivacyParams;
use dpps_core::solver::SolverConfig;

fn case14_context() -> DualContext {
    let net = common::case14();
    let part = common::case14_partition(&net);
    DualContext::new("case14", net, part, SolverConfig::default()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_lambda(rng: &mut ChaCha8Rng, part: &ZonePartition, scale: f64) -> DualVector {
    let raw = DualVector((0..part.dual_len()).map(|_| rng.gen_range(-scale..scale)).collect());
    project_onto_lambda_space(&raw, part)
}

fn is_projected(lam: &[f64], part: &ZonePartition) -> bool {
    part.consensus_positions.iter().all(|p| p.iter().map(|&i| lam[i]).sum::<f64>().abs() < 1e-9)
}

#[test]
fn supergradient_inequality_on_random_pairs() {
    // the slack is below default interior-point accuracy on near pairs
    let net = common::case14();
    let part = common::case14_partition(&net);
    let tight = SolverConfig { feas_tol: 1e-10, opt_tol: 1e-10, ..Default::default() };
    let ctx = DualContext::new("case14", net, part, tight).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..50 {
        let lam = random_lambda(&mut rng, &ctx.part, 300.0);
        // half far pairs, half close ones where the bound is nearly tight
        let mu = if i % 2 == 0 {
            random_lambda(&mut rng, &ctx.part, 300.0)
        } else {
            let d = random_lambda(&mut rng, &ctx.part, 1.0);
            DualVector(lam.0.iter().zip(&d.0).map(|(a, b)| a + 1e-1 * b).collect())
        };
        let el = evaluate_dual(&lam, &ctx).unwrap();
        let hm = evaluate_dual(&mu, &ctx).unwrap().h;
        let diff: Vec<f64> = mu.0.iter().zip(&lam.0).map(|(a, b)| a - b).collect();
        let bound = el.h + dot(&el.y, &diff);
        assert!(hm <= bound + 1e-8 * el.h.abs().max(hm.abs()), "pair {i}: H(μ) = {hm}, bound {bound}");
    }
}

#[test]
fn small_step_along_projected_supergradient_increases_h() {
    let ctx = case14_context();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let lam = random_lambda(&mut rng, &ctx.part, 100.0);
        let e = evaluate_dual(&lam, &ctx).unwrap();
        let dir = project_onto_lambda_space(&DualVector(e.y.clone()), &ctx.part);
        let ok = [1e-1, 1.0, 10.0].iter().any(|t| {
            let next = DualVector(lam.0.iter().zip(&dir.0).map(|(l, d)| l + t * d).collect());
            evaluate_dual(&next, &ctx).unwrap().h > e.h
        });
        assert!(ok, "no ascent along the projected supergradient");
    }
}

#[test]
fn single_iteration_run() {
    let ctx = case14_context();
    let t = run_dp_ps(&ctx, &RuleConfig::default(), &PrivacyParams::non_private(0), 1, &RunOptions::default()).unwrap();
    assert_eq!(t.records.len(), 1);
    assert_eq!(t.termination, Termination::Completed);
    assert!(t.records[0].lambda.iter().all(|&l| l == 0.0));
    assert!(t.records[0].alpha > 0.0);
    assert!(is_projected(&t.records[0].lambda, &ctx.part));
}

#[test]
fn zero_iterations_rejected() {
    let ctx = case14_context();
    assert!(run_dp_ps(&ctx, &RuleConfig::default(), &PrivacyParams::non_private(0), 0, &RunOptions::default()).is_err());
}

#[test]
fn non_private_rule3_converges_and_stays_below_optimum() {
    let ctx = case14_context();
    let z = ctx.z_star().unwrap();
    let t =
        run_dp_ps(&ctx, &RuleConfig::default(), &PrivacyParams::non_private(0), 400, &RunOptions::default()).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for r in &t.records {
        assert!(r.h <= z * (1.0 + 1e-4), "iteration {}: H = {} above Z* = {z}", r.k, r.h);
        assert!(r.h_best >= prev);
        prev = r.h_best;
        assert!(is_projected(&r.lambda, &ctx.part));
        assert!(r.xi.iter().all(|&x| x == 0.0));
        // the deflected direction never outgrows the perturbed supergradient
        assert!(dot(&r.direction, &r.direction).sqrt() <= dot(&r.y_tilde, &r.y_tilde).sqrt() * (1.0 + 1e-12));
    }
    let k = t.iterations_to_gap(1.0).expect("1% gap reached");
    assert!(k <= 400, "reached 1% at {k}");
}

#[test]
fn gap_stop_terminates_early() {
    let ctx = case14_context();
    let opts = RunOptions { gap_stop: Some(5.0), ..Default::default() };
    let t = run_dp_ps(&ctx, &RuleConfig::default(), &PrivacyParams::non_private(0), 400, &opts).unwrap();
    assert_eq!(t.termination, Termination::GapReached);
    assert!(t.final_gap().unwrap() <= 5.0);
    assert!(t.records.len() < 400);
}

#[test]
fn rule1_gap_shrinks() {
    let ctx = case14_context();
    let cfg = RuleConfig { rule: Rule::Rule1, a: 50.0, ..Default::default() };
    let t = run_dp_ps(&ctx, &cfg, &PrivacyParams::non_private(0), 150, &RunOptions::default()).unwrap();
    let (early, late) = (t.gap(&t.records[9]), t.gap(&t.records[149]));
    assert!(late < early, "gap {early}% at k = 10, {late}% at k = 150");
    for r in &t.records {
        assert!((r.alpha - 50.0 / r.k as f64).abs() < 1e-12);
    }
}

#[test]
fn private_runs_satisfy_direction_bound_and_basic_inequality() {
    let ctx = case14_context();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let anchor = random_lambda(&mut rng, &ctx.part, 200.0);
    let h_anchor = evaluate_dual(&anchor, &ctx).unwrap().h;
    for seed in 0..3 {
        let p = PrivacyParams::new(1.0, 0.05, seed).unwrap();
        let t = run_dp_ps(&ctx, &RuleConfig::default(), &p, 15, &RunOptions::default()).unwrap();
        let mut prev_best = f64::NEG_INFINITY;
        for w in t.records.windows(2) {
            let (r, next) = (&w[0], &w[1]);
            let ns = dot(&r.direction, &r.direction);
            assert!(ns.sqrt() <= dot(&r.y_tilde, &r.y_tilde).sqrt() * (1.0 + 1e-12));
            assert!(r.h_best >= prev_best);
            prev_best = r.h_best;

            // ‖λ⁺−μ‖² ≤ ‖λ−μ‖² + α²‖s‖² + 2α(H(λ) − H(μ)) + 2α⟨s − y, λ − μ⟩
            let lm: Vec<f64> = r.lambda.iter().zip(&anchor.0).map(|(a, b)| a - b).collect();
            let nm: Vec<f64> = next.lambda.iter().zip(&anchor.0).map(|(a, b)| a - b).collect();
            let sy: Vec<f64> = r.direction.iter().zip(&r.y).map(|(a, b)| a - b).collect();
            let rhs = dot(&lm, &lm)
                + r.alpha * r.alpha * ns
                + 2.0 * r.alpha * (r.h - h_anchor)
                + 2.0 * r.alpha * dot(&sy, &lm);
            let lhs = dot(&nm, &nm);
            assert!(lhs <= rhs + 1e-8 * rhs.abs().max(1.0), "k = {}: {lhs} > {rhs}", r.k);
        }
    }
}

#[test]
fn admm_converges_without_noise() {
    let ctx = case14_context();
    let z = ctx.z_star().unwrap();
    let t =
        run_dp_admm(&ctx, &AdmmConfig::default(), &PrivacyParams::non_private(0), 400, &RunOptions::default()).unwrap();
    let last = t.records.last().unwrap();
    assert!((last.objective - z).abs() / z < 5e-3, "objective {} vs Z* {z}", last.objective);
    assert!(last.primal_residual < 1e-2, "residual {}", last.primal_residual);
}

#[test]
fn admm_tolerates_larger_penalty() {
    let ctx = case14_context();
    let t = run_dp_admm(&ctx, &AdmmConfig { rho: 1000.0 }, &PrivacyParams::non_private(0), 50, &RunOptions::default())
        .unwrap();
    assert_eq!(t.records.len(), 50);
    assert!(t.records.iter().all(|r| r.objective.is_finite() && r.h.is_finite()));
}

#[test]
fn trace_round_trips_through_json() {
    let ctx = case14_context();
    let p = PrivacyParams::new(0.5, 0.05, 3).unwrap();
    let t = run_dp_ps(&ctx, &RuleConfig::default(), &p, 3, &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    t.save(dir.path()).unwrap();
    assert_eq!(RunTrace::load(dir.path()).unwrap(), t);
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
    assert_eq!(lines.count(), 3);

    let inf =
        run_dp_ps(&ctx, &RuleConfig::default(), &PrivacyParams::non_private(1), 2, &RunOptions::default()).unwrap();
    inf.save(dir.path()).unwrap();
    assert_eq!(RunTrace::load(dir.path()).unwrap(), inf);
}

#[test]
fn trace_header_golden() {
    assert_eq!(
        TRACE_CSV_HEADER,
        "k,h,h_best,gap_pct,objective,alpha,zeta,norm_y,norm_xi,norm_direction,primal_residual,max_sensitivity,skipped,wall_time"
    );
}

proptest! {
    #[test]
    fn deflection_matches_hand_formula(
        prev in prop::collection::vec(-10.0f64..10.0, 1..20),
        seed in any::<u64>(),
        chi in 0.0f64..=2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = prev.iter().map(|_| rng.gen_range(-10.0..10.0)).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..prev.len() {
            num += prev[i] * y[i];
            den += prev[i] * prev[i];
        }
        let want = if den == 0.0 { 0.0 } else { f64::max(0.0, -chi * num / den) };
        let got = deflection(&prev, &y, chi);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn deflected_direction_is_no_longer_than_input(
        prev in prop::collection::vec(-10.0f64..10.0, 2..20),
        seed in any::<u64>(),
        chi in 0.0f64..=2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = prev.iter().map(|_| rng.gen_range(-10.0..10.0)).collect();
        let state = DualState {
            lambda: DualVector(vec![0.0; y.len()]),
            prev_direction: DualVector(prev),
            h_current: 0.0,
            h_best: 0.0,
            best_iter: 1,
            k: 2,
        };
        let cfg = RuleConfig { rule: Rule::Rule3, chi, target_value: Some(1.0), ..Default::default() };
        if let Ok(step) = step_rule(&state, &y, &cfg) {
            prop_assert!(dot(&step.direction, &step.direction) <= dot(&y, &y) * (1.0 + 1e-12));
        }
    }
}
