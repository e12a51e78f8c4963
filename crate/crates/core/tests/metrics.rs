mod support;

use adversarial_diffusion::dataset::{generate_holdout, generate_network_dataset, ReplacementIndex};
use adversarial_diffusion::diffusion::{batch_minimizer, train, uniform_weights, StepSchedule, TrainConfig};
use adversarial_diffusion::metrics::{
    empirical_robust_risk, excess_risk_for, excess_risk_report, generalization_bound,
    generalization_bound_unchecked, generalization_gap, on_average_stability, population_robust_risk,
    stability_distances, AgentSelection, PairSelection,
};
use adversarial_diffusion::robust_loss::{estimate_lipschitz_constants, LipschitzConstants};
use adversarial_diffusion::topology::{build_topology, TopologyKind};
use adversarial_diffusion::Error;
use std::f64::consts::LN_2;
use support::*;

#[test]
fn zero_weights_give_ln2_everywhere() {
    let data = generate_network_dataset(3, 4, 5, 0.1, 1).unwrap();
    let holdout = generate_holdout(100, 5, 0.1, 2).unwrap();
    for eps in [0.0, 0.2, 3.0] {
        let r = empirical_robust_risk(&[0.0; 5], &data, eps, &uniform_weights(3)).unwrap();
        assert!(r.per_agent.iter().all(|&v| v == LN_2));
        assert!((r.total - LN_2).abs() < 1e-16);
        let p = population_robust_risk(&[0.0; 5], &holdout, eps).unwrap();
        assert_eq!(p.mean, LN_2);
        assert_eq!(p.std_error, 0.0);
    }
}

#[test]
fn hand_summed_two_agent_risk() {
    let data = network(vec![
        vec![sample(&[1.0, 0.0], 1.0), sample(&[0.0, 2.0], -1.0)],
        vec![sample(&[-1.0, 1.0], 1.0), sample(&[2.0, 2.0], 1.0)],
    ]);
    let w = [0.5, -0.25];
    let eps = 0.1;
    let wn = (0.25f64 + 0.0625).sqrt();
    let g = |m: f64| (1.0 + (-(m - eps * wn)).exp()).ln();
    // Margins y<x,w>: 0.5, 0.5, -0.75, 0.5.
    let agent0 = (g(0.5) + g(0.5)) / 2.0;
    let agent1 = (g(-0.75) + g(0.5)) / 2.0;
    let r = empirical_robust_risk(&w, &data, eps, &[0.25, 0.75]).unwrap();
    assert!((r.per_agent[0] - agent0).abs() < 1e-15);
    assert!((r.per_agent[1] - agent1).abs() < 1e-15);
    assert!((r.total - (0.25 * agent0 + 0.75 * agent1)).abs() < 1e-15);
    assert!(empirical_robust_risk(&w, &data, eps, &[0.5, 0.6]).is_err());
}

#[test]
fn zero_radius_is_the_mean_clean_loss() {
    let data = generate_network_dataset(2, 6, 3, 0.1, 3).unwrap();
    let w = [0.3, -0.1, 0.7];
    let r = empirical_robust_risk(&w, &data, 0.0, &uniform_weights(2)).unwrap();
    for (k, a) in data.agents.iter().enumerate() {
        let direct: f64 = a.samples.iter().map(|s| clean(&w, &s.x, s.y.sign())).sum::<f64>() / 6.0;
        assert!((r.per_agent[k] - direct).abs() < 1e-14);
    }
}

#[test]
fn identical_agents_weigh_out() {
    let one = generate_network_dataset(1, 5, 3, 0.1, 4).unwrap();
    let data = adversarial_diffusion::dataset::NetworkDataset::new(vec![one.agents[0].clone(); 4], 3).unwrap();
    let r = empirical_robust_risk(&[0.2, 0.4, -0.3], &data, 0.1, &uniform_weights(4)).unwrap();
    assert!((r.total - r.per_agent[0]).abs() < 1e-15);
}

#[test]
fn population_estimate_is_consistent_across_halves() {
    let holdout = generate_holdout(20_000, 10, 0.1, 5).unwrap();
    let (a, b) = holdout.samples.split_at(10_000);
    let w = random_vector(&mut rng(6), 10, 0.5);
    for eps in [0.0, 0.3] {
        let pa = population_robust_risk(&w, &agent(a.to_vec()), eps).unwrap();
        let pb = population_robust_risk(&w, &agent(b.to_vec()), eps).unwrap();
        let se = pa.std_error.hypot(pb.std_error);
        assert!((pa.mean - pb.mean).abs() <= 3.0 * se, "{pa:?} {pb:?}");
    }
}

#[test]
fn gap_vanishes_when_holdout_is_the_training_set() {
    let data = generate_network_dataset(1, 30, 4, 0.1, 7).unwrap();
    let holdout = generate_holdout(30, 4, 0.1, 7).unwrap();
    assert_eq!(holdout, data.agents[0]);
    let run = train(&data, &build_topology(TopologyKind::Complete, 1).unwrap(), &TrainConfig::new(200, StepSchedule::Constant(0.05), 0.2, 8)).unwrap();
    let report = generalization_gap(&run, &data, &holdout, 0.2, &[1.0]).unwrap();
    assert_eq!(report.gap, vec![0.0]);
}

#[test]
fn gap_vanishes_before_training() {
    let data = generate_network_dataset(4, 5, 6, 0.1, 9).unwrap();
    let holdout = generate_holdout(500, 6, 0.1, 10).unwrap();
    let run = train(&data, &build_topology(TopologyKind::Ring, 4).unwrap(), &TrainConfig::new(0, StepSchedule::Constant(0.03), 0.1, 11)).unwrap();
    let report = generalization_gap(&run, &data, &holdout, 0.1, &uniform_weights(4)).unwrap();
    assert!(report.gap.iter().all(|&g| g == 0.0));
    assert_eq!(report.mean_gap, 0.0);
    assert_eq!(report.weighted_gap, 0.0);
}

#[test]
fn report_aggregates_per_agent_gaps() {
    let data = generate_network_dataset(3, 5, 6, 0.1, 12).unwrap();
    let holdout = generate_holdout(500, 6, 0.1, 13).unwrap();
    let pi = [0.2, 0.3, 0.5];
    let mut cfg = TrainConfig::new(100, StepSchedule::Constant(0.05), 0.1, 14);
    cfg.agent_weights = Some(pi.to_vec());
    let run = train(&data, &build_topology(TopologyKind::Ring, 3).unwrap(), &cfg).unwrap();
    let r = generalization_gap(&run, &data, &holdout, 0.1, &pi).unwrap();
    for k in 0..3 {
        assert_eq!(r.gap[k], r.population[k].mean - r.empirical[k]);
    }
    let weighted: f64 = r.gap.iter().zip(&pi).map(|(g, p)| g * p).sum();
    assert!((r.weighted_gap - weighted).abs() < 1e-15);
    assert!((r.mean_gap - r.gap.iter().sum::<f64>() / 3.0).abs() < 1e-15);
}

#[test]
fn stability_is_zero_without_a_change_or_without_training() {
    let data = generate_network_dataset(3, 3, 4, 0.1, 15).unwrap();
    let alt = generate_network_dataset(3, 3, 4, 0.1, 16).unwrap();
    let a = build_topology(TopologyKind::Ring, 3).unwrap();
    let cfg = TrainConfig::new(30, StepSchedule::Constant(0.05), 0.2, 17);
    let same = on_average_stability(&data, &data, &a, &cfg, &PairSelection::All, AgentSelection::All).unwrap();
    assert_eq!(same.eta, 0.0);
    let untrained = TrainConfig::new(0, StepSchedule::Constant(0.05), 0.2, 17);
    let zero = on_average_stability(&data, &alt, &a, &untrained, &PairSelection::All, AgentSelection::All).unwrap();
    assert_eq!(zero.eta, 0.0);
    let moved = on_average_stability(&data, &alt, &a, &cfg, &PairSelection::All, AgentSelection::All).unwrap();
    assert!(moved.eta > 0.0);
    assert_eq!(moved.pairs, 9);
}

#[test]
fn stability_matches_enumeration_on_a_sparse_graph() {
    let data = generate_network_dataset(3, 2, 3, 0.1, 18).unwrap();
    let alt = generate_network_dataset(3, 2, 3, 0.1, 19).unwrap();
    let a = build_topology(TopologyKind::StarLike, 3).unwrap();
    let cfg = TrainConfig::new(25, StepSchedule::Constant(0.1), 0.3, 20).with_checkpoints(vec![10]);
    let manual_cfg = cfg.clone().with_checkpoints(vec![10, 25]);
    let base = train(&data, &a, &manual_cfg).unwrap();
    let dists = stability_distances(&data, &alt, &a, &cfg, &PairSelection::All).unwrap();
    assert_eq!(dists.checkpoints, vec![10, 25]);
    for (c, t) in [(0, 10), (1, 25)] {
        let mut all = 0.0;
        for k in 0..3 {
            let mut manual = 0.0;
            for (p, idx) in ReplacementIndex::all(3, 2).into_iter().enumerate() {
                let mut replaced = data.clone();
                replaced.agents[idx.agent].samples[idx.sample] = alt.agents[idx.agent].samples[idx.sample].clone();
                let run = train(&replaced, &a, &manual_cfg).unwrap();
                let (wb, wr) = (&base.checkpoint(t).unwrap().iterates[k], &run.checkpoint(t).unwrap().iterates[k]);
                let d = naive_norm(&wb.iter().zip(wr).map(|(x, y)| x - y).collect::<Vec<_>>());
                assert!((dists.distance(p, c, k) - d).abs() <= 1e-15);
                manual += d;
            }
            manual /= 6.0;
            all += manual / 3.0;
            let est = dists.estimate(t, AgentSelection::Agent(k)).unwrap();
            assert!((est.eta - manual).abs() <= 1e-15);
        }
        assert!((dists.estimate(t, AgentSelection::All).unwrap().eta - all).abs() <= 1e-15);
    }
    assert!(dists.estimate(7, AgentSelection::All).is_err());
    assert!(dists.estimate(25, AgentSelection::Agent(3)).is_err());
}

#[test]
fn pair_selection() {
    let all = PairSelection::All.resolve(4, 5).unwrap();
    assert_eq!(all.len(), 20);
    let sub = PairSelection::Subsample { budget: 7, seed: 3 }.resolve(4, 5).unwrap();
    assert_eq!(sub.len(), 7);
    assert_eq!(sub, PairSelection::Subsample { budget: 7, seed: 3 }.resolve(4, 5).unwrap());
    let mut dedup = sub.clone();
    dedup.dedup();
    assert_eq!(dedup.len(), 7);
    assert_eq!(PairSelection::Subsample { budget: 50, seed: 3 }.resolve(4, 5).unwrap(), all);
    assert!(PairSelection::Explicit(vec![ReplacementIndex::new(4, 0)]).resolve(4, 5).is_err());
    assert!(PairSelection::Explicit(vec![]).resolve(4, 5).is_err());
}

fn constants(l_w: f64, l_ww: f64, l_wx: f64) -> LipschitzConstants {
    LipschitzConstants::new(l_w, l_ww, l_wx).unwrap()
}

#[test]
fn bound_special_cases() {
    let c = constants(2.0, 1.0, 3.0);
    let b = generalization_bound(&c, 0.1, &StepSchedule::Constant(0.03), 100, 10, 10).unwrap();
    assert!((b.bound - 3.84).abs() < 1e-12);
    assert!((b.constant_step_bound.unwrap() - 3.84).abs() < 1e-12);
    assert!(b.certified);

    // Single agent, one sample, clean training: 2 L_w² Σ μ_n.
    let b = generalization_bound(&c, 0.0, &StepSchedule::Constant(0.03), 100, 1, 1).unwrap();
    assert!((b.bound - 2.0 * 4.0 * 3.0).abs() < 1e-12);

    assert_eq!(generalization_bound(&c, 0.3, &StepSchedule::Constant(0.03), 0, 10, 10).unwrap().bound, 0.0);

    let decaying = StepSchedule::Decaying { initial: 0.5, horizon: 20.0 };
    let b = generalization_bound(&c, 0.1, &decaying, 50, 4, 5).unwrap();
    let sum: f64 = (1..=50).map(|n| 0.5 / (1.0 + n as f64 / 20.0)).sum();
    assert!((b.bound - 2.0 * 2.0 * (0.3 + 2.0 / 20.0) * sum).abs() < 1e-12);
    assert!(b.constant_step_bound.is_none());
}

#[test]
fn bound_precondition() {
    let c = constants(2.0, 50.0, 3.0);
    let err = generalization_bound(&c, 0.1, &StepSchedule::Constant(0.03), 100, 10, 10).unwrap_err();
    assert!(matches!(err, Error::StepSizeViolation { iteration: 1, .. }), "{err}");
    // The limit is exclusive.
    let c = constants(2.0, 1.0 / 0.03, 3.0);
    assert!(generalization_bound(&c, 0.1, &StepSchedule::Constant(0.03), 100, 10, 10).is_err());
    let unchecked = generalization_bound_unchecked(&c, 0.1, &StepSchedule::Constant(0.03), 100, 10, 10).unwrap();
    assert!(!unchecked.certified);
    assert!(unchecked.bound > 0.0);
    assert!(LipschitzConstants::new(0.0, 1.0, 1.0).is_err());
    assert!(generalization_bound(&constants(1.0, 1.0, 1.0), 0.1, &StepSchedule::Constant(0.03), 10, 0, 10).is_err());
}

#[test]
fn excess_risk_of_the_minimizer_has_no_optimization_error() {
    let data = generate_network_dataset(2, 8, 3, 0.2, 21).unwrap();
    let holdout = generate_holdout(1000, 3, 0.2, 22).unwrap();
    let pi = uniform_weights(2);
    let eps = 0.3;
    let sol = batch_minimizer(&data, eps, &pi, 5000, 1.0).unwrap();
    let report = excess_risk_for(&[sol.w.clone(), sol.w.clone()], &data, &holdout, &sol, eps, &pi, None).unwrap();
    for e in &report.per_agent {
        assert_eq!(e.optimization, 0.0);
        assert_eq!(e.total, e.generalization);
    }

    let untrained = train(&data, &build_topology(TopologyKind::Complete, 2).unwrap(), &TrainConfig::new(0, StepSchedule::Constant(0.03), eps, 1)).unwrap();
    let report = excess_risk_report(&untrained, &data, &holdout, &sol, eps, &pi, None).unwrap();
    let expected = LN_2 - sol.objective_history.last().unwrap();
    for e in &report.per_agent {
        assert!(e.optimization >= 0.0);
        assert!((e.optimization - expected).abs() < 1e-12);
    }
    assert!(!report.generalization_order.is_empty() && !report.optimization_order.is_empty());
}

#[test]
fn longer_training_trades_optimization_for_generalization() {
    // Protocol scale, complete graph, a few trials.
    let a = build_topology(TopologyKind::Complete, 10).unwrap();
    let pi = uniform_weights(10);
    let eps = 0.2;
    let (mut opt_short, mut opt_long, mut gap_short, mut gap_long) = (0.0, 0.0, 0.0, 0.0);
    for trial in 0..3 {
        let data = generate_network_dataset(10, 10, 200, 0.1, 100 + trial).unwrap();
        let holdout = generate_holdout(2000, 200, 0.1, 200 + trial).unwrap();
        let sol = batch_minimizer(&data, eps, &pi, 500, 0.03).unwrap();
        let run = train(&data, &a, &TrainConfig::new(800, StepSchedule::Constant(0.03), eps, 300 + trial).with_checkpoints(vec![100])).unwrap();
        let short = excess_risk_for(&run.checkpoint(100).unwrap().iterates, &data, &holdout, &sol, eps, &pi, None).unwrap();
        let long = excess_risk_report(&run, &data, &holdout, &sol, eps, &pi, None).unwrap();
        opt_short += short.mean.optimization;
        opt_long += long.mean.optimization;
        gap_short += short.mean.generalization;
        gap_long += long.mean.generalization;
    }
    assert!(opt_long < opt_short, "{opt_long} vs {opt_short}");
    assert!(gap_long > gap_short, "{gap_long} vs {gap_short}");
}

#[test]
fn estimated_constants_scale_with_iterate_norms() {
    let data = generate_network_dataset(2, 5, 4, 0.1, 23).unwrap();
    let holdout = generate_holdout(50, 4, 0.1, 24).unwrap();
    let lo = estimate_lipschitz_constants(&data, &holdout, 0.1, 1.0).unwrap();
    let hi = estimate_lipschitz_constants(&data, &holdout, 0.1, 5.0).unwrap();
    assert_eq!(lo.l_w, hi.l_w);
    assert!(hi.l_wx > lo.l_wx);
}
