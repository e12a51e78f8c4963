//! Risk, stability and bound measurements.
//!
//! Sign convention: `gap = population − empirical`, so a positive gap means
//! the model fits its training data better than fresh data.

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use crate::dataset::{replace_sample, AgentDataset, NetworkDataset, ReplacementIndex, Sample};
use crate::diffusion::{train, validate_agent_weights, BatchSolution, StepSchedule, TrainConfig, TrainRun};
use crate::numeric::{compensated_sum, distance, mean_and_std_error, sample_std};
use crate::rng::{stream_rng, Purpose};
use crate::robust_loss::{LipschitzConstants, RobustScorer};
use crate::topology::CombinationMatrix;
use crate::{Error, ModelVector, Result};

fn check_dim(w: &[f64], dim: usize) -> Result<()> {
    if w.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: w.len(),
        });
    }
    Ok(())
}

/// Mean adversarial loss of `w` over `samples`.
pub fn mean_adversarial_loss(w: &[f64], samples: &[Sample], epsilon: f64) -> f64 {
    let scorer = RobustScorer::new(w, epsilon);
    compensated_sum(samples.iter().map(|s| scorer.loss(s))) / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRisk {
    /// `R̂_k(w)` for every agent.
    pub per_agent: Vec<f64>,
    /// `R_S(w) = Σ_k π_k R̂_k(w)`.
    pub total: f64,
}

pub fn empirical_robust_risk(
    w: &[f64],
    data: &NetworkDataset,
    epsilon: f64,
    weights: &[f64],
) -> Result<EmpiricalRisk> {
    check_dim(w, data.dim())?;
    validate_agent_weights(weights, data.num_agents())?;
    let per_agent: Vec<f64> = data
        .agents
        .iter()
        .map(|a| mean_adversarial_loss(w, &a.samples, epsilon))
        .collect();
    let total = compensated_sum(per_agent.iter().zip(weights).map(|(r, p)| r * p));
    Ok(EmpiricalRisk { per_agent, total })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationRisk {
    pub mean: f64,
    /// `sample std / sqrt(M)`.
    pub std_error: f64,
}

/// Monte Carlo estimate of the robust risk on a holdout sample.
pub fn population_robust_risk(w: &[f64], holdout: &AgentDataset, epsilon: f64) -> Result<PopulationRisk> {
    if holdout.is_empty() {
        return Err(Error::InvalidDataset("holdout is empty".into()));
    }
    check_dim(w, holdout.samples[0].dim())?;
    let scorer = RobustScorer::new(w, epsilon);
    let losses: Vec<f64> = holdout.samples.iter().map(|s| scorer.loss(s)).collect();
    // Same reduction as `mean_adversarial_loss`, so identical samples give
    // identical values on both sides of the gap.
    let mean = compensated_sum(losses.iter().copied()) / losses.len() as f64;
    let std_error = sample_std(&losses, mean) / (losses.len() as f64).sqrt();
    Ok(PopulationRisk { mean, std_error })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    /// `R̂_k(F_k)`: agent `k`'s model on its own data.
    pub empirical: Vec<f64>,
    /// `R_S(F_k)`: agent `k`'s model on the whole network's data.
    pub empirical_network: Vec<f64>,
    pub population: Vec<PopulationRisk>,
    /// `population − empirical` per agent.
    pub gap: Vec<f64>,
    pub weighted_gap: f64,
    pub mean_gap: f64,
}

/// Per-agent risks of the given iterates.
pub fn risk_report(
    iterates: &[ModelVector],
    data: &NetworkDataset,
    holdout: &AgentDataset,
    epsilon: f64,
    weights: &[f64],
) -> Result<RiskReport> {
    if iterates.len() != data.num_agents() {
        return Err(Error::ShapeMismatch(format!(
            "{} iterates for {} agents",
            iterates.len(),
            data.num_agents()
        )));
    }
    let mut empirical = Vec::with_capacity(iterates.len());
    let mut empirical_network = Vec::with_capacity(iterates.len());
    let mut population = Vec::with_capacity(iterates.len());
    for (k, w) in iterates.iter().enumerate() {
        let risk = empirical_robust_risk(w, data, epsilon, weights)?;
        empirical.push(risk.per_agent[k]);
        empirical_network.push(risk.total);
        population.push(population_robust_risk(w, holdout, epsilon)?);
    }
    let gap: Vec<f64> = population
        .iter()
        .zip(&empirical)
        .map(|(p, e)| p.mean - e)
        .collect();
    let weighted_gap = compensated_sum(gap.iter().zip(weights).map(|(g, p)| g * p));
    let mean_gap = compensated_sum(gap.iter().copied()) / gap.len() as f64;
    Ok(RiskReport {
        empirical,
        empirical_network,
        population,
        gap,
        weighted_gap,
        mean_gap,
    })
}

/// Generalization gap of the final iterates of `run`.
pub fn generalization_gap(
    run: &TrainRun,
    data: &NetworkDataset,
    holdout: &AgentDataset,
    epsilon: f64,
    weights: &[f64],
) -> Result<RiskReport> {
    risk_report(&run.final_iterates, data, holdout, epsilon, weights)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairSelection {
    /// Every `(j, i)` position: the exact average over replacements.
    All,
    /// `budget` distinct positions drawn uniformly (all of them if the
    /// budget covers `K N`).
    Subsample { budget: usize, seed: u64 },
    Explicit(Vec<ReplacementIndex>),
}

impl PairSelection {
    pub fn resolve(&self, agents: usize, samples: usize) -> Result<Vec<ReplacementIndex>> {
        let all = ReplacementIndex::all(agents, samples);
        match self {
            PairSelection::All => Ok(all),
            PairSelection::Subsample { budget, seed } => {
                if *budget >= all.len() {
                    return Ok(all);
                }
                if *budget == 0 {
                    return Err(Error::InvalidTrainConfig("pair budget must be positive".into()));
                }
                let mut rng = stream_rng(*seed, Purpose::PairSubsample, 0);
                let mut chosen: Vec<usize> = sample_indices(&mut rng, all.len(), *budget).into_vec();
                chosen.sort_unstable();
                Ok(chosen.into_iter().map(|c| all[c]).collect())
            }
            PairSelection::Explicit(pairs) => {
                if pairs.is_empty() {
                    return Err(Error::InvalidTrainConfig("no replacement pairs given".into()));
                }
                if let Some(p) = pairs.iter().find(|p| p.agent >= agents || p.sample >= samples) {
                    return Err(Error::IndexOutOfRange {
                        agent: p.agent,
                        sample: p.sample,
                        agents,
                        samples,
                    });
                }
                Ok(pairs.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentSelection {
    All,
    Agent(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityEstimate {
    /// `η̂`: mean of `‖F_k(S) − F_k(S^{(ij)})‖` over the selected pairs.
    pub eta: f64,
    pub pairs: usize,
    /// Standard error of the per-pair distances.
    pub std_error: f64,
}

/// Replacement distances `‖F_k(S) − F_k(S^{(ij)})‖` for every selected pair,
/// checkpoint and agent.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityDistances {
    pub pairs: Vec<ReplacementIndex>,
    pub checkpoints: Vec<usize>,
    agents: usize,
    /// Layout `[pair][checkpoint][agent]`.
    distances: Vec<f64>,
}

impl StabilityDistances {
    pub fn distance(&self, pair: usize, checkpoint: usize, agent: usize) -> f64 {
        let c = self.checkpoints.len();
        self.distances[(pair * c + checkpoint) * self.agents + agent]
    }

    /// Aggregates the distances at iteration `iteration`.
    pub fn estimate(&self, iteration: usize, target: AgentSelection) -> Result<StabilityEstimate> {
        let c = self
            .checkpoints
            .iter()
            .position(|&t| t == iteration)
            .ok_or_else(|| Error::InvalidTrainConfig(format!("no checkpoint at iteration {iteration}")))?;
        if let AgentSelection::Agent(k) = target {
            if k >= self.agents {
                return Err(Error::ShapeMismatch(format!("agent {k} of {}", self.agents)));
            }
        }
        let per_pair: Vec<f64> = (0..self.pairs.len())
            .map(|p| match target {
                AgentSelection::Agent(k) => self.distance(p, c, k),
                AgentSelection::All => {
                    compensated_sum((0..self.agents).map(|k| self.distance(p, c, k))) / self.agents as f64
                }
            })
            .collect();
        let (eta, std_error) = mean_and_std_error(&per_pair);
        Ok(StabilityEstimate {
            eta,
            pairs: per_pair.len(),
            std_error,
        })
    }
}

/// Runs the base training on `data` once and one coupled run per selected
/// replacement, recording distances at every checkpoint of `cfg` (the
/// horizon is always included).
pub fn stability_distances(
    data: &NetworkDataset,
    alternate: &NetworkDataset,
    a: &CombinationMatrix,
    cfg: &TrainConfig,
    pairs: &PairSelection,
) -> Result<StabilityDistances> {
    let mut cfg = cfg.clone();
    cfg.record_trajectory = false;
    cfg.checkpoints.push(cfg.iterations);
    let base = train(data, a, &cfg)?;
    replacement_distances(&base, data, alternate, a, pairs)
}

/// Replacement distances against an existing run on `data`. Each coupled
/// run reuses `base.config`, hence the same sampling stream and checkpoints.
pub fn replacement_distances(
    base: &TrainRun,
    data: &NetworkDataset,
    alternate: &NetworkDataset,
    a: &CombinationMatrix,
    pairs: &PairSelection,
) -> Result<StabilityDistances> {
    if data.shape() != alternate.shape() {
        return Err(Error::ShapeMismatch(format!(
            "stability datasets have shapes {:?} and {:?}",
            data.shape(),
            alternate.shape()
        )));
    }
    if base.dataset_fingerprint != data.fingerprint() {
        return Err(Error::ShapeMismatch("base run was trained on a different dataset".into()));
    }
    let (agents, samples, _) = data.shape();
    let pairs = pairs.resolve(agents, samples)?;
    let mut cfg = base.config.clone();
    cfg.record_trajectory = false;

    let per_pair: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&idx| -> Result<Vec<f64>> {
            let replaced = replace_sample(data, alternate, idx)?;
            let run = train(&replaced, a, &cfg)?;
            debug_assert_eq!(run.sample_log, base.sample_log);
            Ok(base
                .checkpoints
                .iter()
                .zip(&run.checkpoints)
                .flat_map(|(b, r)| {
                    b.iterates
                        .iter()
                        .zip(&r.iterates)
                        .map(|(wb, wr)| distance(wb, wr))
                        .collect::<Vec<_>>()
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    Ok(StabilityDistances {
        pairs,
        checkpoints: base.checkpoints.iter().map(|c| c.iteration).collect(),
        agents,
        distances: per_pair.into_iter().flatten().collect(),
    })
}

/// On-average model stability `η̂` at the horizon of `cfg`.
pub fn on_average_stability(
    data: &NetworkDataset,
    alternate: &NetworkDataset,
    a: &CombinationMatrix,
    cfg: &TrainConfig,
    pairs: &PairSelection,
    target: AgentSelection,
) -> Result<StabilityEstimate> {
    stability_distances(data, alternate, a, cfg, pairs)?.estimate(cfg.iterations, target)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub constants: LipschitzConstants,
    pub epsilon: f64,
    pub step_sum: f64,
    /// `2 L_w (L_wx ε + L_w / (K N)) Σ μ_n`.
    pub bound: f64,
    /// `2 L_w μ T (L_wx ε + L_w / (K N))` for constant schedules.
    pub constant_step_bound: Option<f64>,
    /// Whether every step satisfies `μ_n < 1 / L_ww`.
    pub certified: bool,
}

/// Stability bound on the expected generalization gap. Fails if any step
/// violates `μ_n < 1 / L_ww`.
pub fn generalization_bound(
    constants: &LipschitzConstants,
    epsilon: f64,
    schedule: &StepSchedule,
    iterations: usize,
    agents: usize,
    samples: usize,
) -> Result<BoundReport> {
    if let Some((iteration, step)) = schedule.first_violation(iterations, constants.l_ww) {
        return Err(Error::StepSizeViolation {
            iteration,
            step,
            limit: constants.step_limit(),
        });
    }
    generalization_bound_unchecked(constants, epsilon, schedule, iterations, agents, samples)
}

/// Evaluates the bound formula without enforcing the step-size
/// precondition; [`BoundReport::certified`] records whether it held.
pub fn generalization_bound_unchecked(
    constants: &LipschitzConstants,
    epsilon: f64,
    schedule: &StepSchedule,
    iterations: usize,
    agents: usize,
    samples: usize,
) -> Result<BoundReport> {
    if agents == 0 || samples == 0 {
        return Err(Error::InvalidDataset("K and N must be positive".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidTrainConfig(format!("epsilon {epsilon} must be nonnegative")));
    }
    let c = constants;
    let total = (agents * samples) as f64;
    let rate = c.l_wx * epsilon + c.l_w / total;
    let step_sum = schedule.sum(iterations);
    let bound = 2.0 * c.l_w * rate * step_sum;

    let constant_step_bound = match *schedule {
        StepSchedule::Constant(mu) => {
            let specialised = 2.0 * c.l_w * mu * iterations as f64 * rate;
            debug_assert!((specialised - bound).abs() <= 1e-12 * bound.abs().max(1.0));
            Some(specialised)
        }
        StepSchedule::Decaying { .. } => None,
    };

    Ok(BoundReport {
        constants: *c,
        epsilon,
        step_sum,
        bound,
        constant_step_bound,
        certified: schedule.first_violation(iterations, c.l_ww).is_none(),
    })
}

/// Asymptotic orders of the two error terms, reported for reference only.
pub const GENERALIZATION_ORDER: &str = "O(mu T (eps + 1/(K N)))";
pub const OPTIMIZATION_ORDER: &str = "O(1/(mu T)) + O(mu)";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessRiskEntry {
    /// `R(F_k) − R_S(F_k)`.
    pub generalization: f64,
    /// `R_S(F_k) − R_S(ŵ)`.
    pub optimization: f64,
    /// Sum of the two: `R(F_k) − R_S(ŵ)`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcessRiskReport {
    pub per_agent: Vec<ExcessRiskEntry>,
    pub mean: ExcessRiskEntry,
    pub minimizer_objective: f64,
    pub minimizer_gradient_norm: f64,
    pub bound: Option<f64>,
    pub generalization_order: &'static str,
    pub optimization_order: &'static str,
}

/// Splits the excess risk of every agent's final model into generalization
/// and optimization error against the batch minimiser `ŵ`. Both terms use
/// the network objective `R_S`.
pub fn excess_risk_report(
    run: &TrainRun,
    data: &NetworkDataset,
    holdout: &AgentDataset,
    minimizer: &BatchSolution,
    epsilon: f64,
    weights: &[f64],
    bound: Option<&BoundReport>,
) -> Result<ExcessRiskReport> {
    excess_risk_for(&run.final_iterates, data, holdout, minimizer, epsilon, weights, bound)
}

/// [`excess_risk_report`] for arbitrary per-agent iterates.
pub fn excess_risk_for(
    iterates: &[ModelVector],
    data: &NetworkDataset,
    holdout: &AgentDataset,
    minimizer: &BatchSolution,
    epsilon: f64,
    weights: &[f64],
    bound: Option<&BoundReport>,
) -> Result<ExcessRiskReport> {
    let best = empirical_robust_risk(&minimizer.w, data, epsilon, weights)?.total;
    let per_agent = iterates
        .iter()
        .map(|w| {
            let empirical = empirical_robust_risk(w, data, epsilon, weights)?.total;
            let population = population_robust_risk(w, holdout, epsilon)?.mean;
            let generalization = population - empirical;
            let optimization = empirical - best;
            Ok(ExcessRiskEntry {
                generalization,
                optimization,
                total: generalization + optimization,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_agent.len() as f64;
    let mean_of = |f: fn(&ExcessRiskEntry) -> f64| compensated_sum(per_agent.iter().map(f)) / n;
    let mean = ExcessRiskEntry {
        generalization: mean_of(|e| e.generalization),
        optimization: mean_of(|e| e.optimization),
        total: mean_of(|e| e.total),
    };
    Ok(ExcessRiskReport {
        per_agent,
        mean,
        minimizer_objective: best,
        minimizer_gradient_norm: minimizer.gradient_norm,
        bound: bound.map(|b| b.bound),
        generalization_order: GENERALIZATION_ORDER,
        optimization_order: OPTIMIZATION_ORDER,
    })
}
