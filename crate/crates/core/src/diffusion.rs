//! Adapt-then-combine diffusion for adversarial logistic regression.
//!
//! Each iteration `n = 1..=T`:
//!
//! 1. every agent `k` draws a local sample index uniformly with replacement
//!    and takes a gradient step on the adversarial loss,
//!    `φ_k = w_k - μ_n ∇g(w_k; x, y)`;
//! 2. every agent combines its neighbours' intermediate iterates,
//!    `w_k = Σ_l a[l][k] φ_l`.
//!
//! All agents start from `w = 0`. Sample indices come from one ChaCha stream
//! per agent keyed by `(seed, agent)`, so the `n`-th draw depends on neither
//! the dataset contents nor the horizon. This is what lets the stability
//! estimator couple a run on `S` with a run on `S^{(ij)}`, and lets a single
//! long run serve every shorter checkpoint.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{NetworkDataset, Sample};
use crate::numeric::{compensated_sum, norm, CompensatedSum};
use crate::rng::{stream_rng, Purpose};
use crate::robust_loss::{adversarial_gradient_into, RobustScorer};
use crate::topology::{CombinationMatrix, TopologyKind};
use crate::{Error, ModelVector, Result};

/// Tolerance on `Σ π_k = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `μ_n = initial / (1 + n / horizon)`.
    Decaying { initial: f64, horizon: f64 },
}

impl StepSchedule {
    /// Step size at iteration `n` (1-based).
    pub fn step(&self, n: usize) -> f64 {
        match *self {
            StepSchedule::Constant(mu) => mu,
            StepSchedule::Decaying { initial, horizon } => initial / (1.0 + n as f64 / horizon),
        }
    }

    /// `Σ_{n=1}^{T} μ_n`, compensated.
    pub fn sum(&self, iterations: usize) -> f64 {
        match *self {
            StepSchedule::Constant(mu) => mu * iterations as f64,
            _ => compensated_sum((1..=iterations).map(|n| self.step(n))),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant(mu) => mu > 0.0 && mu.is_finite(),
            StepSchedule::Decaying { initial, horizon } => {
                initial > 0.0 && initial.is_finite() && horizon > 0.0 && horizon.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidTrainConfig(format!(
                "step schedule {self:?} must have finite positive parameters"
            )))
        }
    }

    /// Returns the first `n ≤ iterations` with `μ_n ≥ 1 / l_ww`, if any.
    pub fn first_violation(&self, iterations: usize, l_ww: f64) -> Option<(usize, f64)> {
        // Both schedules are nonincreasing in n, so only n = 1 can violate first.
        if iterations == 0 {
            return None;
        }
        let mu = self.step(1);
        (mu >= 1.0 / l_ww).then_some((1, mu))
    }
}

pub fn uniform_weights(agents: usize) -> Vec<f64> {
    vec![1.0 / agents as f64; agents]
}

/// Checks `π_k ≥ 0` and `Σ π_k = 1`.
pub fn validate_agent_weights(weights: &[f64], agents: usize) -> Result<()> {
    if weights.len() != agents {
        return Err(Error::ShapeMismatch(format!(
            "{} agent weights for {agents} agents",
            weights.len()
        )));
    }
    if weights.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::InvalidTrainConfig(
            "agent weights must be nonnegative".into(),
        ));
    }
    let total = compensated_sum(weights.iter().copied());
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::InvalidTrainConfig(format!(
            "agent weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub schedule: StepSchedule,
    pub epsilon: f64,
    pub seed: u64,
    /// Agent weights `π`; `None` means uniform.
    pub agent_weights: Option<Vec<f64>>,
    pub record_trajectory: bool,
    /// Iterations at which to snapshot all iterates.
    pub checkpoints: Vec<usize>,
    /// Bound-certified mode: when set to `L_ww`, every step must satisfy
    /// `μ_n < 1 / L_ww`.
    pub certify_smoothness: Option<f64>,
}

impl TrainConfig {
    pub fn new(iterations: usize, schedule: StepSchedule, epsilon: f64, seed: u64) -> Self {
        Self {
            iterations,
            schedule,
            epsilon,
            seed,
            agent_weights: None,
            record_trajectory: false,
            checkpoints: Vec::new(),
            certify_smoothness: None,
        }
    }

    pub fn with_checkpoints(mut self, checkpoints: impl Into<Vec<usize>>) -> Self {
        self.checkpoints = checkpoints.into();
        self
    }

    pub fn with_trajectory(mut self) -> Self {
        self.record_trajectory = true;
        self
    }

    pub fn weights(&self, agents: usize) -> Vec<f64> {
        self.agent_weights
            .clone()
            .unwrap_or_else(|| uniform_weights(agents))
    }

    pub fn validate(&self, agents: usize) -> Result<()> {
        self.schedule.validate()?;
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidTrainConfig(format!(
                "perturbation radius must be finite and nonnegative, got {}",
                self.epsilon
            )));
        }
        if let Some(pi) = &self.agent_weights {
            validate_agent_weights(pi, agents)?;
        }
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c > self.iterations) {
            return Err(Error::InvalidTrainConfig(format!(
                "checkpoint {c} exceeds horizon {}",
                self.iterations
            )));
        }
        if let Some(l_ww) = self.certify_smoothness {
            if let Some((iteration, step)) = self.schedule.first_violation(self.iterations, l_ww) {
                return Err(Error::StepSizeViolation {
                    iteration,
                    step,
                    limit: 1.0 / l_ww,
                });
            }
        }
        Ok(())
    }
}

/// Uniform with-replacement sample indices for one agent.
#[derive(Debug, Clone)]
pub struct SampleStream(ChaCha8Rng);

impl SampleStream {
    pub fn new(seed: u64, agent: usize) -> Self {
        Self(stream_rng(seed, Purpose::Training, agent as u32))
    }

    pub fn next_index(&mut self, samples: usize) -> usize {
        self.0.random_range(0..samples)
    }
}

/// Iterates of all agents at some iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub iterates: Vec<ModelVector>,
    pub iteration: usize,
    /// Largest `‖w_{k,m}‖` over all agents and all `m ≤ iteration`.
    pub max_iterate_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub iteration: usize,
    pub agent: usize,
    pub iterate_norm: f64,
    pub sample_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub topology: Option<TopologyKind>,
    pub dataset_fingerprint: u64,
    /// `F_k(S) = w_{k,T}`.
    pub final_iterates: Vec<ModelVector>,
    /// Sample drawn by agent `k` at iteration `n` (1-based) sits at
    /// `(n - 1) * K + k`.
    pub sample_log: Vec<u32>,
    pub max_iterate_norm: f64,
    /// Snapshots at the configured checkpoints, ascending, deduplicated.
    pub checkpoints: Vec<NetworkState>,
    pub trajectory: Option<Vec<TrajectoryRecord>>,
}

impl TrainRun {
    pub fn num_agents(&self) -> usize {
        self.final_iterates.len()
    }

    pub fn sample_index(&self, iteration: usize, agent: usize) -> usize {
        self.sample_log[(iteration - 1) * self.num_agents() + agent] as usize
    }

    pub fn checkpoint(&self, iteration: usize) -> Option<&NetworkState> {
        self.checkpoints.iter().find(|c| c.iteration == iteration)
    }

    /// Writes `iteration,agent,iterate_norm,sample_index` rows. Requires a
    /// run with `record_trajectory` set.
    pub fn write_trajectory_csv<W: Write>(&self, writer: W) -> Result<()> {
        let records = self.trajectory.as_ref().ok_or_else(|| {
            Error::InvalidTrainConfig("run was not recorded with a trajectory".into())
        })?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "agent", "iterate_norm", "sample_index"])?;
        for r in records {
            w.write_record(&[
                r.iteration.to_string(),
                r.agent.to_string(),
                format!("{:.16e}", r.iterate_norm),
                r.sample_index.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `φ = w - μ ∇g(w; x, y)`.
pub fn adapt_step(w: &[f64], s: &Sample, step: f64, epsilon: f64) -> Result<ModelVector> {
    if w.len() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            actual: s.dim(),
        });
    }
    let mut out = vec![0.0; w.len()];
    adapt_into(w, s, step, epsilon, &mut out);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFiniteUpdate)
    }
}

#[inline]
fn adapt_into(w: &[f64], s: &Sample, step: f64, epsilon: f64, out: &mut [f64]) {
    adversarial_gradient_into(w, &s.x, s.y, epsilon, out);
    for (o, &wi) in out.iter_mut().zip(w) {
        *o = wi - step * *o;
    }
}

/// `w_k = Σ_l a[l][k] φ_l` for every agent `k`.
pub fn combine_step(intermediate: &[ModelVector], a: &CombinationMatrix) -> Result<Vec<ModelVector>> {
    if intermediate.len() != a.agents() {
        return Err(Error::ShapeMismatch(format!(
            "{} intermediate iterates for {} agents",
            intermediate.len(),
            a.agents()
        )));
    }
    let dim = intermediate.first().map_or(0, Vec::len);
    if let Some(v) = intermediate.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.len(),
        });
    }
    let neighborhoods: Vec<_> = (0..a.agents()).map(|k| a.neighbors(k)).collect();
    let mut out = vec![vec![0.0; dim]; a.agents()];
    combine_into(intermediate, &neighborhoods, &mut out);
    Ok(out)
}

fn combine_into(intermediate: &[ModelVector], neighborhoods: &[Vec<(usize, f64)>], out: &mut [ModelVector]) {
    for (w, neighbors) in out.iter_mut().zip(neighborhoods) {
        w.fill(0.0);
        for &(l, a) in neighbors {
            for (wi, &pi) in w.iter_mut().zip(&intermediate[l]) {
                *wi += a * pi;
            }
        }
    }
}

pub fn train(data: &NetworkDataset, a: &CombinationMatrix, cfg: &TrainConfig) -> Result<TrainRun> {
    let (agents, per_agent, dim) = data.shape();
    if a.agents() != agents {
        return Err(Error::ShapeMismatch(format!(
            "combination matrix has {} agents, dataset has {agents}",
            a.agents()
        )));
    }
    cfg.validate(agents)?;

    let mut checkpoints_wanted = cfg.checkpoints.clone();
    checkpoints_wanted.sort_unstable();
    checkpoints_wanted.dedup();
    let mut next_checkpoint = checkpoints_wanted.iter().copied().peekable();

    let neighborhoods: Vec<_> = (0..agents).map(|k| a.neighbors(k)).collect();
    let mut streams: Vec<SampleStream> = (0..agents).map(|k| SampleStream::new(cfg.seed, k)).collect();
    let mut iterates = vec![vec![0.0; dim]; agents];
    let mut intermediate = vec![vec![0.0; dim]; agents];
    let mut sample_log = Vec::with_capacity(cfg.iterations * agents);
    let mut drawn = vec![0usize; agents];
    let mut trajectory = cfg.record_trajectory.then(Vec::new);
    let mut checkpoints = Vec::with_capacity(checkpoints_wanted.len());
    let mut max_norm = 0.0f64;

    if next_checkpoint.next_if_eq(&0).is_some() {
        checkpoints.push(NetworkState {
            iterates: iterates.clone(),
            iteration: 0,
            max_iterate_norm: 0.0,
        });
    }

    for n in 1..=cfg.iterations {
        let step = cfg.schedule.step(n);
        for k in 0..agents {
            let idx = streams[k].next_index(per_agent);
            drawn[k] = idx;
            sample_log.push(idx as u32);
            adapt_into(&iterates[k], data.sample(k, idx), step, cfg.epsilon, &mut intermediate[k]);
        }
        combine_into(&intermediate, &neighborhoods, &mut iterates);

        for (k, w) in iterates.iter().enumerate() {
            let wn = norm(w);
            if !wn.is_finite() {
                return Err(Error::Divergence { iteration: n, agent: k });
            }
            max_norm = max_norm.max(wn);
            if let Some(t) = trajectory.as_mut() {
                t.push(TrajectoryRecord {
                    iteration: n,
                    agent: k,
                    iterate_norm: wn,
                    sample_index: drawn[k],
                });
            }
        }
        if next_checkpoint.next_if_eq(&n).is_some() {
            checkpoints.push(NetworkState {
                iterates: iterates.clone(),
                iteration: n,
                max_iterate_norm: max_norm,
            });
        }
    }

    Ok(TrainRun {
        config: cfg.clone(),
        topology: a.kind(),
        dataset_fingerprint: data.fingerprint(),
        final_iterates: iterates,
        sample_log,
        max_iterate_norm: max_norm,
        checkpoints,
        trajectory,
    })
}

/// Runs on `data` and `other` with identical sampling randomness.
pub fn train_coupled(
    data: &NetworkDataset,
    other: &NetworkDataset,
    a: &CombinationMatrix,
    cfg: &TrainConfig,
) -> Result<(TrainRun, TrainRun)> {
    if data.shape() != other.shape() {
        return Err(Error::ShapeMismatch(format!(
            "coupled datasets have shapes {:?} and {:?}",
            data.shape(),
            other.shape()
        )));
    }
    let first = train(data, a, cfg)?;
    let second = train(other, a, cfg)?;
    debug_assert_eq!(first.sample_log, second.sample_log);
    Ok((first, second))
}

/// Weighted empirical robust objective `R_S(w) = Σ_k π_k (1/N) Σ_i g(w; x_ki, y_ki)`.
pub fn empirical_objective(w: &[f64], data: &NetworkDataset, epsilon: f64, weights: &[f64]) -> f64 {
    let scorer = RobustScorer::new(w, epsilon);
    let per_agent = data.samples_per_agent() as f64;
    compensated_sum(data.agents.iter().zip(weights).map(|(a, &p)| {
        p * compensated_sum(a.samples.iter().map(|s| scorer.loss(s))) / per_agent
    }))
}

fn empirical_gradient(w: &[f64], data: &NetworkDataset, epsilon: f64, weights: &[f64], out: &mut [f64]) {
    let per_agent = data.samples_per_agent() as f64;
    let mut acc: Vec<CompensatedSum> = vec![CompensatedSum::new(); w.len()];
    let mut g = vec![0.0; w.len()];
    for (a, &p) in data.agents.iter().zip(weights) {
        for s in &a.samples {
            adversarial_gradient_into(w, &s.x, s.y, epsilon, &mut g);
            for (c, gi) in acc.iter_mut().zip(&g) {
                c.add(p * gi / per_agent);
            }
        }
    }
    for (o, c) in out.iter_mut().zip(&acc) {
        *o = c.total();
    }
}

/// Gradient-norm threshold at which the batch minimiser stops.
pub const BATCH_GRADIENT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSolution {
    pub w: ModelVector,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// `false` when the iteration budget ran out first.
    pub converged: bool,
    /// `R_S` at the start and after every accepted step.
    pub objective_history: Vec<f64>,
}

/// Full-batch gradient descent on `R_S` from `w = 0`.
///
/// A step that would raise the objective (possible near the kink of
/// `ε ‖w‖` at the origin) is retried with half the step size, so the
/// objective sequence is non-increasing.
pub fn batch_minimizer(
    data: &NetworkDataset,
    epsilon: f64,
    weights: &[f64],
    max_iterations: usize,
    step: f64,
) -> Result<BatchSolution> {
    validate_agent_weights(weights, data.num_agents())?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidTrainConfig(format!("step {step} must be positive")));
    }
    let dim = data.dim();
    let mut w = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut candidate = vec![0.0; dim];
    let mut objective = empirical_objective(&w, data, epsilon, weights);
    let mut history = vec![objective];
    let mut converged = false;
    let mut iterations = 0;

    empirical_gradient(&w, data, epsilon, weights, &mut grad);
    let mut gradient_norm = norm(&grad);
    while iterations < max_iterations {
        if gradient_norm < BATCH_GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let mut trial_step = step;
        let mut accepted = None;
        for _ in 0..60 {
            for ((c, &wi), &gi) in candidate.iter_mut().zip(&w).zip(&grad) {
                *c = wi - trial_step * gi;
            }
            let value = empirical_objective(&candidate, data, epsilon, weights);
            if !value.is_finite() {
                return Err(Error::Divergence {
                    iteration: iterations + 1,
                    agent: 0,
                });
            }
            if value <= objective {
                accepted = Some(value);
                break;
            }
            trial_step *= 0.5;
        }
        iterations += 1;
        let Some(value) = accepted else {
            // No decrease at any scale: numerically stationary.
            converged = true;
            break;
        };
        std::mem::swap(&mut w, &mut candidate);
        objective = value;
        history.push(objective);
        empirical_gradient(&w, data, epsilon, weights, &mut grad);
        gradient_norm = norm(&grad);
    }
    if !converged && gradient_norm < BATCH_GRADIENT_TOLERANCE {
        converged = true;
    }

    Ok(BatchSolution {
        w,
        gradient_norm,
        iterations,
        converged,
        objective_history: history,
    })
}
