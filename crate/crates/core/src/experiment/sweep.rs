use rayon::prelude::*;

use super::config::SweepConfig;
use crate::dataset::{generate_holdout, generate_network_dataset, AgentDataset, NetworkDataset};
use crate::diffusion::{train, uniform_weights, TrainConfig};
use crate::metrics::{
    generalization_bound_unchecked, replacement_distances, risk_report, AgentSelection, PairSelection,
    StabilityDistances,
};
use crate::numeric::{compensated_sum, mean_and_std_error, sample_std};
use crate::rng::{derive_seed, Purpose};
use crate::robust_loss::estimate_lipschitz_constants;
use crate::topology::{build_topology, second_largest_eigenvalue_magnitude, CombinationMatrix, TopologyKind};
use crate::{Error, Result};

/// One `(topology, ε, T, trial, agent)` record. Metrics are NaN when the
/// run diverged.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub topology: TopologyKind,
    pub epsilon: f64,
    pub iterations: usize,
    pub trial: usize,
    pub agent: usize,
    pub emp_risk: f64,
    pub pop_risk: f64,
    pub pop_se: f64,
    pub gap: f64,
    pub bound: f64,
    pub bound_certified: bool,
    pub eta_hat: Option<f64>,
    pub eta_se: Option<f64>,
    pub max_iterate_norm: f64,
    pub slem: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub topology: TopologyKind,
    pub epsilon: f64,
    pub iterations: usize,
    /// Mean and sample std of the gap over trials and agents.
    pub gap_mean: f64,
    pub gap_std: f64,
    pub bound_mean: f64,
    /// Rows that entered the statistics (diverged runs are excluded).
    pub rows: usize,
}

/// Trial-level statistics of one cell: each trial contributes the mean gap
/// over its agents.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub trial_means: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub bound_mean: f64,
    pub eta_mean: Option<f64>,
    pub eta_std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
    /// `(trial, topology, ε)` runs that diverged.
    pub diverged_runs: usize,
    /// Cells whose step size violates `μ < 1 / L_ww` for the certified
    /// constants; their bound is reported but not certified.
    pub uncertified_cells: usize,
}

impl SweepResult {
    pub fn cell(&self, topology: TopologyKind, epsilon: f64, iterations: usize) -> Option<CellStats> {
        let rows: Vec<&SweepRow> = self
            .rows
            .iter()
            .filter(|r| r.topology == topology && r.epsilon == epsilon && r.iterations == iterations && !r.diverged)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let mut trials: Vec<usize> = rows.iter().map(|r| r.trial).collect();
        trials.dedup();
        let per_trial = |f: &dyn Fn(&SweepRow) -> Option<f64>| -> Option<Vec<f64>> {
            trials
                .iter()
                .map(|&t| {
                    let vals: Option<Vec<f64>> = rows.iter().filter(|r| r.trial == t).map(|r| f(r)).collect();
                    vals.map(|v| compensated_sum(v.iter().copied()) / v.len() as f64)
                })
                .collect()
        };
        let trial_means = per_trial(&|r| Some(r.gap))?;
        let (mean, std_error) = mean_and_std_error(&trial_means);
        let bound_mean = compensated_sum(rows.iter().map(|r| r.bound)) / rows.len() as f64;
        let eta = per_trial(&|r| r.eta_hat).map(|v| mean_and_std_error(&v));
        Some(CellStats {
            trial_means,
            mean,
            std_error,
            bound_mean,
            eta_mean: eta.map(|e| e.0),
            eta_std_error: eta.map(|e| e.1),
        })
    }
}

struct TrialData {
    data: NetworkDataset,
    holdout: AgentDataset,
    alternate: Option<NetworkDataset>,
    train_seed: u64,
    pair_seed: u64,
}

fn trial_data(cfg: &SweepConfig, trial: usize) -> Result<TrialData> {
    let seed = derive_seed(cfg.seed, Purpose::Trial, trial as u32);
    let gen = |purpose| {
        generate_network_dataset(cfg.agents, cfg.samples_per_agent, cfg.dim, cfg.flip_rate, derive_seed(seed, purpose, 0))
    };
    Ok(TrialData {
        data: gen(Purpose::Dataset)?,
        holdout: generate_holdout(cfg.holdout, cfg.dim, cfg.flip_rate, derive_seed(seed, Purpose::Holdout, 0))?,
        alternate: if cfg.stability { Some(gen(Purpose::Alternate)?) } else { None },
        train_seed: derive_seed(seed, Purpose::TrainingSeed, 0),
        pair_seed: derive_seed(seed, Purpose::PairSubsample, 0),
    })
}

struct Cell<'a> {
    trial: usize,
    topology: TopologyKind,
    matrix: &'a CombinationMatrix,
    slem: f64,
    epsilon: f64,
}

fn run_cell(cfg: &SweepConfig, td: &TrialData, cell: &Cell<'_>) -> Result<(Vec<SweepRow>, bool, usize)> {
    let agents = cfg.agents;
    let weights = uniform_weights(agents);
    let train_cfg = TrainConfig::new(cfg.max_iterations(), cfg.schedule, cell.epsilon, td.train_seed)
        .with_checkpoints(cfg.iterations.clone());

    let blank = |iterations: usize, agent: usize| SweepRow {
        topology: cell.topology,
        epsilon: cell.epsilon,
        iterations,
        trial: cell.trial,
        agent,
        emp_risk: f64::NAN,
        pop_risk: f64::NAN,
        pop_se: f64::NAN,
        gap: f64::NAN,
        bound: f64::NAN,
        bound_certified: false,
        eta_hat: None,
        eta_se: None,
        max_iterate_norm: f64::NAN,
        slem: cell.slem,
        diverged: true,
    };

    let run = match train(&td.data, cell.matrix, &train_cfg) {
        Ok(run) => run,
        Err(Error::Divergence { .. }) => {
            let rows = cfg
                .iterations
                .iter()
                .flat_map(|&t| (0..agents).map(move |k| (t, k)))
                .map(|(t, k)| blank(t, k))
                .collect();
            return Ok((rows, true, 0));
        }
        Err(e) => return Err(e),
    };

    let stability: Option<StabilityDistances> = match &td.alternate {
        Some(alt) => {
            let pairs = PairSelection::Subsample {
                budget: cfg.stability_pairs,
                seed: td.pair_seed,
            };
            match replacement_distances(&run, &td.data, alt, cell.matrix, &pairs) {
                Ok(d) => Some(d),
                // A replacement run that diverges leaves η̂ undefined for the cell.
                Err(Error::Divergence { .. }) => None,
                Err(e) => return Err(e),
            }
        }
        None => None,
    };

    let mut rows = Vec::with_capacity(cfg.iterations.len() * agents);
    let mut uncertified = 0;
    for &t in &cfg.iterations {
        let state = run
            .checkpoint(t)
            .expect("every configured horizon is a checkpoint");
        let report = risk_report(&state.iterates, &td.data, &td.holdout, cell.epsilon, &weights)?;
        let constants = estimate_lipschitz_constants(
            &td.data,
            &td.holdout,
            cell.epsilon,
            cfg.norm_cap.unwrap_or(state.max_iterate_norm),
        )?;
        let bound = generalization_bound_unchecked(
            &constants,
            cell.epsilon,
            &cfg.schedule,
            t,
            agents,
            cfg.samples_per_agent,
        )?;
        if !bound.certified {
            uncertified += 1;
        }
        for k in 0..agents {
            let eta = stability
                .as_ref()
                .map(|d| d.estimate(t, AgentSelection::Agent(k)))
                .transpose()?;
            rows.push(SweepRow {
                emp_risk: report.empirical[k],
                pop_risk: report.population[k].mean,
                pop_se: report.population[k].std_error,
                gap: report.gap[k],
                bound: bound.bound,
                bound_certified: bound.certified,
                eta_hat: eta.map(|e| e.eta),
                eta_se: eta.map(|e| e.std_error),
                max_iterate_norm: state.max_iterate_norm,
                diverged: false,
                ..blank(t, k)
            });
        }
    }
    Ok((rows, false, uncertified))
}

fn summarize(cfg: &SweepConfig, rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut summary = Vec::new();
    for &topology in &cfg.topologies {
        for &epsilon in &cfg.epsilons {
            for &iterations in &cfg.iterations {
                let cell: Vec<&SweepRow> = rows
                    .iter()
                    .filter(|r| {
                        r.topology == topology && r.epsilon == epsilon && r.iterations == iterations && !r.diverged
                    })
                    .collect();
                let gaps: Vec<f64> = cell.iter().map(|r| r.gap).collect();
                let n = gaps.len();
                let (gap_mean, gap_std, bound_mean) = if n == 0 {
                    (f64::NAN, f64::NAN, f64::NAN)
                } else {
                    let mean = compensated_sum(gaps.iter().copied()) / n as f64;
                    (
                        mean,
                        sample_std(&gaps, mean),
                        compensated_sum(cell.iter().map(|r| r.bound)) / n as f64,
                    )
                };
                summary.push(SummaryRow {
                    topology,
                    epsilon,
                    iterations,
                    gap_mean,
                    gap_std,
                    bound_mean,
                    rows: n,
                });
            }
        }
    }
    summary
}

/// Runs the full `trials x topologies x ε` grid. Each trial draws one
/// dataset and one holdout shared by all of its cells; each cell trains once
/// to the largest horizon and evaluates every horizon from checkpoints.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let matrices: Vec<(TopologyKind, CombinationMatrix, f64)> = cfg
        .topologies
        .iter()
        .map(|&t| {
            let m = build_topology(t, cfg.agents)?;
            let slem = second_largest_eigenvalue_magnitude(&m);
            Ok((t, m, slem))
        })
        .collect::<Result<_>>()?;

    let trials: Vec<TrialData> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| trial_data(cfg, t))
        .collect::<Result<_>>()?;

    let cells: Vec<Cell<'_>> = (0..cfg.trials)
        .flat_map(|trial| {
            let matrices = &matrices;
            matrices.iter().flat_map(move |(topology, matrix, slem)| {
                cfg.epsilons.iter().map(move |&epsilon| Cell {
                    trial,
                    topology: *topology,
                    matrix,
                    slem: *slem,
                    epsilon,
                })
            })
        })
        .collect();

    let outcomes: Vec<(Vec<SweepRow>, bool, usize)> = cells
        .par_iter()
        .map(|cell| run_cell(cfg, &trials[cell.trial], cell))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut diverged_runs = 0;
    let mut uncertified_cells = 0;
    for (r, diverged, uncertified) in outcomes {
        rows.extend(r);
        diverged_runs += diverged as usize;
        uncertified_cells += uncertified;
    }

    let position = |r: &SweepRow| {
        (
            cfg.topologies.iter().position(|&t| t == r.topology),
            cfg.epsilons.iter().position(|&e| e == r.epsilon),
            cfg.iterations.iter().position(|&t| t == r.iterations),
            r.trial,
            r.agent,
        )
    };
    rows.sort_by_key(position);

    let summary = summarize(cfg, &rows);
    Ok(SweepResult {
        rows,
        summary,
        diverged_runs,
        uncertified_cells,
    })
}
