//! Doubly stochastic combination matrices.
//!
//! `a[l][k]` is the weight agent `k` applies to the intermediate iterate of
//! neighbour `l`; the neighbourhood of `k` is `{l : a[l][k] > 0}`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Tolerance for the row/column-sum checks.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// Self-weight of a leaf in the star-like graph.
pub const STAR_LEAF_SELF_WEIGHT: f64 = 0.95;
/// Weight on every hub-leaf link of the star-like graph.
pub const STAR_LINK_WEIGHT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    Complete,
    Isolated,
    Ring,
    StarLike,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 4] = [
        TopologyKind::Complete,
        TopologyKind::Isolated,
        TopologyKind::Ring,
        TopologyKind::StarLike,
    ];

    pub fn token(self) -> &'static str {
        match self {
            TopologyKind::Complete => "complete",
            TopologyKind::Isolated => "isolated",
            TopologyKind::Ring => "ring",
            TopologyKind::StarLike => "starlike",
        }
    }

    /// Checks that `agents` is admissible for this kind.
    pub fn check_agents(self, agents: usize) -> Result<()> {
        if agents == 0 {
            return Err(Error::InvalidTopology(format!(
                "{}: need at least one agent",
                self.token()
            )));
        }
        match self {
            TopologyKind::Ring if agents < 3 => Err(Error::InvalidTopology(format!(
                "ring: requires K >= 3, got K = {agents}"
            ))),
            TopologyKind::StarLike if agents < 2 => Err(Error::InvalidTopology(format!(
                "starlike: requires K >= 2, got K = {agents}"
            ))),
            TopologyKind::StarLike if STAR_LINK_WEIGHT * (agents - 1) as f64 > 1.0 => {
                Err(Error::InvalidTopology(format!(
                    "starlike: requires 0.05*(K-1) <= 1 so the hub self-weight is nonnegative, got K = {agents}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "complete" => Ok(TopologyKind::Complete),
            "isolated" => Ok(TopologyKind::Isolated),
            "ring" => Ok(TopologyKind::Ring),
            "starlike" => Ok(TopologyKind::StarLike),
            other => Err(Error::InvalidTopology(format!(
                "unknown topology `{other}` (expected complete|isolated|ring|starlike)"
            ))),
        }
    }
}

/// A `K x K` matrix of combination weights, stored row-major by `l`.
///
/// Construction through [`build_topology`] always yields a doubly stochastic
/// matrix; [`CombinationMatrix::from_weights`] accepts arbitrary entries so
/// that [`validate_combination_matrix`] can report on them.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    agents: usize,
    weights: Vec<f64>,
    kind: Option<TopologyKind>,
}

impl CombinationMatrix {
    pub fn from_weights(agents: usize, weights: Vec<f64>) -> Result<Self> {
        if agents == 0 || weights.len() != agents * agents {
            return Err(Error::ShapeMismatch(format!(
                "combination matrix needs {agents}x{agents} entries, got {}",
                weights.len()
            )));
        }
        Ok(Self {
            agents,
            weights,
            kind: None,
        })
    }

    pub fn identity(agents: usize) -> Self {
        let mut weights = vec![0.0; agents * agents];
        for k in 0..agents {
            weights[k * agents + k] = 1.0;
        }
        Self {
            agents,
            weights,
            kind: None,
        }
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    /// The topology this matrix was built from, if any.
    pub fn kind(&self) -> Option<TopologyKind> {
        self.kind
    }

    /// `a[l][k]`: weight agent `k` applies to neighbour `l`.
    #[inline]
    pub fn weight(&self, from: usize, to: usize) -> f64 {
        self.weights[from * self.agents + to]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Neighbourhood `N_k = {l : a[l][k] > 0}` with the corresponding weights.
    pub fn neighbors(&self, agent: usize) -> Vec<(usize, f64)> {
        (0..self.agents)
            .map(|l| (l, self.weight(l, agent)))
            .filter(|&(_, a)| a > 0.0)
            .collect()
    }

    /// Returns `P^T A P` for the relabelling `new index = perm[old index]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.agents {
            return Err(Error::ShapeMismatch(format!(
                "permutation of length {} for {} agents",
                perm.len(),
                self.agents
            )));
        }
        let k = self.agents;
        let mut weights = vec![0.0; k * k];
        for l in 0..k {
            for m in 0..k {
                weights[perm[l] * k + perm[m]] = self.weight(l, m);
            }
        }
        Ok(Self {
            agents: k,
            weights,
            kind: self.kind,
        })
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.agents, self.agents, &self.weights)
    }
}

/// Builds the combination matrix for `kind` over `agents` nodes.
pub fn build_topology(kind: TopologyKind, agents: usize) -> Result<CombinationMatrix> {
    kind.check_agents(agents)?;
    let k = agents;
    let mut w = vec![0.0; k * k];
    match kind {
        TopologyKind::Complete => w.fill(1.0 / k as f64),
        TopologyKind::Isolated => {
            for i in 0..k {
                w[i * k + i] = 1.0;
            }
        }
        TopologyKind::Ring => {
            let third = 1.0 / 3.0;
            for i in 0..k {
                w[i * k + i] = third;
                w[((i + 1) % k) * k + i] = third;
                w[((i + k - 1) % k) * k + i] = third;
            }
        }
        TopologyKind::StarLike => {
            // Hub 0; every leaf links to the hub only.
            w[0] = 1.0 - STAR_LINK_WEIGHT * (k - 1) as f64;
            for leaf in 1..k {
                w[leaf * k + leaf] = STAR_LEAF_SELF_WEIGHT;
                w[leaf] = STAR_LINK_WEIGHT;
                w[leaf * k] = STAR_LINK_WEIGHT;
            }
        }
    }
    Ok(CombinationMatrix {
        agents: k,
        weights: w,
        kind: Some(kind),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOutcome {
    pub passed: bool,
    pub max_deviation: f64,
}

impl CheckOutcome {
    fn new(max_deviation: f64, tolerance: f64) -> Self {
        Self {
            passed: max_deviation <= tolerance,
            max_deviation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    /// Deviation is the magnitude of the most negative entry (0 if none).
    pub nonnegative: CheckOutcome,
    pub row_sums: CheckOutcome,
    pub column_sums: CheckOutcome,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.nonnegative.passed && self.row_sums.passed && self.column_sums.passed
    }

    pub fn max_deviation(&self) -> f64 {
        self.nonnegative
            .max_deviation
            .max(self.row_sums.max_deviation)
            .max(self.column_sums.max_deviation)
    }
}

pub fn validate_combination_matrix(m: &CombinationMatrix) -> ValidationReport {
    let k = m.agents;
    let most_negative = m
        .weights
        .iter()
        .fold(0.0f64, |acc, &a| if a < 0.0 { acc.max(-a) } else { acc });
    let mut row_dev = 0.0f64;
    let mut col_dev = 0.0f64;
    for i in 0..k {
        let row: f64 = (0..k).map(|j| m.weight(i, j)).sum();
        let col: f64 = (0..k).map(|j| m.weight(j, i)).sum();
        row_dev = row_dev.max((row - 1.0).abs());
        col_dev = col_dev.max((col - 1.0).abs());
    }
    ValidationReport {
        nonnegative: CheckOutcome {
            passed: most_negative == 0.0,
            max_deviation: most_negative,
        },
        row_sums: CheckOutcome::new(row_dev, STOCHASTIC_TOLERANCE),
        column_sums: CheckOutcome::new(col_dev, STOCHASTIC_TOLERANCE),
    }
}

/// Magnitude of the second-largest eigenvalue (by modulus) of `a`.
///
/// For a doubly stochastic matrix the leading eigenvalue is 1; the returned
/// value summarises how quickly repeated combination reaches consensus
/// (0 for exact averaging, 1 for disconnected agents).
pub fn second_largest_eigenvalue_magnitude(m: &CombinationMatrix) -> f64 {
    if m.agents == 1 {
        return 0.0;
    }
    let mut moduli: Vec<f64> = m
        .to_dmatrix()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    // Eigenvalues computed from an exactly rank-one matrix come back at
    // round-off level rather than exactly zero.
    let slem = moduli[1];
    if slem < 1e-12 {
        0.0
    } else {
        slem.min(1.0)
    }
}
