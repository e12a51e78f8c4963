//! Synthetic two-Gaussian classification data sharded over agents.
//!
//! Each sample draws a true label uniformly from `{-1, +1}`, then features
//! `x ~ N(y_true * 1, I)`; the recorded label is the true one flipped with
//! probability `flip_rate`. Labels, features and flips use three separate
//! seeded streams (see [`crate::rng`]).

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{stream_rng, Purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Negative => -1.0,
            Label::Positive => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    pub fn from_sign(value: f64) -> Option<Self> {
        if value == 1.0 {
            Some(Label::Positive)
        } else if value == -1.0 {
            Some(Label::Negative)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Label,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: Label) -> Result<Self> {
        if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "feature {bad} is not finite"
            )));
        }
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// The local dataset `S_k` of one agent (indices are 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDataset {
    pub samples: Vec<Sample>,
    /// Whether the generator flipped each sample's label. All `false` for
    /// imported data.
    pub flipped: Vec<bool>,
}

impl AgentDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn true_label(&self, i: usize) -> Label {
        let y = self.samples[i].y;
        if self.flipped[i] {
            y.flipped()
        } else {
            y
        }
    }

    pub fn max_feature_norm(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| crate::numeric::norm(&s.x))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generation {
    pub seed: u64,
    pub flip_rate: f64,
}

/// The tuple `S = (S_1, ..., S_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDataset {
    pub agents: Vec<AgentDataset>,
    dim: usize,
    pub generation: Option<Generation>,
}

impl NetworkDataset {
    pub fn new(agents: Vec<AgentDataset>, dim: usize) -> Result<Self> {
        let per_agent = agents.first().map(|a| a.len()).ok_or_else(|| {
            Error::InvalidDataset("a network dataset needs at least one agent".into())
        })?;
        for (k, a) in agents.iter().enumerate() {
            if a.len() != per_agent || a.flipped.len() != per_agent {
                return Err(Error::ShapeMismatch(format!(
                    "agent {k} has {} samples, expected {per_agent}",
                    a.len()
                )));
            }
            if let Some(s) = a.samples.iter().find(|s| s.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.dim(),
                });
            }
        }
        Ok(Self {
            agents,
            dim,
            generation: None,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn samples_per_agent(&self) -> usize {
        self.agents[0].len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.num_agents(), self.samples_per_agent(), self.dim)
    }

    pub fn sample(&self, agent: usize, index: usize) -> &Sample {
        &self.agents[agent].samples[index]
    }

    pub fn max_feature_norm(&self) -> f64 {
        self.agents
            .iter()
            .map(AgentDataset::max_feature_norm)
            .fold(0.0, f64::max)
    }

    /// FNV-1a over shape, labels and feature bit patterns.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        let (k, n, d) = self.shape();
        eat(k as u64);
        eat(n as u64);
        eat(d as u64);
        for a in &self.agents {
            for s in &a.samples {
                eat(s.y.sign().to_bits());
                for v in &s.x {
                    eat(v.to_bits());
                }
            }
        }
        h
    }

    /// Exports as CSV with columns `agent,index,y,x_1..x_d`; features are
    /// written with 17 significant digits so the import is bit-exact.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["agent".to_string(), "index".into(), "y".into()];
        header.extend((1..=self.dim).map(|j| format!("x_{j}")));
        w.write_record(&header)?;
        for (k, a) in self.agents.iter().enumerate() {
            for (i, s) in a.samples.iter().enumerate() {
                let mut rec = vec![k.to_string(), i.to_string(), format!("{}", s.y.sign() as i8)];
                rec.extend(s.x.iter().map(|v| format!("{v:.16e}")));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Imports the CSV layout produced by [`NetworkDataset::write_csv`].
    /// Rows must be ordered by agent, then index.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let dim = r.headers()?.len().checked_sub(3).ok_or_else(|| {
            Error::InvalidDataset("header needs agent,index,y,x_1..x_d".into())
        })?;
        let mut agents: Vec<AgentDataset> = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |j: usize| rec.get(j).unwrap_or_default();
            let parse_usize = |j: usize| {
                field(j).parse::<usize>().map_err(|e| {
                    Error::InvalidDataset(format!("row {row} column {j}: {e}"))
                })
            };
            let agent = parse_usize(0)?;
            let index = parse_usize(1)?;
            let y = field(2)
                .parse::<f64>()
                .ok()
                .and_then(Label::from_sign)
                .ok_or_else(|| Error::InvalidDataset(format!("row {row}: label must be -1 or 1")))?;
            let x = (3..3 + dim)
                .map(|j| {
                    field(j).parse::<f64>().map_err(|e| {
                        Error::InvalidDataset(format!("row {row} column {j}: {e}"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if agent == agents.len() {
                agents.push(AgentDataset {
                    samples: Vec::new(),
                    flipped: Vec::new(),
                });
            }
            if agent + 1 != agents.len() {
                return Err(Error::InvalidDataset(format!("row {row}: agents out of order")));
            }
            let a = &mut agents[agent];
            if index != a.len() {
                return Err(Error::InvalidDataset(format!("row {row}: indices out of order")));
            }
            a.samples.push(Sample::new(x, y)?);
            a.flipped.push(false);
        }
        NetworkDataset::new(agents, dim)
    }
}

/// A single-sample replacement position `(agent j, sample i)`, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReplacementIndex {
    pub agent: usize,
    pub sample: usize,
}

impl ReplacementIndex {
    pub fn new(agent: usize, sample: usize) -> Self {
        Self { agent, sample }
    }

    /// All `K * N` positions in agent-major order.
    pub fn all(agents: usize, samples: usize) -> Vec<Self> {
        (0..agents)
            .flat_map(|j| (0..samples).map(move |i| Self::new(j, i)))
            .collect()
    }
}

fn check_generation_args(agents: usize, per_agent: usize, dim: usize, flip_rate: f64) -> Result<()> {
    if agents == 0 || per_agent == 0 || dim == 0 {
        return Err(Error::InvalidDataset(format!(
            "K, N and d must be positive (got K={agents}, N={per_agent}, d={dim})"
        )));
    }
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(Error::InvalidDataset(format!(
            "flip_rate must lie in [0, 1], got {flip_rate}"
        )));
    }
    Ok(())
}

pub fn generate_network_dataset(
    agents: usize,
    per_agent: usize,
    dim: usize,
    flip_rate: f64,
    seed: u64,
) -> Result<NetworkDataset> {
    check_generation_args(agents, per_agent, dim, flip_rate)?;
    let mut labels = stream_rng(seed, Purpose::Labels, 0);
    let mut features = stream_rng(seed, Purpose::Features, 0);
    let mut flips = stream_rng(seed, Purpose::Flips, 0);

    let shards = (0..agents)
        .map(|_| {
            let mut samples = Vec::with_capacity(per_agent);
            let mut flipped = Vec::with_capacity(per_agent);
            for _ in 0..per_agent {
                let truth = if labels.random::<bool>() {
                    Label::Positive
                } else {
                    Label::Negative
                };
                let mean = truth.sign();
                let x: Vec<f64> = (0..dim)
                    .map(|_| mean + features.sample::<f64, _>(StandardNormal))
                    .collect();
                let flip = flips.random::<f64>() < flip_rate;
                let y = if flip { truth.flipped() } else { truth };
                samples.push(Sample { x, y });
                flipped.push(flip);
            }
            AgentDataset { samples, flipped }
        })
        .collect();

    let mut data = NetworkDataset::new(shards, dim)?;
    data.generation = Some(Generation { seed, flip_rate });
    Ok(data)
}

/// A fresh i.i.d. sample of size `size` from the same law, used to estimate
/// population risks. Identical to agent 0 of a one-agent network dataset
/// generated with the same seed.
pub fn generate_holdout(size: usize, dim: usize, flip_rate: f64, seed: u64) -> Result<AgentDataset> {
    if size == 0 {
        return Err(Error::InvalidDataset("holdout size must be positive".into()));
    }
    let mut data = generate_network_dataset(1, size, dim, flip_rate, seed)?;
    Ok(data.agents.swap_remove(0))
}

/// `S^{(ij)}`: a copy of `base` whose sample at `idx` is taken from `other`.
pub fn replace_sample(
    base: &NetworkDataset,
    other: &NetworkDataset,
    idx: ReplacementIndex,
) -> Result<NetworkDataset> {
    if base.shape() != other.shape() {
        return Err(Error::ShapeMismatch(format!(
            "replacement source has shape {:?}, expected {:?}",
            other.shape(),
            base.shape()
        )));
    }
    let (k, n, _) = base.shape();
    if idx.agent >= k || idx.sample >= n {
        return Err(Error::IndexOutOfRange {
            agent: idx.agent,
            sample: idx.sample,
            agents: k,
            samples: n,
        });
    }
    let mut out = base.clone();
    let a = &mut out.agents[idx.agent];
    a.samples[idx.sample] = other.agents[idx.agent].samples[idx.sample].clone();
    a.flipped[idx.sample] = other.agents[idx.agent].flipped[idx.sample];
    Ok(out)
}
