use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::diffusion::StepSchedule;
use crate::topology::TopologyKind;
use crate::{Error, Result};

/// Keys accepted in config files (`key = value`, one per line, `#` starts a
/// comment, lists are comma-separated).
pub const CONFIG_KEYS: &[&str] = &[
    "agents",
    "samples",
    "dim",
    "flip_rate",
    "mu",
    "schedule",
    "decay_horizon",
    "epsilon",
    "iters",
    "topology",
    "trials",
    "seed",
    "holdout",
    "stability",
    "stability_pairs",
    "norm_cap",
    "out",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub agents: usize,
    pub samples_per_agent: usize,
    pub dim: usize,
    pub flip_rate: f64,
    pub schedule: StepSchedule,
    pub epsilons: Vec<f64>,
    pub iterations: Vec<usize>,
    pub topologies: Vec<TopologyKind>,
    pub trials: usize,
    pub seed: u64,
    pub holdout: usize,
    pub stability: bool,
    /// Replacement positions per run; `K N` or more means exhaustive.
    pub stability_pairs: usize,
    /// Iterate-norm cap `B` for the bound's constants; `None` uses the
    /// largest iterate norm observed up to each horizon.
    pub norm_cap: Option<f64>,
    pub out: PathBuf,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            agents: 10,
            samples_per_agent: 10,
            dim: 200,
            flip_rate: 0.1,
            schedule: StepSchedule::Constant(0.03),
            epsilons: vec![0.0, 0.05, 0.1, 0.2, 0.4],
            iterations: vec![50, 100, 200, 400, 800],
            topologies: TopologyKind::ALL.to_vec(),
            trials: 15,
            seed: 1,
            holdout: 10_000,
            stability: false,
            stability_pairs: 100,
            norm_cap: None,
            out: PathBuf::from("results"),
        }
    }
}

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| Error::config(key, format!("cannot parse `{}`: {e}", value.trim())))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .filter(|item| !item.trim().is_empty())
        .map(|item| parse_scalar(key, item))
        .collect()
}

fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(Error::config(key, format!("expected on|off, got `{other}`"))),
    }
}

#[derive(Debug, Default)]
struct ScheduleSpec {
    mu: Option<f64>,
    decaying: Option<bool>,
    horizon: Option<f64>,
}

impl SweepConfig {
    fn set(&mut self, key: &str, value: &str, schedule: &mut ScheduleSpec) -> Result<()> {
        match key {
            "agents" => self.agents = parse_scalar(key, value)?,
            "samples" => self.samples_per_agent = parse_scalar(key, value)?,
            "dim" => self.dim = parse_scalar(key, value)?,
            "flip_rate" => self.flip_rate = parse_scalar(key, value)?,
            "mu" => schedule.mu = Some(parse_scalar(key, value)?),
            "schedule" => {
                schedule.decaying = Some(match value.trim() {
                    "constant" => false,
                    "decaying" => true,
                    other => {
                        return Err(Error::config(key, format!("expected constant|decaying, got `{other}`")))
                    }
                })
            }
            "decay_horizon" => schedule.horizon = Some(parse_scalar(key, value)?),
            "epsilon" => self.epsilons = parse_list(key, value)?,
            "iters" => self.iterations = parse_list(key, value)?,
            "topology" => {
                self.topologies = value
                    .split(',')
                    .filter(|t| !t.trim().is_empty())
                    .map(|t| t.parse().map_err(|e: Error| Error::config(key, e.to_string())))
                    .collect::<Result<_>>()?
            }
            "trials" => self.trials = parse_scalar(key, value)?,
            "seed" => self.seed = parse_scalar(key, value)?,
            "holdout" => self.holdout = parse_scalar(key, value)?,
            "stability" => self.stability = parse_switch(key, value)?,
            "stability_pairs" => self.stability_pairs = parse_scalar(key, value)?,
            "norm_cap" => self.norm_cap = Some(parse_scalar(key, value)?),
            "out" => self.out = PathBuf::from(value.trim()),
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    fn finish_schedule(&mut self, parsed: ScheduleSpec) {
        let default_mu = match self.schedule {
            StepSchedule::Constant(mu) => mu,
            StepSchedule::Decaying { initial, .. } => initial,
        };
        let mu = parsed.mu.unwrap_or(default_mu);
        self.schedule = if parsed.decaying.unwrap_or(false) {
            StepSchedule::Decaying {
                initial: mu,
                horizon: parsed.horizon.unwrap_or(100.0),
            }
        } else {
            StepSchedule::Constant(mu)
        };
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("agents", self.agents),
            ("samples", self.samples_per_agent),
            ("dim", self.dim),
            ("trials", self.trials),
            ("holdout", self.holdout),
            ("stability_pairs", self.stability_pairs),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.flip_rate) {
            return Err(Error::config("flip_rate", "must lie in [0, 1]"));
        }
        let (mu, horizon) = match self.schedule {
            StepSchedule::Constant(mu) => (mu, 1.0),
            StepSchedule::Decaying { initial, horizon } => (initial, horizon),
        };
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::config("mu", "must be finite and positive"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config("decay_horizon", "must be finite and positive"));
        }
        if let Some(b) = self.norm_cap {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::config("norm_cap", "must be finite and nonnegative"));
            }
        }
        if self.epsilons.is_empty() {
            return Err(Error::config("epsilon", "list is empty"));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            return Err(Error::config("epsilon", format!("{e} is not a finite nonnegative radius")));
        }
        if self.iterations.is_empty() {
            return Err(Error::config("iters", "list is empty"));
        }
        if self.topologies.is_empty() {
            return Err(Error::config("topology", "list is empty"));
        }
        for t in &self.topologies {
            t.check_agents(self.agents)
                .map_err(|e| Error::config("topology", e.to_string()))?;
        }
        for (key, dup) in [
            ("epsilon", has_duplicates(&self.epsilons)),
            ("iters", has_duplicates(&self.iterations)),
            ("topology", has_duplicates(&self.topologies)),
        ] {
            if dup {
                return Err(Error::config(key, "list contains duplicates"));
            }
        }
        Ok(())
    }

    pub fn max_iterations(&self) -> usize {
        self.iterations.iter().copied().max().unwrap_or(0)
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items
        .iter()
        .enumerate()
        .any(|(i, a)| items[..i].iter().any(|b| b == a))
}

fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter_map(|(n, line)| {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                return None;
            }
            Some(match line.split_once('=') {
                Some((k, v)) => Ok((k.trim().to_string(), v.trim().to_string())),
                None => Err(Error::config(
                    format!("line {}", n + 1),
                    format!("expected `key = value`, got `{line}`"),
                )),
            })
        })
        .collect()
}

/// Builds a config from file text followed by `overrides`, starting from
/// the defaults. Later assignments win.
pub fn parse_config_str(text: &str, overrides: &[(String, String)]) -> Result<SweepConfig> {
    let mut cfg = SweepConfig::default();
    let mut schedule = ScheduleSpec::default();
    for (k, v) in parse_lines(text)?.iter().chain(overrides) {
        cfg.set(k, v, &mut schedule)?;
    }
    cfg.finish_schedule(schedule);
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `path` (if given) and applies command-line `overrides` on top.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<SweepConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::config("config", format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}
