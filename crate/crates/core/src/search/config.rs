use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Beam search parameters. `alpha * beta` is the per-expansion budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Children sampled per beam node.
    pub alpha: usize,
    /// Beam width.
    pub beta: usize,
    /// Steps per rollout block, the sampled child included.
    pub n_s: usize,
    /// Total depth in environment steps.
    pub t_max: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub objective: Objective,
}

/// How candidates are ranked at selection. Ties fall to the other length,
/// then to generation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Best length seen along the candidate's path.
    #[default]
    BestLength,
    /// Length of the candidate's current solution.
    CurrentLength,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" | "best_length" => Ok(Objective::BestLength),
            "current" | "current_length" => Ok(Objective::CurrentLength),
            other => Err(invalid(format!("unknown objective `{other}`"))),
        }
    }
}

impl SearchConfig {
    pub fn new(beta: usize, alpha: usize, n_s: usize, t_max: usize) -> Self {
        Self {
            alpha,
            beta,
            n_s,
            t_max,
            seed: 0,
            objective: Objective::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha == 0 || self.beta == 0 || self.n_s == 0 {
            return Err(invalid(format!(
                "alpha, beta and n_s must be positive (got {}, {}, {})",
                self.alpha, self.beta, self.n_s
            )));
        }
        if self.t_max < self.n_s {
            return Err(invalid(format!("t_max {} is below n_s {}", self.t_max, self.n_s)));
        }
        Ok(())
    }

    pub fn budget(&self) -> usize {
        self.alpha * self.beta
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_t_max(mut self, t_max: usize) -> Self {
        self.t_max = t_max;
        self
    }
}

/// Dataset tags with a tuned configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tsp100,
    Tsp150,
    Tsp200,
    Tsp500,
    Tsp1000,
    Pdp,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Tsp100,
        Preset::Tsp150,
        Preset::Tsp200,
        Preset::Tsp500,
        Preset::Tsp1000,
        Preset::Pdp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Tsp100 => "tsp100",
            Preset::Tsp150 => "tsp150",
            Preset::Tsp200 => "tsp200",
            Preset::Tsp500 => "tsp500",
            Preset::Tsp1000 => "tsp1000",
            Preset::Pdp => "pdp",
        }
    }

    /// Rollout length used while adapting, when it differs from `n_s`.
    pub fn adapt_n_s(self) -> Option<usize> {
        match self {
            Preset::Pdp => Some(10),
            _ => None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown dataset tag `{s}`")))
    }
}

pub const DEFAULT_N_S: usize = 20;
pub const DEFAULT_T_MAX: usize = 5000;

/// The tuned `(beta, alpha)` for a dataset, with `n_s = 20`, `T_max = 5000`.
pub fn default_config(preset: Preset) -> SearchConfig {
    let (beta, alpha) = match preset {
        Preset::Tsp100 | Preset::Tsp150 => (60, 1),
        Preset::Tsp200 => (30, 2),
        Preset::Tsp500 => (15, 4),
        Preset::Tsp1000 => (5, 12),
        Preset::Pdp => (20, 2),
    };
    SearchConfig::new(beta, alpha, DEFAULT_N_S, DEFAULT_T_MAX)
}

/// [`default_config`] by tag name.
pub fn default_config_for(tag: &str) -> Result<SearchConfig> {
    tag.parse().map(default_config)
}
