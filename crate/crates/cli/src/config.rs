use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use clap::{Args, ValueEnum};
use energy_communities::data::DEFAULT_SUBSTATIONS;
use energy_communities::flow::{FlowObjective, LossModel};
use energy_communities::hec::LtDbscanConfig;
use energy_communities::kmeans::KMeansConfig;
use energy_communities::mec::MecConfig;
use energy_communities::model::watts_to_mw;
use energy_communities::sec::{KRange, SecOptConfig, TwoPhaseConfig};
use energy_communities::{CommunityKind, Error, Metric};
use serde::{Deserialize, Serialize};

/// Which microgrids of the stored fleet an algorithm sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Population {
    #[default]
    All,
    /// Positive at every timestamp.
    Positive,
    NonPositive,
    /// Most negative microgrids dropped until the fleet total is nonnegative.
    Nonnegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[default]
    HecKmeans,
    HecLdbscan,
    Mec,
    SecTabu,
    SecTwophase,
    SecExact,
}

impl Algorithm {
    pub fn kind(self) -> CommunityKind {
        match self {
            Algorithm::HecKmeans | Algorithm::HecLdbscan => CommunityKind::Hec,
            Algorithm::Mec => CommunityKind::Mec,
            Algorithm::SecTabu | Algorithm::SecTwophase | Algorithm::SecExact => CommunityKind::Sec,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::HecKmeans => "hec-kmeans",
            Algorithm::HecLdbscan => "hec-ldbscan",
            Algorithm::Mec => "mec",
            Algorithm::SecTabu => "sec-tabu",
            Algorithm::SecTwophase => "sec-twophase",
            Algorithm::SecExact => "sec-exact",
        }
    }
}

/// Effective parameters of one discovery run. Defaults are built in, a TOML
/// file overrides them, and command-line flags override both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Directory holding `microgrids.csv` and `energy.csv`.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Substation locations; simulated from the fleet when unset.
    pub substations_file: Option<PathBuf>,
    pub population: Population,
    pub metric: Metric,
    pub window_start: usize,
    /// Readings to use; the whole stored window when unset.
    pub window_len: Option<usize>,

    pub k: usize,
    pub restarts: usize,

    pub eps: f64,
    pub min: usize,
    /// Bound `L` on community net energy, watts.
    pub bound: f64,

    pub eps_ne: f64,
    pub eps_sp: f64,

    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub k_step: usize,
    pub tabu_len: usize,
    pub time_budget: f64,
    pub max_iters: usize,
    pub max_stall: usize,
    /// Two-phase admission margin `δ`, watts.
    pub margin: f64,

    pub theta: f64,
    pub uniform_theta: bool,
    pub objective: FlowObjective,
    pub substations: usize,
    /// Record wall-clock runtime in the metrics; off for byte-stable artifacts.
    pub timing: bool,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::HecKmeans,
            seed: 0,
            data: None,
            out: None,
            substations_file: None,
            population: Population::All,
            metric: Metric::Euclidean,
            window_start: 0,
            window_len: None,
            k: 20,
            restarts: 8,
            eps: 0.1,
            min: 10,
            bound: 250_000.0,
            eps_ne: 0.15,
            eps_sp: 0.05,
            k_min: None,
            k_max: None,
            k_step: 1,
            tabu_len: 10,
            time_budget: 300.0,
            max_iters: 10_000,
            max_stall: 20,
            margin: 0.0,
            theta: energy_communities::flow::DEFAULT_THETA,
            uniform_theta: true,
            objective: FlowObjective::MinLoad,
            substations: DEFAULT_SUBSTATIONS,
            timing: true,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl DiscoveryConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())).into())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn loss(&self) -> LossModel {
        LossModel {
            theta: self.theta,
            uniform: self.uniform_theta,
            metric: self.metric,
        }
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            restarts: self.restarts,
            ..KMeansConfig::new(self.k, self.seed)
        }
    }

    pub fn ldbscan(&self) -> LtDbscanConfig {
        LtDbscanConfig {
            eps: self.eps,
            min_neighbors: self.min,
            bound: watts_to_mw(self.bound),
            metric: self.metric,
        }
    }

    pub fn mec(&self) -> MecConfig {
        MecConfig {
            metric: self.metric,
            seed: self.seed,
            ..MecConfig::new(self.eps_ne, self.eps_sp)
        }
    }

    /// Explicit K range, or `None` when neither bound is set.
    pub fn k_range(&self) -> Option<KRange> {
        match (self.k_min, self.k_max) {
            (None, None) => None,
            (lo, hi) => {
                let lo = lo.or(hi).unwrap_or(1);
                Some(KRange::new(lo, hi.unwrap_or(lo), self.k_step))
            }
        }
    }

    pub fn tabu(&self) -> SecOptConfig {
        SecOptConfig {
            tabu_length: self.tabu_len,
            loss: self.loss(),
            time_budget: Duration::from_secs_f64(self.time_budget),
            max_iters: self.max_iters,
            max_stall_iters: self.max_stall,
            ..SecOptConfig::new(self.k_range().unwrap_or(KRange::single(self.k)), self.seed)
        }
    }

    pub fn two_phase(&self) -> TwoPhaseConfig {
        TwoPhaseConfig {
            k_range: self.k_range(),
            margin_mw: watts_to_mw(self.margin),
            seed: self.seed,
            metric: self.metric,
        }
    }

    /// Checks the parameters the selected algorithm will use.
    pub fn validate(&self) -> Result<(), Error> {
        self.loss().validate()?;
        if self.substations == 0 {
            return Err(invalid("at least one substation is required"));
        }
        if self.window_len == Some(0) {
            return Err(invalid("window length must be positive"));
        }
        match self.algorithm {
            Algorithm::HecKmeans => {
                if self.k == 0 || self.restarts == 0 {
                    return Err(invalid("K and restarts must be positive"));
                }
            }
            Algorithm::HecLdbscan => self.ldbscan().validate()?,
            Algorithm::Mec => self.mec().validate()?,
            Algorithm::SecTabu => {
                if !(self.time_budget > 0.0 && self.time_budget.is_finite()) {
                    return Err(invalid("time budget must be a positive number of seconds"));
                }
                self.tabu().validate()?
            }
            Algorithm::SecTwophase => self.two_phase().validate()?,
            Algorithm::SecExact => {
                if self.k_range().is_none() && self.k == 0 {
                    return Err(invalid("K must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Parameter flags shared by every subcommand that runs an algorithm. Each
/// one overrides the config file when given.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with any `DiscoveryConfig` fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding microgrids.csv and energy.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub substations_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub population: Option<Population>,
    #[arg(long = "algo", value_enum)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// euclidean or manhattan.
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub window_start: Option<usize>,
    #[arg(long)]
    pub window_len: Option<usize>,
    /// Number of communities for K-Means (and a single K for the SEC searches).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// L^t-DBSCAN neighborhood radius.
    #[arg(long)]
    pub eps: Option<f64>,
    /// L^t-DBSCAN core threshold.
    #[arg(long)]
    pub min: Option<usize>,
    /// L^t-DBSCAN bound on community net energy, watts.
    #[arg(long)]
    pub bound: Option<f64>,
    /// MEC normalized NE-distance threshold.
    #[arg(long)]
    pub eps_ne: Option<f64>,
    /// MEC normalized spatial threshold.
    #[arg(long)]
    pub eps_sp: Option<f64>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub k_step: Option<usize>,
    #[arg(long = "tabu-len")]
    pub tabu_len: Option<usize>,
    /// Tabu time budget in seconds, split evenly across K values.
    #[arg(long)]
    pub time_budget: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub max_stall: Option<usize>,
    /// Two-phase margin, watts.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Loss per 0.1 of normalized distance.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Apply the loss fraction per supplier-consumer pair instead of uniformly.
    #[arg(long)]
    pub per_pair_theta: bool,
    /// min-load or min-total-shipped.
    #[arg(long)]
    pub objective: Option<FlowObjective>,
    /// Number of simulated substations.
    #[arg(long)]
    pub substations: Option<usize>,
    /// Write zero runtime so repeated runs give identical files.
    #[arg(long)]
    pub no_timing: bool,
}

impl Overrides {
    pub fn resolve(&self) -> anyhow::Result<DiscoveryConfig> {
        let mut c = DiscoveryConfig::load(self.config.as_deref())?;
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field {
                    c.$field = v;
                })*
            };
        }
        set!(
            algorithm, seed, population, metric, window_start, k, restarts, eps, min, bound, eps_ne, eps_sp, k_step, tabu_len,
            time_budget, max_iters, max_stall, margin, theta, objective, substations
        );
        for (field, flag) in [
            (&mut c.data, &self.data),
            (&mut c.out, &self.out),
            (&mut c.substations_file, &self.substations_file),
        ] {
            if flag.is_some() {
                *field = flag.clone();
            }
        }
        if self.no_timing {
            c.timing = false;
        }
        if self.window_len.is_some() {
            c.window_len = self.window_len;
        }
        if self.k_min.is_some() {
            c.k_min = self.k_min;
        }
        if self.k_max.is_some() {
            c.k_max = self.k_max;
        }
        if self.per_pair_theta {
            c.uniform_theta = false;
        }
        Ok(c)
    }
}
