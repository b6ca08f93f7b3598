//! Experiment configuration: a TOML file with global keys and repeated
//! `[[scenario]]` blocks.
//!
//! ```toml
//! mode = "gof"
//! n_train = 1000
//! n_test_id = 1000
//! n_test_ood = 1000
//! seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]
//! statistics = ["3s", "ks-arrival"]   # omit for all seven
//!
//! [[scenario]]
//! kind = "rate"
//! deltas = [0.0, 0.25, 0.5, 0.75, 1.0]
//! ```

use serde::Deserialize;

use tpp_core::simulate::{ScenarioKind, ScenarioSpec};
use tpp_core::stats::StatisticKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMode {
    /// Reference statistics from samples of the known model.
    Gof,
    /// Reference statistics from the training data; model is fitted.
    Ood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModelKind {
    Poisson,
    Hawkes,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub kind: ScenarioKind,
    pub deltas: Vec<f64>,
}

fn default_n() -> usize {
    1000
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_t_max() -> f64 {
    100.0
}

fn default_fit_model() -> FitModelKind {
    FitModelKind::Hawkes
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: TestMode,
    #[serde(default = "default_n")]
    pub n_train: usize,
    #[serde(default = "default_n")]
    pub n_test_id: usize,
    #[serde(default = "default_n")]
    pub n_test_ood: usize,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Statistic kinds to evaluate; all seven when omitted.
    #[serde(default)]
    pub statistics: Vec<StatisticKind>,
    /// Model family fitted on the training split (OoD mode only).
    #[serde(default = "default_fit_model")]
    pub fit_model: FitModelKind,
    /// Gradient-ascent iteration cap for Hawkes fits.
    #[serde(default)]
    pub fit_max_iterations: Option<usize>,
    pub scenario: Vec<ScenarioBlock>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut config: ExperimentConfig =
            toml::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        if config.statistics.is_empty() {
            config.statistics = StatisticKind::ALL.to_vec();
        }
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), String> {
        if self.n_train == 0 || self.n_test_id == 0 || self.n_test_ood == 0 {
            return Err("set sizes must be positive".into());
        }
        if self.seeds.is_empty() {
            return Err("at least one seed is required".into());
        }
        if self.scenario.is_empty() {
            return Err("at least one [[scenario]] block is required".into());
        }
        for block in &self.scenario {
            if block.deltas.is_empty() {
                return Err(format!("scenario {} has an empty delta grid", block.kind));
            }
            for &delta in &block.deltas {
                ScenarioSpec::with_t_max(block.kind, delta, self.t_max)
                    .map_err(|e| e.to_string())?;
            }
            if self.mode == TestMode::Gof && block.kind.id_model().is_none() {
                return Err(format!(
                    "scenario {} has no analytic generating model; use mode = \"ood\"",
                    block.kind
                ));
            }
        }
        Ok(())
    }

    /// Stable enumeration of all sweep cells: scenario blocks in file order,
    /// deltas in grid order, seeds in list order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        let mut index = 0u64;
        for block in &self.scenario {
            for &delta in &block.deltas {
                for &seed in &self.seeds {
                    out.push(Cell {
                        kind: block.kind,
                        delta,
                        seed,
                        index,
                    });
                    index += 1;
                }
            }
        }
        out
    }
}

/// One (scenario, delta, seed) unit of work.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub kind: ScenarioKind,
    pub delta: f64,
    pub seed: u64,
    /// Position in the full grid; spaces the cell's RNG streams.
    pub index: u64,
}

/// FNV-1a, used to fingerprint configs and model records in metadata.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
