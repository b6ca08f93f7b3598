//! Goodness-of-fit testing and out-of-distribution detection for
//! continuous-time event sequences (temporal point processes).
//!
//! The pipeline: simulate or load event sequences ([`types`], [`jsonl`],
//! [`simulate`]), fit a parametric model when the generating process is
//! unknown ([`fit`]), rescale sequences to candidate standard-Poisson
//! realizations through the model's compensator ([`model`], [`transform`]),
//! score them with a test statistic ([`stats`]), and turn scores into
//! Monte-Carlo p-values and ROC-AUC summaries ([`detect`]).

pub mod detect;
pub mod fit;
pub mod jsonl;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod special;
pub mod stats;
pub mod transform;
pub mod types;

pub use detect::{p_value, roc_auc, run_gof, run_ood, ReferenceDistribution, ReferenceSource};
pub use jsonl::{load_jsonl, save_jsonl};
pub use model::{
    deserialize_model, serialize_model, AnyModel, ConstantPoisson, ExpHawkes, GammaRenewal,
    SelfCorrecting, SineInhomogeneousPoisson, TppModel,
};
pub use rng::RngHandle;
pub use simulate::{make_scenario_pair, sample_spp, ScenarioKind, ScenarioSpec};
pub use stats::{stat_3s, StatisticKind};
pub use transform::time_rescale;
pub use types::{Dataset, EventSequence, TransformedSequence};
