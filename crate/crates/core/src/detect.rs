//! Monte-Carlo p-values from reference distributions, test runners, and
//! ROC-AUC evaluation.
//!
//! A [`ReferenceDistribution`] holds the sorted statistic values of reference
//! sequences: model samples for a goodness-of-fit test, training data for
//! out-of-distribution detection. A query statistic is turned into a p-value
//! by its rank among the reference values with a +1 correction:
//!
//! ```text
//! min((num_below + 1) / (M + 1), (num_above + 1) / (M + 1))
//! ```
//!
//! where `num_above` counts reference values strictly greater than the
//! query. Detection quality over a pair of test sets is summarized by the
//! rank-based ROC AUC of their p-values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TppModel;
use crate::stats::{compute, StatError, StatisticKind};
use crate::types::Dataset;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("operation requires a nonempty dataset")]
    EmptyDataset,
    #[error("operation requires nonempty inputs")]
    EmptyInput,
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// Where the reference statistic values came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSource {
    /// Samples drawn from the model under test (GoF mode).
    ModelSamples,
    /// Training data from the unknown generating process (OoD mode).
    TrainingData,
}

/// Sorted statistic values over reference sequences; the EDF behind the
/// Monte-Carlo p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDistribution {
    values: Vec<f64>,
    source: ReferenceSource,
}

impl ReferenceDistribution {
    /// Sort (ascending; `-inf` sentinels first) and wrap statistic values.
    pub fn from_values(mut values: Vec<f64>, source: ReferenceSource) -> Result<Self, DetectError> {
        if values.is_empty() {
            return Err(DetectError::EmptyDataset);
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values, source })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> ReferenceSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Evaluate a statistic over every sequence of a dataset (in parallel,
/// deterministic order).
pub fn dataset_scores(
    kind: StatisticKind,
    model: &dyn TppModel,
    data: &Dataset,
) -> Result<Vec<f64>, DetectError> {
    if data.is_empty() {
        return Err(DetectError::EmptyDataset);
    }
    let scores = data
        .sequences()
        .par_iter()
        .map(|seq| compute(kind, model, seq))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(scores)
}

/// Build the reference distribution of a statistic over reference samples.
pub fn build_reference(
    kind: StatisticKind,
    model: &dyn TppModel,
    samples: &Dataset,
    source: ReferenceSource,
) -> Result<ReferenceDistribution, DetectError> {
    ReferenceDistribution::from_values(dataset_scores(kind, model, samples)?, source)
}

/// Monte-Carlo p-value of a statistic value against the reference EDF,
/// with the +1 correction. Ties count as "not above". Always in (0, 1];
/// the smallest attainable value is 1/(M+1).
pub fn p_value(reference: &ReferenceDistribution, s_x: f64) -> f64 {
    let m = reference.values.len();
    let not_above = reference.values.partition_point(|&v| v <= s_x);
    let num_above = m - not_above;
    let num_below = m - num_above;
    let denom = (m + 1) as f64;
    ((num_below + 1) as f64 / denom).min((num_above + 1) as f64 / denom)
}

/// Two-sided version of [`p_value`] (the factor-2 convention, capped at 1).
/// A monotone transform of `p_value`, so rank-based summaries agree.
pub fn two_sided_p_value(reference: &ReferenceDistribution, s_x: f64) -> f64 {
    (2.0 * p_value(reference, s_x)).min(1.0)
}

/// Rank-based ROC AUC: the probability that a random OoD p-value is below a
/// random ID p-value, ties counted one half.
pub fn roc_auc(p_id: &[f64], p_ood: &[f64]) -> Result<f64, DetectError> {
    if p_id.is_empty() || p_ood.is_empty() {
        return Err(DetectError::EmptyInput);
    }
    // merge, sort, average ranks over tied runs, sum OoD ranks
    let mut entries: Vec<(f64, bool)> = p_id
        .iter()
        .map(|&p| (p, false))
        .chain(p_ood.iter().map(|&p| (p, true)))
        .collect();
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank_sum_ood = 0.0f64;
    let mut i = 0;
    while i < entries.len() {
        let mut j = i;
        while j < entries.len() && entries[j].0 == entries[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j averaged
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for entry in &entries[i..j] {
            if entry.1 {
                rank_sum_ood += avg_rank;
            }
        }
        i = j;
    }

    let n = p_ood.len() as f64;
    let m = p_id.len() as f64;
    // pairs with OoD above ID (ties half-weighted)
    let u_above = rank_sum_ood - n * (n + 1.0) / 2.0;
    Ok((n * m - u_above) / (n * m))
}

/// Per-sequence p-values for both test sets plus their ROC AUC.
#[derive(Debug, Clone)]
pub struct TestOutcome {
    pub p_id: Vec<f64>,
    pub p_ood: Vec<f64>,
    pub auc: f64,
}

fn run_test(
    kind: StatisticKind,
    model: &dyn TppModel,
    reference_samples: &Dataset,
    source: ReferenceSource,
    d_test_id: &Dataset,
    d_test_ood: &Dataset,
) -> Result<TestOutcome, DetectError> {
    let reference = build_reference(kind, model, reference_samples, source)?;
    let p_id: Vec<f64> = dataset_scores(kind, model, d_test_id)?
        .into_iter()
        .map(|s| p_value(&reference, s))
        .collect();
    let p_ood: Vec<f64> = dataset_scores(kind, model, d_test_ood)?
        .into_iter()
        .map(|s| p_value(&reference, s))
        .collect();
    let auc = roc_auc(&p_id, &p_ood)?;
    Ok(TestOutcome { p_id, p_ood, auc })
}

/// Goodness-of-fit test run: the reference EDF comes from sequences drawn
/// from the (known) model itself.
pub fn run_gof(
    kind: StatisticKind,
    model: &dyn TppModel,
    d_model: &Dataset,
    d_test_id: &Dataset,
    d_test_ood: &Dataset,
) -> Result<TestOutcome, DetectError> {
    run_test(
        kind,
        model,
        d_model,
        ReferenceSource::ModelSamples,
        d_test_id,
        d_test_ood,
    )
}

/// Out-of-distribution detection run: the reference EDF comes from the
/// training data; the (fitted) model only supplies the compensator.
pub fn run_ood(
    kind: StatisticKind,
    fitted_model: &dyn TppModel,
    d_train: &Dataset,
    d_test_id: &Dataset,
    d_test_ood: &Dataset,
) -> Result<TestOutcome, DetectError> {
    run_test(
        kind,
        fitted_model,
        d_train,
        ReferenceSource::TrainingData,
        d_test_id,
        d_test_ood,
    )
}

/// One (scenario, delta, statistic, seed) cell of an experiment sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub delta: f64,
    pub statistic: StatisticKind,
    pub auc: f64,
    pub n_id: usize,
    pub n_ood: usize,
    pub seed: u64,
}

/// Collected sweep results, serializable to the report CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str = "scenario,delta,statistic,auc,n_id,n_ood,seed";

    pub fn csv_row(row: &ReportRow) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            row.scenario, row.delta, row.statistic, row.auc, row.n_id, row.n_ood, row.seed
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&Self::csv_row(row));
            out.push('\n');
        }
        out
    }

    /// Parse a report CSV, ignoring malformed lines (useful when resuming
    /// from a partially written ledger).
    pub fn from_csv_lossy(text: &str) -> Self {
        let mut rows = Vec::new();
        for line in text.lines().skip_while(|l| *l == Self::CSV_HEADER) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                continue;
            }
            let parsed = (|| -> Option<ReportRow> {
                Some(ReportRow {
                    scenario: fields[0].to_string(),
                    delta: fields[1].parse().ok()?,
                    statistic: fields[2].parse().ok()?,
                    auc: fields[3].parse().ok()?,
                    n_id: fields[4].parse().ok()?,
                    n_ood: fields[5].parse().ok()?,
                    seed: fields[6].parse().ok()?,
                })
            })();
            if let Some(row) = parsed {
                rows.push(row);
            }
        }
        Self { rows }
    }

    /// Canonical order: scenario, delta, statistic, seed.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.scenario
                .cmp(&b.scenario)
                .then(a.delta.total_cmp(&b.delta))
                .then(a.statistic.name().cmp(b.statistic.name()))
                .then(a.seed.cmp(&b.seed))
        });
    }
}
