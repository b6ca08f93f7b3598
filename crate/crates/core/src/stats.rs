//! Test statistics for transformed (candidate standard-Poisson) sequences.
//!
//! The sum-of-squared-spacings statistic
//!
//! ```text
//! ψ(Z) = (1/V) Σ_{i=1}^{N+1} (v_i − v_{i−1})²,   v_0 = 0, v_{N+1} = V
//! ```
//!
//! is sensitive to both the event count and spacing imbalance. The classic
//! alternatives (Kolmogorov–Smirnov on arrival or inter-event times,
//! chi-squared bucket counts) and Fisher's-method combinations are provided
//! for comparison, plus the model log-likelihood statistic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, TppModel};
use crate::special::{kolmogorov_sf, poisson_cdf};
use crate::transform::{time_rescale, TransformError};
use crate::types::{EventSequence, TransformedSequence};

/// Which statistic to compute; CLI flag values in parentheses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatisticKind {
    /// Sum of squared spacings (`3s`).
    #[serde(rename = "3s")]
    ThreeS,
    /// KS distance of arrival times to Uniform (`ks-arrival`).
    #[serde(rename = "ks-arrival")]
    KsArrival,
    /// KS distance of inter-event times to Exponential(1) (`ks-interevent`).
    #[serde(rename = "ks-interevent")]
    KsInterEvent,
    /// Bucket-count chi-squared (`chi2`).
    #[serde(rename = "chi2")]
    ChiSquared,
    /// Model log-likelihood (`loglik`).
    #[serde(rename = "loglik")]
    LogLikelihood,
    /// Fisher combination of event-count and KS-arrival p-values (`fisher-arrival`).
    #[serde(rename = "fisher-arrival")]
    FisherArrival,
    /// Fisher combination of event-count and KS-inter-event p-values (`fisher-interevent`).
    #[serde(rename = "fisher-interevent")]
    FisherInterEvent,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 7] = [
        StatisticKind::ThreeS,
        StatisticKind::KsArrival,
        StatisticKind::KsInterEvent,
        StatisticKind::ChiSquared,
        StatisticKind::LogLikelihood,
        StatisticKind::FisherArrival,
        StatisticKind::FisherInterEvent,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StatisticKind::ThreeS => "3s",
            StatisticKind::KsArrival => "ks-arrival",
            StatisticKind::KsInterEvent => "ks-interevent",
            StatisticKind::ChiSquared => "chi2",
            StatisticKind::LogLikelihood => "loglik",
            StatisticKind::FisherArrival => "fisher-arrival",
            StatisticKind::FisherInterEvent => "fisher-interevent",
        }
    }
}

impl std::fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StatisticKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StatisticKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown statistic {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum StatError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Sum-of-squared-spacings statistic ψ(Z). Lies in `[V/(N+1), V]`.
pub fn stat_3s(z: &TransformedSequence) -> f64 {
    let v = z.v_max();
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &p in z.points() {
        acc += (p - prev) * (p - prev);
        prev = p;
    }
    acc += (v - prev) * (v - prev);
    acc / v
}

/// Mean and variance of ψ under the standard Poisson process on `[0, V]`.
pub fn spp_moments(v_max: f64) -> (f64, f64) {
    let v = v_max;
    let e = (-v).exp();
    let mean = 2.0 / v * (v + e - 1.0);
    let variance = 4.0 / (v * v) * (2.0 * v - 7.0 + e * (2.0 * v * v + 4.0 * v + 8.0 - e));
    (mean, variance)
}

/// KS statistic on arrival times: `√N · sup_u |F̂_arr(u) − u/V|`,
/// the supremum evaluated exactly at the step points. Zero when N = 0.
pub fn stat_ks_arrival(z: &TransformedSequence) -> f64 {
    let n = z.len();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let v = z.v_max();
    let mut sup = 0.0f64;
    for (i, &p) in z.points().iter().enumerate() {
        let u = p / v;
        sup = sup.max((i as f64 + 1.0) / nf - u).max(u - i as f64 / nf);
    }
    nf.sqrt() * sup
}

/// KS statistic on the N+1 inter-event times (endpoints included) against
/// Exponential(1): `√N · sup_u |F̂_int(u) − (1 − e^{−u})|`. Zero when N = 0.
pub fn stat_ks_interevent(z: &TransformedSequence) -> f64 {
    let n = z.len();
    if n == 0 {
        return 0.0;
    }
    let mut spacings = z.spacings();
    spacings.sort_by(f64::total_cmp);
    let m = spacings.len() as f64;
    let mut sup = 0.0f64;
    for (i, &w) in spacings.iter().enumerate() {
        let f = -(-w).exp_m1(); // 1 − e^{−w}
        sup = sup.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    (n as f64).sqrt() * sup
}

/// Chi-squared uniformity statistic over `buckets` equal-length buckets of
/// `[0, V]`: `Σ_b (N_b − L)² / L` with expected count `L = N / B`, i.e. the
/// observed count's share per bucket (the classical Pearson test of uniform
/// arrival times, insensitive to the event count itself). Returns 0 for
/// empty sequences. Bucket boundaries belong to the right bucket, except
/// `v = V` which belongs to the last.
pub fn stat_chi_squared(z: &TransformedSequence, buckets: usize) -> f64 {
    assert!(buckets >= 1, "need at least one bucket");
    if z.is_empty() {
        return 0.0;
    }
    let v = z.v_max();
    let b = buckets as f64;
    let mut counts = vec![0usize; buckets];
    for &p in z.points() {
        let idx = ((p / v * b) as usize).min(buckets - 1);
        counts[idx] += 1;
    }
    let expected = z.len() as f64 / b;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Default bucket count for the chi-squared statistic.
pub const CHI_SQUARED_BUCKETS: usize = 10;

/// Which KS statistic a Fisher combination is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherVariant {
    Arrival,
    InterEvent,
}

/// Fisher's method combining the two-sided Poisson(V) p-value of the event
/// count with the asymptotic-Kolmogorov p-value of the KS statistic:
/// `−2 (log p_N + log p_κ)`.
pub fn stat_fisher(z: &TransformedSequence, variant: FisherVariant) -> f64 {
    let n = z.len() as u64;
    let v = z.v_max();

    let lower = poisson_cdf(n, v);
    let upper = if n == 0 {
        1.0
    } else {
        1.0 - poisson_cdf(n - 1, v)
    };
    let p_n = (2.0 * lower.min(upper)).min(1.0);

    let p_kappa = if z.is_empty() {
        1.0
    } else {
        let kappa = match variant {
            FisherVariant::Arrival => stat_ks_arrival(z),
            FisherVariant::InterEvent => stat_ks_interevent(z),
        };
        kolmogorov_sf(kappa).min(1.0)
    };

    -2.0 * (p_n.ln() + p_kappa.ln())
}

/// Log-likelihood statistic; same contract as [`TppModel::log_likelihood`].
pub fn stat_loglik(model: &dyn TppModel, seq: &EventSequence) -> Result<f64, ModelError> {
    model.log_likelihood(seq)
}

/// Compute a statistic for a raw event sequence under a model: rescale then
/// apply the SPP statistic, or evaluate the log-likelihood directly.
pub fn compute(
    kind: StatisticKind,
    model: &dyn TppModel,
    seq: &EventSequence,
) -> Result<f64, StatError> {
    if kind == StatisticKind::LogLikelihood {
        return Ok(stat_loglik(model, seq)?);
    }
    let z = time_rescale(model, seq)?;
    Ok(match kind {
        StatisticKind::ThreeS => stat_3s(&z),
        StatisticKind::KsArrival => stat_ks_arrival(&z),
        StatisticKind::KsInterEvent => stat_ks_interevent(&z),
        StatisticKind::ChiSquared => stat_chi_squared(&z, CHI_SQUARED_BUCKETS),
        StatisticKind::FisherArrival => stat_fisher(&z, FisherVariant::Arrival),
        StatisticKind::FisherInterEvent => stat_fisher(&z, FisherVariant::InterEvent),
        StatisticKind::LogLikelihood => unreachable!(),
    })
}
