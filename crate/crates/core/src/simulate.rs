//! Samplers for the standard Poisson process, the alternative processes used
//! in the detectability sweeps, and the marked server/latency scenarios.
//!
//! Every sampler is a pure function of an [`RngHandle`]; dataset generators
//! fan out across sequences with per-sequence streams, so output is
//! bit-reproducible regardless of worker count.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{spectral_radius, AnyModel, TppModel};
use crate::rng::RngHandle;
use crate::types::{Dataset, EventSequence};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulateError {
    #[error("influence spectral radius {spectral_radius} >= decay (non-stationary)")]
    NonStationaryParameters { spectral_radius: f64 },
    #[error("invalid delta {delta} for scenario {kind}: {reason}")]
    InvalidDelta {
        kind: ScenarioKind,
        delta: f64,
        reason: String,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// The OoD scenarios: the first eight perturb an unmarked standard Poisson
/// process, the last three perturb marked processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Rate,
    Stopping,
    Renewal,
    Hawkes,
    Inhomogeneous,
    SelfCorrecting,
    IncreasingRate,
    RenewalB,
    ServerStop,
    ServerOverload,
    Latency,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 11] = [
        ScenarioKind::Rate,
        ScenarioKind::Stopping,
        ScenarioKind::Renewal,
        ScenarioKind::Hawkes,
        ScenarioKind::Inhomogeneous,
        ScenarioKind::SelfCorrecting,
        ScenarioKind::IncreasingRate,
        ScenarioKind::RenewalB,
        ScenarioKind::ServerStop,
        ScenarioKind::ServerOverload,
        ScenarioKind::Latency,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Rate => "rate",
            ScenarioKind::Stopping => "stopping",
            ScenarioKind::Renewal => "renewal",
            ScenarioKind::Hawkes => "hawkes",
            ScenarioKind::Inhomogeneous => "inhomogeneous",
            ScenarioKind::SelfCorrecting => "self-correcting",
            ScenarioKind::IncreasingRate => "increasing-rate",
            ScenarioKind::RenewalB => "renewal-b",
            ScenarioKind::ServerStop => "server-stop",
            ScenarioKind::ServerOverload => "server-overload",
            ScenarioKind::Latency => "latency",
        }
    }

    /// Mark count of sequences generated by this scenario.
    pub fn num_marks(&self) -> usize {
        match self {
            ScenarioKind::ServerStop | ScenarioKind::ServerOverload => 3,
            ScenarioKind::Latency => 2,
            _ => 1,
        }
    }

    /// The in-distribution generating model, when it is expressible in the
    /// parametric family (everything except the trigger/response process).
    pub fn id_model(&self) -> Option<AnyModel> {
        match self {
            ScenarioKind::ServerStop | ScenarioKind::ServerOverload => Some(
                crate::model::ExpHawkes::new(server_mu().to_vec(), server_influence(), 1.0)
                    .expect("server parameters are stationary")
                    .into(),
            ),
            ScenarioKind::Latency => None,
            _ => Some(crate::model::ConstantPoisson::standard().into()),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

/// A scenario instance: which alternative process, how far it deviates from
/// the null (`delta`), and the observation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub delta: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
}

fn default_t_max() -> f64 {
    100.0
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, delta: f64) -> Result<Self, SimulateError> {
        Self::with_t_max(kind, delta, default_t_max())
    }

    pub fn with_t_max(kind: ScenarioKind, delta: f64, t_max: f64) -> Result<Self, SimulateError> {
        let spec = Self { kind, delta, t_max };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(SimulateError::InvalidDelta {
                kind: self.kind,
                delta: self.delta,
                reason: "delta must lie in [0, 1]".into(),
            });
        }
        if matches!(self.kind, ScenarioKind::Renewal | ScenarioKind::RenewalB) && self.delta >= 1.0
        {
            return Err(SimulateError::InvalidDelta {
                kind: self.kind,
                delta: self.delta,
                reason: "gamma shape degenerates at delta = 1; use delta <= 0.95".into(),
            });
        }
        if self.t_max <= 0.0 || !self.t_max.is_finite() {
            return Err(SimulateError::InvalidParameter(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        Ok(())
    }
}

// Server scenario parameters: a server mark feeding two worker marks.
fn server_mu() -> [f64; 3] {
    [3.0, 0.0, 0.0]
}

fn server_influence() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
    ]
}

fn server_influence_stop() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0],
    ]
}

fn server_influence_overload() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
        vec![2.0, 0.0, 0.0],
    ]
}

/// Exponential(1) draw, re-drawn in the (measure-zero) case of exactly 0.
fn positive_exp1<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let e: f64 = Exp1.sample(rng);
        if e > 0.0 {
            return e;
        }
    }
}

/// Append `gap` to `t`, re-drawing via `draw` while the sum does not move
/// strictly forward (floating-point tie guard).
fn advance<R: Rng>(t: f64, mut gap: f64, rng: &mut R, draw: impl Fn(&mut R) -> f64) -> f64 {
    loop {
        let next = t + gap;
        if next > t {
            return next;
        }
        gap = draw(rng);
    }
}

/// Standard Poisson process on `(0, t_max]`: cumulative unit-rate
/// exponential gaps.
pub fn sample_spp(t_max: f64, rng: RngHandle) -> EventSequence {
    let mut r = rng.rng();
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t = advance(t, positive_exp1(&mut r), &mut r, positive_exp1);
        if t > t_max {
            break;
        }
        times.push(t);
    }
    EventSequence::unmarked(times, t_max).expect("sampler output is valid by construction")
}

/// Homogeneous Poisson process with one rate per mark, by superposition:
/// total-rate exponential gaps with categorical marks.
pub fn sample_poisson(rates: &[f64], t_max: f64, rng: RngHandle) -> EventSequence {
    let total: f64 = rates.iter().sum();
    let k = rates.len();
    let mut r = rng.rng();
    let mut times = Vec::new();
    let mut marks = Vec::new();
    if total > 0.0 {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| positive_exp1(rng) / total;
        let mut t = 0.0;
        loop {
            t = advance(t, draw(&mut r), &mut r, draw);
            if t > t_max {
                break;
            }
            times.push(t);
            if k > 1 {
                let u: f64 = r.random::<f64>() * total;
                let mut acc = 0.0;
                let mut mark = k - 1;
                for (i, &rate) in rates.iter().enumerate() {
                    acc += rate;
                    if u < acc {
                        mark = i;
                        break;
                    }
                }
                marks.push(mark);
            }
        }
    }
    let seq = if k > 1 {
        EventSequence::marked(times, marks, k, t_max)
    } else {
        EventSequence::unmarked(times, t_max)
    };
    seq.expect("sampler output is valid by construction")
}

/// Inhomogeneous Poisson process with intensity `max(0, 1 + β sin(ωt))`,
/// sampled by thinning with proposal rate `1 + β`.
pub fn sample_inhomogeneous_sine(
    beta: f64,
    omega: f64,
    t_max: f64,
    rng: RngHandle,
) -> EventSequence {
    let bound = 1.0 + beta;
    let mut r = rng.rng();
    let mut times = Vec::new();
    let mut t = 0.0;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| positive_exp1(rng) / bound;
    loop {
        t = advance(t, draw(&mut r), &mut r, draw);
        if t > t_max {
            break;
        }
        let intensity = (1.0 + beta * (omega * t).sin()).max(0.0);
        if r.random::<f64>() * bound < intensity {
            times.push(t);
        }
    }
    EventSequence::unmarked(times, t_max).expect("sampler output is valid by construction")
}

/// Renewal process with i.i.d. Gamma(shape, scale) inter-event times.
pub fn sample_gamma_renewal(shape: f64, scale: f64, t_max: f64, rng: RngHandle) -> EventSequence {
    let gamma = Gamma::new(shape, scale).expect("validated gamma parameters");
    let mut r = rng.rng();
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| loop {
        let g: f64 = gamma.sample(rng);
        if g > 0.0 {
            return g;
        }
    };
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t = advance(t, draw(&mut r), &mut r, draw);
        if t > t_max {
            break;
        }
        times.push(t);
    }
    EventSequence::unmarked(times, t_max).expect("sampler output is valid by construction")
}

/// Multivariate Hawkes process by Ogata thinning with exponential kernels
/// `influence[i][j] · exp(−decay (t − t_j))`.
///
/// The upper bound is re-computed from the current total intensity after
/// every candidate (valid because the kernels decay between events).
/// Requires a subcritical branching matrix unless all base rates are zero,
/// in which case the process almost surely produces no events.
pub fn sample_hawkes(
    mu: &[f64],
    influence: &[Vec<f64>],
    decay: f64,
    t_max: f64,
    rng: RngHandle,
) -> Result<EventSequence, SimulateError> {
    let k = mu.len();
    if k == 0 || influence.len() != k || influence.iter().any(|row| row.len() != k) {
        return Err(SimulateError::InvalidParameter(format!(
            "influence must be {k}x{k}"
        )));
    }
    if mu.iter().any(|&m| m < 0.0 || !m.is_finite())
        || influence
            .iter()
            .flatten()
            .any(|&a| a < 0.0 || !a.is_finite())
        || decay <= 0.0
        || !decay.is_finite()
    {
        return Err(SimulateError::InvalidParameter(
            "mu and influence must be >= 0, decay > 0".into(),
        ));
    }
    let branching: Vec<Vec<f64>> = influence
        .iter()
        .map(|row| row.iter().map(|a| a / decay).collect())
        .collect();
    let radius = spectral_radius(&branching);
    let total_mu: f64 = mu.iter().sum();
    if radius >= 1.0 && total_mu > 0.0 {
        return Err(SimulateError::NonStationaryParameters {
            spectral_radius: radius,
        });
    }

    Ok(sample_hawkes_with_switch(
        mu, influence, influence, t_max, decay, t_max, rng,
    ))
}

/// Hawkes thinning with a regime switch: events accepted before `t_switch`
/// contribute through `influence_before`, later events through
/// `influence_after`. Excitation from pre-switch events keeps decaying
/// naturally across the switch.
fn sample_hawkes_with_switch(
    mu: &[f64],
    influence_before: &[Vec<f64>],
    influence_after: &[Vec<f64>],
    t_switch: f64,
    decay: f64,
    t_max: f64,
    rng: RngHandle,
) -> EventSequence {
    let k = mu.len();
    let mut r = rng.rng();
    let mut times = Vec::new();
    let mut marks = Vec::new();
    // Excitation already accumulated per target mark.
    let mut excitation = vec![0.0; k];
    let mut t = 0.0;
    loop {
        let bound: f64 = mu.iter().sum::<f64>() + excitation.iter().sum::<f64>();
        if bound <= 0.0 {
            break;
        }
        let gap = positive_exp1(&mut r) / bound;
        let next = t + gap;
        if next > t_max {
            break;
        }
        if next <= t {
            // floating-point tie; try a fresh gap
            continue;
        }
        let decay_factor = (-decay * (next - t)).exp();
        for x in &mut excitation {
            *x *= decay_factor;
        }
        t = next;
        let intensities: Vec<f64> = (0..k).map(|i| mu[i] + excitation[i]).collect();
        let total: f64 = intensities.iter().sum();
        if r.random::<f64>() * bound < total {
            // accept; pick the mark proportionally to its intensity
            let u: f64 = r.random::<f64>() * total;
            let mut acc = 0.0;
            let mut mark = k - 1;
            for (i, &lambda) in intensities.iter().enumerate() {
                acc += lambda;
                if u < acc {
                    mark = i;
                    break;
                }
            }
            times.push(t);
            marks.push(mark);
            let matrix = if t < t_switch {
                influence_before
            } else {
                influence_after
            };
            for i in 0..k {
                excitation[i] += matrix[i][mark];
            }
        }
    }
    let seq = if k > 1 {
        EventSequence::marked(times, marks, k, t_max)
    } else {
        EventSequence::unmarked(times, t_max)
    };
    seq.expect("sampler output is valid by construction")
}

/// Self-correcting process with intensity `exp(μt − αn)`, sampled by exact
/// inversion of its compensator: given `n` past events and last time `t₀`,
/// the next arrival is `t₀ + log1p(μ E e^{αn − μt₀}) / μ` with `E ~ Exp(1)`.
pub fn sample_self_correcting(mu: f64, alpha: f64, t_max: f64, rng: RngHandle) -> EventSequence {
    assert!(mu > 0.0, "self-correcting mu must be > 0");
    assert!(alpha >= 0.0, "self-correcting alpha must be >= 0");
    let mut r = rng.rng();
    let mut times: Vec<f64> = Vec::new();
    let mut t = 0.0;
    loop {
        let n = times.len() as f64;
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let e = positive_exp1(rng);
            (mu * e * (alpha * n - mu * t).exp()).ln_1p() / mu
        };
        t = advance(t, draw(&mut r), &mut r, draw);
        if t > t_max {
            break;
        }
        times.push(t);
    }
    EventSequence::unmarked(times, t_max).expect("sampler output is valid by construction")
}

/// Trigger/response process: triggers (mark 0) from a rate-3 Poisson
/// process, responses (mark 1) at trigger time plus a Normal(offset_mean,
/// 0.1) delay. Responses landing beyond `t_max` are dropped.
fn sample_latency(offset_mean: f64, t_max: f64, rng: RngHandle) -> EventSequence {
    let normal = Normal::new(offset_mean, 0.1).expect("valid normal parameters");
    let mut r = rng.rng();
    'regen: loop {
        let mut events: Vec<(f64, usize)> = Vec::new();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| positive_exp1(rng) / 3.0;
        let mut t = 0.0;
        loop {
            t = advance(t, draw(&mut r), &mut r, draw);
            if t > t_max {
                break;
            }
            events.push((t, 0));
            let response = t + normal.sample(&mut r);
            if response > 0.0 && response <= t_max {
                events.push((response, 1));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        if events.windows(2).any(|w| w[0].0 == w[1].0) {
            // exact floating-point tie; regenerate from fresh draws
            continue 'regen;
        }
        let (times, marks): (Vec<f64>, Vec<usize>) = events.into_iter().unzip();
        return EventSequence::marked(times, marks, 2, t_max)
            .expect("sampler output is valid by construction");
    }
}

/// Draw one sequence from a parametric model.
pub fn sample_model(model: &AnyModel, t_max: f64, rng: RngHandle) -> EventSequence {
    match model {
        AnyModel::ConstantPoisson(m) => sample_poisson(m.rates(), t_max, rng),
        AnyModel::SineInhomogeneous(m) => {
            sample_inhomogeneous_sine(m.beta(), m.omega(), t_max, rng)
        }
        AnyModel::GammaRenewal(m) => sample_gamma_renewal(m.shape(), m.scale(), t_max, rng),
        AnyModel::ExpHawkes(m) => sample_hawkes(m.mu(), m.influence(), m.decay(), t_max, rng)
            .expect("constructed models are stationary"),
        AnyModel::SelfCorrecting(m) => sample_self_correcting(m.mu(), m.alpha(), t_max, rng),
    }
}

/// Draw `n` i.i.d. sequences from a model, one RNG stream per sequence.
pub fn sample_dataset(model: &AnyModel, n: usize, t_max: f64, rng: RngHandle) -> Dataset {
    let sequences: Vec<EventSequence> = (0..n as u64)
        .into_par_iter()
        .map(|i| sample_model(model, t_max, rng.offset(i)))
        .collect();
    Dataset::new(sequences, model.num_marks()).expect("sampler outputs share num_marks")
}

/// One in-distribution draw for the scenario.
pub fn sample_scenario_id(spec: &ScenarioSpec, rng: RngHandle) -> EventSequence {
    let t = spec.t_max;
    match spec.kind {
        ScenarioKind::ServerStop | ScenarioKind::ServerOverload => {
            let a = server_influence();
            sample_hawkes_with_switch(&server_mu(), &a, &a, t, 1.0, t, rng)
        }
        ScenarioKind::Latency => sample_latency(1.0, t, rng),
        _ => sample_spp(t, rng),
    }
}

/// One out-of-distribution draw for the scenario at its `delta`.
pub fn sample_scenario_ood(spec: &ScenarioSpec, rng: RngHandle) -> EventSequence {
    let d = spec.delta;
    let t = spec.t_max;
    match spec.kind {
        ScenarioKind::Rate => sample_poisson(&[1.0 - 0.5 * d], t, rng),
        ScenarioKind::IncreasingRate => sample_poisson(&[1.0 + 0.5 * d], t, rng),
        ScenarioKind::Stopping => {
            let t_stop = t * (1.0 - 0.3 * d);
            let seq = sample_spp(t, rng);
            let times: Vec<f64> = seq
                .arrival_times()
                .iter()
                .copied()
                .filter(|&u| u < t_stop)
                .collect();
            EventSequence::unmarked(times, t).expect("truncation preserves validity")
        }
        ScenarioKind::Renewal => sample_gamma_renewal(1.0 - d, 1.0 / (1.0 - d), t, rng),
        ScenarioKind::RenewalB => sample_gamma_renewal(1.0 / (1.0 - d), 1.0 - d, t, rng),
        ScenarioKind::Hawkes => sample_hawkes(&[1.0 - d], &[vec![d]], 1.0, t, rng)
            .expect("delta in [0, 1] keeps the process well defined"),
        ScenarioKind::Inhomogeneous => {
            sample_inhomogeneous_sine(2.0 * d, 2.0 * std::f64::consts::PI / 50.0, t, rng)
        }
        ScenarioKind::SelfCorrecting => sample_self_correcting(d + 1e-5, d, t, rng),
        ScenarioKind::ServerStop => {
            let t_stop = t * (1.0 - 0.5 * d);
            sample_hawkes_with_switch(
                &server_mu(),
                &server_influence(),
                &server_influence_stop(),
                t_stop,
                1.0,
                t,
                rng,
            )
        }
        ScenarioKind::ServerOverload => {
            let t_stop = t * (1.0 - 0.5 * d);
            sample_hawkes_with_switch(
                &server_mu(),
                &server_influence(),
                &server_influence_overload(),
                t_stop,
                1.0,
                t,
                rng,
            )
        }
        ScenarioKind::Latency => sample_latency(1.0 + 0.5 * d, t, rng),
    }
}

/// Generate paired in-distribution / out-of-distribution datasets for a
/// scenario. Streams `rng.stream .. rng.stream + n_id` feed the ID set and
/// the following `n_ood` streams feed the OoD set.
pub fn make_scenario_pair(
    spec: &ScenarioSpec,
    n_id: usize,
    n_ood: usize,
    rng: RngHandle,
) -> Result<(Dataset, Dataset), SimulateError> {
    spec.validate()?;
    if n_id == 0 || n_ood == 0 {
        return Err(SimulateError::InvalidParameter(
            "n_id and n_ood must be positive".into(),
        ));
    }
    let k = spec.kind.num_marks();
    let id: Vec<EventSequence> = (0..n_id as u64)
        .into_par_iter()
        .map(|i| sample_scenario_id(spec, rng.offset(i)))
        .collect();
    let ood: Vec<EventSequence> = (0..n_ood as u64)
        .into_par_iter()
        .map(|j| sample_scenario_ood(spec, rng.offset(n_id as u64 + j)))
        .collect();
    Ok((
        Dataset::new(id, k).expect("scenario sequences share num_marks"),
        Dataset::new(ood, k).expect("scenario sequences share num_marks"),
    ))
}
