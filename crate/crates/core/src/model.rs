//! Parametric temporal point process models.
//!
//! A [`TppModel`] exposes, per mark, the conditional intensity and the
//! analytic compensator (integrated intensity), plus the sequence
//! log-likelihood. The compensator is what drives the time-rescaling
//! transform, so each model implements it in closed form:
//!
//! - [`ConstantPoisson`]: `Λ_k(t) = μ_k t`
//! - [`SineInhomogeneousPoisson`]: `λ(t) = max(0, 1 + β sin(ωt))`, integrated
//!   piecewise over sign changes when `β > 1`
//! - [`GammaRenewal`]: cumulative hazard `H(τ) = −log(1 − F(τ))` summed over
//!   inter-event intervals
//! - [`ExpHawkes`]: `λ_k(t) = μ_k + Σ_{t_j<t} A[k][m_j] e^{−β(t−t_j)}`
//! - [`SelfCorrecting`]: `λ(t) = exp(μt − α n(t))`, integrated per segment
//!
//! Models are immutable value objects; all operations are pure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{gamma_cumulative_hazard, gamma_pq, ln_gamma};
use crate::types::EventSequence;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("mark {mark} out of range for {num_marks} marks")]
    MarkOutOfRange { mark: usize, num_marks: usize },
    #[error("time {t} outside [0, {t_max}]")]
    TimeOutOfRange { t: f64, t_max: f64 },
    #[error("model has {model} marks, sequence has {data}")]
    MarkCountMismatch { model: usize, data: usize },
    #[error("unknown model kind {0:?}")]
    UnknownModelKind(String),
    #[error("parameter outside its domain: {0}")]
    ParameterDomain(String),
    #[error("influence spectral radius {spectral_radius} >= decay (non-stationary)")]
    NonStationaryParameters { spectral_radius: f64 },
    #[error("malformed model record: {0}")]
    InvalidRecord(String),
}

/// Compensator values needed by the time-rescaling transform: the image of
/// every event under its own mark's compensator, and the terminal value
/// `Λ_k(T)` for every mark.
#[derive(Debug, Clone)]
pub struct RescaledValues {
    /// `Λ*_{m_i}(t_i)` in event order.
    pub event_values: Vec<f64>,
    /// `Λ*_k(T)` for `k = 0..K`.
    pub terminal_values: Vec<f64>,
}

/// A marked temporal point process with analytic per-mark compensator.
pub trait TppModel: Send + Sync {
    fn num_marks(&self) -> usize;

    /// Conditional intensity `λ*_mark(t)` given the events of `seq` strictly
    /// before `t`.
    fn intensity_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError>;

    /// Per-mark compensator `Λ*_mark(t) = ∫_0^t λ*_mark(u) du`.
    fn compensator_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError>;

    /// One pass over the sequence producing everything the transform needs.
    /// The default evaluates `compensator_at` per event; models with
    /// history-dependent intensities override it with an O(N·K) sweep.
    fn rescaled_values(&self, seq: &EventSequence) -> Result<RescaledValues, ModelError> {
        check_marks(self.num_marks(), seq)?;
        let t_max = seq.t_max();
        let mut event_values = Vec::with_capacity(seq.len());
        for (i, &t) in seq.arrival_times().iter().enumerate() {
            event_values.push(self.compensator_at(seq.mark(i), t, seq)?);
        }
        let terminal_values = (0..self.num_marks())
            .map(|k| self.compensator_at(k, t_max, seq))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RescaledValues {
            event_values,
            terminal_values,
        })
    }

    /// Marked log-likelihood: `Σ_i log λ*_{m_i}(t_i) − Σ_k Λ*_k(T)`.
    ///
    /// Returns `-∞` when some event has zero intensity under the model
    /// (the sequence is impossible, not an error).
    fn log_likelihood(&self, seq: &EventSequence) -> Result<f64, ModelError> {
        check_marks(self.num_marks(), seq)?;
        let mut ll = 0.0;
        for (i, &t) in seq.arrival_times().iter().enumerate() {
            let lambda = self.intensity_at(seq.mark(i), t, seq)?;
            if lambda <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            ll += lambda.ln();
        }
        for k in 0..self.num_marks() {
            ll -= self.compensator_at(k, seq.t_max(), seq)?;
        }
        Ok(ll)
    }
}

fn check_marks(model: usize, seq: &EventSequence) -> Result<(), ModelError> {
    if model != seq.num_marks() {
        return Err(ModelError::MarkCountMismatch {
            model,
            data: seq.num_marks(),
        });
    }
    Ok(())
}

fn check_domain(mark: usize, t: f64, num_marks: usize, t_max: f64) -> Result<(), ModelError> {
    if mark >= num_marks {
        return Err(ModelError::MarkOutOfRange { mark, num_marks });
    }
    if !(0.0..=t_max).contains(&t) {
        return Err(ModelError::TimeOutOfRange { t, t_max });
    }
    Ok(())
}

/// Perron root of a nonnegative square matrix.
///
/// Nilpotent matrices (radius exactly zero, e.g. feed-forward influence
/// structures) are detected by checking `M^K = 0`; otherwise power iteration
/// runs on `M + I`, whose shift makes the iteration aperiodic. For defective
/// non-nilpotent matrices the estimate converges from above, which is the
/// safe direction for a stationarity check.
pub(crate) fn spectral_radius(matrix: &[Vec<f64>]) -> f64 {
    let k = matrix.len();
    if k == 0 {
        return 0.0;
    }

    // Exact nilpotency test: M^K vanishes iff the radius is zero.
    let mut power: Vec<Vec<f64>> = matrix.to_vec();
    for _ in 1..k {
        let mut next = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    next[i][j] += power[i][l] * matrix[l][j];
                }
            }
        }
        power = next;
    }
    if power.iter().flatten().all(|&x| x == 0.0) {
        return 0.0;
    }

    let mut v = vec![1.0; k];
    let mut norm = 1.0f64;
    let mut stable = 0;
    for _ in 0..5000 {
        let mut w = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                w[i] += matrix[i][j] * v[j];
            }
            w[i] += v[i];
        }
        let next_norm = w.iter().fold(0.0f64, |a, &b| a.max(b));
        if next_norm == 0.0 {
            return 0.0;
        }
        for x in &mut w {
            *x /= next_norm;
        }
        v = w;
        if (next_norm - norm).abs() <= 1e-14 * next_norm {
            stable += 1;
            if stable >= 3 {
                norm = next_norm;
                break;
            }
        } else {
            stable = 0;
        }
        norm = next_norm;
    }
    (norm - 1.0).max(0.0)
}

// ---------------------------------------------------------------------------
// Constant-rate (homogeneous) Poisson process
// ---------------------------------------------------------------------------

/// Homogeneous Poisson process with one rate per mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantPoisson {
    rates: Vec<f64>,
}

impl ConstantPoisson {
    pub fn new(rates: Vec<f64>) -> Result<Self, ModelError> {
        if rates.is_empty() {
            return Err(ModelError::ParameterDomain("rates must be nonempty".into()));
        }
        if rates.iter().any(|&r| r <= 0.0 || !r.is_finite()) {
            return Err(ModelError::ParameterDomain(format!(
                "rates must be positive and finite, got {rates:?}"
            )));
        }
        Ok(Self { rates })
    }

    /// The standard Poisson process: unit rate, one mark.
    pub fn standard() -> Self {
        Self { rates: vec![1.0] }
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

impl TppModel for ConstantPoisson {
    fn num_marks(&self) -> usize {
        self.rates.len()
    }

    fn intensity_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        check_domain(mark, t, self.num_marks(), seq.t_max())?;
        Ok(self.rates[mark])
    }

    fn compensator_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        check_domain(mark, t, self.num_marks(), seq.t_max())?;
        Ok(self.rates[mark] * t)
    }

    fn log_likelihood(&self, seq: &EventSequence) -> Result<f64, ModelError> {
        check_marks(self.num_marks(), seq)?;
        let mut ll = 0.0;
        for (k, &count) in seq.counts_per_mark().iter().enumerate() {
            ll += count as f64 * self.rates[k].ln() - self.rates[k] * seq.t_max();
        }
        Ok(ll)
    }
}

// ---------------------------------------------------------------------------
// Inhomogeneous Poisson process with sinusoidal intensity
// ---------------------------------------------------------------------------

/// Unmarked Poisson process with intensity `max(0, 1 + β sin(ωt))`.
///
/// For `β > 1` the raw sinusoid goes negative and is clamped at zero; the
/// compensator then integrates the clamped intensity piecewise, with the
/// sign-change phases located by `arcsin(1/β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineInhomogeneousPoisson {
    beta: f64,
    omega: f64,
}

impl SineInhomogeneousPoisson {
    pub fn new(beta: f64, omega: f64) -> Result<Self, ModelError> {
        if beta < 0.0 || !beta.is_finite() {
            return Err(ModelError::ParameterDomain(format!(
                "beta must be >= 0, got {beta}"
            )));
        }
        if omega <= 0.0 || !omega.is_finite() {
            return Err(ModelError::ParameterDomain(format!(
                "omega must be > 0, got {omega}"
            )));
        }
        Ok(Self { beta, omega })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn intensity(&self, t: f64) -> f64 {
        (1.0 + self.beta * (self.omega * t).sin()).max(0.0)
    }

    /// `∫_0^φ max(0, 1 + β sin ψ) dψ` for one phase period `φ ∈ [0, 2π]`.
    fn phase_integral(&self, phi: f64) -> f64 {
        let b = self.beta;
        if b <= 1.0 {
            return phi + b * (1.0 - phi.cos());
        }
        // Intensity is zero on (π + a, 2π − a) where a = arcsin(1/β).
        let a = (1.0 / b).asin();
        if phi <= std::f64::consts::PI + a {
            phi + b * (1.0 - phi.cos())
        } else {
            let at_clamp_start = std::f64::consts::PI + a + b * (1.0 + a.cos());
            if phi <= 2.0 * std::f64::consts::PI - a {
                at_clamp_start
            } else {
                at_clamp_start + (phi - 2.0 * std::f64::consts::PI + a) + b * (a.cos() - phi.cos())
            }
        }
    }

    pub fn compensator(&self, t: f64) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        let phi = self.omega * t;
        let full = (phi / tau).floor();
        let rem = phi - full * tau;
        (full * self.phase_integral(tau) + self.phase_integral(rem)) / self.omega
    }
}

impl TppModel for SineInhomogeneousPoisson {
    fn num_marks(&self) -> usize {
        1
    }

    fn intensity_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        check_domain(mark, t, 1, seq.t_max())?;
        Ok(self.intensity(t))
    }

    fn compensator_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        check_domain(mark, t, 1, seq.t_max())?;
        Ok(self.compensator(t))
    }
}

// ---------------------------------------------------------------------------
// Gamma renewal process
// ---------------------------------------------------------------------------

/// Renewal process with i.i.d. Gamma(shape, scale) inter-event times,
/// started fresh at t = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRenewal {
    shape: f64,
    scale: f64,
}

impl GammaRenewal {
    pub fn new(shape: f64, scale: f64) -> Result<Self, ModelError> {
        if shape <= 0.0 || !shape.is_finite() {
            return Err(ModelError::ParameterDomain(format!(
                "shape must be > 0, got {shape}"
            )));
        }
        if scale <= 0.0 || !scale.is_finite() {
            return Err(ModelError::ParameterDomain(format!(
                "scale must be > 0, got {scale}"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Cumulative hazard of one inter-event interval of length `tau`.
    fn interval_hazard(&self, tau: f64) -> f64 {
        gamma_cumulative_hazard(self.shape, tau / self.scale)
    }

    /// Hazard rate at age `tau` since the last event: pdf / survival.
    fn hazard_rate(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            // Limit at age zero: +inf for shape < 1, 1/scale at 1, 0 above.
            return if self.shape < 1.0 {
                f64::INFINITY
            } else if self.shape == 1.0 {
                1.0 / self.scale
            } else {
                0.0
            };
        }
        let x = tau / self.scale;
        let log_pdf = (self.shape - 1.0) * x.ln() - x - ln_gamma(self.shape) - self.scale.ln();
        let (p, q) = gamma_pq(self.shape, x);
        if q <= 0.0 {
            return f64::INFINITY;
        }
        // pdf / Q, in log space on the stable side
        if p < 0.5 {
            (log_pdf - (-p).ln_1p()).exp()
        } else {
            (log_pdf - q.ln()).exp()
        }
    }
}

impl TppModel for GammaRenewal {
    fn num_marks(&self) -> usize {
        1
    }

    fn intensity_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        check_domain(mark, t, 1, seq.t_max())?;
        let times = seq.arrival_times();
        let before = times.partition_point(|&u| u < t);
        let last = if before == 0 { 0.0 } else { times[before - 1] };
        Ok(self.hazard_rate(t - last))
    }

    fn compensator_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        check_domain(mark, t, 1, seq.t_max())?;
        let times = seq.arrival_times();
        let before = times.partition_point(|&u| u < t);
        let mut total = 0.0;
        let mut prev = 0.0;
        for &u in &times[..before] {
            total += self.interval_hazard(u - prev);
            prev = u;
        }
        Ok(total + self.interval_hazard(t - prev))
    }

    fn rescaled_values(&self, seq: &EventSequence) -> Result<RescaledValues, ModelError> {
        check_marks(1, seq)?;
        let mut event_values = Vec::with_capacity(seq.len());
        let mut total = 0.0;
        let mut prev = 0.0;
        for &t in seq.arrival_times() {
            total += self.interval_hazard(t - prev);
            event_values.push(total);
            prev = t;
        }
        let terminal = total + self.interval_hazard(seq.t_max() - prev);
        Ok(RescaledValues {
            event_values,
            terminal_values: vec![terminal],
        })
    }
}

// ---------------------------------------------------------------------------
// Multivariate Hawkes process with exponential kernel
// ---------------------------------------------------------------------------

/// Mutually exciting process: an event of mark `j` at time `t_j` adds
/// `influence[i][j] · exp(−decay (t − t_j))` to the intensity of mark `i`.
///
/// Stationarity requires the spectral radius of `influence / decay` to be
/// below one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpHawkes {
    mu: Vec<f64>,
    influence: Vec<Vec<f64>>,
    decay: f64,
}

impl ExpHawkes {
    pub fn new(mu: Vec<f64>, influence: Vec<Vec<f64>>, decay: f64) -> Result<Self, ModelError> {
        let k = mu.len();
        if k == 0 {
            return Err(ModelError::ParameterDomain("mu must be nonempty".into()));
        }
        if mu.iter().any(|&m| m < 0.0 || !m.is_finite()) {
            return Err(ModelError::ParameterDomain(format!(
                "mu must be >= 0, got {mu:?}"
            )));
        }
        if influence.len() != k || influence.iter().any(|row| row.len() != k) {
            return Err(ModelError::ParameterDomain(format!(
                "influence must be {k}x{k}"
            )));
        }
        if influence
            .iter()
            .flatten()
            .any(|&a| a < 0.0 || !a.is_finite())
        {
            return Err(ModelError::ParameterDomain(
                "influence entries must be >= 0".into(),
            ));
        }
        if decay <= 0.0 || !decay.is_finite() {
            return Err(ModelError::ParameterDomain(format!(
                "decay must be > 0, got {decay}"
            )));
        }
        let branching: Vec<Vec<f64>> = influence
            .iter()
            .map(|row| row.iter().map(|a| a / decay).collect())
            .collect();
        let radius = spectral_radius(&branching);
        if radius >= 1.0 {
            return Err(ModelError::NonStationaryParameters {
                spectral_radius: radius,
            });
        }
        Ok(Self {
            mu,
            influence,
            decay,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn influence(&self) -> &[Vec<f64>] {
        &self.influence
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Per-source-mark excitation `R_c(t) = Σ_{t_j < t, m_j = c} e^{−β(t−t_j)}`
    /// just before time `t`, by a decay sweep up to (excluding) event `upto`.
    fn excitation_before(&self, t: f64, seq: &EventSequence) -> Vec<f64> {
        let k = self.num_marks();
        let mut r = vec![0.0; k];
        let mut prev = 0.0;
        for (i, &u) in seq.arrival_times().iter().enumerate() {
            if u >= t {
                break;
            }
            let d = (-self.decay * (u - prev)).exp();
            for x in &mut r {
                *x *= d;
            }
            r[seq.mark(i)] += 1.0;
            prev = u;
        }
        let d = (-self.decay * (t - prev)).exp();
        for x in &mut r {
            *x *= d;
        }
        r
    }
}

impl TppModel for ExpHawkes {
    fn num_marks(&self) -> usize {
        self.mu.len()
    }

    fn intensity_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        check_domain(mark, t, self.num_marks(), seq.t_max())?;
        check_marks(self.num_marks(), seq)?;
        let r = self.excitation_before(t, seq);
        let excitation: f64 = self.influence[mark]
            .iter()
            .zip(&r)
            .map(|(a, x)| a * x)
            .sum();
        Ok(self.mu[mark] + excitation)
    }

    fn compensator_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        check_domain(mark, t, self.num_marks(), seq.t_max())?;
        check_marks(self.num_marks(), seq)?;
        let beta = self.decay;
        let mut total = self.mu[mark] * t;
        for (j, &u) in seq.arrival_times().iter().enumerate() {
            if u >= t {
                break;
            }
            total += self.influence[mark][seq.mark(j)] / beta * (-(-beta * (t - u)).exp_m1());
        }
        Ok(total)
    }

    fn rescaled_values(&self, seq: &EventSequence) -> Result<RescaledValues, ModelError> {
        Ok(self.sweep(seq)?.0)
    }

    fn log_likelihood(&self, seq: &EventSequence) -> Result<f64, ModelError> {
        Ok(self.sweep(seq)?.1)
    }
}

impl ExpHawkes {
    /// Single left-to-right pass computing compensator values at every event,
    /// terminal compensators, and the log-likelihood. O(N·K).
    fn sweep(&self, seq: &EventSequence) -> Result<(RescaledValues, f64), ModelError> {
        check_marks(self.num_marks(), seq)?;
        let k = self.num_marks();
        let beta = self.decay;
        let mut excitation = vec![0.0; k]; // R_c at the previous event (inclusive)
        let mut compensators = vec![0.0; k];
        let mut event_values = Vec::with_capacity(seq.len());
        let mut log_intensities = 0.0;
        let mut impossible = false;
        let mut prev = 0.0;

        let advance =
            |excitation: &mut Vec<f64>, compensators: &mut Vec<f64>, from: f64, to: f64| {
                let decay_factor = (-beta * (to - from)).exp();
                let kernel_mass = -(-beta * (to - from)).exp_m1() / beta;
                for ((compensator, row), mu) in
                    compensators.iter_mut().zip(&self.influence).zip(&self.mu)
                {
                    let driven: f64 = row.iter().zip(excitation.iter()).map(|(a, r)| a * r).sum();
                    *compensator += mu * (to - from) + driven * kernel_mass;
                }
                for r in excitation.iter_mut() {
                    *r *= decay_factor;
                }
            };

        for (i, &t) in seq.arrival_times().iter().enumerate() {
            advance(&mut excitation, &mut compensators, prev, t);
            let mark = seq.mark(i);
            event_values.push(compensators[mark]);
            let lambda: f64 = self.mu[mark]
                + self.influence[mark]
                    .iter()
                    .zip(&excitation)
                    .map(|(a, r)| a * r)
                    .sum::<f64>();
            if lambda <= 0.0 {
                impossible = true;
            } else {
                log_intensities += lambda.ln();
            }
            excitation[mark] += 1.0;
            prev = t;
        }
        advance(&mut excitation, &mut compensators, prev, seq.t_max());

        let ll = if impossible {
            f64::NEG_INFINITY
        } else {
            log_intensities - compensators.iter().sum::<f64>()
        };
        Ok((
            RescaledValues {
                event_values,
                terminal_values: compensators,
            },
            ll,
        ))
    }
}

// ---------------------------------------------------------------------------
// Self-correcting process
// ---------------------------------------------------------------------------

/// Self-correcting process with intensity `exp(μt − α n(t))`, where `n(t)`
/// counts events strictly before `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCorrecting {
    mu: f64,
    alpha: f64,
}

impl SelfCorrecting {
    pub fn new(mu: f64, alpha: f64) -> Result<Self, ModelError> {
        if mu <= 0.0 || !mu.is_finite() {
            return Err(ModelError::ParameterDomain(format!(
                "mu must be > 0, got {mu}"
            )));
        }
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(ModelError::ParameterDomain(format!(
                "alpha must be >= 0, got {alpha}"
            )));
        }
        Ok(Self { mu, alpha })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `∫ exp(μu − αn) du` over one inter-event segment `[from, to]`:
    /// `e^{μ·from − αn} · expm1(μ(to − from)) / μ`.
    fn segment_mass(&self, from: f64, to: f64, n: usize) -> f64 {
        (self.mu * from - self.alpha * n as f64).exp() * (self.mu * (to - from)).exp_m1() / self.mu
    }
}

impl TppModel for SelfCorrecting {
    fn num_marks(&self) -> usize {
        1
    }

    fn intensity_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        check_domain(mark, t, 1, seq.t_max())?;
        let n = seq.arrival_times().partition_point(|&u| u < t);
        Ok((self.mu * t - self.alpha * n as f64).exp())
    }

    fn compensator_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        check_domain(mark, t, 1, seq.t_max())?;
        let times = seq.arrival_times();
        let before = times.partition_point(|&u| u < t);
        let mut total = 0.0;
        let mut prev = 0.0;
        for (n, &u) in times[..before].iter().enumerate() {
            total += self.segment_mass(prev, u, n);
            prev = u;
        }
        Ok(total + self.segment_mass(prev, t, before))
    }

    fn rescaled_values(&self, seq: &EventSequence) -> Result<RescaledValues, ModelError> {
        check_marks(1, seq)?;
        let mut event_values = Vec::with_capacity(seq.len());
        let mut total = 0.0;
        let mut prev = 0.0;
        for (n, &t) in seq.arrival_times().iter().enumerate() {
            total += self.segment_mass(prev, t, n);
            event_values.push(total);
            prev = t;
        }
        let terminal = total + self.segment_mass(prev, seq.t_max(), seq.len());
        Ok(RescaledValues {
            event_values,
            terminal_values: vec![terminal],
        })
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Any of the concrete models, as a single dispatchable value.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    ConstantPoisson(ConstantPoisson),
    SineInhomogeneous(SineInhomogeneousPoisson),
    GammaRenewal(GammaRenewal),
    ExpHawkes(ExpHawkes),
    SelfCorrecting(SelfCorrecting),
}

impl AnyModel {
    fn inner(&self) -> &dyn TppModel {
        match self {
            AnyModel::ConstantPoisson(m) => m,
            AnyModel::SineInhomogeneous(m) => m,
            AnyModel::GammaRenewal(m) => m,
            AnyModel::ExpHawkes(m) => m,
            AnyModel::SelfCorrecting(m) => m,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            AnyModel::ConstantPoisson(_) => "constant-poisson",
            AnyModel::SineInhomogeneous(_) => "sine-inhomogeneous",
            AnyModel::GammaRenewal(_) => "gamma-renewal",
            AnyModel::ExpHawkes(_) => "exp-hawkes",
            AnyModel::SelfCorrecting(_) => "self-correcting",
        }
    }
}

impl TppModel for AnyModel {
    fn num_marks(&self) -> usize {
        self.inner().num_marks()
    }

    fn intensity_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        self.inner().intensity_at(mark, t, seq)
    }

    fn compensator_at(&self, mark: usize, t: f64, seq: &EventSequence) -> Result<f64, ModelError> {
        self.inner().compensator_at(mark, t, seq)
    }

    fn rescaled_values(&self, seq: &EventSequence) -> Result<RescaledValues, ModelError> {
        self.inner().rescaled_values(seq)
    }

    fn log_likelihood(&self, seq: &EventSequence) -> Result<f64, ModelError> {
        self.inner().log_likelihood(seq)
    }
}

macro_rules! impl_from_model {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for AnyModel {
            fn from(m: $ty) -> Self {
                AnyModel::$variant(m)
            }
        }
    };
}
impl_from_model!(ConstantPoisson, ConstantPoisson);
impl_from_model!(SineInhomogeneous, SineInhomogeneousPoisson);
impl_from_model!(GammaRenewal, GammaRenewal);
impl_from_model!(ExpHawkes, ExpHawkes);
impl_from_model!(SelfCorrecting, SelfCorrecting);

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    kind: String,
    num_marks: usize,
    params: serde_json::Value,
}

/// Serialize a model to its single-object JSON record
/// `{"kind": ..., "num_marks": ..., "params": {...}}`.
pub fn serialize_model(model: &AnyModel) -> String {
    let params = match model {
        AnyModel::ConstantPoisson(m) => serde_json::to_value(m),
        AnyModel::SineInhomogeneous(m) => serde_json::to_value(m),
        AnyModel::GammaRenewal(m) => serde_json::to_value(m),
        AnyModel::ExpHawkes(m) => serde_json::to_value(m),
        AnyModel::SelfCorrecting(m) => serde_json::to_value(m),
    }
    .expect("model serialization cannot fail");
    let record = ModelRecord {
        kind: model.kind_name().to_string(),
        num_marks: model.num_marks(),
        params,
    };
    serde_json::to_string(&record).expect("record serialization cannot fail")
}

/// Parse a model record produced by [`serialize_model`]. Parameters are
/// re-validated through the model constructors.
pub fn deserialize_model(text: &str) -> Result<AnyModel, ModelError> {
    let record: ModelRecord =
        serde_json::from_str(text).map_err(|e| ModelError::InvalidRecord(e.to_string()))?;

    fn params<T: serde::de::DeserializeOwned>(value: serde_json::Value) -> Result<T, ModelError> {
        serde_json::from_value(value).map_err(|e| ModelError::InvalidRecord(e.to_string()))
    }

    #[derive(Deserialize)]
    struct PoissonParams {
        rates: Vec<f64>,
    }
    #[derive(Deserialize)]
    struct SineParams {
        beta: f64,
        omega: f64,
    }
    #[derive(Deserialize)]
    struct GammaParams {
        shape: f64,
        scale: f64,
    }
    #[derive(Deserialize)]
    struct HawkesParams {
        mu: Vec<f64>,
        influence: Vec<Vec<f64>>,
        decay: f64,
    }
    #[derive(Deserialize)]
    struct SelfCorrectingParams {
        mu: f64,
        alpha: f64,
    }

    let model = match record.kind.as_str() {
        "constant-poisson" => {
            let p: PoissonParams = params(record.params)?;
            ConstantPoisson::new(p.rates)?.into()
        }
        "sine-inhomogeneous" => {
            let p: SineParams = params(record.params)?;
            SineInhomogeneousPoisson::new(p.beta, p.omega)?.into()
        }
        "gamma-renewal" => {
            let p: GammaParams = params(record.params)?;
            GammaRenewal::new(p.shape, p.scale)?.into()
        }
        "exp-hawkes" => {
            let p: HawkesParams = params(record.params)?;
            ExpHawkes::new(p.mu, p.influence, p.decay)?.into()
        }
        "self-correcting" => {
            let p: SelfCorrectingParams = params(record.params)?;
            SelfCorrecting::new(p.mu, p.alpha)?.into()
        }
        other => return Err(ModelError::UnknownModelKind(other.to_string())),
    };
    let model: AnyModel = model;
    if model.num_marks() != record.num_marks {
        return Err(ModelError::InvalidRecord(format!(
            "record declares {} marks but parameters give {}",
            record.num_marks,
            model.num_marks()
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(got: f64, want: f64, tol: f64) {
        assert!(
            (got - want).abs() <= tol,
            "got {got}, want {want} (tol {tol})"
        );
    }

    fn empty_seq(t_max: f64) -> EventSequence {
        EventSequence::unmarked(vec![], t_max).unwrap()
    }

    #[test]
    fn constant_poisson_compensator() {
        let m = ConstantPoisson::standard();
        let seq = EventSequence::unmarked(vec![1.0, 2.0], 10.0).unwrap();
        assert_close(m.compensator_at(0, 7.0, &seq).unwrap(), 7.0, 1e-15);
        assert_close(m.compensator_at(0, 0.0, &seq).unwrap(), 0.0, 0.0);
    }

    #[test]
    fn constant_poisson_log_likelihood() {
        let m = ConstantPoisson::new(vec![1.0]).unwrap();
        assert_close(m.log_likelihood(&empty_seq(5.0)).unwrap(), -5.0, 1e-12);

        let m2 = ConstantPoisson::new(vec![2.0]).unwrap();
        let seq = EventSequence::unmarked(vec![0.5], 1.0).unwrap();
        assert_close(m2.log_likelihood(&seq).unwrap(), 2.0f64.ln() - 2.0, 1e-12);

        let seq3 = EventSequence::unmarked(vec![1.0, 4.0, 9.5], 10.0).unwrap();
        assert_close(m.log_likelihood(&seq3).unwrap(), -10.0, 1e-12);
    }

    #[test]
    fn hawkes_compensator_hand_value() {
        let m = ExpHawkes::new(vec![1.0], vec![vec![0.5]], 1.0).unwrap();
        let seq = EventSequence::unmarked(vec![1.0], 5.0).unwrap();
        // 2 + 0.5 (1 − e^{−1})
        assert_close(
            m.compensator_at(0, 2.0, &seq).unwrap(),
            2.3160602794142786,
            1e-12,
        );
        assert_close(m.compensator_at(0, 0.0, &seq).unwrap(), 0.0, 0.0);
    }

    #[test]
    fn hawkes_sweep_matches_pointwise() {
        let m = ExpHawkes::new(
            vec![0.5, 0.1, 0.2],
            vec![
                vec![0.1, 0.2, 0.0],
                vec![0.3, 0.0, 0.1],
                vec![0.2, 0.1, 0.1],
            ],
            1.3,
        )
        .unwrap();
        let seq = EventSequence::marked(
            vec![0.4, 1.1, 1.15, 2.7, 3.9, 4.4],
            vec![0, 2, 1, 0, 2, 2],
            3,
            5.0,
        )
        .unwrap();
        let swept = m.rescaled_values(&seq).unwrap();
        for (i, &t) in seq.arrival_times().iter().enumerate() {
            let direct = m.compensator_at(seq.mark(i), t, &seq).unwrap();
            assert_close(swept.event_values[i], direct, 1e-11);
        }
        for k in 0..3 {
            let direct = m.compensator_at(k, 5.0, &seq).unwrap();
            assert_close(swept.terminal_values[k], direct, 1e-11);
        }

        // Log-likelihood decomposition cross-check
        let ll = m.log_likelihood(&seq).unwrap();
        let mut expected = 0.0;
        for (i, &t) in seq.arrival_times().iter().enumerate() {
            expected += m.intensity_at(seq.mark(i), t, &seq).unwrap().ln();
        }
        for k in 0..3 {
            expected -= m.compensator_at(k, 5.0, &seq).unwrap();
        }
        assert_close(ll, expected, 1e-10);
    }

    #[test]
    fn hawkes_rejects_nonstationary() {
        let err = ExpHawkes::new(vec![1.0], vec![vec![1.0]], 1.0).unwrap_err();
        assert!(matches!(err, ModelError::NonStationaryParameters { .. }));
        // ok when decay dominates
        assert!(ExpHawkes::new(vec![1.0], vec![vec![1.0]], 1.5).is_ok());
    }

    #[test]
    fn hawkes_zero_mu_impossible_event() {
        // mark 1 has no baseline and nothing excites it
        let m = ExpHawkes::new(vec![1.0, 0.0], vec![vec![0.0; 2]; 2], 1.0).unwrap();
        let seq = EventSequence::marked(vec![1.0], vec![1], 2, 5.0).unwrap();
        assert_eq!(m.log_likelihood(&seq).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn spectral_radius_cases() {
        // nilpotent server-style matrix
        let a = vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ];
        assert!(spectral_radius(&a) < 1e-9);
        // diagonal
        let d = vec![vec![0.7, 0.0], vec![0.0, 0.3]];
        assert_close(spectral_radius(&d), 0.7, 1e-9);
        // periodic off-diagonal: radius sqrt(0.6)
        let p = vec![vec![0.0, 2.0], vec![0.3, 0.0]];
        assert_close(spectral_radius(&p), 0.6f64.sqrt(), 1e-9);
    }

    #[test]
    fn sine_compensator_closed_form_small_beta() {
        let m = SineInhomogeneousPoisson::new(0.5, 0.8).unwrap();
        let seq = empty_seq(20.0);
        for t in [0.0f64, 0.37, 4.2, 11.0, 20.0] {
            let want = t + 0.5 / 0.8 * (1.0 - (0.8 * t).cos());
            assert_close(m.compensator_at(0, t, &seq).unwrap(), want, 1e-12);
        }
    }

    #[test]
    fn sine_clamped_period_integral() {
        // beta = 2, omega = 2π/50: ∫ max(0, 1 + 2 sin(ωt)) over [0, 100]
        // equals 121.79955620884587 (two full periods).
        let omega = 2.0 * std::f64::consts::PI / 50.0;
        let m = SineInhomogeneousPoisson::new(2.0, omega).unwrap();
        let seq = empty_seq(100.0);
        assert_close(
            m.compensator_at(0, 100.0, &seq).unwrap(),
            121.79955620884587,
            1e-9,
        );
    }

    #[test]
    fn sine_clamped_compensator_matches_quadrature() {
        let omega = 2.0 * std::f64::consts::PI / 50.0;
        let m = SineInhomogeneousPoisson::new(2.0, omega).unwrap();
        // Simpson on a fine grid
        for t in [3.0, 17.5, 26.0, 44.0, 77.7] {
            let n = 200_000;
            let h = t / n as f64;
            let mut acc = m.intensity(0.0) + m.intensity(t);
            for i in 1..n {
                let w = if i % 2 == 0 { 2.0 } else { 4.0 };
                acc += w * m.intensity(i as f64 * h);
            }
            let quad = acc * h / 3.0;
            assert_close(m.compensator(t), quad, 1e-6 * quad.max(1.0));
        }
    }

    #[test]
    fn gamma_renewal_exponential_special_case() {
        // shape 1, scale 1 is the unit-rate Poisson process
        let m = GammaRenewal::new(1.0, 1.0).unwrap();
        let seq = EventSequence::unmarked(vec![1.0, 3.0], 10.0).unwrap();
        assert_close(m.compensator_at(0, 7.0, &seq).unwrap(), 7.0, 1e-12);
        assert_close(m.intensity_at(0, 5.0, &seq).unwrap(), 1.0, 1e-12);
    }

    #[test]
    fn gamma_renewal_sweep_matches_pointwise() {
        let m = GammaRenewal::new(0.5, 2.0).unwrap();
        let seq = EventSequence::unmarked(vec![0.7, 1.1, 4.0, 4.2], 6.0).unwrap();
        let swept = m.rescaled_values(&seq).unwrap();
        for (i, &t) in seq.arrival_times().iter().enumerate() {
            assert_close(
                swept.event_values[i],
                m.compensator_at(0, t, &seq).unwrap(),
                1e-11,
            );
        }
        assert_close(
            swept.terminal_values[0],
            m.compensator_at(0, 6.0, &seq).unwrap(),
            1e-11,
        );
    }

    #[test]
    fn self_correcting_compensator_and_intensity() {
        let m = SelfCorrecting::new(1.0, 0.5).unwrap();
        let seq = EventSequence::unmarked(vec![1.0, 2.0], 5.0).unwrap();
        // Λ(t) piecewise: (e^{μt1} − 1)/μ + e^{−α}(e^{μt2} − e^{μt1})/μ + ...
        let want = (1f64.exp() - 1.0)
            + (-0.5f64).exp() * (2f64.exp() - 1f64.exp())
            + (-1.0f64).exp() * (3f64.exp() - 2f64.exp());
        assert_close(m.compensator_at(0, 3.0, &seq).unwrap(), want, 1e-10);
        // intensity right after two events at t=3
        assert_close(
            m.intensity_at(0, 3.0, &seq).unwrap(),
            (3.0 - 1.0f64).exp(),
            1e-12,
        );
        let swept = m.rescaled_values(&seq).unwrap();
        assert_close(
            swept.event_values[1],
            m.compensator_at(0, 2.0, &seq).unwrap(),
            1e-12,
        );
    }

    #[test]
    fn compensator_zero_at_origin_for_all_models() {
        let seq = EventSequence::unmarked(vec![0.5], 2.0).unwrap();
        let models: Vec<AnyModel> = vec![
            ConstantPoisson::new(vec![2.0]).unwrap().into(),
            SineInhomogeneousPoisson::new(1.5, 0.3).unwrap().into(),
            GammaRenewal::new(0.7, 1.4).unwrap().into(),
            ExpHawkes::new(vec![0.5], vec![vec![0.4]], 1.0)
                .unwrap()
                .into(),
            SelfCorrecting::new(0.9, 0.4).unwrap().into(),
        ];
        for m in &models {
            assert_eq!(m.compensator_at(0, 0.0, &seq).unwrap(), 0.0);
        }
    }

    #[test]
    fn domain_errors() {
        let m = ConstantPoisson::standard();
        let seq = empty_seq(5.0);
        assert!(matches!(
            m.compensator_at(1, 1.0, &seq).unwrap_err(),
            ModelError::MarkOutOfRange { .. }
        ));
        assert!(matches!(
            m.compensator_at(0, 6.0, &seq).unwrap_err(),
            ModelError::TimeOutOfRange { .. }
        ));
    }

    #[test]
    fn serialization_round_trip() {
        let models: Vec<AnyModel> = vec![
            ConstantPoisson::new(vec![0.25, 3.0]).unwrap().into(),
            SineInhomogeneousPoisson::new(2.0, 0.12566370614359174)
                .unwrap()
                .into(),
            GammaRenewal::new(0.05, 20.0).unwrap().into(),
            ExpHawkes::new(
                vec![3.0, 0.0, 0.0],
                vec![
                    vec![0.0, 0.0, 0.0],
                    vec![1.0, 0.0, 0.0],
                    vec![1.0, 0.0, 0.0],
                ],
                1.0 + 1e-9,
            )
            .unwrap()
            .into(),
            SelfCorrecting::new(1.0 + 1e-5, 1.0).unwrap().into(),
        ];
        for model in models {
            let text = serialize_model(&model);
            let back = deserialize_model(&text).unwrap();
            assert_eq!(model, back);
        }
    }

    #[test]
    fn deserialize_rejects_bad_records() {
        let err =
            deserialize_model("{\"kind\":\"mystery\",\"num_marks\":1,\"params\":{}}").unwrap_err();
        assert!(matches!(err, ModelError::UnknownModelKind(_)));

        let err = deserialize_model(
            "{\"kind\":\"constant-poisson\",\"num_marks\":1,\"params\":{\"rates\":[-1.0]}}",
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::ParameterDomain(_)));

        assert!(deserialize_model("not json").is_err());
    }
}
