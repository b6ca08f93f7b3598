//! The random-time-change transform.
//!
//! Applying a model's compensator to a sequence it describes yields a
//! standard-Poisson realization. For marked sequences the per-mark
//! transformed sequences are concatenated in ascending mark order with
//! cumulative offsets, producing a single realization on
//! `[0, Σ_k Λ*_k(T)]`.

use thiserror::Error;

use crate::model::{ModelError, TppModel};
use crate::types::{EventSequence, TransformedSequence};

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("model has {model} marks, sequence has {data}")]
    MarkCountMismatch { model: usize, data: usize },
    #[error("degenerate compensator: distinct events map to the same transformed point {a}")]
    DegenerateCompensator { a: f64, b: f64 },
    #[error("compensator produced an invalid transformed sequence: {0}")]
    InvalidOutput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Rescale a sequence by the model's compensator.
///
/// Unmarked: `points = (Λ*(t_1), ..., Λ*(t_N))`, `v_max = Λ*(T)`.
/// Marked: events of mark `k` map to `Λ*_k(t) + Σ_{j<k} Λ*_j(T)` and
/// `v_max = Σ_k Λ*_k(T)`.
pub fn time_rescale(
    model: &dyn TppModel,
    seq: &EventSequence,
) -> Result<TransformedSequence, TransformError> {
    if model.num_marks() != seq.num_marks() {
        return Err(TransformError::MarkCountMismatch {
            model: model.num_marks(),
            data: seq.num_marks(),
        });
    }
    let values = model.rescaled_values(seq)?;
    let k = model.num_marks();

    // Offset of each mark's block: cumulative terminal compensators.
    let mut offsets = vec![0.0; k];
    for i in 1..k {
        offsets[i] = offsets[i - 1] + values.terminal_values[i - 1];
    }
    let v_max = offsets[k - 1] + values.terminal_values[k - 1];

    // Assemble blocks in ascending mark order; within a mark, events are
    // already in time order so their compensator values are nondecreasing.
    let mut points = Vec::with_capacity(seq.len());
    for (mark, &offset) in offsets.iter().enumerate() {
        for (i, &v) in values.event_values.iter().enumerate() {
            if seq.mark(i) == mark {
                points.push(v + offset);
            }
        }
    }

    // Distinct events must keep distinct images. Heavily clustered inputs
    // can sit arbitrarily close (sub-1e-12 spacings are routine for extreme
    // renewal data), so only an exact collapse — a flat compensator stretch,
    // e.g. a zero-intensity region of a misfit model — is degenerate.
    for w in points.windows(2) {
        if w[1] <= w[0] {
            return Err(TransformError::DegenerateCompensator { a: w[0], b: w[1] });
        }
    }
    TransformedSequence::new(points, v_max)
        .map_err(|e| TransformError::InvalidOutput(e.to_string()))
}
