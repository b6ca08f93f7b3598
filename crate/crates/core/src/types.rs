//! Domain types for continuous-time event sequences.
//!
//! An [`EventSequence`] holds strictly increasing arrival times on an
//! observation interval `(0, t_max]`, optionally tagged with categorical
//! marks in `[0, num_marks)`. A [`TransformedSequence`] is the image of an
//! event sequence under a compensator: a candidate unit-rate Poisson
//! realization on `(0, v_max]`. A [`Dataset`] is a collection of sequences
//! sharing the same mark space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Violation of an [`EventSequence`] or [`TransformedSequence`] invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("arrival times not strictly increasing at index {index}")]
    NonMonotoneTimes { index: usize },
    #[error("time {t} at index {index} outside (0, {t_max}]")]
    TimeOutOfRange { index: usize, t: f64, t_max: f64 },
    #[error("mark {mark} at index {index} outside [0, {num_marks})")]
    MarkOutOfRange {
        index: usize,
        mark: usize,
        num_marks: usize,
    },
    #[error("{num_marks} marks declared but marks list has length {marks_len}, times length {times_len}")]
    MarkLengthMismatch {
        num_marks: usize,
        marks_len: usize,
        times_len: usize,
    },
    #[error("t_max must be positive and finite, got {0}")]
    InvalidTMax(f64),
    #[error("num_marks must be >= 1, got {0}")]
    InvalidNumMarks(usize),
    #[error("sequence has num_marks {seq}, dataset has {dataset}")]
    InconsistentNumMarks { seq: usize, dataset: usize },
    #[error("operation requires a nonempty dataset")]
    EmptyDataset,
}

/// A realization of a temporal point process on `[0, t_max]`.
///
/// Arrival times are strictly increasing and lie in `(0, t_max]`. Marks are
/// present exactly when `num_marks > 1`, in which case `marks[i]` is the
/// category of the event at `arrival_times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    arrival_times: Vec<f64>,
    marks: Option<Vec<usize>>,
    t_max: f64,
    num_marks: usize,
}

impl EventSequence {
    /// Build an unmarked sequence (`num_marks = 1`).
    pub fn unmarked(arrival_times: Vec<f64>, t_max: f64) -> Result<Self, ValidationError> {
        let seq = Self {
            arrival_times,
            marks: None,
            t_max,
            num_marks: 1,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Build a marked sequence with `num_marks >= 2` categories.
    pub fn marked(
        arrival_times: Vec<f64>,
        marks: Vec<usize>,
        num_marks: usize,
        t_max: f64,
    ) -> Result<Self, ValidationError> {
        let seq = Self {
            arrival_times,
            marks: Some(marks),
            t_max,
            num_marks,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Check every invariant; `Ok(())` iff the sequence is well formed.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.t_max <= 0.0 || !self.t_max.is_finite() {
            return Err(ValidationError::InvalidTMax(self.t_max));
        }
        if self.num_marks == 0 {
            return Err(ValidationError::InvalidNumMarks(0));
        }
        match (&self.marks, self.num_marks) {
            (None, 1) => {}
            (Some(marks), k) if k > 1 => {
                if marks.len() != self.arrival_times.len() {
                    return Err(ValidationError::MarkLengthMismatch {
                        num_marks: k,
                        marks_len: marks.len(),
                        times_len: self.arrival_times.len(),
                    });
                }
                for (index, &mark) in marks.iter().enumerate() {
                    if mark >= k {
                        return Err(ValidationError::MarkOutOfRange {
                            index,
                            mark,
                            num_marks: k,
                        });
                    }
                }
            }
            (marks, k) => {
                // marks present iff num_marks > 1
                return Err(ValidationError::MarkLengthMismatch {
                    num_marks: k,
                    marks_len: marks.as_ref().map_or(0, Vec::len),
                    times_len: self.arrival_times.len(),
                });
            }
        }
        validate_points(&self.arrival_times, self.t_max)
    }

    pub fn arrival_times(&self) -> &[f64] {
        &self.arrival_times
    }

    /// Mark of event `i`; always 0 for unmarked sequences.
    pub fn mark(&self, i: usize) -> usize {
        self.marks.as_ref().map_or(0, |m| m[i])
    }

    pub fn marks(&self) -> Option<&[usize]> {
        self.marks.as_deref()
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn num_marks(&self) -> usize {
        self.num_marks
    }

    pub fn len(&self) -> usize {
        self.arrival_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrival_times.is_empty()
    }

    /// Arrival times of events with the given mark.
    pub fn times_of_mark(&self, mark: usize) -> Vec<f64> {
        match &self.marks {
            None => {
                if mark == 0 {
                    self.arrival_times.clone()
                } else {
                    Vec::new()
                }
            }
            Some(marks) => self
                .arrival_times
                .iter()
                .zip(marks)
                .filter(|(_, &m)| m == mark)
                .map(|(&t, _)| t)
                .collect(),
        }
    }

    /// Count of events per mark, length `num_marks`.
    pub fn counts_per_mark(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_marks];
        match &self.marks {
            None => counts[0] = self.arrival_times.len(),
            Some(marks) => {
                for &m in marks {
                    counts[m] += 1;
                }
            }
        }
        counts
    }
}

/// A candidate standard-Poisson-process realization on `[0, v_max]`,
/// produced by the time-rescaling transform.
///
/// `points` are the transformed event times; the interval endpoints
/// `v_0 = 0` and `v_{N+1} = v_max` are implicit and supplied by statistics
/// that operate on spacings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedSequence {
    points: Vec<f64>,
    v_max: f64,
}

impl TransformedSequence {
    pub fn new(points: Vec<f64>, v_max: f64) -> Result<Self, ValidationError> {
        if v_max <= 0.0 || !v_max.is_finite() {
            return Err(ValidationError::InvalidTMax(v_max));
        }
        validate_points(&points, v_max)?;
        Ok(Self { points, v_max })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Spacings `w_1, ..., w_{N+1}` including the implicit endpoints:
    /// `w_i = v_i - v_{i-1}` with `v_0 = 0` and `v_{N+1} = v_max`.
    pub fn spacings(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len() + 1);
        let mut prev = 0.0;
        for &v in &self.points {
            out.push(v - prev);
            prev = v;
        }
        out.push(self.v_max - prev);
        out
    }
}

fn validate_points(points: &[f64], upper: f64) -> Result<(), ValidationError> {
    let mut prev = 0.0;
    for (index, &t) in points.iter().enumerate() {
        if !t.is_finite() || t <= 0.0 || t > upper {
            return Err(ValidationError::TimeOutOfRange {
                index,
                t,
                t_max: upper,
            });
        }
        if index > 0 && t <= prev {
            return Err(ValidationError::NonMonotoneTimes { index });
        }
        prev = t;
    }
    Ok(())
}

/// A collection of event sequences over a shared mark space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    sequences: Vec<EventSequence>,
    num_marks: usize,
}

impl Dataset {
    pub fn new(sequences: Vec<EventSequence>, num_marks: usize) -> Result<Self, ValidationError> {
        if num_marks == 0 {
            return Err(ValidationError::InvalidNumMarks(0));
        }
        for seq in &sequences {
            if seq.num_marks() != num_marks {
                return Err(ValidationError::InconsistentNumMarks {
                    seq: seq.num_marks(),
                    dataset: num_marks,
                });
            }
            seq.validate()?;
        }
        Ok(Self {
            sequences,
            num_marks,
        })
    }

    pub fn sequences(&self) -> &[EventSequence] {
        &self.sequences
    }

    pub fn num_marks(&self) -> usize {
        self.num_marks
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EventSequence> {
        self.sequences.iter()
    }
}
