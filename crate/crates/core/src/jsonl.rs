//! JSONL dataset serialization.
//!
//! One sequence per line, UTF-8, `\n` separators:
//!
//! ```text
//! {"arrival_times": [1.0, 2.5], "t_max": 10.0}
//! {"arrival_times": [1.0], "marks": [0], "t_max": 10.0, "num_marks": 3}
//! ```
//!
//! `marks` and `num_marks` are optional; a file with no marks anywhere loads
//! as an unmarked dataset (`num_marks = 1`). When no record declares
//! `num_marks`, it is inferred as the largest mark plus one.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Dataset, EventSequence, ValidationError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("validation error at line {line}: {source}")]
    Validation {
        line: usize,
        #[source]
        source: ValidationError,
    },
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    arrival_times: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    marks: Option<Vec<usize>>,
    t_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_marks: Option<usize>,
}

/// Load a dataset from a JSONL file. Every sequence is validated; parse and
/// validation failures report the offending line (1-based).
pub fn load_jsonl<P: AsRef<Path>>(path: P) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut records: Vec<(usize, Record)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        records.push((line_no, record));
    }
    if records.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    // Resolve the shared mark count across the file.
    let mut declared: Option<usize> = None;
    let mut max_mark: Option<usize> = None;
    let mut any_marks = false;
    for (line_no, record) in &records {
        if let Some(k) = record.num_marks {
            match declared {
                None => declared = Some(k),
                Some(prev) if prev != k => {
                    return Err(DataError::Validation {
                        line: *line_no,
                        source: ValidationError::InconsistentNumMarks {
                            seq: k,
                            dataset: prev,
                        },
                    })
                }
                _ => {}
            }
        }
        if let Some(marks) = &record.marks {
            any_marks = true;
            max_mark = max_mark.max(marks.iter().max().copied());
        }
    }
    let num_marks = declared.unwrap_or(match max_mark {
        Some(m) => m + 1,
        None if any_marks => 2,
        None => 1,
    });

    let mut sequences = Vec::with_capacity(records.len());
    for (line_no, record) in records {
        let seq = if num_marks == 1 {
            EventSequence::unmarked(record.arrival_times, record.t_max)
        } else {
            // Empty sequences may omit the marks field.
            let marks = record.marks.unwrap_or_default();
            EventSequence::marked(record.arrival_times, marks, num_marks, record.t_max)
        };
        sequences.push(seq.map_err(|source| DataError::Validation {
            line: line_no,
            source,
        })?);
    }

    Dataset::new(sequences, num_marks).map_err(|source| DataError::Validation { line: 0, source })
}

/// Write a dataset to a JSONL file. `load_jsonl(save_jsonl(d))` reproduces
/// `d` bitwise: floats are emitted in shortest round-trip representation.
pub fn save_jsonl<P: AsRef<Path>>(data: &Dataset, path: P) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    for seq in data.iter() {
        let record = Record {
            arrival_times: seq.arrival_times().to_vec(),
            marks: seq.marks().map(<[usize]>::to_vec),
            t_max: seq.t_max(),
            num_marks: if data.num_marks() > 1 {
                Some(data.num_marks())
            } else {
                None
            },
        };
        let json = serde_json::to_string(&record).expect("record serialization cannot fail");
        writer.write_all(json.as_bytes()).map_err(io_err)?;
        writer.write_all(b"\n").map_err(io_err)?;
    }
    writer.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_unmarked_record() {
        let f = write_tmp("{\"arrival_times\":[1.0,2.5],\"t_max\":10.0}\n");
        let data = load_jsonl(f.path()).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data.num_marks(), 1);
        assert_eq!(data.sequences()[0].len(), 2);
    }

    #[test]
    fn load_marked_record_with_declared_k() {
        let f =
            write_tmp("{\"arrival_times\":[1.0],\"marks\":[0],\"t_max\":10.0,\"num_marks\":3}\n");
        let data = load_jsonl(f.path()).unwrap();
        assert_eq!(data.num_marks(), 3);
        assert_eq!(data.sequences()[0].mark(0), 0);
    }

    #[test]
    fn infer_k_from_max_mark() {
        let f = write_tmp(
            "{\"arrival_times\":[1.0],\"marks\":[2],\"t_max\":10.0}\n{\"arrival_times\":[1.0],\"marks\":[0],\"t_max\":10.0}\n",
        );
        let data = load_jsonl(f.path()).unwrap();
        assert_eq!(data.num_marks(), 3);
    }

    #[test]
    fn bad_ordering_reports_line() {
        let f = write_tmp(
            "{\"arrival_times\":[1.0],\"t_max\":10.0}\n{\"arrival_times\":[2.0,1.0],\"t_max\":10.0}\n",
        );
        match load_jsonl(f.path()).unwrap_err() {
            DataError::Validation { line, .. } => assert_eq!(line, 2),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_json_reports_line() {
        let f = write_tmp("{\"arrival_times\":[1.0],\"t_max\":10.0}\nnot json\n");
        match load_jsonl(f.path()).unwrap_err() {
            DataError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let seqs = vec![
            EventSequence::unmarked(vec![], 5.0).unwrap(),
            EventSequence::unmarked(vec![0.12345678901234568, 4.999999999999999], 5.0).unwrap(),
            EventSequence::unmarked(vec![1.0 / 3.0, 2.0 / 3.0, 5.0 - f64::EPSILON], 5.0).unwrap(),
        ];
        let data = Dataset::new(seqs, 1).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_jsonl(&data, f.path()).unwrap();
        let reloaded = load_jsonl(f.path()).unwrap();
        assert_eq!(data, reloaded);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let data = Dataset::new(vec![EventSequence::unmarked(vec![], 5.0).unwrap()], 1).unwrap();
        let err = save_jsonl(&data, "/nonexistent-dir/out.jsonl").unwrap_err();
        assert!(matches!(err, DataError::Io { .. }));
    }

    #[test]
    fn empty_file_is_empty_dataset_error() {
        let f = write_tmp("");
        assert!(matches!(
            load_jsonl(f.path()).unwrap_err(),
            DataError::EmptyDataset
        ));
    }
}
