//! Sweep runner: (scenario × delta × seed) cells evaluated by a worker
//! pool, flushed to a ledger CSV as they complete, and aggregated into a
//! plot-ready CSV at the end. Interrupted sweeps resume from the ledger.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use tpp_core::detect::{run_gof, run_ood, ExperimentReport, ReportRow};
use tpp_core::fit::{fit_hawkes, fit_poisson, FitConfig};
use tpp_core::model::AnyModel;
use tpp_core::rng::RngHandle;
use tpp_core::simulate::{make_scenario_pair, sample_dataset, sample_scenario_id, ScenarioSpec};
use tpp_core::types::Dataset;

use crate::config::{fnv1a, Cell, ExperimentConfig, FitModelKind, TestMode};

/// Stream block reserved per cell; large enough for every dataset a cell
/// draws.
const CELL_STREAM_SPACING: u64 = 10_000_000;

fn cell_key(scenario: &str, delta: f64, seed: u64) -> (String, u64, u64) {
    (scenario.to_string(), delta.to_bits(), seed)
}

/// Rows already in the ledger, keeping only cells that completed every
/// requested statistic (partial cells are recomputed).
fn completed_rows(ledger: &Path, config: &ExperimentConfig) -> Vec<ReportRow> {
    let Ok(text) = fs::read_to_string(ledger) else {
        return Vec::new();
    };
    let report = ExperimentReport::from_csv_lossy(&text);
    let expected: HashSet<_> = config.statistics.iter().copied().collect();
    let mut seen: std::collections::HashMap<(String, u64, u64), HashSet<_>> =
        std::collections::HashMap::new();
    for row in &report.rows {
        seen.entry(cell_key(&row.scenario, row.delta, row.seed))
            .or_default()
            .insert(row.statistic);
    }
    report
        .rows
        .into_iter()
        .filter(|row| {
            seen.get(&cell_key(&row.scenario, row.delta, row.seed))
                .is_some_and(|stats| expected.is_subset(stats))
        })
        .collect()
}

fn run_cell(config: &ExperimentConfig, cell: &Cell) -> Result<Vec<ReportRow>, String> {
    let spec =
        ScenarioSpec::with_t_max(cell.kind, cell.delta, config.t_max).map_err(|e| e.to_string())?;
    let base = RngHandle::new(cell.seed, cell.index * CELL_STREAM_SPACING);
    let (d_id, d_ood) = make_scenario_pair(
        &spec,
        config.n_test_id,
        config.n_test_ood,
        base.offset(1_000_000),
    )
    .map_err(|e| e.to_string())?;

    let mut rows = Vec::with_capacity(config.statistics.len());
    match config.mode {
        TestMode::Gof => {
            let model = cell
                .kind
                .id_model()
                .ok_or_else(|| format!("{} has no analytic model for GoF mode", cell.kind))?;
            let d_model = sample_dataset(&model, config.n_train, config.t_max, base);
            for &stat in &config.statistics {
                let outcome =
                    run_gof(stat, &model, &d_model, &d_id, &d_ood).map_err(|e| e.to_string())?;
                rows.push(ReportRow {
                    scenario: cell.kind.name().to_string(),
                    delta: cell.delta,
                    statistic: stat,
                    auc: outcome.auc,
                    n_id: config.n_test_id,
                    n_ood: config.n_test_ood,
                    seed: cell.seed,
                });
            }
        }
        TestMode::Ood => {
            let train_seqs: Vec<_> = (0..config.n_train as u64)
                .into_par_iter()
                .map(|i| sample_scenario_id(&spec, base.offset(i)))
                .collect();
            let d_train = Dataset::new(train_seqs, cell.kind.num_marks())
                .expect("scenario sequences share num_marks");
            let model: AnyModel = match config.fit_model {
                FitModelKind::Poisson => fit_poisson(&d_train).map_err(|e| e.to_string())?.into(),
                FitModelKind::Hawkes => {
                    let fit_config = FitConfig {
                        max_iterations: config.fit_max_iterations.unwrap_or(2000),
                        seed: cell.seed,
                        ..FitConfig::default()
                    };
                    fit_hawkes(&d_train, &fit_config)
                        .map_err(|e| e.to_string())?
                        .model
                        .into()
                }
            };
            for &stat in &config.statistics {
                let outcome =
                    run_ood(stat, &model, &d_train, &d_id, &d_ood).map_err(|e| e.to_string())?;
                rows.push(ReportRow {
                    scenario: cell.kind.name().to_string(),
                    delta: cell.delta,
                    statistic: stat,
                    auc: outcome.auc,
                    n_id: config.n_test_id,
                    n_ood: config.n_test_ood,
                    seed: cell.seed,
                });
            }
        }
    }
    Ok(rows)
}

/// Aggregate rows into the plot CSV: delta on the x axis, mean AUC and its
/// standard error across seeds per (scenario, statistic) series.
fn plot_csv(rows: &[ReportRow]) -> String {
    let mut groups: std::collections::BTreeMap<(String, String, u64), Vec<f64>> =
        std::collections::BTreeMap::new();
    for row in rows {
        groups
            .entry((
                row.scenario.clone(),
                row.statistic.name().to_string(),
                row.delta.to_bits(),
            ))
            .or_default()
            .push(row.auc);
    }
    let mut out = String::from("scenario,statistic,delta,mean_auc,stderr,n_seeds\n");
    for ((scenario, statistic, delta_bits), aucs) in groups {
        let n = aucs.len() as f64;
        let mean = aucs.iter().sum::<f64>() / n;
        let stderr = if aucs.len() > 1 {
            let var = aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            scenario,
            statistic,
            f64::from_bits(delta_bits),
            mean,
            stderr,
            aucs.len()
        ));
    }
    out
}

pub fn run_experiment(
    config: &ExperimentConfig,
    config_text: &str,
    out_dir: &Path,
) -> Result<(), String> {
    fs::create_dir_all(out_dir).map_err(|e| format!("cannot create {}: {e}", out_dir.display()))?;
    let report_path = out_dir.join("report.csv");

    let retained = completed_rows(&report_path, config);
    let done: HashSet<_> = retained
        .iter()
        .map(|row| cell_key(&row.scenario, row.delta, row.seed))
        .collect();
    let cells = config.cells();
    let pending: Vec<&Cell> = cells
        .iter()
        .filter(|cell| !done.contains(&cell_key(cell.kind.name(), cell.delta, cell.seed)))
        .collect();
    eprintln!(
        "experiment: {} cells total, {} already complete, {} to run",
        cells.len(),
        cells.len() - pending.len(),
        pending.len()
    );

    // Rewrite the ledger with only the complete cells, then append.
    {
        let mut file = fs::File::create(&report_path)
            .map_err(|e| format!("cannot write {}: {e}", report_path.display()))?;
        file.write_all(ExperimentReport::CSV_HEADER.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .map_err(|e| e.to_string())?;
        for row in &retained {
            writeln!(file, "{}", ExperimentReport::csv_row(row)).map_err(|e| e.to_string())?;
        }
        file.flush().map_err(|e| e.to_string())?;
    }

    let ledger = Mutex::new(
        fs::OpenOptions::new()
            .append(true)
            .open(&report_path)
            .map_err(|e| e.to_string())?,
    );
    let fresh: Vec<Vec<ReportRow>> = pending
        .par_iter()
        .map(|cell| {
            let rows = run_cell(config, cell)?;
            {
                let mut file = ledger.lock().expect("ledger lock");
                for row in &rows {
                    writeln!(file, "{}", ExperimentReport::csv_row(row))
                        .map_err(|e| e.to_string())?;
                }
                file.flush().map_err(|e| e.to_string())?;
            }
            eprintln!(
                "  done {} delta={} seed={}",
                cell.kind, cell.delta, cell.seed
            );
            Ok::<Vec<ReportRow>, String>(rows)
        })
        .collect::<Result<_, _>>()?;

    // Canonical rewrite: identical config + seeds give byte-identical files
    // regardless of worker scheduling or interruptions.
    let mut report = ExperimentReport {
        rows: retained
            .into_iter()
            .chain(fresh.into_iter().flatten())
            .collect(),
    };
    report.sort();
    fs::write(&report_path, report.to_csv()).map_err(|e| e.to_string())?;
    fs::write(out_dir.join("plot.csv"), plot_csv(&report.rows)).map_err(|e| e.to_string())?;

    // Reference-model fingerprints: analytic per scenario in GoF mode; in
    // OoD mode models are fitted per cell and determined by config + seed.
    let model_hashes: std::collections::BTreeMap<String, String> = match config.mode {
        TestMode::Gof => config
            .scenario
            .iter()
            .filter_map(|block| {
                block.kind.id_model().map(|model| {
                    let record = tpp_core::model::serialize_model(&model);
                    (
                        block.kind.name().to_string(),
                        format!("{:016x}", fnv1a(record.as_bytes())),
                    )
                })
            })
            .collect(),
        TestMode::Ood => Default::default(),
    };
    let meta = serde_json::json!({
        "config_hash": format!("{:016x}", fnv1a(config_text.as_bytes())),
        "model_record_hashes": model_hashes,
        "mode": match config.mode { TestMode::Gof => "gof", TestMode::Ood => "ood" },
        "n_train": config.n_train,
        "n_test_id": config.n_test_id,
        "n_test_ood": config.n_test_ood,
        "t_max": config.t_max,
        "seeds": config.seeds,
        "statistics": config.statistics.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "cells": cells.len(),
    });
    fs::write(
        out_dir.join("meta.json"),
        serde_json::to_string_pretty(&meta).expect("metadata serialization cannot fail"),
    )
    .map_err(|e| e.to_string())?;

    eprintln!(
        "experiment: report written to {} ({} rows)",
        report_path.display(),
        report.rows.len()
    );
    Ok(())
}
