//! Baseline-vs-variant significance tables over a finished sweep.
//!
//! For every variant and metric, per-recording scores at each SNR level go
//! through a t-test against the baseline, and levels meeting the
//! significance criterion (t < 0, p < alpha) merge into contiguous SNR
//! ranges. Degenerate cells (zero variance, too few recordings) count as
//! not significant and are recorded with their reason rather than aborting
//! the table.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::sweep::SweepResult;
use super::HarnessError;
use crate::augment::format_snr_level;
use crate::eval::EvalResult;
use crate::stats::{
    significant_ranges, t_test, Metric, ScoreSample, SignificanceRange, StatsError, TTestKind,
    TTestResult,
};

/// Outcome of one per-level test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum TestDetail {
    Tested {
        metric: Metric,
        snr_db: f64,
        #[serde(flatten)]
        result: TTestResult,
    },
    Skipped {
        metric: Metric,
        snr_db: f64,
        reason: String,
    },
}

/// Ranges for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricColumn {
    pub metric: Metric,
    pub ranges: Vec<SignificanceRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant_id: String,
    pub columns: Vec<MetricColumn>,
    pub details: Vec<TestDetail>,
}

/// The comparison artifact: one row per variant, one column per metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTable {
    pub baseline_id: String,
    pub alpha: f64,
    pub kind: TTestKind,
    pub rows: Vec<VariantRow>,
}

impl SignificanceTable {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Markdown table, one variant per row and the per-metric significant
    /// SNR ranges as columns.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| System | Precision (SNR) | Recall (SNR) | F1 Score (SNR) |\n");
        out.push_str("|---|---|---|---|\n");
        for row in &self.rows {
            out.push_str(&format!("| {} ", row.variant_id));
            for metric in Metric::ALL {
                let ranges = row
                    .columns
                    .iter()
                    .find(|c| c.metric == metric)
                    .map(|c| c.ranges.as_slice())
                    .unwrap_or(&[]);
                if ranges.is_empty() {
                    out.push_str("| - ");
                } else {
                    let text = ranges
                        .iter()
                        .map(|r| {
                            format!(
                                "[{}, {}]",
                                format_snr_level(r.lo_db),
                                format_snr_level(r.hi_db)
                            )
                        })
                        .collect::<Vec<_>>()
                        .join(", ");
                    out.push_str(&format!("| {text} "));
                }
            }
            out.push_str("|\n");
        }
        out
    }
}

type ScoreIndex<'a> = HashMap<&'a str, HashMap<u64, BTreeMap<&'a str, &'a EvalResult>>>;

fn snr_key(snr_db: f64) -> u64 {
    let canon = if snr_db == 0.0 { 0.0 } else { snr_db };
    canon.to_bits()
}

fn build_index(sweep: &SweepResult) -> ScoreIndex<'_> {
    let mut index: ScoreIndex = HashMap::new();
    for (key, eval) in sweep.cells() {
        index
            .entry(key.system_id.as_str())
            .or_default()
            .entry(snr_key(key.snr_db))
            .or_default()
            .insert(key.recording_id.as_str(), eval);
    }
    index
}

/// Compare each variant against the baseline and extract significant SNR
/// ranges per metric.
pub fn compare_systems(
    sweep: &SweepResult,
    baseline_id: &str,
    variant_ids: &[String],
    alpha: f64,
    kind: TTestKind,
) -> Result<SignificanceTable, HarnessError> {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let index = build_index(sweep);
    let baseline = index
        .get(baseline_id)
        .ok_or_else(|| HarnessError::UnknownSystem(baseline_id.to_string()))?;
    let grid = sweep.metadata.grid;

    let mut rows = Vec::new();
    for variant_id in variant_ids {
        let variant = index
            .get(variant_id.as_str())
            .ok_or_else(|| HarnessError::UnknownSystem(variant_id.clone()))?;
        check_coverage(baseline_id, baseline, variant_id, variant)?;

        let mut details = Vec::new();
        let mut columns = Vec::new();
        for metric in Metric::ALL {
            let mut tests: Vec<(f64, TTestResult)> = Vec::new();
            for level in grid.levels() {
                let (Some(base_cells), Some(var_cells)) =
                    (baseline.get(&snr_key(level)), variant.get(&snr_key(level)))
                else {
                    continue;
                };
                let sample = |id: &str, cells: &BTreeMap<&str, &EvalResult>| ScoreSample {
                    system_id: id.to_string(),
                    snr_db: level,
                    metric,
                    values: cells.values().map(|e| metric.of(e)).collect(),
                };
                match t_test(
                    &sample(baseline_id, base_cells),
                    &sample(variant_id, var_cells),
                    kind,
                ) {
                    Ok(result) => {
                        tests.push((level, result));
                        details.push(TestDetail::Tested {
                            metric,
                            snr_db: level,
                            result,
                        });
                    }
                    Err(e @ (StatsError::DegenerateSample(_) | StatsError::TooFewSamples(_))) => {
                        details.push(TestDetail::Skipped {
                            metric,
                            snr_db: level,
                            reason: e.to_string(),
                        });
                    }
                    Err(other) => return Err(other.into()),
                }
            }
            columns.push(MetricColumn {
                metric,
                ranges: significant_ranges(metric, &tests, alpha, &grid),
            });
        }
        rows.push(VariantRow {
            variant_id: variant_id.clone(),
            columns,
            details,
        });
    }

    Ok(SignificanceTable {
        baseline_id: baseline_id.to_string(),
        alpha,
        kind,
        rows,
    })
}

fn check_coverage(
    baseline_id: &str,
    baseline: &HashMap<u64, BTreeMap<&str, &EvalResult>>,
    variant_id: &str,
    variant: &HashMap<u64, BTreeMap<&str, &EvalResult>>,
) -> Result<(), HarnessError> {
    let mut missing = Vec::new();
    let mut record = |owner: &str, snr_bits: u64, rec: &str| {
        missing.push(format!("{owner}: {rec} @ {} dB", f64::from_bits(snr_bits)));
    };
    for (&snr, base_cells) in baseline {
        match variant.get(&snr) {
            None => {
                for rec in base_cells.keys() {
                    record(variant_id, snr, rec);
                }
            }
            Some(var_cells) => {
                for rec in base_cells.keys() {
                    if !var_cells.contains_key(rec) {
                        record(variant_id, snr, rec);
                    }
                }
                for rec in var_cells.keys() {
                    if !base_cells.contains_key(rec) {
                        record(baseline_id, snr, rec);
                    }
                }
            }
        }
    }
    for (&snr, var_cells) in variant {
        if !baseline.contains_key(&snr) {
            for rec in var_cells.keys() {
                record(baseline_id, snr, rec);
            }
        }
    }
    if missing.is_empty() {
        return Ok(());
    }
    missing.sort();
    let shown = missing.len().min(20);
    let mut text = missing[..shown].join("; ");
    if missing.len() > shown {
        text.push_str(&format!("; and {} more", missing.len() - shown));
    }
    Err(HarnessError::CoverageMismatch {
        baseline: baseline_id.to_string(),
        variant: variant_id.to_string(),
        missing: text,
    })
}
