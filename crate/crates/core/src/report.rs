//! Run reporting: CSV emission and parsing, summary statistics, histogram
//! binning, and the latency perturbation sweep.
//!
//! Everything here is recomputable from the CSV alone, so a written file
//! carries the full evidence for a run's headline numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::adversary::RejectionReason;
use crate::engine::{run, RunConfig, RunError, TrialKind, TrialOutcome, TrialRecord};

pub const CSV_HEADER: &str =
    "trial_id,kind,initiator,target,clearance,classification,proof_time_s,outcome,rejection_reason,sim_time_s";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("could not access results file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed results file: {0}")]
    Malformed(String),
}

/// Aggregate statistics over one run's records. Median and spread are
/// absent when the run minted no proofs; success rates over zero trials
/// report as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub n_proofs: usize,
    pub median_proof_time_s: Option<f64>,
    pub stddev_proof_time_s: Option<f64>,
    pub spoof_success_rate: f64,
    pub violation_success_rate: f64,
    pub completed: usize,
    pub refusals: usize,
    /// Rejection label -> count, over every rejected row.
    pub rejection_counts: BTreeMap<&'static str, usize>,
}

/// Lower median: for even counts the smaller of the two central values.
/// Stated convention, so other tooling can reproduce the number exactly.
fn lower_median(sorted: &[f64]) -> Option<f64> {
    if sorted.is_empty() {
        None
    } else {
        Some(sorted[(sorted.len() - 1) / 2])
    }
}

/// Population standard deviation (divide by n, not n - 1).
fn population_stddev(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(variance.sqrt())
}

fn success_rate(records: &[TrialRecord], kind: TrialKind) -> f64 {
    let trials = records.iter().filter(|r| r.kind == kind).count();
    if trials == 0 {
        return 0.0;
    }
    let successes = records
        .iter()
        .filter(|r| r.kind == kind && r.outcome == TrialOutcome::AttackSuccess)
        .count();
    successes as f64 / trials as f64
}

pub fn summarize(records: &[TrialRecord]) -> RunSummary {
    let mut proof_times: Vec<f64> = records.iter().filter_map(|r| r.proof_time_s).collect();
    proof_times.sort_by(f64::total_cmp);
    let mut rejection_counts: BTreeMap<&'static str, usize> = BTreeMap::new();
    for record in records {
        if let Some(reason) = record.rejection_reason {
            *rejection_counts.entry(reason.label()).or_insert(0) += 1;
        }
    }
    RunSummary {
        n_proofs: proof_times.len(),
        median_proof_time_s: lower_median(&proof_times),
        stddev_proof_time_s: population_stddev(&proof_times),
        spoof_success_rate: success_rate(records, TrialKind::Spoof),
        violation_success_rate: success_rate(records, TrialKind::Violation),
        completed: records
            .iter()
            .filter(|r| r.outcome == TrialOutcome::Completed)
            .count(),
        refusals: records
            .iter()
            .filter(|r| r.outcome == TrialOutcome::PolicyRefusal)
            .count(),
        rejection_counts,
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

fn opt_int(v: Option<i64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_seconds(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

/// Render records in the file format: header plus one comma-separated row
/// per record, seconds at 3 decimals, LF endings, no quoting (identifier
/// fields are plain hex).
pub fn csv_string(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.3}",
            r.trial_id,
            r.kind.label(),
            r.initiator,
            r.target,
            opt_int(r.clearance),
            opt_int(r.classification),
            opt_seconds(r.proof_time_s),
            r.outcome.label(),
            r.rejection_reason.map(|x| x.label()).unwrap_or(""),
            r.sim_time_s,
        );
    }
    out
}

/// Write the CSV form of `records` to `path`, returning the data row count.
pub fn write_csv(records: &[TrialRecord], path: &Path) -> Result<usize, ReportError> {
    std::fs::write(path, csv_string(records))?;
    Ok(records.len())
}

fn field_err(line_no: usize, what: &str) -> ReportError {
    ReportError::Malformed(format!("line {line_no}: {what}"))
}

pub fn parse_csv(text: &str) -> Result<Vec<TrialRecord>, ReportError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        _ => {
            return Err(ReportError::Malformed(
                "missing or unexpected header".into(),
            ))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(field_err(line_no, "expected 10 fields"));
        }
        let int_opt = |s: &str, what: &str| -> Result<Option<i64>, ReportError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| field_err(line_no, what))
            }
        };
        let seconds_opt = |s: &str, what: &str| -> Result<Option<f64>, ReportError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| field_err(line_no, what))
            }
        };
        let rejection_reason = if fields[8].is_empty() {
            None
        } else {
            Some(
                RejectionReason::parse(fields[8])
                    .ok_or_else(|| field_err(line_no, "unknown rejection reason"))?,
            )
        };
        records.push(TrialRecord {
            trial_id: fields[0]
                .parse()
                .map_err(|_| field_err(line_no, "bad trial_id"))?,
            kind: TrialKind::parse(fields[1]).ok_or_else(|| field_err(line_no, "unknown kind"))?,
            initiator: fields[2].to_string(),
            target: fields[3].to_string(),
            clearance: int_opt(fields[4], "bad clearance")?,
            classification: int_opt(fields[5], "bad classification")?,
            proof_time_s: seconds_opt(fields[6], "bad proof_time_s")?,
            outcome: TrialOutcome::parse(fields[7])
                .ok_or_else(|| field_err(line_no, "unknown outcome"))?,
            rejection_reason,
            sim_time_s: fields[9]
                .parse()
                .map_err(|_| field_err(line_no, "bad sim_time_s"))?,
        });
    }
    Ok(records)
}

pub fn read_csv(path: &Path) -> Result<Vec<TrialRecord>, ReportError> {
    parse_csv(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

pub const DEFAULT_BIN_WIDTH: f64 = 0.1;
pub const DEFAULT_HISTOGRAM_RANGE: (f64, f64) = (1.0, 7.0);

/// Fixed-width histogram over pooled proof times. Bins are left-closed,
/// right-open; samples outside [lo, hi) land in the overflow counters, so
/// counts always partition n_proofs.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBins {
    pub bin_width: f64,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl HistogramBins {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.underflow + self.overflow
    }

    /// Bounds of the most-populated in-range bin (first of equals).
    pub fn modal_bin(&self) -> Option<(f64, f64)> {
        let (index, count) = self
            .counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        if *count == 0 {
            return None;
        }
        let left = self.lo + index as f64 * self.bin_width;
        Some((left, left + self.bin_width))
    }
}

/// Seconds in this pipeline carry exactly three decimals (the file format's
/// resolution), so binning runs in integer milliseconds. Plain float
/// division would drop samples that sit exactly on a bin edge into the bin
/// below; integers keep edge samples in their left-closed bin. Width and
/// range must sit on the same millisecond grid.
pub fn histogram(records: &[TrialRecord], bin_width: f64, lo: f64, hi: f64) -> HistogramBins {
    assert!(
        bin_width > 0.0 && bin_width.is_finite(),
        "bin width must be positive"
    );
    assert!(
        lo.is_finite() && hi.is_finite() && hi > lo,
        "range must be non-empty"
    );
    let milli = |v: f64| (v * 1000.0).round() as i64;
    let grid_aligned = |v: f64| (v * 1000.0 - (v * 1000.0).round()).abs() < 1e-6;
    assert!(
        grid_aligned(bin_width) && grid_aligned(lo) && grid_aligned(hi),
        "width and range must be whole milliseconds"
    );
    let width_m = milli(bin_width);
    let lo_m = milli(lo);
    let hi_m = milli(hi);
    assert!(width_m >= 1, "bin width must be at least 0.001");
    let n_bins = ((hi_m - lo_m + width_m - 1) / width_m) as usize;
    let mut bins = HistogramBins {
        bin_width,
        lo,
        hi,
        counts: vec![0; n_bins],
        underflow: 0,
        overflow: 0,
    };
    for x in records.iter().filter_map(|r| r.proof_time_s) {
        let x_m = milli(x);
        if x_m < lo_m {
            bins.underflow += 1;
        } else if x_m >= hi_m {
            bins.overflow += 1;
        } else {
            bins.counts[((x_m - lo_m) / width_m) as usize] += 1;
        }
    }
    bins
}

// ---------------------------------------------------------------------------
// Perturbation sweep
// ---------------------------------------------------------------------------

/// Reference medians published for the standard sweep factors, attached to
/// matching rows as display annotations. They reflect a coarser latency
/// interpretation than the multiplicative scaling used here, so rows print
/// them for comparison but never test against them.
const REFERENCE_MEDIANS: [(f64, f64); 3] = [(-0.2, 2.71), (0.0, 2.79), (0.2, 2.88)];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub factor: f64,
    pub label: String,
    /// Seed the row actually ran under, derived from the base seed and the
    /// factor value (not the row position).
    pub seed: u64,
    pub observed_median_s: Option<f64>,
    pub spoof_success_rate: f64,
    pub violation_success_rate: f64,
    pub reference_median_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub base_seed: u64,
    pub rows: Vec<SweepRow>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for one sweep row, keyed by factor value so permuting the factor
/// list permutes rows without changing any row's numbers.
pub fn derived_seed(base_seed: u64, factor: f64) -> u64 {
    let normalized = if factor == 0.0 { 0.0 } else { factor };
    splitmix64(base_seed ^ normalized.to_bits())
}

pub fn factor_label(factor: f64) -> String {
    if factor == 0.0 {
        "0%".to_string()
    } else {
        format!("{:+.0}%", factor * 100.0)
    }
}

fn reference_median(factor: f64) -> Option<f64> {
    REFERENCE_MEDIANS
        .iter()
        .find(|(f, _)| (factor - f).abs() < 1e-9)
        .map(|(_, m)| *m)
}

/// Run one full simulation per factor and tabulate medians and attack
/// success rates. A baseline (factor 0) row is prepended when the factor
/// list does not already include it.
pub fn sweep(base: &RunConfig, factors: &[f64]) -> Result<SweepTable, RunError> {
    for f in factors {
        if !(f.is_finite() && *f > -1.0) {
            return Err(RunError::Config(format!(
                "perturbation factor {f} must be finite and greater than -1"
            )));
        }
    }
    let mut ordered: Vec<f64> = Vec::with_capacity(factors.len() + 1);
    if !factors.contains(&0.0) {
        ordered.push(0.0);
    }
    ordered.extend_from_slice(factors);

    let mut rows = Vec::with_capacity(ordered.len());
    for factor in ordered {
        let config = RunConfig {
            perturb: factor,
            seed: derived_seed(base.seed, factor),
            out: None,
            ..base.clone()
        };
        let output = run(&config)?;
        rows.push(SweepRow {
            factor,
            label: factor_label(factor),
            seed: config.seed,
            observed_median_s: output.summary.median_proof_time_s,
            spoof_success_rate: output.summary.spoof_success_rate,
            violation_success_rate: output.summary.violation_success_rate,
            reference_median_s: reference_median(factor),
        });
    }
    Ok(SweepTable {
        base_seed: base.seed,
        rows,
    })
}
