//! Aggregation of a run directory into one versioned JSON report plus CSV
//! exports of the three tables.

use std::collections::BTreeMap;

use naf_core::coding::capacity_table;
use naf_core::trigger::mean_cluster_quality;
use naf_core::{read_codes, TriggerMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifacts::*;
use crate::config::{derive_seed, AttackConfig, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::stages::{load_centroids, load_model_artifact, load_triggers, recorded_config, EncodeSummary, TrainSummary, TrialOutcome};

pub const SCHEMA_VERSION: u32 = 1;
pub const BOOTSTRAP_RESAMPLES: usize = 2000;
pub const CAPACITY_NS: [usize; 2] = [64, 128];
pub const CAPACITY_TS: [usize; 8] = [20, 40, 60, 80, 100, 120, 140, 160];

/// A success fraction with its 95% percentile-bootstrap interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean of a paired difference with its one-sided 95% lower bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub mean: f64,
    pub lower_95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityTable {
    pub k: usize,
    pub k_corrupted: usize,
    pub ns: Vec<usize>,
    pub ts: Vec<usize>,
    /// `t_corrupted[i][j]` for `ns[i]`, `ts[j]`.
    pub t_corrupted: Vec<Vec<usize>>,
    pub run: EncodeSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationRow {
    pub mode: TriggerMode,
    pub inter: Option<f64>,
    pub intra: Option<f64>,
    pub gap: f64,
    pub intra_over_gap: Option<f64>,
    pub converged_fraction: f64,
    /// Dead neurons of the original network on this trigger set.
    pub dead_neurons: usize,
    /// Mean alignment accuracy over the NP trials, when they were run.
    pub np_alignment_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub accept: Rate,
    pub mean_accuracy: Option<f64>,
    pub mean_live_accuracy: Option<f64>,
    pub mean_collisions_resolved: f64,
    pub tampered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub attack: String,
    pub config: AttackConfig,
    pub trials: usize,
    pub unaligned: Rate,
    pub aligned: BTreeMap<TriggerMode, ModeSummary>,
    /// Accept-rate difference T2 − T1 over paired trials.
    pub t2_minus_t1: Option<PairedDifference>,
    pub mean_functional_drift: f64,
    pub mean_task_accuracy: Option<f64>,
    pub mean_dead_neurons: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub notes: Vec<String>,
    pub train: TrainSummary,
    pub table1_capacity: CapacityTable,
    pub table2_separation: Vec<SeparationRow>,
    pub table3_attacks: Vec<AttackRow>,
    /// SHA-256 of every artifact the report was built from.
    pub artifacts: BTreeMap<String, String>,
    /// Wall-clock seconds per stage; the only non-deterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    /// The report with timings dropped, for reproducibility comparisons.
    pub fn without_timings(&self) -> RunReport {
        RunReport {
            timings: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> CliResult<Vec<u8>> {
        json_bytes(self)
    }

    pub fn from_json(bytes: &[u8]) -> CliResult<RunReport> {
        let value: Value = serde_json::from_slice(bytes)?;
        validate_report_json(&value).map_err(|errs| CliError::Integrity(format!("report fails its schema: {}", errs.join("; "))))?;
        Ok(serde_json::from_value(value)?)
    }
}

/// Percentile bootstrap of the mean of `xs`.
pub fn bootstrap_mean_ci(xs: &[f64], seed: u64, resamples: usize) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * resamples as f64) as usize).min(resamples - 1)];
    (at(0.025), at(0.975))
}

fn rate(flags: &[bool], seed: u64) -> Rate {
    let xs: Vec<f64> = flags.iter().map(|&b| f64::from(u8::from(b))).collect();
    let successes = flags.iter().filter(|&&b| b).count();
    let (ci_low, ci_high) = bootstrap_mean_ci(&xs, seed, BOOTSTRAP_RESAMPLES);
    Rate {
        successes,
        trials: flags.len(),
        rate: if flags.is_empty() { 0.0 } else { successes as f64 / flags.len() as f64 },
        ci_low,
        ci_high,
    }
}

fn paired_difference(diffs: &[f64], seed: u64) -> PairedDifference {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = diffs.len();
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| diffs[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    PairedDifference {
        mean: diffs.iter().sum::<f64>() / n as f64,
        lower_95: means[(0.05 * BOOTSTRAP_RESAMPLES as f64) as usize],
    }
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn attack_row(cfg: &ExperimentConfig, attack: &AttackConfig, trials: &[TrialOutcome]) -> AttackRow {
    let label = attack.label();
    let seed = |what: &str| derive_seed(cfg.seed, &format!("bootstrap/{label}/{what}"));
    let modes: Vec<TriggerMode> = trials.first().map(|t| t.aligned.keys().copied().collect()).unwrap_or_default();
    let aligned = modes
        .iter()
        .map(|&mode| {
            let outcomes: Vec<_> = trials.iter().map(|t| &t.aligned[&mode]).collect();
            let accepted: Vec<bool> = outcomes.iter().map(|o| o.accepted).collect();
            let summary = ModeSummary {
                accept: rate(&accepted, seed(mode.label())),
                mean_accuracy: mean_of(outcomes.iter().filter_map(|o| o.accuracy)),
                mean_live_accuracy: mean_of(outcomes.iter().filter_map(|o| o.live_accuracy)),
                mean_collisions_resolved: mean_of(outcomes.iter().map(|o| o.collisions_resolved as f64)).unwrap_or(0.0),
                tampered: outcomes.iter().filter(|o| o.tamper.is_some()).count(),
            };
            (mode, summary)
        })
        .collect();
    let t2_minus_t1 = (modes.contains(&TriggerMode::T1) && modes.contains(&TriggerMode::T2) && !trials.is_empty()).then(|| {
        let diffs: Vec<f64> = trials
            .iter()
            .map(|t| f64::from(u8::from(t.aligned[&TriggerMode::T2].accepted)) - f64::from(u8::from(t.aligned[&TriggerMode::T1].accepted)))
            .collect();
        paired_difference(&diffs, seed("t2-t1"))
    });
    let dead_source = modes.iter().rev().find(|m| **m != TriggerMode::N);
    AttackRow {
        attack: label.clone(),
        config: attack.clone(),
        trials: trials.len(),
        unaligned: rate(&trials.iter().map(|t| t.unaligned.accepted).collect::<Vec<_>>(), seed("unaligned")),
        aligned,
        t2_minus_t1,
        mean_functional_drift: mean_of(trials.iter().map(|t| t.functional_drift)).unwrap_or(0.0),
        mean_task_accuracy: mean_of(trials.iter().filter_map(|t| t.task_accuracy)),
        mean_dead_neurons: dead_source
            .and_then(|m| mean_of(trials.iter().map(|t| t.aligned[m].dead_neurons as f64)))
            .unwrap_or(0.0),
    }
}

/// Checks every manifest entry against the bytes on disk.
fn verified_artifacts(run: &RunDir) -> CliResult<BTreeMap<String, String>> {
    let manifest = run.manifest()?;
    let mut out = BTreeMap::new();
    for name in manifest.keys() {
        if name == REPORT || name.starts_with("table") {
            continue;
        }
        run.read(name)?;
        out.insert(name.clone(), manifest[name].clone());
    }
    Ok(out)
}

/// Builds the report from a run directory and writes `report.json` and the
/// table CSVs next to the artifacts.
pub fn report_stage(run: &RunDir) -> CliResult<RunReport> {
    let cfg = recorded_config(run)?;
    let artifacts = verified_artifacts(run)?;
    let train: TrainSummary = run.read_json(TRAIN_SUMMARY)?;
    let encode: EncodeSummary = run.read_json(ENCODE_SUMMARY)?;

    let table1_capacity = CapacityTable {
        k: cfg.coding.k,
        k_corrupted: cfg.coding.k_corrupted,
        ns: CAPACITY_NS.to_vec(),
        ts: CAPACITY_TS.to_vec(),
        t_corrupted: capacity_table(&CAPACITY_NS, &CAPACITY_TS, cfg.coding.k, cfg.coding.k_corrupted),
        run: encode,
    };

    let mut table3_attacks = Vec::new();
    let mut np_trials: Option<Vec<TrialOutcome>> = None;
    for attack in &cfg.attacks {
        let name = trials_file(&attack.label());
        if !run.has(&name)? {
            continue;
        }
        let trials: Vec<TrialOutcome> = run.read_json(&name)?;
        table3_attacks.push(attack_row(&cfg, attack, &trials));
        if matches!(attack, AttackConfig::Np { .. }) {
            np_trials = Some(trials);
        }
    }

    let marked = load_model_artifact(run, MODEL)?;
    let reference = if cfg.normalize {
        naf_core::normalize_layer(&marked, &cfg.watermark.layer)?
    } else {
        marked
    };
    let cs = load_centroids(run)?;
    let mut table2_separation = Vec::new();
    for mode in [TriggerMode::N, TriggerMode::T1, TriggerMode::T2] {
        if !run.has(&triggers_file(mode))? {
            continue;
        }
        let set = load_triggers(run, mode)?;
        let observed = read_codes(&reference, &set)?;
        let dead = observed.dead_neurons();
        let q = mean_cluster_quality(&observed.raw_outputs.transpose(), &cs, &dead);
        let gap = cs.gap();
        table2_separation.push(SeparationRow {
            mode,
            inter: q.map(|q| q.inter),
            intra: q.map(|q| q.intra),
            gap,
            intra_over_gap: q.map(|q| q.intra / gap),
            converged_fraction: set.converged_fraction(),
            dead_neurons: dead.len(),
            np_alignment_accuracy: np_trials
                .as_ref()
                .and_then(|ts| mean_of(ts.iter().filter_map(|t| t.aligned.get(&mode).and_then(|o| o.accuracy)))),
        });
    }

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg,
        notes: vec![
            "Rates are averaged across seeded trials of one synthetic task, not across datasets.".into(),
            "Confidence intervals are 95% percentile bootstraps over trials.".into(),
        ],
        train,
        table1_capacity,
        table2_separation,
        table3_attacks,
        artifacts,
        timings: run.timings()?,
    };
    validate_report_json(&serde_json::to_value(&report)?)
        .map_err(|errs| CliError::Integrity(format!("generated report violates its schema: {}", errs.join("; "))))?;
    // The report carries wall-clock timings and the hashes of everything it
    // summarizes, so it is written beside the manifest rather than into it.
    run.write_unrecorded(REPORT, &report.to_json()?)?;
    run.write_many(&[
        ("table1.csv".into(), table1_csv(&report)?),
        ("table2.csv".into(), table2_csv(&report)?),
        ("table3.csv".into(), table3_csv(&report)?),
    ])?;
    Ok(report)
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| CliError::Integrity(format!("csv export failed: {e}"));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| CliError::Integrity(format!("csv export failed: {e}")))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn table1_csv(r: &RunReport) -> CliResult<Vec<u8>> {
    let t = &r.table1_capacity;
    let mut rows = Vec::new();
    for (i, n) in t.ns.iter().enumerate() {
        for (j, tt) in t.ts.iter().enumerate() {
            rows.push(vec![n.to_string(), tt.to_string(), t.k.to_string(), t.k_corrupted.to_string(), t.t_corrupted[i][j].to_string()]);
        }
    }
    csv_bytes(&["n", "t", "k", "k_corrupted", "t_corrupted"], rows)
}

pub fn table2_csv(r: &RunReport) -> CliResult<Vec<u8>> {
    let rows = r
        .table2_separation
        .iter()
        .map(|s| {
            vec![
                s.mode.to_string(),
                opt(s.inter),
                opt(s.intra),
                format!("{:.6}", s.gap),
                opt(s.intra_over_gap),
                s.dead_neurons.to_string(),
                opt(s.np_alignment_accuracy),
            ]
        })
        .collect();
    csv_bytes(&["mode", "inter", "intra", "gap", "intra_over_gap", "dead_neurons", "np_alignment_accuracy"], rows)
}

pub fn table3_csv(r: &RunReport) -> CliResult<Vec<u8>> {
    let mut rows = Vec::new();
    for a in &r.table3_attacks {
        let mut row = vec![a.attack.clone(), a.trials.to_string(), format!("{:.4}", a.unaligned.rate)];
        for mode in [TriggerMode::N, TriggerMode::T1, TriggerMode::T2] {
            let m = a.aligned.get(&mode);
            row.push(m.map(|m| format!("{:.4}", m.accept.rate)).unwrap_or_default());
            row.push(opt(m.and_then(|m| m.mean_accuracy)));
        }
        row.push(format!("{:.6}", a.mean_functional_drift));
        rows.push(row);
    }
    csv_bytes(
        &[
            "attack",
            "trials",
            "accept_unaligned",
            "accept_n",
            "accuracy_n",
            "accept_t1",
            "accuracy_t1",
            "accept_t2",
            "accuracy_t2",
            "mean_functional_drift",
        ],
        rows,
    )
}

/// Structural checks on a report document: schema version, required
/// sections, and every rate and interval inside `[0, 1]` and ordered.
pub fn validate_report_json(v: &Value) -> Result<(), Vec<String>> {
    let mut errs = Vec::new();
    match v.get("schema_version").and_then(Value::as_u64) {
        Some(s) if s == u64::from(SCHEMA_VERSION) => {}
        other => errs.push(format!("schema_version: expected {SCHEMA_VERSION}, found {other:?}")),
    }
    for key in [
        "tool_version",
        "config",
        "train",
        "table1_capacity",
        "table2_separation",
        "table3_attacks",
        "artifacts",
        "timings",
    ] {
        if v.get(key).is_none() {
            errs.push(format!("{key}: missing"));
        }
    }
    if let Some(t1) = v.get("table1_capacity") {
        let rows = t1.get("t_corrupted").and_then(Value::as_array).map_or(0, Vec::len);
        let ns = t1.get("ns").and_then(Value::as_array).map_or(0, Vec::len);
        if rows != ns {
            errs.push(format!("table1_capacity.t_corrupted: {rows} rows for {ns} values of n"));
        }
    }
    fn check_rate(path: &str, r: &Value, errs: &mut Vec<String>) {
        let get = |k: &str| r.get(k).and_then(Value::as_f64);
        match (get("rate"), get("ci_low"), get("ci_high")) {
            (Some(x), Some(lo), Some(hi)) => {
                if ![x, lo, hi].iter().all(|v| (0.0..=1.0).contains(v)) || lo > hi {
                    errs.push(format!("{path}: rate {x} with interval [{lo}, {hi}] out of range"));
                }
            }
            _ => errs.push(format!("{path}: incomplete rate")),
        }
    }
    if let Some(rows) = v.get("table3_attacks").and_then(Value::as_array) {
        for (i, row) in rows.iter().enumerate() {
            match row.get("unaligned") {
                Some(r) => check_rate(&format!("table3_attacks[{i}].unaligned"), r, &mut errs),
                None => errs.push(format!("table3_attacks[{i}].unaligned: missing")),
            }
            if let Some(modes) = row.get("aligned").and_then(Value::as_object) {
                for (mode, m) in modes {
                    match m.get("accept") {
                        Some(r) => check_rate(&format!("table3_attacks[{i}].aligned.{mode}.accept"), r, &mut errs),
                        None => errs.push(format!("table3_attacks[{i}].aligned.{mode}.accept: missing")),
                    }
                    for key in ["mean_accuracy", "mean_live_accuracy"] {
                        if let Some(x) = m.get(key).and_then(Value::as_f64) {
                            if !(0.0..=1.0).contains(&x) {
                                errs.push(format!("table3_attacks[{i}].aligned.{mode}.{key}: {x} outside [0, 1]"));
                            }
                        }
                    }
                }
            } else {
                errs.push(format!("table3_attacks[{i}].aligned: missing"));
            }
        }
    }
    if let Some(arts) = v.get("artifacts").and_then(Value::as_object) {
        for (name, h) in arts {
            let ok = h.as_str().is_some_and(|s| s.len() == 64 && s.bytes().all(|b| b.is_ascii_hexdigit()));
            if !ok {
                errs.push(format!("artifacts.{name}: not a SHA-256 hex digest"));
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_of_constant_is_degenerate() {
        assert_eq!(bootstrap_mean_ci(&[1.0; 50], 3, 500), (1.0, 1.0));
        assert_eq!(bootstrap_mean_ci(&[0.0; 50], 3, 500), (0.0, 0.0));
    }

    #[test]
    fn bootstrap_interval_brackets_the_mean() {
        let xs: Vec<f64> = (0..100).map(|i| f64::from(u8::from(i % 4 == 0))).collect();
        let (lo, hi) = bootstrap_mean_ci(&xs, 1, 2000);
        assert!(lo < 0.25 && 0.25 < hi, "[{lo}, {hi}]");
        assert!(hi - lo < 0.25);
    }

    #[test]
    fn rate_counts_successes() {
        let r = rate(&[true, false, true, true], 0);
        assert_eq!((r.successes, r.trials), (3, 4));
        assert_eq!(r.rate, 0.75);
    }

    #[test]
    fn validator_flags_out_of_range_rates() {
        let bad = serde_json::json!({
            "schema_version": 1,
            "table3_attacks": [{"unaligned": {"rate": 1.5, "ci_low": 0.0, "ci_high": 1.0}, "aligned": {}}]
        });
        let errs = validate_report_json(&bad).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("unaligned")));
        assert!(errs.iter().any(|e| e.contains("config: missing")));
    }
}
