use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BppaReport, ComplexityReport, EvalError, RatingRecord, ReflectionStats, TargetKind};

pub const EVAL_RECORD_SCHEMA: &str = "evaluation/1";

/// Mean, population standard deviation and variance of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub sd: f64,
    pub var: f64,
    pub n: usize,
    pub single_run: bool,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        Some(Stats { mean, sd, var: sd * sd, n: values.len(), single_run: values.len() == 1 })
    }
}

/// Per-motion evaluation written to `eval/` by the evaluate command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub schema: String,
    pub motion_id: u32,
    pub system_tag: String,
    pub model_name: String,
    pub high_strategy: String,
    pub low_strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bppa: Option<BppaReport>,
    pub complexity: ComplexityReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection: Option<ReflectionStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
}

impl EvaluationRecord {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes") + "\n"
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub system: String,
    /// `None` for the all-motions row of a system.
    pub motion_id: Option<u32>,
    pub values: Vec<f64>,
    pub stats: Option<Stats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: Vec<String>,
    pub rows: Vec<SummaryRow>,
    /// One entry per cell with absent data.
    pub missing: Vec<String>,
}

/// Subdirectories holding a `manifest.json`, or the directory itself.
pub fn discover_runs(root: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut subs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("manifest.json").is_file())
        .collect();
    subs.sort();
    if subs.is_empty() {
        subs.push(root.to_path_buf());
    }
    Ok(subs)
}

/// Reads a JSONL ratings file; blank lines are skipped.
pub fn load_ratings(path: &Path) -> Result<Vec<RatingRecord>, EvalError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RatingRecord = serde_json::from_str(&line)
            .map_err(|e| EvalError::InvalidInput(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

fn ratings_in(dir: &Path) -> Result<Vec<RatingRecord>, EvalError> {
    let dir = dir.join("ratings");
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(load_ratings(&f)?);
    }
    Ok(out)
}

fn eval_records(dir: &Path) -> Result<Vec<EvaluationRecord>, EvalError> {
    let dir = dir.join("eval");
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f)?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        if v.get("schema").and_then(|s| s.as_str()) == Some(EVAL_RECORD_SCHEMA) {
            out.push(serde_json::from_value(v)?);
        }
    }
    Ok(out)
}

type Cell = (String, String, Option<u32>);

/// Per-metric tables across runs: BPPA, complexity and reflection rates per
/// system and motion, plus HPS/WBS over raters.
pub fn summarize_run(root: &Path) -> Result<RunSummary, EvalError> {
    summarize_with_ratings(root, None)
}

/// Every rating stored under `root` and its runs.
pub fn collect_ratings(root: &Path) -> Result<Vec<RatingRecord>, EvalError> {
    let mut out = ratings_in(root)?;
    for run in discover_runs(root)? {
        if run != root {
            out.extend(ratings_in(&run)?);
        }
    }
    Ok(out)
}

/// As [`summarize_run`], with the ratings supplied instead of read from the
/// run's `ratings/` directories.
pub fn summarize_with_ratings(root: &Path, ratings: Option<&[RatingRecord]>) -> Result<RunSummary, EvalError> {
    let runs = discover_runs(root)?;
    let mut per_run: Vec<BTreeMap<Cell, f64>> = Vec::new();
    let ratings = match ratings {
        Some(r) => r.to_vec(),
        None => collect_ratings(root)?,
    };
    for run in &runs {
        let mut cells = BTreeMap::new();
        let mut motion_means: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for rec in eval_records(run)? {
            let sys = rec.system_tag.clone();
            let mut put = |metric: &str, v: f64| {
                cells.insert((metric.to_string(), sys.clone(), Some(rec.motion_id)), v);
            };
            if let Some(b) = &rec.bppa {
                put("BPPA", b.overall);
                motion_means.entry(sys.clone()).or_default().push(b.overall);
            }
            put("complexity", rec.complexity.value);
            if let Some(r) = &rec.reflection {
                put("correction_percentage", r.correction_percentage);
                if !r.undefined {
                    put("success_rate", r.success_rate);
                    put("perfect_reflection_rate", r.perfect_reflection_rate);
                }
            }
        }
        for (sys, vals) in motion_means {
            cells.insert(("BPPA".into(), sys, None), vals.iter().sum::<f64>() / vals.len() as f64);
        }
        per_run.push(cells);
    }

    let keys: BTreeSet<Cell> = per_run.iter().flat_map(|c| c.keys().cloned()).collect();
    let run_names: Vec<String> = runs
        .iter()
        .map(|r| r.strip_prefix(root).ok().map(|p| p.display().to_string()).filter(|s| !s.is_empty()).unwrap_or(".".into()))
        .collect();
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for key in keys {
        let mut values = Vec::new();
        let mut gaps = Vec::new();
        for (i, cells) in per_run.iter().enumerate() {
            match cells.get(&key) {
                Some(v) => values.push(*v),
                None => gaps.push(run_names[i].clone()),
            }
        }
        for g in &gaps {
            missing.push(format!("{} {} motion {}: no data in run {g}", key.0, key.1, motion_label(key.2)));
        }
        rows.push(SummaryRow { metric: key.0, system: key.1, motion_id: key.2, stats: Stats::of(&values), values, missing: gaps });
    }

    let mut scores: BTreeMap<Cell, Vec<f64>> = BTreeMap::new();
    for r in &ratings {
        let metric = r.target_kind.metric().to_string();
        scores.entry((metric.clone(), r.system_tag.clone(), Some(r.motion_id))).or_default().push(r.score as f64);
        scores.entry((metric, r.system_tag.clone(), None)).or_default().push(r.score as f64);
    }
    for (key, values) in scores {
        rows.push(SummaryRow { metric: key.0, system: key.1, motion_id: key.2, stats: Stats::of(&values), values, missing: vec![] });
    }
    Ok(RunSummary { runs: run_names, rows, missing })
}

fn motion_label(m: Option<u32>) -> String {
    m.map(|m| m.to_string()).unwrap_or_else(|| "all".into())
}

impl RunSummary {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }

    /// Aligned text: one block per metric, `mean (sd, var)` cells.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let metrics: BTreeSet<&str> = self.rows.iter().map(|r| r.metric.as_str()).collect();
        writeln!(out, "runs: {}", self.runs.join(", ")).unwrap();
        for metric in metrics {
            let rows: Vec<&SummaryRow> = self.rows.iter().filter(|r| r.metric == metric).collect();
            let sys_w = rows.iter().map(|r| r.system.len()).max().unwrap_or(6).max(6);
            writeln!(out, "\n{metric}").unwrap();
            writeln!(out, "{:<sys_w$}  {:>6}  {:>26}  {:>3}  note", "system", "motion", "mean (sd, var)", "n").unwrap();
            for r in rows {
                let (cell, n, note) = match &r.stats {
                    Some(s) => (
                        format!("{:.4} ({:.2}, {:.2})", s.mean, s.sd, s.var),
                        s.n.to_string(),
                        if s.single_run { "single run".to_string() } else { String::new() },
                    ),
                    None => ("-".into(), "0".into(), String::new()),
                };
                let note = if r.missing.is_empty() { note } else { format!("{note} missing: {}", r.missing.join(" ")) };
                writeln!(out, "{:<sys_w$}  {:>6}  {:>26}  {:>3}  {}", r.system, motion_label(r.motion_id), cell, n, note.trim())
                    .unwrap();
            }
        }
        if !self.missing.is_empty() {
            writeln!(out, "\nmissing data:").unwrap();
            for m in &self.missing {
                writeln!(out, "  {m}").unwrap();
            }
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), EvalError> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["metric", "system", "motion_id", "mean", "sd", "var", "n", "single_run", "missing"])?;
        for r in &self.rows {
            let (mean, sd, var, n, single) = match &r.stats {
                Some(s) => (s.mean.to_string(), s.sd.to_string(), s.var.to_string(), s.n.to_string(), s.single_run.to_string()),
                None => Default::default(),
            };
            csv.write_record([
                r.metric.as_str(),
                r.system.as_str(),
                &motion_label(r.motion_id),
                &mean,
                &sd,
                &var,
                &n,
                &single,
                &r.missing.join(" "),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn row(&self, metric: &str, system: &str, motion_id: Option<u32>) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.metric == metric && r.system == system && r.motion_id == motion_id)
    }
}

/// Ratings of one target kind.
pub fn ratings_of(records: &[RatingRecord], kind: TargetKind) -> Vec<RatingRecord> {
    records.iter().filter(|r| r.target_kind == kind).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_stats() {
        let s = Stats::of(&[0.75, 0.8125]).unwrap();
        assert_eq!((s.mean, s.sd), (0.78125, 0.03125));
        assert_eq!(s.var, s.sd * s.sd);
        assert!((s.var - 0.00098).abs() < 1e-5);
        let one = Stats::of(&[0.5]).unwrap();
        assert!(one.single_run && one.sd == 0.0 && one.var == 0.0);
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn three_raters_two_agree() {
        // 4, 4, 5 -> sd 0.47, var 0.22 at two decimals.
        let s = Stats::of(&[4.0, 4.0, 5.0]).unwrap();
        assert_eq!(format!("{:.2} ({:.2}, {:.2})", s.mean, s.sd, s.var), "4.33 (0.47, 0.22)");
    }
}
