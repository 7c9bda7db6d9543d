//! Top-k accuracy, confusion matrices and per-class gain/loss tables.
//!
//! Ranking ties between equal logits go to the lower class index, both for
//! the top-1 prediction and for top-k membership.

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SkeletonSequence, NTU_ACTION_LABELS};
use crate::models::Model;
use crate::numerics::Tensor;
use crate::pipeline::batch_tensor;
use crate::{Error, Result};

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_CONFUSION_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_classes: usize,
    /// Percent.
    pub top1: f64,
    /// Percent; equals `top1` semantics with `k = min(5, num_classes)`.
    pub top5: f64,
    /// Percent per true class; 0 for classes without samples.
    pub per_class_acc: Vec<f64>,
    /// Rows are true classes, columns top-1 predictions.
    pub confusion: Vec<Vec<u64>>,
    pub sample_count: usize,
    #[serde(default)]
    pub tag: String,
}

impl EvalReport {
    pub fn class_counts(&self) -> Vec<u64> {
        self.confusion.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: EvalReport = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let n = report.num_classes;
        if report.per_class_acc.len() != n || report.confusion.len() != n || report.confusion.iter().any(|r| r.len() != n) {
            return Err(Error::Schema(format!("report tables do not match num_classes {n}")));
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Confusion counts as CSV with a `true\predicted` header row.
    pub fn confusion_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend((0..self.num_classes).map(|c| c.to_string()));
        w.write_record(&header)?;
        for (c, row) in self.confusion.iter().enumerate() {
            let mut rec = vec![c.to_string()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn rows_of(logits: &Tensor) -> Result<(usize, usize)> {
    match logits.shape() {
        &[n, k] if k > 0 => Ok((n, k)),
        other => Err(Error::dim("evaluate", format!("logits must be [N, classes], got {other:?}"))),
    }
}

/// Zero-based rank of `class` within `row`: how many classes beat it.
fn rank_of(row: &[f64], class: usize) -> usize {
    let y = row[class];
    row.iter()
        .enumerate()
        .filter(|&(j, &v)| v > y || (v == y && j < class))
        .count()
}

/// Arg-max of every row, lowest index on ties.
pub fn top1_predictions(logits: &Tensor) -> Result<Vec<usize>> {
    let (_, k) = rows_of(logits)?;
    Ok(logits
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(0, |best, (j, &v)| if v > row[best] { j } else { best })
        })
        .collect())
}

/// The `k` highest-scoring classes of `row`, best first.
pub fn top_k(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn evaluate(logits: &Tensor, labels: &[usize]) -> Result<EvalReport> {
    let (n, k) = rows_of(logits)?;
    if n == 0 {
        return Err(Error::dim("evaluate", "no samples"));
    }
    if labels.len() != n {
        return Err(Error::dim("evaluate", format!("{n} logit rows but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Domain(format!("label {bad} outside [0, {k})")));
    }
    if !logits.all_finite() {
        return Err(Error::Domain("logits contain non-finite values".into()));
    }
    let top5_k = k.min(5);
    let preds = top1_predictions(logits)?;
    let mut confusion = vec![vec![0u64; k]; k];
    let mut top5_hits = 0usize;
    for ((row, &label), &pred) in logits.data().chunks(k).zip(labels).zip(&preds) {
        confusion[label][pred] += 1;
        if rank_of(row, label) < top5_k {
            top5_hits += 1;
        }
    }
    let correct: u64 = (0..k).map(|c| confusion[c][c]).sum();
    let per_class_acc = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                100.0 * row[c] as f64 / total as f64
            }
        })
        .collect();
    Ok(EvalReport {
        num_classes: k,
        top1: 100.0 * correct as f64 / n as f64,
        top5: 100.0 * top5_hits as f64 / n as f64,
        per_class_acc,
        confusion,
        sample_count: n,
        tag: String::new(),
    })
}

/// Eval-mode logits for prepared sequences, `[N, classes]`. Batches are
/// spread over the rayon pool; each worker records on its own tape.
pub fn predict_logits(model: &Model, seqs: &[SkeletonSequence], batch_size: usize) -> Result<Tensor> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let parts = seqs
        .par_chunks(batch_size)
        .map(|chunk| {
            let refs: Vec<&SkeletonSequence> = chunk.iter().collect();
            model.predict(&batch_tensor(&refs)?)
        })
        .collect::<Result<Vec<Tensor>>>()?;
    let k = model.num_classes();
    let data: Vec<f64> = parts.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::new(vec![seqs.len(), k], data)
}

pub fn evaluate_model(model: &Model, seqs: &[SkeletonSequence], batch_size: usize, tag: &str) -> Result<EvalReport> {
    let logits = predict_logits(model, seqs, batch_size)?;
    let labels: Vec<usize> = seqs.iter().map(|s| s.label).collect();
    let mut report = evaluate(&logits, &labels)?;
    report.tag = tag.to_string();
    Ok(report)
}

/// Row-normalized confusion in percent with entries strictly below
/// `threshold_percent` set to zero. For display only.
pub fn filter_confusion(report: &EvalReport, threshold_percent: f64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..=100.0).contains(&threshold_percent) {
        return Err(Error::Config(format!("threshold {threshold_percent} outside [0, 100]")));
    }
    Ok(report
        .confusion
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|&count| {
                    if total == 0 {
                        return 0.0;
                    }
                    let pct = 100.0 * count as f64 / total as f64;
                    if pct < threshold_percent {
                        0.0
                    } else {
                        pct
                    }
                })
                .collect()
        })
        .collect())
}

/// NTU action names when the class count matches an NTU benchmark prefix,
/// otherwise `class <id>`.
pub fn default_class_names(num_classes: usize) -> Vec<String> {
    if num_classes == 60 || num_classes == 120 {
        NTU_ACTION_LABELS[..num_classes].iter().map(|s| s.to_string()).collect()
    } else {
        (0..num_classes).map(|c| format!("class {c}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub class: usize,
    pub name: String,
    pub acc_a: f64,
    pub acc_b: f64,
    /// `acc_b − acc_a`.
    pub delta: f64,
}

/// Per-class accuracy change between two runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    /// Every class, largest gain first.
    pub rows: Vec<DeltaRow>,
    /// The `k` largest deltas, descending.
    pub top_gains: Vec<DeltaRow>,
    /// The `k` smallest deltas, ascending.
    pub top_losses: Vec<DeltaRow>,
}

/// Deltas compared at micro-percent resolution so that float noise from
/// the subtraction never reorders values that agree at reporting precision.
fn delta_key(delta: f64) -> i64 {
    (delta * 1e6).round() as i64
}

impl DeltaTable {
    pub fn from_rows(mut rows: Vec<DeltaRow>, k: usize) -> Self {
        rows.sort_by(|a, b| delta_key(b.delta).cmp(&delta_key(a.delta)).then(a.class.cmp(&b.class)));
        let top_gains = rows.iter().take(k).cloned().collect();
        let mut ascending = rows.clone();
        ascending.sort_by(|a, b| delta_key(a.delta).cmp(&delta_key(b.delta)).then(a.class.cmp(&b.class)));
        ascending.truncate(k);
        DeltaTable {
            rows,
            top_gains,
            top_losses: ascending,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (title, rows) in [("gains", &self.top_gains), ("losses", &self.top_losses)] {
            out.push_str(&format!("top {} {title}\n", rows.len()));
            for r in rows {
                out.push_str(&format!(
                    "{:>4}  {:<48} {:>6.1} {:>6.1} {:>+6.1}\n",
                    r.class, r.name, r.acc_a, r.acc_b, r.delta
                ));
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["section", "rank", "class", "name", "acc_a", "acc_b", "delta"])?;
        for (section, rows) in [("gain", &self.top_gains), ("loss", &self.top_losses)] {
            for (rank, r) in rows.iter().enumerate() {
                w.write_record([
                    section.to_string(),
                    (rank + 1).to_string(),
                    r.class.to_string(),
                    r.name.clone(),
                    r.acc_a.to_string(),
                    r.acc_b.to_string(),
                    r.delta.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn delta_table_from_accuracies(acc_a: &[f64], acc_b: &[f64], k: usize, names: &[String]) -> Result<DeltaTable> {
    if acc_a.len() != acc_b.len() {
        return Err(Error::dim(
            "delta_table",
            format!("{} vs {} classes", acc_a.len(), acc_b.len()),
        ));
    }
    if names.len() != acc_a.len() {
        return Err(Error::dim(
            "delta_table",
            format!("{} names for {} classes", names.len(), acc_a.len()),
        ));
    }
    let rows = acc_a
        .iter()
        .zip(acc_b)
        .zip(names)
        .enumerate()
        .map(|(class, ((&a, &b), name))| DeltaRow {
            class,
            name: name.clone(),
            acc_a: a,
            acc_b: b,
            delta: b - a,
        })
        .collect();
    Ok(DeltaTable::from_rows(rows, k))
}

pub fn delta_table(a: &EvalReport, b: &EvalReport, k: usize, names: &[String]) -> Result<DeltaTable> {
    if a.num_classes != b.num_classes {
        return Err(Error::dim(
            "delta_table",
            format!("reports have {} and {} classes", a.num_classes, b.num_classes),
        ));
    }
    delta_table_from_accuracies(&a.per_class_acc, &b.per_class_acc, k, names)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureSection {
    Gain,
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub section: FixtureSection,
    #[serde(rename = "class")]
    pub name: String,
    pub original: f64,
    pub taylor: f64,
    pub reported_delta: f64,
    #[serde(skip)]
    pub class_id: usize,
}

/// Published per-class accuracies for one model, dataset and split,
/// original input versus Taylor input.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyFixture {
    pub model: String,
    pub dataset: String,
    pub split: String,
    pub rows: Vec<FixtureRow>,
}

impl AccuracyFixture {
    /// Parses the CSV fixture format: `# key: value` comment lines carrying
    /// `model`, `dataset` (`ntu60` or `ntu120`) and `split`, then a header
    /// `section,class,original,taylor,reported_delta`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = std::collections::HashMap::new();
        for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
            if let Some((key, value)) = line.split_once(':') {
                meta.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        let field = |key: &str| {
            meta.get(key)
                .cloned()
                .ok_or_else(|| Error::Fixture(format!("missing `# {key}:` header")))
        };
        let (model, dataset, split) = (field("model")?, field("dataset")?, field("split")?);
        let classes = match dataset.as_str() {
            "ntu60" => 60,
            "ntu120" => 120,
            other => return Err(Error::Fixture(format!("unknown dataset `{other}`"))),
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<FixtureRow>().enumerate() {
            let mut row = rec.map_err(|e| Error::Fixture(format!("row {}: {e}", i + 1)))?;
            row.class_id = NTU_ACTION_LABELS[..classes]
                .iter()
                .position(|&n| n == row.name)
                .ok_or_else(|| Error::Fixture(format!("`{}` is not a {dataset} action label", row.name)))?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Fixture("no rows".into()));
        }
        Ok(AccuracyFixture {
            model,
            dataset,
            split,
            rows,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Fixture(format!("{}: {e}", path.display())))
    }

    /// Delta table over the listed classes, original → Taylor.
    pub fn delta_table(&self, k: usize) -> DeltaTable {
        let rows = self
            .rows
            .iter()
            .map(|r| DeltaRow {
                class: r.class_id,
                name: r.name.clone(),
                acc_a: r.original,
                acc_b: r.taylor,
                delta: r.taylor - r.original,
            })
            .collect();
        DeltaTable::from_rows(rows, k)
    }

    /// Rows whose published delta disagrees with the listed accuracies at
    /// one-decimal precision.
    pub fn inconsistent_rows(&self) -> Vec<&FixtureRow> {
        self.rows
            .iter()
            .filter(|r| delta_key(r.taylor - r.original).abs_diff(delta_key(r.reported_delta)) > 1)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        let k = rows[0].len();
        Tensor::new(vec![rows.len(), k], rows.concat()).unwrap()
    }

    #[test]
    fn ties_go_to_lower_index() {
        let l = t(&[&[1.0, 1.0, 0.0], &[0.0, 2.0, 2.0]]);
        assert_eq!(top1_predictions(&l).unwrap(), vec![0, 1]);
        assert_eq!(top_k(&[1.0, 3.0, 3.0, 0.0], 2), vec![1, 2]);
        assert_eq!(rank_of(&[1.0, 3.0, 3.0, 0.0], 2), 1);
    }

    #[test]
    fn all_correct() {
        let l = t(&[&[9.0, 0.0, 0.0, 0.0], &[0.0, 9.0, 0.0, 0.0], &[0.0, 0.0, 9.0, 0.0], &[0.0, 0.0, 0.0, 9.0]]);
        let r = evaluate(&l, &[0, 1, 2, 3]).unwrap();
        assert_eq!((r.top1, r.top5), (100.0, 100.0));
        for c in 0..4 {
            assert_eq!(r.confusion[c][c], 1);
        }
    }

    #[test]
    fn constant_prediction() {
        let n = 10;
        let rows: Vec<&[f64]> = (0..n).map(|_| &[1.0, 0.0][..]).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let r = evaluate(&t(&rows), &labels).unwrap();
        assert_eq!(r.top1, 50.0);
        assert_eq!(r.confusion, vec![vec![5, 0], vec![5, 0]]);
        assert_eq!(r.top5, 100.0);
    }

    #[test]
    fn shape_errors() {
        let l = t(&[&[1.0, 0.0]]);
        assert!(evaluate(&l, &[0, 1]).is_err());
        assert!(evaluate(&l, &[2]).is_err());
        let mut a = evaluate(&l, &[0]).unwrap();
        let b = a.clone();
        a.num_classes = 3;
        assert!(delta_table(&a, &b, 1, &default_class_names(2)).is_err());
    }

    #[test]
    fn filter_boundaries() {
        let report = EvalReport {
            num_classes: 4,
            top1: 0.0,
            top5: 0.0,
            per_class_acc: vec![0.0; 4],
            confusion: vec![vec![19, 1, 0, 0], vec![1, 1, 1, 97], vec![0; 4], vec![0, 0, 0, 3]],
            sample_count: 123,
            tag: String::new(),
        };
        let f = filter_confusion(&report, 5.0).unwrap();
        assert_eq!(f[0], vec![95.0, 5.0, 0.0, 0.0]);
        assert_eq!(f[1], vec![0.0, 0.0, 0.0, 97.0]);
        assert_eq!(f[2], vec![0.0; 4]);
        let raw = filter_confusion(&report, 0.0).unwrap();
        assert_eq!(raw[1], vec![1.0, 1.0, 1.0, 97.0]);
        assert!(filter_confusion(&report, 101.0).is_err());
    }

    #[test]
    fn fixture_rejects_unknown_class() {
        let text = "# model: m\n# dataset: ntu60\n# split: xsub\nsection,class,original,taylor,reported_delta\ngain,juggling,1,2,1\n";
        assert!(matches!(AccuracyFixture::parse(text), Err(Error::Fixture(_))));
        let text = text.replace("juggling", "drink water");
        let f = AccuracyFixture::parse(&text).unwrap();
        assert_eq!(f.rows[0].class_id, 0);
    }

    #[test]
    fn report_json_round_trip() {
        let mut r = evaluate(&t(&[&[0.2, 0.5, 0.1], &[0.9, 0.0, 0.0]]), &[1, 2]).unwrap();
        r.tag = "run".into();
        assert_eq!(EvalReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        let csv = r.confusion_csv().unwrap();
        assert_eq!(csv.lines().nth(3).unwrap(), "2,1,0,0");
    }
}
