//! Classification metrics and run-level aggregation.
//!
//! Macro averages run over the classes that occur in the evaluated fold's
//! true labels, so a sign missing from a test signer neither counts as a
//! zero nor produces a NaN. Per-class F1 is averaged directly (it is not the
//! harmonic mean of macro precision and macro recall).
//!
//! A row-normalized confusion matrix has per-class *recall* on its diagonal.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Counts indexed `[true][predicted]`, classes in vocabulary order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: &[String]) -> Self {
        let n = classes.len();
        Self {
            classes: classes.to_vec(),
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn from_indices(classes: &[String], truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Argument(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut m = Self::zeros(classes);
        let n = classes.len();
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n || p >= n {
                return Err(Error::Argument(format!("class index {} out of range 0..{n}", t.max(p))));
            }
            m.counts[t][p] += 1;
        }
        Ok(m)
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Element-wise sum; both matrices must share the vocabulary.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.classes != other.classes {
            return Err(Error::Argument("cannot merge confusion matrices over different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// CSV with a header row of predicted labels and a leading true-label column.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in &self.classes {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            s.push_str(c);
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Counts `[true][predicted]` pairs of labels drawn from `vocabulary`.
pub fn confusion<S: AsRef<str>>(truth: &[S], predicted: &[S], vocabulary: &[String]) -> Result<ConfusionMatrix> {
    let index = |l: &S| {
        vocabulary
            .iter()
            .position(|v| v == l.as_ref())
            .ok_or_else(|| Error::Argument(format!("label `{}` not in vocabulary", l.as_ref())))
    };
    let t = truth.iter().map(index).collect::<Result<Vec<_>>>()?;
    let p = predicted.iter().map(index).collect::<Result<Vec<_>>>()?;
    ConfusionMatrix::from_indices(vocabulary, &t, &p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedConfusion {
    pub classes: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Rows without any true sample; left at zero.
    pub absent: Vec<bool>,
}

impl NormalizedConfusion {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in &self.classes {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.rows) {
            s.push_str(c);
            for v in row {
                s.push_str(&format!(",{v:.4}"));
            }
            s.push('\n');
        }
        s
    }

    /// Heatmap with darker blue for larger fractions.
    pub fn save_heatmap(&self, path: &Path, cell: u32) -> Result<()> {
        let n = self.classes.len() as u32;
        let side = (n * cell).max(1);
        let img = image::RgbImage::from_fn(side, side, |x, y| {
            let (r, c) = ((y / cell) as usize, (x / cell) as usize);
            let v = self.rows.get(r).and_then(|row| row.get(c)).copied().unwrap_or(0.0);
            let lerp = |a: f64, b: f64| (a + (b - a) * v.clamp(0.0, 1.0)).round() as u8;
            image::Rgb([lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0)])
        });
        img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format(other.to_string()),
        })
    }
}

pub fn normalize_rows(m: &ConfusionMatrix) -> NormalizedConfusion {
    let mut absent = Vec::with_capacity(m.n_classes());
    let rows = m
        .counts
        .iter()
        .map(|row| {
            let sum: u64 = row.iter().sum();
            absent.push(sum == 0);
            if sum == 0 {
                vec![0.0; row.len()]
            } else {
                row.iter().map(|&v| v as f64 / sum as f64).collect()
            }
        })
        .collect();
    NormalizedConfusion {
        classes: m.classes.clone(),
        rows,
        absent,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

pub fn macro_metrics(m: &ConfusionMatrix) -> Result<MacroMetrics> {
    let total = m.total();
    if total == 0 {
        return Err(Error::Argument("metrics need at least one evaluated sample".into()));
    }
    let n = m.n_classes();
    let col_sums: Vec<u64> = (0..n).map(|j| m.counts.iter().map(|r| r[j]).sum()).collect();
    let (mut p_sum, mut r_sum, mut f_sum, mut present) = (0.0, 0.0, 0.0, 0usize);
    for (c, row) in m.counts.iter().enumerate() {
        let support: u64 = row.iter().sum();
        if support == 0 {
            continue;
        }
        present += 1;
        let tp = row[c] as f64;
        let precision = if col_sums[c] == 0 { 0.0 } else { tp / col_sums[c] as f64 };
        let recall = tp / support as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
    }
    let k = present as f64;
    Ok(MacroMetrics {
        accuracy: m.trace() as f64 / total as f64,
        macro_precision: p_sum / k,
        macro_recall: r_sum / k,
        macro_f1: f_sum / k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub samples_ms: Vec<f64>,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: Vec<f64>) -> Option<Self> {
        if samples_ms.is_empty() {
            return None;
        }
        let mut sorted = samples_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            // nearest-rank
            let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
            sorted[rank - 1]
        };
        let median = if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
        };
        Some(Self {
            count: sorted.len(),
            mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median_ms: median,
            p95_ms: q(0.95),
            samples_ms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionResult {
    pub section_id: usize,
    pub test_signer: String,
    pub val_signer: String,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<LatencyStats>,
}

impl SectionResult {
    pub fn from_confusion(
        section_id: usize,
        test_signer: &str,
        val_signer: &str,
        confusion: ConfusionMatrix,
    ) -> Result<Self> {
        let m = macro_metrics(&confusion)?;
        Ok(Self {
            section_id,
            test_signer: test_signer.to_string(),
            val_signer: val_signer.to_string(),
            accuracy: m.accuracy,
            macro_precision: m.macro_precision,
            macro_recall: m.macro_recall,
            macro_f1: m.macro_f1,
            confusion,
            timing: None,
        })
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sections: Vec<SectionResult>,
    pub aggregate: AggregateMetrics,
    /// Sum of all section confusion matrices.
    pub confusion: ConfusionMatrix,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<LatencyStats>,
}

impl RunReport {
    /// `Accuracy | Precision | Recall | F1-score` row of `mean ± std` cells.
    pub fn table_row(&self) -> String {
        let a = &self.aggregate;
        format!("{} | {} | {} | {}", a.accuracy, a.precision, a.recall, a.f1)
    }
}

/// Per-metric mean and population std over sections, which are reordered by
/// `section_id` first.
pub fn aggregate(results: &[SectionResult]) -> Result<RunReport> {
    if results.is_empty() {
        return Err(Error::Argument("no section results to aggregate".into()));
    }
    let mut sections = results.to_vec();
    sections.sort_by_key(|s| s.section_id);
    let col = |f: fn(&SectionResult) -> f64| sections.iter().map(f).collect::<Vec<_>>();
    let aggregate = AggregateMetrics {
        accuracy: Summary::of(&col(|s| s.accuracy)),
        precision: Summary::of(&col(|s| s.macro_precision)),
        recall: Summary::of(&col(|s| s.macro_recall)),
        f1: Summary::of(&col(|s| s.macro_f1)),
    };
    let mut confusion = ConfusionMatrix::zeros(&sections[0].confusion.classes);
    for s in &sections {
        confusion.merge(&s.confusion)?;
    }
    let pooled: Vec<f64> = sections
        .iter()
        .filter_map(|s| s.timing.as_ref())
        .flat_map(|t| t.samples_ms.iter().copied())
        .collect();
    Ok(RunReport {
        sections,
        aggregate,
        confusion,
        config: serde_json::Value::Null,
        timing: LatencyStats::from_samples(pooled),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn vocab(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn cm(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        ConfusionMatrix {
            classes: vocab(counts.len()),
            counts,
        }
    }

    #[test]
    fn counts_by_label() {
        let v = vec!["a".to_string(), "b".to_string()];
        let m = confusion(&["a", "a", "b"], &["a", "b", "b"], &v).unwrap();
        assert_eq!(m.counts, vec![vec![1, 1], vec![0, 1]]);
        let perfect = confusion(&["a", "b", "b"], &["a", "b", "b"], &v).unwrap();
        assert_eq!(perfect.counts, vec![vec![1, 0], vec![0, 2]]);
        let empty = confusion::<&str>(&[], &[], &v).unwrap();
        assert_eq!(empty.total(), 0);
        assert!(confusion(&["a"], &["z"], &v).is_err());
        assert!(confusion(&["a"], &[], &v).is_err());
    }

    #[test]
    fn row_normalization() {
        let n = normalize_rows(&cm(vec![vec![1, 1], vec![0, 1]]));
        assert_eq!(n.rows, vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        let z = normalize_rows(&cm(vec![vec![2, 0], vec![0, 0]]));
        assert_eq!(z.rows[1], vec![0.0, 0.0]);
        assert_eq!(z.absent, vec![false, true]);
    }

    #[test]
    fn hand_computed_macro_metrics() {
        let m = macro_metrics(&cm(vec![vec![1, 1], vec![0, 1]])).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.macro_precision - 0.75).abs() < 1e-15);
        assert!((m.macro_recall - 0.75).abs() < 1e-15);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-15);
        let p = macro_metrics(&cm(vec![vec![3, 0, 0], vec![0, 3, 0], vec![0, 0, 3]])).unwrap();
        assert_eq!((p.accuracy, p.macro_precision, p.macro_recall, p.macro_f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn absent_class_excluded() {
        // class 2 never appears as truth nor prediction
        let m = macro_metrics(&cm(vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 0]])).unwrap();
        assert_eq!(m.macro_recall, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert!(macro_metrics(&cm(vec![vec![0, 0], vec![0, 0]])).is_err());
    }

    #[test]
    fn aggregate_population_std() {
        let mk = |id, acc: f64| SectionResult {
            section_id: id,
            test_signer: "a".into(),
            val_signer: "b".into(),
            accuracy: acc,
            macro_precision: acc,
            macro_recall: acc,
            macro_f1: acc,
            confusion: cm(vec![vec![1, 0], vec![0, 1]]),
            timing: None,
        };
        let r = aggregate(&[mk(1, 1.0), mk(0, 0.8)]).unwrap();
        assert!((r.aggregate.accuracy.mean - 0.9).abs() < 1e-12);
        assert!((r.aggregate.accuracy.std - 0.1).abs() < 1e-12);
        assert_eq!(r.sections[0].section_id, 0);
        assert_eq!(r.confusion.total(), 4);
        let single = aggregate(&[mk(0, 0.7)]).unwrap();
        assert_eq!(single.aggregate.accuracy.std, 0.0);
        assert!(aggregate(&[]).is_err());
        let fmt = Summary { mean: 0.93, std: 0.05 }.to_string();
        assert_eq!(fmt, "0.93 ± 0.05");
    }

    #[test]
    fn latency_quantiles() {
        let s = LatencyStats::from_samples((1..=100).map(f64::from).collect()).unwrap();
        assert_eq!(s.median_ms, 50.5);
        assert_eq!(s.p95_ms, 95.0);
        assert!(LatencyStats::from_samples(vec![]).is_none());
    }

    fn matrix_strategy() -> impl Strategy<Value = ConfusionMatrix> {
        (2usize..8).prop_flat_map(|n| {
            prop::collection::vec(prop::collection::vec(0u64..20, n), n).prop_map(cm)
        })
    }

    proptest! {
        #[test]
        fn rows_sum_to_one_or_zero(m in matrix_strategy()) {
            let n = normalize_rows(&m);
            for (row, absent) in n.rows.iter().zip(&n.absent) {
                let s: f64 = row.iter().sum();
                if *absent { prop_assert_eq!(s, 0.0) } else { prop_assert!((s - 1.0).abs() < 1e-12) }
            }
        }

        #[test]
        fn vocabulary_permutation_commutes(m in matrix_strategy(), rot in 0usize..8) {
            let n = m.n_classes();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let permuted = ConfusionMatrix {
                classes: perm.iter().map(|&i| m.classes[i].clone()).collect(),
                counts: perm.iter().map(|&i| perm.iter().map(|&j| m.counts[i][j]).collect()).collect(),
            };
            if m.total() > 0 {
                let a = macro_metrics(&m).unwrap();
                let b = macro_metrics(&permuted).unwrap();
                prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12);
                prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
            }
        }

        #[test]
        fn accuracy_is_micro_recall(m in matrix_strategy()) {
            if m.total() > 0 {
                let micro_recall = m.trace() as f64 / m.counts.iter().flatten().sum::<u64>() as f64;
                prop_assert_eq!(macro_metrics(&m).unwrap().accuracy, micro_recall);
            }
        }

        #[test]
        fn symmetric_balanced_has_equal_macro_p_r(n in 2usize..6, vals in prop::collection::vec(0u64..5, 36)) {
            // symmetric with equal row sums -> equal column sums
            let mut counts = vec![vec![0u64; n]; n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = vals[i * 6 + j];
                    counts[i][j] = v;
                    counts[j][i] = v;
                }
            }
            let row_max = counts.iter().map(|r| r.iter().sum::<u64>()).max().unwrap();
            for (i, row) in counts.iter_mut().enumerate() {
                let s: u64 = row.iter().sum();
                row[i] = row_max - s + 1;
            }
            let m = macro_metrics(&cm(counts)).unwrap();
            prop_assert!((m.macro_precision - m.macro_recall).abs() < 1e-12);
        }
    }
}
