//! Confusion matrices, classification metrics and seed-vs-integrated
//! comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Row order of rendered comparison tables.
pub const MODEL_ORDER: [&str; 6] = [
    "Linear SVM",
    "SVM (poly. kernel)",
    "ANN (ReLU)",
    "ANN (tanh)",
    "ANN (logistic)",
    "ANN (identity)",
];

/// Counts with Useful as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(gold: &[Label], pred: &[Label]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::Shape {
            expected: gold.len(),
            found: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Precondition("cannot score an empty label list".into()));
    }
    let mut c = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(pred) {
        match (g, p) {
            (Label::Useful, Label::Useful) => c.tp += 1,
            (Label::NotUseful, Label::Useful) => c.fp += 1,
            (Label::Useful, Label::NotUseful) => c.fn_ += 1,
            (Label::NotUseful, Label::NotUseful) => c.tn += 1,
            _ => {
                return Err(Error::Precondition(
                    "gold and predicted labels must be Useful or Not Useful".into(),
                ))
            }
        }
    }
    Ok(c)
}

/// Which ratios hit 0/0 and were reported as 0.0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: Degenerate,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

fn f1_score(precision: f64, recall: f64) -> (f64, bool) {
    ratio(2.0 * precision * recall, precision + recall)
}

/// Positive-class metrics. Panics never; `total == 0` yields all zeros.
pub fn metrics(c: &ConfusionMatrix) -> Metrics {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let (accuracy, _) = ratio(tp + tn, tp + fp + fn_ + tn);
    let (precision, dp) = ratio(tp, tp + fp);
    let (recall, dr) = ratio(tp, tp + fn_);
    let (f1, df) = f1_score(precision, recall);
    Metrics {
        accuracy,
        precision,
        recall,
        f1,
        degenerate: Degenerate {
            precision: dp,
            recall: dr,
            f1: df,
        },
    }
}

/// Precision, recall and F1 averaged over both classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn macro_metrics(c: &ConfusionMatrix) -> MacroMetrics {
    let pos = metrics(c);
    let flipped = ConfusionMatrix {
        tp: c.tn,
        fp: c.fn_,
        fn_: c.fp,
        tn: c.tp,
    };
    let neg = metrics(&flipped);
    MacroMetrics {
        precision: (pos.precision + neg.precision) / 2.0,
        recall: (pos.recall + neg.recall) / 2.0,
        f1: (pos.f1 + neg.f1) / 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Seed,
    Integrated,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Seed => "seed",
            Condition::Integrated => "integrated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub condition: Condition,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: Degenerate,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
}

impl EvalReport {
    pub fn from_confusion(model_name: impl Into<String>, condition: Condition, confusion: ConfusionMatrix) -> Self {
        let m = metrics(&confusion);
        EvalReport {
            model_name: model_name.into(),
            condition,
            confusion,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            degenerate: m.degenerate,
            macro_avg: macro_metrics(&confusion),
        }
    }
}

/// Anything that maps a feature vector to a label and a score.
pub trait Classifier {
    fn classify(&self, x: &FeatureVector) -> Result<(Label, f64)>;

    /// Fingerprint of the feature space the model was trained in.
    fn fingerprint(&self) -> &str;
}

/// Vectors plus gold labels, tagged with the feature space they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub fingerprint: String,
    pub vectors: Vec<FeatureVector>,
    pub labels: Vec<Label>,
}

pub fn evaluate(
    model: &dyn Classifier,
    model_name: &str,
    condition: Condition,
    test: &LabeledSet,
) -> Result<EvalReport> {
    if model.fingerprint() != test.fingerprint {
        return Err(Error::Compatibility {
            expected: model.fingerprint().to_string(),
            found: test.fingerprint.clone(),
        });
    }
    if test.vectors.is_empty() {
        return Err(Error::Precondition("test set is empty".into()));
    }
    if test.vectors.len() != test.labels.len() {
        return Err(Error::Shape {
            expected: test.vectors.len(),
            found: test.labels.len(),
        });
    }
    let pred = test
        .vectors
        .iter()
        .map(|x| model.classify(x).map(|(label, _)| label))
        .collect::<Result<Vec<_>>>()?;
    let c = confusion(&test.labels, &pred)?;
    Ok(EvalReport::from_confusion(model_name, condition, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_name: String,
    pub seed: EvalReport,
    pub integrated: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

fn rank(name: &str) -> usize {
    MODEL_ORDER
        .iter()
        .position(|&m| m == name)
        .unwrap_or(MODEL_ORDER.len())
}

fn index_by_name(reports: &[EvalReport], what: &str) -> Result<BTreeMap<String, EvalReport>> {
    let mut map = BTreeMap::new();
    for report in reports {
        if map.insert(report.model_name.clone(), report.clone()).is_some() {
            return Err(Error::Join(format!(
                "model {:?} appears twice among the {what} reports",
                report.model_name
            )));
        }
    }
    Ok(map)
}

/// Joins the two conditions by model name. Known models come first in
/// [`MODEL_ORDER`]; any others follow alphabetically.
pub fn compare(seed_reports: &[EvalReport], integrated_reports: &[EvalReport]) -> Result<ComparisonTable> {
    let seed = index_by_name(seed_reports, "seed")?;
    let mut integrated = index_by_name(integrated_reports, "integrated")?;
    let mut rows = Vec::with_capacity(seed.len());
    for (name, seed_report) in seed {
        let integrated_report = integrated
            .remove(&name)
            .ok_or_else(|| Error::Join(format!("model {name:?} has no integrated report")))?;
        rows.push(ComparisonRow {
            model_name: name,
            seed: seed_report,
            integrated: integrated_report,
        });
    }
    if let Some(name) = integrated.keys().next() {
        return Err(Error::Join(format!("model {name:?} has no seed report")));
    }
    rows.sort_by(|a, b| (rank(&a.model_name), &a.model_name).cmp(&(rank(&b.model_name), &b.model_name)));
    Ok(ComparisonTable { rows })
}

fn delta_pp(before: f64, after: f64) -> String {
    let pp = (after - before) * 100.0;
    // Avoid printing "-0.0".
    let pp = if pp.abs() < 0.05 { 0.0 } else { pp };
    format!("{pp:+.1}")
}

impl ComparisonTable {
    /// Fixed-width text table. Metrics use three decimals; deltas are
    /// integrated minus seed in percentage points.
    pub fn render_text(&self) -> String {
        let name_width = self
            .rows
            .iter()
            .map(|r| r.model_name.chars().count())
            .chain(std::iter::once("Model".len()))
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<w$}  {:>21}  {:>21}  {:>8}  {:>8}",
            "",
            "Seed Data",
            "Integrated Data",
            "",
            "",
            w = name_width
        );
        let _ = writeln!(
            out,
            "{:<w$}  {:>10} {:>10}  {:>10} {:>10}  {:>8}  {:>8}",
            "Model",
            "Accuracy",
            "F1",
            "Accuracy",
            "F1",
            "dAcc pp",
            "dF1 pp",
            w = name_width
        );
        let _ = writeln!(out, "{}", "-".repeat(name_width + 2 + 21 + 2 + 21 + 2 + 8 + 2 + 8));
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:<w$}  {:>10.3} {:>10.3}  {:>10.3} {:>10.3}  {:>8}  {:>8}",
                row.model_name,
                row.seed.accuracy,
                row.seed.f1,
                row.integrated.accuracy,
                row.integrated.f1,
                delta_pp(row.seed.accuracy, row.integrated.accuracy),
                delta_pp(row.seed.f1, row.integrated.f1),
                w = name_width
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{NotUseful as N, Useful as U};

    #[test]
    fn hand_counted_confusion() {
        let gold = [U, U, U, U, N, N, N, N, N, N];
        let pred = [U, U, U, N, U, N, N, N, N, N];
        let c = confusion(&gold, &pred).unwrap();
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (3, 1, 1, 5));
        let m = metrics(&c);
        assert_eq!(m.accuracy, 0.8);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert_eq!(m.f1, 0.75);
        assert!(!m.degenerate.any());
    }

    #[test]
    fn extreme_confusions() {
        let c = confusion(&[U; 5], &[U; 5]).unwrap();
        assert_eq!(c, ConfusionMatrix { tp: 5, ..Default::default() });
        let m = metrics(&c);
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));

        let c = confusion(&[N; 4], &[U; 4]).unwrap();
        assert_eq!(c, ConfusionMatrix { fp: 4, ..Default::default() });

        let m = metrics(&confusion(&[N; 3], &[N; 3]).unwrap());
        assert_eq!(m.precision, 0.0);
        assert!(m.degenerate.precision && m.degenerate.recall && m.degenerate.f1);
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(confusion(&[U, N], &[U]), Err(Error::Shape { .. })));
        assert!(confusion(&[], &[]).is_err());
        assert!(confusion(&[Label::Unlabeled], &[U]).is_err());
    }

    #[test]
    fn macro_average_of_symmetric_case() {
        let c = ConfusionMatrix { tp: 3, fp: 1, fn_: 1, tn: 5 };
        let m = macro_metrics(&c);
        assert!((m.precision - (0.75 + 5.0 / 6.0) / 2.0).abs() < 1e-15);
    }

    fn report(name: &str, condition: Condition, tp: u64) -> EvalReport {
        EvalReport::from_confusion(name, condition, ConfusionMatrix { tp, fp: 2, fn_: 3, tn: 4 })
    }

    #[test]
    fn compare_orders_and_joins() {
        let seed: Vec<_> = MODEL_ORDER.iter().rev().map(|m| report(m, Condition::Seed, 5)).collect();
        let integrated: Vec<_> = MODEL_ORDER.iter().map(|m| report(m, Condition::Integrated, 5)).collect();
        let table = compare(&seed, &integrated).unwrap();
        let names: Vec<_> = table.rows.iter().map(|r| r.model_name.as_str()).collect();
        assert_eq!(names, MODEL_ORDER);
        let text = table.render_text();
        assert_eq!(text.matches("+0.0").count(), 12);
        assert!(!text.contains("-0.0"));

        assert!(matches!(compare(&seed, &integrated[..5]), Err(Error::Join(_))));
        assert!(matches!(compare(&seed[..5], &integrated), Err(Error::Join(_))));
    }

    #[test]
    fn deltas_are_percentage_points() {
        let mut seed = report("Linear SVM", Condition::Seed, 5);
        let mut integrated = seed.clone();
        seed.accuracy = 0.79;
        integrated.accuracy = 0.85;
        integrated.condition = Condition::Integrated;
        let text = compare(&[seed], &[integrated]).unwrap().render_text();
        assert!(text.contains("+6.0"), "{text}");
    }

    struct Constant(Label);

    impl Classifier for Constant {
        fn classify(&self, _: &FeatureVector) -> Result<(Label, f64)> {
            Ok((self.0, 1.0))
        }
        fn fingerprint(&self) -> &str {
            "fp"
        }
    }

    #[test]
    fn constant_useful_model() {
        let labels: Vec<Label> = (0..10).map(|i| if i < 6 { U } else { N }).collect();
        let set = LabeledSet {
            fingerprint: "fp".into(),
            vectors: vec![FeatureVector::zeros(3); 10],
            labels,
        };
        let r = evaluate(&Constant(U), "const", Condition::Seed, &set).unwrap();
        assert_eq!(r.accuracy, 0.6);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r, evaluate(&Constant(U), "const", Condition::Seed, &set).unwrap());

        let other = LabeledSet {
            fingerprint: "other".into(),
            ..set.clone()
        };
        assert!(matches!(
            evaluate(&Constant(U), "const", Condition::Seed, &other),
            Err(Error::Compatibility { .. })
        ));
        let empty = LabeledSet {
            fingerprint: "fp".into(),
            vectors: vec![],
            labels: vec![],
        };
        assert!(evaluate(&Constant(U), "const", Condition::Seed, &empty).is_err());
    }
}
