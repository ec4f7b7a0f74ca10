//! Result tables and error-analysis reports.
//!
//! Numbers are printed with 4 decimals, rounded half-to-even on the shortest
//! decimal representation of the value. Column maxima are compared on the
//! printed mean, so values that print the same are tied and all marked.
//!
//! Markdown marks maxima in bold. CSV output is long-format with the header
//! `table,method,row,metric,mean,std,is_max`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::classifier::PredictionRecord;
use crate::corpus::{Dataset, Emotion, NUM_LABELS};
use crate::error::{Error, Result};
use crate::metrics::{MeanStd, Prf, RunAggregate};

pub const CSV_HEADER: &str = "table,method,row,metric,mean,std,is_max";

pub const FOOTER: &str = "Precision, recall or F1 with a zero denominator counts as 0. \
Spread is the sample standard deviation (n - 1) across runs. \
Whether the official task scorer uses the same zero-division convention is not known.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Md,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Md => "md",
            Format::Csv => "csv",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "md" => Ok(Format::Md),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Argument(format!("unknown format `{other}` (md or csv)"))),
        }
    }
}

/// Four decimals, ties to even.
pub fn fixed4(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    match Decimal::from_str(&x.to_string()) {
        Ok(d) => {
            let r = d.round_dp_with_strategy(4, RoundingStrategy::MidpointNearestEven);
            let s = format!("{r:.4}");
            if s == "-0.0000" { "0.0000".into() } else { s }
        }
        // beyond Decimal's range; metrics never get here
        Err(_) => format!("{x:.4}"),
    }
}

fn mean_std(m: &MeanStd<f64>) -> String {
    format!("{} ± {}", fixed4(m.mean), fixed4(m.std))
}

/// Which entries equal the column maximum after rounding.
fn max_flags(values: &[f64]) -> Vec<bool> {
    let printed: Vec<String> = values.iter().map(|&v| fixed4(v)).collect();
    let best = values
        .iter()
        .zip(&printed)
        .max_by(|a, b| a.0.total_cmp(b.0))
        .map(|(_, p)| p.clone());
    printed.iter().map(|p| Some(p) == best.as_ref()).collect()
}

fn bold_if(cell: String, on: bool) -> String {
    if on {
        format!("**{cell}**")
    } else {
        cell
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const OVERALL_COLUMNS: [&str; 6] = [
    "macro_precision",
    "macro_recall",
    "macro_f1",
    "micro_precision",
    "micro_recall",
    "micro_f1",
];

fn overall_cells(a: &RunAggregate<f64>) -> [MeanStd<f64>; 6] {
    [
        a.macro_avg.precision,
        a.macro_avg.recall,
        a.macro_avg.f1,
        a.micro_avg.precision,
        a.micro_avg.recall,
        a.micro_avg.f1,
    ]
}

/// One row per method; macro and micro P/R/F1 as `mean ± std`, column maxima marked.
pub fn overall_table(results: &[(String, RunAggregate<f64>)], format: Format) -> Result<String> {
    if results.is_empty() {
        return Err(Error::Argument("overall table needs at least one method".into()));
    }
    let cells: Vec<[MeanStd<f64>; 6]> = results.iter().map(|(_, a)| overall_cells(a)).collect();
    let flags: Vec<Vec<bool>> = (0..6)
        .map(|c| max_flags(&cells.iter().map(|row| row[c].mean).collect::<Vec<_>>()))
        .collect();

    let mut out = String::new();
    match format {
        Format::Md => {
            out.push_str("| Method | Macro Precision | Macro Recall | Macro F1 | Micro Precision | Micro Recall | Micro F1 |\n");
            out.push_str("|---|---|---|---|---|---|---|\n");
            for (r, (method, _)) in results.iter().enumerate() {
                let _ = write!(out, "| {method} |");
                for c in 0..6 {
                    let _ = write!(out, " {} |", bold_if(mean_std(&cells[r][c]), flags[c][r]));
                }
                out.push('\n');
            }
        }
        Format::Csv => {
            for (r, (method, _)) in results.iter().enumerate() {
                for c in 0..6 {
                    let _ = writeln!(
                        out,
                        "overall,{},all,{},{},{},{}",
                        csv_field(method),
                        OVERALL_COLUMNS[c],
                        fixed4(cells[r][c].mean),
                        fixed4(cells[r][c].std),
                        flags[c][r]
                    );
                }
            }
        }
    }
    Ok(out)
}

pub type PerEmotionScores = BTreeMap<Emotion, Prf<f64>>;

pub fn per_emotion_scores(per_label: &crate::corpus::PerLabel<Prf<f64>>) -> PerEmotionScores {
    per_label.iter().map(|(e, p)| (e, *p)).collect()
}

/// One row per emotion in canonical order, P/R/F1 per method, row-wise maxima marked.
pub fn per_emotion_table(results: &[(String, PerEmotionScores)], format: Format) -> Result<String> {
    if results.is_empty() {
        return Err(Error::Argument("per-emotion table needs at least one method".into()));
    }
    for (method, scores) in results {
        let missing: Vec<&str> = Emotion::ALL
            .iter()
            .filter(|e| !scores.contains_key(e))
            .map(|e| e.name())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Consistency(format!(
                "method `{method}` has no scores for: {}",
                missing.join(", ")
            )));
        }
    }
    let metric = |p: &Prf<f64>, m: usize| [p.precision, p.recall, p.f1][m];
    let mut out = String::new();
    if format == Format::Md {
        out.push_str("| Emotion |");
        for (method, _) in results {
            let _ = write!(out, " {method} Precision | {method} Recall | {method} F1 |");
        }
        out.push('\n');
        out.push_str("|---|");
        out.push_str(&"---|".repeat(3 * results.len()));
        out.push('\n');
    }
    for e in Emotion::ALL {
        let flags: Vec<Vec<bool>> = (0..3)
            .map(|m| max_flags(&results.iter().map(|(_, s)| metric(&s[&e], m)).collect::<Vec<_>>()))
            .collect();
        match format {
            Format::Md => {
                let _ = write!(out, "| {} |", e.title());
                for (i, (_, scores)) in results.iter().enumerate() {
                    for (m, is_max) in flags.iter().enumerate() {
                        let _ = write!(out, " {} |", bold_if(fixed4(metric(&scores[&e], m)), is_max[i]));
                    }
                }
                out.push('\n');
            }
            Format::Csv => {
                for (i, (method, scores)) in results.iter().enumerate() {
                    for (m, name) in ["precision", "recall", "f1"].iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "per_emotion,{},{},{},{},,{}",
                            csv_field(method),
                            e.name(),
                            name,
                            fixed4(metric(&scores[&e], m)),
                            flags[m][i]
                        );
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Both tables and the footer as one document.
pub fn render_report(
    overall: &[(String, RunAggregate<f64>)],
    per_emotion: &[(String, PerEmotionScores)],
    format: Format,
) -> Result<String> {
    let a = overall_table(overall, format)?;
    let b = per_emotion_table(per_emotion, format)?;
    Ok(match format {
        Format::Md => format!(
            "# Results\n\n## Overall performance\n\n{a}\n## Per-emotion performance\n\n{b}\n---\n\n{FOOTER}\n"
        ),
        Format::Csv => format!("{CSV_HEADER}\n{a}{b}"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    FalsePositive,
    FalseNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub example_id: String,
    pub text: String,
    /// Empty when the run had no explanations.
    pub explanation: String,
    pub probabilities: [f64; NUM_LABELS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBucket {
    pub label: Emotion,
    pub kind: ErrorKind,
    pub entries: Vec<ErrorEntry>,
}

/// For every label, a false-positive and a false-negative bucket (in that
/// order), entries sorted by `|p - threshold|` descending, ties in dataset order.
pub fn error_analysis(
    dataset: &Dataset,
    predictions: &[PredictionRecord<f64>],
    explanations: Option<&HashMap<String, String>>,
    threshold: f64,
) -> Result<Vec<ErrorBucket>> {
    let by_id: HashMap<&str, &PredictionRecord<f64>> =
        predictions.iter().map(|p| (p.example_id.as_str(), p)).collect();
    if by_id.len() != predictions.len() {
        return Err(Error::Consistency("duplicate example ids among predictions".into()));
    }
    let dataset_ids: std::collections::HashSet<&str> =
        dataset.examples.iter().map(|e| e.id.as_str()).collect();
    let mut unmatched: Vec<&str> = predictions
        .iter()
        .map(|p| p.example_id.as_str())
        .filter(|id| !dataset_ids.contains(id))
        .collect();
    unmatched.extend(
        dataset
            .examples
            .iter()
            .map(|e| e.id.as_str())
            .filter(|id| !by_id.contains_key(id)),
    );
    if !unmatched.is_empty() {
        return Err(Error::Consistency(format!(
            "predictions and dataset ids do not match: {}",
            unmatched.join(", ")
        )));
    }

    let mut buckets = Vec::with_capacity(2 * NUM_LABELS);
    for label in Emotion::ALL {
        for kind in [ErrorKind::FalsePositive, ErrorKind::FalseNegative] {
            let mut entries: Vec<ErrorEntry> = dataset
                .examples
                .iter()
                .filter_map(|ex| {
                    let p = by_id[ex.id.as_str()];
                    let (pred, gold) = (p.decisions.get(label), ex.labels.get(label));
                    let hit = match kind {
                        ErrorKind::FalsePositive => pred && !gold,
                        ErrorKind::FalseNegative => !pred && gold,
                    };
                    hit.then(|| ErrorEntry {
                        example_id: ex.id.clone(),
                        text: ex.text.clone(),
                        explanation: explanations
                            .and_then(|m| m.get(&ex.id))
                            .cloned()
                            .unwrap_or_default(),
                        probabilities: p.probabilities,
                    })
                })
                .collect();
            let k = label.index();
            entries.sort_by(|a, b| {
                let da = (a.probabilities[k] - threshold).abs();
                let db = (b.probabilities[k] - threshold).abs();
                db.total_cmp(&da)
            });
            buckets.push(ErrorBucket { label, kind, entries });
        }
    }
    Ok(buckets)
}

/// Markdown for one label's two buckets (`errors_<label>.md`).
pub fn render_error_report(label: Emotion, buckets: &[ErrorBucket]) -> String {
    let mut out = format!("# Misclassification of {}\n", label.title());
    for kind in [ErrorKind::FalsePositive, ErrorKind::FalseNegative] {
        let (title, predicted, actual) = match kind {
            ErrorKind::FalsePositive => ("False positives", 1, 0),
            ErrorKind::FalseNegative => ("False negatives", 0, 1),
        };
        let entries: Vec<&ErrorEntry> = buckets
            .iter()
            .filter(|b| b.label == label && b.kind == kind)
            .flat_map(|b| &b.entries)
            .collect();
        let _ = write!(out, "\n## {title} ({})\n\n", entries.len());
        if entries.is_empty() {
            out.push_str("None.\n");
        }
        for e in entries {
            let _ = write!(out, "- **Text:** \"{}\"", e.text);
            if !e.explanation.is_empty() {
                let _ = write!(out, " **Explanation:** \"{}\"", e.explanation);
            }
            let _ = writeln!(
                out,
                " **Predicted:** {} = {predicted}, Actual = {actual} (p = {}, id `{}`)",
                label.title(),
                fixed4(e.probabilities[label.index()]),
                e.example_id
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::decide;
    use crate::corpus::{EmotionLabelSet, LabeledExample, PerLabel, Split};

    fn ms(mean: f64, std: f64) -> MeanStd<f64> {
        MeanStd { mean, std }
    }

    fn prf_ms(p: (f64, f64), r: (f64, f64), f: (f64, f64)) -> Prf<MeanStd<f64>> {
        Prf {
            precision: ms(p.0, p.1),
            recall: ms(r.0, r.1),
            f1: ms(f.0, f.1),
        }
    }

    fn agg(macro_avg: Prf<MeanStd<f64>>, micro_avg: Prf<MeanStd<f64>>) -> RunAggregate<f64> {
        RunAggregate {
            run_count: 4,
            seeds: vec![1, 2, 3, 4],
            std_kind: "sample".into(),
            macro_avg,
            micro_avg,
            per_label: PerLabel::default(),
        }
    }

    #[test]
    fn rounding_is_half_even_on_decimal_repr() {
        assert_eq!(fixed4(0.7396), "0.7396");
        assert_eq!(fixed4(0.00165), "0.0016");
        assert_eq!(fixed4(0.00175), "0.0018");
        assert_eq!(fixed4(0.12345), "0.1234");
        assert_eq!(fixed4(1.0), "1.0000");
        assert_eq!(fixed4(0.0), "0.0000");
        assert_eq!(fixed4(-0.00001), "0.0000");
        assert_eq!(fixed4(1e-30), "0.0000");
    }

    #[test]
    fn overall_marks_column_maxima() {
        let rows = vec![
            (
                "Text + Exp".to_string(),
                agg(
                    prf_ms((0.7421, 0.0047), (0.7433, 0.0011), (0.7396, 0.0016)),
                    prf_ms((0.7550, 0.0026), (0.7809, 0.0027), (0.7678, 0.0026)),
                ),
            ),
            (
                "Text Only".to_string(),
                agg(
                    prf_ms((0.7477, 0.0150), (0.6831, 0.0216), (0.7112, 0.0095)),
                    prf_ms((0.7650, 0.0201), (0.7372, 0.0195), (0.7412, 0.0209)),
                ),
            ),
        ];
        let md = overall_table(&rows, Format::Md).unwrap();
        let first = md.lines().nth(2).unwrap();
        assert!(first.contains("| **0.7396 ± 0.0016** |"), "{first}");
        assert!(first.contains("| 0.7421 ± 0.0047 |"));
        let second = md.lines().nth(3).unwrap();
        assert!(second.contains("**0.7477 ± 0.0150**"));
        assert_eq!(overall_table(&rows, Format::Md).unwrap(), md);

        let csv = overall_table(&rows, Format::Csv).unwrap();
        assert!(csv.contains("overall,Text + Exp,all,macro_f1,0.7396,0.0016,true"));
        assert!(csv.contains("overall,Text Only,all,macro_f1,0.7112,0.0095,false"));
    }

    #[test]
    fn ties_and_single_method_all_marked() {
        let a = agg(
            prf_ms((0.5, 0.0), (0.5, 0.0), (0.5, 0.0)),
            prf_ms((0.5, 0.0), (0.5, 0.0), (0.5, 0.0)),
        );
        let one = overall_table(&[("A".into(), a.clone())], Format::Md).unwrap();
        assert_eq!(one.lines().nth(2).unwrap().matches("**").count(), 12);
        let two = overall_table(&[("A".into(), a.clone()), ("B".into(), a)], Format::Md).unwrap();
        for line in two.lines().skip(2) {
            assert_eq!(line.matches("**").count(), 12);
        }
        assert!(overall_table(&[], Format::Md).is_err());
    }

    fn scores(f: [f64; 5]) -> PerEmotionScores {
        Emotion::ALL
            .iter()
            .map(|&e| (e, Prf { precision: f[e.index()], recall: f[e.index()], f1: f[e.index()] }))
            .collect()
    }

    #[test]
    fn per_emotion_rows_and_order() {
        let mut llama = scores([0.6479, 0.8343, 0.7581, 0.7423, 0.7132]);
        llama.insert(Emotion::Fear, Prf { precision: 0.7983, recall: 0.8739, f1: 0.8343 });
        let rows = vec![
            ("Text + Exp".to_string(), llama),
            ("Text Only".to_string(), scores([0.5871, 0.8149, 0.7232, 0.7268, 0.7039])),
        ];
        let md = per_emotion_table(&rows, Format::Md).unwrap();
        let header = md.lines().next().unwrap();
        assert!(header.find("Text + Exp F1").unwrap() < header.find("Text Only F1").unwrap());
        let fear = md.lines().find(|l| l.starts_with("| Fear")).unwrap();
        assert!(fear.contains("**0.8343**"), "{fear}");
        assert!(fear.contains("| 0.8149 |"));
        let order: Vec<&str> = md.lines().skip(2).map(|l| l.split('|').nth(1).unwrap().trim()).collect();
        assert_eq!(order, ["Anger", "Fear", "Joy", "Sadness", "Surprise"]);
    }

    #[test]
    fn per_emotion_missing_label_is_error() {
        let mut s = scores([0.1; 5]);
        s.remove(&Emotion::Joy);
        let err = per_emotion_table(&[("M".into(), s)], Format::Md).unwrap_err();
        assert!(matches!(err, Error::Consistency(ref m) if m.contains("joy")));
        let one = per_emotion_table(&[("M".into(), scores([0.1; 5]))], Format::Md).unwrap();
        assert_eq!(one.matches("**").count(), 5 * 3 * 2);
    }

    fn record(id: &str, p: [f64; 5]) -> PredictionRecord<f64> {
        PredictionRecord { example_id: id.into(), probabilities: p, decisions: decide(&p, 0.5) }
    }

    fn dataset(rows: &[(&str, &str, [u8; 5])]) -> Dataset {
        Dataset::new(
            Split::Test,
            rows.iter()
                .map(|(id, t, b)| LabeledExample::new(*id, *t, EmotionLabelSet::from_bits(*b).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn anger_false_negative_bucket() {
        let ds = dataset(&[("m1", "Man, I can't believe it.", [1, 0, 0, 0, 1])]);
        let preds = [record("m1", [0.3, 0.1, 0.1, 0.1, 0.8])];
        let mut ex = HashMap::new();
        ex.insert("m1".to_string(), "The speaker expresses surprise or frustration.".to_string());
        let buckets = error_analysis(&ds, &preds, Some(&ex), 0.5).unwrap();
        let fn_anger = buckets
            .iter()
            .find(|b| b.label == Emotion::Anger && b.kind == ErrorKind::FalseNegative)
            .unwrap();
        assert_eq!(fn_anger.entries.len(), 1);
        assert_eq!(fn_anger.entries[0].explanation, "The speaker expresses surprise or frustration.");
        let md = render_error_report(Emotion::Anger, &buckets);
        assert!(md.contains("**Predicted:** Anger = 0, Actual = 1"));
        assert_eq!(buckets.iter().map(|b| b.entries.len()).sum::<usize>(), 1);
    }

    #[test]
    fn most_confident_mistakes_first() {
        let ds = dataset(&[("a", "x", [1, 0, 0, 0, 0]), ("b", "y", [1, 0, 0, 0, 0])]);
        let preds = [record("a", [0.4, 0.0, 0.0, 0.0, 0.0]), record("b", [0.1, 0.0, 0.0, 0.0, 0.0])];
        let buckets = error_analysis(&ds, &preds, None, 0.5).unwrap();
        let ids: Vec<&str> = buckets[1].entries.iter().map(|e| e.example_id.as_str()).collect();
        assert_eq!(ids, ["b", "a"]);
        assert!(buckets[1].entries.iter().all(|e| e.explanation.is_empty()));
    }

    #[test]
    fn perfect_predictions_empty_buckets_and_id_mismatch() {
        let ds = dataset(&[("a", "x", [1, 0, 0, 0, 0])]);
        let good = [record("a", [0.9, 0.1, 0.1, 0.1, 0.1])];
        assert!(error_analysis(&ds, &good, None, 0.5).unwrap().iter().all(|b| b.entries.is_empty()));
        let bad = [record("z", [0.9, 0.1, 0.1, 0.1, 0.1])];
        assert!(matches!(error_analysis(&ds, &bad, None, 0.5), Err(Error::Consistency(_))));
    }
}
