//! Multi-label evaluation.
//!
//! Zero-division rule: any precision, recall or F1 whose denominator is zero
//! is defined as 0. This lowers macro scores when a label is never predicted
//! or never present.

use serde::{Deserialize, Serialize};

use crate::corpus::{Emotion, EmotionLabelSet, PerLabel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl LabelCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub type ConfusionCounts = PerLabel<LabelCounts>;

pub fn confusion(gold: &[EmotionLabelSet], pred: &[EmotionLabelSet]) -> Result<ConfusionCounts> {
    if gold.len() != pred.len() {
        return Err(Error::Argument(format!(
            "gold has {} rows but predictions have {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut counts = ConfusionCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        for e in Emotion::ALL {
            let c = &mut counts[e];
            match (g.get(e), p.get(e)) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

fn ratio<T: Scalar>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

pub fn prf<T: Scalar>(tp: u64, fp: u64, fn_: u64) -> Prf<T> {
    let precision = ratio::<T>(tp, tp + fp);
    let recall = ratio::<T>(tp, tp + fn_);
    let sum = precision + recall;
    let f1 = if sum.is_zero() {
        T::zero()
    } else {
        T::from_count(2) * precision * recall / sum
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct MetricsReport<T> {
    pub per_label: PerLabel<Prf<T>>,
    #[serde(rename = "macro")]
    pub macro_avg: Prf<T>,
    #[serde(rename = "micro")]
    pub micro_avg: Prf<T>,
    pub counts: ConfusionCounts,
}

impl<T: Scalar> MetricsReport<T> {
    pub fn to_json_pretty(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("metrics", e))
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| Error::json("metrics", e))
    }
}

/// Macro: unweighted mean of per-label values. Micro: [`prf`] on pooled counts.
pub fn macro_micro<T: Scalar>(counts: &ConfusionCounts) -> (Prf<T>, Prf<T>) {
    let per: Vec<Prf<T>> = Emotion::ALL
        .iter()
        .map(|&e| prf(counts[e].tp, counts[e].fp, counts[e].fn_))
        .collect();
    let n = T::from_count(per.len() as u64);
    let mean = |f: fn(&Prf<T>) -> T| per.iter().map(f).fold(T::zero(), |a, b| a + b) / n;
    let macro_avg = Prf {
        precision: mean(|p| p.precision),
        recall: mean(|p| p.recall),
        f1: mean(|p| p.f1),
    };
    let (tp, fp, fn_) = counts
        .iter()
        .fold((0, 0, 0), |(a, b, c), (_, k)| (a + k.tp, b + k.fp, c + k.fn_));
    (macro_avg, prf(tp, fp, fn_))
}

pub fn evaluate<T: Scalar>(gold: &[EmotionLabelSet], pred: &[EmotionLabelSet]) -> Result<MetricsReport<T>> {
    let counts = confusion(gold, pred)?;
    let (macro_avg, micro_avg) = macro_micro(&counts);
    Ok(MetricsReport {
        per_label: counts.map(|c| prf(c.tp, c.fp, c.fn_)),
        macro_avg,
        micro_avg,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd<T> {
    pub mean: T,
    pub std: T,
}

/// Mean and sample standard deviation (divisor `n - 1`; 0 when `n == 1`).
pub fn aggregate<T: Scalar>(values: &[T]) -> Result<MeanStd<T>> {
    if values.is_empty() {
        return Err(Error::Argument("cannot aggregate an empty list".into()));
    }
    let n = T::from_count(values.len() as u64);
    let mean = values.iter().copied().sum::<T>() / n;
    let std = if values.len() < 2 {
        T::zero()
    } else {
        let ss: T = values.iter().map(|&x| (x - mean) * (x - mean)).sum();
        (ss / (n - T::one())).sqrt()
    };
    Ok(MeanStd { mean, std })
}

/// Every scalar metric of a set of runs, as mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct RunAggregate<T> {
    pub run_count: usize,
    pub seeds: Vec<u64>,
    /// Always `"sample"`: the divisor is `n - 1`.
    pub std_kind: String,
    #[serde(rename = "macro")]
    pub macro_avg: Prf<MeanStd<T>>,
    #[serde(rename = "micro")]
    pub micro_avg: Prf<MeanStd<T>>,
    pub per_label: PerLabel<Prf<MeanStd<T>>>,
}

impl<T: Scalar> RunAggregate<T> {
    pub fn from_reports(seeds: &[u64], reports: &[&MetricsReport<T>]) -> Result<Self> {
        if reports.is_empty() || seeds.len() != reports.len() {
            return Err(Error::Argument(format!(
                "need one report per seed ({} seeds, {} reports)",
                seeds.len(),
                reports.len()
            )));
        }
        let over = |get: &dyn Fn(&MetricsReport<T>) -> Prf<T>| -> Result<Prf<MeanStd<T>>> {
            let col = |f: fn(&Prf<T>) -> T| -> Result<MeanStd<T>> {
                aggregate(&reports.iter().map(|r| f(&get(r))).collect::<Vec<_>>())
            };
            Ok(Prf {
                precision: col(|p| p.precision)?,
                recall: col(|p| p.recall)?,
                f1: col(|p| p.f1)?,
            })
        };
        let mut per_label = PerLabel::<Prf<MeanStd<T>>>::default();
        for e in Emotion::ALL {
            per_label[e] = over(&|r| r.per_label[e])?;
        }
        Ok(RunAggregate {
            run_count: reports.len(),
            seeds: seeds.to_vec(),
            std_kind: "sample".into(),
            macro_avg: over(&|r| r.macro_avg)?,
            micro_avg: over(&|r| r.micro_avg)?,
            per_label,
        })
    }

    /// Per-label means, the shape used by per-emotion tables.
    pub fn per_label_means(&self) -> PerLabel<Prf<T>> {
        self.per_label.map(|p| Prf {
            precision: p.precision.mean,
            recall: p.recall.mean,
            f1: p.f1.mean,
        })
    }
}
