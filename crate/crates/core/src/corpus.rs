//! SemEval-style multi-label dataset ingestion.
//!
//! Input files are RFC-4180 CSV with the exact header
//! `id,text,anger,fear,joy,sadness,surprise`; label cells must be `0` or `1`.

use std::collections::HashSet;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const NUM_LABELS: usize = 5;

pub const CSV_HEADER: [&str; 2 + NUM_LABELS] =
    ["id", "text", "anger", "fear", "joy", "sadness", "surprise"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Fear,
    Joy,
    Sadness,
    Surprise,
}

impl Emotion {
    /// Canonical label order, used for every 5-vector in the crate.
    pub const ALL: [Emotion; NUM_LABELS] = [
        Emotion::Anger,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Emotion::Anger => "Anger",
            Emotion::Fear => "Fear",
            Emotion::Joy => "Joy",
            Emotion::Sadness => "Sadness",
            Emotion::Surprise => "Surprise",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Argument(format!("unknown emotion `{s}`")))
    }
}

/// One value per emotion, serialized as an object keyed by emotion name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerLabel<T> {
    pub anger: T,
    pub fear: T,
    pub joy: T,
    pub sadness: T,
    pub surprise: T,
}

impl<T> PerLabel<T> {
    pub fn from_fn(mut f: impl FnMut(Emotion) -> T) -> Self {
        PerLabel {
            anger: f(Emotion::Anger),
            fear: f(Emotion::Fear),
            joy: f(Emotion::Joy),
            sadness: f(Emotion::Sadness),
            surprise: f(Emotion::Surprise),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Emotion, &T)> {
        Emotion::ALL.into_iter().map(move |e| (e, &self[e]))
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerLabel<U> {
        PerLabel::from_fn(|e| f(&self[e]))
    }
}

impl<T: Copy> PerLabel<T> {
    pub fn to_array(&self) -> [T; NUM_LABELS] {
        Emotion::ALL.map(|e| self[e])
    }
}

impl<T> Index<Emotion> for PerLabel<T> {
    type Output = T;

    fn index(&self, e: Emotion) -> &T {
        match e {
            Emotion::Anger => &self.anger,
            Emotion::Fear => &self.fear,
            Emotion::Joy => &self.joy,
            Emotion::Sadness => &self.sadness,
            Emotion::Surprise => &self.surprise,
        }
    }
}

impl<T> IndexMut<Emotion> for PerLabel<T> {
    fn index_mut(&mut self, e: Emotion) -> &mut T {
        match e {
            Emotion::Anger => &mut self.anger,
            Emotion::Fear => &mut self.fear,
            Emotion::Joy => &mut self.joy,
            Emotion::Sadness => &mut self.sadness,
            Emotion::Surprise => &mut self.surprise,
        }
    }
}

/// Five binary emotion flags in canonical order. Serialized as `[0|1; 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct EmotionLabelSet([bool; NUM_LABELS]);

impl EmotionLabelSet {
    pub const EMPTY: EmotionLabelSet = EmotionLabelSet([false; NUM_LABELS]);

    pub fn new(flags: [bool; NUM_LABELS]) -> Self {
        EmotionLabelSet(flags)
    }

    /// Build from 0/1 integers; anything else is rejected.
    pub fn from_bits(bits: [u8; NUM_LABELS]) -> Result<Self> {
        let mut flags = [false; NUM_LABELS];
        for (flag, bit) in flags.iter_mut().zip(bits) {
            *flag = match bit {
                0 => false,
                1 => true,
                other => return Err(Error::Argument(format!("label value {other} is not 0 or 1"))),
            };
        }
        Ok(EmotionLabelSet(flags))
    }

    pub fn from_emotions(emotions: &[Emotion]) -> Self {
        let mut flags = [false; NUM_LABELS];
        for e in emotions {
            flags[e.index()] = true;
        }
        EmotionLabelSet(flags)
    }

    pub fn get(&self, e: Emotion) -> bool {
        self.0[e.index()]
    }

    pub fn set(&mut self, e: Emotion, value: bool) {
        self.0[e.index()] = value;
    }

    pub fn flags(&self) -> [bool; NUM_LABELS] {
        self.0
    }

    pub fn bits(&self) -> [u8; NUM_LABELS] {
        self.0.map(u8::from)
    }

    pub fn as_f64(&self) -> [f64; NUM_LABELS] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }

    pub fn positives(&self) -> impl Iterator<Item = Emotion> + '_ {
        Emotion::ALL.into_iter().filter(|e| self.get(*e))
    }
}

impl Serialize for EmotionLabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.bits().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EmotionLabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let bits = <[u8; NUM_LABELS]>::deserialize(deserializer)?;
        EmotionLabelSet::from_bits(bits).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub labels: EmotionLabelSet,
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, labels: EmotionLabelSet) -> Self {
        LabeledExample {
            id: id.into(),
            text: text.into(),
            labels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!(
                "unknown split `{other}` (expected train, dev or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub split: Split,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    /// Build a dataset in memory, enforcing the same invariants as [`parse_dataset`].
    pub fn new(split: Split, examples: Vec<LabeledExample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for (i, ex) in examples.iter().enumerate() {
            if ex.id.is_empty() {
                return Err(Error::Argument(format!("example {i} has an empty id")));
            }
            if ex.text.trim().is_empty() {
                return Err(Error::Argument(format!("example `{}` has empty text", ex.id)));
            }
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::Argument(format!("duplicate id `{}`", ex.id)));
            }
        }
        Ok(Dataset { split, examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Read and validate a dataset CSV.
pub fn parse_dataset(path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset_from_reader(file, path, split)
}

pub fn parse_dataset_from_reader(
    reader: impl std::io::Read,
    path: &Path,
    split: Split,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    check_header(path, &header)?;

    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            csv_error(path, row, e)
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let invalid = |message: String| Error::Validation {
            path: path.to_path_buf(),
            row,
            message,
        };
        if record.len() != CSV_HEADER.len() {
            return Err(invalid(format!(
                "expected {} fields, found {}",
                CSV_HEADER.len(),
                record.len()
            )));
        }
        let id = &record[0];
        let text = &record[1];
        if id.is_empty() {
            return Err(invalid("empty id".into()));
        }
        if text.trim().is_empty() {
            return Err(invalid(format!("example `{id}` has empty text")));
        }
        let mut labels = EmotionLabelSet::EMPTY;
        for e in Emotion::ALL {
            let cell = &record[2 + e.index()];
            let value = match cell {
                "0" => false,
                "1" => true,
                other => {
                    return Err(invalid(format!(
                        "label `{}` has value `{other}`, expected 0 or 1",
                        e.name()
                    )))
                }
            };
            labels.set(e, value);
        }
        if !seen.insert(id.to_string()) {
            return Err(invalid(format!("duplicate id `{id}`")));
        }
        examples.push(LabeledExample::new(id, text, labels));
    }

    Ok(Dataset { split, examples })
}

fn check_header(path: &Path, header: &csv::StringRecord) -> Result<()> {
    let schema = |column: &str, message: String| Error::Schema {
        path: path.to_path_buf(),
        column: column.to_string(),
        message,
    };
    for (pos, expected) in CSV_HEADER.iter().enumerate() {
        match header.get(pos) {
            Some(found) if found == *expected => {}
            Some(found) => {
                return Err(schema(
                    expected,
                    format!("header position {} is `{found}`", pos + 1),
                ))
            }
            None => return Err(schema(expected, "missing header column".into())),
        }
    }
    if let Some(extra) = header.get(CSV_HEADER.len()) {
        return Err(schema(extra, "unexpected extra header column".into()));
    }
    Ok(())
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    Error::Validation {
        path: path.to_path_buf(),
        row,
        message: e.to_string(),
    }
}

/// Write a dataset in the same CSV dialect [`parse_dataset`] reads.
pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(dataset, file).map_err(|e| Error::io(path, e))
}

pub fn write_dataset_to(dataset: &Dataset, writer: impl std::io::Write) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER)?;
    for ex in &dataset.examples {
        let bits = ex.labels.bits().map(|b| if b == 1 { "1" } else { "0" });
        let mut row = vec![ex.id.as_str(), ex.text.as_str()];
        row.extend(bits);
        wtr.write_record(&row)?;
    }
    wtr.flush()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub split: Split,
    pub total: usize,
    pub counts: PerLabel<usize>,
}

pub fn label_distribution(dataset: &Dataset) -> DistributionStats {
    let mut counts = PerLabel::<usize>::default();
    for ex in &dataset.examples {
        for e in ex.labels.positives() {
            counts[e] += 1;
        }
    }
    DistributionStats {
        split: dataset.split,
        total: dataset.len(),
        counts,
    }
}

/// Draw `n` distinct examples: shuffle the index list with [`SplitMix64`]
/// seeded by `seed`, keep the first `n`.
pub fn sample_seed_corpus(dataset: &Dataset, n: usize, seed: u64) -> Result<Vec<LabeledExample>> {
    if n > dataset.len() {
        return Err(Error::Argument(format!(
            "cannot sample {n} examples from a dataset of {}",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    Ok(order[..n]
        .iter()
        .map(|&i| dataset.examples[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse_str(s: &str) -> Result<Dataset> {
        parse_dataset_from_reader(s.as_bytes(), Path::new("mem.csv"), Split::Train)
    }

    const HEADER: &str = "id,text,anger,fear,joy,sadness,surprise\n";

    #[test]
    fn header_only_is_empty() {
        let ds = parse_str(HEADER).unwrap();
        assert!(ds.is_empty());
        assert_eq!(label_distribution(&ds).counts.to_array(), [0; 5]);
    }

    #[test]
    fn parses_quoted_text_and_crlf() {
        let src = "id,text,anger,fear,joy,sadness,surprise\r\n\
                   a1,\"Well, \"\"fine\"\".\",1,0,0,0,1\r\n\
                   a2,Dad on the warpath.,1,1,0,0,0\r\n";
        let ds = parse_str(src).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.examples[0].text, "Well, \"fine\".");
        assert_eq!(
            ds.examples[0].labels,
            EmotionLabelSet::from_emotions(&[Emotion::Anger, Emotion::Surprise])
        );
    }

    #[test]
    fn label_outside_domain_reports_row() {
        let src = format!("{HEADER}x0,fine,0,0,0,0,0\nx1,\"hello\",0,1,0,0,2\n");
        match parse_str(&src) {
            Err(Error::Validation { row, message, .. }) => {
                assert_eq!(row, 3);
                assert!(message.contains("surprise"), "{message}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn reordered_header_names_column() {
        let src = "id,text,fear,anger,joy,sadness,surprise\n";
        match parse_str(src) {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "anger"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_header_column_named() {
        match parse_str("id,text,anger,fear,joy,sadness\n") {
            Err(Error::Schema { column, .. }) => assert_eq!(column, "surprise"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let src = format!("{HEADER}a,x,0,0,0,0,0\na,y,0,0,0,0,0\n");
        assert!(matches!(parse_str(&src), Err(Error::Validation { row: 3, .. })));
    }

    #[test]
    fn blank_text_rejected() {
        let src = format!("{HEADER}a,\"   \",0,0,0,0,0\n");
        assert!(matches!(parse_str(&src), Err(Error::Validation { .. })));
    }

    #[test]
    fn hand_counted_distribution() {
        let ds = Dataset::new(
            Split::Train,
            vec![
                LabeledExample::new("a", "x", EmotionLabelSet::from_bits([1, 0, 0, 0, 0]).unwrap()),
                LabeledExample::new("b", "y", EmotionLabelSet::from_bits([1, 1, 0, 0, 0]).unwrap()),
            ],
        )
        .unwrap();
        let stats = label_distribution(&ds);
        assert_eq!(stats.counts.to_array(), [2, 1, 0, 0, 0]);
        assert_eq!(stats.total, 2);
        let json = serde_json::to_string(&stats).unwrap();
        assert_eq!(
            json,
            r#"{"split":"train","total":2,"counts":{"anger":2,"fear":1,"joy":0,"sadness":0,"surprise":0}}"#
        );
    }

    #[test]
    fn sampler_edge_cases() {
        let ds = Dataset::new(
            Split::Train,
            (0..10)
                .map(|i| LabeledExample::new(format!("id{i}"), "t", EmotionLabelSet::EMPTY))
                .collect(),
        )
        .unwrap();
        assert!(sample_seed_corpus(&ds, 0, 1).unwrap().is_empty());
        assert_eq!(sample_seed_corpus(&ds, 10, 1).unwrap().len(), 10);
        assert!(matches!(sample_seed_corpus(&ds, 11, 1), Err(Error::Argument(_))));
    }

    fn arb_dataset(max: usize) -> impl Strategy<Value = Dataset> {
        prop::collection::vec(("[a-zA-Z ,\"\n\u{e9}]{0,20}", prop::array::uniform5(any::<bool>())), 0..max)
            .prop_map(|rows| {
                let examples = rows
                    .into_iter()
                    .enumerate()
                    .map(|(i, (text, flags))| {
                        LabeledExample::new(format!("r{i}"), format!("t{text}"), EmotionLabelSet::new(flags))
                    })
                    .collect();
                Dataset::new(Split::Dev, examples).unwrap()
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip(ds in arb_dataset(30)) {
            let mut buf = Vec::new();
            write_dataset_to(&ds, &mut buf).unwrap();
            let back = parse_dataset_from_reader(buf.as_slice(), Path::new("rt.csv"), Split::Dev).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn distribution_matches_column_sums(ds in arb_dataset(100)) {
            let stats = label_distribution(&ds);
            for (col, e) in Emotion::ALL.iter().enumerate() {
                let brute = ds.examples.iter().filter(|x| x.labels.flags()[col]).count();
                prop_assert_eq!(stats.counts[*e], brute);
                prop_assert!(stats.counts[*e] <= stats.total);
            }
        }

        #[test]
        fn sample_is_distinct_subset(ds in arb_dataset(60), frac in 0.0f64..=1.0, seed: u64) {
            let n = (ds.len() as f64 * frac) as usize;
            let a = sample_seed_corpus(&ds, n, seed).unwrap();
            let b = sample_seed_corpus(&ds, n, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), n);
            let ids: HashSet<_> = a.iter().map(|x| x.id.clone()).collect();
            prop_assert_eq!(ids.len(), n);
            for x in &a {
                prop_assert!(ds.examples.contains(x));
            }
        }
    }
}
