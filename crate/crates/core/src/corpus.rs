//! Labelled chat corpora: the six-class taxonomy, parsing, stratified
//! splitting, class histograms, duplicate analysis and prediction files.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::normalize_text;

pub const NUM_CLASSES: usize = 6;

const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "Non-toxic",
    "Insults/Flaming",
    "Other Offensive",
    "Hate/Harassment",
    "Threats",
    "Extremism",
];

/// A toxicity class in `0..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct ClassId(u8);

impl ClassId {
    pub const NON_TOXIC: ClassId = ClassId(0);
    pub const INSULTS: ClassId = ClassId(1);
    pub const OTHER_OFFENSIVE: ClassId = ClassId(2);
    pub const HATE: ClassId = ClassId(3);
    pub const THREATS: ClassId = ClassId(4);
    pub const EXTREMISM: ClassId = ClassId(5);

    pub fn new(value: u8) -> Result<Self> {
        if (value as usize) < NUM_CLASSES {
            Ok(ClassId(value))
        } else {
            Err(Error::InvalidArgument(format!("class id {value} outside 0..=5")))
        }
    }

    /// Panics when `index >= 6`; meant for loop indices.
    pub fn from_index(index: usize) -> Self {
        assert!(index < NUM_CLASSES, "class index {index} out of range");
        ClassId(index as u8)
    }

    pub fn all() -> impl Iterator<Item = ClassId> {
        (0..NUM_CLASSES as u8).map(ClassId)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.index()]
    }

    /// Minority classes eligible for paraphrase augmentation.
    pub fn is_minority(self) -> bool {
        self.0 >= 2
    }

    pub fn is_toxic(self) -> bool {
        self.0 != 0
    }

    /// Row label used in report tables, e.g. `"2: Other Offensive"`.
    pub fn display_label(self) -> String {
        format!("{}: {}", self.0, self.name())
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<i64> for ClassId {
    type Error = Error;

    fn try_from(value: i64) -> Result<Self> {
        u8::try_from(value)
            .map_err(|_| Error::InvalidArgument(format!("class id {value} outside 0..=5")))
            .and_then(ClassId::new)
    }
}

impl From<ClassId> for i64 {
    fn from(c: ClassId) -> i64 {
        c.0 as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    #[default]
    Real,
    Synthetic,
}

/// One chat message. `label` is `None` for unlabelled (test) records, which
/// are written as `-1` or omitted on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub label: Option<ClassId>,
    pub origin: Origin,
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: ClassId) -> Self {
        LabeledExample {
            id: id.into(),
            text: text.into(),
            label: Some(label),
            origin: Origin::Real,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, examples: Vec<LabeledExample>) -> Self {
        Dataset {
            name: name.into(),
            examples,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LabeledExample> {
        self.examples.iter()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples.iter().map(|e| e.text.as_str()).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.examples.iter().map(|e| e.id.clone()).collect()
    }

    /// Labels of all examples; errors if any example is unlabelled.
    pub fn labels(&self) -> Result<Vec<ClassId>> {
        self.examples
            .iter()
            .map(|e| {
                e.label.ok_or_else(|| {
                    Error::InvalidArgument(format!("example {} has no label", e.id))
                })
            })
            .collect()
    }

    pub fn synthetic_count(&self) -> usize {
        self.examples
            .iter()
            .filter(|e| e.origin == Origin::Synthetic)
            .count()
    }

    /// Fraction of examples whose origin is synthetic.
    pub fn synthetic_share(&self) -> f64 {
        if self.examples.is_empty() {
            0.0
        } else {
            self.synthetic_count() as f64 / self.examples.len() as f64
        }
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a LabeledExample;
    type IntoIter = std::slice::Iter<'a, LabeledExample>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    JsonLines,
    Delimited,
}

impl DataFormat {
    /// Guess from a file extension; anything but `.csv` is JSON-Lines.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Delimited,
            _ => DataFormat::JsonLines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ParseOutcome {
    #[serde(skip)]
    pub dataset: Dataset,
    /// Records whose label was outside `0..=5` (and not the `-1` sentinel).
    pub skipped_label: usize,
    /// Records whose text was empty after trimming.
    pub skipped_empty: usize,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    text: Option<String>,
    label: Option<serde_json::Value>,
    #[serde(default)]
    origin: Origin,
}

enum LabelField {
    Missing,
    Valid(ClassId),
    OutOfRange,
}

fn interpret_label(raw: Option<i64>) -> LabelField {
    match raw {
        None | Some(-1) => LabelField::Missing,
        Some(v) => match ClassId::try_from(v) {
            Ok(c) => LabelField::Valid(c),
            Err(_) => LabelField::OutOfRange,
        },
    }
}

struct Accumulator {
    outcome: ParseOutcome,
    seen_ids: HashSet<String>,
}

impl Accumulator {
    fn new(name: &str) -> Self {
        Accumulator {
            outcome: ParseOutcome {
                dataset: Dataset::new(name, Vec::new()),
                ..Default::default()
            },
            seen_ids: HashSet::new(),
        }
    }

    fn push(
        &mut self,
        line: usize,
        id: Option<String>,
        text: String,
        label: LabelField,
        origin: Origin,
    ) -> Result<()> {
        let label = match label {
            LabelField::OutOfRange => {
                self.outcome.skipped_label += 1;
                return Ok(());
            }
            LabelField::Missing => None,
            LabelField::Valid(c) => Some(c),
        };
        if text.trim().is_empty() {
            self.outcome.skipped_empty += 1;
            return Ok(());
        }
        let id = id.unwrap_or_else(|| format!("line-{line}"));
        if !self.seen_ids.insert(id.clone()) {
            return Err(Error::Malformed {
                line,
                message: format!("duplicate id {id:?}"),
            });
        }
        self.outcome.dataset.examples.push(LabeledExample {
            id,
            text,
            label,
            origin,
        });
        Ok(())
    }
}

/// Parse a dataset from JSON-Lines (`{"id","text","label"}` per line) or a
/// delimited file with header `id,text,label`. Input order is preserved.
pub fn parse_dataset<R: BufRead>(source: R, format: DataFormat, name: &str) -> Result<ParseOutcome> {
    match format {
        DataFormat::JsonLines => parse_jsonl(source, name),
        DataFormat::Delimited => parse_delimited(source, name),
    }
}

fn parse_jsonl<R: BufRead>(source: R, name: &str) -> Result<ParseOutcome> {
    let mut acc = Accumulator::new(name);
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let text = raw.text.ok_or_else(|| Error::Malformed {
            line: line_no,
            message: "missing field `text`".into(),
        })?;
        let label = match raw.label {
            None | Some(serde_json::Value::Null) => None,
            Some(v) => Some(v.as_i64().ok_or_else(|| Error::Malformed {
                line: line_no,
                message: format!("label {v} is not an integer"),
            })?),
        };
        acc.push(line_no, raw.id, text, interpret_label(label), raw.origin)?;
    }
    Ok(acc.outcome)
}

fn parse_delimited<R: BufRead>(source: R, name: &str) -> Result<ParseOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if is_eof(&e) => return Ok(Accumulator::new(name).outcome),
        Err(e) => return Err(e.into()),
    };
    if headers.is_empty() {
        return Ok(Accumulator::new(name).outcome);
    }
    let col = |field: &str| headers.iter().position(|h| h.trim() == field);
    let text_col = col("text").ok_or_else(|| Error::Malformed {
        line: 1,
        message: "header lacks a `text` column".into(),
    })?;
    let id_col = col("id");
    let label_col = col("label");

    let mut acc = Accumulator::new(name);
    for record in reader.records() {
        let record = record.map_err(|e| Error::Malformed {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line_no = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let id = id_col.and_then(|c| record.get(c)).map(str::to_owned);
        let text = record.get(text_col).unwrap_or_default().to_owned();
        let label = match label_col.and_then(|c| record.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(raw) => Some(raw.parse::<i64>().map_err(|_| Error::Malformed {
                line: line_no,
                message: format!("label {raw:?} is not an integer"),
            })?),
        };
        acc.push(line_no, id, text, interpret_label(label), Origin::Real)?;
    }
    Ok(acc.outcome)
}

fn is_eof(e: &csv::Error) -> bool {
    matches!(e.kind(), csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof)
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<i64>,
    #[serde(skip_serializing_if = "is_real")]
    origin: Origin,
}

fn is_real(o: &Origin) -> bool {
    *o == Origin::Real
}

/// Write a dataset as JSON-Lines. Synthetic examples carry an extra
/// `"origin": "synthetic"` field; unlabelled examples omit `label`.
pub fn write_dataset_jsonl<W: Write>(dataset: &Dataset, mut sink: W) -> Result<()> {
    for e in dataset {
        let rec = OutRecord {
            id: &e.id,
            text: &e.text,
            label: e.label.map(i64::from),
            origin: e.origin,
        };
        serde_json::to_writer(&mut sink, &rec)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// Train share of a labelled pool. 0.85 of 42,959 messages leaves about
/// 36,514 for training, where 1,921 synthetic examples make up 4.998%.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.85;

/// Stratified, seeded train/validation split.
///
/// Each class with at least two real examples contributes
/// `round(train_fraction * n)` examples to train, clamped so both sides get
/// at least one. Singleton classes go to train. Synthetic examples always go
/// to train. Both outputs keep the input order.
pub fn split_dataset(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES + 1];
    let mut in_train = vec![false; d.len()];
    for (i, e) in d.examples.iter().enumerate() {
        if e.origin == Origin::Synthetic {
            in_train[i] = true;
            continue;
        }
        let slot = e.label.map_or(NUM_CLASSES, ClassId::index);
        strata[slot].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in strata.iter_mut() {
        let n = members.len();
        if n == 0 {
            continue;
        }
        members.shuffle(&mut rng);
        let take = if n == 1 {
            1
        } else {
            ((train_fraction * n as f64).round() as usize).clamp(1, n - 1)
        };
        for &i in &members[..take] {
            in_train[i] = true;
        }
    }

    let mut train = Vec::new();
    let mut val = Vec::new();
    for (e, keep) in d.examples.iter().zip(in_train) {
        if keep {
            train.push(e.clone());
        } else {
            val.push(e.clone());
        }
    }
    Ok((
        Dataset::new(format!("{}-train", d.name), train),
        Dataset::new(format!("{}-val", d.name), val),
    ))
}

/// Per-class counts of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: [usize; NUM_CLASSES],
    /// Examples without a label; not part of `total()`.
    #[serde(default)]
    pub unlabeled: usize,
}

impl ClassHistogram {
    pub fn from_counts(counts: [usize; NUM_CLASSES]) -> Self {
        ClassHistogram {
            counts,
            unlabeled: 0,
        }
    }

    pub fn from_labels<'a, I: IntoIterator<Item = &'a ClassId>>(labels: I) -> Self {
        let mut h = ClassHistogram::default();
        for c in labels {
            h.counts[c.index()] += 1;
        }
        h
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn count(&self, c: ClassId) -> usize {
        self.counts[c.index()]
    }

    /// Percentages at full precision; all zero for an empty histogram.
    pub fn percentages(&self) -> [f64; NUM_CLASSES] {
        let total = self.total();
        let mut out = [0.0; NUM_CLASSES];
        if total > 0 {
            for (o, &c) in out.iter_mut().zip(&self.counts) {
                *o = 100.0 * c as f64 / total as f64;
            }
        }
        out
    }

    /// Percentages rounded to one decimal, as displayed in reports.
    pub fn display_percentages(&self) -> [String; NUM_CLASSES] {
        self.percentages().map(|p| format!("{p:.1}"))
    }

    /// Markdown table with `Class | Count | %` columns and a total row.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Class | Count | % |\n|---|---:|---:|\n");
        let pct = self.display_percentages();
        for c in ClassId::all() {
            out.push_str(&format!(
                "| {} | {} | {}% |\n",
                c.display_label(),
                thousands(self.count(c)),
                pct[c.index()]
            ));
        }
        let total_pct = if self.total() > 0 { "100%" } else { "0%" };
        out.push_str(&format!(
            "| **Total** | {} | {} |\n",
            thousands(self.total()),
            total_pct
        ));
        out
    }
}

/// Format an integer with comma thousands separators.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn class_distribution(d: &Dataset) -> ClassHistogram {
    let mut h = ClassHistogram::default();
    for e in d {
        match e.label {
            Some(c) => h.counts[c.index()] += 1,
            None => h.unlabeled += 1,
        }
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DuplicateReport {
    /// Share of examples whose normalized text occurs at least twice.
    pub exact_duplicate_fraction: f64,
    /// Share of examples whose normalized text carries two or more labels.
    pub conflicting_label_fraction: f64,
    /// Number of distinct normalized texts that occur at least twice.
    pub group_count: usize,
}

pub fn duplicate_report(d: &Dataset) -> DuplicateReport {
    if d.is_empty() {
        return DuplicateReport::default();
    }
    let mut groups: HashMap<String, (usize, BTreeSet<Option<ClassId>>)> = HashMap::new();
    for e in d {
        let entry = groups.entry(normalize_text(&e.text)).or_default();
        entry.0 += 1;
        entry.1.insert(e.label);
    }
    let mut duplicated = 0;
    let mut conflicting = 0;
    let mut group_count = 0;
    for (count, labels) in groups.values() {
        if *count >= 2 {
            duplicated += count;
            group_count += 1;
        }
        if labels.iter().flatten().count() >= 2 {
            conflicting += count;
        }
    }
    let n = d.len() as f64;
    DuplicateReport {
        exact_duplicate_fraction: duplicated as f64 / n,
        conflicting_label_fraction: conflicting as f64 / n,
        group_count,
    }
}

/// Write `<id>\t<label>\n` per prediction.
pub fn write_predictions<W: Write, S: AsRef<str>>(
    ids: &[S],
    labels: &[ClassId],
    mut sink: W,
) -> Result<()> {
    if ids.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: ids.len(),
            right: labels.len(),
        });
    }
    for (id, label) in ids.iter().zip(labels) {
        writeln!(sink, "{}\t{}", id.as_ref(), label)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_predictions<R: BufRead>(source: R) -> Result<Vec<(String, ClassId)>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            line: i + 1,
            message,
        };
        let (id, label) = line
            .rsplit_once('\t')
            .ok_or_else(|| malformed("expected `<id>\\t<label>`".into()))?;
        let label: i64 = label
            .trim()
            .parse()
            .map_err(|_| malformed(format!("label {label:?} is not an integer")))?;
        let label = ClassId::try_from(label).map_err(|e| malformed(e.to_string()))?;
        out.push((id.to_owned(), label));
    }
    Ok(out)
}
