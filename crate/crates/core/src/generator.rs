//! Deterministic desk-scale corpus resembling gaming chat.
//!
//! Each class has its own cue phrases; every message wraps one cue phrase
//! (none for class 0) in neutral in-game filler. The training split gets
//! planted exact duplicates, some of which carry conflicting labels. The
//! test split can have its label priors shifted: a share of class-0 slots is
//! relabelled as classes 2 and 3 while keeping class-0-like wording with a
//! mild borderline token, so a model fitted to training priors over-predicts
//! class 0 there.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::apportion;
use crate::corpus::{ClassId, Dataset, LabeledExample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::normalize_text;

const MAX_WORDS: usize = 8;

const FILLER: &[&str] = &[
    "push", "left", "right", "mid", "flank", "arty", "base", "cap", "tank", "shot", "map", "hill", "town", "reload",
    "spot", "heavy", "light", "med", "td", "camp", "defend", "go", "now", "pls", "lol", "team", "guys", "why",
    "again", "this", "that", "game", "round", "one", "two", "hp", "ammo", "gold", "track", "tier", "top", "bottom",
    "river", "bridge", "corner", "behind", "rock", "bush", "wait", "there", "here", "come", "back", "help", "need",
    "enemy", "fast", "slow", "ok", "yes", "no", "who", "where", "what", "last", "first", "mins", "alive", "dead",
];

const POSITIVE: &[&str] = &[
    "gg", "wp", "nice", "thanks", "good", "glhf", "well played", "great shot", "ty", "nice one", "good luck",
    "have fun", "nice try", "thx", "good game",
];

const BORDERLINE: &[&str] = &["ugh", "ffs", "shut up", "omg", "meh", "bruh", "smh", "come on"];

const INSULTS: &[&str] = &[
    "noob", "idiot", "moron", "useless", "trash", "stupid", "loser", "clown", "dumb", "worst player", "scrub",
    "garbage", "braindead", "bot", "potato",
];

const OTHER_OFFENSIVE: &[&str] = &[
    "wtf", "damn", "crap", "sucks", "hell", "freaking", "screw this", "bs", "omfg", "stinks", "pissed", "friggin",
];

const HATE: &[&str] = &[
    "your kind", "people like you", "your people", "dont belong here", "go back where you came from",
    "are inferior", "are vermin", "are parasites", "degenerate",
];

const THREATS: &[&str] = &["i will find you", "i will hurt you", "i will hunt you", "i will end you"];

const EXTREMISM: &[&str] = &["hail the regime", "the regime rises", "for the regime", "long live the regime"];

fn default_vocabulary() -> [Vec<String>; NUM_CLASSES] {
    let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    [own(POSITIVE), own(INSULTS), own(OTHER_OFFENSIVE), own(HATE), own(THREATS), own(EXTREMISM)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    /// Training examples per class.
    pub train_counts: [usize; NUM_CLASSES],
    pub val_counts: [usize; NUM_CLASSES],
    pub test_counts: [usize; NUM_CLASSES],
    /// Cue phrases per class. Class 0 phrases are optional positive chatter.
    pub vocabulary: [Vec<String>; NUM_CLASSES],
    /// Share of training examples that belong to an exact-duplicate pair.
    pub duplicate_fraction: f64,
    /// Share of training examples whose text also appears with another label.
    pub conflict_fraction: f64,
    /// Per-word probability of a character typo.
    pub noise_rate: f64,
    /// Share of class-0 training messages carrying a borderline token.
    pub borderline_rate: f64,
    /// Share of test class-0 slots relabelled as classes 2 and 3.
    pub test_shift: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            train_counts: [4350, 741, 234, 35, 8, 3],
            val_counts: [4351, 742, 235, 36, 8, 3],
            test_counts: [4351, 742, 235, 36, 8, 3],
            vocabulary: default_vocabulary(),
            duplicate_fraction: 0.402,
            conflict_fraction: 0.134,
            noise_rate: 0.02,
            borderline_rate: 0.15,
            test_shift: 0.0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, counts) in [("train", &self.train_counts), ("val", &self.val_counts), ("test", &self.test_counts)] {
            if counts.iter().sum::<usize>() == 0 {
                return Err(Error::Config(format!("{name}_counts are all zero")));
            }
        }
        for c in 1..NUM_CLASSES {
            let used = self.train_counts[c] + self.val_counts[c] + self.test_counts[c] > 0;
            if used && self.vocabulary[c].is_empty() {
                return Err(Error::Config(format!("class {c} is used but has no vocabulary")));
            }
        }
        for (name, v) in [
            ("duplicate_fraction", self.duplicate_fraction),
            ("conflict_fraction", self.conflict_fraction),
            ("noise_rate", self.noise_rate),
            ("borderline_rate", self.borderline_rate),
            ("test_shift", self.test_shift),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} outside [0,1]")));
            }
        }
        if self.conflict_fraction > self.duplicate_fraction {
            return Err(Error::Config("conflict_fraction exceeds duplicate_fraction".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

struct Writer {
    rng: ChaCha8Rng,
    seen: HashSet<String>,
    noise_rate: f64,
}

impl Writer {
    fn typo(&mut self, word: &str) -> String {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() < 4 {
            return word.to_owned();
        }
        let i = self.rng.gen_range(1..chars.len() - 1);
        let mut out = chars.clone();
        if self.rng.gen_bool(0.5) {
            out.swap(i, i + 1);
        } else {
            out.insert(i, chars[i]);
        }
        out.into_iter().collect()
    }

    /// A message of 3..=MAX_WORDS words around `core`, unique within this corpus.
    fn message(&mut self, core: &[&str]) -> String {
        let core_words: usize = core.iter().map(|p| p.split_whitespace().count()).sum();
        loop {
            let lo = 3usize.saturating_sub(core_words);
            let hi = MAX_WORDS.saturating_sub(core_words).max(lo);
            let n_fill = self.rng.gen_range(lo..=hi);
            let mut parts: Vec<String> = (0..n_fill)
                .map(|_| FILLER[self.rng.gen_range(0..FILLER.len())].to_owned())
                .collect();
            for p in core {
                let at = self.rng.gen_range(0..=parts.len());
                parts.insert(at, (*p).to_owned());
            }
            let words: Vec<String> = parts
                .join(" ")
                .split_whitespace()
                .map(|w| {
                    if self.noise_rate > 0.0 && self.rng.gen_bool(self.noise_rate) {
                        self.typo(w)
                    } else {
                        w.to_owned()
                    }
                })
                .collect();
            let text = words.join(" ");
            if self.seen.insert(normalize_text(&text)) {
                return text;
            }
        }
    }

    fn pick<'a>(&mut self, xs: &'a [String]) -> &'a str {
        &xs[self.rng.gen_range(0..xs.len())]
    }

    /// Wording for a message of class `c`.
    fn class_message(&mut self, c: usize, spec: &GeneratorSpec, borderline: bool) -> String {
        let mut core: Vec<&str> = Vec::new();
        let vocab = &spec.vocabulary[c];
        if c == 0 {
            if !vocab.is_empty() && self.rng.gen_bool(0.5) {
                core.push(self.pick(vocab));
            }
        } else {
            core.push(self.pick(vocab));
            if c <= 2 && self.rng.gen_bool(0.3) {
                core.push(self.pick(vocab));
            }
        }
        if borderline {
            core.push(BORDERLINE[self.rng.gen_range(0..BORDERLINE.len())]);
        }
        self.message(&core)
    }
}

fn labelled(prefix: &str, labels: &[usize], texts: Vec<String>) -> Dataset {
    let examples = labels
        .iter()
        .zip(texts)
        .enumerate()
        .map(|(i, (&c, t))| LabeledExample::new(format!("{prefix}-{:06}", i + 1), t, ClassId::from_index(c)))
        .collect();
    Dataset::new(prefix, examples)
}

/// Slot labels in shuffled order.
fn slots(counts: &[usize; NUM_CLASSES], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    labels.shuffle(rng);
    labels
}

fn plant_duplicates(labels: &[usize], texts: &mut [String], spec: &GeneratorSpec, rng: &mut ChaCha8Rng) {
    let n = labels.len();
    let total_pairs = (spec.duplicate_fraction * n as f64 / 2.0).round() as usize;
    let conflict_pairs = ((spec.conflict_fraction * n as f64 / 2.0).round() as usize).min(total_pairs);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    for list in &mut by_class {
        list.shuffle(rng);
    }

    // Conflicts: class 1/2 wording copied onto a class-0 slot.
    let toxic = [by_class[1].len(), by_class[2].len()];
    let want = apportion(&toxic, conflict_pairs.min(toxic[0] + toxic[1]));
    for (k, &m) in want.iter().enumerate() {
        for _ in 0..m {
            let (Some(src), Some(dst)) = (by_class[k + 1].pop(), by_class[0].pop()) else {
                break;
            };
            texts[dst] = texts[src].clone();
        }
    }

    // Same-label pairs among classes 0..=2, proportional to remaining slots.
    let free: Vec<usize> = (0..3).map(|c| by_class[c].len() / 2).collect();
    let same = total_pairs - conflict_pairs;
    let want = apportion(&free, same.min(free.iter().sum()));
    for (c, &m) in want.iter().enumerate() {
        for _ in 0..m {
            let (Some(src), Some(dst)) = (by_class[c].pop(), by_class[c].pop()) else {
                break;
            };
            texts[dst] = texts[src].clone();
        }
    }
}

fn build_split(
    counts: &[usize; NUM_CLASSES],
    spec: &GeneratorSpec,
    w: &mut Writer,
    borderline_rate: f64,
    shift: f64,
) -> (Vec<usize>, Vec<String>) {
    let mut labels = slots(counts, &mut w.rng);
    let mut shifted = vec![false; labels.len()];
    if shift > 0.0 {
        let zeros: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
        let m = (shift * zeros.len() as f64).round() as usize;
        let mut picked = zeros;
        picked.shuffle(&mut w.rng);
        for (k, &i) in picked.iter().take(m).enumerate() {
            labels[i] = if k % 4 == 3 { 3 } else { 2 };
            shifted[i] = true;
        }
    }
    let texts = labels
        .iter()
        .zip(&shifted)
        .map(|(&c, &s)| {
            if s {
                w.class_message(0, spec, true)
            } else {
                let border = c == 0 && borderline_rate > 0.0 && w.rng.gen_bool(borderline_rate);
                w.class_message(c, spec, border)
            }
        })
        .collect();
    (labels, texts)
}

/// Build train, validation and test splits. Identical spec and seed give
/// identical output.
pub fn generate_corpus(spec: &GeneratorSpec, seed: u64) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let mut w = Writer {
        rng: ChaCha8Rng::seed_from_u64(seed),
        seen: HashSet::new(),
        noise_rate: spec.noise_rate,
    };
    let (train_labels, mut train_texts) = build_split(&spec.train_counts, spec, &mut w, spec.borderline_rate, 0.0);
    plant_duplicates(&train_labels, &mut train_texts, spec, &mut w.rng);
    let (val_labels, val_texts) = build_split(&spec.val_counts, spec, &mut w, spec.borderline_rate, 0.0);
    let (test_labels, test_texts) = build_split(&spec.test_counts, spec, &mut w, spec.borderline_rate, spec.test_shift);
    Ok(GeneratedCorpus {
        train: labelled("train", &train_labels, train_texts),
        val: labelled("val", &val_labels, val_texts),
        test: labelled("test", &test_labels, test_texts),
    })
}
