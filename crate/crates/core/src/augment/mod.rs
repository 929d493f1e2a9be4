//! Paraphrase augmentation for minority classes.
//!
//! The pipeline runs in a fixed order: generate candidates from real
//! minority-class training messages, filter them, deduplicate within the
//! synthetic pool, work out how many are needed for a target synthetic share,
//! sample that many, and append them to the training partition. Validation
//! data never passes through here.

mod prompt;
mod provider;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::{RegexSet, RegexSetBuilder};
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassId, Dataset, LabeledExample, Origin, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::features::{cosine_similarity, extract_features, normalize_text, FeatureConfig, SparseVector};

pub use prompt::{build_classify_prompt, build_paraphrase_prompt};
pub use provider::{MockProvider, ParaphraseProvider, RemoteProvider, SlangLexicon, ENDPOINT_VAR, KEY_VAR};

pub const DEFAULT_LEAKAGE_PATTERNS: [&str; 7] =
    ["toxic", "offensive", "classif", "label", "category", "rewrit", "original:"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Empty,
    InvalidLabel,
    IdenticalToSource,
    TooShort,
    TooLong,
    Leakage,
    NearDuplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Pending,
    Kept,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticCandidate {
    pub id: String,
    pub source_id: String,
    pub source_text: String,
    pub target_class: ClassId,
    pub paraphrase: String,
    pub status: CandidateStatus,
}

impl SyntheticCandidate {
    fn reject(mut self, reason: RejectReason) -> Self {
        self.status = CandidateStatus::Rejected(reason);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub target_ratio: f64,
    pub min_words: usize,
    pub max_words: usize,
    pub dedup_threshold: f64,
    pub leakage_patterns: Vec<String>,
    pub seed: u64,
    /// Paraphrases requested per source message.
    pub per_source: usize,
    /// Concurrent provider calls.
    pub max_in_flight: usize,
    /// Exact per-class sample sizes for classes 2..=5, overriding
    /// proportional allocation.
    pub explicit_counts: Option<[usize; 4]>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            target_ratio: 0.05,
            min_words: 3,
            max_words: 20,
            dedup_threshold: 0.95,
            leakage_patterns: DEFAULT_LEAKAGE_PATTERNS.iter().map(|s| s.to_string()).collect(),
            seed: 42,
            per_source: 8,
            max_in_flight: 4,
            explicit_counts: None,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.target_ratio) {
            return Err(Error::Config(format!("target_ratio {} outside [0,1)", self.target_ratio)));
        }
        if self.min_words > self.max_words {
            return Err(Error::Config(format!(
                "min_words {} > max_words {}",
                self.min_words, self.max_words
            )));
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return Err(Error::Config(format!("dedup_threshold {} outside (0,1]", self.dedup_threshold)));
        }
        if self.per_source == 0 {
            return Err(Error::Config("per_source must be >= 1".into()));
        }
        self.leakage_filter()?;
        Ok(())
    }

    /// Compile the leakage patterns case-insensitively.
    pub fn leakage_filter(&self) -> Result<RegexSet> {
        RegexSetBuilder::new(&self.leakage_patterns)
            .case_insensitive(true)
            .build()
            .map_err(|e| Error::Config(format!("bad leakage pattern: {e}")))
    }
}

/// Kept counts per class and rejection counts per reason.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PoolStats {
    pub generated: usize,
    pub kept: [usize; NUM_CLASSES],
    pub rejected: BTreeMap<RejectReason, usize>,
}

impl PoolStats {
    pub fn kept_total(&self) -> usize {
        self.kept.iter().sum()
    }

    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }

    /// `kept + rejected == generated`.
    pub fn reconciles(&self) -> bool {
        self.kept_total() + self.rejected_total() == self.generated
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub source_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct GenerationOutcome {
    pub candidates: Vec<SyntheticCandidate>,
    pub failures: Vec<GenerationFailure>,
}

/// Seed for the `k`-th paraphrase of source `index` (SplitMix64 mixing).
fn call_seed(base: u64, index: usize, k: usize) -> u64 {
    let mut z = base
        .wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((k as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Ask the provider for `per_source` paraphrases of every source message.
///
/// Calls run on up to `max_in_flight` threads; results are assembled in
/// source order so the output does not depend on scheduling. A provider
/// error stops that source and is recorded as one failure.
pub fn generate_candidates(
    sources: &Dataset,
    provider: &dyn ParaphraseProvider,
    per_source: usize,
    seed: u64,
    max_in_flight: usize,
) -> Result<GenerationOutcome> {
    if per_source == 0 {
        return Err(Error::InvalidArgument("per_source must be >= 1".into()));
    }
    let targets: Vec<ClassId> = sources
        .iter()
        .map(|e| match e.label {
            Some(c) if c.is_minority() => Ok(c),
            other => Err(Error::InvalidArgument(format!(
                "source {} has label {:?}; only classes 2-5 are paraphrased",
                e.id, other
            ))),
        })
        .collect::<Result<_>>()?;

    type Slot = (Vec<String>, Option<String>);
    let slots: Vec<Mutex<Option<Slot>>> = (0..sources.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = max_in_flight.max(1).min(sources.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= sources.len() {
                    break;
                }
                let src = &sources.examples[i];
                let mut texts = Vec::with_capacity(per_source);
                let mut failure = None;
                for k in 0..per_source {
                    match provider.paraphrase(&src.text, targets[i], call_seed(seed, i, k)) {
                        Ok(t) => texts.push(t),
                        Err(e) => {
                            failure = Some(e.to_string());
                            break;
                        }
                    }
                }
                *slots[i].lock().expect("slot lock") = Some((texts, failure));
            });
        }
    });

    let mut out = GenerationOutcome::default();
    for ((src, target), slot) in sources.iter().zip(targets).zip(slots) {
        let (texts, failure) = slot.into_inner().expect("slot lock").expect("every source processed");
        for (k, paraphrase) in texts.into_iter().enumerate() {
            out.candidates.push(SyntheticCandidate {
                id: format!("syn:{}:{k}", src.id),
                source_id: src.id.clone(),
                source_text: src.text.clone(),
                target_class: target,
                paraphrase,
                status: CandidateStatus::Pending,
            });
        }
        if let Some(message) = failure {
            out.failures.push(GenerationFailure {
                source_id: src.id.clone(),
                message,
            });
        }
    }
    Ok(out)
}

fn classify_rejection(c: &SyntheticCandidate, cfg: &AugmentConfig, leakage: &RegexSet) -> Option<RejectReason> {
    let text = c.paraphrase.trim();
    if text.is_empty() {
        return Some(RejectReason::Empty);
    }
    if !c.target_class.is_minority() {
        return Some(RejectReason::InvalidLabel);
    }
    if normalize_text(text) == normalize_text(&c.source_text) {
        return Some(RejectReason::IdenticalToSource);
    }
    let words = text.split_whitespace().count();
    if words < cfg.min_words {
        return Some(RejectReason::TooShort);
    }
    if words > cfg.max_words {
        return Some(RejectReason::TooLong);
    }
    if leakage.is_match(text) {
        return Some(RejectReason::Leakage);
    }
    None
}

/// Drop empty, wrong-class, unchanged, out-of-length and leaking
/// paraphrases. Returns the survivors (status still pending) and every
/// rejected candidate with its reason inside `stats`.
pub fn filter_candidates(
    cands: Vec<SyntheticCandidate>,
    cfg: &AugmentConfig,
) -> Result<(Vec<SyntheticCandidate>, Vec<SyntheticCandidate>, PoolStats)> {
    let leakage = cfg.leakage_filter()?;
    let mut stats = PoolStats {
        generated: cands.len(),
        ..PoolStats::default()
    };
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for c in cands {
        match classify_rejection(&c, cfg, &leakage) {
            Some(reason) => {
                *stats.rejected.entry(reason).or_default() += 1;
                rejected.push(c.reject(reason));
            }
            None => {
                stats.kept[c.target_class.index()] += 1;
                kept.push(c);
            }
        }
    }
    Ok((kept, rejected, stats))
}

#[derive(Debug, Clone, Default)]
pub struct DedupOutcome {
    pub kept: Vec<SyntheticCandidate>,
    pub dropped: Vec<SyntheticCandidate>,
}

/// Greedy near-duplicate removal within the pool: scanning in input order,
/// a candidate is dropped when its cosine similarity to any already-kept
/// candidate is at least `threshold`.
///
/// An inverted index over hashed features narrows the comparison set; every
/// decision is confirmed with [`cosine_similarity`].
pub fn dedup_pool(cands: Vec<SyntheticCandidate>, threshold: f64, fcfg: &FeatureConfig) -> Result<DedupOutcome> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("dedup threshold {threshold} outside (0,1]")));
    }
    let mut postings: HashMap<u32, Vec<(usize, f64)>> = HashMap::new();
    let mut kept_vecs: Vec<SparseVector> = Vec::new();
    let mut out = DedupOutcome::default();
    let mut dots: Vec<f64> = Vec::new();
    let mut touched: Vec<usize> = Vec::new();

    for mut c in cands {
        let v = extract_features(&normalize_text(&c.paraphrase), fcfg);
        dots.resize(kept_vecs.len(), 0.0);
        touched.clear();
        for (&i, &x) in v.indices.iter().zip(&v.values) {
            if let Some(list) = postings.get(&i) {
                for &(k, y) in list {
                    if dots[k] == 0.0 {
                        touched.push(k);
                    }
                    dots[k] += x * y;
                }
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let norm = v.norm();
        let mut duplicate = false;
        for &k in &touched {
            let approx = if norm > 0.0 { dots[k] / (norm * kept_vecs[k].norm()) } else { 0.0 };
            if approx >= threshold - 1e-9 && cosine_similarity(&v, &kept_vecs[k])? >= threshold {
                duplicate = true;
                break;
            }
        }
        for &k in &touched {
            dots[k] = 0.0;
        }
        if duplicate {
            out.dropped.push(c.reject(RejectReason::NearDuplicate));
            continue;
        }
        let slot = kept_vecs.len();
        for (&i, &x) in v.indices.iter().zip(&v.values) {
            postings.entry(i).or_default().push((slot, x));
        }
        kept_vecs.push(v);
        c.status = CandidateStatus::Kept;
        out.kept.push(c);
    }
    Ok(out)
}

/// Result of generate, filter and dedup.
#[derive(Debug, Clone, Default)]
pub struct PoolBuild {
    /// Every generated candidate with its final status, in generation order.
    pub candidates: Vec<SyntheticCandidate>,
    pub stats: PoolStats,
    pub failures: Vec<GenerationFailure>,
}

impl PoolBuild {
    pub fn kept(&self) -> Vec<SyntheticCandidate> {
        self.candidates
            .iter()
            .filter(|c| c.status == CandidateStatus::Kept)
            .cloned()
            .collect()
    }
}

/// Run filter then dedup on generated candidates, reconciling the counts of
/// both stages into one [`PoolStats`].
pub fn refine_pool(generated: Vec<SyntheticCandidate>, cfg: &AugmentConfig, fcfg: &FeatureConfig) -> Result<(Vec<SyntheticCandidate>, PoolStats)> {
    let order: HashMap<String, usize> = generated.iter().enumerate().map(|(i, c)| (c.id.clone(), i)).collect();
    let (survivors, rejected, mut stats) = filter_candidates(generated, cfg)?;
    let dedup = dedup_pool(survivors, cfg.dedup_threshold, fcfg)?;
    for c in &dedup.dropped {
        stats.kept[c.target_class.index()] -= 1;
        *stats.rejected.entry(RejectReason::NearDuplicate).or_default() += 1;
    }
    let mut all: Vec<SyntheticCandidate> = rejected.into_iter().chain(dedup.kept).chain(dedup.dropped).collect();
    all.sort_by_key(|c| order[&c.id]);
    Ok((all, stats))
}

/// Generate, filter and deduplicate a synthetic pool from the minority-class
/// messages of a real training set.
pub fn build_pool(
    train: &Dataset,
    provider: &dyn ParaphraseProvider,
    cfg: &AugmentConfig,
    fcfg: &FeatureConfig,
) -> Result<PoolBuild> {
    cfg.validate()?;
    let sources = Dataset::new(
        format!("{}-sources", train.name),
        train
            .iter()
            .filter(|e| e.origin == Origin::Real && e.label.is_some_and(ClassId::is_minority))
            .cloned()
            .collect(),
    );
    let generated = generate_candidates(&sources, provider, cfg.per_source, cfg.seed, cfg.max_in_flight)?;
    let (candidates, stats) = refine_pool(generated.candidates, cfg, fcfg)?;
    Ok(PoolBuild {
        candidates,
        stats,
        failures: generated.failures,
    })
}

/// Synthetic examples needed so they make up `ratio` of the mixed set:
/// `round(ratio / (1 - ratio) * n_real)`.
pub fn required_synthetic_count(n_real: usize, ratio: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("synthetic ratio {ratio} outside [0,1)")));
    }
    Ok((ratio / (1.0 - ratio) * n_real as f64).round() as usize)
}

/// Largest-remainder apportionment of `n` across `counts`, exact in integer
/// arithmetic. Remainder ties go to the lower index.
pub fn apportion(counts: &[usize], n: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut alloc: Vec<usize> = counts.iter().map(|&c| c * n / total).collect();
    let mut rema: Vec<(usize, usize)> = counts.iter().enumerate().map(|(i, &c)| (c * n % total, i)).collect();
    rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - alloc.iter().sum::<usize>();
    for &(_, i) in rema.iter().take(short) {
        alloc[i] += 1;
    }
    alloc
}

fn per_class_counts(pool: &[SyntheticCandidate]) -> [usize; NUM_CLASSES] {
    let mut counts = [0; NUM_CLASSES];
    for c in pool {
        counts[c.target_class.index()] += 1;
    }
    counts
}

fn draw(pool: &[SyntheticCandidate], alloc: &[usize; NUM_CLASSES], seed: u64) -> Vec<SyntheticCandidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; pool.len()];
    for class in ClassId::all() {
        let mut members: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].target_class == class).collect();
        members.shuffle(&mut rng);
        for &i in members.iter().take(alloc[class.index()]) {
            chosen[i] = true;
        }
    }
    pool.iter().zip(chosen).filter(|(_, keep)| *keep).map(|(c, _)| c.clone()).collect()
}

/// Sample `n_needed` candidates with per-class sizes proportional to the
/// pool's class composition, uniformly without replacement within class.
/// The selection keeps pool order.
pub fn sample_pool(pool: &[SyntheticCandidate], n_needed: usize, seed: u64) -> Result<Vec<SyntheticCandidate>> {
    if n_needed > pool.len() {
        return Err(Error::PoolShortfall {
            needed: n_needed,
            available: pool.len(),
        });
    }
    let counts = per_class_counts(pool);
    let alloc: [usize; NUM_CLASSES] = apportion(&counts, n_needed).try_into().expect("six classes");
    Ok(draw(pool, &alloc, seed))
}

/// Sample exact per-class counts for classes 2..=5.
pub fn sample_pool_explicit(pool: &[SyntheticCandidate], counts: [usize; 4], seed: u64) -> Result<Vec<SyntheticCandidate>> {
    let available = per_class_counts(pool);
    let mut alloc = [0; NUM_CLASSES];
    for (k, &want) in counts.iter().enumerate() {
        let class = k + 2;
        if want > available[class] {
            return Err(Error::PoolShortfall {
                needed: want,
                available: available[class],
            });
        }
        alloc[class] = want;
    }
    Ok(draw(pool, &alloc, seed))
}

/// Append sampled synthetic examples to a real-only training set.
pub fn mix_into_train(train: &Dataset, selection: &[SyntheticCandidate]) -> Result<Dataset> {
    if let Some(e) = train.iter().find(|e| e.origin == Origin::Synthetic) {
        return Err(Error::InvalidArgument(format!("training set already contains synthetic example {}", e.id)));
    }
    if let Some(c) = selection.iter().find(|c| !c.target_class.is_minority()) {
        return Err(Error::InvalidArgument(format!(
            "synthetic example {} targets class {}; the pool is minority-only",
            c.id, c.target_class
        )));
    }
    let mut ids: HashSet<&str> = train.iter().map(|e| e.id.as_str()).collect();
    for c in selection {
        if !ids.insert(&c.id) {
            return Err(Error::InvalidArgument(format!("duplicate id {}", c.id)));
        }
    }
    let mut examples = train.examples.clone();
    examples.extend(selection.iter().map(|c| LabeledExample {
        id: c.id.clone(),
        text: c.paraphrase.clone(),
        label: Some(c.target_class),
        origin: Origin::Synthetic,
    }));
    Ok(Dataset::new(format!("{}+synthetic", train.name), examples))
}

/// Sample the right number of synthetic examples for `cfg.target_ratio` and
/// mix them into `train`.
pub fn augment_train(train: &Dataset, pool: &[SyntheticCandidate], cfg: &AugmentConfig) -> Result<Dataset> {
    let selection = match cfg.explicit_counts {
        Some(counts) => sample_pool_explicit(pool, counts, cfg.seed)?,
        None => sample_pool(pool, required_synthetic_count(train.len(), cfg.target_ratio)?, cfg.seed)?,
    };
    mix_into_train(train, &selection)
}

pub fn write_pool_jsonl<W: Write>(pool: &[SyntheticCandidate], mut sink: W) -> Result<()> {
    for c in pool {
        serde_json::to_writer(&mut sink, c)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_pool_jsonl<R: BufRead>(source: R) -> Result<Vec<SyntheticCandidate>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str, source: &str, class: u8, paraphrase: &str) -> SyntheticCandidate {
        SyntheticCandidate {
            id: id.into(),
            source_id: format!("src-{id}"),
            source_text: source.into(),
            target_class: ClassId::new(class).unwrap(),
            paraphrase: paraphrase.into(),
            status: CandidateStatus::Pending,
        }
    }

    fn sources(n: usize) -> Dataset {
        Dataset::new(
            "s",
            (0..n)
                .map(|i| LabeledExample::new(format!("m{i}"), format!("wtf is this crap team {i}"), ClassId::OTHER_OFFENSIVE))
                .collect(),
        )
    }

    #[test]
    fn generation_counts() {
        let out = generate_candidates(&sources(3), &MockProvider::default(), 2, 1, 2).unwrap();
        assert_eq!(out.candidates.len(), 6);
        assert!(out.failures.is_empty());
        assert!(out.candidates.iter().all(|c| c.status == CandidateStatus::Pending));
        assert_eq!(out.candidates[2].source_id, "m1");
    }

    #[test]
    fn generation_records_failures() {
        let mut s = sources(3);
        s.examples[1].text = "boom tank now".into();
        let provider = MockProvider {
            fail_on: Some("boom".into()),
            ..MockProvider::default()
        };
        let out = generate_candidates(&s, &provider, 2, 1, 3).unwrap();
        assert_eq!(out.candidates.len(), 4);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].source_id, "m1");
    }

    #[test]
    fn generation_is_deterministic_across_thread_counts() {
        let a = generate_candidates(&sources(10), &MockProvider::default(), 3, 5, 1).unwrap();
        let b = generate_candidates(&sources(10), &MockProvider::default(), 3, 5, 8).unwrap();
        assert_eq!(a.candidates, b.candidates);
    }

    #[test]
    fn generation_rejects_majority_sources() {
        let s = Dataset::new("s", vec![LabeledExample::new("a", "gg", ClassId::NON_TOXIC)]);
        assert!(generate_candidates(&s, &MockProvider::default(), 1, 0, 1).is_err());
    }

    #[test]
    fn filter_reasons() {
        let cfg = AugmentConfig::default();
        let cands = vec![
            cand("a", "x y z", 2, "too short"),
            cand("b", "x y z", 2, "that was a mild toxicity level remark ok"),
            cand("c", "x y z", 3, "one two three four five six seven eight nine ten"),
            cand("d", "same words here", 2, "Same  words here"),
            cand("e", "x", 2, "   "),
            cand("f", "x", 1, "a perfectly fine length message here"),
            cand("g", "x", 4, &"word ".repeat(21)),
        ];
        let (kept, rejected, stats) = filter_candidates(cands, &cfg).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "c");
        let reasons: Vec<_> = rejected.iter().map(|c| (c.id.as_str(), c.status)).collect();
        use CandidateStatus::Rejected;
        assert_eq!(
            reasons,
            vec![
                ("a", Rejected(RejectReason::TooShort)),
                ("b", Rejected(RejectReason::Leakage)),
                ("d", Rejected(RejectReason::IdenticalToSource)),
                ("e", Rejected(RejectReason::Empty)),
                ("f", Rejected(RejectReason::InvalidLabel)),
                ("g", Rejected(RejectReason::TooLong)),
            ]
        );
        assert!(stats.reconciles());
        assert_eq!(stats.kept[3], 1);
    }

    #[test]
    fn bad_leakage_pattern_is_config_error() {
        let cfg = AugmentConfig {
            leakage_patterns: vec!["(unclosed".into()],
            ..AugmentConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(filter_candidates(vec![], &cfg).is_err());
    }

    #[test]
    fn dedup_drops_identical_second() {
        let f = FeatureConfig::default();
        let cands = vec![cand("a", "s", 2, "ur team sucks so bad"), cand("b", "s", 2, "ur team sucks so bad")];
        let out = dedup_pool(cands.clone(), 0.95, &f).unwrap();
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.dropped[0].id, "b");
        assert_eq!(out.dropped[0].status, CandidateStatus::Rejected(RejectReason::NearDuplicate));

        let distinct = vec![cand("a", "s", 2, "ur team sucks so bad"), cand("b", "s", 2, "this map is crap today")];
        assert_eq!(dedup_pool(distinct, 1.0, &f).unwrap().kept.len(), 2);
        assert!(dedup_pool(cands, 0.0, &f).is_err());
    }

    #[test]
    fn synthetic_share_formula() {
        let n = required_synthetic_count(36_514, 0.05).unwrap();
        assert!(n == 1921 || n == 1922, "{n}");
        assert_eq!(required_synthetic_count(12_345, 0.0).unwrap(), 0);
        assert_eq!(required_synthetic_count(1000, 0.5).unwrap(), 1000);
        assert!(required_synthetic_count(10, 1.0).is_err());
    }

    #[test]
    fn apportion_sums_and_is_proportional() {
        assert_eq!(apportion(&[8348, 1633, 343, 140], 1921), vec![1532, 300, 63, 26]);
        assert_eq!(apportion(&[1, 1, 1], 2), vec![1, 1, 0]);
        assert_eq!(apportion(&[5, 0], 5), vec![5, 0]);
        assert_eq!(apportion(&[0, 0], 0), vec![0, 0]);
    }

    fn pool(counts: [usize; 4]) -> Vec<SyntheticCandidate> {
        let mut out = Vec::new();
        for (k, &n) in counts.iter().enumerate() {
            for i in 0..n {
                out.push(cand(&format!("c{k}-{i}"), "s", (k + 2) as u8, &format!("para {k} {i} x")));
            }
        }
        out
    }

    #[test]
    fn sampling_edges() {
        let p = pool([20, 10, 5, 2]);
        assert_eq!(sample_pool(&p, p.len(), 3).unwrap(), p);
        assert!(sample_pool(&p, 0, 3).unwrap().is_empty());
        assert!(matches!(
            sample_pool(&p, 38, 3),
            Err(Error::PoolShortfall { needed: 38, available: 37 })
        ));
        let s = sample_pool(&p, 10, 3).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s, sample_pool(&p, 10, 3).unwrap());
        let explicit = sample_pool_explicit(&p, [3, 3, 3, 1], 3).unwrap();
        assert_eq!(per_class_counts(&explicit), [0, 0, 3, 3, 3, 1]);
        assert!(sample_pool_explicit(&p, [0, 0, 6, 0], 3).is_err());
    }

    #[test]
    fn mixing() {
        let train = sources(4);
        let p = pool([2, 1, 0, 0]);
        let mixed = mix_into_train(&train, &p).unwrap();
        assert_eq!(mixed.len(), 7);
        assert_eq!(mixed.synthetic_count(), 3);
        assert!(mixed
            .iter()
            .filter(|e| e.origin == Origin::Synthetic)
            .all(|e| e.label.is_some_and(ClassId::is_minority)));
        assert_eq!(mix_into_train(&train, &[]).unwrap().examples, train.examples);
        assert!(mix_into_train(&mixed, &[]).is_err());
        let bad = vec![cand("z", "s", 1, "not allowed here")];
        assert!(mix_into_train(&train, &bad).is_err());
    }

    #[test]
    fn pool_file_round_trip() {
        let mut p = pool([1, 1, 0, 1]);
        p[1].status = CandidateStatus::Rejected(RejectReason::Leakage);
        p[2].status = CandidateStatus::Kept;
        let mut buf = Vec::new();
        write_pool_jsonl(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"status\":{\"rejected\":\"leakage\"}"));
        assert_eq!(read_pool_jsonl(buf.as_slice()).unwrap(), p);
    }
}
