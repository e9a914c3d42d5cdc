//! Texts, tokenization, the noun vocabulary, node features, splits and
//! positive/negative pair sampling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// One text of the paired corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TextSample {
    pub id: String,
    pub tokens: Vec<String>,
    /// Token-index ranges, one per sentence, partitioning `tokens`.
    pub sentences: Vec<Range<usize>>,
    pub category: u32,
    pub image_id: String,
}

impl TextSample {
    pub fn new(
        id: impl Into<String>,
        text: &str,
        category: u32,
        image_id: impl Into<String>,
    ) -> Self {
        let (tokens, sentences) = tokenize(text);
        Self {
            id: id.into(),
            tokens,
            sentences,
            category,
            image_id: image_id.into(),
        }
    }

    pub fn sentence_tokens(&self) -> impl Iterator<Item = &[String]> {
        self.sentences.iter().map(|r| &self.tokens[r.clone()])
    }
}

fn is_sentence_end(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Lowercases, strips punctuation and splits sentences on `.`, `!` and `?`.
///
/// Tokens are maximal runs of alphanumeric characters. Sentences without any
/// token are dropped, so the returned ranges always partition the tokens.
pub fn tokenize(text: &str) -> (Vec<String>, Vec<Range<usize>>) {
    let mut tokens = Vec::new();
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut sentence_start = 0;

    let mut close_sentence = |tokens: &Vec<String>, start: &mut usize| {
        if tokens.len() > *start {
            sentences.push(*start..tokens.len());
            *start = tokens.len();
        }
    };

    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
            continue;
        }
        if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
        if is_sentence_end(c) {
            close_sentence(&tokens, &mut sentence_start);
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    close_sentence(&tokens, &mut sentence_start);
    (tokens, sentences)
}

/// Rejects repeated text ids.
pub fn check_unique_ids(samples: &[TextSample]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in samples {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::Validation(format!("duplicate text id `{}`", s.id)));
        }
    }
    Ok(())
}

/// Dense bidirectional map between noun strings and node ids `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, u32>,
    doc_freq: Vec<u32>,
}

fn document_frequencies(samples: &[TextSample]) -> BTreeMap<&str, u32> {
    let mut df: BTreeMap<&str, u32> = BTreeMap::new();
    for s in samples {
        let distinct: BTreeSet<&str> = s.tokens.iter().map(String::as_str).collect();
        for w in distinct {
            *df.entry(w).or_default() += 1;
        }
    }
    df
}

impl Vocabulary {
    /// Selects nouns from `samples`.
    ///
    /// A token is kept when it is not a stopword, appears in at least
    /// `min_df` documents, and either belongs to `noun_lexicon` or, without a
    /// lexicon, is purely alphabetic. Ids follow descending document
    /// frequency with lexicographic tie-breaking.
    pub fn build(
        samples: &[TextSample],
        noun_lexicon: Option<&BTreeSet<String>>,
        stopwords: &BTreeSet<String>,
        min_df: u32,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("cannot build a vocabulary from zero texts".into()));
        }
        let mut kept: Vec<(&str, u32)> = document_frequencies(samples)
            .into_iter()
            .filter(|&(w, df)| {
                df >= min_df
                    && !stopwords.contains(w)
                    && match noun_lexicon {
                        Some(lex) => lex.contains(w),
                        None => w.chars().all(char::is_alphabetic),
                    }
            })
            .collect();
        if kept.is_empty() {
            return Err(Error::Config(format!(
                "vocabulary is empty (min_df = {min_df}, lexicon = {})",
                if noun_lexicon.is_some() { "given" } else { "none" }
            )));
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let words: Vec<String> = kept.iter().map(|(w, _)| w.to_string()).collect();
        let doc_freq = kept.iter().map(|&(_, df)| df).collect();
        Self::assemble(words, doc_freq)
    }

    /// Rebuilds a vocabulary from words listed in id order, recounting
    /// document frequencies over `samples`.
    pub fn from_words(words: Vec<String>, samples: &[TextSample]) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        let df = document_frequencies(samples);
        let doc_freq = words
            .iter()
            .map(|w| df.get(w.as_str()).copied().unwrap_or(0))
            .collect();
        Self::assemble(words, doc_freq)
    }

    fn assemble(words: Vec<String>, doc_freq: Vec<u32>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            let id = u32::try_from(i).map_err(|_| Error::Config("vocabulary too large".into()))?;
            if index.insert(w.clone(), id).is_some() {
                return Err(Error::Validation(format!("word `{w}` listed twice")));
            }
        }
        Ok(Self {
            words,
            index,
            doc_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn doc_freq(&self, id: u32) -> u32 {
        self.doc_freq[id as usize]
    }
}

/// Sparse per-node feature vector: `(node id, value)` with ascending ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatures {
    pub n_nodes: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SparseFeatures {
    pub fn get(&self, node: u32) -> f64 {
        self.entries
            .binary_search_by_key(&node, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    /// `n_nodes x channels` matrix with the values in channel 0.
    pub fn to_dense(&self, channels: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_nodes, channels.max(1));
        for &(node, v) in &self.entries {
            m.set(node as usize, 0, v);
        }
        m
    }
}

/// Word-frequency node features: entry `i` counts vocabulary word `i` in the
/// text. Out-of-vocabulary tokens are ignored.
pub fn text_node_features(sample: &TextSample, vocab: &Vocabulary) -> SparseFeatures {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for id in sample.tokens.iter().filter_map(|t| vocab.id(t)) {
        *counts.entry(id).or_default() += 1.0;
    }
    SparseFeatures {
        n_nodes: vocab.len(),
        entries: counts.into_iter().collect(),
    }
}

/// Precomputed per-text node feature matrices (`|V| x channels`), keyed by
/// text id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalNodeFeatures {
    pub n_nodes: usize,
    pub channels: usize,
    pub matrices: BTreeMap<String, DenseMatrix>,
}

impl ExternalNodeFeatures {
    pub fn new(n_nodes: usize, channels: usize) -> Self {
        Self {
            n_nodes,
            channels,
            matrices: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, text_id: impl Into<String>, m: DenseMatrix) -> Result<()> {
        let text_id = text_id.into();
        if m.shape() != (self.n_nodes, self.channels) {
            return Err(Error::Validation(format!(
                "features for `{text_id}` are {:?}, expected {}x{}",
                m.shape(),
                self.n_nodes,
                self.channels
            )));
        }
        self.matrices.insert(text_id, m);
        Ok(())
    }

    pub fn get(&self, text_id: &str) -> Option<&DenseMatrix> {
        self.matrices.get(text_id)
    }
}

/// Node feature matrix for one text: the external matrix when one is listed,
/// otherwise frequency counts in channel 0 and zeros in other channels.
pub fn node_feature_matrix(
    sample: &TextSample,
    vocab: &Vocabulary,
    external: Option<&ExternalNodeFeatures>,
) -> DenseMatrix {
    if let Some(m) = external.and_then(|e| e.get(&sample.id)) {
        return m.clone();
    }
    let channels = external.map_or(1, |e| e.channels);
    text_node_features(sample, vocab).to_dense(channels)
}

/// Train/validation/test partition of text ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub rng_seed: u64,
}

impl SplitSpec {
    /// Per-category seeded split; each list keeps corpus order.
    pub fn stratified(
        samples: &[TextSample],
        val_fraction: f64,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let ok = |f: f64| (0.0..1.0).contains(&f);
        if !ok(val_fraction) || !ok(test_fraction) || val_fraction + test_fraction >= 1.0 {
            return Err(Error::Config(format!(
                "split fractions val={val_fraction} test={test_fraction} must be in [0,1) and sum below 1"
            )));
        }
        let mut by_cat: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            by_cat.entry(s.category).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // 0 = train, 1 = val, 2 = test
        let mut part = vec![0u8; samples.len()];
        for members in by_cat.values_mut() {
            members.shuffle(&mut rng);
            let n = members.len() as f64;
            let n_test = libm::round(n * test_fraction) as usize;
            let n_val = libm::round(n * val_fraction) as usize;
            for (pos, &i) in members.iter().enumerate() {
                part[i] = if pos < n_test {
                    2
                } else if pos < n_test + n_val {
                    1
                } else {
                    0
                };
            }
        }
        let pick = |p: u8| {
            samples
                .iter()
                .zip(&part)
                .filter(|(_, &q)| q == p)
                .map(|(s, _)| s.id.clone())
                .collect()
        };
        Ok(Self {
            train: pick(0),
            val: pick(1),
            test: pick(2),
            rng_seed: seed,
        })
    }

    /// Samples whose id is in `ids`, in corpus order.
    pub fn select<'s>(samples: &'s [TextSample], ids: &[String]) -> Vec<&'s TextSample> {
        let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        samples.iter().filter(|s| wanted.contains(s.id.as_str())).collect()
    }
}

/// Rule deciding which text/image combinations count as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    /// The text's own image.
    ExactPair,
    /// Any image of a text in the same category.
    SameCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PairSample {
    pub text_id: String,
    pub image_id: String,
    pub positive: bool,
}

impl PairSample {
    pub fn label(&self) -> f64 {
        if self.positive {
            1.0
        } else {
            0.0
        }
    }
}

/// Samples grouped by alignment key, laid out contiguously.
struct Groups {
    order: Vec<usize>,
    /// `(start, len)` of the group each sample belongs to.
    span: Vec<(usize, usize)>,
}

impl Groups {
    fn new(samples: &[TextSample], alignment: Alignment) -> Self {
        let mut groups: BTreeMap<(u32, &str), Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            let key = match alignment {
                Alignment::ExactPair => (0, s.image_id.as_str()),
                Alignment::SameCategory => (s.category, ""),
            };
            groups.entry(key).or_default().push(i);
        }
        let mut order = Vec::with_capacity(samples.len());
        let mut span = vec![(0, 0); samples.len()];
        for members in groups.values() {
            let start = order.len();
            for &i in members {
                span[i] = (start, members.len());
            }
            order.extend_from_slice(members);
        }
        Self { order, span }
    }

    fn count(&self, t: usize, positive: bool) -> u64 {
        let len = self.span[t].1;
        (if positive { len } else { self.order.len() - len }) as u64
    }

    fn partner(&self, t: usize, j: usize, positive: bool) -> usize {
        let (start, len) = self.span[t];
        if positive {
            self.order[start + j]
        } else if j < start {
            self.order[j]
        } else {
            self.order[j + len]
        }
    }
}

/// Draws `n` combinations from the flat index space `0..sum(counts)`:
/// whole passes over every combination when `n` exceeds it, the remainder
/// without replacement.
fn draw_flat<R: Rng>(counts: &[u64], n: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cumulative = Vec::with_capacity(counts.len() + 1);
    cumulative.push(0u64);
    for c in counts {
        cumulative.push(cumulative.last().unwrap() + c);
    }
    let distinct = *cumulative.last().unwrap();
    if distinct == 0 {
        return Err(Error::Validation("no combination satisfies the requested label".into()));
    }
    let decode = |r: u64| {
        let t = cumulative.partition_point(|&c| c <= r) - 1;
        (t, (r - cumulative[t]) as usize)
    };

    let n = n as u64;
    let mut flat: Vec<u64> = Vec::with_capacity(n as usize);
    let passes = n / distinct;
    let rem = n % distinct;
    for _ in 0..passes {
        flat.extend(0..distinct);
    }
    if rem > 0 {
        if distinct <= 4 * rem {
            let mut all: Vec<u64> = (0..distinct).collect();
            let (picked, _) = all.partial_shuffle(rng, rem as usize);
            flat.extend_from_slice(picked);
        } else {
            let mut seen = BTreeSet::new();
            while (seen.len() as u64) < rem {
                let r = rng.gen_range(0..distinct);
                if seen.insert(r) {
                    flat.push(r);
                }
            }
        }
    }
    Ok(flat.into_iter().map(decode).collect())
}

/// Draws exactly `n_pos` positive and `n_neg` negative text/image pairs.
///
/// Combinations are drawn uniformly without replacement while enough remain;
/// larger requests repeat whole passes first. The output order is a seeded
/// shuffle, so a fixed seed reproduces the list exactly.
pub fn sample_pairs(
    samples: &[TextSample],
    n_pos: usize,
    n_neg: usize,
    alignment: Alignment,
    seed: u64,
) -> Result<Vec<PairSample>> {
    if n_pos + n_neg == 0 {
        return Ok(Vec::new());
    }
    if samples.is_empty() {
        return Err(Error::Validation("cannot sample pairs from zero texts".into()));
    }
    let groups = Groups::new(samples, alignment);
    if n_neg > 0 && (0..samples.len()).all(|t| groups.count(t, false) == 0) {
        return Err(Error::Validation(match alignment {
            Alignment::SameCategory => "only one category present; cannot form negatives".into(),
            Alignment::ExactPair => "all texts share one image; cannot form negatives".into(),
        }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_pos + n_neg);
    for (positive, n) in [(true, n_pos), (false, n_neg)] {
        let counts: Vec<u64> = (0..samples.len()).map(|t| groups.count(t, positive)).collect();
        for (t, j) in draw_flat(&counts, n, &mut rng)? {
            let partner = groups.partner(t, j, positive);
            out.push(PairSample {
                text_id: samples[t].id.clone(),
                image_id: samples[partner].image_id.clone(),
                positive,
            });
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Whether `(text, image_sample)` satisfies `alignment`.
pub fn is_aligned(text: &TextSample, image_owner: &TextSample, alignment: Alignment) -> bool {
    match alignment {
        Alignment::ExactPair => text.image_id == image_owner.image_id,
        Alignment::SameCategory => text.category == image_owner.category,
    }
}
