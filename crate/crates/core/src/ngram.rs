//! Character n-gram extraction and top-k frequency profiles.
//!
//! Grams are taken within words only: text is split on spaces and no gram
//! crosses a word boundary. Lengths are counted in Unicode scalar values.

use std::collections::BTreeMap;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;
use thiserror::Error;

use crate::corpus::LanguageId;
use crate::format::{write_preamble, Dump, Header, ParseError, Provenance};

pub const DEFAULT_ORDERS: [usize; 4] = [1, 2, 3, 4];
pub const DEFAULT_K: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NgramError {
    #[error("invalid n-gram spec: {0}")]
    InvalidSpec(String),
    #[error("profiles were built with different specs ({0} vs {1})")]
    SpecMismatch(String, String),
    #[error("expected a {expected:?} profile, got {got:?}")]
    WrongKind {
        expected: ProfileKind,
        got: ProfileKind,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct NgramSpec {
    orders: Vec<usize>,
    k: usize,
}

impl Default for NgramSpec {
    fn default() -> Self {
        Self {
            orders: DEFAULT_ORDERS.to_vec(),
            k: DEFAULT_K,
        }
    }
}

impl NgramSpec {
    /// Orders are deduplicated and sorted.
    pub fn new(orders: impl IntoIterator<Item = usize>, k: usize) -> Result<Self, NgramError> {
        let mut orders: Vec<usize> = orders.into_iter().collect();
        orders.sort_unstable();
        orders.dedup();
        if orders.is_empty() {
            return Err(NgramError::InvalidSpec("no n-gram orders".into()));
        }
        if orders[0] == 0 {
            return Err(NgramError::InvalidSpec("n-gram order must be >= 1".into()));
        }
        if k == 0 {
            return Err(NgramError::InvalidSpec("k must be >= 1".into()));
        }
        Ok(Self { orders, k })
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn orders_label(&self) -> String {
        let parts: Vec<String> = self.orders.iter().map(|n| n.to_string()).collect();
        parts.join(",")
    }
}

impl std::fmt::Display for NgramSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "k={} orders={}", self.k, self.orders_label())
    }
}

/// Calls `visit` once per gram occurrence, borrowing from `text`.
pub fn for_each_ngram<'t>(text: &'t str, orders: &[usize], mut visit: impl FnMut(&'t str)) {
    let mut bounds: Vec<usize> = Vec::new();
    for word in text.split(' ') {
        if word.is_empty() {
            continue;
        }
        bounds.clear();
        bounds.extend(word.char_indices().map(|(i, _)| i));
        bounds.push(word.len());
        let chars = bounds.len() - 1;
        for start in 0..chars {
            for &n in orders {
                if n == 0 || start + n > chars {
                    continue;
                }
                visit(&word[bounds[start]..bounds[start + n]]);
            }
        }
    }
}

/// Multiset of within-word character n-grams.
pub fn extract_ngrams(text: &str, orders: &[usize]) -> BTreeMap<String, u64> {
    let mut sorted = orders.to_vec();
    sorted.sort_unstable();
    let mut counts = BTreeMap::new();
    for_each_ngram(text, &sorted, |g| {
        *counts.entry(g.to_string()).or_insert(0) += 1
    });
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProfileKind {
    LanguageTopK,
    SentenceSet,
}

#[derive(Debug, Clone)]
pub struct NgramProfile {
    spec: NgramSpec,
    kind: ProfileKind,
    /// Language profiles: rank order. Sentence profiles: lexicographic.
    entries: Vec<(String, u64)>,
    set: FxHashSet<String>,
}

impl PartialEq for NgramProfile {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.kind == other.kind && self.entries == other.entries
    }
}

impl NgramProfile {
    fn from_entries(spec: NgramSpec, kind: ProfileKind, entries: Vec<(String, u64)>) -> Self {
        let set = entries.iter().map(|(g, _)| g.clone()).collect();
        Self {
            spec,
            kind,
            entries,
            set,
        }
    }

    pub fn spec(&self) -> &NgramSpec {
        &self.spec
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, gram: &str) -> bool {
        self.set.contains(gram)
    }

    pub fn grams(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(g, _)| g.as_str())
    }

    /// `(gram, count)` pairs; counts are corpus-wide for language profiles.
    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn intersection_size(&self, other: &NgramProfile) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.grams().filter(|g| large.contains(g)).count()
    }

    pub fn to_dump(&self, lang: &LanguageId, provenance: Option<&Provenance>) -> String {
        let header = Header::new("ngram-profile", 1)
            .with("lang", lang)
            .with("k", self.spec.k)
            .with("orders", self.spec.orders_label());
        let mut out = String::new();
        write_preamble(&mut out, &header, provenance);
        for (gram, count) in &self.entries {
            out.push_str(gram);
            out.push('\t');
            out.push_str(&count.to_string());
            out.push('\n');
        }
        out
    }

    /// Reads a language profile dump.
    pub fn from_dump(text: &str) -> Result<(LanguageId, Self), ParseError> {
        let dump = Dump::parse(text, "ngram-profile", 1)?;
        let h = &dump.header;
        let lang =
            LanguageId::new(h.require("lang")?).map_err(|e| ParseError::new(1, e.to_string()))?;
        let k: usize = h.require_parsed("k")?;
        let orders = h
            .require("orders")?
            .split(',')
            .map(|n| n.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| ParseError::new(1, "bad orders list"))?;
        let spec = NgramSpec::new(orders, k).map_err(|e| ParseError::new(1, e.to_string()))?;
        let mut entries = Vec::with_capacity(dump.body.len());
        for &(line_no, line) in &dump.body {
            let (gram, count) = line
                .split_once('\t')
                .ok_or_else(|| ParseError::new(line_no, "expected gram<TAB>count"))?;
            let count: u64 = count
                .parse()
                .map_err(|_| ParseError::new(line_no, format!("bad count `{count}`")))?;
            entries.push((gram.to_string(), count));
        }
        if entries.len() > k {
            return Err(ParseError::new(
                dump.end_line(),
                "profile has more than k grams",
            ));
        }
        Ok((
            lang,
            Self::from_entries(spec, ProfileKind::LanguageTopK, entries),
        ))
    }
}

/// Pools gram counts over every sentence and keeps the `k` most frequent,
/// ranked by count descending then gram ascending. An empty input yields an
/// empty profile; callers decide whether that deserves a warning.
pub fn build_language_profile<'a, I>(sentences: I, spec: &NgramSpec) -> NgramProfile
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: FxHashMap<&'a str, u64> = FxHashMap::default();
    for sentence in sentences {
        for_each_ngram(sentence, &spec.orders, |g| {
            *counts.entry(g).or_insert(0) += 1
        });
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    let by_rank = |a: &(&str, u64), b: &(&str, u64)| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0));
    if ranked.len() > spec.k {
        ranked.select_nth_unstable_by(spec.k - 1, by_rank);
        ranked.truncate(spec.k);
    }
    ranked.sort_unstable_by(by_rank);
    let entries = ranked
        .into_iter()
        .map(|(g, c)| (g.to_string(), c))
        .collect();
    NgramProfile::from_entries(spec.clone(), ProfileKind::LanguageTopK, entries)
}

/// The deduplicated gram set of one sentence, without truncation.
pub fn build_sentence_profile(sentence: &str, spec: &NgramSpec) -> NgramProfile {
    let entries = extract_ngrams(sentence, &spec.orders).into_iter().collect();
    NgramProfile::from_entries(spec.clone(), ProfileKind::SentenceSet, entries)
}
