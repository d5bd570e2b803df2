//! Similarity of candidate source sentences to the low-resource language.
//!
//! Two measures, each at two granularities:
//!
//! * **vocab**: overlap between the LRL's top-k character n-grams and the
//!   top-k grams of another language (`lang`) or the gram set of one
//!   sentence (`sent`), divided by `k`.
//! * **lm**: per-character geometric-mean likelihood under a character LM
//!   trained on the LRL, `exp(-NLL / chars)`, pooled over a whole language
//!   (`lang`) or taken per sentence (`sent`).
//!
//! Language-granularity scores are shared by every sentence of a language.
//!
//! When the table is built from a corpus, the vocab denominator is the size
//! of the LRL profile, which equals `k` whenever the LRL has at least `k`
//! distinct grams. On smaller corpora this keeps the LRL's own score at 1.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LanguageId, MultiParallelCorpus};
use crate::format::{format_score, write_preamble, Dump, Header, ParseError, Provenance};
use crate::lm::{train_char_lm, CharLm, LmError, DEFAULT_ALPHA, DEFAULT_ORDER};
use crate::ngram::{
    build_language_profile, for_each_ngram, NgramError, NgramProfile, NgramSpec, ProfileKind,
};

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("missing {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Ngram(#[from] NgramError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("cannot score an empty corpus side")]
    EmptyCorpusSide,
    #[error("measure `{0}` cannot be computed here; import its scores from a table dump")]
    NotComputable(SimilarityMeasure),
    #[error("unknown similarity measure `{0}` (expected vocab|lm|external - lang|sent)")]
    UnknownMeasure(String),
    #[error("similarity table: {0}")]
    Format(#[from] ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    Vocab,
    Lm,
    /// Scores computed outside this crate and imported from a table dump.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Language,
    Sentence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SimilarityMeasure {
    pub kind: SimKind,
    pub granularity: Granularity,
}

impl SimilarityMeasure {
    pub const VOCAB_LANG: Self = Self::new(SimKind::Vocab, Granularity::Language);
    pub const VOCAB_SENT: Self = Self::new(SimKind::Vocab, Granularity::Sentence);
    pub const LM_LANG: Self = Self::new(SimKind::Lm, Granularity::Language);
    pub const LM_SENT: Self = Self::new(SimKind::Lm, Granularity::Sentence);

    pub const fn new(kind: SimKind, granularity: Granularity) -> Self {
        Self { kind, granularity }
    }
}

impl fmt::Display for SimilarityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            SimKind::Vocab => "vocab",
            SimKind::Lm => "lm",
            SimKind::External => "external",
        };
        let granularity = match self.granularity {
            Granularity::Language => "lang",
            Granularity::Sentence => "sent",
        };
        write!(f, "{kind}-{granularity}")
    }
}

impl FromStr for SimilarityMeasure {
    type Err = SimilarityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || SimilarityError::UnknownMeasure(s.to_string());
        let (kind, granularity) = s.split_once('-').ok_or_else(unknown)?;
        let kind = match kind {
            "vocab" => SimKind::Vocab,
            "lm" => SimKind::Lm,
            "external" => SimKind::External,
            _ => return Err(unknown()),
        };
        let granularity = match granularity {
            "lang" => Granularity::Language,
            "sent" => Granularity::Sentence,
            _ => return Err(unknown()),
        };
        Ok(Self::new(kind, granularity))
    }
}

impl Serialize for SimilarityMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SimilarityMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

fn check_language_profile(p: &NgramProfile) -> Result<(), NgramError> {
    if p.kind() != ProfileKind::LanguageTopK {
        return Err(NgramError::WrongKind {
            expected: ProfileKind::LanguageTopK,
            got: p.kind(),
        });
    }
    Ok(())
}

/// `|grams(s) ∩ grams(s_i)| / k` for two language profiles built with the
/// same spec.
pub fn sim_vocab_lang(
    profile_s: &NgramProfile,
    profile_si: &NgramProfile,
    k: usize,
) -> Result<f64, SimilarityError> {
    check_language_profile(profile_s)?;
    check_language_profile(profile_si)?;
    if profile_s.spec() != profile_si.spec() {
        return Err(NgramError::SpecMismatch(
            profile_s.spec().to_string(),
            profile_si.spec().to_string(),
        )
        .into());
    }
    Ok(profile_s.intersection_size(profile_si) as f64 / k as f64)
}

/// `|grams(s) ∩ grams(sentence)| / k`.
pub fn sim_vocab_sent(profile_s: &NgramProfile, sentence_profile: &NgramProfile, k: usize) -> f64 {
    profile_s.intersection_size(sentence_profile) as f64 / k as f64
}

/// Same count as [`sim_vocab_sent`] without materializing a sentence profile.
fn shared_gram_count(profile_s: &NgramProfile, sentence: &str) -> usize {
    let mut distinct: FxHashSet<&str> = FxHashSet::default();
    for_each_ngram(sentence, profile_s.spec().orders(), |g| {
        if profile_s.contains(g) {
            distinct.insert(g);
        }
    });
    distinct.len()
}

/// Per-character geometric-mean likelihood of a whole corpus side:
/// `exp(-(Σ total_nll) / (Σ char_count))`.
pub fn sim_lm_lang<'a, I>(lm: &CharLm, corpus_side: I) -> Result<f64, SimilarityError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut total = 0.0;
    let mut chars = 0usize;
    let mut any = false;
    for sentence in corpus_side {
        let score = lm.score_nll(sentence);
        total += score.total_nll;
        chars += score.char_count;
        any = true;
    }
    if !any {
        return Err(SimilarityError::EmptyCorpusSide);
    }
    Ok((-total / chars as f64).exp())
}

/// `exp(-per_char_nll)`, or `exp(-total_nll)` with `length_norm = false`.
pub fn sim_lm_sent(lm: &CharLm, sentence: &str, length_norm: bool) -> f64 {
    let score = lm.score_nll(sentence);
    if length_norm {
        (-score.per_char_nll()).exp()
    } else {
        (-score.total_nll).exp()
    }
}

/// Knobs for building the resources a measure needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityConfig {
    pub ngram: NgramSpec,
    pub lm_order: usize,
    pub lm_alpha: f64,
    pub lm_length_norm: bool,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            ngram: NgramSpec::default(),
            lm_order: DEFAULT_ORDER,
            lm_alpha: DEFAULT_ALPHA,
            lm_length_norm: true,
        }
    }
}

/// Profiles and/or the LRL language model behind a table.
#[derive(Debug, Clone, Default)]
pub struct SimResources {
    pub profiles: FxHashMap<LanguageId, NgramProfile>,
    pub lm: Option<CharLm>,
    pub lm_length_norm: bool,
    pub warnings: Vec<String>,
}

impl SimResources {
    /// Builds exactly what `measure` needs from the corpus source sides.
    pub fn prepare(
        corpus: &MultiParallelCorpus,
        measure: SimilarityMeasure,
        config: &SimilarityConfig,
    ) -> Result<Self, SimilarityError> {
        let mut res = SimResources {
            lm_length_norm: config.lm_length_norm,
            ..Default::default()
        };
        let lrl = corpus.lrl_index();
        match measure.kind {
            SimKind::Vocab => {
                let sides = corpus.source_sides();
                let wanted: Vec<usize> = match measure.granularity {
                    Granularity::Language => (0..sides.len()).collect(),
                    Granularity::Sentence => vec![lrl],
                };
                let built: Vec<(usize, NgramProfile)> = wanted
                    .into_par_iter()
                    .map(|i| {
                        (
                            i,
                            build_language_profile(sides[i].iter().copied(), &config.ngram),
                        )
                    })
                    .collect();
                for (i, profile) in built {
                    let lang = corpus.language(i).clone();
                    if profile.is_empty() {
                        res.warnings
                            .push(format!("n-gram profile for `{lang}` is empty"));
                    }
                    res.profiles.insert(lang, profile);
                }
            }
            SimKind::Lm => {
                let lm = train_char_lm(corpus.source_side(lrl), config.lm_order, config.lm_alpha)?;
                res.lm = Some(lm);
            }
            SimKind::External => return Err(SimilarityError::NotComputable(measure)),
        }
        Ok(res)
    }

    fn profile(&self, lang: &LanguageId) -> Result<&NgramProfile, SimilarityError> {
        self.profiles
            .get(lang)
            .ok_or_else(|| SimilarityError::MissingArtifact(format!("n-gram profile for `{lang}`")))
    }

    fn lm(&self) -> Result<&CharLm, SimilarityError> {
        self.lm
            .as_ref()
            .ok_or_else(|| SimilarityError::MissingArtifact("character language model".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub lang: LanguageId,
    /// `None` for language-granularity rows.
    pub line_no: Option<u32>,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SimilarityTable {
    measure: SimilarityMeasure,
    rows: Vec<TableRow>,
    lookup: FxHashMap<(LanguageId, u32), f64>,
}

impl PartialEq for SimilarityTable {
    fn eq(&self, other: &Self) -> bool {
        self.measure == other.measure && self.rows == other.rows
    }
}

impl SimilarityTable {
    /// Rows must match the measure's granularity; duplicates keep the last.
    pub fn new(measure: SimilarityMeasure, rows: Vec<TableRow>) -> Self {
        let lookup = rows
            .iter()
            .map(|r| ((r.lang.clone(), r.line_no.unwrap_or(0)), r.score))
            .collect();
        Self {
            measure,
            rows,
            lookup,
        }
    }

    pub fn measure(&self) -> SimilarityMeasure {
        self.measure
    }

    pub fn rows(&self) -> &[TableRow] {
        &self.rows
    }

    /// Score of the candidate at `(lang, line_no)`. Language tables ignore
    /// the line number.
    pub fn score(&self, lang: &LanguageId, line_no: u32) -> Option<f64> {
        let line = match self.measure.granularity {
            Granularity::Language => 0,
            Granularity::Sentence => line_no,
        };
        self.lookup.get(&(lang.clone(), line)).copied()
    }

    pub fn language_score(&self, lang: &LanguageId) -> Option<f64> {
        match self.measure.granularity {
            Granularity::Language => self.lookup.get(&(lang.clone(), 0)).copied(),
            Granularity::Sentence => None,
        }
    }

    pub fn to_dump(&self, provenance: Option<&Provenance>) -> String {
        let header = Header::new("simtable", 1).with("measure", self.measure);
        let mut out = String::new();
        write_preamble(&mut out, &header, provenance);
        for row in &self.rows {
            out.push_str(row.lang.as_str());
            out.push('\t');
            if let Some(line) = row.line_no {
                out.push_str(&line.to_string());
                out.push('\t');
            }
            out.push_str(&format_score(row.score));
            out.push('\n');
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self, ParseError> {
        let dump = Dump::parse(text, "simtable", 1)?;
        let measure: SimilarityMeasure = dump
            .header
            .require("measure")?
            .parse()
            .map_err(|e: SimilarityError| ParseError::new(1, e.to_string()))?;
        let sentence = measure.granularity == Granularity::Sentence;
        let mut rows = Vec::with_capacity(dump.body.len());
        for &(line_no, line) in &dump.body {
            let err = |m: String| ParseError::new(line_no, m);
            let fields: Vec<&str> = line.split('\t').collect();
            let expected = if sentence { 3 } else { 2 };
            if fields.len() != expected {
                return Err(err(format!("expected {expected} tab-separated fields")));
            }
            let lang = LanguageId::new(fields[0]).map_err(|e| err(e.to_string()))?;
            let row_line = if sentence {
                Some(
                    fields[1]
                        .parse::<u32>()
                        .map_err(|_| err(format!("bad line number `{}`", fields[1])))?,
                )
            } else {
                None
            };
            let raw = fields[expected - 1];
            let score: f64 = raw
                .parse()
                .ok()
                .filter(|s: &f64| s.is_finite())
                .ok_or_else(|| err(format!("bad score `{raw}`")))?;
            rows.push(TableRow {
                lang,
                line_no: row_line,
                score,
            });
        }
        Ok(Self::new(measure, rows))
    }
}

/// Scores every candidate of `corpus` under `measure`. Language rows come in
/// corpus language order (languages without candidates are omitted);
/// sentence rows in language order, then line number.
pub fn build_similarity_table(
    corpus: &MultiParallelCorpus,
    measure: SimilarityMeasure,
    resources: &SimResources,
) -> Result<SimilarityTable, SimilarityError> {
    let present: Vec<usize> = (0..corpus.languages().len())
        .filter(|&i| corpus.per_language_counts()[i] > 0)
        .collect();
    let rows = match (measure.kind, measure.granularity) {
        (SimKind::Vocab, Granularity::Language) => {
            let lrl = resources.profile(corpus.lrl())?;
            let denom = vocab_denominator(lrl);
            let mut rows = Vec::with_capacity(present.len());
            for &i in &present {
                let lang = corpus.language(i);
                let score = sim_vocab_lang(lrl, resources.profile(lang)?, denom)?;
                rows.push(lang_row(lang, score));
            }
            rows
        }
        (SimKind::Vocab, Granularity::Sentence) => {
            let lrl = resources.profile(corpus.lrl())?;
            check_language_profile(lrl)?;
            let denom = vocab_denominator(lrl) as f64;
            sentence_rows(corpus, |sentence| {
                shared_gram_count(lrl, sentence) as f64 / denom
            })
        }
        (SimKind::Lm, Granularity::Language) => {
            let lm = resources.lm()?;
            let sides = corpus.source_sides();
            let scores: Vec<Result<f64, SimilarityError>> = present
                .par_iter()
                .map(|&i| sim_lm_lang(lm, sides[i].iter().copied()))
                .collect();
            present
                .iter()
                .zip(scores)
                .map(|(&i, s)| Ok(lang_row(corpus.language(i), s?)))
                .collect::<Result<Vec<_>, SimilarityError>>()?
        }
        (SimKind::Lm, Granularity::Sentence) => {
            let lm = resources.lm()?;
            let norm = resources.lm_length_norm;
            sentence_rows(corpus, |sentence| sim_lm_sent(lm, sentence, norm))
        }
        (SimKind::External, _) => return Err(SimilarityError::NotComputable(measure)),
    };
    Ok(SimilarityTable::new(measure, rows))
}

/// `k`, or the LRL profile size when the LRL has fewer than `k` grams.
pub fn vocab_denominator(lrl_profile: &NgramProfile) -> usize {
    lrl_profile.len().min(lrl_profile.spec().k()).max(1)
}

fn lang_row(lang: &LanguageId, score: f64) -> TableRow {
    TableRow {
        lang: lang.clone(),
        line_no: None,
        score,
    }
}

fn sentence_rows<F>(corpus: &MultiParallelCorpus, score: F) -> Vec<TableRow>
where
    F: Fn(&str) -> f64 + Sync,
{
    let mut keyed: Vec<(usize, u32, f64)> = corpus
        .groups()
        .par_iter()
        .flat_map_iter(|g| {
            g.candidates
                .iter()
                .map(|c| (c.lang, c.line_no, score(&c.source)))
                .collect::<Vec<_>>()
        })
        .collect();
    keyed.sort_unstable_by_key(|&(lang, line, _)| (lang, line));
    keyed
        .into_iter()
        .map(|(lang, line, score)| TableRow {
            lang: corpus.language(lang).clone(),
            line_no: Some(line),
            score,
        })
        .collect()
}
