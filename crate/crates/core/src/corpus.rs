//! Ingestion of line-aligned parallel files and the target-keyed index.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::format::{write_preamble, Dump, Header, ParseError, Provenance};

pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid language id {0:?}: expected a non-empty code of letters, digits, `-` or `_`")]
    InvalidLanguageId(String),
    #[error("duplicate language id `{0}`")]
    DuplicateLanguage(LanguageId),
    #[error("no languages given")]
    NoLanguages,
    #[error("low-resource language `{0}` is not among the corpus languages")]
    LrlMissing(LanguageId),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: invalid UTF-8", path.display())]
    Encoding { path: PathBuf, line: usize },
    #[error(
        "line count mismatch {source_lines} vs {target_lines} for `{lang}` ({} / {})",
        source_path.display(),
        target_path.display()
    )]
    LineCountMismatch {
        lang: LanguageId,
        source_path: PathBuf,
        target_path: PathBuf,
        source_lines: usize,
        target_lines: usize,
    },
    #[error("{}:{line}: {message}", path.display())]
    Tsv {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("index: {0}")]
    Format(#[from] ParseError),
}

/// Short language code such as `aze` or `tur`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LanguageId(String);

impl LanguageId {
    pub fn new(code: &str) -> Result<Self, CorpusError> {
        let valid = !code.is_empty()
            && code
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if valid {
            Ok(Self(code.to_string()))
        } else {
            Err(CorpusError::InvalidLanguageId(code.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for LanguageId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for LanguageId {
    type Error = CorpusError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<LanguageId> for String {
    fn from(id: LanguageId) -> Self {
        id.0
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationPolicy {
    pub lowercase: bool,
}

/// NFC, trims, collapses whitespace runs to one space. Case is kept unless
/// the policy asks for lowercasing.
pub fn normalize_text(raw: &str, policy: &NormalizationPolicy) -> String {
    let nfc: String = raw.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    for word in nfc.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    if policy.lowercase {
        out = out.to_lowercase();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub lang: LanguageId,
    pub source: String,
    pub target: String,
    /// 1-based line in the input file.
    pub line_no: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
    Both,
}

/// A pair dropped because one side was empty after normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkipRecord {
    pub lang: LanguageId,
    pub line_no: u32,
    pub side: Side,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub pairs: Vec<SentencePair>,
    pub skipped: Vec<SkipRecord>,
}

impl Ingested {
    fn push(&mut self, lang: &LanguageId, line_no: usize, source: String, target: String) {
        let line_no = line_no as u32;
        let side = match (source.is_empty(), target.is_empty()) {
            (false, false) => {
                self.pairs.push(SentencePair {
                    lang: lang.clone(),
                    source,
                    target,
                    line_no,
                });
                return;
            }
            (true, false) => Side::Source,
            (false, true) => Side::Target,
            (true, true) => Side::Both,
        };
        self.skipped.push(SkipRecord {
            lang: lang.clone(),
            line_no,
            side,
        });
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = Vec::new();
    if bytes.is_empty() {
        return Ok(lines);
    }
    let body = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
    for (i, raw) in body.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| CorpusError::Encoding {
            path: path.to_path_buf(),
            line: i + 1,
        })?;
        lines.push(line.to_string());
    }
    Ok(lines)
}

/// Reads one `<lang>.src` / `<lang>.tgt` pair of line-aligned files.
pub fn ingest_pair_files(
    lang: &LanguageId,
    source_path: &Path,
    target_path: &Path,
    policy: &NormalizationPolicy,
) -> Result<Ingested, CorpusError> {
    let sources = read_lines(source_path)?;
    let targets = read_lines(target_path)?;
    if sources.len() != targets.len() {
        return Err(CorpusError::LineCountMismatch {
            lang: lang.clone(),
            source_path: source_path.to_path_buf(),
            target_path: target_path.to_path_buf(),
            source_lines: sources.len(),
            target_lines: targets.len(),
        });
    }
    let mut out = Ingested::default();
    for (i, (src, tgt)) in sources.iter().zip(&targets).enumerate() {
        out.push(
            lang,
            i + 1,
            normalize_text(src, policy),
            normalize_text(tgt, policy),
        );
    }
    Ok(out)
}

/// Reads a single `lang<TAB>source<TAB>target` file. Results come back in
/// the order of `languages`; a row naming any other language is an error.
pub fn ingest_tsv(
    path: &Path,
    languages: &[LanguageId],
    policy: &NormalizationPolicy,
) -> Result<Vec<(LanguageId, Ingested)>, CorpusError> {
    let mut out: Vec<(LanguageId, Ingested)> = languages
        .iter()
        .map(|l| (l.clone(), Ingested::default()))
        .collect();
    let slot: FxHashMap<&str, usize> = languages
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let tsv_err = |line: usize, message: String| CorpusError::Tsv {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(tsv_err(
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let &idx = slot.get(fields[0]).ok_or_else(|| {
            tsv_err(
                line_no,
                format!("language `{}` is not configured", fields[0]),
            )
        })?;
        let (lang, ingested) = &mut out[idx];
        ingested.push(
            lang,
            line_no,
            normalize_text(fields[1], policy),
            normalize_text(fields[2], policy),
        );
    }
    Ok(out)
}

/// One source sentence that translates into a group's target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    /// Index into [`MultiParallelCorpus::languages`].
    pub lang: usize,
    pub line_no: u32,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetGroup {
    pub target: String,
    /// Ordered by language, then line number.
    pub candidates: Vec<Candidate>,
}

/// Per-language ingestion and indexing counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LanguageReport {
    pub lang: String,
    pub pairs: usize,
    pub skipped: usize,
    pub deduplicated: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IndexReport {
    pub languages: Vec<LanguageReport>,
    pub groups: usize,
    pub warnings: Vec<String>,
}

impl IndexReport {
    pub fn record_skips(&mut self, lang: &LanguageId, skipped: usize) {
        if let Some(r) = self.languages.iter_mut().find(|r| r.lang == lang.as_str()) {
            r.skipped += skipped;
        }
    }
}

impl fmt::Display for IndexReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lang\tpairs\tskipped\tdeduplicated\tcandidates")?;
        for r in &self.languages {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t{}",
                r.lang, r.pairs, r.skipped, r.deduplicated, r.candidates
            )?;
        }
        writeln!(f, "groups\t{}", self.groups)?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Target-keyed index over every language's parallel data. Immutable once
/// built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiParallelCorpus {
    languages: Vec<LanguageId>,
    lrl: usize,
    groups: Vec<TargetGroup>,
    per_language_counts: Vec<usize>,
}

/// Groups pairs by exact normalized target. Groups are numbered by first
/// appearance (language order, then line number); an exact repeat of a
/// `(lang, source, target)` triple is dropped and counted in the report.
pub fn build_index(
    pairs_by_language: Vec<(LanguageId, Vec<SentencePair>)>,
    lrl: &LanguageId,
) -> Result<(MultiParallelCorpus, IndexReport), CorpusError> {
    if pairs_by_language.is_empty() {
        return Err(CorpusError::NoLanguages);
    }
    let mut languages: Vec<LanguageId> = Vec::with_capacity(pairs_by_language.len());
    for (lang, _) in &pairs_by_language {
        if languages.contains(lang) {
            return Err(CorpusError::DuplicateLanguage(lang.clone()));
        }
        languages.push(lang.clone());
    }
    let lrl_idx = languages
        .iter()
        .position(|l| l == lrl)
        .ok_or_else(|| CorpusError::LrlMissing(lrl.clone()))?;

    let mut report = IndexReport {
        languages: languages
            .iter()
            .map(|l| LanguageReport {
                lang: l.to_string(),
                ..Default::default()
            })
            .collect(),
        ..Default::default()
    };
    let mut groups: Vec<TargetGroup> = Vec::new();
    let mut by_target: FxHashMap<String, usize> = FxHashMap::default();
    let mut seen: FxHashSet<(usize, usize, String)> = FxHashSet::default();
    let mut counts = vec![0usize; languages.len()];

    for (lang_idx, (_, mut pairs)) in pairs_by_language.into_iter().enumerate() {
        pairs.sort_by_key(|p| p.line_no);
        let lang_report = &mut report.languages[lang_idx];
        lang_report.pairs = pairs.len();
        for pair in pairs {
            let group_idx = match by_target.get(&pair.target) {
                Some(&g) => g,
                None => {
                    let g = groups.len();
                    by_target.insert(pair.target.clone(), g);
                    groups.push(TargetGroup {
                        target: pair.target,
                        candidates: Vec::new(),
                    });
                    g
                }
            };
            if !seen.insert((group_idx, lang_idx, pair.source.clone())) {
                lang_report.deduplicated += 1;
                continue;
            }
            groups[group_idx].candidates.push(Candidate {
                lang: lang_idx,
                line_no: pair.line_no,
                source: pair.source,
            });
            counts[lang_idx] += 1;
        }
        lang_report.candidates = counts[lang_idx];
    }
    report.groups = groups.len();
    if counts[lrl_idx] == 0 {
        report.warnings.push(format!(
            "low-resource language `{lrl}` has no sentence pairs"
        ));
    }
    let corpus = MultiParallelCorpus {
        languages,
        lrl: lrl_idx,
        groups,
        per_language_counts: counts,
    };
    Ok((corpus, report))
}

impl MultiParallelCorpus {
    pub fn languages(&self) -> &[LanguageId] {
        &self.languages
    }

    pub fn language(&self, idx: usize) -> &LanguageId {
        &self.languages[idx]
    }

    pub fn language_index(&self, lang: &str) -> Option<usize> {
        self.languages.iter().position(|l| l.as_str() == lang)
    }

    pub fn lrl(&self) -> &LanguageId {
        &self.languages[self.lrl]
    }

    pub fn lrl_index(&self) -> usize {
        self.lrl
    }

    pub fn groups(&self) -> &[TargetGroup] {
        &self.groups
    }

    /// Candidate count per language, in language order.
    pub fn per_language_counts(&self) -> &[usize] {
        &self.per_language_counts
    }

    pub fn candidate_count(&self) -> usize {
        self.per_language_counts.iter().sum()
    }

    /// Every source sentence of one language, in group order.
    pub fn source_side(&self, lang: usize) -> impl Iterator<Item = &str> + '_ {
        self.groups.iter().flat_map(move |g| {
            g.candidates
                .iter()
                .filter(move |c| c.lang == lang)
                .map(|c| c.source.as_str())
        })
    }

    /// Source sentences grouped by language in one pass.
    pub fn source_sides(&self) -> Vec<Vec<&str>> {
        let mut sides: Vec<Vec<&str>> = self
            .per_language_counts
            .iter()
            .map(|&n| Vec::with_capacity(n))
            .collect();
        for g in &self.groups {
            for c in &g.candidates {
                sides[c.lang].push(c.source.as_str());
            }
        }
        sides
    }

    pub fn to_dump(&self, provenance: Option<&Provenance>) -> String {
        let langs: Vec<&str> = self.languages.iter().map(|l| l.as_str()).collect();
        let header = Header::new("tcs-index", 1)
            .with("format_version", INDEX_FORMAT_VERSION)
            .with("lrl", self.lrl())
            .with("languages", langs.join(","))
            .with("groups", self.groups.len())
            .with("candidates", self.candidate_count());
        let mut out = String::new();
        write_preamble(&mut out, &header, provenance);
        for g in &self.groups {
            out.push_str("T\t");
            out.push_str(&g.target);
            out.push('\n');
            for c in &g.candidates {
                out.push_str("C\t");
                out.push_str(self.languages[c.lang].as_str());
                out.push('\t');
                out.push_str(&c.line_no.to_string());
                out.push('\t');
                out.push_str(&c.source);
                out.push('\n');
            }
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self, ParseError> {
        let dump = Dump::parse(text, "tcs-index", 1)?;
        let h = &dump.header;
        let version: u32 = h.require_parsed("format_version")?;
        if version != INDEX_FORMAT_VERSION {
            return Err(ParseError::new(
                1,
                format!("unsupported index format_version {version}"),
            ));
        }
        let mut languages = Vec::new();
        for code in h.require("languages")?.split(',') {
            let id = LanguageId::new(code).map_err(|e| ParseError::new(1, e.to_string()))?;
            if languages.contains(&id) {
                return Err(ParseError::new(1, format!("duplicate language `{id}`")));
            }
            languages.push(id);
        }
        let lrl_code = h.require("lrl")?;
        let lrl = languages
            .iter()
            .position(|l| l.as_str() == lrl_code)
            .ok_or_else(|| ParseError::new(1, format!("lrl `{lrl_code}` not among languages")))?;
        let expected_groups: usize = h.require_parsed("groups")?;

        let mut groups: Vec<TargetGroup> = Vec::with_capacity(expected_groups);
        let mut counts = vec![0usize; languages.len()];
        let mut targets: FxHashSet<&str> = FxHashSet::default();
        let mut sources: FxHashSet<(usize, &str)> = FxHashSet::default();
        let mut group_start = 0;
        for &(line_no, line) in &dump.body {
            let err = |m: String| ParseError::new(line_no, m);
            if let Some(target) = line.strip_prefix("T\t") {
                if let Some(prev) = groups.last() {
                    if prev.candidates.is_empty() {
                        return Err(ParseError::new(group_start, "group has no candidates"));
                    }
                }
                if target.is_empty() || !targets.insert(target) {
                    return Err(err(format!("empty or duplicate target {target:?}")));
                }
                sources.clear();
                group_start = line_no;
                groups.push(TargetGroup {
                    target: target.to_string(),
                    candidates: Vec::new(),
                });
            } else if let Some(rest) = line.strip_prefix("C\t") {
                let mut fields = rest.splitn(3, '\t');
                let (Some(code), Some(num), Some(source)) =
                    (fields.next(), fields.next(), fields.next())
                else {
                    return Err(err("candidate row needs lang, line_no and source".into()));
                };
                let lang = languages
                    .iter()
                    .position(|l| l.as_str() == code)
                    .ok_or_else(|| err(format!("unknown language `{code}`")))?;
                let line_ref: u32 = num
                    .parse()
                    .map_err(|_| err(format!("bad line number `{num}`")))?;
                let group = groups
                    .last_mut()
                    .ok_or_else(|| err("candidate row before any target row".into()))?;
                if let Some(prev) = group.candidates.last() {
                    if (prev.lang, prev.line_no) >= (lang, line_ref) {
                        return Err(err("candidates out of language/line order".into()));
                    }
                }
                if source.is_empty() || !sources.insert((lang, source)) {
                    return Err(err(format!("empty or duplicate source {source:?}")));
                }
                group.candidates.push(Candidate {
                    lang,
                    line_no: line_ref,
                    source: source.to_string(),
                });
                counts[lang] += 1;
            } else {
                return Err(err(format!("unrecognized row {line:?}")));
            }
        }
        if let Some(last) = groups.last() {
            if last.candidates.is_empty() {
                return Err(ParseError::new(group_start, "group has no candidates"));
            }
        }
        if groups.len() != expected_groups {
            return Err(ParseError::new(
                dump.end_line(),
                format!(
                    "expected {expected_groups} groups, found {} (truncated file?)",
                    groups.len()
                ),
            ));
        }
        Ok(Self {
            languages,
            lrl,
            groups,
            per_language_counts: counts,
        })
    }
}
