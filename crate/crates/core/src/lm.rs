//! Add-k smoothed character n-gram language model.
//!
//! Each sentence is wrapped as `BOS^(m-1) c_1 .. c_n EOS` and every symbol
//! after the padding is counted against its `m-1` preceding symbols. The
//! predictable vocabulary is the set of training characters plus `EOS` and a
//! single `UNK`; `BOS` only ever appears in contexts. With `V` that vocabulary,
//!
//! ```text
//! P(c | ctx) = (count(ctx, c) + alpha) / (count(ctx) + alpha * |V|)
//! ```
//!
//! so every context, seen or not, carries a proper distribution with no zero
//! entries. All log quantities are natural logs.

use std::collections::BTreeSet;
use std::fmt;

use rustc_hash::FxHashMap;
use serde::Serialize;
use thiserror::Error;

use crate::format::{write_preamble, Dump, Header, ParseError, Provenance};

pub const DEFAULT_ORDER: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.01;

const BOS: u32 = 0;
const EOS: u32 = 1;
const UNK: u32 = 2;
const FIRST_CHAR: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmError {
    #[error("language model needs at least one non-empty training sentence")]
    EmptyTrainingSet,
    #[error("language model order must be >= 1, got {0}")]
    InvalidOrder(usize),
    #[error("smoothing constant must be positive and finite, got {0}")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Bos,
    Eos,
    Unk,
    Char(char),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Bos => f.write_str("<s>"),
            Symbol::Eos => f.write_str("</s>"),
            Symbol::Unk => f.write_str("<unk>"),
            Symbol::Char(' ') => f.write_str("\\s"),
            Symbol::Char('\\') => f.write_str("\\\\"),
            Symbol::Char(c) => write!(f, "{c}"),
        }
    }
}

impl Symbol {
    fn parse(token: &str) -> Option<Self> {
        match token {
            "<s>" => Some(Symbol::Bos),
            "</s>" => Some(Symbol::Eos),
            "<unk>" => Some(Symbol::Unk),
            "\\s" => Some(Symbol::Char(' ')),
            "\\\\" => Some(Symbol::Char('\\')),
            _ => {
                let mut chars = token.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Some(Symbol::Char(c)),
                    _ => None,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: FxHashMap<u32, u64>,
}

/// Negative log likelihood of one sentence, EOS included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NllScore {
    pub total_nll: f64,
    pub char_count: usize,
}

impl NllScore {
    pub fn per_char_nll(&self) -> f64 {
        self.total_nll / self.char_count as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharLm {
    order: usize,
    alpha: f64,
    /// Sorted; character `chars[i]` has id `FIRST_CHAR + i`.
    chars: Vec<char>,
    char_ids: FxHashMap<char, u32>,
    contexts: FxHashMap<Vec<u32>, ContextCounts>,
}

pub fn train_char_lm<'a, I>(sentences: I, order: usize, alpha: f64) -> Result<CharLm, LmError>
where
    I: IntoIterator<Item = &'a str>,
{
    if order == 0 {
        return Err(LmError::InvalidOrder(order));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(LmError::InvalidAlpha(alpha));
    }
    let sentences: Vec<&str> = sentences.into_iter().collect();
    if sentences.iter().all(|s| s.is_empty()) {
        return Err(LmError::EmptyTrainingSet);
    }
    let charset: BTreeSet<char> = sentences.iter().flat_map(|s| s.chars()).collect();
    let mut lm = CharLm::with_chars(order, alpha, charset.into_iter().collect());
    let mut seq = Vec::new();
    for sentence in sentences {
        lm.encode_into(sentence, &mut seq);
        let width = order - 1;
        for j in width..seq.len() {
            let entry = lm.contexts.entry(seq[j - width..j].to_vec()).or_default();
            entry.total += 1;
            *entry.next.entry(seq[j]).or_insert(0) += 1;
        }
    }
    Ok(lm)
}

impl CharLm {
    fn with_chars(order: usize, alpha: f64, chars: Vec<char>) -> Self {
        let char_ids = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, FIRST_CHAR + i as u32))
            .collect();
        Self {
            order,
            alpha,
            chars,
            char_ids,
            contexts: FxHashMap::default(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `|V|`: training characters plus EOS and UNK.
    pub fn vocab_size(&self) -> usize {
        self.chars.len() + 2
    }

    /// Every symbol the model can predict.
    pub fn vocab(&self) -> impl Iterator<Item = Symbol> + '_ {
        [Symbol::Eos, Symbol::Unk]
            .into_iter()
            .chain(self.chars.iter().map(|&c| Symbol::Char(c)))
    }

    /// Contexts seen in training.
    pub fn contexts(&self) -> Vec<Vec<Symbol>> {
        let mut keys: Vec<&Vec<u32>> = self.contexts.keys().collect();
        keys.sort();
        keys.into_iter()
            .map(|k| k.iter().map(|&id| self.symbol(id)).collect())
            .collect()
    }

    fn symbol(&self, id: u32) -> Symbol {
        match id {
            BOS => Symbol::Bos,
            EOS => Symbol::Eos,
            UNK => Symbol::Unk,
            _ => Symbol::Char(self.chars[(id - FIRST_CHAR) as usize]),
        }
    }

    fn id(&self, symbol: Symbol) -> u32 {
        match symbol {
            Symbol::Bos => BOS,
            Symbol::Eos => EOS,
            Symbol::Unk => UNK,
            Symbol::Char(c) => self.char_ids.get(&c).copied().unwrap_or(UNK),
        }
    }

    fn encode_into(&self, sentence: &str, seq: &mut Vec<u32>) {
        seq.clear();
        seq.extend(std::iter::repeat_n(BOS, self.order - 1));
        seq.extend(
            sentence
                .chars()
                .map(|c| self.char_ids.get(&c).copied().unwrap_or(UNK)),
        );
        seq.push(EOS);
    }

    fn prob_ids(&self, context: &[u32], next: u32) -> f64 {
        let v = self.vocab_size() as f64;
        let (count, total) = match self.contexts.get(context) {
            Some(c) => (c.next.get(&next).copied().unwrap_or(0), c.total),
            None => (0, 0),
        };
        (count as f64 + self.alpha) / (total as f64 + self.alpha * v)
    }

    /// `P(next | context)`. Unknown characters are read as UNK; the context
    /// must hold exactly `order - 1` symbols.
    pub fn prob(&self, context: &[Symbol], next: Symbol) -> f64 {
        assert_eq!(
            context.len(),
            self.order - 1,
            "context length must be order - 1"
        );
        let ctx: Vec<u32> = context.iter().map(|&s| self.id(s)).collect();
        self.prob_ids(&ctx, self.id(next))
    }

    pub fn score_nll(&self, sentence: &str) -> NllScore {
        let mut seq = Vec::new();
        self.encode_into(sentence, &mut seq);
        let width = self.order - 1;
        let total_nll: f64 = (width..seq.len())
            .map(|j| -self.prob_ids(&seq[j - width..j], seq[j]).ln())
            .sum();
        NllScore {
            total_nll,
            char_count: seq.len() - width,
        }
    }

    /// `#charlm v1 order=<m> alpha=<a>` followed by
    /// `context<TAB>char<TAB>count` rows. Context symbols are space-separated;
    /// a literal space is written `\s` and a backslash `\\`.
    pub fn to_dump(&self, provenance: Option<&Provenance>) -> String {
        let header = Header::new("charlm", 1)
            .with("order", self.order)
            .with("alpha", self.alpha);
        let mut out = String::new();
        write_preamble(&mut out, &header, provenance);
        let mut rows: Vec<(&Vec<u32>, u32, u64)> = self
            .contexts
            .iter()
            .flat_map(|(ctx, c)| c.next.iter().map(move |(&sym, &n)| (ctx, sym, n)))
            .collect();
        rows.sort_unstable();
        for (ctx, sym, n) in rows {
            let rendered: Vec<String> = ctx.iter().map(|&id| self.symbol(id).to_string()).collect();
            out.push_str(&rendered.join(" "));
            out.push('\t');
            out.push_str(&self.symbol(sym).to_string());
            out.push('\t');
            out.push_str(&n.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self, ParseError> {
        let dump = Dump::parse(text, "charlm", 1)?;
        let order: usize = dump.header.require_parsed("order")?;
        let alpha: f64 = dump.header.require_parsed("alpha")?;
        if order == 0 || !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ParseError::new(1, "order must be >= 1 and alpha > 0"));
        }
        let mut rows: Vec<(usize, Vec<Symbol>, Symbol, u64)> = Vec::new();
        for &(line_no, line) in &dump.body {
            let err = |m: &str| ParseError::new(line_no, m);
            let mut fields = line.split('\t');
            let (Some(ctx), Some(sym), Some(n), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(err("expected context<TAB>char<TAB>count"));
            };
            let context = if ctx.is_empty() {
                Vec::new()
            } else {
                ctx.split(' ')
                    .map(Symbol::parse)
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| err("bad context symbol"))?
            };
            if context.len() != order - 1 {
                return Err(err("context length does not match order"));
            }
            let next = Symbol::parse(sym).ok_or_else(|| err("bad symbol"))?;
            if matches!(next, Symbol::Bos | Symbol::Unk) {
                return Err(err("BOS and UNK are never counted as predictions"));
            }
            let n: u64 = n.parse().map_err(|_| err("bad count"))?;
            rows.push((line_no, context, next, n));
        }
        let chars: BTreeSet<char> = rows
            .iter()
            .filter_map(|(_, _, s, _)| match s {
                Symbol::Char(c) => Some(*c),
                _ => None,
            })
            .collect();
        let mut lm = CharLm::with_chars(order, alpha, chars.into_iter().collect());
        for (line_no, context, next, n) in rows {
            let mut ctx = Vec::with_capacity(context.len());
            for s in context {
                let id = lm.id(s);
                if id == UNK && s != Symbol::Unk {
                    return Err(ParseError::new(
                        line_no,
                        "context character never predicted",
                    ));
                }
                ctx.push(id);
            }
            let next = lm.id(next);
            let entry = lm.contexts.entry(ctx).or_default();
            entry.total += n;
            *entry.next.entry(next).or_insert(0) += n;
        }
        Ok(lm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unigram_limit_matches_counts() {
        // counts a:2 EOS:1
        let lm = train_char_lm(["aa"], 1, 1e-6).unwrap();
        assert!((lm.prob(&[], Symbol::Char('a')) - 2.0 / 3.0).abs() < 1e-4);
        assert!((lm.prob(&[], Symbol::Eos) - 1.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn add_one_unigram() {
        let lm = train_char_lm(["a"], 1, 1.0).unwrap();
        assert_eq!(lm.vocab_size(), 3);
        assert!((lm.prob(&[], Symbol::Char('a')) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn distributions_normalize() {
        let lm = train_char_lm(["abca", "bb a", "cab"], 3, 0.5).unwrap();
        let mut contexts = lm.contexts();
        contexts.push(vec![Symbol::Char('z'), Symbol::Unk]);
        for ctx in contexts {
            let total: f64 = lm.vocab().map(|s| lm.prob(&ctx, s)).sum();
            assert!((total - 1.0).abs() < 1e-9, "{ctx:?}: {total}");
        }
    }

    #[test]
    fn score_examples() {
        let lm = train_char_lm(["a"], 1, 1e-6).unwrap();
        let s = lm.score_nll("a");
        assert_eq!(s.char_count, 2);
        assert!((s.total_nll - 2.0 * 2f64.ln()).abs() < 1e-3);

        let empty = lm.score_nll("");
        assert_eq!(empty.char_count, 1);
        assert!((empty.total_nll + lm.prob(&[], Symbol::Eos).ln()).abs() < 1e-15);
    }

    #[test]
    fn unseen_characters_are_finite() {
        let lm = train_char_lm(["abc"], 3, 0.01).unwrap();
        for s in ["Ж", "日本語", "", " ", "abcabcabc\u{1F600}"] {
            let score = lm.score_nll(s);
            assert!(
                score.total_nll.is_finite() && score.total_nll > 0.0,
                "{s:?}"
            );
        }
    }

    #[test]
    fn invalid_training_inputs() {
        assert_eq!(
            train_char_lm(Vec::<&str>::new(), 2, 0.1),
            Err(LmError::EmptyTrainingSet)
        );
        assert_eq!(train_char_lm([""], 2, 0.1), Err(LmError::EmptyTrainingSet));
        assert_eq!(train_char_lm(["a"], 0, 0.1), Err(LmError::InvalidOrder(0)));
        assert!(matches!(
            train_char_lm(["a"], 1, 0.0),
            Err(LmError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn dump_round_trip() {
        let lm = train_char_lm(["a b\\c", "<s> x"], 3, 0.01).unwrap();
        let text = lm.to_dump(None);
        assert!(text.starts_with("#charlm v1 order=3 alpha=0.01\n"));
        let back = CharLm::from_dump(&text).unwrap();
        assert_eq!(back, lm);
        assert_eq!(back.to_dump(None), text);
    }
}
