//! Conditional distributions over candidates and seeded epoch sampling.
//!
//! Targets are visited uniformly: by default every unique target once per
//! epoch, in a shuffled order derived from `(seed, epoch)`. For each target
//! one candidate is drawn from
//!
//! ```text
//! Q(x | y) = exp(sim(x) / tau) / Σ_x' exp(sim(x') / tau)
//! ```
//!
//! or, in deterministic mode, the first candidate of maximal similarity is
//! taken. Each draw uses its own ChaCha8 stream keyed by
//! `(seed, epoch, lane, index)`, so any single group can be replayed without
//! replaying the others.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LanguageId, MultiParallelCorpus};
use crate::format::{format_score, write_preamble, Dump, Header, ParseError, Provenance};
use crate::similarity::{SimilarityMeasure, SimilarityTable};

/// Temperature grid searched for the stochastic sampler.
pub const TAU_GRID: [f64; 3] = [0.01, 0.02, 0.1];

const LANE_DRAW: u64 = 0;
const LANE_ORDER: u64 = 1;
const LANE_IID: u64 = 2;

/// Tolerance when re-reading probabilities written at 9 decimals.
const DUMP_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("temperature must be positive for stochastic sampling, got {0} (use deterministic mode for tau = 0)")]
    InvalidTau(f64),
    #[error("no similarity score for candidate `{lang}` line {line_no}")]
    MissingScore { lang: LanguageId, line_no: u32 },
    #[error("non-finite similarity score for candidate `{lang}` line {line_no}")]
    NonFiniteScore { lang: LanguageId, line_no: u32 },
    #[error("plan has {plan} groups but the corpus has {corpus}")]
    PlanMismatch { plan: usize, corpus: usize },
    #[error("unknown {what} `{value}`")]
    UnknownVariant { what: &'static str, value: String },
    #[error("plan: {0}")]
    Format(#[from] ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    Deterministic,
    Stochastic,
}

impl fmt::Display for SampleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleMode::Deterministic => "deterministic",
            SampleMode::Stochastic => "stochastic",
        })
    }
}

impl FromStr for SampleMode {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(Self::Deterministic),
            "stochastic" => Ok(Self::Stochastic),
            _ => Err(SamplerError::UnknownVariant {
                what: "mode",
                value: s.into(),
            }),
        }
    }
}

/// How targets are visited within an epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetOrder {
    /// Every unique target exactly once, shuffled.
    #[default]
    Sweep,
    /// As many i.i.d. uniform draws (with replacement) as there are targets.
    Iid,
}

impl fmt::Display for TargetOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetOrder::Sweep => "sweep",
            TargetOrder::Iid => "iid",
        })
    }
}

impl FromStr for TargetOrder {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sweep" => Ok(Self::Sweep),
            "iid" => Ok(Self::Iid),
            _ => Err(SamplerError::UnknownVariant {
                what: "target order",
                value: s.into(),
            }),
        }
    }
}

/// Temperature softmax with max-subtraction.
pub fn softmax_conditional(sims: &[f64], tau: f64) -> Result<Vec<f64>, SamplerError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SamplerError::InvalidTau(tau));
    }
    let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = sims.iter().map(|&s| ((s - max) / tau).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Index of the first maximal score.
///
/// # Panics
///
/// If `sims` is empty.
pub fn argmax_conditional(sims: &[f64]) -> usize {
    assert!(!sims.is_empty(), "argmax of an empty group");
    let mut best = 0;
    for (i, &s) in sims.iter().enumerate().skip(1) {
        if s > sims[best] {
            best = i;
        }
    }
    best
}

pub fn entropy(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CandidateRef {
    /// Index into the plan's language list.
    pub lang: usize,
    pub line_no: u32,
}

/// `Q(X | y)` for one target group, aligned with its candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDistribution {
    pub candidates: Vec<CandidateRef>,
    pub probs: Vec<f64>,
}

impl ConditionalDistribution {
    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    /// Inverse-CDF lookup of `u` in `[0, 1)`.
    pub fn draw(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    fn one_hot(&self) -> Option<usize> {
        let mut hot = None;
        for (i, &p) in self.probs.iter().enumerate() {
            if p == 1.0 && hot.is_none() {
                hot = Some(i);
            } else if p != 0.0 {
                return None;
            }
        }
        hot
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    /// Ignored in deterministic mode.
    pub tau: f64,
    pub mode: SampleMode,
    pub seed: u64,
    pub target_order: TargetOrder,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            tau: 0.1,
            mode: SampleMode::Stochastic,
            seed: 0,
            target_order: TargetOrder::Sweep,
        }
    }
}

/// Precomputed `Q(X | y)` for every target group plus the sampling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub measure: SimilarityMeasure,
    /// Zero in deterministic mode.
    pub tau: f64,
    pub mode: SampleMode,
    pub seed: u64,
    pub target_order: TargetOrder,
    pub languages: Vec<LanguageId>,
    /// Indexed like the corpus groups.
    pub distributions: Vec<ConditionalDistribution>,
}

pub fn build_plan(
    corpus: &MultiParallelCorpus,
    table: &SimilarityTable,
    options: &PlanOptions,
) -> Result<SamplingPlan, SamplerError> {
    let tau = match options.mode {
        SampleMode::Deterministic => 0.0,
        SampleMode::Stochastic => {
            if !(options.tau > 0.0 && options.tau.is_finite()) {
                return Err(SamplerError::InvalidTau(options.tau));
            }
            options.tau
        }
    };
    let distributions = corpus
        .groups()
        .par_iter()
        .map(|group| {
            let mut sims = Vec::with_capacity(group.candidates.len());
            let mut refs = Vec::with_capacity(group.candidates.len());
            for c in &group.candidates {
                let lang = corpus.language(c.lang);
                let score =
                    table
                        .score(lang, c.line_no)
                        .ok_or_else(|| SamplerError::MissingScore {
                            lang: lang.clone(),
                            line_no: c.line_no,
                        })?;
                if !score.is_finite() {
                    return Err(SamplerError::NonFiniteScore {
                        lang: lang.clone(),
                        line_no: c.line_no,
                    });
                }
                sims.push(score);
                refs.push(CandidateRef {
                    lang: c.lang,
                    line_no: c.line_no,
                });
            }
            let probs = match options.mode {
                SampleMode::Stochastic => softmax_conditional(&sims, tau)?,
                SampleMode::Deterministic => {
                    let mut p = vec![0.0; sims.len()];
                    p[argmax_conditional(&sims)] = 1.0;
                    p
                }
            };
            Ok(ConditionalDistribution {
                candidates: refs,
                probs,
            })
        })
        .collect::<Result<Vec<_>, SamplerError>>()?;
    Ok(SamplingPlan {
        measure: table.measure(),
        tau,
        mode: options.mode,
        seed: options.seed,
        target_order: options.target_order,
        languages: corpus.languages().to_vec(),
        distributions,
    })
}

fn stream(seed: u64, epoch: u64, lane: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(&lane.to_le_bytes());
    key[24..].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// One drawn `(group, candidate)` pair, resolved against the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectedPair<'c> {
    pub group: usize,
    pub candidate: usize,
    pub target: &'c str,
    pub lang: &'c LanguageId,
    pub source: &'c str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection<'c> {
    pub epoch: u64,
    pub records: Vec<SelectedPair<'c>>,
}

impl SamplingPlan {
    pub fn group_count(&self) -> usize {
        self.distributions.len()
    }

    /// The order in which groups are visited in `epoch`.
    pub fn target_sequence(&self, epoch: u64) -> Vec<usize> {
        let n = self.distributions.len();
        match self.target_order {
            TargetOrder::Sweep => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut stream(self.seed, epoch, LANE_ORDER, 0));
                order
            }
            TargetOrder::Iid => {
                if n == 0 {
                    return Vec::new();
                }
                let mut rng = stream(self.seed, epoch, LANE_IID, 0);
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            }
        }
    }

    /// Draws the candidate for one visit. `slot` is the group index in sweep
    /// mode and the visit position in iid mode.
    pub fn draw(&self, group: usize, epoch: u64, slot: u64) -> usize {
        let dist = &self.distributions[group];
        if let Some(i) = dist.one_hot() {
            return i;
        }
        let u: f64 = stream(self.seed, epoch, LANE_DRAW, slot).gen();
        dist.draw(u)
    }

    /// `(group, candidate)` for every visit of `epoch`, in visit order.
    pub fn sample_epoch_indices(&self, epoch: u64) -> Vec<(usize, usize)> {
        self.target_sequence(epoch)
            .into_iter()
            .enumerate()
            .map(|(pos, g)| {
                let slot = match self.target_order {
                    TargetOrder::Sweep => g as u64,
                    TargetOrder::Iid => pos as u64,
                };
                (g, self.draw(g, epoch, slot))
            })
            .collect()
    }

    /// Samples one epoch against the corpus the plan was built from.
    pub fn sample_epoch<'c>(
        &self,
        corpus: &'c MultiParallelCorpus,
        epoch: u64,
    ) -> Result<Selection<'c>, SamplerError> {
        let groups = corpus.groups();
        if groups.len() != self.distributions.len() {
            return Err(SamplerError::PlanMismatch {
                plan: self.distributions.len(),
                corpus: groups.len(),
            });
        }
        let records = self
            .sample_epoch_indices(epoch)
            .into_iter()
            .map(|(g, c)| {
                let group = &groups[g];
                let cand = &group.candidates[c];
                SelectedPair {
                    group: g,
                    candidate: c,
                    target: &group.target,
                    lang: corpus.language(cand.lang),
                    source: &cand.source,
                }
            })
            .collect();
        Ok(Selection { epoch, records })
    }

    /// Header plus one row per group:
    /// `group<TAB>lang:line:prob<TAB>lang:line:prob...`.
    pub fn to_dump(&self, provenance: Option<&Provenance>) -> String {
        let langs: Vec<&str> = self.languages.iter().map(|l| l.as_str()).collect();
        let header = Header::new("tcs-plan", 1)
            .with("measure", self.measure)
            .with("mode", self.mode)
            .with("tau", self.tau)
            .with("seed", self.seed)
            .with("target_order", self.target_order)
            .with("languages", langs.join(","))
            .with("groups", self.distributions.len());
        let mut out = String::new();
        write_preamble(&mut out, &header, provenance);
        for (g, dist) in self.distributions.iter().enumerate() {
            out.push_str(&g.to_string());
            for (c, p) in dist.candidates.iter().zip(&dist.probs) {
                out.push('\t');
                out.push_str(self.languages[c.lang].as_str());
                out.push(':');
                out.push_str(&c.line_no.to_string());
                out.push(':');
                out.push_str(&format_score(*p));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self, ParseError> {
        let dump = Dump::parse(text, "tcs-plan", 1)?;
        let h = &dump.header;
        let bad = |key: &str| ParseError::new(1, format!("bad header field `{key}`"));
        let measure: SimilarityMeasure =
            h.require("measure")?.parse().map_err(|_| bad("measure"))?;
        let mode: SampleMode = h.require("mode")?.parse().map_err(|_| bad("mode"))?;
        let target_order: TargetOrder = h
            .require("target_order")?
            .parse()
            .map_err(|_| bad("target_order"))?;
        let tau: f64 = h.require_parsed("tau")?;
        let seed: u64 = h.require_parsed("seed")?;
        let groups: usize = h.require_parsed("groups")?;
        let languages = h
            .require("languages")?
            .split(',')
            .map(LanguageId::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("languages"))?;

        let mut distributions = Vec::with_capacity(groups);
        for &(line_no, line) in &dump.body {
            let err = |m: String| ParseError::new(line_no, m);
            let mut fields = line.split('\t');
            let index: usize = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| err("row must start with a group index".into()))?;
            if index != distributions.len() {
                return Err(err(format!(
                    "expected group {}, found {index}",
                    distributions.len()
                )));
            }
            let mut dist = ConditionalDistribution {
                candidates: Vec::new(),
                probs: Vec::new(),
            };
            for field in fields {
                let mut parts = field.split(':');
                let (Some(code), Some(num), Some(prob), None) =
                    (parts.next(), parts.next(), parts.next(), parts.next())
                else {
                    return Err(err(format!("malformed candidate `{field}`")));
                };
                let lang = languages
                    .iter()
                    .position(|l| l.as_str() == code)
                    .ok_or_else(|| err(format!("unknown language `{code}`")))?;
                let line_ref: u32 = num
                    .parse()
                    .map_err(|_| err(format!("bad line number `{num}`")))?;
                let p: f64 = prob
                    .parse()
                    .ok()
                    .filter(|p: &f64| (0.0..=1.0).contains(p))
                    .ok_or_else(|| err(format!("bad probability `{prob}`")))?;
                dist.candidates.push(CandidateRef {
                    lang,
                    line_no: line_ref,
                });
                dist.probs.push(p);
            }
            if dist.probs.is_empty() {
                return Err(err("group has no candidates".into()));
            }
            let total: f64 = dist.probs.iter().sum();
            if (total - 1.0).abs() > DUMP_SUM_TOLERANCE {
                return Err(err(format!("probabilities sum to {total}, not 1")));
            }
            distributions.push(dist);
        }
        if distributions.len() != groups {
            return Err(ParseError::new(
                dump.end_line(),
                format!(
                    "expected {groups} groups, found {} (truncated file?)",
                    distributions.len()
                ),
            ));
        }
        Ok(Self {
            measure,
            tau,
            mode,
            seed,
            target_order,
            languages,
            distributions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageMass {
    pub lang: String,
    pub candidates: usize,
    /// Expected number of selections per epoch.
    pub expected_mass: f64,
    /// `expected_mass / groups`.
    pub expected_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanStats {
    pub measure: String,
    pub mode: SampleMode,
    pub tau: f64,
    pub seed: u64,
    pub target_order: TargetOrder,
    pub groups: usize,
    pub candidates: usize,
    pub per_language: Vec<LanguageMass>,
    /// Nats.
    pub entropy: EntropyStats,
    /// Group size -> number of groups of that size.
    pub group_size_histogram: BTreeMap<usize, usize>,
}

pub fn plan_stats(plan: &SamplingPlan) -> PlanStats {
    let mut per_language: Vec<LanguageMass> = plan
        .languages
        .iter()
        .map(|l| LanguageMass {
            lang: l.to_string(),
            candidates: 0,
            expected_mass: 0.0,
            expected_share: 0.0,
        })
        .collect();
    let mut histogram = BTreeMap::new();
    let mut entropies = Vec::with_capacity(plan.distributions.len());
    for dist in &plan.distributions {
        for (c, &p) in dist.candidates.iter().zip(&dist.probs) {
            let slot = &mut per_language[c.lang];
            slot.candidates += 1;
            slot.expected_mass += p;
        }
        *histogram.entry(dist.candidates.len()).or_insert(0) += 1;
        entropies.push(dist.entropy());
    }
    let groups = plan.distributions.len();
    for slot in &mut per_language {
        slot.expected_share = if groups == 0 {
            0.0
        } else {
            slot.expected_mass / groups as f64
        };
    }
    let entropy = if entropies.is_empty() {
        EntropyStats {
            mean: 0.0,
            min: 0.0,
            max: 0.0,
        }
    } else {
        EntropyStats {
            mean: entropies.iter().sum::<f64>() / entropies.len() as f64,
            min: entropies.iter().copied().fold(f64::INFINITY, f64::min),
            max: entropies.iter().copied().fold(0.0, f64::max),
        }
    };
    PlanStats {
        measure: plan.measure.to_string(),
        mode: plan.mode,
        tau: plan.tau,
        seed: plan.seed,
        target_order: plan.target_order,
        groups,
        candidates: per_language.iter().map(|l| l.candidates).sum(),
        per_language,
        entropy,
        group_size_histogram: histogram,
    }
}

impl fmt::Display for PlanStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "measure       {}", self.measure)?;
        writeln!(f, "mode          {}", self.mode)?;
        writeln!(f, "tau           {}", self.tau)?;
        writeln!(f, "seed          {}", self.seed)?;
        writeln!(f, "target order  {}", self.target_order)?;
        writeln!(f, "groups        {}", self.groups)?;
        writeln!(f, "candidates    {}", self.candidates)?;
        writeln!(
            f,
            "entropy (nats) mean {:.6} min {:.6} max {:.6}",
            self.entropy.mean, self.entropy.min, self.entropy.max
        )?;
        writeln!(f, "lang\tcandidates\texpected_mass\tshare")?;
        for l in &self.per_language {
            writeln!(
                f,
                "{}\t{}\t{:.6}\t{:.6}",
                l.lang, l.candidates, l.expected_mass, l.expected_share
            )?;
        }
        writeln!(f, "group_size\tgroups")?;
        for (size, count) in &self.group_size_histogram {
            writeln!(f, "{size}\t{count}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_index, SentencePair};
    use crate::similarity::TableRow;
    use proptest::prelude::*;

    fn lang(s: &str) -> LanguageId {
        LanguageId::new(s).unwrap()
    }

    /// Two languages sharing `n` targets, plus one target only in `hrl`.
    fn toy(n: usize) -> MultiParallelCorpus {
        let mk = |l: &str, prefix: &str, count: usize| {
            (0..count)
                .map(|i| SentencePair {
                    lang: lang(l),
                    source: format!("{prefix}{i}"),
                    target: format!("t{i}"),
                    line_no: i as u32 + 1,
                })
                .collect::<Vec<_>>()
        };
        build_index(
            vec![
                (lang("lrl"), mk("lrl", "s", n)),
                (lang("hrl"), mk("hrl", "h", n + 1)),
            ],
            &lang("lrl"),
        )
        .unwrap()
        .0
    }

    fn lang_table(scores: &[(&str, f64)]) -> SimilarityTable {
        SimilarityTable::new(
            SimilarityMeasure::VOCAB_LANG,
            scores
                .iter()
                .map(|(l, s)| TableRow {
                    lang: lang(l),
                    line_no: None,
                    score: *s,
                })
                .collect(),
        )
    }

    fn stochastic(tau: f64, seed: u64) -> PlanOptions {
        PlanOptions {
            tau,
            mode: SampleMode::Stochastic,
            seed,
            target_order: TargetOrder::Sweep,
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(
            softmax_conditional(&[0.5, 0.5], 0.3).unwrap(),
            vec![0.5, 0.5]
        );
        assert_eq!(softmax_conditional(&[1.0], 0.01).unwrap(), vec![1.0]);
        let p = softmax_conditional(&[0.5, 0.3], 0.1).unwrap();
        let e = (-2f64).exp();
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((p[0] - 0.8808).abs() < 1e-4 && (p[1] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn softmax_rejects_bad_tau() {
        assert!(softmax_conditional(&[1.0], 0.0).is_err());
        assert!(softmax_conditional(&[1.0], -1.0).is_err());
        assert!(softmax_conditional(&[1.0], f64::NAN).is_err());
    }

    #[test]
    fn softmax_survives_extreme_scales() {
        let p = softmax_conditional(&[1000.0, 0.0], 1e-3).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_conditional(&[0.1, 0.9]), 1);
        assert_eq!(argmax_conditional(&[0.5, 0.5]), 0);
        assert_eq!(argmax_conditional(&[0.3, 0.7, 0.7]), 1);
    }

    #[test]
    fn deterministic_plan_is_one_hot() {
        let c = toy(5);
        let table = lang_table(&[("lrl", 1.0), ("hrl", 0.6)]);
        let options = PlanOptions {
            mode: SampleMode::Deterministic,
            ..stochastic(0.5, 3)
        };
        let plan = build_plan(&c, &table, &options).unwrap();
        assert_eq!(plan.tau, 0.0);
        for dist in &plan.distributions {
            assert_eq!(dist.probs.iter().filter(|&&p| p == 1.0).count(), 1);
            assert_eq!(dist.probs.iter().sum::<f64>(), 1.0);
        }
        for epoch in 0..3 {
            for (g, cand) in plan.sample_epoch_indices(epoch) {
                assert_eq!(cand, 0, "group {g}");
            }
        }
        let stats = plan_stats(&plan);
        assert_eq!(stats.entropy.mean, 0.0);
    }

    #[test]
    fn toy_plan_probabilities() {
        let c = toy(4);
        let table = lang_table(&[("lrl", 1.0), ("hrl", 0.6)]);
        let plan = build_plan(&c, &table, &stochastic(0.1, 0)).unwrap();
        // 1 / (1 + e^-4)
        let hi = 1.0 / (1.0 + (-4f64).exp());
        for dist in &plan.distributions[..4] {
            assert!((dist.probs[0] - 0.9820).abs() < 1e-4);
            assert!((dist.probs[0] - hi).abs() < 1e-12);
        }
        assert_eq!(plan.distributions[4].probs, vec![1.0]);

        let stats = plan_stats(&plan);
        let lrl_mass = 4.0 * hi;
        let hrl_mass = 4.0 * (1.0 - hi) + 1.0;
        assert!((stats.per_language[0].expected_mass - lrl_mass).abs() < 1e-12);
        assert!((stats.per_language[1].expected_mass - hrl_mass).abs() < 1e-12);
        assert_eq!(stats.group_size_histogram, BTreeMap::from([(1, 1), (2, 4)]));
    }

    #[test]
    fn uniform_two_way_entropy() {
        let c = toy(3);
        let plan = build_plan(
            &c,
            &lang_table(&[("lrl", 0.4), ("hrl", 0.4)]),
            &stochastic(0.1, 0),
        )
        .unwrap();
        let multi: Vec<f64> = plan.distributions[..3]
            .iter()
            .map(|d| d.entropy())
            .collect();
        for h in multi {
            assert!((h - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_score_names_candidate() {
        let c = toy(2);
        let err = build_plan(&c, &lang_table(&[("lrl", 1.0)]), &stochastic(0.1, 0)).unwrap_err();
        assert_eq!(
            err.to_string(),
            "no similarity score for candidate `hrl` line 1"
        );
        let err = build_plan(
            &c,
            &lang_table(&[("lrl", 1.0), ("hrl", 0.5)]),
            &stochastic(0.0, 0),
        )
        .unwrap_err();
        assert!(matches!(err, SamplerError::InvalidTau(_)));
    }

    #[test]
    fn sweep_visits_every_target_once() {
        let c = toy(30);
        let plan = build_plan(
            &c,
            &lang_table(&[("lrl", 0.5), ("hrl", 0.45)]),
            &stochastic(0.1, 9),
        )
        .unwrap();
        for epoch in 0..5 {
            let mut seen: Vec<usize> = plan.target_sequence(epoch);
            seen.sort_unstable();
            assert_eq!(seen, (0..31).collect::<Vec<_>>());
        }
        assert_ne!(plan.target_sequence(0), plan.target_sequence(1));
        let sel = plan.sample_epoch(&c, 0).unwrap();
        assert_eq!(sel.records.len(), 31);
        assert_eq!(sel, plan.sample_epoch(&c, 0).unwrap());
    }

    #[test]
    fn iid_order_draws_with_replacement() {
        let c = toy(30);
        let options = PlanOptions {
            target_order: TargetOrder::Iid,
            ..stochastic(0.1, 1)
        };
        let plan = build_plan(&c, &lang_table(&[("lrl", 0.5), ("hrl", 0.45)]), &options).unwrap();
        let seq = plan.target_sequence(0);
        assert_eq!(seq.len(), 31);
        let mut distinct = seq.clone();
        distinct.sort_unstable();
        distinct.dedup();
        assert!(distinct.len() < 31);
        assert_eq!(plan.sample_epoch_indices(2), plan.sample_epoch_indices(2));
    }

    #[test]
    fn plan_mismatch_is_reported() {
        let plan = build_plan(
            &toy(2),
            &lang_table(&[("lrl", 1.0), ("hrl", 0.1)]),
            &stochastic(0.1, 0),
        )
        .unwrap();
        assert!(matches!(
            plan.sample_epoch(&toy(3), 0),
            Err(SamplerError::PlanMismatch { plan: 3, corpus: 4 })
        ));
    }

    #[test]
    fn plan_dump_round_trip() {
        let c = toy(3);
        let plan = build_plan(
            &c,
            &lang_table(&[("lrl", 1.0), ("hrl", 0.6)]),
            &stochastic(0.1, 77),
        )
        .unwrap();
        let text = plan.to_dump(None);
        assert!(text.starts_with(
            "#tcs-plan v1 measure=vocab-lang mode=stochastic tau=0.1 seed=77 target_order=sweep languages=lrl,hrl groups=4\n"
        ));
        assert!(text.contains("0\tlrl:1:0.982013790\thrl:1:0.017986210\n"));
        let back = SamplingPlan::from_dump(&text).unwrap();
        assert_eq!(back.distributions.len(), 4);
        assert_eq!(back.seed, 77);
        assert_eq!(back.to_dump(None), text);

        let cut = text.find("\thrl:2:").unwrap();
        let err = SamplingPlan::from_dump(&text[..cut]).unwrap_err();
        assert_eq!(err.line, 3, "{err}");
        let short: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        let err = SamplingPlan::from_dump(&short).unwrap_err();
        assert!(err.message.contains("expected 4 groups"), "{err}");
    }

    #[test]
    fn draw_handles_rounding_tail() {
        let d = ConditionalDistribution {
            candidates: vec![
                CandidateRef {
                    lang: 0,
                    line_no: 1
                };
                3
            ],
            probs: vec![0.5, 0.5 - 1e-12, 0.0],
        };
        assert_eq!(d.draw(0.999_999_999_999_9), 1);
        assert_eq!(d.draw(0.0), 0);
    }

    fn sims_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 1..20)
    }

    proptest! {
        #[test]
        fn softmax_normalizes(sims in sims_strategy(), tau in prop::sample::select(TAU_GRID.to_vec())) {
            let p = softmax_conditional(&sims, tau).unwrap();
            prop_assert_eq!(p.len(), sims.len());
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn softmax_shift_invariant(sims in sims_strategy(), shift in -1.0f64..1.0, tau in prop::sample::select(TAU_GRID.to_vec())) {
            let a = softmax_conditional(&sims, tau).unwrap();
            let shifted: Vec<f64> = sims.iter().map(|s| s + shift).collect();
            let b = softmax_conditional(&shifted, tau).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn raising_one_score_raises_its_probability(sims in prop::collection::vec(0.0f64..1.0, 2..20), bump in 0.01f64..0.5, pick in any::<prop::sample::Index>()) {
            let i = pick.index(sims.len());
            let before = softmax_conditional(&sims, 0.1).unwrap();
            let mut raised = sims.clone();
            raised[i] += bump;
            let after = softmax_conditional(&raised, 0.1).unwrap();
            prop_assert!(after[i] > before[i] || before[i] == 1.0);
        }

        #[test]
        fn entropy_grows_with_tau(sims in sims_strategy()) {
            let mut last = 0.0;
            for tau in [0.005, 0.01, 0.02, 0.05, 0.1, 0.5, 1.0] {
                let h = entropy(&softmax_conditional(&sims, tau).unwrap());
                prop_assert!(h >= last, "tau {tau}: {h} < {last}");
                last = h;
            }
        }
    }
}
