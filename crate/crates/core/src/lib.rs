//! Target-conditioned sampling over multi-parallel corpora.
//!
//! Given parallel data from several source languages into one shared target
//! language, and a designated low-resource source language (the LRL), the
//! crate builds a sampling distribution that picks each unique target
//! sentence uniformly and then picks one of its source-side translations with
//! probability proportional to `exp(sim(x, lrl) / tau)`.
//!
//! The pipeline is:
//!
//! 1. [`corpus`]: ingest line-aligned files and index candidates by target.
//! 2. [`ngram`] / [`lm`]: build the LRL statistics a similarity measure needs.
//! 3. [`similarity`]: score every candidate (per language or per sentence).
//! 4. [`sampler`]: turn scores into per-target distributions and draw epochs.
//!
//! [`format`] holds the line-based text dumps shared by every artifact.

pub mod corpus;
pub mod format;
pub mod lm;
pub mod ngram;
pub mod sampler;
pub mod similarity;

pub use corpus::{
    build_index, ingest_pair_files, ingest_tsv, normalize_text, Candidate, CorpusError,
    IndexReport, Ingested, LanguageId, MultiParallelCorpus, NormalizationPolicy, SentencePair,
    SkipRecord, TargetGroup,
};
pub use format::{ParseError, Provenance};
pub use lm::{train_char_lm, CharLm, LmError, NllScore};
pub use ngram::{
    build_language_profile, build_sentence_profile, extract_ngrams, NgramError, NgramProfile,
    NgramSpec, ProfileKind,
};
pub use sampler::{
    argmax_conditional, build_plan, plan_stats, softmax_conditional, ConditionalDistribution,
    PlanOptions, PlanStats, SampleMode, SamplerError, SamplingPlan, Selection, TargetOrder,
};
pub use similarity::{
    build_similarity_table, sim_lm_lang, sim_lm_sent, sim_vocab_lang, sim_vocab_sent, Granularity,
    SimKind, SimResources, SimilarityConfig, SimilarityError, SimilarityMeasure, SimilarityTable,
    TableRow,
};
