use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tcs_core::corpus::{build_index, ingest_pair_files, ingest_tsv, MultiParallelCorpus};
use tcs_core::format::{write_preamble, Header, Provenance};
use tcs_core::sampler::{build_plan, plan_stats, PlanStats, SampleMode, SamplingPlan, TAU_GRID};
use tcs_core::similarity::{build_similarity_table, SimKind, SimResources, SimilarityTable};

use crate::config::{InputLayout, OutputFormat, RunConfig};
use crate::error::CliError;

pub const INDEX_FILE: &str = "corpus.index";
pub const INDEX_REPORT_FILE: &str = "index.report";
pub const TABLE_FILE: &str = "similarity.tsv";
pub const LM_FILE: &str = "charlm.txt";
pub const PLAN_FILE: &str = "plan.txt";
pub const STATS_JSON_FILE: &str = "stats.json";
pub const STATS_TEXT_FILE: &str = "stats.txt";
pub const SELECTION_FILE: &str = "selection.tsv";
pub const SELECTION_META_FILE: &str = "selection.meta";

/// Progress goes to stderr; `quiet` silences it.
#[derive(Debug, Clone, Copy)]
pub struct Reporter {
    pub quiet: bool,
}

impl Reporter {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn provenance(command: &str, cfg: &RunConfig) -> Provenance {
    Provenance::new(command, &cfg.config_hash())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn profile_file(lang: &str) -> String {
    format!("profile.{lang}.txt")
}

/// Ingests the configured inputs and builds the candidate index.
pub fn load_corpus(cfg: &RunConfig) -> Result<(MultiParallelCorpus, String), CliError> {
    cfg.check_inputs()?;
    let policy = cfg.normalization();
    let ingested = match &cfg.input {
        InputLayout::Files(files) => files
            .iter()
            .map(|f| {
                Ok((
                    f.lang.clone(),
                    ingest_pair_files(&f.lang, &f.source, &f.target, &policy)?,
                ))
            })
            .collect::<Result<Vec<_>, CliError>>()?,
        InputLayout::Tsv { path, languages } => ingest_tsv(path, languages, &policy)?,
    };
    let mut skips = Vec::with_capacity(ingested.len());
    let mut pairs = Vec::with_capacity(ingested.len());
    for (lang, ing) in ingested {
        skips.push((lang.clone(), ing.skipped));
        pairs.push((lang, ing.pairs));
    }
    let (corpus, mut report) = build_index(pairs, &cfg.lrl)?;
    let mut skip_lines = String::new();
    for (lang, skipped) in &skips {
        report.record_skips(lang, skipped.len());
        for s in skipped {
            let _ = writeln!(skip_lines, "skip\t{}\t{}\t{:?}", s.lang, s.line_no, s.side);
        }
    }
    let mut text = report.to_string();
    text.push_str(&skip_lines);
    Ok((corpus, text))
}

pub fn cmd_index(cfg: &RunConfig, rep: Reporter) -> Result<(), CliError> {
    let (corpus, report) = load_corpus(cfg)?;
    let prov = provenance("index", cfg);
    write_file(&cfg.out_dir.join(INDEX_FILE), &corpus.to_dump(Some(&prov)))?;

    let mut out = String::new();
    write_preamble(&mut out, &Header::new("index-report", 1), Some(&prov));
    out.push_str(&report);
    write_file(&cfg.out_dir.join(INDEX_REPORT_FILE), &out)?;
    if !rep.quiet {
        print!("{report}");
    }
    rep.note(format!(
        "indexed {} groups, {} candidates into {}",
        corpus.groups().len(),
        corpus.candidate_count(),
        cfg.out_dir.display()
    ));
    Ok(())
}

fn load_index(cfg: &RunConfig) -> Result<MultiParallelCorpus, CliError> {
    let path = cfg.out_dir.join(INDEX_FILE);
    let text = read_file(&path)?;
    let corpus = MultiParallelCorpus::from_dump(&text).map_err(|e| CliError::parse(&path, e))?;
    if corpus.lrl() != &cfg.lrl {
        return Err(CliError::Validation(format!(
            "{}: index was built for lrl `{}`, config says `{}`",
            path.display(),
            corpus.lrl(),
            cfg.lrl
        )));
    }
    Ok(corpus)
}

pub fn cmd_sim(cfg: &RunConfig, rep: Reporter) -> Result<(), CliError> {
    let corpus = load_index(cfg)?;
    let resources = SimResources::prepare(&corpus, cfg.measure, &cfg.similarity())?;
    for w in &resources.warnings {
        rep.note(format!("warning: {w}"));
    }
    let table = build_similarity_table(&corpus, cfg.measure, &resources)?;
    let prov = provenance("sim", cfg);
    match cfg.measure.kind {
        SimKind::Vocab => {
            for lang in corpus.languages() {
                if let Some(profile) = resources.profiles.get(lang) {
                    let path = cfg.out_dir.join(profile_file(lang.as_str()));
                    write_file(&path, &profile.to_dump(lang, Some(&prov)))?;
                }
            }
        }
        SimKind::Lm => {
            if let Some(lm) = &resources.lm {
                write_file(&cfg.out_dir.join(LM_FILE), &lm.to_dump(Some(&prov)))?;
            }
        }
        SimKind::External => {}
    }
    write_file(&cfg.out_dir.join(TABLE_FILE), &table.to_dump(Some(&prov)))?;
    rep.note(format!(
        "{} table with {} rows written to {}",
        cfg.measure,
        table.rows().len(),
        cfg.out_dir.display()
    ));
    Ok(())
}

fn load_table(cfg: &RunConfig, path: &Path) -> Result<SimilarityTable, CliError> {
    let text = read_file(path)?;
    let table = SimilarityTable::from_dump(&text).map_err(|e| CliError::parse(path, e))?;
    let external = table.measure().kind == SimKind::External;
    if !external && table.measure() != cfg.measure {
        return Err(CliError::Validation(format!(
            "{}: table measure `{}` does not match configured measure `{}`",
            path.display(),
            table.measure(),
            cfg.measure
        )));
    }
    Ok(table)
}

#[derive(Debug, Clone, Default)]
pub struct SelectArgs {
    /// Table to read instead of `<out>/similarity.tsv`; any `external-*`
    /// table is accepted regardless of the configured measure.
    pub table: Option<PathBuf>,
    pub sweep_tau: bool,
}

pub fn cmd_select(cfg: &RunConfig, args: &SelectArgs, rep: Reporter) -> Result<(), CliError> {
    let corpus = load_index(cfg)?;
    let table_path = args
        .table
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join(TABLE_FILE));
    let table = load_table(cfg, &table_path)?;
    let prov = provenance("select", cfg);

    if args.sweep_tau {
        if cfg.mode == SampleMode::Deterministic {
            return Err(CliError::Validation(
                "--sweep-tau needs stochastic mode".into(),
            ));
        }
        for tau in TAU_GRID {
            let dir = cfg.out_dir.join(format!("tau-{tau}"));
            select_into(cfg, &corpus, &table, tau, &dir, &prov, rep)?;
        }
    } else {
        select_into(cfg, &corpus, &table, cfg.tau, &cfg.out_dir, &prov, rep)?;
    }
    Ok(())
}

fn select_into(
    cfg: &RunConfig,
    corpus: &MultiParallelCorpus,
    table: &SimilarityTable,
    tau: f64,
    dir: &Path,
    prov: &Provenance,
    rep: Reporter,
) -> Result<(), CliError> {
    let plan = build_plan(corpus, table, &cfg.plan_options(tau))?;
    write_file(&dir.join(PLAN_FILE), &plan.to_dump(Some(prov)))?;
    let stats = plan_stats(&plan);
    write_file(&dir.join(STATS_JSON_FILE), &stats_json(&stats, Some(prov)))?;
    write_file(&dir.join(STATS_TEXT_FILE), &stats_text(&stats, Some(prov)))?;
    write_selections(cfg, corpus, &plan, dir, prov)?;
    rep.note(format!(
        "{} epoch(s) over {} groups ({} mode, tau {}) written to {}",
        cfg.epochs,
        plan.group_count(),
        plan.mode,
        plan.tau,
        dir.display()
    ));
    Ok(())
}

fn selection_header(cfg: &RunConfig, plan: &SamplingPlan) -> Header {
    Header::new("selection", 1)
        .with("measure", plan.measure)
        .with("mode", plan.mode)
        .with("tau", plan.tau)
        .with("seed", plan.seed)
        .with("target_order", plan.target_order)
        .with("epochs", cfg.epochs)
        .with("groups", plan.group_count())
}

fn write_selections(
    cfg: &RunConfig,
    corpus: &MultiParallelCorpus,
    plan: &SamplingPlan,
    dir: &Path,
    prov: &Provenance,
) -> Result<(), CliError> {
    let header = selection_header(cfg, plan);
    match cfg.format {
        OutputFormat::Tsv => {
            let mut out = String::new();
            write_preamble(&mut out, &header, Some(prov));
            out.push_str("epoch\tlang\tsource\ttarget\n");
            for epoch in 0..cfg.epochs {
                for r in plan.sample_epoch(corpus, epoch)?.records {
                    let _ = writeln!(out, "{epoch}\t{}\t{}\t{}", r.lang, r.source, r.target);
                }
            }
            write_file(&dir.join(SELECTION_FILE), &out)
        }
        OutputFormat::Parallel => {
            let mut meta = String::new();
            write_preamble(&mut meta, &header, Some(prov));
            for epoch in 0..cfg.epochs {
                let (mut src, mut tgt, mut lang) = (String::new(), String::new(), String::new());
                for r in plan.sample_epoch(corpus, epoch)?.records {
                    src.push_str(r.source);
                    src.push('\n');
                    tgt.push_str(r.target);
                    tgt.push('\n');
                    lang.push_str(r.lang.as_str());
                    lang.push('\n');
                }
                write_file(&dir.join(format!("epoch{epoch}.src")), &src)?;
                write_file(&dir.join(format!("epoch{epoch}.tgt")), &tgt)?;
                write_file(&dir.join(format!("epoch{epoch}.lang")), &lang)?;
                let _ = writeln!(meta, "epoch{epoch}\t{}", plan.group_count());
            }
            write_file(&dir.join(SELECTION_META_FILE), &meta)
        }
    }
}

/// `{"format": "tcs-stats v1", "producer": {...}, "stats": {...}}`.
pub fn stats_json(stats: &PlanStats, prov: Option<&Provenance>) -> String {
    let producer =
        prov.map(|p| serde_json::json!({ "command": p.command, "config_hash": p.config_hash }));
    let doc = serde_json::json!({
        "format": "tcs-stats v1",
        "producer": producer,
        "stats": stats,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("stats serialize");
    s.push('\n');
    s
}

pub fn stats_text(stats: &PlanStats, prov: Option<&Provenance>) -> String {
    let mut out = String::new();
    write_preamble(&mut out, &Header::new("tcs-stats", 1), prov);
    out.push_str(&stats.to_string());
    out
}

/// Reads a plan dump and renders its statistics.
pub fn cmd_stats(plan_path: &Path, json: bool) -> Result<String, CliError> {
    let text = read_file(plan_path)?;
    let plan = SamplingPlan::from_dump(&text).map_err(|e| CliError::parse(plan_path, e))?;
    let stats = plan_stats(&plan);
    Ok(if json {
        stats_json(&stats, None)
    } else {
        stats.to_string()
    })
}
