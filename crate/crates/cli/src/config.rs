//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! lrl = "aze"
//! measure = "vocab-lang"
//! mode = "stochastic"
//! tau = 0.1
//! seed = 1
//! epochs = 1
//!
//! [corpus]
//! languages = ["aze", "tur"]
//! dir = "data"          # <dir>/<lang>.src and <dir>/<lang>.tgt
//! # tsv = "pairs.tsv"   # or one lang<TAB>source<TAB>target file
//!
//! [ngram]
//! orders = [1, 2, 3, 4]
//! k = 10000
//!
//! [lm]
//! order = 5
//! alpha = 0.01
//! length_norm = true
//!
//! [output]
//! dir = "out"
//! format = "tsv"        # or "parallel"
//!
//! [flags]
//! lowercase = false
//! iid = false
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tcs_core::corpus::{LanguageId, NormalizationPolicy};
use tcs_core::lm::{DEFAULT_ALPHA, DEFAULT_ORDER};
use tcs_core::ngram::{NgramSpec, DEFAULT_K, DEFAULT_ORDERS};
use tcs_core::sampler::{PlanOptions, SampleMode, TargetOrder};
use tcs_core::similarity::{SimilarityConfig, SimilarityMeasure};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    lrl: String,
    #[serde(default = "default_measure")]
    measure: String,
    #[serde(default = "default_mode")]
    mode: String,
    #[serde(default = "default_tau")]
    tau: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_epochs")]
    epochs: u64,
    corpus: CorpusSection,
    #[serde(default)]
    ngram: NgramSection,
    #[serde(default)]
    lm: LmSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    flags: Flags,
}

fn default_measure() -> String {
    "vocab-lang".into()
}

fn default_mode() -> String {
    "stochastic".into()
}

fn default_tau() -> f64 {
    0.1
}

fn default_epochs() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusSection {
    #[serde(default)]
    languages: Vec<String>,
    dir: Option<PathBuf>,
    tsv: Option<PathBuf>,
    #[serde(default)]
    files: Vec<FileEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEntry {
    lang: String,
    source: PathBuf,
    target: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NgramSection {
    #[serde(default = "default_orders")]
    orders: Vec<usize>,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_orders() -> Vec<usize> {
    DEFAULT_ORDERS.to_vec()
}

fn default_k() -> usize {
    DEFAULT_K
}

impl Default for NgramSection {
    fn default() -> Self {
        Self {
            orders: default_orders(),
            k: default_k(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmSection {
    #[serde(default = "default_lm_order")]
    pub order: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_true")]
    pub length_norm: bool,
}

fn default_lm_order() -> usize {
    DEFAULT_ORDER
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_true() -> bool {
    true
}

impl Default for LmSection {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            alpha: DEFAULT_ALPHA,
            length_norm: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    #[serde(default = "default_out")]
    dir: PathBuf,
    #[serde(default)]
    format: OutputFormat,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out(),
            format: OutputFormat::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// One `selection.tsv` with `epoch<TAB>lang<TAB>source<TAB>target` rows.
    #[default]
    Tsv,
    /// `epoch<N>.src`, `epoch<N>.tgt` and `epoch<N>.lang` per epoch.
    Parallel,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    #[serde(default)]
    pub lowercase: bool,
    #[serde(default)]
    pub iid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageInput {
    pub lang: LanguageId,
    pub source: PathBuf,
    pub target: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputLayout {
    Files(Vec<LanguageInput>),
    Tsv {
        path: PathBuf,
        languages: Vec<LanguageId>,
    },
}

impl InputLayout {
    pub fn languages(&self) -> Vec<LanguageId> {
        match self {
            InputLayout::Files(files) => files.iter().map(|f| f.lang.clone()).collect(),
            InputLayout::Tsv { languages, .. } => languages.clone(),
        }
    }

    fn paths(&self) -> Vec<&Path> {
        match self {
            InputLayout::Files(files) => files
                .iter()
                .flat_map(|f| [f.source.as_path(), f.target.as_path()])
                .collect(),
            InputLayout::Tsv { path, .. } => vec![path.as_path()],
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub measure: Option<String>,
    pub tau: Option<f64>,
    pub mode: Option<String>,
    pub epochs: Option<u64>,
}

/// Validated, fully resolved configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    #[serde(serialize_with = "layout_shape")]
    pub input: InputLayout,
    pub lrl: LanguageId,
    pub measure: SimilarityMeasure,
    pub ngram: NgramSpec,
    pub lm: LmSection,
    pub tau: f64,
    pub mode: SampleMode,
    pub seed: u64,
    pub epochs: u64,
    pub format: OutputFormat,
    pub flags: Flags,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// Only the layout kind and languages: hashes must not depend on where the
/// inputs happen to live.
fn layout_shape<S: serde::Serializer>(input: &InputLayout, s: S) -> Result<S::Ok, S::Error> {
    let kind = match input {
        InputLayout::Files(_) => "files",
        InputLayout::Tsv { .. } => "tsv",
    };
    (kind, input.languages()).serialize(s)
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn lang_id(code: &str) -> Result<LanguageId, CliError> {
    LanguageId::new(code).map_err(|e| invalid(e.to_string()))
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base, overrides)
    }

    pub fn from_toml(text: &str, base: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        let resolve = |p: &Path| -> PathBuf {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };

        let corpus = &file.corpus;
        let layouts = [
            corpus.dir.is_some(),
            corpus.tsv.is_some(),
            !corpus.files.is_empty(),
        ];
        if layouts.iter().filter(|&&x| x).count() != 1 {
            return Err(invalid(
                "config: [corpus] needs exactly one of `dir`, `tsv` or `files`",
            ));
        }
        let mut listed = Vec::new();
        for code in &corpus.languages {
            let id = lang_id(code)?;
            if listed.contains(&id) {
                return Err(invalid(format!("config: language `{id}` listed twice")));
            }
            listed.push(id);
        }
        let input = if let Some(dir) = &corpus.dir {
            if listed.is_empty() {
                return Err(invalid(
                    "config: [corpus] `languages` is required with `dir`",
                ));
            }
            let dir = resolve(dir);
            InputLayout::Files(
                listed
                    .iter()
                    .map(|l| LanguageInput {
                        lang: l.clone(),
                        source: dir.join(format!("{l}.src")),
                        target: dir.join(format!("{l}.tgt")),
                    })
                    .collect(),
            )
        } else if let Some(tsv) = &corpus.tsv {
            if listed.is_empty() {
                return Err(invalid(
                    "config: [corpus] `languages` is required with `tsv`",
                ));
            }
            InputLayout::Tsv {
                path: resolve(tsv),
                languages: listed,
            }
        } else {
            let mut files: Vec<LanguageInput> = Vec::new();
            for f in &corpus.files {
                let lang = lang_id(&f.lang)?;
                if files.iter().any(|x| x.lang == lang) {
                    return Err(invalid(format!("config: language `{lang}` listed twice")));
                }
                files.push(LanguageInput {
                    lang,
                    source: resolve(&f.source),
                    target: resolve(&f.target),
                });
            }
            if !listed.is_empty()
                && listed != files.iter().map(|f| f.lang.clone()).collect::<Vec<_>>()
            {
                return Err(invalid(
                    "config: [corpus] `languages` disagrees with the order of `files`",
                ));
            }
            InputLayout::Files(files)
        };

        let lrl = lang_id(&file.lrl)?;
        if !input.languages().contains(&lrl) {
            return Err(invalid(format!(
                "config: lrl `{lrl}` is not among the corpus languages"
            )));
        }
        let measure_raw = overrides.measure.as_deref().unwrap_or(&file.measure);
        let measure: SimilarityMeasure = measure_raw.parse()?;
        let mode_raw = overrides.mode.as_deref().unwrap_or(&file.mode);
        let mode: SampleMode = mode_raw.parse()?;
        let tau = overrides.tau.unwrap_or(file.tau);
        if mode == SampleMode::Stochastic && !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid(format!(
                "config: stochastic mode needs tau > 0, got {tau}"
            )));
        }
        let epochs = overrides.epochs.unwrap_or(file.epochs);
        if epochs == 0 {
            return Err(invalid("config: epochs must be >= 1"));
        }
        let ngram = NgramSpec::new(file.ngram.orders.iter().copied(), file.ngram.k)?;
        if file.lm.order == 0 || !(file.lm.alpha > 0.0 && file.lm.alpha.is_finite()) {
            return Err(invalid("config: [lm] needs order >= 1 and alpha > 0"));
        }
        let out_dir = overrides
            .out
            .clone()
            .unwrap_or_else(|| resolve(&file.output.dir));
        Ok(Self {
            input,
            lrl,
            measure,
            ngram,
            lm: file.lm,
            tau,
            mode,
            seed: overrides.seed.unwrap_or(file.seed),
            epochs,
            format: file.output.format,
            flags: file.flags,
            out_dir,
        })
    }

    /// Every missing input file, reported together.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let missing: Vec<String> = self
            .input
            .paths()
            .into_iter()
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(invalid(format!(
                "missing input files: {}",
                missing.join(", ")
            )))
        }
    }

    /// First 16 hex digits of the SHA-256 of the resolved configuration.
    /// Input and output locations are excluded so identical runs written to
    /// different places produce identical files.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn normalization(&self) -> NormalizationPolicy {
        NormalizationPolicy {
            lowercase: self.flags.lowercase,
        }
    }

    pub fn similarity(&self) -> SimilarityConfig {
        SimilarityConfig {
            ngram: self.ngram.clone(),
            lm_order: self.lm.order,
            lm_alpha: self.lm.alpha,
            lm_length_norm: self.lm.length_norm,
        }
    }

    pub fn plan_options(&self, tau: f64) -> PlanOptions {
        PlanOptions {
            tau,
            mode: self.mode,
            seed: self.seed,
            target_order: if self.flags.iid {
                TargetOrder::Iid
            } else {
                TargetOrder::Sweep
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
lrl = "aze"
[corpus]
languages = ["aze", "tur"]
dir = "data"
"#;

    #[test]
    fn defaults_follow_the_usual_settings() {
        let cfg = RunConfig::from_toml(MINIMAL, Path::new("/cfg"), &Overrides::default()).unwrap();
        assert_eq!(cfg.ngram.orders(), &[1, 2, 3, 4]);
        assert_eq!(cfg.ngram.k(), 10_000);
        assert_eq!(cfg.lm.order, 5);
        assert_eq!(cfg.lm.alpha, 0.01);
        assert!(cfg.lm.length_norm);
        assert_eq!(cfg.measure, SimilarityMeasure::VOCAB_LANG);
        assert_eq!(cfg.out_dir, Path::new("/cfg/out"));
        let InputLayout::Files(files) = &cfg.input else {
            panic!("expected file layout")
        };
        assert_eq!(files[1].source, Path::new("/cfg/data/tur.src"));
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            seed: Some(9),
            out: Some(PathBuf::from("/elsewhere")),
            measure: Some("lm-sent".into()),
            tau: Some(0.02),
            mode: Some("deterministic".into()),
            epochs: Some(4),
        };
        let cfg = RunConfig::from_toml(MINIMAL, Path::new("/cfg"), &o).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.measure, SimilarityMeasure::LM_SENT);
        assert_eq!(cfg.mode, SampleMode::Deterministic);
        assert_eq!(cfg.epochs, 4);
        assert_eq!(cfg.out_dir, Path::new("/elsewhere"));
    }

    #[test]
    fn hash_ignores_output_dir_but_not_seed() {
        let a = RunConfig::from_toml(MINIMAL, Path::new("/cfg"), &Overrides::default()).unwrap();
        let b = RunConfig::from_toml(
            MINIMAL,
            Path::new("/cfg"),
            &Overrides {
                out: Some("/x".into()),
                ..Default::default()
            },
        )
        .unwrap();
        let c = RunConfig::from_toml(
            MINIMAL,
            Path::new("/cfg"),
            &Overrides {
                seed: Some(5),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 16);
        let moved =
            RunConfig::from_toml(MINIMAL, Path::new("/other"), &Overrides::default()).unwrap();
        assert_eq!(a.config_hash(), moved.config_hash());
    }

    #[test]
    fn validation_errors() {
        let base = Path::new("/cfg");
        let cases = [
            (
                "lrl = \"xxx\"\n[corpus]\nlanguages=[\"aze\"]\ndir=\"d\"",
                "not among",
            ),
            (
                "lrl = \"aze\"\n[corpus]\nlanguages=[\"aze\"]",
                "exactly one",
            ),
            (
                "lrl = \"aze\"\nepochs = 0\n[corpus]\nlanguages=[\"aze\"]\ndir=\"d\"",
                "epochs",
            ),
            (
                "lrl = \"aze\"\ntau = 0.0\n[corpus]\nlanguages=[\"aze\"]\ndir=\"d\"",
                "tau",
            ),
            (
                "lrl = \"aze\"\nmeasure = \"x\"\n[corpus]\nlanguages=[\"aze\"]\ndir=\"d\"",
                "measure",
            ),
            (
                "lrl = \"aze\"\nbogus = 1\n[corpus]\nlanguages=[\"aze\"]\ndir=\"d\"",
                "bogus",
            ),
            (
                "lrl = \"aze\"\n[corpus]\nlanguages=[\"aze\",\"aze\"]\ndir=\"d\"",
                "twice",
            ),
        ];
        for (text, needle) in cases {
            let err = RunConfig::from_toml(text, base, &Overrides::default()).unwrap_err();
            assert_eq!(err.exit_code(), 1);
            assert!(err.to_string().contains(needle), "{needle}: {err}");
        }
    }

    #[test]
    fn explicit_files_and_tsv_layouts() {
        let files = r#"
lrl = "glg"
[corpus]
[[corpus.files]]
lang = "glg"
source = "g.src"
target = "/abs/g.tgt"
[[corpus.files]]
lang = "por"
source = "p.src"
target = "p.tgt"
"#;
        let cfg = RunConfig::from_toml(files, Path::new("/cfg"), &Overrides::default()).unwrap();
        let InputLayout::Files(f) = &cfg.input else {
            panic!("expected file layout")
        };
        assert_eq!(f[0].source, Path::new("/cfg/g.src"));
        assert_eq!(f[0].target, Path::new("/abs/g.tgt"));
        assert_eq!(
            cfg.input.languages(),
            [
                LanguageId::new("glg").unwrap(),
                LanguageId::new("por").unwrap()
            ]
        );

        let tsv = "lrl = \"bel\"\n[corpus]\nlanguages = [\"bel\", \"rus\"]\ntsv = \"x.tsv\"\n";
        let cfg = RunConfig::from_toml(tsv, Path::new("/cfg"), &Overrides::default()).unwrap();
        assert!(
            matches!(&cfg.input, InputLayout::Tsv { path, .. } if path == Path::new("/cfg/x.tsv"))
        );
    }

    #[test]
    fn missing_inputs_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_toml(MINIMAL, dir.path(), &Overrides::default()).unwrap();
        let err = cfg.check_inputs().unwrap_err().to_string();
        for name in ["aze.src", "aze.tgt", "tur.src", "tur.tgt"] {
            assert!(err.contains(name), "{err}");
        }
    }
}
