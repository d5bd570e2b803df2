//! Line-based text dumps.
//!
//! Every artifact (index, profile, model, table, plan) is a UTF-8 text file
//! whose first line is a versioned header of the form
//! `#<kind> v<N> key=value ...`, optionally followed by a `#producer` line
//! naming the command and config hash that wrote it. Body rows are
//! tab-separated. Normalized text never contains tabs or newlines, so no
//! escaping is needed for sentence fields.

use std::fmt;

use thiserror::Error;

/// Malformed dump, with the 1-based line number of the offending line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// Scores and probabilities are written with a fixed 9-decimal format so
/// golden files are stable.
pub fn format_score(value: f64) -> String {
    format!("{value:.9}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub kind: String,
    pub version: u32,
    pub fields: Vec<(String, String)>,
}

impl Header {
    pub fn new(kind: &str, version: u32) -> Self {
        Self {
            kind: kind.to_string(),
            version,
            fields: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, ParseError> {
        self.get(key)
            .ok_or_else(|| ParseError::new(1, format!("header is missing `{key}=`")))
    }

    pub fn require_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T, ParseError> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| ParseError::new(1, format!("header field `{key}={raw}` is not valid")))
    }

    pub fn parse(line: &str, line_no: usize) -> Result<Self, ParseError> {
        let rest = line
            .strip_prefix('#')
            .ok_or_else(|| ParseError::new(line_no, "expected a `#` header line"))?;
        let mut parts = rest.split(' ').filter(|p| !p.is_empty());
        let kind = parts
            .next()
            .ok_or_else(|| ParseError::new(line_no, "empty header"))?
            .to_string();
        let version = parts
            .next()
            .and_then(|v| v.strip_prefix('v'))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| ParseError::new(line_no, "header is missing a `v<N>` version"))?;
        let mut fields = Vec::new();
        for part in parts {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                ParseError::new(line_no, format!("malformed header field `{part}`"))
            })?;
            fields.push((k.to_string(), v.to_string()));
        }
        Ok(Self {
            kind,
            version,
            fields,
        })
    }
}

impl fmt::Display for Header {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} v{}", self.kind, self.version)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Which command and configuration produced a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(command: &str, config_hash: &str) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
        }
    }

    fn parse(line: &str, line_no: usize) -> Result<Self, ParseError> {
        let header = Header::parse(line, line_no)?;
        let command = header.get("command").unwrap_or_default().to_string();
        let config_hash = header.get("config_hash").unwrap_or_default().to_string();
        Ok(Self {
            command,
            config_hash,
        })
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "#producer v1 command={} config_hash={}",
            self.command, self.config_hash
        )
    }
}

/// Writes the header and the optional producer line.
pub fn write_preamble(out: &mut String, header: &Header, provenance: Option<&Provenance>) {
    out.push_str(&header.to_string());
    out.push('\n');
    if let Some(p) = provenance {
        out.push_str(&p.to_string());
        out.push('\n');
    }
}

/// A dump split into its header and numbered body lines.
#[derive(Debug)]
pub struct Dump<'a> {
    pub header: Header,
    pub provenance: Option<Provenance>,
    /// `(1-based line number, content)`; blank lines are dropped.
    pub body: Vec<(usize, &'a str)>,
}

impl<'a> Dump<'a> {
    pub fn parse(
        text: &'a str,
        expected_kind: &str,
        expected_version: u32,
    ) -> Result<Self, ParseError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (line_no, first) = lines
            .next()
            .ok_or_else(|| ParseError::new(1, "empty file"))?;
        let header = Header::parse(first, line_no)?;
        if header.kind != expected_kind {
            return Err(ParseError::new(
                line_no,
                format!("expected a `{expected_kind}` dump, found `{}`", header.kind),
            ));
        }
        if header.version != expected_version {
            return Err(ParseError::new(
                line_no,
                format!(
                    "unsupported {expected_kind} version v{} (expected v{expected_version})",
                    header.version
                ),
            ));
        }
        let mut provenance = None;
        let mut body = Vec::new();
        for (line_no, line) in lines {
            if line.starts_with("#producer ") {
                provenance = Some(Provenance::parse(line, line_no)?);
            } else if !line.is_empty() {
                body.push((line_no, line));
            }
        }
        Ok(Self {
            header,
            provenance,
            body,
        })
    }

    /// Line number to blame when the body ends early.
    pub fn end_line(&self) -> usize {
        self.body.last().map(|(n, _)| n + 1).unwrap_or(2)
    }
}
