//! CSV and markdown output.
//!
//! Every CSV starts with a `# engram-pool <kind> v<N>` line naming its
//! schema, followed by the column header row. Markdown summaries end with
//! the fully resolved configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::settings::Settings;

pub const SCHEMA_VERSION: u32 = 1;

/// A CSV table under construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Self {
            text: format!(
                "# engram-pool {kind} v{SCHEMA_VERSION}\n{}\n",
                columns.join(",")
            ),
        }
    }

    pub fn row<I, T>(&mut self, fields: I)
    where
        I: IntoIterator<Item = T>,
        T: std::fmt::Display,
    {
        let mut first = true;
        for f in fields {
            if !first {
                self.text.push(',');
            }
            first = false;
            write!(self.text, "{f}").unwrap();
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// What a subcommand produced. `csv` is the primary output; `extra`
/// holds any secondary CSVs keyed by file suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub csv: Csv,
    pub extra: Vec<(&'static str, Csv)>,
    pub markdown: String,
}

impl Report {
    /// Writes `out` (primary CSV), `<stem>.<suffix>.csv` for each extra
    /// table, and `<stem>.md`. Returns the written paths.
    pub fn write(&self, out: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut put = |path: PathBuf, text: &str| -> Result<()> {
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
            Ok(())
        };
        put(out.to_path_buf(), self.csv.as_str())?;
        for (suffix, csv) in &self.extra {
            put(out.with_extension(format!("{suffix}.csv")), csv.as_str())?;
        }
        put(out.with_extension("md"), &self.markdown)?;
        Ok(written)
    }
}

/// Appends the resolved configuration as a TOML block.
pub fn append_config(md: &mut String, settings: &Settings) {
    md.push_str("\n## Resolved configuration\n\n```toml\n");
    md.push_str(&settings.to_toml());
    md.push_str("```\n");
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Integer with thousands separators.
pub fn grouped(v: i128) -> String {
    let digits = v.unsigned_abs().to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    if v < 0 {
        out.insert(0, '-');
    }
    out
}

/// Whole-currency amount, e.g. `-$3,820`.
pub fn dollars(v: f64) -> String {
    let r = v.round() as i128;
    if r < 0 {
        format!("-${}", grouped(-r))
    } else {
        format!("${}", grouped(r))
    }
}

/// Parameter count label, e.g. `100B`.
pub fn params_label(params: f64) -> String {
    if params >= 1e12 && params % 1e12 == 0.0 {
        format!("{}T", params / 1e12)
    } else if params >= 1e9 {
        format!("{}B", params / 1e9)
    } else {
        format!("{}M", params / 1e6)
    }
}
