//! Unified-Diff parsing, generation and fuzzy application.
//!
//! Documents are handled as line sequences. Carriage returns are stripped on
//! ingest and never re-emitted. The text-level helpers ([`diff_texts`],
//! [`apply_to_text`]) additionally track whether the final line carries a
//! newline, using the standard `\ No newline at end of file` marker.

mod apply;
mod generate;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use apply::{apply_patch, apply_to_text, FuzzPolicy, HunkOutcome, PatchReport};
pub use generate::{diff_texts, generate_unified_diff, MODIFIED_LABEL, ORIGINAL_LABEL};
pub use parse::parse_unified_diff;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LineTag {
    Context,
    Remove,
    Add,
}

impl LineTag {
    fn prefix(self) -> char {
        match self {
            LineTag::Context => ' ',
            LineTag::Remove => '-',
            LineTag::Add => '+',
        }
    }

    /// Whether the line exists in the source file.
    pub fn in_source(self) -> bool {
        matches!(self, LineTag::Context | LineTag::Remove)
    }

    /// Whether the line exists in the target file.
    pub fn in_target(self) -> bool {
        matches!(self, LineTag::Context | LineTag::Add)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkLine {
    pub tag: LineTag,
    pub text: String,
}

impl HunkLine {
    pub fn new(tag: LineTag, text: impl Into<String>) -> Self {
        Self {
            tag,
            text: text.into(),
        }
    }
}

/// One contiguous change region.
///
/// Coordinates follow the conventional unified format: 1-based starts, and a
/// zero-length side names the line *after which* the change sits (so an
/// insertion at the top of a file reads `-0,0`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub source_start: usize,
    pub source_len: usize,
    pub target_start: usize,
    pub target_len: usize,
    pub lines: Vec<HunkLine>,
    /// The last source-side line has no trailing newline.
    #[serde(default)]
    pub source_no_eol: bool,
    /// The last target-side line has no trailing newline.
    #[serde(default)]
    pub target_no_eol: bool,
}

impl Hunk {
    /// Zero-based index of the first source line this hunk covers. For a
    /// pure insertion this is the index the new lines are inserted before.
    pub fn source_index(&self) -> usize {
        if self.source_len == 0 {
            self.source_start
        } else {
            self.source_start.saturating_sub(1)
        }
    }

    pub fn source_lines(&self) -> impl Iterator<Item = &HunkLine> {
        self.lines.iter().filter(|l| l.tag.in_source())
    }

    pub fn target_lines(&self) -> impl Iterator<Item = &HunkLine> {
        self.lines.iter().filter(|l| l.tag.in_target())
    }

    pub fn has_change(&self) -> bool {
        self.lines.iter().any(|l| l.tag != LineTag::Context)
    }

    fn header(&self) -> String {
        fn range(start: usize, len: usize) -> String {
            if len == 1 {
                start.to_string()
            } else {
                format!("{start},{len}")
            }
        }
        format!(
            "@@ -{} +{} @@",
            range(self.source_start, self.source_len),
            range(self.target_start, self.target_len)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiffDocument {
    pub source_name: String,
    pub target_name: String,
    pub hunks: Vec<Hunk>,
}

impl DiffDocument {
    pub fn is_empty(&self) -> bool {
        self.hunks.is_empty()
    }

    /// Checks the ordering and line-count invariants.
    pub fn validate(&self) -> Result<(), DiffError> {
        for (i, h) in self.hunks.iter().enumerate() {
            let src = h.source_lines().count();
            let tgt = h.target_lines().count();
            if src != h.source_len || tgt != h.target_len {
                return Err(DiffError::CountMismatch {
                    hunk: i,
                    declared_source: h.source_len,
                    declared_target: h.target_len,
                    found_source: src,
                    found_target: tgt,
                });
            }
            if !h.has_change() {
                return Err(DiffError::EmptyHunk { hunk: i });
            }
        }
        check_ordering(&self.hunks)
            .map_err(|(first, second)| DiffError::OverlappingHunks { first, second })
    }

    /// Number of characters in the serialized form.
    pub fn serialized_len(&self) -> usize {
        self.to_string().chars().count()
    }
}

/// Returns the first pair of hunks whose source ranges overlap or are out of order.
pub(crate) fn check_ordering(hunks: &[Hunk]) -> Result<(), (usize, usize)> {
    for (i, pair) in hunks.windows(2).enumerate() {
        let end = pair[0].source_index() + pair[0].source_len;
        if pair[1].source_index() < end || pair[1].source_index() < pair[0].source_index() {
            return Err((i, i + 1));
        }
        // Two insertions at the same point have no defined order.
        if pair[0].source_len == 0
            && pair[1].source_len == 0
            && pair[0].source_index() == pair[1].source_index()
        {
            return Err((i, i + 1));
        }
    }
    Ok(())
}

const NO_EOL_MARKER: &str = "\\ No newline at end of file";

impl fmt::Display for DiffDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "--- {}", self.source_name)?;
        writeln!(f, "+++ {}", self.target_name)?;
        for hunk in &self.hunks {
            writeln!(f, "{}", hunk.header())?;
            let last_src = hunk.lines.iter().rposition(|l| l.tag.in_source());
            let last_tgt = hunk.lines.iter().rposition(|l| l.tag.in_target());
            for (i, line) in hunk.lines.iter().enumerate() {
                writeln!(f, "{}{}", line.tag.prefix(), line.text)?;
                let src_marker = hunk.source_no_eol && last_src == Some(i);
                let tgt_marker = hunk.target_no_eol && last_tgt == Some(i);
                if src_marker || tgt_marker {
                    writeln!(f, "{NO_EOL_MARKER}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("empty diff text")]
    Empty,
    #[error("malformed header at line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error(
        "hunk {hunk} declares -{declared_source} +{declared_target} lines but contains -{found_source} +{found_target}"
    )]
    CountMismatch {
        hunk: usize,
        declared_source: usize,
        declared_target: usize,
        found_source: usize,
        found_target: usize,
    },
    #[error("unknown line prefix at line {line}: {text:?}")]
    UnknownLinePrefix { line: usize, text: String },
    #[error("hunk {hunk} contains no added or removed lines")]
    EmptyHunk { hunk: usize },
    #[error("hunks {first} and {second} overlap or are out of order")]
    OverlappingHunks { first: usize, second: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PatchError {
    #[error("hunk {hunk_index} could not be anchored (best candidate: {best_candidate:?})")]
    HunkApplicationFailure {
        hunk_index: usize,
        /// Zero-based source position that matched the most lines, if any.
        best_candidate: Option<usize>,
        report: PatchReport,
    },
    #[error("hunks {first} and {second} overlap or are out of order")]
    OverlappingHunks { first: usize, second: usize },
}

/// Splits text into lines, stripping carriage returns. Returns the lines and
/// whether the text ended with a newline. Empty text has no lines.
pub fn split_lines(text: &str) -> (Vec<String>, bool) {
    if text.is_empty() {
        return (Vec::new(), true);
    }
    let trailing = text.ends_with('\n');
    let body = if trailing {
        &text[..text.len() - 1]
    } else {
        text
    };
    let lines = body.split('\n').map(|l| l.replace('\r', "")).collect();
    (lines, trailing)
}

pub fn join_lines<S: AsRef<str>>(lines: &[S], trailing_newline: bool) -> String {
    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(line.as_ref());
    }
    if trailing_newline && !lines.is_empty() {
        out.push('\n');
    }
    out
}

/// Serialized-diff characters divided by full-file characters.
///
/// Characters stand in for model output tokens. An empty `full_modified`
/// yields infinity.
pub fn compression_ratio(diff: &DiffDocument, full_modified: &str) -> f64 {
    let full = full_modified.chars().count();
    if full == 0 {
        return f64::INFINITY;
    }
    diff.serialized_len() as f64 / full as f64
}
