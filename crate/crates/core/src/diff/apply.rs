use serde::{Deserialize, Serialize};

use super::{
    check_ordering, join_lines, split_lines, DiffDocument, Hunk, HunkLine, LineTag, PatchError,
};

/// How far hunk anchoring may stray from an exact match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzPolicy {
    /// Lines above or below the expected position to search.
    pub max_offset: usize,
    /// Compare lines with whitespace runs collapsed and ends trimmed.
    pub whitespace_normalize: bool,
    /// Context lines per hunk allowed to differ, given enough similarity.
    pub max_mismatched_context_per_hunk: usize,
    /// Minimum normalized edit similarity for a mismatched context line.
    pub line_similarity_threshold: f64,
}

impl Default for FuzzPolicy {
    fn default() -> Self {
        Self {
            max_offset: 20,
            whitespace_normalize: true,
            max_mismatched_context_per_hunk: 1,
            line_similarity_threshold: 0.8,
        }
    }
}

impl FuzzPolicy {
    /// Declared positions only, byte-equal lines only.
    pub fn exact() -> Self {
        Self {
            max_offset: 0,
            whitespace_normalize: false,
            max_mismatched_context_per_hunk: 0,
            line_similarity_threshold: 1.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.line_similarity_threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HunkOutcome {
    pub applied: bool,
    /// Distance between the anchor found and the position expected from the
    /// header plus the drift accumulated by earlier hunks.
    pub offset_used: isize,
    pub normalized_match: bool,
    pub mismatched_context_count: usize,
    /// Zero-based anchor in the original, when applied.
    pub position: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatchReport {
    pub hunks: Vec<HunkOutcome>,
    pub failed_hunk_indices: Vec<usize>,
}

impl PatchReport {
    /// Every hunk landed exactly where declared with no relaxation.
    pub fn is_clean(&self) -> bool {
        self.failed_hunk_indices.is_empty()
            && self.hunks.iter().all(|h| {
                h.applied
                    && h.offset_used == 0
                    && !h.normalized_match
                    && h.mismatched_context_count == 0
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Level {
    Exact,
    Normalized,
    Similar,
}

struct Anchor {
    position: usize,
    normalized: bool,
    mismatches: usize,
}

/// Applies `diff` to `original`, atomically.
///
/// Hunks are anchored in order. Each is tried exactly at its expected
/// position, then anywhere within `max_offset`, then with whitespace
/// normalization, then tolerating dissimilar context lines. Removed lines
/// never match by similarity. If any hunk fails to anchor, nothing is
/// applied and the error carries a report covering every hunk.
pub fn apply_patch<S: AsRef<str>>(
    original: &[S],
    diff: &DiffDocument,
    policy: &FuzzPolicy,
) -> Result<(Vec<String>, PatchReport), PatchError> {
    check_ordering(&diff.hunks)
        .map_err(|(first, second)| PatchError::OverlappingHunks { first, second })?;
    let orig: Vec<&str> = original.iter().map(AsRef::as_ref).collect();

    let mut report = PatchReport::default();
    let mut placements: Vec<(usize, &Hunk)> = Vec::with_capacity(diff.hunks.len());
    let mut drift: isize = 0;
    let mut floor = 0usize;
    let mut first_failure: Option<(usize, Option<usize>)> = None;

    for (index, hunk) in diff.hunks.iter().enumerate() {
        let expected = hunk.source_index() as isize + drift;
        match locate(&orig, hunk, expected, floor, policy) {
            Ok(anchor) => {
                report.hunks.push(HunkOutcome {
                    applied: true,
                    offset_used: anchor.position as isize - expected,
                    normalized_match: anchor.normalized,
                    mismatched_context_count: anchor.mismatches,
                    position: Some(anchor.position),
                });
                drift = anchor.position as isize - hunk.source_index() as isize;
                floor = anchor.position + hunk.source_len;
                placements.push((anchor.position, hunk));
            }
            Err(best) => {
                report.hunks.push(HunkOutcome::default());
                report.failed_hunk_indices.push(index);
                first_failure.get_or_insert((index, best));
            }
        }
    }

    if let Some((hunk_index, best_candidate)) = first_failure {
        return Err(PatchError::HunkApplicationFailure {
            hunk_index,
            best_candidate,
            report,
        });
    }

    let mut out = Vec::with_capacity(orig.len());
    let mut cursor = 0;
    for (position, hunk) in placements {
        out.extend(orig[cursor..position].iter().map(|s| s.to_string()));
        let mut k = position;
        for line in &hunk.lines {
            match line.tag {
                // Keep the document's own text for context lines.
                LineTag::Context => {
                    out.push(orig[k].to_string());
                    k += 1;
                }
                LineTag::Remove => k += 1,
                LineTag::Add => out.push(line.text.clone()),
            }
        }
        cursor = position + hunk.source_len;
    }
    out.extend(orig[cursor..].iter().map(|s| s.to_string()));
    Ok((out, report))
}

/// Text-level [`apply_patch`] that also honours `\ No newline` markers.
///
/// When a hunk reaching the end of the file carries no marker at all, the
/// original's final newline is kept.
pub fn apply_to_text(
    original: &str,
    diff: &DiffDocument,
    policy: &FuzzPolicy,
) -> Result<(String, PatchReport), PatchError> {
    let (lines, mut trailing) = split_lines(original);
    let (patched, report) = apply_patch(&lines, diff, policy)?;
    for (hunk, outcome) in diff.hunks.iter().zip(&report.hunks) {
        let Some(position) = outcome.position else {
            continue;
        };
        let reaches_end = position + hunk.source_len == lines.len();
        if reaches_end && (hunk.source_no_eol || hunk.target_no_eol) {
            trailing = !hunk.target_no_eol;
        }
    }
    Ok((join_lines(&patched, trailing), report))
}

fn locate(
    orig: &[&str],
    hunk: &Hunk,
    expected: isize,
    floor: usize,
    policy: &FuzzPolicy,
) -> Result<Anchor, Option<usize>> {
    let source: Vec<&HunkLine> = hunk.source_lines().collect();
    let n = source.len();
    if orig.len() < floor + n {
        return Err(None);
    }
    let (lo, hi) = (floor as isize, (orig.len() - n) as isize);

    let mut candidates = Vec::with_capacity(2 * policy.max_offset + 1);
    for d in 0..=policy.max_offset as isize {
        for pos in [expected + d, expected - d] {
            if (lo..=hi).contains(&pos) && !candidates.contains(&(pos as usize)) {
                candidates.push(pos as usize);
            }
        }
    }
    if candidates.is_empty() {
        return Err(None);
    }
    if n == 0 {
        // Pure insertion: no context to search with, so only the expected position qualifies.
        return if candidates[0] as isize == expected {
            Ok(Anchor {
                position: candidates[0],
                normalized: false,
                mismatches: 0,
            })
        } else {
            Err(None)
        };
    }

    let mut levels = vec![Level::Exact];
    if policy.whitespace_normalize {
        levels.push(Level::Normalized);
    }
    if policy.max_mismatched_context_per_hunk > 0 {
        levels.push(Level::Similar);
    }
    for level in levels {
        for &pos in &candidates {
            if let Some(anchor) = match_at(orig, &source, pos, level, policy) {
                return Ok(anchor);
            }
        }
    }

    let best = candidates
        .iter()
        .map(|&pos| {
            let hits = source
                .iter()
                .enumerate()
                .filter(|(i, l)| normalize(orig[pos + i]) == normalize(&l.text))
                .count();
            (hits, pos)
        })
        .filter(|(hits, _)| *hits > 0)
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, pos)| pos);
    Err(best)
}

fn match_at(
    orig: &[&str],
    source: &[&HunkLine],
    pos: usize,
    level: Level,
    policy: &FuzzPolicy,
) -> Option<Anchor> {
    let mut normalized = false;
    let mut mismatches = 0;
    for (i, line) in source.iter().enumerate() {
        let actual = orig[pos + i];
        if actual == line.text {
            continue;
        }
        if level >= Level::Normalized
            && policy.whitespace_normalize
            && normalize(actual) == normalize(&line.text)
        {
            normalized = true;
            continue;
        }
        if level == Level::Similar
            && line.tag == LineTag::Context
            && mismatches < policy.max_mismatched_context_per_hunk
            && similarity(actual, &line.text, policy.whitespace_normalize)
                >= policy.line_similarity_threshold
        {
            mismatches += 1;
            continue;
        }
        return None;
    }
    Some(Anchor {
        position: pos,
        normalized,
        mismatches,
    })
}

fn normalize(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn similarity(a: &str, b: &str, normalize_first: bool) -> f64 {
    if normalize_first {
        strsim::normalized_levenshtein(&normalize(a), &normalize(b))
    } else {
        strsim::normalized_levenshtein(a, b)
    }
}
