use similar::{capture_diff_slices, group_diff_ops, Algorithm, DiffOp};

use super::{split_lines, DiffDocument, Hunk, HunkLine, LineTag};

pub const ORIGINAL_LABEL: &str = "original.html";
pub const MODIFIED_LABEL: &str = "modified.html";

const CONTEXT_LINES: usize = 3;

/// Line diff of two sequences with three lines of context per hunk.
pub fn generate_unified_diff<S: AsRef<str>>(original: &[S], modified: &[S]) -> DiffDocument {
    let old: Vec<&str> = original.iter().map(AsRef::as_ref).collect();
    let new: Vec<&str> = modified.iter().map(AsRef::as_ref).collect();
    let hunks = build_hunks(&old, &new, |s| s.to_string());
    DiffDocument {
        source_name: ORIGINAL_LABEL.to_string(),
        target_name: MODIFIED_LABEL.to_string(),
        hunks,
    }
}

/// Text-level diff that also records missing final newlines.
pub fn diff_texts(original: &str, modified: &str) -> DiffDocument {
    let (old, old_nl) = split_lines(original);
    let (new, new_nl) = split_lines(modified);
    // Key each line by (text, lacks-newline) so that a final line differing
    // only in its newline still shows up as a change.
    let key = |lines: &[String], trailing: bool| -> Vec<(String, bool)> {
        let n = lines.len();
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), !trailing && i + 1 == n))
            .collect()
    };
    let old_keys = key(&old, old_nl);
    let new_keys = key(&new, new_nl);
    let mut hunks = build_hunks(&old_keys, &new_keys, |(text, _)| text.clone());

    for hunk in &mut hunks {
        let src_end = hunk.source_index() + hunk.source_len;
        let tgt_end = if hunk.target_len == 0 {
            hunk.target_start
        } else {
            hunk.target_start - 1 + hunk.target_len
        };
        hunk.source_no_eol = !old_nl && hunk.source_len > 0 && src_end == old.len();
        hunk.target_no_eol = !new_nl && hunk.target_len > 0 && tgt_end == new.len();
    }

    DiffDocument {
        source_name: ORIGINAL_LABEL.to_string(),
        target_name: MODIFIED_LABEL.to_string(),
        hunks,
    }
}

fn build_hunks<T, F>(old: &[T], new: &[T], text: F) -> Vec<Hunk>
where
    T: Eq + std::hash::Hash + Ord,
    F: Fn(&T) -> String,
{
    let ops = capture_diff_slices(Algorithm::Myers, old, new);
    group_diff_ops(ops, CONTEXT_LINES)
        .into_iter()
        .filter(|group| group.iter().any(|op| !matches!(op, DiffOp::Equal { .. })))
        .map(|group| {
            let mut lines = Vec::new();
            for op in &group {
                match *op {
                    DiffOp::Equal { old_index, len, .. } => {
                        lines.extend(
                            old[old_index..old_index + len]
                                .iter()
                                .map(|t| HunkLine::new(LineTag::Context, text(t))),
                        );
                    }
                    DiffOp::Delete {
                        old_index, old_len, ..
                    } => {
                        lines.extend(
                            old[old_index..old_index + old_len]
                                .iter()
                                .map(|t| HunkLine::new(LineTag::Remove, text(t))),
                        );
                    }
                    DiffOp::Insert {
                        new_index, new_len, ..
                    } => {
                        lines.extend(
                            new[new_index..new_index + new_len]
                                .iter()
                                .map(|t| HunkLine::new(LineTag::Add, text(t))),
                        );
                    }
                    DiffOp::Replace {
                        old_index,
                        old_len,
                        new_index,
                        new_len,
                    } => {
                        lines.extend(
                            old[old_index..old_index + old_len]
                                .iter()
                                .map(|t| HunkLine::new(LineTag::Remove, text(t))),
                        );
                        lines.extend(
                            new[new_index..new_index + new_len]
                                .iter()
                                .map(|t| HunkLine::new(LineTag::Add, text(t))),
                        );
                    }
                }
            }
            // Delete ops carry an unreliable new index (and inserts an old
            // one), so starts come from ops that actually cover lines.
            let old_start = group
                .iter()
                .map(|op| op.old_range())
                .find(|r| !r.is_empty())
                .map_or(group[0].old_range().start, |r| r.start);
            let new_start = group
                .iter()
                .map(|op| op.new_range())
                .find(|r| !r.is_empty())
                .map_or(group[0].new_range().start, |r| r.start);
            let source_len = lines.iter().filter(|l| l.tag.in_source()).count();
            let target_len = lines.iter().filter(|l| l.tag.in_target()).count();
            Hunk {
                source_start: if source_len == 0 {
                    old_start
                } else {
                    old_start + 1
                },
                source_len,
                target_start: if target_len == 0 {
                    new_start
                } else {
                    new_start + 1
                },
                target_len,
                lines,
                source_no_eol: false,
                target_no_eol: false,
            }
        })
        .collect()
}
