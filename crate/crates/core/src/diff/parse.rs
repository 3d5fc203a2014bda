use super::{DiffDocument, DiffError, Hunk, HunkLine, LineTag};

/// Parses a single-file unified diff.
///
/// Lines before the first `---` or `@@` (such as `diff --git` or `index`
/// lines) are ignored. Hunk bodies are read strictly by their declared
/// counts; a bare empty line inside a hunk is read as an empty context line,
/// since editors and models routinely strip the lone space.
pub fn parse_unified_diff(text: &str) -> Result<DiffDocument, DiffError> {
    if text.trim().is_empty() {
        return Err(DiffError::Empty);
    }
    let lines: Vec<&str> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    // A trailing newline yields one empty final element.
    let lines = match lines.split_last() {
        Some((&"", rest)) => rest,
        _ => &lines[..],
    };

    let mut doc = DiffDocument::default();
    let mut i = 0;
    let mut seen_file_header = false;

    while i < lines.len() {
        let line = lines[i];
        if line.starts_with("--- ") || line == "---" {
            if seen_file_header {
                return Err(DiffError::MalformedHeader {
                    line: i + 1,
                    reason: "more than one file section".into(),
                });
            }
            doc.source_name = file_label(&line[3..]);
            let Some(next) = lines.get(i + 1).filter(|l| l.starts_with("+++")) else {
                return Err(DiffError::MalformedHeader {
                    line: i + 2,
                    reason: "expected `+++` after `---`".into(),
                });
            };
            doc.target_name = file_label(&next[3..]);
            seen_file_header = true;
            i += 2;
        } else if line.starts_with("@@") {
            let hunk_index = doc.hunks.len();
            let (hunk, next) = parse_hunk(lines, i, hunk_index)?;
            doc.hunks.push(hunk);
            i = next;
        } else if (doc.hunks.is_empty() && !seen_file_header) || line.trim().is_empty() {
            // preamble before the first header, or a blank separator
            i += 1;
        } else if matches!(line.as_bytes()[0], b' ' | b'-' | b'+') {
            // Body line past the declared counts of the preceding hunk.
            let hunk = doc.hunks.len().saturating_sub(1);
            return Err(overflow_error(&doc, hunk, line));
        } else if !doc.hunks.is_empty() {
            return Err(DiffError::UnknownLinePrefix {
                line: i + 1,
                text: line.to_string(),
            });
        } else {
            return Err(DiffError::MalformedHeader {
                line: i + 1,
                reason: format!("expected `@@` hunk header, found {line:?}"),
            });
        }
    }

    if doc.hunks.is_empty() && !seen_file_header {
        return Err(DiffError::MalformedHeader {
            line: 1,
            reason: "no `---`/`+++` or `@@` headers found".into(),
        });
    }
    Ok(doc)
}

fn file_label(rest: &str) -> String {
    let rest = rest.trim_start();
    rest.split('\t').next().unwrap_or("").trim_end().to_string()
}

fn overflow_error(doc: &DiffDocument, hunk: usize, line: &str) -> DiffError {
    match doc.hunks.get(hunk) {
        Some(h) => {
            let tag = line.as_bytes()[0];
            let extra_src = usize::from(tag != b'+');
            let extra_tgt = usize::from(tag != b'-');
            DiffError::CountMismatch {
                hunk,
                declared_source: h.source_len,
                declared_target: h.target_len,
                found_source: h.source_len + extra_src,
                found_target: h.target_len + extra_tgt,
            }
        }
        None => DiffError::MalformedHeader {
            line: 0,
            reason: "hunk body without `@@` header".into(),
        },
    }
}

/// Parses `@@ -a[,b] +c[,d] @@[ heading]`.
fn parse_hunk_header(line: &str) -> Option<(usize, usize, usize, usize)> {
    let rest = line.strip_prefix("@@")?.trim_start();
    let end = rest.find("@@")?;
    let mut parts = rest[..end].split_whitespace();
    let src = parts.next()?.strip_prefix('-')?;
    let tgt = parts.next()?.strip_prefix('+')?;
    if parts.next().is_some() {
        return None;
    }
    fn range(s: &str) -> Option<(usize, usize)> {
        match s.split_once(',') {
            Some((a, b)) => Some((a.parse().ok()?, b.parse().ok()?)),
            None => Some((s.parse().ok()?, 1)),
        }
    }
    let (a, b) = range(src)?;
    let (c, d) = range(tgt)?;
    Some((a, b, c, d))
}

fn parse_hunk(lines: &[&str], at: usize, hunk_index: usize) -> Result<(Hunk, usize), DiffError> {
    let header = lines[at];
    let (source_start, source_len, target_start, target_len) = parse_hunk_header(header)
        .ok_or_else(|| DiffError::MalformedHeader {
            line: at + 1,
            reason: format!("garbled hunk header {header:?}"),
        })?;

    let mut hunk = Hunk {
        source_start,
        source_len,
        target_start,
        target_len,
        lines: Vec::new(),
        source_no_eol: false,
        target_no_eol: false,
    };
    let (mut src_seen, mut tgt_seen) = (0usize, 0usize);
    let mut i = at + 1;

    while i < lines.len() {
        let line = lines[i];
        if let Some(rest) = line.strip_prefix('\\') {
            // "\ No newline at end of file" applies to the preceding line.
            let _ = rest;
            match hunk.lines.last().map(|l| l.tag) {
                Some(LineTag::Context) => {
                    hunk.source_no_eol = true;
                    hunk.target_no_eol = true;
                }
                Some(LineTag::Remove) => hunk.source_no_eol = true,
                Some(LineTag::Add) => hunk.target_no_eol = true,
                None => {
                    return Err(DiffError::UnknownLinePrefix {
                        line: i + 1,
                        text: line.to_string(),
                    })
                }
            }
            i += 1;
            continue;
        }
        if src_seen == source_len && tgt_seen == target_len {
            break;
        }
        if line.starts_with("@@") {
            break;
        }
        let (tag, text) = match line.as_bytes().first() {
            None => (LineTag::Context, ""),
            Some(b' ') => (LineTag::Context, &line[1..]),
            Some(b'-') => (LineTag::Remove, &line[1..]),
            Some(b'+') => (LineTag::Add, &line[1..]),
            Some(_) => {
                return Err(DiffError::UnknownLinePrefix {
                    line: i + 1,
                    text: line.to_string(),
                })
            }
        };
        if tag.in_source() {
            src_seen += 1;
        }
        if tag.in_target() {
            tgt_seen += 1;
        }
        if src_seen > source_len || tgt_seen > target_len {
            return Err(DiffError::CountMismatch {
                hunk: hunk_index,
                declared_source: source_len,
                declared_target: target_len,
                found_source: src_seen,
                found_target: tgt_seen,
            });
        }
        hunk.lines.push(HunkLine::new(tag, text));
        i += 1;
    }

    if src_seen != source_len || tgt_seen != target_len {
        return Err(DiffError::CountMismatch {
            hunk: hunk_index,
            declared_source: source_len,
            declared_target: target_len,
            found_source: src_seen,
            found_target: tgt_seen,
        });
    }
    if !hunk.has_change() {
        return Err(DiffError::EmptyHunk { hunk: hunk_index });
    }
    Ok((hunk, i))
}
