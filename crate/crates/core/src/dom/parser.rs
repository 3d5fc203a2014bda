//! Error-tolerant HTML parsing.
//!
//! This is not the full HTML5 tree-construction algorithm. It covers what
//! generated courseware needs: void and raw-text elements, optional end tags
//! for paragraphs, list items and table parts, and recovery from stray or
//! missing end tags. Every recovery is recorded as a [`Repair`]; implied
//! closures of optional-end-tag elements are not structural.
//! No `<html>`/`<head>`/`<body>` elements are synthesized.

use super::{DomTree, Element, Node, NodeData, NodeId, RAW_TEXT_ELEMENTS, VOID_ELEMENTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RepairKind {
    /// An element with an optional end tag was closed implicitly.
    ImpliedEnd,
    /// An element requiring an end tag was closed by an outer end tag or a block start.
    MisnestedClose,
    /// An element requiring an end tag was still open at end of input.
    UnclosedAtEof,
    /// An end tag with no matching open element was dropped.
    StrayEndTag,
    /// A comment or raw-text element ran to end of input.
    UnterminatedConstruct,
    /// A repeated attribute was dropped.
    DuplicateAttribute,
}

impl RepairKind {
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            RepairKind::MisnestedClose
                | RepairKind::UnclosedAtEof
                | RepairKind::StrayEndTag
                | RepairKind::UnterminatedConstruct
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repair {
    pub kind: RepairKind,
    /// Uppercase tag involved, if any.
    pub tag: Option<String>,
    /// Byte offset in the source.
    pub offset: usize,
}

const OPTIONAL_END: &[&str] = &[
    "P", "LI", "DT", "DD", "OPTION", "OPTGROUP", "TR", "TD", "TH", "THEAD", "TBODY", "TFOOT",
    "COLGROUP", "CAPTION", "HTML", "HEAD", "BODY", "RP", "RT",
];

const CLOSES_P: &[&str] = &[
    "ADDRESS",
    "ARTICLE",
    "ASIDE",
    "BLOCKQUOTE",
    "DETAILS",
    "DIV",
    "DL",
    "FIELDSET",
    "FIGCAPTION",
    "FIGURE",
    "FOOTER",
    "FORM",
    "H1",
    "H2",
    "H3",
    "H4",
    "H5",
    "H6",
    "HEADER",
    "HR",
    "MAIN",
    "MENU",
    "NAV",
    "OL",
    "P",
    "PRE",
    "SECTION",
    "TABLE",
    "UL",
];

/// Inline elements a block start may close through to reach an open `<p>`.
const PHRASING: &[&str] = &[
    "A", "ABBR", "B", "BDI", "BDO", "CITE", "CODE", "DATA", "DFN", "EM", "FONT", "I", "KBD",
    "LABEL", "MARK", "Q", "S", "SAMP", "SMALL", "SPAN", "STRONG", "SUB", "SUP", "TIME", "U", "VAR",
];

/// `(opening tag, tags it implicitly closes, tags that bound the search)`.
const IMPLIED_CLOSE_RULES: &[(&[&str], &[&str], &[&str])] = &[
    (&["LI"], &["LI"], &["UL", "OL", "MENU"]),
    (&["DT", "DD"], &["DT", "DD"], &["DL"]),
    (
        &["OPTION"],
        &["OPTION"],
        &["SELECT", "DATALIST", "OPTGROUP"],
    ),
    (&["OPTGROUP"], &["OPTION", "OPTGROUP"], &["SELECT"]),
    (
        &["TR"],
        &["TR", "TD", "TH"],
        &["TABLE", "THEAD", "TBODY", "TFOOT"],
    ),
    (&["TD", "TH"], &["TD", "TH"], &["TR", "TABLE"]),
    (
        &["THEAD", "TBODY", "TFOOT"],
        &[
            "THEAD", "TBODY", "TFOOT", "TR", "TD", "TH", "CAPTION", "COLGROUP",
        ],
        &["TABLE"],
    ),
];

/// Parses HTML text into a [`DomTree`]. Never fails.
pub fn parse_html(text: &str) -> DomTree {
    let mut b = Builder {
        src: text,
        nodes: vec![Node {
            data: NodeData::Document,
            parent: None,
            children: Vec::new(),
            span: 0..text.len(),
        }],
        open: vec![NodeId(0)],
        repairs: Vec::new(),
    };
    b.run();
    DomTree {
        nodes: b.nodes,
        repairs: b.repairs,
    }
}

struct Builder<'a> {
    src: &'a str,
    nodes: Vec<Node>,
    /// Open-element stack; index 0 is the document.
    open: Vec<NodeId>,
    repairs: Vec<Repair>,
}

impl<'a> Builder<'a> {
    fn run(&mut self) {
        let bytes = self.src.as_bytes();
        let mut pos = 0;
        let mut text_start = 0;
        while pos < bytes.len() {
            if bytes[pos] != b'<' {
                pos += 1;
                continue;
            }
            let next = bytes.get(pos + 1).copied();
            let starts_markup = match next {
                Some(c) if c.is_ascii_alphabetic() => true,
                Some(b'/') => bytes.get(pos + 2).is_some_and(|c| c.is_ascii_alphabetic()),
                Some(b'!') | Some(b'?') => true,
                _ => false,
            };
            if !starts_markup {
                pos += 1;
                continue;
            }
            self.flush_text(text_start, pos);
            pos = match next {
                Some(b'!') if self.src[pos..].starts_with("<!--") => self.comment(pos),
                Some(b'!') | Some(b'?') => self.declaration(pos),
                Some(b'/') => self.end_tag(pos),
                _ => self.start_tag(pos),
            };
            text_start = pos;
        }
        self.flush_text(text_start, bytes.len());

        let end = self.src.len();
        while self.open.len() > 1 {
            let id = self.open.pop().unwrap();
            let tag = self.tag_of(id);
            if !OPTIONAL_END.contains(&tag.as_str()) {
                self.repair(RepairKind::UnclosedAtEof, Some(tag), end);
            }
            self.nodes[id.0].span.end = end;
        }
    }

    fn current(&self) -> NodeId {
        *self.open.last().unwrap()
    }

    fn tag_of(&self, id: NodeId) -> String {
        match &self.nodes[id.0].data {
            NodeData::Element(e) => e.tag.clone(),
            _ => String::new(),
        }
    }

    fn repair(&mut self, kind: RepairKind, tag: Option<String>, offset: usize) {
        self.repairs.push(Repair { kind, tag, offset });
    }

    fn append(&mut self, data: NodeData, span: std::ops::Range<usize>) -> NodeId {
        let parent = self.current();
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            data,
            parent: Some(parent),
            children: Vec::new(),
            span,
        });
        self.nodes[parent.0].children.push(id);
        id
    }

    fn flush_text(&mut self, start: usize, end: usize) {
        if start >= end {
            return;
        }
        let text = &self.src[start..end];
        let parent = self.current();
        // Merge with a preceding text sibling.
        if let Some(&last) = self.nodes[parent.0].children.last() {
            if let NodeData::Text(t) = &mut self.nodes[last.0].data {
                t.push_str(text);
                self.nodes[last.0].span.end = end;
                return;
            }
        }
        self.append(NodeData::Text(text.to_string()), start..end);
    }

    fn comment(&mut self, pos: usize) -> usize {
        let body_start = pos + 4;
        match self.src[body_start..].find("-->") {
            Some(i) => {
                let end = body_start + i + 3;
                self.append(
                    NodeData::Comment(self.src[body_start..body_start + i].to_string()),
                    pos..end,
                );
                end
            }
            None => {
                self.repair(RepairKind::UnterminatedConstruct, None, pos);
                let end = self.src.len();
                self.append(
                    NodeData::Comment(self.src[body_start..].to_string()),
                    pos..end,
                );
                end
            }
        }
    }

    fn declaration(&mut self, pos: usize) -> usize {
        let body_start = pos + 2;
        let (body, end) = match self.src[body_start..].find('>') {
            Some(i) => (&self.src[body_start..body_start + i], body_start + i + 1),
            None => {
                self.repair(RepairKind::UnterminatedConstruct, None, pos);
                (&self.src[body_start..], self.src.len())
            }
        };
        if self.src.as_bytes()[pos + 1] == b'!'
            && body.len() >= 7
            && body[..7].eq_ignore_ascii_case("doctype")
        {
            self.append(NodeData::Doctype(body.to_string()), pos..end);
        } else {
            // Processing instructions and bogus declarations become comments.
            self.append(NodeData::Comment(body.to_string()), pos..end);
        }
        end
    }

    fn end_tag(&mut self, pos: usize) -> usize {
        let bytes = self.src.as_bytes();
        let name_start = pos + 2;
        let mut i = name_start;
        while i < bytes.len() && is_name_byte(bytes[i]) {
            i += 1;
        }
        let tag = self.src[name_start..i].to_ascii_uppercase();
        let end = match self.src[i..].find('>') {
            Some(k) => i + k + 1,
            None => self.src.len(),
        };

        let found = self
            .open
            .iter()
            .rposition(|id| self.tag_of(*id) == tag && id.0 != 0);
        match found {
            Some(idx) if !VOID_ELEMENTS.contains(&tag.as_str()) => {
                while self.open.len() > idx + 1 {
                    let inner = self.open.pop().unwrap();
                    let inner_tag = self.tag_of(inner);
                    let kind = if OPTIONAL_END.contains(&inner_tag.as_str()) {
                        RepairKind::ImpliedEnd
                    } else {
                        RepairKind::MisnestedClose
                    };
                    self.repair(kind, Some(inner_tag), pos);
                    self.nodes[inner.0].span.end = pos;
                }
                let id = self.open.pop().unwrap();
                self.nodes[id.0].span.end = end;
            }
            _ => self.repair(RepairKind::StrayEndTag, Some(tag), pos),
        }
        end
    }

    fn start_tag(&mut self, pos: usize) -> usize {
        let bytes = self.src.as_bytes();
        let mut i = pos + 1;
        while i < bytes.len() && is_name_byte(bytes[i]) {
            i += 1;
        }
        let tag = self.src[pos + 1..i].to_ascii_uppercase();
        let mut attrs: Vec<(String, String)> = Vec::new();
        let mut self_closing = false;

        loop {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i >= bytes.len() {
                break;
            }
            match bytes[i] {
                b'>' => {
                    i += 1;
                    break;
                }
                b'/' if bytes.get(i + 1) == Some(&b'>') => {
                    self_closing = true;
                    i += 2;
                    break;
                }
                b'/' => {
                    i += 1;
                    continue;
                }
                _ => {}
            }
            let name_start = i;
            while i < bytes.len()
                && !bytes[i].is_ascii_whitespace()
                && !matches!(bytes[i], b'=' | b'>' | b'/')
            {
                i += 1;
            }
            if i == name_start {
                // A lone '=' or similar junk.
                i += 1;
                continue;
            }
            let name = self.src[name_start..i].to_ascii_lowercase();
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                j += 1;
            }
            let mut value = String::new();
            if bytes.get(j) == Some(&b'=') {
                j += 1;
                while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                    j += 1;
                }
                match bytes.get(j) {
                    Some(&q @ (b'"' | b'\'')) => {
                        let vstart = j + 1;
                        let vend = self.src[vstart..]
                            .find(q as char)
                            .map_or(self.src.len(), |k| vstart + k);
                        value = decode_entities(&self.src[vstart..vend]);
                        j = (vend + 1).min(self.src.len());
                    }
                    _ => {
                        let vstart = j;
                        while j < bytes.len() && !bytes[j].is_ascii_whitespace() && bytes[j] != b'>'
                        {
                            j += 1;
                        }
                        value = decode_entities(&self.src[vstart..j]);
                    }
                }
                i = j;
            }
            if attrs.iter().any(|(k, _)| *k == name) {
                self.repair(
                    RepairKind::DuplicateAttribute,
                    Some(tag.clone()),
                    name_start,
                );
            } else {
                attrs.push((name, value));
            }
        }
        let tag_end = i.min(self.src.len());

        self.close_implied(&tag, pos);

        let id = self.append(
            NodeData::Element(Element {
                tag: tag.clone(),
                attrs,
            }),
            pos..tag_end,
        );
        if VOID_ELEMENTS.contains(&tag.as_str())
            || (self_closing && !RAW_TEXT_ELEMENTS.contains(&tag.as_str()))
        {
            // Foreign-style `<x/>` is honoured for non-void elements too.
            return tag_end;
        }
        if RAW_TEXT_ELEMENTS.contains(&tag.as_str()) {
            return self.raw_text(id, &tag, tag_end);
        }
        self.open.push(id);
        tag_end
    }

    fn raw_text(&mut self, id: NodeId, tag: &str, from: usize) -> usize {
        let lower = self.src[from..].to_ascii_lowercase();
        let needle = format!("</{}", tag.to_ascii_lowercase());
        let mut search = 0;
        let close = loop {
            match lower[search..].find(&needle) {
                Some(k) => {
                    let at = search + k;
                    let after = lower.as_bytes().get(at + needle.len()).copied();
                    if matches!(after, None | Some(b'>') | Some(b'/'))
                        || after.is_some_and(|c| c.is_ascii_whitespace())
                    {
                        break Some(from + at);
                    }
                    search = at + 1;
                }
                None => break None,
            }
        };
        let (content_end, end) = match close {
            Some(c) => {
                let end = self.src[c..]
                    .find('>')
                    .map_or(self.src.len(), |k| c + k + 1);
                (c, end)
            }
            None => {
                self.repair(
                    RepairKind::UnterminatedConstruct,
                    Some(tag.to_string()),
                    from,
                );
                (self.src.len(), self.src.len())
            }
        };
        if content_end > from {
            self.open.push(id);
            self.append(
                NodeData::Text(self.src[from..content_end].to_string()),
                from..content_end,
            );
            self.open.pop();
        }
        self.nodes[id.0].span.end = end;
        end
    }

    fn close_implied(&mut self, tag: &str, pos: usize) {
        for (openers, closes, bounds) in IMPLIED_CLOSE_RULES {
            if !openers.contains(&tag) {
                continue;
            }
            let mut hit = None;
            for (idx, id) in self
                .open
                .iter()
                .enumerate()
                .rev()
                .take_while(|(idx, _)| *idx > 0)
            {
                let t = self.tag_of(*id);
                if closes.contains(&t.as_str()) {
                    // Keep scanning: a <tr> closes the open <td> and its <tr>.
                    hit = Some(idx);
                    continue;
                }
                if bounds.contains(&t.as_str()) {
                    break;
                }
            }
            if let Some(idx) = hit {
                self.pop_to(idx, pos);
            }
        }

        if CLOSES_P.contains(&tag) {
            let mut hit = None;
            for (idx, id) in self
                .open
                .iter()
                .enumerate()
                .rev()
                .take_while(|(idx, _)| *idx > 0)
            {
                let t = self.tag_of(*id);
                if t == "P" {
                    hit = Some(idx);
                    break;
                }
                if !PHRASING.contains(&t.as_str()) {
                    break;
                }
            }
            if let Some(idx) = hit {
                self.pop_to(idx, pos);
            }
        }
    }

    /// Pops the open stack down to and including `idx`.
    fn pop_to(&mut self, idx: usize, pos: usize) {
        while self.open.len() > idx {
            let id = self.open.pop().unwrap();
            let t = self.tag_of(id);
            let kind = if OPTIONAL_END.contains(&t.as_str()) {
                RepairKind::ImpliedEnd
            } else {
                RepairKind::MisnestedClose
            };
            self.repair(kind, Some(t), pos);
            self.nodes[id.0].span.end = pos;
        }
    }
}

fn is_name_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b':' | b'.')
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let decoded = [
            ("&amp;", '&'),
            ("&quot;", '"'),
            ("&lt;", '<'),
            ("&gt;", '>'),
            ("&#39;", '\''),
            ("&apos;", '\''),
        ]
        .iter()
        .find(|(e, _)| rest.starts_with(e));
        match decoded {
            Some((e, c)) => {
                out.push(*c);
                rest = &rest[e.len()..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}
