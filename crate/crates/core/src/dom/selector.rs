//! XPath and CSS selector generation and resolution.
//!
//! Only the selector shapes emitted here are resolvable: `//*[@id="..."]` and
//! absolute `/TAG[i]/...` paths for XPath; `#id`, and `tag.class:nth-of-type(i)`
//! segments joined by ` > ` for CSS.

use super::{DomTree, LocateError, NodeData, NodeId};

fn require_element(tree: &DomTree, node: NodeId) -> Result<(), LocateError> {
    match tree.get(node).map(|n| &n.data) {
        Some(NodeData::Element(_)) => Ok(()),
        _ => Err(LocateError::NodeNotInTree(node)),
    }
}

/// 1-based position among element siblings with the same tag.
fn position_of_type(tree: &DomTree, node: NodeId) -> usize {
    let tag = &tree.element(node).expect("element").tag;
    let parent = tree.node(node).parent.expect("non-root");
    tree.element_children(parent)
        .filter(|c| tree.element(*c).is_some_and(|e| &e.tag == tag))
        .position(|c| c == node)
        .expect("child of its parent")
        + 1
}

/// XPath for an element: the id form when the element has a non-empty id,
/// otherwise an absolute path counting same-tag element siblings. The path
/// starts at the top-level element.
pub fn compute_xpath(tree: &DomTree, node: NodeId) -> Result<String, LocateError> {
    require_element(tree, node)?;
    let element = tree.element(node).unwrap();
    if let Some(id) = element.id() {
        return Ok(format!("//*[@id=\"{id}\"]"));
    }
    let mut segments = Vec::new();
    let mut cur = node;
    while tree.element(cur).is_some() {
        let tag = &tree.element(cur).unwrap().tag;
        segments.push(format!("{tag}[{}]", position_of_type(tree, cur)));
        cur = tree.node(cur).parent.expect("element has a parent");
    }
    segments.reverse();
    Ok(format!("/{}", segments.join("/")))
}

/// Resolves an XPath produced by [`compute_xpath`]. Returns `None` when no
/// element matches, or when an id is shared by several elements.
pub fn resolve_xpath(tree: &DomTree, xpath: &str) -> Result<Option<NodeId>, LocateError> {
    let xpath = xpath.trim();
    let unsupported = || LocateError::UnsupportedXPathSyntax(xpath.to_string());

    if let Some(rest) = xpath.strip_prefix("//*[@id=") {
        let inner = rest.strip_suffix(']').ok_or_else(unsupported)?;
        let id = inner
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .or_else(|| inner.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')))
            .ok_or_else(unsupported)?;
        return Ok(unique(
            tree.elements()
                .into_iter()
                .filter(|n| tree.element(*n).unwrap().attr("id") == Some(id)),
        ));
    }

    let rest = xpath.strip_prefix('/').ok_or_else(unsupported)?;
    if rest.is_empty() || rest.starts_with('/') {
        return Err(unsupported());
    }
    let mut steps = Vec::new();
    for seg in rest.split('/') {
        let (name, idx) = seg
            .strip_suffix(']')
            .and_then(|s| s.split_once('['))
            .ok_or_else(unsupported)?;
        if name.is_empty()
            || !name
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b':' | b'.'))
        {
            return Err(unsupported());
        }
        let idx: usize = idx.parse().map_err(|_| unsupported())?;
        if idx == 0 {
            return Err(unsupported());
        }
        steps.push((name.to_ascii_uppercase(), idx));
    }

    let mut cur = tree.root();
    for (name, idx) in steps {
        let next = tree
            .element_children(cur)
            .filter(|c| tree.element(*c).is_some_and(|e| e.tag == name))
            .nth(idx - 1);
        match next {
            Some(n) => cur = n,
            None => return Ok(None),
        }
    }
    Ok(Some(cur))
}

fn unique(mut it: impl Iterator<Item = NodeId>) -> Option<NodeId> {
    let first = it.next()?;
    match it.next() {
        Some(_) => None,
        None => Some(first),
    }
}

/// CSS selector: `#id` for id-bearing elements, otherwise a `>` chain of
/// `tag.class:nth-of-type(i)` segments up to the nearest id-bearing ancestor
/// (or the top-level element).
pub fn compute_css_selector(tree: &DomTree, node: NodeId) -> Result<String, LocateError> {
    require_element(tree, node)?;
    let mut segments = Vec::new();
    let mut cur = node;
    while let Some(e) = tree.element(cur) {
        if let Some(id) = e.id() {
            segments.push(format!("#{}", css_escape(id)));
            break;
        }
        let mut seg = e.tag.to_ascii_lowercase();
        for class in e.classes() {
            seg.push('.');
            seg.push_str(&css_escape(class));
        }
        seg.push_str(&format!(":nth-of-type({})", position_of_type(tree, cur)));
        segments.push(seg);
        cur = tree.node(cur).parent.expect("element has a parent");
    }
    segments.reverse();
    Ok(segments.join(" > "))
}

#[derive(Debug, PartialEq)]
enum Segment {
    Id(String),
    Typed {
        tag: String,
        classes: Vec<String>,
        nth: Option<usize>,
    },
}

fn parse_segment(seg: &str) -> Option<Segment> {
    if let Some(id) = seg.strip_prefix('#') {
        let (id, rest) = read_ident(id)?;
        return rest.is_empty().then_some(Segment::Id(id));
    }
    let tag_end = seg.find(['.', ':']).unwrap_or(seg.len());
    let tag = &seg[..tag_end];
    if tag.is_empty()
        || !tag
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
    {
        return None;
    }
    let mut rest = &seg[tag_end..];
    let mut classes = Vec::new();
    while let Some(r) = rest.strip_prefix('.') {
        let (class, r) = read_ident(r)?;
        classes.push(class);
        rest = r;
    }
    let mut nth = None;
    if let Some(r) = rest.strip_prefix(":nth-of-type(") {
        let close = r.find(')')?;
        nth = Some(r[..close].trim().parse().ok().filter(|n| *n > 0)?);
        rest = &r[close + 1..];
    }
    rest.is_empty().then(|| Segment::Typed {
        tag: tag.to_ascii_uppercase(),
        classes,
        nth,
    })
}

/// Resolves a selector produced by [`compute_css_selector`]. Ambiguity is a miss.
pub fn resolve_css_selector(tree: &DomTree, selector: &str) -> Result<Option<NodeId>, LocateError> {
    let segments: Vec<Segment> = selector
        .split('>')
        .map(|s| parse_segment(s.trim()))
        .collect::<Option<_>>()
        .ok_or_else(|| LocateError::UnsupportedSelectorSyntax(selector.to_string()))?;
    if segments.is_empty() {
        return Err(LocateError::UnsupportedSelectorSyntax(selector.to_string()));
    }

    let matches = |n: NodeId, seg: &Segment| -> bool {
        let Some(e) = tree.element(n) else {
            return false;
        };
        match seg {
            Segment::Id(id) => e.attr("id") == Some(id.as_str()),
            Segment::Typed { tag, classes, nth } => {
                e.tag == *tag
                    && classes.iter().all(|c| e.classes().any(|k| k == c))
                    && nth.is_none_or(|i| position_of_type(tree, n) == i)
            }
        }
    };

    let mut current: Vec<NodeId> = match &segments[0] {
        Segment::Id(_) => tree
            .elements()
            .into_iter()
            .filter(|n| matches(*n, &segments[0]))
            .collect(),
        seg => tree
            .element_children(tree.root())
            .filter(|n| matches(*n, seg))
            .collect(),
    };
    for seg in &segments[1..] {
        current = current
            .iter()
            .flat_map(|p| {
                tree.element_children(*p)
                    .filter(|c| matches(*c, seg))
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    Ok(unique(current.into_iter()))
}

/// Finds the single element whose serialization starts with `snippet`,
/// falling back to whitespace-insensitive comparison.
pub fn find_by_snippet(tree: &DomTree, snippet: &str) -> Option<NodeId> {
    if snippet.trim().is_empty() {
        return None;
    }
    let elements = tree.elements();
    let serialized: Vec<String> = elements.iter().map(|n| tree.outer_html(*n)).collect();
    let exact = unique(
        elements
            .iter()
            .zip(&serialized)
            .filter(|(_, s)| s.starts_with(snippet))
            .map(|(n, _)| *n),
    );
    if exact.is_some() {
        return exact;
    }
    let squash = |s: &str| s.split_whitespace().collect::<String>();
    let needle = squash(snippet);
    unique(
        elements
            .iter()
            .zip(&serialized)
            .filter(|(_, s)| squash(s).starts_with(&needle))
            .map(|(n, _)| *n),
    )
}

fn css_escape(ident: &str) -> String {
    let mut out = String::new();
    for (i, c) in ident.chars().enumerate() {
        if c.is_ascii_alphanumeric() && !(i == 0 && c.is_ascii_digit())
            || c == '-'
            || c == '_'
            || !c.is_ascii()
        {
            out.push(c);
        } else if c.is_ascii_digit() || c.is_ascii_control() || c == ' ' {
            out.push_str(&format!("\\{:x} ", c as u32));
        } else {
            out.push('\\');
            out.push(c);
        }
    }
    out
}

/// Reads one escaped identifier, returning it unescaped with the remainder.
fn read_ident(s: &str) -> Option<(String, &str)> {
    let mut out = String::new();
    let mut chars = s.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            '\\' => {
                chars.next();
                let mut hex = String::new();
                while let Some(&(_, h)) = chars.peek() {
                    if h.is_ascii_hexdigit() && hex.len() < 6 {
                        hex.push(h);
                        chars.next();
                    } else {
                        break;
                    }
                }
                if hex.is_empty() {
                    let (_, lit) = chars.next()?;
                    out.push(lit);
                } else {
                    out.push(char::from_u32(u32::from_str_radix(&hex, 16).ok()?)?);
                    if let Some(&(_, ' ')) = chars.peek() {
                        chars.next();
                    }
                }
            }
            c if c.is_alphanumeric() || c == '-' || c == '_' || !c.is_ascii() => {
                out.push(c);
                chars.next();
            }
            _ => return (!out.is_empty()).then_some((out, &s[i..])),
        }
    }
    (!out.is_empty()).then_some((out, ""))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::parse_html;

    const PAGE: &str = "<html><body><h1 id=\"title\">T</h1><p>a</p><p>b</p><p>c</p>\
        <div class=\"panel left\"><span>s</span></div></body></html>";

    #[test]
    fn id_shortcut() {
        let t = parse_html(PAGE);
        let h1 = t.find_first("h1").unwrap();
        assert_eq!(compute_xpath(&t, h1).unwrap(), "//*[@id=\"title\"]");
        assert_eq!(compute_css_selector(&t, h1).unwrap(), "#title");
    }

    #[test]
    fn root_element_path() {
        let t = parse_html("<html></html>");
        assert_eq!(
            compute_xpath(&t, t.document_element().unwrap()).unwrap(),
            "/HTML[1]"
        );
    }

    #[test]
    fn second_paragraph() {
        let t = parse_html(PAGE);
        let body = t.find_first("body").unwrap();
        // Manual walk: second P element child of BODY.
        let p2 = t
            .element_children(body)
            .filter(|c| t.element(*c).unwrap().tag == "P")
            .nth(1)
            .unwrap();
        let xp = compute_xpath(&t, p2).unwrap();
        assert_eq!(xp, "/HTML[1]/BODY[1]/P[2]");
        assert_eq!(resolve_xpath(&t, &xp).unwrap(), Some(p2));
        assert_eq!(
            resolve_xpath(&t, "/html[1]/body[1]/p[2]").unwrap(),
            Some(p2)
        );
    }

    #[test]
    fn class_selector_chain() {
        let t = parse_html(PAGE);
        let div = t.find_first("div").unwrap();
        let sel = compute_css_selector(&t, div).unwrap();
        assert_eq!(
            sel,
            "html:nth-of-type(1) > body:nth-of-type(1) > div.panel.left:nth-of-type(1)"
        );
        assert_eq!(resolve_css_selector(&t, &sel).unwrap(), Some(div));
    }

    #[test]
    fn selector_anchors_at_id_ancestor() {
        let t = parse_html("<div id=\"wrap\"><ul><li>a</li><li>b</li></ul></div>");
        let li = t.elements()[3];
        let sel = compute_css_selector(&t, li).unwrap();
        assert_eq!(sel, "#wrap > ul:nth-of-type(1) > li:nth-of-type(2)");
        assert_eq!(resolve_css_selector(&t, &sel).unwrap(), Some(li));
    }

    #[test]
    fn text_node_rejected() {
        let t = parse_html("<b>x</b>");
        let b = t.find_first("b").unwrap();
        let text = t.node(b).children[0];
        assert_eq!(
            compute_css_selector(&t, text),
            Err(LocateError::NodeNotInTree(text))
        );
        assert_eq!(
            compute_xpath(&t, NodeId(999)),
            Err(LocateError::NodeNotInTree(NodeId(999)))
        );
    }

    #[test]
    fn misses() {
        let t = parse_html(PAGE);
        assert_eq!(resolve_xpath(&t, "//*[@id=\"nope\"]").unwrap(), None);
        assert_eq!(resolve_xpath(&t, "/HTML[1]/BODY[1]/P[9]").unwrap(), None);
    }

    #[test]
    fn unsupported_xpath() {
        let t = parse_html(PAGE);
        for xp in [
            "//p",
            "/HTML[1]/BODY[1]/P[last()]",
            "/HTML/BODY",
            "descendant::p",
            "/HTML[0]",
            "//*[@class=\"x\"]x",
        ] {
            assert!(
                matches!(
                    resolve_xpath(&t, xp),
                    Err(LocateError::UnsupportedXPathSyntax(_))
                ),
                "{xp}"
            );
        }
    }

    #[test]
    fn duplicate_ids_are_misses() {
        let t = parse_html("<div id=\"dup\">a</div><div id=\"dup\">b</div>");
        let second = t.elements()[1];
        let xp = compute_xpath(&t, second).unwrap();
        assert_eq!(xp, "//*[@id=\"dup\"]");
        assert_eq!(resolve_xpath(&t, &xp).unwrap(), None);
        assert_eq!(resolve_css_selector(&t, "#dup").unwrap(), None);
    }

    #[test]
    fn empty_id_uses_positional_path() {
        let t = parse_html("<div id=\"\"></div>");
        assert_eq!(compute_xpath(&t, t.elements()[0]).unwrap(), "/DIV[1]");
    }

    #[test]
    fn escaped_identifiers_round_trip() {
        let t = parse_html("<div id=\"1st:item\"></div><p class=\"a.b 2x\"></p>");
        for n in t.elements() {
            let sel = compute_css_selector(&t, n).unwrap();
            assert_eq!(resolve_css_selector(&t, &sel).unwrap(), Some(n), "{sel}");
        }
    }

    #[test]
    fn snippet_search() {
        let t = parse_html(PAGE);
        let div = t.find_first("div").unwrap();
        assert_eq!(
            find_by_snippet(&t, "<div class=\"panel left\"><span>"),
            Some(div)
        );
        assert_eq!(find_by_snippet(&t, "<p>"), None);
        assert_eq!(
            find_by_snippet(&t, "<div class=\"panel   left\">  <span>"),
            Some(div)
        );
    }
}
