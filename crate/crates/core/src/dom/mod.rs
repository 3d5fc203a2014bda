//! A small DOM for model-generated HTML, plus selector generation and
//! resolution for click-to-locate editing.

mod citation;
mod parser;
mod selector;

use std::ops::Range;

use thiserror::Error;

pub use citation::{make_citation, BoundingBox, ElementCitation, SNIPPET_LIMIT};
pub use parser::{parse_html, Repair, RepairKind};
pub use selector::{
    compute_css_selector, compute_xpath, find_by_snippet, resolve_css_selector, resolve_xpath,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    /// Uppercase tag name, as reported by `Element.tagName`.
    pub tag: String,
    /// Lowercased names in source order; values are entity-decoded.
    pub attrs: Vec<(String, String)>,
}

impl Element {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn id(&self) -> Option<&str> {
        self.attr("id").filter(|v| !v.is_empty())
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.attr("class").unwrap_or("").split_whitespace()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeData {
    Document,
    /// Raw declaration body, e.g. `DOCTYPE html`.
    Doctype(String),
    Element(Element),
    /// Raw source text; entities are not decoded.
    Text(String),
    Comment(String),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub data: NodeData,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Byte range in the parsed source.
    pub span: Range<usize>,
}

impl Node {
    pub fn as_element(&self) -> Option<&Element> {
        match &self.data {
            NodeData::Element(e) => Some(e),
            _ => None,
        }
    }
}

/// Immutable parsed document. Node 0 is the document root.
#[derive(Debug, Clone)]
pub struct DomTree {
    nodes: Vec<Node>,
    repairs: Vec<Repair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocateError {
    #[error("node {0:?} is not an element of this document")]
    NodeNotInTree(NodeId),
    #[error("unsupported xpath syntax: {0}")]
    UnsupportedXPathSyntax(String),
    #[error("unsupported css selector syntax: {0}")]
    UnsupportedSelectorSyntax(String),
}

pub(crate) const VOID_ELEMENTS: &[&str] = &[
    "AREA", "BASE", "BR", "COL", "EMBED", "HR", "IMG", "INPUT", "LINK", "META", "PARAM", "SOURCE",
    "TRACK", "WBR",
];

pub(crate) const RAW_TEXT_ELEMENTS: &[&str] = &["SCRIPT", "STYLE", "TEXTAREA", "TITLE"];

impl DomTree {
    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0)
    }

    /// # Panics
    /// If `id` does not belong to this tree.
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1
    }

    pub fn element(&self, id: NodeId) -> Option<&Element> {
        self.get(id).and_then(Node::as_element)
    }

    pub fn repairs(&self) -> &[Repair] {
        &self.repairs
    }

    pub fn structural_repairs(&self) -> impl Iterator<Item = &Repair> {
        self.repairs.iter().filter(|r| r.kind.is_structural())
    }

    /// All element nodes in document order.
    pub fn elements(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            let node = self.node(id);
            if node.as_element().is_some() {
                out.push(id);
            }
            stack.extend(node.children.iter().rev().copied());
        }
        out
    }

    pub fn element_children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.node(id)
            .children
            .iter()
            .copied()
            .filter(|c| self.node(*c).as_element().is_some())
    }

    /// The first top-level element, normally `<html>`.
    pub fn document_element(&self) -> Option<NodeId> {
        self.element_children(self.root()).next()
    }

    pub fn find_first(&self, tag: &str) -> Option<NodeId> {
        let tag = tag.to_ascii_uppercase();
        self.elements()
            .into_iter()
            .find(|id| self.element(*id).is_some_and(|e| e.tag == tag))
    }

    pub fn text_content(&self, id: NodeId) -> String {
        let mut out = String::new();
        self.collect_text(id, &mut out);
        out
    }

    fn collect_text(&self, id: NodeId, out: &mut String) {
        match &self.node(id).data {
            NodeData::Text(t) => out.push_str(t),
            _ => {
                for c in &self.node(id).children {
                    self.collect_text(*c, out);
                }
            }
        }
    }

    /// Serializes a node the way `outerHTML` would for this tree.
    pub fn outer_html(&self, id: NodeId) -> String {
        let mut out = String::new();
        self.write_node(id, &mut out);
        out
    }

    /// Serializes the whole document.
    pub fn serialize(&self) -> String {
        self.outer_html(self.root())
    }

    fn write_node(&self, id: NodeId, out: &mut String) {
        let node = self.node(id);
        match &node.data {
            NodeData::Document => {
                for c in &node.children {
                    self.write_node(*c, out);
                }
            }
            NodeData::Doctype(d) => {
                out.push_str("<!");
                out.push_str(d);
                out.push('>');
            }
            NodeData::Text(t) => out.push_str(t),
            NodeData::Comment(c) => {
                out.push_str("<!--");
                out.push_str(c);
                out.push_str("-->");
            }
            NodeData::Element(e) => {
                let tag = e.tag.to_ascii_lowercase();
                out.push('<');
                out.push_str(&tag);
                for (k, v) in &e.attrs {
                    out.push(' ');
                    out.push_str(k);
                    out.push_str("=\"");
                    out.push_str(&v.replace('&', "&amp;").replace('"', "&quot;"));
                    out.push('"');
                }
                out.push('>');
                if VOID_ELEMENTS.contains(&e.tag.as_str()) {
                    return;
                }
                for c in &node.children {
                    self.write_node(*c, out);
                }
                out.push_str("</");
                out.push_str(&tag);
                out.push('>');
            }
        }
    }

    /// Structural equality of two trees, ignoring source spans.
    pub fn same_structure(&self, other: &DomTree) -> bool {
        fn eq(a: &DomTree, x: NodeId, b: &DomTree, y: NodeId) -> bool {
            let (nx, ny) = (a.node(x), b.node(y));
            nx.data == ny.data
                && nx.children.len() == ny.children.len()
                && nx
                    .children
                    .iter()
                    .zip(&ny.children)
                    .all(|(cx, cy)| eq(a, *cx, b, *cy))
        }
        eq(self, self.root(), other, other.root())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_content_and_outer_html() {
        let t = parse_html("<div class=\"a\"><p>hi <b>there</b></p><br></div>");
        let div = t.find_first("div").unwrap();
        assert_eq!(t.text_content(div), "hi there");
        assert_eq!(
            t.outer_html(div),
            "<div class=\"a\"><p>hi <b>there</b></p><br></div>"
        );
    }

    #[test]
    fn attribute_escaping_round_trips() {
        let t = parse_html("<a title='say \"hi\" &amp; go'>x</a>");
        let a = t.find_first("a").unwrap();
        assert_eq!(t.element(a).unwrap().attr("title"), Some("say \"hi\" & go"));
        let again = parse_html(&t.serialize());
        assert!(again.same_structure(&t));
    }

    #[test]
    fn elements_in_document_order() {
        let t = parse_html("<a><b></b><c><d></d></c></a><e></e>");
        let tags: Vec<_> = t
            .elements()
            .into_iter()
            .map(|id| t.element(id).unwrap().tag.clone())
            .collect();
        assert_eq!(tags, ["A", "B", "C", "D", "E"]);
    }
}
