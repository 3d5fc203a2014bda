use serde::{Deserialize, Serialize};

use super::{compute_css_selector, compute_xpath, DomTree, LocateError, NodeId};

/// Maximum snippet length, in characters.
pub const SNIPPET_LIMIT: usize = 500;

/// Client-reported element rectangle in CSS pixels. Carried through, never interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementCitation {
    pub index: u32,
    pub xpath: String,
    pub css_selector: String,
    pub snippet: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounding_box: Option<BoundingBox>,
}

pub fn make_citation(
    tree: &DomTree,
    node: NodeId,
    index: u32,
) -> Result<ElementCitation, LocateError> {
    let xpath = compute_xpath(tree, node)?;
    let css_selector = compute_css_selector(tree, node)?;
    Ok(ElementCitation {
        index,
        xpath,
        css_selector,
        snippet: truncate_snippet(&tree.outer_html(node)),
        bounding_box: None,
    })
}

pub(crate) fn truncate_snippet(html: &str) -> String {
    html.chars().take(SNIPPET_LIMIT).collect()
}
