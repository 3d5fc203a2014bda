//! C ABI over the diff engine and the element locator.
//!
//! Every fallible function returns a [`CwStatus`] and writes its result
//! through an out-pointer. Strings returned to the caller are owned by the
//! caller and must be released with [`cw_string_free`]. Handles are released
//! with their matching `_free` function. After a non-`Ok` status,
//! [`cw_last_error_message`] describes the failure on the calling thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};

use courseware::diff::{apply_to_text, diff_texts, parse_unified_diff, DiffDocument, FuzzPolicy};
use courseware::dom::{
    compute_css_selector, compute_xpath, find_by_snippet, parse_html, resolve_css_selector,
    resolve_xpath, DomTree, NodeId,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CwStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    MalformedDiff = 3,
    PatchFailed = 4,
    NotFound = 5,
    UnsupportedSelector = 6,
    OutOfRange = 7,
    InteriorNul = 8,
    Panic = 99,
}

/// A parsed unified diff.
pub struct CwDiff {
    doc: DiffDocument,
}

/// A parsed HTML document. Elements are addressed by their index in
/// document order.
pub struct CwDocument {
    tree: DomTree,
    elements: Vec<NodeId>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn fail(status: CwStatus, msg: impl Into<String>) -> CwStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into [`CwStatus::Panic`].
fn guarded(f: impl FnOnce() -> CwStatus) -> CwStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(CwStatus::Panic, "internal panic"))
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, CwStatus> {
    if p.is_null() {
        return Err(fail(CwStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CwStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `out` is null or valid for a pointer write.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> CwStatus {
    if out.is_null() {
        return fail(CwStatus::NullArgument, "output pointer is null");
    }
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            CwStatus::Ok
        }
        Err(_) => fail(CwStatus::InteriorNul, "result contains a NUL byte"),
    }
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message for the last failure on this thread, or null. Valid until the
/// next call into this library on the same thread; do not free.
#[no_mangle]
pub extern "C" fn cw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses unified-diff text into a handle.
///
/// # Safety
/// `text` is a NUL-terminated string; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cw_diff_parse(text: *const c_char, out: *mut *mut CwDiff) -> CwStatus {
    guarded(|| {
        let text = try_status!(read_str(text, "text"));
        if out.is_null() {
            return fail(CwStatus::NullArgument, "output pointer is null");
        }
        match parse_unified_diff(text) {
            Ok(doc) => {
                *out = Box::into_raw(Box::new(CwDiff { doc }));
                CwStatus::Ok
            }
            Err(e) => fail(CwStatus::MalformedDiff, e.to_string()),
        }
    })
}

/// Diff of `original` against `modified` with three context lines.
///
/// # Safety
/// Both inputs are NUL-terminated strings; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cw_diff_create(
    original: *const c_char,
    modified: *const c_char,
    out: *mut *mut CwDiff,
) -> CwStatus {
    guarded(|| {
        let original = try_status!(read_str(original, "original"));
        let modified = try_status!(read_str(modified, "modified"));
        if out.is_null() {
            return fail(CwStatus::NullArgument, "output pointer is null");
        }
        *out = Box::into_raw(Box::new(CwDiff {
            doc: diff_texts(original, modified),
        }));
        CwStatus::Ok
    })
}

/// # Safety
/// `diff` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cw_diff_free(diff: *mut CwDiff) {
    if !diff.is_null() {
        drop(Box::from_raw(diff));
    }
}

/// Number of hunks, or 0 for a null handle.
///
/// # Safety
/// `diff` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cw_diff_hunk_count(diff: *const CwDiff) -> size_t {
    diff.as_ref().map_or(0, |d| d.doc.hunks.len())
}

/// Serializes the diff back to unified-diff text.
///
/// # Safety
/// `diff` is a live handle; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cw_diff_to_string(diff: *const CwDiff, out: *mut *mut c_char) -> CwStatus {
    guarded(|| match diff.as_ref() {
        Some(d) => write_string(out, d.doc.to_string()),
        None => fail(CwStatus::NullArgument, "diff is null"),
    })
}

/// Applies the diff to `original`. With `fuzzy` false, hunks must match at
/// their declared positions byte for byte. Application is all or nothing.
///
/// # Safety
/// `diff` is a live handle, `original` a NUL-terminated string and `out`
/// valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cw_diff_apply(
    diff: *const CwDiff,
    original: *const c_char,
    fuzzy: bool,
    out: *mut *mut c_char,
) -> CwStatus {
    guarded(|| {
        let Some(d) = diff.as_ref() else {
            return fail(CwStatus::NullArgument, "diff is null");
        };
        let original = try_status!(read_str(original, "original"));
        let policy = if fuzzy {
            FuzzPolicy::default()
        } else {
            FuzzPolicy::exact()
        };
        match apply_to_text(original, &d.doc, &policy) {
            Ok((patched, _)) => write_string(out, patched),
            Err(e) => fail(CwStatus::PatchFailed, e.to_string()),
        }
    })
}

/// Parses HTML with error recovery; never fails on malformed markup.
///
/// # Safety
/// `html` is a NUL-terminated string; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cw_document_parse(
    html: *const c_char,
    out: *mut *mut CwDocument,
) -> CwStatus {
    guarded(|| {
        let html = try_status!(read_str(html, "html"));
        if out.is_null() {
            return fail(CwStatus::NullArgument, "output pointer is null");
        }
        let tree = parse_html(html);
        let elements = tree.elements();
        *out = Box::into_raw(Box::new(CwDocument { tree, elements }));
        CwStatus::Ok
    })
}

/// # Safety
/// `doc` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cw_document_free(doc: *mut CwDocument) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// Number of elements, or 0 for a null handle.
///
/// # Safety
/// `doc` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cw_document_element_count(doc: *const CwDocument) -> size_t {
    doc.as_ref().map_or(0, |d| d.elements.len())
}

fn index_of(doc: &CwDocument, node: Option<NodeId>, what: &str) -> Result<usize, CwStatus> {
    node.and_then(|n| doc.elements.iter().position(|&e| e == n))
        .ok_or_else(|| fail(CwStatus::NotFound, format!("no element matches {what}")))
}

/// # Safety
/// `doc` is null or a live handle; `out` is null or valid for a write.
unsafe fn write_index(out: *mut size_t, index: usize) -> CwStatus {
    if out.is_null() {
        return fail(CwStatus::NullArgument, "output pointer is null");
    }
    *out = index;
    CwStatus::Ok
}

/// Resolves an XPath to an element index.
///
/// # Safety
/// `doc` is a live handle, `xpath` a NUL-terminated string and `out` valid
/// for a write.
#[no_mangle]
pub unsafe extern "C" fn cw_document_resolve_xpath(
    doc: *const CwDocument,
    xpath: *const c_char,
    out: *mut size_t,
) -> CwStatus {
    guarded(|| {
        let Some(d) = doc.as_ref() else {
            return fail(CwStatus::NullArgument, "document is null");
        };
        let xpath = try_status!(read_str(xpath, "xpath"));
        let node = try_status!(resolve_xpath(&d.tree, xpath)
            .map_err(|e| fail(CwStatus::UnsupportedSelector, e.to_string())));
        write_index(out, try_status!(index_of(d, node, xpath)))
    })
}

/// Resolves a CSS selector to an element index.
///
/// # Safety
/// `doc` is a live handle, `selector` a NUL-terminated string and `out`
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn cw_document_resolve_css(
    doc: *const CwDocument,
    selector: *const c_char,
    out: *mut size_t,
) -> CwStatus {
    guarded(|| {
        let Some(d) = doc.as_ref() else {
            return fail(CwStatus::NullArgument, "document is null");
        };
        let selector = try_status!(read_str(selector, "selector"));
        let node = try_status!(resolve_css_selector(&d.tree, selector)
            .map_err(|e| fail(CwStatus::UnsupportedSelector, e.to_string())));
        write_index(out, try_status!(index_of(d, node, selector)))
    })
}

/// Finds the element whose markup best matches `snippet`.
///
/// # Safety
/// `doc` is a live handle, `snippet` a NUL-terminated string and `out`
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn cw_document_find_snippet(
    doc: *const CwDocument,
    snippet: *const c_char,
    out: *mut size_t,
) -> CwStatus {
    guarded(|| {
        let Some(d) = doc.as_ref() else {
            return fail(CwStatus::NullArgument, "document is null");
        };
        let snippet = try_status!(read_str(snippet, "snippet"));
        write_index(
            out,
            try_status!(index_of(
                d,
                find_by_snippet(&d.tree, snippet),
                "the snippet"
            )),
        )
    })
}

/// # Safety
/// `doc` is null or a live handle.
unsafe fn element_at<'a>(
    doc: *const CwDocument,
    index: size_t,
) -> Result<(&'a CwDocument, NodeId), CwStatus> {
    let d = doc
        .as_ref()
        .ok_or_else(|| fail(CwStatus::NullArgument, "document is null"))?;
    let node = d.elements.get(index).copied().ok_or_else(|| {
        fail(
            CwStatus::OutOfRange,
            format!("element index {index} out of range"),
        )
    })?;
    Ok((d, node))
}

/// Positional XPath of the element at `index`.
///
/// # Safety
/// `doc` is a live handle; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cw_document_xpath(
    doc: *const CwDocument,
    index: size_t,
    out: *mut *mut c_char,
) -> CwStatus {
    guarded(|| {
        let (d, node) = try_status!(element_at(doc, index));
        match compute_xpath(&d.tree, node) {
            Ok(x) => write_string(out, x),
            Err(e) => fail(CwStatus::NotFound, e.to_string()),
        }
    })
}

/// CSS selector of the element at `index`.
///
/// # Safety
/// `doc` is a live handle; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cw_document_css_selector(
    doc: *const CwDocument,
    index: size_t,
    out: *mut *mut c_char,
) -> CwStatus {
    guarded(|| {
        let (d, node) = try_status!(element_at(doc, index));
        match compute_css_selector(&d.tree, node) {
            Ok(x) => write_string(out, x),
            Err(e) => fail(CwStatus::NotFound, e.to_string()),
        }
    })
}

/// Serialized markup of the element at `index`.
///
/// # Safety
/// `doc` is a live handle; `out` is valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cw_document_outer_html(
    doc: *const CwDocument,
    index: size_t,
    out: *mut *mut c_char,
) -> CwStatus {
    guarded(|| {
        let (d, node) = try_status!(element_at(doc, index));
        write_string(out, d.tree.outer_html(node))
    })
}
