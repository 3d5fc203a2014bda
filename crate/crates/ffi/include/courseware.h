#ifndef COURSEWARE_H
#define COURSEWARE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum CwStatus {
  CW_STATUS_OK = 0,
  CW_STATUS_NULL_ARGUMENT = 1,
  CW_STATUS_INVALID_UTF8 = 2,
  CW_STATUS_MALFORMED_DIFF = 3,
  CW_STATUS_PATCH_FAILED = 4,
  CW_STATUS_NOT_FOUND = 5,
  CW_STATUS_UNSUPPORTED_SELECTOR = 6,
  CW_STATUS_OUT_OF_RANGE = 7,
  CW_STATUS_INTERIOR_NUL = 8,
  CW_STATUS_PANIC = 99,
} CwStatus;

/**
 * A parsed unified diff.
 */
typedef struct CwDiff CwDiff;

/**
 * A parsed HTML document. Elements are addressed by their index in
 * document order.
 */
typedef struct CwDocument CwDocument;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next call into this library on the same thread; do not free.
 */
const char *cw_last_error_message(void);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void cw_string_free(char *s);

/**
 * Parses unified-diff text into a handle.
 *
 * # Safety
 * `text` is a NUL-terminated string; `out` is valid for a pointer write.
 */
enum CwStatus cw_diff_parse(const char *text, struct CwDiff **out);

/**
 * Diff of `original` against `modified` with three context lines.
 *
 * # Safety
 * Both inputs are NUL-terminated strings; `out` is valid for a pointer write.
 */
enum CwStatus cw_diff_create(const char *original, const char *modified, struct CwDiff **out);

/**
 * # Safety
 * `diff` is null or a live handle.
 */
void cw_diff_free(struct CwDiff *diff);

/**
 * Number of hunks, or 0 for a null handle.
 *
 * # Safety
 * `diff` is null or a live handle.
 */
size_t cw_diff_hunk_count(const struct CwDiff *diff);

/**
 * Serializes the diff back to unified-diff text.
 *
 * # Safety
 * `diff` is a live handle; `out` is valid for a pointer write.
 */
enum CwStatus cw_diff_to_string(const struct CwDiff *diff, char **out);

/**
 * Applies the diff to `original`. With `fuzzy` false, hunks must match at
 * their declared positions byte for byte. Application is all or nothing.
 *
 * # Safety
 * `diff` is a live handle, `original` a NUL-terminated string and `out`
 * valid for a pointer write.
 */
enum CwStatus cw_diff_apply(const struct CwDiff *diff,
                            const char *original,
                            bool fuzzy,
                            char **out);

/**
 * Parses HTML with error recovery; never fails on malformed markup.
 *
 * # Safety
 * `html` is a NUL-terminated string; `out` is valid for a pointer write.
 */
enum CwStatus cw_document_parse(const char *html, struct CwDocument **out);

/**
 * # Safety
 * `doc` is null or a live handle.
 */
void cw_document_free(struct CwDocument *doc);

/**
 * Number of elements, or 0 for a null handle.
 *
 * # Safety
 * `doc` is null or a live handle.
 */
size_t cw_document_element_count(const struct CwDocument *doc);

/**
 * Resolves an XPath to an element index.
 *
 * # Safety
 * `doc` is a live handle, `xpath` a NUL-terminated string and `out` valid
 * for a write.
 */
enum CwStatus cw_document_resolve_xpath(const struct CwDocument *doc,
                                        const char *xpath,
                                        size_t *out);

/**
 * Resolves a CSS selector to an element index.
 *
 * # Safety
 * `doc` is a live handle, `selector` a NUL-terminated string and `out`
 * valid for a write.
 */
enum CwStatus cw_document_resolve_css(const struct CwDocument *doc,
                                      const char *selector,
                                      size_t *out);

/**
 * Finds the element whose markup best matches `snippet`.
 *
 * # Safety
 * `doc` is a live handle, `snippet` a NUL-terminated string and `out`
 * valid for a write.
 */
enum CwStatus cw_document_find_snippet(const struct CwDocument *doc,
                                       const char *snippet,
                                       size_t *out);

/**
 * Positional XPath of the element at `index`.
 *
 * # Safety
 * `doc` is a live handle; `out` is valid for a pointer write.
 */
enum CwStatus cw_document_xpath(const struct CwDocument *doc, size_t index, char **out);

/**
 * CSS selector of the element at `index`.
 *
 * # Safety
 * `doc` is a live handle; `out` is valid for a pointer write.
 */
enum CwStatus cw_document_css_selector(const struct CwDocument *doc, size_t index, char **out);

/**
 * Serialized markup of the element at `index`.
 *
 * # Safety
 * `doc` is a live handle; `out` is valid for a pointer write.
 */
enum CwStatus cw_document_outer_html(const struct CwDocument *doc, size_t index, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COURSEWARE_H */
