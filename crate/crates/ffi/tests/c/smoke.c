#include <stdio.h>
#include <string.h>
#include "courseware.h"

#define CHECK(cond)                                              \
  do {                                                           \
    if (!(cond)) {                                               \
      const char *m = cw_last_error_message();                   \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,     \
              m ? m : "no message");                             \
      return 1;                                                  \
    }                                                            \
  } while (0)

int main(void) {
  const char *a = "<ul>\n<li>one</li>\n<li>two</li>\n</ul>\n";
  const char *b = "<ul>\n<li>one</li>\n<li>TWO</li>\n</ul>\n";

  CwDiff *diff = NULL;
  CHECK(cw_diff_create(a, b, &diff) == CW_STATUS_OK);
  CHECK(cw_diff_hunk_count(diff) == 1);
  char *patched = NULL;
  CHECK(cw_diff_apply(diff, a, false, &patched) == CW_STATUS_OK);
  CHECK(strcmp(patched, b) == 0);
  cw_string_free(patched);
  cw_diff_free(diff);

  CHECK(cw_diff_parse("not a diff", &diff) == CW_STATUS_MALFORMED_DIFF);
  CHECK(cw_last_error_message() != NULL);

  CwDocument *doc = NULL;
  CHECK(cw_document_parse(b, &doc) == CW_STATUS_OK);
  size_t index = 0;
  CHECK(cw_document_resolve_css(doc, "ul > li:nth-of-type(2)", &index) == CW_STATUS_OK);
  char *xpath = NULL;
  CHECK(cw_document_xpath(doc, index, &xpath) == CW_STATUS_OK);
  size_t again = 99;
  CHECK(cw_document_resolve_xpath(doc, xpath, &again) == CW_STATUS_OK);
  CHECK(again == index);
  char *html = NULL;
  CHECK(cw_document_outer_html(doc, index, &html) == CW_STATUS_OK);
  CHECK(strcmp(html, "<li>TWO</li>") == 0);
  printf("%s\n", xpath);
  cw_string_free(xpath);
  cw_string_free(html);
  CHECK(cw_document_xpath(doc, 1000, &xpath) == CW_STATUS_OUT_OF_RANGE);
  cw_document_free(doc);
  return 0;
}
