// Hand-written scanner for the subset of the YARA grammar needed to pull the
// `strings:` section out of a rule. Conditions are skipped over lexically.

#include <cctype>
#include <string>

#include "hayama/yara.hpp"

namespace hayama::yara {
namespace {

struct SyntaxError {
  std::size_t line;
  std::string message;
};

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t extra;
    if (c < 0x80) extra = 0;
    else if ((c & 0xE0) == 0xC0 && c >= 0xC2) extra = 1;
    else if ((c & 0xF0) == 0xE0) extra = 2;
    else if ((c & 0xF8) == 0xF0 && c <= 0xF4) extra = 3;
    else return false;
    if (i + extra >= s.size() && extra > 0) return false;
    for (std::size_t k = 1; k <= extra; ++k)
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    i += extra + 1;
  }
  return true;
}

class RuleScanner {
 public:
  RuleScanner(std::string path, std::string_view text) : path_(std::move(path)), text_(text) {}

  ParseResult run() {
    ParseResult out;
    if (!valid_utf8(text_))
      out.diagnostics.push_back({path_, 1, "not valid UTF-8; bytes read as Latin-1"});
    while (true) {
      std::size_t item_start = pos_;
      try {
        skip_trivia();
        item_start = pos_;
        if (eof()) break;
        if (!is_ident_start(peek())) throw SyntaxError{line_, "unexpected character at top level"};
        std::size_t word_start = pos_;
        std::string word = identifier();
        if (word == "import" || word == "include") {
          skip_trivia();
          if (peek() == '"') skip_text_literal();
          continue;
        }
        if (word == "private" || word == "global") continue;
        if (word != "rule") {
          pos_ = word_start;
          throw SyntaxError{line_, "expected 'rule', found '" + word + "'"};
        }
        out.rules.push_back(parse_rule());
      } catch (const SyntaxError& e) {
        out.diagnostics.push_back({path_, e.line, e.message});
        resync(item_start);
      }
    }
    return out;
  }

 private:
  bool eof() const { return pos_ >= text_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }
  char advance() {
    char c = text_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }

  void skip_trivia() {
    while (!eof()) {
      char c = peek();
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '/' && peek(1) == '/') {
        while (!eof() && peek() != '\n') advance();
      } else if (c == '/' && peek(1) == '*') {
        std::size_t start_line = line_;
        advance();
        advance();
        while (!eof() && !(peek() == '*' && peek(1) == '/')) advance();
        if (eof()) throw SyntaxError{start_line, "unterminated block comment"};
        advance();
        advance();
      } else {
        break;
      }
    }
  }

  // Spaces, tabs and comments on the current line only.
  void skip_inline_trivia() {
    while (!eof()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r') advance();
      else if (c == '/' && peek(1) == '*') {
        advance();
        advance();
        while (!eof() && !(peek() == '*' && peek(1) == '/')) advance();
        if (eof()) throw SyntaxError{line_, "unterminated block comment"};
        advance();
        advance();
      } else break;
    }
  }

  std::string identifier() {
    std::size_t start = pos_;
    while (!eof() && is_ident_char(peek())) advance();
    return std::string(text_.substr(start, pos_ - start));
  }

  void expect(char c, const char* what) {
    skip_trivia();
    if (peek() != c) throw SyntaxError{line_, std::string("expected ") + what};
    advance();
  }

  void skip_text_literal() {
    std::size_t start_line = line_;
    advance();  // opening quote
    while (true) {
      if (eof() || peek() == '\n') throw SyntaxError{start_line, "unterminated string literal"};
      char c = advance();
      if (c == '\\') {
        if (eof() || peek() == '\n') throw SyntaxError{start_line, "unterminated string literal"};
        advance();
      } else if (c == '"') {
        return;
      }
    }
  }

  void skip_regex_literal() {
    std::size_t start_line = line_;
    advance();
    while (true) {
      if (eof() || peek() == '\n') throw SyntaxError{start_line, "unterminated regular expression"};
      char c = advance();
      if (c == '\\') {
        if (!eof()) advance();
      } else if (c == '/') {
        break;
      }
    }
    while (!eof() && std::isalpha(static_cast<unsigned char>(peek()))) advance();
  }

  void skip_hex_literal() {
    std::size_t start_line = line_;
    advance();
    while (true) {
      if (eof()) throw SyntaxError{start_line, "unterminated hex string"};
      char c = peek();
      if (c == '}') {
        advance();
        return;
      }
      if (c == '{' || c == '"' || c == '$') throw SyntaxError{start_line, "unterminated hex string"};
      if (c == '/' && (peek(1) == '/' || peek(1) == '*')) {
        skip_trivia();
        continue;
      }
      advance();
    }
  }

  // True when the upcoming tokens are `<ident> :` (a section header).
  bool at_section_header() const {
    std::size_t p = pos_;
    if (p >= text_.size() || !is_ident_start(text_[p])) return false;
    while (p < text_.size() && is_ident_char(text_[p])) ++p;
    while (p < text_.size() && (text_[p] == ' ' || text_[p] == '\t')) ++p;
    return p < text_.size() && text_[p] == ':';
  }

  RawRule parse_rule() {
    RawRule rule;
    rule.source_path = path_;
    skip_trivia();
    if (!is_ident_start(peek())) throw SyntaxError{line_, "missing rule name"};
    rule.rule_name = identifier();
    std::size_t rule_line = line_;
    skip_trivia();
    if (peek() == ':') {
      advance();
      skip_trivia();
      while (!eof() && is_ident_start(peek())) {
        identifier();
        skip_trivia();
      }
    }
    expect('{', "'{' after rule name");

    while (true) {
      skip_trivia();
      if (eof()) throw SyntaxError{rule_line, "rule '" + rule.rule_name + "': unbalanced braces"};
      if (peek() == '}') {
        advance();
        return rule;
      }
      if (!is_ident_start(peek()))
        throw SyntaxError{line_, "rule '" + rule.rule_name + "': expected section"};
      std::string section = identifier();
      expect(':', "':' after section name");
      if (section == "meta") {
        parse_meta();
      } else if (section == "strings") {
        parse_strings(rule);
      } else if (section == "condition") {
        rule.condition_text = capture_condition(rule);
        return rule;
      } else {
        throw SyntaxError{line_, "rule '" + rule.rule_name + "': unknown section '" + section + "'"};
      }
    }
  }

  void parse_meta() {
    while (true) {
      skip_trivia();
      if (eof() || peek() == '}' || at_section_header()) return;
      if (!is_ident_start(peek())) throw SyntaxError{line_, "malformed meta entry"};
      identifier();
      expect('=', "'=' in meta entry");
      skip_trivia();
      if (peek() == '"') {
        skip_text_literal();
      } else {
        if (peek() == '-') advance();
        if (!is_ident_char(peek())) throw SyntaxError{line_, "malformed meta value"};
        while (!eof() && (is_ident_char(peek()) || peek() == '.')) advance();
      }
    }
  }

  void parse_strings(RawRule& rule) {
    while (true) {
      skip_trivia();
      if (peek() != '$') return;
      std::size_t def_line = line_;
      std::size_t start = pos_;
      advance();
      while (!eof() && is_ident_char(peek())) advance();
      std::string ident(text_.substr(start, pos_ - start));
      expect('=', "'=' after string identifier");
      skip_trivia();
      std::size_t value_start = pos_;
      char c = peek();
      if (c == '"') skip_text_literal();
      else if (c == '{') skip_hex_literal();
      else if (c == '/') skip_regex_literal();
      else throw SyntaxError{def_line, "string " + ident + ": unrecognized value"};
      std::size_t value_end = pos_;

      // Modifiers: identifiers, optionally with a parenthesized argument.
      while (true) {
        std::size_t save_pos = pos_;
        std::size_t save_line = line_;
        skip_trivia();
        if (eof() || !is_ident_start(peek()) || at_section_header()) {
          pos_ = save_pos;
          line_ = save_line;
          break;
        }
        identifier();
        skip_inline_trivia();
        if (peek() == '(') {
          int depth = 0;
          do {
            if (eof()) throw SyntaxError{def_line, "string " + ident + ": unbalanced modifier"};
            if (peek() == '"') {
              skip_text_literal();
              continue;
            }
            char m = advance();
            if (m == '(') ++depth;
            else if (m == ')') --depth;
          } while (depth > 0);
        }
        value_end = pos_;
      }
      rule.strings_block.emplace_back(ident, std::string(text_.substr(value_start, value_end - value_start)));
    }
  }

  bool at_rule_keyword_line() const {
    // Called at the start of a line (after leading whitespace was consumed).
    std::size_t p = pos_;
    auto word_at = [&](std::size_t q, std::string_view w) {
      return text_.substr(q, w.size()) == w &&
             (q + w.size() >= text_.size() || !is_ident_char(text_[q + w.size()]));
    };
    for (std::string_view prefix : {"private", "global"}) {
      if (word_at(p, prefix)) {
        p += prefix.size();
        while (p < text_.size() && (text_[p] == ' ' || text_[p] == '\t')) ++p;
      }
    }
    return word_at(p, "rule");
  }

  std::string capture_condition(const RawRule& rule) {
    skip_trivia();
    std::size_t start = pos_;
    bool line_start = false;
    std::string prev_word;
    while (true) {
      if (eof()) throw SyntaxError{line_, "rule '" + rule.rule_name + "': unbalanced braces"};
      char c = peek();
      if (line_start && !std::isspace(static_cast<unsigned char>(c)) && at_rule_keyword_line())
        throw SyntaxError{line_, "rule '" + rule.rule_name + "': unbalanced braces"};
      if (c == '\n') {
        line_start = true;
        advance();
        continue;
      }
      if (!std::isspace(static_cast<unsigned char>(c))) line_start = false;
      if (c == '}') {
        std::size_t end = pos_;
        advance();
        std::string_view body = text_.substr(start, end - start);
        while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back())))
          body.remove_suffix(1);
        return std::string(body);
      }
      if (c == '"') {
        skip_text_literal();
        prev_word.clear();
      } else if (c == '/' && (peek(1) == '/' || peek(1) == '*')) {
        skip_trivia();
      } else if (c == '/' && prev_word == "matches") {
        skip_regex_literal();
        prev_word.clear();
      } else if (is_ident_start(c)) {
        prev_word = identifier();
      } else {
        if (!std::isspace(static_cast<unsigned char>(c))) prev_word.clear();
        advance();
      }
    }
  }

  void resync(std::size_t failed_at) {
    // Skip to the next line that starts a rule. A failure detected at the
    // start of the following rule leaves us positioned on it already.
    if (pos_ > failed_at && at_rule_keyword_line()) return;
    while (!eof() && peek() != '\n') advance();
    while (!eof()) {
      advance();  // newline
      while (!eof() && (peek() == ' ' || peek() == '\t')) advance();
      if (at_rule_keyword_line()) return;
      while (!eof() && peek() != '\n') advance();
    }
  }

  std::string path_;
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

ParseResult parse_rule_file(const std::string& path, std::string_view bytes) {
  return RuleScanner(path, bytes).run();
}

}  // namespace hayama::yara
