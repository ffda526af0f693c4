#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sigloss/lineio.hpp"
#include "sigloss/model.hpp"

namespace sigloss::model {

class NtParseError : public Error {
 public:
  NtParseError(size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

namespace nt_detail {

inline void append_escaped(std::string& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
}

inline void append_term(std::string& out, const Term& t) {
  switch (t.kind) {
    case Term::Kind::Iri:
      out += '<';
      out += t.lexical;
      out += '>';
      break;
    case Term::Kind::Blank:
      out += "_:";
      out += t.lexical;
      break;
    case Term::Kind::LiteralString:
      out += '"';
      append_escaped(out, t.lexical);
      out += '"';
      break;
    case Term::Kind::LiteralDouble:
      out += '"';
      append_escaped(out, t.lexical);
      out += "\"^^<";
      out += vocab::kXsdDouble;
      out += '>';
      break;
  }
}

struct Cursor {
  std::string_view text;
  size_t pos = 0;
  size_t line = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw NtParseError(line, msg);
  }

  void skip_ws() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }

  bool at_end() const { return pos >= text.size(); }

  char peek() const { return pos < text.size() ? text[pos] : '\0'; }

  Term parse_term(bool allow_literal) {
    skip_ws();
    if (at_end()) fail("unexpected end of line, expected a term");
    char c = text[pos];
    if (c == '<') {
      size_t close = text.find('>', pos + 1);
      if (close == std::string_view::npos) fail("unterminated IRI");
      Term t = Term::iri(std::string(text.substr(pos + 1, close - pos - 1)));
      pos = close + 1;
      return t;
    }
    if (c == '_') {
      if (pos + 1 >= text.size() || text[pos + 1] != ':')
        fail("malformed blank node label");
      size_t start = pos + 2;
      size_t end = start;
      while (end < text.size() && text[end] != ' ' && text[end] != '\t') ++end;
      if (end == start) fail("empty blank node label");
      Term t = Term::blank(std::string(text.substr(start, end - start)));
      pos = end;
      return t;
    }
    if (c == '"') {
      if (!allow_literal) fail("literal not allowed in this position");
      std::string lex;
      ++pos;
      while (true) {
        if (at_end()) fail("unterminated literal");
        char d = text[pos++];
        if (d == '"') break;
        if (d == '\\') {
          if (at_end()) fail("dangling escape in literal");
          char e = text[pos++];
          switch (e) {
            case '\\': lex += '\\'; break;
            case '"': lex += '"'; break;
            case 'n': lex += '\n'; break;
            case 'r': lex += '\r'; break;
            case 't': lex += '\t'; break;
            default: fail("unsupported escape in literal");
          }
        } else {
          lex += d;
        }
      }
      if (pos + 1 < text.size() && text[pos] == '^' && text[pos + 1] == '^') {
        pos += 2;
        if (at_end() || text[pos] != '<') fail("expected datatype IRI after ^^");
        size_t close = text.find('>', pos + 1);
        if (close == std::string_view::npos) fail("unterminated datatype IRI");
        std::string_view dt = text.substr(pos + 1, close - pos - 1);
        pos = close + 1;
        if (dt == vocab::kXsdDouble) return Term::lit_double_lexical(std::move(lex));
        if (dt == vocab::kXsdString) return Term::lit_string(std::move(lex));
        fail("unsupported literal datatype <" + std::string(dt) + ">");
      }
      return Term::lit_string(std::move(lex));
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

}  // namespace nt_detail

// One triple per line: N-Triples syntax with the stream timestamp carried in
// a trailing "# t=<ms>" comment.
inline void append_ntriples_line(std::string& out, const TimestampedTriple& t) {
  nt_detail::append_term(out, t.subject);
  out += ' ';
  nt_detail::append_term(out, t.predicate);
  out += ' ';
  nt_detail::append_term(out, t.object);
  out += " . # t=";
  out += std::to_string(t.timestamp_ms);
}

inline std::string to_ntriples_line(const TimestampedTriple& t) {
  std::string out;
  out.reserve(192);
  append_ntriples_line(out, t);
  return out;
}

inline TimestampedTriple parse_ntriples_line(std::string_view line, size_t lineno) {
  nt_detail::Cursor cur{line, 0, lineno};
  TimestampedTriple t;
  t.subject = cur.parse_term(false);
  if (t.subject.is_literal()) cur.fail("literal subject");
  t.predicate = cur.parse_term(false);
  if (!t.predicate.is_iri()) cur.fail("predicate must be an IRI");
  t.object = cur.parse_term(true);
  cur.skip_ws();
  if (cur.peek() != '.') cur.fail("expected '.' terminator");
  ++cur.pos;
  cur.skip_ws();
  if (!cur.at_end()) {
    std::string_view rest = line.substr(cur.pos);
    if (rest.rfind("# t=", 0) != 0) cur.fail("unexpected trailing content");
    std::string_view num = rest.substr(4);
    int64_t ts = 0;
    bool ok = !num.empty();
    for (char c : num) {
      if (c < '0' || c > '9') { ok = false; break; }
      ts = ts * 10 + (c - '0');
    }
    if (!ok) cur.fail("malformed timestamp comment");
    t.timestamp_ms = ts;
  }
  return t;
}

inline void write_ntriples(std::ostream& os,
                           std::span<const TimestampedTriple> triples) {
  for (const auto& t : triples) os << to_ntriples_line(t) << '\n';
}

// Blank lines and full-line comments are skipped; malformed lines raise
// NtParseError with the 1-based line number.
inline std::vector<TimestampedTriple> read_ntriples(std::istream& is) {
  std::vector<TimestampedTriple> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view sv = line;
    size_t first = sv.find_first_not_of(" \t");
    if (first == std::string_view::npos) continue;
    if (sv[first] == '#') continue;
    out.push_back(parse_ntriples_line(sv, lineno));
  }
  return out;
}

template <typename Fn>
inline void for_each_ntriple(io::LineReader& reader, Fn&& fn) {
  std::string line;
  size_t lineno = 0;
  while (reader.getline(line)) {
    ++lineno;
    std::string_view sv = line;
    size_t first = sv.find_first_not_of(" \t");
    if (first == std::string_view::npos) continue;
    if (sv[first] == '#') continue;
    fn(parse_ntriples_line(sv, lineno), lineno);
  }
}

}  // namespace sigloss::model
