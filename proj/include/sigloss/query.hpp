#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sigloss/model.hpp"

namespace sigloss::query {

// ---------------------------------------------------------------------------
// AST

struct Variable {
  std::string name;  // without the leading '?'
  friend auto operator<=>(const Variable&, const Variable&) = default;
};

using PatternTerm = std::variant<Variable, model::Term>;

struct TriplePattern {
  PatternTerm subject;
  PatternTerm predicate;
  PatternTerm object;
  friend bool operator==(const TriplePattern&, const TriplePattern&) = default;
};

struct Aggregate {
  bool distinct = false;
  Variable var;    // counted variable
  Variable alias;  // projected name
  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

using ProjectionItem = std::variant<Aggregate, Variable>;

// round(?var * factor) AS ?alias
struct BindRound {
  std::string fn_iri;  // resolved function IRI; local name must be "round"
  Variable input;
  double factor = 1.0;
  Variable alias;
  friend bool operator==(const BindRound&, const BindRound&) = default;
};

enum class CmpOp { Gt, Ge, Lt, Le, Eq };

struct Having {
  Variable var;
  CmpOp op = CmpOp::Gt;
  double threshold = 0.0;
  friend bool operator==(const Having&, const Having&) = default;
};

struct WindowSpec {
  int64_t range_ms = 0;
  int64_t step_ms = 0;
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

struct ContinuousQuery {
  std::string name;
  std::map<std::string, std::string> prefixes;
  std::vector<ProjectionItem> projection;
  std::string stream_iri;
  WindowSpec window;
  std::vector<TriplePattern> patterns;
  std::vector<BindRound> binds;
  std::vector<Variable> group_by;
  std::optional<Having> having;
  friend bool operator==(const ContinuousQuery&, const ContinuousQuery&) = default;
};

// ---------------------------------------------------------------------------
// Errors and diagnostics

class QueryError : public Error {
 public:
  enum class Kind { Lexical, Syntax, UnknownPrefix, MissingWindow, Validation };

  QueryError(Kind kind, size_t line, size_t col, const std::string& what)
      : Error(std::to_string(line) + ":" + std::to_string(col) + ": " + what),
        kind_(kind),
        line_(line),
        col_(col) {}

  Kind kind() const { return kind_; }
  size_t line() const { return line_; }
  size_t col() const { return col_; }

 private:
  Kind kind_;
  size_t line_;
  size_t col_;
};

enum class Severity { Error, Warning };

struct Diagnostic {
  std::string code;
  Severity severity = Severity::Error;
  std::string message;
};

// ---------------------------------------------------------------------------
// Lexer

namespace lex {

enum class TokType {
  Keyword,   // text = upper-cased keyword
  Ident,     // bare identifier (query names)
  Var,       // text = name without '?'
  PName,     // text = prefix, aux = local (may be empty)
  Iri,       // text = IRI content
  Number,    // num
  Duration,  // dur (milliseconds)
  String,    // text = unescaped value
  Punct,     // text = "{", "}", "(", ")", "[", "]", ".", ";", "*", "=", "<", "<=", ">", ">="
  End,
};

struct Token {
  TokType type = TokType::End;
  std::string text;
  std::string aux;
  double num = 0.0;
  int64_t dur = 0;
  size_t line = 1;
  size_t col = 1;
};

inline const std::set<std::string>& keywords() {
  static const std::set<std::string> kw = {
      "REGISTER", "QUERY", "AS", "PREFIX", "SELECT", "COUNT", "DISTINCT",
      "FROM", "STREAM", "RANGE", "STEP", "WHERE", "BIND", "GROUP", "BY",
      "HAVING"};
  return kw;
}

inline bool ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
inline bool ident_char(char c) {
  return ident_start(c) || (c >= '0' && c <= '9') || c == '-';
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      Token t = next();
      bool end = t.type == TokType::End;
      out.push_back(std::move(t));
      if (end) break;
    }
    return out;
  }

 private:
  [[noreturn]] void fail(size_t line, size_t col, const std::string& msg) {
    throw QueryError(QueryError::Kind::Lexical, line, col, msg);
  }

  char peek(size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }

  char advance() {
    char c = text_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_trivia() {
    while (pos_ < text_.size()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '#') {
        while (pos_ < text_.size() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  Token make(TokType type, size_t line, size_t col) {
    Token t;
    t.type = type;
    t.line = line;
    t.col = col;
    return t;
  }

  Token next() {
    skip_trivia();
    size_t line = line_, col = col_;
    if (pos_ >= text_.size()) return make(TokType::End, line, col);
    char c = peek();

    if (c == '<') {
      // IRI when the bracket is immediately followed by IRI-ish content;
      // otherwise the comparison operator.
      char n = peek(1);
      if (ident_start(n) || n == '/' || n == '~' || n == ':') {
        advance();
        std::string iri;
        while (true) {
          if (pos_ >= text_.size()) fail(line, col, "unterminated IRI");
          char d = advance();
          if (d == '>') break;
          if (d == '\n' || d == ' ' || d == '\t')
            fail(line, col, "whitespace inside IRI");
          iri += d;
        }
        Token t = make(TokType::Iri, line, col);
        t.text = std::move(iri);
        return t;
      }
      advance();
      Token t = make(TokType::Punct, line, col);
      t.text = "<";
      if (peek() == '=') {
        advance();
        t.text = "<=";
      }
      return t;
    }

    if (c == '>') {
      advance();
      Token t = make(TokType::Punct, line, col);
      t.text = ">";
      if (peek() == '=') {
        advance();
        t.text = ">=";
      }
      return t;
    }

    if (std::string_view("{}()[].;*=").find(c) != std::string_view::npos) {
      advance();
      Token t = make(TokType::Punct, line, col);
      t.text = std::string(1, c);
      return t;
    }

    if (c == '?') {
      advance();
      std::string name;
      while (pos_ < text_.size() && (ident_char(peek()))) name += advance();
      if (name.empty()) fail(line, col, "empty variable name after '?'");
      Token t = make(TokType::Var, line, col);
      t.text = std::move(name);
      return t;
    }

    if (c == '"') {
      advance();
      std::string value;
      while (true) {
        if (pos_ >= text_.size()) fail(line, col, "unterminated string literal");
        char d = advance();
        if (d == '"') break;
        if (d == '\\') {
          if (pos_ >= text_.size()) fail(line, col, "dangling escape");
          char e = advance();
          switch (e) {
            case '\\': value += '\\'; break;
            case '"': value += '"'; break;
            case 'n': value += '\n'; break;
            case 'r': value += '\r'; break;
            case 't': value += '\t'; break;
            default: fail(line, col, "unsupported escape in string literal");
          }
        } else {
          value += d;
        }
      }
      Token t = make(TokType::String, line, col);
      t.text = std::move(value);
      if (peek() == '^' && peek(1) == '^') {
        advance();
        advance();
        // Raw datatype reference; the parser resolves prefixed names.
        if (peek() == '<') {
          advance();
          std::string iri = "<";
          while (true) {
            if (pos_ >= text_.size()) fail(line, col, "unterminated datatype IRI");
            char d = advance();
            iri += d;
            if (d == '>') break;
          }
          t.aux = std::move(iri);
        } else if (ident_start(peek())) {
          std::string prefix;
          while (pos_ < text_.size() && ident_char(peek())) prefix += advance();
          if (peek() != ':') fail(line, col, "expected a datatype after ^^");
          advance();
          std::string local;
          while (pos_ < text_.size() && ident_char(peek())) local += advance();
          t.aux = prefix + ":" + local;
        } else {
          fail(line, col, "expected a datatype after ^^");
        }
      }
      return t;
    }

    bool neg = false;
    if (c == '-' && peek(1) >= '0' && peek(1) <= '9') {
      neg = true;
      advance();
      c = peek();
    }
    if (c >= '0' && c <= '9') {
      std::string digits;
      while (pos_ < text_.size() && peek() >= '0' && peek() <= '9')
        digits += advance();
      bool fractional = false;
      if (peek() == '.' && peek(1) >= '0' && peek(1) <= '9') {
        fractional = true;
        digits += advance();
        while (pos_ < text_.size() && peek() >= '0' && peek() <= '9')
          digits += advance();
      }
      std::string unit;
      while (pos_ < text_.size() && ident_start(peek())) unit += advance();
      if (!unit.empty()) {
        if (fractional || neg)
          fail(line, col, "durations must be non-negative integers");
        int64_t value = 0;
        for (char d : digits) value = value * 10 + (d - '0');
        int64_t scale = 0;
        if (unit == "ms") scale = 1;
        else if (unit == "s") scale = 1000;
        else if (unit == "m") scale = 60'000;
        else if (unit == "h") scale = 3'600'000;
        else fail(line, col, "unknown duration unit '" + unit + "'");
        Token t = make(TokType::Duration, line, col);
        t.dur = value * scale;
        return t;
      }
      auto parsed = model::parse_double_lexical(digits);
      if (!parsed) fail(line, col, "malformed number");
      Token t = make(TokType::Number, line, col);
      t.num = neg ? -*parsed : *parsed;
      return t;
    }
    if (neg) fail(line, col, "dangling '-'");

    if (ident_start(c)) {
      std::string word;
      while (pos_ < text_.size() && ident_char(peek())) word += advance();
      if (peek() == ':') {
        advance();
        std::string local;
        while (pos_ < text_.size() && ident_char(peek())) local += advance();
        Token t = make(TokType::PName, line, col);
        t.text = std::move(word);
        t.aux = std::move(local);
        return t;
      }
      std::string upper = word;
      std::transform(upper.begin(), upper.end(), upper.begin(),
                     [](unsigned char ch) { return std::toupper(ch); });
      if (keywords().count(upper)) {
        Token t = make(TokType::Keyword, line, col);
        t.text = std::move(upper);
        t.aux = std::move(word);
        return t;
      }
      Token t = make(TokType::Ident, line, col);
      t.text = std::move(word);
      return t;
    }

    fail(line, col, std::string("unexpected character '") + c + "'");
  }

  std::string_view text_;
  size_t pos_ = 0;
  size_t line_ = 1;
  size_t col_ = 1;
};

}  // namespace lex

// ---------------------------------------------------------------------------
// Parser

namespace parse_detail {

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(lex::Lexer(text).run()) {}

  ContinuousQuery run() {
    ContinuousQuery q;
    expect_keyword("REGISTER");
    expect_keyword("QUERY");
    q.name = expect_name();
    expect_keyword("AS");
    while (at_keyword("PREFIX")) parse_prefix(q);
    parse_select(q);
    parse_from(q);
    parse_where(q);
    if (at_keyword("GROUP")) parse_group_by(q);
    if (at_keyword("HAVING")) parse_having(q);
    if (cur().type != lex::TokType::End)
      fail_syntax("unexpected content after query");
    return q;
  }

 private:
  const lex::Token& cur() const { return toks_[idx_]; }

  const lex::Token& next() { return toks_[idx_++]; }

  [[noreturn]] void fail_syntax(const std::string& msg) const {
    const auto& t = cur();
    throw QueryError(QueryError::Kind::Syntax, t.line, t.col, msg);
  }

  bool at_keyword(std::string_view kw) const {
    return cur().type == lex::TokType::Keyword && cur().text == kw;
  }

  bool at_punct(std::string_view p) const {
    return cur().type == lex::TokType::Punct && cur().text == p;
  }

  void expect_keyword(const std::string& kw) {
    if (!at_keyword(kw)) fail_syntax("expected " + kw);
    ++idx_;
  }

  void expect_punct(const std::string& p) {
    if (!at_punct(p)) fail_syntax("expected '" + p + "'");
    ++idx_;
  }

  std::string expect_name() {
    if (cur().type == lex::TokType::Ident) return next().text;
    if (cur().type == lex::TokType::Keyword) return next().aux;
    fail_syntax("expected a query name");
  }

  Variable expect_var() {
    if (cur().type != lex::TokType::Var) fail_syntax("expected a ?variable");
    return Variable{next().text};
  }

  double expect_number() {
    if (cur().type != lex::TokType::Number) fail_syntax("expected a number");
    return next().num;
  }

  int64_t expect_duration() {
    if (cur().type == lex::TokType::Duration) return next().dur;
    fail_syntax("expected a duration such as 30m or 5s");
  }

  std::string resolve_pname(const ContinuousQuery& q, const lex::Token& t) {
    auto it = q.prefixes.find(t.text);
    if (it == q.prefixes.end())
      throw QueryError(QueryError::Kind::UnknownPrefix, t.line, t.col,
                       "unknown prefix '" + t.text + ":'");
    return it->second + t.aux;
  }

  std::string expect_iri_or_pname(const ContinuousQuery& q) {
    if (cur().type == lex::TokType::Iri) return next().text;
    if (cur().type == lex::TokType::PName) {
      const auto& t = next();
      return resolve_pname(q, t);
    }
    fail_syntax("expected an IRI or prefixed name");
  }

  void parse_prefix(ContinuousQuery& q) {
    expect_keyword("PREFIX");
    if (cur().type != lex::TokType::PName || !cur().aux.empty())
      fail_syntax("expected a prefix declaration such as foo:");
    std::string prefix = next().text;
    if (cur().type != lex::TokType::Iri) fail_syntax("expected the prefix IRI");
    q.prefixes[prefix] = next().text;
  }

  void parse_select(ContinuousQuery& q) {
    expect_keyword("SELECT");
    bool any = false;
    while (true) {
      if (at_punct("(")) {
        ++idx_;
        expect_keyword("COUNT");
        expect_punct("(");
        Aggregate agg;
        if (at_keyword("DISTINCT")) {
          ++idx_;
          agg.distinct = true;
        }
        agg.var = expect_var();
        expect_punct(")");
        expect_keyword("AS");
        agg.alias = expect_var();
        expect_punct(")");
        q.projection.emplace_back(std::move(agg));
        any = true;
      } else if (cur().type == lex::TokType::Var) {
        q.projection.emplace_back(expect_var());
        any = true;
      } else {
        break;
      }
    }
    if (!any) fail_syntax("SELECT needs at least one projection");
  }

  void parse_from(ContinuousQuery& q) {
    if (!at_keyword("FROM")) fail_syntax("expected FROM STREAM");
    ++idx_;
    expect_keyword("STREAM");
    if (cur().type != lex::TokType::Iri) fail_syntax("expected the stream IRI");
    q.stream_iri = next().text;
    if (!at_punct("[")) {
      const auto& t = cur();
      throw QueryError(QueryError::Kind::MissingWindow, t.line, t.col,
                       "stream source needs a [RANGE ... STEP ...] window");
    }
    ++idx_;
    expect_keyword("RANGE");
    q.window.range_ms = expect_duration();
    expect_keyword("STEP");
    q.window.step_ms = expect_duration();
    expect_punct("]");
  }

  PatternTerm parse_term(ContinuousQuery& q, bool object_position) {
    if (cur().type == lex::TokType::Var) return expect_var();
    if (cur().type == lex::TokType::Iri)
      return model::Term::iri(next().text);
    if (cur().type == lex::TokType::PName) {
      const auto& t = next();
      return model::Term::iri(resolve_pname(q, t));
    }
    if (object_position && cur().type == lex::TokType::String) {
      const auto& t = next();
      if (t.aux.empty()) return model::Term::lit_string(t.text);
      std::string dt;
      if (t.aux.front() == '<') {
        dt = t.aux.substr(1, t.aux.size() - 2);
      } else {
        auto colon = t.aux.find(':');
        auto it = q.prefixes.find(t.aux.substr(0, colon));
        if (it == q.prefixes.end())
          throw QueryError(QueryError::Kind::UnknownPrefix, t.line, t.col,
                           "unknown prefix '" + t.aux.substr(0, colon) + ":'");
        dt = it->second + t.aux.substr(colon + 1);
      }
      if (dt == model::vocab::kXsdDouble)
        return model::Term::lit_double_lexical(t.text);
      if (dt == model::vocab::kXsdString)
        return model::Term::lit_string(t.text);
      throw QueryError(QueryError::Kind::Syntax, t.line, t.col,
                       "unsupported literal datatype <" + dt + ">");
    }
    if (object_position && cur().type == lex::TokType::Number)
      return model::Term::lit_double(next().num);
    fail_syntax(object_position ? "expected a term (IRI, literal, or ?variable)"
                                : "expected an IRI or ?variable");
  }

  void parse_where(ContinuousQuery& q) {
    expect_keyword("WHERE");
    expect_punct("{");
    while (!at_punct("}")) {
      if (cur().type == lex::TokType::End)
        fail_syntax("unterminated WHERE block");
      if (at_keyword("BIND")) {
        parse_bind(q);
        continue;
      }
      PatternTerm subject = parse_term(q, false);
      while (true) {
        PatternTerm predicate = parse_term(q, false);
        PatternTerm object = parse_term(q, true);
        q.patterns.push_back({subject, predicate, object});
        if (at_punct(";")) {
          ++idx_;
          continue;
        }
        break;
      }
      if (at_punct(".")) {
        ++idx_;
      } else if (!at_punct("}") && !at_keyword("BIND")) {
        fail_syntax("expected '.' after triple pattern");
      }
    }
    ++idx_;  // '}'
  }

  void parse_bind(ContinuousQuery& q) {
    expect_keyword("BIND");
    expect_punct("(");
    BindRound bind;
    const auto& fn_tok = cur();
    bind.fn_iri = expect_iri_or_pname(q);
    auto slash = bind.fn_iri.find_last_of("/#");
    std::string local = slash == std::string::npos
                            ? bind.fn_iri
                            : bind.fn_iri.substr(slash + 1);
    if (local != "round")
      throw QueryError(QueryError::Kind::Syntax, fn_tok.line, fn_tok.col,
                       "unsupported function '" + local + "', only round(...)");
    expect_punct("(");
    bind.input = expect_var();
    expect_punct("*");
    bind.factor = expect_number();
    expect_punct(")");
    expect_keyword("AS");
    bind.alias = expect_var();
    expect_punct(")");
    q.binds.push_back(std::move(bind));
  }

  void parse_group_by(ContinuousQuery& q) {
    expect_keyword("GROUP");
    expect_keyword("BY");
    if (cur().type != lex::TokType::Var)
      fail_syntax("GROUP BY needs at least one ?variable");
    while (cur().type == lex::TokType::Var) q.group_by.push_back(expect_var());
  }

  void parse_having(ContinuousQuery& q) {
    expect_keyword("HAVING");
    expect_punct("(");
    Having h;
    h.var = expect_var();
    if (cur().type != lex::TokType::Punct) fail_syntax("expected a comparison");
    std::string op = next().text;
    if (op == ">") h.op = CmpOp::Gt;
    else if (op == ">=") h.op = CmpOp::Ge;
    else if (op == "<") h.op = CmpOp::Lt;
    else if (op == "<=") h.op = CmpOp::Le;
    else if (op == "=") h.op = CmpOp::Eq;
    else fail_syntax("expected one of > >= < <= =");
    h.threshold = expect_number();
    expect_punct(")");
    q.having = h;
  }

  std::vector<lex::Token> toks_;
  size_t idx_ = 0;
};

}  // namespace parse_detail

// ---------------------------------------------------------------------------
// Validation

namespace validate_detail {

inline void collect_vars(const PatternTerm& t, std::set<std::string>& out) {
  if (const auto* v = std::get_if<Variable>(&t)) out.insert(v->name);
}

}  // namespace validate_detail

// Structural diagnostics. Errors are contract violations; warnings flag
// accepted-but-odd constructs (sampled projection of non-grouped variables).
inline std::vector<Diagnostic> validate(const ContinuousQuery& q,
                                        bool include_warnings = false) {
  std::vector<Diagnostic> out;
  auto error = [&](std::string code, std::string msg) {
    out.push_back({std::move(code), Severity::Error, std::move(msg)});
  };
  auto warn = [&](std::string code, std::string msg) {
    if (include_warnings)
      out.push_back({std::move(code), Severity::Warning, std::move(msg)});
  };

  if (!(q.window.step_ms > 0 && q.window.range_ms >= q.window.step_ms))
    error("WINDOW_INVALID", "window must satisfy range >= step > 0");

  std::set<std::string> pattern_vars;
  for (const auto& p : q.patterns) {
    validate_detail::collect_vars(p.subject, pattern_vars);
    validate_detail::collect_vars(p.predicate, pattern_vars);
    validate_detail::collect_vars(p.object, pattern_vars);
  }

  std::set<std::string> bind_aliases;
  std::set<std::string> bound = pattern_vars;
  for (const auto& b : q.binds) {
    if (!bound.count(b.input.name))
      error("UNBOUND_BIND_INPUT",
            "BIND input ?" + b.input.name + " is never bound");
    if (pattern_vars.count(b.alias.name) || bind_aliases.count(b.alias.name))
      error("ALIAS_COLLISION", "?" + b.alias.name + " is bound more than once");
    bind_aliases.insert(b.alias.name);
    bound.insert(b.alias.name);
  }

  std::set<std::string> group_keys;
  for (const auto& g : q.group_by) group_keys.insert(g.name);

  std::set<std::string> agg_aliases;
  for (const auto& item : q.projection) {
    if (const auto* agg = std::get_if<Aggregate>(&item)) {
      if (!bound.count(agg->var.name))
        error("UNBOUND_COUNT_VAR",
              "COUNT argument ?" + agg->var.name + " is never bound");
      if (bound.count(agg->alias.name) || agg_aliases.count(agg->alias.name))
        error("ALIAS_COLLISION",
              "?" + agg->alias.name + " is bound more than once");
      if (group_keys.count(agg->alias.name))
        error("ALIAS_COLLISION",
              "aggregate alias ?" + agg->alias.name + " reused as a group key");
      agg_aliases.insert(agg->alias.name);
    } else {
      const auto& v = std::get<Variable>(item);
      if (!bound.count(v.name))
        error("UNBOUND_PROJECTION", "?" + v.name + " is never bound");
      else if (!q.group_by.empty() && !group_keys.count(v.name))
        warn("NONGROUPED_PROJECTION",
             "?" + v.name + " is projected but not grouped; a per-group "
             "sample value is returned");
    }
  }

  for (const auto& g : q.group_by) {
    if (!bound.count(g.name))
      error("UNBOUND_GROUP_KEY", "group key ?" + g.name + " is never bound");
  }

  if (q.having) {
    if (!agg_aliases.count(q.having->var.name) &&
        !group_keys.count(q.having->var.name))
      error("HAVING_UNBOUND", "HAVING ?" + q.having->var.name +
                                  " is neither an aggregate alias nor a group key");
  }

  return out;
}

// ---------------------------------------------------------------------------
// parse_query / format_query

inline ContinuousQuery parse_query(std::string_view text) {
  ContinuousQuery q = parse_detail::Parser(text).run();
  auto diags = validate(q);
  if (!diags.empty())
    throw QueryError(QueryError::Kind::Validation, 1, 1,
                     diags.front().code + ": " + diags.front().message);
  return q;
}

namespace print_detail {

inline bool valid_local(std::string_view s) {
  for (char c : s)
    if (!lex::ident_char(c)) return false;
  return true;
}

// Compress an IRI against the declared prefixes: longest expansion wins,
// ties broken by prefix name.
inline std::string iri_text(const ContinuousQuery& q, const std::string& iri) {
  const std::string* best_prefix = nullptr;
  size_t best_len = 0;
  for (const auto& [prefix, expansion] : q.prefixes) {
    if (expansion.empty() || iri.size() < expansion.size()) continue;
    if (iri.compare(0, expansion.size(), expansion) != 0) continue;
    if (!valid_local(std::string_view(iri).substr(expansion.size()))) continue;
    if (expansion.size() > best_len) {
      best_len = expansion.size();
      best_prefix = &prefix;
    }
  }
  if (best_prefix) return *best_prefix + ":" + iri.substr(best_len);
  return "<" + iri + ">";
}

inline std::string term_text(const ContinuousQuery& q, const PatternTerm& t) {
  if (const auto* v = std::get_if<Variable>(&t)) return "?" + v->name;
  const auto& term = std::get<model::Term>(t);
  switch (term.kind) {
    case model::Term::Kind::Iri:
      return iri_text(q, term.lexical);
    case model::Term::Kind::Blank:
      return "_:" + term.lexical;
    case model::Term::Kind::LiteralString: {
      std::string out = "\"";
      for (char c : term.lexical) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
      }
      return out + "\"";
    }
    case model::Term::Kind::LiteralDouble:
      return "\"" + term.lexical + "\"^^" + iri_text(q, model::vocab::kXsdDouble);
  }
  return {};
}

inline std::string duration_text(int64_t ms) {
  if (ms > 0 && ms % 3'600'000 == 0) return std::to_string(ms / 3'600'000) + "h";
  if (ms > 0 && ms % 60'000 == 0) return std::to_string(ms / 60'000) + "m";
  if (ms > 0 && ms % 1000 == 0) return std::to_string(ms / 1000) + "s";
  return std::to_string(ms) + "ms";
}

inline std::string op_text(CmpOp op) {
  switch (op) {
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Eq: return "=";
  }
  return ">";
}

}  // namespace print_detail

// Canonical text: prefixes sorted, one pattern per line, binds after
// patterns. parse_query(format_query(q)) == q.
inline std::string format_query(const ContinuousQuery& q) {
  using namespace print_detail;
  std::string out;
  out += "REGISTER QUERY " + q.name + " AS\n";
  for (const auto& [prefix, iri] : q.prefixes)
    out += "PREFIX " + prefix + ": <" + iri + ">\n";
  out += "SELECT";
  for (const auto& item : q.projection) {
    if (const auto* agg = std::get_if<Aggregate>(&item)) {
      out += " (COUNT(";
      if (agg->distinct) out += "DISTINCT ";
      out += "?" + agg->var.name + ") AS ?" + agg->alias.name + ")";
    } else {
      out += " ?" + std::get<Variable>(item).name;
    }
  }
  out += "\nFROM STREAM <" + q.stream_iri + "> [RANGE " +
         duration_text(q.window.range_ms) + " STEP " +
         duration_text(q.window.step_ms) + "]\n";
  out += "WHERE {\n";
  for (const auto& p : q.patterns) {
    out += "  " + term_text(q, p.subject) + " " + term_text(q, p.predicate) +
           " " + term_text(q, p.object) + " .\n";
  }
  for (const auto& b : q.binds) {
    out += "  BIND (" + iri_text(q, b.fn_iri) + "(?" + b.input.name + " * " +
           model::format_double(b.factor) + ") AS ?" + b.alias.name + ")\n";
  }
  out += "}\n";
  if (!q.group_by.empty()) {
    out += "GROUP BY";
    for (const auto& g : q.group_by) out += " ?" + g.name;
    out += "\n";
  }
  if (q.having) {
    out += "HAVING (?" + q.having->var.name + " " + op_text(q.having->op) +
           " " + model::format_double(q.having->threshold) + ")\n";
  }
  return out;
}

}  // namespace sigloss::query
