#pragma once

// Canonical text form of programs, e.g.
//   GetToken_PROP_CASE_2 | Const( ) | GetToken_ALL_CAPS_1
// Expressions are joined by " | "; each renders as its constructor and
// arguments joined by '_'. Compositions render as outer(inner). GetSpan
// omits its boundaries when they are (START, END).

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <string>
#include <string_view>

#include "lp/dsl.hpp"
#include "lp/error.hpp"

namespace lp::dsl {

inline constexpr std::string_view kExpressionSeparator = " | ";

inline std::string render_regex(const Regex& r) {
  return r.is_delimiter() ? std::string(1, r.delimiter_char()) : std::string(type_name(r.type()));
}

inline std::string render_nesting(const NestingOp& op) {
  return std::visit(
      [](const auto& n) -> std::string {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, GetToken>) {
          return "GetToken_" + std::string(type_name(n.t)) + "_" + std::to_string(n.i);
        } else if constexpr (std::is_same_v<N, ToCase>) {
          return "ToCase_" + std::string(case_name(n.s));
        } else if constexpr (std::is_same_v<N, Replace>) {
          return std::string("Replace_") + n.d1 + "_" + n.d2;
        } else if constexpr (std::is_same_v<N, Trim>) {
          return "Trim";
        } else if constexpr (std::is_same_v<N, GetUpto>) {
          return "GetUpto_" + render_regex(n.r);
        } else if constexpr (std::is_same_v<N, GetFrom>) {
          return "GetFrom_" + render_regex(n.r);
        } else if constexpr (std::is_same_v<N, GetFirst>) {
          return "GetFirst_" + std::string(type_name(n.t)) + "_" + std::to_string(n.i);
        } else {
          return "GetAll_" + std::string(type_name(n.t));
        }
      },
      op);
}

inline std::string render_substr(const SubStr& s) {
  return "SubStr_" + std::to_string(s.k1) + "_" + std::to_string(s.k2);
}

inline std::string render_getspan(const GetSpan& g) {
  std::string out = "GetSpan_" + render_regex(g.r1) + "_" + std::to_string(g.i1);
  const bool implicit = g.b1 == Boundary::Start && g.b2 == Boundary::End;
  if (!implicit) out += "_" + std::string(boundary_name(g.b1));
  out += "_" + render_regex(g.r2) + "_" + std::to_string(g.i2);
  if (!implicit) out += "_" + std::string(boundary_name(g.b2));
  return out;
}

inline std::string render_expression(const Expression& e) {
  return std::visit(
      [](const auto& x) -> std::string {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, ConstStr>) {
          return std::string("Const(") + x.c + ")";
        } else if constexpr (std::is_same_v<X, SubStr>) {
          return render_substr(x);
        } else if constexpr (std::is_same_v<X, GetSpan>) {
          return render_getspan(x);
        } else if constexpr (std::is_same_v<X, Nesting>) {
          return render_nesting(x.op);
        } else {
          const std::string inner = std::visit(
              [](const auto& in) -> std::string {
                using I = std::decay_t<decltype(in)>;
                if constexpr (std::is_same_v<I, NestingOp>) {
                  return render_nesting(in);
                } else if constexpr (std::is_same_v<I, SubStr>) {
                  return render_substr(in);
                } else {
                  return render_getspan(in);
                }
              },
              x.inner);
          return render_nesting(x.outer) + "(" + inner + ")";
        }
      },
      e);
}

inline std::string render_program(const Program& p) {
  std::string out;
  for (std::size_t i = 0; i < p.expressions.size(); ++i) {
    if (i > 0) out += kExpressionSeparator;
    out += render_expression(p.expressions[i]);
  }
  return out;
}

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, std::size_t base) : text_(text), base_(base) {}

  bool done() const { return pos_ >= text_.size(); }
  std::size_t pos() const { return pos_; }

  [[noreturn]] void fail(const std::string& reason) const { throw ParseError(base_ + pos_, reason); }

  bool accept(std::string_view lit) {
    if (text_.substr(pos_).starts_with(lit)) {
      pos_ += lit.size();
      return true;
    }
    return false;
  }

  void expect(std::string_view lit) {
    if (!accept(lit)) fail("expected '" + std::string(lit) + "'");
  }

  char any_char() {
    if (done()) fail("unexpected end of text");
    return text_[pos_++];
  }

  char delimiter() {
    const char c = any_char();
    if (!is_delimiter(c)) {
      --pos_;
      fail(std::string("'") + c + "' is not a delimiter");
    }
    return c;
  }

  std::string_view identifier() {
    const std::size_t start = pos_;
    while (!done() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("expected a constructor name");
    return text_.substr(start, pos_ - start);
  }

  int integer() {
    const std::size_t start = pos_;
    if (accept("-")) {
    }
    while (!done() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    int value = 0;
    const auto* first = text_.data() + start;
    const auto* last = text_.data() + pos_;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
      pos_ = start;
      fail("expected an integer");
    }
    return value;
  }

  int index() {
    const std::size_t start = pos_;
    const int i = integer();
    if (!valid_index(i)) {
      pos_ = start;
      fail("index " + std::to_string(i) + " out of range");
    }
    return i;
  }

  int position() {
    const std::size_t start = pos_;
    const int k = integer();
    if (!valid_position(k)) {
      pos_ = start;
      fail("position " + std::to_string(k) + " out of range");
    }
    return k;
  }

  TypeToken type_token() {
    // Longest names first so ALL_CAPS is not read as a prefix of something else.
    for (auto t : {TypeToken::PropCase, TypeToken::Alphanum, TypeToken::AllCaps, TypeToken::Number,
                   TypeToken::Lower, TypeToken::Digit, TypeToken::Word, TypeToken::Char}) {
      if (accept(type_name(t))) return t;
    }
    fail("unknown type token");
  }

  CaseKind case_kind() {
    for (auto s : kCaseKinds) {
      if (accept(case_name(s))) return s;
    }
    fail("unknown case");
  }

  Regex regex() {
    if (!done() && std::isupper(static_cast<unsigned char>(text_[pos_]))) return Regex::of(type_token());
    return Regex::delimiter(delimiter());
  }

  std::optional<Boundary> boundary() {
    if (accept("_START")) return Boundary::Start;
    if (accept("_END")) return Boundary::End;
    return std::nullopt;
  }

  SubStr substr_args() {
    expect("_");
    const int k1 = position();
    expect("_");
    const int k2 = position();
    return {k1, k2};
  }

  GetSpan getspan_args() {
    GetSpan g{};
    expect("_");
    g.r1 = regex();
    expect("_");
    g.i1 = index();
    const auto b1 = boundary();
    expect("_");
    g.r2 = regex();
    expect("_");
    g.i2 = index();
    const auto b2 = boundary();
    if (b1.has_value() != b2.has_value()) fail("GetSpan boundaries must be given for both ends or neither");
    g.b1 = b1.value_or(Boundary::Start);
    g.b2 = b2.value_or(Boundary::End);
    return g;
  }

  std::optional<NestingOp> nesting_args(std::string_view name) {
    if (name == "GetToken" || name == "GetFirst") {
      expect("_");
      const TypeToken t = type_token();
      expect("_");
      const int i = index();
      if (name == "GetToken") return GetToken{t, i};
      return GetFirst{t, i};
    }
    if (name == "ToCase") {
      expect("_");
      return ToCase{case_kind()};
    }
    if (name == "Replace") {
      expect("_");
      const char d1 = delimiter();
      expect("_");
      const char d2 = delimiter();
      return Replace{d1, d2};
    }
    if (name == "Trim") return Trim{};
    if (name == "GetUpto" || name == "GetFrom") {
      expect("_");
      const Regex r = regex();
      if (name == "GetUpto") return GetUpto{r};
      return GetFrom{r};
    }
    if (name == "GetAll") {
      expect("_");
      return GetAll{type_token()};
    }
    return std::nullopt;
  }

  Expression expression() {
    if (accept("Const(")) {
      const char c = any_char();
      expect(")");
      return ConstStr{c};
    }
    const std::size_t start = pos_;
    const std::string_view name = identifier();
    if (name == "SubStr") return substr_args();
    if (name == "GetSpan") return getspan_args();
    auto outer = nesting_args(name);
    if (!outer) {
      pos_ = start;
      fail("unknown constructor '" + std::string(name) + "'");
    }
    if (!accept("(")) return Nesting{*outer};
    const std::size_t inner_start = pos_;
    const std::string_view inner_name = identifier();
    Compose c{*outer, SubStr{1, 1}};
    if (inner_name == "SubStr") {
      c.inner = substr_args();
    } else if (inner_name == "GetSpan") {
      c.inner = getspan_args();
    } else if (auto inner = nesting_args(inner_name)) {
      c.inner = *inner;
    } else {
      pos_ = inner_start;
      fail("'" + std::string(inner_name) + "' cannot be nested");
    }
    expect(")");
    return c;
  }

 private:
  std::string_view text_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Expression parse_expression(std::string_view text, std::size_t base = 0) {
  detail::Parser parser(text, base);
  Expression e = parser.expression();
  if (!parser.done()) parser.fail("trailing characters");
  return e;
}

// Inverse of render_program. Under the toy dialect anything outside the toy
// grammar raises DialectError.
inline Program parse_program(std::string_view text, DialectConfig cfg = {}) {
  if (text.empty()) throw ParseError(0, "empty program");
  Program p;
  std::size_t start = 0;
  while (true) {
    const std::size_t sep = text.find(kExpressionSeparator, start);
    const std::size_t end = sep == std::string_view::npos ? text.size() : sep;
    if (end == start) throw ParseError(start, "empty expression");
    Expression e = parse_expression(text.substr(start, end - start), start);
    if (cfg.dialect == Dialect::Toy && !is_toy_expression(e)) {
      throw DialectError("expression '" + std::string(text.substr(start, end - start)) +
                         "' is outside the toy dialect");
    }
    p.expressions.push_back(std::move(e));
    if (sep == std::string_view::npos) break;
    start = sep + kExpressionSeparator.size();
  }
  if (p.expressions.size() > kMaxExpressions) {
    throw ParseError(0, "more than " + std::to_string(kMaxExpressions) + " expressions");
  }
  return p;
}

}  // namespace lp::dsl
