#pragma once

// AST for the string-transformation DSL.
//
//   Program    := Concat(e1, e2, ...)
//   Expression := f | n | n1(n2) | n(f) | ConstStr(c)
//   Substring  := SubStr(k1, k2) | GetSpan(r1, i1, b1, r2, i2, b2)
//   Nesting    := GetToken(t, i) | ToCase(s) | Replace(d1, d2) | Trim()
//               | GetUpto(r) | GetFrom(r) | GetFirst(t, i) | GetAll(t)

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lp::dsl {

enum class TypeToken : std::uint8_t { Number, Word, Alphanum, AllCaps, PropCase, Lower, Digit, Char };
enum class CaseKind : std::uint8_t { Proper, AllCaps, Lower };
enum class Boundary : std::uint8_t { Start, End };
enum class Dialect : std::uint8_t { Full, Toy };

inline constexpr std::array kTypeTokens = {TypeToken::Number,   TypeToken::Word,     TypeToken::Alphanum,
                                           TypeToken::AllCaps,  TypeToken::PropCase, TypeToken::Lower,
                                           TypeToken::Digit,    TypeToken::Char};
inline constexpr std::array kCaseKinds = {CaseKind::Proper, CaseKind::AllCaps, CaseKind::Lower};
inline constexpr std::array kBoundaries = {Boundary::Start, Boundary::End};

// `&,.?@()[]%{}/:;$#"'` plus space.
inline constexpr std::string_view kDelimiters = "&,.?@()[]%{}/:;$#\"' ";
inline constexpr std::string_view kToyDelimiters = "&,. ";
inline constexpr int kMaxPosition = 100;
inline constexpr int kMaxIndex = 5;
inline constexpr std::array kToyIndices = {-1, 1, 2};
inline constexpr std::array kToyTypes = {TypeToken::Number, TypeToken::Word, TypeToken::Alphanum};
inline constexpr std::size_t kMaxExpressions = 10;

inline bool is_delimiter(char c) { return kDelimiters.find(c) != std::string_view::npos; }

inline std::string_view type_name(TypeToken t) {
  switch (t) {
    case TypeToken::Number: return "NUMBER";
    case TypeToken::Word: return "WORD";
    case TypeToken::Alphanum: return "ALPHANUM";
    case TypeToken::AllCaps: return "ALL_CAPS";
    case TypeToken::PropCase: return "PROP_CASE";
    case TypeToken::Lower: return "LOWER";
    case TypeToken::Digit: return "DIGIT";
    case TypeToken::Char: return "CHAR";
  }
  return "?";
}

inline std::string_view case_name(CaseKind s) {
  switch (s) {
    case CaseKind::Proper: return "PROPER";
    case CaseKind::AllCaps: return "ALL_CAPS";
    case CaseKind::Lower: return "LOWER";
  }
  return "?";
}

inline std::string_view boundary_name(Boundary b) { return b == Boundary::Start ? "START" : "END"; }

inline std::string_view dialect_name(Dialect d) { return d == Dialect::Toy ? "toy" : "full"; }

inline std::optional<Dialect> dialect_from_name(std::string_view name) {
  if (name == "toy") return Dialect::Toy;
  if (name == "full") return Dialect::Full;
  return std::nullopt;
}

// A token class or a single literal delimiter.
class Regex {
 public:
  constexpr Regex() = default;
  static constexpr Regex of(TypeToken t) { return Regex(t, '\0'); }
  static constexpr Regex delimiter(char c) { return Regex(TypeToken::Char, c); }

  constexpr bool is_delimiter() const { return delim_ != '\0'; }
  constexpr TypeToken type() const { return type_; }
  constexpr char delimiter_char() const { return delim_; }

  friend constexpr bool operator==(const Regex&, const Regex&) = default;

 private:
  constexpr Regex(TypeToken t, char d) : type_(t), delim_(d) {}
  TypeToken type_ = TypeToken::Number;
  char delim_ = '\0';
};

struct ConstStr {
  char c;
  friend bool operator==(const ConstStr&, const ConstStr&) = default;
};
struct SubStr {
  int k1;
  int k2;
  friend bool operator==(const SubStr&, const SubStr&) = default;
};
struct GetSpan {
  Regex r1;
  int i1;
  Boundary b1;
  Regex r2;
  int i2;
  Boundary b2;
  friend bool operator==(const GetSpan&, const GetSpan&) = default;
};

struct GetToken {
  TypeToken t;
  int i;
  friend bool operator==(const GetToken&, const GetToken&) = default;
};
struct ToCase {
  CaseKind s;
  friend bool operator==(const ToCase&, const ToCase&) = default;
};
struct Replace {
  char d1;
  char d2;
  friend bool operator==(const Replace&, const Replace&) = default;
};
struct Trim {
  friend bool operator==(const Trim&, const Trim&) = default;
};
struct GetUpto {
  Regex r;
  friend bool operator==(const GetUpto&, const GetUpto&) = default;
};
struct GetFrom {
  Regex r;
  friend bool operator==(const GetFrom&, const GetFrom&) = default;
};
struct GetFirst {
  TypeToken t;
  int i;
  friend bool operator==(const GetFirst&, const GetFirst&) = default;
};
struct GetAll {
  TypeToken t;
  friend bool operator==(const GetAll&, const GetAll&) = default;
};

using NestingOp = std::variant<GetToken, ToCase, Replace, Trim, GetUpto, GetFrom, GetFirst, GetAll>;

struct Nesting {
  NestingOp op;
  friend bool operator==(const Nesting&, const Nesting&) = default;
};

// n1(n2) or n(f); one level only.
struct Compose {
  using Inner = std::variant<NestingOp, SubStr, GetSpan>;
  NestingOp outer;
  Inner inner;
  friend bool operator==(const Compose&, const Compose&) = default;
};

using Expression = std::variant<ConstStr, SubStr, GetSpan, Nesting, Compose>;

struct Program {
  std::vector<Expression> expressions;
  friend bool operator==(const Program&, const Program&) = default;
};

struct DialectConfig {
  Dialect dialect = Dialect::Full;
};

inline bool valid_position(int k) { return k != 0 && k >= -kMaxPosition && k <= kMaxPosition; }
inline bool valid_index(int i) { return i != 0 && i >= -kMaxIndex && i <= kMaxIndex; }

inline bool is_toy_regex(const Regex& r) {
  if (r.is_delimiter()) return kToyDelimiters.find(r.delimiter_char()) != std::string_view::npos;
  for (auto t : kToyTypes) {
    if (r.type() == t) return true;
  }
  return false;
}

inline bool is_toy_index(int i) { return i == -1 || i == 1 || i == 2; }

// True when `e` lies inside the toy dialect: GetSpan only, restricted
// regexes and indices, and boundaries fixed to (START, END).
inline bool is_toy_expression(const Expression& e) {
  const auto* span = std::get_if<GetSpan>(&e);
  if (span == nullptr) return false;
  return is_toy_regex(span->r1) && is_toy_regex(span->r2) && is_toy_index(span->i1) &&
         is_toy_index(span->i2) && span->b1 == Boundary::Start && span->b2 == Boundary::End;
}

inline bool is_toy_program(const Program& p) {
  for (const auto& e : p.expressions) {
    if (!is_toy_expression(e)) return false;
  }
  return !p.expressions.empty();
}

}  // namespace lp::dsl
