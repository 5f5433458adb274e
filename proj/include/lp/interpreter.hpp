#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lp/dsl.hpp"
#include "lp/error.hpp"
#include "lp/task.hpp"

namespace lp::dsl {

struct Span {
  std::size_t start;
  std::size_t end;
  friend bool operator==(const Span&, const Span&) = default;
};

namespace detail {

inline bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
inline bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_alpha(char c) { return is_upper(c) || is_lower(c); }

// Length of the longest match of class `t` starting at `pos`, 0 if none.
inline std::size_t match_length(std::string_view s, std::size_t pos, TypeToken t) {
  auto run = [&](auto pred) {
    std::size_t n = 0;
    while (pos + n < s.size() && pred(s[pos + n])) ++n;
    return n;
  };
  switch (t) {
    case TypeToken::Number: return run(is_digit);
    case TypeToken::Word: return run(is_alpha);
    case TypeToken::Alphanum: return run([](char c) { return is_alpha(c) || is_digit(c); });
    case TypeToken::AllCaps: return run(is_upper);
    case TypeToken::Lower: return run(is_lower);
    case TypeToken::PropCase: {
      if (!is_upper(s[pos])) return 0;
      std::size_t n = 1;
      while (pos + n < s.size() && is_lower(s[pos + n])) ++n;
      return n;
    }
    case TypeToken::Digit: return is_digit(s[pos]) ? 1 : 0;
    case TypeToken::Char: return s[pos] != ' ' ? 1 : 0;
  }
  return 0;
}

}  // namespace detail

// Non-overlapping, left-to-right, maximal-munch spans of `r` in `input`.
inline std::vector<Span> match_spans(std::string_view input, const Regex& r) {
  std::vector<Span> spans;
  if (r.is_delimiter()) {
    for (std::size_t i = 0; i < input.size(); ++i) {
      if (input[i] == r.delimiter_char()) spans.push_back({i, i + 1});
    }
    return spans;
  }
  std::size_t pos = 0;
  while (pos < input.size()) {
    const std::size_t n = detail::match_length(input, pos, r.type());
    if (n > 0) {
      spans.push_back({pos, pos + n});
      pos += n;
    } else {
      ++pos;
    }
  }
  return spans;
}

// Occurrence `i` (1-based, negative counts from the end) or nullopt.
inline std::optional<Span> occurrence(std::string_view input, const Regex& r, int i) {
  const auto spans = match_spans(input, r);
  const auto m = static_cast<int>(spans.size());
  if (i > 0 && i <= m) return spans[static_cast<std::size_t>(i - 1)];
  if (i < 0 && -i <= m) return spans[static_cast<std::size_t>(m + i)];
  return std::nullopt;
}

namespace detail {

struct Undefined {
  std::string reason;
};

inline std::string regex_label(const Regex& r) {
  return r.is_delimiter() ? std::string(1, r.delimiter_char()) : std::string(type_name(r.type()));
}

inline std::string eval_substr(std::string_view s, const SubStr& e) {
  const int len = static_cast<int>(s.size());
  if (len == 0) throw Undefined{"SubStr on empty string"};
  auto resolve = [len](int k) {
    const int p = k > 0 ? k : len + k + 1;
    return std::clamp(p, 1, len);
  };
  const int a = resolve(e.k1);
  const int b = resolve(e.k2);
  if (a > b) throw Undefined{"SubStr range is empty"};
  return std::string(s.substr(static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - a + 1)));
}

inline std::string eval_getspan(std::string_view s, const GetSpan& e) {
  const auto first = occurrence(s, e.r1, e.i1);
  if (!first) throw Undefined{"no occurrence " + std::to_string(e.i1) + " of " + regex_label(e.r1)};
  const auto second = occurrence(s, e.r2, e.i2);
  if (!second) throw Undefined{"no occurrence " + std::to_string(e.i2) + " of " + regex_label(e.r2)};
  const std::size_t p = e.b1 == Boundary::Start ? first->start : first->end;
  const std::size_t q = e.b2 == Boundary::Start ? second->start : second->end;
  if (p > q) throw Undefined{"GetSpan range is inverted"};
  return std::string(s.substr(p, q - p));
}

inline std::string to_proper(std::string_view s) {
  std::string out(s);
  for (const auto& w : match_spans(s, Regex::of(TypeToken::Word))) {
    for (std::size_t i = w.start; i < w.end; ++i) {
      const auto c = static_cast<unsigned char>(out[i]);
      out[i] = static_cast<char>(i == w.start ? std::toupper(c) : std::tolower(c));
    }
  }
  return out;
}

inline std::string eval_nesting(std::string_view s, const NestingOp& op) {
  return std::visit(
      [&](const auto& n) -> std::string {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, GetToken>) {
          const auto span = occurrence(s, Regex::of(n.t), n.i);
          if (!span) throw Undefined{"no occurrence " + std::to_string(n.i) + " of " + std::string(type_name(n.t))};
          return std::string(s.substr(span->start, span->end - span->start));
        } else if constexpr (std::is_same_v<N, ToCase>) {
          std::string out(s);
          if (n.s == CaseKind::Proper) return to_proper(s);
          for (auto& c : out) {
            const auto u = static_cast<unsigned char>(c);
            c = static_cast<char>(n.s == CaseKind::AllCaps ? std::toupper(u) : std::tolower(u));
          }
          return out;
        } else if constexpr (std::is_same_v<N, Replace>) {
          std::string out(s);
          for (auto& c : out) {
            if (c == n.d1) c = n.d2;
          }
          return out;
        } else if constexpr (std::is_same_v<N, Trim>) {
          const auto first = s.find_first_not_of(' ');
          if (first == std::string_view::npos) return {};
          const auto last = s.find_last_not_of(' ');
          return std::string(s.substr(first, last - first + 1));
        } else if constexpr (std::is_same_v<N, GetUpto>) {
          const auto span = occurrence(s, n.r, 1);
          if (!span) throw Undefined{"GetUpto: no " + regex_label(n.r)};
          return std::string(s.substr(0, span->end));
        } else if constexpr (std::is_same_v<N, GetFrom>) {
          const auto span = occurrence(s, n.r, 1);
          if (!span) throw Undefined{"GetFrom: no " + regex_label(n.r)};
          return std::string(s.substr(span->end));
        } else if constexpr (std::is_same_v<N, GetFirst>) {
          const auto spans = match_spans(s, Regex::of(n.t));
          const auto want = static_cast<std::size_t>(n.i > 0 ? n.i : -n.i);
          if (spans.size() < want) throw Undefined{"GetFirst: too few " + std::string(type_name(n.t))};
          const std::size_t from = n.i > 0 ? 0 : spans.size() - want;
          std::string out;
          for (std::size_t j = from; j < from + want; ++j) {
            out += s.substr(spans[j].start, spans[j].end - spans[j].start);
          }
          return out;
        } else {
          static_assert(std::is_same_v<N, GetAll>);
          const auto spans = match_spans(s, Regex::of(n.t));
          if (spans.empty()) throw Undefined{"GetAll: no " + std::string(type_name(n.t))};
          std::string out;
          for (std::size_t j = 0; j < spans.size(); ++j) {
            if (j > 0) out += ' ';
            out += s.substr(spans[j].start, spans[j].end - spans[j].start);
          }
          return out;
        }
      },
      op);
}

inline std::string eval_expression(std::string_view s, const Expression& e) {
  return std::visit(
      [&](const auto& x) -> std::string {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, ConstStr>) {
          return std::string(1, x.c);
        } else if constexpr (std::is_same_v<X, SubStr>) {
          return eval_substr(s, x);
        } else if constexpr (std::is_same_v<X, GetSpan>) {
          return eval_getspan(s, x);
        } else if constexpr (std::is_same_v<X, Nesting>) {
          return eval_nesting(s, x.op);
        } else {
          static_assert(std::is_same_v<X, Compose>);
          const std::string inner = std::visit(
              [&](const auto& in) -> std::string {
                using I = std::decay_t<decltype(in)>;
                if constexpr (std::is_same_v<I, NestingOp>) {
                  return eval_nesting(s, in);
                } else if constexpr (std::is_same_v<I, SubStr>) {
                  return eval_substr(s, in);
                } else {
                  return eval_getspan(s, in);
                }
              },
              x.inner);
          return eval_nesting(inner, x.outer);
        }
      },
      e);
}

}  // namespace detail

// Concatenation of every expression's value on `input`. Throws ExecError
// naming the first expression that is undefined on this input.
inline std::string execute(const Program& p, std::string_view input) {
  std::string out;
  for (std::size_t i = 0; i < p.expressions.size(); ++i) {
    try {
      out += detail::eval_expression(input, p.expressions[i]);
    } catch (const detail::Undefined& u) {
      throw ExecError(i, u.reason);
    }
  }
  return out;
}

// Non-throwing variant; nullopt when some expression is undefined.
inline std::optional<std::string> try_execute(const Program& p, std::string_view input) {
  std::string out;
  for (const auto& e : p.expressions) {
    try {
      out += detail::eval_expression(input, e);
    } catch (const detail::Undefined&) {
      return std::nullopt;
    }
  }
  return out;
}

inline bool is_consistent(const Program& p, const Task& task) {
  if (task.inputs.size() != task.outputs.size() || task.inputs.empty()) return false;
  for (std::size_t i = 0; i < task.inputs.size(); ++i) {
    const auto out = try_execute(p, task.inputs[i]);
    if (!out || *out != task.outputs[i]) return false;
  }
  return true;
}

}  // namespace lp::dsl
