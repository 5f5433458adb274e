#pragma once

// Token vocabularies for the three model streams (I/O characters, program
// tokens, latent tokens) and the program tokenization.
//
// Program tokens: in the toy dialect every GetSpan expression is a single
// token. In the full dialect each nesting op is one token, ConstStr is
// "Const" followed by its character, a composition contributes its outer op
// (suffixed with "(") followed by the inner constituent, and SubStr/GetSpan
// are split into a head token plus one token per endpoint.

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lp/dsl.hpp"
#include "lp/dsl_text.hpp"
#include "lp/error.hpp"
#include "lp/task.hpp"

namespace lp {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kReserved = 3;

class Vocabulary {
 public:
  Vocabulary() : tokens_{"<pad>", "<bos>", "<eos>"} {
    for (int i = 0; i < kReserved; ++i) ids_.emplace(tokens_[static_cast<std::size_t>(i)], i);
  }

  int add(const std::string& token) {
    auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) throw UnknownToken(token);
    return it->second;
  }

  bool contains(const std::string& token) const { return ids_.contains(token); }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw UnknownToken("#" + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void dump(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& t : tokens_) out << t << '\n';
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

namespace detail {

inline std::string signed_position(int k) { return (k > 0 ? "+" : "") + std::to_string(k); }

inline std::string span_end_token(const dsl::Regex& r, int i, dsl::Boundary b) {
  return dsl::render_regex(r) + "_" + std::to_string(i) + "_" + std::string(dsl::boundary_name(b));
}

inline std::vector<dsl::Regex> all_regexes() {
  std::vector<dsl::Regex> out;
  for (auto t : dsl::kTypeTokens) out.push_back(dsl::Regex::of(t));
  for (char c : dsl::kDelimiters) out.push_back(dsl::Regex::delimiter(c));
  return out;
}

inline std::vector<dsl::Regex> toy_regexes() {
  std::vector<dsl::Regex> out;
  for (auto t : dsl::kToyTypes) out.push_back(dsl::Regex::of(t));
  for (char c : dsl::kToyDelimiters) out.push_back(dsl::Regex::delimiter(c));
  return out;
}

inline std::vector<int> all_indices() {
  std::vector<int> out;
  for (int i = -dsl::kMaxIndex; i <= dsl::kMaxIndex; ++i) {
    if (i != 0) out.push_back(i);
  }
  return out;
}

}  // namespace detail

// Characters a ConstStr may carry: letters, digits, delimiters.
inline std::string const_alphabet() {
  std::string out;
  for (char c = 'A'; c <= 'Z'; ++c) out += c;
  for (char c = 'a'; c <= 'z'; ++c) out += c;
  for (char c = '0'; c <= '9'; ++c) out += c;
  out += dsl::kDelimiters;
  return out;
}

inline std::vector<dsl::NestingOp> all_nesting_ops() {
  using namespace dsl;
  std::vector<NestingOp> ops;
  const auto indices = lp::detail::all_indices();
  for (auto t : kTypeTokens) {
    for (int i : indices) ops.push_back(GetToken{t, i});
  }
  for (auto s : kCaseKinds) ops.push_back(ToCase{s});
  for (char a : kDelimiters) {
    for (char b : kDelimiters) ops.push_back(Replace{a, b});
  }
  ops.push_back(Trim{});
  for (const auto& r : lp::detail::all_regexes()) ops.push_back(GetUpto{r});
  for (const auto& r : lp::detail::all_regexes()) ops.push_back(GetFrom{r});
  for (auto t : kTypeTokens) {
    for (int i : indices) ops.push_back(GetFirst{t, i});
  }
  for (auto t : kTypeTokens) ops.push_back(GetAll{t});
  return ops;
}

inline std::vector<dsl::GetSpan> toy_getspans() {
  std::vector<dsl::GetSpan> out;
  const auto regexes = lp::detail::toy_regexes();
  for (const auto& r1 : regexes) {
    for (int i1 : dsl::kToyIndices) {
      for (const auto& r2 : regexes) {
        for (int i2 : dsl::kToyIndices) {
          out.push_back({r1, i1, dsl::Boundary::Start, r2, i2, dsl::Boundary::End});
        }
      }
    }
  }
  return out;
}

// Program-token vocabulary, enumerated from the grammar (never from data).
inline Vocabulary build_program_vocabulary(dsl::Dialect dialect) {
  Vocabulary v;
  if (dialect == dsl::Dialect::Toy) {
    for (const auto& g : toy_getspans()) v.add(dsl::render_getspan(g));
    return v;
  }
  const auto ops = all_nesting_ops();
  for (const auto& op : ops) v.add(dsl::render_nesting(op));
  for (const auto& op : ops) v.add(dsl::render_nesting(op) + "(");
  v.add("Const");
  for (char c : const_alphabet()) v.add(std::string(1, c));
  v.add("SubStr");
  for (int k = -dsl::kMaxPosition; k <= dsl::kMaxPosition; ++k) {
    if (k != 0) v.add(lp::detail::signed_position(k));
  }
  v.add("GetSpan");
  for (const auto& r : lp::detail::all_regexes()) {
    for (int i : lp::detail::all_indices()) {
      for (auto b : dsl::kBoundaries) v.add(lp::detail::span_end_token(r, i, b));
    }
  }
  return v;
}

inline Vocabulary build_char_vocabulary() {
  Vocabulary v;
  for (char c = 32; c < 127; ++c) v.add(std::string(1, c));
  return v;
}

inline std::string latent_token_name(int id) { return "TOK_" + std::to_string(id); }

// Latent ids are kReserved + codebook index.
inline Vocabulary build_latent_vocabulary(int codebook_size) {
  Vocabulary v;
  for (int k = 0; k < codebook_size; ++k) v.add(latent_token_name(kReserved + k));
  return v;
}

struct Vocabularies {
  Vocabulary chars;
  Vocabulary program;
  Vocabulary latent;
  dsl::Dialect dialect = dsl::Dialect::Full;
};

inline Vocabularies build_vocabularies(dsl::Dialect dialect, int codebook_size) {
  return {build_char_vocabulary(), build_program_vocabulary(dialect), build_latent_vocabulary(codebook_size),
          dialect};
}

// Canonical program tokens (text form, no BOS/EOS).
inline std::vector<std::string> program_tokens(const dsl::Program& p, dsl::Dialect dialect) {
  using namespace dsl;
  std::vector<std::string> out;
  auto emit_substr = [&](const SubStr& s) {
    out.push_back("SubStr");
    out.push_back(lp::detail::signed_position(s.k1));
    out.push_back(lp::detail::signed_position(s.k2));
  };
  auto emit_getspan = [&](const GetSpan& g) {
    out.push_back("GetSpan");
    out.push_back(lp::detail::span_end_token(g.r1, g.i1, g.b1));
    out.push_back(lp::detail::span_end_token(g.r2, g.i2, g.b2));
  };
  for (const auto& e : p.expressions) {
    if (dialect == Dialect::Toy) {
      out.push_back(render_expression(e));
      continue;
    }
    std::visit(
        [&](const auto& x) {
          using X = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<X, ConstStr>) {
            out.push_back("Const");
            out.push_back(std::string(1, x.c));
          } else if constexpr (std::is_same_v<X, SubStr>) {
            emit_substr(x);
          } else if constexpr (std::is_same_v<X, GetSpan>) {
            emit_getspan(x);
          } else if constexpr (std::is_same_v<X, Nesting>) {
            out.push_back(render_nesting(x.op));
          } else {
            out.push_back(render_nesting(x.outer) + "(");
            std::visit(
                [&](const auto& in) {
                  using I = std::decay_t<decltype(in)>;
                  if constexpr (std::is_same_v<I, NestingOp>) {
                    out.push_back(render_nesting(in));
                  } else if constexpr (std::is_same_v<I, SubStr>) {
                    emit_substr(in);
                  } else {
                    emit_getspan(in);
                  }
                },
                x.inner);
          }
        },
        e);
  }
  return out;
}

// Index of the first token of each expression within program_tokens(p).
inline std::vector<std::size_t> expression_offsets(const dsl::Program& p, dsl::Dialect dialect) {
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const auto& e : p.expressions) {
    offsets.push_back(at);
    at += program_tokens(dsl::Program{{e}}, dialect).size();
  }
  return offsets;
}

// Inverse of program_tokens. Throws ParseError (position = token index) on a
// malformed token stream.
inline dsl::Program program_from_tokens(const std::vector<std::string>& tokens, dsl::Dialect dialect) {
  using namespace dsl;
  if (tokens.empty()) throw ParseError(0, "empty token sequence");
  Program p;
  std::size_t i = 0;
  auto next = [&](const char* what) -> const std::string& {
    if (i >= tokens.size()) throw ParseError(i, std::string("missing ") + what);
    return tokens[i++];
  };
  auto position = [&]() {
    const std::string& t = next("position");
    if (t.size() < 2 || (t[0] != '+' && t[0] != '-')) throw ParseError(i - 1, "bad position token '" + t + "'");
    int k = 0;
    try {
      k = std::stoi(t);
    } catch (const std::exception&) {
      throw ParseError(i - 1, "bad position token '" + t + "'");
    }
    if (!valid_position(k)) throw ParseError(i - 1, "position out of range");
    return k;
  };
  auto span_end = [&](Regex& r, int& idx, Boundary& b) {
    const std::size_t at = i;
    const std::string& t = next("span endpoint");
    // Reuse the expression parser on a synthetic GetSpan with explicit bounds.
    try {
      const auto e = parse_expression("GetSpan_" + t + "_" + t);
      const auto& g = std::get<GetSpan>(e);
      r = g.r1;
      idx = g.i1;
      b = g.b1;
    } catch (const ParseError&) {
      throw ParseError(at, "bad span endpoint '" + t + "'");
    }
  };
  auto substr = [&]() {
    const int k1 = position();
    const int k2 = position();
    return SubStr{k1, k2};
  };
  auto getspan = [&]() {
    GetSpan g{};
    span_end(g.r1, g.i1, g.b1);
    span_end(g.r2, g.i2, g.b2);
    return g;
  };
  auto nesting = [&](const std::string& t, std::size_t at) -> NestingOp {
    try {
      const auto e = parse_expression(t);
      if (const auto* n = std::get_if<Nesting>(&e)) return n->op;
    } catch (const ParseError&) {
    }
    throw ParseError(at, "'" + t + "' is not a nesting op");
  };
  // GetUpto_( and friends end in '(' without being a compose prefix.
  auto is_nesting_token = [](const std::string& t) {
    try {
      return std::holds_alternative<Nesting>(parse_expression(t));
    } catch (const ParseError&) {
      return false;
    }
  };
  while (i < tokens.size()) {
    const std::size_t at = i;
    const std::string& t = tokens[i++];
    if (dialect == Dialect::Toy) {
      Expression e;
      try {
        e = parse_expression(t);
      } catch (const ParseError&) {
        throw ParseError(at, "bad toy token '" + t + "'");
      }
      if (!is_toy_expression(e)) throw ParseError(at, "'" + t + "' is outside the toy dialect");
      p.expressions.push_back(e);
    } else if (t == "Const") {
      const std::string& c = next("constant");
      if (c.size() != 1) throw ParseError(i - 1, "bad constant '" + c + "'");
      p.expressions.push_back(ConstStr{c[0]});
    } else if (t == "SubStr") {
      p.expressions.push_back(substr());
    } else if (t == "GetSpan") {
      p.expressions.push_back(getspan());
    } else if (t.size() > 1 && t.back() == '(' && !is_nesting_token(t)) {
      Compose c{nesting(t.substr(0, t.size() - 1), at), SubStr{1, 1}};
      const std::size_t inner_at = i;
      const std::string& inner = next("inner expression");
      if (inner == "SubStr") {
        c.inner = substr();
      } else if (inner == "GetSpan") {
        c.inner = getspan();
      } else {
        c.inner = nesting(inner, inner_at);
      }
      p.expressions.push_back(c);
    } else {
      p.expressions.push_back(Nesting{nesting(t, at)});
    }
  }
  if (p.expressions.size() > kMaxExpressions) throw ParseError(tokens.size(), "too many expressions");
  return p;
}

// BOS + ids + EOS.
inline std::vector<int> encode_program(const dsl::Program& p, const Vocabulary& vocab, dsl::Dialect dialect) {
  std::vector<int> ids{kBos};
  for (const auto& t : program_tokens(p, dialect)) ids.push_back(vocab.id(t));
  ids.push_back(kEos);
  return ids;
}

// Strips BOS/EOS/PAD framing and rebuilds the program.
inline dsl::Program decode_program(const std::vector<int>& ids, const Vocabulary& vocab, dsl::Dialect dialect) {
  std::vector<std::string> tokens;
  for (int id : ids) {
    if (id == kBos || id == kPad) continue;
    if (id == kEos) break;
    tokens.push_back(vocab.token(id));
  }
  return program_from_tokens(tokens, dialect);
}

inline std::vector<int> encode_text(std::string_view s, const Vocabulary& chars) {
  std::vector<int> ids{kBos};
  for (char c : s) ids.push_back(chars.id(std::string(1, c)));
  ids.push_back(kEos);
  return ids;
}

inline std::string decode_text(const std::vector<int>& ids, const Vocabulary& chars) {
  std::string out;
  for (int id : ids) {
    if (id == kBos || id == kPad) continue;
    if (id == kEos) break;
    out += chars.token(id);
  }
  return out;
}

struct EncodedExamples {
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> outputs;
};

inline EncodedExamples encode_io(const Task& task, const Vocabulary& chars) {
  EncodedExamples out;
  for (const auto& s : task.inputs) out.inputs.push_back(encode_text(s, chars));
  for (const auto& s : task.outputs) out.outputs.push_back(encode_text(s, chars));
  return out;
}

// Right-pads every sequence with PAD to the longest length.
inline std::vector<std::vector<int>> pad_batch(std::vector<std::vector<int>> seqs) {
  std::size_t longest = 0;
  for (const auto& s : seqs) longest = std::max(longest, s.size());
  for (auto& s : seqs) s.resize(longest, kPad);
  return seqs;
}

}  // namespace lp
