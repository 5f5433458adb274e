#pragma once

// Beam search and two-level (latent code, then program) synthesis.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lp/dsl_text.hpp"
#include "lp/error.hpp"
#include "lp/interpreter.hpp"
#include "lp/model.hpp"
#include "lp/vocab.hpp"

namespace lp::search {

struct EmptyBeam : Error {
  using Error::Error;
};

struct Hypothesis {
  std::vector<int> tokens;  // BOS first
  double score = 0;
  bool finished = false;
};

// Log-distribution over the next token for each prefix. Entries equal to
// -inf are never expanded.
using StepScorer = std::function<std::vector<std::vector<double>>(const std::vector<std::vector<int>>&)>;

namespace detail {

// Higher score first; equal scores by token ids, lexicographically ascending.
inline bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace detail

// Finished hypotheses are kept in the beam and compete with expansions for
// its `beam` slots. Output: the finished hypotheses of the final beam, best
// first.
inline std::vector<Hypothesis> beam_search(const StepScorer& scorer, int beam, int max_len, int bos = kBos,
                                           int eos = kEos) {
  if (beam < 1 || max_len < 1) throw ConfigError("beam_search: beam and max_len must be >= 1");
  std::vector<Hypothesis> cur{{{bos}, 0.0, false}};
  for (int step = 0; step < max_len; ++step) {
    std::vector<const Hypothesis*> active;
    std::vector<std::vector<int>> prefixes;
    for (const auto& h : cur) {
      if (!h.finished) {
        active.push_back(&h);
        prefixes.push_back(h.tokens);
      }
    }
    if (active.empty()) break;
    const auto logp = scorer(prefixes);
    if (logp.size() != active.size()) throw ShapeError("beam_search: scorer returned wrong row count");
    std::vector<Hypothesis> pool;
    for (const auto& h : cur) {
      if (h.finished) pool.push_back(h);
    }
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t t = 0; t < logp[i].size(); ++t) {
        const double lp = logp[i][t];
        if (std::isinf(lp) && lp < 0) continue;
        Hypothesis h{active[i]->tokens, active[i]->score + lp, static_cast<int>(t) == eos};
        h.tokens.push_back(static_cast<int>(t));
        pool.push_back(std::move(h));
      }
    }
    const auto keep = std::min(pool.size(), static_cast<std::size_t>(beam));
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(), detail::better);
    pool.resize(keep);
    cur = std::move(pool);
  }
  std::vector<Hypothesis> out;
  for (auto& h : cur) {
    if (h.finished) out.push_back(std::move(h));
  }
  if (out.empty()) throw EmptyBeam("no hypothesis finished within " + std::to_string(max_len) + " tokens");
  std::sort(out.begin(), out.end(), detail::better);
  return out;
}

struct SearchConfig {
  int beam = 10;          // B
  int latent_beams = 3;   // L
  int max_latent_len = 0; // 0: derived from the program bound
  int max_program_len = 0;// 0: dialect default (tokens, excluding EOS)
  // Rank by program log-probability alone instead of latent + program.
  bool rank_by_program_only = false;
  // Merge candidates with identical rendered text, keeping the best score.
  bool dedup = true;

  void validate() const {
    if (latent_beams < 1 || latent_beams > beam) throw ConfigError("need 1 <= latent beams <= beam");
    if (max_latent_len < 0 || max_program_len < 0) throw ConfigError("negative length bound");
  }
  int program_bound(dsl::Dialect d) const {
    if (max_program_len > 0) return max_program_len;
    return d == dsl::Dialect::Toy ? static_cast<int>(dsl::kMaxExpressions) : 8 * static_cast<int>(dsl::kMaxExpressions);
  }
  int latent_bound(dsl::Dialect d, int ell) const {
    if (max_latent_len > 0) return max_latent_len;
    return static_cast<int>(model::latent_length(program_bound(d), ell)) + 1;
  }
};

struct Candidate {
  std::vector<int> latent;  // codes, 0-based (empty for the baseline)
  std::vector<int> tokens;  // program ids without BOS/EOS
  double f = 0;             // latent log-probability
  double g = 0;             // program log-probability
  double score = 0;         // ranking key
  std::optional<dsl::Program> program;
  std::string text;
  bool valid() const { return program.has_value(); }
};

// Shared per-task state: spec encodings computed once.
template <class T>
class TaskScorer {
 public:
  TaskScorer(const model::Model<T>& m, const model::EncodedTask& task) : m_(m) {
    nn::Graph<T> g(false);
    const auto s = m.encode_spec(g, {&task});
    e_ = s.e.value();
    segs_ = s.segs;
    examples_ = s.task_examples;
  }

  std::vector<std::vector<double>> latent_step(const std::vector<std::vector<int>>& prefixes) const {
    nn::Graph<T> g(false);
    const auto spec = spec_on(g);
    const auto logits = m_.predictor_logits(g, spec, std::vector<int>(prefixes.size(), 0), prefixes, true);
    return to_logp(logits.value());
  }

  // Program-level step conditioned on codebook rows for `codes`.
  std::vector<std::vector<double>> program_step(const std::vector<int>& codes,
                                                const std::vector<std::vector<int>>& prefixes) const {
    nn::Graph<T> g(false);
    const auto spec = spec_on(g);
    const std::vector<int> task_of(prefixes.size(), 0);
    if (m_.cfg.baseline) return to_logp(m_.decoder_logits(g, spec, task_of, nullptr, prefixes, true).value());
    const model::LatentInput<T> z{g.constant(vq::lookup(m_.codebook, codes)),
                                  {{0, static_cast<nn::Index>(codes.size())}},
                                  std::vector<int>(prefixes.size(), 0)};
    return to_logp(m_.decoder_logits(g, spec, task_of, &z, prefixes, true).value());
  }

 private:
  model::SpecEncoding<T> spec_on(nn::Graph<T>& g) const { return {g.constant(e_), segs_, examples_}; }

  static std::vector<std::vector<double>> to_logp(const nn::Mat<T>& logits) {
    const auto lp = nn::log_softmax_rows_value(logits);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(lp.rows()));
    for (nn::Index r = 0; r < lp.rows(); ++r) {
      auto& row = out[static_cast<std::size_t>(r)];
      row.resize(static_cast<std::size_t>(lp.cols()));
      for (nn::Index c = 0; c < lp.cols(); ++c) row[static_cast<std::size_t>(c)] = static_cast<double>(lp(r, c));
      row[kPad] = -std::numeric_limits<double>::infinity();
      row[kBos] = -std::numeric_limits<double>::infinity();
    }
    return out;
  }

  const model::Model<T>& m_;
  nn::Mat<T> e_;
  std::vector<nn::Segment> segs_;
  std::vector<std::vector<int>> examples_;
};

namespace detail {

template <class T>
Candidate make_candidate(const model::Model<T>& m, std::vector<int> codes, double f, const Hypothesis& h,
                         bool program_only) {
  Candidate c;
  c.latent = std::move(codes);
  c.tokens.assign(h.tokens.begin() + 1, h.tokens.end() - 1);
  c.f = f;
  c.g = h.score;
  c.score = program_only ? c.g : c.f + c.g;
  try {
    c.program = decode_program(h.tokens, m.vocab.program, m.vocab.dialect);
    c.text = dsl::render_program(*c.program);
  } catch (const Error&) {
    c.program.reset();
    for (int t : c.tokens) c.text += (c.text.empty() ? "" : " ") + m.vocab.program.token(t);
  }
  return c;
}

inline std::vector<Candidate> rank(std::vector<Candidate> cands, bool dedup = true) {
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.text < b.text;
  });
  if (!dedup) return cands;
  std::vector<Candidate> out;
  std::map<std::string, bool> seen;
  for (auto& c : cands) {
    if (seen.emplace(c.text, true).second) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

// Latent beam of width L, then a program beam of width floor(B/L) per code.
// Candidates are deduplicated by rendered text (best score kept) and ranked
// by f + g. A baseline model runs a single program beam of width B.
template <class T>
std::vector<Candidate> two_level_synthesize(const model::Model<T>& m, const model::EncodedTask& task,
                                            const SearchConfig& cfg) {
  cfg.validate();
  const TaskScorer<T> scorer(m, task);
  const int prog_len = cfg.program_bound(m.cfg.dialect) + 1;
  std::vector<Candidate> cands;
  if (m.cfg.baseline) {
    const auto progs = beam_search(
        [&](const std::vector<std::vector<int>>& p) { return scorer.program_step({}, p); }, cfg.beam, prog_len);
    for (const auto& h : progs) cands.push_back(detail::make_candidate(m, {}, 0.0, h, cfg.rank_by_program_only));
    return detail::rank(std::move(cands), cfg.dedup);
  }
  const auto codes = beam_search([&](const std::vector<std::vector<int>>& p) { return scorer.latent_step(p); },
                                 cfg.latent_beams, cfg.latent_bound(m.cfg.dialect, m.cfg.ell) + 1);
  const int per_code = cfg.beam / cfg.latent_beams;
  bool any = false;
  for (const auto& zh : codes) {
    std::vector<int> z;
    for (std::size_t i = 1; i + 1 < zh.tokens.size(); ++i) z.push_back(zh.tokens[i] - kReserved);
    std::vector<Hypothesis> progs;
    try {
      progs = beam_search([&](const std::vector<std::vector<int>>& p) { return scorer.program_step(z, p); },
                          per_code, prog_len);
    } catch (const EmptyBeam&) {
      continue;
    }
    any = true;
    for (const auto& h : progs) cands.push_back(detail::make_candidate(m, z, zh.score, h, cfg.rank_by_program_only));
  }
  if (!any) throw EmptyBeam("no program finished for any latent code");
  return detail::rank(std::move(cands), cfg.dedup);
}

// Single-level program beam of width B conditioned on a fixed latent code.
template <class T>
std::vector<Candidate> conditional_beam_search(const model::Model<T>& m, const model::EncodedTask& task,
                                               const std::vector<int>& codes, int beam, int max_program_len) {
  const TaskScorer<T> scorer(m, task);
  const auto progs = beam_search(
      [&](const std::vector<std::vector<int>>& p) { return scorer.program_step(codes, p); }, beam, max_program_len + 1);
  std::vector<Candidate> cands;
  for (const auto& h : progs) cands.push_back(detail::make_candidate(m, codes, 0.0, h, true));
  return detail::rank(std::move(cands));
}

// First candidate that parses and reproduces every example.
inline std::optional<dsl::Program> first_consistent(const std::vector<Candidate>& candidates, const Task& task) {
  for (const auto& c : candidates) {
    if (c.program && dsl::is_consistent(*c.program, task)) return c.program;
  }
  return std::nullopt;
}

}  // namespace lp::search
