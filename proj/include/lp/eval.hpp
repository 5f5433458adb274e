#pragma once

// Evaluation: execution accuracy with a Wilson interval, beam diversity,
// precision-only BLEU, length-bucketed accuracy and latent/operation
// co-occurrence, plus CSV and plain-text table output.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lp/search.hpp"

namespace lp::eval {

using search::Candidate;
using search::SearchConfig;

struct Interval {
  double lo = 0, hi = 0;
};

// Wilson score interval; z = 1.96 for 95%.
inline Interval wilson_interval(std::size_t hits, std::size_t n, double z = 1.96) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(hits) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

struct Accuracy {
  std::size_t hits = 0, n = 0;
  double rate() const { return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n); }
  Interval interval() const { return wilson_interval(hits, n); }
};

// Result of searching one task.
struct TaskOutcome {
  std::vector<Candidate> candidates;
  std::optional<dsl::Program> solution;  // first consistent candidate
  std::string error;                     // set when search produced nothing
  bool solved() const { return solution.has_value(); }
};

using Synthesizer = std::function<std::vector<Candidate>(std::size_t index, const Task&)>;

// Runs `synth` over all tasks on up to `workers` threads. Output order
// follows the input.
inline std::vector<TaskOutcome> evaluate_tasks(const Synthesizer& synth, const std::vector<Task>& tasks,
                                               std::size_t workers = 1) {
  std::vector<TaskOutcome> out(tasks.size());
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        out[i].candidates = synth(i, tasks[i]);
        out[i].solution = search::first_consistent(out[i].candidates, tasks[i]);
      } catch (const search::EmptyBeam& e) {
        out[i].error = e.what();
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, tasks.size()));
  if (workers == 1) {
    run();
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  return out;
}

template <class T>
Synthesizer model_synthesizer(const model::Model<T>& m, const SearchConfig& cfg) {
  cfg.validate();
  return [&m, cfg](std::size_t, const Task& task) {
    const auto enc = model::encode_task(task, m.vocab);
    return search::two_level_synthesize(m, enc, cfg);
  };
}

template <class T>
std::vector<TaskOutcome> evaluate_model(const model::Model<T>& m, const std::vector<Task>& tasks,
                                        const SearchConfig& cfg, std::size_t workers = 1) {
  return evaluate_tasks(model_synthesizer(m, cfg), tasks, workers);
}

inline Accuracy accuracy(const std::vector<TaskOutcome>& outcomes) {
  Accuracy a;
  a.n = outcomes.size();
  for (const auto& o : outcomes) a.hits += o.solved() ? 1 : 0;
  return a;
}

template <class T>
Accuracy accuracy_at_b(const model::Model<T>& m, const std::vector<Task>& tasks, const SearchConfig& cfg,
                       std::size_t workers = 1) {
  return accuracy(evaluate_model(m, tasks, cfg, workers));
}

// Distinct n-grams across all beams divided by the total token count.
inline double distinct_ngrams(const std::vector<std::vector<int>>& beams, int n) {
  if (n < 1) throw ConfigError("distinct_ngrams: n must be >= 1");
  std::set<std::vector<int>> seen;
  std::size_t total = 0;
  for (const auto& b : beams) {
    total += b.size();
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= b.size(); ++i) {
      seen.emplace(b.begin() + static_cast<std::ptrdiff_t>(i), b.begin() + static_cast<std::ptrdiff_t>(i) + n);
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(seen.size()) / static_cast<double>(total);
}

// Mean per-task diversity of the program-token beams.
inline double mean_diversity(const std::vector<TaskOutcome>& outcomes, int n) {
  double sum = 0;
  std::size_t count = 0;
  for (const auto& o : outcomes) {
    if (o.candidates.empty()) continue;
    std::vector<std::vector<int>> beams;
    for (const auto& c : o.candidates) beams.push_back(c.tokens);
    sum += distinct_ngrams(beams, n);
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

// Geometric mean of clipped n-gram precisions for n = 1..4. Zero match
// counts are replaced by 1e-9; no brevity penalty. An order for which
// neither sequence has any n-gram contributes precision 1.
template <class Tok>
double bleu(const std::vector<Tok>& candidate, const std::vector<Tok>& reference, int max_n = 4) {
  double log_sum = 0;
  for (int n = 1; n <= max_n; ++n) {
    std::map<std::vector<Tok>, int> ref_counts, cand_counts;
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + un <= reference.size(); ++i) {
      ++ref_counts[std::vector<Tok>(reference.begin() + static_cast<std::ptrdiff_t>(i),
                                    reference.begin() + static_cast<std::ptrdiff_t>(i + un))];
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i + un <= candidate.size(); ++i) {
      ++cand_counts[std::vector<Tok>(candidate.begin() + static_cast<std::ptrdiff_t>(i),
                                     candidate.begin() + static_cast<std::ptrdiff_t>(i + un))];
      ++total;
    }
    double matched = 0;
    for (const auto& [gram, c] : cand_counts) {
      const auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(c, it->second);
    }
    const std::size_t ref_total = reference.size() >= un ? reference.size() - un + 1 : 0;
    double p = 1.0;  // neither side is long enough for this order
    if (total > 0 || ref_total > 0) {
      p = matched == 0 ? 1e-9 / std::max<double>(1.0, static_cast<double>(total)) : matched / static_cast<double>(total);
    }
    log_sum += std::log(p);
  }
  return std::exp(log_sum / max_n);
}

// A report table rendered either as CSV or as aligned plain text.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write_csv(std::ostream& out) const {
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_cell(cells[i]);
      out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
  }

  void write_text(std::ostream& out) const {
    std::vector<std::size_t> width(header.size());
    for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out << "  ";
        // First column left-aligned, numbers right-aligned.
        out << (i == 0 ? std::left : std::right) << std::setw(static_cast<int>(width[i])) << cells[i];
      }
      out << std::left << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
  }

 private:
  static std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
};

inline std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline Table accuracy_table(const Accuracy& a) {
  const auto ci = a.interval();
  return {{"tasks", "solved", "accuracy", "ci95_low", "ci95_high"},
          {{std::to_string(a.n), std::to_string(a.hits), fmt(a.rate()), fmt(ci.lo), fmt(ci.hi)}}};
}

struct LengthRow {
  std::size_t length = 0;
  Accuracy acc;
};

// Accuracy per ground-truth expression count; empty buckets are omitted.
inline std::vector<LengthRow> length_buckets(const std::vector<TaskOutcome>& outcomes, const std::vector<Task>& tasks) {
  std::map<std::size_t, Accuracy> by_len;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!tasks[i].program) throw ConfigError("length report needs ground-truth programs");
    auto& a = by_len[tasks[i].program->expressions.size()];
    ++a.n;
    a.hits += outcomes[i].solved() ? 1 : 0;
  }
  std::vector<LengthRow> out;
  for (const auto& [len, a] : by_len) out.push_back({len, a});
  return out;
}

template <class T>
std::vector<LengthRow> length_bucket_report(const model::Model<T>& m, const std::vector<Task>& tasks,
                                            const SearchConfig& cfg, std::size_t workers = 1) {
  return length_buckets(evaluate_model(m, tasks, cfg, workers), tasks);
}

inline Table length_table(const std::vector<LengthRow>& rows) {
  Table t{{"length", "tasks", "solved", "accuracy", "ci95_low", "ci95_high"}, {}};
  for (const auto& r : rows) {
    const auto ci = r.acc.interval();
    t.rows.push_back({std::to_string(r.length), std::to_string(r.acc.n), std::to_string(r.acc.hits),
                      fmt(r.acc.rate()), fmt(ci.lo), fmt(ci.hi)});
  }
  return t;
}

// Latent tokens are printed by latent-vocabulary id, so code k is TOK_{k+3}.
inline std::string latent_token_name(int code) { return "TOK_" + std::to_string(code + kReserved); }

inline std::string latent_string(const std::vector<int>& codes) {
  std::string s;
  for (int k : codes) s += (s.empty() ? "" : " | ") + latent_token_name(k);
  return s;
}

// High-level operation of one expression. A GetSpan selecting the first or
// last whole match of one token class gets a named family; other GetSpans
// and the remaining expression kinds are labelled by kind.
inline std::string operation_label(const dsl::Expression& e) {
  if (const auto* g = std::get_if<dsl::GetSpan>(&e)) {
    if (g->r1 == g->r2 && !g->r1.is_delimiter() && g->i1 == g->i2 && (g->i1 == 1 || g->i1 == -1) &&
        g->b1 == dsl::Boundary::Start && g->b2 == dsl::Boundary::End) {
      std::string type;
      switch (g->r1.type()) {
        case dsl::TypeToken::Number: type = "Number"; break;
        case dsl::TypeToken::Word: type = "Word"; break;
        case dsl::TypeToken::Alphanum: type = "Alphanum"; break;
        default: return "Other GetSpan";
      }
      return std::string(g->i1 == 1 ? "Get First " : "Get Last ") + type;
    }
    return "Other GetSpan";
  }
  if (std::holds_alternative<dsl::SubStr>(e)) return "SubStr";
  if (std::holds_alternative<dsl::Nesting>(e)) return "Nesting";
  if (std::holds_alternative<dsl::Compose>(e)) return "Compose";
  return "ConstStr";
}

inline const std::vector<std::string>& getspan_families() {
  static const std::vector<std::string> f{"Get First Number", "Get Last Number",   "Get First Word",
                                          "Get Last Word",    "Get First Alphanum", "Get Last Alphanum"};
  return f;
}

struct Cooccurrence {
  int codebook_size = 0;
  std::map<std::string, std::vector<double>> counts;  // operation -> per-code counts
  std::size_t unaligned = 0;                          // expressions past the end of the code

  // Row of percentages summing to 100 (empty rows stay zero).
  std::vector<double> percentages(const std::string& op) const {
    std::vector<double> row(static_cast<std::size_t>(codebook_size), 0.0);
    const auto it = counts.find(op);
    if (it == counts.end()) return row;
    double total = 0;
    for (double c : it->second) total += c;
    if (total == 0) return row;
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = 100.0 * it->second[k] / total;
    return row;
  }
  double row_total(const std::string& op) const {
    const auto it = counts.find(op);
    double total = 0;
    if (it != counts.end()) {
      for (double c : it->second) total += c;
    }
    return total;
  }
};

// Aligns expression j of `program` with latent position offset(j) / 2^ell.
inline void accumulate_cooccurrence(Cooccurrence& co, const dsl::Program& program, const std::vector<int>& codes,
                                    int ell, dsl::Dialect dialect) {
  const auto offsets = expression_offsets(program, dialect);
  const std::size_t block = std::size_t{1} << ell;
  for (std::size_t j = 0; j < program.expressions.size(); ++j) {
    const std::size_t pos = offsets[j] / block;
    if (pos >= codes.size()) {
      ++co.unaligned;
      continue;
    }
    auto& row = co.counts[operation_label(program.expressions[j])];
    row.resize(static_cast<std::size_t>(co.codebook_size), 0.0);
    row[static_cast<std::size_t>(codes[pos])] += 1;
  }
}

// Uses, per task, the first consistent candidate or else the best parseable
// one, together with the latent code it was decoded from.
inline Cooccurrence cooccurrence_from(const std::vector<TaskOutcome>& outcomes, int codebook_size, int ell,
                                      dsl::Dialect dialect) {
  Cooccurrence co;
  co.codebook_size = codebook_size;
  for (const auto& o : outcomes) {
    const Candidate* pick = nullptr;
    for (const auto& c : o.candidates) {
      if (!c.program) continue;
      if (o.solution && *c.program == *o.solution) {
        pick = &c;
        break;
      }
      if (pick == nullptr) pick = &c;
    }
    if (pick != nullptr) accumulate_cooccurrence(co, *pick->program, pick->latent, ell, dialect);
  }
  return co;
}

template <class T>
Cooccurrence latent_cooccurrence(const model::Model<T>& m, const std::vector<Task>& tasks, const SearchConfig& cfg,
                                 std::size_t workers = 1) {
  if (m.cfg.baseline) throw ConfigError("co-occurrence needs a latent model");
  return cooccurrence_from(evaluate_model(m, tasks, cfg, workers), m.cfg.codebook_size, m.cfg.ell, m.cfg.dialect);
}

inline Table cooccurrence_table(const Cooccurrence& co) {
  Table t{{"operation"}, {}};
  for (int k = 0; k < co.codebook_size; ++k) t.header.push_back(latent_token_name(k));
  t.header.push_back("count");
  std::vector<std::string> ops = getspan_families();
  for (const auto& [op, _] : co.counts) {
    if (std::find(ops.begin(), ops.end(), op) == ops.end()) ops.push_back(op);
  }
  for (const auto& op : ops) {
    const double total = co.row_total(op);
    if (total == 0) continue;
    std::vector<std::string> row{op};
    for (double p : co.percentages(op)) row.push_back(fmt(p, 1));
    row.push_back(std::to_string(static_cast<long>(total)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Number of named GetSpan families whose modal code holds at least
// `threshold` of the row (rows with no occurrences never count).
inline int concentrated_families(const Cooccurrence& co, double threshold) {
  int n = 0;
  for (const auto& op : getspan_families()) {
    if (co.row_total(op) == 0) continue;
    const auto row = co.percentages(op);
    if (*std::max_element(row.begin(), row.end()) >= 100.0 * threshold) ++n;
  }
  return n;
}

inline Table diversity_table(const std::vector<TaskOutcome>& outcomes) {
  Table t{{"n", "distinct_ngrams"}, {}};
  for (int n = 1; n <= 4; ++n) t.rows.push_back({std::to_string(n), fmt(mean_diversity(outcomes, n))});
  return t;
}

}  // namespace lp::eval
