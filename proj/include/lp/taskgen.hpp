#pragma once

// Synthetic task generation: sample a program from the grammar, then sample
// inputs biased toward the token classes the program references, keeping
// only programs whose outputs are defined and nonempty on every example.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lp/dsl.hpp"
#include "lp/error.hpp"
#include "lp/interpreter.hpp"
#include "lp/rng.hpp"
#include "lp/task.hpp"
#include "lp/vocab.hpp"

namespace lp {

struct GenConfig {
  dsl::Dialect dialect = dsl::Dialect::Full;
  std::size_t n_examples = 4;
  std::size_t max_expressions = 10;
  std::size_t max_string_len = 100;
  // Upper bound on sampled input length (inputs must also fit max_string_len).
  std::size_t max_input_len = 30;
  // Input resamples per example before the program is discarded.
  std::size_t max_retries = 40;
  // Program resamples before giving up with GenerationExhausted.
  std::size_t max_programs = 2000;
  std::uint64_t seed = 0;

  static GenConfig for_dialect(dsl::Dialect d) {
    GenConfig cfg;
    cfg.dialect = d;
    if (d == dsl::Dialect::Toy) cfg.max_input_len = 20;
    return cfg;
  }

  void validate() const {
    if (n_examples < 1) throw ConfigError("n_examples must be >= 1");
    if (max_expressions < 1 || max_expressions > dsl::kMaxExpressions) {
      throw ConfigError("max_expressions must be in [1, 10]");
    }
    if (max_input_len < 1 || max_input_len > max_string_len) throw ConfigError("bad max_input_len");
    if (max_retries < 1 || max_programs < 1) throw ConfigError("retry budgets must be >= 1");
  }
};

namespace detail {

inline int sample_index(Rng& rng) {
  const int i = uniform_int(rng, 1, dsl::kMaxIndex);
  return bernoulli(rng, 0.5) ? i : -i;
}

inline int sample_position(Rng& rng) {
  const int k = uniform_int(rng, 1, dsl::kMaxPosition);
  return bernoulli(rng, 0.5) ? k : -k;
}

inline dsl::Regex sample_regex(Rng& rng) {
  const std::size_t n = dsl::kTypeTokens.size() + dsl::kDelimiters.size();
  const std::size_t j = uniform_index(rng, n);
  if (j < dsl::kTypeTokens.size()) return dsl::Regex::of(dsl::kTypeTokens[j]);
  return dsl::Regex::delimiter(dsl::kDelimiters[j - dsl::kTypeTokens.size()]);
}

inline dsl::TypeToken sample_type(Rng& rng) { return dsl::kTypeTokens[uniform_index(rng, dsl::kTypeTokens.size())]; }

inline char sample_delimiter(Rng& rng) { return dsl::kDelimiters[uniform_index(rng, dsl::kDelimiters.size())]; }

inline dsl::NestingOp sample_nesting(Rng& rng) {
  using namespace dsl;
  switch (uniform_int(rng, 0, 7)) {
    case 0: {
      const auto t = sample_type(rng);
      return GetToken{t, sample_index(rng)};
    }
    case 1: return ToCase{kCaseKinds[uniform_index(rng, kCaseKinds.size())]};
    case 2: {
      const char a = sample_delimiter(rng);
      return Replace{a, sample_delimiter(rng)};
    }
    case 3: return Trim{};
    case 4: return GetUpto{sample_regex(rng)};
    case 5: return GetFrom{sample_regex(rng)};
    case 6: {
      const auto t = sample_type(rng);
      return GetFirst{t, sample_index(rng)};
    }
    default: return GetAll{sample_type(rng)};
  }
}

inline dsl::SubStr sample_substr(Rng& rng) {
  const int k1 = sample_position(rng);
  return {k1, sample_position(rng)};
}

inline dsl::GetSpan sample_getspan(Rng& rng) {
  using namespace dsl;
  GetSpan g{};
  g.r1 = sample_regex(rng);
  g.i1 = sample_index(rng);
  g.b1 = kBoundaries[uniform_index(rng, 2)];
  g.r2 = sample_regex(rng);
  g.i2 = sample_index(rng);
  g.b2 = kBoundaries[uniform_index(rng, 2)];
  return g;
}

inline dsl::GetSpan sample_toy_getspan(Rng& rng) {
  using namespace dsl;
  const std::size_t n = kToyTypes.size() + kToyDelimiters.size();
  auto regex = [&] {
    const std::size_t j = uniform_index(rng, n);
    if (j < kToyTypes.size()) return Regex::of(kToyTypes[j]);
    return Regex::delimiter(kToyDelimiters[j - kToyTypes.size()]);
  };
  GetSpan g{};
  g.r1 = regex();
  g.i1 = kToyIndices[uniform_index(rng, kToyIndices.size())];
  g.b1 = Boundary::Start;
  g.r2 = regex();
  g.i2 = kToyIndices[uniform_index(rng, kToyIndices.size())];
  g.b2 = Boundary::End;
  return g;
}

inline dsl::Expression sample_expression(Rng& rng) {
  using namespace dsl;
  // e := f | n | n1(n2) | n(f) | ConstStr(c), uniformly.
  switch (uniform_int(rng, 0, 4)) {
    case 0: {
      if (bernoulli(rng, 0.5)) return sample_substr(rng);
      return sample_getspan(rng);
    }
    case 1: return Nesting{sample_nesting(rng)};
    case 2: {
      auto outer = sample_nesting(rng);
      return Compose{outer, sample_nesting(rng)};
    }
    case 3: {
      auto outer = sample_nesting(rng);
      if (bernoulli(rng, 0.5)) return Compose{outer, sample_substr(rng)};
      return Compose{outer, sample_getspan(rng)};
    }
    default: {
      static const std::string alphabet = const_alphabet();
      return ConstStr{alphabet[uniform_index(rng, alphabet.size())]};
    }
  }
}

// Minimum occurrence count of each regex the program indexes into, plus the
// order in which the program first references them.
struct Requirements {
  using Key = std::pair<int, char>;  // (TypeToken or -1 for a delimiter, delimiter char)
  std::map<Key, int> need;
  std::vector<Key> order;
  struct Span {
    Key k1;
    int i1;
    Key k2;
    int i2;
  };
  std::vector<Span> spans;  // GetSpan endpoints applied to the raw input
};

inline Requirements::Key requirement_key(const dsl::Regex& r) {
  return {r.is_delimiter() ? -1 : static_cast<int>(r.type()), r.delimiter_char()};
}

inline void require(Requirements& req, const dsl::Regex& r, int i) {
  const auto key = requirement_key(r);
  auto [it, fresh] = req.need.try_emplace(key, 0);
  if (fresh) req.order.push_back(key);
  it->second = std::max(it->second, i > 0 ? i : -i);
}

inline void collect_nesting(Requirements& req, const dsl::NestingOp& op) {
  using namespace dsl;
  std::visit(
      [&](const auto& n) {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, GetToken> || std::is_same_v<N, GetFirst>) {
          require(req, Regex::of(n.t), n.i);
        } else if constexpr (std::is_same_v<N, GetUpto> || std::is_same_v<N, GetFrom>) {
          require(req, n.r, 1);
        } else if constexpr (std::is_same_v<N, GetAll>) {
          require(req, Regex::of(n.t), 1);
        } else if constexpr (std::is_same_v<N, Replace>) {
          require(req, Regex::delimiter(n.d1), 1);
        }
      },
      op);
}

inline Requirements collect_requirements(const dsl::Program& p) {
  using namespace dsl;
  Requirements req;
  auto span = [&](const GetSpan& g) {
    require(req, g.r1, g.i1);
    require(req, g.r2, g.i2);
    req.spans.push_back({requirement_key(g.r1), g.i1, requirement_key(g.r2), g.i2});
  };
  for (const auto& e : p.expressions) {
    if (const auto* g = std::get_if<GetSpan>(&e)) span(*g);
    if (const auto* n = std::get_if<Nesting>(&e)) collect_nesting(req, n->op);
    if (const auto* c = std::get_if<Compose>(&e)) {
      if (const auto* in = std::get_if<NestingOp>(&c->inner)) collect_nesting(req, *in);
      if (const auto* in = std::get_if<GetSpan>(&c->inner)) span(*in);
    }
  }
  return req;
}

// One entry per required occurrence, ordered so that copies of a regex keep
// their order and each span's start occurrence precedes its end occurrence.
// Cycles are broken at random.
inline std::vector<Requirements::Key> random_topological_order(Rng& rng, const Requirements& req) {
  using Key = Requirements::Key;
  std::vector<Key> units;
  std::map<Key, std::size_t> first;
  for (const auto& key : req.order) {
    first[key] = units.size();
    for (int c = 0; c < req.need.at(key); ++c) units.push_back(key);
  }
  auto unit = [&](const Key& key, int i) {
    const int n = req.need.at(key);
    return first.at(key) + static_cast<std::size_t>(i > 0 ? i - 1 : n + i);
  };
  std::vector<std::vector<std::size_t>> preds(units.size());
  for (std::size_t u = 1; u < units.size(); ++u) {
    if (units[u] == units[u - 1]) preds[u].push_back(u - 1);
  }
  for (const auto& sp : req.spans) {
    const std::size_t a = unit(sp.k1, sp.i1);
    const std::size_t b = unit(sp.k2, sp.i2);
    if (a != b && !(sp.k1 == sp.k2)) preds[b].push_back(a);
  }
  std::vector<bool> placed(units.size(), false);
  std::vector<Key> out;
  while (out.size() < units.size()) {
    std::vector<std::size_t> free, left;
    for (std::size_t u = 0; u < units.size(); ++u) {
      if (placed[u]) continue;
      left.push_back(u);
      if (std::all_of(preds[u].begin(), preds[u].end(), [&](std::size_t v) { return placed[v]; })) free.push_back(u);
    }
    const std::size_t u = free.empty() ? pick(rng, left) : pick(rng, free);
    placed[u] = true;
    out.push_back(units[u]);
  }
  return out;
}

inline std::string random_letters(Rng& rng, int n, int style) {
  // style: 0 mixed case, 1 proper case, 2 lower, 3 all caps
  std::string out;
  for (int i = 0; i < n; ++i) {
    bool upper = false;
    switch (style) {
      case 1: upper = i == 0; break;
      case 2: upper = false; break;
      case 3: upper = true; break;
      default: upper = bernoulli(rng, 0.5);
    }
    out += static_cast<char>((upper ? 'A' : 'a') + uniform_int(rng, 0, 25));
  }
  return out;
}

inline std::string random_digits(Rng& rng, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) out += static_cast<char>('0' + uniform_int(rng, 0, 9));
  return out;
}

inline std::string random_alnum(Rng& rng, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (bernoulli(rng, 0.4)) {
      out += static_cast<char>('0' + uniform_int(rng, 0, 9));
    } else {
      out += static_cast<char>((bernoulli(rng, 0.5) ? 'A' : 'a') + uniform_int(rng, 0, 25));
    }
  }
  return out;
}

// A chunk that contains at least one occurrence of class `t`.
inline std::string chunk_for(Rng& rng, dsl::TypeToken t, int max_len = 5) {
  using dsl::TypeToken;
  const int n = uniform_int(rng, 1, std::max(1, max_len));
  switch (t) {
    case TypeToken::Number:
    case TypeToken::Digit: return random_digits(rng, n);
    case TypeToken::Word: return random_letters(rng, n, uniform_int(rng, 0, 3));
    case TypeToken::Alphanum: return random_alnum(rng, n);
    case TypeToken::AllCaps: return random_letters(rng, n, bernoulli(rng, 0.5) ? 3 : 1);
    case TypeToken::PropCase: return random_letters(rng, n, 1);
    case TypeToken::Lower: return random_letters(rng, n, 2);
    case TypeToken::Char: break;
  }
  return random_alnum(rng, n);
}

inline std::string random_chunk(Rng& rng, dsl::Dialect dialect, int max_len = 5) {
  if (dialect == dsl::Dialect::Toy) {
    const std::array kinds = {dsl::TypeToken::Number, dsl::TypeToken::Word, dsl::TypeToken::Alphanum};
    return chunk_for(rng, kinds[uniform_index(rng, kinds.size())], max_len);
  }
  return chunk_for(rng, dsl::kTypeTokens[uniform_index(rng, dsl::kTypeTokens.size())], max_len);
}

inline char random_separator(Rng& rng, dsl::Dialect dialect) {
  if (dialect == dsl::Dialect::Toy) return dsl::kToyDelimiters[uniform_index(rng, dsl::kToyDelimiters.size())];
  if (bernoulli(rng, 0.5)) return ' ';
  return sample_delimiter(rng);
}

}  // namespace detail

// Expression count uniform in [1, max_expressions]; productions uniform, then
// arguments uniform over their domains.
inline dsl::Program sample_program(Rng& rng, const GenConfig& cfg) {
  dsl::Program p;
  const int n = uniform_int(rng, 1, static_cast<int>(cfg.max_expressions));
  for (int i = 0; i < n; ++i) {
    if (cfg.dialect == dsl::Dialect::Toy) {
      p.expressions.emplace_back(lp::detail::sample_toy_getspan(rng));
    } else {
      p.expressions.push_back(lp::detail::sample_expression(rng));
    }
  }
  return p;
}

// Layout of a sampled input: a sequence of chunk classes (TypeToken index,
// or -1 for a random class) and literal separators.
struct InputLayout {
  struct Item {
    int kind = -1;
    char sep = 0;  // nonzero: literal separator
  };
  std::vector<Item> items;
  int cap = 5;
  std::size_t target_len = 0;  // nonzero: cut or pad the rendered input to this length
};

inline std::string render_layout(Rng& rng, const InputLayout& layout, const GenConfig& cfg) {
  std::string out;
  for (const auto& item : layout.items) {
    if (item.sep != 0) {
      out += item.sep;
    } else if (item.kind < 0) {
      out += lp::detail::random_chunk(rng, cfg.dialect, layout.cap);
    } else {
      out += lp::detail::chunk_for(rng, static_cast<dsl::TypeToken>(item.kind), layout.cap);
    }
  }
  if (layout.target_len > 0) {
    while (out.size() < layout.target_len) out += lp::detail::random_chunk(rng, cfg.dialect, layout.cap);
    out.resize(layout.target_len);
  }
  return out;
}

// Input lengths in [1, max_len] on which every SubStr applied to the raw
// input selects a nonempty range.
inline std::vector<std::size_t> substr_lengths(const dsl::Program& p, std::size_t max_len) {
  using namespace dsl;
  std::vector<SubStr> subs;
  for (const auto& e : p.expressions) {
    if (const auto* x = std::get_if<SubStr>(&e)) subs.push_back(*x);
    if (const auto* c = std::get_if<Compose>(&e)) {
      if (const auto* x = std::get_if<SubStr>(&c->inner)) subs.push_back(*x);
    }
  }
  std::vector<std::size_t> out;
  if (subs.empty()) return out;
  for (std::size_t n = 1; n <= max_len; ++n) {
    const int len = static_cast<int>(n);
    auto resolve = [len](int k) { return std::clamp(k > 0 ? k : len + k + 1, 1, len); };
    if (std::all_of(subs.begin(), subs.end(), [&](const SubStr& x) { return resolve(x.k1) <= resolve(x.k2); })) {
      out.push_back(n);
    }
  }
  return out;
}

// Layout with at least |i| chunks of every (regex, i) the program references.
// Half the time the chunks respect the span endpoint order, otherwise they
// are shuffled.
inline InputLayout sample_layout(Rng& rng, const dsl::Program& p, const GenConfig& cfg) {
  using Item = InputLayout::Item;
  const auto req = lp::detail::collect_requirements(p);
  std::vector<Item> units;
  std::size_t n_chunks = 0;
  std::size_t n_forced = 0;
  for (const auto& key : lp::detail::random_topological_order(rng, req)) {
    if (key.first < 0) {
      units.push_back({-1, key.second});
      ++n_forced;
    } else {
      units.push_back({key.first, 0});
      ++n_chunks;
    }
  }
  const int budget = static_cast<int>(cfg.max_input_len);
  const int filler_room = std::max(0, budget / 6 - static_cast<int>(n_chunks));
  const int filler = uniform_int(rng, 0, std::min(3, filler_room));
  for (int i = 0; i < filler; ++i) units.insert(units.begin() + uniform_index(rng, units.size() + 1), Item{});
  n_chunks += static_cast<std::size_t>(filler);
  if (n_chunks == 0) {
    units.insert(units.begin() + uniform_index(rng, units.size() + 1), Item{});
    n_chunks = 1;
  }
  if (bernoulli(rng, 0.5)) shuffle(rng, units);

  // Chunk lengths shrink so that required chunks plus separators fit the budget.
  InputLayout layout;
  const int seps = static_cast<int>(std::max(n_forced, n_chunks)) + 1;
  layout.cap = std::clamp((budget - seps) / static_cast<int>(n_chunks), 1, 5);

  // SubStr ranges depend on the input length alone, so half the time pick a
  // length they accept.
  const auto lengths = substr_lengths(p, cfg.max_input_len);
  if (!lengths.empty() && bernoulli(rng, 0.5)) layout.target_len = pick(rng, lengths);

  if (bernoulli(rng, 0.3)) layout.items.push_back({-1, lp::detail::random_separator(rng, cfg.dialect)});
  for (std::size_t i = 0; i < units.size(); ++i) {
    const bool chunk = units[i].sep == 0;
    if (chunk && !layout.items.empty() && layout.items.back().sep == 0) {
      layout.items.push_back({-1, lp::detail::random_separator(rng, cfg.dialect)});
    }
    layout.items.push_back(units[i]);
    if (!chunk || i + 1 == units.size()) continue;
    if (bernoulli(rng, 0.15)) layout.items.push_back({-1, lp::detail::random_separator(rng, cfg.dialect)});
  }
  return layout;
}

// Same character classes as `input` with fresh letters and digits. Every
// regex in the grammar matches the same spans, so a program that ran on
// `input` runs on the result too.
inline std::string refill(Rng& rng, const std::string& input) {
  std::string out = input;
  for (char& c : out) {
    if (c >= '0' && c <= '9') c = static_cast<char>('0' + uniform_int(rng, 0, 9));
    else if (c >= 'a' && c <= 'z') c = static_cast<char>('a' + uniform_int(rng, 0, 25));
    else if (c >= 'A' && c <= 'Z') c = static_cast<char>('A' + uniform_int(rng, 0, 25));
  }
  return out;
}

inline std::string sample_input(Rng& rng, const dsl::Program& p, const GenConfig& cfg) {
  return render_layout(rng, sample_layout(rng, p, cfg), cfg);
}

struct SampleStats {
  std::size_t input_failures = 0;    // for the accepted program
  std::size_t first_example_failures = 0;
  std::size_t program_resamples = 0;
};

inline Task sample_task(Rng& rng, const GenConfig& cfg, SampleStats* stats = nullptr) {
  cfg.validate();
  for (std::size_t attempt = 0; attempt < cfg.max_programs; ++attempt) {
    dsl::Program program = sample_program(rng, cfg);
    Task task;
    std::size_t failures = 0;
    std::size_t first_failures = 0;
    std::optional<InputLayout> accepted_layout;
    bool ok = true;
    for (std::size_t e = 0; e < cfg.n_examples && ok; ++e) {
      bool found = false;
      for (std::size_t r = 0; r < cfg.max_retries; ++r) {
        // Cycle through re-filling an accepted layout, a fresh layout, and
        // re-filling an accepted input, so ordering constraints between spans
        // are not left to chance on every example.
        enum class Source { Fresh, Layout, Pattern } source = Source::Fresh;
        if (accepted_layout) {
          static constexpr Source kCycle[] = {Source::Layout, Source::Layout, Source::Fresh, Source::Pattern};
          source = kCycle[r % 4];
        }
        InputLayout layout = source == Source::Fresh ? sample_layout(rng, program, cfg) : *accepted_layout;
        std::string input = source == Source::Pattern ? refill(rng, task.inputs[uniform_index(rng, task.inputs.size())])
                                                      : render_layout(rng, layout, cfg);
        if (input.size() > cfg.max_input_len ||
            std::find(task.inputs.begin(), task.inputs.end(), input) != task.inputs.end()) {
          ++failures;
          continue;
        }
        auto output = dsl::try_execute(program, input);
        if (!output || output->empty() || output->size() > cfg.max_string_len) {
          ++failures;
          continue;
        }
        if (source == Source::Fresh) accepted_layout = std::move(layout);
        task.inputs.push_back(std::move(input));
        task.outputs.push_back(std::move(*output));
        found = true;
        break;
      }
      ok = found;
      if (e == 0) first_failures = failures;
    }
    if (ok) {
      task.program = std::move(program);
      if (stats != nullptr) *stats = {failures, first_failures, attempt};
      return task;
    }
  }
  throw GenerationExhausted("no valid task after " + std::to_string(cfg.max_programs) + " programs");
}

// Task `i` draws from its own stream derived from (seed, i), so output does
// not depend on how the work is split.
inline Task sample_task_at(const GenConfig& cfg, std::size_t index) {
  Rng rng = derive_rng(cfg.seed, index);
  return sample_task(rng, cfg);
}

inline std::vector<Task> generate_tasks(const GenConfig& cfg, std::size_t count, std::size_t workers = 1) {
  cfg.validate();
  std::vector<Task> tasks(count);
  workers = std::max<std::size_t>(1, std::min(workers, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) tasks[i] = sample_task_at(cfg, i);
    return tasks;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) tasks[i] = sample_task_at(cfg, i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return tasks;
}

}  // namespace lp
