// lp: dataset generation, training, synthesis and evaluation.
//
// Exit codes: 0 ok, 1 other failure, 2 bad flags, 3 generation exhausted or
// training diverged, 4 config/dialect mismatch, 5 no consistent program.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lp/checkpoint.hpp"
#include "lp/dataset.hpp"
#include "lp/eval.hpp"
#include "lp/search.hpp"
#include "lp/taskgen.hpp"
#include "lp/train.hpp"

namespace {

using namespace lp;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kFailure = 1, kBadFlags = 2, kExhausted = 3, kMismatch = 4, kNoProgram = 5 };

struct BadFlags : Error {
  using Error::Error;
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("lp");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("LP_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::info);
}

dsl::Dialect parse_dialect(const std::string& name) {
  const auto d = dsl::dialect_from_name(name);
  if (!d) throw BadFlags("unknown dialect '" + name + "'");
  return *d;
}

// ---- gen-data

struct GenFlags {
  std::string dialect = "full";
  std::size_t n_tasks = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t n_examples = 4;
  std::size_t max_expressions = 10;
};

int cmd_gen_data(const GenFlags& f, std::size_t workers) {
  GenConfig cfg = GenConfig::for_dialect(parse_dialect(f.dialect));
  cfg.seed = f.seed;
  cfg.n_examples = f.n_examples;
  cfg.max_expressions = f.max_expressions;
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw BadFlags(e.what());
  }
  const auto tasks = generate_tasks(cfg, f.n_tasks, workers);
  write_dataset(tasks, f.out);
  std::map<std::size_t, std::size_t> hist;
  for (const auto& t : tasks) ++hist[t.program->expressions.size()];
  std::cout << "wrote " << tasks.size() << " tasks to " << f.out << "\n";
  eval::Table table{{"expressions", "tasks"}, {}};
  for (const auto& [len, n] : hist) table.rows.push_back({std::to_string(len), std::to_string(n)});
  table.write_text(std::cout);
  return kOk;
}

// ---- train

struct TrainFlags {
  std::string config;
  std::string data;
  std::string eval_data;
  std::string out;
  std::string metrics;
  bool resume = false;
};

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

int cmd_train(const TrainFlags& f, std::size_t workers) {
  auto cfg = train::train_config_from_json(read_json_file(f.config));
  if (!f.data.empty()) cfg.train_path = f.data;
  if (!f.eval_data.empty()) cfg.eval_path = f.eval_data;
  if (cfg.train_path.empty()) throw BadFlags("no training data: pass --data or set train_path");
  const dsl::DialectConfig dialect{cfg.model.dialect};
  const auto tasks = read_dataset(cfg.train_path, dialect);
  std::vector<Task> eval_tasks;
  if (!cfg.eval_path.empty()) {
    eval_tasks = read_dataset(cfg.eval_path, dialect);
    if (eval_tasks.size() > cfg.eval_tasks) eval_tasks.resize(cfg.eval_tasks);
  }

  TrainState state;
  if (f.resume && fs::exists(f.out)) {
    state = load_checkpoint(f.out);
    spdlog::info("resuming from {} at step {}", f.out, state.step);
  } else {
    state = train::initial_state(cfg);
  }
  if (!(state.model->cfg == cfg.model)) throw ConfigError("checkpoint model config differs from " + f.config);

  std::vector<model::EncodedTask> encoded;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!tasks[i].program) throw ConfigError("training task " + std::to_string(i + 1) + " has no program");
    encoded.push_back(model::encode_task(tasks[i], state.model->vocab));
  }

  const std::string metrics_path =
      f.metrics.empty() ? (fs::path(f.out).parent_path() / "metrics.csv").string() : f.metrics;
  const bool append = f.resume && state.step > 0 && fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + metrics_path);
  if (!append) metrics << train::kMetricsHeader << '\n';

  const nlohmann::json extra = {{"train_config", cfg}};
  train::TrainHooks hooks;
  hooks.on_log = [](const train::MetricsRow& r) {
    spdlog::info("step {} loss {:.4f} ae {:.4f} lp {:.4f} e2e {:.4f} commit {:.4f} H {:.3f}{}", r.step, r.total,
                 r.ae, r.lp, r.e2e, r.commit, r.entropy,
                 r.eval_accuracy ? fmt::format(" acc {:.3f}", *r.eval_accuracy) : std::string());
  };
  hooks.on_checkpoint = [&](const TrainState& s) {
    metrics.flush();
    save_checkpoint(f.out, s, extra);
    spdlog::debug("checkpoint at step {}", s.step);
  };
  if (!eval_tasks.empty()) {
    search::SearchConfig sc;
    sc.beam = cfg.eval_beam;
    sc.latent_beams = cfg.eval_latent_beams;
    hooks.evaluate = [&, sc](const model::Model<float>& m) {
      return eval::accuracy_at_b(m, eval_tasks, sc, workers).rate();
    };
  }
  if (state.step >= cfg.steps) {
    spdlog::info("checkpoint already at step {}; nothing to do", state.step);
    return kOk;
  }
  train::train(cfg, encoded, state, hooks, &metrics);
  save_checkpoint(f.out, state, extra);
  spdlog::info("wrote {} (step {}), metrics in {}", f.out, state.step, metrics_path);
  return kOk;
}

// ---- synth / eval shared

struct SearchFlags {
  int beam = 10;
  int latent_beams = 3;
  int max_program_len = 0;
  bool program_only = false;

  search::SearchConfig config() const {
    search::SearchConfig c;
    c.beam = beam;
    c.latent_beams = latent_beams;
    c.max_program_len = max_program_len;
    c.rank_by_program_only = program_only;
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw BadFlags(e.what());
    }
    return c;
  }
};

void add_search_flags(CLI::App* app, SearchFlags& s) {
  app->add_option("--beam", s.beam, "program beam size B")->check(CLI::PositiveNumber);
  app->add_option("--latent-beams", s.latent_beams, "latent beam size L (1 <= L <= B)")->check(CLI::PositiveNumber);
  app->add_option("--max-program-len", s.max_program_len, "program token bound (0: dialect default)");
  app->add_flag("--rank-by-program", s.program_only, "rank candidates by program log-probability only");
}

// ---- synth

struct SynthFlags {
  std::string ckpt;
  std::string task;
  bool show_latents = false;
  SearchFlags search;
};

int cmd_synth(const SynthFlags& f) {
  const auto sc = f.search.config();
  const TrainState state = load_checkpoint(f.ckpt);
  const auto& m = *state.model;
  const Task task = task_from_json(read_json_file(f.task), 1, {m.cfg.dialect});
  const auto cands = search::two_level_synthesize(m, model::encode_task(task, m.vocab), sc);
  const auto best = search::first_consistent(cands, task);
  bool marked = false;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto& c = cands[i];
    const bool hit = !marked && best && c.program && *c.program == *best;
    marked = marked || hit;
    std::cout << (hit ? "* " : "  ") << std::setw(2) << i + 1 << "  " << eval::fmt(c.score) << "  "
              << (c.valid() ? c.text : "<invalid> " + c.text) << "\n";
    if (f.show_latents && !m.cfg.baseline) {
      std::cout << "        latent " << eval::latent_string(c.latent) << "  (f " << eval::fmt(c.f) << ", g "
                << eval::fmt(c.g) << ")\n";
    }
  }
  if (!best) {
    std::cout << "no consistent program among " << cands.size() << " candidates\n";
    return kNoProgram;
  }
  std::cout << "consistent: " << dsl::render_program(*best) << "\n";
  return kOk;
}

// ---- eval

struct EvalFlags {
  std::string ckpt;
  std::string data;
  std::string report = "accuracy";
  std::string out_dir = ".";
  std::size_t limit = 0;
  SearchFlags search;
};

int cmd_eval(const EvalFlags& f, std::size_t workers) {
  static const std::set<std::string> known{"accuracy", "lengths", "diversity", "cooccurrence"};
  std::vector<std::string> reports;
  {
    std::stringstream ss(f.report);
    for (std::string r; std::getline(ss, r, ',');) {
      if (!known.contains(r)) throw BadFlags("unknown report '" + r + "'");
      reports.push_back(r);
    }
  }
  const auto sc = f.search.config();
  const TrainState state = load_checkpoint(f.ckpt);
  const auto& m = *state.model;
  auto tasks = read_dataset(f.data, {m.cfg.dialect});
  if (f.limit > 0 && tasks.size() > f.limit) tasks.resize(f.limit);
  spdlog::info("evaluating {} tasks with B={} L={}", tasks.size(), sc.beam, sc.latent_beams);
  const auto outcomes = eval::evaluate_model(m, tasks, sc, workers);

  fs::create_directories(f.out_dir);
  auto emit = [&](const std::string& name, const eval::Table& t) {
    const auto path = fs::path(f.out_dir) / (name + ".csv");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    t.write_csv(out);
    std::cout << "== " << name << " (" << path.string() << ")\n";
    t.write_text(std::cout);
  };
  for (const auto& r : reports) {
    if (r == "accuracy") {
      emit(r, eval::accuracy_table(eval::accuracy(outcomes)));
    } else if (r == "lengths") {
      emit(r, eval::length_table(eval::length_buckets(outcomes, tasks)));
    } else if (r == "diversity") {
      emit(r, eval::diversity_table(outcomes));
    } else {
      if (m.cfg.baseline) throw ConfigError("co-occurrence needs a latent model, not a baseline");
      if (m.cfg.dialect == dsl::Dialect::Full) {
        spdlog::warn("co-occurrence on the full dialect: latent tokens are much harder to interpret there");
      }
      emit(r, eval::cooccurrence_table(
                  eval::cooccurrence_from(outcomes, m.cfg.codebook_size, m.cfg.ell, m.cfg.dialect)));
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Latent program synthesis: data generation, training, search and evaluation"};
  app.require_subcommand(1);
  std::size_t workers = 1;
  app.add_option("--workers", workers, "worker threads for generation and evaluation")->check(CLI::PositiveNumber);

  GenFlags gen;
  auto* g = app.add_subcommand("gen-data", "generate a JSONL task dataset");
  g->add_option("--dialect", gen.dialect, "full or toy")->check(CLI::IsMember({"full", "toy"}));
  g->add_option("--n-tasks", gen.n_tasks, "number of tasks")->required();
  g->add_option("--seed", gen.seed, "generator seed");
  g->add_option("--out", gen.out, "output JSONL path")->required();
  g->add_option("--n-examples", gen.n_examples, "I/O examples per task");
  g->add_option("--max-expressions", gen.max_expressions, "program length bound (1..10)");

  TrainFlags tr;
  auto* t = app.add_subcommand("train", "train a model and write a checkpoint");
  t->add_option("--config", tr.config, "training config JSON")->required();
  t->add_option("--data", tr.data, "training JSONL (overrides train_path)");
  t->add_option("--eval", tr.eval_data, "held-out JSONL for periodic accuracy (overrides eval_path)");
  t->add_option("--out", tr.out, "checkpoint path")->required();
  t->add_option("--metrics", tr.metrics, "metrics CSV (default: metrics.csv next to --out)");
  t->add_flag("--resume", tr.resume, "continue from --out if it exists");

  SynthFlags sy;
  auto* s = app.add_subcommand("synth", "synthesize programs for one task");
  s->add_option("--ckpt", sy.ckpt, "checkpoint")->required();
  s->add_option("--task", sy.task, "task JSON (a dataset line; program optional)")->required();
  s->add_flag("--show-latents", sy.show_latents, "print latent codes as TOK_k sequences");
  add_search_flags(s, sy.search);

  EvalFlags ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  e->add_option("--ckpt", ev.ckpt, "checkpoint")->required();
  e->add_option("--data", ev.data, "evaluation JSONL")->required();
  e->add_option("--report", ev.report, "comma list of accuracy,lengths,diversity,cooccurrence");
  e->add_option("--out-dir", ev.out_dir, "directory for report CSVs");
  e->add_option("--limit", ev.limit, "evaluate only the first N tasks (0: all)");
  add_search_flags(e, ev.search);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kBadFlags;
  }

  try {
    if (*g) return cmd_gen_data(gen, workers);
    if (*t) return cmd_train(tr, workers);
    if (*s) return cmd_synth(sy);
    if (*e) return cmd_eval(ev, workers);
  } catch (const BadFlags& err) {
    spdlog::error("{}", err.what());
    std::cerr << app.help();
    return kBadFlags;
  } catch (const GenerationExhausted& err) {
    spdlog::error("{}", err.what());
    return kExhausted;
  } catch (const DivergenceError& err) {
    spdlog::error("{}", err.what());
    return kExhausted;
  } catch (const ConfigError& err) {
    spdlog::error("{}", err.what());
    return kMismatch;
  } catch (const DialectError& err) {
    spdlog::error("{}", err.what());
    return kMismatch;
  } catch (const std::exception& err) {
    spdlog::error("{}", err.what());
    return kFailure;
  }
  return kFailure;
}
