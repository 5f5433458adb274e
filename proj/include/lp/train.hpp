#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lp/checkpoint.hpp"
#include "lp/model.hpp"
#include "lp/nn/adam.hpp"
#include "lp/rng.hpp"

namespace lp::train {

using model::EncodedTask;
using model::ModelConfig;

struct TrainConfig {
  long steps = 20000;
  int batch_size = 32;
  double lr = 1e-3;
  long warmup_steps = 1000;
  double clip_norm = 1.0;
  // Negative: 10% of `steps`.
  long pretrain_steps = -1;
  long log_every = 100;
  long eval_every = 0;
  long checkpoint_every = 0;
  std::uint64_t seed = 0;
  std::string train_path;
  std::string eval_path;
  // Periodic evaluation settings.
  int eval_beam = 10;
  int eval_latent_beams = 3;
  std::size_t eval_tasks = 100;
  ModelConfig model;

  long effective_pretrain() const { return pretrain_steps >= 0 ? pretrain_steps : steps / 10; }

  void validate() const {
    model.validate();
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (effective_pretrain() > steps) throw ConfigError("pretrain_steps must not exceed steps");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0) || warmup_steps < 0 || !(clip_norm > 0)) throw ConfigError("bad optimizer settings");
    if (log_every < 1 || eval_every < 0 || checkpoint_every < 0) throw ConfigError("bad logging intervals");
    if (eval_beam < 1 || eval_latent_beams < 1 || eval_latent_beams > eval_beam) throw ConfigError("bad eval beams");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"warmup_steps", c.warmup_steps},
       {"clip_norm", c.clip_norm},
       {"pretrain_steps", c.pretrain_steps},
       {"log_every", c.log_every},
       {"eval_every", c.eval_every},
       {"checkpoint_every", c.checkpoint_every},
       {"seed", c.seed},
       {"train_path", c.train_path},
       {"eval_path", c.eval_path},
       {"eval_beam", c.eval_beam},
       {"eval_latent_beams", c.eval_latent_beams},
       {"eval_tasks", c.eval_tasks},
       {"model", c.model}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train config must be an object");
  TrainConfig c;
  c.model = model::model_config_from_json(j.value("model", nlohmann::json::object()));
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "model") continue;
      else if (k == "steps") c.steps = v.get<long>();
      else if (k == "batch_size") c.batch_size = v.get<int>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "warmup_steps") c.warmup_steps = v.get<long>();
      else if (k == "clip_norm") c.clip_norm = v.get<double>();
      else if (k == "pretrain_steps") c.pretrain_steps = v.get<long>();
      else if (k == "log_every") c.log_every = v.get<long>();
      else if (k == "eval_every") c.eval_every = v.get<long>();
      else if (k == "checkpoint_every") c.checkpoint_every = v.get<long>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "train_path") c.train_path = v.get<std::string>();
      else if (k == "eval_path") c.eval_path = v.get<std::string>();
      else if (k == "eval_beam") c.eval_beam = v.get<int>();
      else if (k == "eval_latent_beams") c.eval_latent_beams = v.get<int>();
      else if (k == "eval_tasks") c.eval_tasks = v.get<std::size_t>();
      else throw ConfigError("unknown train config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

struct MetricsRow {
  long step = 0;
  double total = 0, ae = 0, lp = 0, e2e = 0, commit = 0;
  double entropy = 0;
  double grad_norm = 0;
  std::optional<double> eval_accuracy;
};

inline const char* kMetricsHeader =
    "step,total,autoencoder,latent_prediction,end_to_end,commitment,codebook_entropy,grad_norm,eval_accuracy";

inline void write_metrics_row(std::ostream& out, const MetricsRow& r) {
  out << r.step << ',' << r.total << ',' << r.ae << ',' << r.lp << ',' << r.e2e << ',' << r.commit << ','
      << r.entropy << ',' << r.grad_norm << ',';
  if (r.eval_accuracy) out << *r.eval_accuracy;
  out << '\n';
}

struct TrainHooks {
  std::function<double(const model::Model<float>&)> evaluate;
  std::function<void(const MetricsRow&)> on_log;
  std::function<void(const TrainState&)> on_checkpoint;
};

// Fresh state for a config: model initialized from the config seed.
inline TrainState initial_state(const TrainConfig& cfg) {
  TrainState s;
  s.model = std::make_unique<model::Model<float>>(cfg.model, cfg.seed);
  s.adam.lr = cfg.lr;
  return s;
}

// Dataset indices for batch `step`: epochs are independent permutations, so
// the batch depends only on (seed, step) and a resumed run sees the same data.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, int batch, std::uint64_t seed) : n_(n), batch_(batch), seed_(seed) {
    if (n == 0) throw ConfigError("training set is empty");
  }

  std::vector<std::size_t> indices(long step) {
    std::vector<std::size_t> out;
    for (int i = 0; i < batch_; ++i) {
      const auto pos = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_) + static_cast<std::uint64_t>(i);
      const auto epoch = pos / n_;
      if (!perm_ || epoch != epoch_) {
        perm_.emplace(n_);
        for (std::size_t k = 0; k < n_; ++k) (*perm_)[k] = k;
        Rng rng = derive_rng(seed_, 1000003ULL + epoch);
        shuffle(rng, *perm_);
        epoch_ = epoch;
      }
      out.push_back((*perm_)[pos % n_]);
    }
    return out;
  }

 private:
  std::size_t n_;
  int batch_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::optional<std::vector<std::size_t>> perm_;
};

inline double learning_rate(const TrainConfig& cfg, long step) {
  if (cfg.warmup_steps <= 0) return cfg.lr;
  return cfg.lr * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps));
}

// One optimization step on `batch`; returns the logged quantities.
inline MetricsRow train_step(const TrainConfig& cfg, TrainState& s, const std::vector<const EncodedTask*>& batch) {
  auto& m = *s.model;
  m.params.zero_grad();
  nn::Graph<float> g;
  const auto parts = m.compute_loss(g, batch, s.step, cfg.effective_pretrain());
  MetricsRow row;
  row.step = s.step;
  row.total = parts.total.item();
  row.ae = parts.ae.item();
  row.lp = parts.lp.item();
  row.e2e = parts.e2e.item();
  row.commit = parts.commit.item();
  if (!std::isfinite(row.total)) throw DivergenceError("non-finite loss at step " + std::to_string(s.step));
  g.backward(parts.total);
  const auto params = m.params.all();
  row.grad_norm = nn::clip_grad_norm(params, cfg.clip_norm);
  if (!std::isfinite(row.grad_norm)) throw DivergenceError("non-finite gradient at step " + std::to_string(s.step));
  s.adam.lr = learning_rate(cfg, s.step);
  nn::adam_step(s.adam, params);
  if (!m.cfg.baseline) {
    vq::ema_update(m.codebook, parts.h, parts.ids);
    row.entropy = vq::usage_entropy(parts.ids, m.codebook.size());
  }
  ++s.step;
  return row;
}

// Trains from s.step up to cfg.steps. Rows are written to `metrics` every
// log_every steps and at the last step.
inline void train(const TrainConfig& cfg, const std::vector<EncodedTask>& data, TrainState& s,
                  const TrainHooks& hooks = {}, std::ostream* metrics = nullptr) {
  cfg.validate();
  if (s.model == nullptr) throw ConfigError("train: state has no model");
  if (!(s.model->cfg == cfg.model)) throw ConfigError("train: checkpoint model config differs from the run config");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].program.empty()) throw ConfigError("training task " + std::to_string(i) + " has no program");
  }
  BatchSampler sampler(data.size(), cfg.batch_size, cfg.seed);
  while (s.step < cfg.steps) {
    std::vector<const EncodedTask*> batch;
    for (auto i : sampler.indices(s.step)) batch.push_back(&data[i]);
    MetricsRow row = train_step(cfg, s, batch);
    const bool last = s.step == cfg.steps;
    if (hooks.evaluate && cfg.eval_every > 0 && (s.step % cfg.eval_every == 0 || last)) {
      row.eval_accuracy = hooks.evaluate(*s.model);
    }
    if (s.step % cfg.log_every == 0 || last || row.eval_accuracy) {
      if (metrics != nullptr) write_metrics_row(*metrics, row);
      if (hooks.on_log) hooks.on_log(row);
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && s.step % cfg.checkpoint_every == 0 && !last) {
      hooks.on_checkpoint(s);
    }
  }
}

}  // namespace lp::train
