#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lp/checkpoint.hpp"
#include "lp/taskgen.hpp"
#include "lp/train.hpp"

namespace lp::train {
namespace {

namespace fs = std::filesystem;
using nn::Index;
using nn::Mat;

TrainConfig tiny_config(long steps) {
  TrainConfig c;
  c.model = ModelConfig::defaults(dsl::Dialect::Toy);
  c.model.embed_dim = 16;
  c.model.hidden = 32;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.codebook_size = 6;
  c.steps = steps;
  c.batch_size = 4;
  c.warmup_steps = 10;
  c.pretrain_steps = steps / 4;
  c.log_every = 1;
  c.seed = 3;
  return c;
}

std::vector<EncodedTask> toy_data(const Vocabularies& v, std::size_t n, std::size_t max_expr = 3) {
  GenConfig g = GenConfig::for_dialect(dsl::Dialect::Toy);
  g.max_expressions = max_expr;
  g.seed = 21;
  std::vector<EncodedTask> out;
  for (const auto& t : generate_tasks(g, n)) out.push_back(model::encode_task(t, v));
  return out;
}

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / ("lp_train_test_" + name)).string(); }

std::vector<MetricsRow> run(const TrainConfig& cfg, const std::vector<EncodedTask>& data, TrainState& s) {
  std::vector<MetricsRow> rows;
  TrainHooks hooks;
  hooks.on_log = [&](const MetricsRow& r) { rows.push_back(r); };
  train(cfg, data, s, hooks);
  return rows;
}

TEST(TrainConfig, JsonAndValidation) {
  const auto c = train_config_from_json(
      {{"steps", 100}, {"pretrain_steps", 10}, {"model", {{"dialect", "toy"}, {"embed_dim", 32}, {"heads", 2}}}});
  EXPECT_EQ(c.steps, 100);
  EXPECT_EQ(c.effective_pretrain(), 10);
  EXPECT_EQ(c.model.embed_dim, 32);
  EXPECT_EQ(c.model.codebook_size, 10);
  EXPECT_EQ(c.batch_size, 32);
  EXPECT_DOUBLE_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.warmup_steps, 1000);
  EXPECT_DOUBLE_EQ(c.clip_norm, 1.0);
  nlohmann::json j = c;
  EXPECT_EQ(train_config_from_json(j).model, c.model);

  EXPECT_EQ(train_config_from_json({{"steps", 50}}).effective_pretrain(), 5);
  EXPECT_THROW(train_config_from_json({{"steps", 10}, {"pretrain_steps", 11}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"stepz", 10}}), ConfigError);
  EXPECT_THROW(train_config_from_json({{"steps", "ten"}}), ConfigError);
}

TEST(Train, WarmupSchedule) {
  TrainConfig c;
  c.lr = 1e-3;
  c.warmup_steps = 1000;
  EXPECT_DOUBLE_EQ(learning_rate(c, 0), 1e-6);
  EXPECT_DOUBLE_EQ(learning_rate(c, 499), 5e-4);
  EXPECT_DOUBLE_EQ(learning_rate(c, 999), 1e-3);
  EXPECT_DOUBLE_EQ(learning_rate(c, 5000), 1e-3);
}

TEST(Train, SamplerCoversEpochsAndDependsOnlyOnStep) {
  BatchSampler a(10, 4, 1), b(10, 4, 1);
  std::vector<int> seen(10, 0);
  for (long s = 0; s < 5; ++s) {
    for (auto i : a.indices(s)) ++seen[i];
  }
  for (int c : seen) EXPECT_EQ(c, 2);
  EXPECT_EQ(a.indices(7), b.indices(7));
  EXPECT_EQ(a.indices(2), b.indices(2));
}

TEST(Train, DeterministicLossCurve) {
  const auto cfg = tiny_config(12);
  auto s1 = initial_state(cfg);
  auto s2 = initial_state(cfg);
  const auto data = toy_data(s1.model->vocab, 12);
  const auto r1 = run(cfg, data, s1);
  const auto r2 = run(cfg, data, s2);
  ASSERT_EQ(r1.size(), 12u);
  ASSERT_EQ(r2.size(), 12u);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    EXPECT_EQ(r1[i].total, r2[i].total);
    EXPECT_EQ(r1[i].e2e, r2[i].e2e);
  }
  EXPECT_EQ(r1.back().step, 11);
  EXPECT_EQ(r1[2].e2e, 0);   // pretraining
  EXPECT_GT(r1[5].e2e, 0);
}

TEST(Train, PurePretrainingRun) {
  auto cfg = tiny_config(6);
  cfg.pretrain_steps = 6;
  auto s = initial_state(cfg);
  const auto data = toy_data(s.model->vocab, 8);
  const auto rows = run(cfg, data, s);
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) EXPECT_EQ(r.e2e, 0);
  EXPECT_EQ(s.step, 6);
}

TEST(Train, OverfitsSmallBatch) {
  auto cfg = tiny_config(300);
  cfg.pretrain_steps = 50;
  cfg.model.embed_dim = 32;
  cfg.model.hidden = 64;
  cfg.lr = 3e-3;
  cfg.batch_size = 4;
  auto s = initial_state(cfg);
  const auto data = toy_data(s.model->vocab, 4, 2);
  const auto rows = run(cfg, data, s);
  // Mean of the first and last 20 steps after the warmup/pretraining switch.
  double early = 0, late = 0;
  for (int i = 60; i < 80; ++i) early += rows[static_cast<std::size_t>(i)].total;
  for (std::size_t i = rows.size() - 20; i < rows.size(); ++i) late += rows[i].total;
  EXPECT_LT(late, 0.5 * early);
  EXPECT_LT(rows.back().ae, 0.5);
}

TEST(Train, DivergenceIsReported) {
  const auto cfg = tiny_config(3);
  auto s = initial_state(cfg);
  const auto data = toy_data(s.model->vocab, 4);
  s.model->params.at("dec.out.b").data(0, 5) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(train(cfg, data, s), DivergenceError);
}

TEST(Train, RejectsMismatchedState) {
  const auto cfg = tiny_config(3);
  auto other = cfg;
  other.model.embed_dim = 32;
  auto s = initial_state(other);
  const auto data = toy_data(s.model->vocab, 4);
  EXPECT_THROW(train(cfg, data, s), ConfigError);
}

TEST(Train, MetricsCsv) {
  auto cfg = tiny_config(4);
  cfg.log_every = 2;
  auto s = initial_state(cfg);
  const auto data = toy_data(s.model->vocab, 4);
  std::ostringstream csv;
  csv << kMetricsHeader << '\n';
  TrainHooks hooks;
  hooks.evaluate = [](const model::Model<float>&) { return 0.25; };
  cfg.eval_every = 4;
  train(cfg, data, s, hooks, &csv);
  std::istringstream in(csv.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0].substr(0, 11), "step,total,");
  EXPECT_EQ(lines[1].substr(0, 2), "1,");
  EXPECT_EQ(lines[2].substr(0, 2), "3,");
  EXPECT_EQ(lines[2].substr(lines[2].size() - 5), ",0.25");
}

Mat<float> forward_probe(const model::Model<float>& m, const std::vector<EncodedTask>& data) {
  nn::Graph<float> g(false);
  const auto spec = m.encode_spec(g, {&data[0], &data[1]});
  const auto& p = data[0].program;
  std::vector<int> prefix{kBos};
  prefix.insert(prefix.end(), p.begin(), p.end());
  std::vector<int> lp_prefix{kBos};
  for (int c : m.encode_codes(p)) lp_prefix.push_back(kReserved + c);
  const model::LatentInput<float> z{g.constant(vq::lookup(m.codebook, m.encode_codes(p))),
                                    {{0, static_cast<Index>(lp_prefix.size() - 1)}},
                                    {0, 0}};
  const auto dec = m.decoder_logits(g, spec, {0, 1}, &z, {prefix, prefix});
  const auto lp = m.predictor_logits(g, spec, {0, 1}, {lp_prefix, lp_prefix});
  Mat<float> out(dec.rows() + lp.rows(), std::max(dec.cols(), lp.cols()));
  out.setZero();
  out.topLeftCorner(dec.rows(), dec.cols()) = dec.value();
  out.bottomLeftCorner(lp.rows(), lp.cols()) = lp.value();
  return out;
}

TEST(Checkpoint, SaveLoadForwardIsBitIdentical) {
  const auto cfg = tiny_config(5);
  auto s = initial_state(cfg);
  const auto data = toy_data(s.model->vocab, 6);
  train(cfg, data, s);
  const auto path = temp_path("roundtrip.lpck");
  save_checkpoint(path, s, {{"note", "x"}});
  EXPECT_FALSE(fs::exists(path + ".tmp"));
  const auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.step, 5);
  EXPECT_EQ(loaded.adam.step, s.adam.step);
  EXPECT_EQ(loaded.model->cfg, s.model->cfg);
  EXPECT_EQ(loaded.model->codebook.c, s.model->codebook.c);
  EXPECT_EQ(loaded.model->codebook.ema_counts, s.model->codebook.ema_counts);
  for (const auto& [name, m] : s.adam.m) EXPECT_EQ(loaded.adam.m.at(name), m);
  for (const auto& [name, v] : s.adam.v) EXPECT_EQ(loaded.adam.v.at(name), v);
  EXPECT_EQ(forward_probe(*loaded.model, data), forward_probe(*s.model, data));
  EXPECT_EQ(read_checkpoint_file(path).meta.at("note"), "x");
  fs::remove(path);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const auto cfg = tiny_config(10);
  auto straight = initial_state(cfg);
  const auto data = toy_data(straight.model->vocab, 8);
  train(cfg, data, straight);

  auto half_cfg = cfg;
  half_cfg.steps = 6;
  auto first = initial_state(cfg);
  train(half_cfg, data, first);
  const auto path = temp_path("resume.lpck");
  save_checkpoint(path, first);
  auto resumed = load_checkpoint(path);
  train(cfg, data, resumed);
  for (const auto* p : straight.model->params.all()) EXPECT_EQ(resumed.model->params.at(p->name).data, p->data) << p->name;
  EXPECT_EQ(resumed.model->codebook.c, straight.model->codebook.c);

  // Resuming a finished run is a no-op.
  const auto before = resumed.model->params.at("dec.out.w").data;
  train(cfg, data, resumed);
  EXPECT_EQ(resumed.step, 10);
  EXPECT_EQ(resumed.model->params.at("dec.out.w").data, before);
  fs::remove(path);
}

TEST(Checkpoint, CorruptionAndVersion) {
  const auto cfg = tiny_config(1);
  auto s = initial_state(cfg);
  const std::string bytes = serialize_checkpoint(checkpoint_from_state(s));
  EXPECT_NO_THROW(parse_checkpoint(bytes));
  for (std::size_t cut : {std::size_t(3), std::size_t(10), bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(parse_checkpoint(bytes.substr(0, cut)), CorruptionError) << cut;
  }
  EXPECT_THROW(parse_checkpoint(bytes + "x"), CorruptionError);
  std::string bumped = bytes;
  bumped[4] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_THROW(parse_checkpoint(bumped), VersionError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad_magic), CorruptionError);

  const auto path = temp_path("truncated.lpck");
  {
    std::ofstream out(path, std::ios::binary);
    out << bytes.substr(0, bytes.size() - 7);
  }
  EXPECT_THROW(load_checkpoint(path), CorruptionError);
  fs::remove(path);
  EXPECT_THROW(load_checkpoint(temp_path("missing.lpck")), IoError);
}

TEST(Checkpoint, LayoutIsLittleEndian) {
  CheckpointData d;
  Mat<float> m(1, 2);
  m << 1.0f, -2.0f;
  d.tensors.push_back({"ab", m});
  d.meta = {{"k", 1}};
  const std::string b = serialize_checkpoint(d);
  const std::string expect_head = std::string("LPCK") + std::string("\x01\x00\x00\x00", 4) + std::string("\x01\x00\x00\x00", 4) +
                                  std::string("\x02\x00", 2) + "ab" + std::string("\x02", 1) +
                                  std::string("\x01\x00\x00\x00", 4) + std::string("\x02\x00\x00\x00", 4) +
                                  std::string("\x00\x00\x80\x3f", 4) + std::string("\x00\x00\x00\xc0", 4);
  EXPECT_EQ(b.substr(0, expect_head.size()), expect_head);
  EXPECT_EQ(b.substr(expect_head.size()), std::string("\x07\x00\x00\x00", 4) + "{\"k\":1}");
  EXPECT_EQ(parse_checkpoint(b).tensors[0].data, m);
}

}  // namespace
}  // namespace lp::train
