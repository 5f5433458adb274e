#pragma once

// Program encoder, latent predictor and latent-conditioned program decoder,
// all sharing one specification encoder, plus the combined training loss.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lp/error.hpp"
#include "lp/nn/layers.hpp"
#include "lp/rng.hpp"
#include "lp/task.hpp"
#include "lp/vocab.hpp"
#include "lp/vq.hpp"

namespace lp::model {

using nn::Graph;
using nn::Index;
using nn::Mat;
using nn::Segment;
using nn::Var;

struct ModelConfig {
  int embed_dim = 128;
  int hidden = 512;
  int layers = 3;
  int heads = 4;
  int ell = 2;
  int codebook_size = 40;
  dsl::Dialect dialect = dsl::Dialect::Full;
  // No latent stream: a plain spec-conditioned decoder.
  bool baseline = false;
  double beta = 0.25;
  double gamma = 0.99;

  static ModelConfig defaults(dsl::Dialect d) {
    ModelConfig c;
    c.dialect = d;
    c.codebook_size = d == dsl::Dialect::Toy ? 10 : 40;
    return c;
  }

  int block() const { return 1 << ell; }

  void validate() const {
    if (embed_dim < 1 || hidden < 1 || layers < 1) throw ConfigError("model sizes must be positive");
    if (heads < 1 || embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
    if (ell < 0 || ell > 16) throw ConfigError("ell out of range");
    if (codebook_size < 2) throw ConfigError("codebook_size must be >= 2");
    if (!(beta >= 0) || !(gamma > 0 && gamma < 1)) throw ConfigError("bad beta/gamma");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"embed_dim", c.embed_dim},
       {"hidden", c.hidden},
       {"layers", c.layers},
       {"heads", c.heads},
       {"ell", c.ell},
       {"codebook_size", c.codebook_size},
       {"dialect", std::string(dsl::dialect_name(c.dialect))},
       {"baseline", c.baseline},
       {"beta", c.beta},
       {"gamma", c.gamma}};
}

// Missing keys take the dialect's defaults; unknown keys are rejected.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be an object");
  dsl::Dialect d = dsl::Dialect::Full;
  if (j.contains("dialect")) {
    auto parsed = dsl::dialect_from_name(j.at("dialect").get<std::string>());
    if (!parsed) throw ConfigError("unknown dialect " + j.at("dialect").dump());
    d = *parsed;
  }
  ModelConfig c = ModelConfig::defaults(d);
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "dialect") continue;
      else if (k == "embed_dim") c.embed_dim = v.get<int>();
      else if (k == "hidden") c.hidden = v.get<int>();
      else if (k == "layers") c.layers = v.get<int>();
      else if (k == "heads") c.heads = v.get<int>();
      else if (k == "ell") c.ell = v.get<int>();
      else if (k == "codebook_size") c.codebook_size = v.get<int>();
      else if (k == "baseline") c.baseline = v.get<bool>();
      else if (k == "beta") c.beta = v.get<double>();
      else if (k == "gamma") c.gamma = v.get<double>();
      else throw ConfigError("unknown model config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ceil(t / 2^ell)
inline Index latent_length(Index t, int ell) {
  const Index b = Index(1) << ell;
  return (t + b - 1) / b;
}

// Character ids (BOS/EOS framed) per example and program content ids (no
// BOS/EOS; empty when the task has no program).
struct EncodedTask {
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> outputs;
  std::vector<int> program;
};

inline EncodedTask encode_task(const Task& task, const Vocabularies& v) {
  EncodedTask out;
  auto io = encode_io(task, v.chars);
  out.inputs = std::move(io.inputs);
  out.outputs = std::move(io.outputs);
  if (task.program) {
    auto ids = encode_program(*task.program, v.program, v.dialect);
    out.program.assign(ids.begin() + 1, ids.end() - 1);
  }
  return out;
}

template <class T>
struct SpecEncoding {
  Var<T> e;                                    // packed rows, one segment per example
  std::vector<Segment> segs;                   // per example
  std::vector<std::vector<int>> task_examples; // per task: indices into segs
};

// Latent rows fed to the decoder. Sequence i reads segment z_of[i].
template <class T>
struct LatentInput {
  Var<T> z;
  std::vector<Segment> segs;
  std::vector<int> z_of;
};

template <class T>
struct LossParts {
  Var<T> total, ae, lp, e2e, commit;
  std::vector<int> ids;  // assigned code per latent row (0-based)
  Mat<T> h;              // encoder outputs, for the EMA update
  bool pretraining = false;
};

// Pins the quantization decision of a previous evaluation: ids stay fixed and
// the quantized rows are h + offset, so the loss is smooth in h while
// carrying the straight-through gradient. Used for finite-difference checks.
template <class T>
struct FrozenQuantization {
  std::vector<int> ids;
  Mat<T> offset;
};

template <class T>
class Model {
 public:
  ModelConfig cfg;
  Vocabularies vocab;
  nn::ParamStore<T> params;
  vq::Codebook<T> codebook;

  Model(const ModelConfig& c, std::uint64_t seed) : cfg(c), vocab(build_vocabularies(c.dialect, c.codebook_size)) {
    cfg.validate();
    Rng rng = derive_rng(seed, 0);
    const Index d = cfg.embed_dim, h = cfg.hidden;
    const int n = cfg.layers, a = cfg.heads;
    const auto vc = static_cast<Index>(vocab.chars.size());
    const auto vp = static_cast<Index>(vocab.program.size());
    const auto vl = static_cast<Index>(vocab.latent.size());

    char_embed_ = &params.add("spec.embed", vc, d);
    nn::init_uniform(*char_embed_, rng, 1.0);
    spec_in_ = nn::EncoderStack<T>(params, "spec.in", n, d, h, a, rng);
    spec_out_ = nn::DecoderStack<T>(params, "spec.out", n, d, h, a, rng);

    dec_embed_ = &params.add("dec.embed", vp, d);
    nn::init_uniform(*dec_embed_, rng, 1.0);
    dec_e_ = nn::DecoderStack<T>(params, "dec.e", n, d, h, a, rng);
    dec_out_ = nn::Linear<T>(params, "dec.out", 2 * d, vp, rng);

    if (!cfg.baseline) {
      dec_z_ = nn::DecoderStack<T>(params, "dec.z", n, d, h, a, rng);

      enc_embed_ = &params.add("enc.embed", vp, d);
      nn::init_uniform(*enc_embed_, rng, 1.0);
      enc_stack_ = nn::EncoderStack<T>(params, "enc.stack", n, d, h, a, rng);
      for (int i = 0; i < cfg.ell; ++i) enc_conv_.emplace_back(params, "enc.conv." + std::to_string(i), d, rng);

      lp_bos_ = &params.add("lp.bos", 1, d);
      nn::init_uniform(*lp_bos_, rng, 1.0);
      lp_in_ = nn::Linear<T>(params, "lp.in", d, d, rng);
      lp_stack_ = nn::DecoderStack<T>(params, "lp.stack", n, d, h, a, rng);
      lp_out_ = nn::Linear<T>(params, "lp.out", d, vl, rng);

      pre_embed_ = &params.add("pre.embed", vp, d);
      nn::init_uniform(*pre_embed_, rng, 1.0);

      Rng cb_rng = derive_rng(seed, 1);
      codebook = vq::Codebook<T>(cfg.codebook_size, d, cb_rng);
      codebook.beta = cfg.beta;
      codebook.gamma = cfg.gamma;
    }
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  Index dim() const { return cfg.embed_dim; }

  // One encoding sequence per example: an encoder over the input characters,
  // then a non-causal stack over the output characters attending to it.
  SpecEncoding<T> encode_spec(Graph<T>& g, const std::vector<const EncodedTask*>& tasks) const {
    std::vector<int> in_ids, out_ids;
    std::vector<Index> in_lens, out_lens;
    SpecEncoding<T> s;
    int ex = 0;
    for (const auto* t : tasks) {
      if (t->inputs.empty() || t->inputs.size() != t->outputs.size()) throw ShapeError("encode_spec: bad example list");
      std::vector<int> mine;
      for (std::size_t i = 0; i < t->inputs.size(); ++i) {
        in_ids.insert(in_ids.end(), t->inputs[i].begin(), t->inputs[i].end());
        out_ids.insert(out_ids.end(), t->outputs[i].begin(), t->outputs[i].end());
        in_lens.push_back(static_cast<Index>(t->inputs[i].size()));
        out_lens.push_back(static_cast<Index>(t->outputs[i].size()));
        mine.push_back(ex++);
      }
      s.task_examples.push_back(std::move(mine));
    }
    const auto in_segs = nn::pack_segments(in_lens);
    s.segs = nn::pack_segments(out_lens);
    const Var<T> table = g.param(*char_embed_);
    const Var<T> xin = with_positions(g, nn::embed(table, in_ids), in_segs);
    const Var<T> mem = spec_in_(g, xin, in_segs);
    const Var<T> xout = with_positions(g, nn::embed(table, out_ids), s.segs);
    s.e = spec_out_(g, xout, s.segs, mem, in_segs, false);
    return s;
  }

  // Encoder outputs h (one segment of ceil(T/2^ell) rows per program).
  Var<T> program_encode(Graph<T>& g, const std::vector<std::vector<int>>& programs, std::vector<Segment>* out_segs) const {
    require_latent();
    std::vector<int> ids;
    std::vector<Index> lens;
    for (const auto& p : programs) {
      if (p.empty()) throw ShapeError("program_encode: empty program");
      ids.insert(ids.end(), p.begin(), p.end());
      lens.push_back(static_cast<Index>(p.size()));
    }
    std::vector<Segment> segs = nn::pack_segments(lens);
    Var<T> h = enc_stack_(g, with_positions(g, nn::embed(g.param(*enc_embed_), ids), segs), segs);
    for (const auto& conv : enc_conv_) {
      std::vector<Segment> next;
      h = conv(g, h, segs, &next);
      segs = std::move(next);
    }
    if (out_segs != nullptr) *out_segs = std::move(segs);
    return h;
  }

  // Logits over the latent vocabulary (PAD/BOS masked out) for every prefix
  // position; rows are packed per prefix. Prefix tokens are latent vocab ids
  // starting with BOS. Sequence i is conditioned on task task_of[i].
  Var<T> predictor_logits(Graph<T>& g, const SpecEncoding<T>& spec, const std::vector<int>& task_of,
                          const std::vector<std::vector<int>>& prefixes, bool last_only = false) const {
    require_latent();
    if (task_of.size() != prefixes.size()) throw ShapeError("predictor: task_of size");
    // Row 0 is BOS, row 1 + k is code k.
    const Var<T> table = nn::concat_rows(g.param(*lp_bos_), lp_in_(g, g.constant(codebook.c)));
    std::vector<int> rows;
    std::vector<Index> lens;
    for (const auto& p : prefixes) {
      if (p.empty() || p[0] != kBos) throw ShapeError("predictor: prefix must start with BOS");
      for (std::size_t i = 0; i < p.size(); ++i) {
        const int id = p[i];
        if (i > 0 && (id < kReserved || id >= kReserved + cfg.codebook_size)) {
          throw ShapeError("predictor: prefix token " + std::to_string(id) + " is not a code");
        }
        rows.push_back(i == 0 ? 0 : 1 + id - kReserved);
      }
      lens.push_back(static_cast<Index>(p.size()));
    }
    const auto segs = nn::pack_segments(lens);
    const Var<T> x = with_positions(g, nn::embed(table, rows), segs);
    const Var<T> pooled = per_example_pooled(g, lp_stack_, x, segs, spec, task_of, true);
    Var<T> logits = lp_out_(g, last_only ? nn::take_rows(pooled, last_rows(segs)) : pooled);
    Mat<T> mask = Mat<T>::Zero(logits.rows(), logits.cols());
    mask.col(kPad).setConstant(T(-1e9));
    mask.col(kBos).setConstant(T(-1e9));
    return nn::add(logits, g.constant(std::move(mask)));
  }

  // Logits over program tokens for every prefix position (packed per prefix).
  // Prefixes are program vocab ids starting with BOS. `latent` is ignored in
  // baseline mode and required otherwise.
  Var<T> decoder_logits(Graph<T>& g, const SpecEncoding<T>& spec, const std::vector<int>& task_of,
                        const LatentInput<T>* latent, const std::vector<std::vector<int>>& prefixes,
                        bool last_only = false) const {
    if (task_of.size() != prefixes.size()) throw ShapeError("decoder: task_of size");
    std::vector<int> ids;
    std::vector<Index> lens;
    for (const auto& p : prefixes) {
      if (p.empty() || p[0] != kBos) throw ShapeError("decoder: prefix must start with BOS");
      ids.insert(ids.end(), p.begin(), p.end());
      lens.push_back(static_cast<Index>(p.size()));
    }
    const auto segs = nn::pack_segments(lens);
    const Var<T> x = with_positions(g, nn::embed(g.param(*dec_embed_), ids), segs);
    const Var<T> e = per_example_pooled(g, dec_e_, x, segs, spec, task_of, true);
    Var<T> z;
    if (cfg.baseline) {
      z = g.constant(Mat<T>::Zero(x.rows(), x.cols()));
    } else {
      if (latent == nullptr) throw ShapeError("decoder: latent code required");
      if (latent->z_of.size() != prefixes.size()) throw ShapeError("decoder: z_of size");
      const Var<T> zp = nn::add(latent->z, g.constant(nn::packed_positions<T>(latent->segs, dim())));
      std::vector<Segment> mem;
      for (int k : latent->z_of) mem.push_back(latent->segs.at(static_cast<std::size_t>(k)));
      z = dec_z_(g, x, segs, zp, mem, true);
    }
    Var<T> h = nn::concat_cols(e, z);
    if (last_only) h = nn::take_rows(h, last_rows(segs));
    return dec_out_(g, h);
  }

  // Block averages of program-token embeddings (EOS-padded to a multiple of
  // 2^ell): the latent input used while pretraining the decoder.
  LatentInput<T> averaged_embeddings(Graph<T>& g, const std::vector<std::vector<int>>& programs) const {
    require_latent();
    const Index b = cfg.block();
    std::vector<int> ids;
    std::vector<Index> lens;
    for (const auto& p : programs) {
      const Index padded = latent_length(static_cast<Index>(p.size()), cfg.ell) * b;
      ids.insert(ids.end(), p.begin(), p.end());
      ids.insert(ids.end(), static_cast<std::size_t>(padded) - p.size(), kEos);
      lens.push_back(padded);
    }
    const auto padded_segs = nn::pack_segments(lens);
    LatentInput<T> out;
    out.z = nn::block_mean(nn::embed(g.param(*pre_embed_), ids), padded_segs, b);
    for (auto& l : lens) l /= b;
    out.segs = nn::pack_segments(lens);
    for (std::size_t i = 0; i < programs.size(); ++i) out.z_of.push_back(static_cast<int>(i));
    return out;
  }

  // Training loss for tasks carrying programs. Before `pretrain_steps` the
  // decoder reads averaged embeddings and the end-to-end term is off.
  LossParts<T> compute_loss(Graph<T>& g, const std::vector<const EncodedTask*>& batch, long step,
                            long pretrain_steps, const FrozenQuantization<T>* frozen = nullptr) const {
    if (batch.empty()) throw ShapeError("compute_loss: empty batch");
    std::vector<std::vector<int>> programs, dec_prefix;
    std::vector<int> dec_targets, task_of;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& p = batch[i]->program;
      if (p.empty()) throw ShapeError("compute_loss: task without a program");
      programs.push_back(p);
      std::vector<int> prefix{kBos};
      prefix.insert(prefix.end(), p.begin(), p.end());
      dec_prefix.push_back(std::move(prefix));
      dec_targets.insert(dec_targets.end(), p.begin(), p.end());
      dec_targets.push_back(kEos);
      task_of.push_back(static_cast<int>(i));
    }
    const SpecEncoding<T> spec = encode_spec(g, batch);
    LossParts<T> out;
    const Var<T> zero = g.constant(Mat<T>::Zero(1, 1));

    if (cfg.baseline) {
      out.ae = nn::cross_entropy(decoder_logits(g, spec, task_of, nullptr, dec_prefix), dec_targets);
      out.lp = out.e2e = out.commit = zero;
      out.total = out.ae;
      return out;
    }

    std::vector<Segment> zsegs;
    const Var<T> h = program_encode(g, programs, &zsegs);
    out.h = h.value();
    Var<T> q;
    if (frozen != nullptr) {
      if (static_cast<Index>(frozen->ids.size()) != h.rows()) throw ShapeError("frozen quantization size");
      out.ids = frozen->ids;
      q = nn::add(h, g.constant(frozen->offset));
    } else {
      q = vq::straight_through(codebook, h, &out.ids);
    }
    out.commit = nn::scale(nn::mean_sq_dist(h, vq::lookup(codebook, out.ids)), static_cast<T>(codebook.beta));

    // Latent prediction, teacher-forced on the assigned codes.
    std::vector<std::vector<int>> lp_prefix;
    std::vector<int> lp_targets;
    std::vector<Index> code_rows;  // predictor rows at ground-truth code positions
    Index row = 0;
    for (const auto& s : zsegs) {
      std::vector<int> prefix{kBos};
      for (Index r = 0; r < s.len; ++r) {
        const int code = kReserved + out.ids[static_cast<std::size_t>(s.start + r)];
        prefix.push_back(code);
        lp_targets.push_back(code);
        code_rows.push_back(row + r);
      }
      lp_targets.push_back(kEos);
      row += s.len + 1;
      lp_prefix.push_back(std::move(prefix));
    }
    const Var<T> lp_logits = predictor_logits(g, spec, task_of, lp_prefix);
    out.lp = nn::cross_entropy(lp_logits, lp_targets);

    out.pretraining = step < pretrain_steps;
    if (out.pretraining) {
      const LatentInput<T> avg = averaged_embeddings(g, programs);
      out.ae = nn::cross_entropy(decoder_logits(g, spec, task_of, &avg, dec_prefix), dec_targets);
      out.e2e = zero;
    } else {
      const LatentInput<T> hard{q, zsegs, task_of};
      out.ae = nn::cross_entropy(decoder_logits(g, spec, task_of, &hard, dec_prefix), dec_targets);
      const Var<T> code_logits =
          nn::slice_cols(nn::take_rows(lp_logits, code_rows), Index(kReserved), Index(cfg.codebook_size));
      const LatentInput<T> soft{vq::soft_mix(codebook, nn::softmax_rows(code_logits)), zsegs, task_of};
      out.e2e = nn::cross_entropy(decoder_logits(g, spec, task_of, &soft, dec_prefix), dec_targets);
    }
    out.total = nn::add_scalars<T>({out.ae, out.commit, out.lp, out.e2e});
    return out;
  }

  FrozenQuantization<T> freeze(const LossParts<T>& parts) const {
    return {parts.ids, vq::lookup(codebook, parts.ids) - parts.h};
  }

  // Codes (0-based) the encoder assigns to a program.
  std::vector<int> encode_codes(const std::vector<int>& program) const {
    Graph<T> g(false);
    const Var<T> h = program_encode(g, {program}, nullptr);
    return vq::quantize_rows(codebook, h.value()).first;
  }

 private:
  void require_latent() const {
    if (cfg.baseline) throw ShapeError("baseline model has no latent components");
  }

  Var<T> with_positions(Graph<T>& g, const Var<T>& x, const std::vector<Segment>& segs) const {
    return nn::add(x, g.constant(nn::packed_positions<T>(segs, dim())));
  }

  static std::vector<Index> last_rows(const std::vector<Segment>& segs) {
    std::vector<Index> out;
    for (const auto& s : segs) out.push_back(s.start + s.len - 1);
    return out;
  }

  // Runs `stack` over a copy of each sequence per example of its task (cross-
  // attending to that example's encoding), then max-pools over examples.
  Var<T> per_example_pooled(Graph<T>& g, const nn::DecoderStack<T>& stack, const Var<T>& x,
                            const std::vector<Segment>& segs, const SpecEncoding<T>& spec,
                            const std::vector<int>& task_of, bool causal) const {
    std::vector<Index> rep_rows, rep_lens;
    std::vector<Segment> mem;
    std::vector<std::vector<Index>> groups(static_cast<std::size_t>(x.rows()));
    Index next = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const auto t = static_cast<std::size_t>(task_of[i]);
      if (t >= spec.task_examples.size()) throw ShapeError("task index out of range");
      for (int ex : spec.task_examples[t]) {
        for (Index r = 0; r < segs[i].len; ++r) {
          rep_rows.push_back(segs[i].start + r);
          groups[static_cast<std::size_t>(segs[i].start + r)].push_back(next + r);
        }
        rep_lens.push_back(segs[i].len);
        mem.push_back(spec.segs[static_cast<std::size_t>(ex)]);
        next += segs[i].len;
      }
    }
    const auto rep_segs = nn::pack_segments(rep_lens);
    const Var<T> y = stack(g, nn::take_rows(x, rep_rows), rep_segs, spec.e, mem, causal);
    return nn::gather_max(y, groups);
  }

  nn::Tensor<T>* char_embed_ = nullptr;
  nn::EncoderStack<T> spec_in_;
  nn::DecoderStack<T> spec_out_;

  nn::Tensor<T>* dec_embed_ = nullptr;
  nn::DecoderStack<T> dec_e_, dec_z_;
  nn::Linear<T> dec_out_;

  nn::Tensor<T>* enc_embed_ = nullptr;
  nn::EncoderStack<T> enc_stack_;
  std::vector<nn::Conv1d<T>> enc_conv_;

  nn::Tensor<T>* lp_bos_ = nullptr;
  nn::Linear<T> lp_in_, lp_out_;
  nn::DecoderStack<T> lp_stack_;

  nn::Tensor<T>* pre_embed_ = nullptr;
};

}  // namespace lp::model
