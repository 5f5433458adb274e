#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lp/nn/ops.hpp"
#include "lp/rng.hpp"

namespace lp::nn {

template <class T>
void init_uniform(Tensor<T>& t, Rng& rng, double limit) {
  for (Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = static_cast<T>(uniform_real(rng, -limit, limit));
}

template <class T>
void init_xavier(Tensor<T>& t, Rng& rng, Index fan_in, Index fan_out) {
  init_uniform(t, rng, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

inline std::vector<AttnBlock> self_blocks(const std::vector<Segment>& segs) {
  std::vector<AttnBlock> out;
  for (const auto& s : segs) out.push_back({s.start, s.len, s.start, s.len});
  return out;
}

// Query segment i attends to key segment i.
inline std::vector<AttnBlock> cross_blocks(const std::vector<Segment>& qs, const std::vector<Segment>& ks) {
  if (qs.size() != ks.size()) throw ShapeError("cross_blocks: segment count mismatch");
  std::vector<AttnBlock> out;
  for (std::size_t i = 0; i < qs.size(); ++i) out.push_back({qs[i].start, qs[i].len, ks[i].start, ks[i].len});
  return out;
}

template <class T>
struct Linear {
  Tensor<T>* w = nullptr;
  Tensor<T>* b = nullptr;

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, Index in, Index out, Rng& rng) {
    w = &ps.add(name + ".w", in, out);
    b = &ps.add(name + ".b", 1, out);
    init_xavier(*w, rng, in, out);
  }
  Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return linear(x, g.param(*w), g.param(*b)); }
};

template <class T>
struct LayerNorm {
  Tensor<T>* gain = nullptr;
  Tensor<T>* bias = nullptr;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& name, Index d) {
    gain = &ps.add(name + ".gain", 1, d);
    bias = &ps.add(name + ".bias", 1, d);
    gain->data.setOnes();
  }
  Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return layer_norm(x, g.param(*gain), g.param(*bias)); }
};

template <class T>
struct FeedForward {
  Linear<T> in, out;

  FeedForward() = default;
  FeedForward(ParamStore<T>& ps, const std::string& name, Index d, Index hidden, Rng& rng)
      : in(ps, name + ".in", d, hidden, rng), out(ps, name + ".out", hidden, d, rng) {}
  Var<T> operator()(Graph<T>& g, const Var<T>& x) const { return out(g, relu(in(g, x))); }
};

template <class T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& ps, const std::string& name, Index d, int h, Rng& rng)
      : wq(ps, name + ".q", d, d, rng),
        wk(ps, name + ".k", d, d, rng),
        wv(ps, name + ".v", d, d, rng),
        wo(ps, name + ".o", d, d, rng),
        heads(h) {
    if (h < 1 || d % h != 0) throw ShapeError("width " + std::to_string(d) + " not divisible by " + std::to_string(h));
  }
  Var<T> operator()(Graph<T>& g, const Var<T>& queries, const Var<T>& memory, const std::vector<AttnBlock>& blocks,
                    bool causal) const {
    return wo(g, attention(wq(g, queries), wk(g, memory), wv(g, memory), blocks, heads, causal));
  }
};

// Pre-norm residual block: self-attention then feed-forward.
template <class T>
struct EncoderLayer {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  FeedForward<T> ff;

  EncoderLayer() = default;
  EncoderLayer(ParamStore<T>& ps, const std::string& name, Index d, Index hidden, int heads, Rng& rng)
      : ln1(ps, name + ".ln1", d),
        ln2(ps, name + ".ln2", d),
        attn(ps, name + ".attn", d, heads, rng),
        ff(ps, name + ".ff", d, hidden, rng) {}
  Var<T> operator()(Graph<T>& g, Var<T> x, const std::vector<AttnBlock>& self, bool causal) const {
    const Var<T> h = ln1(g, x);
    x = add(x, attn(g, h, h, self, causal));
    return add(x, ff(g, ln2(g, x)));
  }
};

// Pre-norm residual block: self-attention, cross-attention to a memory, then
// feed-forward.
template <class T>
struct DecoderLayer {
  LayerNorm<T> ln1, ln2, ln3;
  MultiHeadAttention<T> self_attn, cross_attn;
  FeedForward<T> ff;

  DecoderLayer() = default;
  DecoderLayer(ParamStore<T>& ps, const std::string& name, Index d, Index hidden, int heads, Rng& rng)
      : ln1(ps, name + ".ln1", d),
        ln2(ps, name + ".ln2", d),
        ln3(ps, name + ".ln3", d),
        self_attn(ps, name + ".self", d, heads, rng),
        cross_attn(ps, name + ".cross", d, heads, rng),
        ff(ps, name + ".ff", d, hidden, rng) {}
  Var<T> operator()(Graph<T>& g, Var<T> x, const Var<T>& memory, const std::vector<AttnBlock>& self,
                    const std::vector<AttnBlock>& cross, bool causal) const {
    const Var<T> h = ln1(g, x);
    x = add(x, self_attn(g, h, h, self, causal));
    x = add(x, cross_attn(g, ln2(g, x), memory, cross, false));
    return add(x, ff(g, ln3(g, x)));
  }
};

template <class T>
struct EncoderStack {
  std::vector<EncoderLayer<T>> layers;
  LayerNorm<T> final_ln;

  EncoderStack() = default;
  EncoderStack(ParamStore<T>& ps, const std::string& name, int n, Index d, Index hidden, int heads, Rng& rng)
      : final_ln(ps, name + ".ln", d) {
    for (int i = 0; i < n; ++i) layers.emplace_back(ps, name + "." + std::to_string(i), d, hidden, heads, rng);
  }
  Var<T> operator()(Graph<T>& g, Var<T> x, const std::vector<Segment>& segs, bool causal = false) const {
    const auto blocks = self_blocks(segs);
    for (const auto& l : layers) x = l(g, x, blocks, causal);
    return final_ln(g, x);
  }
};

template <class T>
struct DecoderStack {
  std::vector<DecoderLayer<T>> layers;
  LayerNorm<T> final_ln;

  DecoderStack() = default;
  DecoderStack(ParamStore<T>& ps, const std::string& name, int n, Index d, Index hidden, int heads, Rng& rng)
      : final_ln(ps, name + ".ln", d) {
    for (int i = 0; i < n; ++i) layers.emplace_back(ps, name + "." + std::to_string(i), d, hidden, heads, rng);
  }
  // Query segment i cross-attends to memory segment i.
  Var<T> operator()(Graph<T>& g, Var<T> x, const std::vector<Segment>& segs, const Var<T>& memory,
                    const std::vector<Segment>& memory_segs, bool causal) const {
    const auto self = self_blocks(segs);
    const auto cross = cross_blocks(segs, memory_segs);
    for (const auto& l : layers) x = l(g, x, memory, self, cross, causal);
    return final_ln(g, x);
  }
};

// Strided 1-D convolution with an odd kernel and symmetric zero padding.
template <class T>
struct Conv1d {
  Tensor<T>* w = nullptr;
  Tensor<T>* b = nullptr;
  Index width = 3;
  Index stride = 2;

  Conv1d() = default;
  Conv1d(ParamStore<T>& ps, const std::string& name, Index d, Rng& rng, Index kernel = 3, Index s = 2)
      : width(kernel), stride(s) {
    if (kernel < 1 || kernel % 2 == 0) throw ShapeError("conv kernel width must be odd");
    w = &ps.add(name + ".w", kernel * d, d);
    b = &ps.add(name + ".b", 1, d);
    init_xavier(*w, rng, kernel * d, d);
  }
  Var<T> operator()(Graph<T>& g, const Var<T>& x, const std::vector<Segment>& segs,
                    std::vector<Segment>* out_segs) const {
    return conv1d(x, segs, g.param(*w), g.param(*b), width, stride, out_segs);
  }
};

}  // namespace lp::nn
