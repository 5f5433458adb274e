#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lp/nn/tensor.hpp"

namespace lp::nn {

using Index = Eigen::Index;

// A run of consecutive rows forming one sequence.
struct Segment {
  Index start = 0;
  Index len = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

inline Index total_rows(const std::vector<Segment>& segs) {
  Index n = 0;
  for (const auto& s : segs) n = std::max(n, s.start + s.len);
  return n;
}

// Back-to-back segments of the given lengths.
inline std::vector<Segment> pack_segments(const std::vector<Index>& lengths) {
  std::vector<Segment> out;
  Index at = 0;
  for (Index n : lengths) {
    out.push_back({at, n});
    at += n;
  }
  return out;
}

namespace detail {

inline void check(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <class T>
void check_same(const Var<T>& a, const Var<T>& b, const char* op) {
  check(a.rows() == b.rows() && a.cols() == b.cols(),
        std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
            std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace detail

template <class T>
Var<T> detach(const Var<T>& x) {
  return x.g->constant(x.value());
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check_same(a, b, "add");
  const int ia = a.id, ib = b.id;
  return a.g->op(a.value() + b.value(), {a, b}, [ia, ib](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ia)) *d += g.grad(self);
    if (auto* d = g.grad_ref(ib)) *d += g.grad(self);
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::check_same(a, b, "sub");
  const int ia = a.id, ib = b.id;
  return a.g->op(a.value() - b.value(), {a, b}, [ia, ib](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ia)) *d += g.grad(self);
    if (auto* d = g.grad_ref(ib)) *d -= g.grad(self);
  });
}

// Elementwise product.
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::check_same(a, b, "mul");
  const int ia = a.id, ib = b.id;
  return a.g->op(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ia)) *d += g.grad(self).cwiseProduct(g.value(ib));
    if (auto* d = g.grad_ref(ib)) *d += g.grad(self).cwiseProduct(g.value(ia));
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  const int ia = a.id;
  return a.g->op(a.value() * s, {a}, [ia, s](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ia)) *d += g.grad(self) * s;
  });
}

// Sum of 1x1 nodes.
template <class T>
Var<T> add_scalars(const std::vector<Var<T>>& xs) {
  detail::check(!xs.empty(), "add_scalars: empty");
  Mat<T> v = Mat<T>::Zero(1, 1);
  std::vector<int> ids;
  for (const auto& x : xs) {
    detail::check(x.value().size() == 1, "add_scalars: non-scalar input");
    v(0, 0) += x.item();
    ids.push_back(x.id);
  }
  return xs[0].g->op(std::move(v), xs, [ids](Graph<T>& g, int self) {
    for (int i : ids) {
      if (auto* d = g.grad_ref(i)) *d += g.grad(self);
    }
  });
}

// Elementwise sum of every element into a 1x1 node.
template <class T>
Var<T> sum_all(const Var<T>& a) {
  const int ia = a.id;
  Mat<T> v(1, 1);
  v(0, 0) = a.value().sum();
  return a.g->op(std::move(v), {a}, [ia](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ia)) d->array() += g.grad(self)(0, 0);
  });
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::check(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  const int ia = a.id, ib = b.id;
  Mat<T> v = a.value() * b.value();
  return a.g->op(std::move(v), {a, b}, [ia, ib](Graph<T>& g, int self) {
    const auto& dy = g.grad(self);
    if (auto* d = g.grad_ref(ia)) d->noalias() += dy * g.value(ib).transpose();
    if (auto* d = g.grad_ref(ib)) d->noalias() += g.value(ia).transpose() * dy;
  });
}

// x W + b with W: in x out and b: 1 x out.
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  detail::check(x.cols() == w.rows(), "linear: input width " + std::to_string(x.cols()) + " vs weight rows " +
                                          std::to_string(w.rows()));
  detail::check(b.rows() == 1 && b.cols() == w.cols(), "linear: bias shape");
  const int ix = x.id, iw = w.id, ib = b.id;
  Mat<T> v = x.value() * w.value();
  v.rowwise() += b.value().row(0);
  return x.g->op(std::move(v), {x, w, b}, [ix, iw, ib](Graph<T>& g, int self) {
    const auto& dy = g.grad(self);
    if (auto* d = g.grad_ref(ix)) d->noalias() += dy * g.value(iw).transpose();
    if (auto* d = g.grad_ref(iw)) d->noalias() += g.value(ix).transpose() * dy;
    if (auto* d = g.grad_ref(ib)) *d += dy.colwise().sum();
  });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  const int ix = x.id;
  return x.g->op(x.value().cwiseMax(T(0)), {x}, [ix](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ix)) {
      *d += (g.value(ix).array() > T(0)).select(g.grad(self), T(0)).matrix();
    }
  });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  const int ix = x.id;
  return x.g->op(x.value().array().tanh().matrix(), {x}, [ix](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ix)) {
      d->array() += g.grad(self).array() * (T(1) - g.value(self).array().square());
    }
  });
}

// Row-wise layer normalization with gain and bias (1 x C each).
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
  const Index n = x.rows(), c = x.cols();
  detail::check(gain.rows() == 1 && gain.cols() == c && bias.rows() == 1 && bias.cols() == c,
                "layer_norm: affine shape");
  Mat<T> xhat(n, c);
  std::vector<T> inv_std(static_cast<std::size_t>(n));
  const auto& xv = x.value();
  for (Index r = 0; r < n; ++r) {
    const T mean = xv.row(r).mean();
    const T var = (xv.row(r).array() - mean).square().mean();
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    xhat.row(r) = (xv.row(r).array() - mean) * is;
  }
  Mat<T> y = xhat.array().rowwise() * gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  return x.g->op(std::move(y), {x, gain, bias},
                 [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<T>& g, int self) {
                   const auto& dy = g.grad(self);
                   if (auto* d = g.grad_ref(ig)) *d += (dy.array() * xhat.array()).colwise().sum().matrix();
                   if (auto* d = g.grad_ref(ib)) *d += dy.colwise().sum();
                   if (auto* d = g.grad_ref(ix)) {
                     const auto gv = g.value(ig).row(0).array();
                     const T c = static_cast<T>(dy.cols());
                     for (Index r = 0; r < dy.rows(); ++r) {
                       const auto dxhat = (dy.row(r).array() * gv).eval();
                       const T m1 = dxhat.sum() / c;
                       const T m2 = (dxhat * xhat.row(r).array()).sum() / c;
                       d->row(r).array() +=
                           inv_std[static_cast<std::size_t>(r)] * (dxhat - m1 - xhat.row(r).array() * m2);
                     }
                   }
                 });
}

template <class T>
Var<T> concat_cols(const Var<T>& a, const Var<T>& b) {
  detail::check(a.rows() == b.rows(), "concat_cols: row mismatch");
  Mat<T> v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const int ia = a.id, ib = b.id;
  const Index ca = a.cols(), cb = b.cols();
  return a.g->op(std::move(v), {a, b}, [ia, ib, ca, cb](Graph<T>& g, int self) {
    const auto& dy = g.grad(self);
    if (auto* d = g.grad_ref(ia)) *d += dy.leftCols(ca);
    if (auto* d = g.grad_ref(ib)) *d += dy.rightCols(cb);
  });
}

template <class T>
Var<T> concat_rows(const Var<T>& a, const Var<T>& b) {
  detail::check(a.cols() == b.cols(), "concat_rows: column mismatch");
  Mat<T> v(a.rows() + b.rows(), a.cols());
  v << a.value(), b.value();
  const int ia = a.id, ib = b.id;
  const Index ra = a.rows(), rb = b.rows();
  return a.g->op(std::move(v), {a, b}, [ia, ib, ra, rb](Graph<T>& g, int self) {
    const auto& dy = g.grad(self);
    if (auto* d = g.grad_ref(ia)) *d += dy.topRows(ra);
    if (auto* d = g.grad_ref(ib)) *d += dy.bottomRows(rb);
  });
}

// Columns [c0, c0 + n) of x.
template <class T>
Var<T> slice_cols(const Var<T>& x, Index c0, Index n) {
  detail::check(c0 >= 0 && n >= 0 && c0 + n <= x.cols(), "slice_cols: range out of bounds");
  const int ix = x.id;
  return x.g->op(x.value().middleCols(c0, n), {x}, [ix, c0, n](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ix)) d->middleCols(c0, n) += g.grad(self);
  });
}

// Rows of x picked by `idx` (repeats allowed); gradient scatters back.
template <class T>
Var<T> take_rows(const Var<T>& x, std::vector<Index> idx) {
  Mat<T> v(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    detail::check(idx[i] >= 0 && idx[i] < x.rows(), "take_rows: index " + std::to_string(idx[i]) + " out of range");
    v.row(static_cast<Index>(i)) = x.value().row(idx[i]);
  }
  const int ix = x.id;
  return x.g->op(std::move(v), {x}, [ix, idx = std::move(idx)](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ix)) {
      const auto& dy = g.grad(self);
      for (std::size_t i = 0; i < idx.size(); ++i) d->row(idx[i]) += dy.row(static_cast<Index>(i));
    }
  });
}

// Embedding lookup: rows of a table.
template <class T>
Var<T> embed(const Var<T>& table, const std::vector<int>& ids) {
  std::vector<Index> idx(ids.begin(), ids.end());
  return take_rows(table, std::move(idx));
}

// Row r of the output is the elementwise max over rows groups[r] of x.
// Gradient goes to the (first) maximizing row per element.
template <class T>
Var<T> gather_max(const Var<T>& x, const std::vector<std::vector<Index>>& groups) {
  const Index c = x.cols();
  Mat<T> v(static_cast<Index>(groups.size()), c);
  std::vector<Index> arg(static_cast<std::size_t>(groups.size() * static_cast<std::size_t>(c)));
  const auto& xv = x.value();
  for (std::size_t r = 0; r < groups.size(); ++r) {
    detail::check(!groups[r].empty(), "gather_max: empty group");
    for (Index j = 0; j < c; ++j) {
      Index best = groups[r][0];
      for (Index i : groups[r]) {
        if (xv(i, j) > xv(best, j)) best = i;
      }
      v(static_cast<Index>(r), j) = xv(best, j);
      arg[r * static_cast<std::size_t>(c) + static_cast<std::size_t>(j)] = best;
    }
  }
  const int ix = x.id;
  return x.g->op(std::move(v), {x}, [ix, c, arg = std::move(arg)](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ix)) {
      const auto& dy = g.grad(self);
      for (Index r = 0; r < dy.rows(); ++r) {
        for (Index j = 0; j < c; ++j) (*d)(arg[static_cast<std::size_t>(r * c + j)], j) += dy(r, j);
      }
    }
  });
}

// Mean over consecutive blocks of `block` rows within each segment. Segment
// lengths must be multiples of `block`.
template <class T>
Var<T> block_mean(const Var<T>& x, const std::vector<Segment>& segs, Index block) {
  detail::check(block >= 1, "block_mean: block must be >= 1");
  std::vector<Index> starts;
  for (const auto& s : segs) {
    detail::check(s.len % block == 0, "block_mean: segment length not a multiple of the block");
    for (Index b = 0; b < s.len; b += block) starts.push_back(s.start + b);
  }
  Mat<T> v(static_cast<Index>(starts.size()), x.cols());
  const T inv = T(1) / static_cast<T>(block);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    v.row(static_cast<Index>(i)) = x.value().middleRows(starts[i], block).colwise().sum() * inv;
  }
  const int ix = x.id;
  return x.g->op(std::move(v), {x}, [ix, block, inv, starts = std::move(starts)](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ix)) {
      const auto& dy = g.grad(self);
      for (std::size_t i = 0; i < starts.size(); ++i) {
        for (Index k = 0; k < block; ++k) d->row(starts[i] + k) += dy.row(static_cast<Index>(i)) * inv;
      }
    }
  });
}

template <class T>
Mat<T> softmax_rows_value(const Mat<T>& x) {
  Mat<T> p(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const T m = x.row(r).maxCoeff();
    p.row(r) = (x.row(r).array() - m).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

template <class T>
Mat<T> log_softmax_rows_value(const Mat<T>& x) {
  Mat<T> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const T m = x.row(r).maxCoeff();
    const T lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

template <class T>
Var<T> softmax_rows(const Var<T>& x) {
  const int ix = x.id;
  return x.g->op(softmax_rows_value(x.value()), {x}, [ix](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ix)) {
      const auto& p = g.value(self);
      const auto& dy = g.grad(self);
      for (Index r = 0; r < p.rows(); ++r) {
        const T dot = (dy.row(r).array() * p.row(r).array()).sum();
        d->row(r).array() += p.row(r).array() * (dy.row(r).array() - dot);
      }
    }
  });
}

// Mean negative log-likelihood of `targets` under softmax(logits), skipping
// rows whose target equals `ignore`. Returns 0 when every row is ignored.
template <class T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& targets, int ignore = 0) {
  detail::check(static_cast<Index>(targets.size()) == logits.rows(), "cross_entropy: target count");
  Mat<T> logp = log_softmax_rows_value(logits.value());
  Index n = 0;
  T loss = 0;
  for (Index r = 0; r < logp.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t == ignore) continue;
    detail::check(t >= 0 && t < logp.cols(), "cross_entropy: target out of range");
    loss -= logp(r, t);
    ++n;
  }
  Mat<T> v(1, 1);
  v(0, 0) = n > 0 ? loss / static_cast<T>(n) : T(0);
  const int il = logits.id;
  return logits.g->op(std::move(v), {logits},
                      [il, n, ignore, targets, logp = std::move(logp)](Graph<T>& g, int self) {
                        if (n == 0) return;
                        if (auto* d = g.grad_ref(il)) {
                          const T s = g.grad(self)(0, 0) / static_cast<T>(n);
                          for (Index r = 0; r < logp.rows(); ++r) {
                            const int t = targets[static_cast<std::size_t>(r)];
                            if (t == ignore) continue;
                            d->row(r).array() += s * logp.row(r).array().exp();
                            (*d)(r, t) -= s;
                          }
                        }
                      });
}

// Forward value is `q` (exactly); the gradient passes to e unchanged.
template <class T>
Var<T> straight_through(const Var<T>& e, const Mat<T>& q) {
  detail::check(e.rows() == q.rows() && e.cols() == q.cols(), "straight_through: shape mismatch");
  const int ie = e.id;
  return e.g->op(q, {e}, [ie](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ie)) *d += g.grad(self);
  });
}

// Mean over rows of the squared distance ||e_r - c_r||^2, with c held fixed.
template <class T>
Var<T> mean_sq_dist(const Var<T>& e, const Mat<T>& c) {
  detail::check(e.rows() == c.rows() && e.cols() == c.cols(), "mean_sq_dist: shape mismatch");
  detail::check(e.rows() > 0, "mean_sq_dist: empty batch");
  const T inv = T(1) / static_cast<T>(e.rows());
  Mat<T> diff = e.value() - c;
  Mat<T> v(1, 1);
  v(0, 0) = diff.squaredNorm() * inv;
  const int ie = e.id;
  return e.g->op(std::move(v), {e}, [ie, inv, diff = std::move(diff)](Graph<T>& g, int self) {
    if (auto* d = g.grad_ref(ie)) *d += diff * (T(2) * inv * g.grad(self)(0, 0));
  });
}

// Attention block: queries [q0, q0+qn) attend to keys [k0, k0+kn).
struct AttnBlock {
  Index q0 = 0, qn = 0, k0 = 0, kn = 0;
};

// Scaled dot-product attention over packed blocks, split into `heads` column
// groups. With `causal`, query i of a block sees keys 0..i of that block.
// Rows with no visible key output zeros.
template <class T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, const std::vector<AttnBlock>& blocks, int heads,
                 bool causal) {
  const Index d = q.cols();
  detail::check(heads >= 1 && d % heads == 0, "attention: width " + std::to_string(d) + " not divisible by heads");
  detail::check(k.cols() == d && v.cols() == d, "attention: q/k/v width mismatch");
  detail::check(k.rows() == v.rows(), "attention: key/value length mismatch");
  const Index dh = d / heads;
  const T s = T(1) / std::sqrt(static_cast<T>(dh));
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  Mat<T> out = Mat<T>::Zero(Q.rows(), d);
  // probs[b * heads + h] is qn x kn.
  std::vector<Mat<T>> probs(blocks.size() * static_cast<std::size_t>(heads));
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const auto& b = blocks[bi];
    detail::check(b.q0 >= 0 && b.q0 + b.qn <= Q.rows() && b.k0 >= 0 && b.k0 + b.kn <= K.rows(),
                  "attention: block out of range");
    if (b.qn == 0 || b.kn == 0) continue;
    for (int h = 0; h < heads; ++h) {
      Mat<T> sc = Q.block(b.q0, h * dh, b.qn, dh) * K.block(b.k0, h * dh, b.kn, dh).transpose() * s;
      Mat<T>& p = probs[bi * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
      p = Mat<T>::Zero(b.qn, b.kn);
      for (Index i = 0; i < b.qn; ++i) {
        const Index visible = causal ? std::min(b.kn, i + 1) : b.kn;
        if (visible <= 0) continue;
        const T m = sc.row(i).head(visible).maxCoeff();
        p.row(i).head(visible) = (sc.row(i).head(visible).array() - m).exp().matrix();
        p.row(i).head(visible) /= p.row(i).head(visible).sum();
      }
      out.block(b.q0, h * dh, b.qn, dh).noalias() = p * V.block(b.k0, h * dh, b.kn, dh);
    }
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  return q.g->op(std::move(out), {q, k, v},
                 [iq, ik, iv, blocks, heads, dh, s, probs = std::move(probs)](Graph<T>& g, int self) {
                   const auto& dO = g.grad(self);
                   const auto& Q = g.value(iq);
                   const auto& K = g.value(ik);
                   const auto& V = g.value(iv);
                   auto* dQ = g.grad_ref(iq);
                   auto* dK = g.grad_ref(ik);
                   auto* dV = g.grad_ref(iv);
                   for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
                     const auto& b = blocks[bi];
                     if (b.qn == 0 || b.kn == 0) continue;
                     for (int h = 0; h < heads; ++h) {
                       const Mat<T>& p = probs[bi * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
                       const auto dOh = dO.block(b.q0, h * dh, b.qn, dh);
                       if (dV != nullptr) dV->block(b.k0, h * dh, b.kn, dh).noalias() += p.transpose() * dOh;
                       if (dQ == nullptr && dK == nullptr) continue;
                       Mat<T> dp = dOh * V.block(b.k0, h * dh, b.kn, dh).transpose();
                       // dS = P * (dP - rowsum(dP * P)), then scaled.
                       Mat<T> ds = p.cwiseProduct(dp);
                       const auto rs = ds.rowwise().sum().eval();
                       ds -= p.cwiseProduct(rs.replicate(1, b.kn));
                       ds *= s;
                       if (dQ != nullptr) dQ->block(b.q0, h * dh, b.qn, dh).noalias() += ds * K.block(b.k0, h * dh, b.kn, dh);
                       if (dK != nullptr) {
                         dK->block(b.k0, h * dh, b.kn, dh).noalias() += ds.transpose() * Q.block(b.q0, h * dh, b.qn, dh);
                       }
                     }
                   }
                 });
}

// Output length of a stride-`stride` convolution with odd kernel `width` and
// symmetric zero padding: ceil(len / stride).
inline Index conv_out_len(Index len, Index stride) { return (len + stride - 1) / stride; }

// 1-D convolution over each segment. w is (width * C_in) x C_out with tap t
// occupying rows [t*C_in, (t+1)*C_in); b is 1 x C_out. Output segments are
// packed back to back and returned through `out_segs`.
template <class T>
Var<T> conv1d(const Var<T>& x, const std::vector<Segment>& segs, const Var<T>& w, const Var<T>& b, Index width,
              Index stride, std::vector<Segment>* out_segs) {
  detail::check(width >= 1 && width % 2 == 1, "conv1d: kernel width must be odd");
  detail::check(stride >= 1, "conv1d: stride must be >= 1");
  const Index cin = x.cols();
  detail::check(w.rows() == width * cin, "conv1d: weight rows must equal width * input channels");
  detail::check(b.rows() == 1 && b.cols() == w.cols(), "conv1d: bias shape");
  const Index pad = (width - 1) / 2;
  std::vector<Index> lengths;
  for (const auto& s : segs) lengths.push_back(conv_out_len(s.len, stride));
  auto osegs = pack_segments(lengths);
  const Index rows = total_rows(osegs);
  // Column matrix: one row per output position, -1 marks padding.
  std::vector<Index> src(static_cast<std::size_t>(rows * width), -1);
  Mat<T> cols = Mat<T>::Zero(rows, width * cin);
  const auto& xv = x.value();
  for (std::size_t si = 0; si < segs.size(); ++si) {
    const auto& s = segs[si];
    for (Index o = 0; o < osegs[si].len; ++o) {
      const Index r = osegs[si].start + o;
      for (Index t = 0; t < width; ++t) {
        const Index p = o * stride - pad + t;
        if (p < 0 || p >= s.len) continue;
        src[static_cast<std::size_t>(r * width + t)] = s.start + p;
        cols.block(r, t * cin, 1, cin) = xv.row(s.start + p);
      }
    }
  }
  Mat<T> y = cols * w.value();
  y.rowwise() += b.value().row(0);
  if (out_segs != nullptr) *out_segs = osegs;
  const int ix = x.id, iw = w.id, ib = b.id;
  return x.g->op(std::move(y), {x, w, b},
                 [ix, iw, ib, width, cin, src = std::move(src), cols = std::move(cols)](Graph<T>& g, int self) {
                   const auto& dy = g.grad(self);
                   if (auto* d = g.grad_ref(iw)) d->noalias() += cols.transpose() * dy;
                   if (auto* d = g.grad_ref(ib)) *d += dy.colwise().sum();
                   if (auto* d = g.grad_ref(ix)) {
                     const Mat<T> dcols = dy * g.value(iw).transpose();
                     for (Index r = 0; r < dcols.rows(); ++r) {
                       for (Index t = 0; t < width; ++t) {
                         const Index p = src[static_cast<std::size_t>(r * width + t)];
                         if (p >= 0) d->row(p) += dcols.block(r, t * cin, 1, cin);
                       }
                     }
                   }
                 });
}

// Sinusoidal position encodings for positions 0..len-1.
template <class T>
Mat<T> sinusoid_positions(Index len, Index d) {
  Mat<T> pe(len, d);
  for (Index p = 0; p < len; ++p) {
    for (Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double a = static_cast<double>(p) * rate;
      pe(p, i) = static_cast<T>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  }
  return pe;
}

// Position encodings for packed segments (each restarts at 0).
template <class T>
Mat<T> packed_positions(const std::vector<Segment>& segs, Index d) {
  Index longest = 0;
  for (const auto& s : segs) longest = std::max(longest, s.len);
  const Mat<T> table = sinusoid_positions<T>(longest, d);
  Mat<T> pe = Mat<T>::Zero(total_rows(segs), d);
  for (const auto& s : segs) pe.middleRows(s.start, s.len) = table.topRows(s.len);
  return pe;
}

}  // namespace lp::nn
