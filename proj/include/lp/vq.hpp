#pragma once

// Vector-quantization bottleneck: nearest-neighbour codebook lookup, EMA
// codebook updates, commitment loss, straight-through and soft lookups.

#include <cmath>
#include <utility>
#include <vector>

#include "lp/nn/ops.hpp"
#include "lp/rng.hpp"

namespace lp::vq {

using nn::Graph;
using nn::Index;
using nn::Mat;
using nn::Var;

template <class T>
struct Codebook {
  Mat<T> c;           // K x D
  Mat<T> ema_counts;  // K x 1
  Mat<T> ema_sums;    // K x D
  double gamma = 0.99;
  double eps = 1e-5;
  double beta = 0.25;

  Codebook() = default;
  // Rows uniform in [-1/K, 1/K]; EMA state starts at unit count per row so
  // that c = sums / counts holds from the start.
  Codebook(Index k, Index d, Rng& rng) {
    if (k < 2) throw ShapeError("codebook needs K >= 2");
    c.resize(k, d);
    const double lim = 1.0 / static_cast<double>(k);
    for (Index i = 0; i < c.size(); ++i) c.data()[i] = static_cast<T>(uniform_real(rng, -lim, lim));
    ema_counts = Mat<T>::Ones(k, 1);
    ema_sums = c;
  }

  Index size() const { return c.rows(); }
  Index dim() const { return c.cols(); }
};

// Nearest row by Euclidean distance; ties go to the lowest index.
template <class T, class Row>
std::pair<int, Mat<T>> quantize(const Codebook<T>& cb, const Row& e) {
  int best = 0;
  T best_d = (cb.c.row(0) - e).squaredNorm();
  for (Index k = 1; k < cb.size(); ++k) {
    const T d = (cb.c.row(k) - e).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return {best, cb.c.row(best)};
}

// Quantizes every row of `e`: assigned ids and the matching codebook rows.
template <class T>
std::pair<std::vector<int>, Mat<T>> quantize_rows(const Codebook<T>& cb, const Mat<T>& e) {
  if (e.cols() != cb.dim()) throw ShapeError("quantize: width mismatch");
  std::vector<int> ids(static_cast<std::size_t>(e.rows()));
  Mat<T> q(e.rows(), e.cols());
  for (Index r = 0; r < e.rows(); ++r) {
    auto [k, row] = quantize(cb, e.row(r));
    ids[static_cast<std::size_t>(r)] = k;
    q.row(r) = row;
  }
  return {std::move(ids), std::move(q)};
}

template <class T>
Mat<T> lookup(const Codebook<T>& cb, const std::vector<int>& ids) {
  Mat<T> q(static_cast<Index>(ids.size()), cb.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) q.row(static_cast<Index>(i)) = cb.c.row(ids[i]);
  return q;
}

// Forward value is the quantized rows; the gradient is copied to e. The
// codebook gets nothing.
template <class T>
Var<T> straight_through(const Codebook<T>& cb, const Var<T>& e, std::vector<int>* ids = nullptr) {
  auto [k, q] = quantize_rows(cb, e.value());
  if (ids != nullptr) *ids = std::move(k);
  return nn::straight_through(e, q);
}

// beta * mean over rows of ||e - sg(c_{q(e)})||^2.
template <class T>
Var<T> commitment_loss(const Codebook<T>& cb, const Var<T>& e) {
  if (e.rows() == 0) throw ShapeError("commitment_loss: empty batch");
  auto [k, q] = quantize_rows(cb, e.value());
  return nn::scale(nn::mean_sq_dist(e, q), static_cast<T>(cb.beta));
}

// EMA update from encoder outputs `e` (rows) and their assignments.
template <class T>
void ema_update(Codebook<T>& cb, const Mat<T>& e, const std::vector<int>& ids) {
  if (static_cast<Index>(ids.size()) != e.rows()) throw ShapeError("ema_update: assignment count");
  if (e.rows() == 0) return;
  if (e.cols() != cb.dim()) throw ShapeError("ema_update: width mismatch");
  const Index k = cb.size();
  Mat<T> counts = Mat<T>::Zero(k, 1);
  Mat<T> sums = Mat<T>::Zero(k, cb.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= k) throw ShapeError("ema_update: code out of range");
    counts(ids[i], 0) += T(1);
    sums.row(ids[i]) += e.row(static_cast<Index>(i));
  }
  const T g = static_cast<T>(cb.gamma);
  cb.ema_counts = g * cb.ema_counts + (T(1) - g) * counts;
  cb.ema_sums = g * cb.ema_sums + (T(1) - g) * sums;
  const T eps = static_cast<T>(cb.eps);
  for (Index r = 0; r < k; ++r) cb.c.row(r) = cb.ema_sums.row(r) / std::max(cb.ema_counts(r, 0), eps);
}

// Row s of the result is sum_k probs[s, k] c_k, differentiable in probs.
template <class T>
Var<T> soft_mix(const Codebook<T>& cb, const Var<T>& probs) {
  if (probs.cols() != cb.size()) throw ShapeError("soft_mix: probability width must equal K");
  for (Index r = 0; r < probs.rows(); ++r) {
    const auto row = probs.value().row(r);
    if (row.minCoeff() < T(0) || std::abs(static_cast<double>(row.sum()) - 1.0) > 1e-5) {
      throw ShapeError("soft_mix: row " + std::to_string(r) + " is not a distribution");
    }
  }
  return nn::matmul(probs, probs.g->constant(cb.c));
}

// Entropy (nats) of the empirical code distribution.
inline double usage_entropy(const std::vector<int>& ids, Index k) {
  if (ids.empty()) return 0;
  std::vector<double> counts(static_cast<std::size_t>(k), 0);
  for (int id : ids) counts[static_cast<std::size_t>(id)] += 1;
  double h = 0;
  for (double c : counts) {
    if (c == 0) continue;
    const double p = c / static_cast<double>(ids.size());
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace lp::vq
