#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "lp/nn/tensor.hpp"
#include "lp/rng.hpp"

namespace lp::nn {

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t coords_checked = 0;
};

// Builds the scalar loss on a fresh graph.
template <class T>
using LossFn = std::function<Var<T>(Graph<T>&)>;

template <class T>
T eval_loss(const LossFn<T>& f) {
  Graph<T> g;
  return f(g).item();
}

// Reverse-mode gradients of f w.r.t. every tensor in `params`, written into
// their grad buffers.
template <class T>
void eval_gradients(const LossFn<T>& f, const std::vector<Tensor<T>*>& params) {
  for (auto* p : params) p->zero_grad();
  Graph<T> g;
  g.backward(f(g));
}

// Central differences against reverse-mode gradients. Tensors larger than
// `max_coords` are checked on a random sample of coordinates. The relative
// error of a coordinate is |a - n| / max(|a|, |n|, floor); the floor keeps
// roundoff on exactly-zero gradients (e.g. key biases under softmax) from
// reading as a large relative error.
template <class T>
GradCheckResult finite_diff_check(const LossFn<T>& f, const std::vector<Tensor<T>*>& params, double eps = 1e-5,
                                  std::size_t max_coords = 64, double floor = 1e-5, std::uint64_t seed = 1) {
  eval_gradients(f, params);
  std::vector<Mat<T>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  Rng rng(seed);
  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto* p = params[pi];
    const std::size_t n = p->size();
    std::vector<std::size_t> coords;
    if (n <= max_coords) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(uniform_index(rng, n));
    }
    for (std::size_t c : coords) {
      T& x = p->data.data()[c];
      const T saved = x;
      x = saved + static_cast<T>(eps);
      const double up = static_cast<double>(eval_loss(f));
      x = saved - static_cast<T>(eps);
      const double down = static_cast<double>(eval_loss(f));
      x = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = static_cast<double>(analytic[pi].data()[c]);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      res.max_rel_error = std::max(res.max_rel_error, rel);
      ++res.coords_checked;
    }
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
  return res;
}

}  // namespace lp::nn
