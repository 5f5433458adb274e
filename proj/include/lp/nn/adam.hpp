#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lp/nn/tensor.hpp"

namespace lp::nn {

template <class T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  // Moments keyed by parameter name.
  std::map<std::string, Mat<T>> m;
  std::map<std::string, Mat<T>> v;
};

// One Adam update with bias correction, using each parameter's grad buffer.
template <class T>
void adam_step(AdamState<T>& st, const std::vector<Tensor<T>*>& params) {
  for (const auto* p : params) {
    if (p->grad.rows() != p->data.rows() || p->grad.cols() != p->data.cols()) {
      throw ShapeError("adam_step: gradient shape of " + p->name);
    }
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const T b1 = static_cast<T>(st.beta1), b2 = static_cast<T>(st.beta2);
  const T step_size = static_cast<T>(st.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(st.eps);
  for (auto* p : params) {
    auto& m = st.m[p->name];
    auto& v = st.v[p->name];
    if (m.size() == 0) m = Mat<T>::Zero(p->data.rows(), p->data.cols());
    if (v.size() == 0) v = Mat<T>::Zero(p->data.rows(), p->data.cols());
    if (m.rows() != p->data.rows() || m.cols() != p->data.cols() || v.rows() != m.rows() || v.cols() != m.cols()) {
      throw ShapeError("adam_step: moment shape of " + p->name);
    }
    m = b1 * m + (T(1) - b1) * p->grad;
    v = b2 * v + (T(1) - b2) * p->grad.cwiseAbs2();
    p->data.array() -= step_size * m.array() / ((v.array() * inv_c2).sqrt() + eps);
  }
}

// Scales all gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before clipping.
template <class T>
double clip_grad_norm(const std::vector<Tensor<T>*>& params, double max_norm) {
  double sq = 0;
  for (const auto* p : params) sq += static_cast<double>(p->grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T f = static_cast<T>(max_norm / norm);
    for (auto* p : params) p->grad *= f;
  }
  return norm;
}

}  // namespace lp::nn
