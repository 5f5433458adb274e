#pragma once

// Dense 2-D tensors and a tape for reverse-mode differentiation. Sequences
// are packed row-wise (one row per position); ops that care about sequence
// boundaries take explicit segment lists.

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "lp/error.hpp"

namespace lp::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

// A named persistent tensor with its gradient buffer.
template <class T>
struct Tensor {
  std::string name;
  Mat<T> data;
  Mat<T> grad;

  Tensor() = default;
  Tensor(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), data(Mat<T>::Zero(rows, cols)), grad(Mat<T>::Zero(rows, cols)) {}

  std::vector<std::size_t> shape() const {
    return {static_cast<std::size_t>(data.rows()), static_cast<std::size_t>(data.cols())};
  }
  std::size_t size() const { return static_cast<std::size_t>(data.size()); }
  void zero_grad() { grad.setZero(data.rows(), data.cols()); }
};

// Owns parameters in registration order. Pointers stay valid for the life of
// the store.
template <class T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (index_.count(name) != 0) throw ShapeError("duplicate parameter " + name);
    params_.push_back(std::make_unique<Tensor<T>>(name, rows, cols));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }
  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  Tensor<T>& at(const std::string& name) {
    auto* p = find(name);
    if (p == nullptr) throw ShapeError("no parameter " + name);
    return *p;
  }
  std::vector<Tensor<T>*> all() {
    std::vector<Tensor<T>*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Tensor<T>*> all() const {
    std::vector<const Tensor<T>*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }
  // Parameters whose name starts with `prefix`.
  std::vector<Tensor<T>*> with_prefix(const std::string& prefix) {
    std::vector<Tensor<T>*> out;
    for (auto& p : params_) {
      if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
    }
    return out;
  }
  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }
  std::size_t size() const { return params_.size(); }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Tensor<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <class T>
class Graph;

// Handle to a node on a Graph.
template <class T>
struct Var {
  Graph<T>* g = nullptr;
  int id = -1;

  const Mat<T>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool needs_grad() const;
  // Scalar value of a 1x1 node.
  T item() const {
    if (value().size() != 1) throw ShapeError("item() on a non-scalar");
    return value()(0, 0);
  }
};

template <class T>
class Graph {
 public:
  using M = Mat<T>;
  using Backward = std::function<void(Graph&, int)>;

  struct Node {
    M value;
    M grad;
    bool needs_grad = false;
    Backward backward;
    Tensor<T>* param = nullptr;
  };

  Graph() = default;
  // With record = false every node is a constant: nothing is kept for backward.
  explicit Graph(bool record) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(M value) { return push(std::move(value), false, nullptr); }

  // Leaf for a parameter; repeated calls return the same node. Gradients are
  // accumulated into the parameter's grad buffer by backward().
  Var<T> param(Tensor<T>& p, bool trainable = true) {
    trainable = trainable && record_;
    auto it = leaves_.find(&p);
    if (it != leaves_.end() && nodes_[it->second].needs_grad == trainable) return {this, it->second};
    Var<T> v = push(p.data, trainable, nullptr);
    if (trainable) nodes_[v.id].param = &p;
    leaves_[&p] = v.id;
    return v;
  }

  // Node computed from `inputs`; `backward` runs only if some input needs a gradient.
  Var<T> op(M value, std::initializer_list<Var<T>> inputs, Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id].needs_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }
  Var<T> op(M value, const std::vector<Var<T>>& inputs, Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id].needs_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const M& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  const M& grad(int id) const { return nodes_[id].grad; }

  // Gradient accumulator of node `id`, allocated on first use. Null when the
  // node does not need a gradient.
  M* grad_ref(int id) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return nullptr;
    if (n.grad.size() == 0) n.grad = M::Zero(n.value.rows(), n.value.cols());
    return &n.grad;
  }

  // Seeds d(root)/d(root) = 1 (root must be 1x1) and propagates to leaves.
  void backward(Var<T> root) {
    if (root.value().size() != 1) throw ShapeError("backward from a non-scalar");
    if (!nodes_[root.id].needs_grad) return;
    *grad_ref(root.id) = M::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  Var<T> push(M value, bool needs, Backward backward) {
    nodes_.push_back(Node{std::move(value), M{}, needs, std::move(backward), nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  bool record_ = true;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, int> leaves_;
};

template <class T>
const Mat<T>& Var<T>::value() const {
  return g->value(id);
}

template <class T>
bool Var<T>::needs_grad() const {
  return g->needs_grad(id);
}

}  // namespace lp::nn
