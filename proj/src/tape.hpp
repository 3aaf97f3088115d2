#pragma once

// Minimal reverse-mode gradient engine.  A Tape is a define-by-run graph of
// vector-valued nodes built per example; Tensors are the persistent
// parameters.  Values are doubles throughout so finite-difference checks are
// meaningful at tight tolerances.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"

namespace sempar::ad {

struct Tensor {
  std::string name;
  std::size_t rows = 0, cols = 1;
  std::vector<double> value;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(std::string name_, std::size_t rows_, std::size_t cols_ = 1)
      : name(std::move(name_)), rows(rows_), cols(cols_), value(rows_ * cols_, 0.0), grad(rows_ * cols_, 0.0) {}

  std::size_t size() const { return rows * cols; }
  double& at(std::size_t r, std::size_t c) { return value[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return value[r * cols + c]; }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  void init_uniform(Rng& rng, double lo, double hi) {
    for (auto& v : value) v = rng.uniform(lo, hi);
  }
};

class Tape {
 public:
  using Var = std::uint32_t;

  // `record_grads=false` skips backward closures (decode-only graphs).
  explicit Tape(bool record_grads = true) : record_(record_grads) {}

  // Leaves.
  Var param(Tensor& t);                        // vector parameter (cols == 1)
  Var param_row(Tensor& t, std::size_t row);   // one row of an embedding table
  Var constant(std::vector<double> v);

  // Elementwise and linear algebra.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  Var scale(Var a, double k);
  Var tanh_of(Var a);
  Var sigmoid_of(Var a);
  Var matvec(Tensor& w, Var x);  // w (r x c) * x (c) -> r
  Var vecmat(Var x, Tensor& w);  // x (r) * w (r x c) -> c
  Var concat(const std::vector<Var>& xs);
  Var slice(Var a, std::size_t begin, std::size_t len);
  Var mean(const std::vector<Var>& xs);
  Var sum(const std::vector<Var>& xs);  // elementwise sum of same-sized vars
  Var dot(Var a, Var b);                // scalar
  Var weighted_sum(Var weights, const std::vector<Var>& xs);
  Var stack_scalars(const std::vector<Var>& xs);
  Var gather(Var a, std::vector<std::size_t> indices);
  Var softmax(Var logits);
  Var log_softmax(Var logits);
  Var logsumexp(Var a);                // scalar
  Var pick(Var a, std::size_t index);  // scalar

  const std::vector<double>& value(Var v) const { return nodes_[v].val; }
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and accumulates into Tensor::grad via leaves.
  void backward(Var loss);

 private:
  struct Node {
    std::vector<double> val;
    std::vector<double> grad;
    std::function<void(Tape&)> back;  // empty for leaves without params
  };

  Var push(std::vector<double> val, std::function<void(Tape&)> back);
  std::vector<double>& grad(Var v) { return nodes_[v].grad; }

  std::vector<Node> nodes_;
  bool record_;
};

}  // namespace sempar::ad
