#include "tape.hpp"

#include <algorithm>
#include <cmath>

namespace sempar::ad {

Tape::Var Tape::push(std::vector<double> val, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(val), {}, record_ ? std::move(back) : std::function<void(Tape&)>{}});
  Var v = static_cast<Var>(nodes_.size() - 1);
  nodes_[v].grad.assign(nodes_[v].val.size(), 0.0);
  return v;
}

double Tape::scalar(Var v) const {
  if (nodes_[v].val.size() != 1) fail(ErrorCode::Internal, "scalar() on a non-scalar node");
  return nodes_[v].val[0];
}

Tape::Var Tape::param(Tensor& t) {
  if (t.cols != 1) fail(ErrorCode::Internal, "param() expects a vector tensor: " + t.name);
  Tensor* tp = &t;
  Var v = static_cast<Var>(nodes_.size());
  return push(t.value, [v, tp](Tape& tape) {
    const auto& g = tape.grad(v);
    for (std::size_t i = 0; i < g.size(); ++i) tp->grad[i] += g[i];
  });
}

Tape::Var Tape::param_row(Tensor& t, std::size_t row) {
  if (row >= t.rows) fail(ErrorCode::Internal, "row out of range for " + t.name);
  Tensor* tp = &t;
  std::vector<double> val(t.value.begin() + row * t.cols, t.value.begin() + (row + 1) * t.cols);
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(val), [v, tp, row](Tape& tape) {
    const auto& g = tape.grad(v);
    for (std::size_t i = 0; i < g.size(); ++i) tp->grad[row * tp->cols + i] += g[i];
  });
}

Tape::Var Tape::constant(std::vector<double> v) { return push(std::move(v), {}); }

Tape::Var Tape::add(Var a, Var b) {
  const auto& av = nodes_[a].val;
  const auto& bv = nodes_[b].val;
  if (av.size() != bv.size()) fail(ErrorCode::Internal, "add: size mismatch");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, a, b](Tape& t) {
    const auto& g = t.grad(v);
    for (std::size_t i = 0; i < g.size(); ++i) {
      t.grad(a)[i] += g[i];
      t.grad(b)[i] += g[i];
    }
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  const auto& av = nodes_[a].val;
  const auto& bv = nodes_[b].val;
  if (av.size() != bv.size()) fail(ErrorCode::Internal, "sub: size mismatch");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, a, b](Tape& t) {
    const auto& g = t.grad(v);
    for (std::size_t i = 0; i < g.size(); ++i) {
      t.grad(a)[i] += g[i];
      t.grad(b)[i] -= g[i];
    }
  });
}

Tape::Var Tape::cmul(Var a, Var b) {
  const auto& av = nodes_[a].val;
  const auto& bv = nodes_[b].val;
  if (av.size() != bv.size()) fail(ErrorCode::Internal, "cmul: size mismatch");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, a, b](Tape& t) {
    const auto& g = t.grad(v);
    for (std::size_t i = 0; i < g.size(); ++i) {
      t.grad(a)[i] += g[i] * t.nodes_[b].val[i];
      t.grad(b)[i] += g[i] * t.nodes_[a].val[i];
    }
  });
}

Tape::Var Tape::scale(Var a, double k) {
  std::vector<double> out = nodes_[a].val;
  for (auto& x : out) x *= k;
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, a, k](Tape& t) {
    const auto& g = t.grad(v);
    for (std::size_t i = 0; i < g.size(); ++i) t.grad(a)[i] += k * g[i];
  });
}

Tape::Var Tape::tanh_of(Var a) {
  std::vector<double> out = nodes_[a].val;
  for (auto& x : out) x = std::tanh(x);
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, a](Tape& t) {
    const auto& g = t.grad(v);
    const auto& y = t.nodes_[v].val;
    for (std::size_t i = 0; i < g.size(); ++i) t.grad(a)[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Tape::Var Tape::sigmoid_of(Var a) {
  std::vector<double> out = nodes_[a].val;
  for (auto& x : out) x = 1.0 / (1.0 + std::exp(-x));
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, a](Tape& t) {
    const auto& g = t.grad(v);
    const auto& y = t.nodes_[v].val;
    for (std::size_t i = 0; i < g.size(); ++i) t.grad(a)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Tape::Var Tape::matvec(Tensor& w, Var x) {
  const auto& xv = nodes_[x].val;
  if (xv.size() != w.cols) fail(ErrorCode::Internal, "matvec: size mismatch for " + w.name);
  std::vector<double> out(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = 0.0;
    const double* row = &w.value[r * w.cols];
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * xv[c];
    out[r] = acc;
  }
  Tensor* wp = &w;
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, wp, x](Tape& t) {
    const auto& g = t.grad(v);
    const auto& xv2 = t.nodes_[x].val;
    auto& xg = t.grad(x);
    for (std::size_t r = 0; r < wp->rows; ++r) {
      double gr = g[r];
      if (gr == 0.0) continue;
      double* wgrow = &wp->grad[r * wp->cols];
      const double* wrow = &wp->value[r * wp->cols];
      for (std::size_t c = 0; c < wp->cols; ++c) {
        wgrow[c] += gr * xv2[c];
        xg[c] += gr * wrow[c];
      }
    }
  });
}

Tape::Var Tape::vecmat(Var x, Tensor& w) {
  const auto& xv = nodes_[x].val;
  if (xv.size() != w.rows) fail(ErrorCode::Internal, "vecmat: size mismatch for " + w.name);
  std::vector<double> out(w.cols, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = &w.value[r * w.cols];
    for (std::size_t c = 0; c < w.cols; ++c) out[c] += xv[r] * row[c];
  }
  Tensor* wp = &w;
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, wp, x](Tape& t) {
    const auto& g = t.grad(v);
    const auto& xv2 = t.nodes_[x].val;
    auto& xg = t.grad(x);
    for (std::size_t r = 0; r < wp->rows; ++r) {
      double* wgrow = &wp->grad[r * wp->cols];
      const double* wrow = &wp->value[r * wp->cols];
      double acc = 0.0;
      for (std::size_t c = 0; c < wp->cols; ++c) {
        wgrow[c] += xv2[r] * g[c];
        acc += wrow[c] * g[c];
      }
      xg[r] += acc;
    }
  });
}

Tape::Var Tape::concat(const std::vector<Var>& xs) {
  std::vector<double> out;
  for (Var x : xs) out.insert(out.end(), nodes_[x].val.begin(), nodes_[x].val.end());
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, xs](Tape& t) {
    const auto& g = t.grad(v);
    std::size_t off = 0;
    for (Var x : xs) {
      auto& xg = t.grad(x);
      for (std::size_t i = 0; i < xg.size(); ++i) xg[i] += g[off + i];
      off += xg.size();
    }
  });
}

Tape::Var Tape::slice(Var a, std::size_t begin, std::size_t len) {
  const auto& av = nodes_[a].val;
  if (begin + len > av.size()) fail(ErrorCode::Internal, "slice out of range");
  std::vector<double> out(av.begin() + begin, av.begin() + begin + len);
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, a, begin, len](Tape& t) {
    const auto& g = t.grad(v);
    auto& ag = t.grad(a);
    for (std::size_t i = 0; i < len; ++i) ag[begin + i] += g[i];
  });
}

Tape::Var Tape::mean(const std::vector<Var>& xs) {
  if (xs.empty()) fail(ErrorCode::Internal, "mean of zero vectors");
  Var s = sum(xs);
  return scale(s, 1.0 / static_cast<double>(xs.size()));
}

Tape::Var Tape::sum(const std::vector<Var>& xs) {
  if (xs.empty()) fail(ErrorCode::Internal, "sum of zero vectors");
  std::vector<double> out = nodes_[xs[0]].val;
  for (std::size_t k = 1; k < xs.size(); ++k) {
    const auto& xv = nodes_[xs[k]].val;
    if (xv.size() != out.size()) fail(ErrorCode::Internal, "sum: size mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += xv[i];
  }
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, xs](Tape& t) {
    const auto& g = t.grad(v);
    for (Var x : xs) {
      auto& xg = t.grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i];
    }
  });
}

Tape::Var Tape::dot(Var a, Var b) {
  const auto& av = nodes_[a].val;
  const auto& bv = nodes_[b].val;
  if (av.size() != bv.size()) fail(ErrorCode::Internal, "dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  Var v = static_cast<Var>(nodes_.size());
  return push({acc}, [v, a, b](Tape& t) {
    double g = t.grad(v)[0];
    const auto& av2 = t.nodes_[a].val;
    const auto& bv2 = t.nodes_[b].val;
    for (std::size_t i = 0; i < av2.size(); ++i) {
      t.grad(a)[i] += g * bv2[i];
      t.grad(b)[i] += g * av2[i];
    }
  });
}

Tape::Var Tape::weighted_sum(Var weights, const std::vector<Var>& xs) {
  const auto& wv = nodes_[weights].val;
  if (wv.size() != xs.size()) fail(ErrorCode::Internal, "weighted_sum: weight count mismatch");
  if (xs.empty()) fail(ErrorCode::Internal, "weighted_sum of zero vectors");
  std::vector<double> out(nodes_[xs[0]].val.size(), 0.0);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto& xv = nodes_[xs[k]].val;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wv[k] * xv[i];
  }
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, weights, xs](Tape& t) {
    const auto& g = t.grad(v);
    const auto& wv2 = t.nodes_[weights].val;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const auto& xv = t.nodes_[xs[k]].val;
      auto& xg = t.grad(xs[k]);
      double wg = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        xg[i] += wv2[k] * g[i];
        wg += xv[i] * g[i];
      }
      t.grad(weights)[k] += wg;
    }
  });
}

Tape::Var Tape::stack_scalars(const std::vector<Var>& xs) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (nodes_[xs[i]].val.size() != 1) fail(ErrorCode::Internal, "stack_scalars: non-scalar input");
    out[i] = nodes_[xs[i]].val[0];
  }
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, xs](Tape& t) {
    const auto& g = t.grad(v);
    for (std::size_t i = 0; i < xs.size(); ++i) t.grad(xs[i])[0] += g[i];
  });
}

Tape::Var Tape::gather(Var a, std::vector<std::size_t> indices) {
  const auto& av = nodes_[a].val;
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.size()) fail(ErrorCode::Internal, "gather index out of range");
    out[i] = av[indices[i]];
  }
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, a, idx = std::move(indices)](Tape& t) {
    const auto& g = t.grad(v);
    auto& ag = t.grad(a);
    for (std::size_t i = 0; i < idx.size(); ++i) ag[idx[i]] += g[i];
  });
}

Tape::Var Tape::softmax(Var logits) {
  const auto& lv = nodes_[logits].val;
  if (lv.empty()) fail(ErrorCode::Internal, "softmax of empty vector");
  double mx = *std::max_element(lv.begin(), lv.end());
  std::vector<double> out(lv.size());
  double z = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) z += out[i] = std::exp(lv[i] - mx);
  for (auto& p : out) p /= z;
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, logits](Tape& t) {
    const auto& g = t.grad(v);
    const auto& p = t.nodes_[v].val;
    double gp = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) gp += g[i] * p[i];
    for (std::size_t i = 0; i < p.size(); ++i) t.grad(logits)[i] += p[i] * (g[i] - gp);
  });
}

Tape::Var Tape::log_softmax(Var logits) {
  const auto& lv = nodes_[logits].val;
  if (lv.empty()) fail(ErrorCode::Internal, "log_softmax of empty vector");
  double mx = *std::max_element(lv.begin(), lv.end());
  double z = 0.0;
  for (double x : lv) z += std::exp(x - mx);
  double lse = mx + std::log(z);
  std::vector<double> out(lv.size());
  for (std::size_t i = 0; i < lv.size(); ++i) out[i] = lv[i] - lse;
  Var v = static_cast<Var>(nodes_.size());
  return push(std::move(out), [v, logits](Tape& t) {
    const auto& g = t.grad(v);
    const auto& y = t.nodes_[v].val;
    double gsum = 0.0;
    for (double gi : g) gsum += gi;
    for (std::size_t i = 0; i < y.size(); ++i) t.grad(logits)[i] += g[i] - std::exp(y[i]) * gsum;
  });
}

Tape::Var Tape::logsumexp(Var a) {
  const auto& av = nodes_[a].val;
  if (av.empty()) fail(ErrorCode::Internal, "logsumexp of empty vector");
  double mx = *std::max_element(av.begin(), av.end());
  double z = 0.0;
  for (double x : av) z += std::exp(x - mx);
  double out = mx + std::log(z);
  Var v = static_cast<Var>(nodes_.size());
  return push({out}, [v, a](Tape& t) {
    double g = t.grad(v)[0];
    double lse = t.nodes_[v].val[0];
    const auto& av2 = t.nodes_[a].val;
    for (std::size_t i = 0; i < av2.size(); ++i) t.grad(a)[i] += g * std::exp(av2[i] - lse);
  });
}

Tape::Var Tape::pick(Var a, std::size_t index) {
  const auto& av = nodes_[a].val;
  if (index >= av.size()) fail(ErrorCode::Internal, "pick index out of range");
  Var v = static_cast<Var>(nodes_.size());
  return push({av[index]}, [v, a, index](Tape& t) { t.grad(a)[index] += t.grad(v)[0]; });
}

void Tape::backward(Var loss) {
  if (!record_) fail(ErrorCode::Internal, "backward on a no-grad tape");
  if (nodes_[loss].val.size() != 1) fail(ErrorCode::Internal, "backward expects a scalar loss");
  for (auto& n : nodes_) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  nodes_[loss].grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
}

}  // namespace sempar::ad
