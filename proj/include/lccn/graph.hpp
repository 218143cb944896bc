#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lccn/tensor.hpp"

namespace lccn {

// Define-by-run reverse-mode differentiation over rank-2 tensors.
// A Graph owns the tape for one forward pass; parameters are persistent
// leaves whose gradients accumulate across backward calls until zeroed.

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first touch, zeros
  bool requires_grad = false;
  std::function<void(Node&)> backward_fn;  // set only while recording

  void ensure_grad() {
    if (grad.numel() == 0) grad = Tensor::zeros_like(value);
  }
  bool has_grad() const { return grad.numel() != 0; }
};

using NodePtr = std::shared_ptr<Node>;

// Named trainable tensor. The node persists across graphs.
struct Parameter {
  std::string name;
  NodePtr node;

  Tensor& value() { return node->value; }
  const Tensor& value() const { return node->value; }
  Tensor& grad() {
    node->ensure_grad();
    return node->grad;
  }
};

class ParamRegistry {
 public:
  Parameter& add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    auto p = std::make_shared<Parameter>();
    p->name = name;
    p->node = std::make_shared<Node>();
    p->node->value = std::move(init);
    p->node->requires_grad = true;
    index_[name] = params_.size();
    params_.push_back(p);
    return *params_.back();
  }

  Parameter& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
    return *params_[it->second];
  }

  const Parameter& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
    return *params_[it->second];
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }

  void zero_grads() {
    for (auto& p : params_)
      if (p->node->has_grad()) p->node->grad.fill(0.0);
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->node->value.numel();
    return n;
  }

 private:
  std::vector<std::shared_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

class Graph;

// Handle to a node in a graph. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Graph* g, NodePtr n) : graph_(g), node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const { return node_->value.item(); }

  Graph* graph() const { return graph_; }
  const NodePtr& node() const { return node_; }

 private:
  Graph* graph_ = nullptr;
  NodePtr node_;
};

class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }

  Var input(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return Var(this, std::move(n));
  }

  Var constant(double v) { return input(Tensor::scalar(v)); }

  // Bind a persistent parameter into this graph. Backward accumulates
  // into the parameter's own grad tensor.
  Var param(Parameter& p) { return Var(this, p.node); }

  void track(const NodePtr& n) {
    if (recording_) tape_.push_back(n);
  }

  std::size_t tape_size() const { return tape_.size(); }

  // Reverse sweep from a scalar loss. One backward per graph; build a new
  // graph to differentiate again.
  void backward(const Var& loss) {
    if (!recording_) throw std::logic_error("backward on a non-recording graph");
    if (backward_done_)
      throw std::logic_error("backward already ran on this graph; build a new graph to rerun");
    if (loss.value().numel() != 1)
      throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                  loss.value().shape_str());
    backward_done_ = true;
    loss.node()->ensure_grad();
    loss.node()->grad.vec()[0] = 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
      Node& n = **it;
      if (n.backward_fn && n.has_grad()) n.backward_fn(n);
    }
  }

 private:
  std::vector<NodePtr> tape_;
  bool recording_ = true;
  bool backward_done_ = false;
};

namespace detail {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

inline ECMap emap(const Tensor& t) {
  return ECMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline EMap emap(Tensor& t) {
  return EMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline Graph& graph_of(const Var& a) {
  if (!a.defined() || a.graph() == nullptr)
    throw std::logic_error("op on an unbound variable; create it through a Graph");
  return *a.graph();
}

inline bool any_requires_grad(std::initializer_list<const Var*> vars) {
  for (const Var* v : vars)
    if ((*v).node()->requires_grad) return true;
  return false;
}

inline Var make_node(Graph& g, Tensor value, bool requires_grad,
                     std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g.recording() && requires_grad) {
    n->requires_grad = true;
    n->backward_fn = std::move(backward_fn);
  }
  g.track(n);
  return Var(&g, std::move(n));
}

}  // namespace detail

// ---- core ops ----------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows())
    throw std::invalid_argument("matmul: inner dimensions differ, " + A.shape_str() + " vs " +
                                B.shape_str());
  Tensor C(A.rows(), B.cols());
  detail::emap(C) = detail::emap(A) * detail::emap(B);
  auto an = a.node(), bn = b.node();
  return detail::make_node(g, std::move(C), detail::any_requires_grad({&a, &b}), [an, bn](Node& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      detail::emap(an->grad) += detail::emap(n.grad) * detail::emap(bn->value).transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      detail::emap(bn->grad) += detail::emap(an->value).transpose() * detail::emap(n.grad);
    }
  });
}

// A * B^T without materializing the transpose.
inline Var matmul_nt(const Var& a, const Var& b) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.cols())
    throw std::invalid_argument("matmul_nt: column dimensions differ, " + A.shape_str() + " vs " +
                                B.shape_str());
  Tensor C(A.rows(), B.rows());
  detail::emap(C) = detail::emap(A) * detail::emap(B).transpose();
  auto an = a.node(), bn = b.node();
  return detail::make_node(g, std::move(C), detail::any_requires_grad({&a, &b}), [an, bn](Node& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      detail::emap(an->grad) += detail::emap(n.grad) * detail::emap(bn->value);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      detail::emap(bn->grad) += detail::emap(n.grad).transpose() * detail::emap(an->value);
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  Graph& g = detail::graph_of(a);
  a.value().check_same_shape(b.value(), "add");
  Tensor C = a.value();
  C.add_(b.value());
  auto an = a.node(), bn = b.node();
  return detail::make_node(g, std::move(C), detail::any_requires_grad({&a, &b}), [an, bn](Node& n) {
    for (auto& p : {an, bn}) {
      if (p->requires_grad) {
        p->ensure_grad();
        p->grad.add_(n.grad);
      }
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  Graph& g = detail::graph_of(a);
  a.value().check_same_shape(b.value(), "sub");
  Tensor C = a.value();
  for (std::size_t i = 0; i < C.numel(); ++i) C.vec()[i] -= b.value().vec()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_node(g, std::move(C), detail::any_requires_grad({&a, &b}), [an, bn](Node& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      an->grad.add_(n.grad);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) bn->grad.vec()[i] -= n.grad.vec()[i];
    }
  });
}

// Add a 1xN bias row to every row of A.
inline Var add_rowvec(const Var& a, const Var& bias) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  const Tensor& B = bias.value();
  if (B.rows() != 1 || B.cols() != A.cols())
    throw std::invalid_argument("add_rowvec: bias shape " + B.shape_str() +
                                " incompatible with " + A.shape_str());
  Tensor C = A;
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) += B(0, j);
  auto an = a.node(), bn = bias.node();
  return detail::make_node(g, std::move(C), detail::any_requires_grad({&a, &bias}),
                           [an, bn](Node& n) {
                             if (an->requires_grad) {
                               an->ensure_grad();
                               an->grad.add_(n.grad);
                             }
                             if (bn->requires_grad) {
                               bn->ensure_grad();
                               for (std::size_t i = 0; i < n.grad.rows(); ++i)
                                 for (std::size_t j = 0; j < n.grad.cols(); ++j)
                                   bn->grad(0, j) += n.grad(i, j);
                             }
                           });
}

// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  Graph& g = detail::graph_of(a);
  a.value().check_same_shape(b.value(), "mul");
  Tensor C = a.value();
  for (std::size_t i = 0; i < C.numel(); ++i) C.vec()[i] *= b.value().vec()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_node(g, std::move(C), detail::any_requires_grad({&a, &b}), [an, bn](Node& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i)
        an->grad.vec()[i] += n.grad.vec()[i] * bn->value.vec()[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i)
        bn->grad.vec()[i] += n.grad.vec()[i] * an->value.vec()[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Graph& g = detail::graph_of(a);
  Tensor C = a.value();
  for (double& v : C.vec()) v *= s;
  auto an = a.node();
  return detail::make_node(g, std::move(C), an->requires_grad, [an, s](Node& n) {
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) an->grad.vec()[i] += s * n.grad.vec()[i];
  });
}

// Add a constant tensor (positional encodings, attention masks).
inline Var add_const(const Var& a, const Tensor& c) {
  Graph& g = detail::graph_of(a);
  a.value().check_same_shape(c, "add_const");
  Tensor C = a.value();
  C.add_(c);
  auto an = a.node();
  return detail::make_node(g, std::move(C), an->requires_grad, [an](Node& n) {
    an->ensure_grad();
    an->grad.add_(n.grad);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  Graph& g = detail::graph_of(parts[0]);
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row counts differ");
    cols += p.cols();
    rg = rg || p.node()->requires_grad;
  }
  Tensor C(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) C(i, off + j) = p.value()(i, j);
    off += p.cols();
  }
  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_node(g, std::move(C), rg, [nodes](Node& n) {
    std::size_t off = 0;
    for (const auto& p : nodes) {
      const std::size_t pc = p->value.cols();
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < n.grad.rows(); ++i)
          for (std::size_t j = 0; j < pc; ++j) p->grad(i, j) += n.grad(i, off + j);
      }
      off += pc;
    }
  });
}

inline Var concat_cols(const Var& a, const Var& b) { return concat_cols(std::vector<Var>{a, b}); }

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
  Graph& g = detail::graph_of(parts[0]);
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column counts differ");
    rows += p.rows();
    rg = rg || p.node()->requires_grad;
  }
  Tensor C(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.rows(); ++i)
      for (std::size_t j = 0; j < cols; ++j) C(off + i, j) = p.value()(i, j);
    off += p.rows();
  }
  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_node(g, std::move(C), rg, [nodes](Node& n) {
    std::size_t off = 0;
    for (const auto& p : nodes) {
      const std::size_t pr = p->value.rows();
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < pr; ++i)
          for (std::size_t j = 0; j < n.grad.cols(); ++j) p->grad(i, j) += n.grad(off + i, j);
      }
      off += pr;
    }
  });
}

inline Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  if (c0 >= c1 || c1 > A.cols()) throw std::invalid_argument("slice_cols: bad range");
  Tensor C(A.rows(), c1 - c0);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = c0; j < c1; ++j) C(i, j - c0) = A(i, j);
  auto an = a.node();
  return detail::make_node(g, std::move(C), an->requires_grad, [an, c0](Node& n) {
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.rows(); ++i)
      for (std::size_t j = 0; j < n.grad.cols(); ++j) an->grad(i, c0 + j) += n.grad(i, j);
  });
}

inline Var slice_rows(const Var& a, std::size_t r0, std::size_t r1) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  if (r0 >= r1 || r1 > A.rows()) throw std::invalid_argument("slice_rows: bad range");
  Tensor C(r1 - r0, A.cols());
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) C(i - r0, j) = A(i, j);
  auto an = a.node();
  return detail::make_node(g, std::move(C), an->requires_grad, [an, r0](Node& n) {
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.rows(); ++i)
      for (std::size_t j = 0; j < n.grad.cols(); ++j) an->grad(r0 + i, j) += n.grad(i, j);
  });
}

// Row gather; doubles as embedding lookup.
inline Var gather_rows(const Var& a, const std::vector<int>& idx) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  Tensor C(idx.size(), A.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= A.rows())
      throw std::out_of_range("gather_rows: index out of range");
    for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) = A(static_cast<std::size_t>(idx[i]), j);
  }
  auto an = a.node();
  return detail::make_node(g, std::move(C), an->requires_grad, [an, idx](Node& n) {
    an->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < n.grad.cols(); ++j)
        an->grad(static_cast<std::size_t>(idx[i]), j) += n.grad(i, j);
  });
}

inline Var embedding_lookup(const Var& table, const std::vector<int>& ids) {
  return gather_rows(table, ids);
}

inline Var sigmoid(const Var& a) {
  Graph& g = detail::graph_of(a);
  Tensor C = a.value();
  for (double& v : C.vec()) v = 1.0 / (1.0 + std::exp(-v));
  auto an = a.node();
  auto cn = detail::make_node(g, std::move(C), an->requires_grad, nullptr);
  if (g.recording() && an->requires_grad) {
    auto yn = cn.node();
    yn->backward_fn = [an, yn](Node& n) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) {
        const double y = yn->value.vec()[i];
        an->grad.vec()[i] += n.grad.vec()[i] * y * (1.0 - y);
      }
    };
  }
  return cn;
}

inline Var tanh(const Var& a) {
  Graph& g = detail::graph_of(a);
  Tensor C = a.value();
  for (double& v : C.vec()) v = std::tanh(v);
  auto an = a.node();
  auto cn = detail::make_node(g, std::move(C), an->requires_grad, nullptr);
  if (g.recording() && an->requires_grad) {
    auto yn = cn.node();
    yn->backward_fn = [an, yn](Node& n) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) {
        const double y = yn->value.vec()[i];
        an->grad.vec()[i] += n.grad.vec()[i] * (1.0 - y * y);
      }
    };
  }
  return cn;
}

inline Var relu(const Var& a) {
  Graph& g = detail::graph_of(a);
  Tensor C = a.value();
  for (double& v : C.vec()) v = v > 0.0 ? v : 0.0;
  auto an = a.node();
  return detail::make_node(g, std::move(C), an->requires_grad, [an](Node& n) {
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i)
      if (an->value.vec()[i] > 0.0) an->grad.vec()[i] += n.grad.vec()[i];
  });
}

// Row-wise softmax with max subtraction.
inline Var softmax_rows(const Var& a) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  Tensor C(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double mx = A(i, 0);
    for (std::size_t j = 1; j < A.cols(); ++j) mx = std::max(mx, A(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < A.cols(); ++j) {
      const double e = std::exp(A(i, j) - mx);
      C(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) /= sum;
  }
  auto an = a.node();
  auto cn = detail::make_node(g, std::move(C), an->requires_grad, nullptr);
  if (g.recording() && an->requires_grad) {
    auto yn = cn.node();
    yn->backward_fn = [an, yn](Node& n) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n.grad.cols(); ++j) dot += n.grad(i, j) * yn->value(i, j);
        for (std::size_t j = 0; j < n.grad.cols(); ++j)
          an->grad(i, j) += yn->value(i, j) * (n.grad(i, j) - dot);
      }
    };
  }
  return cn;
}

// Row-wise log softmax.
inline Var log_softmax_rows(const Var& a) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  Tensor C(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double mx = A(i, 0);
    for (std::size_t j = 1; j < A.cols(); ++j) mx = std::max(mx, A(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < A.cols(); ++j) sum += std::exp(A(i, j) - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) = A(i, j) - lse;
  }
  auto an = a.node();
  auto cn = detail::make_node(g, std::move(C), an->requires_grad, nullptr);
  if (g.recording() && an->requires_grad) {
    auto yn = cn.node();
    yn->backward_fn = [an, yn](Node& n) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.rows(); ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < n.grad.cols(); ++j) total += n.grad(i, j);
        for (std::size_t j = 0; j < n.grad.cols(); ++j)
          an->grad(i, j) += n.grad(i, j) - std::exp(yn->value(i, j)) * total;
      }
    };
  }
  return cn;
}

// Row-wise logsumexp, Mx1 result.
inline Var logsumexp_rows(const Var& a) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  Tensor C(A.rows(), 1);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double mx = A(i, 0);
    for (std::size_t j = 1; j < A.cols(); ++j) mx = std::max(mx, A(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < A.cols(); ++j) sum += std::exp(A(i, j) - mx);
    C(i, 0) = mx + std::log(sum);
  }
  auto an = a.node();
  auto cn = detail::make_node(g, std::move(C), an->requires_grad, nullptr);
  if (g.recording() && an->requires_grad) {
    auto yn = cn.node();
    yn->backward_fn = [an, yn](Node& n) {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->value.rows(); ++i)
        for (std::size_t j = 0; j < an->value.cols(); ++j)
          an->grad(i, j) += n.grad(i, 0) * std::exp(an->value(i, j) - yn->value(i, 0));
    };
  }
  return cn;
}

// Row-wise layer normalization with learned gain and bias (1xN each).
inline Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-6) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  const std::size_t nc = A.cols();
  if (gain.value().cols() != nc || bias.value().cols() != nc)
    throw std::invalid_argument("layer_norm_rows: gain/bias width mismatch");
  Tensor C(A.rows(), nc);
  Tensor xhat(A.rows(), nc);
  Tensor inv_std(A.rows(), 1);
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < nc; ++j) mean += A(i, j);
    mean /= static_cast<double>(nc);
    double var = 0.0;
    for (std::size_t j = 0; j < nc; ++j) {
      const double d = A(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(nc);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(i, 0) = is;
    for (std::size_t j = 0; j < nc; ++j) {
      xhat(i, j) = (A(i, j) - mean) * is;
      C(i, j) = gain.value()(0, j) * xhat(i, j) + bias.value()(0, j);
    }
  }
  auto an = a.node(), gn = gain.node(), bn = bias.node();
  const bool rg = detail::any_requires_grad({&a, &gain, &bias});
  return detail::make_node(
      g, std::move(C), rg,
      [an, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
        const std::size_t nr = n.grad.rows(), nc = n.grad.cols();
        if (gn->requires_grad) {
          gn->ensure_grad();
          for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j) gn->grad(0, j) += n.grad(i, j) * xhat(i, j);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < nr; ++i)
            for (std::size_t j = 0; j < nc; ++j) bn->grad(0, j) += n.grad(i, j);
        }
        if (an->requires_grad) {
          an->ensure_grad();
          const double inv_n = 1.0 / static_cast<double>(nc);
          for (std::size_t i = 0; i < nr; ++i) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < nc; ++j) {
              const double dxh = n.grad(i, j) * gn->value(0, j);
              sum_dxhat += dxh;
              sum_dxhat_xhat += dxh * xhat(i, j);
            }
            for (std::size_t j = 0; j < nc; ++j) {
              const double dxh = n.grad(i, j) * gn->value(0, j);
              an->grad(i, j) += inv_std(i, 0) *
                                (dxh - inv_n * sum_dxhat - xhat(i, j) * inv_n * sum_dxhat_xhat);
            }
          }
        }
      });
}

// out[i][j] = S:[i][idx[i*cols+j]]; idx is a flat row-major index matrix.
// Used to spread per-category scores over token pairs.
inline Var gather_cols_by_index(const Var& s, const std::vector<int>& idx, std::size_t out_cols) {
  Graph& g = detail::graph_of(s);
  const Tensor& S = s.value();
  if (idx.size() != S.rows() * out_cols)
    throw std::invalid_argument("gather_cols_by_index: index matrix size mismatch");
  Tensor C(S.rows(), out_cols);
  for (std::size_t i = 0; i < S.rows(); ++i)
    for (std::size_t j = 0; j < out_cols; ++j)
      C(i, j) = S(i, static_cast<std::size_t>(idx[i * out_cols + j]));
  auto sn = s.node();
  return detail::make_node(g, std::move(C), sn->requires_grad, [sn, idx, out_cols](Node& n) {
    sn->ensure_grad();
    for (std::size_t i = 0; i < n.grad.rows(); ++i)
      for (std::size_t j = 0; j < out_cols; ++j)
        sn->grad(i, static_cast<std::size_t>(idx[i * out_cols + j])) += n.grad(i, j);
  });
}

// out[i][c] = sum over j with idx[i*cols+j] == c of A[i][j].
// Inverse of gather_cols_by_index; used to pool attention mass per category.
inline Var sum_cols_by_index(const Var& a, const std::vector<int>& idx, std::size_t n_cat) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  if (idx.size() != A.rows() * A.cols())
    throw std::invalid_argument("sum_cols_by_index: index matrix size mismatch");
  Tensor C(A.rows(), n_cat);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j)
      C(i, static_cast<std::size_t>(idx[i * A.cols() + j])) += A(i, j);
  auto an = a.node();
  return detail::make_node(g, std::move(C), an->requires_grad, [an, idx](Node& n) {
    an->ensure_grad();
    const std::size_t cols = an->value.cols();
    for (std::size_t i = 0; i < an->value.rows(); ++i)
      for (std::size_t j = 0; j < cols; ++j)
        an->grad(i, j) += n.grad(i, static_cast<std::size_t>(idx[i * cols + j]));
  });
}

// ---- scalar helpers (1x1 tensors) ---------------------------------------

inline Var pick(const Var& a, std::size_t i, std::size_t j) {
  Graph& g = detail::graph_of(a);
  const Tensor& A = a.value();
  if (i >= A.rows() || j >= A.cols()) throw std::out_of_range("pick: index out of range");
  auto an = a.node();
  return detail::make_node(g, Tensor::scalar(A(i, j)), an->requires_grad, [an, i, j](Node& n) {
    an->ensure_grad();
    an->grad(i, j) += n.grad.vec()[0];
  });
}

// logsumexp over selected entries of a 1xN row.
inline Var logsumexp_entries(const Var& row, const std::vector<int>& cols) {
  Graph& g = detail::graph_of(row);
  if (cols.empty()) throw std::invalid_argument("logsumexp_entries: no entries selected");
  const Tensor& A = row.value();
  double mx = A(0, static_cast<std::size_t>(cols[0]));
  for (int c : cols) mx = std::max(mx, A(0, static_cast<std::size_t>(c)));
  double sum = 0.0;
  for (int c : cols) sum += std::exp(A(0, static_cast<std::size_t>(c)) - mx);
  const double lse = mx + std::log(sum);
  auto an = row.node();
  return detail::make_node(g, Tensor::scalar(lse), an->requires_grad, [an, cols, lse](Node& n) {
    an->ensure_grad();
    for (int c : cols)
      an->grad(0, static_cast<std::size_t>(c)) +=
          n.grad.vec()[0] * std::exp(an->value(0, static_cast<std::size_t>(c)) - lse);
  });
}

inline Var logsumexp_scalars(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("logsumexp_scalars: empty input");
  Graph& g = detail::graph_of(xs[0]);
  double mx = xs[0].item();
  bool rg = false;
  for (const auto& x : xs) {
    mx = std::max(mx, x.item());
    rg = rg || x.node()->requires_grad;
  }
  double sum = 0.0;
  for (const auto& x : xs) sum += std::exp(x.item() - mx);
  const double lse = mx + std::log(sum);
  std::vector<NodePtr> nodes;
  nodes.reserve(xs.size());
  for (const auto& x : xs) nodes.push_back(x.node());
  return detail::make_node(g, Tensor::scalar(lse), rg, [nodes, lse](Node& n) {
    for (const auto& x : nodes) {
      if (!x->requires_grad) continue;
      x->ensure_grad();
      x->grad.vec()[0] += n.grad.vec()[0] * std::exp(x->value.vec()[0] - lse);
    }
  });
}

// softplus(x) = log(1 + exp(x)), computed stably; elementwise.
inline Var softplus(const Var& a) {
  Graph& g = detail::graph_of(a);
  Tensor C = a.value();
  for (double& v : C.vec()) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  auto an = a.node();
  return detail::make_node(g, std::move(C), an->requires_grad, [an](Node& n) {
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) {
      const double x = an->value.vec()[i];
      an->grad.vec()[i] += n.grad.vec()[i] / (1.0 + std::exp(-x));
    }
  });
}

inline Var sum_all(const Var& a) {
  Graph& g = detail::graph_of(a);
  double s = 0.0;
  for (double v : a.value().vec()) s += v;
  auto an = a.node();
  return detail::make_node(g, Tensor::scalar(s), an->requires_grad, [an](Node& n) {
    an->ensure_grad();
    for (double& gv : an->grad.vec()) gv += n.grad.vec()[0];
  });
}

inline Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().numel())); }

// Elementwise natural log; inputs must be positive.
inline Var vlog(const Var& a) {
  Graph& g = detail::graph_of(a);
  Tensor C = a.value();
  for (double& v : C.vec()) v = std::log(v);
  auto an = a.node();
  return detail::make_node(g, std::move(C), an->requires_grad, [an](Node& n) {
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i)
      an->grad.vec()[i] += n.grad.vec()[i] / an->value.vec()[i];
  });
}

}  // namespace lccn
