#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "furnace/tensor.hpp"

namespace furnace::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of a define-by-run computation graph. The graph is rebuilt on
/// every forward pass; backward() fills `adjoint` for every node that
/// requires gradients.
struct Node {
  Tensor value;
  Tensor adjoint;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  // Reads this->adjoint and accumulates into the parents' adjoints.
  std::function<void(Node&)> backward_rule;
};

inline NodePtr constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

inline NodePtr variable(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

namespace detail {

inline NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> rule) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) n->backward_rule = std::move(rule);
  return n;
}

inline void require_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a->value.shape()) + " vs " +
                                shape_str(b->value.shape()));
  }
}

inline void accumulate(Node& parent, std::size_t i, double g) {
  if (parent.requires_grad) parent.adjoint.at(i) += g;
}

}  // namespace detail

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) += b->value.at(i);
  return detail::make_op(std::move(out), {a, b}, [](Node& n) {
    for (std::size_t i = 0; i < n.adjoint.numel(); ++i) {
      detail::accumulate(*n.parents[0], i, n.adjoint.at(i));
      detail::accumulate(*n.parents[1], i, n.adjoint.at(i));
    }
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) -= b->value.at(i);
  return detail::make_op(std::move(out), {a, b}, [](Node& n) {
    for (std::size_t i = 0; i < n.adjoint.numel(); ++i) {
      detail::accumulate(*n.parents[0], i, n.adjoint.at(i));
      detail::accumulate(*n.parents[1], i, -n.adjoint.at(i));
    }
  });
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) *= b->value.at(i);
  return detail::make_op(std::move(out), {a, b}, [](Node& n) {
    for (std::size_t i = 0; i < n.adjoint.numel(); ++i) {
      detail::accumulate(*n.parents[0], i, n.adjoint.at(i) * n.parents[1]->value.at(i));
      detail::accumulate(*n.parents[1], i, n.adjoint.at(i) * n.parents[0]->value.at(i));
    }
  });
}

inline NodePtr add(const NodePtr& a, double s) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) += s;
  return detail::make_op(std::move(out), {a}, [](Node& n) {
    for (std::size_t i = 0; i < n.adjoint.numel(); ++i)
      detail::accumulate(*n.parents[0], i, n.adjoint.at(i));
  });
}

inline NodePtr scale(const NodePtr& a, double s) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) *= s;
  return detail::make_op(std::move(out), {a}, [s](Node& n) {
    for (std::size_t i = 0; i < n.adjoint.numel(); ++i)
      detail::accumulate(*n.parents[0], i, n.adjoint.at(i) * s);
  });
}

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  Tensor out = matmul_values(a->value, b->value);
  return detail::make_op(std::move(out), {a, b}, [](Node& n) {
    Node& a = *n.parents[0];
    Node& b = *n.parents[1];
    auto g = as_matrix(n.adjoint);
    if (a.requires_grad) as_matrix(a.adjoint).noalias() += g * as_matrix(b.value).transpose();
    if (b.requires_grad) as_matrix(b.adjoint).noalias() += as_matrix(a.value).transpose() * g;
  });
}

/// Adds a length-C bias vector to every row of an [R x C] matrix.
inline NodePtr add_row_bias(const NodePtr& m, const NodePtr& bias) {
  if (m->value.rank() != 2 || bias->value.rank() != 1 ||
      bias->value.numel() != m->value.cols()) {
    throw std::invalid_argument("add_row_bias: shape mismatch " +
                                shape_str(m->value.shape()) + " vs " +
                                shape_str(bias->value.shape()));
  }
  Tensor out = m->value;
  const std::size_t r = out.rows(), c = out.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) += bias->value.at(j);
  return detail::make_op(std::move(out), {m, bias}, [r, c](Node& n) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        detail::accumulate(*n.parents[0], i * c + j, n.adjoint.at(i, j));
        detail::accumulate(*n.parents[1], j, n.adjoint.at(i, j));
      }
  });
}

// Numerically stable logistic; exact 0.5 at x = 0.
inline double sigmoid_value(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline NodePtr sigmoid(const NodePtr& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = sigmoid_value(out.at(i));
  return detail::make_op(std::move(out), {a}, [](Node& n) {
    for (std::size_t i = 0; i < n.adjoint.numel(); ++i) {
      const double y = n.value.at(i);
      detail::accumulate(*n.parents[0], i, n.adjoint.at(i) * y * (1.0 - y));
    }
  });
}

inline NodePtr tanh(const NodePtr& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = std::tanh(out.at(i));
  return detail::make_op(std::move(out), {a}, [](Node& n) {
    for (std::size_t i = 0; i < n.adjoint.numel(); ++i) {
      const double y = n.value.at(i);
      detail::accumulate(*n.parents[0], i, n.adjoint.at(i) * (1.0 - y * y));
    }
  });
}

namespace detail {
inline void require_finite_operands(const NodePtr& pred, const NodePtr& target,
                                    const char* op) {
  if (!pred->value.all_finite() || !target->value.all_finite()) {
    throw std::domain_error(std::string(op) + ": non-finite operand");
  }
}
}  // namespace detail

/// Mean of squared differences.
inline NodePtr l2_loss(const NodePtr& pred, const NodePtr& target) {
  detail::require_same_shape(pred, target, "l2_loss");
  detail::require_finite_operands(pred, target, "l2_loss");
  const std::size_t n = pred->value.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred->value.at(i) - target->value.at(i);
    acc += d * d;
  }
  return detail::make_op(Tensor::scalar(acc / static_cast<double>(n)), {pred, target},
                         [n](Node& node) {
                           const double g = node.adjoint.at(0) * 2.0 / static_cast<double>(n);
                           for (std::size_t i = 0; i < n; ++i) {
                             const double d =
                                 node.parents[0]->value.at(i) - node.parents[1]->value.at(i);
                             detail::accumulate(*node.parents[0], i, g * d);
                             detail::accumulate(*node.parents[1], i, -g * d);
                           }
                         });
}

/// Sum of absolute differences. Subgradient at zero difference is 0.
inline NodePtr l1_loss(const NodePtr& pred, const NodePtr& target) {
  detail::require_same_shape(pred, target, "l1_loss");
  detail::require_finite_operands(pred, target, "l1_loss");
  const std::size_t n = pred->value.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += std::abs(pred->value.at(i) - target->value.at(i));
  return detail::make_op(
      Tensor::scalar(acc), {pred, target}, [n](Node& node) {
        const double g = node.adjoint.at(0);
        for (std::size_t i = 0; i < n; ++i) {
          const double d = node.parents[0]->value.at(i) - node.parents[1]->value.at(i);
          const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          detail::accumulate(*node.parents[0], i, g * s);
          detail::accumulate(*node.parents[1], i, -g * s);
        }
      });
}

/// Picks flat indices out of a tensor into a 1-D result.
inline NodePtr gather(const NodePtr& a, std::vector<std::size_t> indices) {
  Tensor out(Shape{indices.size()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a->value.numel())
      throw std::out_of_range("gather: index " + std::to_string(indices[i]) +
                              " out of range");
    out.at(i) = a->value.at(indices[i]);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  return detail::make_op(std::move(out), {a}, [idx](Node& n) {
    for (std::size_t i = 0; i < idx->size(); ++i)
      detail::accumulate(*n.parents[0], (*idx)[i], n.adjoint.at(i));
  });
}

/// Row r of a rank-2 tensor as a 1-D vector.
inline NodePtr row(const NodePtr& a, std::size_t r) {
  const std::size_t c = a->value.cols();
  std::vector<std::size_t> idx(c);
  for (std::size_t j = 0; j < c; ++j) idx[j] = r * c + j;
  return gather(a, std::move(idx));
}

/// Copy of `base` with base[indices[i]] overwritten by values[i]; gradients
/// flow only into `values`.
inline NodePtr scatter_into(const Tensor& base, const NodePtr& values,
                            std::vector<std::size_t> indices) {
  if (values->value.numel() != indices.size()) {
    throw std::invalid_argument("scatter_into: " + std::to_string(indices.size()) +
                                " indices for " + std::to_string(values->value.numel()) +
                                " values");
  }
  Tensor out = base;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= out.numel())
      throw std::out_of_range("scatter_into: index out of range");
    out.at(indices[i]) = values->value.at(i);
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  return detail::make_op(std::move(out), {values}, [idx](Node& n) {
    for (std::size_t i = 0; i < idx->size(); ++i)
      detail::accumulate(*n.parents[0], i, n.adjoint.at((*idx)[i]));
  });
}

inline NodePtr reshape(const NodePtr& a, Shape shape) {
  Tensor out = a->value.reshaped(std::move(shape));
  return detail::make_op(std::move(out), {a}, [](Node& n) {
    for (std::size_t i = 0; i < n.adjoint.numel(); ++i)
      detail::accumulate(*n.parents[0], i, n.adjoint.at(i));
  });
}

/// Scalar two-sided hinge: sum over elements of max(0, lo - x) + max(0, x - hi).
/// Subgradient exactly at a bound is 0.
inline NodePtr interval_penalty(const NodePtr& a, double lo, double hi) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a->value.numel(); ++i) {
    const double x = a->value.at(i);
    acc += std::max(0.0, lo - x) + std::max(0.0, x - hi);
  }
  return detail::make_op(Tensor::scalar(acc), {a}, [lo, hi](Node& n) {
    const double g = n.adjoint.at(0);
    for (std::size_t i = 0; i < n.parents[0]->value.numel(); ++i) {
      const double x = n.parents[0]->value.at(i);
      if (x > hi)
        detail::accumulate(*n.parents[0], i, g);
      else if (x < lo)
        detail::accumulate(*n.parents[0], i, -g);
    }
  });
}

/// Reverse-accumulation pass from a scalar root. After it returns, every
/// requires-grad node reachable from the root holds its adjoint.
inline void backward(const NodePtr& root) {
  if (root->value.numel() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got " +
                                shape_str(root->value.shape()));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS; order is a function of graph structure only,
  // which keeps repeated backward passes bitwise identical.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    bool descended = false;
    while (next_child < node->parents.size()) {
      Node* p = node->parents[next_child++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->adjoint = Tensor(n->value.shape());
  root->adjoint.at(0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_rule) (*it)->backward_rule(**it);
  }
}

}  // namespace furnace::ad
