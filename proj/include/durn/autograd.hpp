#pragma once

#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "durn/tensor.hpp"

namespace durn {

namespace detail {

/// Computes parent gradients from the output gradient. `grads` arrives sized
/// to the parent list; entries for parents that need no gradient may be left
/// undefined.
using BackwardFn = std::function<void(const Tensor& grad_out, std::vector<Tensor>& grads)>;

struct Node {
  NodeId id = kNoNode;
  std::string op;
  /// Aligned with the op's inputs; null for inputs that do not require grad.
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
  Shape shape;
  bool leaf = false;
};

NodeId next_node_id();

}  // namespace detail

/// Disables recording for its lifetime (per thread).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Attaches a tape node to `out` when recording is on and any input requires
/// grad. Returns `out` for chaining.
Tensor record(Tensor out, std::string op, std::initializer_list<const Tensor*> inputs,
              detail::BackwardFn backward);
Tensor record(Tensor out, std::string op, const std::vector<const Tensor*>& inputs,
              detail::BackwardFn backward);

/// Read-only listing of the nodes reachable from a root, in insertion order.
class Tape {
 public:
  struct Entry {
    NodeId id;
    std::string op;
    std::vector<NodeId> parents;
    bool leaf;
  };

  static Tape collect(const Tensor& root);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  /// Checks that every parent id is smaller than its child's id.
  bool acyclic() const;

 private:
  std::vector<Entry> entries_;
};

/// Gradient map keyed by leaf node id.
class Gradients {
 public:
  bool contains(const Tensor& leaf) const;
  /// Gradient for `leaf`; throws ContractError when absent.
  const Tensor& at(const Tensor& leaf) const;
  const Tensor* find(const Tensor& leaf) const;
  std::size_t size() const { return grads_.size(); }
  const std::map<NodeId, Tensor>& items() const { return grads_; }

  void insert(NodeId id, Tensor grad) { grads_[id] = std::move(grad); }

 private:
  std::map<NodeId, Tensor> grads_;
};

/// Reverse-mode sweep from a single-element tensor. Gradients accumulate by
/// summation over paths; unreachable leaves are absent.
Gradients backward(const Tensor& loss);

struct GradCheckReport {
  /// max |analytic - fd| / max(max |analytic|, max |fd|): the norm-wise
  /// relative error in the infinity norm.
  double relative = 0.0;
  /// Largest per-element |analytic - fd| / max(|analytic|, |fd|, 1e-12). On
  /// elements whose gradient is tiny this is dominated by round-off in the
  /// finite difference rather than by errors in the analytic gradient.
  double worst_elementwise = 0.0;
  double max_abs_error = 0.0;
  double max_abs_gradient = 0.0;
};

/// Compares the reverse-mode gradient of a scalar function with central
/// differences, evaluated in 64-bit precision.
GradCheckReport grad_check_report(const std::function<Tensor(const Tensor&)>& forward_fn,
                                  const Tensor& x, double eps = 1e-5);
/// Max over elements of |analytic - fd| / max(|analytic|, |fd|, 1e-12),
/// i.e. grad_check_report(...).worst_elementwise.
double grad_check(const std::function<Tensor(const Tensor&)>& forward_fn, const Tensor& x,
                  double eps = 1e-5);

}  // namespace durn
