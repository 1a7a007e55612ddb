#include "durn/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "durn/ops.hpp"

namespace durn {

namespace detail {

NodeId next_node_id() {
  static std::atomic<NodeId> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

std::vector<const detail::Node*> reachable_nodes(const detail::Node* root) {
  std::vector<const detail::Node*> out;
  std::unordered_set<const detail::Node*> seen;
  std::vector<const detail::Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    const auto* n = stack.back();
    stack.pop_back();
    out.push_back(n);
    for (const auto& p : n->parents) {
      if (p && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(out.begin(), out.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id < b->id; });
  return out;
}

void accumulate(Tensor& acc, const Tensor& g) {
  if (!acc.defined()) {
    acc = g.clone();
    return;
  }
  if (acc.shape() != g.shape())
    throw DimensionError("gradient shape " + to_string(g.shape()) + " does not match " +
                         to_string(acc.shape()));
  dispatch(acc.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* a = acc.data<T>();
    const T* b = g.data<T>();
    for (std::int64_t i = 0, n = acc.numel(); i < n; ++i) a[i] += b[i];
  });
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor record(Tensor out, std::string op, const std::vector<const Tensor*>& inputs,
              detail::BackwardFn backward) {
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto* in : inputs) any = any || (in && in->requires_grad());
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->op = std::move(op);
  node->parents.reserve(inputs.size());
  for (const auto* in : inputs) node->parents.push_back(in ? in->node() : nullptr);
  node->backward = std::move(backward);
  node->shape = out.shape();
  node->id = detail::next_node_id();
  out.attach_node(std::move(node));
  return out;
}

Tensor record(Tensor out, std::string op, std::initializer_list<const Tensor*> inputs,
              detail::BackwardFn backward) {
  return record(std::move(out), std::move(op), std::vector<const Tensor*>(inputs),
                std::move(backward));
}

Tape Tape::collect(const Tensor& root) {
  Tape tape;
  if (!root.node()) return tape;
  for (const auto* n : reachable_nodes(root.node().get())) {
    Entry e{n->id, n->op, {}, n->leaf};
    for (const auto& p : n->parents) e.parents.push_back(p ? p->id : kNoNode);
    tape.entries_.push_back(std::move(e));
  }
  return tape;
}

bool Tape::acyclic() const {
  for (const auto& e : entries_)
    for (auto p : e.parents)
      if (p != kNoNode && p >= e.id) return false;
  return true;
}

bool Gradients::contains(const Tensor& leaf) const { return find(leaf) != nullptr; }

const Tensor* Gradients::find(const Tensor& leaf) const {
  auto it = grads_.find(leaf.node_id());
  return it == grads_.end() ? nullptr : &it->second;
}

const Tensor& Gradients::at(const Tensor& leaf) const {
  const auto* g = find(leaf);
  if (!g) throw ContractError("no gradient recorded for leaf " + std::to_string(leaf.node_id()));
  return *g;
}

Gradients backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward needs a single-element loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad()) throw ContractError("backward: loss has no tape node");

  const auto order = reachable_nodes(loss.node().get());
  std::unordered_map<const detail::Node*, Tensor> pending;
  pending[loss.node().get()] = Tensor::ones_like(loss);

  NoGradGuard no_grad;
  Gradients result;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto* node = *it;
    auto found = pending.find(node);
    if (found == pending.end()) continue;
    Tensor grad = std::move(found->second);
    pending.erase(found);
    if (node->leaf) {
      result.insert(node->id, std::move(grad));
      continue;
    }
    std::vector<Tensor> parent_grads(node->parents.size());
    node->backward(grad, parent_grads);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const auto& parent = node->parents[i];
      if (!parent || !parent_grads[i].defined()) continue;
      accumulate(pending[parent.get()], parent_grads[i]);
    }
  }
  return result;
}

GradCheckReport grad_check_report(const std::function<Tensor(const Tensor&)>& forward_fn,
                                  const Tensor& x, double eps) {
  Tensor point = x.to(DType::f64);
  point.set_requires_grad();
  Tensor out = forward_fn(point);
  if (!out.defined() || out.numel() != 1)
    throw ContractError("grad_check: forward_fn must return a single-element tensor");

  const std::int64_t n = point.numel();
  std::vector<double> analytic(static_cast<std::size_t>(n), 0.0);
  if (out.requires_grad()) {
    const Gradients grads = backward(out);
    if (const Tensor* g = grads.find(point))
      for (std::int64_t i = 0; i < n; ++i) analytic[static_cast<std::size_t>(i)] = g->at(i);
  }

  NoGradGuard no_grad;
  Tensor probe = point.detach().clone();
  GradCheckReport r;
  double max_fd = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double orig = probe.at(i);
    probe.set(i, orig + eps);
    const double up = forward_fn(probe).item();
    probe.set(i, orig - eps);
    const double down = forward_fn(probe).item();
    probe.set(i, orig);
    const double fd = (up - down) / (2.0 * eps);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double diff = std::abs(a - fd);
    r.worst_elementwise =
        std::max(r.worst_elementwise, diff / std::max({std::abs(a), std::abs(fd), 1e-12}));
    r.max_abs_error = std::max(r.max_abs_error, diff);
    r.max_abs_gradient = std::max(r.max_abs_gradient, std::abs(a));
    max_fd = std::max(max_fd, std::abs(fd));
  }
  const double scale = std::max(r.max_abs_gradient, max_fd);
  r.relative = scale > 0.0 ? r.max_abs_error / scale : 0.0;
  return r;
}

double grad_check(const std::function<Tensor(const Tensor&)>& forward_fn, const Tensor& x,
                  double eps) {
  return grad_check_report(forward_fn, x, eps).worst_elementwise;
}

}  // namespace durn
