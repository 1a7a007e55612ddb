#include "durn/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "durn/autograd.hpp"

namespace durn {

std::string to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e <= 0) throw DimensionError("non-positive extent in shape " + to_string(shape));
    n *= e;
  }
  return n;
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)) {
  const auto n = static_cast<std::size_t>(shape_numel(shape_));
  storage_ = std::make_shared<detail::Storage>();
  storage_->dtype = dtype;
  if (dtype == DType::f32)
    storage_->f32.assign(n, 0.0f);
  else
    storage_->f64.assign(n, 0.0);
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::ones(Shape shape, DType dtype) { return full(std::move(shape), 1.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  t.fill(value);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
  Tensor t(std::move(shape), dtype);
  if (static_cast<std::int64_t>(values.size()) != t.numel())
    throw DimensionError("from_values: " + std::to_string(values.size()) +
                         " values for shape " + to_string(t.shape()));
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    std::transform(values.begin(), values.end(), t.data<T>(),
                   [](double v) { return static_cast<T>(v); });
  });
  return t;
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values, DType dtype) {
  return from_values(std::move(shape), std::span<const double>(values.begin(), values.size()),
                     dtype);
}

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape(), t.dtype()); }

Tensor Tensor::ones_like(const Tensor& t) { return ones(t.shape(), t.dtype()); }

std::int64_t Tensor::numel() const { return defined() ? shape_numel(shape_) : 0; }

std::int64_t Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

DType Tensor::dtype() const {
  if (!storage_) throw ContractError("undefined tensor has no dtype");
  return storage_->dtype;
}

double Tensor::at(std::int64_t i) const {
  return dispatch(dtype(), [&](auto tag) -> double {
    using T = decltype(tag);
    return static_cast<double>(data<T>()[i]);
  });
}

void Tensor::set(std::int64_t i, double value) {
  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    data<T>()[i] = static_cast<T>(value);
  });
}

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() on tensor of shape " + to_string(shape_));
  return at(0);
}

std::vector<double> Tensor::values() const {
  std::vector<double> out(static_cast<std::size_t>(numel()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(static_cast<std::int64_t>(i));
  return out;
}

void Tensor::fill(double value) {
  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::fill_n(data<T>(), numel(), static_cast<T>(value));
  });
}

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!defined()) throw ContractError("set_requires_grad on undefined tensor");
  if (!flag) {
    node_.reset();
    return *this;
  }
  if (node_ && node_->leaf) return *this;
  auto node = std::make_shared<detail::Node>();
  node->id = detail::next_node_id();
  node->op = "leaf";
  node->shape = shape_;
  node->leaf = true;
  node_ = std::move(node);
  return *this;
}

NodeId Tensor::node_id() const { return node_ ? node_->id : kNoNode; }

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.node_.reset();
  return t;
}

Tensor Tensor::clone() const {
  if (!defined()) return {};
  Tensor t;
  t.shape_ = shape_;
  t.storage_ = std::make_shared<detail::Storage>(*storage_);
  return t;
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return clone();
  Tensor t(shape_, target);
  t.copy_from(*this);
  return t;
}

void Tensor::copy_from(const Tensor& src) {
  if (src.shape() != shape_)
    throw DimensionError("copy_from: shape " + to_string(src.shape()) + " into " +
                         to_string(shape_));
  dispatch(dtype(), [&](auto dst_tag) {
    using D = decltype(dst_tag);
    dispatch(src.dtype(), [&](auto src_tag) {
      using S = decltype(src_tag);
      std::transform(src.data<S>(), src.data<S>() + src.numel(), data<D>(),
                     [](S v) { return static_cast<D>(v); });
    });
  });
}

Tensor Tensor::view_as(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw DimensionError("cannot view " + to_string(shape_) + " as " + to_string(shape));
  Tensor t;
  t.shape_ = std::move(shape);
  t.storage_ = storage_;
  return t;
}

}  // namespace durn
