#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "durn/error.hpp"

namespace durn {

enum class DType : std::uint8_t { f32, f64 };

using Shape = std::vector<std::int64_t>;
using NodeId = std::int64_t;

inline constexpr NodeId kNoNode = -1;

std::string to_string(DType dtype);
std::string to_string(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

/// Calls `fn(T{})` with T = float or double according to `dtype`.
template <typename Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::f32) return fn(float{});
  return fn(double{});
}

namespace detail {
struct Node;
struct Storage;
}  // namespace detail

/// Dense row-major tensor. Copies are shallow: two Tensor objects may share
/// storage and tape node. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor.
  explicit Tensor(Shape shape, DType dtype = DType::f32);

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor ones(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor from_values(Shape shape, std::span<const double> values,
                            DType dtype = DType::f32);
  static Tensor from_values(Shape shape, std::initializer_list<double> values,
                            DType dtype = DType::f32);
  static Tensor zeros_like(const Tensor& t);
  static Tensor ones_like(const Tensor& t);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const;
  std::int64_t dim(int axis) const;
  DType dtype() const;

  template <typename T>
  T* data();
  template <typename T>
  const T* data() const;

  double at(std::int64_t flat_index) const;
  void set(std::int64_t flat_index, double value);
  /// Value of a single-element tensor.
  double item() const;
  std::vector<double> values() const;
  void fill(double value);

  /// True when the tensor is a differentiable leaf or the result of recorded ops.
  bool requires_grad() const { return node_ != nullptr; }
  /// Marks this tensor as a differentiable leaf (or drops its node for false).
  Tensor& set_requires_grad(bool flag = true);
  NodeId node_id() const;
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  /// Same storage, no tape node.
  Tensor detach() const;
  /// Deep copy of the values, no tape node.
  Tensor clone() const;
  /// Converted copy, no tape node.
  Tensor to(DType dtype) const;
  /// Copies values of `src` (same shape, any dtype) into this tensor's storage.
  void copy_from(const Tensor& src);

  /// Internal: attaches a recorded node to an op result.
  void attach_node(std::shared_ptr<detail::Node> node) { node_ = std::move(node); }
  /// Internal: tensor sharing this storage under a different shape.
  Tensor view_as(Shape shape) const;

 private:
  Shape shape_;
  std::shared_ptr<detail::Storage> storage_;
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Storage {
  DType dtype = DType::f32;
  std::vector<float> f32;
  std::vector<double> f64;
};

}  // namespace detail

template <typename T>
T* Tensor::data() {
  if (!storage_ || storage_->dtype != dtype_of<T>())
    throw ContractError("tensor data requested with wrong dtype");
  if constexpr (std::is_same_v<T, float>)
    return storage_->f32.data();
  else
    return storage_->f64.data();
}

template <typename T>
const T* Tensor::data() const {
  if (!storage_ || storage_->dtype != dtype_of<T>())
    throw ContractError("tensor data requested with wrong dtype");
  if constexpr (std::is_same_v<T, float>)
    return storage_->f32.data();
  else
    return storage_->f64.data();
}

}  // namespace durn
