#pragma once

#include <vector>

#include "durn/tensor.hpp"

namespace durn {

enum class BinaryOp { add, sub, mul, div };
enum class UnaryOp { relu, tanh, sigmoid, neg, square, abs };
enum class ReduceOp { sum, mean };

/// a (op) b, where b matches a or broadcasts over it along singleton axes.
/// The result has a's shape.
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scalar_map(UnaryOp op, const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);

/// a * factor + offset.
Tensor affine(const Tensor& a, double factor, double offset);
Tensor clamp(const Tensor& a, double lo, double hi);

/// Reduced axes keep extent 1. An empty axis list reduces every axis.
Tensor reduce(ReduceOp op, const Tensor& a, const std::vector<int>& axes);
Tensor sum(const Tensor& a, const std::vector<int>& axes = {});
Tensor mean(const Tensor& a, const std::vector<int>& axes = {});

Tensor reshape(const Tensor& a, Shape shape);

/// Pairwise summation in a fixed order.
double pairwise_sum(const double* values, std::size_t count);

}  // namespace durn
