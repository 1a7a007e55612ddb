#include "durn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "durn/autograd.hpp"

namespace durn {

namespace {

void require_same_dtype(const Tensor& a, const Tensor& b, const char* what) {
  if (a.dtype() != b.dtype())
    throw ContractError(std::string(what) + ": dtype mismatch " + to_string(a.dtype()) + " vs " +
                        to_string(b.dtype()));
}

std::vector<std::int64_t> row_major_strides(const Shape& shape) {
  std::vector<std::int64_t> strides(shape.size(), 1);
  for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d)
    strides[static_cast<std::size_t>(d)] =
        strides[static_cast<std::size_t>(d) + 1] * shape[static_cast<std::size_t>(d) + 1];
  return strides;
}

// Offsets into `b` for every flat position of `a`, with singleton axes of b
// broadcast. Empty result means shapes are identical.
std::vector<std::int64_t> broadcast_offsets(const Shape& a, const Shape& b) {
  if (a == b) return {};
  if (a.size() != b.size())
    throw DimensionError("cannot broadcast " + to_string(b) + " over " + to_string(a));
  for (std::size_t d = 0; d < a.size(); ++d)
    if (b[d] != a[d] && b[d] != 1)
      throw DimensionError("cannot broadcast " + to_string(b) + " over " + to_string(a));

  auto bstr = row_major_strides(b);
  for (std::size_t d = 0; d < a.size(); ++d)
    if (b[d] == 1) bstr[d] = 0;

  const std::int64_t n = shape_numel(a);
  std::vector<std::int64_t> out(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(a.size(), 0);
  std::int64_t off = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = off;
    for (int d = static_cast<int>(a.size()) - 1; d >= 0; --d) {
      const auto ud = static_cast<std::size_t>(d);
      if (++idx[ud] < a[ud]) {
        off += bstr[ud];
        break;
      }
      off -= bstr[ud] * (a[ud] - 1);
      idx[ud] = 0;
    }
  }
  return out;
}

template <typename T, typename Fn>
void for_pairs(std::int64_t n, const std::vector<std::int64_t>& boff, Fn&& fn) {
  if (boff.empty()) {
    for (std::int64_t i = 0; i < n; ++i) fn(i, i);
  } else {
    for (std::int64_t i = 0; i < n; ++i) fn(i, boff[static_cast<std::size_t>(i)]);
  }
}

const char* binary_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
  }
  return "?";
}

const char* unary_name(UnaryOp op) {
  switch (op) {
    case UnaryOp::relu: return "relu";
    case UnaryOp::tanh: return "tanh";
    case UnaryOp::sigmoid: return "sigmoid";
    case UnaryOp::neg: return "neg";
    case UnaryOp::square: return "square";
    case UnaryOp::abs: return "abs";
  }
  return "?";
}

double pairwise_sum_rec(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_rec(v, half) + pairwise_sum_rec(v + half, n - half);
}

}  // namespace

double pairwise_sum(const double* values, std::size_t count) {
  return pairwise_sum_rec(values, count);
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  require_same_dtype(a, b, binary_name(op));
  auto boff = std::make_shared<std::vector<std::int64_t>>(broadcast_offsets(a.shape(), b.shape()));
  Tensor out(a.shape(), a.dtype());
  const std::int64_t n = a.numel();
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.data<T>();
    const T* pb = b.data<T>();
    T* po = out.data<T>();
    switch (op) {
      case BinaryOp::add: for_pairs<T>(n, *boff, [&](auto i, auto j) { po[i] = pa[i] + pb[j]; }); break;
      case BinaryOp::sub: for_pairs<T>(n, *boff, [&](auto i, auto j) { po[i] = pa[i] - pb[j]; }); break;
      case BinaryOp::mul: for_pairs<T>(n, *boff, [&](auto i, auto j) { po[i] = pa[i] * pb[j]; }); break;
      case BinaryOp::div: for_pairs<T>(n, *boff, [&](auto i, auto j) { po[i] = pa[i] / pb[j]; }); break;
    }
  });

  Tensor sa = a.detach();
  Tensor sb = b.detach();
  const bool need_a = a.requires_grad();
  const bool need_b = b.requires_grad();
  return record(std::move(out), binary_name(op), {&a, &b},
                [op, sa, sb, boff, need_a, need_b](const Tensor& g, std::vector<Tensor>& grads) {
                  const std::int64_t n = g.numel();
                  dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    const T* pg = g.data<T>();
                    const T* pa = sa.data<T>();
                    const T* pb = sb.data<T>();
                    if (need_a) {
                      Tensor ga(sa.shape(), sa.dtype());
                      T* p = ga.data<T>();
                      switch (op) {
                        case BinaryOp::add:
                        case BinaryOp::sub: std::copy_n(pg, n, p); break;
                        case BinaryOp::mul: for_pairs<T>(n, *boff, [&](auto i, auto j) { p[i] = pg[i] * pb[j]; }); break;
                        case BinaryOp::div: for_pairs<T>(n, *boff, [&](auto i, auto j) { p[i] = pg[i] / pb[j]; }); break;
                      }
                      grads[0] = std::move(ga);
                    }
                    if (need_b) {
                      Tensor gb(sb.shape(), sb.dtype());
                      T* p = gb.data<T>();
                      switch (op) {
                        case BinaryOp::add: for_pairs<T>(n, *boff, [&](auto i, auto j) { p[j] += pg[i]; }); break;
                        case BinaryOp::sub: for_pairs<T>(n, *boff, [&](auto i, auto j) { p[j] -= pg[i]; }); break;
                        case BinaryOp::mul: for_pairs<T>(n, *boff, [&](auto i, auto j) { p[j] += pg[i] * pa[i]; }); break;
                        case BinaryOp::div:
                          for_pairs<T>(n, *boff, [&](auto i, auto j) { p[j] -= pg[i] * pa[i] / (pb[j] * pb[j]); });
                          break;
                      }
                      grads[1] = std::move(gb);
                    }
                  });
                });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }

Tensor scalar_map(UnaryOp op, const Tensor& a) {
  Tensor out(a.shape(), a.dtype());
  const std::int64_t n = a.numel();
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.data<T>();
    T* y = out.data<T>();
    for (std::int64_t i = 0; i < n; ++i) {
      switch (op) {
        case UnaryOp::relu: y[i] = x[i] > T(0) ? x[i] : T(0); break;
        case UnaryOp::tanh: y[i] = std::tanh(x[i]); break;
        case UnaryOp::sigmoid: y[i] = T(1) / (T(1) + std::exp(-x[i])); break;
        case UnaryOp::neg: y[i] = -x[i]; break;
        case UnaryOp::square: y[i] = x[i] * x[i]; break;
        case UnaryOp::abs: y[i] = std::abs(x[i]); break;
      }
    }
  });
  Tensor saved_in = a.detach();
  Tensor saved_out = out.detach();
  return record(out, unary_name(op), {&a},
                [op, saved_in, saved_out](const Tensor& g, std::vector<Tensor>& grads) {
                  Tensor gi(g.shape(), g.dtype());
                  dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    const T* pg = g.data<T>();
                    const T* x = saved_in.data<T>();
                    const T* y = saved_out.data<T>();
                    T* p = gi.data<T>();
                    for (std::int64_t i = 0, n = g.numel(); i < n; ++i) {
                      switch (op) {
                        case UnaryOp::relu: p[i] = x[i] > T(0) ? pg[i] : T(0); break;
                        case UnaryOp::tanh: p[i] = pg[i] * (T(1) - y[i] * y[i]); break;
                        case UnaryOp::sigmoid: p[i] = pg[i] * y[i] * (T(1) - y[i]); break;
                        case UnaryOp::neg: p[i] = -pg[i]; break;
                        case UnaryOp::square: p[i] = pg[i] * T(2) * x[i]; break;
                        case UnaryOp::abs:
                          p[i] = x[i] > T(0) ? pg[i] : (x[i] < T(0) ? -pg[i] : T(0));
                          break;
                      }
                    }
                  });
                  grads[0] = std::move(gi);
                });
}

Tensor relu(const Tensor& a) { return scalar_map(UnaryOp::relu, a); }
Tensor tanh(const Tensor& a) { return scalar_map(UnaryOp::tanh, a); }
Tensor sigmoid(const Tensor& a) { return scalar_map(UnaryOp::sigmoid, a); }
Tensor neg(const Tensor& a) { return scalar_map(UnaryOp::neg, a); }
Tensor square(const Tensor& a) { return scalar_map(UnaryOp::square, a); }
Tensor abs(const Tensor& a) { return scalar_map(UnaryOp::abs, a); }

Tensor affine(const Tensor& a, double factor, double offset) {
  Tensor out(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.data<T>();
    T* y = out.data<T>();
    for (std::int64_t i = 0, n = a.numel(); i < n; ++i)
      y[i] = static_cast<T>(x[i] * factor + offset);
  });
  return record(std::move(out), "affine", {&a},
                [factor](const Tensor& g, std::vector<Tensor>& grads) {
                  Tensor gi(g.shape(), g.dtype());
                  dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    const T* pg = g.data<T>();
                    T* p = gi.data<T>();
                    for (std::int64_t i = 0, n = g.numel(); i < n; ++i)
                      p[i] = static_cast<T>(pg[i] * factor);
                  });
                  grads[0] = std::move(gi);
                });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  Tensor out(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.data<T>();
    T* y = out.data<T>();
    for (std::int64_t i = 0, n = a.numel(); i < n; ++i)
      y[i] = std::clamp(x[i], static_cast<T>(lo), static_cast<T>(hi));
  });
  Tensor saved = a.detach();
  return record(std::move(out), "clamp", {&a},
                [saved, lo, hi](const Tensor& g, std::vector<Tensor>& grads) {
                  Tensor gi(g.shape(), g.dtype());
                  dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    const T* pg = g.data<T>();
                    const T* x = saved.data<T>();
                    T* p = gi.data<T>();
                    for (std::int64_t i = 0, n = g.numel(); i < n; ++i)
                      p[i] = (x[i] > lo && x[i] < hi) ? pg[i] : T(0);
                  });
                  grads[0] = std::move(gi);
                });
}

Tensor reduce(ReduceOp op, const Tensor& a, const std::vector<int>& axes_in) {
  const int rank = a.rank();
  std::vector<bool> reduced(static_cast<std::size_t>(rank), axes_in.empty());
  for (int ax : axes_in) {
    const int norm = ax < 0 ? ax + rank : ax;
    if (norm < 0 || norm >= rank)
      throw DimensionError("reduce: axis " + std::to_string(ax) + " invalid for shape " +
                           to_string(a.shape()));
    if (reduced[static_cast<std::size_t>(norm)])
      throw DimensionError("reduce: axis " + std::to_string(ax) + " listed twice");
    reduced[static_cast<std::size_t>(norm)] = true;
  }

  const Shape& in_shape = a.shape();
  Shape out_shape = in_shape;
  Shape kept_shape, red_shape;
  std::vector<std::int64_t> kept_str, red_str;
  const auto str = row_major_strides(in_shape);
  for (int d = 0; d < rank; ++d) {
    const auto ud = static_cast<std::size_t>(d);
    if (reduced[ud]) {
      out_shape[ud] = 1;
      red_shape.push_back(in_shape[ud]);
      red_str.push_back(str[ud]);
    } else {
      kept_shape.push_back(in_shape[ud]);
      kept_str.push_back(str[ud]);
    }
  }

  auto offsets = [](const Shape& shape, const std::vector<std::int64_t>& strides) {
    std::vector<std::int64_t> out{0};
    for (std::size_t d = 0; d < shape.size(); ++d) {
      std::vector<std::int64_t> next;
      next.reserve(out.size() * static_cast<std::size_t>(shape[d]));
      for (auto base : out)
        for (std::int64_t i = 0; i < shape[d]; ++i) next.push_back(base + i * strides[d]);
      out = std::move(next);
    }
    return out;
  };
  auto kept_off = std::make_shared<std::vector<std::int64_t>>(offsets(kept_shape, kept_str));
  auto red_off = std::make_shared<std::vector<std::int64_t>>(offsets(red_shape, red_str));
  const double scale = op == ReduceOp::mean ? 1.0 / static_cast<double>(red_off->size()) : 1.0;

  Tensor out(out_shape, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = a.data<T>();
    T* y = out.data<T>();
    std::vector<double> buf(red_off->size());
    for (std::size_t o = 0; o < kept_off->size(); ++o) {
      const auto base = (*kept_off)[o];
      for (std::size_t r = 0; r < red_off->size(); ++r)
        buf[r] = static_cast<double>(x[base + (*red_off)[r]]);
      y[o] = static_cast<T>(pairwise_sum(buf.data(), buf.size()) * scale);
    }
  });

  Shape shape_in = in_shape;
  return record(std::move(out), op == ReduceOp::sum ? "sum" : "mean", {&a},
                [kept_off, red_off, scale, shape_in](const Tensor& g, std::vector<Tensor>& grads) {
                  Tensor gi(shape_in, g.dtype());
                  dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    const T* pg = g.data<T>();
                    T* p = gi.data<T>();
                    for (std::size_t o = 0; o < kept_off->size(); ++o) {
                      const T v = static_cast<T>(pg[o] * scale);
                      for (auto r : *red_off) p[(*kept_off)[o] + r] = v;
                    }
                  });
                  grads[0] = std::move(gi);
                });
}

Tensor sum(const Tensor& a, const std::vector<int>& axes) { return reduce(ReduceOp::sum, a, axes); }
Tensor mean(const Tensor& a, const std::vector<int>& axes) { return reduce(ReduceOp::mean, a, axes); }

Tensor reshape(const Tensor& a, Shape shape) {
  Tensor out = a.view_as(std::move(shape));
  Shape original = a.shape();
  return record(std::move(out), "reshape", {&a},
                [original](const Tensor& g, std::vector<Tensor>& grads) {
                  grads[0] = g.view_as(original);
                });
}

}  // namespace durn
