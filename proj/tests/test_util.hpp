#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "durn/tensor.hpp"

namespace testutil {

inline durn::Tensor random_tensor(durn::Shape shape, std::uint64_t seed, double lo = -1.0,
                                  double hi = 1.0, durn::DType dtype = durn::DType::f64) {
  durn::Tensor t(std::move(shape), dtype);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, u(rng));
  return t;
}

inline double max_abs_diff(const durn::Tensor& a, const durn::Tensor& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* base = std::getenv("DURN_TEST_TMP");
  std::filesystem::path dir =
      std::filesystem::path(base ? base : std::filesystem::temp_directory_path().string()) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
