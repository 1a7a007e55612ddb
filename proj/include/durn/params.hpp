#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "durn/tensor.hpp"

namespace durn {

/// Named parameters (trainable leaves) and buffers (running statistics) in
/// registration order.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
    bool frozen = false;
  };

  /// Registers a trainable parameter and marks it as a gradient leaf.
  Tensor add_parameter(const std::string& name, Tensor value);
  /// Registers a non-trainable buffer.
  Tensor add_buffer(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  /// Throws ConfigError for unknown names.
  const Tensor& get(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  void set_frozen(const std::string& name, bool frozen);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  /// Sum of element counts over trainable parameters.
  std::int64_t count_parameters() const;

 private:
  Entry& insert(const std::string& name, Tensor value, bool trainable);

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Seed for a named random stream. Streams of distinct names are independent,
/// so adding a parameter never perturbs the initial values of the others.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name);

/// Fills `t` with U(-bound, bound) draws from the named stream.
void fill_uniform(Tensor& t, double bound, std::uint64_t seed, std::string_view name);

}  // namespace durn
