#include "durn/params.hpp"

#include <random>

#include "durn/error.hpp"

namespace durn {

ParamStore::Entry& ParamStore::insert(const std::string& name, Tensor value, bool trainable) {
  if (name.empty()) throw ConfigError("parameter name must not be empty");
  if (contains(name)) throw ConfigError("parameter '" + name + "' registered twice");
  if (!value.defined()) throw ContractError("parameter '" + name + "' is undefined");
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, std::move(value), trainable, false});
  return entries_.back();
}

Tensor ParamStore::add_parameter(const std::string& name, Tensor value) {
  value.set_requires_grad(true);
  return insert(name, std::move(value), true).tensor;
}

Tensor ParamStore::add_buffer(const std::string& name, Tensor value) {
  value.set_requires_grad(false);
  return insert(name, std::move(value), false).tensor;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

const Tensor& ParamStore::get(const std::string& name) const { return entry(name).tensor; }

void ParamStore::set_frozen(const std::string& name, bool frozen) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  entries_[it->second].frozen = frozen;
}

std::int64_t ParamStore::count_parameters() const {
  std::int64_t total = 0;
  for (const auto& e : entries_)
    if (e.trainable) total += e.tensor.numel();
  return total;
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
  // FNV-1a over the name, then a splitmix64 finalizer over (seed, hash).
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (h | 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void fill_uniform(Tensor& t, double bound, std::uint64_t seed, std::string_view name) {
  std::mt19937_64 rng(stream_seed(seed, name));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::int64_t i = 0, n = t.numel(); i < n; ++i) t.set(i, dist(rng));
}

}  // namespace durn
