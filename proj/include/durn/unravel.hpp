#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "durn/connection_style.hpp"

namespace durn {

/// One operation in a path: f_i / g_i are the paired operations of block i,
/// h_i the single residual function of a plain residual block.
struct PathOp {
  char kind = 'f';  // 'f', 'g' or 'h'
  int block = 1;
  friend bool operator==(const PathOp&, const PathOp&) = default;
  friend auto operator<=>(const PathOp&, const PathOp&) = default;
};

/// One additive term of the unravelled network. `ops` is in application
/// order (ops[0] is applied to the input first).
struct TermExpr {
  std::vector<PathOp> ops;
  /// (i, j) for every f_i whose output is the immediate argument of g_j.
  std::vector<std::pair<int, int>> direct_pairs;

  bool mentions(int block) const;
  /// Composition notation, e.g. "g2∘f1"; the empty term is "identity".
  std::string to_string() const;
  friend bool operator==(const TermExpr&, const TermExpr&) = default;
  friend auto operator<=>(const TermExpr&, const TermExpr&) = default;
};

struct PathReport {
  std::uint64_t n_terms = 0;
  std::set<std::pair<int, int>> pair_set;
  std::uint64_t unpaired_f = 0;
  std::uint64_t unpaired_g = 0;
};

constexpr int kMaxUnravelBlocks = 12;

/// Calls `visit` once per additive term of a stack of `blocks` (block labels
/// in stack order). Terms are produced without materialising the full list.
/// Returns the number of terms.
std::uint64_t for_each_term(ConnectionStyle style, const std::vector<int>& blocks,
                            const std::function<void(const TermExpr&)>& visit);

/// All terms for blocks 1..n. Throws ConfigError unless 1 <= n <= 12, or if
/// the expansion is too large to hold in memory (style c beyond n = 10).
std::vector<TermExpr> expand(ConnectionStyle style, int n);
std::vector<TermExpr> expand(ConnectionStyle style, const std::vector<int>& blocks);

PathReport pairing_report(const std::vector<TermExpr>& terms);
/// Streaming form, usable up to n = 12 for every style.
PathReport pairing_report(ConnectionStyle style, int n);

struct PairingVerdict {
  PathReport report;
  /// "upper-triangular" for d, "diagonal" for b, empty for a / c.
  std::string law;
  bool passed = true;
};

PairingVerdict verify_pairing(ConnectionStyle style, int n);

}  // namespace durn
