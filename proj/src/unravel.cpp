#include "durn/unravel.hpp"

#include "durn/error.hpp"

namespace durn {

namespace {

constexpr std::uint64_t kMaxMaterialised = std::uint64_t{1} << 20;

void check_blocks(const std::vector<int>& blocks) {
  const int n = static_cast<int>(blocks.size());
  if (n < 1 || n > kMaxUnravelBlocks)
    throw ConfigError("unravel needs between 1 and " + std::to_string(kMaxUnravelBlocks) +
                      " blocks, got " + std::to_string(n));
}

void check_n(int n) {
  if (n < 1 || n > kMaxUnravelBlocks)
    throw ConfigError("unravel needs 1 <= n <= " + std::to_string(kMaxUnravelBlocks) + ", got " +
                      std::to_string(n));
}

std::vector<int> iota_blocks(int n) {
  std::vector<int> b(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(i)] = i + 1;
  return b;
}

TermExpr finish(const std::vector<PathOp>& ops) {
  TermExpr t;
  t.ops = ops;
  for (std::size_t i = 0; i + 1 < ops.size(); ++i)
    if (ops[i].kind == 'f' && ops[i + 1].kind == 'g')
      t.direct_pairs.emplace_back(ops[i].block, ops[i + 1].block);
  return t;
}

// Depth-first walk over the per-block choices of each recurrence. `in_carrier`
// marks a path currently travelling on the second residual stream (style d).
struct Walker {
  ConnectionStyle style;
  const std::vector<int>& blocks;
  const std::function<void(const TermExpr&)>& visit;
  std::vector<PathOp> ops;
  std::uint64_t count = 0;

  void push(char kind, int block) { ops.push_back({kind, block}); }

  void walk(std::size_t l, bool in_carrier) {
    if (l == blocks.size()) {
      // Only the main stream reaches the output.
      if (!in_carrier) {
        ++count;
        visit(finish(ops));
      }
      return;
    }
    const int b = blocks[l];
    const std::size_t mark = ops.size();
    switch (style) {
      case ConnectionStyle::a:
        walk(l + 1, false);
        push('h', b);
        walk(l + 1, false);
        break;
      case ConnectionStyle::b:
        walk(l + 1, false);
        push('f', b);
        push('g', b);
        walk(l + 1, false);
        break;
      case ConnectionStyle::c:
        // x' = x + f(x), then x'' = x' + g(x').
        walk(l + 1, false);
        push('g', b);
        walk(l + 1, false);
        ops.resize(mark);
        push('f', b);
        walk(l + 1, false);
        push('g', b);
        walk(l + 1, false);
        break;
      case ConnectionStyle::d:
        if (!in_carrier) {
          // x_{l+1} = x_l + g(f(x_l) + r_l); r_{l+1} = f(x_l) + r_l
          walk(l + 1, false);
          push('f', b);
          walk(l + 1, true);
          push('g', b);
          walk(l + 1, false);
        } else {
          walk(l + 1, true);
          push('g', b);
          walk(l + 1, false);
        }
        break;
    }
    ops.resize(mark);
  }
};

std::uint64_t term_count(ConnectionStyle style, std::size_t n) {
  std::uint64_t t = 1, r = 0;
  for (std::size_t l = 0; l < n; ++l) {
    switch (style) {
      case ConnectionStyle::a:
      case ConnectionStyle::b: t *= 2; break;
      case ConnectionStyle::c: t *= 4; break;
      case ConnectionStyle::d: {
        const std::uint64_t nt = 2 * t + r;
        r = t + r;
        t = nt;
        break;
      }
    }
  }
  return t;
}

}  // namespace

bool TermExpr::mentions(int block) const {
  for (const auto& op : ops)
    if (op.block == block) return true;
  return false;
}

std::string TermExpr::to_string() const {
  if (ops.empty()) return "identity";
  std::string s;
  for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
    if (!s.empty()) s += "∘";
    s += it->kind;
    s += std::to_string(it->block);
  }
  return s;
}

std::uint64_t for_each_term(ConnectionStyle style, const std::vector<int>& blocks,
                            const std::function<void(const TermExpr&)>& visit) {
  check_blocks(blocks);
  Walker w{style, blocks, visit, {}, 0};
  w.ops.reserve(2 * blocks.size());
  w.walk(0, false);
  return w.count;
}

std::vector<TermExpr> expand(ConnectionStyle style, const std::vector<int>& blocks) {
  check_blocks(blocks);
  const std::uint64_t expected = term_count(style, blocks.size());
  if (expected > kMaxMaterialised)
    throw ConfigError("expansion has " + std::to_string(expected) +
                      " terms; use the streaming report instead");
  std::vector<TermExpr> terms;
  terms.reserve(expected);
  for_each_term(style, blocks, [&](const TermExpr& t) { terms.push_back(t); });
  return terms;
}

std::vector<TermExpr> expand(ConnectionStyle style, int n) {
  check_n(n);
  return expand(style, iota_blocks(n));
}

namespace {

void accumulate(PathReport& r, const TermExpr& t) {
  ++r.n_terms;
  for (const auto& p : t.direct_pairs) r.pair_set.insert(p);
  const auto& ops = t.ops;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].kind == 'f' && (i + 1 == ops.size() || ops[i + 1].kind != 'g')) ++r.unpaired_f;
    if (ops[i].kind == 'g' && (i == 0 || ops[i - 1].kind != 'f')) ++r.unpaired_g;
  }
}

}  // namespace

PathReport pairing_report(const std::vector<TermExpr>& terms) {
  PathReport r;
  for (const auto& t : terms) accumulate(r, t);
  return r;
}

PathReport pairing_report(ConnectionStyle style, int n) {
  check_n(n);
  PathReport r;
  for_each_term(style, iota_blocks(n), [&](const TermExpr& t) { accumulate(r, t); });
  return r;
}

PairingVerdict verify_pairing(ConnectionStyle style, int n) {
  PairingVerdict v;
  v.report = pairing_report(style, n);
  std::set<std::pair<int, int>> expected;
  if (style == ConnectionStyle::d) {
    v.law = "upper-triangular";
    for (int i = 1; i <= n; ++i)
      for (int j = i; j <= n; ++j) expected.emplace(i, j);
  } else if (style == ConnectionStyle::b) {
    v.law = "diagonal";
    for (int i = 1; i <= n; ++i) expected.emplace(i, i);
  } else {
    return v;
  }
  v.passed = v.report.pair_set == expected && v.report.unpaired_f == 0 && v.report.unpaired_g == 0;
  return v;
}

}  // namespace durn
