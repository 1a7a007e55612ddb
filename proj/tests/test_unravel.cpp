#include <algorithm>
#include <map>
#include <random>

#include "doctest.h"
#include "durn/error.hpp"
#include "durn/unravel.hpp"

using namespace durn;

namespace {

// Small dense matrices stand in for the block operations: with linear f, g, h
// the network is a matrix and must equal the sum of its unravelled terms.
using Mat = std::vector<double>;
constexpr int D = 4;

Mat eye() {
  Mat m(D * D, 0.0);
  for (int i = 0; i < D; ++i) m[i * D + i] = 1.0;
  return m;
}
Mat zero() { return Mat(D * D, 0.0); }
Mat mm(const Mat& a, const Mat& b) {
  Mat c = zero();
  for (int i = 0; i < D; ++i)
    for (int k = 0; k < D; ++k)
      for (int j = 0; j < D; ++j) c[i * D + j] += a[i * D + k] * b[k * D + j];
  return c;
}
Mat plus(const Mat& a, const Mat& b) {
  Mat c = a;
  for (int i = 0; i < D * D; ++i) c[i] += b[i];
  return c;
}
Mat random_mat(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Mat m(D * D);
  for (auto& v : m) v = u(rng);
  return m;
}

struct Ops {
  std::map<std::pair<char, int>, Mat> m;
  const Mat& get(char k, int b) const { return m.at({k, b}); }
};

Ops random_ops(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Ops o;
  for (int b = 1; b <= n; ++b)
    for (char k : {'f', 'g', 'h'}) o.m[{k, b}] = random_mat(rng);
  return o;
}

// Network map built directly from each style's recurrence.
Mat network(ConnectionStyle s, int n, const Ops& o) {
  Mat x = eye(), r = zero();
  for (int b = 1; b <= n; ++b) {
    const Mat& f = o.get('f', b);
    const Mat& g = o.get('g', b);
    switch (s) {
      case ConnectionStyle::a: x = plus(x, mm(o.get('h', b), x)); break;
      case ConnectionStyle::b: x = plus(x, mm(g, mm(f, x))); break;
      case ConnectionStyle::c: {
        const Mat x1 = plus(x, mm(f, x));
        x = plus(x1, mm(g, x1));
        break;
      }
      case ConnectionStyle::d: {
        const Mat carrier = plus(mm(f, x), r);
        x = plus(x, mm(g, carrier));
        r = carrier;
        break;
      }
    }
  }
  return x;
}

Mat term_sum(const std::vector<TermExpr>& terms, const Ops& o) {
  Mat total = zero();
  for (const auto& t : terms) {
    Mat p = eye();
    for (const auto& op : t.ops) p = mm(o.get(op.kind, op.block), p);
    total = plus(total, p);
  }
  return total;
}

double max_diff(const Mat& a, const Mat& b) {
  double m = 0;
  for (int i = 0; i < D * D; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Memoised count over (block, on-carrier) states of the dual recurrence.
std::uint64_t d_count(int l, int n, bool carrier, std::map<std::pair<int, bool>, std::uint64_t>& memo) {
  if (l == n) return carrier ? 0 : 1;
  const auto key = std::make_pair(l, carrier);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  std::uint64_t c = carrier ? d_count(l + 1, n, true, memo) + d_count(l + 1, n, false, memo)
                            : d_count(l + 1, n, false, memo) + d_count(l + 1, n, true, memo) +
                                  d_count(l + 1, n, false, memo);
  return memo[key] = c;
}

std::set<std::string> names(const std::vector<TermExpr>& terms) {
  std::set<std::string> s;
  for (const auto& t : terms) s.insert(t.to_string());
  return s;
}

}  // namespace

TEST_CASE("listed expansions") {
  CHECK(names(expand(ConnectionStyle::a, 3)) ==
        std::set<std::string>{"h3∘h2∘h1", "h2∘h1", "h3∘h1", "h3∘h2", "h1", "h2", "h3", "identity"});
  CHECK(names(expand(ConnectionStyle::d, 1)) == std::set<std::string>{"identity", "g1∘f1"});
  CHECK(expand(ConnectionStyle::d, 2).size() == 5);
  CHECK(expand(ConnectionStyle::d, 3).size() == 13);
  CHECK_THROWS_AS(expand(ConnectionStyle::d, 0), ConfigError);
  CHECK_THROWS_AS(expand(ConnectionStyle::d, 13), ConfigError);
}

TEST_CASE("terms sum to the network map for every style") {
  for (const ConnectionStyle s :
       {ConnectionStyle::a, ConnectionStyle::b, ConnectionStyle::c, ConnectionStyle::d})
    for (int n = 1; n <= 5; ++n) {
      const Ops o = random_ops(n, 100 + n);
      CHECK(max_diff(term_sum(expand(s, n), o), network(s, n, o)) < 1e-12);
    }
}

TEST_CASE("term counts against a memoised oracle") {
  for (int n = 1; n <= 10; ++n) {
    std::map<std::pair<int, bool>, std::uint64_t> memo;
    CHECK(pairing_report(ConnectionStyle::d, n).n_terms == d_count(0, n, false, memo));
    CHECK(pairing_report(ConnectionStyle::a, n).n_terms == (std::uint64_t{1} << n));
    CHECK(pairing_report(ConnectionStyle::b, n).n_terms == (std::uint64_t{1} << n));
  }
}

TEST_CASE("pair sets") {
  const PathReport d3 = pairing_report(expand(ConnectionStyle::d, 3));
  CHECK(d3.pair_set == std::set<std::pair<int, int>>{{1, 1}, {2, 2}, {3, 3}, {1, 2}, {1, 3}, {2, 3}});
  CHECK(d3.unpaired_f == 0);
  CHECK(d3.unpaired_g == 0);

  const PathReport b3 = pairing_report(expand(ConnectionStyle::b, 3));
  CHECK(b3.pair_set == std::set<std::pair<int, int>>{{1, 1}, {2, 2}, {3, 3}});

  const PathReport c2 = pairing_report(expand(ConnectionStyle::c, 2));
  CHECK(c2.unpaired_f > 0);
  CHECK(c2.unpaired_g > 0);

  for (int n = 1; n <= 8; ++n) CHECK(verify_pairing(ConnectionStyle::d, n).passed);
  CHECK(verify_pairing(ConnectionStyle::d, 3).report.pair_set.size() == 6);
  CHECK(verify_pairing(ConnectionStyle::b, 4).passed);
  CHECK(verify_pairing(ConnectionStyle::b, 4).law == "diagonal");
  CHECK(verify_pairing(ConnectionStyle::c, 3).law.empty());
}

TEST_CASE("style c unpaired counts by base-4 enumeration") {
  // Each block independently contributes identity, f, g or g∘f.
  for (int n = 1; n <= 6; ++n) {
    std::uint64_t total = 1;
    for (int i = 0; i < n; ++i) total *= 4;
    std::uint64_t uf = 0, ug = 0;
    for (std::uint64_t code = 0; code < total; ++code) {
      std::string seq;
      std::uint64_t c = code;
      for (int b = 0; b < n; ++b, c /= 4) {
        const int digit = static_cast<int>(c % 4);
        if (digit == 1 || digit == 3) seq += 'f';
        if (digit == 2 || digit == 3) seq += 'g';
      }
      for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq[i] == 'f' && (i + 1 == seq.size() || seq[i + 1] != 'g')) ++uf;
        if (seq[i] == 'g' && (i == 0 || seq[i - 1] != 'f')) ++ug;
      }
    }
    const PathReport r = pairing_report(ConnectionStyle::c, n);
    CHECK(r.n_terms == total);
    CHECK(r.unpaired_f == uf);
    CHECK(r.unpaired_g == ug);
  }
  const PathReport c3 = pairing_report(ConnectionStyle::c, 3);
  CHECK(c3.unpaired_f == 39);
  CHECK(c3.unpaired_g == 39);
}

TEST_CASE("detachability of style d blocks") {
  for (int n = 2; n <= 6; ++n)
    for (int k = 1; k <= n; ++k) {
      std::vector<int> rest;
      for (int b = 1; b <= n; ++b)
        if (b != k) rest.push_back(b);
      std::set<std::string> kept;
      for (const auto& t : expand(ConnectionStyle::d, n))
        if (!t.mentions(k)) kept.insert(t.to_string());
      CHECK(kept == names(expand(ConnectionStyle::d, rest)));
    }
}

TEST_CASE("streaming report agrees with materialised report") {
  for (const ConnectionStyle s : {ConnectionStyle::b, ConnectionStyle::c, ConnectionStyle::d}) {
    const PathReport a = pairing_report(s, 6);
    const PathReport b = pairing_report(expand(s, 6));
    CHECK(a.n_terms == b.n_terms);
    CHECK(a.pair_set == b.pair_set);
    CHECK(a.unpaired_f == b.unpaired_f);
    CHECK(a.unpaired_g == b.unpaired_g);
  }
  CHECK(pairing_report(ConnectionStyle::d, 12).unpaired_f == 0);
}
