#pragma once

// Test-only reference computations. These take routes independent of the
// library code they check: closed forms from the family definitions, plain
// index loops over K^H completions, and complements instead of first-entry
// sums.

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "prefix_oracle/prefix_oracle.hpp"

namespace reference {

using namespace prefix_oracle;

/// Hidden-path trajectory probability from the closed form: the rollout
/// follows z for j steps, then takes one p_minus step, then K^{-rest}.
inline double hidden_path_prob(int K, double lambda, const std::vector<Token>& z, const std::vector<Token>& y) {
  const double e = std::exp(lambda);
  const double pp = e / (e + K - 1);
  const double pm = 1.0 / (e + K - 1);
  const int H = static_cast<int>(z.size());
  int j = 0;
  while (j < H && y[j] == z[j]) ++j;
  if (j == H) return std::pow(pp, H);
  return std::pow(pp, j) * pm * std::pow(1.0 / K, H - j - 1);
}

/// All completions for (K, H), in index order.
inline std::vector<std::vector<Token>> all_completions(int K, int H) {
  std::vector<std::vector<Token>> out;
  std::uint64_t n = 1;
  for (int t = 0; t < H; ++t) n *= K;
  for (std::uint64_t idx = 0; idx < n; ++idx) {
    std::vector<Token> y(H);
    std::uint64_t r = idx;
    for (int t = H - 1; t >= 0; --t) {
      y[t] = static_cast<Token>(r % K) + 1;
      r /= K;
    }
    out.push_back(y);
  }
  return out;
}

/// Straight product of conditionals, no log space.
template <class G>
double product_prob(const G& model, const std::vector<Token>& y) {
  double p = 1.0;
  std::vector<Token> prefix;
  for (Token a : y) {
    p *= model.next(prefix)(a);
    prefix.push_back(a);
  }
  return p;
}

/// 1 - mass of completions whose prefixes all avoid U.
template <class G>
double reach_by_complement(const G& model, const std::set<std::vector<Token>>& U) {
  const auto vocab = model.vocab();
  double avoid = 0.0;
  for (const auto& y : all_completions(vocab.K, vocab.H)) {
    bool hit = false;
    for (int t = 0; t < vocab.H && !hit; ++t) hit = U.contains(std::vector<Token>(y.begin(), y.begin() + t));
    if (!hit) avoid += product_prob(model, y);
  }
  return 1.0 - avoid;
}

/// Random distribution over n outcomes with full support.
inline std::vector<double> random_simplex(std::size_t n, RngStream& rng) {
  std::vector<double> w(n);
  double s = 0.0;
  for (auto& x : w) {
    x = -std::log(1.0 - rng.uniform()) + 1e-9;
    s += x;
  }
  for (auto& x : w) x /= s;
  return w;
}

}  // namespace reference
