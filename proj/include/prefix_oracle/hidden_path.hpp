#pragma once

#include <cmath>
#include <span>
#include <string>

#include "prefix_oracle/core.hpp"

namespace prefix_oracle {

/// Per-step on-path and off-path probabilities of the hidden-path rule.
struct PathSignal {
  double p_plus;
  double p_minus;
  double delta() const noexcept { return p_plus - p_minus; }

  static PathSignal from_lambda(double lambda, int K) {
    const double el = std::exp(lambda);
    return {el / (el + K - 1), 1.0 / (el + K - 1)};
  }
};

/// Next-token rule for a generator that favours the chain `path` at every
/// step: p_plus on path[t] when the prefix equals path[0..t), p_minus on the
/// other tokens, and uniform once the prefix has left the chain.
inline NextTokenDist hidden_path_rule(int K, const PathSignal& sig, std::span<const Token> path,
                                      std::span<const Token> p) {
  if (p.size() >= path.size() || !is_prefix_of(p, path)) return NextTokenDist::uniform(K);
  std::vector<double> probs(K, sig.p_minus);
  probs[path[p.size()] - 1] = sig.p_plus;
  return NextTokenDist(std::move(probs));
}

/// Hidden-path generator M_z: secret completion z with per-step signal lambda.
class HiddenPathModel {
 public:
  HiddenPathModel(VocabSpec vocab, double lambda, Completion z)
      : vocab_(vocab), lambda_(lambda), z_(std::move(z)), signal_(PathSignal::from_lambda(lambda, vocab.K)) {
    if (!(lambda_ >= 0.0) || !std::isfinite(lambda_))
      throw InvalidModel("hidden-path signal lambda must be finite and >= 0");
    check_completion(vocab_, z_);
  }

  const VocabSpec& vocab() const noexcept { return vocab_; }
  double lambda() const noexcept { return lambda_; }
  const Completion& z() const noexcept { return z_; }
  double p_plus() const noexcept { return signal_.p_plus; }
  double p_minus() const noexcept { return signal_.p_minus; }
  double delta() const noexcept { return signal_.delta(); }
  const PathSignal& signal() const noexcept { return signal_; }

  NextTokenDist next(const Prefix& p) const {
    check_query_prefix(vocab_, p);
    return hidden_path_rule(vocab_.K, signal_, z_, p);
  }

  /// Prefix z_{1:H-1}: the node where the twins z, z' diverge.
  Prefix tip() const { return Prefix(z_.begin(), z_.end() - 1); }

 private:
  VocabSpec vocab_;
  double lambda_;
  Completion z_;
  PathSignal signal_;
};

inline HiddenPathModel random_hidden_path(VocabSpec vocab, double lambda, RngStream& rng) {
  return HiddenPathModel(vocab, lambda, uniform_random_completion(vocab, rng));
}

/// Twin of `m` that shares z_{1:H-1} and differs at the last token.
inline HiddenPathModel hidden_path_twin(const HiddenPathModel& m, RngStream& rng) {
  Completion z = m.z();
  const int K = m.vocab().K;
  Token alt = rng.uniform_int(1, K - 1);
  if (alt >= z.back()) ++alt;
  z.back() = alt;
  return HiddenPathModel(m.vocab(), m.lambda(), std::move(z));
}

}  // namespace prefix_oracle
