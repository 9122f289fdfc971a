#pragma once

// Prompt-conditioned post-training instance ("bridge" family).
//
// Two prompts: the hard prompt (mass eta) whose base generator follows the
// hidden-path rule along u = v.s for D+L steps and is uniform at the final
// step, and one easy prompt whose base generator is uniform everywhere. The
// outcome reward is R on the single completion z = v.s.tau_b at the hard prompt.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "prefix_oracle/core.hpp"
#include "prefix_oracle/hidden_path.hpp"

namespace prefix_oracle {

enum class Prompt { hard, easy };

inline const char* to_string(Prompt x) { return x == Prompt::hard ? "hard" : "easy"; }

/// Everything the learner is allowed to know about an instance.
struct BridgePublic {
  int K = 2;
  int D = 1;
  int L = 1;
  std::vector<Token> scaffold;  // v, length D
  Token tau0 = 1;
  Token tau1 = 2;
  double lambda = 1.0;
  double eta = 0.5;
  double beta = 1.0;
  /// Reward scale override; the default is beta * log(4 / q0).
  std::optional<double> reward_override;

  int H() const noexcept { return D + L + 1; }
  VocabSpec vocab() const { return VocabSpec(K, H()); }
  PathSignal signal() const { return PathSignal::from_lambda(lambda, K); }

  /// Base mass of the target completion: p_plus^(D+L) / K.
  double q0() const { return std::pow(signal().p_plus, D + L) / K; }
  double reward_scale() const { return reward_override ? *reward_override : beta * std::log(4.0 / q0()); }
  /// Number of candidate targets, 2 K^L.
  double N() const { return 2.0 * std::pow(static_cast<double>(K), L); }

  void validate() const {
    if (D < 1 || L < 1) throw InvalidModel("bridge instance needs D >= 1 and L >= 1");
    VocabSpec v(K, H());
    if (static_cast<int>(scaffold.size()) != D) throw InvalidModel("scaffold must have length D");
    check_tokens(v, scaffold);
    if (!v.valid_token(tau0) || !v.valid_token(tau1) || tau0 == tau1)
      throw InvalidModel("terminal tokens must be distinct tokens in 1..K");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidModel("lambda must be positive");
    if (!(eta > 0.0 && eta <= 1.0)) throw InvalidModel("eta must lie in (0, 1]");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidModel("beta must be positive");
  }
};

class BridgeInstance;

/// Base generator of an instance at one fixed prompt.
class BridgePromptGenerator {
 public:
  BridgePromptGenerator(const BridgeInstance& inst, Prompt prompt) : inst_(&inst), prompt_(prompt) {}
  const VocabSpec& vocab() const noexcept;
  NextTokenDist next(const Prefix& p) const;
  Prompt prompt() const noexcept { return prompt_; }

 private:
  const BridgeInstance* inst_;
  Prompt prompt_;
};

class BridgeInstance {
 public:
  BridgeInstance(BridgePublic pub, std::vector<Token> suffix, int bit)
      : pub_(std::move(pub)), suffix_(std::move(suffix)), bit_(bit) {
    pub_.validate();
    vocab_ = pub_.vocab();
    if (static_cast<int>(suffix_.size()) != pub_.L) throw InvalidModel("hidden suffix must have length L");
    check_tokens(vocab_, suffix_);
    if (bit_ != 0 && bit_ != 1) throw InvalidModel("reward bit must be 0 or 1");
    path_ = pub_.scaffold;
    path_.insert(path_.end(), suffix_.begin(), suffix_.end());
    signal_ = pub_.signal();
  }

  const BridgePublic& pub() const noexcept { return pub_; }
  const VocabSpec& vocab() const noexcept { return vocab_; }
  const std::vector<Token>& suffix() const noexcept { return suffix_; }
  int bit() const noexcept { return bit_; }
  /// u = v.s, the favoured chain at the hard prompt.
  const std::vector<Token>& hidden_chain() const noexcept { return path_; }
  const PathSignal& signal() const noexcept { return signal_; }

  Completion target() const {
    Completion z = path_;
    z.push_back(bit_ == 0 ? pub_.tau0 : pub_.tau1);
    return z;
  }

  double q0() const { return pub_.q0(); }
  double R() const { return pub_.reward_scale(); }
  double N() const { return pub_.N(); }

  NextTokenDist next(Prompt x, const Prefix& p) const {
    check_query_prefix(vocab_, p);
    if (x == Prompt::easy) return NextTokenDist::uniform(vocab_.K);
    return hidden_path_rule(vocab_.K, signal_, path_, p);
  }

  double reward(Prompt x, std::span<const Token> y) const {
    if (x != Prompt::hard) return 0.0;
    const Completion z = target();
    return std::equal(y.begin(), y.end(), z.begin(), z.end()) ? R() : 0.0;
  }

  BridgePromptGenerator generator(Prompt x) const { return BridgePromptGenerator(*this, x); }

 private:
  BridgePublic pub_;
  VocabSpec vocab_;
  std::vector<Token> suffix_;
  int bit_;
  std::vector<Token> path_;
  PathSignal signal_{};
};

inline const VocabSpec& BridgePromptGenerator::vocab() const noexcept { return inst_->vocab(); }
inline NextTokenDist BridgePromptGenerator::next(const Prefix& p) const { return inst_->next(prompt_, p); }

/// Random scaffold with tau0 = 1, tau1 = 2.
inline BridgePublic random_bridge_public(int K, int D, int L, double lambda, double eta, double beta,
                                         RngStream& rng) {
  BridgePublic pub;
  pub.K = K;
  pub.D = D;
  pub.L = L;
  pub.lambda = lambda;
  pub.eta = eta;
  pub.beta = beta;
  pub.scaffold.resize(D);
  for (auto& a : pub.scaffold) a = rng.uniform_int(1, K);
  pub.tau0 = 1;
  pub.tau1 = 2;
  pub.validate();
  return pub;
}

inline BridgeInstance random_bridge_instance(const BridgePublic& pub, RngStream& rng) {
  std::vector<Token> s(pub.L);
  for (auto& a : s) a = rng.uniform_int(1, pub.K);
  const int b = rng.coin() ? 1 : 0;
  return BridgeInstance(pub, std::move(s), b);
}

}  // namespace prefix_oracle
