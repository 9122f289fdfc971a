#pragma once

// Recovery and post-training procedures. Each consumes one oracle interface
// of an OracleSession and leaves its queries in the session ledger, so the
// trail can be audited afterwards.

#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "prefix_oracle/analysis.hpp"
#include "prefix_oracle/bridge.hpp"
#include "prefix_oracle/core.hpp"
#include "prefix_oracle/hidden_path.hpp"
#include "prefix_oracle/leader_trie.hpp"
#include "prefix_oracle/oracles.hpp"

namespace prefix_oracle {

template <class T>
struct RecoveryResult {
  std::optional<T> recovered;  // nullopt is the failure marker
  std::size_t queries_used = 0;
  std::vector<Prefix> trail;
};

struct HiddenPathRecovery : RecoveryResult<Completion> {
  std::size_t samples_per_stage = 0;
};

struct TrieRecovery : RecoveryResult<LeaderTrie> {
  BranchMap estimate;             // hidden child chosen at every expanded node
  std::vector<Prefix> unexpanded; // popped prefixes whose test set was not a singleton
  bool budget_exhausted = false;  // queue still nonempty when the budget ran out
  std::size_t samples_per_node = 0;
};

inline void check_confidence(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("confidence parameter delta must lie in (0, 1)");
}

/// ceil((2 / Delta^2) log(stages (K-1) / delta)): samples per stage for the
/// majority walk to identify `stages` tokens with probability >= 1 - delta.
inline std::size_t hidden_path_sample_size(int stages, int K, double Delta, double delta) {
  check_confidence(delta);
  if (stages < 1) throw std::invalid_argument("need at least one stage");
  if (!(Delta > 0.0)) throw std::invalid_argument("signal gap Delta must be positive");
  const double m = std::ceil(2.0 / (Delta * Delta) * std::log(stages * (K - 1.0) / delta));
  return static_cast<std::size_t>(std::max(m, 1.0));
}

/// ceil((1 / (2 Gamma_lead^2)) log(2 (K-1) S / delta)).
inline std::size_t leader_trie_sample_size(int K, std::size_t S, double delta) {
  check_confidence(delta);
  if (S < 1) throw std::invalid_argument("node budget S must be >= 1");
  const double G = LeaderTrieParams::for_vocab(K).Gamma_lead;
  const double m = std::ceil(1.0 / (2.0 * G * G) * std::log(2.0 * (K - 1.0) * static_cast<double>(S) / delta));
  return static_cast<std::size_t>(std::max(m, 1.0));
}

namespace detail {

template <class Session>
std::vector<Prefix> trail_since(const Session& s, std::size_t start) {
  const auto& t = s.ledger().trail();
  return {t.begin() + static_cast<std::ptrdiff_t>(start), t.end()};
}

/// Extends `start` one token at a time, taking the empirical majority of m
/// samples per stage; ties go to the smallest token.
template <class Session>
std::vector<Token> majority_walk(Session& session, Prefix start, int stages, std::size_t m, RngStream& rng) {
  const int K = session.vocab().K;
  std::vector<Token> found;
  std::vector<std::size_t> counts(K);
  for (int t = 0; t < stages; ++t) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t j = 0; j < m; ++j) ++counts[session.prefix_sample(start, rng) - 1];
    const Token best = static_cast<Token>(std::max_element(counts.begin(), counts.end()) - counts.begin()) + 1;
    found.push_back(best);
    start.push_back(best);
  }
  return found;
}

}  // namespace detail

struct HiddenPathRecoveryParams {
  int H;
  int K;
  double lambda;  // known signal strength
  double delta;
};

/// Chosen-prefix majority recovery of a hidden path: H stages of m samples.
template <Generator G>
HiddenPathRecovery recover_hidden_path(OracleSession<G>& session, const HiddenPathRecoveryParams& params,
                                       RngStream& rng) {
  check_confidence(params.delta);
  if (!(session.vocab() == VocabSpec(params.K, params.H)))
    throw std::invalid_argument("recover_hidden_path: session vocabulary does not match (K, H)");
  const double Delta = PathSignal::from_lambda(params.lambda, params.K).delta();
  const std::size_t m = hidden_path_sample_size(params.H, params.K, Delta, params.delta);

  const std::size_t q0 = session.ledger().total();
  const std::size_t t0 = session.ledger().trail().size();
  HiddenPathRecovery out;
  out.samples_per_stage = m;
  out.recovered = detail::majority_walk(session, Prefix{}, params.H, m, rng);
  out.queries_used = session.ledger().total() - q0;
  out.trail = detail::trail_since(session, t0);
  return out;
}

namespace detail {

/// Shared breadth-first skeleton of the two trie recoveries. `test` returns
/// the candidate set for a popped prefix and may issue queries.
template <class Session, class Test>
TrieRecovery breadth_first_trie(Session& session, std::size_t budget, Test&& test) {
  const VocabSpec vocab = session.vocab();
  const std::size_t q0 = session.ledger().total();
  const std::size_t t0 = session.ledger().trail().size();
  TrieRecovery out;
  std::deque<Prefix> queue{Prefix{}};
  std::size_t processed = 0;
  while (!queue.empty() && processed < budget) {
    Prefix p = std::move(queue.front());
    queue.pop_front();
    ++processed;
    const std::vector<Token> candidates = test(p);
    if (candidates.size() != 1) {
      out.unexpanded.push_back(p);
      continue;
    }
    const Token b = candidates.front();
    out.estimate.emplace(p, b);
    if (static_cast<int>(p.size()) + 1 < vocab.H) {
      queue.push_back(extend(p, 1));
      queue.push_back(extend(p, b));
    }
  }
  out.budget_exhausted = !queue.empty();
  if (!out.budget_exhausted) {
    try {
      out.recovered = LeaderTrie(vocab, out.estimate);
    } catch (const InvalidModel&) {
      out.recovered.reset();
    }
  }
  out.queries_used = session.ledger().total() - q0;
  out.trail = trail_since(session, t0);
  return out;
}

}  // namespace detail

/// Breadth-first recovery from chosen-prefix logits: a node is internal with
/// hidden child b exactly when b is the only nonleader whose logit clears
/// log gamma0 + gamma_lead.
template <Generator G>
TrieRecovery recover_leader_trie_logit(OracleSession<G>& session, RngStream& rng) {
  const int K = session.vocab().K;
  if (K < 3) throw std::invalid_argument("leader-trie recovery requires K >= 3");
  const double threshold = LeaderTrieParams::for_vocab(K).logit_threshold();
  return detail::breadth_first_trie(session, SIZE_MAX, [&](const Prefix& p) {
    const std::vector<double> logits = session.prefix_logit(p, rng);
    std::vector<Token> above;
    for (Token a = 2; a <= K; ++a)
      if (logits[a - 1] > threshold) above.push_back(a);
    return above;
  });
}

/// Sample-based variant: m chosen-prefix samples per popped node, empirical
/// test P(a) > gamma0 + Gamma_lead, at most S nodes processed. Failure
/// (nullopt with budget_exhausted) when the queue is nonempty at the end.
template <Generator G>
TrieRecovery recover_leader_trie_sample(OracleSession<G>& session, std::size_t S, double delta, RngStream& rng) {
  const int K = session.vocab().K;
  if (K < 3) throw std::invalid_argument("leader-trie recovery requires K >= 3");
  const std::size_t m = leader_trie_sample_size(K, S, delta);
  const double threshold = LeaderTrieParams::for_vocab(K).frequency_threshold();
  std::vector<std::size_t> counts(K);
  TrieRecovery out = detail::breadth_first_trie(session, S, [&](const Prefix& p) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t j = 0; j < m; ++j) ++counts[session.prefix_sample(p, rng) - 1];
    std::vector<Token> above;
    for (Token a = 2; a <= K; ++a)
      if (static_cast<double>(counts[a - 1]) / static_cast<double>(m) > threshold) above.push_back(a);
    return above;
  });
  out.samples_per_node = m;
  return out;
}

/// Padding rule for score-based recovery: the suffix appended after the
/// candidate token at stage t (1-based), of length H - t.
using SuffixRule = std::function<std::vector<Token>(int t, const Prefix& chosen, Token candidate)>;

inline SuffixRule all_ones_suffix(int H) {
  return [H](int t, const Prefix&, Token) { return std::vector<Token>(H - t, 1); };
}

/// Exact-score recovery of a hidden path: at stage t score the K completions
/// z_{<t}.a.s(t) and keep the best a. Exactly H*K queries.
template <Generator G>
HiddenPathRecovery recover_hidden_path_seqscore(OracleSession<G>& session, RngStream& rng,
                                                SuffixRule suffix = {}) {
  const auto& noise = session.options().score_noise;
  if (noise.mode != NoiseMode::none && noise.xi > 0.0)
    throw std::invalid_argument("score-based recovery requires exact scores (xi = 0)");
  const VocabSpec vocab = session.vocab();
  if (!suffix) suffix = all_ones_suffix(vocab.H);
  const std::size_t q0 = session.ledger().total();
  Prefix chosen;
  for (int t = 1; t <= vocab.H; ++t) {
    Token best = 1;
    double best_score = -INFINITY;
    for (Token a = 1; a <= vocab.K; ++a) {
      Completion y = extend(chosen, a);
      const std::vector<Token> pad = suffix(t, chosen, a);
      if (static_cast<int>(pad.size()) != vocab.H - t) throw std::invalid_argument("suffix rule returned wrong length");
      y.insert(y.end(), pad.begin(), pad.end());
      const double s = session.seqscore(y, rng);
      if (s > best_score) {
        best_score = s;
        best = a;
      }
    }
    chosen.push_back(best);
  }
  HiddenPathRecovery out;
  out.recovered = chosen;
  out.queries_used = session.ledger().total() - q0;
  return out;
}

// ---------------------------------------------------------------------------
// Post-training with one outcome-reward query

/// Outcome-reward access: choose a prompt and a policy, observe the reward of
/// one completion drawn from it. Noiseless.
class RewardOracle {
 public:
  explicit RewardOracle(const BridgeInstance& inst) : inst_(&inst) {}

  template <class Sampler>
  double query(Prompt x, Sampler&& draw, RngStream& rng) {
    ++count_;
    const Completion y = draw(rng);
    check_completion(inst_->vocab(), y);
    return inst_->reward(x, y);
  }

  double query_point_mass(Prompt x, const Completion& y) {
    RngStream unused(0);
    return query(x, [&](RngStream&) { return y; }, unused);
  }

  std::size_t count() const noexcept { return count_; }

 private:
  const BridgeInstance* inst_;
  std::size_t count_ = 0;
};

struct BridgeOutput {
  std::vector<Token> suffix;
  int bit = 0;
  GibbsPolicy policy;
  std::size_t generator_queries = 0;
  std::size_t reward_queries = 0;
  std::size_t samples_per_stage = 0;
  std::vector<Prefix> trail;
};

/// Walks the known scaffold (D+1 queries), recovers the hidden suffix with
/// the majority walk (L stages, m = ceil((2/Delta^2) log(L(K-1)/delta))), then
/// spends one reward query on v.s.tau0 to read the bit.
template <Generator G>
BridgeOutput bridge_posttrain(const BridgePublic& pub, OracleSession<G>& gen_session, RewardOracle& reward,
                              double delta, RngStream& rng) {
  check_confidence(delta);
  pub.validate();
  if (!(gen_session.vocab() == pub.vocab())) throw std::invalid_argument("bridge_posttrain: vocabulary mismatch");
  const std::size_t q0 = gen_session.ledger().total();
  const std::size_t t0 = gen_session.ledger().trail().size();
  const std::size_t r0 = reward.count();

  Prefix p;
  gen_session.prefix_sample(p, rng);
  for (Token a : pub.scaffold) {
    p.push_back(a);
    gen_session.prefix_sample(p, rng);
  }

  const double Delta = pub.signal().delta();
  const std::size_t m = hidden_path_sample_size(pub.L, pub.K, Delta, delta);
  std::vector<Token> s_hat = detail::majority_walk(gen_session, pub.scaffold, pub.L, m, rng);

  Completion probe = pub.scaffold;
  probe.insert(probe.end(), s_hat.begin(), s_hat.end());
  probe.push_back(pub.tau0);
  const int b_hat = reward.query_point_mass(Prompt::hard, probe) > 0.0 ? 0 : 1;

  BridgeOutput out{s_hat, b_hat, GibbsPolicy(BridgeInstance(pub, s_hat, b_hat)), 0, 0, m, {}};
  out.generator_queries = gen_session.ledger().total() - q0;
  out.reward_queries = reward.count() - r0;
  out.trail = detail::trail_since(gen_session, t0);
  return out;
}

// ---------------------------------------------------------------------------
// Distinguishers

/// 0 guesses the first candidate, 1 the second.
using Guess = int;

inline void check_twins(const HiddenPathModel& a, const HiddenPathModel& b) {
  if (!(a.vocab() == b.vocab()) || a.lambda() != b.lambda())
    throw std::invalid_argument("twin models must share K, H and lambda");
  if (a.tip() != b.tip() || a.z().back() == b.z().back())
    throw std::invalid_argument("twin models must agree on z_{1:H-1} and differ at z_H");
}

/// No-reset tester for hidden-path twins: up to q PathFull rollouts; if one
/// visits the shared tip z_{1:H-1}, the reported distribution there decides,
/// otherwise a fair coin. Stops at the first informative rollout.
template <Generator G>
Guess distinguish_no_reset_baseline(const HiddenPathModel& a, const HiddenPathModel& b, OracleSession<G>& truth,
                                    std::size_t q, RngStream& rng) {
  check_twins(a, b);
  const Prefix tip = a.tip();
  const NextTokenDist at_a = a.next(tip);
  const NextTokenDist at_b = b.next(tip);
  const std::size_t H = static_cast<std::size_t>(a.vocab().H);
  for (std::size_t i = 0; i < q; ++i) {
    const PathFullReply r = truth.pathfull(rng);
    if (!std::equal(tip.begin(), tip.end(), r.y.begin())) continue;
    const NextTokenDist& mu = r.mus[H - 1];
    if (mu == at_a) return 0;
    if (mu == at_b) return 1;
  }
  return rng.coin() ? 1 : 0;
}

/// PrefixTop tester for two leader tries: queries the first candidate's
/// internal nodes breadth first and keeps the candidates whose own PrefixTop
/// replies match; a fair coin when both remain.
template <Generator G>
Guess distinguish_tries_prefix_top(const LeaderTrieModel& a, const LeaderTrieModel& b, OracleSession<G>& truth,
                                   RngStream& rng) {
  bool fits_a = true, fits_b = true;
  for (const Prefix& p : [&] {
         std::vector<Prefix> order;
         std::deque<Prefix> queue{Prefix{}};
         while (!queue.empty()) {
           Prefix p = std::move(queue.front());
           queue.pop_front();
           const Token c = a.trie().hidden_child(p);
           if (c != 0 && static_cast<int>(p.size()) + 1 < a.vocab().H) {
             queue.push_back(extend(p, 1));
             queue.push_back(extend(p, c));
           }
           order.push_back(std::move(p));
         }
         return order;
       }()) {
    const TopReply r = truth.prefix_top(p);
    fits_a = fits_a && r == unique_top(a.next(p));
    fits_b = fits_b && r == unique_top(b.next(p));
  }
  if (fits_a && !fits_b) return 0;
  if (fits_b && !fits_a) return 1;
  return rng.coin() ? 1 : 0;
}

}  // namespace prefix_oracle
