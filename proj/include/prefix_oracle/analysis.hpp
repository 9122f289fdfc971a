#pragma once

// Exact, enumeration-based quantities: reachability, PathFull transcript
// laws and their total variation, KL divergences, the Gibbs optimizer of the
// KL-regularized objective, objective values and regret gaps, and the
// no-reset lower-bound certificate.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prefix_oracle/bridge.hpp"
#include "prefix_oracle/core.hpp"
#include "prefix_oracle/oracles.hpp"

namespace prefix_oracle {

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

class EnumerationCapExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline void check_enumeration_cap(const VocabSpec& vocab, std::uint64_t cap) {
  const std::uint64_t n = completion_count(vocab);
  if (n > cap)
    throw EnumerationCapExceeded("K^H = " + (n == UINT64_MAX ? std::string("overflow") : std::to_string(n)) +
                                 " completions exceeds the enumeration cap " + std::to_string(cap));
}

using PrefixSet = std::set<Prefix>;
using CompletionLaw = std::vector<double>;  // indexed by completion_index

namespace detail {

/// Depth-first walk over all completions with the visited distributions.
template <Generator G, class Visit>
void walk_completions(const G& model, Prefix& p, std::vector<NextTokenDist>& mus, double log_prob, Visit& visit) {
  const int H = model.vocab().H;
  if (static_cast<int>(p.size()) == H) {
    visit(p, mus, log_prob);
    return;
  }
  const NextTokenDist d = model.next(p);
  mus.push_back(d);
  for (Token a = 1; a <= d.K(); ++a) {
    const double pa = d(a);
    p.push_back(a);
    walk_completions(model, p, mus, pa > 0.0 ? log_prob + std::log(pa) : -INFINITY, visit);
    p.pop_back();
  }
  mus.pop_back();
}

}  // namespace detail

/// Exact law of Y over all K^H completions.
template <Generator G>
CompletionLaw completion_law(const G& model, std::uint64_t cap = kDefaultEnumerationCap) {
  const VocabSpec vocab = model.vocab();
  check_enumeration_cap(vocab, cap);
  CompletionLaw law(completion_count(vocab), 0.0);
  Prefix p;
  std::vector<NextTokenDist> mus;
  auto visit = [&](const Prefix& y, const std::vector<NextTokenDist>&, double lp) {
    law[completion_index(vocab, y)] = std::exp(lp);
  };
  detail::walk_completions(model, p, mus, 0.0, visit);
  return law;
}

inline void check_prefix_set(const VocabSpec& vocab, const PrefixSet& U) {
  for (const Prefix& p : U) check_query_prefix(vocab, p);
}

/// Probability that a rollout visits some prefix in U, by first entry:
/// the sum over p in U of the mass of reaching p with no earlier visit.
template <Generator G>
double reachability(const G& model, const PrefixSet& U) {
  const VocabSpec vocab = model.vocab();
  check_prefix_set(vocab, U);
  std::set<Prefix> ancestors;  // proper prefixes of U members
  for (const Prefix& u : U)
    for (std::size_t len = 0; len < u.size(); ++len) ancestors.emplace(u.begin(), u.begin() + len);

  std::function<double(Prefix&, double)> descend = [&](Prefix& p, double mass) -> double {
    if (U.contains(p)) return mass;
    if (!ancestors.contains(p)) return 0.0;
    const NextTokenDist d = model.next(p);
    double total = 0.0;
    for (Token a = 1; a <= vocab.K; ++a) {
      if (d(a) <= 0.0) continue;
      p.push_back(a);
      total += descend(p, mass * d(a));
      p.pop_back();
    }
    return total;
  };
  Prefix root;
  return descend(root, 1.0);
}

/// True when both models give identical next-token laws at every prefix of
/// length < H outside U (exhaustive).
template <Generator A, Generator B>
bool agree_outside(const A& a, const B& b, const PrefixSet& U, std::uint64_t cap = kDefaultEnumerationCap) {
  const VocabSpec vocab = a.vocab();
  if (!(vocab == b.vocab())) return false;
  check_enumeration_cap(vocab, cap);
  std::function<bool(Prefix&)> visit = [&](Prefix& p) -> bool {
    if (static_cast<int>(p.size()) >= vocab.H) return true;
    if (!U.contains(p) && !(a.next(p) == b.next(p))) return false;
    for (Token t = 1; t <= vocab.K; ++t) {
      p.push_back(t);
      const bool ok = visit(p);
      p.pop_back();
      if (!ok) return false;
    }
    return true;
  };
  Prefix root;
  return visit(root);
}

struct ReachabilityComparison {
  bool equal;
  double reach_a;
  double reach_b;
};

/// Both reachabilities of U for a pair that agrees outside U.
template <Generator A, Generator B>
ReachabilityComparison reachability_equal_outside_agreement(const A& a, const B& b, const PrefixSet& U,
                                                            double tol = 1e-12) {
  if (!agree_outside(a, b, U)) throw PreconditionViolation("models do not agree outside U");
  const double ra = reachability(a, U);
  const double rb = reachability(b, U);
  return {std::abs(ra - rb) <= tol, ra, rb};
}

// ---------------------------------------------------------------------------
// Transcript laws

struct TranscriptLaw {
  struct Entry {
    PathFullReply reply;
    double prob;
  };
  std::vector<Entry> entries;

  double total_mass() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.prob;
    return s;
  }
};

/// Exact distribution of one PathFull reply.
template <Generator G>
TranscriptLaw pathfull_law(const G& model, std::uint64_t cap = kDefaultEnumerationCap) {
  check_enumeration_cap(model.vocab(), cap);
  TranscriptLaw law;
  Prefix p;
  std::vector<NextTokenDist> mus;
  auto visit = [&](const Prefix& y, const std::vector<NextTokenDist>& ms, double lp) {
    const double prob = std::exp(lp);
    if (prob > 0.0) law.entries.push_back({PathFullReply{y, ms}, prob});
  };
  detail::walk_completions(model, p, mus, 0.0, visit);
  return law;
}

/// Canonical key of a reply: the trajectory followed by every mu quantized
/// at 1e-12, so replies that coincide across two models merge.
inline std::vector<std::int64_t> canonical_key(const PathFullReply& r) {
  std::vector<std::int64_t> key(r.y.begin(), r.y.end());
  for (const auto& mu : r.mus)
    for (double x : mu.probs()) key.push_back(std::llround(x * 1e12));
  return key;
}

inline double tv_distance(const TranscriptLaw& a, const TranscriptLaw& b) {
  std::map<std::vector<std::int64_t>, std::pair<double, double>> merged;
  for (const auto& e : a.entries) merged[canonical_key(e.reply)].first += e.prob;
  for (const auto& e : b.entries) merged[canonical_key(e.reply)].second += e.prob;
  double s = 0.0;
  for (const auto& [key, pq] : merged) s += std::abs(pq.first - pq.second);
  return 0.5 * s;
}

inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

// ---------------------------------------------------------------------------
// Divergences

/// KL(P || Q) in nats; +inf when P puts mass where Q has none.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    s += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(s, 0.0);
}

/// Bernoulli KL: kl(m || q).
inline double binary_kl(double m, double q) {
  auto term = [](double a, double b) {
    if (a <= 0.0) return 0.0;
    if (b <= 0.0) return std::numeric_limits<double>::infinity();
    return a * std::log(a / b);
  };
  return term(m, q) + term(1.0 - m, 1.0 - q);
}

// ---------------------------------------------------------------------------
// Policies and the KL-regularized objective

/// Prompt-conditioned policy over completions. An empty law means the
/// policy delegates to the base generator at that prompt.
struct PromptPolicy {
  std::optional<CompletionLaw> hard;
  std::optional<CompletionLaw> easy;

  static PromptPolicy base() { return {}; }
};

/// Exact maximizer of J_beta: proportional to Q(y) exp(r(y) / beta) at the
/// hard prompt, equal to the base generator at the easy prompt.
class GibbsPolicy {
 public:
  explicit GibbsPolicy(BridgeInstance inst) : inst_(std::move(inst)) {
    const double q0 = inst_.q0();
    Z_ = 1.0 - q0 + q0 * std::exp(inst_.R() / inst_.pub().beta);
  }

  const BridgeInstance& instance() const noexcept { return inst_; }
  double Z() const noexcept { return Z_; }
  double target_mass() const { return inst_.q0() * std::exp(inst_.R() / inst_.pub().beta) / Z_; }

  double prob(Prompt x, std::span<const Token> y) const {
    const double base = trajectory_prob(inst_.generator(x), y);
    if (x == Prompt::easy) return base;
    return base * std::exp(inst_.reward(x, y) / inst_.pub().beta) / Z_;
  }

  CompletionLaw hard_law(std::uint64_t cap = kDefaultEnumerationCap) const {
    CompletionLaw law = completion_law(inst_.generator(Prompt::hard), cap);
    const std::uint64_t target = completion_index(inst_.vocab(), inst_.target());
    law[target] *= std::exp(inst_.R() / inst_.pub().beta);
    for (double& x : law) x /= Z_;
    return law;
  }

  PromptPolicy as_prompt_policy(std::uint64_t cap = kDefaultEnumerationCap) const {
    return PromptPolicy{hard_law(cap), std::nullopt};
  }

 private:
  BridgeInstance inst_;
  double Z_;
};

inline GibbsPolicy gibbs_policy(const BridgeInstance& inst) { return GibbsPolicy(inst); }

/// E_pi r - beta KL(pi || Q) at the hard prompt.
inline double hard_prompt_objective(const BridgeInstance& inst, std::span<const double> pi,
                                    std::uint64_t cap = kDefaultEnumerationCap) {
  const CompletionLaw base = completion_law(inst.generator(Prompt::hard), cap);
  if (pi.size() != base.size()) throw std::invalid_argument("policy law has the wrong size");
  const double kl = kl_divergence(pi, base);
  if (std::isinf(kl)) return -std::numeric_limits<double>::infinity();
  const double mass = pi[completion_index(inst.vocab(), inst.target())];
  return mass * inst.R() - inst.pub().beta * kl;
}

/// eta-weighted objective over the two-point prompt space. -inf flags a
/// policy whose support leaves the base support.
inline double evaluate_objective(const BridgeInstance& inst, const PromptPolicy& policy,
                                 std::uint64_t cap = kDefaultEnumerationCap) {
  const double eta = inst.pub().eta;
  const double hard = policy.hard ? hard_prompt_objective(inst, *policy.hard, cap)
                                  : inst.q0() * inst.R();  // base policy: KL term vanishes
  double easy = 0.0;
  if (policy.easy) {
    const CompletionLaw base = completion_law(inst.generator(Prompt::easy), cap);
    if (policy.easy->size() != base.size()) throw std::invalid_argument("policy law has the wrong size");
    easy = -inst.pub().beta * kl_divergence(*policy.easy, base);
  }
  if (std::isinf(hard) || std::isinf(easy)) return -std::numeric_limits<double>::infinity();
  return eta * hard + (1.0 - eta) * easy;
}

struct RegretGap {
  double target_mass;
  double gap;
  bool threshold_violated;  // mass <= 1/4 while gap <= eta beta / 4
};

inline RegretGap regret_gap_check(const BridgeInstance& inst, const PromptPolicy& policy,
                                  std::uint64_t cap = kDefaultEnumerationCap) {
  const double optimum = evaluate_objective(inst, gibbs_policy(inst).as_prompt_policy(cap), cap);
  const double value = evaluate_objective(inst, policy, cap);
  const double mass = policy.hard ? (*policy.hard)[completion_index(inst.vocab(), inst.target())] : inst.q0();
  const double gap = optimum - value;
  const double bar = inst.pub().eta * inst.pub().beta / 4.0;
  return {mass, gap, mass <= 0.25 && gap <= bar};
}

/// q_g p_plus^D + q_r / N + 4 / (N - q_r): ceiling on the success probability
/// of any algorithm with q_g no-reset generator and q_r reward queries.
inline double lower_bound_certificate(const BridgePublic& pub, double q_g, double q_r) {
  const double N = pub.N();
  if (q_g < 0 || q_r < 0) throw std::invalid_argument("query budgets must be nonnegative");
  if (q_r >= N) throw std::invalid_argument("certificate needs q_r < N = " + std::to_string(N));
  return q_g * std::pow(pub.signal().p_plus, pub.D) + q_r / N + 4.0 / (N - q_r);
}

}  // namespace prefix_oracle
