#pragma once

// Access-model layer.
//
// An OracleSession wraps one generator at a fixed prompt and answers queries
// under the interfaces below, recording every query in a QueryLedger.
//
//   no-reset   : PathFull, OutputOnly, OutputWithLogprobs, OutputWithTopK(k)
//                (each is one fresh root-start rollout; the three weaker
//                replies are computed from the PathFull reply)
//   local-reset: PrefixSample, PrefixTop, PrefixLogit(xi)
//   scoring    : SeqScore(xi)
//
// Prefix-addressed queries append to the discipline trail. A session is
// single-owner mutable state; share the model, not the session.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prefix_oracle/core.hpp"
#include "prefix_oracle/leader_trie.hpp"

namespace prefix_oracle {

enum class OracleKind {
  PathFull,
  OutputOnly,
  OutputWithLogprobs,
  OutputWithTopK,
  PrefixSample,
  PrefixTop,
  PrefixLogit,
  SeqScore,
};

inline constexpr std::size_t kOracleKindCount = 8;

inline const char* to_string(OracleKind k) {
  switch (k) {
    case OracleKind::PathFull: return "PathFull";
    case OracleKind::OutputOnly: return "OutputOnly";
    case OracleKind::OutputWithLogprobs: return "OutputWithLogprobs";
    case OracleKind::OutputWithTopK: return "OutputWithTopK";
    case OracleKind::PrefixSample: return "PrefixSample";
    case OracleKind::PrefixTop: return "PrefixTop";
    case OracleKind::PrefixLogit: return "PrefixLogit";
    case OracleKind::SeqScore: return "SeqScore";
  }
  return "?";
}

inline bool is_prefix_addressed(OracleKind k) {
  return k == OracleKind::PrefixSample || k == OracleKind::PrefixTop || k == OracleKind::PrefixLogit;
}

inline bool is_no_reset(OracleKind k) {
  return k == OracleKind::PathFull || k == OracleKind::OutputOnly || k == OracleKind::OutputWithLogprobs ||
         k == OracleKind::OutputWithTopK;
}

/// Marker used for log(0) in logit replies.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Replies

struct PathFullReply {
  Completion y;
  std::vector<NextTokenDist> mus;  // mus[t] = M(. | y_{<t+1}), t = 0..H-1

  friend bool operator==(const PathFullReply&, const PathFullReply&) = default;
};

struct LogprobReply {
  Completion y;
  std::vector<double> logprobs;
  friend bool operator==(const LogprobReply&, const LogprobReply&) = default;
};

struct TopKEntry {
  Token token;
  double logprob;
  friend bool operator==(const TopKEntry&, const TopKEntry&) = default;
};

struct TopKReply {
  Completion y;
  std::vector<double> logprobs;
  std::vector<std::vector<TopKEntry>> top;  // per position, k entries
  friend bool operator==(const TopKReply&, const TopKReply&) = default;
};

/// A token, or nullopt for the tie symbol.
using TopReply = std::optional<Token>;

// Post-processing of a PathFull reply into the weaker no-reset replies.

inline Completion to_output_only(const PathFullReply& r) { return r.y; }

inline LogprobReply to_output_with_logprobs(const PathFullReply& r) {
  LogprobReply out{r.y, {}};
  out.logprobs.reserve(r.y.size());
  for (std::size_t t = 0; t < r.y.size(); ++t) {
    const double p = r.mus[t](r.y[t]);
    out.logprobs.push_back(p > 0.0 ? std::log(p) : kLogZero);
  }
  return out;
}

inline TopKReply to_output_with_topk(const PathFullReply& r, int k) {
  TopKReply out{r.y, to_output_with_logprobs(r).logprobs, {}};
  for (const NextTokenDist& mu : r.mus) {
    std::vector<Token> order(mu.K());
    for (int i = 0; i < mu.K(); ++i) order[i] = i + 1;
    std::stable_sort(order.begin(), order.end(), [&](Token a, Token b) { return mu(a) > mu(b); });
    std::vector<TopKEntry> row;
    for (int i = 0; i < k; ++i) {
      const double p = mu(order[i]);
      row.push_back({order[i], p > 0.0 ? std::log(p) : kLogZero});
    }
    out.top.push_back(std::move(row));
  }
  return out;
}

/// Unique argmax with tolerance `tie_tol` relative to the max, else nullopt.
inline TopReply unique_top(const NextTokenDist& d, double tie_tol = 1e-12) {
  const Token best = d.argmax();
  const double max = d(best);
  for (int a = 1; a <= d.K(); ++a) {
    if (a != best && d(a) >= max - tie_tol * max) return std::nullopt;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Noise

enum class NoiseMode { none, random, adversarial_threshold };

inline const char* to_string(NoiseMode m) {
  switch (m) {
    case NoiseMode::none: return "none";
    case NoiseMode::random: return "random";
    case NoiseMode::adversarial_threshold: return "adversarial";
  }
  return "?";
}

inline NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "none") return NoiseMode::none;
  if (s == "random") return NoiseMode::random;
  if (s == "adversarial" || s == "adversarial-threshold") return NoiseMode::adversarial_threshold;
  throw std::invalid_argument("unknown noise mode '" + s + "'");
}

struct NoiseConfig {
  double xi = 0.0;
  NoiseMode mode = NoiseMode::none;
  /// Coordinate every adversarial logit is pushed toward.
  double threshold = 0.0;

  static NoiseConfig exact() { return {}; }
  static NoiseConfig random(double xi) { return {xi, NoiseMode::random, 0.0}; }
  static NoiseConfig adversarial(double xi, double threshold) {
    return {xi, NoiseMode::adversarial_threshold, threshold};
  }
  /// Adversarial noise aimed at the leader-trie logit test.
  static NoiseConfig adversarial_for_leader_trie(int K, double xi) {
    return adversarial(xi, LeaderTrieParams::for_vocab(K).logit_threshold());
  }

  void validate() const {
    if (!(xi >= 0.0) || !std::isfinite(xi)) throw std::invalid_argument("noise level xi must be finite and >= 0");
  }
};

// ---------------------------------------------------------------------------
// Ledger and discipline audit

struct LedgerEntry {
  std::size_t index;  // 1-based
  OracleKind kind;
  std::string key;    // prefix or completion, "-" for no-reset queries
  std::string reply;  // short summary
};

class QueryLedger {
 public:
  void record(OracleKind kind, std::string key, std::string reply) {
    ++counts_[static_cast<std::size_t>(kind)];
    entries_.push_back({entries_.size() + 1, kind, std::move(key), std::move(reply)});
  }
  void record_prefix(OracleKind kind, const Prefix& p, std::string reply) {
    trail_.push_back(p);
    record(kind, format_tokens(p), std::move(reply));
  }
  void record_completion(const Completion& y, std::string reply) {
    completions_.push_back(y);
    record(OracleKind::SeqScore, format_tokens(y), std::move(reply));
  }

  std::size_t count(OracleKind k) const noexcept { return counts_[static_cast<std::size_t>(k)]; }
  std::size_t total() const noexcept { return entries_.size(); }
  /// Queries answered by a fresh rollout, whatever the reply richness.
  std::size_t rollouts() const noexcept {
    std::size_t n = 0;
    for (auto k : {OracleKind::PathFull, OracleKind::OutputOnly, OracleKind::OutputWithLogprobs,
                   OracleKind::OutputWithTopK})
      n += count(k);
    return n;
  }

  const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }
  const std::vector<Prefix>& trail() const noexcept { return trail_; }
  const std::vector<Completion>& completions() const noexcept { return completions_; }

  /// CSV: query_index,kind,prefix_or_completion,reply_summary
  void write_csv(std::ostream& out) const {
    out << "query_index,kind,prefix_or_completion,reply_summary\n";
    for (const auto& e : entries_) out << e.index << ',' << to_string(e.kind) << ',' << e.key << ',' << e.reply << '\n';
  }

 private:
  std::array<std::size_t, kOracleKindCount> counts_{};
  std::vector<LedgerEntry> entries_;
  std::vector<Prefix> trail_;
  std::vector<Completion> completions_;
};

struct DisciplineAudit {
  bool ok = true;
  std::optional<std::size_t> offending_index;  // 1-based position in the trail
};

/// ok iff trail[0] is the root and every later prefix was queried before or
/// extends a previously queried prefix by one token.
inline DisciplineAudit audit_discipline(const std::vector<Prefix>& trail) {
  std::set<Prefix> seen;
  for (std::size_t i = 0; i < trail.size(); ++i) {
    const Prefix& p = trail[i];
    bool legal;
    if (i == 0) {
      legal = p.empty();
    } else {
      legal = seen.contains(p) || (!p.empty() && seen.contains(Prefix(p.begin(), p.end() - 1)));
    }
    if (!legal) return {false, i + 1};
    seen.insert(p);
  }
  return {};
}

inline DisciplineAudit audit_discipline(const QueryLedger& ledger) { return audit_discipline(ledger.trail()); }

class DisciplineViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// ---------------------------------------------------------------------------
// Session

template <Generator G>
class OracleSession {
 public:
  struct Options {
    NoiseConfig logit_noise{};
    NoiseConfig score_noise{};
    bool strict_discipline = false;
    double tie_tolerance = 1e-12;
  };

  explicit OracleSession(const G& model) : OracleSession(model, Options{}) {}
  OracleSession(const G& model, Options opts) : model_(&model), vocab_(model.vocab()), opts_(opts) {
    opts_.logit_noise.validate();
    opts_.score_noise.validate();
  }

  const G& model() const noexcept { return *model_; }
  const VocabSpec& vocab() const noexcept { return vocab_; }
  const QueryLedger& ledger() const noexcept { return ledger_; }
  const Options& options() const noexcept { return opts_; }
  /// The rollout behind the most recent no-reset query.
  const std::optional<PathFullReply>& last_rollout() const noexcept { return last_rollout_; }

  // -- no-reset ------------------------------------------------------------

  PathFullReply pathfull(RngStream& rng) {
    PathFullReply r = rollout(rng);
    ledger_.record(OracleKind::PathFull, "-", format_tokens(r.y));
    return r;
  }

  Completion output_only(RngStream& rng) {
    Completion y = to_output_only(rollout(rng));
    ledger_.record(OracleKind::OutputOnly, "-", format_tokens(y));
    return y;
  }

  LogprobReply output_with_logprobs(RngStream& rng) {
    LogprobReply r = to_output_with_logprobs(rollout(rng));
    ledger_.record(OracleKind::OutputWithLogprobs, "-", format_tokens(r.y));
    return r;
  }

  TopKReply output_with_topk(int k, RngStream& rng) {
    if (k < 1 || k > vocab().K) throw std::invalid_argument("top-k needs 1 <= k <= K");
    TopKReply r = to_output_with_topk(rollout(rng), k);
    ledger_.record(OracleKind::OutputWithTopK, "-", format_tokens(r.y));
    return r;
  }

  /// Any other no-reset interface: a (possibly randomized) function of one
  /// rollout. Counted as a PathFull draw.
  template <class PostProcess>
  auto no_reset(RngStream& rng, PostProcess&& post) {
    PathFullReply r = rollout(rng);
    ledger_.record(OracleKind::PathFull, "-", format_tokens(r.y));
    return std::forward<PostProcess>(post)(std::as_const(r), rng);
  }

  // -- local reset ---------------------------------------------------------

  Token prefix_sample(const Prefix& p, RngStream& rng) {
    admit(p);
    const Token a = sample_token(model_->next(p), rng);
    ledger_.record_prefix(OracleKind::PrefixSample, p, std::to_string(a));
    return a;
  }

  TopReply prefix_top(const Prefix& p) {
    admit(p);
    const TopReply r = unique_top(model_->next(p), opts_.tie_tolerance);
    ledger_.record_prefix(OracleKind::PrefixTop, p, r ? std::to_string(*r) : "bot");
    return r;
  }

  std::vector<double> prefix_logit(const Prefix& p, RngStream& rng) {
    admit(p);
    const NextTokenDist d = model_->next(p);
    std::vector<double> out(d.K());
    for (int i = 0; i < d.K(); ++i) {
      const double pr = d.probs()[i];
      out[i] = pr > 0.0 ? perturb(std::log(pr), opts_.logit_noise, rng) : kLogZero;
    }
    ledger_.record_prefix(OracleKind::PrefixLogit, p, summarize(out));
    return out;
  }

  // -- scoring -------------------------------------------------------------

  double seqscore(const Completion& y, RngStream& rng) {
    check_completion(vocab(), y);
    const double exact = trajectory_log_prob(*model_, y);
    const double s = std::isfinite(exact) ? perturb(exact, opts_.score_noise, rng) : exact;
    ledger_.record_completion(y, summarize(std::vector<double>{s}));
    return s;
  }

 private:
  PathFullReply rollout(RngStream& rng) {
    PathFullReply r;
    r.y.reserve(vocab().H);
    r.mus.reserve(vocab().H);
    for (int t = 0; t < vocab().H; ++t) {
      r.mus.push_back(model_->next(r.y));
      r.y.push_back(sample_token(r.mus.back(), rng));
    }
    last_rollout_ = r;
    return r;
  }

  void admit(const Prefix& p) {
    check_query_prefix(vocab(), p);
    if (!opts_.strict_discipline) return;
    std::vector<Prefix> trail = ledger_.trail();
    trail.push_back(p);
    if (!audit_discipline(trail).ok)
      throw DisciplineViolation("prefix " + format_tokens(p) + " violates the local-reset discipline at query " +
                                std::to_string(trail.size()));
  }

  static double perturb(double exact, const NoiseConfig& noise, RngStream& rng) {
    switch (noise.mode) {
      case NoiseMode::none: return exact;
      case NoiseMode::random: return exact + rng.uniform(-noise.xi, noise.xi);
      case NoiseMode::adversarial_threshold:
        if (exact > noise.threshold) return exact - noise.xi;
        if (exact < noise.threshold) return exact + noise.xi;
        return exact;
    }
    return exact;
  }

  static std::string summarize(const std::vector<double>& v) {
    std::string out;
    char buf[32];
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.6g", v[i]);
      if (i) out += ' ';
      out += buf;
    }
    return out;
  }

  const G* model_;
  VocabSpec vocab_;
  Options opts_;
  QueryLedger ledger_;
  std::optional<PathFullReply> last_rollout_;
};

}  // namespace prefix_oracle
