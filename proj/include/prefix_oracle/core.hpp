#pragma once

// Vocabulary, prefix-tree addressing and the generator concept.
//
// Tokens are 1-indexed throughout the public interface (token 1 is the
// "leader" token of the leader-trie family). A prefix is a token string of
// length < H (an internal node address); a completion has length exactly H.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prefix_oracle/rng.hpp"

namespace prefix_oracle {

using Token = int;
using Prefix = std::vector<Token>;
using Completion = std::vector<Token>;

inline constexpr double kSumTolerance = 1e-12;

class InvalidPrefix : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidModel : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct VocabSpec {
  int K = 2;
  int H = 1;

  VocabSpec() = default;
  VocabSpec(int k, int h) : K(k), H(h) {
    if (K < 2) throw InvalidModel("vocabulary size K must be >= 2, got " + std::to_string(K));
    if (H < 1) throw InvalidModel("horizon H must be >= 1, got " + std::to_string(H));
  }

  bool valid_token(Token a) const noexcept { return a >= 1 && a <= K; }

  friend bool operator==(const VocabSpec&, const VocabSpec&) = default;
};

/// Renders a token string as "1.2.3"; the root renders as "-".
inline std::string format_tokens(std::span<const Token> tokens) {
  if (tokens.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += '.';
    out += std::to_string(tokens[i]);
  }
  return out;
}

/// Inverse of format_tokens. Also accepts space separated tokens.
inline std::vector<Token> parse_tokens(const std::string& text) {
  std::vector<Token> out;
  if (text == "-" || text.empty()) return out;
  std::string cleaned = text;
  std::replace(cleaned.begin(), cleaned.end(), '.', ' ');
  std::istringstream in(cleaned);
  std::string item;
  while (in >> item) {
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw InvalidPrefix("not a token: '" + item + "'");
    }
    if (used != item.size()) throw InvalidPrefix("not a token: '" + item + "'");
    out.push_back(value);
  }
  return out;
}

inline void check_tokens(const VocabSpec& vocab, std::span<const Token> tokens) {
  for (Token a : tokens) {
    if (!vocab.valid_token(a))
      throw InvalidPrefix("token " + std::to_string(a) + " outside 1.." + std::to_string(vocab.K));
  }
}

/// Validates a query prefix: tokens in range and length < H.
inline void check_query_prefix(const VocabSpec& vocab, std::span<const Token> p) {
  if (static_cast<int>(p.size()) >= vocab.H)
    throw InvalidPrefix("prefix " + format_tokens(p) + " has length " + std::to_string(p.size()) +
                        " >= H = " + std::to_string(vocab.H));
  check_tokens(vocab, p);
}

inline void check_completion(const VocabSpec& vocab, std::span<const Token> y) {
  if (static_cast<int>(y.size()) != vocab.H)
    throw InvalidPrefix("completion " + format_tokens(y) + " must have length H = " +
                        std::to_string(vocab.H));
  check_tokens(vocab, y);
}

inline bool is_prefix_of(std::span<const Token> p, std::span<const Token> y) {
  return p.size() <= y.size() && std::equal(p.begin(), p.end(), y.begin());
}

inline Prefix extend(Prefix p, Token a) {
  p.push_back(a);
  return p;
}

/// A next-token distribution over tokens 1..K.
class NextTokenDist {
 public:
  NextTokenDist() = default;
  explicit NextTokenDist(std::vector<double> probs) : probs_(std::move(probs)) { validate(); }

  static NextTokenDist uniform(int K) { return NextTokenDist(std::vector<double>(K, 1.0 / K)); }

  static NextTokenDist point_mass(int K, Token a) {
    std::vector<double> p(K, 0.0);
    p.at(a - 1) = 1.0;
    return NextTokenDist(std::move(p));
  }

  int K() const noexcept { return static_cast<int>(probs_.size()); }
  double operator()(Token a) const { return probs_.at(a - 1); }
  std::span<const double> probs() const noexcept { return probs_; }

  /// Token with the largest probability (smallest index on ties).
  Token argmax() const {
    return static_cast<Token>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin()) + 1;
  }

  friend bool operator==(const NextTokenDist&, const NextTokenDist&) = default;

 private:
  void validate() const {
    if (probs_.size() < 2) throw InvalidModel("next-token distribution needs K >= 2 entries");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0)) throw InvalidModel("next-token distribution has a negative or NaN entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance)
      throw InvalidModel("next-token distribution sums to " + std::to_string(sum));
  }

  std::vector<double> probs_;
};

/// Anything that maps a prefix to a next-token distribution.
template <class G>
concept Generator = requires(const G& g, const Prefix& p) {
  { g.vocab() } -> std::convertible_to<VocabSpec>;
  { g.next(p) } -> std::convertible_to<NextTokenDist>;
};

/// Uniform over tokens at every prefix.
class UniformModel {
 public:
  explicit UniformModel(VocabSpec vocab) : vocab_(vocab) {}
  const VocabSpec& vocab() const noexcept { return vocab_; }
  NextTokenDist next(const Prefix& p) const {
    check_query_prefix(vocab_, p);
    return NextTokenDist::uniform(vocab_.K);
  }

 private:
  VocabSpec vocab_;
};

/// Explicit per-prefix table with a fallback distribution for absent prefixes.
class TabularModel {
 public:
  TabularModel(VocabSpec vocab, NextTokenDist fallback) : vocab_(vocab), fallback_(std::move(fallback)) {
    if (fallback_.K() != vocab_.K) throw InvalidModel("fallback distribution has the wrong size");
  }
  explicit TabularModel(VocabSpec vocab) : TabularModel(vocab, NextTokenDist::uniform(vocab.K)) {}

  void set(Prefix p, NextTokenDist d) {
    check_query_prefix(vocab_, p);
    if (d.K() != vocab_.K) throw InvalidModel("distribution has the wrong size");
    table_.insert_or_assign(std::move(p), std::move(d));
  }

  const VocabSpec& vocab() const noexcept { return vocab_; }
  NextTokenDist next(const Prefix& p) const {
    check_query_prefix(vocab_, p);
    auto it = table_.find(p);
    return it == table_.end() ? fallback_ : it->second;
  }

  const std::map<Prefix, NextTokenDist>& table() const noexcept { return table_; }

 private:
  VocabSpec vocab_;
  NextTokenDist fallback_;
  std::map<Prefix, NextTokenDist> table_;
};

/// Wraps an arbitrary callable; used for user-supplied models.
class FunctionModel {
 public:
  FunctionModel(VocabSpec vocab, std::function<NextTokenDist(const Prefix&)> fn)
      : vocab_(vocab), fn_(std::move(fn)) {}
  const VocabSpec& vocab() const noexcept { return vocab_; }
  NextTokenDist next(const Prefix& p) const {
    check_query_prefix(vocab_, p);
    return fn_(p);
  }

 private:
  VocabSpec vocab_;
  std::function<NextTokenDist(const Prefix&)> fn_;
};

/// log Pr(Y = y), accumulated in log space. Returns -inf for impossible y.
template <Generator G>
double trajectory_log_prob(const G& model, std::span<const Token> y) {
  const VocabSpec vocab = model.vocab();
  check_completion(vocab, y);
  double total = 0.0;
  Prefix p;
  p.reserve(y.size());
  for (Token a : y) {
    const double pa = model.next(p)(a);
    if (pa <= 0.0) return -INFINITY;
    total += std::log(pa);
    p.push_back(a);
  }
  return total;
}

template <Generator G>
double trajectory_prob(const G& model, std::span<const Token> y) {
  return std::exp(trajectory_log_prob(model, y));
}

/// Draws one token by inverse CDF.
inline Token sample_token(const NextTokenDist& d, RngStream& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  Token last_positive = 1;
  for (int i = 0; i < d.K(); ++i) {
    const double p = d.probs()[i];
    if (p <= 0.0) continue;
    last_positive = i + 1;
    acc += p;
    if (u < acc) return i + 1;
  }
  return last_positive;
}

template <Generator G>
Completion sample_trajectory(const G& model, RngStream& rng) {
  const VocabSpec vocab = model.vocab();
  Completion y;
  y.reserve(vocab.H);
  for (int t = 0; t < vocab.H; ++t) y.push_back(sample_token(model.next(y), rng));
  return y;
}

// Completion <-> dense index, first token most significant.

inline std::uint64_t completion_count(const VocabSpec& vocab) {
  std::uint64_t n = 1;
  for (int t = 0; t < vocab.H; ++t) {
    if (n > UINT64_MAX / static_cast<std::uint64_t>(vocab.K)) return UINT64_MAX;
    n *= static_cast<std::uint64_t>(vocab.K);
  }
  return n;
}

inline std::uint64_t completion_index(const VocabSpec& vocab, std::span<const Token> y) {
  std::uint64_t idx = 0;
  for (Token a : y) idx = idx * static_cast<std::uint64_t>(vocab.K) + static_cast<std::uint64_t>(a - 1);
  return idx;
}

inline Completion completion_from_index(const VocabSpec& vocab, std::uint64_t idx) {
  Completion y(vocab.H);
  for (int t = vocab.H - 1; t >= 0; --t) {
    y[t] = static_cast<Token>(idx % static_cast<std::uint64_t>(vocab.K)) + 1;
    idx /= static_cast<std::uint64_t>(vocab.K);
  }
  return y;
}

inline Completion uniform_random_completion(const VocabSpec& vocab, RngStream& rng) {
  Completion y(vocab.H);
  for (auto& a : y) a = rng.uniform_int(1, vocab.K);
  return y;
}

}  // namespace prefix_oracle
