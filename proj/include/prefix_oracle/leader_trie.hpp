#pragma once

// Leader-trie family.
//
// A leader trie of depth H is a prefix-closed set of nodes in which every
// internal node p has exactly the two children p.1 (the leader child) and
// p.b(p) with b(p) in 2..K, and every leaf sits at depth H. The generator puts
// alpha on token 1, beta on the hidden child b(p) and gamma elsewhere at
// internal nodes; off the trie it puts 4/(K+3) on token 1 and gamma0
// elsewhere. Token 1 is therefore the unique argmax at every prefix.

#include <cmath>
#include <deque>
#include <map>
#include <string>

#include "prefix_oracle/core.hpp"

namespace prefix_oracle {

using BranchMap = std::map<Prefix, Token>;

class LeaderTrie {
 public:
  /// Validates prefix closure, the two-children structure and uniform leaf depth.
  LeaderTrie(VocabSpec vocab, BranchMap branch) : vocab_(vocab), branch_(std::move(branch)) {
    if (vocab_.K < 3) throw InvalidModel("leader tries require K >= 3");
    validate();
  }

  const VocabSpec& vocab() const noexcept { return vocab_; }
  const BranchMap& branch() const noexcept { return branch_; }

  /// |I(T)|; always 2^H - 1 for a valid trie.
  std::size_t internal_count() const noexcept { return branch_.size(); }

  bool is_internal(const Prefix& p) const { return branch_.contains(p); }

  /// Hidden child token at an internal node, 0 otherwise.
  Token hidden_child(const Prefix& p) const {
    auto it = branch_.find(p);
    return it == branch_.end() ? 0 : it->second;
  }

  bool contains(const Prefix& p) const {
    if (p.empty()) return true;
    Prefix parent(p.begin(), p.end() - 1);
    auto it = branch_.find(parent);
    return it != branch_.end() && (p.back() == 1 || p.back() == it->second);
  }

  friend bool operator==(const LeaderTrie& a, const LeaderTrie& b) {
    return a.vocab_ == b.vocab_ && a.branch_ == b.branch_;
  }

 private:
  void validate() const {
    if (!branch_.contains(Prefix{})) throw InvalidModel("leader trie must contain the root as an internal node");
    for (const auto& [p, b] : branch_) {
      try {
        check_query_prefix(vocab_, p);
      } catch (const InvalidPrefix& e) {
        throw InvalidModel(std::string("internal node: ") + e.what());
      }
      if (b < 2 || b > vocab_.K)
        throw InvalidModel("hidden child at " + format_tokens(p) + " must lie in 2..K, got " + std::to_string(b));
      if (!p.empty()) {
        Prefix parent(p.begin(), p.end() - 1);
        auto it = branch_.find(parent);
        if (it == branch_.end())
          throw InvalidModel("node " + format_tokens(p) + " has no internal parent (prefix closure)");
        if (p.back() != 1 && p.back() != it->second)
          throw InvalidModel("node " + format_tokens(p) + " is not a child of its parent");
      }
      if (static_cast<int>(p.size()) + 1 < vocab_.H) {
        for (Token c : {Token{1}, b}) {
          if (!branch_.contains(extend(p, c)))
            throw InvalidModel("child " + format_tokens(extend(p, c)) + " is a leaf above depth H");
        }
      }
    }
  }

  VocabSpec vocab_;
  BranchMap branch_;
};

/// Samples b(p) uniformly from 2..K at every internal node, breadth first.
inline LeaderTrie random_leader_trie(VocabSpec vocab, RngStream& rng) {
  if (vocab.K < 3) throw InvalidModel("leader tries require K >= 3");
  BranchMap branch;
  std::deque<Prefix> queue{Prefix{}};
  while (!queue.empty()) {
    Prefix p = std::move(queue.front());
    queue.pop_front();
    const Token b = rng.uniform_int(2, vocab.K);
    branch.emplace(p, b);
    if (static_cast<int>(p.size()) + 1 < vocab.H) {
      queue.push_back(extend(p, 1));
      queue.push_back(extend(p, b));
    }
  }
  return LeaderTrie(vocab, std::move(branch));
}

struct LeaderTrieParams {
  double alpha, beta, gamma, gamma0;
  double Gamma_lead;  // probability-space margin (beta - gamma0) / 2
  double gamma_lead;  // log-space margin (log beta - log gamma0) / 2

  static LeaderTrieParams for_vocab(int K) {
    const double k = K;
    LeaderTrieParams out{};
    out.alpha = 4.0 / (k + 4.0);
    out.beta = 2.0 / (k + 4.0);
    out.gamma = 1.0 / (k + 4.0);
    out.gamma0 = 1.0 / (k + 3.0);
    out.Gamma_lead = (out.beta - out.gamma0) / 2.0;
    out.gamma_lead = (std::log(out.beta) - std::log(out.gamma0)) / 2.0;
    return out;
  }

  /// Threshold used on logits: log gamma0 + gamma_lead.
  double logit_threshold() const noexcept { return std::log(gamma0) + gamma_lead; }
  /// Threshold used on empirical frequencies: gamma0 + Gamma_lead.
  double frequency_threshold() const noexcept { return gamma0 + Gamma_lead; }
};

class LeaderTrieModel {
 public:
  explicit LeaderTrieModel(LeaderTrie trie)
      : trie_(std::move(trie)), params_(LeaderTrieParams::for_vocab(trie_.vocab().K)) {}

  const VocabSpec& vocab() const noexcept { return trie_.vocab(); }
  const LeaderTrie& trie() const noexcept { return trie_; }
  const LeaderTrieParams& params() const noexcept { return params_; }

  NextTokenDist next(const Prefix& p) const {
    const int K = vocab().K;
    check_query_prefix(vocab(), p);
    if (const Token b = trie_.hidden_child(p); b != 0) {
      std::vector<double> probs(K, params_.gamma);
      probs[0] = params_.alpha;
      probs[b - 1] = params_.beta;
      return NextTokenDist(std::move(probs));
    }
    std::vector<double> probs(K, params_.gamma0);
    probs[0] = 4.0 / (K + 3.0);
    return NextTokenDist(std::move(probs));
  }

 private:
  LeaderTrie trie_;
  LeaderTrieParams params_;
};

}  // namespace prefix_oracle
