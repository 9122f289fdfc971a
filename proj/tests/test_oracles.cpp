#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "prefix_oracle/prefix_oracle.hpp"
#include "reference_oracles.hpp"

using namespace prefix_oracle;

TEST(PathFull, RepliesCarryEveryConditional) {
  const HiddenPathModel m(VocabSpec(3, 5), 1.2, Completion{2, 3, 1, 1, 2});
  OracleSession s(m);
  RngStream rng(1);
  for (int i = 0; i < 50; ++i) {
    const PathFullReply r = s.pathfull(rng);
    ASSERT_EQ(r.y.size(), 5u);
    ASSERT_EQ(r.mus.size(), 5u);
    for (int t = 0; t < 5; ++t) EXPECT_EQ(r.mus[t], m.next(Prefix(r.y.begin(), r.y.begin() + t)));
  }
  EXPECT_EQ(s.ledger().count(OracleKind::PathFull), 50u);
  EXPECT_EQ(s.ledger().rollouts(), 50u);
  EXPECT_TRUE(s.ledger().trail().empty());
}

TEST(PathFull, EmpiricalLawMatchesEnumeration) {
  const HiddenPathModel m(VocabSpec(2, 3), 1.0, Completion{1, 2, 2});
  OracleSession s(m);
  RngStream rng(7);
  const int n = 40000;
  std::map<Completion, int> counts;
  for (int i = 0; i < n; ++i) ++counts[s.pathfull(rng).y];
  for (const auto& y : reference::all_completions(2, 3)) {
    const double p = reference::hidden_path_prob(2, 1.0, m.z(), y);
    EXPECT_NEAR(static_cast<double>(counts[y]) / n, p, 3.5 * std::sqrt(p * (1 - p) / n)) << format_tokens(y);
  }
}

TEST(NoReset, WeakerRepliesArePostProcessingsOfTheRollout) {
  RngStream trie_rng(3);
  const LeaderTrieModel m(random_leader_trie(VocabSpec(4, 4), trie_rng));
  OracleSession s(m);
  RngStream rng(12);
  for (int i = 0; i < 20; ++i) {
    const Completion y = s.output_only(rng);
    EXPECT_EQ(y, s.last_rollout()->y);

    const LogprobReply lp = s.output_with_logprobs(rng);
    EXPECT_EQ(lp, to_output_with_logprobs(*s.last_rollout()));
    for (int t = 0; t < 4; ++t)
      EXPECT_NEAR(lp.logprobs[t], std::log(m.next(Prefix(lp.y.begin(), lp.y.begin() + t))(lp.y[t])), 1e-15);

    const TopKReply tk = s.output_with_topk(2, rng);
    EXPECT_EQ(tk, to_output_with_topk(*s.last_rollout(), 2));
    for (const auto& row : tk.top) {
      ASSERT_EQ(row.size(), 2u);
      EXPECT_EQ(row[0].token, 1);  // leader
      EXPECT_GE(row[0].logprob, row[1].logprob);
    }

    const auto len = s.no_reset(rng, [](const PathFullReply& r, RngStream&) { return r.y.size(); });
    EXPECT_EQ(len, 4u);
  }
  EXPECT_EQ(s.ledger().rollouts(), 80u);
}

TEST(NoReset, TopKTiesBreakTowardSmallerToken) {
  const UniformModel m(VocabSpec(4, 2));
  OracleSession s(m);
  RngStream rng(0);
  const TopKReply r = s.output_with_topk(3, rng);
  for (const auto& row : r.top) {
    EXPECT_EQ(row[0].token, 1);
    EXPECT_EQ(row[1].token, 2);
    EXPECT_EQ(row[2].token, 3);
  }
  EXPECT_THROW(s.output_with_topk(5, rng), std::invalid_argument);
}

TEST(PrefixTop, ReturnsTieSymbolOnExactTies) {
  const HiddenPathModel flat(VocabSpec(3, 3), 0.0, Completion{2, 2, 2});
  OracleSession s(flat);
  EXPECT_FALSE(s.prefix_top(Prefix{}).has_value());

  const HiddenPathModel m(VocabSpec(3, 3), 0.5, Completion{2, 3, 1});
  OracleSession t(m);
  EXPECT_EQ(t.prefix_top(Prefix{}), 2);
  EXPECT_EQ(t.prefix_top(Prefix{2}), 3);
  EXPECT_FALSE(t.prefix_top(Prefix{1}).has_value());  // off path: uniform
  EXPECT_EQ(t.ledger().entries().back().reply, "bot");
}

TEST(PrefixSample, FrequenciesMatchConditional) {
  const LeaderTrieModel m(LeaderTrie(VocabSpec(3, 2), BranchMap{{{}, 3}, {{1}, 2}, {{3}, 2}}));
  OracleSession s(m);
  RngStream rng(5);
  const int n = 30000;
  std::vector<int> counts(3);
  for (int i = 0; i < n; ++i) ++counts[s.prefix_sample(Prefix{}, rng) - 1];
  const std::vector<double> expect{4.0 / 7, 1.0 / 7, 2.0 / 7};
  for (int a = 0; a < 3; ++a)
    EXPECT_NEAR(counts[a] / static_cast<double>(n), expect[a], 3.5 * std::sqrt(expect[a] * (1 - expect[a]) / n));
}

TEST(PrefixLogit, ExactRepliesAreLogProbabilities) {
  const HiddenPathModel m(VocabSpec(3, 3), 1.0, Completion{3, 1, 2});
  OracleSession s(m);
  RngStream rng(0);
  const auto lg = s.prefix_logit(Prefix{}, rng);
  EXPECT_NEAR(lg[2], std::log(m.p_plus()), 1e-15);
  EXPECT_NEAR(lg[0], std::log(m.p_minus()), 1e-15);
}

TEST(PrefixLogit, ZeroProbabilityIsNegativeInfinity) {
  TabularModel m(VocabSpec(3, 2), NextTokenDist::uniform(3));
  m.set(Prefix{}, NextTokenDist({0.5, 0.5, 0.0}));
  OracleSession s(m, {NoiseConfig::random(0.3), {}, false, 1e-12});
  RngStream rng(0);
  const auto lg = s.prefix_logit(Prefix{}, rng);
  EXPECT_EQ(lg[2], kLogZero);
}

TEST(PrefixLogit, NoiseStaysWithinXi) {
  const LeaderTrieModel m(LeaderTrie(VocabSpec(4, 2), BranchMap{{{}, 2}, {{1}, 4}, {{2}, 3}}));
  for (const NoiseConfig noise : {NoiseConfig::random(0.05), NoiseConfig::adversarial_for_leader_trie(4, 0.05)}) {
    OracleSession s(m, {noise, {}, false, 1e-12});
    RngStream rng(3);
    for (int i = 0; i < 100; ++i) {
      const auto lg = s.prefix_logit(Prefix{}, rng);
      for (Token a = 1; a <= 4; ++a) EXPECT_LE(std::abs(lg[a - 1] - std::log(m.next(Prefix{})(a))), 0.05 + 1e-15);
    }
  }
}

TEST(PrefixLogit, AdversarialNoisePushesTowardThreshold) {
  const auto P = LeaderTrieParams::for_vocab(3);
  const LeaderTrieModel m(LeaderTrie(VocabSpec(3, 2), BranchMap{{{}, 2}, {{1}, 3}, {{2}, 2}}));
  const double xi = 0.1;
  OracleSession s(m, {NoiseConfig::adversarial_for_leader_trie(3, xi), {}, false, 1e-12});
  RngStream rng(0);
  const auto lg = s.prefix_logit(Prefix{}, rng);
  EXPECT_NEAR(lg[1], std::log(P.beta) - xi, 1e-15);   // above threshold, moved down
  EXPECT_NEAR(lg[2], std::log(P.gamma) + xi, 1e-15);  // below threshold, moved up
}

TEST(PrefixQueries, RejectInvalidPrefixes) {
  const UniformModel m(VocabSpec(2, 3));
  OracleSession s(m);
  RngStream rng(0);
  EXPECT_THROW(s.prefix_sample(Prefix{1, 1, 1}, rng), InvalidPrefix);
  EXPECT_THROW(s.prefix_top(Prefix{3}), InvalidPrefix);
  EXPECT_THROW(s.prefix_logit(Prefix{0}, rng), InvalidPrefix);
  EXPECT_EQ(s.ledger().total(), 0u);
}

TEST(SeqScore, ExactScoresAreTrajectoryLogProbs) {
  const HiddenPathModel m(VocabSpec(2, 3), 1.0, Completion{1, 1, 2});
  OracleSession s(m);
  RngStream rng(0);
  EXPECT_NEAR(s.seqscore(Completion{1, 1, 2}, rng), 3 * std::log(m.p_plus()), 1e-14);
  EXPECT_NEAR(s.seqscore(Completion{2, 1, 1}, rng), std::log(m.p_minus()) + 2 * std::log(0.5), 1e-14);
  EXPECT_THROW(s.seqscore(Completion{1, 1}, rng), InvalidPrefix);
  EXPECT_EQ(s.ledger().count(OracleKind::SeqScore), 2u);
  EXPECT_EQ(s.ledger().completions().size(), 2u);
}

TEST(SeqScore, ZeroProbabilityStaysNegativeInfinityUnderNoise) {
  TabularModel m(VocabSpec(2, 1), NextTokenDist({1.0, 0.0}));
  OracleSession s(m, {{}, NoiseConfig::random(0.5), false, 1e-12});
  RngStream rng(0);
  EXPECT_EQ(s.seqscore(Completion{2}, rng), kLogZero);
}

TEST(Noise, ParseAndValidate) {
  EXPECT_EQ(parse_noise_mode("none"), NoiseMode::none);
  EXPECT_EQ(parse_noise_mode("random"), NoiseMode::random);
  EXPECT_EQ(parse_noise_mode("adversarial"), NoiseMode::adversarial_threshold);
  EXPECT_EQ(parse_noise_mode("adversarial-threshold"), NoiseMode::adversarial_threshold);
  EXPECT_THROW(parse_noise_mode("gaussian"), std::invalid_argument);
  EXPECT_THROW(NoiseConfig::random(-1.0).validate(), std::invalid_argument);
}

TEST(Discipline, AuditExamples) {
  EXPECT_TRUE(audit_discipline({Prefix{}}).ok);
  EXPECT_TRUE(audit_discipline(std::vector<Prefix>{}).ok);
  EXPECT_TRUE(audit_discipline({Prefix{}, Prefix{1}, Prefix{1, 2}, Prefix{1}}).ok);
  const auto bad = audit_discipline({Prefix{}, Prefix{1, 2}});
  EXPECT_FALSE(bad.ok);
  EXPECT_EQ(bad.offending_index, 2u);
  const auto no_root = audit_discipline({Prefix{1}});
  EXPECT_FALSE(no_root.ok);
  EXPECT_EQ(no_root.offending_index, 1u);
}

TEST(Discipline, StrictSessionRejectsJumps) {
  const UniformModel m(VocabSpec(3, 4));
  OracleSession s(m, {{}, {}, true, 1e-12});
  RngStream rng(0);
  EXPECT_THROW(s.prefix_sample(Prefix{2}, rng), DisciplineViolation);
  EXPECT_NO_THROW(s.prefix_sample(Prefix{}, rng));
  EXPECT_NO_THROW(s.prefix_top(Prefix{3}));
  EXPECT_NO_THROW(s.prefix_logit(Prefix{3, 1}, rng));
  EXPECT_THROW(s.prefix_top(Prefix{1, 1}), DisciplineViolation);
  EXPECT_NO_THROW(s.prefix_top(Prefix{}));  // revisit
  EXPECT_TRUE(audit_discipline(s.ledger()).ok);
}

TEST(Ledger, CsvFormat) {
  const HiddenPathModel m(VocabSpec(2, 2), 1.0, Completion{1, 2});
  OracleSession s(m);
  RngStream rng(0);
  s.prefix_top(Prefix{});
  s.prefix_top(Prefix{1});
  std::ostringstream out;
  s.ledger().write_csv(out);
  EXPECT_EQ(out.str(),
            "query_index,kind,prefix_or_completion,reply_summary\n"
            "1,PrefixTop,-,1\n"
            "2,PrefixTop,1,2\n");
}

TEST(OracleKinds, Classification) {
  int prefix = 0, noreset = 0;
  for (std::size_t i = 0; i < kOracleKindCount; ++i) {
    const auto k = static_cast<OracleKind>(i);
    prefix += is_prefix_addressed(k);
    noreset += is_no_reset(k);
    EXPECT_FALSE(is_prefix_addressed(k) && is_no_reset(k));
  }
  EXPECT_EQ(prefix, 3);
  EXPECT_EQ(noreset, 4);
}
