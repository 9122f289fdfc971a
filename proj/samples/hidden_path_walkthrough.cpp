// Walkthrough: a hidden path is invisible to no-reset rollouts at long
// horizons but falls to a chosen-prefix majority walk.

#include <cstdio>

#include "prefix_oracle/prefix_oracle.hpp"

using namespace prefix_oracle;

int main() {
  RngStream rng(42);
  const VocabSpec vocab(2, 12);
  const HiddenPathModel model = random_hidden_path(vocab, 1.0, rng);
  const HiddenPathModel twin = hidden_path_twin(model, rng);

  std::printf("hidden path  %s\n", format_tokens(model.z()).c_str());
  std::printf("p_plus       %.6f\n", model.p_plus());

  // No-reset side: how often does a rollout even reach the divergence point?
  const double reach = reachability(model, PrefixSet{model.tip()});
  std::printf("Reach(tip)   %.6f  (1 / (3 Reach) = %.1f rollouts needed for 2/3 success)\n", reach,
              1.0 / (3.0 * reach));

  int wins = 0;
  const int trials = 2000;
  for (int i = 0; i < trials; ++i) {
    RngStream trial = rng.split(static_cast<std::uint64_t>(i));
    OracleSession session(model);
    wins += distinguish_no_reset_baseline(model, twin, session, 4, trial) == 0;
  }
  std::printf("4-rollout tester picks the right twin %.3f of the time\n", static_cast<double>(wins) / trials);

  // Local-reset side: recover the whole path.
  OracleSession session(model);
  const auto res = recover_hidden_path(session, {vocab.H, vocab.K, model.lambda(), 0.05}, rng);
  std::printf("recovered    %s with %zu PrefixSample queries (discipline %s)\n",
              format_tokens(*res.recovered).c_str(), res.queries_used,
              audit_discipline(res.trail).ok ? "ok" : "violated");
  return res.recovered == model.z() ? 0 : 1;
}
