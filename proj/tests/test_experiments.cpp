#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "prefix_oracle/prefix_oracle.hpp"

using namespace prefix_oracle;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("prefix_oracle_test_" + name); }

const std::string kHeader = "cell,trial,seed,success,generator_queries,reward_queries,wallclock_ns\n";

}  // namespace

TEST(Report, EmptyReportIsHeaderOnly) {
  const fs::path p = temp_file("empty.csv");
  emit_report(ExperimentReport{}, p.string());
  EXPECT_EQ(slurp(p), kHeader);
  fs::remove(p);
}

TEST(Report, RowsFollowTheHeader) {
  ExperimentReport rep;
  rep.trials = {{"a", 0, 11, true, 5, 0, 0}, {"a", 1, 12, false, 6, 0, 0}, {"b", 0, 13, true, 7, 1, 0}};
  const fs::path p = temp_file("rows.csv");
  emit_report(rep, p.string());
  EXPECT_EQ(slurp(p), kHeader + "a,0,11,1,5,0,0\na,1,12,0,6,0,0\nb,0,13,1,7,1,0\n");
  fs::remove(p);
}

TEST(Report, UnwritablePathThrows) {
  EXPECT_THROW(emit_report(ExperimentReport{}, "/nonexistent-dir/x.csv"), ReportIoError);
}

TEST(Report, FooterLinesAreComments) {
  ExperimentConfig cfg;
  cfg.name = "hidden-path-scaling";
  cfg.H_list = std::vector<int>{3};
  cfg.trials = 5;
  const std::string csv = report_csv(run_experiment(cfg));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line + "\n", kHeader);
  bool footer = false;
  while (std::getline(in, line)) {
    if (line.rfind('#', 0) == 0) footer = true;
    else EXPECT_FALSE(footer) << "data row after footer: " << line;
  }
  EXPECT_TRUE(footer);
}

TEST(Config, ParsesKeyValueLines) {
  std::istringstream in(
      "# comment\n"
      "K = 3\n"
      "H_list = 4, 8\n"
      "lambda = log:3   # trailing comment\n"
      "noise = random\n"
      "\n"
      "trials=7\n");
  ExperimentConfig cfg;
  cfg.load(in);
  EXPECT_EQ(cfg.K, 3);
  EXPECT_EQ(cfg.H_list, (std::vector<int>{4, 8}));
  EXPECT_NEAR(cfg.lambda, std::log(3.0), 1e-15);
  EXPECT_EQ(cfg.noise, NoiseMode::random);
  EXPECT_EQ(cfg.trials, 7u);
}

TEST(Config, RejectsBadInput) {
  ExperimentConfig cfg;
  EXPECT_THROW(cfg.set("colour", "red"), ConfigError);
  EXPECT_THROW(cfg.set("K", "2.5"), ConfigError);
  EXPECT_THROW(cfg.set("lambda", "abc"), ConfigError);
  std::istringstream in("K 3\n");
  EXPECT_THROW(cfg.load(in), ConfigError);
  cfg.delta = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(ExperimentConfig{}.load_file("/nonexistent.cfg"), ConfigError);
}

TEST(Config, EnvironmentOverridesSeed) {
  ExperimentConfig cfg;
  ::setenv("PREFIX_ORACLE_SEED", "777", 1);
  cfg.apply_environment();
  ::unsetenv("PREFIX_ORACLE_SEED");
  EXPECT_EQ(cfg.seed, 777u);
}

TEST(Experiments, RerunsAreByteIdentical) {
  for (const std::string name : {"hidden-path-scaling", "no-reset-hardness", "leader-trie-matrix", "bridge-separation"}) {
    ExperimentConfig cfg;
    cfg.name = name;
    cfg.trials = 12;
    if (name == "leader-trie-matrix") {
      cfg.K = 3;
      cfg.H = 2;
    } else if (name == "hidden-path-scaling") {
      cfg.H_list = std::vector<int>{4, 8};
    } else if (name == "bridge-separation") {
      cfg.H = 5;
    }
    cfg.threads = 4;
    const std::string a = report_csv(run_experiment(cfg));
    cfg.threads = 1;
    const std::string b = report_csv(run_experiment(cfg));
    EXPECT_EQ(a, b) << name;
  }
}

TEST(Experiments, SeedChangesTheRows) {
  ExperimentConfig cfg;
  cfg.name = "no-reset-hardness";
  cfg.trials = 20;
  cfg.q_list = std::vector<int>{1};
  const std::string a = report_csv(run_experiment(cfg));
  cfg.seed += 1;
  EXPECT_NE(a, report_csv(run_experiment(cfg)));
}

TEST(Experiments, TrialSeedsFollowTheDerivation) {
  ExperimentConfig cfg;
  cfg.name = "no-reset-hardness";
  cfg.trials = 3;
  cfg.q_list = std::vector<int>{0, 2};
  const auto rep = run_experiment(cfg);
  ASSERT_EQ(rep.trials.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_EQ(rep.trials[i].seed, trial_seed(cfg.seed, i / 3, i % 3));
}

TEST(Experiments, UnknownNameIsAConfigError) {
  ExperimentConfig cfg;
  cfg.name = "nope";
  EXPECT_THROW(run_experiment(cfg), ConfigError);
}

TEST(Experiments, WilsonIntervalContainsRate) {
  const auto [lo, hi] = wilson_interval(45, 50);
  EXPECT_LT(lo, 0.9);
  EXPECT_GT(hi, 0.9);
  const auto [lo0, hi0] = wilson_interval(0, 10);
  EXPECT_EQ(lo0, 0.0);
  EXPECT_GT(hi0, 0.0);
}

TEST(Experiments, RunTrialsPropagatesExceptions) {
  EXPECT_THROW(run_trials(8, 4, false,
                          [](std::size_t i) -> TrialRecord {
                            if (i == 5) throw std::runtime_error("boom");
                            return {};
                          }),
               std::runtime_error);
}
