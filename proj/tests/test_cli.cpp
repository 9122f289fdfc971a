#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "prefix_oracle/cli.hpp"
#include <json.hpp>

using namespace prefix_oracle;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
  json j() const { return json::parse(out); }
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "prefix_oracle");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path temp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("prefix_oracle_cli_" + name);
}

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run({}).code, 2); }

TEST(Cli, UnknownFlagIsUsageError) { EXPECT_EQ(run({"recover-hidden-path", "--bogus", "1"}).code, 2); }

TEST(Cli, InvalidParameterIsUsageError) {
  EXPECT_EQ(run({"recover-hidden-path", "--delta", "1.5"}).code, 2);
  EXPECT_EQ(run({"recover-hidden-path", "--K", "1"}).code, 2);
}

TEST(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("recover-hidden-path"), std::string::npos);
}

TEST(Cli, RecoverHiddenPath) {
  const auto r = run({"recover-hidden-path", "--K", "2", "--H", "10", "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = r.j();
  EXPECT_EQ(j["samples_per_stage"], 44);
  EXPECT_EQ(j["queries"], 440);
  EXPECT_EQ(j["recovered"], j["hidden_path"]);
  EXPECT_TRUE(j["discipline_ok"].get<bool>());
}

TEST(Cli, RecoverTrieLogitUsesInternalCountQueries) {
  const auto r = run({"recover-trie-logit", "--K", "3", "--H", "3", "--xi", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.j()["queries"], 7);
  EXPECT_TRUE(r.j()["exact"].get<bool>());
}

TEST(Cli, RecoverTrieLogitFailsAboveMargin) {
  const auto r = run({"recover-trie-logit", "--K", "3", "--H", "3", "--xi", "0.5"});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(r.j()["failure"].get<bool>());
}

TEST(Cli, RecoverSeqscore) {
  const auto r = run({"recover-seqscore", "--K", "3", "--H", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.j()["queries"], 15);
}

TEST(Cli, BridgeReportsOptimalObjective) {
  const auto r = run({"bridge", "--D", "3", "--L", "4", "--seed", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = r.j();
  EXPECT_EQ(j["generator_queries"], 144);
  EXPECT_EQ(j["reward_queries"], 1);
  EXPECT_NEAR(j["objective"].get<double>(), j["optimal_objective"].get<double>(), 1e-9);
}

TEST(Cli, AnalyzeReachTip) {
  const auto r = run({"analyze", "reach", "--K", "2", "--H", "5", "--lambda", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(r.j()["reachability"].get<double>(), 0.2856332167670459, 1e-15);
}

TEST(Cli, AnalyzeGibbsAndObjective) {
  const auto g = run({"analyze", "gibbs", "--D", "1", "--L", "1"});
  ASSERT_EQ(g.code, 0) << g.err;
  EXPECT_NEAR(g.j()["Z"].get<double>(), g.j()["Z_closed_form"].get<double>(), 1e-12);
  EXPECT_NEAR(g.j()["target_mass"].get<double>(), g.j()["target_mass_closed_form"].get<double>(), 1e-12);
  const auto o = run({"analyze", "objective", "--D", "1", "--L", "1"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NEAR(o.j()["J_gibbs"].get<double>(), 0.7772560328185867, 1e-12);
  EXPECT_NEAR(o.j()["J_base"].get<double>(), 0.36154846806951285, 1e-12);
}

TEST(Cli, AnalyzeCertificate) {
  const auto r = run({"analyze", "certificate", "--K", "2", "--D", "5", "--L", "3", "--qg", "10", "--qr", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(r.j()["certificate"].get<double>(), 2.4173128012589933, 1e-12);
  EXPECT_EQ(run({"analyze", "certificate", "--L", "1", "--qr", "4"}).code, 2);  // q_r >= N
}

TEST(Cli, ModelFileRoundTrip) {
  const auto path = temp("model.txt");
  {
    std::ofstream f(path);
    f << "2 4 hidden-path\nlambda 1\npath 2 2 1 2\n";
  }
  const auto r = run({"recover-hidden-path", "--model", path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.j()["hidden_path"], json::parse("[2,2,1,2]"));
  EXPECT_NE(run({"recover-hidden-path", "--model", "/nonexistent/model.txt"}).code, 0);
  std::filesystem::remove(path);
}

TEST(Cli, LedgerCsvIsWritten) {
  const auto path = temp("ledger.csv");
  const auto r = run({"recover-trie-logit", "--K", "3", "--H", "2", "--out", path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "query_index,kind,prefix_or_completion,reply_summary");
  int rows = 0;
  for (std::string line; std::getline(f, line);) ++rows;
  EXPECT_EQ(rows, 3);
  std::filesystem::remove(path);
}

TEST(Cli, ExperimentWritesCsv) {
  const auto path = temp("exp.csv");
  const auto r = run({"experiment", "no-reset-hardness", "--trials", "50", "--q_list", "0", "--out", path.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.j()["passed"].get<bool>());
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "cell,trial,seed,success,generator_queries,reward_queries,wallclock_ns");
  std::filesystem::remove(path);
}

TEST(Cli, ExperimentConfigErrors) {
  EXPECT_EQ(run({"experiment", "unknown-experiment"}).code, 2);
  EXPECT_EQ(run({"experiment", "no-reset-hardness", "--config", "/nonexistent.cfg"}).code, 2);
  EXPECT_EQ(run({"experiment", "no-reset-hardness", "--delta", "2"}).code, 2);
}
