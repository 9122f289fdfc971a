#pragma once

// Command-line front end. stdout carries one JSON result record, stderr
// carries diagnostics. Exit codes: 0 success, 1 failed assertion (recovery
// failed, experiment check failed, I/O error), 2 usage error.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "prefix_oracle/prefix_oracle.hpp"

namespace prefix_oracle::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

using nlohmann::json;

/// Numeric flags are captured as text so "log:<x>" works everywhere.
struct Params {
  std::string K = "2", H = "5", D = "3", L = "4";
  std::string lambda = "1", eta = "0.5", beta = "1", delta = "0.1", xi = "0";
  std::string noise = "adversarial", S = "0", qg = "0", qr = "1";
  std::string seed = "1";
  std::string family = "hidden-path";
  std::string U = "tip";
  std::string suffix = "ones";
  std::string model;
  std::string out;

  int i(const std::string& v) const { return static_cast<int>(parse_integer(v)); }
  double d(const std::string& v) const { return parse_number(v); }
  std::uint64_t seed_value() const { return static_cast<std::uint64_t>(std::stoull(seed)); }
};

inline void add_flags(CLI::App* app, Params& p, const std::vector<std::string>& names) {
  const std::map<std::string, std::pair<std::string*, std::string>> table{
      {"K", {&p.K, "vocabulary size"}},
      {"H", {&p.H, "horizon"}},
      {"D", {&p.D, "scaffold length (bridge)"}},
      {"L", {&p.L, "hidden suffix length (bridge)"}},
      {"lambda", {&p.lambda, "signal strength; accepts log:<x>"}},
      {"eta", {&p.eta, "hard-prompt mass"}},
      {"beta", {&p.beta, "KL coefficient"}},
      {"delta", {&p.delta, "failure probability"}},
      {"xi", {&p.xi, "oracle noise level"}},
      {"noise", {&p.noise, "noise mode: none|random|adversarial"}},
      {"S", {&p.S, "internal-node budget (0 = 2^H - 1)"}},
      {"qg", {&p.qg, "no-reset generator queries"}},
      {"qr", {&p.qr, "reward queries"}},
      {"seed", {&p.seed, "master seed"}},
      {"family", {&p.family, "hidden-path|leader-trie|bridge"}},
      {"U", {&p.U, "'tip' or comma separated prefixes such as -,1,1.2"}},
      {"suffix", {&p.suffix, "padding rule: ones|random"}},
      {"model", {&p.model, "read the model from this file"}},
      {"out", {&p.out, "write CSV output to this path"}},
  };
  for (const auto& n : names) {
    const auto& [target, help] = table.at(n);
    app->add_option("--" + n, *target, help)->capture_default_str();
  }
}

template <class T>
T load_model_as(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open model file '" + path + "'");
  AnyModel any = read_model(in);
  if (auto* m = std::get_if<T>(&any)) return std::move(*m);
  throw UsageError("model file '" + path + "' holds a different family");
}

inline void write_ledger(const QueryLedger& ledger, const std::string& path) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportIoError("cannot open '" + path + "' for writing");
  ledger.write_csv(out);
}

inline json tokens_json(const std::vector<Token>& t) { return json(t); }

inline BridgePublic bridge_public(const Params& p, RngStream& rng) {
  return random_bridge_public(p.i(p.K), p.i(p.D), p.i(p.L), p.d(p.lambda), p.d(p.eta), p.d(p.beta), rng);
}

inline BridgeInstance bridge_instance(const Params& p) {
  if (!p.model.empty()) return load_model_as<BridgeInstance>(p.model);
  RngStream rng(p.seed_value());
  return random_bridge_instance(bridge_public(p, rng), rng);
}

inline HiddenPathModel hidden_path_model(const Params& p, RngStream& rng) {
  if (!p.model.empty()) return load_model_as<HiddenPathModel>(p.model);
  return random_hidden_path(VocabSpec(p.i(p.K), p.i(p.H)), p.d(p.lambda), rng);
}

inline LeaderTrieModel leader_trie_model(const Params& p, RngStream& rng) {
  if (!p.model.empty()) return load_model_as<LeaderTrieModel>(p.model);
  return LeaderTrieModel(random_leader_trie(VocabSpec(p.i(p.K), p.i(p.H)), rng));
}

inline PrefixSet parse_prefix_set(const std::string& text, const std::vector<Token>& chain) {
  PrefixSet U;
  if (text == "tip") {
    U.insert(Prefix(chain.begin(), chain.end() - 1));
    return U;
  }
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) U.insert(parse_tokens(item));
  return U;
}

inline json prefix_set_json(const PrefixSet& U) {
  json j = json::array();
  for (const auto& p : U) j.push_back(format_tokens(p));
  return j;
}

// -- subcommands --------------------------------------------------------------

inline int cmd_recover_hidden_path(const Params& p, std::ostream& out) {
  RngStream rng(p.seed_value());
  const HiddenPathModel model = hidden_path_model(p, rng);
  OracleSession session(model);
  const auto res = recover_hidden_path(
      session, {model.vocab().H, model.vocab().K, model.lambda(), p.d(p.delta)}, rng);
  const bool ok = res.recovered == model.z();
  write_ledger(session.ledger(), p.out);
  out << json{{"command", "recover-hidden-path"},
              {"K", model.vocab().K},
              {"H", model.vocab().H},
              {"lambda", model.lambda()},
              {"delta", p.d(p.delta)},
              {"samples_per_stage", res.samples_per_stage},
              {"queries", res.queries_used},
              {"hidden_path", tokens_json(model.z())},
              {"recovered", tokens_json(*res.recovered)},
              {"success", ok},
              {"discipline_ok", audit_discipline(res.trail).ok}}
             .dump()
      << '\n';
  return ok ? kExitOk : kExitFailed;
}

inline json trie_json(const TrieRecovery& res, const LeaderTrieModel& model) {
  json unexpanded = json::array();
  for (const auto& q : res.unexpanded) unexpanded.push_back(format_tokens(q));
  return json{{"K", model.vocab().K},
              {"H", model.vocab().H},
              {"internal_nodes", model.trie().internal_count()},
              {"queries", res.queries_used},
              {"exact", res.recovered == model.trie()},
              {"failure", !res.recovered.has_value()},
              {"budget_exhausted", res.budget_exhausted},
              {"unexpanded", unexpanded},
              {"discipline_ok", audit_discipline(res.trail).ok}};
}

inline int cmd_recover_trie_logit(const Params& p, std::ostream& out) {
  RngStream rng(p.seed_value());
  const LeaderTrieModel model = leader_trie_model(p, rng);
  const double xi = p.d(p.xi);
  OracleSession<LeaderTrieModel>::Options opts;
  const NoiseMode mode = xi > 0.0 ? parse_noise_mode(p.noise) : NoiseMode::none;
  opts.logit_noise = mode == NoiseMode::adversarial_threshold
                         ? NoiseConfig::adversarial_for_leader_trie(model.vocab().K, xi)
                         : NoiseConfig{xi, mode, 0.0};
  OracleSession session(model, opts);
  const TrieRecovery res = recover_leader_trie_logit(session, rng);
  write_ledger(session.ledger(), p.out);
  json j = trie_json(res, model);
  j["command"] = "recover-trie-logit";
  j["xi"] = xi;
  j["noise"] = to_string(mode);
  j["gamma_lead"] = model.params().gamma_lead;
  out << j.dump() << '\n';
  return res.recovered == model.trie() ? kExitOk : kExitFailed;
}

inline int cmd_recover_trie_sample(const Params& p, std::ostream& out) {
  RngStream rng(p.seed_value());
  const LeaderTrieModel model = leader_trie_model(p, rng);
  const std::size_t S = p.i(p.S) > 0 ? static_cast<std::size_t>(p.i(p.S)) : model.trie().internal_count();
  OracleSession session(model);
  const TrieRecovery res = recover_leader_trie_sample(session, S, p.d(p.delta), rng);
  write_ledger(session.ledger(), p.out);
  json j = trie_json(res, model);
  j["command"] = "recover-trie-sample";
  j["S"] = S;
  j["samples_per_node"] = res.samples_per_node;
  j["budget"] = S * res.samples_per_node;
  out << j.dump() << '\n';
  return res.recovered == model.trie() ? kExitOk : kExitFailed;
}

inline int cmd_recover_seqscore(const Params& p, std::ostream& out) {
  RngStream rng(p.seed_value());
  const HiddenPathModel model = hidden_path_model(p, rng);
  const int H = model.vocab().H, K = model.vocab().K;
  SuffixRule rule;
  if (p.suffix == "ones") {
    rule = all_ones_suffix(H);
  } else if (p.suffix == "random") {
    rule = [&rng, H, K](int t, const Prefix&, Token) {
      std::vector<Token> s(H - t);
      for (auto& a : s) a = rng.uniform_int(1, K);
      return s;
    };
  } else {
    throw UsageError("unknown --suffix rule '" + p.suffix + "'");
  }
  OracleSession session(model);
  const auto res = recover_hidden_path_seqscore(session, rng, rule);
  const bool ok = res.recovered == model.z();
  write_ledger(session.ledger(), p.out);
  out << json{{"command", "recover-seqscore"},
              {"K", K},
              {"H", H},
              {"lambda", model.lambda()},
              {"suffix_rule", p.suffix},
              {"queries", res.queries_used},
              {"hidden_path", tokens_json(model.z())},
              {"recovered", tokens_json(*res.recovered)},
              {"success", ok}}
             .dump()
      << '\n';
  return ok ? kExitOk : kExitFailed;
}

inline int cmd_bridge(const Params& p, std::ostream& out) {
  const BridgeInstance inst = bridge_instance(p);
  RngStream rng(derive_seed(p.seed_value(), {1}));
  const auto hard = inst.generator(Prompt::hard);
  OracleSession session(hard);
  RewardOracle reward(inst);
  const BridgeOutput res = bridge_posttrain(inst.pub(), session, reward, p.d(p.delta), rng);
  const bool ok = res.suffix == inst.suffix() && res.bit == inst.bit();
  write_ledger(session.ledger(), p.out);
  json j{{"command", "bridge"},
         {"K", inst.pub().K},
         {"D", inst.pub().D},
         {"L", inst.pub().L},
         {"H", inst.pub().H()},
         {"q0", inst.q0()},
         {"R", inst.R()},
         {"samples_per_stage", res.samples_per_stage},
         {"generator_queries", res.generator_queries},
         {"generator_budget", inst.pub().H() + inst.pub().L * res.samples_per_stage},
         {"reward_queries", res.reward_queries},
         {"recovered_suffix", tokens_json(res.suffix)},
         {"recovered_bit", res.bit},
         {"success", ok},
         {"discipline_ok", audit_discipline(res.trail).ok},
         {"gibbs_Z", res.policy.Z()},
         {"gibbs_target_mass", res.policy.target_mass()}};
  if (completion_count(inst.vocab()) <= kDefaultEnumerationCap) {
    j["objective"] = evaluate_objective(inst, res.policy.as_prompt_policy());
    j["optimal_objective"] = inst.pub().eta * inst.pub().beta * std::log(5.0 - inst.q0());
  }
  out << j.dump() << '\n';
  return ok ? kExitOk : kExitFailed;
}

inline int cmd_analyze(const std::string& what, const Params& p, std::ostream& out) {
  json j{{"command", "analyze " + what}};
  if (what == "reach") {
    RngStream rng(p.seed_value());
    double value = 0;
    if (p.family == "hidden-path") {
      const HiddenPathModel m = hidden_path_model(p, rng);
      const PrefixSet U = parse_prefix_set(p.U, m.z());
      value = reachability(m, U);
      j["U"] = prefix_set_json(U);
      j["p_plus"] = m.p_plus();
    } else if (p.family == "leader-trie") {
      const LeaderTrieModel m = leader_trie_model(p, rng);
      const PrefixSet U = parse_prefix_set(p.U, std::vector<Token>(m.vocab().H, 1));
      value = reachability(m, U);
      j["U"] = prefix_set_json(U);
    } else if (p.family == "bridge") {
      const BridgeInstance inst = bridge_instance(p);
      const PrefixSet U = parse_prefix_set(p.U, inst.target());
      value = reachability(inst.generator(Prompt::hard), U);
      j["U"] = prefix_set_json(U);
      j["p_plus"] = inst.signal().p_plus;
    } else {
      throw UsageError("unknown --family '" + p.family + "'");
    }
    j["reachability"] = value;
  } else if (what == "tv") {
    RngStream rng(p.seed_value());
    const HiddenPathModel a = hidden_path_model(p, rng);
    const HiddenPathModel b = hidden_path_twin(a, rng);
    const double tv = tv_distance(pathfull_law(a), pathfull_law(b));
    const double reach = reachability(a, PrefixSet{a.tip()});
    j.update(json{{"K", a.vocab().K},
                  {"H", a.vocab().H},
                  {"lambda", a.lambda()},
                  {"z", tokens_json(a.z())},
                  {"z_twin", tokens_json(b.z())},
                  {"tv", tv},
                  {"reach_tip", reach},
                  {"bound_holds", tv <= reach + 1e-10}});
  } else if (what == "gibbs") {
    const BridgeInstance inst = bridge_instance(p);
    const GibbsPolicy g = gibbs_policy(inst);
    j.update(json{{"q0", inst.q0()},
                  {"R", inst.R()},
                  {"N", inst.N()},
                  {"Z", g.Z()},
                  {"Z_closed_form", 5.0 - inst.q0()},
                  {"target_mass", g.target_mass()},
                  {"target_mass_closed_form", 4.0 / (5.0 - inst.q0())}});
  } else if (what == "objective") {
    const BridgeInstance inst = bridge_instance(p);
    const GibbsPolicy g = gibbs_policy(inst);
    j.update(json{{"J_base", evaluate_objective(inst, PromptPolicy::base())},
                  {"J_gibbs", evaluate_objective(inst, g.as_prompt_policy())},
                  {"eta_beta_log_Z", inst.pub().eta * inst.pub().beta * std::log(g.Z())}});
  } else if (what == "certificate") {
    BridgePublic pub;
    pub.K = p.i(p.K);
    pub.D = p.i(p.D);
    pub.L = p.i(p.L);
    pub.lambda = p.d(p.lambda);
    pub.scaffold.assign(pub.D, 1);
    pub.validate();
    j.update(json{{"K", pub.K},
                  {"D", pub.D},
                  {"L", pub.L},
                  {"q_g", p.d(p.qg)},
                  {"q_r", p.d(p.qr)},
                  {"N", pub.N()},
                  {"certificate", lower_bound_certificate(pub, p.d(p.qg), p.d(p.qr))}});
  } else {
    throw UsageError("unknown analysis '" + what + "'");
  }
  out << j.dump() << '\n';
  return kExitOk;
}

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{"K",     "H",      "D",       "L",           "lambda",
                                             "eta",   "beta",   "delta",   "xi",          "noise",
                                             "S",     "trials", "seed",    "out",         "H_list",
                                             "q_list", "cert_H_list", "q_r", "threads", "record_wallclock"};
  return keys;
}

inline int cmd_experiment(const std::string& name, const std::string& config_path,
                          const std::map<std::string, std::string>& overrides, std::ostream& out,
                          std::ostream& err) {
  ExperimentConfig cfg;
  if (!config_path.empty()) cfg.load_file(config_path);
  cfg.apply_environment();
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  if (!name.empty()) cfg.name = name;
  if (cfg.name.empty()) throw UsageError("experiment name missing");
  const ExperimentReport rep = run_experiment(cfg);
  if (!cfg.out.empty()) emit_report(rep, cfg.out);

  json cells = json::array();
  for (const auto& c : rep.cells)
    cells.push_back(json{{"cell", c.cell},
                         {"trials", c.trials},
                         {"success_rate", c.success_rate},
                         {"ci95", {c.ci_lo, c.ci_hi}},
                         {"mean_queries", c.mean_queries},
                         {"max_queries", c.max_queries},
                         {"theory", {{c.theory_name, c.theory}}}});
  json checks = json::array();
  for (const auto& ch : rep.checks) {
    checks.push_back(json{{"name", ch.name}, {"pass", ch.pass}, {"detail", ch.detail}});
    if (!ch.pass) err << "check failed: " << ch.name << ": " << ch.detail << '\n';
  }
  out << json{{"command", "experiment"},
              {"experiment", rep.name},
              {"seed", rep.seed},
              {"cells", cells},
              {"notes", rep.notes},
              {"checks", checks},
              {"passed", rep.all_passed()}}
             .dump()
      << '\n';
  return rep.all_passed() ? kExitOk : kExitFailed;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using detail::Params;
  CLI::App app{"prefix_oracle: oracle-access experiments over autoregressive prefix trees", "prefix_oracle"};
  app.require_subcommand(1);

  Params params;
  auto* rhp = app.add_subcommand("recover-hidden-path", "chosen-prefix majority recovery of a hidden path");
  detail::add_flags(rhp, params, {"K", "H", "lambda", "delta", "seed", "model", "out"});
  auto* rtl = app.add_subcommand("recover-trie-logit", "breadth-first leader-trie recovery from logits");
  detail::add_flags(rtl, params, {"K", "H", "xi", "noise", "seed", "model", "out"});
  auto* rts = app.add_subcommand("recover-trie-sample", "breadth-first leader-trie recovery from samples");
  detail::add_flags(rts, params, {"K", "H", "S", "delta", "seed", "model", "out"});
  auto* rss = app.add_subcommand("recover-seqscore", "hidden-path recovery from exact sequence scores");
  detail::add_flags(rss, params, {"K", "H", "lambda", "suffix", "seed", "model", "out"});
  auto* brg = app.add_subcommand("bridge", "KL-regularized post-training with one reward query");
  detail::add_flags(brg, params, {"K", "D", "L", "lambda", "eta", "beta", "delta", "seed", "model", "out"});

  auto* ana = app.add_subcommand("analyze", "exact analysis quantities");
  ana->require_subcommand(1);
  std::map<std::string, CLI::App*> analyses;
  analyses["reach"] = ana->add_subcommand("reach", "reachability of a prefix set");
  detail::add_flags(analyses["reach"], params, {"family", "K", "H", "D", "L", "lambda", "eta", "beta", "U", "seed", "model"});
  analyses["tv"] = ana->add_subcommand("tv", "exact one-query PathFull TV of hidden-path twins");
  detail::add_flags(analyses["tv"], params, {"K", "H", "lambda", "seed", "model"});
  analyses["gibbs"] = ana->add_subcommand("gibbs", "Gibbs optimizer normalizer and target mass");
  detail::add_flags(analyses["gibbs"], params, {"K", "D", "L", "lambda", "eta", "beta", "seed", "model"});
  analyses["objective"] = ana->add_subcommand("objective", "objective of the base and optimal policies");
  detail::add_flags(analyses["objective"], params, {"K", "D", "L", "lambda", "eta", "beta", "seed", "model"});
  analyses["certificate"] = ana->add_subcommand("certificate", "no-reset success-probability ceiling");
  detail::add_flags(analyses["certificate"], params, {"K", "D", "L", "lambda", "qg", "qr"});

  auto* exp = app.add_subcommand("experiment", "run a named experiment");
  std::string exp_name, exp_config;
  exp->add_option("name", exp_name, "hidden-path-scaling|no-reset-hardness|leader-trie-matrix|bridge-separation");
  exp->add_option("--config", exp_config, "key=value config file");
  std::map<std::string, std::string> exp_values;
  for (const auto& key : detail::config_keys()) exp->add_option("--" + key, exp_values[key], "config key " + key);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (rhp->parsed()) return detail::cmd_recover_hidden_path(params, out);
    if (rtl->parsed()) return detail::cmd_recover_trie_logit(params, out);
    if (rts->parsed()) return detail::cmd_recover_trie_sample(params, out);
    if (rss->parsed()) return detail::cmd_recover_seqscore(params, out);
    if (brg->parsed()) return detail::cmd_bridge(params, out);
    for (const auto& [name, sub] : analyses)
      if (sub->parsed()) return detail::cmd_analyze(name, params, out);
    if (exp->parsed()) {
      std::map<std::string, std::string> overrides;
      for (const auto& key : detail::config_keys())
        if (exp->count("--" + key)) overrides[key] = exp_values[key];
      return detail::cmd_experiment(exp_name, exp_config, overrides, out, err);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace prefix_oracle::cli
