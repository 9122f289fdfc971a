#pragma once

// Line-oriented text format for models.
//
//   K H hidden-path        K H leader-trie        K H bridge
//   lambda <x>             <prefix>:<token>       D <d>
//   path <t1> ... <tH>     ...                    L <l>
//                                                 lambda|eta|beta <x>
//                                                 scaffold <v1> ... <vD>
//                                                 suffix <s1> ... <sL>
//                                                 bit <b>
//                                                 terminals <tau0> <tau1>
//                                                 [reward <R>]
//
// Prefixes are dot separated with "-" for the root. Reals are written with
// 17 significant digits so a write/read cycle is exact. Blank lines and lines
// starting with '#' are ignored.

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>

#include "prefix_oracle/bridge.hpp"
#include "prefix_oracle/hidden_path.hpp"
#include "prefix_oracle/leader_trie.hpp"

namespace prefix_oracle {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::string join_tokens(std::span<const Token> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(tokens[i]);
  }
  return out;
}

inline bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    return true;
  }
  return false;
}

inline double parse_real(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw FormatError("not a number: '" + s + "'");
  return v;
}

inline int parse_int(const std::string& s) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw FormatError("not an integer: '" + s + "'");
  }
  if (used != s.size()) throw FormatError("not an integer: '" + s + "'");
  return v;
}

inline std::vector<Token> rest_tokens(std::istringstream& in) {
  std::vector<Token> out;
  std::string item;
  while (in >> item) out.push_back(parse_int(item));
  return out;
}

}  // namespace detail

inline void write_model(std::ostream& out, const HiddenPathModel& m) {
  out << m.vocab().K << ' ' << m.vocab().H << " hidden-path\n";
  out << "lambda " << format_real(m.lambda()) << '\n';
  out << "path " << detail::join_tokens(m.z()) << '\n';
}

inline void write_model(std::ostream& out, const LeaderTrieModel& m) {
  out << m.vocab().K << ' ' << m.vocab().H << " leader-trie\n";
  for (const auto& [p, b] : m.trie().branch()) out << format_tokens(p) << ':' << b << '\n';
}

inline void write_model(std::ostream& out, const BridgeInstance& inst) {
  const BridgePublic& pub = inst.pub();
  out << pub.K << ' ' << pub.H() << " bridge\n";
  out << "D " << pub.D << '\n' << "L " << pub.L << '\n';
  out << "lambda " << format_real(pub.lambda) << '\n';
  out << "eta " << format_real(pub.eta) << '\n';
  out << "beta " << format_real(pub.beta) << '\n';
  out << "scaffold " << detail::join_tokens(pub.scaffold) << '\n';
  out << "suffix " << detail::join_tokens(inst.suffix()) << '\n';
  out << "bit " << inst.bit() << '\n';
  out << "terminals " << pub.tau0 << ' ' << pub.tau1 << '\n';
  if (pub.reward_override) out << "reward " << format_real(*pub.reward_override) << '\n';
}

using AnyModel = std::variant<HiddenPathModel, LeaderTrieModel, BridgeInstance>;

inline void write_model(std::ostream& out, const AnyModel& m) {
  std::visit([&](const auto& x) { write_model(out, x); }, m);
}

inline AnyModel read_model(std::istream& in) {
  using detail::parse_int;
  using detail::parse_real;
  std::string line;
  if (!detail::next_content_line(in, line)) throw FormatError("empty model file");
  std::istringstream header(line);
  int K = 0, H = 0;
  std::string family;
  if (!(header >> K >> H >> family)) throw FormatError("bad header line: '" + line + "'");
  const VocabSpec vocab(K, H);

  if (family == "hidden-path") {
    std::optional<double> lambda;
    std::optional<Completion> path;
    while (detail::next_content_line(in, line)) {
      std::istringstream row(line);
      std::string key;
      row >> key;
      if (key == "lambda") {
        std::string v;
        row >> v;
        lambda = parse_real(v);
      } else if (key == "path") {
        path = detail::rest_tokens(row);
      } else {
        throw FormatError("unknown hidden-path field '" + key + "'");
      }
    }
    if (!lambda || !path) throw FormatError("hidden-path model needs 'lambda' and 'path'");
    return HiddenPathModel(vocab, *lambda, *path);
  }

  if (family == "leader-trie") {
    BranchMap branch;
    while (detail::next_content_line(in, line)) {
      const auto colon = line.find(':');
      if (colon == std::string::npos) throw FormatError("expected '<prefix>:<token>', got '" + line + "'");
      Prefix p = parse_tokens(line.substr(0, colon));
      const Token b = parse_int(line.substr(colon + 1));
      if (!branch.emplace(std::move(p), b).second) throw FormatError("duplicate trie node in '" + line + "'");
    }
    return LeaderTrieModel(LeaderTrie(vocab, std::move(branch)));
  }

  if (family == "bridge") {
    BridgePublic pub;
    pub.K = K;
    std::vector<Token> suffix;
    int bit = -1;
    while (detail::next_content_line(in, line)) {
      std::istringstream row(line);
      std::string key, v;
      row >> key;
      if (key == "D" || key == "L" || key == "bit") {
        row >> v;
        (key == "D" ? pub.D : key == "L" ? pub.L : bit) = parse_int(v);
      } else if (key == "lambda" || key == "eta" || key == "beta" || key == "reward") {
        row >> v;
        const double x = parse_real(v);
        if (key == "lambda") pub.lambda = x;
        else if (key == "eta") pub.eta = x;
        else if (key == "beta") pub.beta = x;
        else pub.reward_override = x;
      } else if (key == "scaffold") {
        pub.scaffold = detail::rest_tokens(row);
      } else if (key == "suffix") {
        suffix = detail::rest_tokens(row);
      } else if (key == "terminals") {
        auto t = detail::rest_tokens(row);
        if (t.size() != 2) throw FormatError("'terminals' needs two tokens");
        pub.tau0 = t[0];
        pub.tau1 = t[1];
      } else {
        throw FormatError("unknown bridge field '" + key + "'");
      }
    }
    if (pub.H() != H) throw FormatError("bridge header H must equal D + L + 1");
    return BridgeInstance(std::move(pub), std::move(suffix), bit);
  }

  throw FormatError("unknown model family '" + family + "'");
}

inline std::string to_text(const AnyModel& m) {
  std::ostringstream out;
  write_model(out, m);
  return out.str();
}

inline AnyModel from_text(const std::string& text) {
  std::istringstream in(text);
  return read_model(in);
}

}  // namespace prefix_oracle
