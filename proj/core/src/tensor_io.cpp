#include "nhop/tensor_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace nhop {

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void write_model(std::ostream& os, const TransitionTensor& ptt, const CostModel* costs,
                 const std::map<std::string, std::string>& metadata) {
  const Index S = ptt.num_states();
  const Index A = ptt.num_actions();
  os << "# nhop-eql model v1\n";
  for (const auto& [k, v] : metadata) os << "meta " << k << ' ' << v << '\n';

  os << "ptt " << S << ' ' << A << '\n';
  for (Index s = 0; s < S; ++s)
    for (Index a = 0; a < A; ++a)
      for (Index n = 0; n < S; ++n)
        if (const double p = ptt(s, n, a); p != 0.0)
          os << s << ' ' << n << ' ' << a << ' ' << format_double(p) << '\n';
  os << "end\n";

  if (!costs) return;
  os << "costs " << S << ' ' << A << '\n';
  for (Index s = 0; s < S; ++s)
    for (Index a = 0; a < A; ++a) os << s << ' ' << a << ' ' << format_double(costs->expected(s, a)) << '\n';
  os << "end\n";
  if (costs->has_transition_costs()) {
    os << "tcosts " << S << ' ' << A << '\n';
    for (Index s = 0; s < S; ++s)
      for (Index a = 0; a < A; ++a)
        for (Index n = 0; n < S; ++n)
          if (const double c = costs->transition(s, n, a); c != 0.0)
            os << s << ' ' << n << ' ' << a << ' ' << format_double(c) << '\n';
    os << "end\n";
  }
}

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw std::runtime_error("model file line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& tok, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) fail(line, "bad number '" + tok + "'");
  return v;
}

Index parse_index(const std::string& tok, Index bound, std::size_t line) {
  Index v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) fail(line, "bad index '" + tok + "'");
  if (v >= bound) fail(line, "index " + tok + " out of range");
  return v;
}

std::vector<std::string> split(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

}  // namespace

ModelFile read_model(std::istream& is) {
  ModelFile out;
  std::optional<Matrix> expected;
  std::vector<Matrix> tcosts;
  std::vector<Matrix> ptt;

  std::string section;
  Index S = 0;
  Index A = 0;
  std::size_t lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    const auto tok = split(line);
    if (tok.empty() || tok[0].front() == '#') continue;

    if (section.empty()) {
      if (tok[0] == "meta") {
        if (tok.size() < 3) fail(lineno, "meta needs a key and a value");
        out.metadata[tok[1]] = line.substr(line.find(tok[1]) + tok[1].size() + 1);
        continue;
      }
      if (tok[0] != "ptt" && tok[0] != "costs" && tok[0] != "tcosts") fail(lineno, "unknown section '" + tok[0] + "'");
      if (tok.size() != 3) fail(lineno, "section header needs <S> <A>");
      const Index s = parse_index(tok[1], static_cast<Index>(-1), lineno);
      const Index a = parse_index(tok[2], static_cast<Index>(-1), lineno);
      if (s == 0 || a == 0) fail(lineno, "dimensions must be positive");
      if (S != 0 && (s != S || a != A)) fail(lineno, "dimensions disagree with an earlier section");
      S = s;
      A = a;
      section = tok[0];
      const auto n = static_cast<Eigen::Index>(S);
      if (section == "ptt") ptt.assign(A, Matrix::Zero(n, n));
      if (section == "tcosts") tcosts.assign(A, Matrix::Zero(n, n));
      if (section == "costs") expected = Matrix::Zero(n, static_cast<Eigen::Index>(A));
      continue;
    }

    if (tok[0] == "end") {
      section.clear();
      continue;
    }
    if (section == "costs") {
      if (tok.size() != 3) fail(lineno, "cost record needs <s> <a> <value>");
      const Index s = parse_index(tok[0], S, lineno);
      const Index a = parse_index(tok[1], A, lineno);
      (*expected)(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = parse_double(tok[2], lineno);
    } else {
      if (tok.size() != 4) fail(lineno, "record needs <s> <s'> <a> <value>");
      const Index s = parse_index(tok[0], S, lineno);
      const Index n = parse_index(tok[1], S, lineno);
      const Index a = parse_index(tok[2], A, lineno);
      auto& target = section == "ptt" ? ptt : tcosts;
      target[a](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(n)) = parse_double(tok[3], lineno);
    }
  }
  if (!section.empty()) fail(lineno, "missing 'end' for section " + section);

  if (!ptt.empty()) out.ptt = TransitionTensor(std::move(ptt));
  if (!tcosts.empty()) {
    if (!out.ptt) throw std::runtime_error("model file: tcosts section requires a ptt section");
    auto costs = CostModel::from_transitions(*out.ptt, std::move(tcosts));
    if (expected && (costs.expected() - *expected).cwiseAbs().maxCoeff() > 1e-9)
      throw std::runtime_error("model file: costs and tcosts sections disagree");
    out.costs = std::move(costs);
  } else if (expected) {
    out.costs = CostModel::from_expected(std::move(*expected));
  }
  return out;
}

void save_model(const std::string& path, const TransitionTensor& ptt, const CostModel* costs,
                const std::map<std::string, std::string>& metadata) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_model(os, ptt, costs, metadata);
  if (!os) throw std::runtime_error("failed writing " + path);
}

ModelFile load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_model(is);
}

}  // namespace nhop
