#pragma once

#include "nhop/mdp.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>

namespace nhop {

/**
 * Plain-text model files.
 *
 *   # comment
 *   meta <key> <value>
 *   ptt <S> <A>
 *   <s> <s'> <a> <probability>      one record per nonzero entry
 *   end
 *   costs <S> <A>
 *   <s> <a> <expected cost>         one record per (s, a)
 *   end
 *   tcosts <S> <A>                  optional
 *   <s> <s'> <a> <cost>             one record per nonzero entry
 *   end
 *
 * Values are written in shortest round-trip form, so a write/read cycle is
 * bit-exact.
 */
struct ModelFile {
  std::optional<TransitionTensor> ptt;
  std::optional<CostModel> costs;
  std::map<std::string, std::string> metadata;
};

void write_model(std::ostream& os, const TransitionTensor& ptt, const CostModel* costs = nullptr,
                 const std::map<std::string, std::string>& metadata = {});

/// Throws std::runtime_error naming the offending line on malformed input.
ModelFile read_model(std::istream& is);

void save_model(const std::string& path, const TransitionTensor& ptt, const CostModel* costs = nullptr,
                const std::map<std::string, std::string>& metadata = {});
ModelFile load_model(const std::string& path);

/// Shortest representation that parses back to the same double.
std::string format_double(double x);

}  // namespace nhop
