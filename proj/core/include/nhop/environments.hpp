#pragma once

#include "nhop/mdp.hpp"
#include "nhop/random.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace nhop {

/**
 * A finite MDP that can be sampled: transition tensor, cost model, a build
 * seed and the order n of the n-hop environment it represents (1 for the
 * original environment). Immutable after construction; sampling only advances
 * the caller's RngStream, so one environment can serve many learners at once.
 */
class TabularEnvironment {
 public:
  struct Step {
    Index next_state;
    double cost;
  };

  /// Throws std::invalid_argument if the tensor fails validate_ptt(tol) or the
  /// costs are dimensioned differently.
  TabularEnvironment(TransitionTensor ptt, CostModel costs, std::uint64_t seed = 0, unsigned order = 1,
                     double tol = kStochasticTolerance);

  const TransitionTensor& ptt() const noexcept { return ptt_; }
  const CostModel& costs() const noexcept { return costs_; }
  std::uint64_t seed() const noexcept { return seed_; }
  unsigned order() const noexcept { return order_; }
  Index num_states() const noexcept { return ptt_.num_states(); }
  Index num_actions() const noexcept { return ptt_.num_actions(); }

  /// Draws s' ~ p_a(s, .). The cost is the transition cost when the model has
  /// one, the expected cost c_a(s) otherwise.
  Step step(Index s, Index a, RngStream& rng) const;

  /// Uniform initial state.
  Index reset(RngStream& rng) const { return rng.uniform_index(num_states()); }

 private:
  TransitionTensor ptt_;
  CostModel costs_;
  std::uint64_t seed_;
  unsigned order_;
  std::vector<std::vector<double>> cumulative_;  // indexed s * |A| + a
};

struct ErdosRenyiSpec {
  Index num_states = 30;
  Index num_actions = 2;
  double edge_probability = 0.2;
  std::uint64_t seed = 0;
};

/// One directed ER graph per action (self-edges allowed, zero out-degree rows
/// get a self-loop), row-normalized; costs i.i.d. uniform on [0, 1) per (s, a).
TabularEnvironment build_er_env(const ErdosRenyiSpec& spec);

struct GridCell {
  Index row;
  Index col;
  bool operator==(const GridCell&) const = default;
};

enum CliffAction : Index { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

/// Grid world. State index is row * cols + col; row 0 is the top row.
struct CliffWalkSpec {
  Index rows = 4;
  Index cols = 12;
  GridCell start{3, 0};
  GridCell goal{3, 11};
  std::vector<GridCell> cliff;

  /// Classic layout: start and goal at the bottom corners, cliff between them.
  /// cols = 0 picks 3 * rows.
  static CliffWalkSpec standard(Index rows, Index cols = 0);

  Index state_of(GridCell c) const { return c.row * cols + c.col; }
};

inline constexpr double kCliffCost = 1.0;
inline constexpr double kGoalCost = -1.0;
inline constexpr double kMoveCost = 0.01;

/// Deterministic moves; off-grid moves stay put. Entering a cliff cell costs 1
/// and returns the agent to start; entering the goal costs -1; every other
/// move costs 0.01. Any action taken at the goal returns the agent to start.
TabularEnvironment build_cliffwalk_env(const CliffWalkSpec& spec);

enum SisoAction : Index { kTransmit = 0, kSilent = 1 };

/**
 * Single-link transmitter with a finite buffer. State is buffer occupancy
 * 0..buffer_size. A transmit attempt with a nonempty buffer costs
 * transmit_cost and removes a packet with probability success_prob; then a
 * packet arrives with probability arrival_prob and is dropped (drop_cost) if
 * the buffer is full.
 */
struct SisoSpec {
  Index buffer_size = 5;
  double arrival_prob = 0.5;
  double success_prob = 0.8;
  double transmit_cost = 0.2;
  double drop_cost = 1.0;
};

TabularEnvironment build_siso_env(const SisoSpec& spec);

}  // namespace nhop
