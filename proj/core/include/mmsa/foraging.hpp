#pragma once

#include <string>

#include "mmsa/env.hpp"
#include "mmsa/rng.hpp"

namespace mmsa {

// Parsed form of a foraging template like "Foraging-2s-8x8-2p-2f-coop-v2".
struct ForagingTemplate {
  int sight = -1;      // Chebyshev radius; -1 = full observability
  int rows = 0, cols = 0;
  int n_agents = 0;
  int n_food = 0;
  bool coop = false;   // every food requires the whole team's level sum
};

// Parses the template; throws EnvError naming the offending position.
// Accepts the template with or without the leading "Foraging-".
ForagingTemplate parse_foraging_template(const std::string& name);

// Level-based foraging grid world. Agents (level 1 each) move in the four
// compass directions and Load orthogonally adjacent food; food is collected
// when the loading agents' level sum reaches the food level. The shared
// reward per collected food is its level divided by the total spawned level,
// so the undiscounted episode return lies in [0, 1].
//
// Actions: 0 None, 1 North (y-1), 2 South (y+1), 3 East (x+1), 4 West (x-1),
// 5 Load. Moving into an occupied cell is unavailable; simultaneous moves
// into one cell are resolved in ascending agent index.
//
// Observation per agent: (dx, dy, level) per food, then per other agent,
// then own level; entries beyond the sight radius (or collected food) are
// (-1, -1, -1). Global state: absolute (x, y, level) per food then agent.
class ForagingEnv : public Env {
 public:
  ForagingEnv(const ForagingTemplate& tpl, double gamma, int episode_limit);
  const DecPomdpSpec& spec() const override { return spec_; }
  StepResult reset(std::uint64_t seed) override;
  StepResult step(const std::vector<int>& joint_action) override;

  // Introspection for tests.
  struct Entity {
    int x = -1, y = -1, level = 0;
    bool active = false;
  };
  const std::vector<Entity>& foods() const { return foods_; }
  const std::vector<Entity>& agents() const { return agents_; }

 private:
  StepResult observe(double reward, bool terminated, bool truncated) const;
  bool in_bounds(int x, int y) const { return x >= 0 && x < tpl_.cols && y >= 0 && y < tpl_.rows; }
  bool cell_free(int x, int y) const;
  bool food_adjacent(int x, int y) const;
  std::vector<std::uint8_t> avail_for(int agent) const;

  ForagingTemplate tpl_;
  DecPomdpSpec spec_;
  std::vector<Entity> foods_;
  std::vector<Entity> agents_;
  double total_food_level_ = 0.0;
  int step_count_ = 0;
  bool done_ = true;
};

}  // namespace mmsa
