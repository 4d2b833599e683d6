#pragma once

#include <string>
#include <vector>

#include "mmsa/env.hpp"
#include "mmsa/rng.hpp"

namespace mmsa {

// Fully enumerable Dec-POMDP with deterministic per-agent observation
// symbols, a stochastic transition table, and a known behavior policy.
// Joint actions are flattened row-major with agent 0 as the slowest index.
struct TabularDecPomdp {
  int n_states = 0;
  int n_agents = 0;
  int n_actions = 0;  // per agent
  int n_obs = 0;      // observation symbols per agent
  int episode_limit = 8;
  double gamma = 0.99;

  std::vector<double> transition;   // [n_states][n_joint][n_states]
  std::vector<double> reward;       // [n_states][n_joint]
  std::vector<int> obs;             // [n_states][n_agents] -> symbol
  std::vector<double> initial_dist; // [n_states]
  std::vector<double> policy;       // [n_agents][n_obs][n_actions]

  int n_joint() const;
  int joint_index(const std::vector<int>& actions) const;
  std::vector<int> joint_actions(int joint) const;
  double trans(int s, int joint, int s_next) const;
  double rew(int s, int joint) const;
  int obs_of(int s, int agent) const;
  double pol(int agent, int o, int a) const;

  // Checks stochasticity of every T row, the initial distribution, the
  // policy rows (all within 1e-12) and symbol ranges; throws EnvError.
  void validate() const;
};

// Parses the plain-text table format:
//   states N / agents N / actions N / obs N   (header, any order, required)
//   limit N           (optional, default 8)
//   gamma G           (optional, default 0.99)
//   start s prob      (optional; uniform when absent)
//   T s a1 .. aN s' prob
//   R s a1 .. aN value
//   O s agent obs
//   pol agent obs action prob   (optional; uniform when absent)
// '#' starts a comment. Unlisted T entries default to 0, R to 0.
// Throws EnvError with the line number on malformed input.
TabularDecPomdp load_tabular(const std::string& path);
TabularDecPomdp parse_tabular(const std::string& text);

// Random model generator for oracle tests: Dirichlet-like rows (normalized
// uniforms), random rewards in [-1, 1], uniform-random observation symbols,
// random start distribution and behavior policy.
TabularDecPomdp make_random_tabular(Rng& rng, int n_states, int n_agents, int n_actions,
                                    int n_obs, int episode_limit);

// Env adapter: observations and global state are one-hot encodings of the
// observation symbol and the true state; episodes run to the limit.
class TabularEnv : public Env {
 public:
  TabularEnv(TabularDecPomdp model, double gamma, int episode_limit_override);
  const DecPomdpSpec& spec() const override { return spec_; }
  StepResult reset(std::uint64_t seed) override;
  StepResult step(const std::vector<int>& joint_action) override;
  const TabularDecPomdp& model() const { return model_; }
  int current_state() const { return state_; }

 private:
  StepResult observe(double reward, bool truncated) const;

  TabularDecPomdp model_;
  DecPomdpSpec spec_;
  Rng rng_{0};
  int state_ = 0;
  int step_count_ = 0;
  bool done_ = true;
};

}  // namespace mmsa
