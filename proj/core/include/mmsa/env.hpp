#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmsa {

// Static description of a cooperative multi-agent environment.
struct DecPomdpSpec {
  int n_agents = 0;
  int obs_dim = 0;       // per-agent observation length
  int state_dim = 0;     // global state length
  int n_actions = 0;     // per-agent discrete action count
  int episode_limit = 1; // steps before truncation
  double gamma = 0.99;
};

// One environment transition (or the initial configuration after reset,
// in which case reward is 0 and the flags are false).
struct StepResult {
  std::vector<std::vector<double>> observations;   // [n_agents][obs_dim]
  std::vector<double> global_state;                // [state_dim]
  double reward = 0.0;                             // shared team reward
  bool terminated = false;                         // environment-terminal
  bool truncated = false;                          // hit episode_limit
  std::vector<std::vector<std::uint8_t>> avail_actions;  // [n_agents][n_actions]
};

struct EnvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const DecPomdpSpec& spec() const = 0;
  // Deterministic initial configuration for a given seed.
  virtual StepResult reset(std::uint64_t seed) = 0;
  // Advances one step. Passing an unavailable or out-of-range action, or
  // stepping a finished episode, throws EnvError (never silent clamping).
  virtual StepResult step(const std::vector<int>& joint_action) = 0;
};

// One-shot cooperative matrix game over an arbitrary payoff tensor
// (row-major over joint actions, agent 0 slowest index).
class MatrixGame : public Env {
 public:
  MatrixGame(int n_agents, int n_actions, std::vector<double> payoffs, double gamma);
  const DecPomdpSpec& spec() const override { return spec_; }
  StepResult reset(std::uint64_t seed) override;
  StepResult step(const std::vector<int>& joint_action) override;

 private:
  DecPomdpSpec spec_;
  std::vector<double> payoffs_;
  bool done_ = true;
};

// Exhaustive joint-action -> episode-return table for one-step environments.
// Throws EnvError for multi-step environments.
std::map<std::vector<int>, double> enumerate_joint_returns(Env& env);

// Environment registry. Names: "coordination", "climbing", foraging
// templates like "Foraging-2s-5x5-2p-1f-coop-v2" (the "Foraging-" prefix is
// optional), and "tabular:<path>". episode_limit_override <= 0 keeps the
// environment's default.
std::unique_ptr<Env> make_env(const std::string& name, double gamma, int episode_limit_override = 0);

}  // namespace mmsa
