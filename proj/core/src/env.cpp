#include "mmsa/env.hpp"

#include <cmath>

#include "mmsa/foraging.hpp"
#include "mmsa/tabular.hpp"

namespace mmsa {

MatrixGame::MatrixGame(int n_agents, int n_actions, std::vector<double> payoffs, double gamma)
    : payoffs_(std::move(payoffs)) {
  if (n_agents < 1 || n_actions < 1) throw EnvError("matrix game: need >=1 agent and action");
  std::size_t want = 1;
  for (int i = 0; i < n_agents; ++i) want *= static_cast<std::size_t>(n_actions);
  if (payoffs_.size() != want)
    throw EnvError("matrix game: payoff tensor has " + std::to_string(payoffs_.size()) +
                   " entries, want " + std::to_string(want));
  spec_.n_agents = n_agents;
  spec_.n_actions = n_actions;
  spec_.obs_dim = 1 + n_agents;  // constant 1 plus agent one-hot
  spec_.state_dim = 1;
  spec_.episode_limit = 1;
  spec_.gamma = gamma;
}

StepResult MatrixGame::reset(std::uint64_t) {
  done_ = false;
  StepResult r;
  r.global_state = {1.0};
  for (int i = 0; i < spec_.n_agents; ++i) {
    std::vector<double> obs(spec_.obs_dim, 0.0);
    obs[0] = 1.0;
    obs[1 + i] = 1.0;
    r.observations.push_back(std::move(obs));
    r.avail_actions.emplace_back(spec_.n_actions, std::uint8_t{1});
  }
  return r;
}

StepResult MatrixGame::step(const std::vector<int>& joint_action) {
  if (done_) throw EnvError("matrix game: step on a finished episode");
  if (static_cast<int>(joint_action.size()) != spec_.n_agents)
    throw EnvError("matrix game: joint action size mismatch");
  std::size_t idx = 0;
  for (int a : joint_action) {
    if (a < 0 || a >= spec_.n_actions)
      throw EnvError("matrix game: action " + std::to_string(a) + " out of range");
    idx = idx * static_cast<std::size_t>(spec_.n_actions) + static_cast<std::size_t>(a);
  }
  done_ = true;
  StepResult r = reset(0);  // same constant observations
  done_ = true;
  r.reward = payoffs_[idx];
  r.terminated = true;
  return r;
}

std::map<std::vector<int>, double> enumerate_joint_returns(Env& env) {
  const DecPomdpSpec& sp = env.spec();
  if (sp.episode_limit != 1)
    throw EnvError("enumerate_joint_returns: environment is not single-step");
  std::map<std::vector<int>, double> table;
  std::vector<int> joint(sp.n_agents, 0);
  while (true) {
    env.reset(0);
    StepResult res = env.step(joint);
    table[joint] = res.reward;
    int i = sp.n_agents - 1;
    for (; i >= 0; --i) {
      if (++joint[i] < sp.n_actions) break;
      joint[i] = 0;
    }
    if (i < 0) break;
  }
  return table;
}

std::unique_ptr<Env> make_env(const std::string& name, double gamma, int episode_limit_override) {
  if (name == "coordination")
    return std::make_unique<MatrixGame>(2, 2, std::vector<double>{1, 0, 0, 1}, gamma);
  if (name == "climbing")
    return std::make_unique<MatrixGame>(2, 3, std::vector<double>{11, -30, 0, -30, 7, 6, 0, 0, 5},
                                        gamma);
  if (name.rfind("tabular:", 0) == 0)
    return std::make_unique<TabularEnv>(load_tabular(name.substr(8)), gamma, episode_limit_override);
  if (name.find("x") != std::string::npos && name.find("p-") != std::string::npos) {
    ForagingTemplate tpl = parse_foraging_template(name);
    return std::make_unique<ForagingEnv>(tpl, gamma,
                                         episode_limit_override > 0 ? episode_limit_override : 25);
  }
  throw EnvError("unknown environment: " + name);
}

}  // namespace mmsa
