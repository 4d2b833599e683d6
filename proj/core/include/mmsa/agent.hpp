#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmsa/params.hpp"
#include "mmsa/rng.hpp"
#include "mmsa/sale.hpp"
#include "mmsa/tensor.hpp"

namespace mmsa {

// Linear exploration schedule, clamped at both ends.
struct EpsilonSchedule {
  double start = 1.0;
  double finish = 0.05;
  long long anneal_steps = 50000;
};

double epsilon_at(const EpsilonSchedule& s, long long t);

struct AgentConfig {
  int obs_dim = 0;
  int n_actions = 0;
  int n_agents = 0;  // width of the ID one-hot appended to the recurrent input
  int z_dim = 16;    // width of each feature slot delivered by the encoders
  int hidden = 64;   // GRU state width
};

// One recurrent value network shared by all agents; the agent-ID one-hot in
// the recurrent input is what distinguishes roles. The recurrent core
// consumes [obs ⊕ last_action ⊕ id] once per step; the Q head scores each
// candidate action from [z^o ⊕ z^{oa} ⊕ φ^{oa} ⊕ h_t] with the updated
// hidden. q_scores consumes its feature inputs as-is: callers stop-gradient
// whatever the TD loss must not reach.
class AgentNetwork {
 public:
  AgentNetwork(ParamGroup& g, const std::string& name, const AgentConfig& cfg,
               Rng& rng);

  const AgentConfig& config() const { return cfg_; }

  // h_{t-1} -> h_t. obs [B x obs_dim], last_action [B x n_actions],
  // agent_id [B x n_agents], h_prev [B x hidden].
  Tensor hidden_step(Tape& t, const Tensor& obs, const Tensor& last_action,
                     const Tensor& agent_id, const Tensor& h_prev) const;

  // All-action scores [B x n_actions] from precomputed features: z_o
  // [B x z_dim], one z_oa/phi_oa tensor per candidate action [B x z_dim],
  // h [B x hidden]. The head's first layer is evaluated column-split (shared
  // part once, action part per candidate), identical in value to one dense
  // layer over the concatenated input.
  Tensor q_scores(Tape& t, const Tensor& z_o, const std::vector<Tensor>& z_oa,
                  const std::vector<Tensor>& phi_oa, const Tensor& h) const;

 private:
  AgentConfig cfg_;
  Linear in_;    // [obs ⊕ last_action ⊕ id] -> hidden
  GruCell gru_;  // hidden -> hidden
  Linear q1_;    // [z ⊕ z ⊕ z ⊕ hidden] -> hidden (column-split at eval)
  Linear q2_;    // hidden -> 1
};

struct AgentStep {
  Tensor q;  // [B x n_actions]
  Tensor h;  // [B x hidden]
};

// Full per-agent step on the observation path: update the hidden, build the
// embedding triple for every candidate action, score. Encoder outputs are
// stop-gradiented before the Q head, so backward from q touches only agent
// parameters.
AgentStep agent_forward(Tape& t, const AgentNetwork& net,
                        const SaleEncoders& enc, const Tensor& obs,
                        const Tensor& last_action, const Tensor& agent_id,
                        const Tensor& h_prev);

struct JointForward {
  std::vector<Tensor> q;  // per agent [B x n_actions]
  std::vector<Tensor> h;  // per agent [B x hidden]
  Tensor h_joint;         // [B x n_agents*hidden]
};

// agent_forward over all agents on shared weights; h_joint is the
// concatenated hidden the world model conditions on.
JointForward joint_forward(Tape& t, const AgentNetwork& net,
                           const SaleEncoders& enc,
                           const std::vector<Tensor>& obs,
                           const std::vector<Tensor>& last_action,
                           const std::vector<Tensor>& h_prev);

// Greedy joint action for one batch row; ties break to the lowest index.
std::vector<int> greedy_joint(const JointForward& jf, int row);

// Argmax over available entries, lowest index on ties; empty avail means all
// available. Throws EnvError when nothing is available.
int masked_argmax(const std::vector<double>& q,
                  const std::vector<std::uint8_t>& avail);

struct ActResult {
  std::vector<int> actions;            // per agent
  std::vector<std::vector<double>> q;  // per agent [n_actions]
  std::vector<std::vector<double>> h;  // per agent [hidden]
};

// One acting step for the whole team on a value-only tape: agents are stacked
// as batch rows through the shared network, then actions are drawn
// epsilon-greedily under the availability masks (epsilon 0 = greedy).
// last_action entries of -1 encode "episode start" (zero vector).
ActResult select_actions(const AgentNetwork& net, const SaleEncoders& enc,
                         const std::vector<std::vector<double>>& obs,
                         const std::vector<std::vector<std::uint8_t>>& avail,
                         const std::vector<int>& last_action,
                         const std::vector<std::vector<double>>& h_prev,
                         double epsilon, Rng& rng);

}  // namespace mmsa
