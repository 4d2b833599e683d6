#pragma once

#include <string>

#include "mmsa/params.hpp"
#include "mmsa/rng.hpp"
#include "mmsa/tensor.hpp"

namespace mmsa {

struct MixerConfig {
  int n_agents = 0;
  int state_dim = 0;    // real global state width
  int rollout_dim = 0;  // aggregated imagined-latent width ((j+1) * latent)
  int embed_dim = 32;
  int hypernet_hidden = 64;
  // Ablations zero-fill their context slot without changing any shape, so
  // checkpoints stay structurally identical across variants.
  bool use_global_state = true;
  bool use_rollout = true;
};

// Monotonic mixing network: per-row weights are generated by hypernetworks
// from the context [global_state ⊕ rollout] and passed through |.|, so
// Q_tot is non-decreasing in every agent utility regardless of parameters.
//   hidden = elu(|W1(ctx)| * q + b1(ctx));  Q_tot = |W2(ctx)| . hidden + b2(ctx)
// W1 and W2 come from two-layer hypernets (elu hidden), b1 from a single
// linear map, b2 from a two-layer hypernet. The rollout slot enters through
// stop_gradient: TD error never trains what produced it.
class Mixer {
 public:
  Mixer(ParamGroup& g, const std::string& name, const MixerConfig& cfg, Rng& rng);

  const MixerConfig& config() const { return cfg_; }

  // q_agents [B x n_agents], global_state [B x state_dim],
  // rollout [B x rollout_dim] -> Q_tot [B x 1].
  Tensor mix(Tape& t, const Tensor& q_agents, const Tensor& global_state,
             const Tensor& rollout) const;

 private:
  MixerConfig cfg_;
  Linear w1_1_, w1_2_;  // ctx -> hidden -> n_agents*embed
  Linear b1_;           // ctx -> embed
  Linear w2_1_, w2_2_;  // ctx -> hidden -> embed
  Linear b2_1_, b2_2_;  // ctx -> hidden -> 1
};

// y = sg(r + gamma * (1 - terminated) * q_tot_next); [B x 1] each. The whole
// target is a constant with respect to every online parameter.
Tensor td_target(Tape& t, const Tensor& rewards, const Tensor& terminals,
                 double gamma, const Tensor& q_tot_next);

// Masked mean squared TD error: mean over rows with mask 1 of (q_tot - y)^2.
Tensor td_loss(Tape& t, const Tensor& q_tot, const Tensor& y,
               const Tensor& mask01);

}  // namespace mmsa
