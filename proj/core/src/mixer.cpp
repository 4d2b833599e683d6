#include "mmsa/mixer.hpp"

namespace mmsa {

Mixer::Mixer(ParamGroup& g, const std::string& name, const MixerConfig& cfg,
             Rng& rng)
    : cfg_(cfg),
      w1_1_(make_linear(g, name + ".w1_1", cfg.hypernet_hidden,
                        cfg.state_dim + cfg.rollout_dim, rng)),
      w1_2_(make_linear(g, name + ".w1_2", cfg.n_agents * cfg.embed_dim,
                        cfg.hypernet_hidden, rng)),
      b1_(make_linear(g, name + ".b1", cfg.embed_dim,
                      cfg.state_dim + cfg.rollout_dim, rng)),
      w2_1_(make_linear(g, name + ".w2_1", cfg.hypernet_hidden,
                        cfg.state_dim + cfg.rollout_dim, rng)),
      w2_2_(make_linear(g, name + ".w2_2", cfg.embed_dim, cfg.hypernet_hidden, rng)),
      b2_1_(make_linear(g, name + ".b2_1", cfg.hypernet_hidden,
                        cfg.state_dim + cfg.rollout_dim, rng)),
      b2_2_(make_linear(g, name + ".b2_2", 1, cfg.hypernet_hidden, rng)) {
  if (cfg.n_agents <= 0 || cfg.state_dim <= 0 || cfg.rollout_dim <= 0 ||
      cfg.embed_dim <= 0 || cfg.hypernet_hidden <= 0)
    throw ShapeError("Mixer: dims must be positive");
}

Tensor Mixer::mix(Tape& t, const Tensor& q_agents, const Tensor& global_state,
                  const Tensor& rollout) const {
  const int B = q_agents.rows();
  if (q_agents.cols() != cfg_.n_agents)
    throw ShapeError("Mixer::mix: q_agents width");
  if (global_state.rows() != B || global_state.cols() != cfg_.state_dim)
    throw ShapeError("Mixer::mix: global_state shape");
  if (rollout.rows() != B || rollout.cols() != cfg_.rollout_dim)
    throw ShapeError("Mixer::mix: rollout shape");

  Tensor state_part = cfg_.use_global_state
                          ? global_state
                          : t.zeros(B, cfg_.state_dim);
  Tensor roll_part = cfg_.use_rollout ? t.stop_gradient(rollout)
                                      : t.zeros(B, cfg_.rollout_dim);
  Tensor ctx = t.concat_cols({state_part, roll_part});

  Tensor w1 = t.abs(apply(t, w1_2_, t.elu(apply(t, w1_1_, ctx))));
  Tensor b1 = apply(t, b1_, ctx);
  Tensor hidden = t.elu(t.add(t.rowwise_matmul(q_agents, w1, cfg_.embed_dim), b1));
  Tensor w2 = t.abs(apply(t, w2_2_, t.elu(apply(t, w2_1_, ctx))));
  Tensor b2 = apply(t, b2_2_, t.elu(apply(t, b2_1_, ctx)));
  return t.add(t.row_sum(t.mul(w2, hidden)), b2);
}

Tensor td_target(Tape& t, const Tensor& rewards, const Tensor& terminals,
                 double gamma, const Tensor& q_tot_next) {
  const int B = rewards.rows();
  if (rewards.cols() != 1 || terminals.rows() != B || terminals.cols() != 1 ||
      q_tot_next.rows() != B || q_tot_next.cols() != 1)
    throw ShapeError("td_target: all inputs must be [B x 1]");
  Tensor cont = t.sub(t.constant(B, 1, std::vector<double>(static_cast<std::size_t>(B), 1.0)),
                      terminals);
  Tensor boot = t.scale(t.mul(cont, q_tot_next), gamma);
  return t.stop_gradient(t.add(rewards, boot));
}

Tensor td_loss(Tape& t, const Tensor& q_tot, const Tensor& y,
               const Tensor& mask01) {
  return masked_mse(t, q_tot, y, mask01);
}

}  // namespace mmsa
