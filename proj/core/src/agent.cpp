#include "mmsa/agent.hpp"

#include <algorithm>
#include <stdexcept>

#include "mmsa/env.hpp"

namespace mmsa {

double epsilon_at(const EpsilonSchedule& s, long long t) {
  if (t < 0) throw std::invalid_argument("epsilon_at: negative step");
  if (s.anneal_steps <= 0) return s.finish;
  const double frac =
      std::min(1.0, static_cast<double>(t) / static_cast<double>(s.anneal_steps));
  return s.start + (s.finish - s.start) * frac;
}

AgentNetwork::AgentNetwork(ParamGroup& g, const std::string& name,
                           const AgentConfig& cfg, Rng& rng)
    : cfg_(cfg),
      in_(make_linear(g, name + ".in", cfg.hidden,
                      cfg.obs_dim + cfg.n_actions + cfg.n_agents, rng)),
      gru_(make_gru(g, name + ".gru", cfg.hidden, cfg.hidden, rng)),
      q1_(make_linear(g, name + ".q1", cfg.hidden, 3 * cfg.z_dim + cfg.hidden,
                      rng)),
      q2_(make_linear(g, name + ".q2", 1, cfg.hidden, rng)) {
  if (cfg.obs_dim <= 0 || cfg.n_actions <= 0 || cfg.n_agents <= 0 ||
      cfg.z_dim <= 0 || cfg.hidden <= 0)
    throw ShapeError("AgentNetwork: all config dims must be positive");
}

Tensor AgentNetwork::hidden_step(Tape& t, const Tensor& obs,
                                 const Tensor& last_action,
                                 const Tensor& agent_id,
                                 const Tensor& h_prev) const {
  Tensor x = t.elu(apply(t, in_, t.concat_cols({obs, last_action, agent_id})));
  return gru_step(t, gru_, x, h_prev);
}

Tensor AgentNetwork::q_scores(Tape& t, const Tensor& z_o,
                              const std::vector<Tensor>& z_oa,
                              const std::vector<Tensor>& phi_oa,
                              const Tensor& h) const {
  const int z = cfg_.z_dim;
  if (static_cast<int>(z_oa.size()) != cfg_.n_actions ||
      static_cast<int>(phi_oa.size()) != cfg_.n_actions)
    throw ShapeError("q_scores: one feature tensor per candidate action");
  Tensor w = t.leaf(*q1_.W);
  // shared part of the first layer: z^o and h columns, plus the bias
  Tensor base = t.add_rowvec(
      t.add(t.matmul_nt(z_o, t.slice_cols(w, 0, z)),
            t.matmul_nt(h, t.slice_cols(w, 3 * z, cfg_.hidden))),
      t.leaf(*q1_.b));
  std::vector<Tensor> cols;
  cols.reserve(z_oa.size());
  for (int a = 0; a < cfg_.n_actions; ++a) {
    Tensor act = t.add(t.matmul_nt(z_oa[a], t.slice_cols(w, z, z)),
                       t.matmul_nt(phi_oa[a], t.slice_cols(w, 2 * z, z)));
    cols.push_back(apply(t, q2_, t.elu(t.add(base, act))));
  }
  return t.concat_cols(cols);
}

namespace {

// [B x n_actions] rows all set to the one-hot of action a.
Tensor action_rows(Tape& t, int batch, int n_actions, int a) {
  std::vector<double> v(static_cast<std::size_t>(batch) * n_actions, 0.0);
  for (int i = 0; i < batch; ++i) v[static_cast<std::size_t>(i) * n_actions + a] = 1.0;
  return t.constant(batch, n_actions, std::move(v));
}

}  // namespace

AgentStep agent_forward(Tape& t, const AgentNetwork& net,
                        const SaleEncoders& enc, const Tensor& obs,
                        const Tensor& last_action, const Tensor& agent_id,
                        const Tensor& h_prev) {
  const AgentConfig& cfg = net.config();
  Tensor h = net.hidden_step(t, obs, last_action, agent_id, h_prev);
  Tensor z_raw = enc.encode_state(t, obs);
  Tensor z_o = t.stop_gradient(z_raw);
  std::vector<Tensor> z_oa, phi_oa;
  z_oa.reserve(static_cast<std::size_t>(cfg.n_actions));
  phi_oa.reserve(static_cast<std::size_t>(cfg.n_actions));
  for (int a = 0; a < cfg.n_actions; ++a) {
    Tensor onehot = action_rows(t, obs.rows(), cfg.n_actions, a);
    z_oa.push_back(t.stop_gradient(enc.encode_state_action(t, z_raw, onehot)));
    phi_oa.push_back(t.stop_gradient(enc.linear_feature(t, obs, onehot)));
  }
  return {net.q_scores(t, z_o, z_oa, phi_oa, h), h};
}

JointForward joint_forward(Tape& t, const AgentNetwork& net,
                           const SaleEncoders& enc,
                           const std::vector<Tensor>& obs,
                           const std::vector<Tensor>& last_action,
                           const std::vector<Tensor>& h_prev) {
  const int n = net.config().n_agents;
  if (static_cast<int>(obs.size()) != n ||
      static_cast<int>(last_action.size()) != n ||
      static_cast<int>(h_prev.size()) != n)
    throw ShapeError("joint_forward: one tensor per agent");
  JointForward out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> id(static_cast<std::size_t>(obs[i].rows()) * n, 0.0);
    for (int r = 0; r < obs[i].rows(); ++r)
      id[static_cast<std::size_t>(r) * n + i] = 1.0;
    Tensor agent_id = t.constant(obs[i].rows(), n, std::move(id));
    AgentStep step =
        agent_forward(t, net, enc, obs[i], last_action[i], agent_id, h_prev[i]);
    out.q.push_back(step.q);
    out.h.push_back(step.h);
  }
  out.h_joint = t.concat_cols(out.h);
  return out;
}

std::vector<int> greedy_joint(const JointForward& jf, int row) {
  std::vector<int> actions;
  actions.reserve(jf.q.size());
  for (const Tensor& q : jf.q) {
    const auto& v = q.values();
    std::vector<double> qrow(v.begin() + static_cast<std::ptrdiff_t>(row) * q.cols(),
                             v.begin() + static_cast<std::ptrdiff_t>(row + 1) * q.cols());
    actions.push_back(masked_argmax(qrow, {}));
  }
  return actions;
}

int masked_argmax(const std::vector<double>& q,
                  const std::vector<std::uint8_t>& avail) {
  if (!avail.empty() && avail.size() != q.size())
    throw ShapeError("masked_argmax: mask size mismatch");
  int best = -1;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!avail.empty() && !avail[a]) continue;
    if (best < 0 || q[a] > q[static_cast<std::size_t>(best)])
      best = static_cast<int>(a);
  }
  if (best < 0) throw EnvError("masked_argmax: no available action");
  return best;
}

ActResult select_actions(const AgentNetwork& net, const SaleEncoders& enc,
                         const std::vector<std::vector<double>>& obs,
                         const std::vector<std::vector<std::uint8_t>>& avail,
                         const std::vector<int>& last_action,
                         const std::vector<std::vector<double>>& h_prev,
                         double epsilon, Rng& rng) {
  const AgentConfig& cfg = net.config();
  const int n = cfg.n_agents;
  if (static_cast<int>(obs.size()) != n || static_cast<int>(avail.size()) != n ||
      static_cast<int>(last_action.size()) != n ||
      static_cast<int>(h_prev.size()) != n)
    throw ShapeError("select_actions: one entry per agent");

  // All agents ride through the shared network as batch rows.
  std::vector<double> obs_v, last_v, id_v, h_v;
  for (int i = 0; i < n; ++i) {
    obs_v.insert(obs_v.end(), obs[i].begin(), obs[i].end());
    std::vector<double> la(static_cast<std::size_t>(cfg.n_actions), 0.0);
    if (last_action[i] >= 0) la[static_cast<std::size_t>(last_action[i])] = 1.0;
    last_v.insert(last_v.end(), la.begin(), la.end());
    for (int j = 0; j < n; ++j) id_v.push_back(i == j ? 1.0 : 0.0);
    h_v.insert(h_v.end(), h_prev[i].begin(), h_prev[i].end());
  }
  Tape t(false);
  AgentStep step = agent_forward(
      t, net, enc, t.constant(n, cfg.obs_dim, std::move(obs_v)),
      t.constant(n, cfg.n_actions, std::move(last_v)),
      t.constant(n, n, std::move(id_v)),
      t.constant(n, cfg.hidden, std::move(h_v)));

  ActResult out;
  const auto& qv = step.q.values();
  const auto& hv = step.h.values();
  for (int i = 0; i < n; ++i) {
    std::vector<double> qrow(
        qv.begin() + static_cast<std::ptrdiff_t>(i) * cfg.n_actions,
        qv.begin() + static_cast<std::ptrdiff_t>(i + 1) * cfg.n_actions);
    int act;
    if (epsilon > 0.0 && rng.uniform() < epsilon) {
      std::vector<int> options;
      for (int a = 0; a < cfg.n_actions; ++a)
        if (avail[i][static_cast<std::size_t>(a)]) options.push_back(a);
      if (options.empty()) throw EnvError("select_actions: no available action");
      act = options[static_cast<std::size_t>(rng.uniform_int(
          static_cast<int>(options.size())))];
    } else {
      act = masked_argmax(qrow, avail[static_cast<std::size_t>(i)]);
    }
    out.actions.push_back(act);
    out.q.push_back(std::move(qrow));
    out.h.emplace_back(hv.begin() + static_cast<std::ptrdiff_t>(i) * cfg.hidden,
                       hv.begin() + static_cast<std::ptrdiff_t>(i + 1) * cfg.hidden);
  }
  return out;
}

}  // namespace mmsa
