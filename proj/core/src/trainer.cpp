#include "mmsa/trainer.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

namespace mmsa {

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"full", "no_wm", "no_sale", "no_klb", "no_gs"};
  return v;
}

TrainerConfig make_ablation(const TrainerConfig& base, const std::string& variant) {
  TrainerConfig cfg = base;
  cfg.no_wm = cfg.no_sale = cfg.no_klb = cfg.no_gs = false;
  if (variant == "full") return cfg;
  if (variant == "no_wm") {
    cfg.no_wm = true;
  } else if (variant == "no_sale") {
    cfg.no_sale = true;
  } else if (variant == "no_klb") {
    cfg.no_klb = true;
  } else if (variant == "no_gs") {
    cfg.no_gs = true;
  } else {
    throw std::invalid_argument("make_ablation: unknown variant \"" + variant + "\"");
  }
  return cfg;
}

std::string variant_name(const TrainerConfig& cfg) {
  std::string out;
  auto append = [&out](const char* flag) {
    if (!out.empty()) out += '+';
    out += flag;
  };
  if (cfg.no_wm) append("no_wm");
  if (cfg.no_sale) append("no_sale");
  if (cfg.no_klb) append("no_klb");
  if (cfg.no_gs) append("no_gs");
  return out.empty() ? "full" : out;
}

namespace {

SaleConfig obs_enc_cfg(const DecPomdpSpec& sp, const TrainerConfig& cfg) {
  SaleConfig c;
  c.input_dim = sp.obs_dim;
  c.z_dim = cfg.z_dim;
  c.n_actions = sp.n_actions;
  c.action_slots = 1;
  c.hidden = cfg.mlp_hidden;
  c.action_embed = cfg.action_embed;
  c.norm = parse_sale_norm(cfg.sale_norm);
  c.passthrough = cfg.no_sale;
  return c;
}

SaleConfig latent_enc_cfg(const DecPomdpSpec& sp, const TrainerConfig& cfg) {
  SaleConfig c = obs_enc_cfg(sp, cfg);
  c.input_dim = cfg.z_dim;
  c.action_slots = sp.n_agents;
  return c;
}

AgentConfig agent_cfg(const DecPomdpSpec& sp, const TrainerConfig& cfg) {
  AgentConfig c;
  c.obs_dim = sp.obs_dim;
  c.n_actions = sp.n_actions;
  c.n_agents = sp.n_agents;
  c.z_dim = cfg.z_dim;
  c.hidden = cfg.agent_hidden;
  return c;
}

WorldModelConfig wm_cfg(const DecPomdpSpec& sp, const TrainerConfig& cfg) {
  WorldModelConfig c;
  c.h_dim = sp.n_agents * cfg.agent_hidden;
  c.latent_dim = cfg.z_dim;
  c.hidden = cfg.mlp_hidden;
  c.rollout_horizon = cfg.rollout_horizon;
  c.kl_balance_alpha = cfg.kl_balance_alpha;
  c.kl_balance = !cfg.no_klb;
  return c;
}

MixerConfig mixer_cfg(const DecPomdpSpec& sp, const TrainerConfig& cfg) {
  MixerConfig c;
  c.n_agents = sp.n_agents;
  c.state_dim = sp.state_dim;
  c.rollout_dim = (cfg.rollout_horizon + 1) * cfg.z_dim;
  c.embed_dim = cfg.mixer_embed;
  c.hypernet_hidden = cfg.hypernet_hidden;
  c.use_global_state = !cfg.no_gs;
  c.use_rollout = !cfg.no_wm;
  return c;
}

}  // namespace

MmsaNets::MmsaNets(const DecPomdpSpec& spec, const TrainerConfig& cfg, Rng& rng)
    : obs_enc(encoders, "obs_enc", obs_enc_cfg(spec, cfg), rng),
      latent_enc(encoders, "latent_enc", latent_enc_cfg(spec, cfg), rng),
      net(agent, "agent", agent_cfg(spec, cfg), rng),
      net_target(agent_target, "agent", agent_cfg(spec, cfg), rng),
      wm(world_model, "wm", wm_cfg(spec, cfg), rng),
      mix(mixer, "mix", mixer_cfg(spec, cfg), rng),
      mix_target(mixer_target, "mix", mixer_cfg(spec, cfg), rng) {
  sync_target();
}

void MmsaNets::sync_target() {
  copy_values(agent, agent_target);
  copy_values(mixer, mixer_target);
}

std::vector<const ParamGroup*> MmsaNets::all_groups() const {
  return {&agent, &mixer, &encoders, &world_model, &agent_target, &mixer_target};
}

std::vector<ParamGroup*> MmsaNets::all_groups() {
  return {&agent, &mixer, &encoders, &world_model, &agent_target, &mixer_target};
}

Trainer::Trainer(std::unique_ptr<Env> env, const TrainerConfig& cfg)
    : cfg_(cfg),
      env_(std::move(env)),
      init_rng_(cfg.seed, 0),
      act_rng_(cfg.seed, 1),
      env_rng_(cfg.seed, 2),
      train_rng_(cfg.seed, 3),
      eval_rng_(cfg.seed, 4),
      nets_(env_->spec(), cfg_, init_rng_),
      buffer_(cfg.buffer_size, Rng(cfg.seed, 5)) {
  if (cfg.batch_size < 1 || cfg.buffer_size < cfg.batch_size)
    throw std::invalid_argument("Trainer: need 1 <= batch_size <= buffer_size");
  if (cfg.target_update_interval < 1 || cfg.test_interval < 1 || cfg.test_episodes < 1)
    throw std::invalid_argument("Trainer: intervals and test_episodes must be positive");
}

EpisodeBatch Trainer::run_episode(bool greedy) {
  const DecPomdpSpec& sp = env_->spec();
  const std::uint64_t reset_seed = greedy ? eval_rng_.next_u64() : env_rng_.next_u64();
  StepResult sr = env_->reset(reset_seed);

  EpisodeBatch ep;
  ep.obs.push_back(sr.observations);
  ep.state.push_back(sr.global_state);
  ep.avail.push_back(sr.avail_actions);

  std::vector<std::vector<double>> h(
      static_cast<std::size_t>(sp.n_agents),
      std::vector<double>(static_cast<std::size_t>(cfg_.agent_hidden), 0.0));
  std::vector<int> last(static_cast<std::size_t>(sp.n_agents), -1);

  bool done = false;
  while (!done) {
    const double eps = greedy ? 0.0 : current_epsilon();
    ActResult act = select_actions(nets_.net, nets_.obs_enc, sr.observations,
                                   sr.avail_actions, last, h, eps, act_rng_);
    StepResult nxt = env_->step(act.actions);
    ep.actions.push_back(act.actions);
    ep.rewards.push_back(nxt.reward);
    ep.terminated.push_back(nxt.terminated ? std::uint8_t{1} : std::uint8_t{0});
    ep.obs.push_back(nxt.observations);
    ep.state.push_back(nxt.global_state);
    ep.avail.push_back(nxt.avail_actions);
    if (!greedy) ++env_steps_;
    h = std::move(act.h);
    last = act.actions;
    done = nxt.terminated || nxt.truncated;
    sr = std::move(nxt);
  }
  if (!greedy) buffer_.add(ep);
  return ep;
}

std::optional<LossReport> Trainer::train_step() {
  if (!buffer_.can_sample(cfg_.batch_size)) return std::nullopt;
  LossReport report = optimize_batch(buffer_.sample(cfg_.batch_size));
  report.step = ++grad_steps_;
  report.epsilon = current_epsilon();
  return report;
}

EvalReport Trainer::evaluate() {
  EvalReport r;
  r.returns.reserve(static_cast<std::size_t>(cfg_.test_episodes));
  for (int e = 0; e < cfg_.test_episodes; ++e) {
    // test returns are undiscounted episode sums
    r.returns.push_back(run_episode(true).discounted_return(1.0));
  }
  double sum = 0.0;
  for (double v : r.returns) sum += v;
  r.mean_return = sum / static_cast<double>(r.returns.size());
  return r;
}

void Trainer::run(const LossFn& on_loss, const EvalFn& on_eval) {
  long long next_eval = 0;
  long long last_eval_at = -1;
  auto fire_due_evals = [&] {
    while (on_eval && env_steps_ >= next_eval) {
      EvalReport er = evaluate();
      on_eval(env_steps_, er);
      last_eval_at = env_steps_;
      next_eval += cfg_.test_interval;
    }
  };
  fire_due_evals();  // baseline at step 0
  while (env_steps_ < cfg_.total_steps) {
    run_episode(false);
    if (auto report = train_step()) {
      if (on_loss) on_loss(*report);
      if (grad_steps_ % cfg_.target_update_interval == 0) sync_target();
    }
    fire_due_evals();
  }
  if (on_eval && last_eval_at != env_steps_) on_eval(env_steps_, evaluate());
}

namespace {

// Row argmax restricted to available actions; rows with nothing available
// (post-terminal padding) fall back to 0, their value is masked out anyway.
int safe_greedy(const std::vector<double>& q, int row, int n_actions,
                const std::vector<std::uint8_t>& avail_row) {
  int best = -1;
  for (int a = 0; a < n_actions; ++a) {
    if (!avail_row[static_cast<std::size_t>(a)]) continue;
    const double v = q[static_cast<std::size_t>(row * n_actions + a)];
    if (best < 0 || v > q[static_cast<std::size_t>(row * n_actions + best)]) best = a;
  }
  return best < 0 ? 0 : best;
}

}  // namespace

LossReport Trainer::optimize_batch(const std::vector<const EpisodeBatch*>& batch) {
  const DecPomdpSpec& sp = env_->spec();
  const int B = static_cast<int>(batch.size());
  const int n = sp.n_agents;
  const int A = sp.n_actions;
  int T = 0;
  for (const EpisodeBatch* ep : batch) T = std::max(T, ep->length());

  Tape t;

  // ---- batched data, time-major; rows past an episode's end are zeros ----
  std::vector<std::vector<Tensor>> obs_t, last_oh, act_oh;
  std::vector<Tensor> state_t, joint_oh, reward_t, term_t, mask_t;
  std::vector<std::vector<std::vector<std::uint8_t>>> avail_t(
      static_cast<std::size_t>(T) + 1);  // [step][agent][B*A]
  double mask_count = 0.0;

  for (int m = 0; m <= T; ++m) {
    std::vector<Tensor> obs_m, last_m;
    for (int i = 0; i < n; ++i) {
      std::vector<double> ov(static_cast<std::size_t>(B) * sp.obs_dim, 0.0);
      std::vector<double> lv(static_cast<std::size_t>(B) * A, 0.0);
      std::vector<std::uint8_t> av(static_cast<std::size_t>(B) * A, std::uint8_t{1});
      for (int b = 0; b < B; ++b) {
        const EpisodeBatch& ep = *batch[static_cast<std::size_t>(b)];
        if (m <= ep.length()) {
          const auto& o = ep.obs[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
          std::copy(o.begin(), o.end(), ov.begin() + static_cast<std::ptrdiff_t>(b) * sp.obs_dim);
          const auto& am = ep.avail[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
          std::copy(am.begin(), am.end(), av.begin() + static_cast<std::ptrdiff_t>(b) * A);
        }
        if (m > 0 && m - 1 < ep.length())
          lv[static_cast<std::size_t>(b) * A +
             static_cast<std::size_t>(ep.actions[static_cast<std::size_t>(m - 1)]
                                                [static_cast<std::size_t>(i)])] = 1.0;
      }
      obs_m.push_back(t.constant(B, sp.obs_dim, std::move(ov)));
      last_m.push_back(t.constant(B, A, std::move(lv)));
      avail_t[static_cast<std::size_t>(m)].push_back(std::move(av));
    }
    obs_t.push_back(std::move(obs_m));
    last_oh.push_back(std::move(last_m));

    std::vector<double> sv(static_cast<std::size_t>(B) * sp.state_dim, 0.0);
    for (int b = 0; b < B; ++b) {
      const EpisodeBatch& ep = *batch[static_cast<std::size_t>(b)];
      if (m <= ep.length()) {
        const auto& s = ep.state[static_cast<std::size_t>(m)];
        std::copy(s.begin(), s.end(), sv.begin() + static_cast<std::ptrdiff_t>(b) * sp.state_dim);
      }
    }
    state_t.push_back(t.constant(B, sp.state_dim, std::move(sv)));

    if (m == T) break;
    std::vector<Tensor> act_m;
    std::vector<double> jv(static_cast<std::size_t>(B) * n * A, 0.0);
    std::vector<double> rv(static_cast<std::size_t>(B), 0.0);
    std::vector<double> tv(static_cast<std::size_t>(B), 0.0);
    std::vector<double> mv(static_cast<std::size_t>(B), 0.0);
    for (int i = 0; i < n; ++i) {
      std::vector<double> av(static_cast<std::size_t>(B) * A, 0.0);
      for (int b = 0; b < B; ++b) {
        const EpisodeBatch& ep = *batch[static_cast<std::size_t>(b)];
        if (m >= ep.length()) continue;
        const int a = ep.actions[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
        av[static_cast<std::size_t>(b) * A + static_cast<std::size_t>(a)] = 1.0;
        jv[(static_cast<std::size_t>(b) * n + static_cast<std::size_t>(i)) * A +
           static_cast<std::size_t>(a)] = 1.0;
      }
      act_m.push_back(t.constant(B, A, std::move(av)));
    }
    act_oh.push_back(std::move(act_m));
    joint_oh.push_back(t.constant(B, n * A, std::move(jv)));
    for (int b = 0; b < B; ++b) {
      const EpisodeBatch& ep = *batch[static_cast<std::size_t>(b)];
      if (m >= ep.length()) continue;
      rv[static_cast<std::size_t>(b)] = ep.rewards[static_cast<std::size_t>(m)];
      tv[static_cast<std::size_t>(b)] = ep.terminated[static_cast<std::size_t>(m)] ? 1.0 : 0.0;
      mv[static_cast<std::size_t>(b)] = 1.0;
      mask_count += 1.0;
    }
    reward_t.push_back(t.constant(B, 1, std::move(rv)));
    term_t.push_back(t.constant(B, 1, std::move(tv)));
    mask_t.push_back(t.constant(B, 1, std::move(mv)));
  }

  // ---- teacher-forced recurrent passes, online and target ----
  std::vector<JointForward> jf_on, jf_tg;
  {
    std::vector<Tensor> h_on, h_tg;
    for (int i = 0; i < n; ++i) {
      h_on.push_back(t.zeros(B, cfg_.agent_hidden));
      h_tg.push_back(t.zeros(B, cfg_.agent_hidden));
    }
    for (int m = 0; m <= T; ++m) {
      jf_on.push_back(joint_forward(t, nets_.net, nets_.obs_enc, obs_t[static_cast<std::size_t>(m)],
                                    last_oh[static_cast<std::size_t>(m)], h_on));
      h_on = jf_on.back().h;
      jf_tg.push_back(joint_forward(t, nets_.net_target, nets_.obs_enc,
                                    obs_t[static_cast<std::size_t>(m)],
                                    last_oh[static_cast<std::size_t>(m)], h_tg));
      h_tg = jf_tg.back().h;
    }
  }

  // ---- per-step agent utilities: taken (online) and greedy (target) ----
  std::vector<Tensor> q_taken, q_tg_greedy;
  for (int m = 0; m <= T; ++m) {
    if (m < T) {
      std::vector<Tensor> cols;
      for (int i = 0; i < n; ++i)
        cols.push_back(t.row_sum(t.mul(jf_on[static_cast<std::size_t>(m)].q[static_cast<std::size_t>(i)],
                                       act_oh[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)])));
      q_taken.push_back(t.concat_cols(cols));
    }
    std::vector<Tensor> cols;
    for (int i = 0; i < n; ++i) {
      const Tensor& q = jf_tg[static_cast<std::size_t>(m)].q[static_cast<std::size_t>(i)];
      const std::vector<double> qv = q.values();  // copy: later ops may reallocate
      std::vector<double> oh(static_cast<std::size_t>(B) * A, 0.0);
      for (int b = 0; b < B; ++b) {
        std::vector<std::uint8_t> row(
            avail_t[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)].begin() +
                static_cast<std::ptrdiff_t>(b) * A,
            avail_t[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)].begin() +
                static_cast<std::ptrdiff_t>(b + 1) * A);
        oh[static_cast<std::size_t>(b) * A +
           static_cast<std::size_t>(safe_greedy(qv, b, A, row))] = 1.0;
      }
      cols.push_back(t.row_sum(t.mul(q, t.constant(B, A, std::move(oh)))));
    }
    q_tg_greedy.push_back(t.concat_cols(cols));
  }

  // ---- imagination context, one rollout per step index ----
  std::vector<Tensor> roll;
  const int roll_dim = (cfg_.rollout_horizon + 1) * cfg_.z_dim;
  if (cfg_.no_wm) {
    Tensor zero_roll = t.zeros(B, roll_dim);
    roll.assign(static_cast<std::size_t>(T) + 1, zero_roll);
  } else {
    for (int m = 0; m <= T; ++m)
      roll.push_back(rollout(t, nets_.wm, nets_.latent_enc, nets_.obs_enc, nets_.net,
                             jf_on[static_cast<std::size_t>(m)].h_joint,
                             cfg_.rollout_horizon, train_rng_)
                         .aggregated);
  }

  // ---- TD loss over all valid steps ----
  Tensor td_sum = t.zeros(1, 1);
  for (int m = 0; m < T; ++m) {
    Tensor q_tot = nets_.mix.mix(t, q_taken[static_cast<std::size_t>(m)],
                                 state_t[static_cast<std::size_t>(m)],
                                 roll[static_cast<std::size_t>(m)]);
    Tensor q_tot_next = nets_.mix_target.mix(t, q_tg_greedy[static_cast<std::size_t>(m + 1)],
                                             state_t[static_cast<std::size_t>(m + 1)],
                                             roll[static_cast<std::size_t>(m + 1)]);
    Tensor y = td_target(t, reward_t[static_cast<std::size_t>(m)],
                         term_t[static_cast<std::size_t>(m)], cfg_.gamma, q_tot_next);
    Tensor sq = t.mul(mask_t[static_cast<std::size_t>(m)], t.square(t.sub(q_tot, y)));
    td_sum = t.add(td_sum, t.sum_all(sq));
  }
  Tensor l_td = t.scale(td_sum, 1.0 / mask_count);

  // ---- world-model losses ----
  Tensor l_kl = t.zeros(1, 1);
  Tensor l_rec = t.zeros(1, 1);
  WmLossResult wm_res;
  if (!cfg_.no_wm) {
    WmSlice slice;
    for (int m = 0; m < T; ++m) {
      slice.h.push_back(jf_on[static_cast<std::size_t>(m)].h_joint);
      slice.h_next.push_back(jf_on[static_cast<std::size_t>(m + 1)].h_joint);
      slice.actions.push_back(joint_oh[static_cast<std::size_t>(m)]);
      slice.mask.push_back(mask_t[static_cast<std::size_t>(m)]);
    }
    wm_res = world_model_loss(t, nets_.wm, nets_.latent_enc, slice, train_rng_);
    l_kl = wm_res.l_kl;
    l_rec = wm_res.l_rec;
  }

  // ---- embedding-prediction loss: observation path plus latent path ----
  Tensor l_sale = t.zeros(1, 1);
  if (!cfg_.no_sale) {
    Tensor obs_sum = t.zeros(1, 1);
    for (int m = 0; m < T; ++m)
      for (int i = 0; i < n; ++i) {
        Tensor z = nets_.obs_enc.encode_state(t, obs_t[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)]);
        Tensor zj = nets_.obs_enc.encode_state_action(
            t, z, act_oh[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)]);
        Tensor zn = nets_.obs_enc.encode_state(
            t, obs_t[static_cast<std::size_t>(m + 1)][static_cast<std::size_t>(i)]);
        Tensor err = t.row_sum(t.square(t.sub(zj, t.stop_gradient(zn))));
        obs_sum = t.add(obs_sum, t.sum_all(t.mul(mask_t[static_cast<std::size_t>(m)], err)));
      }
    l_sale = t.scale(obs_sum, 1.0 / (static_cast<double>(n) * mask_count));

    if (!cfg_.no_wm && T >= 2) {
      // consecutive posterior-sample embeddings; a pair is valid iff its
      // second step is (step validity is monotone within an episode)
      Tensor lat_sum = t.zeros(1, 1);
      double lat_count = 0.0;
      for (int m = 0; m + 1 < T; ++m) {
        Tensor err = t.row_sum(t.square(t.sub(
            wm_res.z_sa[static_cast<std::size_t>(m)],
            t.stop_gradient(wm_res.z_s[static_cast<std::size_t>(m + 1)]))));
        lat_sum = t.add(lat_sum, t.sum_all(t.mul(mask_t[static_cast<std::size_t>(m + 1)], err)));
        for (double v : mask_t[static_cast<std::size_t>(m + 1)].values()) lat_count += v;
      }
      if (lat_count > 0.0)
        l_sale = t.add(l_sale, t.scale(lat_sum, 1.0 / lat_count));
    }
  }

  Tensor l_total = t.add(t.add(l_kl, l_rec), t.add(l_td, l_sale));

  // ---- structural gradient-routing audit, every step ----
  auto demand = [](bool ok, const char* what) {
    if (!ok) throw DecouplingError(std::string("train_step audit: ") + what);
  };
  demand(!t.reaches(l_td, nets_.encoders), "TD loss reaches the encoders");
  demand(!t.reaches(l_td, nets_.world_model), "TD loss reaches the world model");
  if (!cfg_.no_wm) {
    demand(!t.reaches(l_kl, nets_.agent), "KL loss reaches the agent");
    demand(!t.reaches(l_kl, nets_.mixer), "KL loss reaches the mixer");
    demand(!t.reaches(l_kl, nets_.encoders), "KL loss reaches the encoders");
    demand(!t.reaches(l_rec, nets_.agent), "REC loss reaches the agent");
    demand(!t.reaches(l_rec, nets_.mixer), "REC loss reaches the mixer");
    demand(!t.reaches(l_rec, nets_.encoders), "REC loss reaches the encoders");
  } else {
    demand(!t.reaches(l_total, nets_.world_model), "ablated world model receives gradients");
  }
  if (!cfg_.no_sale) {
    demand(!t.reaches(l_sale, nets_.agent), "embedding loss reaches the agent");
    demand(!t.reaches(l_sale, nets_.mixer), "embedding loss reaches the mixer");
    demand(!t.reaches(l_sale, nets_.world_model), "embedding loss reaches the world model");
  } else {
    demand(!t.reaches(l_total, nets_.encoders), "ablated encoders receive gradients");
  }
  demand(!t.reaches(l_total, nets_.agent_target), "loss reaches the target agent");
  demand(!t.reaches(l_total, nets_.mixer_target), "loss reaches the target mixer");

  // ---- one backward, one RMSProp step per live group ----
  LossReport report;
  report.l_kl = l_kl.value();
  report.l_rec = l_rec.value();
  report.l_td = l_td.value();
  report.l_sale = l_sale.value();
  report.l_total = l_total.value();

  for (ParamGroup* g : nets_.all_groups()) g->zero_grad();
  t.backward(l_total);

  RmsPropConfig opt;
  opt.lr = cfg_.lr;
  opt.grad_clip = cfg_.grad_clip;
  report.grad_norms["agent"] = rmsprop_step(nets_.agent, opt);
  report.grad_norms["mixer"] = rmsprop_step(nets_.mixer, opt);
  report.grad_norms["encoders"] = cfg_.no_sale ? 0.0 : rmsprop_step(nets_.encoders, opt);
  report.grad_norms["world_model"] = cfg_.no_wm ? 0.0 : rmsprop_step(nets_.world_model, opt);
  return report;
}

}  // namespace mmsa
