#include "mmsa/worldmodel.hpp"

#include <stdexcept>

namespace mmsa {

WorldModel::WorldModel(ParamGroup& g, const std::string& name,
                       const WorldModelConfig& cfg, Rng& rng)
    : cfg_(cfg),
      post1_(make_linear(g, name + ".post1", cfg.hidden, cfg.h_dim, rng)),
      post_mean_(make_linear(g, name + ".post_mean", cfg.latent_dim, cfg.hidden, rng)),
      post_log_std_(make_linear(g, name + ".post_log_std", cfg.latent_dim, cfg.hidden, rng)),
      prior1_(make_linear(g, name + ".prior1", cfg.hidden, 3 * cfg.latent_dim, rng)),
      prior_mean_(make_linear(g, name + ".prior_mean", cfg.latent_dim, cfg.hidden, rng)),
      prior_log_std_(make_linear(g, name + ".prior_log_std", cfg.latent_dim, cfg.hidden, rng)),
      vae1_enc_(make_linear(g, name + ".vae1_enc", cfg.hidden, 3 * cfg.latent_dim, rng)),
      vae1_mean_(make_linear(g, name + ".vae1_mean", cfg.latent_dim, cfg.hidden, rng)),
      vae1_log_std_(make_linear(g, name + ".vae1_log_std", cfg.latent_dim, cfg.hidden, rng)),
      vae1_dec_(make_linear(g, name + ".vae1_dec", cfg.hidden, cfg.latent_dim, rng)),
      vae1_out_(make_linear(g, name + ".vae1_out", 3 * cfg.latent_dim, cfg.hidden, rng)),
      vae2_enc_(make_linear(g, name + ".vae2_enc", cfg.hidden, 3 * cfg.latent_dim, rng)),
      vae2_mean_(make_linear(g, name + ".vae2_mean", cfg.latent_dim, cfg.hidden, rng)),
      vae2_log_std_(make_linear(g, name + ".vae2_log_std", cfg.latent_dim, cfg.hidden, rng)),
      vae2_dec_(make_linear(g, name + ".vae2_dec", cfg.hidden, cfg.latent_dim, rng)),
      vae2_out_(make_linear(g, name + ".vae2_out", cfg.h_dim, cfg.hidden, rng)) {
  if (cfg.h_dim <= 0 || cfg.latent_dim <= 0 || cfg.hidden <= 0)
    throw ShapeError("WorldModel: dims must be positive");
  if (cfg.rollout_horizon < 0)
    throw std::invalid_argument("WorldModel: rollout_horizon must be >= 0");
  if (cfg.kl_balance_alpha < 0.0 || cfg.kl_balance_alpha > 1.0)
    throw std::invalid_argument("WorldModel: kl_balance_alpha must be in [0, 1]");
}

GaussianDiag WorldModel::posterior(Tape& t, const Tensor& h) const {
  return gaussian_head(t, t.elu(apply(t, post1_, h)), post_mean_, post_log_std_);
}

GaussianDiag WorldModel::prior(Tape& t, const Tensor& triple) const {
  return gaussian_head(t, t.elu(apply(t, prior1_, triple)), prior_mean_, prior_log_std_);
}

GaussianDiag WorldModel::vae1_encode(Tape& t, const Tensor& triple) const {
  return gaussian_head(t, t.elu(apply(t, vae1_enc_, triple)), vae1_mean_, vae1_log_std_);
}

Tensor WorldModel::vae1_decode(Tape& t, const Tensor& latent) const {
  return apply(t, vae1_out_, t.elu(apply(t, vae1_dec_, latent)));
}

GaussianDiag WorldModel::vae2_encode(Tape& t, const Tensor& triple_recon) const {
  return gaussian_head(t, t.elu(apply(t, vae2_enc_, triple_recon)), vae2_mean_, vae2_log_std_);
}

Tensor WorldModel::vae2_decode(Tape& t, const Tensor& latent) const {
  return apply(t, vae2_out_, t.elu(apply(t, vae2_dec_, latent)));
}

std::pair<GaussianDiag, Tensor> posterior_infer(Tape& t, const WorldModel& wm,
                                                const Tensor& h, Rng& rng) {
  GaussianDiag g = wm.posterior(t, h);
  Tensor noise = t.constant(h.rows(), wm.config().latent_dim,
                            rng.normal_vector(h.rows() * wm.config().latent_dim));
  return {g, reparam_sample(t, g, noise)};
}

Tensor kl_balanced(Tape& t, const GaussianDiag& q, const GaussianDiag& p,
                   double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("kl_balanced: alpha must be in [0, 1]");
  Tensor toward_q = kl_diag_gaussian(t, q, stop_gradient(t, p));
  Tensor toward_p = kl_diag_gaussian(t, stop_gradient(t, q), p);
  return t.add(t.scale(toward_q, alpha), t.scale(toward_p, 1.0 - alpha));
}

namespace {

// [B x n_actions] rows all set to the one-hot of action a.
Tensor candidate_rows(Tape& t, int batch, int n_actions, int a) {
  std::vector<double> v(static_cast<std::size_t>(batch) * n_actions, 0.0);
  for (int r = 0; r < batch; ++r)
    v[static_cast<std::size_t>(r) * n_actions + a] = 1.0;
  return t.constant(batch, n_actions, std::move(v));
}

}  // namespace

WorldModelStep imagine_step(Tape& t, const WorldModel& wm,
                            const SaleEncoders& latent_enc,
                            const SaleEncoders& obs_enc,
                            const AgentNetwork& net, const Tensor& h,
                            const Tensor* s_hat_threaded, Rng& rng) {
  const WorldModelConfig& cfg = wm.config();
  const AgentConfig& acfg = net.config();
  const int B = h.rows();
  const int L = cfg.latent_dim;
  if (h.cols() != cfg.h_dim) throw ShapeError("imagine_step: joint hidden width");

  WorldModelStep st;
  st.posterior = wm.posterior(t, h);
  if (s_hat_threaded != nullptr) {
    // the z' identification: a threaded latent is its own state embedding
    st.s_hat = *s_hat_threaded;
    st.z_s = *s_hat_threaded;
  } else {
    Tensor noise = t.constant(B, L, rng.normal_vector(B * L));
    st.s_hat = reparam_sample(t, st.posterior, noise);
    st.z_s = latent_enc.encode_state(t, st.s_hat);
  }

  // greedy joint action: per agent, score every candidate local action from
  // [z^s ⊕ g(z^s, a) ⊕ φ^s ⊕ h_slice]; candidates are shared across agents
  Tensor phi_pol = latent_enc.linear_feature(t, st.s_hat);
  std::vector<Tensor> z_cand, phi_cand;
  z_cand.reserve(static_cast<std::size_t>(acfg.n_actions));
  for (int a = 0; a < acfg.n_actions; ++a) {
    Tensor onehot = candidate_rows(t, B, acfg.n_actions, a);
    z_cand.push_back(obs_enc.encode_state_action(t, st.z_s, onehot));
    phi_cand.push_back(phi_pol);
  }
  st.a_hat.assign(static_cast<std::size_t>(B),
                  std::vector<int>(static_cast<std::size_t>(acfg.n_agents), 0));
  for (int i = 0; i < acfg.n_agents; ++i) {
    Tensor h_slice = t.slice_cols(h, i * acfg.hidden, acfg.hidden);
    Tensor q = net.q_scores(t, st.z_s, z_cand, phi_cand, h_slice);
    const auto& qv = q.values();
    for (int r = 0; r < B; ++r) {
      std::vector<double> row(
          qv.begin() + static_cast<std::ptrdiff_t>(r) * acfg.n_actions,
          qv.begin() + static_cast<std::ptrdiff_t>(r + 1) * acfg.n_actions);
      st.a_hat[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] =
          masked_argmax(row, {});
    }
  }
  std::vector<double> joint(
      static_cast<std::size_t>(B) * acfg.n_agents * acfg.n_actions, 0.0);
  for (int r = 0; r < B; ++r)
    for (int i = 0; i < acfg.n_agents; ++i)
      joint[static_cast<std::size_t>(r) * acfg.n_agents * acfg.n_actions +
            static_cast<std::size_t>(i) * acfg.n_actions +
            static_cast<std::size_t>(
                st.a_hat[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)])] = 1.0;
  Tensor a_joint = t.constant(B, acfg.n_agents * acfg.n_actions, std::move(joint));

  st.z_sa = latent_enc.encode_state_action(t, st.z_s, a_joint);
  st.phi_sa = latent_enc.linear_feature(t, st.s_hat, a_joint);
  st.triple = t.concat_cols({st.z_sa, st.z_s, st.phi_sa});

  // deterministic imagination: both VAEs ride their mean path
  GaussianDiag q1 = wm.vae1_encode(t, st.triple);
  st.triple_recon = wm.vae1_decode(t, q1.mean);
  st.s_next = t.slice_cols(st.triple_recon, L, L);
  GaussianDiag q2 = wm.vae2_encode(t, st.triple_recon);
  st.h_next = wm.vae2_decode(t, q2.mean);
  st.prior = wm.prior(t, st.triple);
  return st;
}

RolloutResult rollout(Tape& t, const WorldModel& wm,
                      const SaleEncoders& latent_enc,
                      const SaleEncoders& obs_enc, const AgentNetwork& net,
                      const Tensor& h, int j, Rng& rng) {
  if (j < 0) throw std::invalid_argument("rollout: horizon must be >= 0");
  RolloutResult res;
  res.horizon = j;
  auto [post, s0] = posterior_infer(t, wm, h, rng);
  res.latents.push_back(s0);
  Tensor s = s0;
  Tensor h_cur = h;
  for (int k = 0; k < j; ++k) {
    WorldModelStep st =
        imagine_step(t, wm, latent_enc, obs_enc, net, h_cur, &s, rng);
    res.latents.push_back(st.s_next);
    s = st.s_next;
    h_cur = st.h_next;
  }
  res.aggregated = t.concat_cols(res.latents);
  return res;
}

namespace {

// rng null selects the deterministic mean path for the posterior and both
// VAE latents.
WmLossResult world_model_loss_impl(Tape& t, const WorldModel& wm,
                                   const SaleEncoders& latent_enc,
                                   const WmSlice& slice, Rng* rng) {
  const std::size_t T = slice.h.size();
  if (T == 0) throw std::invalid_argument("world_model_loss: empty slice");
  if (slice.h_next.size() != T || slice.actions.size() != T ||
      slice.mask.size() != T)
    throw ShapeError("world_model_loss: ragged slice");
  const WorldModelConfig& cfg = wm.config();
  const int B = slice.h[0].rows();
  const int L = cfg.latent_dim;

  WmLossResult out;
  Tensor kl_total = t.zeros(1, 1);
  Tensor rec_total = t.zeros(1, 1);
  double count = 0.0;
  Tensor prev_triple = t.zeros(B, 3 * L);

  auto slot_mse = [&](const Tensor& rec_part, const Tensor& target) {
    Tensor d = t.sub(rec_part, t.stop_gradient(target));
    return t.scale(t.row_sum(t.square(d)), 1.0 / target.cols());  // [B x 1]
  };

  auto latent_of = [&](const GaussianDiag& g) {
    if (rng == nullptr) return g.mean;
    return reparam_sample(t, g,
                          t.constant(B, L, rng->normal_vector(B * L)));
  };

  for (std::size_t k = 0; k < T; ++k) {
    Tensor h_in = t.stop_gradient(slice.h[k]);
    GaussianDiag post = wm.posterior(t, h_in);
    Tensor s_hat = latent_of(post);

    // world-model view of the triple: the reparameterized sample stays live
    // (reconstruction trains the posterior through it) while the encoder
    // weights read as constants, so no encoder parameter is ever reached
    Tensor triple;
    {
      DetachScope detach(t, latent_enc.group());
      Tensor z_s_wm = latent_enc.encode_state(t, s_hat);
      Tensor z_sa_wm =
          latent_enc.encode_state_action(t, z_s_wm, slice.actions[k]);
      Tensor phi_wm = latent_enc.linear_feature(t, s_hat, slice.actions[k]);
      triple = t.concat_cols({z_sa_wm, z_s_wm, phi_wm});
    }

    // encoder view for the caller's embedding-prediction loss: live weights,
    // the sample as data
    Tensor s_data = t.stop_gradient(s_hat);
    Tensor z_s = latent_enc.encode_state(t, s_data);
    Tensor z_sa = latent_enc.encode_state_action(t, z_s, slice.actions[k]);
    out.z_s.push_back(z_s);
    out.z_sa.push_back(z_sa);

    GaussianDiag prior = wm.prior(t, prev_triple);
    Tensor post_prior_kl =
        cfg.kl_balance ? kl_balanced(t, post, prior, cfg.kl_balance_alpha)
                       : kl_diag_gaussian(t, post, prior);
    Tensor kl_col =
        t.add(kl_diag_gaussian(t, prior, standard_normal_like(t, prior)),
              post_prior_kl);

    GaussianDiag q1 = wm.vae1_encode(t, triple);
    Tensor recon = wm.vae1_decode(t, latent_of(q1));
    GaussianDiag q2 = wm.vae2_encode(t, recon);
    Tensor h_rec = wm.vae2_decode(t, latent_of(q2));
    kl_col = t.add(kl_col,
                   t.add(kl_diag_gaussian(t, q1, standard_normal_like(t, q1)),
                         kl_diag_gaussian(t, q2, standard_normal_like(t, q2))));

    Tensor rec_col = slot_mse(t.slice_cols(recon, 0, L), t.slice_cols(triple, 0, L));
    rec_col = t.add(rec_col, slot_mse(t.slice_cols(recon, L, L), t.slice_cols(triple, L, L)));
    rec_col = t.add(rec_col, slot_mse(t.slice_cols(recon, 2 * L, L), t.slice_cols(triple, 2 * L, L)));
    rec_col = t.add(rec_col, slot_mse(h_rec, slice.h_next[k]));

    kl_total = t.add(kl_total, t.sum_all(t.mul(kl_col, slice.mask[k])));
    rec_total = t.add(rec_total, t.sum_all(t.mul(rec_col, slice.mask[k])));
    for (double m : slice.mask[k].values()) count += m;
    prev_triple = t.stop_gradient(triple);
  }
  if (count <= 0.0)
    throw std::invalid_argument("world_model_loss: no valid steps");
  out.l_kl = t.scale(kl_total, 1.0 / count);
  out.l_rec = t.scale(rec_total, 1.0 / count);
  return out;
}

}  // namespace

WmLossResult world_model_loss(Tape& t, const WorldModel& wm,
                              const SaleEncoders& latent_enc,
                              const WmSlice& slice, Rng& rng) {
  return world_model_loss_impl(t, wm, latent_enc, slice, &rng);
}

WmLossResult world_model_loss(Tape& t, const WorldModel& wm,
                              const SaleEncoders& latent_enc,
                              const WmSlice& slice) {
  return world_model_loss_impl(t, wm, latent_enc, slice, nullptr);
}

}  // namespace mmsa
