// World-model tests: posterior reparameterization (zero-noise mean path,
// Monte-Carlo statistics, frozen-noise finite differences), the learned
// prior's zero-parameter standard-normal form, KL-balancing value and
// gradient identities, the eight-stage imagined step with its z'
// identification, rollout threading and prefix stability, and the
// teacher-forced loss pair with its exact decoupling guarantees.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "grad_check.hpp"
#include "mmsa/env.hpp"
#include "mmsa/rng.hpp"
#include "mmsa/worldmodel.hpp"

using namespace mmsa;
using mmsa::testing::grad_check;

namespace {

WorldModelConfig small_wm_cfg() {
  WorldModelConfig cfg;
  cfg.h_dim = 6;
  cfg.latent_dim = 3;
  cfg.hidden = 5;
  return cfg;
}

SaleConfig latent_enc_cfg(int latent_dim, int n_agents, int n_actions) {
  SaleConfig cfg;
  cfg.input_dim = latent_dim;
  cfg.z_dim = latent_dim;
  cfg.n_actions = n_actions;
  cfg.action_slots = n_agents;
  cfg.hidden = 6;
  cfg.action_embed = 2;
  return cfg;
}

Tensor scalarize(Tape& t, const Tensor& y, const std::vector<double>& w) {
  return t.sum_all(t.mul(y, t.constant(y.rows(), y.cols(), w)));
}

// Gaussians bound directly to parameters, for gradient-identity checks.
struct ParamGaussian {
  Parameter* mean;
  Parameter* log_std;
  GaussianDiag on(Tape& t) const { return {t.leaf(*mean), t.leaf(*log_std)}; }
};

ParamGaussian make_param_gaussian(ParamGroup& g, const std::string& name,
                                  int dim, Rng& rng) {
  Parameter& m = g.add(name + ".mean", 2, 1, dim);
  Parameter& s = g.add(name + ".log_std", 2, 1, dim);
  for (auto& v : m.value) v = rng.uniform(-1.5, 1.5);
  for (auto& v : s.value) v = rng.uniform(-1.0, 0.7);
  return {&m, &s};
}

}  // namespace

TEST_CASE("posterior: zero noise returns the mean, samples match moments") {
  Rng rng(3);
  ParamGroup wm_g("world_model");
  WorldModel wm(wm_g, "wm", small_wm_cfg(), rng);

  const auto h_vals = rng.uniform_vector(6, -1, 1);
  Tape t(false);
  Tensor h = t.constant(1, 6, h_vals);
  GaussianDiag post = wm.posterior(t, h);
  Tensor zero_noise = t.zeros(1, 3);
  // hoist before comparing: values() references tape storage, which further
  // node creation may reallocate
  const std::vector<double> sampled = reparam_sample(t, post, zero_noise).values();
  CHECK(sampled == post.mean.values());

  // moment check: 10^4 reparameterized draws per dim
  const int N = 10000;
  std::vector<double> sum(3, 0.0), sumsq(3, 0.0);
  for (int k = 0; k < N; ++k) {
    auto [g, s] = posterior_infer(t, wm, h, rng);
    const auto& v = s.values();
    for (int d = 0; d < 3; ++d) {
      sum[static_cast<std::size_t>(d)] += v[static_cast<std::size_t>(d)];
      sumsq[static_cast<std::size_t>(d)] += v[static_cast<std::size_t>(d)] * v[static_cast<std::size_t>(d)];
    }
  }
  for (int d = 0; d < 3; ++d) {
    const double mu = post.mean.values()[static_cast<std::size_t>(d)];
    const double sd = std::exp(post.log_std.values()[static_cast<std::size_t>(d)]);
    const double m = sum[static_cast<std::size_t>(d)] / N;
    const double var = sumsq[static_cast<std::size_t>(d)] / N - m * m;
    CHECK(std::fabs(m - mu) < 3.0 * sd / std::sqrt(static_cast<double>(N)));
    CHECK(std::fabs(std::sqrt(var) - sd) < 3.0 * sd / std::sqrt(2.0 * N));
  }
}

TEST_CASE("posterior gradients through a frozen-noise sample match finite differences") {
  Rng rng(7);
  ParamGroup wm_g("world_model");
  WorldModel wm(wm_g, "wm", small_wm_cfg(), rng);
  const auto h_vals = rng.uniform_vector(2 * 6, -1, 1);
  const auto noise = rng.normal_vector(2 * 3);
  const auto w = rng.uniform_vector(2 * 3, -1, 1);

  auto f = [&](Tape& t) {
    GaussianDiag post = wm.posterior(t, t.constant(2, 6, h_vals));
    Tensor s = reparam_sample(t, post, t.constant(2, 3, noise));
    return scalarize(t, s, w);
  };
  auto res = grad_check(wm_g, f);
  CAPTURE(res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("prior: zero parameters give N(0,1); generic parameters respond to the triple") {
  Rng rng(11);
  ParamGroup wm_g("world_model");
  WorldModel wm(wm_g, "wm", small_wm_cfg(), rng);

  Tape t(false);
  Tensor triple_a = t.constant(1, 9, rng.uniform_vector(9, -1, 1));
  Tensor triple_b = t.constant(1, 9, rng.uniform_vector(9, -1, 1));

  // generic params: the conditioning matters
  GaussianDiag pa = wm.prior(t, triple_a);
  GaussianDiag pb = wm.prior(t, triple_b);
  double diff = 0.0;
  for (int d = 0; d < 3; ++d)
    diff += std::fabs(pa.mean.values()[static_cast<std::size_t>(d)] -
                      pb.mean.values()[static_cast<std::size_t>(d)]);
  CHECK(diff > 1e-9);

  // KL(posterior ‖ prior) finite under the log-std clamp
  GaussianDiag post = wm.posterior(t, t.constant(1, 6, rng.uniform_vector(6, -5, 5)));
  CHECK(std::isfinite(kl_diag_gaussian(t, post, pa).value()));

  for (auto& p : wm_g.params()) std::fill(p->value.begin(), p->value.end(), 0.0);
  Tape t2(false);
  GaussianDiag prior = wm.prior(t2, t2.constant(1, 9, rng.uniform_vector(9, -1, 1)));
  for (double v : prior.mean.values()) CHECK(v == 0.0);
  for (double v : prior.log_std.values()) CHECK(v == 0.0);
}

TEST_CASE("kl_balanced: value transparency and the alpha gradient split") {
  Rng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    ParamGroup qg("qg"), pg("pg");
    ParamGaussian q = make_param_gaussian(qg, "q", 4, rng);
    ParamGaussian p = make_param_gaussian(pg, "p", 4, rng);
    const double alpha = (rep % 5) * 0.25;  // includes 0 and 1

    double plain, balanced;
    std::vector<double> gq_plain, gp_plain, gq_bal, gp_bal;
    {
      Tape t;
      Tensor kl = t.sum_all(kl_diag_gaussian(t, q.on(t), p.on(t)));
      plain = kl.value();
      t.backward(kl);
      gq_plain = q.mean->grad;
      gq_plain.insert(gq_plain.end(), q.log_std->grad.begin(), q.log_std->grad.end());
      gp_plain = p.mean->grad;
      gp_plain.insert(gp_plain.end(), p.log_std->grad.begin(), p.log_std->grad.end());
    }
    qg.zero_grad();
    pg.zero_grad();
    {
      Tape t;
      Tensor klb = t.sum_all(kl_balanced(t, q.on(t), p.on(t), alpha));
      balanced = klb.value();
      t.backward(klb);
      gq_bal = q.mean->grad;
      gq_bal.insert(gq_bal.end(), q.log_std->grad.begin(), q.log_std->grad.end());
      gp_bal = p.mean->grad;
      gp_bal.insert(gp_bal.end(), p.log_std->grad.begin(), p.log_std->grad.end());
    }
    CHECK(std::fabs(balanced - plain) <= 1e-12 * std::max(1.0, std::fabs(plain)));
    for (std::size_t i = 0; i < gq_plain.size(); ++i) {
      const double want = alpha * gq_plain[i];
      CHECK(std::fabs(gq_bal[i] - want) <=
            1e-9 * std::max(1.0, std::fabs(want)));
    }
    for (std::size_t i = 0; i < gp_plain.size(); ++i) {
      const double want = (1.0 - alpha) * gp_plain[i];
      CHECK(std::fabs(gp_bal[i] - want) <=
            1e-9 * std::max(1.0, std::fabs(want)));
    }
    if (alpha == 1.0)
      for (double gv : gp_bal) CHECK(gv == 0.0);
    if (alpha == 0.0)
      for (double gv : gq_bal) CHECK(gv == 0.0);
  }
  Tape t;
  GaussianDiag g{t.zeros(1, 2), t.zeros(1, 2)};
  CHECK_THROWS_AS(kl_balanced(t, g, g, 1.5), std::invalid_argument);
}

namespace {

struct ImaginationRig {
  ParamGroup wm_g{"world_model"}, enc_g{"encoders"}, agent_g{"agent"};
  WorldModelConfig cfg;
  AgentConfig acfg;
  std::unique_ptr<WorldModel> wm;
  std::unique_ptr<SaleEncoders> latent_enc;
  std::unique_ptr<SaleEncoders> obs_enc;
  std::unique_ptr<AgentNetwork> net;

  explicit ImaginationRig(unsigned seed, int latent = 3, int n_agents = 2,
                          int n_actions = 3, int agent_hidden = 2) {
    Rng rng(seed);
    cfg.latent_dim = latent;
    cfg.hidden = 5;
    cfg.h_dim = n_agents * agent_hidden;
    acfg.obs_dim = 4;
    acfg.n_actions = n_actions;
    acfg.n_agents = n_agents;
    acfg.z_dim = latent;
    acfg.hidden = agent_hidden;
    wm = std::make_unique<WorldModel>(wm_g, "wm", cfg, rng);
    latent_enc = std::make_unique<SaleEncoders>(
        enc_g, "lat", latent_enc_cfg(latent, n_agents, n_actions), rng);
    SaleConfig oc;
    oc.input_dim = acfg.obs_dim;
    oc.z_dim = latent;
    oc.n_actions = n_actions;
    oc.action_slots = 1;
    oc.hidden = 6;
    oc.action_embed = 2;
    obs_enc = std::make_unique<SaleEncoders>(enc_g, "obs", oc, rng);
    net = std::make_unique<AgentNetwork>(agent_g, "net", acfg, rng);
  }
};

}  // namespace

TEST_CASE("imagine_step: determinism, declared shapes, z' identification") {
  ImaginationRig rig(17);
  const int B = 3;
  Rng data_rng(19);
  const auto h_vals = data_rng.uniform_vector(B * rig.cfg.h_dim, -1, 1);

  auto run = [&](Rng r) {
    Tape t(false);
    Tensor h = t.constant(B, rig.cfg.h_dim, h_vals);
    WorldModelStep st = imagine_step(t, *rig.wm, *rig.latent_enc, *rig.obs_enc,
                                     *rig.net, h, nullptr, r);
    return std::make_pair(st.a_hat, std::make_tuple(st.s_hat.values(), st.triple.values(),
                                                    st.triple_recon.values(),
                                                    st.h_next.values(), st.s_next.values()));
  };
  auto a = run(Rng(23));
  auto b = run(Rng(23));
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);

  Tape t(false);
  Tensor h = t.constant(B, rig.cfg.h_dim, h_vals);
  Rng r(23);
  WorldModelStep st = imagine_step(t, *rig.wm, *rig.latent_enc, *rig.obs_enc,
                                   *rig.net, h, nullptr, r);
  const int L = rig.cfg.latent_dim;
  CHECK(st.s_hat.rows() == B);
  CHECK(st.s_hat.cols() == L);
  CHECK(st.z_s.cols() == L);
  CHECK(st.z_sa.cols() == L);
  CHECK(st.phi_sa.cols() == L);
  CHECK(st.triple.cols() == 3 * L);
  CHECK(st.triple_recon.cols() == 3 * L);
  CHECK(st.s_next.cols() == L);
  CHECK(st.h_next.cols() == rig.cfg.h_dim);
  CHECK(st.posterior.dim() == L);
  CHECK(st.prior.dim() == L);
  REQUIRE(st.a_hat.size() == static_cast<std::size_t>(B));
  for (const auto& row : st.a_hat) {
    REQUIRE(row.size() == 2);
    for (int ai : row) {
      CHECK(ai >= 0);
      CHECK(ai < 3);
    }
  }
  // the triple is [z_sa ⊕ z_s ⊕ phi_sa]
  const auto& tv = st.triple.values();
  for (int rr = 0; rr < B; ++rr)
    for (int c = 0; c < L; ++c) {
      CHECK(tv[static_cast<std::size_t>(rr * 3 * L + c)] ==
            st.z_sa.values()[static_cast<std::size_t>(rr * L + c)]);
      CHECK(tv[static_cast<std::size_t>(rr * 3 * L + L + c)] ==
            st.z_s.values()[static_cast<std::size_t>(rr * L + c)]);
      CHECK(tv[static_cast<std::size_t>(rr * 3 * L + 2 * L + c)] ==
            st.phi_sa.values()[static_cast<std::size_t>(rr * L + c)]);
    }
}

TEST_CASE("identity-rail VAE-1 makes the next latent equal this step's state embedding") {
  ImaginationRig rig(29, /*latent=*/3);
  const int L = 3;
  // constant nonnegative state embedding: zero f2 weights, positive bias
  Parameter* f2w = rig.enc_g.find("lat.f2.W");
  Parameter* f2b = rig.enc_g.find("lat.f2.b");
  REQUIRE(f2w != nullptr);
  std::fill(f2w->value.begin(), f2w->value.end(), 0.0);
  f2b->value = {1.0, 2.0, 0.5};

  // VAE-1 rails: encoder mean picks the z_s slot, decoder writes it back
  auto zero = [&](const char* name) {
    Parameter* p = rig.wm_g.find(name);
    REQUIRE(p != nullptr);
    std::fill(p->value.begin(), p->value.end(), 0.0);
    return p;
  };
  // enc: hidden row i carries triple column L+i (the z_s slot)
  Parameter* enc_w = zero("wm.vae1_enc.W");
  for (int i = 0; i < L; ++i)
    enc_w->value[static_cast<std::size_t>(i) * (3 * L) + L + i] = 1.0;
  zero("wm.vae1_enc.b");
  Parameter* mean_w = zero("wm.vae1_mean.W");
  for (int i = 0; i < L; ++i)
    mean_w->value[static_cast<std::size_t>(i) * rig.cfg.hidden + i] = 1.0;
  zero("wm.vae1_mean.b");
  Parameter* dec_w = zero("wm.vae1_dec.W");
  for (int i = 0; i < L; ++i)
    dec_w->value[static_cast<std::size_t>(i) * L + i] = 1.0;
  zero("wm.vae1_dec.b");
  Parameter* out_w = zero("wm.vae1_out.W");
  for (int i = 0; i < L; ++i)
    out_w->value[static_cast<std::size_t>(L + i) * rig.cfg.hidden + i] = 1.0;
  zero("wm.vae1_out.b");

  Tape t(false);
  Rng r(31);
  Tensor h = t.constant(2, rig.cfg.h_dim, Rng(37).uniform_vector(2 * rig.cfg.h_dim, -1, 1));
  WorldModelStep st = imagine_step(t, *rig.wm, *rig.latent_enc, *rig.obs_enc,
                                   *rig.net, h, nullptr, r);
  CHECK(st.s_next.values() == st.z_s.values());
}

TEST_CASE("rollout: lengths, aggregation, root-only sampling, prefix stability") {
  ImaginationRig rig(41);
  const int B = 2;
  const int L = rig.cfg.latent_dim;
  const auto h_vals = Rng(43).uniform_vector(B * rig.cfg.h_dim, -1, 1);

  Tape t(false);
  Tensor h = t.constant(B, rig.cfg.h_dim, h_vals);

  Rng r0(47);
  RolloutResult j0 = rollout(t, *rig.wm, *rig.latent_enc, *rig.obs_enc, *rig.net, h, 0, r0);
  CHECK(j0.latents.size() == 1);
  CHECK(j0.aggregated.cols() == L);
  CHECK(j0.aggregated.values() == j0.latents[0].values());

  Rng r3(47);
  RolloutResult j3 = rollout(t, *rig.wm, *rig.latent_enc, *rig.obs_enc, *rig.net, h, 3, r3);
  CHECK(j3.latents.size() == 4);
  CHECK(j3.aggregated.rows() == B);
  CHECK(j3.aggregated.cols() == 4 * L);

  // aggregated = concatenation of the latents, in order
  for (int rr = 0; rr < B; ++rr)
    for (int k = 0; k < 4; ++k)
      for (int c = 0; c < L; ++c)
        CHECK(j3.aggregated.values()[static_cast<std::size_t>(rr * 4 * L + k * L + c)] ==
              j3.latents[static_cast<std::size_t>(k)]
                  .values()[static_cast<std::size_t>(rr * L + c)]);

  // identical streams: shorter rollout is a prefix of the longer one
  Rng r2(47);
  RolloutResult j2 = rollout(t, *rig.wm, *rig.latent_enc, *rig.obs_enc, *rig.net, h, 2, r2);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(j2.latents[k].values() == j3.latents[k].values());

  CHECK_THROWS_AS(
      rollout(t, *rig.wm, *rig.latent_enc, *rig.obs_enc, *rig.net, h, -1, r2),
      std::invalid_argument);
}

namespace {

WmSlice make_slice(Tape& t, Rng& rng, int T, int B, int h_dim, int n_agents,
                   int n_actions, const std::vector<double>& mask_pattern = {}) {
  WmSlice s;
  for (int k = 0; k < T; ++k) {
    s.h.push_back(t.constant(B, h_dim, rng.uniform_vector(B * h_dim, -1, 1)));
    s.h_next.push_back(t.constant(B, h_dim, rng.uniform_vector(B * h_dim, -1, 1)));
    std::vector<double> acts(static_cast<std::size_t>(B) * n_agents * n_actions, 0.0);
    for (int r = 0; r < B; ++r)
      for (int i = 0; i < n_agents; ++i)
        acts[static_cast<std::size_t>(r * n_agents * n_actions + i * n_actions +
                                      rng.uniform_int(n_actions))] = 1.0;
    s.actions.push_back(t.constant(B, n_agents * n_actions, acts));
    std::vector<double> m(static_cast<std::size_t>(B), 1.0);
    if (!mask_pattern.empty())
      for (int r = 0; r < B; ++r)
        m[static_cast<std::size_t>(r)] =
            mask_pattern[static_cast<std::size_t>((k * B + r) % mask_pattern.size())];
    s.mask.push_back(t.constant(B, 1, m));
  }
  return s;
}

}  // namespace

TEST_CASE("world_model_loss: reaches the world model only; encoder and agent grads exactly zero") {
  ImaginationRig rig(53);

  auto build = [&](Tape& t) {
    Rng d(59), noise(61);
    WmSlice slice = make_slice(t, d, 3, 2, rig.cfg.h_dim, 2, 3);
    return world_model_loss(t, *rig.wm, *rig.latent_enc, slice, noise);
  };

  {
    Tape t;
    WmLossResult res = build(t);
    CHECK(t.reaches(res.l_kl, rig.wm_g));
    CHECK(t.reaches(res.l_rec, rig.wm_g));
    CHECK_FALSE(t.reaches(res.l_kl, rig.enc_g));
    CHECK_FALSE(t.reaches(res.l_rec, rig.enc_g));
    CHECK_FALSE(t.reaches(res.l_kl, rig.agent_g));
    CHECK_FALSE(t.reaches(res.l_rec, rig.agent_g));
    // the returned embeddings are the encoder-training view
    CHECK(t.reaches(res.z_s[0], rig.enc_g));
    CHECK(t.reaches(res.z_sa[1], rig.enc_g));
    CHECK_FALSE(t.reaches(res.z_sa[1], rig.wm_g));

    rig.wm_g.zero_grad();
    rig.enc_g.zero_grad();
    t.backward(t.add(res.l_kl, res.l_rec));
    for (const auto& p : rig.enc_g.params())
      for (double gv : p->grad) CHECK(gv == 0.0);
    for (const auto& p : rig.agent_g.params())
      for (double gv : p->grad) CHECK(gv == 0.0);
    CHECK_FALSE(rig.wm_g.grads_are_zero());
  }
  // reconstruction alone trains the posterior through the live sample
  {
    Tape t;
    WmLossResult res = build(t);
    rig.wm_g.zero_grad();
    t.backward(res.l_rec);
    Parameter* pm = rig.wm_g.find("wm.post_mean.W");
    REQUIRE(pm != nullptr);
    bool touched = false;
    for (double gv : pm->grad)
      if (gv != 0.0) touched = true;
    CHECK(touched);
    // the prior never enters the reconstruction path
    for (double gv : rig.wm_g.find("wm.prior_mean.W")->grad) CHECK(gv == 0.0);
  }
  // the latent regularizer alone reaches VAE-1's decoder, because the second
  // stage encodes the live reconstruction
  {
    Tape t;
    WmLossResult res = build(t);
    rig.wm_g.zero_grad();
    t.backward(res.l_kl);
    Parameter* dec = rig.wm_g.find("wm.vae1_out.W");
    REQUIRE(dec != nullptr);
    bool touched = false;
    for (double gv : dec->grad)
      if (gv != 0.0) touched = true;
    CHECK(touched);
  }
}

TEST_CASE("prior and VAE stacks match finite differences where no gradient is stopped") {
  Rng rng(67);
  ParamGroup wm_g("world_model");
  WorldModelConfig cfg = small_wm_cfg();
  WorldModel wm(wm_g, "wm", cfg, rng);
  const int B = 2;
  const int L = cfg.latent_dim;
  const auto h_vals = rng.uniform_vector(B * cfg.h_dim, -1, 1);
  const auto triple_vals = rng.uniform_vector(B * 3 * L, -1, 1);
  const auto n1 = rng.normal_vector(B * L);
  const auto n2 = rng.normal_vector(B * L);
  const auto w3 = rng.uniform_vector(B * 3 * L, -1, 1);
  const auto wh = rng.uniform_vector(B * cfg.h_dim, -1, 1);

  // plain KL(posterior ‖ prior), live on both sides: finite differences see
  // exactly what backward sees (unlike the balanced or target-stopped forms)
  auto f_kl = [&](Tape& t) {
    GaussianDiag post = wm.posterior(t, t.constant(B, cfg.h_dim, h_vals));
    GaussianDiag prior = wm.prior(t, t.constant(B, 3 * L, triple_vals));
    return t.sum_all(kl_diag_gaussian(t, post, prior));
  };
  auto r1 = grad_check(wm_g, f_kl);
  CAPTURE(r1.worst);
  CHECK(r1.max_rel_err < 1e-4);

  // chained VAE stack on a constant triple with frozen noises; the scalar
  // touches both reconstructions and both latent regularizers
  wm_g.zero_grad();
  auto f_vae = [&](Tape& t) {
    Tensor triple = t.constant(B, 3 * L, triple_vals);
    GaussianDiag q1 = wm.vae1_encode(t, triple);
    Tensor lat1 = reparam_sample(t, q1, t.constant(B, L, n1));
    Tensor recon = wm.vae1_decode(t, lat1);
    GaussianDiag q2 = wm.vae2_encode(t, recon);
    Tensor lat2 = reparam_sample(t, q2, t.constant(B, L, n2));
    Tensor h_rec = wm.vae2_decode(t, lat2);
    Tensor obj = t.add(scalarize(t, recon, w3), scalarize(t, h_rec, wh));
    obj = t.add(obj, t.sum_all(kl_diag_gaussian(t, q1, standard_normal_like(t, q1))));
    return t.add(obj, t.sum_all(kl_diag_gaussian(t, q2, standard_normal_like(t, q2))));
  };
  auto r2 = grad_check(wm_g, f_vae);
  CAPTURE(r2.worst);
  CHECK(r2.max_rel_err < 1e-4);
}

TEST_CASE("world_model_loss: exact zero constructions and masking law") {
  // all-zero world model: posterior = prior = every VAE latent = N(0,1)
  {
    ImaginationRig rig(79);
    for (auto& p : rig.wm_g.params()) std::fill(p->value.begin(), p->value.end(), 0.0);
    Tape t;
    Rng data(83), noise(89);
    WmSlice slice = make_slice(t, data, 2, 2, rig.cfg.h_dim, 2, 3);
    WmLossResult res = world_model_loss(t, *rig.wm, *rig.latent_enc, slice, noise);
    CHECK(res.l_kl.value() == 0.0);
    CHECK(res.l_rec.value() > 0.0);
  }
  // constant embeddings + bias-only decoders reproduce every target exactly
  {
    ImaginationRig rig(97);
    const int L = rig.cfg.latent_dim;
    auto set_const = [&](const char* wname, const char* bname,
                         std::vector<double> b) {
      Parameter* w = rig.enc_g.find(wname);
      REQUIRE(w != nullptr);
      std::fill(w->value.begin(), w->value.end(), 0.0);
      rig.enc_g.find(bname)->value = std::move(b);
    };
    set_const("lat.f2.W", "lat.f2.b", {1.0, 2.0, 1.0});
    set_const("lat.g2.W", "lat.g2.b", {0.25, -0.75, 0.5});
    set_const("lat.phi_a.W", "lat.phi_a.b", {2.0, -1.0, 1.0});

    Tape probe(false);
    Tensor z_s = rig.latent_enc->encode_state(probe, probe.zeros(1, L));
    Tensor z_sa = rig.latent_enc->encode_state_action(probe, z_s, probe.zeros(1, 6));
    Tensor phi = rig.latent_enc->linear_feature(probe, probe.zeros(1, L), probe.zeros(1, 6));
    const auto c_zsa = z_sa.values();
    const auto c_zs = z_s.values();
    const auto c_phi = phi.values();

    auto bias_only = [&](const char* wname, const char* bname,
                         std::vector<double> b) {
      Parameter* w = rig.wm_g.find(wname);
      REQUIRE(w != nullptr);
      std::fill(w->value.begin(), w->value.end(), 0.0);
      rig.wm_g.find(bname)->value = std::move(b);
    };
    std::vector<double> triple_bias;
    triple_bias.insert(triple_bias.end(), c_zsa.begin(), c_zsa.end());
    triple_bias.insert(triple_bias.end(), c_zs.begin(), c_zs.end());
    triple_bias.insert(triple_bias.end(), c_phi.begin(), c_phi.end());
    bias_only("wm.vae1_out.W", "wm.vae1_out.b", triple_bias);
    const std::vector<double> h_const = {0.3, -0.2, 0.1, 0.4};
    bias_only("wm.vae2_out.W", "wm.vae2_out.b", h_const);

    Tape t;
    Rng noise(101);
    WmSlice s;
    const int B = 2;
    std::vector<double> h_rows, acts(static_cast<std::size_t>(B) * 6, 0.0);
    for (int r = 0; r < B; ++r) {
      h_rows.insert(h_rows.end(), h_const.begin(), h_const.end());
      acts[static_cast<std::size_t>(r) * 6 + 0] = 1.0;
      acts[static_cast<std::size_t>(r) * 6 + 3] = 1.0;
    }
    s.h.push_back(t.constant(B, 4, Rng(103).uniform_vector(B * 4, -1, 1)));
    s.h_next.push_back(t.constant(B, 4, h_rows));
    s.actions.push_back(t.constant(B, 6, acts));
    s.mask.push_back(t.constant(B, 1, {1.0, 1.0}));
    WmLossResult res = world_model_loss(t, *rig.wm, *rig.latent_enc, s, noise);
    CHECK(res.l_rec.value() == 0.0);
    CHECK(res.l_kl.value() > 0.0);
    // bias-only decoders make every distribution input identical across the
    // sampled and mean paths, so the KL agrees bitwise and both hit zero error
    Tape t2;
    WmSlice s2;
    s2.h.push_back(t2.constant(B, 4, Rng(103).uniform_vector(B * 4, -1, 1)));
    s2.h_next.push_back(t2.constant(B, 4, h_rows));
    s2.actions.push_back(t2.constant(B, 6, acts));
    s2.mask.push_back(t2.constant(B, 1, {1.0, 1.0}));
    WmLossResult res_mean = world_model_loss(t2, *rig.wm, *rig.latent_enc, s2);
    CHECK(res_mean.l_rec.value() == 0.0);
    CHECK(res_mean.l_kl.value() == res.l_kl.value());
  }
  // masking: an all-masked row contributes nothing
  {
    ImaginationRig rig(107);
    Rng data(109);
    const int T = 2;
    std::vector<std::vector<double>> h1, hn1, a1;
    for (int k = 0; k < T; ++k) {
      h1.push_back(data.uniform_vector(rig.cfg.h_dim, -1, 1));
      hn1.push_back(data.uniform_vector(rig.cfg.h_dim, -1, 1));
      std::vector<double> acts(6, 0.0);
      acts[static_cast<std::size_t>(data.uniform_int(3))] = 1.0;
      acts[static_cast<std::size_t>(3 + data.uniform_int(3))] = 1.0;
      a1.push_back(acts);
    }
    auto pad = [&](const std::vector<double>& row, int copies) {
      std::vector<double> out;
      for (int c = 0; c < copies; ++c) out.insert(out.end(), row.begin(), row.end());
      return out;
    };
    // run A: B=2 with the second row masked out; run B: only the first row.
    // the noise stream must line up, so pad both to the same draw shape by
    // using a fixed per-run seed and B=1 vs B=2 comparison on equal draws:
    // instead, mask out the row in both runs and compare against itself with
    // extra all-zero steps appended (zero-mask steps must not change values).
    auto loss_with = [&](int extra_masked_steps) {
      Tape t;
      Rng noise(113);
      WmSlice s;
      for (int k = 0; k < T; ++k) {
        s.h.push_back(t.constant(1, rig.cfg.h_dim, h1[static_cast<std::size_t>(k)]));
        s.h_next.push_back(t.constant(1, rig.cfg.h_dim, hn1[static_cast<std::size_t>(k)]));
        s.actions.push_back(t.constant(1, 6, a1[static_cast<std::size_t>(k)]));
        s.mask.push_back(t.constant(1, 1, {1.0}));
      }
      for (int e = 0; e < extra_masked_steps; ++e) {
        s.h.push_back(t.constant(1, rig.cfg.h_dim, pad(h1[0], 1)));
        s.h_next.push_back(t.constant(1, rig.cfg.h_dim, pad(hn1[0], 1)));
        s.actions.push_back(t.constant(1, 6, a1[0]));
        s.mask.push_back(t.constant(1, 1, {0.0}));
      }
      WmLossResult res = world_model_loss(t, *rig.wm, *rig.latent_enc, s, noise);
      return std::make_pair(res.l_kl.value(), res.l_rec.value());
    };
    CHECK(loss_with(0) == loss_with(2));
  }
  // degenerate slices are rejected
  {
    ImaginationRig rig(127);
    Tape t;
    Rng noise(131);
    WmSlice empty;
    CHECK_THROWS_AS(world_model_loss(t, *rig.wm, *rig.latent_enc, empty, noise),
                    std::invalid_argument);
    WmSlice zeroed = make_slice(t, noise, 1, 1, rig.cfg.h_dim, 2, 3, {0.0});
    CHECK_THROWS_AS(world_model_loss(t, *rig.wm, *rig.latent_enc, zeroed, noise),
                    std::invalid_argument);
  }
}

TEST_CASE("mean-path loss: deterministic, same decoupling, noise-free reconstruction") {
  ImaginationRig rig(137);
  auto run_mean = [&]() {
    Tape t;
    Rng d(139);
    WmSlice slice = make_slice(t, d, 2, 2, rig.cfg.h_dim, 2, 3);
    WmLossResult res = world_model_loss(t, *rig.wm, *rig.latent_enc, slice);
    return std::make_tuple(res.l_kl.value(), res.l_rec.value(),
                           t.reaches(res.l_rec, rig.enc_g),
                           t.reaches(res.l_rec, rig.wm_g));
  };
  auto a = run_mean();
  auto b = run_mean();
  CHECK(a == b);
  CHECK_FALSE(std::get<2>(a));
  CHECK(std::get<3>(a));

  // sampled runs with different noise differ; the mean path never does
  auto run_sampled = [&](unsigned noise_seed) {
    Tape t;
    Rng d(139), noise(noise_seed);
    WmSlice slice = make_slice(t, d, 2, 2, rig.cfg.h_dim, 2, 3);
    return world_model_loss(t, *rig.wm, *rig.latent_enc, slice, noise)
        .l_rec.value();
  };
  CHECK(run_sampled(141) != run_sampled(149));
}

TEST_CASE("world-model overfit: frozen coordination buffer, reconstruction below 1e-3") {
  // exactly the capacity gate: 10 episodes of the 2x2 coordination game,
  // full-size nets, mean-path reconstruction objective, learning rate
  // annealed linearly to zero across the 2000-step budget
  const unsigned seed = 1;
  Rng init(seed);
  ParamGroup agent_g("agent"), enc_g("encoders"), wm_g("world_model");
  AgentConfig acfg;
  acfg.obs_dim = 3;
  acfg.n_actions = 2;
  acfg.n_agents = 2;
  acfg.z_dim = 16;
  acfg.hidden = 64;
  AgentNetwork net(agent_g, "net", acfg, init);
  SaleConfig lc;
  lc.input_dim = 16;
  lc.z_dim = 16;
  lc.n_actions = 2;
  lc.action_slots = 2;
  lc.hidden = 64;
  lc.action_embed = 4;
  SaleEncoders latent_enc(enc_g, "lat", lc, init);
  WorldModelConfig wcfg;
  wcfg.h_dim = 128;
  wcfg.latent_dim = 16;
  wcfg.hidden = 64;
  WorldModel wm(wm_g, "wm", wcfg, init);

  MatrixGame env(2, 2, {1, 0, 0, 1}, 0.99);
  const int B = 10;
  std::vector<double> h0_vals, h1_vals, act_vals;
  Rng ep_rng(seed * 1000 + 7);
  for (int ep = 0; ep < B; ++ep) {
    auto r0 = env.reset(ep);
    Tape t(false);
    std::vector<Tensor> h0(2), h1(2);
    int acts[2];
    for (int i = 0; i < 2; ++i) {
      std::vector<double> id(2, 0.0);
      id[static_cast<std::size_t>(i)] = 1.0;
      Tensor obs = t.constant(1, 3, std::vector<double>(r0.observations[static_cast<std::size_t>(i)]));
      h0[static_cast<std::size_t>(i)] = net.hidden_step(
          t, obs, t.zeros(1, 2), t.constant(1, 2, id), t.zeros(1, 64));
      acts[i] = ep_rng.uniform_int(2);
    }
    auto r1 = env.step({acts[0], acts[1]});
    for (int i = 0; i < 2; ++i) {
      std::vector<double> id(2, 0.0);
      id[static_cast<std::size_t>(i)] = 1.0;
      std::vector<double> la(2, 0.0);
      la[static_cast<std::size_t>(acts[i])] = 1.0;
      Tensor obs = t.constant(1, 3, std::vector<double>(r1.observations[static_cast<std::size_t>(i)]));
      h1[static_cast<std::size_t>(i)] = net.hidden_step(
          t, obs, t.constant(1, 2, la), t.constant(1, 2, id),
          h0[static_cast<std::size_t>(i)]);
    }
    for (int i = 0; i < 2; ++i) {
      const auto v0 = h0[static_cast<std::size_t>(i)].values();
      h0_vals.insert(h0_vals.end(), v0.begin(), v0.end());
    }
    for (int i = 0; i < 2; ++i) {
      const auto v1 = h1[static_cast<std::size_t>(i)].values();
      h1_vals.insert(h1_vals.end(), v1.begin(), v1.end());
    }
    std::vector<double> joint(4, 0.0);
    joint[static_cast<std::size_t>(acts[0])] = 1.0;
    joint[static_cast<std::size_t>(2 + acts[1])] = 1.0;
    act_vals.insert(act_vals.end(), joint.begin(), joint.end());
  }

  const int kSteps = 2000;
  double best = 1e18;
  for (int stepi = 0; stepi < kSteps; ++stepi) {
    Tape t;
    WmSlice s;
    s.h.push_back(t.constant(B, 128, h0_vals));
    s.h_next.push_back(t.constant(B, 128, h1_vals));
    s.actions.push_back(t.constant(B, 4, act_vals));
    s.mask.push_back(t.constant(B, 1, std::vector<double>(B, 1.0)));
    WmLossResult res = world_model_loss(t, wm, latent_enc, s);
    best = std::min(best, res.l_rec.value());
    if (best < 1e-3) break;
    wm_g.zero_grad();
    t.backward(res.l_rec);
    RmsPropConfig opt;
    opt.lr = 1e-3 * (1.0 - static_cast<double>(stepi) / kSteps);
    rmsprop_step(wm_g, opt);
  }
  CHECK(best < 1e-3);
}
