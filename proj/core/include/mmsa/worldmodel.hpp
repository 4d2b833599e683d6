#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mmsa/agent.hpp"
#include "mmsa/gaussian.hpp"
#include "mmsa/params.hpp"
#include "mmsa/rng.hpp"
#include "mmsa/sale.hpp"
#include "mmsa/tensor.hpp"

namespace mmsa {

struct WorldModelConfig {
  int h_dim = 0;        // joint hidden width (n_agents x agent hidden)
  int latent_dim = 16;  // width of s_hat, of each VAE latent, and of the
                        // embedding slots (the s_hat := z' identification
                        // requires the state-embedding width to equal this)
  int hidden = 64;      // single hidden layer width of every subnetwork
  int rollout_horizon = 3;
  double kl_balance_alpha = 0.8;
  // false swaps the balanced posterior–prior term for the plain KL (same
  // value, gradients live on both sides at unit scale).
  bool kl_balance = true;
};

// Latent imagination stack: a posterior q(s_hat | h), a learned prior
// p(s_hat | previous embedding triple), VAE-1 (triple -> triple') and VAE-2
// (triple' -> h'). All parameters live in one "world_model" group. The
// embedding triple is ordered [z^{sa} ⊕ z^{s} ⊕ φ^{sa}] everywhere.
class WorldModel {
 public:
  WorldModel(ParamGroup& g, const std::string& name,
             const WorldModelConfig& cfg, Rng& rng);

  const WorldModelConfig& config() const { return cfg_; }

  // q(s_hat | h); h [B x h_dim].
  GaussianDiag posterior(Tape& t, const Tensor& h) const;
  // p(s_hat | triple); triple [B x 3*latent]; zero parameters give N(0, I).
  GaussianDiag prior(Tape& t, const Tensor& triple) const;

  GaussianDiag vae1_encode(Tape& t, const Tensor& triple) const;
  Tensor vae1_decode(Tape& t, const Tensor& latent) const;  // -> [B x 3*latent]
  GaussianDiag vae2_encode(Tape& t, const Tensor& triple_recon) const;
  Tensor vae2_decode(Tape& t, const Tensor& latent) const;  // -> [B x h_dim]

 private:
  WorldModelConfig cfg_;
  Linear post1_, post_mean_, post_log_std_;
  Linear prior1_, prior_mean_, prior_log_std_;
  Linear vae1_enc_, vae1_mean_, vae1_log_std_, vae1_dec_, vae1_out_;
  Linear vae2_enc_, vae2_mean_, vae2_log_std_, vae2_dec_, vae2_out_;
};

// Posterior Gaussian plus a reparameterized sample (noise drawn from rng).
std::pair<GaussianDiag, Tensor> posterior_infer(Tape& t, const WorldModel& wm,
                                                const Tensor& h, Rng& rng);

// alpha * KL(q ‖ sg(p)) + (1 - alpha) * KL(sg(q) ‖ p); value equals the
// plain KL, gradients are scaled alpha toward q and (1 - alpha) toward p.
// Returns [B x 1].
Tensor kl_balanced(Tape& t, const GaussianDiag& q, const GaussianDiag& p,
                   double alpha);

struct WorldModelStep {
  GaussianDiag posterior;  // q(s_hat | h) at this step's h
  GaussianDiag prior;      // p(next s_hat | this step's triple)
  Tensor s_hat;            // [B x latent]
  Tensor z_s, z_sa, phi_sa;  // [B x latent] each
  Tensor triple;             // [B x 3*latent]
  Tensor triple_recon;       // [B x 3*latent]
  Tensor s_next;             // z' state slot of triple_recon, the next s_hat
  Tensor h_next;             // [B x h_dim]
  std::vector<std::vector<int>> a_hat;  // greedy joint action per batch row
};

// One imagined step from h. With s_hat_threaded null, s_hat is sampled from
// the posterior and embedded via encode_state; a threaded s_hat (an earlier
// step's z' output) is used directly as its own state embedding. Action
// selection is greedy per agent on [z^s ⊕ g(z^s, a) ⊕ φ^s ⊕ h_slice]; VAE
// latents take the mean path (deterministic imagination).
WorldModelStep imagine_step(Tape& t, const WorldModel& wm,
                            const SaleEncoders& latent_enc,
                            const SaleEncoders& obs_enc,
                            const AgentNetwork& net, const Tensor& h,
                            const Tensor* s_hat_threaded, Rng& rng);

struct RolloutResult {
  std::vector<Tensor> latents;  // [s_hat_t, z_{t+1}, ..., z_{t+j}]
  Tensor aggregated;            // [B x (j+1)*latent] concatenation
  int horizon = 0;
};

// j imagined steps from h, threading s_hat and h'; the posterior is sampled
// once at the root. j = 0 returns the root sample alone.
RolloutResult rollout(Tape& t, const WorldModel& wm,
                      const SaleEncoders& latent_enc,
                      const SaleEncoders& obs_enc, const AgentNetwork& net,
                      const Tensor& h, int j, Rng& rng);

// Teacher-forced training slice: one entry per time step, batched over
// episodes. h and h_next come from the agent RNN on real data; actions are
// the real joint one-hots [B x n_agents*n_actions]; mask is [B x 1] step
// validity.
struct WmSlice {
  std::vector<Tensor> h;
  std::vector<Tensor> h_next;
  std::vector<Tensor> actions;
  std::vector<Tensor> mask;
};

struct WmLossResult {
  Tensor l_kl;   // [1 x 1]
  Tensor l_rec;  // [1 x 1]
  // Per-step latent-path embeddings for the caller's prediction loss:
  // live encoder weights applied to the gradient-stopped posterior sample.
  std::vector<Tensor> z_s;
  std::vector<Tensor> z_sa;
};

// L_KL = mean over valid steps of KL(prior ‖ N(0,I)) + KLB(post, prior, α)
// plus both VAE-internal KLs at unit weight; L_REC = mean of the four
// reconstruction MSEs (three triple slots and the next joint hidden).
// Posterior inputs (h), prior conditioning, and every reconstruction target
// are gradient-stopped; the VAE-1 input triple keeps the reparameterized
// posterior sample live while the embedding weights read as detached
// constants, so backward trains the posterior yet reaches the world_model
// group only.
WmLossResult world_model_loss(Tape& t, const WorldModel& wm,
                              const SaleEncoders& latent_enc,
                              const WmSlice& slice, Rng& rng);

// Deterministic variant: the posterior and both VAE latents ride their mean
// path (the same path imagination uses), so the losses are noise-free. Used
// by overfit/capacity checks; training uses the sampled form above.
WmLossResult world_model_loss(Tape& t, const WorldModel& wm,
                              const SaleEncoders& latent_enc,
                              const WmSlice& slice);

}  // namespace mmsa
