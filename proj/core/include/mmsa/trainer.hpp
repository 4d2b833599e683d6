#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmsa/agent.hpp"
#include "mmsa/env.hpp"
#include "mmsa/mixer.hpp"
#include "mmsa/params.hpp"
#include "mmsa/replay.hpp"
#include "mmsa/rng.hpp"
#include "mmsa/sale.hpp"
#include "mmsa/worldmodel.hpp"

namespace mmsa {

struct TrainerConfig {
  int batch_size = 32;
  int buffer_size = 5000;
  double lr = 1e-3;
  double gamma = 0.99;
  long long target_update_interval = 200;  // gradient steps between hard syncs
  long long test_interval = 10000;         // environment steps between evaluations
  int test_episodes = 32;
  int rollout_horizon = 3;
  double kl_balance_alpha = 0.8;
  double grad_clip = 10.0;
  std::uint64_t seed = 1;
  long long total_steps = 50000;  // environment-step budget for run()
  EpsilonSchedule epsilon;        // annealed on environment steps

  // network widths
  int z_dim = 16;
  int agent_hidden = 64;
  int mlp_hidden = 64;
  int action_embed = 4;
  int mixer_embed = 32;
  int hypernet_hidden = 64;

  // embedding normalizer: avg_l1 | none | layer_norm (the design-study axis)
  std::string sale_norm = "avg_l1";

  // ablation flags; each removes one mechanism, shapes stay fixed
  bool no_wm = false;    // drop the world model: no KL/REC losses, zero rollout context
  bool no_sale = false;  // encoders become parameter-free passthroughs, no embedding loss
  bool no_klb = false;   // plain posterior-prior KL instead of the balanced form
  bool no_gs = false;    // mixer ignores the global state slot
};

// The five supported variants, "full" first.
const std::vector<std::string>& ablation_variants();

// base with all flags cleared and the named variant's flag set ("full" sets
// none). Unknown names throw std::invalid_argument.
TrainerConfig make_ablation(const TrainerConfig& base, const std::string& variant);

// Variant name for a config: "full", one flag's name, or '+'-joined flags.
std::string variant_name(const TrainerConfig& cfg);

struct LossReport {
  long long step = 0;  // gradient step index, 1-based
  double l_kl = 0.0;
  double l_rec = 0.0;
  double l_td = 0.0;
  double l_sale = 0.0;
  double l_total = 0.0;
  double epsilon = 0.0;
  std::map<std::string, double> grad_norms;  // pre-clip, by group name
};

struct EvalReport {
  double mean_return = 0.0;
  std::vector<double> returns;  // per test episode, discounted
};

// Every network and parameter group of one learner. The agent and mixer have
// frozen mirrors used for TD targets; encoders and world model do not.
struct MmsaNets {
  MmsaNets(const DecPomdpSpec& spec, const TrainerConfig& cfg, Rng& rng);

  ParamGroup agent{"agent"};
  ParamGroup mixer{"mixer"};
  ParamGroup encoders{"encoders"};
  ParamGroup world_model{"world_model"};
  ParamGroup agent_target{"agent_target"};
  ParamGroup mixer_target{"mixer_target"};

  SaleEncoders obs_enc;     // per-agent observations, local actions
  SaleEncoders latent_enc;  // latent states, joint actions
  AgentNetwork net;
  AgentNetwork net_target;
  WorldModel wm;
  Mixer mix;
  Mixer mix_target;

  // Hard copy agent + mixer values into their targets (bitwise).
  void sync_target();

  // Checkpoint order: agent, mixer, encoders, world_model, targets.
  std::vector<const ParamGroup*> all_groups() const;
  std::vector<ParamGroup*> all_groups();
};

// Episodic CTDE loop: one epsilon-greedy episode per iteration, one gradient
// step per stored episode once the buffer can fill a batch, hard target syncs
// every target_update_interval gradient steps, greedy evaluation every
// test_interval environment steps. All randomness derives from cfg.seed, so
// two runs with one config produce identical reports bit for bit.
class Trainer {
 public:
  Trainer(std::unique_ptr<Env> env, const TrainerConfig& cfg);

  const TrainerConfig& config() const { return cfg_; }
  Env& env() { return *env_; }
  MmsaNets& nets() { return nets_; }
  ReplayBuffer& buffer() { return buffer_; }
  long long env_steps() const { return env_steps_; }
  long long grad_steps() const { return grad_steps_; }
  double current_epsilon() const { return epsilon_at(cfg_.epsilon, env_steps_); }

  // Plays one episode. Training mode explores at the current epsilon, stores
  // the episode, and advances the environment-step counter; greedy mode does
  // none of that (the schedule is untouched).
  EpisodeBatch run_episode(bool greedy);

  // One gradient step on a sampled batch: assembles the KL, reconstruction,
  // TD and embedding losses on one tape, audits gradient routing, backprops
  // once, and applies RMSProp per group. Returns nothing while the buffer
  // holds fewer than batch_size episodes (wait, not an error).
  std::optional<LossReport> train_step();

  // Unconditional hard sync (the run loop applies the interval).
  void sync_target() { nets_.sync_target(); }

  // test_episodes greedy episodes on the current parameters.
  EvalReport evaluate();

  using LossFn = std::function<void(const LossReport&)>;
  using EvalFn = std::function<void(long long env_step, const EvalReport&)>;

  // Runs until total_steps environment steps, invoking the callbacks for
  // every gradient step and evaluation; a final evaluation closes the run.
  void run(const LossFn& on_loss = {}, const EvalFn& on_eval = {});

 private:
  LossReport optimize_batch(const std::vector<const EpisodeBatch*>& batch);

  TrainerConfig cfg_;
  std::unique_ptr<Env> env_;
  Rng init_rng_, act_rng_, env_rng_, train_rng_, eval_rng_;
  MmsaNets nets_;
  ReplayBuffer buffer_;
  long long env_steps_ = 0;
  long long grad_steps_ = 0;
};

}  // namespace mmsa
