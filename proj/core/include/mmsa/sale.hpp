#pragma once

#include <stdexcept>
#include <string>

#include "mmsa/params.hpp"
#include "mmsa/tensor.hpp"

namespace mmsa {

// Embedding normalizer choice (the design-study axis): the scale-preserving
// AvgL1Norm default, no normalization, or a parameter-free row
// standardization.
enum class SaleNorm { avg_l1, none, layer_norm };

SaleNorm parse_sale_norm(const std::string& name);  // throws std::invalid_argument
std::string sale_norm_name(SaleNorm norm);

// Shape configuration for one encoder pair. action_slots distinguishes the
// per-agent instance (1: local actions) from the joint instance (n_agents).
struct SaleConfig {
  int input_dim = 0;     // x width for f and the linear features
  int z_dim = 16;        // embedding width
  int n_actions = 0;     // per-agent action count
  int action_slots = 1;  // how many agents' one-hots the action encoding holds
  int hidden = 64;       // MLP hidden width for f and g
  int action_embed = 4;  // per-action embedding width inside g
  SaleNorm norm = SaleNorm::avg_l1;
  // Stand-in mode: every output becomes a parameter-free AvgL1Norm-ed fold
  // of the raw inputs. Parameters are still constructed (checkpoints keep
  // their shape across the flag), they just never enter the outputs.
  bool passthrough = false;
};

// State encoder f, state-action encoder g with a shared per-slot action
// embedding table, and the linear feature maps phi (action-conditioned and
// action-omitted). All parameters live in the group passed at construction
// (the "encoders" group in training).
//
// Outputs: encode_state and linear_feature pass through the configured
// normalizer (AvgL1Norm by default: mean-|.| = 1 per row unless the zero
// guard fires); encode_state_action is unnormalized.
class SaleEncoders {
 public:
  SaleEncoders(ParamGroup& g, const std::string& name, const SaleConfig& cfg, Rng& rng);

  const SaleConfig& config() const { return cfg_; }
  // The group all encoder parameters live in.
  const ParamGroup* group() const;

  // z = AvgL1Norm(f(x)); x [B x input_dim] -> [B x z_dim].
  Tensor encode_state(Tape& t, const Tensor& x) const;

  // g(z ⊕ embed(actions)); actions_onehot [B x action_slots*n_actions],
  // z [B x z_dim] -> [B x z_dim]. Output is not normalized.
  Tensor encode_state_action(Tape& t, const Tensor& z, const Tensor& actions_onehot) const;

  // AvgL1Norm(Linear(x ⊕ actions)) -> [B x z_dim].
  Tensor linear_feature(Tape& t, const Tensor& x, const Tensor& actions_onehot) const;
  // Action-omitted policy-path variant: AvgL1Norm(Linear(x)).
  Tensor linear_feature(Tape& t, const Tensor& x) const;

  // Embedding-prediction loss: mean over rows (weighted by mask01 [B x 1]
  // when given) of the squared L2 distance between g(f(x_t), a_t) and the
  // gradient-stopped embedding of x_next. Gradients reach f and g only.
  Tensor sale_loss(Tape& t, const Tensor& x_t, const Tensor& actions_onehot,
                   const Tensor& x_next) const;
  Tensor sale_loss(Tape& t, const Tensor& x_t, const Tensor& actions_onehot,
                   const Tensor& x_next, const Tensor& mask01) const;

  // Loss against an already-computed next embedding (used when the target
  // comes from another encoder instance or a latent path).
  static Tensor prediction_loss(Tape& t, const Tensor& z_joint_t, const Tensor& z_next,
                                const Tensor& mask01);

 private:
  SaleConfig cfg_;
  Linear f1_, f2_;          // f: input -> hidden -> z_dim
  Parameter* embed_ = nullptr;  // [action_embed x n_actions], shared across slots
  Linear g1_, g2_;          // [z ⊕ embeds] -> hidden -> z_dim
  Linear phi_a_;            // [x ⊕ actions] -> z_dim
  Linear phi_s_;            // [x] -> z_dim (policy path)
};

struct DecouplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raises DecouplingError naming the offending parameters if any gradient in
// the group is nonzero. Call after backpropagating a loss that must not
// touch the group.
void assert_decoupled(const ParamGroup& group);

// Parameter-free stand-ins used by the No-SALE ablation: deterministic
// cyclic fold of x to out_cols columns (out[i] = sum_k x[i + k*out_cols]),
// then AvgL1Norm. Shape-compatible with the encoder outputs.
Tensor fold_resize(Tape& t, const Tensor& x, int out_cols);
Tensor passthrough_feature(Tape& t, const Tensor& x, int out_cols);

// Row standardization (x - mean) / sqrt(var + 1e-8) built from primitive ops.
Tensor layer_norm_feature(Tape& t, const Tensor& x);
// Dispatches on the normalizer choice; SaleNorm::none returns x unchanged.
Tensor apply_norm(Tape& t, const Tensor& x, SaleNorm norm);

}  // namespace mmsa
