#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmsa/rng.hpp"
#include "mmsa/tensor.hpp"

namespace mmsa {

class ParamGroup;

// A learnable tensor. rank is 1 (vector, stored as [1 x cols]) or 2 (matrix
// [rows x cols]); the rank is preserved in checkpoints. grad accumulates
// across backward calls until zero_grad; rms is the RMSProp accumulator.
struct Parameter {
  std::string name;
  int rank = 2;
  int rows = 1, cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> rms;
  const ParamGroup* owner = nullptr;

  int size() const { return rows * cols; }
};

// A named set of Parameters updated together by one optimizer step. Every
// learnable tensor in the system belongs to exactly one group; decoupling
// audits and the optimizer operate at group granularity.
class ParamGroup {
 public:
  explicit ParamGroup(std::string name) : name_(std::move(name)) {}
  ParamGroup(const ParamGroup&) = delete;
  ParamGroup& operator=(const ParamGroup&) = delete;

  const std::string& name() const { return name_; }
  Parameter& add(const std::string& name, int rank, int rows, int cols);
  Parameter* find(const std::string& name);
  const std::vector<std::unique_ptr<Parameter>>& params() const { return params_; }
  std::size_t n_params() const { return params_.size(); }
  std::size_t n_elements() const;

  void zero_grad();
  // True iff every grad entry of every parameter is exactly 0.0.
  bool grads_are_zero() const;
  // Names of parameters holding any nonzero grad entry.
  std::vector<std::string> params_with_nonzero_grad() const;

 private:
  std::string name_;
  std::vector<std::unique_ptr<Parameter>> params_;
};

// Copies values (not grads or rms state) between structurally identical
// groups; used for hard target-network sync.
void copy_values(const ParamGroup& src, ParamGroup& dst);

struct RmsPropConfig {
  double lr = 1e-3;
  double alpha = 0.99;   // accumulator decay
  double eps = 1e-5;     // added inside the square root
  double grad_clip = 10.0;  // global-norm clip per group; <=0 disables
};

// Clips the group's gradient to grad_clip by global norm, then applies
//   acc <- alpha*acc + (1-alpha)*g^2;  p <- p - lr * g / sqrt(acc + eps).
// Returns the pre-clip global gradient norm.
double rmsprop_step(ParamGroup& group, const RmsPropConfig& cfg);

// Global L2 norm over all grads in the group.
double grad_global_norm(const ParamGroup& group);

// ---- checkpoint io ----
// Layout: magic "MMSACKPT", u32 version, u32 group count, then per group:
// u32 name length, name bytes, u32 tensor count, and per tensor: u32 rank,
// u64 dims[rank], little-endian f64 payload. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, std::span<const ParamGroup* const> groups);
// Groups must already have the exact structure (names, order, shapes) of the
// file; values are overwritten bit-exactly.
void load_checkpoint(const std::string& path, std::span<ParamGroup* const> groups);

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- layer builders ----

struct Linear {
  Parameter* W = nullptr;  // [out x in]
  Parameter* b = nullptr;  // [1 x out]
};

// Scaled-uniform init U(+-sqrt(1/in)) for W, zero bias.
Linear make_linear(ParamGroup& g, const std::string& name, int out, int in, Rng& rng);
// Orthogonal(-style) init: rows orthonormalized from a Gaussian draw, used
// for recurrent weights.
Linear make_linear_orthogonal(ParamGroup& g, const std::string& name, int out, int in, Rng& rng);

Tensor apply(Tape& t, const Linear& l, const Tensor& x);

// GRU-style recurrent cell (single-bias form):
//   r  = sigmoid(x Wr + h Ur + br)
//   zg = sigmoid(x Wz + h Uz + bz)
//   n  = tanh(x Wn + r * (h Un) + bn)
//   h' = (1 - zg) * n + zg * h
// All-zero parameters and inputs give h' = 0.
struct GruCell {
  Linear wr, wz, wn;                          // input -> hidden (with biases)
  Parameter *ur = nullptr, *uz = nullptr, *un = nullptr;  // hidden -> hidden
  int hidden = 0;
};

GruCell make_gru(ParamGroup& g, const std::string& name, int hidden, int in, Rng& rng);
// x: [B x in], h_prev: [B x hidden] -> [B x hidden]
Tensor gru_step(Tape& t, const GruCell& c, const Tensor& x, const Tensor& h_prev);

}  // namespace mmsa
