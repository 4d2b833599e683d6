#include "mmsa/sale.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmsa {

SaleEncoders::SaleEncoders(ParamGroup& g, const std::string& name, const SaleConfig& cfg,
                           Rng& rng)
    : cfg_(cfg) {
  if (cfg.input_dim < 1 || cfg.z_dim < 1 || cfg.n_actions < 1 || cfg.action_slots < 1)
    throw ShapeError("SaleEncoders: bad config");
  f1_ = make_linear(g, name + ".f1", cfg.hidden, cfg.input_dim, rng);
  f2_ = make_linear(g, name + ".f2", cfg.z_dim, cfg.hidden, rng);
  embed_ = &g.add(name + ".embed", 2, cfg.action_embed, cfg.n_actions);
  {
    const double bound = std::sqrt(1.0 / cfg.n_actions);
    for (auto& v : embed_->value) v = rng.uniform(-bound, bound);
  }
  const int g_in = cfg.z_dim + cfg.action_slots * cfg.action_embed;
  g1_ = make_linear(g, name + ".g1", cfg.hidden, g_in, rng);
  g2_ = make_linear(g, name + ".g2", cfg.z_dim, cfg.hidden, rng);
  phi_a_ = make_linear(g, name + ".phi_a", cfg.z_dim,
                       cfg.input_dim + cfg.action_slots * cfg.n_actions, rng);
  phi_s_ = make_linear(g, name + ".phi_s", cfg.z_dim, cfg.input_dim, rng);
}

const ParamGroup* SaleEncoders::group() const { return f1_.W->owner; }

Tensor SaleEncoders::encode_state(Tape& t, const Tensor& x) const {
  if (x.cols() != cfg_.input_dim)
    throw ShapeError("encode_state: input width " + std::to_string(x.cols()) + ", want " +
                     std::to_string(cfg_.input_dim));
  if (cfg_.passthrough) return passthrough_feature(t, x, cfg_.z_dim);
  return apply_norm(t, apply(t, f2_, t.elu(apply(t, f1_, x))), cfg_.norm);
}

Tensor SaleEncoders::encode_state_action(Tape& t, const Tensor& z,
                                         const Tensor& actions_onehot) const {
  if (z.cols() != cfg_.z_dim) throw ShapeError("encode_state_action: z width mismatch");
  if (actions_onehot.cols() != cfg_.action_slots * cfg_.n_actions)
    throw ShapeError("encode_state_action: action encoding width " +
                     std::to_string(actions_onehot.cols()) + ", want " +
                     std::to_string(cfg_.action_slots * cfg_.n_actions));
  if (cfg_.passthrough)
    return passthrough_feature(t, t.concat_cols({z, actions_onehot}), cfg_.z_dim);
  // per-slot lookup through the shared embedding table
  std::vector<Tensor> parts;
  parts.push_back(z);
  for (int s = 0; s < cfg_.action_slots; ++s) {
    Tensor onehot = t.slice_cols(actions_onehot, s * cfg_.n_actions, cfg_.n_actions);
    parts.push_back(t.matmul_nt(onehot, t.leaf(*embed_)));
  }
  Tensor in = t.concat_cols(parts);
  return apply(t, g2_, t.elu(apply(t, g1_, in)));
}

Tensor SaleEncoders::linear_feature(Tape& t, const Tensor& x,
                                    const Tensor& actions_onehot) const {
  if (cfg_.passthrough)
    return passthrough_feature(t, t.concat_cols({x, actions_onehot}), cfg_.z_dim);
  return apply_norm(t, apply(t, phi_a_, t.concat_cols({x, actions_onehot})), cfg_.norm);
}

Tensor SaleEncoders::linear_feature(Tape& t, const Tensor& x) const {
  if (cfg_.passthrough) return passthrough_feature(t, x, cfg_.z_dim);
  return apply_norm(t, apply(t, phi_s_, x), cfg_.norm);
}

Tensor SaleEncoders::prediction_loss(Tape& t, const Tensor& z_joint_t, const Tensor& z_next,
                                     const Tensor& mask01) {
  Tensor diff = t.sub(z_joint_t, t.stop_gradient(z_next));
  return masked_mean(t, t.row_sum(t.square(diff)), mask01);
}

Tensor SaleEncoders::sale_loss(Tape& t, const Tensor& x_t, const Tensor& actions_onehot,
                               const Tensor& x_next) const {
  return sale_loss(t, x_t, actions_onehot, x_next,
                   t.constant(x_t.rows(), 1, std::vector<double>(static_cast<std::size_t>(x_t.rows()), 1.0)));
}

Tensor SaleEncoders::sale_loss(Tape& t, const Tensor& x_t, const Tensor& actions_onehot,
                               const Tensor& x_next, const Tensor& mask01) const {
  Tensor z_t = encode_state(t, x_t);
  Tensor z_joint = encode_state_action(t, z_t, actions_onehot);
  Tensor z_next = encode_state(t, x_next);
  return prediction_loss(t, z_joint, z_next, mask01);
}

void assert_decoupled(const ParamGroup& group) {
  auto bad = group.params_with_nonzero_grad();
  if (bad.empty()) return;
  std::string names;
  for (const auto& n : bad) names += (names.empty() ? "" : ", ") + n;
  throw DecouplingError("decoupling violated: group \"" + group.name() +
                        "\" received gradients on: " + names);
}

Tensor fold_resize(Tape& t, const Tensor& x, int out_cols) {
  if (out_cols < 1) throw ShapeError("fold_resize: out_cols must be positive");
  if (x.cols() == out_cols) return x;
  Tensor acc = t.zeros(x.rows(), out_cols);
  for (int start = 0; start < x.cols(); start += out_cols) {
    const int width = std::min(out_cols, x.cols() - start);
    Tensor piece = t.slice_cols(x, start, width);
    if (width < out_cols) piece = t.concat_cols({piece, t.zeros(x.rows(), out_cols - width)});
    acc = t.add(acc, piece);
  }
  return acc;
}

Tensor passthrough_feature(Tape& t, const Tensor& x, int out_cols) {
  return t.avg_l1_norm(fold_resize(t, x, out_cols));
}

Tensor layer_norm_feature(Tape& t, const Tensor& x) {
  const int n = x.cols();
  Tensor mean = t.scale(t.row_sum(x), 1.0 / n);  // [B x 1]
  Tensor mean_b = t.matmul(mean, t.constant(1, n, std::vector<double>(static_cast<std::size_t>(n), 1.0)));
  Tensor centered = t.sub(x, mean_b);
  Tensor var = t.scale(t.row_sum(t.square(centered)), 1.0 / n);
  Tensor std_col = t.exp(t.scale(t.log(t.add_const(var, 1e-8)), 0.5));
  return t.div_colvec(centered, std_col);
}

Tensor apply_norm(Tape& t, const Tensor& x, SaleNorm norm) {
  switch (norm) {
    case SaleNorm::avg_l1: return t.avg_l1_norm(x);
    case SaleNorm::none: return x;
    case SaleNorm::layer_norm: return layer_norm_feature(t, x);
  }
  throw std::invalid_argument("apply_norm: unknown normalizer");
}

SaleNorm parse_sale_norm(const std::string& name) {
  if (name == "avg_l1") return SaleNorm::avg_l1;
  if (name == "none") return SaleNorm::none;
  if (name == "layer_norm") return SaleNorm::layer_norm;
  throw std::invalid_argument("unknown normalizer \"" + name +
                              "\" (valid: avg_l1, none, layer_norm)");
}

std::string sale_norm_name(SaleNorm norm) {
  switch (norm) {
    case SaleNorm::avg_l1: return "avg_l1";
    case SaleNorm::none: return "none";
    case SaleNorm::layer_norm: return "layer_norm";
  }
  throw std::invalid_argument("sale_norm_name: unknown normalizer");
}

}  // namespace mmsa
