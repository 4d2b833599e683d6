#pragma once

#include "mmsa/params.hpp"
#include "mmsa/tensor.hpp"

namespace mmsa {

// Diagonal Gaussian over each row of a [batch x dim] pair of tensors.
// log_std is clamped to [-5, 2] wherever a network head produces it.
struct GaussianDiag {
  Tensor mean;
  Tensor log_std;
  int dim() const { return mean.cols(); }
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Head producing a clamped diagonal Gaussian from features x.
inline GaussianDiag gaussian_head(Tape& t, const Tensor& x, const Linear& mean_l,
                                  const Linear& log_std_l) {
  GaussianDiag g;
  g.mean = apply(t, mean_l, x);
  g.log_std = t.clamp(apply(t, log_std_l, x), kLogStdMin, kLogStdMax);
  return g;
}

// mean + exp(log_std) * noise; noise is data (the reparameterization trick).
inline Tensor reparam_sample(Tape& t, const GaussianDiag& g, const Tensor& noise) {
  return t.add(g.mean, t.mul(t.exp(g.log_std), noise));
}

// KL(q || p) for diagonal Gaussians, summed over dims: per row,
//   sum_i [ log(sp/sq) + (sq^2 + (mq-mp)^2) / (2 sp^2) - 1/2 ].
// Returns a [rows x 1] column.
inline Tensor kl_diag_gaussian(Tape& t, const GaussianDiag& q, const GaussianDiag& p) {
  Tensor dlog = t.sub(p.log_std, q.log_std);
  Tensor var_q = t.exp(t.scale(q.log_std, 2.0));
  Tensor var_p = t.exp(t.scale(p.log_std, 2.0));
  Tensor num = t.add(var_q, t.square(t.sub(q.mean, p.mean)));
  Tensor per_dim = t.add(t.add_const(dlog, -0.5), t.div(num, t.scale(var_p, 2.0)));
  return t.row_sum(per_dim);
}

inline GaussianDiag stop_gradient(Tape& t, const GaussianDiag& g) {
  return {t.stop_gradient(g.mean), t.stop_gradient(g.log_std)};
}

// N(0, I) with the same shape as g (constant data).
inline GaussianDiag standard_normal_like(Tape& t, const GaussianDiag& g) {
  return {t.zeros(g.mean.rows(), g.mean.cols()), t.zeros(g.mean.rows(), g.mean.cols())};
}

}  // namespace mmsa
