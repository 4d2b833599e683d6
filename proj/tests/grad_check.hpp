#pragma once

// Central-difference gradient oracle used to audit every differentiable op:
// builds the graph through a user callback, compares analytic grads from one
// backward sweep against (f(x+h) - f(x-h)) / 2h per input element.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mmsa/params.hpp"
#include "mmsa/rng.hpp"
#include "mmsa/tensor.hpp"

namespace mmsa::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int n_checked = 0;
  std::string worst;  // "param[i]" of the worst element
};

// rel err with an absolute floor so near-zero gradients compare sanely
inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({1e-6, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

// f builds a scalar loss from tape.leaf(...) of the group's parameters.
inline GradCheckResult grad_check(ParamGroup& group,
                                  const std::function<Tensor(Tape&)>& f,
                                  double h = 1e-5) {
  GradCheckResult res;
  group.zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  for (const auto& p : group.params()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      double up, down;
      {
        Tape tape;
        up = f(tape).value();
      }
      p->value[i] = saved - h;
      {
        Tape tape;
        down = f(tape).value();
      }
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = rel_err(p->grad[i], numeric);
      ++res.n_checked;
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

// Fills a parameter with values drawn from U(lo, hi).
inline void randomize(Parameter& p, Rng& rng, double lo = -1.5, double hi = 1.5) {
  for (auto& v : p.value) v = rng.uniform(lo, hi);
}

}  // namespace mmsa::testing
