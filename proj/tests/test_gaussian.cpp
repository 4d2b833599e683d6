#include <doctest.h>

#include <cmath>

#include "mmsa/gaussian.hpp"
#include "mmsa/params.hpp"
#include "mmsa/rng.hpp"
#include "mmsa/tensor.hpp"

using namespace mmsa;

TEST_CASE("diagonal KL closed-form: hand values") {
  Tape t;
  // KL(N(1,1) || N(0,1)) = 1/2
  GaussianDiag q{t.constant(1, 1, {1.0}), t.constant(1, 1, {0.0})};
  GaussianDiag p{t.constant(1, 1, {0.0}), t.constant(1, 1, {0.0})};
  CHECK(kl_diag_gaussian(t, q, p).value() == doctest::Approx(0.5).epsilon(1e-12));

  // KL(N(0, e^2) || N(0,1)) = log(1/e) + e^2/2 - 1/2 = e^2/2 - 3/2
  GaussianDiag q2{t.constant(1, 1, {0.0}), t.constant(1, 1, {1.0})};
  const double e2 = std::exp(2.0);
  CHECK(kl_diag_gaussian(t, q2, p).value() == doctest::Approx(e2 / 2.0 - 1.5).epsilon(1e-12));

  // dims add up, batch rows stay separate
  GaussianDiag q3{t.constant(2, 2, {1.0, 1.0, 0.0, 0.0}), t.constant(2, 2, {0.0, 0.0, 0.0, 0.0})};
  GaussianDiag p3{t.zeros(2, 2), t.zeros(2, 2)};
  Tensor kl3 = kl_diag_gaussian(t, q3, p3);
  CHECK(kl3.rows() == 2);
  CHECK(kl3.cols() == 1);
  CHECK(kl3.value_at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(kl3.value_at(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("KL is nonnegative and zero iff equal") {
  Rng rng(17);
  Tape t;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> mq = rng.uniform_vector(4, -3, 3), lq = rng.uniform_vector(4, -2, 1);
    std::vector<double> mp = rng.uniform_vector(4, -3, 3), lp = rng.uniform_vector(4, -2, 1);
    GaussianDiag q{t.constant(1, 4, mq), t.constant(1, 4, lq)};
    GaussianDiag p{t.constant(1, 4, mp), t.constant(1, 4, lp)};
    CHECK(kl_diag_gaussian(t, q, p).value() >= 0.0);
    GaussianDiag q_same{t.constant(1, 4, mq), t.constant(1, 4, lq)};
    CHECK(kl_diag_gaussian(t, q, q_same).value() == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("closed-form KL matches a Monte-Carlo estimate of E_q[log q - log p]") {
  Rng rng(23);
  Tape t;
  const double mq = 0.7, sq = 0.8, mp = -0.4, sp = 1.3;
  GaussianDiag q{t.constant(1, 1, {mq}), t.constant(1, 1, {std::log(sq)})};
  GaussianDiag p{t.constant(1, 1, {mp}), t.constant(1, 1, {std::log(sp)})};
  const double closed = kl_diag_gaussian(t, q, p).value();

  auto log_pdf = [](double x, double m, double s) {
    const double z = (x - m) / s;
    return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * M_PI);
  };
  const int n = 400000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = mq + sq * rng.normal();
    const double d = log_pdf(x, mq, sq) - log_pdf(x, mp, sp);
    acc += d;
    acc2 += d * d;
  }
  const double est = acc / n;
  const double sd = std::sqrt((acc2 / n - est * est) / n);
  CHECK(std::fabs(est - closed) < 4.0 * sd + 1e-9);
}

TEST_CASE("reparameterized samples have the declared mean and scale") {
  Rng rng(31);
  Tape t;
  const int n = 50000;
  GaussianDiag d{t.constant_scalar(2.0), t.constant_scalar(std::log(0.5))};
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    Tensor noise = t.constant(1, 1, {rng.normal()});
    const double x = reparam_sample(t, d, noise).value();
    sum += x;
    sumsq += x * x;
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sumsq / n - mean * mean);
  CHECK(std::fabs(mean - 2.0) < 4.0 * 0.5 / std::sqrt(double(n)));
  CHECK(std::fabs(sd - 0.5) < 0.01);
}

TEST_CASE("head construction clamps log-std into [-5, 2]") {
  Rng rng(3);
  ParamGroup g("net");
  Linear mean_head = make_linear(g, "mean", 3, 4, rng);
  Linear log_std_head = make_linear(g, "log_std", 3, 4, rng);
  // blow up the pre-clamp outputs
  for (auto& v : log_std_head.W->value) v *= 400.0;
  Tape t;
  Tensor x = t.constant(1, 4, {5.0, -5.0, 5.0, -5.0});
  GaussianDiag d = gaussian_head(t, x, mean_head, log_std_head);
  CHECK(d.dim() == 3);
  for (double v : d.log_std.values()) {
    CHECK(v >= kLogStdMin);
    CHECK(v <= kLogStdMax);
  }
}

TEST_CASE("stopped distribution carries values but no gradient") {
  Rng rng(9);
  ParamGroup g("net");
  Parameter& m = g.add("m", 2, 1, 3);
  Parameter& s = g.add("s", 2, 1, 3);
  m.value = {0.1, 0.2, 0.3};
  s.value = {-0.1, 0.0, 0.1};
  Tape t;
  GaussianDiag d{t.leaf(m), t.leaf(s)};
  GaussianDiag stopped = stop_gradient(t, d);
  GaussianDiag target{t.constant(1, 3, {1.0, 1.0, 1.0}), t.zeros(1, 3)};
  t.backward(t.sum_all(kl_diag_gaussian(t, stopped, target)));
  CHECK(g.grads_are_zero());
}
