#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "grad_check.hpp"
#include "mmsa/gaussian.hpp"
#include "mmsa/params.hpp"
#include "mmsa/rng.hpp"
#include "mmsa/tensor.hpp"

using namespace mmsa;
using mmsa::testing::grad_check;
using mmsa::testing::randomize;

namespace {

// Reduce an op output to a scalar with a fixed weighting so every output
// element contributes a distinct gradient. The weights are drawn once per
// audit instance and frozen, so rebuilding the graph for finite differences
// evaluates the same function.
Tensor scalarize(Tape& t, const Tensor& y, const std::vector<double>& w) {
  return t.sum_all(t.mul(y, t.constant(y.rows(), y.cols(), w)));
}

void fill_away_from(Parameter& p, Rng& rng, double lo, double hi, bool random_sign) {
  for (auto& v : p.value) {
    const double mag = rng.uniform(lo, hi);
    v = (random_sign && rng.uniform() < 0.5) ? -mag : mag;
  }
}

}  // namespace

TEST_CASE("forward values: basic op semantics") {
  Tape t;
  Tensor a = t.constant(2, 2, {1.0, 2.0, 3.0, 4.0});
  Tensor b = t.constant(2, 2, {5.0, 6.0, 7.0, 8.0});
  CHECK(t.add(a, b).values() == std::vector<double>{6, 8, 10, 12});
  CHECK(t.sub(a, b).values() == std::vector<double>{-4, -4, -4, -4});
  CHECK(t.mul(a, b).values() == std::vector<double>{5, 12, 21, 32});
  CHECK(t.matmul(a, b).values() == std::vector<double>{19, 22, 43, 50});
  // a * b^T: row(a) dot row(b)
  CHECK(t.matmul_nt(a, b).values() == std::vector<double>{17, 23, 39, 53});
  CHECK(t.sum_all(a).value() == 10.0);
  CHECK(t.mean_all(a).value() == 2.5);
  CHECK(t.row_sum(a).values() == std::vector<double>{3, 7});
  CHECK(t.slice_cols(a, 1, 1).values() == std::vector<double>{2, 4});
  Tensor c = t.concat_cols({a, b});
  CHECK(c.values() == std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8});
  CHECK(t.clamp(a, 1.5, 3.5).values() == std::vector<double>{1.5, 2, 3, 3.5});
  CHECK(t.clamp_min(a, 2.5).values() == std::vector<double>{2.5, 2.5, 3, 4});
}

TEST_CASE("gradient audit: every differentiable op matches central differences") {
  Rng rng(20240817);
  const double tol = 1e-4;
  const int reps = 25;

  auto audit = [&](const char* name, auto&& build_and_check) {
    for (int r = 0; r < reps; ++r) {
      INFO("op: " << name << " rep " << r);
      build_and_check();
    }
  };

  audit("matmul", [&] {
    ParamGroup g("in");
    Parameter &a = g.add("a", 2, 3, 4), &b = g.add("b", 2, 4, 2);
    randomize(a, rng);
    randomize(b, rng);
    const auto w = rng.uniform_vector(3 * 2, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) { return scalarize(t, t.matmul(t.leaf(a), t.leaf(b)), w); });
    CHECK(res.max_rel_err <= tol);
  });

  audit("matmul_nt", [&] {
    ParamGroup g("in");
    Parameter &a = g.add("a", 2, 3, 4), &b = g.add("b", 2, 5, 4);
    randomize(a, rng);
    randomize(b, rng);
    const auto w = rng.uniform_vector(3 * 5, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) { return scalarize(t, t.matmul_nt(t.leaf(a), t.leaf(b)), w); });
    CHECK(res.max_rel_err <= tol);
  });

  audit("rowwise_matmul", [&] {
    ParamGroup g("in");
    Parameter &q = g.add("q", 2, 3, 4), &w = g.add("w", 2, 3, 8);
    randomize(q, rng);
    randomize(w, rng);
    const auto wt = rng.uniform_vector(3 * 2, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) { return scalarize(t, t.rowwise_matmul(t.leaf(q), t.leaf(w), 2), wt); });
    CHECK(res.max_rel_err <= tol);
  });

  audit("add/sub/mul", [&] {
    ParamGroup g("in");
    Parameter &a = g.add("a", 2, 2, 3), &b = g.add("b", 2, 2, 3);
    randomize(a, rng);
    randomize(b, rng);
    const auto w = rng.uniform_vector(2 * 3, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) {
      Tensor s = t.add(t.leaf(a), t.leaf(b));
      Tensor d = t.sub(s, t.mul(t.leaf(a), t.leaf(b)));
      return scalarize(t, d, w);
    });
    CHECK(res.max_rel_err <= tol);
  });

  audit("div", [&] {
    ParamGroup g("in");
    Parameter &a = g.add("a", 2, 2, 3), &b = g.add("b", 2, 2, 3);
    randomize(a, rng);
    fill_away_from(b, rng, 0.5, 1.5, true);
    const auto w = rng.uniform_vector(2 * 3, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) { return scalarize(t, t.div(t.leaf(a), t.leaf(b)), w); });
    CHECK(res.max_rel_err <= tol);
  });

  audit("add_rowvec/div_colvec", [&] {
    ParamGroup g("in");
    Parameter &x = g.add("x", 2, 3, 4), &b = g.add("b", 1, 1, 4), &d = g.add("d", 2, 3, 1);
    randomize(x, rng);
    randomize(b, rng);
    fill_away_from(d, rng, 0.5, 1.5, true);
    const auto w = rng.uniform_vector(3 * 4, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) {
      return scalarize(t, t.div_colvec(t.add_rowvec(t.leaf(x), t.leaf(b)), t.leaf(d)), w);
    });
    CHECK(res.max_rel_err <= tol);
  });

  audit("scale/add_const", [&] {
    ParamGroup g("in");
    Parameter& x = g.add("x", 2, 2, 3);
    randomize(x, rng);
    const auto w = rng.uniform_vector(2 * 3, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) { return scalarize(t, t.add_const(t.scale(t.leaf(x), -1.7), 0.3), w); });
    CHECK(res.max_rel_err <= tol);
  });

  audit("tanh/sigmoid/elu", [&] {
    ParamGroup g("in");
    Parameter& x = g.add("x", 2, 2, 4);
    randomize(x, rng);
    const auto w = rng.uniform_vector(2 * 4, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) {
      return scalarize(t, t.tanh(t.sigmoid(t.elu(t.leaf(x)))), w);
    });
    CHECK(res.max_rel_err <= tol);
  });

  audit("exp", [&] {
    ParamGroup g("in");
    Parameter& x = g.add("x", 2, 2, 4);
    randomize(x, rng);
    const auto w = rng.uniform_vector(2 * 4, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) { return scalarize(t, t.exp(t.leaf(x)), w); });
    CHECK(res.max_rel_err <= tol);
  });

  audit("log", [&] {
    ParamGroup g("in");
    Parameter& x = g.add("x", 2, 2, 4);
    fill_away_from(x, rng, 0.2, 2.0, false);
    const auto w = rng.uniform_vector(2 * 4, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) { return scalarize(t, t.log(t.leaf(x)), w); });
    CHECK(res.max_rel_err <= tol);
  });

  audit("abs", [&] {
    ParamGroup g("in");
    Parameter& x = g.add("x", 2, 2, 4);
    fill_away_from(x, rng, 0.1, 2.0, true);
    const auto w = rng.uniform_vector(2 * 4, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) { return scalarize(t, t.abs(t.leaf(x)), w); });
    CHECK(res.max_rel_err <= tol);
  });

  audit("square", [&] {
    ParamGroup g("in");
    Parameter& x = g.add("x", 2, 2, 4);
    randomize(x, rng);
    const auto w = rng.uniform_vector(2 * 4, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) { return scalarize(t, t.square(t.leaf(x)), w); });
    CHECK(res.max_rel_err <= tol);
  });

  audit("clamp/clamp_min away from kinks", [&] {
    ParamGroup g("in");
    Parameter& x = g.add("x", 2, 2, 4);
    // keep |x| in (0.2, 0.8) or (1.2, 2.0), clear of bounds at +-1
    for (auto& v : x.value) {
      const double mag = rng.uniform() < 0.5 ? rng.uniform(0.2, 0.8) : rng.uniform(1.2, 2.0);
      v = rng.uniform() < 0.5 ? -mag : mag;
    }
    const auto w = rng.uniform_vector(2 * 4, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) {
      return scalarize(t, t.add(t.clamp(t.leaf(x), -1.0, 1.0), t.clamp_min(t.leaf(x), -1.0)), w);
    });
    CHECK(res.max_rel_err <= tol);
  });

  audit("concat/slice", [&] {
    ParamGroup g("in");
    Parameter &a = g.add("a", 2, 2, 3), &b = g.add("b", 2, 2, 2);
    randomize(a, rng);
    randomize(b, rng);
    const auto w = rng.uniform_vector(2 * 6, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) {
      Tensor c = t.concat_cols({t.leaf(a), t.leaf(b), t.leaf(a)});
      return scalarize(t, t.slice_cols(c, 1, 6), w);
    });
    CHECK(res.max_rel_err <= tol);
  });

  audit("reductions", [&] {
    ParamGroup g("in");
    Parameter& x = g.add("x", 2, 3, 4);
    randomize(x, rng);
    const auto w = rng.uniform_vector(3, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) {
      return t.add(t.mean_all(t.leaf(x)), t.sum_all(t.mul(t.row_sum(t.leaf(x)), t.constant(3, 1, w))));
    });
    CHECK(res.max_rel_err <= tol);
  });

  audit("avg_l1_norm", [&] {
    ParamGroup g("in");
    Parameter& x = g.add("x", 2, 3, 5);
    fill_away_from(x, rng, 0.1, 2.0, true);
    const auto w = rng.uniform_vector(3 * 5, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) { return scalarize(t, t.avg_l1_norm(t.leaf(x)), w); });
    CHECK(res.max_rel_err <= tol);
  });

  audit("kl_diag_gaussian + reparam", [&] {
    ParamGroup g("in");
    Parameter &mq = g.add("mq", 2, 2, 3), &lq = g.add("lq", 2, 2, 3);
    Parameter &mp = g.add("mp", 2, 2, 3), &lp = g.add("lp", 2, 2, 3);
    randomize(mq, rng);
    randomize(mp, rng);
    fill_away_from(lq, rng, 0.05, 1.0, true);
    fill_away_from(lp, rng, 0.05, 1.0, true);
    std::vector<double> noise = rng.normal_vector(6);
    const auto w = rng.uniform_vector(2 * 3, -1.0, 1.0);
    auto res = grad_check(g, [&](Tape& t) {
      GaussianDiag q{t.leaf(mq), t.leaf(lq)}, p{t.leaf(mp), t.leaf(lp)};
      Tensor kl = t.sum_all(kl_diag_gaussian(t, q, p));
      Tensor sample = reparam_sample(t, q, t.constant(2, 3, noise));
      return t.add(kl, scalarize(t, sample, w));
    });
    CHECK(res.max_rel_err <= tol);
  });

  audit("masked composites", [&] {
    ParamGroup g("in");
    Parameter &a = g.add("a", 2, 4, 3), &b = g.add("b", 2, 4, 3), &c = g.add("c", 2, 4, 1);
    randomize(a, rng);
    randomize(b, rng);
    randomize(c, rng);
    auto res = grad_check(g, [&](Tape& t) {
      Tensor mask = t.constant(4, 1, {1, 0, 1, 1});
      return t.add(masked_mse(t, t.leaf(a), t.leaf(b), mask), masked_mean(t, t.leaf(c), mask));
    });
    CHECK(res.max_rel_err <= tol);
  });
}

TEST_CASE("stop_gradient blocks the backward path and keeps values") {
  Rng rng(7);
  ParamGroup g("in");
  Parameter& x = g.add("x", 2, 2, 3);
  randomize(x, rng);

  Tape t;
  Tensor leaf = t.leaf(x);
  Tensor stopped = t.stop_gradient(leaf);
  CHECK(stopped.values() == leaf.values());
  Tensor loss = t.sum_all(t.square(stopped));
  t.backward(loss);
  CHECK(g.grads_are_zero());

  // and through a mixed graph only the unstopped branch contributes
  g.zero_grad();
  Tape t2;
  Tensor l2 = t2.leaf(x);
  Tensor mixed = t2.add(t2.scale(l2, 2.0), t2.stop_gradient(t2.scale(l2, 100.0)));
  t2.backward(t2.sum_all(mixed));
  for (double gv : x.grad) CHECK(gv == doctest::Approx(2.0));
}

TEST_CASE("tape usage errors") {
  ParamGroup g("in");
  Parameter& x = g.add("x", 1, 1, 2);
  x.value = {1.0, 2.0};

  Tape t;
  Tensor leaf = t.leaf(x);
  Tensor loss = t.sum_all(leaf);
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), TapeError);

  Tape t2;
  CHECK_THROWS_AS(t2.backward(t2.leaf(x)), ShapeError);  // non-scalar loss

  Tape value_only(false);
  Tensor c = value_only.sum_all(value_only.leaf(x));
  CHECK_THROWS_AS(value_only.backward(c), TapeError);

  Tape t3;
  CHECK_THROWS_AS(t3.add(t3.zeros(2, 2), t3.zeros(2, 3)), ShapeError);
}

TEST_CASE("leaf memoization: one node per parameter per tape") {
  ParamGroup g("in");
  Parameter& x = g.add("x", 1, 1, 2);
  x.value = {3.0, 4.0};
  Tape t;
  Tensor a = t.leaf(x), b = t.leaf(x);
  CHECK(a.index() == b.index());
  // gradient flows once per use site but accumulates on the single leaf
  t.backward(t.sum_all(t.add(a, b)));
  CHECK(x.grad == std::vector<double>{2.0, 2.0});
}

TEST_CASE("gradients accumulate across tapes until zero_grad") {
  ParamGroup g("in");
  Parameter& x = g.add("x", 1, 1, 2);
  x.value = {1.0, 1.0};
  for (int k = 0; k < 3; ++k) {
    Tape t;
    t.backward(t.sum_all(t.leaf(x)));
  }
  CHECK(x.grad == std::vector<double>{3.0, 3.0});
  g.zero_grad();
  CHECK(g.grads_are_zero());
}

TEST_CASE("batched rows reproduce per-row evaluation exactly") {
  Rng rng(99);
  ParamGroup g("net");
  Linear l = make_linear(g, "l", 5, 4, rng);
  std::vector<double> batch = rng.uniform_vector(12, -2.0, 2.0);

  Tape t;
  Tensor x = t.constant(3, 4, batch);
  Tensor y = t.avg_l1_norm(t.elu(apply(t, l, x)));
  for (int r = 0; r < 3; ++r) {
    Tape tr;
    Tensor xr = tr.constant(1, 4, {batch[r * 4 + 0], batch[r * 4 + 1], batch[r * 4 + 2], batch[r * 4 + 3]});
    Tensor yr = tr.avg_l1_norm(tr.elu(apply(tr, l, xr)));
    for (int c = 0; c < 5; ++c) CHECK(y.value_at(r, c) == yr.value_at(0, c));
  }
}

TEST_CASE("avg_l1_norm semantics") {
  Tape t;
  // mean absolute value of the output is exactly 1 for a nonzero row
  Tensor x = t.constant(1, 4, {1.0, -2.0, 3.0, -4.0});
  Tensor y = t.avg_l1_norm(x);
  double mean_abs = 0.0;
  for (double v : y.values()) mean_abs += std::fabs(v);
  mean_abs /= 4.0;
  CHECK(mean_abs == doctest::Approx(1.0).epsilon(1e-12));
  // hand value: mean|x| = 2.5
  CHECK(y.values()[0] == doctest::Approx(0.4));
  // zero vector is guarded by eps, yields zeros (not NaN)
  Tensor z = t.avg_l1_norm(t.zeros(1, 4));
  for (double v : z.values()) CHECK(v == 0.0);
  // positive scale invariance of the value
  Tensor y2 = t.avg_l1_norm(t.scale(x, 37.5));
  for (int c = 0; c < 4; ++c) CHECK(y2.value_at(0, c) == doctest::Approx(y.value_at(0, c)).epsilon(1e-12));
}

TEST_CASE("reachability audit sees through the graph but not stop_gradient") {
  Rng rng(3);
  ParamGroup enc("encoders"), agent("agent");
  Linear le = make_linear(enc, "e", 3, 3, rng);
  Linear la = make_linear(agent, "a", 1, 3, rng);

  Tape t;
  Tensor x = t.constant(1, 3, {1, 2, 3});
  Tensor z = t.elu(apply(t, le, x));
  Tensor q_direct = t.sum_all(apply(t, la, z));
  CHECK(t.reaches(q_direct, enc));
  CHECK(t.reaches(q_direct, agent));

  Tensor q_stopped = t.sum_all(apply(t, la, t.stop_gradient(z)));
  CHECK_FALSE(t.reaches(q_stopped, enc));
  CHECK(t.reaches(q_stopped, agent));
}

TEST_CASE("rmsprop: accumulator and update follow the pinned formula") {
  ParamGroup g("p");
  Parameter& x = g.add("x", 1, 1, 1);
  x.value = {1.0};
  RmsPropConfig cfg;
  cfg.lr = 0.01;
  cfg.alpha = 0.99;
  cfg.eps = 1e-5;
  cfg.grad_clip = 0.0;

  // independent reference: acc <- 0.99 acc + 0.01 g^2; p <- p - lr g / sqrt(acc + 1e-5)
  double ref_p = 1.0, ref_acc = 0.0;
  const double gs[3] = {0.5, -0.25, 0.125};
  for (double gv : gs) {
    x.grad = {gv};
    rmsprop_step(g, cfg);
    ref_acc = 0.99 * ref_acc + 0.01 * gv * gv;
    ref_p = ref_p - cfg.lr * gv / std::sqrt(ref_acc + 1e-5);
    CHECK(x.value[0] == doctest::Approx(ref_p).epsilon(1e-15));
    g.zero_grad();
  }
  // frozen value for the first step
  x.value = {1.0};
  x.rms = {0.0};
  x.grad = {0.5};
  rmsprop_step(g, cfg);
  CHECK(x.value[0] == doctest::Approx(0.900199402).epsilon(1e-8));
}

TEST_CASE("gradient clipping by global group norm") {
  ParamGroup g("p");
  Parameter& x = g.add("x", 1, 1, 2);
  x.value = {0.0, 0.0};
  x.grad = {30.0, 40.0};  // norm 50
  RmsPropConfig cfg;
  cfg.lr = 1.0;
  cfg.alpha = 0.0;  // acc = g^2 directly
  cfg.eps = 0.0;
  cfg.grad_clip = 10.0;
  const double norm = rmsprop_step(g, cfg);
  CHECK(norm == doctest::Approx(50.0));
  // after clip, g = (6, 8); update = -lr * g/|g_i| elementwise = -(1, 1) signwise
  CHECK(x.value[0] == doctest::Approx(-1.0));
  CHECK(x.value[1] == doctest::Approx(-1.0));
}

TEST_CASE("checkpoint round-trips bit-exactly and validates structure") {
  Rng rng(42);
  ParamGroup a("agent"), b("mixer");
  Parameter& w = a.add("w", 2, 3, 4);
  Parameter& v = a.add("v", 1, 1, 5);
  Parameter& u = b.add("u", 2, 2, 2);
  randomize(w, rng, -10, 10);
  randomize(v, rng, -10, 10);
  randomize(u, rng, -10, 10);
  // exercise non-finite-safe payloads too: denormals and exact values
  w.value[0] = 1e-310;
  w.value[1] = -0.0;

  const std::string path = (std::filesystem::temp_directory_path() / "mmsa_ckpt_test.bin").string();
  const ParamGroup* const save_list[] = {&a, &b};
  save_checkpoint(path, save_list);

  ParamGroup a2("agent"), b2("mixer");
  Parameter& w2 = a2.add("w", 2, 3, 4);
  Parameter& v2 = a2.add("v", 1, 1, 5);
  Parameter& u2 = b2.add("u", 2, 2, 2);
  ParamGroup* const load_list[] = {&a2, &b2};
  load_checkpoint(path, load_list);
  CHECK(std::memcmp(w.value.data(), w2.value.data(), sizeof(double) * w.value.size()) == 0);
  CHECK(std::memcmp(v.value.data(), v2.value.data(), sizeof(double) * v.value.size()) == 0);
  CHECK(std::memcmp(u.value.data(), u2.value.data(), sizeof(double) * u.value.size()) == 0);

  // structure mismatch is an error, not a silent misload
  ParamGroup bad("agent");
  bad.add("w", 2, 3, 5);
  ParamGroup b3("mixer");
  b3.add("u", 2, 2, 2);
  ParamGroup* const bad_list[] = {&bad, &b3};
  CHECK_THROWS_AS(load_checkpoint(path, bad_list), CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("gru cell: zero params and inputs give a zero hidden state") {
  Rng rng(1);
  ParamGroup g("agent");
  GruCell cell = make_gru(g, "gru", 4, 3, rng);
  for (auto& p : g.params())
    for (auto& v : p->value) v = 0.0;
  Tape t;
  Tensor h = gru_step(t, cell, t.zeros(1, 3), t.zeros(1, 4));
  for (double v : h.values()) CHECK(v == 0.0);
}

TEST_CASE("gru cell: single-unit cell matches a closed-form scalar recurrence") {
  Rng rng(2);
  ParamGroup g("agent");
  GruCell cell = make_gru(g, "gru", 1, 1, rng);
  // hand-set every weight
  auto set = [&](const char* name, double v) { g.find(name)->value = {v}; };
  set("gru.wr.W", 0.3);
  set("gru.wr.b", 0.1);
  set("gru.wz.W", -0.2);
  set("gru.wz.b", 0.05);
  set("gru.wn.W", 0.7);
  set("gru.wn.b", -0.1);
  set("gru.ur.W", 0.4);
  set("gru.uz.W", -0.6);
  set("gru.un.W", 0.9);

  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double h_ref = 0.0;
  const double xs[4] = {1.0, -0.5, 0.25, 2.0};
  Tape t;
  Tensor h = t.zeros(1, 1);
  for (double x : xs) {
    h = gru_step(t, cell, t.constant(1, 1, {x}), h);
    const double r = sigmoid(0.3 * x + 0.4 * h_ref + 0.1);
    const double zg = sigmoid(-0.2 * x - 0.6 * h_ref + 0.05);
    const double n = std::tanh(0.7 * x + r * (0.9 * h_ref) - 0.1);
    h_ref = (1.0 - zg) * n + zg * h_ref;
    CHECK(h.value() == doctest::Approx(h_ref).epsilon(1e-12));
  }
}

TEST_CASE("gru cell: gradients match finite differences (params and hidden chain)") {
  Rng rng(77);
  ParamGroup g("agent");
  GruCell cell = make_gru(g, "gru", 3, 2, rng);
  Parameter& h0 = g.add("h0", 2, 2, 3);
  randomize(h0, rng, -0.5, 0.5);
  std::vector<double> x1 = rng.uniform_vector(4, -1, 1), x2 = rng.uniform_vector(4, -1, 1);
  const auto w = rng.uniform_vector(6, -1.0, 1.0);
  auto res = grad_check(g, [&](Tape& t) {
    // two chained steps so the recurrent path is exercised
    Tensor h = gru_step(t, cell, t.constant(2, 2, x1), t.leaf(h0));
    h = gru_step(t, cell, t.constant(2, 2, x2), h);
    return scalarize(t, h, w);
  });
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("target-style value copy is bitwise") {
  Rng rng(5);
  ParamGroup a("agent"), tgt("agent_target");
  Parameter& w = a.add("w", 2, 4, 4);
  tgt.add("w", 2, 4, 4);
  randomize(w, rng);
  copy_values(a, tgt);
  CHECK(std::memcmp(w.value.data(), tgt.params()[0]->value.data(), sizeof(double) * 16) == 0);
}
