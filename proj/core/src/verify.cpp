#include "mmsa/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmsa/gaussian.hpp"
#include "mmsa/mixer.hpp"
#include "mmsa/params.hpp"
#include "mmsa/sale.hpp"
#include "mmsa/tensor.hpp"
#include "mmsa/worldmodel.hpp"

namespace mmsa {
namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

// ---------------- trajectory / evidence helpers ----------------

bool consistent(const TabularDecPomdp& m, int s, const std::vector<int>& obs_tuple) {
  for (int i = 0; i < m.n_agents; ++i)
    if (m.obs_of(s, i) != obs_tuple[i]) return false;
  return true;
}

std::vector<int> support_states(const TabularDecPomdp& m, const std::vector<int>& obs_tuple) {
  std::vector<int> out;
  for (int s = 0; s < m.n_states; ++s)
    if (consistent(m, s, obs_tuple)) out.push_back(s);
  return out;
}

void validate_trajectory(const TabularDecPomdp& m, const TabularTrajectory& tr) {
  const int T = tr.horizon();
  if (T < 1) throw std::invalid_argument("trajectory: horizon must be >= 1");
  if (static_cast<int>(tr.actions.size()) != T + 1)
    throw std::invalid_argument("trajectory: need exactly horizon+1 action tuples");
  for (const auto& a : tr.actions) {
    if (static_cast<int>(a.size()) != m.n_agents)
      throw std::invalid_argument("trajectory: action tuple width mismatch");
    for (int v : a)
      if (v < 0 || v >= m.n_actions) throw std::invalid_argument("trajectory: action out of range");
  }
  for (const auto& o : tr.obs) {
    if (static_cast<int>(o.size()) != m.n_agents)
      throw std::invalid_argument("trajectory: observation tuple width mismatch");
    for (int v : o)
      if (v < 0 || v >= m.n_obs) throw std::invalid_argument("trajectory: observation out of range");
  }
}

// Sum over t=1..T, agents of log pi_i(a_t[i] | o_t[i]); a_0 contributes nothing.
double log_policy_term(const TabularDecPomdp& m, const TabularTrajectory& tr) {
  double acc = 0.0;
  for (int t = 1; t <= tr.horizon(); ++t)
    for (int i = 0; i < m.n_agents; ++i)
      acc += std::log(m.pol(i, tr.obs[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(i)],
                            tr.actions[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)]));
  return acc;
}

// p(s_1 | a_0) = sum_s0 mu(s0) T(s0, a_0, s_1): the chain-start kernel.
std::vector<double> start_kernel(const TabularDecPomdp& m, int joint0) {
  std::vector<double> k(static_cast<std::size_t>(m.n_states), 0.0);
  for (int s0 = 0; s0 < m.n_states; ++s0)
    for (int s = 0; s < m.n_states; ++s)
      k[static_cast<std::size_t>(s)] +=
          m.initial_dist[static_cast<std::size_t>(s0)] * m.trans(s0, joint0, s);
  return k;
}

int draw_categorical(const std::vector<double>& p, int offset, int n, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  int last_positive = -1;
  for (int i = 0; i < n; ++i) {
    const double pi = p[static_cast<std::size_t>(offset + i)];
    if (pi <= 0.0) continue;
    last_positive = i;
    c += pi;
    if (u <= c) return i;
  }
  if (last_positive < 0) throw std::invalid_argument("draw_categorical: all-zero distribution");
  return last_positive;
}

// ---------------- finite-difference machinery ----------------

struct FdInstance {
  std::unique_ptr<ParamGroup> group;
  std::function<Tensor(Tape&)> f;  // scalar builder over the group's params
};

struct FdResult {
  double max_rel = 0.0;
  long n = 0;
};

// Central differences per parameter element against one analytic backward.
FdResult fd_check(ParamGroup& g, const std::function<Tensor(Tape&)>& f, double h) {
  FdResult res;
  g.zero_grad();
  {
    Tape t;
    t.backward(f(t));
  }
  for (const auto& p : g.params()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      double up;
      {
        Tape t(false);
        up = f(t).value();
      }
      p->value[i] = saved - h;
      double dn;
      {
        Tape t(false);
        dn = f(t).value();
      }
      p->value[i] = saved;
      const double num = (up - dn) / (2.0 * h);
      const double denom = std::max({1e-6, std::fabs(p->grad[i]), std::fabs(num)});
      res.max_rel = std::max(res.max_rel, std::fabs(p->grad[i] - num) / denom);
      ++res.n;
    }
  }
  return res;
}

using ValueDraw = std::function<double(Rng&)>;

ValueDraw draw_uniform(double lo, double hi) {
  return [lo, hi](Rng& r) { return r.uniform(lo, hi); };
}

// Random sign, magnitude in [lo, hi]: keeps inputs away from a kink at 0.
ValueDraw draw_signed_mag(double lo, double hi) {
  return [lo, hi](Rng& r) {
    const double mag = r.uniform(lo, hi);
    return r.uniform() < 0.5 ? -mag : mag;
  };
}

// Uniform on [lo, hi] excluding +-band neighborhoods of the given points.
ValueDraw draw_avoiding(double lo, double hi, std::vector<double> pts, double band) {
  return [lo, hi, pts, band](Rng& r) {
    for (;;) {
      const double v = r.uniform(lo, hi);
      bool ok = true;
      for (double p : pts)
        if (std::fabs(v - p) < band) ok = false;
      if (ok) return v;
    }
  };
}

Parameter& add_random(ParamGroup& g, const std::string& name, int rank, int rows, int cols,
                      Rng& rng, const ValueDraw& draw) {
  Parameter& p = g.add(name, rank, rows, cols);
  for (auto& v : p.value) v = draw(rng);
  return p;
}

// y has a known output shape; mixing with fixed random weights makes every
// output element reach the scalar with a distinct coefficient.
std::function<Tensor(Tape&, const Tensor&)> make_scalarizer(Rng& rng, int rows, int cols) {
  std::vector<double> w = rng.uniform_vector(rows * cols, -1.0, 1.0);
  return [rows, cols, w](Tape& t, const Tensor& y) {
    return t.sum_all(t.mul(y, t.constant(rows, cols, w)));
  };
}

using UnaryOp = std::function<Tensor(Tape&, const Tensor&)>;
using BinaryOp = std::function<Tensor(Tape&, const Tensor&, const Tensor&)>;

FdInstance make_unary_instance(Rng& rng, const UnaryOp& op, const ValueDraw& draw) {
  const int r = 2 + rng.uniform_int(2), c = 2 + rng.uniform_int(3);
  FdInstance in;
  in.group = std::make_unique<ParamGroup>("fd");
  Parameter& x = add_random(*in.group, "x", 2, r, c, rng, draw);
  auto sc = make_scalarizer(rng, r, c);
  in.f = [&x, op, sc](Tape& t) { return sc(t, op(t, t.leaf(x))); };
  return in;
}

FdInstance make_binary_instance(Rng& rng, const BinaryOp& op, const ValueDraw& da,
                                const ValueDraw& db) {
  const int r = 2 + rng.uniform_int(2), c = 2 + rng.uniform_int(3);
  FdInstance in;
  in.group = std::make_unique<ParamGroup>("fd");
  Parameter& a = add_random(*in.group, "a", 2, r, c, rng, da);
  Parameter& b = add_random(*in.group, "b", 2, r, c, rng, db);
  auto sc = make_scalarizer(rng, r, c);
  in.f = [&a, &b, op, sc](Tape& t) { return sc(t, op(t, t.leaf(a), t.leaf(b))); };
  return in;
}

struct OpEntry {
  const char* name;
  std::function<FdInstance(Rng&)> build;
};

std::vector<OpEntry> build_op_table() {
  const ValueDraw plain = draw_uniform(-1.5, 1.5);
  const ValueDraw away0 = draw_signed_mag(0.4, 1.6);
  std::vector<OpEntry> ops;

  auto unary = [&](const char* name, UnaryOp op, ValueDraw draw) {
    ops.push_back({name, [op, draw](Rng& rng) { return make_unary_instance(rng, op, draw); }});
  };
  auto binary = [&](const char* name, BinaryOp op, ValueDraw da, ValueDraw db) {
    ops.push_back(
        {name, [op, da, db](Rng& rng) { return make_binary_instance(rng, op, da, db); }});
  };

  ops.push_back({"concat_cols", [plain](Rng& rng) {
    const int r = 2 + rng.uniform_int(2);
    const int c1 = 1 + rng.uniform_int(3), c2 = 1 + rng.uniform_int(3), c3 = 1 + rng.uniform_int(3);
    FdInstance in;
    in.group = std::make_unique<ParamGroup>("fd");
    Parameter& a = add_random(*in.group, "a", 2, r, c1, rng, plain);
    Parameter& b = add_random(*in.group, "b", 2, r, c2, rng, plain);
    Parameter& c = add_random(*in.group, "c", 2, r, c3, rng, plain);
    auto sc = make_scalarizer(rng, r, c1 + c2 + c3);
    in.f = [&a, &b, &c, sc](Tape& t) {
      return sc(t, t.concat_cols({t.leaf(a), t.leaf(b), t.leaf(c)}));
    };
    return in;
  }});

  ops.push_back({"slice_cols", [plain](Rng& rng) {
    const int r = 2 + rng.uniform_int(2), c = 5;
    const int col0 = rng.uniform_int(4);
    const int len = 1 + rng.uniform_int(c - col0);
    FdInstance in;
    in.group = std::make_unique<ParamGroup>("fd");
    Parameter& x = add_random(*in.group, "x", 2, r, c, rng, plain);
    auto sc = make_scalarizer(rng, r, len);
    in.f = [&x, col0, len, sc](Tape& t) { return sc(t, t.slice_cols(t.leaf(x), col0, len)); };
    return in;
  }});

  binary("add", [](Tape& t, const Tensor& a, const Tensor& b) { return t.add(a, b); }, plain, plain);
  binary("sub", [](Tape& t, const Tensor& a, const Tensor& b) { return t.sub(a, b); }, plain, plain);
  binary("mul", [](Tape& t, const Tensor& a, const Tensor& b) { return t.mul(a, b); }, plain, plain);
  binary("div", [](Tape& t, const Tensor& a, const Tensor& b) { return t.div(a, b); }, plain, away0);

  ops.push_back({"scale", [plain](Rng& rng) {
    const double c0 = rng.uniform(-2.0, 2.0);
    return make_unary_instance(
        rng, [c0](Tape& t, const Tensor& x) { return t.scale(x, c0); }, plain);
  }});
  ops.push_back({"add_const", [plain](Rng& rng) {
    const double c0 = rng.uniform(-2.0, 2.0);
    return make_unary_instance(
        rng, [c0](Tape& t, const Tensor& x) { return t.add_const(x, c0); }, plain);
  }});

  ops.push_back({"add_rowvec", [plain](Rng& rng) {
    const int r = 2 + rng.uniform_int(2), c = 2 + rng.uniform_int(3);
    FdInstance in;
    in.group = std::make_unique<ParamGroup>("fd");
    Parameter& x = add_random(*in.group, "x", 2, r, c, rng, plain);
    Parameter& b = add_random(*in.group, "b", 1, 1, c, rng, plain);
    auto sc = make_scalarizer(rng, r, c);
    in.f = [&x, &b, sc](Tape& t) { return sc(t, t.add_rowvec(t.leaf(x), t.leaf(b))); };
    return in;
  }});

  ops.push_back({"div_colvec", [plain](Rng& rng) {
    const int r = 2 + rng.uniform_int(2), c = 2 + rng.uniform_int(3);
    FdInstance in;
    in.group = std::make_unique<ParamGroup>("fd");
    Parameter& x = add_random(*in.group, "x", 2, r, c, rng, plain);
    Parameter& d = add_random(*in.group, "d", 2, r, 1, rng, draw_signed_mag(0.4, 1.6));
    auto sc = make_scalarizer(rng, r, c);
    in.f = [&x, &d, sc](Tape& t) { return sc(t, t.div_colvec(t.leaf(x), t.leaf(d))); };
    return in;
  }});

  ops.push_back({"matmul", [plain](Rng& rng) {
    const int r = 2 + rng.uniform_int(2), k = 2 + rng.uniform_int(3), c = 2 + rng.uniform_int(2);
    FdInstance in;
    in.group = std::make_unique<ParamGroup>("fd");
    Parameter& a = add_random(*in.group, "a", 2, r, k, rng, plain);
    Parameter& b = add_random(*in.group, "b", 2, k, c, rng, plain);
    auto sc = make_scalarizer(rng, r, c);
    in.f = [&a, &b, sc](Tape& t) { return sc(t, t.matmul(t.leaf(a), t.leaf(b))); };
    return in;
  }});

  ops.push_back({"matmul_nt", [plain](Rng& rng) {
    const int r = 2 + rng.uniform_int(2), k = 2 + rng.uniform_int(3), c = 2 + rng.uniform_int(2);
    FdInstance in;
    in.group = std::make_unique<ParamGroup>("fd");
    Parameter& a = add_random(*in.group, "a", 2, r, k, rng, plain);
    Parameter& b = add_random(*in.group, "b", 2, c, k, rng, plain);
    auto sc = make_scalarizer(rng, r, c);
    in.f = [&a, &b, sc](Tape& t) { return sc(t, t.matmul_nt(t.leaf(a), t.leaf(b))); };
    return in;
  }});

  ops.push_back({"rowwise_matmul", [plain](Rng& rng) {
    const int r = 2 + rng.uniform_int(2), n_in = 2 + rng.uniform_int(2),
              n_out = 1 + rng.uniform_int(3);
    FdInstance in;
    in.group = std::make_unique<ParamGroup>("fd");
    Parameter& q = add_random(*in.group, "q", 2, r, n_in, rng, plain);
    Parameter& w = add_random(*in.group, "w", 2, r, n_in * n_out, rng, plain);
    auto sc = make_scalarizer(rng, r, n_out);
    in.f = [&q, &w, n_out, sc](Tape& t) {
      return sc(t, t.rowwise_matmul(t.leaf(q), t.leaf(w), n_out));
    };
    return in;
  }});

  unary("tanh", [](Tape& t, const Tensor& x) { return t.tanh(x); }, draw_uniform(-2.0, 2.0));
  unary("sigmoid", [](Tape& t, const Tensor& x) { return t.sigmoid(x); }, draw_uniform(-2.0, 2.0));
  unary("elu", [](Tape& t, const Tensor& x) { return t.elu(x); }, draw_signed_mag(0.05, 1.5));
  unary("exp", [](Tape& t, const Tensor& x) { return t.exp(x); }, draw_uniform(-1.5, 1.0));
  unary("log", [](Tape& t, const Tensor& x) { return t.log(x); }, draw_uniform(0.2, 2.5));
  unary("abs", [](Tape& t, const Tensor& x) { return t.abs(x); }, draw_signed_mag(0.05, 1.5));
  unary("square", [](Tape& t, const Tensor& x) { return t.square(x); }, plain);
  unary("clamp", [](Tape& t, const Tensor& x) { return t.clamp(x, -0.6, 0.6); },
        draw_avoiding(-1.2, 1.2, {-0.6, 0.6}, 0.03));
  unary("clamp_min", [](Tape& t, const Tensor& x) { return t.clamp_min(x, -0.3); },
        draw_avoiding(-1.2, 1.2, {-0.3}, 0.03));

  auto reduction = [&](const char* name, UnaryOp op, bool per_row) {
    ops.push_back({name, [op, per_row, plain](Rng& rng) {
      const int r = 2 + rng.uniform_int(2), c = 2 + rng.uniform_int(3);
      FdInstance in;
      in.group = std::make_unique<ParamGroup>("fd");
      Parameter& x = add_random(*in.group, "x", 2, r, c, rng, plain);
      auto sc = make_scalarizer(rng, per_row ? r : 1, 1);
      in.f = [&x, op, sc](Tape& t) { return sc(t, op(t, t.leaf(x))); };
      return in;
    }});
  };
  reduction("sum_all", [](Tape& t, const Tensor& x) { return t.sum_all(x); }, false);
  reduction("mean_all", [](Tape& t, const Tensor& x) { return t.mean_all(x); }, false);
  reduction("row_sum", [](Tape& t, const Tensor& x) { return t.row_sum(x); }, true);

  ops.push_back({"linear", [plain](Rng& rng) {
    const int r = 2 + rng.uniform_int(2), c = 2 + rng.uniform_int(3), m = 2 + rng.uniform_int(2);
    FdInstance in;
    in.group = std::make_unique<ParamGroup>("fd");
    Parameter& x = add_random(*in.group, "x", 2, r, c, rng, plain);
    Parameter& W = add_random(*in.group, "W", 2, m, c, rng, plain);
    Parameter& b = add_random(*in.group, "b", 1, 1, m, rng, plain);
    auto sc = make_scalarizer(rng, r, m);
    in.f = [&x, &W, &b, sc](Tape& t) { return sc(t, t.linear(t.leaf(x), W, b)); };
    return in;
  }});

  unary("avg_l1_norm", [](Tape& t, const Tensor& x) { return t.avg_l1_norm(x); },
        draw_signed_mag(0.3, 1.5));

  // already-scalar composites: no mixing layer on top
  auto scalar_binary = [&](const char* name, BinaryOp op) {
    ops.push_back({name, [op](Rng& rng) {
      const int r = 2 + rng.uniform_int(2), c = 2 + rng.uniform_int(3);
      FdInstance in;
      in.group = std::make_unique<ParamGroup>("fd");
      Parameter& a = add_random(*in.group, "a", 2, r, c, rng, draw_uniform(-1.5, 1.5));
      Parameter& b = add_random(*in.group, "b", 2, r, c, rng, draw_uniform(-1.5, 1.5));
      in.f = [&a, &b, op](Tape& t) { return op(t, t.leaf(a), t.leaf(b)); };
      return in;
    }});
  };
  scalar_binary("mse", [](Tape& t, const Tensor& a, const Tensor& b) { return mse(t, a, b); });
  scalar_binary("sum_squares",
                [](Tape& t, const Tensor& a, const Tensor& b) { return sum_squares(t, a, b); });

  ops.push_back({"masked_mse", [plain](Rng& rng) {
    const int r = 3 + rng.uniform_int(2), c = 2 + rng.uniform_int(3);
    FdInstance in;
    in.group = std::make_unique<ParamGroup>("fd");
    Parameter& a = add_random(*in.group, "a", 2, r, c, rng, plain);
    Parameter& b = add_random(*in.group, "b", 2, r, c, rng, plain);
    std::vector<double> mask(static_cast<std::size_t>(r), 0.0);
    mask[0] = 1.0;
    for (int i = 1; i < r; ++i) mask[static_cast<std::size_t>(i)] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    in.f = [&a, &b, r, mask](Tape& t) {
      return masked_mse(t, t.leaf(a), t.leaf(b), t.constant(r, 1, mask));
    };
    return in;
  }});

  ops.push_back({"masked_mean", [plain](Rng& rng) {
    const int r = 3 + rng.uniform_int(3);
    FdInstance in;
    in.group = std::make_unique<ParamGroup>("fd");
    Parameter& x = add_random(*in.group, "x", 2, r, 1, rng, plain);
    std::vector<double> mask(static_cast<std::size_t>(r), 0.0);
    mask[0] = 1.0;
    for (int i = 1; i < r; ++i) mask[static_cast<std::size_t>(i)] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    in.f = [&x, r, mask](Tape& t) {
      return masked_mean(t, t.leaf(x), t.constant(r, 1, mask));
    };
    return in;
  }});

  return ops;
}

// ---------------- fault-injection subjects ----------------

// Mixing head with the first |.| deliberately omitted, used only under fault
// injection so the monotonicity detector can be shown to catch sign bugs.
struct FaultedHead {
  Linear w1, b1, w2, b2;
  int embed = 0;
};

FaultedHead make_faulted_head(ParamGroup& g, const MixerConfig& mc, Rng& rng) {
  FaultedHead h;
  h.embed = mc.embed_dim;
  const int ctx = mc.state_dim + mc.rollout_dim;
  h.w1 = make_linear(g, "w1", mc.n_agents * mc.embed_dim, ctx, rng);
  h.b1 = make_linear(g, "b1", mc.embed_dim, ctx, rng);
  h.w2 = make_linear(g, "w2", mc.embed_dim, ctx, rng);
  h.b2 = make_linear(g, "b2", 1, ctx, rng);
  return h;
}

Tensor faulted_mix(Tape& t, const FaultedHead& h, const Tensor& q, const Tensor& state,
                   const Tensor& rollout) {
  Tensor ctx = t.concat_cols({state, t.stop_gradient(rollout)});
  Tensor w1 = apply(t, h.w1, ctx);  // no |.|: signs leak into the mix
  Tensor hidden = t.elu(t.add(t.rowwise_matmul(q, w1, h.embed), apply(t, h.b1, ctx)));
  Tensor w2 = t.abs(apply(t, h.w2, ctx));
  Tensor out = t.row_sum(t.mul(hidden, w2));
  return t.add(out, apply(t, h.b2, ctx));
}

}  // namespace

// ---------------- trajectory / evidence ----------------

TabularTrajectory sample_trajectory(const TabularDecPomdp& m, int T, Rng& rng) {
  if (T < 1) throw std::invalid_argument("sample_trajectory: horizon must be >= 1");
  TabularTrajectory tr;
  auto act = [&](int state) {
    std::vector<int> a(static_cast<std::size_t>(m.n_agents));
    for (int i = 0; i < m.n_agents; ++i) {
      const int o = m.obs_of(state, i);
      const int base = (i * m.n_obs + o) * m.n_actions;
      a[static_cast<std::size_t>(i)] = draw_categorical(m.policy, base, m.n_actions, rng);
    }
    return a;
  };
  int s = draw_categorical(m.initial_dist, 0, m.n_states, rng);
  tr.actions.push_back(act(s));
  for (int t = 1; t <= T; ++t) {
    const int joint = m.joint_index(tr.actions.back());
    const int row = (s * m.n_joint() + joint) * m.n_states;
    s = draw_categorical(m.transition, row, m.n_states, rng);
    std::vector<int> o(static_cast<std::size_t>(m.n_agents));
    for (int i = 0; i < m.n_agents; ++i) o[static_cast<std::size_t>(i)] = m.obs_of(s, i);
    tr.obs.push_back(std::move(o));
    tr.actions.push_back(act(s));
  }
  return tr;
}

double exact_evidence(const TabularDecPomdp& m, const TabularTrajectory& tr) {
  validate_trajectory(m, tr);
  const int T = tr.horizon();
  double acc = log_policy_term(m, tr);
  // predictive belief over s_1
  std::vector<double> b = start_kernel(m, m.joint_index(tr.actions[0]));
  for (int t = 1; t <= T; ++t) {
    const auto& o = tr.obs[static_cast<std::size_t>(t - 1)];
    double c = 0.0;
    for (int s = 0; s < m.n_states; ++s)
      if (consistent(m, s, o)) c += b[static_cast<std::size_t>(s)];
    if (c <= 0.0)
      throw std::invalid_argument(fmt("exact_evidence: impossible observation at step %d", t));
    acc += std::log(c);
    if (t == T) break;
    const int joint = m.joint_index(tr.actions[static_cast<std::size_t>(t)]);
    std::vector<double> nb(static_cast<std::size_t>(m.n_states), 0.0);
    for (int s = 0; s < m.n_states; ++s) {
      if (!consistent(m, s, o)) continue;
      const double w = b[static_cast<std::size_t>(s)] / c;
      for (int s2 = 0; s2 < m.n_states; ++s2)
        nb[static_cast<std::size_t>(s2)] += w * m.trans(s, joint, s2);
    }
    b = std::move(nb);
  }
  return acc;
}

double naive_evidence(const TabularDecPomdp& m, const TabularTrajectory& tr) {
  validate_trajectory(m, tr);
  const int T = tr.horizon();
  double total = 0.0;
  std::vector<int> path(static_cast<std::size_t>(T + 1), 0);
  std::function<void(int, double)> rec = [&](int t, double w) {
    if (t > T) {
      total += w;
      return;
    }
    for (int s = 0; s < m.n_states; ++s) {
      double p;
      if (t == 0) {
        p = m.initial_dist[static_cast<std::size_t>(s)];
      } else {
        if (!consistent(m, s, tr.obs[static_cast<std::size_t>(t - 1)])) continue;
        const int joint = m.joint_index(tr.actions[static_cast<std::size_t>(t - 1)]);
        p = m.trans(path[static_cast<std::size_t>(t - 1)], joint, s);
      }
      if (p <= 0.0) continue;
      path[static_cast<std::size_t>(t)] = s;
      rec(t + 1, w * p);
    }
  };
  rec(0, 1.0);
  if (total <= 0.0) throw std::invalid_argument("naive_evidence: impossible trajectory");
  return std::log(total) + log_policy_term(m, tr);
}

PosteriorFn make_random_posterior(const TabularDecPomdp& m, Rng rng) {
  const int S = m.n_states, J = m.n_joint();
  auto logits = std::make_shared<std::vector<double>>(
      rng.uniform_vector((S + 1) * J * S, -2.0, 2.0));
  TabularDecPomdp model = m;
  return [model, logits, S, J](int s_prev, int joint_a, const std::vector<int>& obs_tuple) {
    if (s_prev < -1 || s_prev >= S) throw std::invalid_argument("posterior: bad s_prev");
    if (joint_a < 0 || joint_a >= J) throw std::invalid_argument("posterior: bad joint action");
    const std::vector<int> sup = support_states(model, obs_tuple);
    if (sup.empty()) throw std::invalid_argument("posterior: observation matches no state");
    const int base = ((s_prev + 1) * J + joint_a) * S;
    double mx = -std::numeric_limits<double>::infinity();
    for (int s : sup) mx = std::max(mx, (*logits)[static_cast<std::size_t>(base + s)]);
    std::vector<double> q(static_cast<std::size_t>(S), 0.0);
    double z = 0.0;
    for (int s : sup) {
      const double e = std::exp((*logits)[static_cast<std::size_t>(base + s)] - mx);
      q[static_cast<std::size_t>(s)] = e;
      z += e;
    }
    for (int s : sup) q[static_cast<std::size_t>(s)] /= z;
    return q;
  };
}

PosteriorFn make_filtering_posterior(const TabularDecPomdp& m) {
  TabularDecPomdp model = m;
  return [model](int s_prev, int joint_a, const std::vector<int>& obs_tuple) {
    const int S = model.n_states;
    if (s_prev < -1 || s_prev >= S) throw std::invalid_argument("posterior: bad s_prev");
    std::vector<double> prior =
        s_prev < 0 ? start_kernel(model, joint_a) : std::vector<double>();
    if (s_prev >= 0) {
      prior.resize(static_cast<std::size_t>(S));
      for (int s = 0; s < S; ++s) prior[static_cast<std::size_t>(s)] = model.trans(s_prev, joint_a, s);
    }
    std::vector<double> q(static_cast<std::size_t>(S), 0.0);
    double z = 0.0;
    for (int s = 0; s < S; ++s) {
      if (!consistent(model, s, obs_tuple)) continue;
      q[static_cast<std::size_t>(s)] = prior[static_cast<std::size_t>(s)];
      z += prior[static_cast<std::size_t>(s)];
    }
    if (z <= 0.0) throw std::invalid_argument("posterior: observation has zero prior mass");
    for (auto& v : q) v /= z;
    return q;
  };
}

ElboEstimate elbo_estimate(const TabularDecPomdp& m, const PosteriorFn& q,
                           const TabularTrajectory& tr, int n_samples, Rng& rng) {
  validate_trajectory(m, tr);
  if (n_samples < 1) throw std::invalid_argument("elbo_estimate: n_samples must be >= 1");
  const int T = tr.horizon();
  const double logpol = log_policy_term(m, tr);
  const std::vector<double> k0 = start_kernel(m, m.joint_index(tr.actions[0]));
  // Welford accumulation: identical samples must yield exactly zero variance
  double mean = 0.0, m2 = 0.0;
  for (int k = 0; k < n_samples; ++k) {
    double acc = logpol;
    int s_prev = -1;
    for (int t = 1; t <= T; ++t) {
      const int joint = m.joint_index(tr.actions[static_cast<std::size_t>(t - 1)]);
      const std::vector<double> dist =
          q(s_prev, joint, tr.obs[static_cast<std::size_t>(t - 1)]);
      const int s = draw_categorical(dist, 0, m.n_states, rng);
      if (!consistent(m, s, tr.obs[static_cast<std::size_t>(t - 1)]))
        throw std::invalid_argument("elbo_estimate: posterior left the consistent support");
      const double prior =
          s_prev < 0 ? k0[static_cast<std::size_t>(s)] : m.trans(s_prev, joint, s);
      // deterministic symbols: log p(o_t | s) is exactly 0 on the support
      acc += std::log(prior) - std::log(dist[static_cast<std::size_t>(s)]);
      s_prev = s;
    }
    const double delta = acc - mean;
    mean += delta / (k + 1);
    m2 += delta * (acc - mean);
  }
  ElboEstimate est;
  est.n_samples = n_samples;
  est.value = mean;
  if (n_samples > 1) est.std_error = std::sqrt(m2 / (n_samples - 1) / n_samples);
  return est;
}

// ---------------- checks ----------------

VerifyCheck check_tensorcore_gradients(std::uint64_t seed, int instances_per_op) {
  Timer tm;
  VerifyCheck c;
  c.name = "tensorcore.gradients";
  const double h = 1e-5, tol = 1e-4;
  const std::vector<OpEntry> ops = build_op_table();
  Rng rng(seed, 7);
  double max_rel = 0.0;
  std::string worst_op = "-";
  long total = 0;
  std::vector<std::string> failing;
  for (const auto& op : ops) {
    double op_max = 0.0;
    for (int i = 0; i < instances_per_op; ++i) {
      FdInstance inst = op.build(rng);
      const FdResult r = fd_check(*inst.group, inst.f, h);
      total += r.n;
      op_max = std::max(op_max, r.max_rel);
    }
    if (op_max > max_rel) {
      max_rel = op_max;
      worst_op = op.name;
    }
    if (op_max > tol) failing.push_back(op.name);
  }
  c.pass = failing.empty();
  c.detail = fmt("%zu ops x %d instances, %ld partials, max rel err %.2e (%s)", ops.size(),
                 instances_per_op, total, max_rel, worst_op.c_str());
  if (!c.pass) {
    c.detail += "; failing:";
    for (const auto& f : failing) c.detail += " " + f;
  }
  c.seconds = tm.seconds();
  return c;
}

VerifyCheck check_mixer_monotonicity(std::uint64_t seed, int n_draws, bool inject_sign_fault) {
  Timer tm;
  VerifyCheck c;
  c.name = "mixer.monotonicity";
  const int n_agents = 3, state_dim = 3, rollout_dim = 4;
  MixerConfig mc;
  mc.n_agents = n_agents;
  mc.state_dim = state_dim;
  mc.rollout_dim = rollout_dim;
  mc.embed_dim = 8;
  mc.hypernet_hidden = 16;
  Rng rng(seed, 21);
  long grad_violations = 0, bump_violations = 0;
  double min_grad = std::numeric_limits<double>::infinity();
  for (int d = 0; d < n_draws; ++d) {
    Rng init = rng.split(static_cast<std::uint64_t>(d) + 1);
    ParamGroup mg("mixer");
    std::unique_ptr<Mixer> mixer;
    FaultedHead fh;
    if (inject_sign_fault) {
      fh = make_faulted_head(mg, mc, init);
    } else {
      mixer = std::make_unique<Mixer>(mg, "mix", mc, init);
    }
    auto subject = [&](Tape& t, const Tensor& q, const Tensor& st, const Tensor& ro) {
      return inject_sign_fault ? faulted_mix(t, fh, q, st, ro) : mixer->mix(t, q, st, ro);
    };
    ParamGroup qg("q");
    Parameter& qp = qg.add("q", 2, 1, n_agents);
    for (auto& v : qp.value) v = rng.uniform(-2.0, 2.0);
    const std::vector<double> sv = rng.uniform_vector(state_dim, -1.0, 1.0);
    const std::vector<double> rv = rng.uniform_vector(rollout_dim, -1.0, 1.0);
    double base;
    {
      Tape t;
      Tensor out = subject(t, t.leaf(qp), t.constant(1, state_dim, sv),
                           t.constant(1, rollout_dim, rv));
      base = out.value();
      t.backward(out);
    }
    for (int i = 0; i < n_agents; ++i) {
      min_grad = std::min(min_grad, qp.grad[static_cast<std::size_t>(i)]);
      if (qp.grad[static_cast<std::size_t>(i)] < 0.0) ++grad_violations;
    }
    for (int i = 0; i < n_agents; ++i) {
      const double saved = qp.value[static_cast<std::size_t>(i)];
      qp.value[static_cast<std::size_t>(i)] = saved + 1e-4;
      double up;
      {
        Tape t(false);
        up = subject(t, t.leaf(qp), t.constant(1, state_dim, sv), t.constant(1, rollout_dim, rv))
                 .value();
      }
      qp.value[static_cast<std::size_t>(i)] = saved;
      if (!(up >= base)) ++bump_violations;
    }
  }
  c.pass = grad_violations == 0 && bump_violations == 0;
  c.detail = fmt("%d draws x %d agents: %ld negative gradients, %ld decreasing bumps, "
                 "min dQtot/dq %.2e%s",
                 n_draws, n_agents, grad_violations, bump_violations, min_grad,
                 inject_sign_fault ? " [fault injected]" : "");
  c.seconds = tm.seconds();
  return c;
}

VerifyCheck check_mixer_greedy_consistency(std::uint64_t seed, int n_draws) {
  Timer tm;
  VerifyCheck c;
  c.name = "mixer.greedy_consistency";
  const int n_actions = 3, n_joint = n_actions * n_actions;
  MixerConfig mc;
  mc.n_agents = 2;
  mc.state_dim = 3;
  mc.rollout_dim = 4;
  mc.embed_dim = 8;
  mc.hypernet_hidden = 16;
  Rng rng(seed, 22);
  long violations = 0;
  for (int d = 0; d < n_draws; ++d) {
    Rng init = rng.split(static_cast<std::uint64_t>(d) + 1);
    ParamGroup mg("mixer");
    Mixer mixer(mg, "mix", mc, init);
    const std::vector<double> q1 = rng.uniform_vector(n_actions, -1.0, 1.0);
    const std::vector<double> q2 = rng.uniform_vector(n_actions, -1.0, 1.0);
    const auto argmax = [](const std::vector<double>& v) {
      return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
    };
    const int greedy_joint = argmax(q1) * n_actions + argmax(q2);
    std::vector<double> qm(static_cast<std::size_t>(n_joint * 2));
    for (int a1 = 0; a1 < n_actions; ++a1)
      for (int a2 = 0; a2 < n_actions; ++a2) {
        const int r = a1 * n_actions + a2;
        qm[static_cast<std::size_t>(r * 2)] = q1[static_cast<std::size_t>(a1)];
        qm[static_cast<std::size_t>(r * 2 + 1)] = q2[static_cast<std::size_t>(a2)];
      }
    const std::vector<double> sv = rng.uniform_vector(mc.state_dim, -1.0, 1.0);
    const std::vector<double> rv = rng.uniform_vector(mc.rollout_dim, -1.0, 1.0);
    std::vector<double> svr, rvr;
    for (int r = 0; r < n_joint; ++r) {
      svr.insert(svr.end(), sv.begin(), sv.end());
      rvr.insert(rvr.end(), rv.begin(), rv.end());
    }
    Tape t(false);
    Tensor out = mixer.mix(t, t.constant(n_joint, 2, qm), t.constant(n_joint, mc.state_dim, svr),
                           t.constant(n_joint, mc.rollout_dim, rvr));
    const std::vector<double> ov = out.values();
    const double best = *std::max_element(ov.begin(), ov.end());
    // greedy row must attain the exhaustive maximum (ties allowed)
    if (ov[static_cast<std::size_t>(greedy_joint)] < best) ++violations;
  }
  c.pass = violations == 0;
  c.detail = fmt("%d draws, 9 joint actions each: %ld greedy/argmax mismatches", n_draws,
                 violations);
  c.seconds = tm.seconds();
  return c;
}

VerifyCheck check_kl_balancing(std::uint64_t seed, int n_pairs) {
  Timer tm;
  VerifyCheck c;
  c.name = "worldmodel.kl_balancing";
  const double alpha = 0.8;
  const int rows = 4, dim = 3;
  Rng rng(seed, 33);
  double max_val_diff = 0.0, max_grad_rel = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    ParamGroup g("kl");
    const ValueDraw mean_draw = draw_uniform(-1.0, 1.0);
    const ValueDraw ls_draw = draw_uniform(-1.2, 0.8);
    Parameter& mq = add_random(g, "mq", 2, rows, dim, rng, mean_draw);
    Parameter& lq = add_random(g, "lq", 2, rows, dim, rng, ls_draw);
    Parameter& mp = add_random(g, "mp", 2, rows, dim, rng, mean_draw);
    Parameter& lp = add_random(g, "lp", 2, rows, dim, rng, ls_draw);
    auto build = [&](Tape& t, bool balanced) {
      GaussianDiag qd{t.leaf(mq), t.leaf(lq)};
      GaussianDiag pd{t.leaf(mp), t.leaf(lp)};
      Tensor col = balanced ? kl_balanced(t, qd, pd, alpha) : kl_diag_gaussian(t, qd, pd);
      return t.sum_all(col);
    };
    {
      Tape t(false);
      GaussianDiag qd{t.leaf(mq), t.leaf(lq)};
      GaussianDiag pd{t.leaf(mp), t.leaf(lp)};
      Tensor a = kl_balanced(t, qd, pd, alpha);
      const std::vector<double> av = a.values();  // copy before more nodes
      Tensor b = kl_diag_gaussian(t, qd, pd);
      const std::vector<double>& bv = b.values();
      for (std::size_t i = 0; i < av.size(); ++i)
        max_val_diff = std::max(max_val_diff, std::fabs(av[i] - bv[i]));
    }
    g.zero_grad();
    {
      Tape t;
      t.backward(build(t, false));
    }
    std::vector<double> ref;
    for (const auto& p : g.params()) ref.insert(ref.end(), p->grad.begin(), p->grad.end());
    g.zero_grad();
    {
      Tape t;
      t.backward(build(t, true));
    }
    std::size_t at = 0;
    for (const auto& p : g.params()) {
      const bool q_side = p->name == "mq" || p->name == "lq";
      const double scale = q_side ? alpha : 1.0 - alpha;
      for (std::size_t i = 0; i < p->grad.size(); ++i, ++at) {
        const double expect = scale * ref[at];
        const double denom = std::max({1e-9, std::fabs(expect), std::fabs(p->grad[i])});
        max_grad_rel = std::max(max_grad_rel, std::fabs(p->grad[i] - expect) / denom);
      }
    }
  }
  c.pass = max_val_diff <= 1e-12 && max_grad_rel <= 1e-9;
  c.detail = fmt("%d pairs: max |balanced - plain| %.2e, max grad scaling rel err %.2e", n_pairs,
                 max_val_diff, max_grad_rel);
  c.seconds = tm.seconds();
  return c;
}

VerifyCheck check_decoupling(std::uint64_t seed, bool inject_unstopped_target) {
  Timer tm;
  VerifyCheck c;
  c.name = "sale.decoupling";
  Rng rng(seed, 41);
  SaleConfig sc;
  sc.input_dim = 5;
  sc.z_dim = 6;
  sc.n_actions = 3;
  sc.action_slots = 1;
  sc.hidden = 8;
  sc.action_embed = 2;
  ParamGroup enc_g("encoders");
  Rng ir1 = rng.split(1);
  SaleEncoders enc(enc_g, "enc", sc, ir1);
  ParamGroup tgt_g("encoders_target");
  Rng ir2 = rng.split(2);
  SaleEncoders tgt(tgt_g, "enc", sc, ir2);
  copy_values(enc_g, tgt_g);
  const int B = 4;
  const std::vector<double> xv = rng.uniform_vector(B * sc.input_dim, -1.0, 1.0);
  const std::vector<double> xnv = rng.uniform_vector(B * sc.input_dim, -1.0, 1.0);
  std::vector<double> av(static_cast<std::size_t>(B * sc.n_actions), 0.0);
  for (int r = 0; r < B; ++r)
    av[static_cast<std::size_t>(r * sc.n_actions + rng.uniform_int(sc.n_actions))] = 1.0;
  const std::vector<double> ones(static_cast<std::size_t>(B), 1.0);

  std::vector<std::string> problems;

  // prediction loss: trains the online pair, never its target
  enc_g.zero_grad();
  tgt_g.zero_grad();
  {
    Tape t;
    Tensor z = enc.encode_state(t, t.constant(B, sc.input_dim, xv));
    Tensor zsa = enc.encode_state_action(t, z, t.constant(B, sc.n_actions, av));
    Tensor z_next = tgt.encode_state(t, t.constant(B, sc.input_dim, xnv));
    Tensor mask = t.constant(B, 1, ones);
    Tensor loss =
        inject_unstopped_target
            // planted bug: the loss body without the stop on its target
            ? masked_mean(t, t.row_sum(t.square(t.sub(zsa, z_next))), mask)
            : SaleEncoders::prediction_loss(t, zsa, z_next, mask);
    t.backward(loss);
  }
  if (enc_g.grads_are_zero()) problems.push_back("online encoders received no gradient");
  try {
    assert_decoupled(tgt_g);
  } catch (const DecouplingError&) {
    problems.push_back("prediction target received gradient");
  }

  // TD error through the mixer's rollout slot leaves the encoders untouched
  enc_g.zero_grad();
  MixerConfig mc;
  mc.n_agents = 2;
  mc.state_dim = 3;
  mc.rollout_dim = sc.z_dim;
  mc.embed_dim = 8;
  mc.hypernet_hidden = 16;
  ParamGroup mix_g("mixer");
  Rng ir3 = rng.split(3);
  Mixer mixer(mix_g, "mix", mc, ir3);
  ParamGroup util_g("utilities");
  Parameter& qp = util_g.add("q", 2, B, mc.n_agents);
  for (auto& v : qp.value) v = rng.uniform(-1.0, 1.0);
  const std::vector<double> sv = rng.uniform_vector(B * mc.state_dim, -1.0, 1.0);
  const std::vector<double> yv = rng.uniform_vector(B, -1.0, 1.0);
  {
    Tape t;
    Tensor roll = enc.linear_feature(t, t.constant(B, sc.input_dim, xv));
    Tensor q_tot = mixer.mix(t, t.leaf(qp), t.constant(B, mc.state_dim, sv), roll);
    t.backward(mse(t, q_tot, t.constant(B, 1, yv)));
  }
  try {
    assert_decoupled(enc_g);
  } catch (const DecouplingError&) {
    problems.push_back("TD gradient leaked into the encoders");
  }
  if (util_g.grads_are_zero()) problems.push_back("utilities received no TD gradient");
  if (mix_g.grads_are_zero()) problems.push_back("mixer received no TD gradient");

  c.pass = problems.empty();
  if (c.pass) {
    c.detail = fmt("target stop, rollout stop, and positive controls hold%s",
                   inject_unstopped_target ? " [fault injected]" : "");
  } else {
    c.detail = inject_unstopped_target ? "[fault injected] " : "";
    for (std::size_t i = 0; i < problems.size(); ++i)
      c.detail += (i ? "; " : "") + problems[i];
  }
  c.seconds = tm.seconds();
  return c;
}

VerifyCheck check_elbo_bound(std::uint64_t seed, int n_models, int n_samples) {
  Timer tm;
  VerifyCheck c;
  c.name = "verify.elbo_bound";
  Rng rng(seed, 55);
  double worst_margin = -std::numeric_limits<double>::infinity();
  double max_recursion_diff = 0.0;
  for (int k = 0; k < n_models; ++k) {
    const int n_states = 2 + rng.uniform_int(7);
    const int n_agents = 1 + rng.uniform_int(2);
    const int n_actions = 2 + rng.uniform_int(2);
    const int n_obs = 2 + rng.uniform_int(3);
    TabularDecPomdp m = make_random_tabular(rng, n_states, n_agents, n_actions, n_obs, 8);
    const int T = 1 + rng.uniform_int(6);
    TabularTrajectory tr = sample_trajectory(m, T, rng);
    const double ev = exact_evidence(m, tr);
    max_recursion_diff = std::max(max_recursion_diff, std::fabs(ev - naive_evidence(m, tr)));
    const PosteriorFn q = make_random_posterior(m, rng.split(1000 + static_cast<std::uint64_t>(k)));
    const ElboEstimate est = elbo_estimate(m, q, tr, n_samples, rng);
    worst_margin = std::max(worst_margin, est.value - ev - (1e-6 + 3.0 * est.std_error));
  }
  c.pass = worst_margin <= 0.0 && max_recursion_diff <= 1e-9;
  c.detail = fmt("%d models x %d samples: worst (elbo - evidence - slack) %.2e, "
                 "max |recursion - enumeration| %.2e",
                 n_models, n_samples, worst_margin, max_recursion_diff);
  c.seconds = tm.seconds();
  return c;
}

VerifyCheck check_elbo_tightness(std::uint64_t seed, int n_models, int n_samples) {
  Timer tm;
  VerifyCheck c;
  c.name = "verify.elbo_tightness";
  Rng rng(seed, 56);
  double max_gap = 0.0, max_se = 0.0;
  for (int k = 0; k < n_models; ++k) {
    const int n_states = 2 + rng.uniform_int(5);
    const int n_agents = 1 + rng.uniform_int(2);
    TabularDecPomdp m = make_random_tabular(rng, n_states, n_agents, 2, n_states, 8);
    // injective observation map: the tuple identifies the state exactly
    for (int s = 0; s < n_states; ++s)
      for (int i = 0; i < n_agents; ++i) m.obs[static_cast<std::size_t>(s * n_agents + i)] = s;
    m.validate();
    const int T = 1 + rng.uniform_int(5);
    TabularTrajectory tr = sample_trajectory(m, T, rng);
    const double ev = exact_evidence(m, tr);
    const PosteriorFn q = make_filtering_posterior(m);
    const ElboEstimate est = elbo_estimate(m, q, tr, n_samples, rng);
    max_gap = std::max(max_gap, std::fabs(est.value - ev));
    max_se = std::max(max_se, est.std_error);
  }
  c.pass = max_gap <= 1e-9 && max_se <= 1e-9;
  c.detail = fmt("%d injective models: max |elbo - evidence| %.2e, max std error %.2e", n_models,
                 max_gap, max_se);
  c.seconds = tm.seconds();
  return c;
}

std::vector<VerifyCheck> run_verification_suite(const VerifyOptions& opt) {
  auto wanted = [&](const char* name) {
    if (opt.only.empty()) return true;
    const std::string n(name);
    for (const auto& s : opt.only)
      if (n.find(s) != std::string::npos) return true;
    return false;
  };
  std::vector<VerifyCheck> out;
  if (wanted("tensorcore.gradients")) out.push_back(check_tensorcore_gradients(opt.seed, 100));
  if (wanted("mixer.monotonicity"))
    out.push_back(check_mixer_monotonicity(opt.seed, 1000, opt.inject_nonmonotone_mixer));
  if (wanted("mixer.greedy_consistency"))
    out.push_back(check_mixer_greedy_consistency(opt.seed, 100));
  if (wanted("worldmodel.kl_balancing")) out.push_back(check_kl_balancing(opt.seed, 200));
  if (wanted("sale.decoupling"))
    out.push_back(check_decoupling(opt.seed, opt.inject_unstopped_sale_target));
  if (wanted("verify.elbo_bound")) out.push_back(check_elbo_bound(opt.seed, 100, 10000));
  if (wanted("verify.elbo_tightness")) out.push_back(check_elbo_tightness(opt.seed, 20, 64));
  return out;
}

bool all_passed(const std::vector<VerifyCheck>& checks) {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return !checks.empty();
}

namespace {
std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 8);
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          out += fmt("\\u%04x", static_cast<unsigned>(static_cast<unsigned char>(ch)));
        } else {
          out += ch;
        }
    }
  }
  return out;
}
}  // namespace

std::string verify_report_json(const std::vector<VerifyCheck>& checks, std::uint64_t seed) {
  std::ostringstream o;
  o << "{\"seed\":" << seed << ",\"checks\":[";
  for (std::size_t i = 0; i < checks.size(); ++i) {
    if (i) o << ",";
    o << "{\"name\":\"" << json_escape(checks[i].name) << "\",\"pass\":"
      << (checks[i].pass ? "true" : "false") << ",\"detail\":\"" << json_escape(checks[i].detail)
      << "\",\"seconds\":" << fmt("%.3f", checks[i].seconds) << "}";
  }
  o << "],\"all_passed\":" << (all_passed(checks) ? "true" : "false") << "}";
  return o.str();
}

}  // namespace mmsa
