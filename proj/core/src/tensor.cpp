#include "mmsa/tensor.hpp"

#include <cmath>
#include <cstring>

#include "mmsa/params.hpp"

namespace mmsa {

namespace {

// C [m x n] += A [m x k] * B [k x n]
void gemm_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
              int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double ap = ai[p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += ap * bp[j];
    }
  }
}

// C [m x n] += A [m x k] * B^T with B [n x k]
void gemm_nt_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
                 int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C [k x n] += A^T * B with A [m x k], B [m x n]
void gemm_tn_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
                 int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    const double* bi = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double ap = ai[p];
      double* cp = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += ap * bi[j];
    }
  }
}

void check(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace

// ---- Tensor accessors ----

int Tensor::rows() const { return tape_->node_rows(*this); }
int Tensor::cols() const { return tape_->node_cols(*this); }

const std::vector<double>& Tensor::values() const { return tape_->node_values(idx_); }

double Tensor::value() const {
  const auto& v = values();
  if (v.size() != 1) throw ShapeError("Tensor::value requires a [1 x 1] tensor");
  return v[0];
}

double Tensor::value_at(int r, int c) const {
  return values()[static_cast<std::size_t>(r) * cols() + c];
}

const std::vector<double>& Tensor::grad() const { return tape_->node_grad(idx_); }

// ---- Tape internals ----

int Tape::node_rows(const Tensor& t) const { return node(t.idx_).rows; }
int Tape::node_cols(const Tensor& t) const { return node(t.idx_).cols; }
const std::vector<double>& Tape::node_grad(int idx) const { return nodes_[static_cast<std::size_t>(idx)].grad; }

Tensor Tape::make(int rows, int cols, std::vector<int> parents, bool stops) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.val.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  n.stops_gradient = stops;
  if (grad_enabled_ && !stops) {
    for (int p : parents)
      if (node(p).requires_grad) {
        n.requires_grad = true;
        break;
      }
  }
  n.parents = std::move(parents);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::ensure_grad(int i) {
  Node& n = node(i);
  if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
  n.grad_live = true;
}

// ---- leaves ----

Tensor Tape::constant(int rows, int cols, std::vector<double> values) {
  check(static_cast<std::size_t>(rows) * cols == values.size(), "constant: value count mismatch");
  Tensor t = make(rows, cols, {});
  node(t.idx_).val = std::move(values);
  return t;
}

Tensor Tape::constant_scalar(double v) { return constant(1, 1, {v}); }

Tensor Tape::zeros(int rows, int cols) { return make(rows, cols, {}); }

Tensor Tape::leaf(Parameter& p) {
  if (is_detached(p.owner)) {
    for (const auto& [param, idx] : detached_leaves_)
      if (param == &p) return Tensor(this, idx);
    Tensor t = make(p.rows, p.cols, {});
    node(t.idx_).val = p.value;
    detached_leaves_.emplace_back(&p, t.idx_);
    return t;
  }
  for (const auto& [param, idx] : param_leaves_)
    if (param == &p) return Tensor(this, idx);
  Tensor t = make(p.rows, p.cols, {});
  Node& n = node(t.idx_);
  n.val = p.value;
  if (grad_enabled_) {
    n.requires_grad = true;
    n.param = &p;
  }
  param_leaves_.emplace_back(&p, t.idx_);
  return t;
}

void Tape::set_detached(const ParamGroup* g, bool on) {
  if (g == nullptr) return;
  auto it = std::find(detached_groups_.begin(), detached_groups_.end(), g);
  if (on && it == detached_groups_.end()) detached_groups_.push_back(g);
  if (!on && it != detached_groups_.end()) detached_groups_.erase(it);
}

bool Tape::is_detached(const ParamGroup* g) const {
  return g != nullptr && std::find(detached_groups_.begin(),
                                   detached_groups_.end(),
                                   g) != detached_groups_.end();
}

// ---- structure ----

Tensor Tape::concat_cols(const std::vector<Tensor>& xs) {
  check(!xs.empty(), "concat_cols: empty input");
  const int m = xs[0].rows();
  int total = 0;
  std::vector<int> parents;
  parents.reserve(xs.size());
  for (const auto& x : xs) {
    check(x.tape() == this, "concat_cols: tensor from another tape");
    check(x.rows() == m, "concat_cols: row mismatch");
    total += x.cols();
    parents.push_back(x.idx_);
  }
  Tensor y = make(m, total, parents);
  Node& ny = node(y.idx_);
  int off = 0;
  for (const auto& x : xs) {
    const Node& nx = node(x.idx_);
    for (int i = 0; i < m; ++i)
      std::memcpy(ny.val.data() + static_cast<std::size_t>(i) * total + off,
                  nx.val.data() + static_cast<std::size_t>(i) * nx.cols,
                  sizeof(double) * nx.cols);
    off += nx.cols;
  }
  if (ny.requires_grad) {
    ny.back = [](Tape& t, int self) {
      Node& s = t.node(self);
      int off2 = 0;
      for (int pidx : s.parents) {
        Node& p = t.node(pidx);
        if (p.requires_grad) {
          t.ensure_grad(pidx);
          for (int i = 0; i < s.rows; ++i) {
            const double* g = s.grad.data() + static_cast<std::size_t>(i) * s.cols + off2;
            double* pg = p.grad.data() + static_cast<std::size_t>(i) * p.cols;
            for (int j = 0; j < p.cols; ++j) pg[j] += g[j];
          }
        }
        off2 += p.cols;
      }
    };
  }
  return y;
}

Tensor Tape::slice_cols(const Tensor& x, int col0, int len) {
  check(col0 >= 0 && len > 0 && col0 + len <= x.cols(), "slice_cols: range out of bounds");
  const int m = x.rows(), n = x.cols();
  Tensor y = make(m, len, {x.idx_});
  Node& ny = node(y.idx_);
  const Node& nx = node(x.idx_);
  for (int i = 0; i < m; ++i)
    std::memcpy(ny.val.data() + static_cast<std::size_t>(i) * len,
                nx.val.data() + static_cast<std::size_t>(i) * n + col0, sizeof(double) * len);
  if (ny.requires_grad) {
    ny.back = [col0](Tape& t, int self) {
      Node& s = t.node(self);
      Node& p = t.node(s.parents[0]);
      t.ensure_grad(s.parents[0]);
      for (int i = 0; i < s.rows; ++i) {
        const double* g = s.grad.data() + static_cast<std::size_t>(i) * s.cols;
        double* pg = p.grad.data() + static_cast<std::size_t>(i) * p.cols + col0;
        for (int j = 0; j < s.cols; ++j) pg[j] += g[j];
      }
    };
  }
  return y;
}

Tensor Tape::stop_gradient(const Tensor& x) {
  check(x.tape() == this, "stop_gradient: tensor from another tape");
  Tensor y = make(x.rows(), x.cols(), {x.idx_}, /*stops=*/true);
  node(y.idx_).val = node(x.idx_).val;
  return y;
}

// ---- arithmetic ----

namespace {
struct BinKind {
  enum K { Add, Sub, Mul, Div } k;
};
}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tensor y = make(a.rows(), a.cols(), {a.idx_, b.idx_});
  Node& ny = node(y.idx_);
  const auto &va = node(a.idx_).val, &vb = node(b.idx_).val;
  for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = va[i] + vb[i];
  if (ny.requires_grad) {
    ny.back = [](Tape& t, int self) {
      Node& s = t.node(self);
      for (int side = 0; side < 2; ++side) {
        Node& p = t.node(s.parents[static_cast<std::size_t>(side)]);
        if (!p.requires_grad) continue;
        t.ensure_grad(s.parents[static_cast<std::size_t>(side)]);
        for (std::size_t i = 0; i < s.grad.size(); ++i) p.grad[i] += s.grad[i];
      }
    };
  }
  return y;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Tensor y = make(a.rows(), a.cols(), {a.idx_, b.idx_});
  Node& ny = node(y.idx_);
  const auto &va = node(a.idx_).val, &vb = node(b.idx_).val;
  for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = va[i] - vb[i];
  if (ny.requires_grad) {
    ny.back = [](Tape& t, int self) {
      Node& s = t.node(self);
      Node& pa = t.node(s.parents[0]);
      Node& pb = t.node(s.parents[1]);
      if (pa.requires_grad) {
        t.ensure_grad(s.parents[0]);
        for (std::size_t i = 0; i < s.grad.size(); ++i) pa.grad[i] += s.grad[i];
      }
      if (pb.requires_grad) {
        t.ensure_grad(s.parents[1]);
        for (std::size_t i = 0; i < s.grad.size(); ++i) pb.grad[i] -= s.grad[i];
      }
    };
  }
  return y;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Tensor y = make(a.rows(), a.cols(), {a.idx_, b.idx_});
  Node& ny = node(y.idx_);
  const auto &va = node(a.idx_).val, &vb = node(b.idx_).val;
  for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = va[i] * vb[i];
  if (ny.requires_grad) {
    ny.back = [](Tape& t, int self) {
      Node& s = t.node(self);
      Node& pa = t.node(s.parents[0]);
      Node& pb = t.node(s.parents[1]);
      if (pa.requires_grad) {
        t.ensure_grad(s.parents[0]);
        for (std::size_t i = 0; i < s.grad.size(); ++i) pa.grad[i] += s.grad[i] * pb.val[i];
      }
      if (pb.requires_grad) {
        t.ensure_grad(s.parents[1]);
        for (std::size_t i = 0; i < s.grad.size(); ++i) pb.grad[i] += s.grad[i] * pa.val[i];
      }
    };
  }
  return y;
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "div: shape mismatch");
  Tensor y = make(a.rows(), a.cols(), {a.idx_, b.idx_});
  Node& ny = node(y.idx_);
  const auto &va = node(a.idx_).val, &vb = node(b.idx_).val;
  for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = va[i] / vb[i];
  if (ny.requires_grad) {
    ny.back = [](Tape& t, int self) {
      Node& s = t.node(self);
      Node& pa = t.node(s.parents[0]);
      Node& pb = t.node(s.parents[1]);
      if (pa.requires_grad) {
        t.ensure_grad(s.parents[0]);
        for (std::size_t i = 0; i < s.grad.size(); ++i) pa.grad[i] += s.grad[i] / pb.val[i];
      }
      if (pb.requires_grad) {
        t.ensure_grad(s.parents[1]);
        for (std::size_t i = 0; i < s.grad.size(); ++i)
          pb.grad[i] -= s.grad[i] * s.val[i] / pb.val[i];
      }
    };
  }
  return y;
}

Tensor Tape::scale(const Tensor& x, double c) {
  Tensor y = make(x.rows(), x.cols(), {x.idx_});
  Node& ny = node(y.idx_);
  const auto& vx = node(x.idx_).val;
  for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = c * vx[i];
  if (ny.requires_grad) {
    ny.back = [c](Tape& t, int self) {
      Node& s = t.node(self);
      Node& p = t.node(s.parents[0]);
      t.ensure_grad(s.parents[0]);
      for (std::size_t i = 0; i < s.grad.size(); ++i) p.grad[i] += c * s.grad[i];
    };
  }
  return y;
}

Tensor Tape::add_const(const Tensor& x, double c) {
  Tensor y = make(x.rows(), x.cols(), {x.idx_});
  Node& ny = node(y.idx_);
  const auto& vx = node(x.idx_).val;
  for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = vx[i] + c;
  if (ny.requires_grad) {
    ny.back = [](Tape& t, int self) {
      Node& s = t.node(self);
      Node& p = t.node(s.parents[0]);
      t.ensure_grad(s.parents[0]);
      for (std::size_t i = 0; i < s.grad.size(); ++i) p.grad[i] += s.grad[i];
    };
  }
  return y;
}

Tensor Tape::add_rowvec(const Tensor& x, const Tensor& b) {
  check(b.rows() == 1 && b.cols() == x.cols(), "add_rowvec: b must be [1 x cols]");
  Tensor y = make(x.rows(), x.cols(), {x.idx_, b.idx_});
  Node& ny = node(y.idx_);
  const auto &vx = node(x.idx_).val, &vb = node(b.idx_).val;
  const int m = x.rows(), n = x.cols();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      ny.val[static_cast<std::size_t>(i) * n + j] = vx[static_cast<std::size_t>(i) * n + j] + vb[static_cast<std::size_t>(j)];
  if (ny.requires_grad) {
    ny.back = [](Tape& t, int self) {
      Node& s = t.node(self);
      Node& px = t.node(s.parents[0]);
      Node& pb = t.node(s.parents[1]);
      if (px.requires_grad) {
        t.ensure_grad(s.parents[0]);
        for (std::size_t i = 0; i < s.grad.size(); ++i) px.grad[i] += s.grad[i];
      }
      if (pb.requires_grad) {
        t.ensure_grad(s.parents[1]);
        for (int i = 0; i < s.rows; ++i) {
          const double* g = s.grad.data() + static_cast<std::size_t>(i) * s.cols;
          for (int j = 0; j < s.cols; ++j) pb.grad[static_cast<std::size_t>(j)] += g[j];
        }
      }
    };
  }
  return y;
}

Tensor Tape::div_colvec(const Tensor& x, const Tensor& d) {
  check(d.cols() == 1 && d.rows() == x.rows(), "div_colvec: d must be [rows x 1]");
  const int m = x.rows(), n = x.cols();
  Tensor y = make(m, n, {x.idx_, d.idx_});
  Node& ny = node(y.idx_);
  const auto &vx = node(x.idx_).val, &vd = node(d.idx_).val;
  for (int i = 0; i < m; ++i) {
    const double inv = 1.0 / vd[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j)
      ny.val[static_cast<std::size_t>(i) * n + j] = vx[static_cast<std::size_t>(i) * n + j] * inv;
  }
  if (ny.requires_grad) {
    ny.back = [](Tape& t, int self) {
      Node& s = t.node(self);
      Node& px = t.node(s.parents[0]);
      Node& pd = t.node(s.parents[1]);
      const auto& vd2 = pd.val;
      if (px.requires_grad) {
        t.ensure_grad(s.parents[0]);
        for (int i = 0; i < s.rows; ++i) {
          const double inv = 1.0 / vd2[static_cast<std::size_t>(i)];
          for (int j = 0; j < s.cols; ++j)
            px.grad[static_cast<std::size_t>(i) * s.cols + j] += s.grad[static_cast<std::size_t>(i) * s.cols + j] * inv;
        }
      }
      if (pd.requires_grad) {
        t.ensure_grad(s.parents[1]);
        for (int i = 0; i < s.rows; ++i) {
          const double inv = 1.0 / vd2[static_cast<std::size_t>(i)];
          double acc = 0.0;
          for (int j = 0; j < s.cols; ++j)
            acc += s.grad[static_cast<std::size_t>(i) * s.cols + j] * s.val[static_cast<std::size_t>(i) * s.cols + j];
          pd.grad[static_cast<std::size_t>(i)] -= acc * inv;
        }
      }
    };
  }
  return y;
}

// ---- linear algebra ----

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  check(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor y = make(m, n, {a.idx_, b.idx_});
  gemm_acc(node(a.idx_).val.data(), node(b.idx_).val.data(), node(y.idx_).val.data(), m, k, n);
  Node& ny = node(y.idx_);
  if (ny.requires_grad) {
    ny.back = [m, k, n](Tape& t, int self) {
      Node& s = t.node(self);
      Node& pa = t.node(s.parents[0]);
      Node& pb = t.node(s.parents[1]);
      if (pa.requires_grad) {
        t.ensure_grad(s.parents[0]);
        // dA += G * B^T
        gemm_nt_acc(s.grad.data(), pb.val.data(), pa.grad.data(), m, n, k);
      }
      if (pb.requires_grad) {
        t.ensure_grad(s.parents[1]);
        // dB += A^T * G
        gemm_tn_acc(pa.val.data(), s.grad.data(), pb.grad.data(), m, k, n);
      }
    };
  }
  return y;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  check(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Tensor y = make(m, n, {a.idx_, b.idx_});
  gemm_nt_acc(node(a.idx_).val.data(), node(b.idx_).val.data(), node(y.idx_).val.data(), m, k, n);
  Node& ny = node(y.idx_);
  if (ny.requires_grad) {
    ny.back = [m, k, n](Tape& t, int self) {
      Node& s = t.node(self);
      Node& pa = t.node(s.parents[0]);
      Node& pb = t.node(s.parents[1]);
      if (pa.requires_grad) {
        t.ensure_grad(s.parents[0]);
        // dA += G * B  ([m x n] * [n x k])
        gemm_acc(s.grad.data(), pb.val.data(), pa.grad.data(), m, n, k);
      }
      if (pb.requires_grad) {
        t.ensure_grad(s.parents[1]);
        // dB += G^T * A  ([n x m] * [m x k])
        gemm_tn_acc(s.grad.data(), pa.val.data(), pb.grad.data(), m, n, k);
      }
    };
  }
  return y;
}

Tensor Tape::rowwise_matmul(const Tensor& q, const Tensor& w, int n_out) {
  const int m = q.rows(), n_in = q.cols();
  check(w.rows() == m && w.cols() == n_in * n_out, "rowwise_matmul: w must be [rows x n_in*n_out]");
  Tensor y = make(m, n_out, {q.idx_, w.idx_});
  Node& ny = node(y.idx_);
  const auto &vq = node(q.idx_).val, &vw = node(w.idx_).val;
  for (int b = 0; b < m; ++b) {
    const double* qb = vq.data() + static_cast<std::size_t>(b) * n_in;
    const double* wb = vw.data() + static_cast<std::size_t>(b) * n_in * n_out;
    double* yb = ny.val.data() + static_cast<std::size_t>(b) * n_out;
    for (int i = 0; i < n_in; ++i) {
      const double qi = qb[i];
      const double* wrow = wb + static_cast<std::size_t>(i) * n_out;
      for (int o = 0; o < n_out; ++o) yb[o] += qi * wrow[o];
    }
  }
  if (ny.requires_grad) {
    ny.back = [n_in, n_out](Tape& t, int self) {
      Node& s = t.node(self);
      Node& pq = t.node(s.parents[0]);
      Node& pw = t.node(s.parents[1]);
      const int m2 = s.rows;
      for (int b = 0; b < m2; ++b) {
        const double* g = s.grad.data() + static_cast<std::size_t>(b) * n_out;
        if (pq.requires_grad) {
          t.ensure_grad(s.parents[0]);
          double* dq = pq.grad.data() + static_cast<std::size_t>(b) * n_in;
          const double* wb = pw.val.data() + static_cast<std::size_t>(b) * n_in * n_out;
          for (int i = 0; i < n_in; ++i) {
            const double* wrow = wb + static_cast<std::size_t>(i) * n_out;
            double acc = 0.0;
            for (int o = 0; o < n_out; ++o) acc += g[o] * wrow[o];
            dq[i] += acc;
          }
        }
        if (pw.requires_grad) {
          t.ensure_grad(s.parents[1]);
          double* dw = pw.grad.data() + static_cast<std::size_t>(b) * n_in * n_out;
          const double* qb = pq.val.data() + static_cast<std::size_t>(b) * n_in;
          for (int i = 0; i < n_in; ++i) {
            const double qi = qb[i];
            double* drow = dw + static_cast<std::size_t>(i) * n_out;
            for (int o = 0; o < n_out; ++o) drow[o] += qi * g[o];
          }
        }
      }
    };
  }
  return y;
}

// ---- elementwise nonlinearities ----

namespace {
enum class Unary { Tanh, Sigmoid, Elu, Exp, Log, Abs, Square };
}

Tensor Tape::unary_op(const Tensor& x, int kind) {
  Tensor y = make(x.rows(), x.cols(), {x.idx_});
  Node& ny = node(y.idx_);
  const auto& vx = node(x.idx_).val;
  switch (static_cast<Unary>(kind)) {
    case Unary::Tanh:
      for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = std::tanh(vx[i]);
      break;
    case Unary::Sigmoid:
      for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = 1.0 / (1.0 + std::exp(-vx[i]));
      break;
    case Unary::Elu:
      for (std::size_t i = 0; i < ny.val.size(); ++i)
        ny.val[i] = vx[i] > 0.0 ? vx[i] : std::expm1(vx[i]);
      break;
    case Unary::Exp:
      for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = std::exp(vx[i]);
      break;
    case Unary::Log:
      for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = std::log(vx[i]);
      break;
    case Unary::Abs:
      for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = std::fabs(vx[i]);
      break;
    case Unary::Square:
      for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = vx[i] * vx[i];
      break;
  }
  if (ny.requires_grad) {
    ny.back = [kind](Tape& t, int self) {
      Node& s = t.node(self);
      Node& p = t.node(s.parents[0]);
      t.ensure_grad(s.parents[0]);
      const std::size_t n = s.grad.size();
      switch (static_cast<Unary>(kind)) {
        case Unary::Tanh:
          for (std::size_t i = 0; i < n; ++i) p.grad[i] += s.grad[i] * (1.0 - s.val[i] * s.val[i]);
          break;
        case Unary::Sigmoid:
          for (std::size_t i = 0; i < n; ++i) p.grad[i] += s.grad[i] * s.val[i] * (1.0 - s.val[i]);
          break;
        case Unary::Elu:
          for (std::size_t i = 0; i < n; ++i)
            p.grad[i] += s.grad[i] * (p.val[i] > 0.0 ? 1.0 : s.val[i] + 1.0);
          break;
        case Unary::Exp:
          for (std::size_t i = 0; i < n; ++i) p.grad[i] += s.grad[i] * s.val[i];
          break;
        case Unary::Log:
          for (std::size_t i = 0; i < n; ++i) p.grad[i] += s.grad[i] / p.val[i];
          break;
        case Unary::Abs:
          for (std::size_t i = 0; i < n; ++i)
            p.grad[i] += s.grad[i] * (p.val[i] > 0.0 ? 1.0 : (p.val[i] < 0.0 ? -1.0 : 0.0));
          break;
        case Unary::Square:
          for (std::size_t i = 0; i < n; ++i) p.grad[i] += s.grad[i] * 2.0 * p.val[i];
          break;
      }
    };
  }
  return y;
}

Tensor Tape::tanh(const Tensor& x) { return unary_op(x, static_cast<int>(Unary::Tanh)); }
Tensor Tape::sigmoid(const Tensor& x) { return unary_op(x, static_cast<int>(Unary::Sigmoid)); }
Tensor Tape::elu(const Tensor& x) { return unary_op(x, static_cast<int>(Unary::Elu)); }
Tensor Tape::exp(const Tensor& x) { return unary_op(x, static_cast<int>(Unary::Exp)); }
Tensor Tape::log(const Tensor& x) { return unary_op(x, static_cast<int>(Unary::Log)); }
Tensor Tape::abs(const Tensor& x) { return unary_op(x, static_cast<int>(Unary::Abs)); }
Tensor Tape::square(const Tensor& x) { return unary_op(x, static_cast<int>(Unary::Square)); }

Tensor Tape::clamp(const Tensor& x, double lo, double hi) {
  Tensor y = make(x.rows(), x.cols(), {x.idx_});
  Node& ny = node(y.idx_);
  const auto& vx = node(x.idx_).val;
  for (std::size_t i = 0; i < ny.val.size(); ++i)
    ny.val[i] = vx[i] < lo ? lo : (vx[i] > hi ? hi : vx[i]);
  if (ny.requires_grad) {
    ny.back = [lo, hi](Tape& t, int self) {
      Node& s = t.node(self);
      Node& p = t.node(s.parents[0]);
      t.ensure_grad(s.parents[0]);
      for (std::size_t i = 0; i < s.grad.size(); ++i)
        if (p.val[i] > lo && p.val[i] < hi) p.grad[i] += s.grad[i];
    };
  }
  return y;
}

Tensor Tape::clamp_min(const Tensor& x, double lo) {
  Tensor y = make(x.rows(), x.cols(), {x.idx_});
  Node& ny = node(y.idx_);
  const auto& vx = node(x.idx_).val;
  for (std::size_t i = 0; i < ny.val.size(); ++i) ny.val[i] = vx[i] < lo ? lo : vx[i];
  if (ny.requires_grad) {
    ny.back = [lo](Tape& t, int self) {
      Node& s = t.node(self);
      Node& p = t.node(s.parents[0]);
      t.ensure_grad(s.parents[0]);
      for (std::size_t i = 0; i < s.grad.size(); ++i)
        if (p.val[i] > lo) p.grad[i] += s.grad[i];
    };
  }
  return y;
}

// ---- reductions ----

Tensor Tape::sum_all(const Tensor& x) {
  Tensor y = make(1, 1, {x.idx_});
  Node& ny = node(y.idx_);
  double acc = 0.0;
  for (double v : node(x.idx_).val) acc += v;
  ny.val[0] = acc;
  if (ny.requires_grad) {
    ny.back = [](Tape& t, int self) {
      Node& s = t.node(self);
      Node& p = t.node(s.parents[0]);
      t.ensure_grad(s.parents[0]);
      const double g = s.grad[0];
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
    };
  }
  return y;
}

Tensor Tape::mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

Tensor Tape::row_sum(const Tensor& x) {
  const int m = x.rows(), n = x.cols();
  Tensor y = make(m, 1, {x.idx_});
  Node& ny = node(y.idx_);
  const auto& vx = node(x.idx_).val;
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* xi = vx.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) acc += xi[j];
    ny.val[static_cast<std::size_t>(i)] = acc;
  }
  if (ny.requires_grad) {
    ny.back = [n](Tape& t, int self) {
      Node& s = t.node(self);
      Node& p = t.node(s.parents[0]);
      t.ensure_grad(s.parents[0]);
      for (int i = 0; i < s.rows; ++i) {
        const double g = s.grad[static_cast<std::size_t>(i)];
        double* pg = p.grad.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) pg[j] += g;
      }
    };
  }
  return y;
}

// ---- composites ----

Tensor Tape::linear(const Tensor& x, Parameter& W, Parameter& b) {
  return add_rowvec(matmul_nt(x, leaf(W)), leaf(b));
}

Tensor Tape::avg_l1_norm(const Tensor& x, double eps) {
  Tensor m = scale(row_sum(abs(x)), 1.0 / static_cast<double>(x.cols()));
  return div_colvec(x, clamp_min(m, eps));
}

// ---- backward ----

void Tape::backward(const Tensor& loss) {
  if (!grad_enabled_) throw TapeError("backward: tape was built with gradients disabled");
  if (backward_called_) throw TapeError("backward: called twice on the same tape");
  if (loss.tape() != this) throw TapeError("backward: loss tensor from another tape");
  const Node& ln = node(loss.idx_);
  if (ln.rows != 1 || ln.cols != 1) throw ShapeError("backward: loss must be [1 x 1]");
  backward_called_ = true;
  if (!node(loss.idx_).requires_grad) return;
  ensure_grad(loss.idx_);
  node(loss.idx_).grad[0] = 1.0;
  for (int i = loss.idx_; i >= 0; --i) {
    Node& n = node(i);
    if (!n.grad_live || !n.back) continue;
    n.back(*this, i);
  }
  for (const auto& [param, idx] : param_leaves_) {
    Node& n = node(idx);
    if (!n.grad_live) continue;
    for (std::size_t i = 0; i < n.grad.size(); ++i) param->grad[i] += n.grad[i];
  }
}

bool Tape::reaches(const Tensor& root, const ParamGroup& group) const {
  if (root.tape() != this) throw TapeError("reaches: tensor from another tape");
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<int> stack{root.idx_};
  seen[static_cast<std::size_t>(root.idx_)] = 1;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const Node& n = node(i);
    if (n.param != nullptr && n.param->owner == &group) return true;
    if (n.stops_gradient) continue;  // gradient cannot pass through
    for (int p : n.parents)
      if (!seen[static_cast<std::size_t>(p)]) {
        seen[static_cast<std::size_t>(p)] = 1;
        stack.push_back(p);
      }
  }
  return false;
}

// ---- free composites ----

Tensor mse(Tape& t, const Tensor& a, const Tensor& b) { return t.mean_all(t.square(t.sub(a, b))); }

Tensor sum_squares(Tape& t, const Tensor& a, const Tensor& b) {
  return t.sum_all(t.square(t.sub(a, b)));
}

Tensor masked_mse(Tape& t, const Tensor& a, const Tensor& b, const Tensor& mask) {
  if (mask.cols() != 1 || mask.rows() != a.rows())
    throw ShapeError("masked_mse: mask must be [rows x 1]");
  double valid = 0.0;
  for (double v : mask.values()) valid += v;
  const Tensor per_row = t.row_sum(t.square(t.sub(a, b)));
  const Tensor total = t.sum_all(t.mul(per_row, mask));
  const double denom = std::max(valid, 1.0) * static_cast<double>(a.cols());
  return t.scale(total, 1.0 / denom);
}

Tensor masked_mean(Tape& t, const Tensor& x, const Tensor& mask) {
  if (x.cols() != 1 || mask.cols() != 1 || mask.rows() != x.rows())
    throw ShapeError("masked_mean: expects [rows x 1] column and mask");
  double valid = 0.0;
  for (double v : mask.values()) valid += v;
  return t.scale(t.sum_all(t.mul(x, mask)), 1.0 / std::max(valid, 1.0));
}

}  // namespace mmsa
