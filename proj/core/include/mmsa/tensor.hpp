#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmsa {

struct Parameter;
class ParamGroup;

struct TapeError : std::logic_error {
  using std::logic_error::logic_error;
};
struct ShapeError : std::logic_error {
  using std::logic_error::logic_error;
};

class Tape;

// Lightweight handle to a node on a Tape. All tensors are dense row-major
// f64 matrices; a vector is [1 x n] and a batch of vectors is [batch x n].
class Tensor {
 public:
  Tensor() = default;
  bool defined() const { return tape_ != nullptr; }
  int rows() const;
  int cols() const;
  int size() const { return rows() * cols(); }
  const std::vector<double>& values() const;
  // Scalar convenience accessor; requires a [1 x 1] tensor.
  double value() const;
  double value_at(int r, int c) const;
  // Gradient buffer; empty if backward never reached this node.
  const std::vector<double>& grad() const;
  Tape* tape() const { return tape_; }
  int index() const { return idx_; }

 private:
  friend class Tape;
  Tensor(Tape* t, int i) : tape_(t), idx_(i) {}
  Tape* tape_ = nullptr;
  int idx_ = -1;
};

// Reverse-mode autodiff tape. Nodes are created in topological order by the
// op methods below; backward() runs one reverse sweep and then accumulates
// leaf gradients into their bound Parameters. A tape constructed with
// grad_enabled=false records values only (used for target-network and
// imagination passes whose outputs are consumed as data).
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // ---- leaves ----
  Tensor constant(int rows, int cols, std::vector<double> values);
  Tensor constant_scalar(double v);
  Tensor zeros(int rows, int cols);
  // Differentiable leaf bound to a Parameter; memoized, so repeated calls for
  // the same Parameter return the same node. While the parameter's owning
  // group is marked detached, a constant copy of the value is recorded
  // instead (memoized separately): gradients then flow through a
  // subnetwork's inputs without ever reaching its weights.
  Tensor leaf(Parameter& p);
  void set_detached(const ParamGroup* g, bool on);
  bool is_detached(const ParamGroup* g) const;

  // ---- structure ----
  Tensor concat_cols(const std::vector<Tensor>& xs);
  Tensor slice_cols(const Tensor& x, int col0, int len);
  Tensor stop_gradient(const Tensor& x);

  // ---- arithmetic ----
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, double c);
  Tensor add_const(const Tensor& x, double c);
  // x [m x n] + b [1 x n], broadcast over rows.
  Tensor add_rowvec(const Tensor& x, const Tensor& b);
  // x [m x n] / d [m x 1], broadcast over columns.
  Tensor div_colvec(const Tensor& x, const Tensor& d);

  // ---- linear algebra ----
  // a [m x k] * b [k x n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  // a [m x k] * b^T with b [n x k]; the natural layout for Linear weights.
  Tensor matmul_nt(const Tensor& a, const Tensor& b);
  // Per-row block matvec: q [B x n_in], w [B x n_in*n_out] holding a private
  // [n_in x n_out] matrix per row; result [B x n_out]. Used by the
  // hypernetwork mixer where each batch row has its own generated weights.
  Tensor rowwise_matmul(const Tensor& q, const Tensor& w, int n_out);

  // ---- elementwise nonlinearities ----
  Tensor tanh(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor elu(const Tensor& x);
  Tensor exp(const Tensor& x);
  Tensor log(const Tensor& x);
  Tensor abs(const Tensor& x);
  Tensor square(const Tensor& x);
  Tensor clamp(const Tensor& x, double lo, double hi);
  Tensor clamp_min(const Tensor& x, double lo);

  // ---- reductions ----
  Tensor sum_all(const Tensor& x);
  Tensor mean_all(const Tensor& x);
  Tensor row_sum(const Tensor& x);  // [m x n] -> [m x 1]

  // ---- composites ----
  // x [m x in] * W^T + b with W [out x in], b [1 x out].
  Tensor linear(const Tensor& x, Parameter& W, Parameter& b);
  // Row-wise z / max(mean(|z|), eps); the scale-invariant normalizer.
  Tensor avg_l1_norm(const Tensor& x, double eps = 1e-8);

  // Runs the reverse sweep from a [1 x 1] loss node, then accumulates leaf
  // gradients into the bound Parameters' grad buffers. May be called once per
  // tape; a second call is a usage error.
  void backward(const Tensor& loss);
  bool backward_called() const { return backward_called_; }

  // True when a gradient path (ignoring stop_gradient edges) connects root to
  // any Parameter of the given group. Used for structural decoupling audits.
  bool reaches(const Tensor& root, const ParamGroup& group) const;

  // Internal access for Tensor handles and tests.
  const std::vector<double>& node_values(int idx) const { return nodes_[static_cast<std::size_t>(idx)].val; }
  const std::vector<double>& node_grad(int idx) const;
  int node_rows(const Tensor& t) const;
  int node_cols(const Tensor& t) const;

 private:
  struct Node {
    int rows = 0, cols = 0;
    std::vector<double> val;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    bool grad_live = false;
    bool stops_gradient = false;
    Parameter* param = nullptr;
    std::vector<int> parents;
    std::function<void(Tape&, int)> back;  // (tape, own index)
  };

  Node& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  Tensor make(int rows, int cols, std::vector<int> parents, bool stops = false);
  void ensure_grad(int i);
  Tensor unary_op(const Tensor& x, int kind);

  std::vector<Node> nodes_;
  std::vector<std::pair<Parameter*, int>> param_leaves_;
  std::vector<std::pair<Parameter*, int>> detached_leaves_;
  std::vector<const ParamGroup*> detached_groups_;
  bool grad_enabled_ = true;
  bool backward_called_ = false;

  friend class Tensor;
};

// RAII marker: the group's parameters read as constants on this tape while
// the scope is alive.
class DetachScope {
 public:
  DetachScope(Tape& t, const ParamGroup* g) : t_(t), g_(g) {
    t_.set_detached(g_, true);
  }
  ~DetachScope() { t_.set_detached(g_, false); }
  DetachScope(const DetachScope&) = delete;
  DetachScope& operator=(const DetachScope&) = delete;

 private:
  Tape& t_;
  const ParamGroup* g_;
};

// ---- free composites ----

// Mean over all elements of the squared difference.
Tensor mse(Tape& t, const Tensor& a, const Tensor& b);
// Sum over all elements of the squared difference (squared L2 distance for
// single-row tensors).
Tensor sum_squares(Tape& t, const Tensor& a, const Tensor& b);
// Row-masked mean squared error: mask is [m x 1] with 0/1 entries; the mean
// runs over masked-in elements only (columns of masked-in rows).
Tensor masked_mse(Tape& t, const Tensor& a, const Tensor& b, const Tensor& mask);
// Mean of a [m x 1] column over masked-in rows (mask [m x 1] of 0/1 data).
Tensor masked_mean(Tape& t, const Tensor& x, const Tensor& mask);

}  // namespace mmsa
