#include "mmsa/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mmsa {

Parameter& ParamGroup::add(const std::string& name, int rank, int rows, int cols) {
  if (rank != 1 && rank != 2) throw std::invalid_argument("Parameter rank must be 1 or 2");
  if (rank == 1 && rows != 1) throw std::invalid_argument("rank-1 Parameter must have rows == 1");
  if (find(name) != nullptr)
    throw std::invalid_argument("duplicate parameter name in group " + name_ + ": " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->rank = rank;
  p->rows = rows;
  p->cols = cols;
  p->value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  p->grad.assign(p->value.size(), 0.0);
  p->rms.assign(p->value.size(), 0.0);
  p->owner = this;
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParamGroup::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::size_t ParamGroup::n_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamGroup::zero_grad() {
  for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

bool ParamGroup::grads_are_zero() const {
  for (const auto& p : params_)
    for (double g : p->grad)
      if (g != 0.0) return false;
  return true;
}

std::vector<std::string> ParamGroup::params_with_nonzero_grad() const {
  std::vector<std::string> out;
  for (const auto& p : params_)
    for (double g : p->grad)
      if (g != 0.0) {
        out.push_back(p->name);
        break;
      }
  return out;
}

void copy_values(const ParamGroup& src, ParamGroup& dst) {
  if (src.params().size() != dst.params().size())
    throw std::invalid_argument("copy_values: group structure mismatch");
  for (std::size_t i = 0; i < src.params().size(); ++i) {
    const auto& s = *src.params()[i];
    auto& d = *dst.params()[i];
    if (s.rows != d.rows || s.cols != d.cols)
      throw std::invalid_argument("copy_values: shape mismatch for " + s.name);
    d.value = s.value;
  }
}

double grad_global_norm(const ParamGroup& group) {
  double sq = 0.0;
  for (const auto& p : group.params())
    for (double g : p->grad) sq += g * g;
  return std::sqrt(sq);
}

double rmsprop_step(ParamGroup& group, const RmsPropConfig& cfg) {
  const double norm = grad_global_norm(group);
  double scale = 1.0;
  if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
  for (const auto& p : group.params()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i] * scale;
      p->rms[i] = cfg.alpha * p->rms[i] + (1.0 - cfg.alpha) * g * g;
      p->value[i] -= cfg.lr * g / std::sqrt(p->rms[i] + cfg.eps);
    }
  }
  return norm;
}

// ---- checkpoint io ----

namespace {

constexpr char kMagic[8] = {'M', 'M', 'S', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw CheckpointError("checkpoint: truncated stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw CheckpointError("checkpoint: truncated stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, std::span<const ParamGroup* const> groups) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("checkpoint: cannot open for write: " + path);
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(groups.size()));
  for (const ParamGroup* g : groups) {
    put_u32(os, static_cast<std::uint32_t>(g->name().size()));
    os.write(g->name().data(), static_cast<std::streamsize>(g->name().size()));
    put_u32(os, static_cast<std::uint32_t>(g->params().size()));
    for (const auto& p : g->params()) {
      put_u32(os, static_cast<std::uint32_t>(p->rank));
      if (p->rank == 2) put_u64(os, static_cast<std::uint64_t>(p->rows));
      put_u64(os, static_cast<std::uint64_t>(p->cols));
      for (double v : p->value) put_f64(os, v);
    }
  }
  if (!os) throw CheckpointError("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, std::span<ParamGroup* const> groups) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open for read: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw CheckpointError("checkpoint: bad magic in " + path);
  const std::uint32_t version = get_u32(is);
  if (version != kVersion) throw CheckpointError("checkpoint: unsupported version");
  const std::uint32_t n_groups = get_u32(is);
  if (n_groups != groups.size()) throw CheckpointError("checkpoint: group count mismatch");
  for (ParamGroup* g : groups) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is || name != g->name())
      throw CheckpointError("checkpoint: group name mismatch: expected " + g->name());
    const std::uint32_t n_tensors = get_u32(is);
    if (n_tensors != g->params().size())
      throw CheckpointError("checkpoint: tensor count mismatch in group " + g->name());
    for (const auto& p : g->params()) {
      const std::uint32_t rank = get_u32(is);
      if (static_cast<int>(rank) != p->rank)
        throw CheckpointError("checkpoint: rank mismatch for " + p->name);
      std::uint64_t rows = 1, cols = 0;
      if (rank == 2) rows = get_u64(is);
      cols = get_u64(is);
      if (rows != static_cast<std::uint64_t>(p->rows) || cols != static_cast<std::uint64_t>(p->cols))
        throw CheckpointError("checkpoint: shape mismatch for " + p->name);
      for (auto& v : p->value) v = get_f64(is);
    }
  }
}

// ---- layer builders ----

Linear make_linear(ParamGroup& g, const std::string& name, int out, int in, Rng& rng) {
  Linear l;
  l.W = &g.add(name + ".W", 2, out, in);
  l.b = &g.add(name + ".b", 1, 1, out);
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  for (auto& v : l.W->value) v = rng.uniform(-bound, bound);
  return l;
}

Linear make_linear_orthogonal(ParamGroup& g, const std::string& name, int out, int in, Rng& rng) {
  Linear l;
  l.W = &g.add(name + ".W", 2, out, in);
  l.b = &g.add(name + ".b", 1, 1, out);
  // Gram-Schmidt over rows (out <= in) or columns (out > in) of a Gaussian
  // draw; degenerate directions are re-drawn deterministically.
  const bool by_rows = out <= in;
  const int n_vecs = by_rows ? out : in;
  const int dim = by_rows ? in : out;
  std::vector<std::vector<double>> basis;
  basis.reserve(static_cast<std::size_t>(n_vecs));
  while (static_cast<int>(basis.size()) < n_vecs) {
    std::vector<double> v = rng.normal_vector(dim);
    for (const auto& u : basis) {
      double dot = 0.0;
      for (int i = 0; i < dim; ++i) dot += v[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(i)];
      for (int i = 0; i < dim; ++i) v[static_cast<std::size_t>(i)] -= dot * u[static_cast<std::size_t>(i)];
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm < 1e-8) continue;
    for (double& x : v) x /= nrm;
    basis.push_back(std::move(v));
  }
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < in; ++c)
      l.W->value[static_cast<std::size_t>(r) * in + c] =
          by_rows ? basis[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                  : basis[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)];
  return l;
}

Tensor apply(Tape& t, const Linear& l, const Tensor& x) { return t.linear(x, *l.W, *l.b); }

GruCell make_gru(ParamGroup& g, const std::string& name, int hidden, int in, Rng& rng) {
  GruCell c;
  c.hidden = hidden;
  c.wr = make_linear(g, name + ".wr", hidden, in, rng);
  c.wz = make_linear(g, name + ".wz", hidden, in, rng);
  c.wn = make_linear(g, name + ".wn", hidden, in, rng);
  Linear ur = make_linear_orthogonal(g, name + ".ur", hidden, hidden, rng);
  Linear uz = make_linear_orthogonal(g, name + ".uz", hidden, hidden, rng);
  Linear un = make_linear_orthogonal(g, name + ".un", hidden, hidden, rng);
  c.ur = ur.W;
  c.uz = uz.W;
  c.un = un.W;
  return c;
}

Tensor gru_step(Tape& t, const GruCell& c, const Tensor& x, const Tensor& h_prev) {
  if (h_prev.cols() != c.hidden)
    throw ShapeError("gru_step: hidden size mismatch, got " + std::to_string(h_prev.cols()) +
                     " want " + std::to_string(c.hidden));
  Tensor r = t.sigmoid(t.add(apply(t, c.wr, x), t.matmul_nt(h_prev, t.leaf(*c.ur))));
  Tensor zg = t.sigmoid(t.add(apply(t, c.wz, x), t.matmul_nt(h_prev, t.leaf(*c.uz))));
  Tensor n = t.tanh(t.add(apply(t, c.wn, x), t.mul(r, t.matmul_nt(h_prev, t.leaf(*c.un)))));
  Tensor one_minus_zg = t.add_const(t.scale(zg, -1.0), 1.0);
  return t.add(t.mul(one_minus_zg, n), t.mul(zg, h_prev));
}

}  // namespace mmsa
