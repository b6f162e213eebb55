#include "graphcliff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>
#include <unordered_set>

namespace graphcliff {

using detail::Node;

namespace {

[[noreturn]] void fail(const std::string& op, const std::string& what) {
  throw Error(op + ": " + what);
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> value,
                                bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank2(const std::string& op, const Tensor& a) {
  if (a.rank() != 2) fail(op, "expected rank-2 tensor, got " + shape_str(a.shape()));
}

// C += A(m x k) * B(k x n); k unrolled 4-wide to cut C store traffic
void mm_nn(const double* __restrict a, const double* __restrict b, double* __restrict c,
           std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    std::size_t t = 0;
    for (; t + 4 <= k; t += 4) {
      const double a0 = ai[t], a1 = ai[t + 1], a2 = ai[t + 2], a3 = ai[t + 3];
      const double* b0 = b + t * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j)
        ci[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; t < k; ++t) {
      const double av = ai[t];
      const double* bt = b + t * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

// C += A(m x n) * B(k x n)^T -> (m x k); rows of both operands are contiguous
void mm_nt(const double* __restrict a, const double* __restrict b, double* __restrict c,
           std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    std::size_t t = 0;
    for (; t + 4 <= k; t += 4) {
      const double* b0 = b + t * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double av = ai[j];
        s0 += av * b0[j];
        s1 += av * b1[j];
        s2 += av * b2[j];
        s3 += av * b3[j];
      }
      ci[t] += s0;
      ci[t + 1] += s1;
      ci[t + 2] += s2;
      ci[t + 3] += s3;
    }
    for (; t < k; ++t) {
      const double* bt = b + t * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += ai[j] * bt[j];
      ci[t] += s;
    }
  }
}

// C += A(m x k)^T * B(m x n) -> (k x n); m unrolled 4-wide
void mm_tn(const double* __restrict a, const double* __restrict b, double* __restrict c,
           std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    const double* a2 = a1 + k;
    const double* a3 = a2 + k;
    const double* b0 = b + i * n;
    const double* b1 = b0 + n;
    const double* b2 = b1 + n;
    const double* b3 = b2 + n;
    for (std::size_t t = 0; t < k; ++t) {
      const double v0 = a0[t], v1 = a1[t], v2 = a2[t], v3 = a3[t];
      double* ct = c + t * n;
      for (std::size_t j = 0; j < n; ++j)
        ct[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
    }
  }
  for (; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = ai[t];
      double* ct = c + t * n;
      for (std::size_t j = 0; j < n; ++j) ct[j] += av * bi[j];
    }
  }
}

// Unary elementwise op with pointwise derivative computed from (x, y).
template <typename Fwd, typename Dfn>
Tensor unary_ew(const std::string&, const Tensor& a, Fwd fwd, Dfn dfn) {
  auto an = a.node();
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(an->value[i]);
  auto n = make_node(an->shape, std::move(out), an->requires_grad);
  if (n->requires_grad) {
    n->parents = {an};
    n->backward_fn = [an, dfn](Node& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.value.size(); ++i)
        an->grad[i] += self.grad[i] * dfn(an->value[i], self.value[i]);
    };
  }
  return Tensor(n);
}

}  // namespace

// ---- SparseMatrix ----------------------------------------------------------

SparseMatrix SparseMatrix::from_triplets(
    std::size_t n, std::vector<std::tuple<std::size_t, std::size_t, double>> triplets) {
  std::sort(triplets.begin(), triplets.end());
  SparseMatrix m;
  m.n = n;
  m.row_ptr.assign(n + 1, 0);
  for (auto& [r, c, v] : triplets) {
    if (r >= n || c >= n) throw Error("SparseMatrix: index out of range");
    (void)v;
    m.row_ptr[r + 1]++;
  }
  for (std::size_t i = 0; i < n; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
  m.col_idx.reserve(triplets.size());
  m.vals.reserve(triplets.size());
  for (auto& [r, c, v] : triplets) {
    (void)r;
    m.col_idx.push_back(c);
    m.vals.push_back(v);
  }
  return m;
}

bool SparseMatrix::is_symmetric(double tol) const {
  auto d = dense();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(d[i][j] - d[j][i]) > tol) return false;
  return true;
}

std::vector<std::vector<double>> SparseMatrix::dense() const {
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d[r][col_idx[k]] += vals[k];
  return d;
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_size(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = shape_size(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  if (shape_size(shape) != data.size()) throw Error("Tensor: data does not match shape");
  return Tensor(make_node(std::move(shape), std::move(data), false));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(make_node({}, {v}, requires_grad));
}

Tensor Tensor::param(Shape shape, std::vector<double> data) {
  if (shape_size(shape) != data.size()) throw Error("Tensor: data does not match shape");
  return Tensor(make_node(std::move(shape), std::move(data), true));
}

const Shape& Tensor::shape() const {
  if (!node_) throw Error("Tensor: undefined");
  return node_->shape;
}

std::size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw Error("Tensor::rows: not rank-2");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw Error("Tensor::cols: not rank-2");
  return shape()[1];
}

const std::vector<double>& Tensor::values() const {
  if (!node_) throw Error("Tensor: undefined");
  return node_->value;
}

std::vector<double>& Tensor::mutable_values() {
  if (!node_) throw Error("Tensor: undefined");
  return node_->value;
}

double Tensor::scalar_value() const {
  if (rank() != 0) throw Error("Tensor::scalar_value: not a scalar");
  return values()[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const std::vector<double>& Tensor::grad() const {
  if (!node_) throw Error("Tensor: undefined");
  if (node_->grad.size() != node_->value.size())
    throw Error("Tensor::grad: no gradient accumulated (run backward first)");
  return node_->grad;
}

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size();
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detached_copy(bool requires_grad) const {
  if (!node_) throw Error("Tensor: undefined");
  return Tensor(make_node(node_->shape, node_->value, requires_grad));
}

// ---- binary / structural ops ----------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    fail("matmul", "inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  auto an = a.node(), bn = b.node();
  std::vector<double> out(m * n, 0.0);
  mm_nn(an->value.data(), bn->value.data(), out.data(), m, k, n);
  auto node = make_node({m, n}, std::move(out), an->requires_grad || bn->requires_grad);
  if (node->requires_grad) {
    node->parents = {an, bn};
    node->backward_fn = [an, bn, m, k, n](Node& self) {
      const double* g = self.grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        // dA = G * B^T
        mm_nt(g, bn->value.data(), an->grad.data(), m, n, k);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // dB = A^T * G
        mm_tn(an->value.data(), g, bn->grad.data(), m, k, n);
      }
    };
  }
  return Tensor(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto an = a.node(), bn = b.node();
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] + bn->value[i];
  auto n = make_node(an->shape, std::move(out), an->requires_grad || bn->requires_grad);
  if (n->requires_grad) {
    n->parents = {an, bn};
    n->backward_fn = [an, bn](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i) an->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i) bn->grad[i] += self.grad[i];
      }
    };
  }
  return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto an = a.node(), bn = b.node();
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] - bn->value[i];
  auto n = make_node(an->shape, std::move(out), an->requires_grad || bn->requires_grad);
  if (n->requires_grad) {
    n->parents = {an, bn};
    n->backward_fn = [an, bn](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i) an->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i) bn->grad[i] -= self.grad[i];
      }
    };
  }
  return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto an = a.node(), bn = b.node();
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * bn->value[i];
  auto n = make_node(an->shape, std::move(out), an->requires_grad || bn->requires_grad);
  if (n->requires_grad) {
    n->parents = {an, bn};
    n->backward_fn = [an, bn](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i)
          an->grad[i] += self.grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < self.value.size(); ++i)
          bn->grad[i] += self.grad[i] * an->value[i];
      }
    };
  }
  return Tensor(n);
}

Tensor smul(const Tensor& a, double c) {
  auto an = a.node();
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * c;
  auto n = make_node(an->shape, std::move(out), an->requires_grad);
  if (n->requires_grad) {
    n->parents = {an};
    n->backward_fn = [an, c](Node& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.value.size(); ++i) an->grad[i] += self.grad[i] * c;
    };
  }
  return Tensor(n);
}

Tensor scale(const Tensor& a, const Tensor& s) {
  if (s.rank() != 0) fail("scale", "scale factor must be rank-0");
  auto an = a.node(), sn = s.node();
  const double c = sn->value[0];
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * c;
  auto n = make_node(an->shape, std::move(out), an->requires_grad || sn->requires_grad);
  if (n->requires_grad) {
    n->parents = {an, sn};
    n->backward_fn = [an, sn](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        const double c2 = sn->value[0];
        for (std::size_t i = 0; i < self.value.size(); ++i) an->grad[i] += self.grad[i] * c2;
      }
      if (sn->requires_grad) {
        sn->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < self.value.size(); ++i) acc += self.grad[i] * an->value[i];
        sn->grad[0] += acc;
      }
    };
  }
  return Tensor(n);
}

Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
  require_rank2("add_rowvec", a);
  if (bias.rank() != 1 || bias.shape()[0] != a.cols())
    fail("add_rowvec", "bias shape " + shape_str(bias.shape()) + " does not match cols of " +
                           shape_str(a.shape()));
  auto an = a.node(), bn = bias.node();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = an->value[i * n + j] + bn->value[j];
  auto node = make_node({m, n}, std::move(out), an->requires_grad || bn->requires_grad);
  if (node->requires_grad) {
    node->parents = {an, bn};
    node->backward_fn = [an, bn, m, n](Node& self) {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m * n; ++i) an->grad[i] += self.grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) bn->grad[j] += self.grad[i * n + j];
      }
    };
  }
  return Tensor(node);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail("concat_cols", "no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require_rank2("concat_cols", p);
    if (p.rows() != m) fail("concat_cols", "row counts differ");
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    const auto& v = p.values();
    for (std::size_t i = 0; i < m; ++i)
      std::copy(v.begin() + i * c, v.begin() + (i + 1) * c, out.begin() + i * total + off);
    off += c;
  }
  auto node = make_node({m, total}, std::move(out), rg);
  if (rg) {
    std::vector<std::shared_ptr<Node>> ps;
    for (const auto& p : parts) ps.push_back(p.node());
    node->parents = ps;
    node->backward_fn = [ps, m, total](Node& self) {
      std::size_t start = 0;
      for (auto& p : ps) {
        const std::size_t c = p->shape[1];
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < c; ++j)
              p->grad[i * c + j] += self.grad[i * total + start + j];
        }
        start += c;
      }
    };
  }
  return Tensor(node);
}

std::vector<Tensor> split_cols(const Tensor& a, const std::vector<std::size_t>& sizes) {
  require_rank2("split_cols", a);
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total != a.cols()) fail("split_cols", "split sizes do not sum to the column count");
  auto an = a.node();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<Tensor> outs;
  std::size_t off = 0;
  for (auto c : sizes) {
    std::vector<double> v(m * c);
    for (std::size_t i = 0; i < m; ++i)
      std::copy(an->value.begin() + i * n + off, an->value.begin() + i * n + off + c,
                v.begin() + i * c);
    auto node = make_node({m, c}, std::move(v), an->requires_grad);
    if (node->requires_grad) {
      const std::size_t start = off;
      node->parents = {an};
      node->backward_fn = [an, m, n, c, start](Node& self) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j)
            an->grad[i * n + start + j] += self.grad[i * c + j];
      };
    }
    outs.emplace_back(node);
    off += c;
  }
  return outs;
}

Tensor gather_rows(const Tensor& a, std::vector<std::size_t> idx) {
  require_rank2("gather_rows", a);
  auto an = a.node();
  const std::size_t n = a.cols(), rows = a.rows();
  for (auto i : idx)
    if (i >= rows) fail("gather_rows", "row index out of range");
  std::vector<double> out(idx.size() * n);
  for (std::size_t m = 0; m < idx.size(); ++m)
    std::copy(an->value.begin() + idx[m] * n, an->value.begin() + (idx[m] + 1) * n,
              out.begin() + m * n);
  auto node = make_node({idx.size(), n}, std::move(out), an->requires_grad);
  if (node->requires_grad) {
    node->parents = {an};
    auto ix = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    node->backward_fn = [an, ix, n](Node& self) {
      an->ensure_grad();
      for (std::size_t m = 0; m < ix->size(); ++m) {
        double* dst = an->grad.data() + (*ix)[m] * n;
        const double* src = self.grad.data() + m * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
      }
    };
  }
  return Tensor(node);
}

Tensor scatter_add_rows(const Tensor& rows, std::vector<std::size_t> idx, std::size_t n_rows) {
  require_rank2("scatter_add_rows", rows);
  if (idx.size() != rows.rows()) fail("scatter_add_rows", "index count differs from row count");
  for (auto i : idx)
    if (i >= n_rows) fail("scatter_add_rows", "target index out of range");
  auto rn = rows.node();
  const std::size_t n = rows.cols();
  std::vector<double> out(n_rows * n, 0.0);
  for (std::size_t m = 0; m < idx.size(); ++m) {
    double* dst = out.data() + idx[m] * n;
    const double* src = rn->value.data() + m * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
  }
  auto node = make_node({n_rows, n}, std::move(out), rn->requires_grad);
  if (node->requires_grad) {
    node->parents = {rn};
    auto ix = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    node->backward_fn = [rn, ix, n](Node& self) {
      rn->ensure_grad();
      for (std::size_t m = 0; m < ix->size(); ++m) {
        double* dst = rn->grad.data() + m * n;
        const double* src = self.grad.data() + (*ix)[m] * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
      }
    };
  }
  return Tensor(node);
}

Tensor segment_max_rows(const Tensor& a, std::vector<std::size_t> seg, std::size_t n_seg) {
  require_rank2("segment_max_rows", a);
  if (seg.size() != a.rows()) fail("segment_max_rows", "segment id count differs from rows");
  auto an = a.node();
  const std::size_t n = a.cols();
  std::vector<double> out(n_seg * n, 0.0);
  // argmax per (segment, column); ties keep the earliest row
  auto arg = std::make_shared<std::vector<std::size_t>>(n_seg * n, SIZE_MAX);
  for (std::size_t r = 0; r < seg.size(); ++r) {
    const std::size_t g = seg[r];
    if (g >= n_seg) fail("segment_max_rows", "segment id out of range");
    for (std::size_t j = 0; j < n; ++j) {
      const double v = an->value[r * n + j];
      auto& slot = (*arg)[g * n + j];
      if (slot == SIZE_MAX || v > out[g * n + j]) {
        out[g * n + j] = v;
        slot = r;
      }
    }
  }
  for (std::size_t g = 0; g < n_seg; ++g)
    if ((*arg)[g * n] == SIZE_MAX && n > 0) fail("segment_max_rows", "empty segment");
  auto node = make_node({n_seg, n}, std::move(out), an->requires_grad);
  if (node->requires_grad) {
    node->parents = {an};
    node->backward_fn = [an, arg, n](Node& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        const std::size_t r = (*arg)[i];
        an->grad[r * n + (i % n)] += self.grad[i];
      }
    };
  }
  return Tensor(node);
}

Tensor sum_all(const Tensor& a) {
  auto an = a.node();
  double s = 0.0;
  for (double v : an->value) s += v;
  auto node = make_node({}, {s}, an->requires_grad);
  if (node->requires_grad) {
    node->parents = {an};
    node->backward_fn = [an](Node& self) {
      an->ensure_grad();
      for (auto& g : an->grad) g += self.grad[0];
    };
  }
  return Tensor(node);
}

Tensor mean_all(const Tensor& a) {
  auto an = a.node();
  if (an->value.empty()) fail("mean_all", "empty tensor");
  double s = 0.0;
  for (double v : an->value) s += v;
  const double inv = 1.0 / static_cast<double>(an->value.size());
  auto node = make_node({}, {s * inv}, an->requires_grad);
  if (node->requires_grad) {
    node->parents = {an};
    node->backward_fn = [an, inv](Node& self) {
      an->ensure_grad();
      for (auto& g : an->grad) g += self.grad[0] * inv;
    };
  }
  return Tensor(node);
}

Tensor row_sum(const Tensor& a) {
  require_rank2("row_sum", a);
  auto an = a.node();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += an->value[i * n + j];
  auto node = make_node({m}, std::move(out), an->requires_grad);
  if (node->requires_grad) {
    node->parents = {an};
    node->backward_fn = [an, m, n](Node& self) {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor row_mean(const Tensor& a) {
  require_rank2("row_mean", a);
  if (a.cols() == 0) fail("row_mean", "zero columns");
  return smul(row_sum(a), 1.0 / static_cast<double>(a.cols()));
}

Tensor relu(const Tensor& a) {
  return unary_ew("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary_ew("tanh", a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_ew("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank2("layer_norm", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (n == 0) fail("layer_norm", "zero columns");
  if (gamma.rank() != 1 || gamma.shape()[0] != n || beta.rank() != 1 || beta.shape()[0] != n)
    fail("layer_norm", "affine parameter shape mismatch");
  auto an = a.node(), gn = gamma.node(), bn = beta.node();
  std::vector<double> out(m * n);
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = an->value.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (x[j] - mu) * is;
      (*xhat)[i * n + j] = xh;
      out[i * n + j] = xh * gn->value[j] + bn->value[j];
    }
  }
  const bool rg = an->requires_grad || gn->requires_grad || bn->requires_grad;
  auto node = make_node({m, n}, std::move(out), rg);
  if (rg) {
    node->parents = {an, gn, bn};
    node->backward_fn = [an, gn, bn, xhat, inv_std, m, n](Node& self) {
      if (gn->requires_grad) gn->ensure_grad();
      if (bn->requires_grad) bn->ensure_grad();
      if (an->requires_grad) an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        const double* dy = self.grad.data() + i * n;
        const double* xh = xhat->data() + i * n;
        if (gn->requires_grad || bn->requires_grad) {
          for (std::size_t j = 0; j < n; ++j) {
            if (gn->requires_grad) gn->grad[j] += dy[j] * xh[j];
            if (bn->requires_grad) bn->grad[j] += dy[j];
          }
        }
        if (an->requires_grad) {
          // dx = inv_std * (g - mean(g) - xhat * mean(g*xhat)), g = dy*gamma
          double mg = 0.0, mgx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double g = dy[j] * gn->value[j];
            mg += g;
            mgx += g * xh[j];
          }
          mg /= static_cast<double>(n);
          mgx /= static_cast<double>(n);
          double* dx = an->grad.data() + i * n;
          const double is = (*inv_std)[i];
          for (std::size_t j = 0; j < n; ++j) {
            const double g = dy[j] * gn->value[j];
            dx[j] += is * (g - mg - xh[j] * mgx);
          }
        }
      }
    };
  }
  return Tensor(node);
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_shape("mse", pred, target);
  auto pn = pred.node(), tn = target.node();
  const std::size_t n = pn->value.size();
  if (n == 0) fail("mse", "empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pn->value[i] - tn->value[i];
    s += d * d;
  }
  const double inv = 1.0 / static_cast<double>(n);
  auto node = make_node({}, {s * inv}, pn->requires_grad || tn->requires_grad);
  if (node->requires_grad) {
    node->parents = {pn, tn};
    node->backward_fn = [pn, tn, inv](Node& self) {
      const double g0 = self.grad[0];
      if (pn->requires_grad) {
        pn->ensure_grad();
        for (std::size_t i = 0; i < pn->value.size(); ++i)
          pn->grad[i] += g0 * 2.0 * inv * (pn->value[i] - tn->value[i]);
      }
      if (tn->requires_grad) {
        tn->ensure_grad();
        for (std::size_t i = 0; i < tn->value.size(); ++i)
          tn->grad[i] -= g0 * 2.0 * inv * (pn->value[i] - tn->value[i]);
      }
    };
  }
  return Tensor(node);
}

Tensor spmm_sym(std::shared_ptr<const SparseMatrix> a, const Tensor& x) {
  require_rank2("spmm_sym", x);
  if (!a) fail("spmm_sym", "null operator");
  if (x.rows() != a->n) fail("spmm_sym", "row count does not match operator size");
  auto xn = x.node();
  const std::size_t n = a->n, d = x.cols();
  std::vector<double> out(n * d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double* dst = out.data() + r * d;
    for (std::size_t k = a->row_ptr[r]; k < a->row_ptr[r + 1]; ++k) {
      const double w = a->vals[k];
      const double* src = xn->value.data() + a->col_idx[k] * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += w * src[j];
    }
  }
  auto node = make_node({n, d}, std::move(out), xn->requires_grad);
  if (node->requires_grad) {
    node->parents = {xn};
    node->backward_fn = [xn, a, n, d](Node& self) {
      xn->ensure_grad();
      // A symmetric: dX += A^T dY = A dY
      for (std::size_t r = 0; r < n; ++r) {
        const double* g = self.grad.data() + r * d;
        for (std::size_t k = a->row_ptr[r]; k < a->row_ptr[r + 1]; ++k) {
          const double w = a->vals[k];
          double* dst = xn->grad.data() + a->col_idx[k] * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += w * g[j];
        }
      }
    };
  }
  return Tensor(node);
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward: undefined tensor");
  if (loss.rank() != 0) throw Error("backward: loss must be a scalar");
  auto root = loss.node();
  if (root->consumed) throw Error("backward: tape already consumed for this root");
  root->consumed = true;
  if (!root->requires_grad) return;

  // iterative DFS post-order = topological order
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.push_back({root.get(), 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() == node->value.size())
      node->backward_fn(*node);
  }
}

// ---- grad_check -------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double step, double rtol) {
  if (step <= 0.0) throw Error("grad_check: step must be positive");
  Tensor x0 = x.detached_copy(true);
  Tensor y = f(x0);
  if (y.rank() != 0) throw Error("grad_check: f must be scalar-valued");
  if (!std::isfinite(y.scalar_value())) throw Error("grad_check: non-finite value of f");
  backward(y);
  std::vector<double> analytic =
      x0.has_grad() ? x0.grad() : std::vector<double>(x0.size(), 0.0);

  Tensor xe = x.detached_copy(false);
  auto eval = [&](std::size_t i, double delta) {
    double& slot = xe.mutable_values()[i];
    const double save = slot;
    slot = save + delta;
    const double v = f(xe).scalar_value();
    slot = save;
    if (!std::isfinite(v)) throw Error("grad_check: non-finite value of f");
    return v;
  };

  GradCheckReport rep;
  const double f0 = eval(0, 0.0);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double fp = eval(i, step);
    const double fm = eval(i, -step);
    const double fwd = (fp - f0) / step;
    const double bwd = (f0 - fm) / step;
    // one-sided slopes disagreeing flags a kink within `step`
    if (std::abs(fwd - bwd) > 1e-2 * (std::abs(fwd) + std::abs(bwd) + 1.0)) {
      rep.skipped++;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    rep.max_rel_err = std::max(rep.max_rel_err, rel);
    rep.checked++;
  }
  rep.pass = rep.max_rel_err <= rtol;
  return rep;
}

}  // namespace graphcliff
