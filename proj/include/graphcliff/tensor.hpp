#pragma once

// Dense double-precision tensors with a reverse-mode differentiation tape.
// A Tensor is a cheap handle onto a tape node; ops build new nodes eagerly
// (define-by-run) and backward() walks the graph in reverse topological
// order. One graph is single-threaded; independent graphs may live on
// different threads.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace graphcliff {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

// Immutable CSR matrix used as a constant linear operator on the tape.
// spmm_sym requires it to be symmetric (the normalized adjacency always is),
// which lets backward reuse the same storage for the transpose.
struct SparseMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;  // size n+1
  std::vector<std::size_t> col_idx;
  std::vector<double> vals;

  static SparseMatrix from_triplets(
      std::size_t n, std::vector<std::tuple<std::size_t, std::size_t, double>> triplets);
  bool is_symmetric(double tol = 0.0) const;
  std::vector<std::vector<double>> dense() const;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first backward touch
  bool requires_grad = false;
  bool consumed = false;  // set on a root once backward has run through it
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // pushes grads into parents

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  // Constant (no grad) tensor from explicit data.
  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor scalar(double v, bool requires_grad = false);
  // Leaf parameter: requires_grad = true.
  static Tensor param(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();  // for optimizer updates on leaves
  double value_at(std::size_t i) const { return values()[i]; }
  double scalar_value() const;  // rank-0 only

  bool requires_grad() const;
  const std::vector<double>& grad() const;  // throws if never materialized
  bool has_grad() const;
  void zero_grad();

  // Deep copy of values into a fresh constant/param leaf (detached).
  Tensor detached_copy(bool requires_grad = false) const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- op catalog -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);     // elementwise
Tensor smul(const Tensor& a, double c);           // constant scalar multiply
Tensor scale(const Tensor& a, const Tensor& s);   // s is a rank-0 tensor
Tensor add_rowvec(const Tensor& a, const Tensor& bias);  // [m,n] + [n]

Tensor concat_cols(const std::vector<Tensor>& parts);
std::vector<Tensor> split_cols(const Tensor& a, const std::vector<std::size_t>& sizes);

Tensor gather_rows(const Tensor& a, std::vector<std::size_t> idx);
// out[idx[m]] += rows[m]; out has n_rows rows.
Tensor scatter_add_rows(const Tensor& rows, std::vector<std::size_t> idx, std::size_t n_rows);
// Per-segment column-wise maximum; every segment in [0,n_seg) must be non-empty.
Tensor segment_max_rows(const Tensor& a, std::vector<std::size_t> seg, std::size_t n_seg);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor row_sum(const Tensor& a);   // [m,n] -> [m]
Tensor row_mean(const Tensor& a);  // [m,n] -> [m]

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Layer normalization over the last dim with affine parameters; eps inside
// the variance square root.
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor mse(const Tensor& pred, const Tensor& target);

// y = A x with a constant symmetric sparse A ([n,n] times [n,d]).
Tensor spmm_sym(std::shared_ptr<const SparseMatrix> a, const Tensor& x);

// ---- reverse pass ---------------------------------------------------------

// Accumulates d(loss)/d(leaf) into .grad of every requires_grad leaf.
// loss must be rank-0; a second backward through the same root throws.
void backward(const Tensor& loss);

// ---- gradient check harness ----------------------------------------------

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates excluded as non-smooth
};

// Compares the reverse-mode gradient of f at x against central finite
// differences, coordinate by coordinate. Coordinates where forward and
// backward one-sided differences disagree (a kink within `step`) are
// excluded from the comparison. Throws on non-finite values.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double step = 1e-5,
                           double rtol = 1e-4);

}  // namespace graphcliff
