#include <doctest.h>

#include <cmath>
#include <random>

#include "graphcliff/tensor.hpp"

using namespace graphcliff;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = gauss(rng);
  return requires_grad ? Tensor::param(shape, v) : Tensor::constant(shape, v);
}

// weighted sum makes any op scalar-valued without cancelling errors
Tensor weighted_sum(const Tensor& t, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> w(t.size());
  for (auto& x : w) x = gauss(rng);
  return sum_all(mul(t, Tensor::constant(t.shape(), w)));
}

void check_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                double rtol = 1e-4) {
  auto rep = grad_check(f, x, 1e-5, rtol);
  CAPTURE(rep.max_rel_err);
  CAPTURE(rep.checked);
  CHECK(rep.pass);
  CHECK(rep.checked > 0);
}

}  // namespace

TEST_CASE("pointwise op values") {
  Tensor x = Tensor::constant({3}, {0.0, 1.0, -2.0});
  CHECK(sigmoid(x).values()[0] == doctest::Approx(0.5));
  CHECK(relu(x).values()[2] == 0.0);
  CHECK(relu(x).values()[1] == 1.0);
  CHECK(tanh(x).values()[1] == doctest::Approx(std::tanh(1.0)));
}

TEST_CASE("matmul identity") {
  Tensor eye = Tensor::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor x = Tensor::constant({3, 4}, std::vector<double>{1, 2,  3,  4,  5,  6,
                                                          7, 8, 9, 10, 11, 12});
  Tensor y = matmul(eye, x);
  for (std::size_t i = 0; i < 12; ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("scatter accumulates rows with equal targets") {
  Tensor rows = Tensor::constant({2, 2}, {1.0, 2.0, 10.0, 20.0});
  Tensor out = scatter_add_rows(rows, {0, 0}, 3);
  CHECK(out.values()[0] == 11.0);
  CHECK(out.values()[1] == 22.0);
  CHECK(out.values()[4] == 0.0);
}

TEST_CASE("backward of sum is all ones; sum of squares gives 2x") {
  Tensor x = Tensor::param({4}, {1.0, -2.0, 3.0, 0.5});
  backward(sum_all(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y = Tensor::param({4}, {1.0, -2.0, 3.0, 0.5});
  backward(sum_all(mul(y, y)));
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.grad()[i] == doctest::Approx(2.0 * y.values()[i]));
}

TEST_CASE("mse(Wx,y) gradient matches finite differences") {
  std::mt19937_64 rng(21);
  Tensor x = random_tensor({4, 3}, rng, false);
  Tensor y = random_tensor({4, 2}, rng, false);
  Tensor w0 = random_tensor({3, 2}, rng);
  check_grad([&](const Tensor& w) { return mse(matmul(x, w), y); }, w0);
}

TEST_CASE("every catalog op passes grad_check on 5 random inputs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 100);
      return weighted_sum(matmul(a, random_tensor({3, 4}, r2, false)), r2);
    }, random_tensor({5, 3}, rng));

    check_grad([&](const Tensor& b) {
      std::mt19937_64 r2(seed + 101);
      return weighted_sum(matmul(random_tensor({5, 3}, r2, false), b), r2);
    }, random_tensor({3, 4}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 102);
      return weighted_sum(add(a, random_tensor({4, 3}, r2, false)), r2);
    }, random_tensor({4, 3}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 103);
      return weighted_sum(sub(random_tensor({4, 3}, r2, false), a), r2);
    }, random_tensor({4, 3}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 104);
      return weighted_sum(mul(a, random_tensor({4, 3}, r2, false)), r2);
    }, random_tensor({4, 3}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 105);
      return weighted_sum(smul(a, -1.7), r2);
    }, random_tensor({4, 3}, rng));

    // scale w.r.t. both the matrix and the scalar
    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 106);
      return weighted_sum(scale(a, Tensor::scalar(0.37)), r2);
    }, random_tensor({4, 3}, rng));
    check_grad([&](const Tensor& s) {
      std::mt19937_64 r2(seed + 107);
      return weighted_sum(scale(random_tensor({4, 3}, r2, false), s), r2);
    }, random_tensor({}, rng));

    check_grad([&](const Tensor& bias) {
      std::mt19937_64 r2(seed + 108);
      return weighted_sum(add_rowvec(random_tensor({5, 3}, r2, false), bias), r2);
    }, random_tensor({3}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 109);
      return weighted_sum(concat_cols({a, random_tensor({4, 2}, r2, false)}), r2);
    }, random_tensor({4, 3}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 110);
      auto parts = split_cols(a, {2, 1, 2});
      return add(weighted_sum(parts[0], r2),
                 add(weighted_sum(parts[1], r2), weighted_sum(parts[2], r2)));
    }, random_tensor({4, 5}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 111);
      return weighted_sum(gather_rows(a, {2, 0, 2, 3}), r2);
    }, random_tensor({4, 3}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 112);
      return weighted_sum(scatter_add_rows(a, {1, 0, 1, 2}, 4), r2);
    }, random_tensor({4, 3}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 113);
      return weighted_sum(segment_max_rows(a, {0, 0, 1, 1, 1}, 2), r2);
    }, random_tensor({5, 3}, rng));

    check_grad([&](const Tensor& a) { return sum_all(a); }, random_tensor({4, 3}, rng));
    check_grad([&](const Tensor& a) { return mean_all(a); }, random_tensor({4, 3}, rng));
    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 114);
      return weighted_sum(row_sum(a), r2);
    }, random_tensor({4, 3}, rng));
    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 115);
      return weighted_sum(row_mean(a), r2);
    }, random_tensor({4, 3}, rng));

    // keep relu inputs away from the kink
    {
      Tensor a = random_tensor({4, 3}, rng);
      auto& v = a.mutable_values();
      for (auto& x : v) x += (x >= 0 ? 0.5 : -0.5);
      check_grad([&](const Tensor& t) {
        std::mt19937_64 r2(seed + 116);
        return weighted_sum(relu(t), r2);
      }, a);
    }
    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 117);
      return weighted_sum(tanh(a), r2);
    }, random_tensor({4, 3}, rng));
    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 118);
      return weighted_sum(sigmoid(a), r2);
    }, random_tensor({4, 3}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 119);
      return weighted_sum(layer_norm(a, random_tensor({5}, r2, false),
                                     random_tensor({5}, r2, false)),
                          r2);
    }, random_tensor({4, 5}, rng));
    check_grad([&](const Tensor& g) {
      std::mt19937_64 r2(seed + 120);
      return weighted_sum(
          layer_norm(random_tensor({4, 5}, r2, false), g, random_tensor({5}, r2, false)), r2);
    }, random_tensor({5}, rng));

    check_grad([&](const Tensor& a) {
      std::mt19937_64 r2(seed + 121);
      return mse(a, random_tensor({4, 3}, r2, false));
    }, random_tensor({4, 3}, rng));

    {
      std::mt19937_64 r2(seed + 122);
      std::vector<std::tuple<std::size_t, std::size_t, double>> trips = {
          {0, 0, 0.5}, {0, 1, 0.5}, {1, 0, 0.5}, {1, 1, 0.5}, {2, 2, 1.0}, {3, 3, 0.7},
          {2, 3, 0.3}, {3, 2, 0.3}};
      auto sp = std::make_shared<const SparseMatrix>(SparseMatrix::from_triplets(4, trips));
      check_grad([&](const Tensor& a) {
        std::mt19937_64 r3(seed + 123);
        return weighted_sum(spmm_sym(sp, a), r3);
      }, random_tensor({4, 3}, rng));
    }
  }
}

TEST_CASE("grad_check excludes a relu kink at exactly zero") {
  Tensor x = Tensor::param({3}, {1.0, 0.0, -1.0});
  auto rep = grad_check([](const Tensor& t) { return sum_all(relu(t)); }, x);
  CHECK(rep.pass);
  CHECK(rep.skipped == 1);
  CHECK(rep.checked == 2);
}

TEST_CASE("layer_norm pre-affine rows have mean 0 and variance 1") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({6, 9}, rng, false);
  Tensor gamma = Tensor::constant({9}, std::vector<double>(9, 1.0));
  Tensor beta = Tensor::constant({9}, std::vector<double>(9, 0.0));
  Tensor y = layer_norm(x, gamma, beta, 0.0);  // eps 0 isolates the statistics
  const auto& v = y.values();
  for (std::size_t i = 0; i < 6; ++i) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 9; ++j) mean += v[i * 9 + j];
    mean /= 9.0;
    for (std::size_t j = 0; j < 9; ++j) var += (v[i * 9 + j] - mean) * (v[i * 9 + j] - mean);
    var /= 9.0;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-10);
  }
}

TEST_CASE("scatter is the adjoint of gather") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    Tensor x = random_tensor({6, 4}, rng, false);
    Tensor v = random_tensor({5, 4}, rng, false);
    std::vector<std::size_t> idx = {3, 0, 3, 5, 1};
    Tensor gx = gather_rows(x, idx);
    Tensor sv = scatter_add_rows(v, idx, 6);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < gx.size(); ++i) lhs += gx.values()[i] * v.values()[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x.values()[i] * sv.values()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("forward and backward are bit-deterministic") {
  auto run = [] {
    std::mt19937_64 rng(123);
    Tensor a = random_tensor({8, 6}, rng);
    Tensor b = random_tensor({6, 4}, rng);
    Tensor loss = mse(tanh(matmul(a, b)), random_tensor({8, 4}, rng, false));
    backward(loss);
    std::vector<double> out = {loss.scalar_value()};
    out.insert(out.end(), a.grad().begin(), a.grad().end());
    out.insert(out.end(), b.grad().begin(), b.grad().end());
    return out;
  };
  auto r1 = run(), r2 = run();
  REQUIRE(r1.size() == r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r2[i]);
}

TEST_CASE("op error paths") {
  Tensor a = Tensor::constant({2, 3}, std::vector<double>(6, 1.0));
  Tensor b = Tensor::constant({3, 3}, std::vector<double>(9, 1.0));
  CHECK_THROWS_AS((void)add(a, b), Error);
  CHECK_THROWS_AS((void)mul(a, b), Error);
  CHECK_THROWS_AS((void)matmul(a, a), Error);
  CHECK_THROWS_AS((void)split_cols(a, {2, 2}), Error);
  CHECK_THROWS_AS((void)add_rowvec(a, Tensor::constant({2}, {1.0, 1.0})), Error);
  CHECK_THROWS_AS((void)gather_rows(a, {7}), Error);

  Tensor x = Tensor::param({3}, {1.0, 2.0, 3.0});
  CHECK_THROWS_AS(backward(relu(x)), Error);  // loss not scalar

  Tensor loss = sum_all(x);
  backward(loss);
  CHECK_THROWS_AS(backward(loss), Error);  // tape consumed
}

TEST_CASE("zero_grad resets accumulation between passes") {
  Tensor x = Tensor::param({3}, {1.0, 2.0, 3.0});
  backward(sum_all(x));
  backward(smul(sum_all(x), 2.0));
  CHECK(x.grad()[0] == 3.0);  // grads accumulate without zero_grad
  x.zero_grad();
  backward(sum_all(x));
  CHECK(x.grad()[0] == 1.0);
}
