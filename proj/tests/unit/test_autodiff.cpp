#include <cmath>
#include <functional>

#include "a2s/autodiff.hpp"
#include "a2s/rng.hpp"
#include "doctest.h"

using namespace a2s;
using namespace a2s::ad;

namespace {

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.uniform(-1, 1);
  return m;
}

// Projects an arbitrary-shaped output onto a scalar with fixed random weights.
Var project(const Var& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, constant(random_mat(rng, y.rows(), y.cols()))));
}

// Central differences against the analytic gradient of every input.
void check_gradients(const std::vector<Mat>& inputs, const std::function<Var(const std::vector<Var>&)>& f,
                     double tol = 1e-6) {
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.emplace_back(m, true);
  const Var out = f(vars);
  backward(out);
  constexpr double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Var> probe;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Mat m = inputs[j];
          if (j == k) m.data()[i] += delta;
          probe.push_back(constant(m));
        }
        return f(probe).scalar();
      };
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      const double analytic = vars[k].grad().size() ? vars[k].grad().data()[i] : 0.0;
      CHECK(std::abs(numeric - analytic) <= tol * std::max(1.0, std::abs(numeric)));
    }
  }
}

}  // namespace

TEST_CASE("elementwise and linear ops") {
  Rng rng(1);
  const Mat a = random_mat(rng, 3, 4), b = random_mat(rng, 3, 4), w = random_mat(rng, 4, 2), bias = random_mat(rng, 1, 4);
  check_gradients({a, w}, [](auto& v) { return project(matmul(v[0], v[1]), 1); });
  check_gradients({a, b}, [](auto& v) { return project(add(v[0], v[1]), 2); });
  check_gradients({a, b}, [](auto& v) { return project(sub(v[0], v[1]), 3); });
  check_gradients({a, b}, [](auto& v) { return project(mul(v[0], v[1]), 4); });
  check_gradients({a, bias}, [](auto& v) { return project(add_bias(v[0], v[1]), 5); });
  check_gradients({a}, [](auto& v) { return project(scale(v[0], -2.5), 6); });
  check_gradients({a}, [](auto& v) { return project(sigmoid(v[0]), 7); });
  check_gradients({a}, [](auto& v) { return project(tanh(v[0]), 8); });
  check_gradients({a}, [](auto& v) { return project(exp(v[0]), 9); });
  check_gradients({a}, [](auto& v) { return project(soft_bound(scale(v[0], 30.0), 10.0), 10); });
}

TEST_CASE("piecewise ops away from their kinks") {
  Rng rng(2);
  Mat a = random_mat(rng, 4, 5);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::abs(a.data()[i]) < 0.05) a.data()[i] = 0.3;
  }
  check_gradients({a}, [](auto& v) { return project(relu(v[0]), 11); });
  Mat c = random_mat(rng, 4, 5, 1.5);
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    double& x = c.data()[i];
    if (std::abs(x) < 0.05 || std::abs(x - 1) < 0.05) x = 0.5;
  }
  check_gradients({c}, [](auto& v) { return project(clamp01(v[0]), 12); });
}

TEST_CASE("shape ops") {
  Rng rng(3);
  const Mat a = random_mat(rng, 3, 4), b = random_mat(rng, 3, 2), c = random_mat(rng, 2, 4);
  check_gradients({a, b}, [](auto& v) {
    std::vector<Var> parts{v[0], v[1]};
    return project(concat_cols(parts), 13);
  });
  check_gradients({a, c}, [](auto& v) {
    std::vector<Var> parts{v[0], v[1]};
    return project(concat_rows(parts), 14);
  });
  check_gradients({a}, [](auto& v) { return project(slice_cols(v[0], 1, 2), 15); });
  check_gradients({a}, [](auto& v) { return project(slice_rows(v[0], 1, 2), 16); });
  check_gradients({a}, [](auto& v) { return project(reshape(v[0], 6, 2), 17); });
  const std::vector<int> idx{2, 0, 2, 1};
  check_gradients({a}, [&](auto& v) { return project(gather_rows(v[0], idx), 18); });
  check_gradients({a, c}, [](auto& v) {
    std::vector<Var> t{sum(v[0]), sum(v[1])};
    return add_scalars(t);
  });
}

TEST_CASE("reshape keeps row-major order") {
  Mat a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  const auto r = reshape(constant(a), 3, 2).value();
  CHECK(r(1, 0) == 3);
  CHECK(r(2, 1) == 6);
}

TEST_CASE("gru cell") {
  Rng rng(4);
  const Mat gx = random_mat(rng, 2, 9), gh = random_mat(rng, 2, 9), h = random_mat(rng, 2, 3);
  check_gradients({gx, gh, h}, [](auto& v) { return project(gru_cell(v[0], v[1], v[2]), 19); });
}

TEST_CASE("losses") {
  Rng rng(5);
  const Mat logits = random_mat(rng, 4, 6, 3.0);
  const std::vector<int> targets{1, -1, 5, 0};
  check_gradients({logits}, [&](auto& v) { return softmax_cross_entropy(v[0], targets); });
  Mat t(4, 6), mask(4, 6);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    t.data()[i] = rng.bernoulli(0.5);
    mask.data()[i] = rng.bernoulli(0.7);
  }
  check_gradients({logits}, [&](auto& v) { return bce_with_logits(v[0], t); });
  check_gradients({logits}, [&](auto& v) { return bce_with_logits(v[0], t, mask); });
  check_gradients({logits}, [&](auto& v) { return squared_error(v[0], t); });
  const Mat mean = random_mat(rng, 2, 3), logvar = random_mat(rng, 2, 3), noise = random_mat(rng, 2, 3);
  check_gradients({mean, logvar}, [](auto& v) { return kl_standard_normal(v[0], v[1]); });
  check_gradients({mean, logvar}, [&](auto& v) { return project(reparameterize(v[0], v[1], noise), 20); });
}

TEST_CASE("loss values") {
  Mat logits(1, 3);
  logits << 0, 0, 0;
  const std::vector<int> t{2};
  CHECK(softmax_cross_entropy(constant(logits), t).scalar() == doctest::Approx(std::log(3.0)));
  Mat big(1, 2);
  big << 800, -800;
  const std::vector<int> t1{1};
  CHECK(std::isfinite(softmax_cross_entropy(constant(big), t1).scalar()));
  Mat target(1, 2);
  target << 1, 0;
  CHECK(std::isfinite(bce_with_logits(constant(big), target).scalar()));
  CHECK(bce_with_logits(constant(Mat::Zero(1, 2)), target).scalar() == doctest::Approx(2 * std::log(2.0)));
  CHECK(kl_standard_normal(constant(Mat::Zero(1, 4)), constant(Mat::Zero(1, 4))).scalar() == 0.0);
}

TEST_CASE("shared subgraphs accumulate") {
  Mat a(1, 1);
  a << 3.0;
  Var x(a, true);
  const Var y = mul(x, x);
  backward(add(y, y));
  CHECK(x.grad()(0, 0) == doctest::Approx(12.0));
}

TEST_CASE("constants carry no gradient") {
  const Var c = constant(Mat::Ones(2, 2));
  Var p(Mat::Ones(2, 2), true);
  backward(sum(mul(c, p)));
  CHECK(c.grad().size() == 0);
  CHECK(p.grad().sum() == 4.0);
  CHECK_FALSE(mul(c, c).requires_grad());
}
