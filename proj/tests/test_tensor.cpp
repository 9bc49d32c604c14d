#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "grad_check.hpp"
#include "gridspot/tensor.hpp"

using namespace gridspot;
using gridspot::testing::grad_check;
using gridspot::testing::random_array;

TEST_CASE("elementwise basics") {
  Tensor x = Tensor::from_data({3}, {0.0, -2.0, 3.0});
  CHECK(sigmoid(x).array()[0] == doctest::Approx(0.5));
  CHECK(relu(x).array()[1] == 0.0);
  CHECK(relu(x).array()[2] == 3.0);
  CHECK(tanh_op(x).array()[0] == 0.0);
}

TEST_CASE("sigmoid derivative at 0 is 0.25") {
  Tensor x = Tensor::from_data({1}, {0.0}, true);
  double worst = grad_check({x}, [&] { return sum(sigmoid(x)).item(); },
                            [&] { return sum(sigmoid(x)); });
  CHECK(worst < 1e-6);
  CHECK(x.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("shape mismatch is a dimension error") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(a + b, DimError);
  CHECK_THROWS_AS(a * b, DimError);
}

TEST_CASE("matmul hand cases") {
  Tensor eye = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  std::mt19937_64 rng(7);
  Tensor b = Tensor::from_array({3, 4}, random_array(rng, 12));
  Tensor out = matmul(eye, b);
  CHECK((out.array() - b.array()).abs().maxCoeff() == 0.0);

  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor v = Tensor::from_data({2, 1}, {1, 1});
  Tensor p = matmul(a, v);
  CHECK(p.array()[0] == 3.0);
  CHECK(p.array()[1] == 7.0);

  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), DimError);
}

TEST_CASE("matmul gradients vs finite differences") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = Tensor::from_array({3, 4}, random_array(rng, 12), true);
    Tensor b = Tensor::from_array({4, 2}, random_array(rng, 8), true);
    auto fwd = [&] { return sum(matmul(a, b)).item(); };
    CHECK(grad_check({a, b}, fwd, [&] { return sum(matmul(a, b)); }) < 1e-4);
  }
}

TEST_CASE("conv2d identity and counting") {
  // 1x1 identity kernel passes input through.
  std::mt19937_64 rng(3);
  Tensor x = Tensor::from_array({1, 4, 4}, random_array(rng, 16));
  Tensor k = Tensor::from_data({1, 1, 1, 1}, {1.0});
  Tensor y = conv2d(x, k, Tensor(), 1, 0);
  CHECK((y.array() - x.array()).abs().maxCoeff() == 0.0);

  // All-ones 3x3 kernel on all-ones 3x3 input, padding 1: center counts 9
  // overlapping pixels, corners count 4.
  Tensor ones = Tensor::full({1, 3, 3}, 1.0);
  Tensor k9 = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor out = conv2d(ones, k9, Tensor(), 1, 1);
  CHECK(out.array()[4] == 9.0);
  CHECK(out.array()[0] == 4.0);
  CHECK(out.array()[2] == 4.0);
  CHECK(out.array()[6] == 4.0);
  CHECK(out.array()[8] == 4.0);

  CHECK_THROWS_AS(conv2d(ones, Tensor::zeros({1, 2, 3, 3}), Tensor(), 1, 1),
                  DimError);
}

TEST_CASE("conv2d output shape arithmetic") {
  Tensor x = Tensor::zeros({2, 9, 7});
  Tensor k = Tensor::zeros({3, 2, 3, 3});
  CHECK(conv2d(x, k, Tensor(), 2, 1).shape() == Shape{3, 5, 4});
  CHECK(conv2d(x, k, Tensor(), 1, 1).shape() == Shape{3, 9, 7});
}

TEST_CASE("conv2d gradients vs finite differences") {
  std::mt19937_64 rng(5);
  Tensor x = Tensor::from_array({2, 5, 5}, random_array(rng, 50), true);
  Tensor k = Tensor::from_array({3, 2, 3, 3}, random_array(rng, 54), true);
  Tensor b = Tensor::from_array({3}, random_array(rng, 3), true);
  auto fwd = [&] { return sum(conv2d(x, k, b, 1, 1)).item(); };
  CHECK(grad_check({x, k, b}, fwd, [&] { return sum(conv2d(x, k, b, 1, 1)); }) <
        1e-4);
}

TEST_CASE("softmax properties") {
  Tensor u = Tensor::zeros({4});
  Tensor s = softmax(u, 0);
  for (int i = 0; i < 4; ++i) CHECK(s.array()[i] == doctest::Approx(0.25));

  Tensor big = Tensor::from_data({2}, {1000.0, 0.0});
  Tensor sb = softmax(big, 0);
  CHECK(sb.array()[0] == doctest::Approx(1.0));
  CHECK(sb.array().isFinite().all());

  std::mt19937_64 rng(17);
  Tensor x = Tensor::from_array({3, 5}, random_array(rng, 15));
  Tensor sm = softmax(x, 1);
  for (int r = 0; r < 3; ++r) {
    double row = sm.array().segment(r * 5, 5).sum();
    CHECK(std::abs(row - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax jacobian-vector product vs finite differences") {
  std::mt19937_64 rng(23);
  Tensor x = Tensor::from_array({5}, random_array(rng, 5), true);
  Tensor w = Tensor::from_array({5}, random_array(rng, 5));
  auto fwd = [&] { return sum(softmax(x, 0) * w).item(); };
  CHECK(grad_check({x}, fwd, [&] { return sum(softmax(x, 0) * w); }) < 1e-4);
}

TEST_CASE("backward basics") {
  std::mt19937_64 rng(29);
  Tensor x = Tensor::from_array({2, 3}, random_array(rng, 6), true);

  backward(sum(x));
  CHECK((x.grad() == 1.0).all());

  Tensor half = sum(x * x) * 0.5;
  backward(half);
  CHECK((x.grad() - x.array()).abs().maxCoeff() < 1e-12);

  // x used twice: grads accumulate.
  backward(sum(x + x));
  CHECK((x.grad() == 2.0).all());
}

TEST_CASE("backward on an untaped tensor is a usage error") {
  Tensor c = Tensor::from_data({1}, {3.0});
  CHECK_THROWS_AS(backward(c), UsageError);
  Tensor nonscalar = Tensor::zeros({2}, true);
  CHECK_THROWS_AS(backward(nonscalar), UsageError);
}

TEST_CASE("selection ops match manual slicing and are differentiable") {
  std::mt19937_64 rng(31);
  Tensor x = Tensor::from_array({2, 3, 4}, random_array(rng, 24), true);

  Tensor t1 = select1(x, 1);
  CHECK(t1.shape() == Shape{2, 4});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 4; ++c)
      CHECK(t1.array()[n * 4 + c] == x.array()[(n * 3 + 1) * 4 + c]);

  Tensor re = stack1({select1(x, 0), select1(x, 1), select1(x, 2)});
  CHECK(re.shape() == x.shape());
  CHECK((re.array() - x.array()).abs().maxCoeff() == 0.0);

  Tensor g = gather0(x, {1, 0, 1});
  CHECK(g.shape() == Shape{3, 3, 4});

  auto fwd = [&] {
    Tensor a = gather0(x, {1, 0});
    Tensor b = select1(a, 2);
    return sum(b * b).item();
  };
  CHECK(grad_check({x}, fwd, [&] {
          Tensor a = gather0(x, {1, 0});
          Tensor b = select1(a, 2);
          return sum(b * b);
        }) < 1e-4);
}

TEST_CASE("slice_cols, transpose, concat0, reshape are differentiable") {
  std::mt19937_64 rng(37);
  Tensor x = Tensor::from_array({3, 6}, random_array(rng, 18), true);
  Tensor y = Tensor::from_array({2, 6}, random_array(rng, 12), true);
  auto build = [&] {
    Tensor c = concat0({x, y});                 // [5,6]
    Tensor s = slice_cols(c, 1, 4);             // [5,3]
    Tensor t = transpose2d(s);                  // [3,5]
    return sum(reshape(t, {15}) * reshape(t, {15}));
  };
  CHECK(grad_check({x, y}, [&] { return build().item(); }, build) < 1e-4);
}

TEST_CASE("row_normalize rows sum to one and is differentiable") {
  std::mt19937_64 rng(41);
  Tensor x = Tensor::from_array({3, 4}, random_array(rng, 12, 0.1, 1.0), true);
  Tensor y = row_normalize(x, 1e-6);
  for (int r = 0; r < 3; ++r)
    CHECK(y.array().segment(r * 4, 4).sum() == doctest::Approx(1.0).epsilon(1e-5));
  Tensor w = Tensor::from_array({3, 4}, random_array(rng, 12));
  auto fwd = [&] { return sum(row_normalize(x, 1e-6) * w).item(); };
  CHECK(grad_check({x}, fwd, [&] { return sum(row_normalize(x, 1e-6) * w); }) <
        1e-4);
}

TEST_CASE("linear matches matmul plus bias and is differentiable") {
  std::mt19937_64 rng(43);
  Tensor x = Tensor::from_array({4, 3}, random_array(rng, 12), true);
  Tensor w = Tensor::from_array({3, 2}, random_array(rng, 6), true);
  Tensor b = Tensor::from_array({2}, random_array(rng, 2), true);
  Tensor y = linear(x, w, b);
  Tensor ref = matmul(x, w);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(y.array()[i * 2 + j] ==
            doctest::Approx(ref.array()[i * 2 + j] + b.array()[j]));
  auto fwd = [&] { return sum(linear(x, w, b)).item(); };
  CHECK(grad_check({x, w, b}, fwd, [&] { return sum(linear(x, w, b)); }) < 1e-4);
}

TEST_CASE("determinism: identical seeds give bitwise-identical runs") {
  auto run = [] {
    std::mt19937_64 rng(123);
    Tensor x = Tensor::from_array({2, 8, 8}, random_array(rng, 128), true);
    Tensor k = Tensor::from_array({4, 2, 3, 3}, random_array(rng, 72), true);
    Tensor loss = sum(relu(conv2d(x, k, Tensor(), 2, 1)));
    backward(loss);
    return std::make_pair(loss.item(), Eigen::ArrayXd(k.grad()));
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK((g1 == g2).all());
}

TEST_CASE("no-grad guard suppresses taping") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  autograd::NoGradGuard guard;
  Tensor y = sum(x * x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("forward values stay finite on bounded inputs") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = Tensor::from_array({3, 6, 6}, random_array(rng, 108, -5, 5));
    Tensor k = Tensor::from_array({2, 3, 3, 3}, random_array(rng, 54, -5, 5));
    Tensor y = softmax(reshape(sigmoid(conv2d(x, k, Tensor(), 1, 1)), {2, 36}), 1);
    CHECK(y.array().isFinite().all());
    CHECK((sigmoid(x).array() > 0.0).all());
    CHECK((sigmoid(x).array() < 1.0).all());
  }
}
