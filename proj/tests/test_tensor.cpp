#include <doctest.h>

#include <cmath>
#include <random>

#include "infoqa/error.hpp"
#include "infoqa/tensor.hpp"
#include "primitive_check.hpp"
#include "test_support.hpp"

using namespace infoqa;
using infoqa::testing::random_tensor;
using infoqa::testing::to_vec;

TEST_CASE("primitive forward values") {
  Graph g;
  CHECK(g.sigmoid(Tensor({1}, {0.0})).item() == doctest::Approx(0.5));

  const Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor col = Tensor::matrix(2, 1, {3, 4});
  CHECK(to_vec(g.matmul(eye, col)) == std::vector<double>{3, 4});

  const Tensor m = g.mean(Tensor::matrix(2, 2, {1, 3, 5, 7}), 0);
  CHECK(m.shape() == Shape{2});
  CHECK(to_vec(m) == std::vector<double>{3, 5});

  const Tensor mx = g.max(Tensor::matrix(2, 3, {1, 9, 2, 8, 0, 7}), 1, true);
  CHECK(mx.shape() == Shape{2, 1});
  CHECK(to_vec(mx) == std::vector<double>{9, 8});

  const std::vector<std::size_t> rows{2, 0, 2};
  const Tensor gathered = g.gather_rows(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}), rows);
  CHECK(to_vec(gathered) == std::vector<double>{5, 6, 1, 2, 5, 6});

  const std::array<Tensor, 2> parts{Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(1, 1, {3})};
  CHECK(to_vec(g.concat(parts, 1)) == std::vector<double>{1, 2, 3});

  // row-vector broadcast
  const Tensor b = g.add(Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor({2}, {10, 20}));
  CHECK(to_vec(b) == std::vector<double>{11, 22, 13, 24});
}

TEST_CASE("backward on small closed forms") {
  SUBCASE("sum of squares") {
    Tensor x({3}, {1, 2, 3}, true);
    Graph g;
    g.backward(sum(g, g.multiply(x, x)));
    CHECK(to_vec(Tensor({3}, {x.grad().begin(), x.grad().end()})) == std::vector<double>{2, 4, 6});
  }
  SUBCASE("sigmoid slope at zero") {
    Tensor x = Tensor::scalar(0.0, true);
    Graph g;
    g.backward(g.sigmoid(x));
    CHECK(x.grad()[0] == doctest::Approx(0.25));
  }
  SUBCASE("max routes ties to the first element") {
    Tensor x({4}, {1, 5, 5, 2}, true);
    Graph g;
    g.backward(g.max(x, 0));
    CHECK(to_vec(Tensor({4}, {x.grad().begin(), x.grad().end()})) == std::vector<double>{0, 1, 0, 0});
  }
  SUBCASE("clamped log passes no gradient below the floor") {
    Tensor x({2}, {1e-20, 0.5}, true);
    Graph g;
    const Tensor y = g.log(x, 1e-12);
    CHECK(y.at(0) == doctest::Approx(std::log(1e-12)));
    g.backward(sum(g, y));
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == doctest::Approx(2.0));
  }
}

TEST_CASE("a node used k times accumulates k-fold") {
  for (int k = 1; k <= 5; ++k) {
    Tensor x({2}, {0.3, -0.7}, true);
    Graph g;
    const Tensor s = g.sigmoid(x);
    Tensor acc = s;
    for (int i = 1; i < k; ++i) acc = g.add(acc, s);
    g.backward(sum(g, acc));
    for (std::size_t i = 0; i < 2; ++i) {
      const double y = s.at(i);
      CHECK(x.grad()[i] == doctest::Approx(k * y * (1 - y)).epsilon(1e-14));
    }
  }
}

TEST_CASE("grad_check of sum is exact") {
  std::mt19937_64 rng(5);
  const Tensor p = random_tensor(rng, {3, 4});
  const double err = grad_check([](Graph& g, const Tensor& x) { return sum(g, x); }, p);
  CHECK(err < 1e-10);
}

TEST_CASE("every primitive passes grad_check on 100 random instances") {
  const auto& ops = testing::all_primitives();
  std::mt19937_64 rng(2024);
  for (Primitive op : ops) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) worst = std::max(worst, testing::check_primitive(op, rng));
    INFO("primitive " << primitive_name(op));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("forward passes are bit-identical across runs") {
  std::mt19937_64 rng(9);
  const Tensor a = random_tensor(rng, {5, 7});
  const Tensor b = random_tensor(rng, {7, 3});
  auto run = [&] {
    Graph g;
    return to_vec(log_softmax(g, g.sigmoid(g.matmul(a, b)), 1));
  };
  CHECK(run() == run());
}

TEST_CASE("primitive errors") {
  Graph g;
  SUBCASE("shape mismatch names the primitive and the dimensions") {
    try {
      g.add(Tensor::zeros({2, 3}), Tensor::zeros({4, 3}));
      FAIL("expected shape error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::shape);
      const std::string what = e.what();
      CHECK(what.find("add") != std::string::npos);
      CHECK(what.find("2 vs 4") != std::string::npos);
    }
    CHECK_THROWS_AS(g.matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), Error);
  }
  SUBCASE("log of a non-positive value is a domain error") {
    try {
      g.log(Tensor({2}, {1.0, -0.5}));
      FAIL("expected domain error");
    } catch (const Error& e) {
      CHECK(e.category() == ErrorCategory::domain);
    }
  }
  SUBCASE("exp overflow is a domain error") {
    CHECK_THROWS_AS(g.exp(Tensor::scalar(800.0)), Error);
  }
  SUBCASE("backward needs a scalar root") {
    Tensor x({2}, {1, 2}, true);
    CHECK_THROWS_AS(g.backward(g.scale(x, 2.0)), Error);
  }
  SUBCASE("second backward without zero_grad is refused") {
    Tensor x({2}, {1, 2}, true);
    const Tensor y = sum(g, g.multiply(x, x));
    g.backward(y);
    CHECK_THROWS_AS(g.backward(y), Error);
    g.zero_grad();
    g.backward(y);
    CHECK(x.grad()[1] == doctest::Approx(4.0));
  }
  SUBCASE("grad_check rejects non-scalar functions") {
    const Tensor p = Tensor::zeros({3});
    CHECK_THROWS_AS(grad_check([](Graph& gg, const Tensor& x) { return gg.scale(x, 1.0); }, p), Error);
  }
}

TEST_CASE("inference graphs record nothing") {
  Graph g(Graph::Mode::inference);
  Tensor x({2}, {1, 2}, true);
  const Tensor y = g.sigmoid(x);
  CHECK(g.node_count() == 0);
  CHECK_FALSE(y.requires_grad());
}
