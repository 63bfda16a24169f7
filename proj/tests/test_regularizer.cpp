#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "infoqa/error.hpp"
#include "infoqa/regularizer.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace infoqa;
using testing::random_tensor;

namespace {

constexpr double kSigmoid3 = 0.9525741268224332;        // mpmath
constexpr double kFixedPointTerm = -1.3862943611198906;  // 2 ln(1/2)
constexpr double kFixedPointLoss = 2.0794415416798359;   // (1 + 0.5) * 2 ln 2

struct RandomBatch {
  EncodedBatch batch;
  std::vector<oracle::ExampleRows> rows;
};

RandomBatch random_batch(std::mt19937_64& rng, std::size_t b, std::size_t d, double scale = 1.0,
                         bool requires_grad = false) {
  RandomBatch out;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t k = 1 + rng() % 4;
    const std::size_t n = 2 + rng() % 9;
    const std::size_t start = rng() % n;
    std::size_t len = 1 + rng() % std::min<std::size_t>(4, n - start);
    if (len == n) --len;  // keep at least one context word
    EncodedExample ex;
    ex.rq = random_tensor(rng, {k, d}, -scale, scale, requires_grad);
    ex.rp = random_tensor(rng, {n, d}, -scale, scale, requires_grad);
    ex.answer_start = start;
    ex.answer_end = start + len - 1;
    ex.mask.assign(n, true);
    out.rows.push_back({oracle::to_rows(ex.rq), oracle::to_rows(ex.rp), ex.answer_start, ex.answer_end});
    out.batch.examples.push_back(std::move(ex));
  }
  return out;
}

Discriminators zero_discs(std::size_t d) {
  std::mt19937_64 rng(0);
  Discriminators discs = Discriminators::make(d, false, rng);
  for (double& w : discs.local.weight().mutable_values()) w = 0.0;
  for (double& w : discs.global.weight().mutable_values()) w = 0.0;
  return discs;
}

}  // namespace

TEST_CASE("shuffle_negatives") {
  std::mt19937_64 rng(1);
  CHECK(shuffle_negatives(2, rng) == std::vector<std::size_t>{1, 0});
  CHECK_THROWS_AS(shuffle_negatives(1, rng), Error);
  CHECK_THROWS_AS(shuffle_negatives(0, rng), Error);

  std::size_t fixed_points = 0;
  std::map<std::vector<std::size_t>, int> seen;
  for (int draw = 0; draw < 10000; ++draw) {
    const auto p = shuffle_negatives(6, rng);
    CHECK(std::set<std::size_t>(p.begin(), p.end()).size() == 6);
    for (std::size_t i = 0; i < 6; ++i) fixed_points += p[i] == i ? 1 : 0;
    ++seen[p];
  }
  CHECK(fixed_points == 0);
  CHECK(seen.size() == 265);  // every derangement of six elements shows up

  std::mt19937_64 a(11), b(11);
  CHECK(shuffle_negatives(7, a) == shuffle_negatives(7, b));
}

TEST_CASE("sample_local_indices") {
  std::mt19937_64 rng(2);
  // single-word answer at the passage start: the left window is clipped
  const auto edge = sample_local_indices(0, 0, std::vector<bool>(8, true), 2, rng);
  CHECK(edge.x == 0);
  CHECK(edge.context == std::vector<std::size_t>{1, 2});

  for (int trial = 0; trial < 50; ++trial) {
    const auto only_answer = sample_local_indices(3, 5, std::vector<bool>(9, true), 0, rng);
    CHECK(only_answer.context.size() == 2);
    CHECK(std::find(only_answer.context.begin(), only_answer.context.end(), only_answer.x) ==
          only_answer.context.end());
    if (only_answer.x == 4) CHECK(only_answer.context == std::vector<std::size_t>{3, 5});
  }

  std::vector<bool> mask(20, true);
  mask[9] = false;
  const auto wide = sample_local_indices(10, 11, mask, 5, rng);
  for (std::size_t c : wide.context) {
    CHECK(c >= 5);
    CHECK(c <= 16);
    CHECK(c != 9);
    CHECK(c != wide.x);
  }
  CHECK(wide.context.size() == 10);
  CHECK_THROWS_AS(sample_local_indices(0, 0, std::vector<bool>(1, true), 5, rng), Error);
}

TEST_CASE("sample_local_pairs is reproducible and uses the assigned negative") {
  std::mt19937_64 data(11);
  const RandomBatch rb = random_batch(data, 4, 6);
  const std::vector<std::size_t> perm{2, 3, 1, 0};
  std::mt19937_64 r1(11), r2(11);
  Graph g;
  const auto a = sample_local_pairs(g, rb.batch, perm, 5, r1);
  const auto b = sample_local_pairs(g, rb.batch, perm, 5, r2);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(testing::to_vec(a[i].x) == testing::to_vec(b[i].x));
    CHECK(testing::to_vec(a[i].rc) == testing::to_vec(b[i].rc));
    CHECK(testing::to_vec(a[i].x_bar) == testing::to_vec(a[perm[i]].x));
    CHECK(testing::to_vec(a[i].rc_bar) == testing::to_vec(a[perm[i]].rc));
  }
  EncodedBatch single;
  single.examples.push_back(rb.batch.examples[0]);
  const std::vector<std::size_t> one{0};
  CHECK_THROWS_AS(sample_local_pairs(g, single, one, 5, r1), Error);
}

TEST_CASE("local and global constraints") {
  std::mt19937_64 rng(42);
  const std::size_t d = 5;
  std::mt19937_64 disc_rng(42);
  const BilinearDiscriminator disc(d, disc_rng);
  Graph g;

  SUBCASE("random instance matches the double loop") {
    const Tensor x = random_tensor(rng, {1, d}, -1, 1);
    const Tensor rc = random_tensor(rng, {4, d}, -1, 1);
    const Tensor xb = random_tensor(rng, {1, d}, -1, 1);
    const Tensor rcb = random_tensor(rng, {6, d}, -1, 1);
    const double want = oracle::multiview_term(disc.weight(), oracle::to_rows(x)[0], oracle::to_rows(rc),
                                               oracle::to_rows(xb)[0], oracle::to_rows(rcb));
    CHECK(std::abs(local_constraint(g, x, rc, xb, rcb, disc).item() - want) < 1e-9);
    CHECK(std::abs(global_constraint(g, x, rc, xb, rcb, disc).item() - want) < 1e-9);
  }
  SUBCASE("uninformative and perfect discriminators") {
    const BilinearDiscriminator zero(Tensor::zeros({d, d}));
    const Tensor a = random_tensor(rng, {1, d}, -1, 1);
    const Tensor b = random_tensor(rng, {3, d}, -1, 1);
    const Tensor c = random_tensor(rng, {7, d}, -1, 1);
    CHECK(local_constraint(g, a, b, a, c, zero).item() == doctest::Approx(kFixedPointTerm).epsilon(1e-12));
    CHECK(global_constraint(g, a, c, a, b, zero).item() == doctest::Approx(kFixedPointTerm).epsilon(1e-12));

    std::vector<double> eye(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 100.0;
    const BilinearDiscriminator sharp(Tensor({d, d}, eye));
    const Tensor up = Tensor::matrix(1, d, {1, 0, 0, 0, 0});
    const Tensor down = Tensor::matrix(1, d, {-1, 0, 0, 0, 0});
    CHECK(local_constraint(g, up, up, down, down, sharp).item() == 0.0);
    CHECK(global_constraint(g, up, up, down, down, sharp).item() == 0.0);
  }
  SUBCASE("empty sets are rejected") {
    const Tensor a = random_tensor(rng, {1, d}, -1, 1);
    const Tensor empty;
    CHECK_THROWS_AS(local_constraint(g, a, empty, a, a, disc), Error);
    CHECK_THROWS_AS(global_constraint(g, a, a, a, empty, disc), Error);
  }
}

TEST_CASE("summarize") {
  std::mt19937_64 rng(3);
  Graph g;
  const auto zero = summarize(g, Tensor::zeros({3, 4}), Summarizer::mean, rng);
  CHECK(zero.shape() == Shape{1, 4});
  for (double v : zero.values()) CHECK(v == 0.5);

  const Tensor one = Tensor::matrix(1, 3, {-1, 0, 2});
  const auto m1 = summarize(g, one, Summarizer::mean, rng);
  for (std::size_t j = 0; j < 3; ++j) CHECK(m1.at(j) == doctest::Approx(oracle::sigmoid(one.at(j))).epsilon(1e-15));

  const auto mx = summarize(g, Tensor::matrix(2, 2, {1, 3, 3, 1}), Summarizer::max, rng);
  for (double v : mx.values()) CHECK(v == doctest::Approx(kSigmoid3).epsilon(1e-15));

  const Tensor words = random_tensor(rng, {5, 4}, -3, 3);
  const auto rows = oracle::to_rows(words);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = summarize(g, words, Summarizer::sample, rng);
    CHECK(std::find(rows.begin(), rows.end(), testing::to_vec(s)) != rows.end());
  }
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor r = random_tensor(rng, {1 + rng() % 5, 4}, -20, 20);
    for (Summarizer k : {Summarizer::mean, Summarizer::max}) {
      const Tensor s = summarize(g, r, k, rng);
      for (double v : s.values()) CHECK((v > 0.0 && v < 1.0));
    }
  }
  CHECK_THROWS_AS(summarize(g, Tensor::zeros({0, 4}), Summarizer::mean, rng), Error);
  CHECK(parse_summarizer("max") == Summarizer::max);
  CHECK_THROWS_AS(parse_summarizer("median"), Error);
}

TEST_CASE("global context excludes the answer span") {
  std::mt19937_64 rng(4);
  EncodedExample ex;
  ex.rq = random_tensor(rng, {2, 3}, -1, 1);
  ex.rp = random_tensor(rng, {6, 3}, -1, 1);
  ex.answer_start = 1;
  ex.answer_end = 3;
  ex.mask = {true, true, true, true, true, false};
  Graph g;
  const Tensor r = global_context(g, ex);
  CHECK(r.shape() == Shape{4, 3});
  CHECK(r.at(2, 0) == ex.rp.at(0, 0));
  CHECK(answer_slice(g, ex).shape() == Shape{3, 3});
}

TEST_CASE("qainfomax_loss") {
  const std::size_t d = 6;

  SUBCASE("batched loss equals the per-pair loops") {
    std::mt19937_64 data(5);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t b = 2 + data() % 7;
      const RandomBatch rb = random_batch(data, b, d);
      std::mt19937_64 disc_rng(trial);
      const Discriminators discs = Discriminators::make(d, false, disc_rng);
      const RegularizerWeights w{.alpha = 1.0, .beta = 0.5, .gamma = 0.3, .context_window = 1 + data() % 5};
      std::mt19937_64 rng(100 + trial);
      Graph g;
      const InfoLoss got = qainfomax_loss(g, rb.batch, w, Summarizer::mean, discs, rng);
      CHECK(std::abs(got.loss.item() - oracle::info_loss(rb.rows, w, discs, std::mt19937_64(100 + trial))) < 1e-9);
      CHECK(got.loss.item() >= 0.0);
    }
  }
  SUBCASE("fixed point and disabled regularizer") {
    std::mt19937_64 data(6);
    const RandomBatch rb = random_batch(data, 5, d);
    std::mt19937_64 rng(1);
    Graph g;
    const InfoLoss fixed = qainfomax_loss(g, rb.batch, {}, Summarizer::mean, zero_discs(d), rng);
    CHECK(std::abs(fixed.loss.item() - kFixedPointLoss) < 1e-9);
    CHECK(std::abs(*fixed.mean_lc - kFixedPointTerm) < 1e-9);
    CHECK(std::abs(*fixed.mean_gc - kFixedPointTerm) < 1e-9);

    const InfoLoss off = qainfomax_loss(g, rb.batch, {.alpha = 0, .beta = 0}, Summarizer::mean, zero_discs(d), rng);
    CHECK(off.loss.item() == 0.0);
    CHECK_FALSE(off.mean_lc.has_value());
  }
  SUBCASE("fresh discriminators start near the fixed point for unit-scale inputs") {
    std::mt19937_64 data(7);
    const std::size_t width = 64;
    const RandomBatch rb = random_batch(data, 8, width, 1.0 / std::sqrt(static_cast<double>(width)));
    std::mt19937_64 rng(2);
    const Discriminators discs = Discriminators::make(width, false, rng);
    Graph g;
    const InfoLoss l = qainfomax_loss(g, rb.batch, {}, Summarizer::mean, discs, rng);
    CHECK(std::abs(l.loss.item() - kFixedPointLoss) < 0.05);
  }
  SUBCASE("same seed, same bits") {
    std::mt19937_64 data(8);
    const RandomBatch rb = random_batch(data, 6, d);
    std::mt19937_64 disc_rng(3);
    const Discriminators discs = Discriminators::make(d, true, disc_rng);
    CHECK(discs.parameters().size() == 1);
    for (Summarizer k : {Summarizer::mean, Summarizer::max, Summarizer::sample}) {
      std::mt19937_64 r1(9), r2(9);
      Graph g;
      const double a = qainfomax_loss(g, rb.batch, {}, k, discs, r1).loss.item();
      const double b = qainfomax_loss(g, rb.batch, {}, k, discs, r2).loss.item();
      CHECK(a == b);
    }
  }
  SUBCASE("constraints stay non-positive") {
    std::mt19937_64 data(9);
    for (int trial = 0; trial < 200; ++trial) {
      const RandomBatch rb = random_batch(data, 2 + data() % 5, d, 3.0);
      std::mt19937_64 disc_rng(trial);
      Discriminators discs = Discriminators::make(d, false, disc_rng);
      for (double& w : discs.local.weight().mutable_values()) w *= 10.0;
      std::mt19937_64 rng(trial);
      Graph g;
      const InfoLoss l = qainfomax_loss(g, rb.batch, {}, Summarizer::max, discs, rng);
      CHECK(*l.mean_lc <= 0.0);
      CHECK(*l.mean_gc <= 0.0);
      CHECK(l.loss.item() >= 0.0);
    }
  }
  CHECK_THROWS_AS(RegularizerWeights{.alpha = -1.0}.validate(), Error);
}

TEST_CASE("regularizer gradients") {
  std::mt19937_64 data(10);
  const std::size_t d = 4;
  const RandomBatch rb = random_batch(data, 3, d, 1.0, true);
  std::mt19937_64 disc_rng(1);
  const Discriminators discs = Discriminators::make(d, false, disc_rng);
  std::vector<Tensor> params = discs.parameters();
  for (const auto& ex : rb.batch.examples) {
    params.push_back(ex.rq);
    params.push_back(ex.rp);
  }
  for (Summarizer k : {Summarizer::mean, Summarizer::max, Summarizer::sample}) {
    const double err = grad_check(
        [&](Graph& g) {
          std::mt19937_64 rng(4);
          return qainfomax_loss(g, rb.batch, {}, k, discs, rng).loss;
        },
        params);
    CHECK(err < 1e-4);
  }
}
