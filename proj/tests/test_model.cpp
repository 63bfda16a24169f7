#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <random>

#include "infoqa/error.hpp"
#include "infoqa/model.hpp"
#include "infoqa/optim.hpp"
#include "test_support.hpp"

using namespace infoqa;

namespace {

ModelConfig tiny_config(std::size_t vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 8;
  c.heads = 2;
  c.ff_width = 12;
  c.layers = 2;
  c.max_positions = 24;
  return c;
}

TokenizedExample random_example(std::mt19937_64& rng, std::size_t vocab, std::size_t k, std::size_t n) {
  std::uniform_int_distribution<std::size_t> tok(1, vocab - 1);
  TokenizedExample ex;
  for (std::size_t i = 0; i < k; ++i) ex.question.push_back(tok(rng));
  for (std::size_t i = 0; i < n; ++i) ex.passage.push_back(tok(rng));
  ex.answer_start = n / 3;
  ex.answer_end = n / 3 + 1;
  return ex;
}

// Exhaustive pair enumeration in row-major (i, j) order with a strict
// improvement test, which yields the smallest-i-then-j tie break.
std::pair<std::size_t, std::size_t> brute_force_span(const std::vector<double>& s, const std::vector<double>& e,
                                                     std::size_t max_len) {
  std::pair<std::size_t, std::size_t> best{0, 0};
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < e.size(); ++j)
      if (i <= j && j - i + 1 <= max_len && s[i] + e[j] > top) {
        top = s[i] + e[j];
        best = {i, j};
      }
  return best;
}

}  // namespace

TEST_CASE("encode shapes and determinism") {
  std::mt19937_64 rng(1);
  ModelConfig cfg;
  cfg.vocab_size = 50;
  const EncoderParams params(cfg, rng);
  const TokenizedExample ex = random_example(rng, 50, 3, 10);

  Graph g1, g2;
  const EncodedExample a = encode(g1, params, ex);
  const EncodedExample b = encode(g2, params, ex);
  CHECK(a.rq.shape() == Shape{3, 64});
  CHECK(a.rp.shape() == Shape{10, 64});
  CHECK(a.mask == std::vector<bool>(10, true));
  CHECK(testing::to_vec(a.rp) == testing::to_vec(b.rp));
  CHECK(testing::to_vec(a.rq) == testing::to_vec(b.rq));

  // swapping two distinct passage tokens changes the passage encoding
  TokenizedExample swapped = ex;
  swapped.passage[1] = ex.passage[6];
  swapped.passage[6] = ex.passage[1];
  REQUIRE(ex.passage[1] != ex.passage[6]);
  Graph g3;
  const EncodedExample c = encode(g3, params, swapped);
  double diff = 0.0;
  for (std::size_t i = 0; i < c.rp.numel(); ++i) diff = std::max(diff, std::abs(c.rp.at(i) - a.rp.at(i)));
  CHECK(diff > 1e-3);
  // position 1 of the swapped passage holds token 6's embedding but not its encoding
  double pos_diff = 0.0;
  for (std::size_t j = 0; j < 64; ++j) pos_diff = std::max(pos_diff, std::abs(c.rp.at(1, j) - a.rp.at(6, j)));
  CHECK(pos_diff > 1e-3);
}

TEST_CASE("encode rejects invalid input") {
  std::mt19937_64 rng(2);
  const EncoderParams params(tiny_config(20), rng);
  Graph g;
  TokenizedExample ex = random_example(rng, 20, 3, 8);
  ex.passage[2] = 20;
  CHECK_THROWS_AS(encode(g, params, ex), Error);
  ex = random_example(rng, 20, 5, 19);  // 5 + 1 + 19 > 24
  CHECK_THROWS_AS(encode(g, params, ex), Error);
  ex = random_example(rng, 20, 3, 8);
  ex.answer_end = 8;
  CHECK_THROWS_AS(encode(g, params, ex), Error);
  CHECK_THROWS_AS(EncoderParams(ModelConfig{.vocab_size = 10, .d_model = 10, .heads = 4}, rng), Error);
}

TEST_CASE("span logits and probabilities") {
  std::mt19937_64 rng(3);
  EncoderParams params(tiny_config(30), rng);
  const Tensor rp = testing::random_tensor(rng, {10, 8}, -2, 2);
  Graph g;

  SUBCASE("zero start head gives a uniform start distribution") {
    for (double& w : params.w_start.mutable_values()) w = 0.0;
    const auto [ps, pe] = span_probabilities(g, span_logits(g, params, rp, std::vector<bool>(10, true)));
    for (double p : ps) CHECK(p == doctest::Approx(0.1).epsilon(1e-12));
  }
  SUBCASE("a single position is a point mass") {
    const Tensor one = testing::random_tensor(rng, {1, 8}, -2, 2);
    const auto [ps, pe] = span_probabilities(g, span_logits(g, params, one, {true}));
    CHECK(ps == std::vector<double>{1.0});
    CHECK(pe == std::vector<double>{1.0});
  }
  SUBCASE("distributions are normalized and masked positions get zero mass") {
    std::vector<bool> mask(10, true);
    mask[4] = mask[7] = false;
    const auto [ps, pe] = span_probabilities(g, span_logits(g, params, rp, mask));
    double ss = 0.0, se = 0.0;
    for (double p : ps) ss += p;
    for (double p : pe) se += p;
    CHECK(std::abs(ss - 1.0) < 1e-12);
    CHECK(std::abs(se - 1.0) < 1e-12);
    CHECK(ps[4] == 0.0);
    CHECK(pe[7] == 0.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(span_logits(g, params, rp, std::vector<bool>(10, false)), Error);
    CHECK_THROWS_AS(span_logits(g, params, rp, std::vector<bool>(9, true)), Error);
  }
}

TEST_CASE("span_loss") {
  std::mt19937_64 rng(4);
  Graph g;
  const SpanLogits uniform{Tensor::zeros({10, 1}), Tensor::zeros({10, 1})};
  CHECK(span_loss(g, uniform, 2, 5).item() == doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-14));

  std::vector<double> peak(6, -800.0);
  peak[3] = 0.0;
  const SpanLogits point{Tensor({6, 1}, peak), Tensor({6, 1}, peak)};
  CHECK(span_loss(g, point, 3, 3).item() == 0.0);

  // explicit softmax arithmetic as the reference
  const Tensor s = testing::random_tensor(rng, {7, 1}, -3, 3);
  const Tensor e = testing::random_tensor(rng, {7, 1}, -3, 3);
  auto naive_nll = [](const Tensor& t, std::size_t idx) {
    double z = 0.0;
    for (double v : t.values()) z += std::exp(v);
    return -std::log(std::exp(t.at(idx)) / z);
  };
  CHECK(std::abs(span_loss(g, {s, e}, 1, 4).item() - (naive_nll(s, 1) + naive_nll(e, 4))) < 1e-10);
  CHECK_THROWS_AS(span_loss(g, {s, e}, 1, 7), Error);
}

TEST_CASE("predict_span") {
  std::vector<double> s(8, 0.0), e(8, 0.0);
  s[2] = 10;
  e[4] = 10;
  CHECK(predict_span(s, e, 3) == std::pair<std::size_t, std::size_t>{2, 4});
  CHECK(predict_span(s, e, 2) != std::pair<std::size_t, std::size_t>{2, 4});

  std::vector<double> s2(8, 0.0), e2(8, 0.0);
  s2[5] = 10;
  e2[2] = 10;
  e2[6] = 9;
  const auto p = predict_span(s2, e2, 4);
  CHECK(p.first <= p.second);
  CHECK(p == std::pair<std::size_t, std::size_t>{5, 6});

  CHECK(predict_span(std::vector<double>(5, 1.0), std::vector<double>(5, 1.0), 3) ==
        std::pair<std::size_t, std::size_t>{0, 0});
  CHECK_THROWS_AS(predict_span(std::vector<double>{}, std::vector<double>{}, 3), Error);
  CHECK_THROWS_AS(predict_span(s, e, 0), Error);

  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> small(-3, 3);  // integers, so ties happen
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    const std::size_t max_len = 1 + rng() % 5;
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = small(rng);
      b[i] = small(rng);
    }
    const auto got = predict_span(a, b, max_len);
    CHECK(got == brute_force_span(a, b, max_len));
    CHECK(got.first <= got.second);
    CHECK(got.second - got.first + 1 <= max_len);
  }
}

TEST_CASE("span loss gradient through the whole encoder") {
  std::mt19937_64 rng(6);
  const EncoderParams params(tiny_config(12), rng);
  const std::vector<TokenizedExample> batch{random_example(rng, 12, 3, 6), random_example(rng, 12, 2, 7)};
  std::vector<Tensor> ps = params.parameters();
  const double err = grad_check(
      [&](Graph& g) { return batch_span_loss(g, params, encode_batch(g, params, batch)); }, ps);
  CHECK(err < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(7);
  Tokens words{"a", "b", "c", "d", "e", "f"};
  const Vocabulary vocab(words);
  const EncoderParams params(tiny_config(vocab.size()), rng);
  const auto path = std::filesystem::temp_directory_path() / "infoqa_test_model.bin";
  save_checkpoint(path, params, vocab);
  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.vocab.tokens() == vocab.tokens());
  const auto a = params.named_parameters();
  const auto b = ck.params.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(testing::to_vec(a[i].second) == testing::to_vec(b[i].second));
  }
  CHECK(a.front().first == "embed.token");
  CHECK(a.back().first == "head.end");

  std::filesystem::resize_file(path, 100);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
  std::filesystem::remove(std::filesystem::path(path.string() + ".json"));
  CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("sanity fit on a small noise-free set") {
  const WorldSpec world = WorldSpec::standard();
  const Vocabulary vocab(world.vocabulary());
  const Corpus corpus = generate_corpus(world, {.seed = 21, .train_size = 50, .eval_size = 0});
  std::vector<TokenizedExample> data;
  for (const auto& ex : corpus.train) data.push_back(tokenize(vocab, ex));

  std::mt19937_64 rng(21);
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  const EncoderParams params(cfg, rng);
  Adam opt(params.parameters(), {});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int step = 0; step < 200; ++step) {
    if (step % 3 == 0) std::shuffle(order.begin(), order.end(), rng);
    std::vector<TokenizedExample> batch;
    for (std::size_t i = 0; i < 16; ++i) batch.push_back(data[order[(static_cast<std::size_t>(step % 3) * 16 + i) % order.size()]]);
    Graph g;
    const Tensor loss = batch_span_loss(g, params, encode_batch(g, params, batch));
    g.backward(loss);
    opt.step();
  }
  std::size_t exact = 0;
  for (const auto& ex : data) {
    const auto [s, e] = predict(params, ex, 4);
    exact += (s == ex.answer_start && e == ex.answer_end) ? 1 : 0;
  }
  CHECK(exact == data.size());
}
