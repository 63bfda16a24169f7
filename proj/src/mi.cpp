#include "infoqa/mi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "infoqa/error.hpp"
#include "infoqa/optim.hpp"

namespace infoqa {

namespace {

Tensor log_one_minus(Graph& g, const Tensor& p) {
  // log(1 - p), with p clamped at 1 - kProbFloor
  return g.log(g.add(g.scale(p, -1.0), constant_like(p, 1.0)), kProbFloor);
}

Tensor to_tensor(std::span<const double> v, const char* what) {
  if (v.empty()) throw usage_error(std::string(what) + ": empty sample list");
  return Tensor({v.size()}, std::vector<double>(v.begin(), v.end()));
}

void check_probs(std::span<const double> v, const char* what) {
  for (double p : v) {
    if (!(p >= 0.0 && p <= 1.0)) {
      std::ostringstream msg;
      msg << what << ": probability " << p << " outside [0, 1]";
      throw usage_error(msg.str());
    }
  }
}

std::vector<std::size_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace

// ---------------------------------------------------------------- discriminator

BilinearDiscriminator::BilinearDiscriminator(std::size_t width, std::mt19937_64& rng) {
  if (width == 0) throw usage_error("discriminator: width must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> w(width * width);
  for (double& x : w) x = u(rng);
  weight_ = Tensor::matrix(width, width, std::move(w), true);
}

BilinearDiscriminator::BilinearDiscriminator(Tensor weight) : weight_(std::move(weight)) {
  if (weight_.rank() != 2 || weight_.dim(0) != weight_.dim(1)) {
    throw shape_error("discriminator: weight must be square, got " + shape_str(weight_.shape()));
  }
}

void BilinearDiscriminator::check_width(const Tensor& t, const char* what) const {
  if (t.rank() != 2 || t.dim(1) != width()) {
    std::ostringstream msg;
    msg << "discriminator: " << what << " has shape " << shape_str(t.shape()) << ", expected [n,"
        << width() << "]";
    throw shape_error(msg.str());
  }
}

Tensor BilinearDiscriminator::scores(Graph& g, const Tensor& xs, const Tensor& ys) const {
  check_width(xs, "x");
  check_width(ys, "y");
  return g.matmul(g.matmul(xs, weight_), g.transpose(ys));
}

Tensor BilinearDiscriminator::probs(Graph& g, const Tensor& xs, const Tensor& ys) const {
  return g.sigmoid(scores(g, xs, ys));
}

Tensor BilinearDiscriminator::paired_scores(Graph& g, const Tensor& xs, const Tensor& ys) const {
  check_width(xs, "x");
  check_width(ys, "y");
  if (xs.dim(0) != ys.dim(0)) throw shape_error("discriminator: paired inputs differ in row count");
  const Tensor prod = g.multiply(g.matmul(xs, weight_), ys);
  return g.scale(g.mean(prod, 1, true), static_cast<double>(width()));
}

double BilinearDiscriminator::score(std::span<const double> x, std::span<const double> y) const {
  const std::size_t d = width();
  if (x.size() != d || y.size() != d) {
    std::ostringstream msg;
    msg << "discriminator: vector widths " << x.size() << " and " << y.size() << " do not match " << d;
    throw shape_error(msg.str());
  }
  const auto w = weight_.values();
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) row += w[i * d + j] * y[j];
    total += x[i] * row;
  }
  return total;
}

double BilinearDiscriminator::prob(std::span<const double> x, std::span<const double> y) const {
  const double s = score(x, y);
  return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s));
}

// ---------------------------------------------------------------- bounds

Tensor dv_bound(Graph& g, const Tensor& pos_scores, const Tensor& neg_scores) {
  double shift = -std::numeric_limits<double>::infinity();
  for (double v : neg_scores.values()) shift = std::max(shift, v);
  const Tensor centered = g.subtract(neg_scores, Tensor::scalar(shift));
  const Tensor log_mean_exp = g.add(g.log(g.mean(g.exp(centered))), Tensor::scalar(shift));
  return g.subtract(g.mean(pos_scores), log_mean_exp);
}

Tensor js_bound(Graph& g, const Tensor& pos_probs, const Tensor& neg_probs) {
  return g.add(g.mean(g.log(pos_probs, kProbFloor)), g.mean(log_one_minus(g, neg_probs)));
}

Tensor multiview_js_bound(Graph& g, const Tensor& pos_probs, const Tensor& neg_probs_y,
                          const Tensor& neg_probs_x) {
  const Tensor positive = g.mean(g.log(pos_probs, kProbFloor));
  const Tensor negative = g.add(g.mean(log_one_minus(g, neg_probs_y)), g.mean(log_one_minus(g, neg_probs_x)));
  return g.add(positive, g.scale(negative, 0.5));
}

double dv_bound(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  Graph g(Graph::Mode::inference);
  return dv_bound(g, to_tensor(pos_scores, "dv_bound"), to_tensor(neg_scores, "dv_bound")).item();
}

double js_bound(std::span<const double> pos_probs, std::span<const double> neg_probs) {
  check_probs(pos_probs, "js_bound");
  check_probs(neg_probs, "js_bound");
  Graph g(Graph::Mode::inference);
  return js_bound(g, to_tensor(pos_probs, "js_bound"), to_tensor(neg_probs, "js_bound")).item();
}

double multiview_js_bound(const MIBatchScores& s) {
  check_probs(s.positive_probs, "multiview_js_bound");
  check_probs(s.negative_probs_y, "multiview_js_bound");
  check_probs(s.negative_probs_x, "multiview_js_bound");
  Graph g(Graph::Mode::inference);
  return multiview_js_bound(g, to_tensor(s.positive_probs, "multiview_js_bound"),
                            to_tensor(s.negative_probs_y, "multiview_js_bound"),
                            to_tensor(s.negative_probs_x, "multiview_js_bound"))
      .item();
}

// ---------------------------------------------------------------- discrete oracle

DiscreteJoint::DiscreteJoint(std::vector<std::vector<double>> table) {
  if (table.empty() || table[0].empty()) throw usage_error("joint: empty table");
  rows_ = table.size();
  cols_ = table[0].size();
  double total = 0.0;
  for (const auto& row : table) {
    if (row.size() != cols_) throw usage_error("joint: ragged table");
    for (double p : row) {
      if (!(p >= 0.0)) throw usage_error("joint: negative or NaN probability");
      total += p;
      p_.push_back(p);
    }
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "joint: entries sum to " << total << ", not 1";
    throw usage_error(msg.str());
  }
}

std::vector<double> DiscreteJoint::row_marginal() const {
  std::vector<double> m(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) m[i] += at(i, j);
  return m;
}

std::vector<double> DiscreteJoint::col_marginal() const {
  std::vector<double> m(cols_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) m[j] += at(i, j);
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> DiscreteJoint::sample(std::size_t n,
                                                                       std::mt19937_64& rng) const {
  std::discrete_distribution<std::size_t> cell(p_.begin(), p_.end());
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t c = cell(rng);
    out.emplace_back(c / cols_, c % cols_);
  }
  return out;
}

double exact_mi_discrete(const DiscreteJoint& joint) {
  const auto px = joint.row_marginal();
  const auto py = joint.col_marginal();
  double mi = 0.0;
  for (std::size_t i = 0; i < joint.rows(); ++i) {
    for (std::size_t j = 0; j < joint.cols(); ++j) {
      const double p = joint.at(i, j);
      if (p > 0.0) mi += p * std::log(p / (px[i] * py[j]));
    }
  }
  return std::max(mi, 0.0);
}

PairedSamples one_hot_samples(const DiscreteJoint& joint, std::size_t n, std::mt19937_64& rng) {
  if (n == 0) throw usage_error("one_hot_samples: n must be positive");
  const std::size_t width = std::max(joint.rows(), joint.cols());
  std::vector<double> xs(n * width, 0.0);
  std::vector<double> ys(n * width, 0.0);
  const auto draws = joint.sample(n, rng);
  for (std::size_t k = 0; k < n; ++k) {
    xs[k * width + draws[k].first] = 1.0;
    ys[k * width + draws[k].second] = 1.0;
  }
  return {Tensor::matrix(n, width, std::move(xs)), Tensor::matrix(n, width, std::move(ys))};
}

PairedSamples gaussian_samples(double rho, std::size_t n, std::mt19937_64& rng) {
  if (!(rho > -1.0 && rho < 1.0)) throw usage_error("gaussian_samples: rho must lie in (-1, 1)");
  if (n == 0) throw usage_error("gaussian_samples: n must be positive");
  std::normal_distribution<double> z(0.0, 1.0);
  const double tail = std::sqrt(1.0 - rho * rho);
  std::vector<double> xs;
  std::vector<double> ys;
  xs.reserve(3 * n);
  ys.reserve(3 * n);
  for (std::size_t k = 0; k < n; ++k) {
    const double a = z(rng);
    const double b = rho * a + tail * z(rng);
    xs.insert(xs.end(), {1.0, a, a * a});
    ys.insert(ys.end(), {1.0, b, b * b});
  }
  return {Tensor::matrix(n, 3, std::move(xs)), Tensor::matrix(n, 3, std::move(ys))};
}

double gaussian_mi(double rho) { return -0.5 * std::log(1.0 - rho * rho); }

// ---------------------------------------------------------------- critic fitting

CriticEstimate fit_critics(const Tensor& train_x, const Tensor& train_y, const Tensor& test_x,
                           const Tensor& test_y, const CriticOptions& options, std::mt19937_64& rng) {
  const std::size_t d = train_x.dim(1);
  BilinearDiscriminator dv_critic(d, rng);
  BilinearDiscriminator js_critic(d, rng);
  Adam dv_opt({dv_critic.weight()}, {.lr = options.lr});
  Adam js_opt({js_critic.weight()}, {.lr = options.lr});

  const std::size_t n = train_x.dim(0);
  for (std::size_t step = 0; step < options.steps; ++step) {
    const auto perm = random_permutation(n, rng);
    Graph g;
    const Tensor shuffled = g.gather_rows(train_y, perm);
    const Tensor dv = dv_bound(g, dv_critic.paired_scores(g, train_x, train_y),
                               dv_critic.paired_scores(g, train_x, shuffled));
    const Tensor js = js_bound(g, g.sigmoid(js_critic.paired_scores(g, train_x, train_y)),
                               g.sigmoid(js_critic.paired_scores(g, train_x, shuffled)));
    g.backward(g.scale(g.add(dv, js), -1.0));
    dv_opt.step();
    js_opt.step();
  }

  Graph g(Graph::Mode::inference);
  const std::size_t m = test_x.dim(0);
  std::vector<Tensor> xs;
  std::vector<Tensor> ys;
  for (std::size_t r = 0; r < options.negative_rounds; ++r) {
    const auto perm = random_permutation(m, rng);
    xs.push_back(test_x);
    ys.push_back(g.gather_rows(test_y, perm));
  }
  const Tensor neg_x = g.concat(xs);
  const Tensor neg_y = g.concat(ys);
  CriticEstimate est;
  est.dv = dv_bound(g, dv_critic.paired_scores(g, test_x, test_y), dv_critic.paired_scores(g, neg_x, neg_y)).item();
  est.js = js_bound(g, g.sigmoid(js_critic.paired_scores(g, test_x, test_y)),
                    g.sigmoid(js_critic.paired_scores(g, neg_x, neg_y)))
               .item();
  return est;
}

}  // namespace infoqa
