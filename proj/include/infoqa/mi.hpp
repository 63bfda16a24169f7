#pragma once

// Mutual-information lower bounds and the bilinear critic that feeds them.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "infoqa/tensor.hpp"

namespace infoqa {

// Probabilities entering log / log(1 - .) are clamped to [kProbFloor, 1 - kProbFloor].
inline constexpr double kProbFloor = 1e-12;

// g(x, y) = x^T W y. The JS-family objectives use sigmoid(g); DV uses g raw.
class BilinearDiscriminator {
 public:
  BilinearDiscriminator() = default;
  // W ~ U[-1/sqrt(d), 1/sqrt(d)].
  BilinearDiscriminator(std::size_t width, std::mt19937_64& rng);
  explicit BilinearDiscriminator(Tensor weight);

  std::size_t width() const { return weight_.dim(0); }
  const Tensor& weight() const { return weight_; }
  Tensor& weight() { return weight_; }

  // All row pairs: [n,d] x [m,d] -> [n,m] raw scores.
  Tensor scores(Graph& g, const Tensor& xs, const Tensor& ys) const;
  Tensor probs(Graph& g, const Tensor& xs, const Tensor& ys) const;
  // Row-aligned pairs: [n,d], [n,d] -> [n,1] raw scores.
  Tensor paired_scores(Graph& g, const Tensor& xs, const Tensor& ys) const;

  double score(std::span<const double> x, std::span<const double> y) const;
  double prob(std::span<const double> x, std::span<const double> y) const;

 private:
  void check_width(const Tensor& t, const char* what) const;

  Tensor weight_;
};

// Discriminator outputs for one bound evaluation.
struct MIBatchScores {
  std::vector<double> positive_probs;    // (x, y) from the joint
  std::vector<double> negative_probs_y;  // (x, y_bar)
  std::vector<double> negative_probs_x;  // (x_bar, y)
};

// mean(pos) - log(mean(exp(neg))), with a constant max shift inside the log.
Tensor dv_bound(Graph& g, const Tensor& pos_scores, const Tensor& neg_scores);
// mean(log pos) + mean(log(1 - neg)). Never positive.
Tensor js_bound(Graph& g, const Tensor& pos_probs, const Tensor& neg_probs);
// mean(log pos) + 1/2 mean(log(1 - neg_y)) + 1/2 mean(log(1 - neg_x)). Never positive.
Tensor multiview_js_bound(Graph& g, const Tensor& pos_probs, const Tensor& neg_probs_y,
                          const Tensor& neg_probs_x);

double dv_bound(std::span<const double> pos_scores, std::span<const double> neg_scores);
double js_bound(std::span<const double> pos_probs, std::span<const double> neg_probs);
double multiview_js_bound(const MIBatchScores& scores);

// Joint probability table of two discrete variables.
class DiscreteJoint {
 public:
  // Throws unless entries are non-negative and sum to 1 within 1e-12.
  explicit DiscreteJoint(std::vector<std::vector<double>> table);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double at(std::size_t i, std::size_t j) const { return p_[i * cols_ + j]; }
  std::vector<double> row_marginal() const;
  std::vector<double> col_marginal() const;

  // Draws n (i, j) index pairs.
  std::vector<std::pair<std::size_t, std::size_t>> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> p_;
};

// Sum p(i,j) ln(p(i,j) / (p(i) p(j))) in nats, with 0 ln 0 = 0.
double exact_mi_discrete(const DiscreteJoint& joint);

struct PairedSamples {
  Tensor x;  // [n, d]
  Tensor y;  // [n, d]
};

// n joint draws, each variable one-hot encoded in width max(rows, cols).
PairedSamples one_hot_samples(const DiscreteJoint& joint, std::size_t n, std::mt19937_64& rng);

// n draws of a standard bivariate normal with correlation rho, each variable
// lifted to features [1, v, v^2] so a bilinear critic can express the exact
// log density ratio. Analytic MI is -1/2 ln(1 - rho^2).
PairedSamples gaussian_samples(double rho, std::size_t n, std::mt19937_64& rng);
double gaussian_mi(double rho);

// Fitting a critic to paired samples (rows of xs and ys are joint draws).
struct CriticOptions {
  std::size_t steps = 400;
  double lr = 0.05;
  std::size_t negative_rounds = 8;  // shuffled pairings used for held-out negatives
};

struct CriticEstimate {
  double dv = 0.0;  // held-out DV bound of the DV-trained critic, nats
  double js = 0.0;  // held-out JS bound value of the JS-trained critic
};

// Trains one critic on the DV objective and one on the JS objective, using a
// fresh shuffled pairing as negatives at each step, then evaluates both on
// the held-out split.
CriticEstimate fit_critics(const Tensor& train_x, const Tensor& train_y, const Tensor& test_x,
                           const Tensor& test_y, const CriticOptions& options, std::mt19937_64& rng);

}  // namespace infoqa
