#pragma once

// Plain-loop reference implementations used as test oracles. Nothing here
// touches the tape; every sum is an explicit loop over pairs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "infoqa/mi.hpp"
#include "infoqa/model.hpp"
#include "infoqa/regularizer.hpp"

namespace infoqa::oracle {

using Row = std::vector<double>;
using Rows = std::vector<Row>;

inline Rows to_rows(const Tensor& t) {
  Rows out(t.dim(0), Row(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) out[i][j] = t.at(i, j);
  return out;
}

inline double bilinear(const Tensor& w, const Row& x, const Row& y) {
  const std::size_t d = x.size();
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) s += x[i] * w.at(i * d + j) * y[j];
  return s;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double clamp_prob(double p) { return std::min(std::max(p, kProbFloor), 1.0 - kProbFloor); }

// mean log g(a, pos_i) + 1/2 mean log(1 - g(a, neg_j)) + 1/2 mean log(1 - g(a_bar, pos_i))
inline double multiview_term(const Tensor& w, const Row& a, const Rows& pos, const Row& a_bar, const Rows& neg) {
  double p = 0.0, ny = 0.0, nx = 0.0;
  for (const Row& r : pos) p += std::log(clamp_prob(sigmoid(bilinear(w, a, r))));
  for (const Row& r : neg) ny += std::log(1.0 - clamp_prob(sigmoid(bilinear(w, a, r))));
  for (const Row& r : pos) nx += std::log(1.0 - clamp_prob(sigmoid(bilinear(w, a_bar, r))));
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  return p / np + ny / (2.0 * nn) + nx / (2.0 * np);
}

inline Row sigmoid_mean(const Rows& rows) {
  Row out(rows.front().size(), 0.0);
  for (const Row& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
  for (double& v : out) v = sigmoid(v / static_cast<double>(rows.size()));
  return out;
}

struct ExampleRows {
  Rows rq;
  Rows rp;
  std::size_t start = 0;
  std::size_t end = 0;
};

// L_info with the mean summarizer. Replays the documented draw order
// (derangement, then one local sample per example) from a copy of the rng.
inline double info_loss(const std::vector<ExampleRows>& batch, const RegularizerWeights& w,
                        const Discriminators& discs, std::mt19937_64 rng) {
  const std::size_t b = batch.size();
  const auto perm = shuffle_negatives(b, rng);
  std::vector<Row> x(b), s(b);
  std::vector<Rows> rc(b), r(b);
  for (std::size_t i = 0; i < b; ++i) {
    const ExampleRows& ex = batch[i];
    const std::vector<bool> mask(ex.rp.size(), true);
    if (w.alpha > 0.0) {
      const LocalIndices idx = sample_local_indices(ex.start, ex.end, mask, w.context_window, rng);
      x[i] = ex.rp[idx.x];
      for (std::size_t c : idx.context) rc[i].push_back(ex.rp[c]);
    }
    s[i] = sigmoid_mean(Rows(ex.rp.begin() + static_cast<std::ptrdiff_t>(ex.start),
                             ex.rp.begin() + static_cast<std::ptrdiff_t>(ex.end) + 1));
    r[i] = ex.rq;
    for (std::size_t k = 0; k < ex.rp.size(); ++k)
      if (k < ex.start || k > ex.end) r[i].push_back(ex.rp[k]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = perm[i];
    if (w.alpha > 0.0) total += w.alpha * multiview_term(discs.local.weight(), x[i], rc[i], x[j], rc[j]);
    if (w.beta > 0.0) total += w.beta * multiview_term(discs.global.weight(), s[i], r[i], s[j], r[j]);
  }
  return -total / static_cast<double>(b);
}

}  // namespace infoqa::oracle
