#pragma once

// Local and global mutual-information constraints over encoder outputs and
// the combined regularizer added to the span loss.

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "infoqa/mi.hpp"
#include "infoqa/model.hpp"
#include "infoqa/tensor.hpp"

namespace infoqa {

struct RegularizerWeights {
  double alpha = 1.0;               // local constraint
  double beta = 0.5;                // global constraint
  double gamma = 0.3;               // L = L_span + gamma * L_info
  std::size_t context_window = 5;   // C words on each side of the answer

  void validate() const;
};

enum class Summarizer { mean, max, sample };

Summarizer parse_summarizer(const std::string& name);
std::string summarizer_name(Summarizer kind);

// Uniform derangement of {0..B-1}: out[i] is the negative source for example
// i and never equals i. Rejection-samples permutations. Throws for B < 2.
std::vector<std::size_t> shuffle_negatives(std::size_t batch_size, std::mt19937_64& rng);

// Passage indices for one local sample: x is a uniformly drawn answer word;
// context holds the other answer words plus up to C unmasked words on each
// side of the span, clipped at the passage edges.
struct LocalIndices {
  std::size_t x = 0;
  std::vector<std::size_t> context;
};
LocalIndices sample_local_indices(std::size_t answer_start, std::size_t answer_end, const std::vector<bool>& mask,
                                  std::size_t context_window, std::mt19937_64& rng);

struct LocalPair {
  Tensor x;       // [1, d]
  Tensor rc;      // [|r^c|, d]
  Tensor x_bar;   // [1, d], from the assigned negative example
  Tensor rc_bar;  // [|r̄^c|, d]
};

// One pair per example; the negative side is the assigned example's own
// positive sample. Throws for batches smaller than 2 or empty contexts.
std::vector<LocalPair> sample_local_pairs(Graph& g, const EncodedBatch& batch, std::span<const std::size_t> assignment,
                                          std::size_t context_window, std::mt19937_64& rng);

// mean log g(x, r^c) + 1/2 mean log(1 - g(x, r̄^c)) + 1/2 mean log(1 - g(x̄, r^c)).
Tensor local_constraint(Graph& g, const Tensor& x, const Tensor& rc, const Tensor& x_bar, const Tensor& rc_bar,
                        const BilinearDiscriminator& disc);

// [M, d] answer slice -> [1, d]. mean: sigmoid(mean), max: sigmoid(max),
// sample: one uniformly chosen row, unsquashed.
Tensor summarize(Graph& g, const Tensor& answer, Summarizer kind, std::mt19937_64& rng);

// Question rows plus unmasked passage rows outside the answer span.
Tensor global_context(Graph& g, const EncodedExample& example);
Tensor answer_slice(Graph& g, const EncodedExample& example);

// mean log g(s, r) + 1/2 mean log(1 - g(s, r̄)) + 1/2 mean log(1 - g(s̄, r)).
Tensor global_constraint(Graph& g, const Tensor& s, const Tensor& r, const Tensor& s_bar, const Tensor& r_bar,
                         const BilinearDiscriminator& disc);

struct Discriminators {
  BilinearDiscriminator local;
  BilinearDiscriminator global;
  bool shared = false;  // global aliases local's weight

  static Discriminators make(std::size_t width, bool shared, std::mt19937_64& rng);
  std::vector<Tensor> parameters() const;
};

struct InfoLoss {
  Tensor loss;                    // L_info, scalar, >= 0
  std::optional<double> mean_lc;  // absent when alpha == 0
  std::optional<double> mean_gc;  // absent when beta == 0
};

// L_info = -(1/B) sum_i (alpha LC_i + beta GC_i). Terms with a zero weight are
// not built. Draw order: derangement, then local samples, then summaries.
InfoLoss qainfomax_loss(Graph& g, const EncodedBatch& batch, const RegularizerWeights& weights, Summarizer summarizer,
                        const Discriminators& discs, std::mt19937_64& rng);

}  // namespace infoqa
