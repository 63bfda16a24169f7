#pragma once

// Small pre-norm transformer encoder for extractive span QA.
//
// Question and passage are encoded jointly as [q_1 .. q_K, SEP, p_1 .. p_N]
// and split back afterwards, so passage vectors are question-conditioned.

#include <cstddef>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "infoqa/corpus.hpp"
#include "infoqa/tensor.hpp"

namespace infoqa {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ff_width = 128;
  std::size_t layers = 2;
  std::size_t max_positions = 192;  // joint sequence length K + 1 + N
  // false: fixed sinusoidal position table, not trained.
  bool learned_positions = false;
  // Adds a learned vector per token saying whether the token also occurs in
  // the other segment (passage token in the question, or the reverse).
  bool match_feature = true;

  void validate() const;
};

struct AttentionHead {
  Tensor wq, wk, wv;  // [d, d/heads]
};

struct LayerNorm {
  Tensor gamma, beta;  // [d]
};

struct Block {
  LayerNorm ln_attn;
  std::vector<AttentionHead> heads;
  Tensor wo;  // [d, d]
  LayerNorm ln_ff;
  Tensor w1, b1;  // [d, ff], [ff]
  Tensor w2, b2;  // [ff, d], [d]
};

class EncoderParams {
 public:
  EncoderParams() = default;
  EncoderParams(const ModelConfig& config, std::mt19937_64& rng);

  const ModelConfig& config() const { return config_; }

  Tensor token_embedding;     // [V, d]
  Tensor position_embedding;  // [max_positions, d]
  Tensor match_embedding;     // [2, d]; row 1 = token occurs in the other segment
  std::vector<Block> blocks;
  LayerNorm final_norm;
  Tensor w_start;  // [d, 1]
  Tensor w_end;    // [d, 1]

  // Trainable tensors under stable checkpoint names, e.g.
  // "blocks.0.attn.heads.2.wq". A fixed position table is not listed.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

 private:
  ModelConfig config_;
};

// Token ids for one example. answer_end is inclusive.
struct TokenizedExample {
  std::vector<std::size_t> question;
  std::vector<std::size_t> passage;
  std::size_t answer_start = 0;
  std::size_t answer_end = 0;
};

// Passage optionally extended by one distractor sentence at its end; the gold
// span indices are unaffected.
TokenizedExample tokenize(const Vocabulary& vocab, const QAExample& example, const Tokens* distractor = nullptr);

struct EncodedExample {
  Tensor rq;  // [K, d]
  Tensor rp;  // [N, d]
  std::size_t answer_start = 0;
  std::size_t answer_end = 0;
  // true = usable position. Encoding never pads, so every entry is true
  // unless a caller masks positions explicitly.
  std::vector<bool> mask;
};

struct EncodedBatch {
  std::vector<EncodedExample> examples;
  std::size_t size() const { return examples.size(); }
};

// Throws on ids >= V, empty question/passage, or K + 1 + N > max_positions.
EncodedExample encode(Graph& g, const EncoderParams& params, const TokenizedExample& example);
EncodedBatch encode_batch(Graph& g, const EncoderParams& params, std::span<const TokenizedExample> examples);

struct SpanLogits {
  Tensor start;  // [N, 1]
  Tensor end;    // [N, 1]
};

// start_i = w_s . r^p_i, end_i = w_e . r^p_i; masked positions are -inf.
SpanLogits span_logits(Graph& g, const EncoderParams& params, const Tensor& rp, const std::vector<bool>& mask);
// Per-position start/end probabilities.
std::pair<std::vector<double>, std::vector<double>> span_probabilities(Graph& g, const SpanLogits& logits);

// -log p_start(m) - log p_end(e) as a scalar tensor.
Tensor span_loss(Graph& g, const SpanLogits& logits, std::size_t start, std::size_t end);
// Batch mean of span_loss.
Tensor batch_span_loss(Graph& g, const EncoderParams& params, const EncodedBatch& batch);

// argmax of start_i + end_j over i <= j <= i + max_len - 1, ties to the
// smallest i then the smallest j.
std::pair<std::size_t, std::size_t> predict_span(std::span<const double> start, std::span<const double> end,
                                                 std::size_t max_len);

// Encodes without recording and decodes the best span.
std::pair<std::size_t, std::size_t> predict(const EncoderParams& params, const TokenizedExample& example,
                                            std::size_t max_len);

// Writes `path` (raw little-endian float64 values, concatenated in manifest
// order) and `path` + ".json" (config, vocabulary, names, shapes, offsets).
void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params, const Vocabulary& vocab);

struct Checkpoint {
  EncoderParams params;
  Vocabulary vocab;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace infoqa
