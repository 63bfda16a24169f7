#include "infoqa/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "infoqa/error.hpp"

namespace infoqa {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kNormEps = 1e-5;
constexpr double kEmbeddingStd = 0.1;

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

// U[-1/sqrt(fan_in), 1/sqrt(fan_in)]
Tensor linear_weight(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = dist(rng);
  return Tensor({fan_in, fan_out}, std::move(v), true);
}

// PE(p, 2i) = sin(p / 10000^(2i/d)), PE(p, 2i+1) = cos(same).
Tensor sinusoidal_table(std::size_t positions, std::size_t d) {
  std::vector<double> v(positions * d);
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle = static_cast<double>(p) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      v[p * d + i] = std::sin(angle);
      if (i + 1 < d) v[p * d + i + 1] = std::cos(angle);
    }
  return Tensor({positions, d}, std::move(v));
}

LayerNorm fresh_norm(std::size_t d) { return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)}; }

Tensor layer_norm(Graph& g, const Tensor& x, const LayerNorm& ln) {
  const Tensor centered = g.subtract(x, g.mean(x, 1, true));
  const Tensor var = g.mean(g.multiply(centered, centered), 1, true);
  const Tensor inv_std = g.exp(g.scale(g.log(g.add(var, Tensor::full({1}, kNormEps))), -0.5));
  return g.add(g.multiply(g.multiply(centered, inv_std), ln.gamma), ln.beta);
}

// x * sigmoid(1.702 x), a smooth GELU approximation built from primitives.
Tensor gelu(Graph& g, const Tensor& x) { return g.multiply(x, g.sigmoid(g.scale(x, 1.702))); }

Tensor attention(Graph& g, const Tensor& x, const Block& block, std::size_t head_width) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_width));
  std::vector<Tensor> outs;
  outs.reserve(block.heads.size());
  for (const AttentionHead& h : block.heads) {
    const Tensor q = g.matmul(x, h.wq);
    const Tensor k = g.matmul(x, h.wk);
    const Tensor v = g.matmul(x, h.wv);
    const Tensor scores = g.scale(g.matmul(q, g.transpose(k)), scale);
    outs.push_back(g.matmul(softmax(g, scores, 1), v));
  }
  return g.matmul(g.concat(outs, 1), block.wo);
}

std::vector<std::size_t> iota(std::size_t from, std::size_t count) {
  std::vector<std::size_t> v(count);
  std::iota(v.begin(), v.end(), from);
  return v;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size == 0) throw config_error("model: vocab_size must be positive");
  if (d_model == 0 || heads == 0 || d_model % heads != 0)
    throw config_error("model: d_model (" + std::to_string(d_model) + ") must be a positive multiple of heads (" +
                       std::to_string(heads) + ")");
  if (ff_width == 0) throw config_error("model: ff_width must be positive");
  if (max_positions < 3) throw config_error("model: max_positions must be at least 3");
}

EncoderParams::EncoderParams(const ModelConfig& config, std::mt19937_64& rng) : config_(config) {
  config.validate();
  const std::size_t d = config.d_model;
  const std::size_t dh = d / config.heads;
  token_embedding = normal_tensor({config.vocab_size, d}, kEmbeddingStd, rng);
  position_embedding = config.learned_positions ? normal_tensor({config.max_positions, d}, kEmbeddingStd, rng)
                                                : sinusoidal_table(config.max_positions, d);
  if (config.match_feature) match_embedding = normal_tensor({2, d}, kEmbeddingStd, rng);
  blocks.resize(config.layers);
  for (Block& b : blocks) {
    b.ln_attn = fresh_norm(d);
    b.heads.resize(config.heads);
    for (AttentionHead& h : b.heads) {
      h.wq = linear_weight(d, dh, rng);
      h.wk = linear_weight(d, dh, rng);
      h.wv = linear_weight(d, dh, rng);
    }
    b.wo = linear_weight(d, d, rng);
    b.ln_ff = fresh_norm(d);
    b.w1 = linear_weight(d, config.ff_width, rng);
    b.b1 = Tensor::zeros({config.ff_width}, true);
    b.w2 = linear_weight(config.ff_width, d, rng);
    b.b2 = Tensor::zeros({d}, true);
  }
  final_norm = fresh_norm(d);
  w_start = linear_weight(d, 1, rng);
  w_end = linear_weight(d, 1, rng);
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed.token", token_embedding);
  if (config_.learned_positions) out.emplace_back("embed.position", position_embedding);
  if (config_.match_feature) out.emplace_back("embed.match", match_embedding);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const Block& b = blocks[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    out.emplace_back(p + "ln_attn.gamma", b.ln_attn.gamma);
    out.emplace_back(p + "ln_attn.beta", b.ln_attn.beta);
    for (std::size_t h = 0; h < b.heads.size(); ++h) {
      const std::string hp = p + "attn.heads." + std::to_string(h) + ".";
      out.emplace_back(hp + "wq", b.heads[h].wq);
      out.emplace_back(hp + "wk", b.heads[h].wk);
      out.emplace_back(hp + "wv", b.heads[h].wv);
    }
    out.emplace_back(p + "attn.wo", b.wo);
    out.emplace_back(p + "ln_ff.gamma", b.ln_ff.gamma);
    out.emplace_back(p + "ln_ff.beta", b.ln_ff.beta);
    out.emplace_back(p + "ff.w1", b.w1);
    out.emplace_back(p + "ff.b1", b.b1);
    out.emplace_back(p + "ff.w2", b.w2);
    out.emplace_back(p + "ff.b2", b.b2);
  }
  out.emplace_back("final_norm.gamma", final_norm.gamma);
  out.emplace_back("final_norm.beta", final_norm.beta);
  out.emplace_back("head.start", w_start);
  out.emplace_back("head.end", w_end);
  return out;
}

std::vector<Tensor> EncoderParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : parameters()) n += t.numel();
  return n;
}

TokenizedExample tokenize(const Vocabulary& vocab, const QAExample& example, const Tokens* distractor) {
  TokenizedExample out;
  out.question = vocab.ids(example.question);
  out.passage = vocab.ids(example.passage);
  if (distractor != nullptr) {
    const auto extra = vocab.ids(*distractor);
    out.passage.insert(out.passage.end(), extra.begin(), extra.end());
  }
  out.answer_start = example.answer_start;
  out.answer_end = example.answer_end;
  return out;
}

EncodedExample encode(Graph& g, const EncoderParams& params, const TokenizedExample& ex) {
  const ModelConfig& cfg = params.config();
  const std::size_t k = ex.question.size();
  const std::size_t n = ex.passage.size();
  if (k == 0 || n == 0) throw data_error("encode: question and passage must be non-empty");
  const std::size_t total = k + 1 + n;
  if (total > cfg.max_positions)
    throw data_error("encode: sequence length " + std::to_string(total) + " exceeds max_positions " +
                     std::to_string(cfg.max_positions));
  if (ex.answer_start > ex.answer_end || ex.answer_end >= n)
    throw data_error("encode: answer span [" + std::to_string(ex.answer_start) + ", " +
                     std::to_string(ex.answer_end) + "] outside passage of length " + std::to_string(n));

  std::vector<std::size_t> ids;
  ids.reserve(total);
  ids.insert(ids.end(), ex.question.begin(), ex.question.end());
  ids.push_back(0);  // separator
  ids.insert(ids.end(), ex.passage.begin(), ex.passage.end());
  for (std::size_t id : ids)
    if (id >= cfg.vocab_size)
      throw data_error("encode: token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(cfg.vocab_size));

  const std::vector<std::size_t> positions = iota(0, total);
  Tensor h = g.add(g.gather_rows(params.token_embedding, ids), g.gather_rows(params.position_embedding, positions));
  if (cfg.match_feature) {
    const std::set<std::size_t> in_question(ex.question.begin(), ex.question.end());
    const std::set<std::size_t> in_passage(ex.passage.begin(), ex.passage.end());
    std::vector<std::size_t> flags;
    flags.reserve(total);
    for (std::size_t id : ex.question) flags.push_back(in_passage.count(id));
    flags.push_back(0);
    for (std::size_t id : ex.passage) flags.push_back(in_question.count(id));
    h = g.add(h, g.gather_rows(params.match_embedding, flags));
  }
  const std::size_t dh = cfg.d_model / cfg.heads;
  for (const Block& b : params.blocks) {
    h = g.add(h, attention(g, layer_norm(g, h, b.ln_attn), b, dh));
    const Tensor hidden = gelu(g, g.add(g.matmul(layer_norm(g, h, b.ln_ff), b.w1), b.b1));
    h = g.add(h, g.add(g.matmul(hidden, b.w2), b.b2));
  }
  h = layer_norm(g, h, params.final_norm);

  EncodedExample out;
  out.rq = g.gather_rows(h, iota(0, k));
  out.rp = g.gather_rows(h, iota(k + 1, n));
  out.answer_start = ex.answer_start;
  out.answer_end = ex.answer_end;
  out.mask.assign(n, true);
  return out;
}

EncodedBatch encode_batch(Graph& g, const EncoderParams& params, std::span<const TokenizedExample> examples) {
  EncodedBatch batch;
  batch.examples.reserve(examples.size());
  for (const auto& ex : examples) batch.examples.push_back(encode(g, params, ex));
  return batch;
}

SpanLogits span_logits(Graph& g, const EncoderParams& params, const Tensor& rp, const std::vector<bool>& mask) {
  if (rp.rank() != 2 || rp.dim(0) == 0) throw shape_error("span_logits: expected non-empty [N, d] passage");
  if (mask.size() != rp.dim(0))
    throw shape_error("span_logits: mask length " + std::to_string(mask.size()) + " vs passage length " +
                      std::to_string(rp.dim(0)));
  SpanLogits out{g.matmul(rp, params.w_start), g.matmul(rp, params.w_end)};
  if (std::find(mask.begin(), mask.end(), true) == mask.end())
    throw data_error("span_logits: every passage position is masked");
  if (std::find(mask.begin(), mask.end(), false) != mask.end()) {
    std::vector<double> bias(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) bias[i] = mask[i] ? 0.0 : -std::numeric_limits<double>::infinity();
    const Tensor b({mask.size(), 1}, std::move(bias));
    out.start = g.add(out.start, b);
    out.end = g.add(out.end, b);
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> span_probabilities(Graph& g, const SpanLogits& logits) {
  const Tensor ps = softmax(g, logits.start, 0);
  const Tensor pe = softmax(g, logits.end, 0);
  return {{ps.values().begin(), ps.values().end()}, {pe.values().begin(), pe.values().end()}};
}

Tensor span_loss(Graph& g, const SpanLogits& logits, std::size_t start, std::size_t end) {
  const std::size_t n = logits.start.dim(0);
  if (start >= n || end >= n)
    throw data_error("span_loss: gold index (" + std::to_string(start) + ", " + std::to_string(end) +
                     ") outside passage of length " + std::to_string(n));
  const std::size_t s_row[] = {start};
  const std::size_t e_row[] = {end};
  const Tensor ls = g.gather_rows(log_softmax(g, logits.start, 0), s_row);
  const Tensor le = g.gather_rows(log_softmax(g, logits.end, 0), e_row);
  return g.scale(g.mean(g.add(ls, le)), -1.0);
}

Tensor batch_span_loss(Graph& g, const EncoderParams& params, const EncodedBatch& batch) {
  if (batch.size() == 0) throw data_error("batch_span_loss: empty batch");
  Tensor total;
  for (const auto& ex : batch.examples) {
    const SpanLogits lg = span_logits(g, params, ex.rp, ex.mask);
    const Tensor l = span_loss(g, lg, ex.answer_start, ex.answer_end);
    total = total.defined() ? g.add(total, l) : l;
  }
  return g.scale(total, 1.0 / static_cast<double>(batch.size()));
}

std::pair<std::size_t, std::size_t> predict_span(std::span<const double> start, std::span<const double> end,
                                                 std::size_t max_len) {
  if (start.empty() || start.size() != end.size())
    throw shape_error("predict_span: start/end logits must be non-empty and equally long");
  if (max_len == 0) throw usage_error("predict_span: max_len must be at least 1");
  std::pair<std::size_t, std::size_t> best{0, 0};
  double best_score = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < start.size(); ++i) {
    const std::size_t last = std::min(end.size() - 1, i + max_len - 1);
    for (std::size_t j = i; j <= last; ++j) {
      const double s = start[i] + end[j];
      if (!found || s > best_score) {
        best_score = s;
        best = {i, j};
        found = true;
      }
    }
  }
  return best;
}

std::pair<std::size_t, std::size_t> predict(const EncoderParams& params, const TokenizedExample& example,
                                            std::size_t max_len) {
  Graph g(Graph::Mode::inference);
  const EncodedExample enc = encode(g, params, example);
  const SpanLogits lg = span_logits(g, params, enc.rp, enc.mask);
  return predict_span(lg.start.values(), lg.end.values(), max_len);
}

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params, const Vocabulary& vocab) {
  static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");
  const ModelConfig& cfg = params.config();
  Json manifest;
  manifest["format"] = "infoqa-checkpoint-v1";
  manifest["config"] = {{"vocab_size", cfg.vocab_size}, {"d_model", cfg.d_model},     {"heads", cfg.heads},
                        {"ff_width", cfg.ff_width},     {"layers", cfg.layers},       {"max_positions", cfg.max_positions},
                        {"learned_positions", cfg.learned_positions}, {"match_feature", cfg.match_feature}};
  manifest["vocabulary"] = vocab.tokens();
  Json entries = Json::array();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("save_checkpoint: cannot open " + path.string());
  std::size_t offset = 0;
  for (const auto& [name, t] : params.named_parameters()) {
    entries.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    const auto v = t.values();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    offset += v.size();
  }
  manifest["entries"] = std::move(entries);
  manifest["total_values"] = offset;
  if (!out) throw io_error("save_checkpoint: write failed for " + path.string());

  std::filesystem::path mpath = path;
  mpath += ".json";
  std::ofstream mout(mpath, std::ios::trunc);
  if (!mout) throw io_error("save_checkpoint: cannot open " + mpath.string());
  mout << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::filesystem::path mpath = path;
  mpath += ".json";
  std::ifstream min(mpath);
  if (!min) throw io_error("load_checkpoint: cannot open " + mpath.string());
  Json manifest;
  try {
    manifest = Json::parse(min);
  } catch (const nlohmann::json::exception& e) {
    throw data_error("load_checkpoint: malformed manifest " + mpath.string() + ": " + e.what());
  }

  Checkpoint ck;
  ModelConfig cfg;
  try {
    const Json& c = manifest.at("config");
    cfg.vocab_size = c.at("vocab_size").get<std::size_t>();
    cfg.d_model = c.at("d_model").get<std::size_t>();
    cfg.heads = c.at("heads").get<std::size_t>();
    cfg.ff_width = c.at("ff_width").get<std::size_t>();
    cfg.layers = c.at("layers").get<std::size_t>();
    cfg.max_positions = c.at("max_positions").get<std::size_t>();
    cfg.learned_positions = c.at("learned_positions").get<bool>();
    cfg.match_feature = c.at("match_feature").get<bool>();
    Tokens tokens = manifest.at("vocabulary").get<Tokens>();
    if (tokens.empty() || tokens.front() != Vocabulary::kSeparator)
      throw data_error("load_checkpoint: vocabulary must start with the separator");
    ck.vocab = Vocabulary(Tokens(tokens.begin() + 1, tokens.end()));
  } catch (const nlohmann::json::exception& e) {
    throw data_error("load_checkpoint: manifest field error: " + std::string(e.what()));
  }
  if (ck.vocab.size() != cfg.vocab_size) throw data_error("load_checkpoint: vocabulary size disagrees with config");

  std::mt19937_64 unused(0);
  ck.params = EncoderParams(cfg, unused);

  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_checkpoint: cannot open " + path.string());
  std::vector<double> data;
  {
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % sizeof(double) != 0) throw data_error("load_checkpoint: truncated value file " + path.string());
    data.resize(bytes / sizeof(double));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  }

  const Json& entries = manifest.at("entries");
  auto named = ck.params.named_parameters();
  if (entries.size() != named.size())
    throw data_error("load_checkpoint: manifest lists " + std::to_string(entries.size()) + " arrays, model has " +
                     std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [name, t] = named[i];
    const Json& e = entries[i];
    if (e.at("name").get<std::string>() != name)
      throw data_error("load_checkpoint: expected array '" + name + "', found '" + e.at("name").get<std::string>() + "'");
    if (e.at("shape").get<Shape>() != t.shape()) throw data_error("load_checkpoint: shape mismatch for '" + name + "'");
    const auto offset = e.at("offset").get<std::size_t>();
    if (offset + t.numel() > data.size()) throw data_error("load_checkpoint: value file too short for '" + name + "'");
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(offset), t.numel(), t.mutable_values().begin());
  }
  return ck;
}

}  // namespace infoqa
