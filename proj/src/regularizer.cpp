#include "infoqa/regularizer.hpp"

#include <algorithm>
#include <numeric>

#include "infoqa/error.hpp"

namespace infoqa {

namespace {

std::size_t uniform_index(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

Tensor rows(Graph& g, const Tensor& t, const std::vector<std::size_t>& idx) { return g.gather_rows(t, idx); }

}  // namespace

void RegularizerWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0))
    throw config_error("regularizer: alpha, beta and gamma must be non-negative (got " + std::to_string(alpha) + ", " +
                       std::to_string(beta) + ", " + std::to_string(gamma) + ")");
}

Summarizer parse_summarizer(const std::string& name) {
  if (name == "mean") return Summarizer::mean;
  if (name == "max") return Summarizer::max;
  if (name == "sample") return Summarizer::sample;
  throw config_error("unknown summarizer '" + name + "' (expected mean, max or sample)");
}

std::string summarizer_name(Summarizer kind) {
  switch (kind) {
    case Summarizer::mean: return "mean";
    case Summarizer::max: return "max";
    case Summarizer::sample: return "sample";
  }
  return "?";
}

std::vector<std::size_t> shuffle_negatives(std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size < 2)
    throw data_error("shuffle_negatives: batch size " + std::to_string(batch_size) + " has no derangement");
  std::vector<std::size_t> perm(batch_size);
  for (;;) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    bool fixed_point = false;
    for (std::size_t i = 0; i < batch_size && !fixed_point; ++i) fixed_point = perm[i] == i;
    if (!fixed_point) return perm;
  }
}

LocalIndices sample_local_indices(std::size_t answer_start, std::size_t answer_end, const std::vector<bool>& mask,
                                  std::size_t context_window, std::mt19937_64& rng) {
  const std::size_t n = mask.size();
  if (answer_start > answer_end || answer_end >= n)
    throw data_error("local sample: answer span [" + std::to_string(answer_start) + ", " + std::to_string(answer_end) +
                     "] outside passage of length " + std::to_string(n));
  LocalIndices out;
  out.x = answer_start + uniform_index(answer_end - answer_start + 1, rng);
  const std::size_t lo = answer_start >= context_window ? answer_start - context_window : 0;
  const std::size_t hi = std::min(n - 1, answer_end + context_window);
  for (std::size_t i = lo; i <= hi; ++i)
    if (i != out.x && mask[i]) out.context.push_back(i);
  if (out.context.empty()) throw data_error("local sample: empty context for a single-word answer with no neighbours");
  return out;
}

std::vector<LocalPair> sample_local_pairs(Graph& g, const EncodedBatch& batch, std::span<const std::size_t> assignment,
                                          std::size_t context_window, std::mt19937_64& rng) {
  const std::size_t b = batch.size();
  if (b < 2) throw data_error("local pairs: batch size " + std::to_string(b) + " leaves no negative example");
  if (assignment.size() != b) throw shape_error("local pairs: assignment length differs from batch size");
  std::vector<Tensor> xs(b), contexts(b);
  for (std::size_t i = 0; i < b; ++i) {
    const EncodedExample& ex = batch.examples[i];
    const LocalIndices idx = sample_local_indices(ex.answer_start, ex.answer_end, ex.mask, context_window, rng);
    xs[i] = rows(g, ex.rp, {idx.x});
    contexts[i] = rows(g, ex.rp, idx.context);
  }
  std::vector<LocalPair> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = assignment[i];
    if (j >= b || j == i) throw data_error("local pairs: assignment is not a derangement");
    out[i] = {xs[i], contexts[i], xs[j], contexts[j]};
  }
  return out;
}

Tensor local_constraint(Graph& g, const Tensor& x, const Tensor& rc, const Tensor& x_bar, const Tensor& rc_bar,
                        const BilinearDiscriminator& disc) {
  if (!rc.defined() || !rc_bar.defined() || rc.rank() != 2 || rc_bar.rank() != 2)
    throw data_error("local constraint: positive and negative context sets must be non-empty");
  return multiview_js_bound(g, disc.probs(g, x, rc), disc.probs(g, x, rc_bar), disc.probs(g, x_bar, rc));
}

Tensor summarize(Graph& g, const Tensor& answer, Summarizer kind, std::mt19937_64& rng) {
  if (answer.rank() != 2 || answer.dim(0) == 0) throw data_error("summarize: empty answer slice");
  switch (kind) {
    case Summarizer::mean: return g.sigmoid(g.mean(answer, 0, true));
    case Summarizer::max: return g.sigmoid(g.max(answer, 0, true));
    case Summarizer::sample: return rows(g, answer, {uniform_index(answer.dim(0), rng)});
  }
  throw config_error("summarize: unknown summarizer");
}

Tensor answer_slice(Graph& g, const EncodedExample& example) {
  std::vector<std::size_t> idx(example.answer_end - example.answer_start + 1);
  std::iota(idx.begin(), idx.end(), example.answer_start);
  return rows(g, example.rp, idx);
}

Tensor global_context(Graph& g, const EncodedExample& example) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < example.mask.size(); ++i)
    if (example.mask[i] && (i < example.answer_start || i > example.answer_end)) keep.push_back(i);
  std::vector<Tensor> parts;
  if (example.rq.dim(0) > 0) parts.push_back(example.rq);
  if (!keep.empty()) parts.push_back(rows(g, example.rp, keep));
  if (parts.empty()) throw data_error("global context: no question or passage words outside the answer");
  return parts.size() == 1 ? parts.front() : g.concat(parts, 0);
}

Tensor global_constraint(Graph& g, const Tensor& s, const Tensor& r, const Tensor& s_bar, const Tensor& r_bar,
                         const BilinearDiscriminator& disc) {
  if (!r.defined() || !r_bar.defined() || r.rank() != 2 || r_bar.rank() != 2)
    throw data_error("global constraint: context sets must be non-empty");
  return multiview_js_bound(g, disc.probs(g, s, r), disc.probs(g, s, r_bar), disc.probs(g, s_bar, r));
}

Discriminators Discriminators::make(std::size_t width, bool shared, std::mt19937_64& rng) {
  Discriminators d;
  d.local = BilinearDiscriminator(width, rng);
  d.local.weight().set_requires_grad(true);
  d.shared = shared;
  if (shared) {
    d.global = d.local;
  } else {
    d.global = BilinearDiscriminator(width, rng);
    d.global.weight().set_requires_grad(true);
  }
  return d;
}

std::vector<Tensor> Discriminators::parameters() const {
  if (shared) return {local.weight()};
  return {local.weight(), global.weight()};
}

InfoLoss qainfomax_loss(Graph& g, const EncodedBatch& batch, const RegularizerWeights& weights, Summarizer summarizer,
                        const Discriminators& discs, std::mt19937_64& rng) {
  weights.validate();
  const std::size_t b = batch.size();
  InfoLoss out;
  if (weights.alpha == 0.0 && weights.beta == 0.0) {
    out.loss = Tensor::scalar(0.0);
    return out;
  }
  const std::vector<std::size_t> perm = shuffle_negatives(b, rng);
  Tensor total;
  auto accumulate = [&](const Tensor& term, double weight) {
    const Tensor w = g.scale(term, weight);
    total = total.defined() ? g.add(total, w) : w;
  };

  if (weights.alpha > 0.0) {
    const auto pairs = sample_local_pairs(g, batch, perm, weights.context_window, rng);
    double sum = 0.0;
    for (const LocalPair& p : pairs) {
      const Tensor lc = local_constraint(g, p.x, p.rc, p.x_bar, p.rc_bar, discs.local);
      sum += lc.item();
      accumulate(lc, weights.alpha);
    }
    out.mean_lc = sum / static_cast<double>(b);
  }

  if (weights.beta > 0.0) {
    std::vector<Tensor> s(b), r(b);
    for (std::size_t i = 0; i < b; ++i) {
      s[i] = summarize(g, answer_slice(g, batch.examples[i]), summarizer, rng);
      r[i] = global_context(g, batch.examples[i]);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t j = perm[i];
      const Tensor gc = global_constraint(g, s[i], r[i], s[j], r[j], discs.global);
      sum += gc.item();
      accumulate(gc, weights.beta);
    }
    out.mean_gc = sum / static_cast<double>(b);
  }

  out.loss = g.scale(total, -1.0 / static_cast<double>(b));
  return out;
}

}  // namespace infoqa
