#pragma once

// Training, adversarial evaluation, ablation reports and estimator sanity
// runs. Everything here is driven by a flat dotted-key RunConfig.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "infoqa/corpus.hpp"
#include "infoqa/model.hpp"
#include "infoqa/optim.hpp"
#include "infoqa/regularizer.hpp"

namespace infoqa {

// Flat `key = value` configuration. The key set is fixed by defaults();
// anything else is rejected.
class RunConfig {
 public:
  static RunConfig defaults();

  // Lines are `key = value`; blank lines and lines starting with '#' are skipped.
  void load_file(const std::filesystem::path& path);
  void parse_text(const std::string& text, const std::string& source);
  // "key=value"
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Fully resolved config, one `key = value` per line in key order.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

enum class Variant { baseline, lc, gc, lc_gc };
Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);
// Report row label: "baseline", "+LC", "+GC", "+LC+GC".
std::string variant_label(Variant v);

struct DataSettings {
  std::filesystem::path corpus_dir;  // empty: generate in memory
  CorpusOptions corpus;
  double confounder_rate = 0.5;
};

struct TrainSettings {
  std::uint64_t seed = 1;
  ModelConfig model;  // vocab_size filled from the vocabulary
  AdamOptions adam;
  std::size_t batch_size = 16;
  std::size_t steps = 2000;
  RegularizerWeights weights;
  Summarizer summarizer = Summarizer::mean;
  bool shared_discriminator = false;
  std::size_t log_every = 50;
  std::size_t max_answer_len = 5;
  DataSettings data;

  static TrainSettings from_config(const RunConfig& config);
};

// Builds (or loads) the corpus described by the data settings.
Corpus load_or_generate_corpus(const DataSettings& data);

struct LogRecord {
  std::size_t step = 0;  // 1-based optimizer step at the end of the window
  double l_span = 0.0;   // window means
  std::optional<double> l_info;
  std::optional<double> mean_lc;
  std::optional<double> mean_gc;
};

struct TrainResult {
  EncoderParams params;
  Discriminators discs;
  std::vector<LogRecord> log;
  std::size_t steps = 0;
  double seconds = 0.0;       // wall clock of the optimization loop
  double cpu_seconds = 0.0;   // process CPU time of the same loop
  double iter_per_sec = 0.0;  // steps / seconds
};

// Gradient descent on L = L_span + gamma * L_info (baseline: L_span only).
// Model init and batch order depend on the seed only, so variants sharing a
// seed see identical data. Throws a numeric error on a non-finite loss.
TrainResult train(const TrainSettings& settings, Variant variant, const std::vector<QAExample>& examples,
                  const Vocabulary& vocab);

// First line: {"started_at", "iter_per_sec", "seconds", ...}; one record per
// line after that. Only the first line carries timing.
void write_training_log(const std::filesystem::path& path, const TrainResult& result, const std::string& header_time);

// Multiset token overlap F1; 0 for an empty prediction.
double token_f1(const Tokens& predicted, const Tokens& gold);

enum class EvalMode { clean, addsent, addonesent };
EvalMode parse_eval_mode(const std::string& name);

struct ExampleScore {
  double clean_f1 = 0.0;
  double clean_em = 0.0;
  double addsent_f1 = 0.0;     // min over the candidate pool
  double addonesent_f1 = 0.0;  // one rng-chosen candidate
  std::size_t addonesent_choice = 0;
};

struct EvalResult {
  std::vector<ExampleScore> examples;
  double clean_f1 = 0.0;
  double clean_em = 0.0;
  double addsent_f1 = 0.0;
  double addonesent_f1 = 0.0;
  bool adversarial = false;  // false when only clean was evaluated
};

// clean only, or clean plus both adversarial modes sharing one candidate
// pool. The AddOneSent choice stream is seeded from addonesent_seed. Throws
// when adversarial modes are requested and an example has no distractors.
EvalResult evaluate(const EncoderParams& params, const Vocabulary& vocab, const std::vector<QAExample>& examples,
                    std::size_t max_answer_len, bool adversarial, std::uint64_t addonesent_seed);

struct ReportRow {
  std::string variant;
  std::uint64_t seed = 0;
  double clean_f1 = 0.0;
  double clean_em = 0.0;
  double addsent_f1 = 0.0;
  double addonesent_f1 = 0.0;
  double iter_per_sec = 0.0;
  double seconds = 0.0;  // wall clock of training plus evaluation; not reported
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<Variant> variants{Variant::baseline, Variant::lc, Variant::gc, Variant::lc_gc};
  bool summarizer_sweep = false;  // adds +LC+GC rows with max and sample summarizers
  std::ostream* progress = nullptr;
};

struct AblationReport {
  std::vector<ReportRow> rows;  // run order

  // Per-metric best over seeds; iter_per_sec is the mean over seeds.
  ReportRow best(const std::string& variant) const;
  bool has(const std::string& variant) const;

  // variant,seed,clean_f1,clean_em,addsent_f1,addonesent_f1,iter_per_sec
  std::string csv() const;
  // Ablation table (baseline, +LC, +GC, +LC+GC) with slowdown vs baseline,
  // then the summarizer table when present. The first line holds the
  // timestamp and is the only non-deterministic line apart from timing cells.
  std::string markdown(const std::string& header_time) const;
};

// Row name of a summarizer-sweep run, e.g. "lc_gc[max]". The mean row is
// the plain lc_gc run.
std::string sweep_name(Summarizer s);

AblationReport ablate(const RunConfig& config, const AblationOptions& options);

struct SanityRow {
  std::string name;
  double exact = 0.0;     // true MI in nats
  double dv = 0.0;        // held-out DV estimate
  double js = 0.0;        // held-out JS objective of the JS-trained critic
  double lower = 0.0;     // acceptance window for dv
  double upper = 0.0;
  bool pass = false;
};

struct SanityReport {
  std::vector<SanityRow> rows;
  double shift_invariance_error = 0.0;  // max |dv(s + c) - dv(s)| over random trials
  bool pass() const;
  std::string text() const;
};

struct SanityOptions {
  std::uint64_t seed = 1;
  std::size_t samples = 4000;
  CriticOptions critic;
};

SanityReport mi_sanity(const SanityOptions& options);

// Current UTC time, ISO 8601.
std::string utc_timestamp();

}  // namespace infoqa
