#include "infoqa/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "infoqa/error.hpp"

namespace infoqa {

namespace {

using Json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(seq);
}

// Stream tags: one independent generator per purpose.
constexpr std::uint32_t kInitStream = 1;
constexpr std::uint32_t kOrderStream = 2;
constexpr std::uint32_t kDiscStream = 3;
constexpr std::uint32_t kRegStream = 4;
constexpr std::uint32_t kAddOneSentStream = 5;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

Tokens span_tokens(const Tokens& passage, std::pair<std::size_t, std::size_t> span) {
  return Tokens(passage.begin() + static_cast<std::ptrdiff_t>(span.first),
                passage.begin() + static_cast<std::ptrdiff_t>(span.second) + 1);
}

}  // namespace

// ---------------------------------------------------------------- config

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.values_ = {
      {"seed", "1"},
      {"data.corpus_dir", ""},
      {"data.seed", "1"},
      {"data.train_size", "2000"},
      {"data.eval_size", "500"},
      {"data.distractors_per_example", "5"},
      {"data.confounder_rate", "0.5"},
      {"model.d_model", "64"},
      {"model.heads", "4"},
      {"model.ff_width", "128"},
      {"model.layers", "2"},
      {"model.max_positions", "192"},
      {"model.learned_positions", "false"},
      {"model.match_feature", "true"},
      {"optim.lr", "0.001"},
      {"optim.batch_size", "16"},
      {"optim.steps", "2000"},
      {"lc.alpha", "1"},
      {"lc.context_window", "5"},
      {"gc.beta", "0.5"},
      {"gc.summarizer", "mean"},
      {"reg.gamma", "0.3"},
      {"reg.shared_discriminator", "false"},
      {"eval.max_answer_len", "5"},
      {"log.every", "50"},
  };
  return c;
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  parse_text(ss.str(), path.string());
}

void RunConfig::parse_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error(source + ":" + std::to_string(number) + ": expected `key = value`, got '" + t + "'");
    try {
      set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const Error& e) {
      throw config_error(source + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw config_error("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw config_error("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size() || !std::isfinite(out))
    throw config_error("config key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size() || v.front() == '-')
    throw config_error("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t RunConfig::get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("config key '" + key + "' expects true or false, got '" + v + "'");
}

std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

Variant parse_variant(const std::string& name) {
  if (name == "baseline") return Variant::baseline;
  if (name == "lc") return Variant::lc;
  if (name == "gc") return Variant::gc;
  if (name == "lc_gc") return Variant::lc_gc;
  throw usage_error("unknown variant '" + name + "' (expected baseline, lc, gc or lc_gc)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::lc: return "lc";
    case Variant::gc: return "gc";
    case Variant::lc_gc: return "lc_gc";
  }
  return "?";
}

std::string variant_label(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::lc: return "+LC";
    case Variant::gc: return "+GC";
    case Variant::lc_gc: return "+LC+GC";
  }
  return "?";
}

TrainSettings TrainSettings::from_config(const RunConfig& c) {
  TrainSettings s;
  s.seed = c.get_u64("seed");
  s.model.d_model = c.get_size("model.d_model");
  s.model.heads = c.get_size("model.heads");
  s.model.ff_width = c.get_size("model.ff_width");
  s.model.layers = c.get_size("model.layers");
  s.model.max_positions = c.get_size("model.max_positions");
  s.model.learned_positions = c.get_bool("model.learned_positions");
  s.model.match_feature = c.get_bool("model.match_feature");
  s.adam.lr = c.get_double("optim.lr");
  if (!(s.adam.lr > 0.0)) throw config_error("optim.lr must be positive");
  s.batch_size = c.get_size("optim.batch_size");
  if (s.batch_size < 2) throw config_error("optim.batch_size must be at least 2 (negatives come from the batch)");
  s.steps = c.get_size("optim.steps");
  s.weights.alpha = c.get_double("lc.alpha");
  s.weights.beta = c.get_double("gc.beta");
  s.weights.gamma = c.get_double("reg.gamma");
  s.weights.context_window = c.get_size("lc.context_window");
  s.weights.validate();
  s.summarizer = parse_summarizer(c.get("gc.summarizer"));
  s.shared_discriminator = c.get_bool("reg.shared_discriminator");
  s.log_every = c.get_size("log.every");
  if (s.log_every == 0) throw config_error("log.every must be positive");
  s.max_answer_len = c.get_size("eval.max_answer_len");
  if (s.max_answer_len == 0) throw config_error("eval.max_answer_len must be positive");
  s.data.corpus_dir = c.get("data.corpus_dir");
  s.data.corpus.seed = c.get_u64("data.seed");
  s.data.corpus.train_size = c.get_size("data.train_size");
  s.data.corpus.eval_size = c.get_size("data.eval_size");
  s.data.corpus.distractors_per_example = c.get_size("data.distractors_per_example");
  s.data.confounder_rate = c.get_double("data.confounder_rate");
  if (s.data.confounder_rate < 0.0 || s.data.confounder_rate > 1.0)
    throw config_error("data.confounder_rate must lie in [0, 1]");
  return s;
}

Corpus load_or_generate_corpus(const DataSettings& data) {
  if (!data.corpus_dir.empty()) {
    return {read_corpus(data.corpus_dir / "train.jsonl"), read_corpus(data.corpus_dir / "eval.jsonl")};
  }
  WorldSpec world = WorldSpec::standard();
  world.confounder_rate = data.confounder_rate;
  return generate_corpus(world, data.corpus);
}

// ---------------------------------------------------------------- training

TrainResult train(const TrainSettings& settings, Variant variant, const std::vector<QAExample>& examples,
                  const Vocabulary& vocab) {
  if (examples.size() < settings.batch_size)
    throw data_error("train: " + std::to_string(examples.size()) + " examples cannot fill a batch of " +
                     std::to_string(settings.batch_size));
  std::vector<TokenizedExample> data;
  data.reserve(examples.size());
  for (const auto& ex : examples) data.push_back(tokenize(vocab, ex));

  RegularizerWeights weights = settings.weights;
  if (variant == Variant::lc) weights.beta = 0.0;
  if (variant == Variant::gc) weights.alpha = 0.0;
  const bool regularized = variant != Variant::baseline && (weights.alpha > 0.0 || weights.beta > 0.0);

  ModelConfig mc = settings.model;
  mc.vocab_size = vocab.size();
  auto init_rng = stream(settings.seed, kInitStream);
  auto order_rng = stream(settings.seed, kOrderStream);
  auto disc_rng = stream(settings.seed, kDiscStream);
  auto reg_rng = stream(settings.seed, kRegStream);

  TrainResult result;
  result.params = EncoderParams(mc, init_rng);
  std::vector<Tensor> trainable = result.params.parameters();
  if (regularized) {
    result.discs = Discriminators::make(mc.d_model, settings.shared_discriminator, disc_rng);
    for (const Tensor& t : result.discs.parameters()) trainable.push_back(t);
  }
  Adam opt(trainable, settings.adam);

  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();
  std::vector<TokenizedExample> batch(settings.batch_size);

  LogRecord window;
  double info_sum = 0.0, lc_sum = 0.0, gc_sum = 0.0;
  std::size_t in_window = 0;

  const auto t0 = std::chrono::steady_clock::now();
  const std::clock_t c0 = std::clock();
  for (std::size_t step = 1; step <= settings.steps; ++step) {
    if (cursor + settings.batch_size > order.size()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    for (std::size_t i = 0; i < settings.batch_size; ++i) batch[i] = data[order[cursor + i]];
    cursor += settings.batch_size;

    Graph g;
    const EncodedBatch enc = encode_batch(g, result.params, batch);
    const Tensor l_span = batch_span_loss(g, result.params, enc);
    Tensor loss = l_span;
    InfoLoss info;
    if (regularized) {
      info = qainfomax_loss(g, enc, weights, settings.summarizer, result.discs, reg_rng);
      loss = g.add(l_span, g.scale(info.loss, weights.gamma));
    }
    if (!std::isfinite(loss.item())) {
      std::ostringstream msg;
      msg << "train: non-finite loss at step " << step << " (l_span=" << l_span.item();
      if (regularized) {
        msg << ", l_info=" << info.loss.item();
        if (info.mean_lc) msg << ", mean_lc=" << *info.mean_lc;
        if (info.mean_gc) msg << ", mean_gc=" << *info.mean_gc;
      }
      msg << ")";
      throw numeric_error(msg.str());
    }
    g.backward(loss);
    opt.step();

    window.l_span += l_span.item();
    if (regularized) {
      info_sum += info.loss.item();
      if (info.mean_lc) lc_sum += *info.mean_lc;
      if (info.mean_gc) gc_sum += *info.mean_gc;
    }
    ++in_window;
    if (step % settings.log_every == 0 || step == settings.steps) {
      const double n = static_cast<double>(in_window);
      LogRecord rec;
      rec.step = step;
      rec.l_span = window.l_span / n;
      if (regularized) {
        rec.l_info = info_sum / n;
        if (weights.alpha > 0.0) rec.mean_lc = lc_sum / n;
        if (weights.beta > 0.0) rec.mean_gc = gc_sum / n;
      }
      result.log.push_back(rec);
      window = {};
      info_sum = lc_sum = gc_sum = 0.0;
      in_window = 0;
    }
  }
  const std::clock_t c1 = std::clock();
  const auto t1 = std::chrono::steady_clock::now();
  result.steps = settings.steps;
  result.seconds = std::chrono::duration<double>(t1 - t0).count();
  result.cpu_seconds = static_cast<double>(c1 - c0) / CLOCKS_PER_SEC;
  result.iter_per_sec = result.seconds > 0.0 ? static_cast<double>(result.steps) / result.seconds : 0.0;
  return result;
}

void write_training_log(const std::filesystem::path& path, const TrainResult& result, const std::string& header_time) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write training log " + path.string());
  Json header{{"started_at", header_time},
              {"steps", result.steps},
              {"seconds", result.seconds},
              {"cpu_seconds", result.cpu_seconds},
              {"iter_per_sec", result.iter_per_sec}};
  out << header.dump() << '\n';
  for (const LogRecord& r : result.log) {
    Json rec{{"step", r.step}, {"l_span", r.l_span}};
    if (r.l_info) rec["l_info"] = *r.l_info;
    if (r.mean_lc) rec["mean_lc"] = *r.mean_lc;
    if (r.mean_gc) rec["mean_gc"] = *r.mean_gc;
    out << rec.dump() << '\n';
  }
}

// ---------------------------------------------------------------- evaluation

double token_f1(const Tokens& predicted, const Tokens& gold) {
  if (predicted.empty() || gold.empty()) return 0.0;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : gold) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : predicted) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(predicted.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

EvalMode parse_eval_mode(const std::string& name) {
  if (name == "clean") return EvalMode::clean;
  if (name == "addsent") return EvalMode::addsent;
  if (name == "addonesent") return EvalMode::addonesent;
  throw usage_error("unknown eval mode '" + name + "' (expected clean, addsent or addonesent)");
}

EvalResult evaluate(const EncoderParams& params, const Vocabulary& vocab, const std::vector<QAExample>& examples,
                    std::size_t max_answer_len, bool adversarial, std::uint64_t addonesent_seed) {
  if (examples.empty()) throw data_error("evaluate: no examples");
  EvalResult out;
  out.adversarial = adversarial;
  auto choice_rng = stream(addonesent_seed, kAddOneSentStream);
  for (const QAExample& ex : examples) {
    const Tokens gold = ex.answer();
    ExampleScore score;
    const auto clean = predict(params, tokenize(vocab, ex), max_answer_len);
    const Tokens clean_pred = span_tokens(ex.passage, clean);
    score.clean_f1 = token_f1(clean_pred, gold);
    score.clean_em = clean_pred == gold ? 1.0 : 0.0;
    if (adversarial) {
      if (ex.distractors.empty())
        throw data_error("evaluate: example '" + ex.id + "' has no distractors for adversarial evaluation");
      score.addonesent_choice =
          std::uniform_int_distribution<std::size_t>(0, ex.distractors.size() - 1)(choice_rng);
      std::vector<double> f1s;
      for (const Tokens& d : ex.distractors) {
        Tokens extended = ex.passage;
        extended.insert(extended.end(), d.begin(), d.end());
        const auto span = predict(params, tokenize(vocab, ex, &d), max_answer_len);
        f1s.push_back(token_f1(span_tokens(extended, span), gold));
      }
      score.addsent_f1 = *std::min_element(f1s.begin(), f1s.end());
      score.addonesent_f1 = f1s[score.addonesent_choice];
    }
    out.examples.push_back(score);
  }
  const double n = static_cast<double>(examples.size());
  for (const ExampleScore& s : out.examples) {
    out.clean_f1 += s.clean_f1 / n;
    out.clean_em += s.clean_em / n;
    out.addsent_f1 += s.addsent_f1 / n;
    out.addonesent_f1 += s.addonesent_f1 / n;
  }
  return out;
}

// ---------------------------------------------------------------- ablation

std::string sweep_name(Summarizer s) {
  if (s == Summarizer::mean) return "lc_gc";
  return "lc_gc[" + summarizer_name(s) + "]";
}

bool AblationReport::has(const std::string& variant) const {
  return std::any_of(rows.begin(), rows.end(), [&](const ReportRow& r) { return r.variant == variant; });
}

ReportRow AblationReport::best(const std::string& variant) const {
  ReportRow out;
  out.variant = variant;
  std::size_t n = 0;
  for (const ReportRow& r : rows) {
    if (r.variant != variant) continue;
    if (n == 0) {
      out = r;
    } else {
      out.clean_f1 = std::max(out.clean_f1, r.clean_f1);
      out.clean_em = std::max(out.clean_em, r.clean_em);
      out.addsent_f1 = std::max(out.addsent_f1, r.addsent_f1);
      out.addonesent_f1 = std::max(out.addonesent_f1, r.addonesent_f1);
      out.iter_per_sec += r.iter_per_sec;
    }
    ++n;
  }
  if (n == 0) throw usage_error("report has no rows for variant '" + variant + "'");
  out.iter_per_sec /= static_cast<double>(n);
  out.seed = 0;
  return out;
}

std::string AblationReport::csv() const {
  std::string out = "variant,seed,clean_f1,clean_em,addsent_f1,addonesent_f1,iter_per_sec\n";
  for (const ReportRow& r : rows) {
    out += r.variant + "," + std::to_string(r.seed) + "," + fmt("%.6f", r.clean_f1) + "," + fmt("%.6f", r.clean_em) +
           "," + fmt("%.6f", r.addsent_f1) + "," + fmt("%.6f", r.addonesent_f1) + "," + fmt("%.3f", r.iter_per_sec) +
           "\n";
  }
  return out;
}

std::string AblationReport::markdown(const std::string& header_time) const {
  std::vector<std::uint64_t> seeds;
  for (const ReportRow& r : rows)
    if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) seeds.push_back(r.seed);
  std::string seed_list;
  for (std::size_t i = 0; i < seeds.size(); ++i) seed_list += (i ? ", " : "") + std::to_string(seeds[i]);

  const bool have_base = has("baseline");
  const double base_speed = have_base ? best("baseline").iter_per_sec : 0.0;
  auto line = [&](const std::string& label, const ReportRow& b) {
    std::string slow = "n/a";
    if (have_base && base_speed > 0.0) slow = fmt("%.1f%%", 100.0 * (1.0 - b.iter_per_sec / base_speed));
    return "| " + label + " | " + fmt("%.2f", 100.0 * b.clean_f1) + " | " + fmt("%.2f", 100.0 * b.clean_em) + " | " +
           fmt("%.2f", 100.0 * b.addsent_f1) + " | " + fmt("%.2f", 100.0 * b.addonesent_f1) + " | " +
           fmt("%.2f", b.iter_per_sec) + " | " + slow + " |\n";
  };
  const std::string head =
      "| Model | Clean F1 | Clean EM | AddSent F1 | AddOneSent F1 | Speed (iter/s) | Slowdown |\n"
      "|---|---|---|---|---|---|---|\n";

  std::string out = "<!-- generated " + header_time + " -->\n";
  out += "## Ablation\n\nBest over seeds " + seed_list + "; speed is the mean over seeds.\n\n" + head;
  for (Variant v : {Variant::baseline, Variant::lc, Variant::gc, Variant::lc_gc})
    if (has(variant_name(v))) out += line(variant_label(v), best(variant_name(v)));

  if (has(sweep_name(Summarizer::max)) || has(sweep_name(Summarizer::sample))) {
    out += "\n## Summarizer (+LC+GC)\n\n" + head;
    if (have_base) out += line("baseline", best("baseline"));
    for (Summarizer s : {Summarizer::mean, Summarizer::max, Summarizer::sample}) {
      std::string label = summarizer_name(s);
      label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
      if (has(sweep_name(s))) out += line(label, best(sweep_name(s)));
    }
  }
  return out;
}

AblationReport ablate(const RunConfig& config, const AblationOptions& options) {
  if (options.seeds.empty()) throw usage_error("ablate: at least one seed is required");
  const TrainSettings base = TrainSettings::from_config(config);
  const Corpus corpus = load_or_generate_corpus(base.data);
  const Vocabulary vocab(WorldSpec::standard().vocabulary());

  struct Run {
    std::string name;
    Variant variant;
    Summarizer summarizer;
  };
  std::vector<Run> runs;
  for (Variant v : options.variants) runs.push_back({variant_name(v), v, base.summarizer});
  if (options.summarizer_sweep) {
    auto plain = std::find_if(runs.begin(), runs.end(), [](const Run& r) { return r.name == "lc_gc"; });
    if (plain == runs.end()) {
      runs.push_back({"lc_gc", Variant::lc_gc, Summarizer::mean});
    } else {
      plain->summarizer = Summarizer::mean;
    }
    for (Summarizer s : {Summarizer::max, Summarizer::sample}) runs.push_back({sweep_name(s), Variant::lc_gc, s});
  }

  AblationReport report;
  for (std::uint64_t seed : options.seeds) {
    for (const Run& run : runs) {
      const auto t0 = std::chrono::steady_clock::now();
      TrainSettings s = base;
      s.seed = seed;
      s.summarizer = run.summarizer;
      const TrainResult trained = train(s, run.variant, corpus.train, vocab);
      const EvalResult ev = evaluate(trained.params, vocab, corpus.eval, s.max_answer_len, true, seed);
      report.rows.push_back({run.name, seed, ev.clean_f1, ev.clean_em, ev.addsent_f1, ev.addonesent_f1,
                             trained.iter_per_sec,
                             std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
      if (options.progress != nullptr) {
        *options.progress << run.name << " seed=" << seed << " clean_f1=" << fmt("%.4f", ev.clean_f1)
                          << " addsent_f1=" << fmt("%.4f", ev.addsent_f1)
                          << " addonesent_f1=" << fmt("%.4f", ev.addonesent_f1)
                          << " iter/s=" << fmt("%.2f", trained.iter_per_sec) << std::endl;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------- estimator sanity

bool SanityReport::pass() const {
  return shift_invariance_error <= 1e-9 && std::all_of(rows.begin(), rows.end(), [](const SanityRow& r) { return r.pass; });
}

std::string SanityReport::text() const {
  std::string out = "case                 exact_mi   dv_estimate  js_objective  window            result\n";
  for (const SanityRow& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-20s %9.4f  %11.4f  %12.4f  [%6.3f, %6.3f]  %s\n", r.name.c_str(), r.exact, r.dv,
                  r.js, r.lower, r.upper, r.pass ? "PASS" : "FAIL");
    out += buf;
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "dv shift invariance  max error %.3e (limit 1e-9)  %s\n", shift_invariance_error,
                shift_invariance_error <= 1e-9 ? "PASS" : "FAIL");
  out += buf;
  return out;
}

SanityReport mi_sanity(const SanityOptions& options) {
  SanityReport report;
  auto rng = stream(options.seed, 0x5a17);
  auto run = [&](const std::string& name, double exact, double lo, double hi, const PairedSamples& train_s,
                 const PairedSamples& test_s) {
    const CriticEstimate est = fit_critics(train_s.x, train_s.y, test_s.x, test_s.y, options.critic, rng);
    report.rows.push_back({name, exact, est.dv, est.js, lo, hi, est.dv >= lo && est.dv <= hi});
  };

  const DiscreteJoint independent({{0.18, 0.12}, {0.42, 0.28}});
  {
    const auto tr = one_hot_samples(independent, options.samples, rng);
    const auto te = one_hot_samples(independent, options.samples, rng);
    run("independent_2x2", exact_mi_discrete(independent), -0.05, 0.05, tr, te);
  }
  const DiscreteJoint diagonal({{0.5, 0.0}, {0.0, 0.5}});
  {
    const auto tr = one_hot_samples(diagonal, options.samples, rng);
    const auto te = one_hot_samples(diagonal, options.samples, rng);
    run("diagonal_2x2", exact_mi_discrete(diagonal), 0.5, std::log(2.0) + 0.1, tr, te);
  }
  {
    const auto tr = gaussian_samples(0.9, options.samples, rng);
    const auto te = gaussian_samples(0.9, options.samples, rng);
    run("gaussian_rho_0.9", gaussian_mi(0.9), 0.55, 0.93, tr, te);
  }

  std::uniform_real_distribution<double> u(-3.0, 3.0), shift(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> pos(1 + rng() % 16), neg(1 + rng() % 16);
    for (double& v : pos) v = u(rng);
    for (double& v : neg) v = u(rng);
    const double c = shift(rng);
    auto pos_c = pos, neg_c = neg;
    for (double& v : pos_c) v += c;
    for (double& v : neg_c) v += c;
    report.shift_invariance_error =
        std::max(report.shift_invariance_error, std::abs(dv_bound(pos_c, neg_c) - dv_bound(pos, neg)));
  }
  return report;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace infoqa
