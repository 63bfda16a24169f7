// infoqa: corpus generation, training, adversarial evaluation, ablation
// reports and estimator sanity runs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "infoqa/corpus.hpp"
#include "infoqa/error.hpp"
#include "infoqa/harness.hpp"
#include "infoqa/model.hpp"

namespace fs = std::filesystem;
using namespace infoqa;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
}

RunConfig resolve_config(const std::string& file, const std::vector<std::string>& overrides) {
  RunConfig config = RunConfig::defaults();
  if (!file.empty()) config.load_file(file);
  for (const auto& o : overrides) config.apply_override(o);
  return config;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw usage_error("--seeds expects a comma-separated list of integers, got '" + list + "'");
    }
  }
  if (out.empty()) throw usage_error("--seeds must name at least one seed");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Span QA with mutual-information regularization on a synthetic adversarial corpus"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Write train.jsonl and eval.jsonl");
  CorpusOptions corpus_opts;
  double confounder_rate = 0.5;
  std::string gen_out;
  gen->add_option("--seed", corpus_opts.seed, "Corpus seed")->capture_default_str();
  gen->add_option("--train-size", corpus_opts.train_size)->capture_default_str();
  gen->add_option("--eval-size", corpus_opts.eval_size)->capture_default_str();
  gen->add_option("--distractors-per-example", corpus_opts.distractors_per_example)->capture_default_str();
  gen->add_option("--confounder-rate", confounder_rate, "Share of passages with a same-verb fact")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();

  // shared config options
  std::string config_file;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "Flat key = value config file");
    sub->add_option("--set", overrides, "Override, key=value (repeatable)");
  };

  auto* train_cmd = app.add_subcommand("train", "Train one variant and write a checkpoint");
  add_config(train_cmd);
  std::string variant = "lc_gc";
  std::string train_out;
  train_cmd->add_option("--variant", variant, "baseline, lc, gc or lc_gc")->capture_default_str();
  train_cmd->add_option("--out", train_out, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint, eval_corpus, mode = "all";
  std::uint64_t eval_seed = 1;
  std::size_t max_answer_len = 5;
  eval_cmd->add_option("--checkpoint", checkpoint, "Path to model.bin")->required();
  eval_cmd->add_option("--corpus", eval_corpus, "Evaluation JSON lines file")->required();
  eval_cmd->add_option("--mode", mode, "clean, addsent, addonesent or all")->capture_default_str();
  eval_cmd->add_option("--seed", eval_seed, "Seed for the AddOneSent choice")->capture_default_str();
  eval_cmd->add_option("--max-answer-len", max_answer_len)->capture_default_str();

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate every variant over several seeds");
  add_config(ablate_cmd);
  std::string seeds = "1,2,3", ablate_out;
  bool sweep = false;
  ablate_cmd->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();
  ablate_cmd->add_flag("--summarizer-sweep", sweep, "Add +LC+GC runs with max and sample summarizers");
  ablate_cmd->add_option("--out", ablate_out, "Output directory for report.csv and report.md")->required();

  auto* sanity_cmd = app.add_subcommand("mi-sanity", "Fit critics on distributions with known MI");
  SanityOptions sanity;
  sanity_cmd->add_option("--seed", sanity.seed)->capture_default_str();
  sanity_cmd->add_option("--samples", sanity.samples)->capture_default_str();
  sanity_cmd->add_option("--steps", sanity.critic.steps)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    std::cerr << "error[usage]: see --help\n";
    return exit_code(ErrorCategory::usage);
  }

  try {
    if (gen->parsed()) {
      WorldSpec world = WorldSpec::standard();
      world.confounder_rate = confounder_rate;
      const Corpus corpus = generate_corpus(world, corpus_opts);
      ensure_dir(gen_out);
      write_corpus(corpus.train, fs::path(gen_out) / "train.jsonl");
      write_corpus(corpus.eval, fs::path(gen_out) / "eval.jsonl");
      std::cout << "wrote " << corpus.train.size() << " train and " << corpus.eval.size() << " eval examples to "
                << gen_out << "\n";
    } else if (train_cmd->parsed()) {
      const RunConfig config = resolve_config(config_file, overrides);
      const TrainSettings settings = TrainSettings::from_config(config);
      const Variant v = parse_variant(variant);
      const Corpus corpus = load_or_generate_corpus(settings.data);
      const Vocabulary vocab(WorldSpec::standard().vocabulary());
      ensure_dir(train_out);
      write_text(fs::path(train_out) / "config.txt", config.dump());
      const std::string started = utc_timestamp();
      const TrainResult result = train(settings, v, corpus.train, vocab);
      save_checkpoint(fs::path(train_out) / "model.bin", result.params, vocab);
      write_training_log(fs::path(train_out) / "train_log.jsonl", result, started);
      std::cout << "trained " << variant_name(v) << " for " << result.steps << " steps ("
                << result.iter_per_sec << " iter/s), final l_span " << result.log.back().l_span << "\n";
    } else if (eval_cmd->parsed()) {
      const Checkpoint ck = load_checkpoint(checkpoint);
      const auto examples = read_corpus(eval_corpus);
      if (mode != "all") parse_eval_mode(mode);
      const bool adversarial = mode != "clean";
      const EvalResult r = evaluate(ck.params, ck.vocab, examples, max_answer_len, adversarial, eval_seed);
      nlohmann::ordered_json out{{"examples", examples.size()}, {"clean_f1", r.clean_f1}, {"clean_em", r.clean_em}};
      if (adversarial) {
        out["addsent_f1"] = r.addsent_f1;
        out["addonesent_f1"] = r.addonesent_f1;
      }
      std::cout << out.dump(2) << "\n";
    } else if (ablate_cmd->parsed()) {
      const RunConfig config = resolve_config(config_file, overrides);
      AblationOptions opts;
      opts.seeds = parse_seeds(seeds);
      opts.summarizer_sweep = sweep;
      opts.progress = &std::cerr;
      const std::string started = utc_timestamp();
      const AblationReport report = ablate(config, opts);
      ensure_dir(ablate_out);
      write_text(fs::path(ablate_out) / "config.txt", config.dump());
      write_text(fs::path(ablate_out) / "report.csv", report.csv());
      write_text(fs::path(ablate_out) / "report.md", report.markdown(started));
      std::cout << report.markdown(started);
    } else if (sanity_cmd->parsed()) {
      const SanityReport report = mi_sanity(sanity);
      std::cout << report.text();
      if (!report.pass()) return exit_code(ErrorCategory::numeric);
    }
  } catch (const Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
