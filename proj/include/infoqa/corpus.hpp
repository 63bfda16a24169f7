#pragma once

// Synthetic extractive QA corpus: template facts, one question per passage,
// and lexically overlapping distractor sentences with a decoy answer.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace infoqa {

using Tokens = std::vector<std::string>;

struct QAExample {
  std::string id;
  Tokens passage;
  Tokens question;
  std::size_t answer_start = 0;  // inclusive token indices into passage
  std::size_t answer_end = 0;
  // Candidate adversarial sentences; each is appended to the passage end at
  // evaluation time.
  std::vector<Tokens> distractors;

  Tokens answer() const;
  bool operator==(const QAExample&) const = default;
};

enum class QuestionKind { who, what, where };

struct WorldSpec {
  Tokens first_names;
  Tokens surnames;
  Tokens places;
  Tokens place_suffixes;
  Tokens adjectives;
  Tokens nouns;
  Tokens verbs;

  std::size_t min_facts = 3;
  std::size_t max_facts = 8;
  double two_token_name_rate = 0.5;
  double adjective_rate = 0.5;
  double place_suffix_rate = 0.3;
  // Probability that a passage carries an extra fact reusing the target
  // fact's verb with otherwise fresh entities.
  double confounder_rate = 0.0;

  // Closed world of roughly 2000 whitespace tokens, fixed across runs.
  static WorldSpec standard();

  // Every token the generator can emit, in a fixed order.
  Tokens vocabulary() const;
};

// Question words that do not count toward lexical overlap.
bool is_stopword(const std::string& token);
Tokens content_words(const Tokens& question);
// Fraction of the question's distinct content words that appear in sentence.
double overlap_fraction(const Tokens& question, const Tokens& sentence);

// Number of (i, j) spans of passage whose tokens equal answer.
std::size_t count_span_matches(const Tokens& passage, const Tokens& answer);
bool contains_sequence(const Tokens& haystack, const Tokens& needle);

// One clean example (no distractors). Deterministic in rng state.
QAExample generate_example(const WorldSpec& spec, std::mt19937_64& rng, std::string id);

// k mutated restatements of the question: the answer slot gets a decoy and one
// other question slot is swapped, so the sentence overlaps the question
// lexically but does not answer it. Throws after bounded retries.
std::vector<Tokens> generate_distractors(const WorldSpec& spec, const QAExample& example, std::size_t k,
                                         std::mt19937_64& rng);

struct CorpusOptions {
  std::uint64_t seed = 1;
  std::size_t train_size = 2000;
  std::size_t eval_size = 500;
  std::size_t distractors_per_example = 5;
};

struct Corpus {
  std::vector<QAExample> train;  // clean, no distractors
  std::vector<QAExample> eval;   // clean passages plus distractor pools
};

// Each example draws from its own stream seeded by (seed, split, index), so
// the output does not depend on generation order.
Corpus generate_corpus(const WorldSpec& spec, const CorpusOptions& options);

// JSON lines: {"id","passage","question","answer_start","answer_end","distractors"}.
void write_corpus(const std::vector<QAExample>& examples, const std::filesystem::path& path);
std::vector<QAExample> read_corpus(const std::filesystem::path& path);
std::string to_json_line(const QAExample& example);
QAExample parse_json_line(const std::string& line, std::size_t line_number);

// Token <-> id map. Id 0 is the question/passage separator.
class Vocabulary {
 public:
  static constexpr const char* kSeparator = "[SEP]";

  Vocabulary() = default;
  explicit Vocabulary(const Tokens& tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t separator() const { return 0; }
  // Throws a data error for tokens outside the vocabulary.
  std::size_t id(const std::string& token) const;
  std::vector<std::size_t> ids(const Tokens& tokens) const;
  const Tokens& tokens() const { return tokens_; }

 private:
  Tokens tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace infoqa
