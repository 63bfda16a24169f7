#include "infoqa/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "infoqa/error.hpp"

namespace infoqa {

namespace {

using Json = nlohmann::ordered_json;

const Tokens kFunctionWords{".", "?", "the", "in", "who", "what", "where", "did"};

std::size_t uniform_index(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

bool coin(double p, std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

// Deterministic pseudo-word pools. Every word is unique across the world.
class WordMint {
 public:
  WordMint() : rng_(0x5eedULL) {
    for (const auto& w : kFunctionWords) seen_.insert(w);
  }

  Tokens take(std::size_t n, std::size_t syllables, const std::string& suffix) {
    static const std::string kOnsets = "bdfgklmnprstvz";
    static const std::string kVowels = "aeiou";
    Tokens out;
    while (out.size() < n) {
      std::string w;
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[uniform_index(kOnsets.size(), rng_)];
        w += kVowels[uniform_index(kVowels.size(), rng_)];
      }
      w += suffix;
      if (seen_.insert(w).second) out.push_back(w);
    }
    return out;
  }

 private:
  std::mt19937_64 rng_;
  std::unordered_set<std::string> seen_;
};

struct Fact {
  Tokens person;
  std::string verb;
  Tokens object;
  Tokens place;
};

enum class Slot { person, object, place };

Tokens& slot_of(Fact& f, Slot s) {
  switch (s) {
    case Slot::person: return f.person;
    case Slot::object: return f.object;
    case Slot::place: return f.place;
  }
  return f.person;
}

Tokens sentence(const Fact& f) {
  Tokens out = f.person;
  out.push_back(f.verb);
  out.push_back("the");
  out.insert(out.end(), f.object.begin(), f.object.end());
  out.push_back("in");
  out.insert(out.end(), f.place.begin(), f.place.end());
  out.push_back(".");
  return out;
}

Tokens question_for(const Fact& f, QuestionKind kind) {
  Tokens q;
  auto append = [&q](const Tokens& t) { q.insert(q.end(), t.begin(), t.end()); };
  switch (kind) {
    case QuestionKind::who:
      q = {"who", f.verb, "the"};
      append(f.object);
      q.push_back("in");
      append(f.place);
      break;
    case QuestionKind::what:
      q = {"what", "did"};
      append(f.person);
      q.push_back(f.verb);
      q.push_back("in");
      append(f.place);
      break;
    case QuestionKind::where:
      q = {"where", "did"};
      append(f.person);
      q.push_back(f.verb);
      q.push_back("the");
      append(f.object);
      break;
  }
  q.push_back("?");
  return q;
}

Slot answer_slot(QuestionKind kind) {
  switch (kind) {
    case QuestionKind::who: return Slot::person;
    case QuestionKind::what: return Slot::object;
    case QuestionKind::where: return Slot::place;
  }
  return Slot::person;
}

// Draws entities whose core tokens have not been used yet in this scope.
class EntityDraw {
 public:
  EntityDraw(const WorldSpec& spec, std::mt19937_64& rng) : spec_(spec), rng_(rng) {}

  void reserve(const Tokens& tokens) { used_.insert(tokens.begin(), tokens.end()); }

  Tokens draw(Slot slot) {
    switch (slot) {
      case Slot::person: {
        Tokens t{fresh(spec_.first_names)};
        if (coin(spec_.two_token_name_rate, rng_)) t.push_back(fresh(spec_.surnames));
        return t;
      }
      case Slot::object: {
        Tokens t;
        if (coin(spec_.adjective_rate, rng_)) t.push_back(fresh(spec_.adjectives));
        t.push_back(fresh(spec_.nouns));
        return t;
      }
      case Slot::place: {
        Tokens t{fresh(spec_.places)};
        if (coin(spec_.place_suffix_rate, rng_)) t.push_back(spec_.place_suffixes[uniform_index(spec_.place_suffixes.size(), rng_)]);
        return t;
      }
    }
    return {};
  }

  std::string fresh(const Tokens& pool) {
    if (pool.empty()) throw data_error("world: empty entity pool");
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const std::string& w = pool[uniform_index(pool.size(), rng_)];
      if (used_.insert(w).second) return w;
    }
    throw data_error("world: entity pool exhausted");
  }

 private:
  const WorldSpec& spec_;
  std::mt19937_64& rng_;
  std::unordered_set<std::string> used_;
};

// Recovers the question's kind and filled slots from its tokens.
struct ParsedQuestion {
  QuestionKind kind;
  Fact slots;  // the answer slot is left empty
};

ParsedQuestion parse_question(const WorldSpec& spec, const Tokens& q) {
  const std::unordered_set<std::string> verbs(spec.verbs.begin(), spec.verbs.end());
  auto fail = [&] { return data_error("distractors: question does not follow a known template"); };
  if (q.size() < 4 || q.back() != "?") throw fail();
  const Tokens body(q.begin(), q.end() - 1);
  auto find = [&](const std::string& w, std::size_t from) {
    const auto it = std::find(body.begin() + static_cast<std::ptrdiff_t>(from), body.end(), w);
    if (it == body.end()) throw fail();
    return static_cast<std::size_t>(it - body.begin());
  };
  auto slice = [&](std::size_t a, std::size_t b) {
    return Tokens(body.begin() + static_cast<std::ptrdiff_t>(a), body.begin() + static_cast<std::ptrdiff_t>(b));
  };
  auto verb_at = [&](std::size_t from) {
    for (std::size_t i = from; i < body.size(); ++i)
      if (verbs.count(body[i])) return i;
    throw fail();
  };

  ParsedQuestion p{};
  if (body[0] == "who") {
    p.kind = QuestionKind::who;
    p.slots.verb = body[1];
    const std::size_t in = find("in", 3);
    p.slots.object = slice(3, in);
    p.slots.place = slice(in + 1, body.size());
  } else if (body[0] == "what") {
    p.kind = QuestionKind::what;
    const std::size_t v = verb_at(2);
    p.slots.person = slice(2, v);
    p.slots.verb = body[v];
    p.slots.place = slice(v + 2, body.size());
  } else if (body[0] == "where") {
    p.kind = QuestionKind::where;
    const std::size_t v = verb_at(2);
    p.slots.person = slice(2, v);
    p.slots.verb = body[v];
    p.slots.object = slice(v + 2, body.size());
  } else {
    throw fail();
  }
  return p;
}

Tokens json_tokens(const Json& j, const char* field, std::size_t line) {
  if (!j.contains(field)) throw data_error("line " + std::to_string(line) + ": missing field '" + field + "'");
  const Json& arr = j.at(field);
  if (!arr.is_array()) throw data_error("line " + std::to_string(line) + ": field '" + field + "' is not an array");
  Tokens out;
  for (const Json& t : arr) {
    if (!t.is_string()) {
      throw data_error("line " + std::to_string(line) + ": field '" + field + "' holds a non-string token");
    }
    out.push_back(t.get<std::string>());
  }
  return out;
}

std::size_t json_index(const Json& j, const char* field, std::size_t line) {
  if (!j.contains(field) || !j.at(field).is_number_unsigned()) {
    throw data_error("line " + std::to_string(line) + ": field '" + field + "' must be a non-negative integer");
  }
  return j.at(field).get<std::size_t>();
}

}  // namespace

Tokens QAExample::answer() const {
  return Tokens(passage.begin() + static_cast<std::ptrdiff_t>(answer_start),
                passage.begin() + static_cast<std::ptrdiff_t>(answer_end) + 1);
}

WorldSpec WorldSpec::standard() {
  WordMint mint;
  WorldSpec w;
  w.verbs = mint.take(60, 2, "ed");
  w.first_names = mint.take(360, 2, "");
  w.surnames = mint.take(360, 3, "");
  w.places = mint.take(400, 2, "n");
  w.place_suffixes = {"bay", "hills", "harbor", "valley", "springs", "point"};
  w.adjectives = mint.take(80, 2, "ic");
  w.nouns = mint.take(700, 2, "r");
  return w;
}

Tokens WorldSpec::vocabulary() const {
  Tokens v = kFunctionWords;
  for (const Tokens* pool : {&verbs, &first_names, &surnames, &places, &place_suffixes, &adjectives, &nouns})
    v.insert(v.end(), pool->begin(), pool->end());
  return v;
}

bool is_stopword(const std::string& token) {
  return std::find(kFunctionWords.begin(), kFunctionWords.end(), token) != kFunctionWords.end();
}

Tokens content_words(const Tokens& question) {
  Tokens out;
  for (const auto& t : question)
    if (!is_stopword(t) && std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  return out;
}

double overlap_fraction(const Tokens& question, const Tokens& sentence) {
  const Tokens content = content_words(question);
  if (content.empty()) return 0.0;
  const std::unordered_set<std::string> present(sentence.begin(), sentence.end());
  const auto shared = std::count_if(content.begin(), content.end(), [&](const auto& t) { return present.count(t) > 0; });
  return static_cast<double>(shared) / static_cast<double>(content.size());
}

std::size_t count_span_matches(const Tokens& passage, const Tokens& answer) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < passage.size(); ++i) {
    for (std::size_t j = i; j < passage.size(); ++j) {
      const std::size_t len = j - i + 1;
      if (len == answer.size() && std::equal(answer.begin(), answer.end(), passage.begin() + static_cast<std::ptrdiff_t>(i)))
        ++count;
    }
  }
  return count;
}

bool contains_sequence(const Tokens& haystack, const Tokens& needle) {
  return !needle.empty() &&
         std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

QAExample generate_example(const WorldSpec& spec, std::mt19937_64& rng, std::string id) {
  if (spec.verbs.size() < spec.max_facts || spec.min_facts < 1 || spec.min_facts > spec.max_facts) {
    throw data_error("world: inconsistent fact counts or too few relations");
  }
  const std::size_t n = spec.min_facts + uniform_index(spec.max_facts - spec.min_facts + 1, rng);

  std::vector<std::size_t> verb_order(spec.verbs.size());
  for (std::size_t i = 0; i < verb_order.size(); ++i) verb_order[i] = i;
  std::shuffle(verb_order.begin(), verb_order.end(), rng);

  EntityDraw draw(spec, rng);
  std::vector<Fact> facts(n);
  for (std::size_t i = 0; i < n; ++i) {
    facts[i].verb = spec.verbs[verb_order[i]];
    facts[i].person = draw.draw(Slot::person);
    facts[i].object = draw.draw(Slot::object);
    facts[i].place = draw.draw(Slot::place);
  }
  const std::size_t target = uniform_index(n, rng);
  if (n > 1 && coin(spec.confounder_rate, rng)) {
    std::size_t other = uniform_index(n - 1, rng);
    if (other >= target) ++other;
    facts[other].verb = facts[target].verb;
  }
  const auto kind = static_cast<QuestionKind>(uniform_index(3, rng));

  QAExample ex;
  ex.id = std::move(id);
  for (std::size_t i = 0; i < n; ++i) {
    const Tokens s = sentence(facts[i]);
    if (i == target) {
      std::size_t offset = 0;
      switch (answer_slot(kind)) {
        case Slot::person: offset = 0; break;
        case Slot::object: offset = facts[i].person.size() + 2; break;
        case Slot::place: offset = facts[i].person.size() + 3 + facts[i].object.size(); break;
      }
      ex.answer_start = ex.passage.size() + offset;
      ex.answer_end = ex.answer_start + slot_of(facts[i], answer_slot(kind)).size() - 1;
    }
    ex.passage.insert(ex.passage.end(), s.begin(), s.end());
  }
  ex.question = question_for(facts[target], kind);
  if (count_span_matches(ex.passage, ex.answer()) != 1) throw data_error("generate_example: answer is not unique");
  return ex;
}

std::vector<Tokens> generate_distractors(const WorldSpec& spec, const QAExample& example, std::size_t k,
                                         std::mt19937_64& rng) {
  if (k == 0) throw usage_error("generate_distractors: k must be at least 1");
  const ParsedQuestion parsed = parse_question(spec, example.question);
  const Slot answer = answer_slot(parsed.kind);
  std::vector<Slot> others;
  for (Slot s : {Slot::person, Slot::object, Slot::place})
    if (s != answer) others.push_back(s);
  const Tokens gold = example.answer();

  EntityDraw draw(spec, rng);
  draw.reserve(example.passage);
  draw.reserve(example.question);

  std::vector<Tokens> out;
  constexpr int kMaxAttempts = 64;
  for (std::size_t d = 0; d < k; ++d) {
    bool done = false;
    for (int attempt = 0; attempt < kMaxAttempts && !done; ++attempt) {
      Fact f = parsed.slots;
      slot_of(f, answer) = draw.draw(answer);
      const Slot swapped = others[uniform_index(others.size(), rng)];
      slot_of(f, swapped) = draw.draw(swapped);
      const Tokens s = sentence(f);
      if (contains_sequence(s, gold) || slot_of(f, answer) == gold) continue;
      if (overlap_fraction(example.question, s) < 0.5) continue;
      if (std::find(out.begin(), out.end(), s) != out.end()) continue;
      out.push_back(s);
      done = true;
    }
    if (!done) throw data_error("generate_distractors: could not satisfy invariants for " + example.id);
  }
  return out;
}

Corpus generate_corpus(const WorldSpec& spec, const CorpusOptions& options) {
  auto stream = [&](std::uint64_t split, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(split), static_cast<std::uint32_t>(index)};
    return std::mt19937_64(seq);
  };
  auto make_id = [](const char* prefix, std::size_t i) {
    std::ostringstream s;
    s << prefix << '-';
    s.width(6);
    s.fill('0');
    s << i;
    return s.str();
  };
  Corpus corpus;
  for (std::size_t i = 0; i < options.train_size; ++i) {
    auto rng = stream(1, i);
    corpus.train.push_back(generate_example(spec, rng, make_id("train", i)));
  }
  for (std::size_t i = 0; i < options.eval_size; ++i) {
    auto rng = stream(2, i);
    QAExample ex = generate_example(spec, rng, make_id("eval", i));
    if (options.distractors_per_example > 0)
      ex.distractors = generate_distractors(spec, ex, options.distractors_per_example, rng);
    corpus.eval.push_back(std::move(ex));
  }
  return corpus;
}

std::string to_json_line(const QAExample& ex) {
  Json j;
  j["id"] = ex.id;
  j["passage"] = ex.passage;
  j["question"] = ex.question;
  j["answer_start"] = ex.answer_start;
  j["answer_end"] = ex.answer_end;
  j["distractors"] = ex.distractors;
  return j.dump();
}

QAExample parse_json_line(const std::string& line, std::size_t line_number) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error("line " + std::to_string(line_number) + ": invalid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw data_error("line " + std::to_string(line_number) + ": expected a JSON object");
  QAExample ex;
  if (!j.contains("id") || !j.at("id").is_string())
    throw data_error("line " + std::to_string(line_number) + ": field 'id' must be a string");
  ex.id = j.at("id").get<std::string>();
  ex.passage = json_tokens(j, "passage", line_number);
  ex.question = json_tokens(j, "question", line_number);
  ex.answer_start = json_index(j, "answer_start", line_number);
  ex.answer_end = json_index(j, "answer_end", line_number);
  if (ex.answer_start > ex.answer_end || ex.answer_end >= ex.passage.size()) {
    throw data_error("line " + std::to_string(line_number) + ": field 'answer_end' is out of range for the passage");
  }
  if (!j.contains("distractors") || !j.at("distractors").is_array())
    throw data_error("line " + std::to_string(line_number) + ": field 'distractors' must be an array");
  for (const Json& d : j.at("distractors")) {
    Json wrap;
    wrap["distractors"] = d;
    ex.distractors.push_back(json_tokens(wrap, "distractors", line_number));
  }
  return ex;
}

void write_corpus(const std::vector<QAExample>& examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  for (const auto& ex : examples) out << to_json_line(ex) << '\n';
  if (!out) throw io_error("write failed for " + path.string());
}

std::vector<QAExample> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<QAExample> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_json_line(line, number));
  }
  return out;
}

Vocabulary::Vocabulary(const Tokens& tokens) {
  tokens_.push_back(kSeparator);
  for (const auto& t : tokens)
    if (t != kSeparator) tokens_.push_back(t);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw data_error("vocabulary: duplicate token '" + tokens_[i] + "'");
  }
}

std::size_t Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) throw data_error("vocabulary: out-of-vocabulary token '" + token + "'");
  return it->second;
}

std::vector<std::size_t> Vocabulary::ids(const Tokens& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

}  // namespace infoqa
