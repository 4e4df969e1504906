// Copyright 2026 The TagSum Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tagsum/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tagsum {

using json = nlohmann::json;

namespace {

const char* const kSpecials[kSpecialCount] = {"<pad>", "<bos>", "<eos>", "<unk>"};

std::string require_string(const json& obj, const char* field, const std::string& example_id) {
  auto it = obj.find(field);
  if (it == obj.end() || !it->is_string())
    throw CorpusError("missing or non-string field '" + std::string(field) + "' in example '" + example_id + "'");
  return it->get<std::string>();
}

std::vector<std::string> truncate(std::vector<std::string> tokens, std::size_t limit) {
  if (tokens.size() > limit) tokens.resize(limit);
  return tokens;
}

}  // namespace

void RawExample::validate() const {
  if (references.empty()) throw CorpusError("example '" + id + "' has no references");
  std::set<std::string> seen;
  for (const auto& r : references) {
    if (r.id == id) throw CorpusError("example '" + id + "' cites itself");
    if (!seen.insert(r.id).second) throw CorpusError("example '" + id + "' repeats reference '" + r.id + "'");
  }
  if (related_work.empty()) throw CorpusError("example '" + id + "' has empty related_work");
}

// ---------------------------------------------------------------------------
// Tokenization

std::string Tokenizer::detokenize(std::span<const std::string> tokens) const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<std::string> WordTokenizer::tokenize(std::string_view text) const {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      word += c < 0x80 ? static_cast<char>(std::tolower(c)) : ch;
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* s : kSpecials) append(s);
}

void Vocabulary::append(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

const char* Vocabulary::special_token(int id) {
  return id >= 0 && id < kSpecialCount ? kSpecials[id] : nullptr;
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> documents, std::size_t max_size,
                             std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : documents)
    for (const auto& t : doc) ++counts[t];
  if (counts.empty()) throw CorpusError("cannot build a vocabulary from an empty corpus");
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [token, n] : counts) {
    const bool special = std::find_if(std::begin(kSpecials), std::end(kSpecials),
                                      [&](const char* s) { return token == s; }) != std::end(kSpecials);
    if (n >= min_freq && !special) ranked.emplace_back(token, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [token, n] : ranked) {
    if (static_cast<std::size_t>(vocab.size()) >= max_size) break;
    vocab.append(token);
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open vocabulary file " + path.string());
  Vocabulary vocab;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (lineno < kSpecialCount) {
      if (line != kSpecials[lineno])
        throw CorpusError(path.string() + ": line " + std::to_string(lineno + 1) + ": expected special token " +
                          kSpecials[lineno]);
    } else {
      if (line.empty() || vocab.contains(line))
        throw CorpusError(path.string() + ": line " + std::to_string(lineno + 1) + ": empty or duplicate token");
      vocab.append(line);
    }
    ++lineno;
  }
  if (lineno < kSpecialCount) throw CorpusError(path.string() + ": vocabulary is missing special tokens");
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  for (int i : ids)
    if (i != kPad && i != kBos && i != kEos) out.push_back(token(i));
  return out;
}

// ---------------------------------------------------------------------------
// JSONL

std::vector<RawExample> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  std::vector<RawExample> examples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusError(path.string() + ": line " + std::to_string(lineno) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw CorpusError(path.string() + ": line " + std::to_string(lineno) + ": expected an object");
    RawExample ex;
    ex.id = obj.contains("id") && obj["id"].is_string() ? obj["id"].get<std::string>() : "";
    const std::string label = ex.id.empty() ? "<line " + std::to_string(lineno) + ">" : ex.id;
    if (ex.id.empty()) throw CorpusError("missing or non-string field 'id' in example '" + label + "'");
    ex.target_abstract = require_string(obj, "target_abstract", label);
    ex.related_work = require_string(obj, "related_work", label);
    auto refs = obj.find("references");
    if (refs == obj.end() || !refs->is_array())
      throw CorpusError("missing or non-array field 'references' in example '" + label + "'");
    for (const auto& r : *refs) {
      if (!r.is_object()) throw CorpusError("non-object reference in example '" + label + "'");
      ex.references.push_back({require_string(r, "id", label), require_string(r, "abstract", label)});
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

void write_examples(const std::filesystem::path& path, std::span<const RawExample> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  for (const auto& ex : examples) {
    json refs = json::array();
    for (const auto& r : ex.references) refs.push_back({{"id", r.id}, {"abstract", r.abstract}});
    json obj = {{"id", ex.id},
                {"target_abstract", ex.target_abstract},
                {"references", std::move(refs)},
                {"related_work", ex.related_work}};
    out << obj.dump() << '\n';
  }
}

CorpusSplit load_corpus(const std::filesystem::path& dir, std::size_t filter_min_refs) {
  CorpusSplit corpus;
  std::set<std::string> ids;
  auto load = [&](const char* name, std::vector<RawExample>& into) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) throw CorpusError("missing corpus file " + path.string());
    for (auto& ex : read_examples(path)) {
      if (ex.references.size() < filter_min_refs) {
        ++corpus.dropped;
        continue;
      }
      ex.validate();
      if (!ids.insert(ex.id).second)
        throw CorpusError("example id '" + ex.id + "' appears more than once across splits (" + path.string() + ")");
      into.push_back(std::move(ex));
    }
  };
  load("train.jsonl", corpus.train);
  load("valid.jsonl", corpus.valid);
  load("test.jsonl", corpus.test);
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, const CorpusSplit& corpus) {
  std::filesystem::create_directories(dir);
  write_examples(dir / "train.jsonl", corpus.train);
  write_examples(dir / "valid.jsonl", corpus.valid);
  write_examples(dir / "test.jsonl", corpus.test);
}

// ---------------------------------------------------------------------------
// Encoding

PaddedIds PaddedIds::from_rows(const std::vector<std::vector<int>>& rows, std::size_t row_count) {
  std::size_t width = 1;
  for (std::size_t r = 0; r < std::min(rows.size(), row_count); ++r) width = std::max(width, rows[r].size());
  PaddedIds out;
  out.ids = IdMatrix::Constant(static_cast<Index>(row_count), static_cast<Index>(width), kPad);
  out.pad = MaskMatrix::Constant(static_cast<Index>(row_count), static_cast<Index>(width), true);
  for (std::size_t r = 0; r < std::min(rows.size(), row_count); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      out.ids(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
      out.pad(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c] == kPad;
    }
  }
  return out;
}

std::vector<int> PaddedIds::row(Index r) const {
  std::vector<int> out;
  for (Index c = 0; c < ids.cols(); ++c)
    if (!pad(r, c)) out.push_back(ids(r, c));
  return out;
}

bool PaddedIds::row_present(Index r) const {
  for (Index c = 0; c < ids.cols(); ++c)
    if (!pad(r, c)) return true;
  return false;
}

EncodedExample encode_example(const RawExample& raw, const Vocabulary& vocab, const Tokenizer& tokenizer,
                              const std::vector<std::vector<std::string>>& keyphrases,
                              const std::vector<std::pair<int, int>>& keyphrase_reference_edges,
                              const ModelConfig& config) {
  const auto abstract_limit = static_cast<std::size_t>(config.max_abstract_words);
  EncodedExample ex;
  ex.id = raw.id;
  ex.target = PaddedIds::from_rows({vocab.encode(truncate(tokenizer.tokenize(raw.target_abstract), abstract_limit))}, 1);

  std::vector<std::vector<int>> refs;
  for (const auto& r : raw.references) {
    if (refs.size() == static_cast<std::size_t>(config.max_references)) break;
    refs.push_back(vocab.encode(truncate(tokenizer.tokenize(r.abstract), abstract_limit)));
  }
  ex.references = PaddedIds::from_rows(refs, static_cast<std::size_t>(config.max_references));

  std::vector<std::vector<int>> phrases;
  for (const auto& k : keyphrases) {
    if (phrases.size() == static_cast<std::size_t>(config.max_keyphrases)) break;
    phrases.push_back(vocab.encode(truncate(k, static_cast<std::size_t>(config.max_keyphrase_words))));
  }
  ex.keyphrases = PaddedIds::from_rows(phrases, static_cast<std::size_t>(config.max_keyphrases));

  for (const auto& [c, r] : keyphrase_reference_edges)
    if (c >= 0 && r >= 0 && static_cast<std::size_t>(c) < phrases.size() && static_cast<std::size_t>(r) < refs.size())
      ex.keyphrase_reference_edges.emplace_back(c, r);

  auto gold = truncate(tokenizer.tokenize(raw.related_work), static_cast<std::size_t>(config.max_related_work_words));
  ex.gold.push_back(kBos);
  for (int id : vocab.encode(gold)) ex.gold.push_back(id);
  ex.gold.push_back(kEos);

  ex.negatives = PaddedIds::from_rows({}, 0);
  return ex;
}

// ---------------------------------------------------------------------------
// Negatives

std::uint64_t stable_hash(std::string_view text, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ (seed * 0x9E3779B97F4A7C15ULL);
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

PaperPool PaperPool::from_examples(std::span<const RawExample> examples, const Tokenizer& tokenizer) {
  PaperPool pool;
  std::set<std::string> seen;
  auto add = [&](const std::string& id, const std::string& text) {
    if (!seen.insert(id).second) return;
    pool.ids.push_back(id);
    pool.tokens.push_back(tokenizer.tokenize(text));
  };
  for (const auto& ex : examples) {
    add(ex.id, ex.target_abstract);
    for (const auto& r : ex.references) add(r.id, r.abstract);
  }
  return pool;
}

std::vector<std::size_t> sample_negatives(const RawExample& example, const PaperPool& pool, std::size_t k,
                                          std::uint64_t seed, const Tokenizer& tokenizer) {
  std::set<std::string> excluded_ids{example.id};
  std::set<std::vector<std::string>> excluded_texts{tokenizer.tokenize(example.target_abstract)};
  for (const auto& r : example.references) {
    excluded_ids.insert(r.id);
    excluded_texts.insert(tokenizer.tokenize(r.abstract));
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (!excluded_ids.count(pool.ids[i]) && !excluded_texts.count(pool.tokens[i])) candidates.push_back(i);
  if (candidates.size() < k)
    throw CorpusError("only " + std::to_string(candidates.size()) + " non-reference papers available for example '" +
                      example.id + "' but " + std::to_string(k) + " negatives requested; use a smaller k");
  std::mt19937_64 rng(stable_hash(example.id, seed));
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  candidates.resize(k);
  return candidates;
}

void attach_negatives(EncodedExample& example, const std::vector<std::vector<std::string>>& negative_tokens,
                      const Vocabulary& vocab, const ModelConfig& config) {
  std::vector<std::vector<int>> rows;
  for (const auto& t : negative_tokens)
    rows.push_back(vocab.encode(truncate(t, static_cast<std::size_t>(config.max_abstract_words))));
  example.negatives = PaddedIds::from_rows(rows, rows.size());
}

// ---------------------------------------------------------------------------
// Synthetic corpora

std::vector<std::string> synthetic_words(std::size_t vocab_size) {
  static const char* const kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* const kVowels[] = {"a", "e", "i", "o", "u"};
  constexpr std::size_t kSyllables = std::size(kOnsets) * std::size(kVowels);
  std::vector<std::string> words;
  words.reserve(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) {
    // Bijective base-70 numeral with at least two syllables.
    std::string w;
    std::size_t n = i + kSyllables;
    while (n > 0) {
      const std::size_t s = n % kSyllables;
      w = std::string(kOnsets[s / std::size(kVowels)]) + kVowels[s % std::size(kVowels)] + w;
      n /= kSyllables;
    }
    words.push_back(std::move(w));
  }
  return words;
}

CorpusSplit generate_synthetic_corpus(const SyntheticOptions& options) {
  if (options.vocab_size < 50) throw std::invalid_argument("synthetic vocab_size must be at least 50");
  if (options.refs_per_example < 1) throw std::invalid_argument("refs_per_example must be at least 1");
  const auto words = synthetic_words(options.vocab_size);
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> word(0, words.size() - 1);
  std::uniform_int_distribution<int> jitter(-1, 1);

  auto abstract = [&](std::vector<std::string>& tokens) {
    tokens.clear();
    for (std::size_t i = 0; i < options.abstract_words; ++i) tokens.push_back(words[word(rng)]);
  };
  auto join = [](const std::vector<std::string>& tokens) {
    std::string s;
    for (const auto& t : tokens) s += (s.empty() ? "" : " ") + t;
    return s;
  };

  std::vector<RawExample> all;
  std::vector<std::string> tokens;
  for (std::size_t e = 0; e < options.examples; ++e) {
    RawExample ex;
    ex.id = "syn" + std::to_string(e);
    abstract(tokens);
    ex.target_abstract = join(tokens);
    const std::string target_first = tokens.front();
    const long refs = std::max<long>(1, static_cast<long>(options.refs_per_example) +
                                            (options.refs_per_example > 1 ? jitter(rng) : 0));
    std::vector<std::string> related;
    for (long r = 0; r < refs; ++r) {
      abstract(tokens);
      ex.references.push_back({ex.id + "-ref" + std::to_string(r), join(tokens)});
      for (std::size_t i = 0; i < std::min(options.copied_words, tokens.size()); ++i) related.push_back(tokens[i]);
    }
    related.push_back(target_first);
    ex.related_work = join(related);
    all.push_back(std::move(ex));
  }

  const auto n = options.examples;
  const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * options.valid_fraction));
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * options.test_fraction));
  const auto n_train = n - std::min(n, n_valid + n_test);
  CorpusSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    auto& into = i < n_train ? split.train : (i < n_train + n_valid ? split.valid : split.test);
    into.push_back(std::move(all[i]));
  }
  return split;
}

}  // namespace tagsum
