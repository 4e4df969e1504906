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

#include "tagsum/pipeline.hpp"

#include <fstream>

#include "json.hpp"

namespace tagsum {
namespace {

using json = nlohmann::json;

std::vector<std::string> head(std::vector<std::string> tokens, int limit) {
  if (tokens.size() > static_cast<std::size_t>(limit)) tokens.resize(static_cast<std::size_t>(limit));
  return tokens;
}

json grid_to_json(const PaddedIds& grid) {
  json rows = json::array();
  for (Index r = 0; r < grid.ids.rows(); ++r) rows.push_back(grid.row(r));
  return rows;
}

PaddedIds grid_from_json(const json& rows, std::size_t row_count) {
  return PaddedIds::from_rows(rows.get<std::vector<std::vector<int>>>(), row_count);
}

}  // namespace

double PreparedCorpus::mean_references(const PreparedSplit& split) const {
  if (split.raw.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : split.raw) total += static_cast<double>(r.references.size());
  return total / static_cast<double>(split.raw.size());
}

std::pair<std::vector<Keyphrase>, std::vector<std::pair<int, int>>> example_keyphrases(
    const RawExample& raw, const Tokenizer& tokenizer, const DocumentFrequency& frequencies,
    const ModelConfig& config, const PreprocessOptions& options) {
  std::vector<std::vector<std::string>> docs{head(tokenizer.tokenize(raw.target_abstract), config.max_abstract_words)};
  std::vector<std::vector<std::string>> refs;
  for (const auto& r : raw.references) {
    if (refs.size() == static_cast<std::size_t>(config.max_references)) break;
    refs.push_back(head(tokenizer.tokenize(r.abstract), config.max_abstract_words));
    docs.push_back(refs.back());
  }
  KeyphraseOptions kp;
  kp.per_doc_k = options.per_doc_keyphrases;
  kp.max_total = static_cast<std::size_t>(config.max_keyphrases);
  kp.max_ngram = static_cast<std::size_t>(config.max_keyphrase_words);
  kp.frequencies = &frequencies;
  auto phrases = extract_keyphrases(docs, kp);
  if (phrases.size() > kp.max_total) phrases.resize(kp.max_total);
  auto edges = link_keyphrases(phrases, refs, options.whole_phrase_links);
  return {std::move(phrases), std::move(edges)};
}

PreparedCorpus prepare_corpus(const CorpusSplit& corpus, const ModelConfig& config, const PreprocessOptions& options) {
  WordTokenizer tokenizer;
  PreparedCorpus out;

  std::vector<std::vector<std::string>> vocab_docs;
  DocumentFrequency frequencies;
  for (const auto& ex : corpus.train) {
    vocab_docs.push_back(tokenizer.tokenize(ex.target_abstract));
    frequencies.add_document(head(vocab_docs.back(), config.max_abstract_words));
    for (const auto& r : ex.references) {
      vocab_docs.push_back(tokenizer.tokenize(r.abstract));
      frequencies.add_document(head(vocab_docs.back(), config.max_abstract_words));
    }
    vocab_docs.push_back(tokenizer.tokenize(ex.related_work));
  }
  out.vocab = Vocabulary::build(vocab_docs, options.vocab_max_size, options.vocab_min_freq);

  const auto pool = PaperPool::from_examples(corpus.train, tokenizer);
  auto encode_split = [&](const std::vector<RawExample>& raw, PreparedSplit& split) {
    split.raw = raw;
    for (const auto& ex : raw) {
      auto [phrases, edges] = example_keyphrases(ex, tokenizer, frequencies, config, options);
      std::vector<std::vector<std::string>> phrase_tokens;
      for (const auto& p : phrases) phrase_tokens.push_back(p.tokens);
      auto encoded = encode_example(ex, out.vocab, tokenizer, phrase_tokens, edges, config);
      std::vector<std::vector<std::string>> negatives;
      for (auto i : sample_negatives(ex, pool, static_cast<std::size_t>(config.negatives), options.seed, tokenizer))
        negatives.push_back(pool.tokens[i]);
      attach_negatives(encoded, negatives, out.vocab, config);
      split.encoded.push_back(std::move(encoded));
      split.keyphrases.push_back(std::move(phrases));
    }
  };
  encode_split(corpus.train, out.train);
  encode_split(corpus.valid, out.valid);
  encode_split(corpus.test, out.test);
  return out;
}

void write_encoded(const std::filesystem::path& path, const std::vector<EncodedExample>& examples) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& ex : examples) {
    json j;
    j["id"] = ex.id;
    j["target"] = grid_to_json(ex.target);
    j["references"] = grid_to_json(ex.references);
    j["keyphrases"] = grid_to_json(ex.keyphrases);
    j["negatives"] = grid_to_json(ex.negatives);
    j["gold"] = ex.gold;
    j["edges"] = ex.keyphrase_reference_edges;
    out << j.dump() << '\n';
  }
  if (!out) throw CorpusError("failed writing " + path.string());
}

std::vector<EncodedExample> read_encoded(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open encoded corpus " + path.string());
  std::vector<EncodedExample> examples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      EncodedExample ex;
      ex.id = j.at("id").get<std::string>();
      ex.target = grid_from_json(j.at("target"), 1);
      ex.references = grid_from_json(j.at("references"), j.at("references").size());
      ex.keyphrases = grid_from_json(j.at("keyphrases"), j.at("keyphrases").size());
      ex.negatives = grid_from_json(j.at("negatives"), j.at("negatives").size());
      ex.gold = j.at("gold").get<std::vector<int>>();
      ex.keyphrase_reference_edges = j.at("edges").get<std::vector<std::pair<int, int>>>();
      examples.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return examples;
}

}  // namespace tagsum
