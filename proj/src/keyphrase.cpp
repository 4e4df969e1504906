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

#include "tagsum/keyphrase.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "tagsum/corpus.hpp"

namespace tagsum {
namespace {

bool is_punctuation(const std::string& token) {
  return token.size() == 1 && std::ispunct(static_cast<unsigned char>(token[0]));
}

std::string lower(std::string s) {
  for (auto& c : s)
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// n-grams of length 1..max_n with no punctuation and no stopword at either end.
std::map<std::vector<std::string>, std::size_t> candidate_counts(const std::vector<std::string>& doc,
                                                                 std::size_t max_n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    for (std::size_t n = 1; n <= max_n && i + n <= doc.size(); ++n) {
      if (is_punctuation(doc[i + n - 1])) break;
      if (is_stopword(doc[i]) || is_stopword(doc[i + n - 1])) continue;
      ++counts[std::vector<std::string>(doc.begin() + static_cast<long>(i), doc.begin() + static_cast<long>(i + n))];
    }
  }
  return counts;
}

bool shares_token(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  for (const auto& x : a)
    if (std::find(b.begin(), b.end(), x) != b.end()) return true;
  return false;
}

}  // namespace

bool is_stopword(const std::string& token) {
  static const std::unordered_set<std::string> kStopwords = {
      "a",     "about", "above", "after", "again", "against", "all",   "also",  "am",    "an",    "and",
      "any",   "are",   "as",    "at",    "be",    "been",    "before", "being", "below", "between", "both",
      "but",   "by",    "can",   "could", "did",   "do",      "does",  "doing", "down",  "during", "each",
      "few",   "for",   "from",  "further", "had", "has",     "have",  "having", "he",   "her",   "here",
      "hers",  "him",   "his",   "how",   "i",     "if",      "in",    "into",  "is",    "it",    "its",
      "itself", "just", "may",   "me",    "more",  "most",    "my",    "no",    "nor",   "not",   "of",
      "off",   "on",    "once",  "only",  "or",    "other",   "our",   "ours",  "out",   "over",  "own",
      "same",  "she",   "should", "so",   "some",  "such",    "than",  "that",  "the",   "their", "theirs",
      "them",  "then",  "there", "these", "they",  "this",    "those", "through", "to",  "too",   "under",
      "until", "up",    "us",    "very",  "was",   "we",      "were",  "what",  "when",  "where", "which",
      "while", "who",   "whom",  "why",   "will",  "with",    "would", "you",   "your",  "yours", "via",
      "using", "use",   "used",  "based", "however", "thus",  "paper", "propose", "proposed", "show", "results"};
  return kStopwords.count(lower(token)) != 0;
}

void DocumentFrequency::add_document(const std::vector<std::string>& tokens) {
  ++documents_;
  for (const auto& [gram, n] : candidate_counts(tokens, 3)) ++counts_[gram];
}

double DocumentFrequency::idf(const std::vector<std::string>& ngram) const {
  auto it = counts_.find(ngram);
  const double df = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(documents_)) / (1.0 + df)) + 1.0;
}

std::vector<Keyphrase> rank_document(const std::vector<std::string>& document, std::size_t k,
                                     const DocumentFrequency& frequencies, const KeyphraseOptions& options) {
  struct Candidate {
    std::vector<std::string> tokens;
    double score;
    bool taken = false;
  };
  std::vector<Candidate> candidates;
  double best = 0.0;
  for (const auto& [gram, tf] : candidate_counts(document, options.max_ngram)) {
    const double s = static_cast<double>(tf) * frequencies.idf(gram);
    candidates.push_back({gram, s});
    best = std::max(best, s);
  }
  if (candidates.empty()) return {};
  for (auto& c : candidates) c.score /= best;

  std::vector<Keyphrase> picked;
  while (picked.size() < k) {
    Candidate* choice = nullptr;
    double choice_score = -1.0;
    for (auto& c : candidates) {
      if (c.taken) continue;
      bool overlaps = false;
      for (const auto& p : picked) overlaps = overlaps || shares_token(c.tokens, p.tokens);
      const double adjusted = overlaps ? c.score * options.diversity_penalty : c.score;
      // Ties: shorter phrase first, then the lexicographic order of the map.
      if (adjusted > choice_score ||
          (adjusted == choice_score && choice != nullptr && c.tokens.size() < choice->tokens.size())) {
        choice = &c;
        choice_score = adjusted;
      }
    }
    if (choice == nullptr) break;
    choice->taken = true;
    picked.push_back({choice->tokens, choice_score, {}});
  }
  return picked;
}

std::vector<Keyphrase> extract_keyphrases(std::span<const std::vector<std::string>> documents,
                                          const KeyphraseOptions& options) {
  if (documents.empty()) return {};
  DocumentFrequency local;
  const DocumentFrequency* df = options.frequencies;
  if (df == nullptr) {
    for (const auto& d : documents) local.add_document(d);
    df = &local;
  }
  const std::size_t per_doc =
      options.per_doc_k > 0 ? options.per_doc_k : (options.max_total + documents.size() - 1) / documents.size();

  std::vector<Keyphrase> merged;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    for (auto& kp : rank_document(documents[d], per_doc, *df, options)) {
      auto it = std::find_if(merged.begin(), merged.end(), [&](const Keyphrase& m) { return m.tokens == kp.tokens; });
      if (it == merged.end()) {
        kp.sources = {static_cast<int>(d)};
        merged.push_back(std::move(kp));
      } else {
        it->score = std::max(it->score, kp.score);
        if (std::find(it->sources.begin(), it->sources.end(), static_cast<int>(d)) == it->sources.end())
          it->sources.push_back(static_cast<int>(d));
      }
    }
  }
  std::stable_sort(merged.begin(), merged.end(), [](const Keyphrase& a, const Keyphrase& b) { return a.score > b.score; });
  return merged;
}

std::vector<std::pair<int, int>> link_keyphrases(std::span<const Keyphrase> keyphrases,
                                                 std::span<const std::vector<std::string>> references,
                                                 bool whole_phrase) {
  std::vector<std::set<std::string>> vocab(references.size());
  std::vector<std::vector<std::string>> lowered(references.size());
  for (std::size_t r = 0; r < references.size(); ++r)
    for (const auto& t : references[r]) {
      vocab[r].insert(lower(t));
      lowered[r].push_back(lower(t));
    }
  std::vector<std::pair<int, int>> edges;
  for (std::size_t c = 0; c < keyphrases.size(); ++c) {
    std::vector<std::string> phrase;
    for (const auto& t : keyphrases[c].tokens) phrase.push_back(lower(t));
    for (std::size_t r = 0; r < references.size(); ++r) {
      bool linked = false;
      if (whole_phrase) {
        linked = !phrase.empty() &&
                 std::search(lowered[r].begin(), lowered[r].end(), phrase.begin(), phrase.end()) != lowered[r].end();
      } else {
        for (const auto& t : phrase) linked = linked || vocab[r].count(t) != 0;
      }
      if (linked) edges.emplace_back(static_cast<int>(c), static_cast<int>(r));
    }
  }
  return edges;
}

void write_keyphrases(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::vector<Keyphrase>>>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write keyphrase file " + path.string());
  for (const auto& [id, phrases] : entries) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& k : phrases) arr.push_back({{"tokens", k.tokens}, {"score", k.score}, {"sources", k.sources}});
    out << nlohmann::json{{"id", id}, {"keyphrases", std::move(arr)}}.dump() << '\n';
  }
}

std::vector<std::pair<std::string, std::vector<Keyphrase>>> read_keyphrases(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open keyphrase file " + path.string());
  std::vector<std::pair<std::string, std::vector<Keyphrase>>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto obj = nlohmann::json::parse(line);
      std::vector<Keyphrase> phrases;
      for (const auto& k : obj.at("keyphrases"))
        phrases.push_back({k.at("tokens").get<std::vector<std::string>>(), k.at("score").get<double>(),
                           k.at("sources").get<std::vector<int>>()});
      entries.emplace_back(obj.at("id").get<std::string>(), std::move(phrases));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return entries;
}

}  // namespace tagsum
