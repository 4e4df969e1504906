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

// Keyphrase extraction (TF-IDF with greedy diversity) and keyphrase to
// reference linking.

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tagsum {

struct Keyphrase {
  std::vector<std::string> tokens;
  double score = 0.0;        // in [0, 1]
  std::vector<int> sources;  // 0 = target, i = reference i
};

bool is_stopword(const std::string& token);

/// Document frequencies of all 1..3-grams over a document collection.
class DocumentFrequency {
 public:
  void add_document(const std::vector<std::string>& tokens);
  /// Smoothed inverse document frequency ln((1 + N) / (1 + df)) + 1.
  double idf(const std::vector<std::string>& ngram) const;
  std::size_t documents() const { return documents_; }

 private:
  std::map<std::vector<std::string>, std::size_t> counts_;
  std::size_t documents_ = 0;
};

struct KeyphraseOptions {
  std::size_t per_doc_k = 0;        // 0 = ceil(max_total / document count)
  std::size_t max_total = 20;
  std::size_t max_ngram = 3;
  double diversity_penalty = 0.5;
  const DocumentFrequency* frequencies = nullptr;  // null = the documents themselves
};

/// Ranked candidates of a single document, best first. Scores are
/// normalized by the document's best raw TF-IDF and then discounted by
/// diversity_penalty when sharing a token with an earlier pick.
std::vector<Keyphrase> rank_document(const std::vector<std::string>& document, std::size_t k,
                                     const DocumentFrequency& frequencies, const KeyphraseOptions& options);

/// Keyphrases of every document, deduplicated by token sequence with merged
/// sources, ordered by score then first appearance.
std::vector<Keyphrase> extract_keyphrases(std::span<const std::vector<std::string>> documents,
                                          const KeyphraseOptions& options = {});

/// (keyphrase index, reference index) for every reference that contains one
/// of the keyphrase's tokens, or, with whole_phrase, the full phrase.
std::vector<std::pair<int, int>> link_keyphrases(std::span<const Keyphrase> keyphrases,
                                                 std::span<const std::vector<std::string>> references,
                                                 bool whole_phrase = false);

/// keyphrases.jsonl sidecar, one object per example id.
void write_keyphrases(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, std::vector<Keyphrase>>>& entries);
std::vector<std::pair<std::string, std::vector<Keyphrase>>> read_keyphrases(const std::filesystem::path& path);

}  // namespace tagsum
