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

// Raw corpus -> vocabulary, keyphrases, encoded examples with negatives.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tagsum/config.hpp"
#include "tagsum/corpus.hpp"
#include "tagsum/keyphrase.hpp"

namespace tagsum {

struct PreprocessOptions {
  std::size_t vocab_max_size = 50000;
  std::size_t vocab_min_freq = 1;
  std::size_t per_doc_keyphrases = 0;  // 0 = ceil(max_keyphrases / papers)
  bool whole_phrase_links = false;
  std::uint64_t seed = 13;
};

struct PreparedSplit {
  std::vector<RawExample> raw;
  std::vector<EncodedExample> encoded;
  std::vector<std::vector<Keyphrase>> keyphrases;
};

struct PreparedCorpus {
  Vocabulary vocab;
  PreparedSplit train;
  PreparedSplit valid;
  PreparedSplit test;

  double mean_references(const PreparedSplit& split) const;
};

/// Keyphrases of one example (target then its first max_references
/// references, truncated like the encoder input), capped at max_keyphrases,
/// and their reference edges.
std::pair<std::vector<Keyphrase>, std::vector<std::pair<int, int>>> example_keyphrases(
    const RawExample& raw, const Tokenizer& tokenizer, const DocumentFrequency& frequencies,
    const ModelConfig& config, const PreprocessOptions& options);

/// Builds the vocabulary and document frequencies on the training split and
/// encodes every split. Negatives for all splits come from the training
/// paper pool.
PreparedCorpus prepare_corpus(const CorpusSplit& corpus, const ModelConfig& config,
                              const PreprocessOptions& options = {});

/// Encoded split as JSONL: one object per example with id grids.
void write_encoded(const std::filesystem::path& path, const std::vector<EncodedExample>& examples);
std::vector<EncodedExample> read_encoded(const std::filesystem::path& path);

}  // namespace tagsum
