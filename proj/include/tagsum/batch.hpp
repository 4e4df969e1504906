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

// Packed view of a batch of EncodedExamples. Pad rows and pad positions
// are dropped here; everything downstream works on packed rows, which is
// equivalent to masking them.

#pragma once

#include <span>
#include <utility>
#include <vector>

#include "tagsum/corpus.hpp"

namespace tagsum {

struct ExampleLayout {
  int target_doc = -1;
  std::vector<int> reference_docs;  // present references only
  std::vector<int> keyphrase_docs;  // present keyphrases only
  std::vector<int> negative_docs;   // present negatives only
  std::vector<int> reference_rows;  // padded-grid row of each present reference
  std::vector<int> keyphrase_rows;  // padded-grid row of each present keyphrase
  std::vector<std::pair<int, int>> edges;  // (keyphrase, reference), compact indices
};

struct Batch {
  std::vector<std::vector<int>> documents;  // non-pad token ids
  std::vector<ExampleLayout> examples;
  std::vector<std::vector<int>> gold;       // BOS .. EOS per example

  std::size_t size() const { return examples.size(); }

  /// Documents are laid out per example as target, references,
  /// keyphrases, negatives.
  static Batch from_examples(std::span<const EncodedExample> examples, bool with_negatives = true);
};

}  // namespace tagsum
