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

// Beam search with the GNMT length penalty and min/max length constraints.
// Search runs against any scorer that maps prefixes to next-token
// log-probabilities, so toy models can stand in for the network.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tagsum/config.hpp"
#include "tagsum/corpus.hpp"
#include "tagsum/model.hpp"

namespace tagsum {

/// ((5 + length) / 6)^alpha.
double length_penalty(std::size_t length, double alpha);

struct Hypothesis {
  std::vector<int> tokens;  // generated tokens after BOS; ends in EOS when finished
  double log_prob = 0.0;
  double score = 0.0;       // log_prob / length_penalty(tokens.size())
  bool finished = false;

  /// Tokens without the trailing EOS.
  std::vector<int> output() const;
};

struct SearchOptions {
  int beam_width = 5;
  int min_length = 10;  // output tokens before EOS may appear
  int max_length = 30;  // EOS is forced after this many output tokens
  double alpha = 0.4;
  int no_repeat_ngram = 0;

  static SearchOptions from(const InferenceConfig& config);
};

/// Rows of next-token log-probabilities, one per prefix. Prefixes start
/// with BOS.
using PrefixScorer = std::function<Eigen::MatrixXd(const std::vector<std::vector<int>>& prefixes)>;

/// Finished hypotheses, best penalized score first; ties go to the
/// lexicographically smaller token sequence. PAD and BOS are never
/// generated. Throws when beam_width < 1 or min_length > max_length.
std::vector<Hypothesis> beam_search(const PrefixScorer& scorer, const SearchOptions& options);

/// Argmax decoding under the same constraints; ties go to the lower id.
Hypothesis greedy_decode(const PrefixScorer& scorer, const SearchOptions& options);

/// Decodes with the beam, or greedily when width is 1 and greedy is set.
Hypothesis decode(const PrefixScorer& scorer, const SearchOptions& options, bool greedy = false);

/// Scorer backed by the model for one encoded example. The encoder runs
/// once; every call runs the decoder on the given prefixes.
template <typename Scalar>
class ModelScorer {
 public:
  ModelScorer(const TagModel<Scalar>& model, const EncodedExample& example);

  Eigen::MatrixXd operator()(const std::vector<std::vector<int>>& prefixes);

  /// Re-runs the decoder over a full sequence and returns the last-layer
  /// attention probabilities at every position.
  DecoderTrace<Scalar> trace(const std::vector<int>& sequence);

  const EncoderOutput<Scalar>& memory() const { return memory_; }

 private:
  const TagModel<Scalar>& model_;
  Tape<Scalar> tape_{false};
  EncoderOutput<Scalar> memory_;
  std::size_t encoder_nodes_ = 0;
};

struct Generation {
  std::string id;
  std::vector<int> tokens;
  double score = 0.0;
};

/// Decodes every example; up to `threads` examples run concurrently.
template <typename Scalar>
std::vector<Generation> generate(const TagModel<Scalar>& model, const std::vector<EncodedExample>& examples,
                                 const InferenceConfig& config, unsigned threads = 1);

/// TAGSUM_THREADS when set to a positive integer, else 1.
unsigned thread_budget();

}  // namespace tagsum
