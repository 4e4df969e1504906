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

// The full model: shared token embedding, graph encoder, hierarchical
// decoder and the two matching networks, plus the joint training loss.

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "tagsum/autodiff.hpp"
#include "tagsum/batch.hpp"
#include "tagsum/config.hpp"
#include "tagsum/contrastive.hpp"
#include "tagsum/decoder.hpp"
#include "tagsum/encoder.hpp"

namespace tagsum {

template <typename Scalar>
struct LossTerms {
  Var<Scalar> generation;  // label-smoothed L_s
  Var<Scalar> local;       // invalid when contrastive is off
  Var<Scalar> global;
  Var<Scalar> total;
  double nll = 0;  // teacher-forced NLL without smoothing
  double tau_pos_mean = 0;
  double tau_neg_mean = 0;
  double tau_global_pos_mean = 0;
  double tau_global_neg_mean = 0;
  std::size_t empty_papers = 0;  // papers skipped by the local matcher

  double value(const Var<Scalar>& v) const { return v.valid() ? static_cast<double>(v.value()(0, 0)) : 0.0; }
};

template <typename Scalar>
struct ModelForward {
  EncoderOutput<Scalar> encoder;
  DecoderOutput<Scalar> decoder;
  Var<Scalar> summary;  // g_Ly, one row per example
  MatchScores<Scalar> scores;
  LossTerms<Scalar> loss;
};

/// Mean -log p(target) over non-PAD targets.
template <typename Scalar>
double negative_log_likelihood(const Matrix<Scalar>& logits, const std::vector<int>& targets);

template <typename Scalar>
class TagModel {
 public:
  /// Creates every parameter (zero valued); call initialize() before use.
  explicit TagModel(const ModelConfig& config);

  void initialize(std::uint64_t seed) { params_.initialize(seed, config_.embedding_std); }

  /// Teacher-forced pass over a batch with the joint loss. Batches built
  /// without negatives are allowed only when contrastive is off.
  ModelForward<Scalar> forward(Tape<Scalar>& tape, const Batch& batch, const ForwardContext& ctx,
                               DecoderTrace<Scalar>* trace = nullptr) const;

  EncoderOutput<Scalar> encode(Tape<Scalar>& tape, const Batch& batch) const {
    return encoder_(tape, batch, ForwardContext{});
  }

  /// Log-probabilities of the next token after each prefix; prefixes start
  /// with BOS and example[i] selects the encoded example of prefix i.
  Matrix<Scalar> next_token_log_probs(Tape<Scalar>& tape, const EncoderOutput<Scalar>& memory,
                                      const std::vector<std::vector<int>>& prefixes, const std::vector<int>& example,
                                      DecoderTrace<Scalar>* trace = nullptr) const;

  const ModelConfig& config() const { return config_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  const TokenEmbedding<Scalar>& embedding() const { return *embedding_; }
  const GraphEncoder<Scalar>& encoder() const { return encoder_; }
  const HierarchicalDecoder<Scalar>& decoder() const { return decoder_; }
  const LocalMatcher<Scalar>& local_matcher() const { return local_; }
  const GlobalMatcher<Scalar>& global_matcher() const { return global_; }

  /// Longest sequence the positional table covers.
  static Index max_positions(const ModelConfig& config);

 private:
  ModelConfig config_;
  ParameterSet<Scalar> params_;
  std::unique_ptr<TokenEmbedding<Scalar>> embedding_;
  GraphEncoder<Scalar> encoder_;
  HierarchicalDecoder<Scalar> decoder_;
  LocalMatcher<Scalar> local_;
  GlobalMatcher<Scalar> global_;
};

}  // namespace tagsum
