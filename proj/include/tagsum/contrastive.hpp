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

// Matching networks that score how related the summary state is to a
// cited (positive) or non-cited (negative) paper, and the losses that push
// positive scores up and negative scores down.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "tagsum/autodiff.hpp"
#include "tagsum/config.hpp"
#include "tagsum/layers.hpp"

namespace tagsum {

/// Scores are logistic outputs; the networks return the pre-logistic logits.
template <typename Scalar>
struct MatchScores {
  Var<Scalar> local_positive;   // one logit per present reference
  Var<Scalar> local_negative;   // one logit per present negative
  Var<Scalar> global_positive;  // one logit per example
  Var<Scalar> global_negative;  // one logit per example
};

/// [summary; token] pairs -> width-3 convolution (zero padded at paper
/// boundaries) -> ReLU -> max-pool over the paper -> linear -> logit.
template <typename Scalar>
class LocalMatcher {
 public:
  LocalMatcher() = default;
  LocalMatcher(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config);

  /// One logit per paper. papers[i] are rows of token_states; owner[i] is
  /// the row of `summary` paired with paper i. Papers must be non-empty.
  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> summary, Var<Scalar> token_states,
                         const std::vector<Segment>& papers, const std::vector<int>& owner) const;

  const Linear<Scalar>& convolution() const { return conv_; }
  const Linear<Scalar>& output() const { return output_; }

 private:
  Linear<Scalar> conv_;    // 3 * 2d -> d
  Linear<Scalar> output_;  // d -> 1
};

/// FFN([summary; pooled paper vector]) -> logit, FFN is 2d -> d_ff -> 1.
template <typename Scalar>
class GlobalMatcher {
 public:
  GlobalMatcher() = default;
  GlobalMatcher(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config);

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> summary, Var<Scalar> pooled,
                         const ForwardContext& ctx) const {
    return ffn_(tape, concat_cols<Scalar>({summary, pooled}), ctx);
  }

  const FeedForward<Scalar>& ffn() const { return ffn_; }

 private:
  FeedForward<Scalar> ffn_;
};

/// -(mean log tau_pos + mean log(1 - tau_neg)) over the given scores.
double matching_loss(std::span<const double> positive_scores, std::span<const double> negative_scores);

/// L = L_global + L_local + L_s, or L_s alone when contrastive is off.
double total_loss(double generation, double local, double global, bool use_contrastive = true);

/// Differentiable matching loss from logits, averaged over examples: each
/// example contributes mean softplus(-z_pos) + mean softplus(z_neg) over its
/// own segments, which equals matching_loss on the logistic scores.
template <typename Scalar>
Var<Scalar> matching_loss(Var<Scalar> positive_logits, const std::vector<Segment>& positive_segments,
                          Var<Scalar> negative_logits, const std::vector<Segment>& negative_segments) {
  auto pos = segment_mean(softplus(scale(positive_logits, Scalar(-1))), positive_segments);
  auto neg = segment_mean(softplus(negative_logits), negative_segments);
  return mean_all(pos + neg);
}

}  // namespace tagsum
