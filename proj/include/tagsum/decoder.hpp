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

// Keyphrase-guided hierarchical decoder. Every layer runs masked
// self-attention, then queries the keyphrase tokens with the decoder state
// and uses the resulting keyphrase context to query the target and the
// reference tokens.

#pragma once

#include <string>
#include <vector>

#include "tagsum/autodiff.hpp"
#include "tagsum/batch.hpp"
#include "tagsum/config.hpp"
#include "tagsum/encoder.hpp"
#include "tagsum/layers.hpp"

namespace tagsum {

struct DecoderInput {
  std::vector<std::vector<int>> sequences;  // each starts with BOS
  std::vector<int> example;                 // encoder example read by each sequence

  /// Gold sequences without their final token; targets are the gold
  /// sequences shifted left by one.
  static DecoderInput teacher_forced(const Batch& batch);
  static std::vector<int> teacher_targets(const Batch& batch);
};

/// Attention probabilities of the last decoder layer.
template <typename Scalar>
struct DecoderTrace {
  AttentionTrace<Scalar> self;
  AttentionTrace<Scalar> keyphrase;
  AttentionTrace<Scalar> target;
  AttentionTrace<Scalar> reference;
};

template <typename Scalar>
struct DecoderContexts {
  Var<Scalar> state;      // g
  Var<Scalar> keyphrase;  // c_c; invalid without the hierarchical decoder
  Var<Scalar> target;     // c_a
  Var<Scalar> reference;  // c_r
};

template <typename Scalar>
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config);

  /// LN(g + MMHAtt(g, g)) with causal blocks per sequence.
  Var<Scalar> masked_self_attention(Tape<Scalar>& tape, Var<Scalar> states, const std::vector<Segment>& sequences,
                                    const ForwardContext& ctx, AttentionTrace<Scalar>* trace = nullptr) const;

  /// Keyphrase context from the decoder state, then target and reference
  /// contexts queried by the keyphrase context (or by the state directly
  /// when the hierarchical decoder is ablated). The state is updated as
  /// LN(g + Linear(concat(contexts))) followed by the FFN sublayer.
  DecoderContexts<Scalar> hierarchical_cross_attention(Tape<Scalar>& tape, Var<Scalar> state,
                                                       const std::vector<Segment>& sequences,
                                                       const std::vector<int>& example,
                                                       const EncoderOutput<Scalar>& memory, const ForwardContext& ctx,
                                                       DecoderTrace<Scalar>* trace = nullptr) const;

  DecoderContexts<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> states, const std::vector<Segment>& sequences,
                                     const std::vector<int>& example, const EncoderOutput<Scalar>& memory,
                                     const ForwardContext& ctx, DecoderTrace<Scalar>* trace = nullptr) const {
    auto g = masked_self_attention(tape, states, sequences, ctx, trace ? &trace->self : nullptr);
    return hierarchical_cross_attention(tape, g, sequences, example, memory, ctx, trace);
  }

 private:
  bool hierarchical_ = true;
  MultiHeadAttention<Scalar> self_;
  LayerNorm<Scalar> self_norm_;
  MultiHeadAttention<Scalar> keyphrase_;
  MultiHeadAttention<Scalar> target_;
  MultiHeadAttention<Scalar> reference_;
  Linear<Scalar> combine_;
  LayerNorm<Scalar> context_norm_;
  FeedForward<Scalar> ffn_;
  LayerNorm<Scalar> ffn_norm_;
};

/// softmax(W_o [g; c_a; c_r; c_c] + b), returned as logits. Without the
/// hierarchical decoder the input is [g; c_a; c_r].
template <typename Scalar>
class VocabProjection {
 public:
  VocabProjection() = default;
  VocabProjection(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config);

  Var<Scalar> operator()(Tape<Scalar>& tape, const DecoderContexts<Scalar>& contexts) const;

  const Linear<Scalar>& linear() const { return projection_; }

 private:
  bool hierarchical_ = true;
  Linear<Scalar> projection_;
};

template <typename Scalar>
struct DecoderOutput {
  Var<Scalar> logits;                 // one row per position, or per sequence with last_only
  DecoderContexts<Scalar> contexts;   // last layer, every position
  std::vector<Segment> sequences;     // rows of each sequence in contexts
};

template <typename Scalar>
class HierarchicalDecoder {
 public:
  HierarchicalDecoder() = default;
  HierarchicalDecoder(ParameterSet<Scalar>& params, const ModelConfig& config,
                      const TokenEmbedding<Scalar>* embedding);

  DecoderOutput<Scalar> operator()(Tape<Scalar>& tape, const EncoderOutput<Scalar>& memory,
                                   const DecoderInput& input, const ForwardContext& ctx,
                                   DecoderTrace<Scalar>* trace = nullptr, bool last_only = false) const;

  const std::vector<DecoderLayer<Scalar>>& layers() const { return layers_; }
  const VocabProjection<Scalar>& projection() const { return projection_; }

 private:
  const TokenEmbedding<Scalar>* embedding_ = nullptr;
  std::vector<DecoderLayer<Scalar>> layers_;
  VocabProjection<Scalar> projection_;
};

/// Label-smoothed cross-entropy averaged over non-PAD targets. The smoothing
/// mass is spread uniformly over every class except PAD.
template <typename Scalar>
Var<Scalar> generation_loss(Var<Scalar> logits, std::vector<int> targets, Scalar label_smoothing) {
  return smoothed_cross_entropy(logits, std::move(targets), label_smoothing, kPad);
}

}  // namespace tagsum
