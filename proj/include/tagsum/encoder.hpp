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

// Target-centered graph encoder.
//
// Documents (target, references, keyphrases, negatives) are first encoded
// independently by a token-level transformer. Mean-pooled document vectors
// become graph nodes: one target node per example in the center, reference
// nodes linked to it, and keyphrase nodes linked to the target and to every
// reference sharing a token with them. Each graph layer updates keyphrases,
// then references, then the target. Finally every token state is fused with
// its document's node state.

#pragma once

#include <string>
#include <vector>

#include "tagsum/autodiff.hpp"
#include "tagsum/batch.hpp"
#include "tagsum/config.hpp"
#include "tagsum/layers.hpp"

namespace tagsum {

template <typename Scalar>
class TokenEmbedding {
 public:
  TokenEmbedding() = default;
  TokenEmbedding(ParameterSet<Scalar>& params, const std::string& name, Index vocab, Index d, Index max_positions);

  /// Scaled embeddings plus sinusoidal positions; each sequence restarts at
  /// position 0. Rows are the sequences concatenated.
  Var<Scalar> operator()(Tape<Scalar>& tape, const std::vector<std::vector<int>>& sequences) const;

  Parameter<Scalar>& table() const { return *table_; }

 private:
  Parameter<Scalar>* table_ = nullptr;
  Matrix<Scalar> positions_;
  Scalar scale_ = 1;
};

/// Row segments of consecutive sequences.
std::vector<Segment> sequence_segments(const std::vector<std::vector<int>>& sequences);

/// N1 token-level self-attention layers; attention never crosses documents.
template <typename Scalar>
class TokenEncoder {
 public:
  TokenEncoder() = default;
  TokenEncoder(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config);

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> embedded, const std::vector<Segment>& documents,
                         const ForwardContext& ctx) const;

 private:
  std::vector<TransformerLayer<Scalar>> layers_;
};

/// Mean of each document's token states; empty documents give zero.
template <typename Scalar>
Var<Scalar> init_nodes(Var<Scalar> token_states, const std::vector<Segment>& documents) {
  return segment_mean(token_states, documents);
}

/// Graph topology in compact node indices. Reference and keyphrase nodes of
/// example e occupy rows references[e] and keyphrases[e] of their matrices;
/// the target of example e is row e of the target matrix.
struct GraphAdjacency {
  std::vector<Segment> references;
  std::vector<Segment> keyphrases;
  std::vector<int> reference_example;
  std::vector<int> keyphrase_example;
  std::vector<std::vector<int>> keyphrase_references;  // global reference rows per keyphrase
  std::vector<std::vector<int>> reference_keyphrases;  // global keyphrase rows per reference

  std::size_t examples() const { return references.size(); }
  static GraphAdjacency from_layouts(const std::vector<ExampleLayout>& layouts);
};

template <typename Scalar>
struct GraphNodes {
  Var<Scalar> target;      // one row per example
  Var<Scalar> references;
  Var<Scalar> keyphrases;
};

template <typename Scalar>
struct TargetCenteredResult {
  Var<Scalar> weighted;  // beta_i * self-attended reference i
  Var<Scalar> beta;      // column, softmax within each example
};

/// Self-attention over references, weighted by a softmax over references of
/// FFN(<reference node, target node>). The FFN maps the scalar product
/// through 1 -> d_ff -> 1. Throws if an example has no references.
template <typename Scalar>
class TargetCenteredAttention {
 public:
  TargetCenteredAttention() = default;
  TargetCenteredAttention(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config);

  TargetCenteredResult<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> references, Var<Scalar> targets,
                                          const GraphAdjacency& graph, const ForwardContext& ctx) const;

  const MultiHeadAttention<Scalar>& self_attention() const { return self_; }
  const FeedForward<Scalar>& scorer() const { return scorer_; }

 private:
  MultiHeadAttention<Scalar> self_;
  FeedForward<Scalar> scorer_;
};

template <typename Scalar>
struct GraphLayerResult {
  GraphNodes<Scalar> nodes;
  Var<Scalar> beta;
};

/// One graph encoding layer: keyphrases, then references, then the target.
template <typename Scalar>
class GraphLayer {
 public:
  GraphLayer() = default;
  GraphLayer(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config);

  GraphLayerResult<Scalar> operator()(Tape<Scalar>& tape, const GraphNodes<Scalar>& nodes,
                                      const GraphAdjacency& graph, const ForwardContext& ctx) const;

 private:
  MultiHeadAttention<Scalar> keyphrase_self_;
  MultiHeadAttention<Scalar> keyphrase_papers_;
  FusionBlock<Scalar> keyphrase_fusion_;
  MultiHeadAttention<Scalar> reference_self_;
  MultiHeadAttention<Scalar> reference_keyphrases_;
  TargetCenteredAttention<Scalar> target_centered_;
  FusionBlock<Scalar> reference_fusion_;
  MultiHeadAttention<Scalar> target_references_;
  MultiHeadAttention<Scalar> target_keyphrases_;
  FusionBlock<Scalar> target_fusion_;
};

/// Ablation replacement for GraphLayer: target and reference nodes of an
/// example attend to each other (LN(h + MHAtt(h, docs))); keyphrase nodes
/// keep their pooled states.
template <typename Scalar>
class DocumentAttentionLayer {
 public:
  DocumentAttentionLayer() = default;
  DocumentAttentionLayer(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config);

  GraphNodes<Scalar> operator()(Tape<Scalar>& tape, const GraphNodes<Scalar>& nodes, const GraphAdjacency& graph,
                                const ForwardContext& ctx) const;

 private:
  MultiHeadAttention<Scalar> attention_;
  LayerNorm<Scalar> norm_;
};

/// h_w = FFN(h_token + h_node) for every token row.
template <typename Scalar>
class WordFusion {
 public:
  WordFusion() = default;
  WordFusion(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config);

  Var<Scalar> operator()(Tape<Scalar>& tape, Var<Scalar> token_states, Var<Scalar> node_states,
                         const ForwardContext& ctx) const {
    return ffn_(tape, token_states + node_states, ctx);
  }

  const FeedForward<Scalar>& ffn() const { return ffn_; }

 private:
  FeedForward<Scalar> ffn_;
};

template <typename Scalar>
struct EncoderOutput {
  Var<Scalar> tokens;                    // token-level states of every document, graph-free
  std::vector<Segment> documents;        // rows of each document in `tokens`
  Var<Scalar> initial_nodes;             // mean-pooled state per document
  GraphNodes<Scalar> nodes;              // graph-refined node states
  std::vector<Matrix<Scalar>> beta;      // target-centered weights per graph layer
  GraphAdjacency graph;

  // Fused word-level memories read by the decoder.
  Var<Scalar> target_memory;
  Var<Scalar> reference_memory;
  Var<Scalar> keyphrase_memory;
  std::vector<Segment> target_rows;      // per example
  std::vector<Segment> reference_rows;   // per example, all references back to back
  std::vector<Segment> keyphrase_rows;   // per example
  std::vector<std::vector<Segment>> reference_spans;  // per example, per reference, within reference_memory
  std::vector<std::vector<Segment>> keyphrase_spans;  // per example, per keyphrase, within keyphrase_memory
};

template <typename Scalar>
class GraphEncoder {
 public:
  GraphEncoder() = default;
  GraphEncoder(ParameterSet<Scalar>& params, const ModelConfig& config, const TokenEmbedding<Scalar>* embedding);

  EncoderOutput<Scalar> operator()(Tape<Scalar>& tape, const Batch& batch, const ForwardContext& ctx) const;

  const std::vector<GraphLayer<Scalar>>& graph_layers() const { return graph_layers_; }
  const WordFusion<Scalar>& fusion() const { return fusion_; }

 private:
  ModelConfig config_;
  const TokenEmbedding<Scalar>* embedding_ = nullptr;
  TokenEncoder<Scalar> tokens_;
  std::vector<GraphLayer<Scalar>> graph_layers_;
  std::vector<DocumentAttentionLayer<Scalar>> document_layers_;
  WordFusion<Scalar> fusion_;
};

}  // namespace tagsum
