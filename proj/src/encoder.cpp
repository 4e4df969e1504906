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

#include "tagsum/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tagsum {
namespace {

std::vector<AttentionBlock> square_blocks(const std::vector<Segment>& segments) {
  std::vector<AttentionBlock> blocks;
  blocks.reserve(segments.size());
  for (const auto& s : segments) blocks.push_back({s.begin, s.count, s.begin, s.count, false});
  return blocks;
}

}  // namespace

std::vector<Segment> sequence_segments(const std::vector<std::vector<int>>& sequences) {
  std::vector<Segment> out;
  out.reserve(sequences.size());
  Index offset = 0;
  for (const auto& s : sequences) {
    out.push_back({offset, static_cast<Index>(s.size())});
    offset += static_cast<Index>(s.size());
  }
  return out;
}

template <typename Scalar>
TokenEmbedding<Scalar>::TokenEmbedding(ParameterSet<Scalar>& params, const std::string& name, Index vocab, Index d,
                                       Index max_positions)
    : table_(&params.create(name, vocab, d, InitKind::kNormal)),
      positions_(sinusoidal_positions<Scalar>(max_positions, d)),
      scale_(static_cast<Scalar>(std::sqrt(static_cast<double>(d)))) {}

template <typename Scalar>
Var<Scalar> TokenEmbedding<Scalar>::operator()(Tape<Scalar>& tape,
                                               const std::vector<std::vector<int>>& sequences) const {
  std::vector<Index> ids;
  Index total = 0;
  for (const auto& s : sequences) total += static_cast<Index>(s.size());
  ids.reserve(static_cast<std::size_t>(total));
  Matrix<Scalar> pos(total, positions_.cols());
  Index row = 0;
  for (const auto& s : sequences) {
    if (static_cast<Index>(s.size()) > positions_.rows())
      throw std::invalid_argument("sequence of length " + std::to_string(s.size()) + " exceeds the " +
                                  std::to_string(positions_.rows()) + " supported positions");
    for (std::size_t p = 0; p < s.size(); ++p) {
      if (s[p] < 0 || s[p] >= table_->value.rows()) throw std::out_of_range("token id outside the vocabulary");
      ids.push_back(s[p]);
      pos.row(row++) = positions_.row(static_cast<Index>(p));
    }
  }
  auto embedded = scale(gather_rows(tape.parameter(*table_), std::move(ids)), scale_);
  return embedded + tape.constant(std::move(pos));
}

template <typename Scalar>
TokenEncoder<Scalar>::TokenEncoder(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config) {
  for (int l = 0; l < config.encoder_layers; ++l)
    layers_.emplace_back(params, name + ".layer" + std::to_string(l), config.d_model, config.heads, config.d_ff);
}

template <typename Scalar>
Var<Scalar> TokenEncoder<Scalar>::operator()(Tape<Scalar>& tape, Var<Scalar> embedded,
                                             const std::vector<Segment>& documents, const ForwardContext& ctx) const {
  auto h = dropout(embedded, ctx.dropout, ctx.rng);
  for (const auto& layer : layers_) h = layer(tape, h, square_blocks(documents), ctx);
  return h;
}

GraphAdjacency GraphAdjacency::from_layouts(const std::vector<ExampleLayout>& layouts) {
  GraphAdjacency g;
  Index ref_offset = 0, kp_offset = 0;
  for (std::size_t e = 0; e < layouts.size(); ++e) {
    const auto& l = layouts[e];
    const auto n_ref = static_cast<Index>(l.reference_docs.size());
    const auto n_kp = static_cast<Index>(l.keyphrase_docs.size());
    g.references.push_back({ref_offset, n_ref});
    g.keyphrases.push_back({kp_offset, n_kp});
    g.reference_example.insert(g.reference_example.end(), static_cast<std::size_t>(n_ref), static_cast<int>(e));
    g.keyphrase_example.insert(g.keyphrase_example.end(), static_cast<std::size_t>(n_kp), static_cast<int>(e));
    g.reference_keyphrases.resize(static_cast<std::size_t>(ref_offset + n_ref));
    g.keyphrase_references.resize(static_cast<std::size_t>(kp_offset + n_kp));
    for (const auto& [c, r] : l.edges) {
      const auto kc = static_cast<std::size_t>(kp_offset + c);
      const auto rr = static_cast<std::size_t>(ref_offset + r);
      g.keyphrase_references[kc].push_back(static_cast<int>(rr));
      g.reference_keyphrases[rr].push_back(static_cast<int>(kc));
    }
    ref_offset += n_ref;
    kp_offset += n_kp;
  }
  for (auto& v : g.keyphrase_references) std::sort(v.begin(), v.end());
  for (auto& v : g.reference_keyphrases) std::sort(v.begin(), v.end());
  return g;
}

template <typename Scalar>
TargetCenteredAttention<Scalar>::TargetCenteredAttention(ParameterSet<Scalar>& params, const std::string& name,
                                                         const ModelConfig& config)
    : self_(params, name + ".self", config.d_model, config.heads),
      scorer_(params, name + ".scorer", 1, config.d_ff, 1) {}

template <typename Scalar>
TargetCenteredResult<Scalar> TargetCenteredAttention<Scalar>::operator()(Tape<Scalar>& tape, Var<Scalar> references,
                                                                         Var<Scalar> targets,
                                                                         const GraphAdjacency& graph,
                                                                         const ForwardContext& ctx) const {
  for (const auto& seg : graph.references)
    if (seg.count == 0) throw std::invalid_argument("target-centered attention needs at least one reference per example");
  std::vector<Index> owner(graph.reference_example.begin(), graph.reference_example.end());
  auto similarity = row_dot(references, gather_rows(targets, std::move(owner)));
  auto beta = segment_softmax(scorer_(tape, similarity, ctx), graph.references);
  auto attended = self_(tape, references, references, square_blocks(graph.references));
  return {scale_rows(attended, beta), beta};
}

template <typename Scalar>
GraphLayer<Scalar>::GraphLayer(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config)
    : keyphrase_self_(params, name + ".keyphrase_self", config.d_model, config.heads),
      keyphrase_papers_(params, name + ".keyphrase_papers", config.d_model, config.heads),
      keyphrase_fusion_(params, name + ".keyphrase_fusion", config.d_model, 2, config.d_ff),
      reference_self_(params, name + ".reference_self", config.d_model, config.heads),
      reference_keyphrases_(params, name + ".reference_keyphrases", config.d_model, config.heads),
      target_centered_(params, name + ".target_centered", config),
      reference_fusion_(params, name + ".reference_fusion", config.d_model, 3, config.d_ff),
      target_references_(params, name + ".target_references", config.d_model, config.heads),
      target_keyphrases_(params, name + ".target_keyphrases", config.d_model, config.heads),
      target_fusion_(params, name + ".target_fusion", config.d_model, 2, config.d_ff) {}

template <typename Scalar>
GraphLayerResult<Scalar> GraphLayer<Scalar>::operator()(Tape<Scalar>& tape, const GraphNodes<Scalar>& nodes,
                                                        const GraphAdjacency& graph,
                                                        const ForwardContext& ctx) const {
  const auto examples = static_cast<Index>(graph.examples());

  // Keyphrases: self-attention within the example, cross-attention to the
  // adjacent papers (the target plus every linked reference).
  auto kp_self = keyphrase_self_(tape, nodes.keyphrases, nodes.keyphrases, square_blocks(graph.keyphrases));
  std::vector<Index> adjacent;
  std::vector<AttentionBlock> kp_blocks;
  for (std::size_t c = 0; c < graph.keyphrase_example.size(); ++c) {
    const auto begin = static_cast<Index>(adjacent.size());
    adjacent.push_back(graph.keyphrase_example[c]);
    for (int r : graph.keyphrase_references[c]) adjacent.push_back(examples + r);
    kp_blocks.push_back({static_cast<Index>(c), 1, begin, static_cast<Index>(adjacent.size()) - begin, false});
  }
  auto papers = gather_rows(concat_rows<Scalar>({nodes.target, nodes.references}), std::move(adjacent));
  auto kp_cross = keyphrase_papers_(tape, nodes.keyphrases, papers, std::move(kp_blocks));
  auto keyphrases = keyphrase_fusion_(tape, nodes.keyphrases, {kp_self, kp_cross}, ctx);

  // References: self-attention, cross-attention to linked keyphrases, and
  // target-centered attention.
  auto ref_self = reference_self_(tape, nodes.references, nodes.references, square_blocks(graph.references));
  std::vector<Index> linked;
  std::vector<AttentionBlock> ref_blocks;
  for (std::size_t r = 0; r < graph.reference_example.size(); ++r) {
    const auto begin = static_cast<Index>(linked.size());
    for (int c : graph.reference_keyphrases[r]) linked.push_back(c);
    ref_blocks.push_back({static_cast<Index>(r), 1, begin, static_cast<Index>(linked.size()) - begin, false});
  }
  auto ref_cross = reference_keyphrases_(tape, nodes.references, gather_rows(keyphrases, std::move(linked)),
                                         std::move(ref_blocks));
  auto centered = target_centered_(tape, nodes.references, nodes.target, graph, ctx);
  auto references = reference_fusion_(tape, nodes.references, {ref_self, ref_cross, centered.weighted}, ctx);

  // Target: cross-attention to the updated references and keyphrases.
  std::vector<AttentionBlock> to_refs, to_kps;
  for (Index e = 0; e < examples; ++e) {
    const auto& rs = graph.references[static_cast<std::size_t>(e)];
    const auto& ks = graph.keyphrases[static_cast<std::size_t>(e)];
    to_refs.push_back({e, 1, rs.begin, rs.count, false});
    to_kps.push_back({e, 1, ks.begin, ks.count, false});
  }
  auto tgt_refs = target_references_(tape, nodes.target, references, std::move(to_refs));
  auto tgt_kps = target_keyphrases_(tape, nodes.target, keyphrases, std::move(to_kps));
  auto target = target_fusion_(tape, nodes.target, {tgt_refs, tgt_kps}, ctx);

  return {{target, references, keyphrases}, centered.beta};
}

template <typename Scalar>
DocumentAttentionLayer<Scalar>::DocumentAttentionLayer(ParameterSet<Scalar>& params, const std::string& name,
                                                       const ModelConfig& config)
    : attention_(params, name + ".documents", config.d_model, config.heads),
      norm_(params, name + ".norm", config.d_model) {}

template <typename Scalar>
GraphNodes<Scalar> DocumentAttentionLayer<Scalar>::operator()(Tape<Scalar>& tape, const GraphNodes<Scalar>& nodes,
                                                              const GraphAdjacency& graph,
                                                              const ForwardContext& ctx) const {
  const auto examples = static_cast<Index>(graph.examples());
  std::vector<Index> order, target_pos, ref_pos(graph.reference_example.size());
  std::vector<Segment> groups;
  for (Index e = 0; e < examples; ++e) {
    const auto begin = static_cast<Index>(order.size());
    target_pos.push_back(begin);
    order.push_back(e);
    const auto& rs = graph.references[static_cast<std::size_t>(e)];
    for (Index r = rs.begin; r < rs.begin + rs.count; ++r) {
      ref_pos[static_cast<std::size_t>(r)] = static_cast<Index>(order.size());
      order.push_back(examples + r);
    }
    groups.push_back({begin, static_cast<Index>(order.size()) - begin});
  }
  auto docs = gather_rows(concat_rows<Scalar>({nodes.target, nodes.references}), std::move(order));
  auto attended = attention_(tape, docs, docs, square_blocks(groups));
  auto out = norm_(tape, docs + dropout(attended, ctx.dropout, ctx.rng));
  return {gather_rows(out, std::move(target_pos)), gather_rows(out, std::move(ref_pos)), nodes.keyphrases};
}

template <typename Scalar>
WordFusion<Scalar>::WordFusion(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config)
    : ffn_(params, name, config.d_model, config.d_ff, config.d_model) {}

template <typename Scalar>
GraphEncoder<Scalar>::GraphEncoder(ParameterSet<Scalar>& params, const ModelConfig& config,
                                   const TokenEmbedding<Scalar>* embedding)
    : config_(config), embedding_(embedding), tokens_(params, "encoder.tokens", config) {
  for (int l = 0; l < config.graph_layers; ++l) {
    const std::string name = "encoder.graph" + std::to_string(l);
    if (config.use_graph_encoder)
      graph_layers_.emplace_back(params, name, config);
    else
      document_layers_.emplace_back(params, name, config);
  }
  fusion_ = WordFusion<Scalar>(params, "encoder.word_fusion", config);
}

template <typename Scalar>
EncoderOutput<Scalar> GraphEncoder<Scalar>::operator()(Tape<Scalar>& tape, const Batch& batch,
                                                       const ForwardContext& ctx) const {
  EncoderOutput<Scalar> out;
  out.documents = sequence_segments(batch.documents);
  out.tokens = tokens_(tape, (*embedding_)(tape, batch.documents), out.documents, ctx);
  out.initial_nodes = init_nodes(out.tokens, out.documents);
  out.graph = GraphAdjacency::from_layouts(batch.examples);

  std::vector<Index> target_docs, ref_docs, kp_docs;
  for (const auto& l : batch.examples) {
    target_docs.push_back(l.target_doc);
    ref_docs.insert(ref_docs.end(), l.reference_docs.begin(), l.reference_docs.end());
    kp_docs.insert(kp_docs.end(), l.keyphrase_docs.begin(), l.keyphrase_docs.end());
  }
  GraphNodes<Scalar> nodes{gather_rows(out.initial_nodes, target_docs), gather_rows(out.initial_nodes, ref_docs),
                           gather_rows(out.initial_nodes, kp_docs)};
  for (const auto& layer : graph_layers_) {
    auto result = layer(tape, nodes, out.graph, ctx);
    nodes = result.nodes;
    out.beta.push_back(result.beta.value());
  }
  for (const auto& layer : document_layers_) nodes = layer(tape, nodes, out.graph, ctx);
  out.nodes = nodes;

  // Word-level fusion of every target, reference and keyphrase token with
  // its node state.
  auto fuse = [&](auto docs_of, Var<Scalar> node_states, std::vector<Segment>& example_rows,
                  std::vector<std::vector<Segment>>* spans) {
    std::vector<Index> token_rows, node_rows;
    Index node = 0;
    for (const auto& l : batch.examples) {
      const auto begin = static_cast<Index>(token_rows.size());
      std::vector<Segment> per_doc;
      for (int d : docs_of(l)) {
        const auto& seg = out.documents[static_cast<std::size_t>(d)];
        per_doc.push_back({static_cast<Index>(token_rows.size()), seg.count});
        for (Index t = 0; t < seg.count; ++t) {
          token_rows.push_back(seg.begin + t);
          node_rows.push_back(node);
        }
        ++node;
      }
      example_rows.push_back({begin, static_cast<Index>(token_rows.size()) - begin});
      if (spans) spans->push_back(std::move(per_doc));
    }
    return fusion_(tape, gather_rows(out.tokens, std::move(token_rows)), gather_rows(node_states, std::move(node_rows)),
                   ctx);
  };
  out.target_memory = fuse([](const ExampleLayout& l) { return std::vector<int>{l.target_doc}; }, nodes.target,
                           out.target_rows, nullptr);
  out.reference_memory = fuse([](const ExampleLayout& l) { return l.reference_docs; }, nodes.references,
                              out.reference_rows, &out.reference_spans);
  out.keyphrase_memory = fuse([](const ExampleLayout& l) { return l.keyphrase_docs; }, nodes.keyphrases,
                              out.keyphrase_rows, &out.keyphrase_spans);
  return out;
}

template class TokenEmbedding<float>;
template class TokenEmbedding<double>;
template class TokenEncoder<float>;
template class TokenEncoder<double>;
template class TargetCenteredAttention<float>;
template class TargetCenteredAttention<double>;
template class GraphLayer<float>;
template class GraphLayer<double>;
template class DocumentAttentionLayer<float>;
template class DocumentAttentionLayer<double>;
template class WordFusion<float>;
template class WordFusion<double>;
template class GraphEncoder<float>;
template class GraphEncoder<double>;

}  // namespace tagsum
