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

#include "tagsum/decoder.hpp"

#include <stdexcept>

namespace tagsum {
namespace {

std::vector<AttentionBlock> cross_blocks(const std::vector<Segment>& sequences, const std::vector<int>& example,
                                         const std::vector<Segment>& memory_rows) {
  std::vector<AttentionBlock> blocks;
  blocks.reserve(sequences.size());
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& m = memory_rows.at(static_cast<std::size_t>(example[s]));
    blocks.push_back({sequences[s].begin, sequences[s].count, m.begin, m.count, false});
  }
  return blocks;
}

}  // namespace

DecoderInput DecoderInput::teacher_forced(const Batch& batch) {
  DecoderInput in;
  for (std::size_t e = 0; e < batch.gold.size(); ++e) {
    const auto& g = batch.gold[e];
    if (g.size() < 2) throw std::invalid_argument("gold sequence must hold at least BOS and EOS");
    in.sequences.emplace_back(g.begin(), g.end() - 1);
    in.example.push_back(static_cast<int>(e));
  }
  return in;
}

std::vector<int> DecoderInput::teacher_targets(const Batch& batch) {
  std::vector<int> targets;
  for (const auto& g : batch.gold) targets.insert(targets.end(), g.begin() + 1, g.end());
  return targets;
}

template <typename Scalar>
DecoderLayer<Scalar>::DecoderLayer(ParameterSet<Scalar>& params, const std::string& name, const ModelConfig& config)
    : hierarchical_(config.use_hierarchical_decoder),
      self_(params, name + ".self", config.d_model, config.heads),
      self_norm_(params, name + ".self_norm", config.d_model),
      target_(params, name + ".target", config.d_model, config.heads),
      reference_(params, name + ".reference", config.d_model, config.heads),
      context_norm_(params, name + ".context_norm", config.d_model),
      ffn_(params, name + ".ffn", config.d_model, config.d_ff, config.d_model),
      ffn_norm_(params, name + ".ffn_norm", config.d_model) {
  if (hierarchical_) keyphrase_ = MultiHeadAttention<Scalar>(params, name + ".keyphrase", config.d_model, config.heads);
  combine_ = Linear<Scalar>(params, name + ".combine", config.d_model * (hierarchical_ ? 3 : 2), config.d_model);
}

template <typename Scalar>
Var<Scalar> DecoderLayer<Scalar>::masked_self_attention(Tape<Scalar>& tape, Var<Scalar> states,
                                                        const std::vector<Segment>& sequences,
                                                        const ForwardContext& ctx,
                                                        AttentionTrace<Scalar>* trace) const {
  std::vector<AttentionBlock> blocks;
  for (const auto& s : sequences) blocks.push_back({s.begin, s.count, s.begin, s.count, true});
  auto a = self_(tape, states, states, std::move(blocks), trace);
  return self_norm_(tape, states + dropout(a, ctx.dropout, ctx.rng));
}

template <typename Scalar>
DecoderContexts<Scalar> DecoderLayer<Scalar>::hierarchical_cross_attention(
    Tape<Scalar>& tape, Var<Scalar> state, const std::vector<Segment>& sequences, const std::vector<int>& example,
    const EncoderOutput<Scalar>& memory, const ForwardContext& ctx, DecoderTrace<Scalar>* trace) const {
  DecoderContexts<Scalar> out;
  Var<Scalar> query = state;
  if (hierarchical_) {
    out.keyphrase = keyphrase_(tape, state, memory.keyphrase_memory,
                               cross_blocks(sequences, example, memory.keyphrase_rows),
                               trace ? &trace->keyphrase : nullptr);
    query = out.keyphrase;
  }
  out.target = target_(tape, query, memory.target_memory, cross_blocks(sequences, example, memory.target_rows),
                       trace ? &trace->target : nullptr);
  out.reference = reference_(tape, query, memory.reference_memory,
                             cross_blocks(sequences, example, memory.reference_rows),
                             trace ? &trace->reference : nullptr);
  std::vector<Var<Scalar>> parts;
  if (hierarchical_) parts.push_back(out.keyphrase);
  parts.push_back(out.target);
  parts.push_back(out.reference);
  auto h = context_norm_(tape, state + dropout(combine_(tape, concat_cols(parts)), ctx.dropout, ctx.rng));
  out.state = ffn_norm_(tape, h + dropout(ffn_(tape, h, ctx), ctx.dropout, ctx.rng));
  return out;
}

template <typename Scalar>
VocabProjection<Scalar>::VocabProjection(ParameterSet<Scalar>& params, const std::string& name,
                                         const ModelConfig& config)
    : hierarchical_(config.use_hierarchical_decoder),
      projection_(params, name, config.d_model * (config.use_hierarchical_decoder ? 4 : 3), config.vocab_size) {}

template <typename Scalar>
Var<Scalar> VocabProjection<Scalar>::operator()(Tape<Scalar>& tape, const DecoderContexts<Scalar>& c) const {
  std::vector<Var<Scalar>> parts{c.state, c.target, c.reference};
  if (hierarchical_) parts.push_back(c.keyphrase);
  return projection_(tape, concat_cols(parts));
}

template <typename Scalar>
HierarchicalDecoder<Scalar>::HierarchicalDecoder(ParameterSet<Scalar>& params, const ModelConfig& config,
                                                 const TokenEmbedding<Scalar>* embedding)
    : embedding_(embedding) {
  for (int l = 0; l < config.decoder_layers; ++l)
    layers_.emplace_back(params, "decoder.layer" + std::to_string(l), config);
  projection_ = VocabProjection<Scalar>(params, "decoder.projection", config);
}

template <typename Scalar>
DecoderOutput<Scalar> HierarchicalDecoder<Scalar>::operator()(Tape<Scalar>& tape, const EncoderOutput<Scalar>& memory,
                                                              const DecoderInput& input, const ForwardContext& ctx,
                                                              DecoderTrace<Scalar>* trace, bool last_only) const {
  if (input.sequences.size() != input.example.size())
    throw std::invalid_argument("decoder input needs one example index per sequence");
  DecoderOutput<Scalar> out;
  out.sequences = sequence_segments(input.sequences);
  auto g = dropout((*embedding_)(tape, input.sequences), ctx.dropout, ctx.rng);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const bool last = l + 1 == layers_.size();
    out.contexts = layers_[l](tape, g, out.sequences, input.example, memory, ctx, last ? trace : nullptr);
    g = out.contexts.state;
  }
  if (!last_only) {
    out.logits = projection_(tape, out.contexts);
    return out;
  }
  std::vector<Index> last_rows;
  for (const auto& s : out.sequences) last_rows.push_back(s.begin + s.count - 1);
  auto pick = [&](Var<Scalar> v) { return v.valid() ? gather_rows(v, last_rows) : v; };
  DecoderContexts<Scalar> tail{pick(out.contexts.state), pick(out.contexts.keyphrase), pick(out.contexts.target),
                               pick(out.contexts.reference)};
  out.logits = projection_(tape, tail);
  return out;
}

template class DecoderLayer<float>;
template class DecoderLayer<double>;
template class VocabProjection<float>;
template class VocabProjection<double>;
template class HierarchicalDecoder<float>;
template class HierarchicalDecoder<double>;

}  // namespace tagsum
