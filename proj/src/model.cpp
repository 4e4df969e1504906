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

#include "tagsum/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tagsum {
namespace {

double mean_sigmoid(const Matrix<double>& logits) {
  if (logits.size() == 0) return 0.0;
  return (1.0 / (1.0 + (-logits.array()).exp())).mean();
}

// Papers of one kind (references or negatives) for the local matcher:
// non-empty documents, the example that owns each, and per-example runs.
struct PaperList {
  std::vector<Segment> papers;
  std::vector<int> owner;
  std::vector<Segment> per_example;
  std::vector<Index> docs;               // every document, empty or not
  std::vector<Segment> docs_per_example;
  std::size_t empty = 0;
};

template <typename DocsOf>
PaperList collect(const Batch& batch, const std::vector<Segment>& documents, DocsOf docs_of, const char* kind) {
  PaperList list;
  for (std::size_t e = 0; e < batch.examples.size(); ++e) {
    const auto& docs = docs_of(batch.examples[e]);
    const auto begin = static_cast<Index>(list.papers.size());
    const auto doc_begin = static_cast<Index>(list.docs.size());
    for (int d : docs) {
      list.docs.push_back(d);
      const auto& seg = documents[static_cast<std::size_t>(d)];
      if (seg.count == 0) {
        ++list.empty;
        continue;
      }
      list.papers.push_back(seg);
      list.owner.push_back(static_cast<int>(e));
    }
    const auto count = static_cast<Index>(list.papers.size()) - begin;
    if (count == 0)
      throw std::invalid_argument(std::string("contrastive loss needs at least one non-empty ") + kind +
                                  " paper per example");
    list.per_example.push_back({begin, count});
    list.docs_per_example.push_back({doc_begin, static_cast<Index>(list.docs.size()) - doc_begin});
  }
  return list;
}

}  // namespace

template <typename Scalar>
double negative_log_likelihood(const Matrix<Scalar>& logits, const std::vector<int>& targets) {
  if (static_cast<Index>(targets.size()) != logits.rows()) throw std::invalid_argument("one target per logit row");
  double total = 0.0;
  std::size_t count = 0;
  for (Index r = 0; r < logits.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t == kPad) continue;
    const auto row = logits.row(r).template cast<double>();
    const double m = row.maxCoeff();
    total += m + std::log((row.array() - m).exp().sum()) - row(t);
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

template <typename Scalar>
Index TagModel<Scalar>::max_positions(const ModelConfig& config) {
  return std::max<Index>({256, config.max_abstract_words, config.max_related_work_words + 2,
                          config.max_keyphrase_words});
}

template <typename Scalar>
TagModel<Scalar>::TagModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  embedding_ = std::make_unique<TokenEmbedding<Scalar>>(params_, "embedding", config_.vocab_size, config_.d_model,
                                                        max_positions(config_));
  encoder_ = GraphEncoder<Scalar>(params_, config_, embedding_.get());
  decoder_ = HierarchicalDecoder<Scalar>(params_, config_, embedding_.get());
  if (config_.use_contrastive) {
    local_ = LocalMatcher<Scalar>(params_, "contrastive.local", config_);
    global_ = GlobalMatcher<Scalar>(params_, "contrastive.global", config_);
  }
}

template <typename Scalar>
ModelForward<Scalar> TagModel<Scalar>::forward(Tape<Scalar>& tape, const Batch& batch, const ForwardContext& ctx,
                                               DecoderTrace<Scalar>* trace) const {
  ModelForward<Scalar> out;
  out.encoder = encoder_(tape, batch, ctx);
  out.decoder = decoder_(tape, out.encoder, DecoderInput::teacher_forced(batch), ctx, trace);
  const auto targets = DecoderInput::teacher_targets(batch);
  auto& loss = out.loss;
  loss.nll = negative_log_likelihood(out.decoder.logits.value(), targets);
  loss.generation = generation_loss(out.decoder.logits, targets, static_cast<Scalar>(config_.label_smoothing));

  std::vector<Index> last;
  for (const auto& s : out.decoder.sequences) last.push_back(s.begin + s.count - 1);
  out.summary = gather_rows(out.decoder.contexts.state, std::move(last));

  if (!config_.use_contrastive) {
    loss.total = loss.generation;
    return out;
  }

  const auto& docs = out.encoder.documents;
  auto positives = collect(batch, docs, [](const ExampleLayout& l) -> const std::vector<int>& {
    return l.reference_docs;
  }, "reference");
  auto negatives = collect(batch, docs, [](const ExampleLayout& l) -> const std::vector<int>& {
    return l.negative_docs;
  }, "negative");
  loss.empty_papers = positives.empty + negatives.empty;

  auto& s = out.scores;
  s.local_positive = local_(tape, out.summary, out.encoder.tokens, positives.papers, positives.owner);
  s.local_negative = local_(tape, out.summary, out.encoder.tokens, negatives.papers, negatives.owner);
  loss.local = matching_loss(s.local_positive, positives.per_example, s.local_negative, negatives.per_example);

  auto pooled = [&](const PaperList& list) {
    return segment_mean(gather_rows(out.encoder.initial_nodes, list.docs), list.docs_per_example);
  };
  s.global_positive = global_(tape, out.summary, pooled(positives), ctx);
  s.global_negative = global_(tape, out.summary, pooled(negatives), ctx);
  std::vector<Segment> each;
  for (std::size_t e = 0; e < batch.examples.size(); ++e) each.push_back({static_cast<Index>(e), 1});
  loss.global = matching_loss(s.global_positive, each, s.global_negative, each);

  loss.total = loss.global + loss.local + loss.generation;
  loss.tau_pos_mean = mean_sigmoid(s.local_positive.value().template cast<double>());
  loss.tau_neg_mean = mean_sigmoid(s.local_negative.value().template cast<double>());
  loss.tau_global_pos_mean = mean_sigmoid(s.global_positive.value().template cast<double>());
  loss.tau_global_neg_mean = mean_sigmoid(s.global_negative.value().template cast<double>());
  return out;
}

template <typename Scalar>
Matrix<Scalar> TagModel<Scalar>::next_token_log_probs(Tape<Scalar>& tape, const EncoderOutput<Scalar>& memory,
                                                      const std::vector<std::vector<int>>& prefixes,
                                                      const std::vector<int>& example,
                                                      DecoderTrace<Scalar>* trace) const {
  auto out = decoder_(tape, memory, DecoderInput{prefixes, example}, ForwardContext{}, trace, true);
  Matrix<Scalar> logits = out.logits.value();
  for (Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    const Scalar lse = m + std::log((logits.row(r).array() - m).exp().sum());
    logits.row(r).array() -= lse;
  }
  return logits;
}

template double negative_log_likelihood<float>(const Matrix<float>&, const std::vector<int>&);
template double negative_log_likelihood<double>(const Matrix<double>&, const std::vector<int>&);
template class TagModel<float>;
template class TagModel<double>;

}  // namespace tagsum
