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

// Small corpora, configs and helpers shared by the tests.

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tagsum/batch.hpp"
#include "tagsum/corpus.hpp"
#include "tagsum/model.hpp"
#include "tagsum/pipeline.hpp"

namespace fixture {

/// d_e = 8, two heads, one layer at every level, dropout off.
inline tagsum::ModelConfig tiny_config() {
  tagsum::ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.d_ff = 16;
  c.encoder_layers = 1;
  c.graph_layers = 1;
  c.decoder_layers = 1;
  c.dropout = 0.0;
  c.max_references = 2;
  c.max_keyphrases = 3;
  c.max_abstract_words = 6;
  c.max_related_work_words = 12;
  c.negatives = 1;
  return c;
}

inline tagsum::CorpusSplit tiny_raw(std::size_t examples = 24, std::uint64_t seed = 7, std::size_t refs = 2,
                                    std::size_t words = 6) {
  tagsum::SyntheticOptions o;
  o.examples = examples;
  o.vocab_size = 60;
  o.refs_per_example = refs;
  o.abstract_words = words;
  o.copied_words = 2;
  o.valid_fraction = 0.2;
  o.test_fraction = 0.0;
  o.seed = seed;
  return tagsum::generate_synthetic_corpus(o);
}

/// Prepared corpus; `config.vocab_size` is set from its vocabulary.
inline tagsum::PreparedCorpus prepare(const tagsum::CorpusSplit& raw, tagsum::ModelConfig& config) {
  auto prepared = tagsum::prepare_corpus(raw, config);
  config.vocab_size = prepared.vocab.size();
  return prepared;
}

inline std::size_t count_present(const tagsum::PaddedIds& grid) {
  std::size_t n = 0;
  for (tagsum::Index r = 0; r < grid.ids.rows(); ++r) n += grid.row_present(r) ? 1 : 0;
  return n;
}

/// First example with exactly the requested numbers of references,
/// keyphrases and negatives.
inline const tagsum::EncodedExample* find_example(const std::vector<tagsum::EncodedExample>& examples,
                                                  std::size_t refs, std::size_t keyphrases, std::size_t negatives) {
  for (const auto& e : examples)
    if (count_present(e.references) == refs && count_present(e.keyphrases) == keyphrases &&
        count_present(e.negatives) == negatives)
      return &e;
  return nullptr;
}

/// Relative error ||a - n|| / (||a|| + ||n||) between analytic gradient a
/// and central differences n for every parameter matrix; returns the worst
/// and the name of the worst parameter through `worst_name`. Matrices whose
/// gradients are both below `floor` in norm count as agreeing: a softmax is
/// shift invariant, so some biases have an exact zero gradient and the ratio
/// would compare round-off with round-off.
inline double gradient_check(tagsum::TagModel<double>& model, const tagsum::Batch& batch, double step,
                             std::string* worst_name = nullptr, double floor = 1e-10) {
  using tagsum::Tape;
  auto loss_at = [&]() {
    Tape<double> tape(false);
    const auto out = model.forward(tape, batch, tagsum::ForwardContext{});
    return out.loss.value(out.loss.total);
  };
  auto& params = model.parameters();
  params.zero_grad();
  {
    Tape<double> tape;
    auto out = model.forward(tape, batch, tagsum::ForwardContext{});
    tape.backward(out.loss.total);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    tagsum::Matrix<double> numeric(p.value.rows(), p.value.cols());
    for (tagsum::Index k = 0; k < p.value.size(); ++k) {
      const double saved = p.value.data()[k];
      p.value.data()[k] = saved + step;
      const double up = loss_at();
      p.value.data()[k] = saved - step;
      const double down = loss_at();
      p.value.data()[k] = saved;
      numeric.data()[k] = (up - down) / (2.0 * step);
    }
    const double diff = (p.grad - numeric).norm();
    const double scale = p.grad.norm() + numeric.norm();
    const double rel = p.grad.norm() < floor && numeric.norm() < floor ? 0.0 : diff / scale;
    if (rel > worst) {
      worst = rel;
      if (worst_name) *worst_name = p.name;
    }
  }
  return worst;
}

/// Fraction of gold tokens (excluding BOS, including EOS) that greedy
/// decoding reproduces position by position.
inline double token_match(const std::vector<int>& gold, const std::vector<int>& generated) {
  std::size_t hit = 0, total = 0;
  for (std::size_t t = 1; t < gold.size(); ++t) {
    ++total;
    const std::size_t g = t - 1;
    if (g < generated.size() && generated[g] == gold[t]) ++hit;
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tagsum_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
