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

#include "tagsum/config.hpp"

#include <stdexcept>

namespace tagsum {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void ModelConfig::validate() const {
  require(d_model > 0 && heads > 0 && d_ff > 0, "d_model, heads and d_ff must be positive");
  require(d_model % heads == 0, "d_model must be divisible by heads");
  require(encoder_layers > 0 && graph_layers > 0 && decoder_layers > 0, "layer counts must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(vocab_size > 4, "vocab_size must exceed the 4 special tokens");
  require(max_references > 0 && max_keyphrases > 0, "max_references and max_keyphrases must be positive");
  require(max_abstract_words > 0 && max_keyphrase_words > 0 && max_related_work_words > 0,
          "length limits must be positive");
  require(negatives > 0, "negatives must be positive");
  require(label_smoothing >= 0.0 && label_smoothing < 1.0, "label_smoothing must lie in [0, 1)");
}

void TrainingConfig::validate() const {
  require(batch_size > 0, "batch_size must be positive");
  require(learning_rate >= 0.0, "learning_rate must be non-negative");
  require(steps >= 0, "steps must be non-negative");
  require(validate_every >= 0 && patience >= 0 && validation_examples >= 0,
          "validation settings must be non-negative");
  require(precision == "float32" || precision == "float64", "precision must be float32 or float64");
}

void InferenceConfig::validate() const {
  require(beam_width >= 1, "beam_width must be at least 1");
  require(min_length >= 0 && max_length >= 1, "decode lengths must be non-negative");
  require(min_length <= max_length, "min_length must not exceed max_length");
  require(no_repeat_ngram >= 0, "no_repeat_ngram must be non-negative");
}

ModelConfig ablate(ModelConfig config, Ablation flag) {
  switch (flag) {
    case Ablation::kGraphEncoder: config.use_graph_encoder = false; break;
    case Ablation::kHierarchicalDecoder: config.use_hierarchical_decoder = false; break;
    case Ablation::kContrastive: config.use_contrastive = false; break;
  }
  return config;
}

ModelConfig ablate(ModelConfig config, const std::string& flag) {
  if (flag == "graph_encoder") return ablate(config, Ablation::kGraphEncoder);
  if (flag == "hierarchical_decoder") return ablate(config, Ablation::kHierarchicalDecoder);
  if (flag == "contrastive") return ablate(config, Ablation::kContrastive);
  throw std::invalid_argument("unknown ablation '" + flag +
                              "'; valid flags: graph_encoder, hierarchical_decoder, contrastive");
}

ModelConfig model_profile(const std::string& name) {
  ModelConfig c;
  if (name == "desk") return c;
  if (name == "paper") {
    c.d_model = 768;
    c.heads = 6;
    c.d_ff = 1024;
    c.encoder_layers = 6;
    c.graph_layers = 2;
    c.decoder_layers = 6;
    return c;
  }
  throw std::invalid_argument("unknown profile '" + name + "'; valid profiles: desk, paper");
}

TrainingConfig training_profile(const std::string& name) {
  TrainingConfig c;
  if (name == "desk") return c;
  if (name == "paper") {
    c.batch_size = 16;
    c.learning_rate = 1e-4;
    c.steps = 200000;
    c.validate_every = 2000;
    return c;
  }
  throw std::invalid_argument("unknown profile '" + name + "'; valid profiles: desk, paper");
}

InferenceConfig inference_profile(const std::string& name) {
  InferenceConfig c;
  if (name == "desk") return c;
  if (name == "paper") {
    c.min_length = 100;
    c.max_length = 150;
    return c;
  }
  throw std::invalid_argument("unknown profile '" + name + "'; valid profiles: desk, paper");
}

}  // namespace tagsum
