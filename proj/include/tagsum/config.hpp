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

#pragma once

#include <cstdint>
#include <string>

namespace tagsum {

/// Architecture and data-shape hyperparameters of the model.
struct ModelConfig {
  int d_model = 64;          // paper profile: 768
  int heads = 4;             // paper profile: 6
  int d_ff = 128;            // paper profile: 1024
  int encoder_layers = 2;    // token-level layers; paper: 6
  int graph_layers = 1;      // paper profile: 2
  int decoder_layers = 2;    // paper profile: 6
  double dropout = 0.1;
  int vocab_size = 0;        // set from the vocabulary
  int max_references = 5;
  int max_keyphrases = 20;
  int max_abstract_words = 200;
  int max_keyphrase_words = 3;
  int max_related_work_words = 150;
  int negatives = 5;
  double label_smoothing = 0.1;
  double embedding_std = 0.02;
  bool use_graph_encoder = true;
  bool use_hierarchical_decoder = true;
  bool use_contrastive = true;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

struct TrainingConfig {
  int batch_size = 8;         // paper profile: 16
  double learning_rate = 5e-4;  // paper profile: 1e-4
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;     // <= 0 disables clipping
  int steps = 2000;
  int validate_every = 200;   // 0 disables validation
  int validation_examples = 0;  // 0 = whole split
  int patience = 5;           // validations without improvement; 0 disables
  bool resample_negatives = false;
  std::uint64_t seed = 13;
  std::string precision = "float32";  // float32 | float64

  void validate() const;
};

struct InferenceConfig {
  int beam_width = 5;
  int min_length = 10;        // paper profile: 100
  int max_length = 30;        // paper profile: 150
  double length_penalty = 0.4;
  int no_repeat_ngram = 0;    // 0 disables n-gram blocking
  bool greedy = false;

  void validate() const;
};

/// The three ablations of the full model.
enum class Ablation { kGraphEncoder, kHierarchicalDecoder, kContrastive };

/// Returns the config with the matching use_* switch turned off. Throws on
/// an unknown flag name, listing the valid ones.
ModelConfig ablate(ModelConfig config, Ablation flag);
ModelConfig ablate(ModelConfig config, const std::string& flag);

/// Named profiles: "desk" (laptop scale) and "paper" (published sizes).
ModelConfig model_profile(const std::string& name);
TrainingConfig training_profile(const std::string& name);
InferenceConfig inference_profile(const std::string& name);

}  // namespace tagsum
