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

#include "tagsum/config_json.hpp"

#include <stdexcept>
#include <tuple>

namespace tagsum {
namespace {

using json = nlohmann::json;

// Each struct is described once as (key, member pointer) pairs; both
// directions walk the same table.
template <typename T, typename... Fields>
json dump(const T& config, const std::tuple<Fields...>& fields) {
  json j = json::object();
  std::apply([&](const auto&... f) { ((j[f.first] = config.*(f.second)), ...); }, fields);
  return j;
}

template <typename T, typename... Fields>
void load(T& config, const json& j, const std::string& where, const std::tuple<Fields...>& fields) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    std::apply(
        [&](const auto&... f) {
          (
              [&] {
                if (found || key != f.first) return;
                found = true;
                using Member = std::remove_reference_t<decltype(config.*(f.second))>;
                try {
                  config.*(f.second) = value.template get<Member>();
                } catch (const json::exception&) {
                  throw std::invalid_argument(where + "." + key + " has the wrong type");
                }
              }(),
              ...);
        },
        fields);
    if (!found) throw std::invalid_argument("unknown key '" + key + "' in " + where);
  }
}

const auto kModelFields = std::make_tuple(
    std::pair{"d_model", &ModelConfig::d_model}, std::pair{"heads", &ModelConfig::heads},
    std::pair{"d_ff", &ModelConfig::d_ff}, std::pair{"encoder_layers", &ModelConfig::encoder_layers},
    std::pair{"graph_layers", &ModelConfig::graph_layers}, std::pair{"decoder_layers", &ModelConfig::decoder_layers},
    std::pair{"dropout", &ModelConfig::dropout}, std::pair{"vocab_size", &ModelConfig::vocab_size},
    std::pair{"max_references", &ModelConfig::max_references},
    std::pair{"max_keyphrases", &ModelConfig::max_keyphrases},
    std::pair{"max_abstract_words", &ModelConfig::max_abstract_words},
    std::pair{"max_keyphrase_words", &ModelConfig::max_keyphrase_words},
    std::pair{"max_related_work_words", &ModelConfig::max_related_work_words},
    std::pair{"negatives", &ModelConfig::negatives}, std::pair{"label_smoothing", &ModelConfig::label_smoothing},
    std::pair{"embedding_std", &ModelConfig::embedding_std},
    std::pair{"use_graph_encoder", &ModelConfig::use_graph_encoder},
    std::pair{"use_hierarchical_decoder", &ModelConfig::use_hierarchical_decoder},
    std::pair{"use_contrastive", &ModelConfig::use_contrastive});

const auto kTrainingFields = std::make_tuple(
    std::pair{"batch_size", &TrainingConfig::batch_size}, std::pair{"learning_rate", &TrainingConfig::learning_rate},
    std::pair{"adam_beta1", &TrainingConfig::adam_beta1}, std::pair{"adam_beta2", &TrainingConfig::adam_beta2},
    std::pair{"adam_eps", &TrainingConfig::adam_eps}, std::pair{"clip_norm", &TrainingConfig::clip_norm},
    std::pair{"steps", &TrainingConfig::steps}, std::pair{"validate_every", &TrainingConfig::validate_every},
    std::pair{"validation_examples", &TrainingConfig::validation_examples},
    std::pair{"patience", &TrainingConfig::patience},
    std::pair{"resample_negatives", &TrainingConfig::resample_negatives}, std::pair{"seed", &TrainingConfig::seed},
    std::pair{"precision", &TrainingConfig::precision});

const auto kInferenceFields = std::make_tuple(
    std::pair{"beam_width", &InferenceConfig::beam_width}, std::pair{"min_length", &InferenceConfig::min_length},
    std::pair{"max_length", &InferenceConfig::max_length},
    std::pair{"length_penalty", &InferenceConfig::length_penalty},
    std::pair{"no_repeat_ngram", &InferenceConfig::no_repeat_ngram}, std::pair{"greedy", &InferenceConfig::greedy});

}  // namespace

json to_json(const ModelConfig& config) { return dump(config, kModelFields); }
json to_json(const TrainingConfig& config) { return dump(config, kTrainingFields); }
json to_json(const InferenceConfig& config) { return dump(config, kInferenceFields); }

void merge(ModelConfig& config, const json& j, const std::string& where) { load(config, j, where, kModelFields); }
void merge(TrainingConfig& config, const json& j, const std::string& where) {
  load(config, j, where, kTrainingFields);
}
void merge(InferenceConfig& config, const json& j, const std::string& where) {
  load(config, j, where, kInferenceFields);
}

}  // namespace tagsum
