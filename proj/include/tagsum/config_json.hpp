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

// JSON views of the config structs. Merging overwrites only the keys that
// are present and rejects keys the struct does not have.

#pragma once

#include <string>

#include "json.hpp"
#include "tagsum/config.hpp"

namespace tagsum {

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainingConfig& config);
nlohmann::json to_json(const InferenceConfig& config);

/// `where` names the enclosing object in error messages.
void merge(ModelConfig& config, const nlohmann::json& j, const std::string& where = "model");
void merge(TrainingConfig& config, const nlohmann::json& j, const std::string& where = "training");
void merge(InferenceConfig& config, const nlohmann::json& j, const std::string& where = "inference");

}  // namespace tagsum
