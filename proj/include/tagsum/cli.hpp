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

// Pipeline commands behind the `tagsum` executable. Settings come from a
// named profile, then the JSON config file, then command-line flags; later
// sources win.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "json.hpp"
#include "tagsum/config.hpp"
#include "tagsum/corpus.hpp"
#include "tagsum/pipeline.hpp"
#include "tagsum/rouge.hpp"

namespace tagsum {

struct RunPaths {
  std::filesystem::path corpus = "data/raw";        // train/valid/test.jsonl
  std::filesystem::path prepared = "data/prepared";  // vocab, encoded splits, keyphrases
  std::filesystem::path checkpoints = "runs/checkpoints";
  std::filesystem::path outputs = "runs/outputs";
};

struct RunConfig {
  std::string profile = "desk";
  std::uint64_t seed = 13;
  std::size_t filter_min_refs = 2;
  RunPaths paths;
  ModelConfig model;
  TrainingConfig training;
  InferenceConfig inference;
  PreprocessOptions preprocess;

  /// Profile defaults with `seed` copied into the training and
  /// preprocessing seeds.
  static RunConfig from_profile(const std::string& profile, std::uint64_t seed = 13);
  void set_seed(std::uint64_t s);
};

/// Profile (flag, else the file's "profile" key, else "desk"), then the
/// file's remaining keys. Unknown keys anywhere are errors.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::optional<std::string>& profile_flag);
void merge(RunConfig& config, const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);

/// The prepared-data file names under paths.prepared.
struct PreparedFiles {
  std::filesystem::path vocab, keyphrases, stats;
  std::filesystem::path encoded(const std::string& split) const;
  std::filesystem::path dir;
  explicit PreparedFiles(const std::filesystem::path& prepared_dir);
};

int cmd_synth(const SyntheticOptions& options, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_preprocess(const RunConfig& config, std::ostream& log);
int cmd_train(const RunConfig& config, bool resume, std::ostream& log);

struct GenerateOptions {
  std::string split = "test";
  std::optional<std::filesystem::path> checkpoint;  // default: paths.checkpoints / "best"
  std::size_t limit = 0;                            // 0 = every example
};
int cmd_generate(const RunConfig& config, const GenerateOptions& options, std::ostream& log);

struct EvaluateOptions {
  std::string split = "test";
  std::optional<std::filesystem::path> predictions;  // default: paths.outputs / "predictions.jsonl"
  RougeOptions rouge;
};
/// Writes rouge_report.json and rouge_per_example.csv next to the
/// predictions and prints R1, R2, RL, RSU4 F1.
int cmd_evaluate(const RunConfig& config, const EvaluateOptions& options, std::ostream& log);

struct InspectOptions {
  std::string split = "test";
  std::optional<std::filesystem::path> checkpoint;
  std::size_t index = 0;              // example position in the split
  std::optional<std::string> example_id;  // wins over index
};
/// Decodes one example and writes attention.json with, per generated
/// step, the last decoder layer's head-averaged attention over keyphrase,
/// target and reference tokens.
int cmd_inspect_attention(const RunConfig& config, const InspectOptions& options, std::ostream& log);

}  // namespace tagsum
