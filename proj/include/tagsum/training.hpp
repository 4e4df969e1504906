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

// Joint optimization loop: Adam, gradient clipping, validation with early
// stopping, checkpoints and a per-step metrics log.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tagsum/autodiff.hpp"
#include "tagsum/config.hpp"
#include "tagsum/config_json.hpp"
#include "tagsum/corpus.hpp"
#include "tagsum/model.hpp"

namespace tagsum {

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  explicit Adam(const TrainingConfig& config) : config_(config) {}

  /// One update from the accumulated gradients.
  void step(ParameterSet<Scalar>& params);

  std::int64_t steps() const { return t_; }
  std::vector<Matrix<Scalar>>& first_moments() { return m_; }
  std::vector<Matrix<Scalar>>& second_moments() { return v_; }
  const std::vector<Matrix<Scalar>>& first_moments() const { return m_; }
  const std::vector<Matrix<Scalar>>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  TrainingConfig config_;
  std::int64_t t_ = 0;
  std::vector<Matrix<Scalar>> m_;
  std::vector<Matrix<Scalar>> v_;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 only measures.
template <typename Scalar>
double clip_gradients(ParameterSet<Scalar>& params, double max_norm);

struct MetricsRow {
  std::int64_t step = 0;
  double l_s = 0;
  double l_local = 0;
  double l_global = 0;
  double total = 0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();  // NaN when not validated
  double tau_pos_mean = 0;
  double tau_neg_mean = 0;
  double nll = 0;  // unsmoothed teacher-forced NLL, not written to metrics.csv
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::int64_t step, std::vector<std::string> batch_ids);
  std::int64_t step;
  std::vector<std::string> batch_ids;
};

struct TrainResult {
  std::vector<MetricsRow> history;
  std::int64_t steps = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::int64_t best_step = -1;
  bool stopped_early = false;
};

/// Permutation of [0, n) used for one epoch; depends only on (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch);

/// Called at the start of every epoch after the first when negatives are
/// resampled; receives the epoch and the training examples to update.
using NegativeResampler = std::function<void(std::int64_t epoch, std::vector<EncodedExample>& examples)>;

template <typename Scalar>
class Trainer {
 public:
  Trainer(TagModel<Scalar>& model, const TrainingConfig& config, std::vector<EncodedExample> train,
          std::vector<EncodedExample> valid = {});

  /// One optimization step on the next batch. Throws NonFiniteLoss.
  MetricsRow step();

  /// Mean objective over the validation examples, dropout off.
  double validation_loss() const;

  /// Runs until config.steps, or early stop. With an output directory,
  /// writes metrics.csv, checkpoints under last/ and best/, and on a
  /// non-finite loss the offending batch ids to nonfinite_batch.json.
  TrainResult run(const std::optional<std::filesystem::path>& output_dir = std::nullopt);

  void save_checkpoint(const std::filesystem::path& dir) const;
  void load_checkpoint(const std::filesystem::path& dir);

  std::int64_t step_count() const { return step_; }
  const std::vector<std::size_t>& batch_indices(std::int64_t step);
  void set_negative_resampler(NegativeResampler resampler) { resampler_ = std::move(resampler); }
  TagModel<Scalar>& model() { return model_; }
  const std::vector<EncodedExample>& train_examples() const { return train_; }

 private:
  TagModel<Scalar>& model_;
  TrainingConfig config_;
  std::vector<EncodedExample> train_;
  std::vector<EncodedExample> valid_;
  Adam<Scalar> adam_;
  std::int64_t step_ = 0;
  double best_val_loss_ = std::numeric_limits<double>::infinity();
  std::int64_t best_step_ = -1;
  int bad_validations_ = 0;
  std::int64_t cached_epoch_ = -1;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> batch_;
  NegativeResampler resampler_;
  std::int64_t resampled_epoch_ = 0;
};

/// Parameter values as a binary blob: magic, scalar width, then
/// (name, rows, cols, data) per parameter.
template <typename Scalar>
void save_parameters(const std::filesystem::path& path, const ParameterSet<Scalar>& params);
/// Loads into an existing set; names and shapes must match. Blobs written
/// at the other precision are converted.
template <typename Scalar>
void load_parameters(const std::filesystem::path& path, ParameterSet<Scalar>& params);

/// Reads checkpoint.json of a checkpoint directory.
nlohmann::json read_checkpoint_info(const std::filesystem::path& dir);

}  // namespace tagsum
