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

#include "tagsum/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>

#include "tagsum/batch.hpp"

namespace tagsum {
namespace {

using json = nlohmann::json;

constexpr char kBlobMagic[8] = {'T', 'A', 'G', 'S', 'U', 'M', 'P', '1'};

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt, std::int64_t counter) {
  // splitmix64 finalizer over the three inputs.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1) + static_cast<std::uint64_t>(counter) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

template <typename Scalar>
void write_blob(const std::filesystem::path& path, const std::vector<std::string>& names,
                const std::vector<const Matrix<Scalar>*>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kBlobMagic, sizeof(kBlobMagic));
  put<std::uint32_t>(out, sizeof(Scalar));
  put<std::uint64_t>(out, names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(names[i].size()));
    out.write(names[i].data(), static_cast<std::streamsize>(names[i].size()));
    put<std::int64_t>(out, values[i]->rows());
    put<std::int64_t>(out, values[i]->cols());
    out.write(reinterpret_cast<const char*>(values[i]->data()),
              static_cast<std::streamsize>(values[i]->size() * static_cast<Index>(sizeof(Scalar))));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

template <typename Stored, typename Scalar>
void read_values(std::istream& in, Matrix<Scalar>& target) {
  Eigen::Matrix<Stored, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tmp(target.rows(), target.cols());
  in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * static_cast<Index>(sizeof(Stored))));
  target = tmp.template cast<Scalar>();
}

template <typename Scalar>
void read_blob(const std::filesystem::path& path, const std::vector<std::string>& names,
               const std::vector<Matrix<Scalar>*>& values) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[sizeof(kBlobMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kBlobMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path.string() + " is not a parameter blob");
  const auto width = take<std::uint32_t>(in);
  if (width != sizeof(float) && width != sizeof(double))
    throw std::runtime_error(path.string() + ": unsupported scalar width " + std::to_string(width));
  const auto count = take<std::uint64_t>(in);
  if (count != names.size())
    throw std::runtime_error(path.string() + " holds " + std::to_string(count) + " tensors, model has " +
                             std::to_string(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::string name(take<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = take<std::int64_t>(in);
    const auto cols = take<std::int64_t>(in);
    if (name != names[i] || rows != values[i]->rows() || cols != values[i]->cols())
      throw std::runtime_error(path.string() + ": tensor " + std::to_string(i) + " is '" + name + "' " +
                               std::to_string(rows) + "x" + std::to_string(cols) + ", expected '" + names[i] + "' " +
                               std::to_string(values[i]->rows()) + "x" + std::to_string(values[i]->cols()));
    if (width == sizeof(float))
      read_values<float>(in, *values[i]);
    else
      read_values<double>(in, *values[i]);
  }
  if (!in) throw std::runtime_error(path.string() + " is truncated");
}

template <typename Scalar>
std::vector<std::string> names_of(const ParameterSet<Scalar>& params) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < params.size(); ++i) names.push_back(params[i].name);
  return names;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

}  // namespace

template <typename Scalar>
void Adam<Scalar>::step(ParameterSet<Scalar>& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Matrix<Scalar>::Zero(params[i].value.rows(), params[i].value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(params[i].value.rows(), params[i].value.cols()));
    }
  }
  ++t_;
  const auto b1 = static_cast<Scalar>(config_.adam_beta1);
  const auto b2 = static_cast<Scalar>(config_.adam_beta2);
  const auto eps = static_cast<Scalar>(config_.adam_eps);
  const auto lr = static_cast<Scalar>(config_.learning_rate);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(config_.adam_beta1, static_cast<double>(t_)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(config_.adam_beta2, static_cast<double>(t_)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    m_[i] = b1 * m_[i] + (Scalar(1) - b1) * p.grad;
    v_[i] = b2 * v_[i] + (Scalar(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
  }
}

template <typename Scalar>
double clip_gradients(ParameterSet<Scalar>& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) sq += params[i].grad.template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto factor = static_cast<Scalar>(max_norm / norm);
    for (std::size_t i = 0; i < params.size(); ++i) params[i].grad *= factor;
  }
  return norm;
}

void write_metrics_header(std::ostream& out) {
  out << "step,l_s,l_local,l_global,total,val_loss,tau_pos_mean,tau_neg_mean\n";
}

void write_metrics_row(std::ostream& out, const MetricsRow& r) {
  out << r.step << ',' << format_double(r.l_s) << ',' << format_double(r.l_local) << ','
      << format_double(r.l_global) << ',' << format_double(r.total) << ',' << format_double(r.val_loss) << ','
      << format_double(r.tau_pos_mean) << ',' << format_double(r.tau_neg_mean) << '\n';
}

NonFiniteLoss::NonFiniteLoss(std::int64_t s, std::vector<std::string> ids)
    : std::runtime_error("non-finite loss at step " + std::to_string(s)), step(s), batch_ids(std::move(ids)) {}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(mix(seed, 1, epoch));
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  return order;
}

template <typename Scalar>
Trainer<Scalar>::Trainer(TagModel<Scalar>& model, const TrainingConfig& config, std::vector<EncodedExample> train,
                         std::vector<EncodedExample> valid)
    : model_(model), config_(config), train_(std::move(train)), valid_(std::move(valid)), adam_(config) {
  config_.validate();
  if (train_.empty()) throw std::invalid_argument("training needs at least one example");
}

template <typename Scalar>
const std::vector<std::size_t>& Trainer<Scalar>::batch_indices(std::int64_t step) {
  const auto n = static_cast<std::int64_t>(train_.size());
  const auto b = static_cast<std::int64_t>(config_.batch_size);
  batch_.clear();
  for (std::int64_t j = 0; j < b; ++j) {
    const std::int64_t i = step * b + j;
    const std::int64_t epoch = i / n;
    if (epoch != cached_epoch_) {
      order_ = epoch_order(train_.size(), config_.seed, epoch);
      cached_epoch_ = epoch;
    }
    batch_.push_back(order_[static_cast<std::size_t>(i % n)]);
  }
  return batch_;
}

template <typename Scalar>
MetricsRow Trainer<Scalar>::step() {
  if (config_.resample_negatives && resampler_) {
    const std::int64_t epoch = step_ * config_.batch_size / static_cast<std::int64_t>(train_.size());
    if (epoch > resampled_epoch_) {
      resampler_(epoch, train_);
      resampled_epoch_ = epoch;
    }
  }
  std::vector<EncodedExample> examples;
  std::vector<std::string> ids;
  for (auto i : batch_indices(step_)) {
    examples.push_back(train_[i]);
    ids.push_back(train_[i].id);
  }
  const auto batch = Batch::from_examples(examples, model_.config().use_contrastive);

  auto& params = model_.parameters();
  params.zero_grad();
  std::mt19937_64 rng(mix(config_.seed, 2, step_));
  Tape<Scalar> tape;
  auto fw = model_.forward(tape, batch, ForwardContext{model_.config().dropout, &rng});
  const auto& loss = fw.loss;
  MetricsRow row;
  row.step = step_ + 1;
  row.l_s = loss.value(loss.generation);
  row.l_local = loss.value(loss.local);
  row.l_global = loss.value(loss.global);
  row.total = loss.value(loss.total);
  row.tau_pos_mean = loss.tau_pos_mean;
  row.tau_neg_mean = loss.tau_neg_mean;
  row.nll = loss.nll;
  if (!std::isfinite(row.total)) throw NonFiniteLoss(step_, std::move(ids));
  tape.backward(loss.total);
  clip_gradients(params, config_.clip_norm);
  adam_.step(params);
  ++step_;
  return row;
}

template <typename Scalar>
double Trainer<Scalar>::validation_loss() const {
  std::size_t count = valid_.size();
  if (config_.validation_examples > 0) count = std::min(count, static_cast<std::size_t>(config_.validation_examples));
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  const auto b = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t begin = 0; begin < count; begin += b) {
    const auto end = std::min(count, begin + b);
    const auto batch = Batch::from_examples(std::span(valid_).subspan(begin, end - begin),
                                            model_.config().use_contrastive);
    Tape<Scalar> tape(false);
    auto fw = model_.forward(tape, batch, ForwardContext{});
    total += fw.loss.value(fw.loss.total) * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(count);
}

template <typename Scalar>
TrainResult Trainer<Scalar>::run(const std::optional<std::filesystem::path>& output_dir) {
  TrainResult result;
  std::ofstream metrics;
  if (output_dir) {
    std::filesystem::create_directories(*output_dir);
    const auto path = *output_dir / "metrics.csv";
    const bool append = step_ > 0 && std::filesystem::exists(path);
    metrics.open(path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write " + path.string());
    if (!append) write_metrics_header(metrics);
  }
  while (step_ < config_.steps) {
    MetricsRow row;
    try {
      row = step();
    } catch (const NonFiniteLoss& e) {
      if (output_dir) {
        std::ofstream out(*output_dir / "nonfinite_batch.json");
        out << json{{"step", e.step}, {"batch_ids", e.batch_ids}}.dump(2) << '\n';
      }
      throw;
    }
    bool validated = false;
    if (config_.validate_every > 0 && !valid_.empty() && step_ % config_.validate_every == 0) {
      validated = true;
      row.val_loss = validation_loss();
      if (row.val_loss < best_val_loss_) {
        best_val_loss_ = row.val_loss;
        best_step_ = step_;
        bad_validations_ = 0;
        if (output_dir) save_checkpoint(*output_dir / "best");
      } else {
        ++bad_validations_;
      }
    }
    if (metrics) {
      write_metrics_row(metrics, row);
      metrics.flush();
    }
    result.history.push_back(row);
    if (validated && output_dir) save_checkpoint(*output_dir / "last");
    if (validated && config_.patience > 0 && bad_validations_ >= config_.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (output_dir) {
    save_checkpoint(*output_dir / "last");
    if (best_step_ < 0) save_checkpoint(*output_dir / "best");
  }
  result.steps = step_;
  result.best_val_loss = best_val_loss_;
  result.best_step = best_step_;
  return result;
}

template <typename Scalar>
void Trainer<Scalar>::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_parameters(dir / "params.bin", model_.parameters());
  const auto names = names_of(model_.parameters());
  std::vector<std::string> moment_names;
  std::vector<const Matrix<Scalar>*> moments;
  for (std::size_t i = 0; i < adam_.first_moments().size(); ++i) {
    moment_names.push_back(names[i] + ".m");
    moments.push_back(&adam_.first_moments()[i]);
  }
  for (std::size_t i = 0; i < adam_.second_moments().size(); ++i) {
    moment_names.push_back(names[i] + ".v");
    moments.push_back(&adam_.second_moments()[i]);
  }
  write_blob(dir / "optimizer.bin", moment_names, moments);
  json info{{"step", step_},
            {"adam_steps", adam_.steps()},
            {"best_val_loss", finite_or_null(best_val_loss_)},
            {"best_step", best_step_},
            {"bad_validations", bad_validations_},
            {"resampled_epoch", resampled_epoch_},
            {"precision", sizeof(Scalar) == sizeof(float) ? "float32" : "float64"},
            {"model", to_json(model_.config())},
            {"training", to_json(config_)}};
  std::ofstream out(dir / "checkpoint.json");
  out << info.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + (dir / "checkpoint.json").string());
}

template <typename Scalar>
void Trainer<Scalar>::load_checkpoint(const std::filesystem::path& dir) {
  const auto info = read_checkpoint_info(dir);
  load_parameters(dir / "params.bin", model_.parameters());
  const auto names = names_of(model_.parameters());
  const auto adam_steps = info.at("adam_steps").get<std::int64_t>();
  auto& m = adam_.first_moments();
  auto& v = adam_.second_moments();
  m.clear();
  v.clear();
  if (adam_steps > 0) {
    std::vector<std::string> moment_names;
    std::vector<Matrix<Scalar>*> slots;
    auto& params = model_.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      m.push_back(Matrix<Scalar>::Zero(params[i].value.rows(), params[i].value.cols()));
      v.push_back(Matrix<Scalar>::Zero(params[i].value.rows(), params[i].value.cols()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      moment_names.push_back(names[i] + ".m");
      slots.push_back(&m[i]);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      moment_names.push_back(names[i] + ".v");
      slots.push_back(&v[i]);
    }
    read_blob(dir / "optimizer.bin", moment_names, slots);
  }
  adam_.set_steps(adam_steps);
  step_ = info.at("step").get<std::int64_t>();
  best_val_loss_ = info.at("best_val_loss").is_null() ? std::numeric_limits<double>::infinity()
                                                      : info.at("best_val_loss").get<double>();
  best_step_ = info.at("best_step").get<std::int64_t>();
  bad_validations_ = info.at("bad_validations").get<int>();
  resampled_epoch_ = info.value("resampled_epoch", std::int64_t{0});
  if (config_.resample_negatives && resampler_ && resampled_epoch_ > 0) resampler_(resampled_epoch_, train_);
}

template <typename Scalar>
void save_parameters(const std::filesystem::path& path, const ParameterSet<Scalar>& params) {
  std::vector<const Matrix<Scalar>*> values;
  for (std::size_t i = 0; i < params.size(); ++i) values.push_back(&params[i].value);
  write_blob(path, names_of(params), values);
}

template <typename Scalar>
void load_parameters(const std::filesystem::path& path, ParameterSet<Scalar>& params) {
  std::vector<Matrix<Scalar>*> values;
  for (std::size_t i = 0; i < params.size(); ++i) values.push_back(&params[i].value);
  read_blob(path, names_of(params), values);
}

json read_checkpoint_info(const std::filesystem::path& dir) {
  const auto path = dir / "checkpoint.json";
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("no checkpoint at " + dir.string() + " (run `tagsum train` first or pass --checkpoint)");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

template class Adam<float>;
template class Adam<double>;
template double clip_gradients<float>(ParameterSet<float>&, double);
template double clip_gradients<double>(ParameterSet<double>&, double);
template class Trainer<float>;
template class Trainer<double>;
template void save_parameters<float>(const std::filesystem::path&, const ParameterSet<float>&);
template void save_parameters<double>(const std::filesystem::path&, const ParameterSet<double>&);
template void load_parameters<float>(const std::filesystem::path&, ParameterSet<float>&);
template void load_parameters<double>(const std::filesystem::path&, ParameterSet<double>&);

}  // namespace tagsum
