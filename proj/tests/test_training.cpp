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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "tagsum/training.hpp"

using namespace tagsum;
using Mat = Matrix<double>;

namespace {

struct Setup {
  ModelConfig config = fixture::tiny_config();
  TrainingConfig train;
  PreparedCorpus corpus;
  explicit Setup(double dropout = 0.1) {
    corpus = fixture::prepare(fixture::tiny_raw(), config);
    config.dropout = dropout;
    train.batch_size = 4;
    train.learning_rate = 1e-3;
    train.steps = 6;
    train.validate_every = 3;
    train.seed = 5;
  }
  std::unique_ptr<TagModel<double>> model(std::uint64_t seed = 1) const {
    auto m = std::make_unique<TagModel<double>>(config);
    m->initialize(seed);
    return m;
  }
};

std::vector<Mat> snapshot(const ParameterSet<double>& ps) {
  std::vector<Mat> out;
  for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(ps[i].value);
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("learning rate zero leaves every parameter bitwise unchanged") {
  Setup s;
  s.train.learning_rate = 0.0;
  auto model = s.model();
  const auto before = snapshot(model->parameters());
  Trainer<double> trainer(*model, s.train, s.corpus.train.encoded);
  for (int i = 0; i < 5; ++i) trainer.step();
  const auto after = snapshot(model->parameters());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK((before[i].array() == after[i].array()).all());
}

TEST_CASE("logged components add up to the total") {
  Setup s;
  auto model = s.model();
  Trainer<double> trainer(*model, s.train, s.corpus.train.encoded);
  for (int i = 0; i < 5; ++i) {
    const auto row = trainer.step();
    CHECK(std::abs(row.total - (row.l_s + row.l_local + row.l_global)) < 1e-6);
    CHECK(row.l_local > 0.0);
    CHECK(row.l_global > 0.0);
    CHECK(row.step == i + 1);
  }
}

TEST_CASE("without contrastive the total is the generation loss") {
  Setup s;
  s.config = ablate(s.config, "contrastive");
  auto model = s.model();
  Trainer<double> trainer(*model, s.train, s.corpus.train.encoded);
  const auto row = trainer.step();
  CHECK(row.total == row.l_s);
  CHECK(row.l_local == 0.0);
  CHECK(row.l_global == 0.0);
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted trajectory") {
  Setup s;
  const auto dir = fixture::scratch_dir("resume");
  auto full_model = s.model();
  Trainer<double> full(*full_model, s.train, s.corpus.train.encoded, s.corpus.valid.encoded);
  std::vector<MetricsRow> expected;
  for (int i = 0; i < 6; ++i) {
    expected.push_back(full.step());
    if (i == 2) full.save_checkpoint(dir / "ckpt");
  }
  auto resumed_model = s.model(99);  // different init, overwritten by the checkpoint
  Trainer<double> resumed(*resumed_model, s.train, s.corpus.train.encoded, s.corpus.valid.encoded);
  resumed.load_checkpoint(dir / "ckpt");
  CHECK(resumed.step_count() == 3);
  for (int i = 3; i < 6; ++i) {
    const auto row = resumed.step();
    CHECK(row.step == expected[static_cast<std::size_t>(i)].step);
    CHECK(row.total == expected[static_cast<std::size_t>(i)].total);
    CHECK(row.l_s == expected[static_cast<std::size_t>(i)].l_s);
  }
  const auto a = snapshot(full_model->parameters()), b = snapshot(resumed_model->parameters());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i].array() == b[i].array()).all());
  CHECK(read_checkpoint_info(dir / "ckpt").contains("step"));
}

TEST_CASE("two runs with the same seed write identical metric logs") {
  Setup s;
  auto once = [&](const std::string& name) {
    auto model = s.model();
    Trainer<double> trainer(*model, s.train, s.corpus.train.encoded, s.corpus.valid.encoded);
    const auto dir = fixture::scratch_dir(name);
    trainer.run(dir);
    return slurp(dir / "metrics.csv");
  };
  const auto a = once("same_a"), b = once("same_b");
  CHECK(a == b);
  std::istringstream in(a);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,l_s,l_local,l_global,total,val_loss,tau_pos_mean,tau_neg_mean");
  std::size_t rows = 0;
  for (std::string l; std::getline(in, l);) rows += l.empty() ? 0 : 1;
  CHECK(rows == 6);
}

TEST_CASE("run writes checkpoints and tracks the best validation loss") {
  Setup s;
  auto model = s.model();
  Trainer<double> trainer(*model, s.train, s.corpus.train.encoded, s.corpus.valid.encoded);
  const auto dir = fixture::scratch_dir("run");
  const auto result = trainer.run(dir);
  CHECK(result.steps == 6);
  CHECK(std::filesystem::exists(dir / "last" / "checkpoint.json"));
  CHECK(std::filesystem::exists(dir / "best" / "checkpoint.json"));
  CHECK(std::isfinite(result.best_val_loss));
  CHECK((result.best_step == 3 || result.best_step == 6));
  std::size_t validated = 0;
  for (const auto& row : result.history) validated += std::isnan(row.val_loss) ? 0 : 1;
  CHECK(validated == 2);
}

TEST_CASE("a non-finite loss aborts with the batch ids saved") {
  Setup s;
  auto model = s.model();
  model->parameters().find("decoder.projection.bias")->value(0, 5) = std::numeric_limits<double>::quiet_NaN();
  Trainer<double> trainer(*model, s.train, s.corpus.train.encoded);
  const auto dir = fixture::scratch_dir("nonfinite");
  CHECK_THROWS_AS(trainer.run(dir), NonFiniteLoss);
  const auto j = nlohmann::json::parse(slurp(dir / "nonfinite_batch.json"));
  CHECK(j["step"] == 0);
  CHECK(j["batch_ids"].size() == 4);
}

TEST_CASE("unknown ablation flags list the valid ones") {
  try {
    ablate(fixture::tiny_config(), "encoder");
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string m = e.what();
    for (const char* flag : {"graph_encoder", "hierarchical_decoder", "contrastive"})
      CHECK(m.find(flag) != std::string::npos);
  }
  CHECK_FALSE(ablate(fixture::tiny_config(), "graph_encoder").use_graph_encoder);
  CHECK_FALSE(ablate(fixture::tiny_config(), Ablation::kContrastive).use_contrastive);
}

TEST_CASE("Adam update matches the bias-corrected formula") {
  ParameterSet<double> ps;
  auto& p = ps.create("p", 1, 2, InitKind::kZeros);
  p.value << 1.0, -2.0;
  TrainingConfig c;
  c.learning_rate = 0.1;
  Adam<double> adam(c);
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {1.0, -2.0};
  const double g[2][2] = {{0.5, -1.0}, {0.25, 2.0}};
  for (int t = 1; t <= 2; ++t) {
    p.grad << g[t - 1][0], g[t - 1][1];
    adam.step(ps);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[t - 1][i];
      v[i] = 0.999 * v[i] + 0.001 * g[t - 1][i] * g[t - 1][i];
      x[i] -= 0.1 * (m[i] / (1 - std::pow(0.9, t))) / (std::sqrt(v[i] / (1 - std::pow(0.999, t))) + 1e-8);
      CHECK(p.value(0, i) == doctest::Approx(x[i]).epsilon(1e-14));
    }
  }
  CHECK(adam.steps() == 2);
}

TEST_CASE("gradient clipping scales to the global norm") {
  ParameterSet<double> ps;
  auto& a = ps.create("a", 1, 2, InitKind::kZeros);
  auto& b = ps.create("b", 1, 1, InitKind::kZeros);
  a.grad << 3.0, 0.0;
  b.grad << 4.0;
  CHECK(clip_gradients(ps, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad(0, 0) == 3.0);
  CHECK(clip_gradients(ps, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad(0, 0) == doctest::Approx(0.6));
  CHECK(b.grad(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(10, 3, 0);
  CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == 10);
  CHECK(a == epoch_order(10, 3, 0));
  CHECK(a != epoch_order(10, 3, 1));
}

TEST_CASE("parameters round-trip across precisions") {
  Setup s;
  auto model = s.model();
  const auto dir = fixture::scratch_dir("params");
  save_parameters(dir / "p.bin", model->parameters());
  auto other = s.model(77);
  load_parameters(dir / "p.bin", other->parameters());
  for (std::size_t i = 0; i < model->parameters().size(); ++i)
    CHECK((model->parameters()[i].value.array() == other->parameters()[i].value.array()).all());
  TagModel<float> single(s.config);
  load_parameters(dir / "p.bin", single.parameters());
  CHECK(single.parameters()[0].value(0, 0) == static_cast<float>(model->parameters()[0].value(0, 0)));

  ModelConfig bigger = s.config;
  bigger.d_model = 16;
  TagModel<double> mismatch(bigger);
  CHECK_THROWS(load_parameters(dir / "p.bin", mismatch.parameters()));
}
