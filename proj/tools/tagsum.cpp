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

// tagsum: synth | preprocess | train | generate | evaluate | inspect-attention

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tagsum/cli.hpp"

namespace {

// A command-line value that remembers whether it was given, so that only
// explicit flags override the loaded config.
template <typename T>
struct Flag {
  T value{};
  bool given = false;
  explicit operator bool() const { return given; }
  const T& operator*() const { return value; }
};

template <typename T>
CLI::Option* add(CLI::App* app, const std::string& name, Flag<T>& flag, const std::string& help = "") {
  return app->add_option(name, flag.value, help)->each([&flag](const std::string&) { flag.given = true; });
}

template <typename T, typename U>
void override_with(const Flag<T>& flag, U& target) {
  if (flag) target = static_cast<U>(*flag);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Target-aware related work generation"};
  app.require_subcommand(1);

  Flag<std::string> config_path, profile;
  Flag<std::uint64_t> seed;
  add(&app, "--config", config_path, "JSON run config");
  add(&app, "--profile", profile, "Profile: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  add(&app, "--seed", seed, "Seed for sampling, initialization and batching");

  // Paths shared by several commands.
  Flag<std::string> corpus, prepared, checkpoints, outputs, checkpoint;

  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus as JSONL splits");
  std::string synth_out;
  tagsum::SyntheticOptions synth_opts;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--examples", synth_opts.examples, "Number of examples");
  synth->add_option("--vocab-size", synth_opts.vocab_size, "Distinct words");
  synth->add_option("--refs", synth_opts.refs_per_example, "Mean references per example");
  synth->add_option("--abstract-words", synth_opts.abstract_words, "Words per abstract");
  synth->add_option("--valid-fraction", synth_opts.valid_fraction);
  synth->add_option("--test-fraction", synth_opts.test_fraction);

  auto* preprocess = app.add_subcommand("preprocess", "Build vocabulary, keyphrases and encoded splits");
  Flag<std::size_t> filter_min_refs;
  add(preprocess, "--corpus", corpus, "Directory with train/valid/test.jsonl");
  add(preprocess, "--prepared", prepared, "Output directory");
  add(preprocess, "--filter-min-refs", filter_min_refs, "Drop examples with fewer references");

  auto* train = app.add_subcommand("train", "Train the model");
  Flag<int> steps, batch_size, validate_every;
  Flag<double> lr;
  Flag<std::string> precision;
  std::vector<std::string> ablations;
  bool resume = false;
  add(train, "--prepared", prepared);
  add(train, "--corpus", corpus, "Raw corpus, needed only for negative resampling");
  add(train, "--checkpoints", checkpoints, "Checkpoint directory");
  add(train, "--steps", steps);
  add(train, "--batch-size", batch_size);
  add(train, "--lr", lr);
  add(train, "--validate-every", validate_every);
  add(train, "--precision", precision)->check(CLI::IsMember({"float32", "float64"}));
  train->add_option("--ablate", ablations, "graph_encoder, hierarchical_decoder or contrastive; repeatable");
  train->add_flag("--resume", resume, "Continue from <checkpoints>/last");

  auto* generate = app.add_subcommand("generate", "Decode a split with beam search");
  tagsum::GenerateOptions gen_opts;
  Flag<int> beam, min_len, max_len, no_repeat;
  Flag<double> length_penalty;
  bool greedy = false;
  add(generate, "--prepared", prepared);
  add(generate, "--checkpoint", checkpoint, "Checkpoint directory (default <checkpoints>/best)");
  add(generate, "--checkpoints", checkpoints);
  add(generate, "--outputs", outputs);
  generate->add_option("--split", gen_opts.split)->check(CLI::IsMember({"train", "valid", "test"}));
  generate->add_option("--limit", gen_opts.limit, "Decode only the first N examples");
  add(generate, "--beam", beam);
  add(generate, "--min-len", min_len);
  add(generate, "--max-len", max_len);
  add(generate, "--length-penalty", length_penalty);
  add(generate, "--no-repeat-ngram", no_repeat);
  generate->add_flag("--greedy", greedy, "Argmax decoding");

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions with ROUGE");
  tagsum::EvaluateOptions eval_opts;
  Flag<std::string> predictions;
  add(evaluate, "--corpus", corpus);
  add(evaluate, "--outputs", outputs);
  add(evaluate, "--predictions", predictions, "Default <outputs>/predictions.jsonl");
  evaluate->add_option("--split", eval_opts.split)->check(CLI::IsMember({"train", "valid", "test"}));
  evaluate->add_flag("--stem", eval_opts.rouge.stem, "Porter-stem tokens");
  evaluate->add_flag("--remove-stopwords", eval_opts.rouge.remove_stopwords);

  auto* inspect = app.add_subcommand("inspect-attention", "Export decoder attention for one example");
  tagsum::InspectOptions inspect_opts;
  Flag<std::string> example_id;
  add(inspect, "--prepared", prepared);
  add(inspect, "--checkpoint", checkpoint);
  add(inspect, "--checkpoints", checkpoints);
  add(inspect, "--outputs", outputs);
  inspect->add_option("--split", inspect_opts.split)->check(CLI::IsMember({"train", "valid", "test"}));
  inspect->add_option("--index", inspect_opts.index, "Example position in the split");
  add(inspect, "--id", example_id, "Example id");
  add(inspect, "--beam", beam);
  add(inspect, "--min-len", min_len);
  add(inspect, "--max-len", max_len);
  inspect->add_flag("--greedy", greedy);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      if (seed) synth_opts.seed = *seed;
      return tagsum::cmd_synth(synth_opts, synth_out, std::cout);
    }
    std::optional<std::filesystem::path> config_file;
    std::optional<std::string> profile_flag;
    if (config_path) config_file = *config_path;
    if (profile) profile_flag = *profile;
    tagsum::RunConfig config = tagsum::load_run_config(config_file, profile_flag);
    if (seed) config.set_seed(*seed);
    if (corpus) config.paths.corpus = *corpus;
    if (prepared) config.paths.prepared = *prepared;
    if (checkpoints) config.paths.checkpoints = *checkpoints;
    if (outputs) config.paths.outputs = *outputs;
    override_with(filter_min_refs, config.filter_min_refs);
    override_with(steps, config.training.steps);
    override_with(batch_size, config.training.batch_size);
    override_with(lr, config.training.learning_rate);
    override_with(validate_every, config.training.validate_every);
    override_with(precision, config.training.precision);
    for (const auto& a : ablations) config.model = tagsum::ablate(config.model, a);
    override_with(beam, config.inference.beam_width);
    override_with(min_len, config.inference.min_length);
    override_with(max_len, config.inference.max_length);
    override_with(length_penalty, config.inference.length_penalty);
    override_with(no_repeat, config.inference.no_repeat_ngram);
    if (greedy) config.inference.greedy = true;

    if (preprocess->parsed()) return tagsum::cmd_preprocess(config, std::cout);
    if (train->parsed()) return tagsum::cmd_train(config, resume, std::cout);
    if (generate->parsed()) {
      if (checkpoint) gen_opts.checkpoint = *checkpoint;
      return tagsum::cmd_generate(config, gen_opts, std::cout);
    }
    if (evaluate->parsed()) {
      if (predictions) eval_opts.predictions = *predictions;
      return tagsum::cmd_evaluate(config, eval_opts, std::cout);
    }
    if (inspect->parsed()) {
      if (checkpoint) inspect_opts.checkpoint = *checkpoint;
      if (example_id) inspect_opts.example_id = *example_id;
      return tagsum::cmd_inspect_attention(config, inspect_opts, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
