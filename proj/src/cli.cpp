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

#include "tagsum/cli.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <iomanip>
#include <memory>
#include <stdexcept>

#include "tagsum/config_json.hpp"
#include "tagsum/inference.hpp"
#include "tagsum/model.hpp"
#include "tagsum/training.hpp"

namespace tagsum {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Runs `write` against a temporary sibling and renames it into place, so a
// failed command never leaves a complete-looking artifact behind.
template <typename Write>
void commit(const fs::path& path, Write write) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  write(tmp);
  fs::rename(tmp, path);
}

void write_text(const fs::path& path, const std::string& text) {
  commit(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp);
    out << text;
    if (!out) throw std::runtime_error("failed writing " + path.string());
  });
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw std::runtime_error("missing " + path.string() + " (" + hint + ")");
}

const std::vector<RawExample>& split_of(const CorpusSplit& corpus, const std::string& split) {
  if (split == "train") return corpus.train;
  if (split == "valid") return corpus.valid;
  if (split == "test") return corpus.test;
  throw std::invalid_argument("unknown split '" + split + "'; valid splits: train, valid, test");
}

template <typename Scalar>
std::unique_ptr<TagModel<Scalar>> load_model(const fs::path& dir, const json& info) {
  ModelConfig mc;
  merge(mc, info.at("model"), "checkpoint model");
  auto model = std::make_unique<TagModel<Scalar>>(mc);
  load_parameters(dir / "params.bin", model->parameters());
  return model;
}

// Calls fn(model) with the checkpoint's model at its stored precision.
template <typename Fn>
void with_checkpoint(const fs::path& dir, Fn fn) {
  const auto info = read_checkpoint_info(dir);
  if (info.value("precision", std::string("float32")) == "float64")
    fn(*load_model<double>(dir, info));
  else
    fn(*load_model<float>(dir, info));
}

std::string detokenize(const Vocabulary& vocab, const std::vector<int>& ids) {
  WordTokenizer tokenizer;
  const auto words = vocab.decode(ids);
  return tokenizer.detokenize(words);
}

template <typename Scalar>
int train_impl(const RunConfig& config, bool resume, std::ostream& log) {
  const PreparedFiles files(config.paths.prepared);
  require_file(files.vocab, "run `tagsum preprocess` first");
  const auto vocab = Vocabulary::load(files.vocab);
  auto train = read_encoded(files.encoded("train"));
  auto valid = read_encoded(files.encoded("valid"));
  ModelConfig mc = config.model;
  mc.vocab_size = vocab.size();
  TagModel<Scalar> model(mc);
  model.initialize(config.training.seed);
  Trainer<Scalar> trainer(model, config.training, std::move(train), std::move(valid));

  std::shared_ptr<CorpusSplit> raw;
  if (config.training.resample_negatives) {
    raw = std::make_shared<CorpusSplit>(load_corpus(config.paths.corpus, config.filter_min_refs));
    trainer.set_negative_resampler([raw, vocab, mc, seed = config.preprocess.seed](std::int64_t epoch,
                                                                                   std::vector<EncodedExample>& ex) {
      WordTokenizer tokenizer;
      const auto pool = PaperPool::from_examples(raw->train, tokenizer);
      std::map<std::string, const RawExample*> by_id;
      for (const auto& r : raw->train) by_id[r.id] = &r;
      for (auto& e : ex) {
        auto it = by_id.find(e.id);
        if (it == by_id.end()) throw std::runtime_error("example '" + e.id + "' missing from the raw corpus");
        std::vector<std::vector<std::string>> negatives;
        for (auto k : sample_negatives(*it->second, pool, static_cast<std::size_t>(mc.negatives),
                                       seed + static_cast<std::uint64_t>(epoch), tokenizer))
          negatives.push_back(pool.tokens[k]);
        attach_negatives(e, negatives, vocab, mc);
      }
    });
  }
  const fs::path out = config.paths.checkpoints;
  if (resume) {
    trainer.load_checkpoint(out / "last");
    log << "resumed at step " << trainer.step_count() << '\n';
  }
  log << "training " << model.parameters().scalar_count() << " parameters ("
      << (sizeof(Scalar) == sizeof(float) ? "float32" : "float64") << ") for " << config.training.steps
      << " steps\n";
  const auto result = trainer.run(out);
  const auto& last = result.history.empty() ? MetricsRow{} : result.history.back();
  log << "finished at step " << result.steps << (result.stopped_early ? " (early stop)" : "") << ", last loss "
      << last.total << ", best validation loss " << result.best_val_loss << " at step " << result.best_step << '\n';
  return 0;
}

template <typename Scalar>
std::vector<Generation> generate_impl(const TagModel<Scalar>& model, const std::vector<EncodedExample>& examples,
                                      const InferenceConfig& inference) {
  return generate(model, examples, inference, thread_budget());
}

template <typename Scalar>
json attention_rows(const AttentionTrace<Scalar>& trace) {
  // Mean over heads of block 0 (the single decoded sequence).
  json rows = json::array();
  if (trace.probs.empty() || trace.probs[0].empty()) return rows;
  const auto& heads = trace.probs[0];
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(heads[0].rows(), heads[0].cols());
  for (const auto& h : heads) mean += h.template cast<double>();
  mean /= static_cast<double>(heads.size());
  for (Index r = 0; r < mean.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(mean.cols()));
    for (Index c = 0; c < mean.cols(); ++c) row[static_cast<std::size_t>(c)] = mean(r, c);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

RunConfig RunConfig::from_profile(const std::string& profile, std::uint64_t seed) {
  RunConfig c;
  c.profile = profile;
  c.model = model_profile(profile);
  c.training = training_profile(profile);
  c.inference = inference_profile(profile);
  c.set_seed(seed);
  return c;
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  training.seed = s;
  preprocess.seed = s;
}

void merge(RunConfig& c, const json& j) {
  if (!j.is_object()) throw std::invalid_argument("run config must be a JSON object");
  // The shared seed goes first so section-level seeds can override it.
  if (j.contains("seed")) c.set_seed(j.at("seed").get<std::uint64_t>());
  for (const auto& [key, value] : j.items()) {
    if (key == "profile" || key == "seed") continue;
    if (key == "filter_min_refs") {
      c.filter_min_refs = value.get<std::size_t>();
    } else if (key == "paths") {
      for (const auto& [k, v] : value.items()) {
        if (k == "corpus") c.paths.corpus = v.get<std::string>();
        else if (k == "prepared") c.paths.prepared = v.get<std::string>();
        else if (k == "checkpoints") c.paths.checkpoints = v.get<std::string>();
        else if (k == "outputs") c.paths.outputs = v.get<std::string>();
        else throw std::invalid_argument("unknown key '" + k + "' in paths");
      }
    } else if (key == "preprocess") {
      for (const auto& [k, v] : value.items()) {
        if (k == "vocab_max_size") c.preprocess.vocab_max_size = v.get<std::size_t>();
        else if (k == "vocab_min_freq") c.preprocess.vocab_min_freq = v.get<std::size_t>();
        else if (k == "per_doc_keyphrases") c.preprocess.per_doc_keyphrases = v.get<std::size_t>();
        else if (k == "whole_phrase_links") c.preprocess.whole_phrase_links = v.get<bool>();
        else if (k == "seed") c.preprocess.seed = v.get<std::uint64_t>();
        else throw std::invalid_argument("unknown key '" + k + "' in preprocess");
      }
    } else if (key == "model") {
      merge(c.model, value, "model");
    } else if (key == "training") {
      merge(c.training, value, "training");
    } else if (key == "inference") {
      merge(c.inference, value, "inference");
    } else {
      throw std::invalid_argument("unknown key '" + key + "' in run config");
    }
  }
}

json to_json(const RunConfig& c) {
  return {{"profile", c.profile},
          {"seed", c.seed},
          {"filter_min_refs", c.filter_min_refs},
          {"paths",
           {{"corpus", c.paths.corpus.string()},
            {"prepared", c.paths.prepared.string()},
            {"checkpoints", c.paths.checkpoints.string()},
            {"outputs", c.paths.outputs.string()}}},
          {"preprocess",
           {{"vocab_max_size", c.preprocess.vocab_max_size},
            {"vocab_min_freq", c.preprocess.vocab_min_freq},
            {"per_doc_keyphrases", c.preprocess.per_doc_keyphrases},
            {"whole_phrase_links", c.preprocess.whole_phrase_links},
            {"seed", c.preprocess.seed}}},
          {"model", to_json(c.model)},
          {"training", to_json(c.training)},
          {"inference", to_json(c.inference)}};
}

RunConfig load_run_config(const std::optional<fs::path>& file, const std::optional<std::string>& profile_flag) {
  json j = json::object();
  if (file) j = read_json(*file);
  if (!j.is_object()) throw std::invalid_argument(file->string() + " must hold a JSON object");
  std::string profile = "desk";
  if (j.contains("profile")) profile = j.at("profile").get<std::string>();
  if (profile_flag) profile = *profile_flag;
  auto config = RunConfig::from_profile(profile);
  try {
    merge(config, j);
  } catch (const json::exception& e) {
    throw std::invalid_argument((file ? file->string() + ": " : std::string()) + e.what());
  }
  return config;
}

PreparedFiles::PreparedFiles(const fs::path& prepared_dir)
    : vocab(prepared_dir / "vocab.txt"),
      keyphrases(prepared_dir / "keyphrases.jsonl"),
      stats(prepared_dir / "stats.json"),
      dir(prepared_dir) {}

fs::path PreparedFiles::encoded(const std::string& split) const { return dir / (split + ".encoded.jsonl"); }

int cmd_synth(const SyntheticOptions& options, const fs::path& out_dir, std::ostream& log) {
  const auto corpus = generate_synthetic_corpus(options);
  for (const char* split : {"train", "valid", "test"})
    commit(out_dir / (std::string(split) + ".jsonl"),
           [&](const fs::path& tmp) { write_examples(tmp, split_of(corpus, split)); });
  log << "wrote " << corpus.train.size() << "/" << corpus.valid.size() << "/" << corpus.test.size()
      << " train/valid/test examples to " << out_dir.string() << '\n';
  return 0;
}

int cmd_preprocess(const RunConfig& config, std::ostream& log) {
  for (const char* split : {"train", "valid", "test"})
    require_file(config.paths.corpus / (std::string(split) + ".jsonl"), "expected raw JSONL splits");
  const auto corpus = load_corpus(config.paths.corpus, config.filter_min_refs);
  const auto prepared = prepare_corpus(corpus, config.model, config.preprocess);
  const PreparedFiles files(config.paths.prepared);
  fs::create_directories(files.dir);
  commit(files.vocab, [&](const fs::path& tmp) { prepared.vocab.save(tmp); });
  std::vector<std::pair<std::string, std::vector<Keyphrase>>> sidecar;
  for (const PreparedSplit* s : {&prepared.train, &prepared.valid, &prepared.test}) {
    for (std::size_t i = 0; i < s->raw.size(); ++i) sidecar.emplace_back(s->raw[i].id, s->keyphrases[i]);
  }
  commit(files.keyphrases, [&](const fs::path& tmp) { write_keyphrases(tmp, sidecar); });
  const std::pair<const char*, const PreparedSplit*> splits[] = {
      {"train", &prepared.train}, {"valid", &prepared.valid}, {"test", &prepared.test}};
  json stats{{"dropped", corpus.dropped}, {"vocab_size", prepared.vocab.size()}};
  for (const auto& [name, split] : splits) {
    commit(files.encoded(name), [&](const fs::path& tmp) { write_encoded(tmp, split->encoded); });
    double keyphrases = 0, edges = 0;
    for (const auto& ex : split->encoded) {
      for (Index r = 0; r < ex.keyphrases.ids.rows(); ++r) keyphrases += ex.keyphrases.row_present(r) ? 1 : 0;
      edges += static_cast<double>(ex.keyphrase_reference_edges.size());
    }
    const double n = std::max<double>(1.0, static_cast<double>(split->encoded.size()));
    stats[name] = {{"pairs", split->encoded.size()},
                   {"mean_references", prepared.mean_references(*split)},
                   {"mean_keyphrases", keyphrases / n},
                   {"mean_edges", edges / n}};
    log << std::left << std::setw(6) << name << " pairs " << split->encoded.size() << "  mean references "
        << std::fixed << std::setprecision(2) << prepared.mean_references(*split) << "  mean keyphrases "
        << keyphrases / n << '\n';
    log.unsetf(std::ios::fixed);
  }
  log << "vocabulary " << prepared.vocab.size() << " tokens, " << corpus.dropped << " examples dropped (fewer than "
      << config.filter_min_refs << " references)\n";
  write_text(files.stats, stats.dump(2) + "\n");
  return 0;
}

int cmd_train(const RunConfig& config, bool resume, std::ostream& log) {
  if (config.training.precision == "float64") return train_impl<double>(config, resume, log);
  return train_impl<float>(config, resume, log);
}

int cmd_generate(const RunConfig& config, const GenerateOptions& options, std::ostream& log) {
  const PreparedFiles files(config.paths.prepared);
  require_file(files.vocab, "run `tagsum preprocess` first");
  const auto vocab = Vocabulary::load(files.vocab);
  auto examples = read_encoded(files.encoded(options.split));
  if (options.limit > 0 && examples.size() > options.limit) examples.resize(options.limit);
  const fs::path ckpt = options.checkpoint.value_or(config.paths.checkpoints / "best");
  std::vector<Generation> generations;
  with_checkpoint(ckpt, [&](const auto& model) { generations = generate_impl(model, examples, config.inference); });
  const auto path = config.paths.outputs / "predictions.jsonl";
  commit(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp);
    for (const auto& g : generations)
      out << json{{"id", g.id}, {"prediction", detokenize(vocab, g.tokens)}, {"score", g.score}}.dump() << '\n';
    if (!out) throw std::runtime_error("failed writing " + path.string());
  });
  log << "wrote " << generations.size() << " predictions to " << path.string() << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& config, const EvaluateOptions& options, std::ostream& log) {
  const fs::path predictions = options.predictions.value_or(config.paths.outputs / "predictions.jsonl");
  require_file(predictions, "run `tagsum generate` first");
  const auto references = read_examples(config.paths.corpus / (options.split + ".jsonl"));
  std::map<std::string, std::string> gold;
  for (const auto& r : references) gold[r.id] = r.related_work;

  std::vector<TextPair> pairs;
  std::ifstream in(predictions);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto id = j.at("id").get<std::string>();
      auto it = gold.find(id);
      if (it == gold.end())
        throw std::runtime_error(predictions.string() + ":" + std::to_string(lineno) + ": id '" + id +
                                 "' is not in the " + options.split + " split");
      pairs.push_back({id, j.at("prediction").get<std::string>(), it->second});
    } catch (const json::exception& e) {
      throw std::runtime_error(predictions.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  const auto report = evaluate_rouge(pairs, options.rouge);
  const fs::path dir = predictions.parent_path();
  write_text(dir / "rouge_report.json", to_json(report).dump(2) + "\n");
  commit(dir / "rouge_per_example.csv", [&](const fs::path& tmp) { write_rouge_csv(tmp, report); });
  log << std::fixed << std::setprecision(4) << "R1 " << report.r1.f1 << "  R2 " << report.r2.f1 << "  RL "
      << report.rl.f1 << "  RSU4 " << report.rsu4.f1 << "  (" << pairs.size() << " examples)\n";
  log.unsetf(std::ios::fixed);
  if (report.empty_references > 0) log << "warning: " << report.empty_references << " empty references scored 0\n";
  return 0;
}

int cmd_inspect_attention(const RunConfig& config, const InspectOptions& options, std::ostream& log) {
  const PreparedFiles files(config.paths.prepared);
  require_file(files.vocab, "run `tagsum preprocess` first");
  const auto vocab = Vocabulary::load(files.vocab);
  const auto examples = read_encoded(files.encoded(options.split));
  std::size_t index = options.index;
  if (options.example_id) {
    auto it = std::find_if(examples.begin(), examples.end(),
                           [&](const EncodedExample& e) { return e.id == *options.example_id; });
    if (it == examples.end()) throw std::invalid_argument("no example '" + *options.example_id + "' in " + options.split);
    index = static_cast<std::size_t>(it - examples.begin());
  }
  if (index >= examples.size())
    throw std::invalid_argument("example index " + std::to_string(index) + " out of range (split has " +
                                std::to_string(examples.size()) + ")");
  const auto& example = examples[index];
  json out;
  with_checkpoint(options.checkpoint.value_or(config.paths.checkpoints / "best"), [&](const auto& model) {
    using Scalar = typename std::decay_t<decltype(model.parameters()[0].value)>::Scalar;
    ModelScorer<Scalar> scorer(model, example);
    const auto h = decode(std::ref(scorer), SearchOptions::from(config.inference), config.inference.greedy);
    std::vector<int> sequence{kBos};
    sequence.insert(sequence.end(), h.tokens.begin(), h.tokens.end());
    if (sequence.back() == kEos) sequence.pop_back();  // positions that predicted each generated token
    const auto trace = scorer.trace(sequence);

    std::vector<std::string> generated;
    for (int t : h.tokens) generated.push_back(t == kEos ? "<eos>" : vocab.token(t));
    std::vector<std::string> keyphrase_tokens, keyphrases;
    for (Index r = 0; r < example.keyphrases.ids.rows(); ++r) {
      if (!example.keyphrases.row_present(r)) continue;
      const auto ids = example.keyphrases.row(r);
      std::string phrase;
      for (int id : ids) {
        keyphrase_tokens.push_back(vocab.token(id));
        phrase += (phrase.empty() ? "" : " ") + vocab.token(id);
      }
      keyphrases.push_back(phrase);
    }
    out = {{"id", example.id},
           {"generated", generated},
           {"keyphrases", keyphrases},
           {"keyphrase_tokens", keyphrase_tokens},
           {"keyphrase_attention", attention_rows(trace.keyphrase)},
           {"target_attention", attention_rows(trace.target)},
           {"reference_attention", attention_rows(trace.reference)}};
  });
  const auto path = config.paths.outputs / "attention.json";
  write_text(path, out.dump(2) + "\n");
  log << "wrote attention for '" << example.id << "' (" << out["generated"].size() << " steps) to " << path.string()
      << '\n';
  return 0;
}

}  // namespace tagsum
