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

#include "tagsum/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "tagsum/batch.hpp"

namespace tagsum {
namespace {

void check(const SearchOptions& o) {
  if (o.beam_width < 1) throw std::invalid_argument("beam width must be at least 1");
  if (o.min_length < 0 || o.max_length < 1) throw std::invalid_argument("decode lengths must be positive");
  if (o.min_length > o.max_length)
    throw std::invalid_argument("min_length " + std::to_string(o.min_length) + " exceeds max_length " +
                                std::to_string(o.max_length));
}

// Would appending v repeat an n-gram already present in tokens?
bool repeats_ngram(const std::vector<int>& tokens, int v, int n) {
  if (n <= 0 || static_cast<int>(tokens.size()) < n) return false;
  const std::size_t len = tokens.size();
  const std::size_t k = static_cast<std::size_t>(n) - 1;  // tokens preceding v in the new n-gram
  for (std::size_t start = 0; start + k < len; ++start) {
    bool same = tokens[start + k] == v;
    for (std::size_t j = 0; same && j < k; ++j) same = tokens[start + j] == tokens[len - k + j];
    if (same) return true;
  }
  return false;
}

bool allowed(const std::vector<int>& tokens, int v, const SearchOptions& o) {
  if (v == kPad || v == kBos) return false;
  const auto t = static_cast<int>(tokens.size());
  if (t >= o.max_length) return v == kEos;
  if (v == kEos) return t >= o.min_length;
  return !repeats_ngram(tokens, v, o.no_repeat_ngram);
}

Eigen::MatrixXd score_prefixes(const PrefixScorer& scorer, const std::vector<std::vector<int>>& tokens) {
  std::vector<std::vector<int>> prefixes;
  prefixes.reserve(tokens.size());
  for (const auto& t : tokens) {
    prefixes.push_back({kBos});
    prefixes.back().insert(prefixes.back().end(), t.begin(), t.end());
  }
  auto lp = scorer(prefixes);
  if (lp.rows() != static_cast<Index>(tokens.size()) || lp.cols() <= kEos)
    throw std::invalid_argument("scorer returned a " + std::to_string(lp.rows()) + "x" + std::to_string(lp.cols()) +
                                " matrix for " + std::to_string(tokens.size()) + " prefixes");
  return lp;
}

bool better_finished(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

double length_penalty(std::size_t length, double alpha) {
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

std::vector<int> Hypothesis::output() const {
  std::vector<int> out = tokens;
  if (!out.empty() && out.back() == kEos) out.pop_back();
  return out;
}

SearchOptions SearchOptions::from(const InferenceConfig& c) {
  return {c.beam_width, c.min_length, c.max_length, c.length_penalty, c.no_repeat_ngram};
}

std::vector<Hypothesis> beam_search(const PrefixScorer& scorer, const SearchOptions& options) {
  check(options);
  struct Candidate {
    std::size_t beam;
    int token;
    double step;
    double log_prob;
  };
  std::vector<std::vector<int>> live_tokens{{}};
  std::vector<double> live_logp{0.0};
  std::vector<Hypothesis> finished;

  while (!live_tokens.empty()) {
    const auto lp = score_prefixes(scorer, live_tokens);
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < live_tokens.size(); ++b)
      for (int v = 0; v < lp.cols(); ++v) {
        const double s = lp(static_cast<Index>(b), v);
        if (!allowed(live_tokens[b], v, options) || !(s > -std::numeric_limits<double>::infinity())) continue;
        cands.push_back({b, v, s, live_logp[b] + s});
      }
    // Rank by cumulative log-probability; exact ties within a beam fall back
    // to the step score, then to the lexicographically smaller sequence.
    auto better = [&](const Candidate& x, const Candidate& y) {
      if (x.log_prob != y.log_prob) return x.log_prob > y.log_prob;
      if (x.beam == y.beam) {
        if (x.step != y.step) return x.step > y.step;
        return x.token < y.token;
      }
      const auto& a = live_tokens[x.beam];
      const auto& b = live_tokens[y.beam];
      return a < b;  // equal-length distinct prefixes never compare equal
    };
    const auto keep = std::min(cands.size(), static_cast<std::size_t>(options.beam_width));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);

    std::vector<std::vector<int>> next_tokens;
    std::vector<double> next_logp;
    for (std::size_t i = 0; i < keep; ++i) {
      auto tokens = live_tokens[cands[i].beam];
      tokens.push_back(cands[i].token);
      if (cands[i].token == kEos) {
        Hypothesis h;
        h.log_prob = cands[i].log_prob;
        h.score = h.log_prob / length_penalty(tokens.size(), options.alpha);
        h.tokens = std::move(tokens);
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next_tokens.push_back(std::move(tokens));
        next_logp.push_back(cands[i].log_prob);
      }
    }
    live_tokens = std::move(next_tokens);
    live_logp = std::move(next_logp);
  }
  if (finished.empty()) throw std::runtime_error("beam search found no finite-scored hypothesis");
  std::sort(finished.begin(), finished.end(), better_finished);
  return finished;
}

Hypothesis greedy_decode(const PrefixScorer& scorer, const SearchOptions& options) {
  check(options);
  Hypothesis h;
  while (h.tokens.empty() || h.tokens.back() != kEos) {
    const auto lp = score_prefixes(scorer, {h.tokens});
    int best = -1;
    for (int v = 0; v < lp.cols(); ++v) {
      if (!allowed(h.tokens, v, options) || !(lp(0, v) > -std::numeric_limits<double>::infinity())) continue;
      if (best < 0 || lp(0, v) > lp(0, best)) best = v;
    }
    if (best < 0) throw std::runtime_error("greedy decoding found no finite-scored token");
    h.log_prob += lp(0, best);
    h.tokens.push_back(best);
  }
  h.finished = true;
  h.score = h.log_prob / length_penalty(h.tokens.size(), options.alpha);
  return h;
}

Hypothesis decode(const PrefixScorer& scorer, const SearchOptions& options, bool greedy) {
  if (greedy) return greedy_decode(scorer, options);
  return beam_search(scorer, options).front();
}

template <typename Scalar>
ModelScorer<Scalar>::ModelScorer(const TagModel<Scalar>& model, const EncodedExample& example) : model_(model) {
  const auto batch = Batch::from_examples(std::span(&example, 1), false);
  memory_ = model_.encode(tape_, batch);
  encoder_nodes_ = tape_.size();
}

template <typename Scalar>
Eigen::MatrixXd ModelScorer<Scalar>::operator()(const std::vector<std::vector<int>>& prefixes) {
  const std::vector<int> example(prefixes.size(), 0);
  Eigen::MatrixXd out = model_.next_token_log_probs(tape_, memory_, prefixes, example).template cast<double>();
  tape_.truncate(encoder_nodes_);
  return out;
}

template <typename Scalar>
DecoderTrace<Scalar> ModelScorer<Scalar>::trace(const std::vector<int>& sequence) {
  DecoderTrace<Scalar> t;
  model_.next_token_log_probs(tape_, memory_, {sequence}, {0}, &t);
  tape_.truncate(encoder_nodes_);
  return t;
}

template <typename Scalar>
std::vector<Generation> generate(const TagModel<Scalar>& model, const std::vector<EncodedExample>& examples,
                                 const InferenceConfig& config, unsigned threads) {
  config.validate();
  const auto options = SearchOptions::from(config);
  std::vector<Generation> out(examples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < examples.size(); i = next++) {
      try {
        ModelScorer<Scalar> scorer(model, examples[i]);
        const auto h = decode(std::ref(scorer), options, config.greedy);
        out[i] = {examples[i].id, h.output(), h.score};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(examples.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

unsigned thread_budget() {
  if (const char* env = std::getenv("TAGSUM_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

template class ModelScorer<float>;
template class ModelScorer<double>;
template std::vector<Generation> generate<float>(const TagModel<float>&, const std::vector<EncodedExample>&,
                                                 const InferenceConfig&, unsigned);
template std::vector<Generation> generate<double>(const TagModel<double>&, const std::vector<EncodedExample>&,
                                                  const InferenceConfig&, unsigned);

}  // namespace tagsum
