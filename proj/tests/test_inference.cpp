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

#include <algorithm>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "beam_oracle.hpp"
#include "tagsum/inference.hpp"

using namespace tagsum;
using beam_oracle::ToyScorer;
using beam_oracle::enumerate;

namespace {

SearchOptions toy_options(int width, int min_len = 0, int max_len = 3) {
  SearchOptions o;
  o.beam_width = width;
  o.min_length = min_len;
  o.max_length = max_len;
  o.alpha = 0.4;
  return o;
}

}  // namespace

TEST_CASE("length penalty") {
  CHECK(length_penalty(1, 0.4) == 1.0);
  CHECK(length_penalty(1, 2.5) == 1.0);
  for (std::size_t n : {1u, 7u, 150u}) CHECK(length_penalty(n, 0.0) == 1.0);
  CHECK(length_penalty(100, 0.4) == doctest::Approx(std::pow(105.0 / 6.0, 0.4)).epsilon(1e-15));
}

TEST_CASE("beam search covering every sequence equals the exhaustive penalized argmax") {
  // 4 tokens + EOS over three steps: 5^3 = 125 candidates cover the tree.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    INFO("seed " << seed);
    ToyScorer scorer{seed};
    const auto o = toy_options(125);
    const auto expected = enumerate(scorer, o);
    const auto got = beam_search(std::ref(scorer), o);
    REQUIRE(got.size() == expected.size());
    CHECK(got.size() == 1 + 4 + 16 + 64);
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].tokens == expected[i].tokens);
      CHECK(got[i].score == doctest::Approx(expected[i].score).epsilon(1e-12));
    }
  }
}

TEST_CASE("exhaustive agreement also holds with a minimum length") {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    ToyScorer scorer{seed};
    const auto o = toy_options(125, 2);
    const auto expected = enumerate(scorer, o);
    const auto got = beam_search(std::ref(scorer), o);
    CHECK(got.front().tokens == expected.front().tokens);
    CHECK(got.size() == expected.size());
  }
}

TEST_CASE("width 1 equals greedy decoding") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ToyScorer scorer{seed, 12};
    const auto o = toy_options(1, static_cast<int>(seed % 3), 8);
    const auto beam = beam_search(std::ref(scorer), o).front();
    const auto greedy = greedy_decode(std::ref(scorer), o);
    CHECK(beam.tokens == greedy.tokens);
    CHECK(beam.log_prob == greedy.log_prob);
    CHECK(decode(std::ref(scorer), o, true).tokens == greedy.tokens);
  }
}

TEST_CASE("length limits hold for every returned hypothesis") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    ToyScorer scorer{seed, 9};
    const auto o = toy_options(4, 5, 9);
    for (const auto& h : beam_search(std::ref(scorer), o)) {
      CHECK(h.finished);
      CHECK(h.tokens.back() == kEos);
      const auto out = h.output();
      CHECK(out.size() >= 5);
      CHECK(out.size() <= 9);
      for (int t : out) {
        CHECK(t != kEos);
        CHECK(t != kPad);
        CHECK(t != kBos);
      }
    }
  }
}

TEST_CASE("invalid options are rejected") {
  ToyScorer scorer;
  CHECK_THROWS_AS(beam_search(std::ref(scorer), toy_options(0)), std::invalid_argument);
  CHECK_THROWS_AS(beam_search(std::ref(scorer), toy_options(2, 4, 3)), std::invalid_argument);
  CHECK_THROWS_AS(greedy_decode(std::ref(scorer), toy_options(0)), std::invalid_argument);
}

TEST_CASE("best penalized score does not decrease as the width grows on the toy fixture") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    INFO("seed " << seed);
    ToyScorer scorer{seed};
    double previous = -1e300;
    for (int w = 1; w <= 125; ++w) {
      const double best = beam_search(std::ref(scorer), toy_options(w)).front().score;
      CHECK(best >= previous);
      previous = std::max(previous, best);
    }
  }
}

TEST_CASE("search is deterministic") {
  ToyScorer a{5, 10}, b{5, 10};
  const auto x = beam_search(std::ref(a), toy_options(5, 1, 7));
  const auto y = beam_search(std::ref(b), toy_options(5, 1, 7));
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i].tokens == y[i].tokens);
}

TEST_CASE("n-gram blocking removes repeated bigrams") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ToyScorer scorer{seed, 6};  // two generable tokens force repetition pressure
    auto o = toy_options(3, 4, 6);
    o.no_repeat_ngram = 2;
    for (const auto& h : beam_search(std::ref(scorer), o)) {
      const auto out = h.output();
      std::set<std::pair<int, int>> seen;
      for (std::size_t i = 1; i < out.size(); ++i) CHECK(seen.insert({out[i - 1], out[i]}).second);
    }
  }
}

TEST_CASE("model-backed generation respects the length limits") {
  ModelConfig config = fixture::tiny_config();
  auto corpus = fixture::prepare(fixture::tiny_raw(), config);
  TagModel<double> model(config);
  model.initialize(3);
  InferenceConfig ic;
  ic.beam_width = 3;
  ic.min_length = 2;
  ic.max_length = 6;
  const auto first = generate(model, corpus.train.encoded, ic, 2);
  const auto again = generate(model, corpus.train.encoded, ic, 1);
  REQUIRE(first.size() == corpus.train.encoded.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].id == corpus.train.encoded[i].id);
    CHECK(first[i].tokens == again[i].tokens);
    CHECK(first[i].tokens.size() >= 2);
    CHECK(first[i].tokens.size() <= 6);
  }
  // The scorer matches a direct next-token query.
  ModelScorer<double> scorer(model, corpus.train.encoded[0]);
  const Eigen::MatrixXd a = scorer({{kBos, 5}});
  Tape<double> tape(false);
  const auto memory = model.encode(tape, Batch::from_examples(std::span(corpus.train.encoded.data(), 1), false));
  const Eigen::MatrixXd b = model.next_token_log_probs(tape, memory, {{kBos, 5}}, {0});
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}
