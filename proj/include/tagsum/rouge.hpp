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

// ROUGE-1, ROUGE-2, ROUGE-L and ROUGE-SU4 with F1 (beta = 1).

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace tagsum {

/// Skip-bigrams pair tokens at most this many positions apart, i.e. with
/// at most four tokens in between.
inline constexpr std::size_t kSkipBigramMaxDistance = 5;

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// F1 = 2PR / (P + R), 0 when P + R = 0.
RougeScore make_score(double overlap, double candidate_units, double reference_units);

RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n);
RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);
RougeScore rouge_su4(std::span<const std::string> candidate, std::span<const std::string> reference);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct RougeOptions {
  bool stem = false;
  bool remove_stopwords = false;
};

/// Lowercased alphanumeric words; optional stopword removal and Porter
/// stemming.
std::vector<std::string> rouge_tokens(std::string_view text, const RougeOptions& options = {});

/// Porter (1980) suffix stripping of one lowercase word.
std::string porter_stem(std::string word);

struct ExampleRouge {
  std::string id;
  RougeScore r1, r2, rl, rsu4;
  bool empty_reference = false;
};

struct RougeReport {
  std::vector<ExampleRouge> examples;
  RougeScore r1, r2, rl, rsu4;  // arithmetic means over examples
  std::size_t empty_references = 0;
};

struct TextPair {
  std::string id;
  std::string candidate;
  std::string reference;
};

RougeReport evaluate_rouge(std::span<const TextPair> pairs, const RougeOptions& options = {});

nlohmann::json to_json(const RougeReport& report);
/// id, then P/R/F1 for each metric.
void write_rouge_csv(const std::filesystem::path& path, const RougeReport& report);

}  // namespace tagsum
