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


// Brute-force ROUGE: unit occurrences are listed explicitly and matched one
// by one; LCS by subset enumeration.

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tagsum/rouge.hpp"

namespace rouge_oracle {

using Tokens = std::vector<std::string>;
using tagsum::RougeScore;

// Brute-force unit lists: every n-gram or skip-bigram occurrence is listed
// explicitly and candidate occurrences claim unused equal reference
// occurrences one by one.
inline std::vector<Tokens> ngram_units(const Tokens& t, std::size_t n) {
  std::vector<Tokens> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) out.emplace_back(t.begin() + i, t.begin() + i + n);
  return out;
}

inline std::vector<Tokens> su4_units(const Tokens& t) {
  auto out = ngram_units(t, 1);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j)
      if (j - i - 1 <= 4) out.push_back({t[i], t[j]});
  return out;
}

inline RougeScore score(double overlap, double c, double r) {
  RougeScore s;
  s.precision = c > 0 ? overlap / c : 0.0;
  s.recall = r > 0 ? overlap / r : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

inline RougeScore matched(const std::vector<Tokens>& cand, const std::vector<Tokens>& ref) {
  std::vector<bool> used(ref.size(), false);
  std::size_t hit = 0;
  for (const auto& u : cand)
    for (std::size_t j = 0; j < ref.size(); ++j)
      if (!used[j] && ref[j] == u) {
        used[j] = true;
        ++hit;
        break;
      }
  return score(static_cast<double>(hit), static_cast<double>(cand.size()), static_cast<double>(ref.size()));
}

// Longest candidate subsequence, by subset enumeration, that is also a
// subsequence of the reference.
inline std::size_t brute_lcs(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (mask & (1u << i)) sub.push_back(a[i]);
    std::size_t k = 0;
    for (std::size_t j = 0; j < b.size() && k < sub.size(); ++j)
      if (b[j] == sub[k]) ++k;
    if (k == sub.size()) best = std::max(best, sub.size());
  }
  return best;
}

inline RougeScore rouge_l(const Tokens& c, const Tokens& r) {
  return score(static_cast<double>(brute_lcs(c, r)), static_cast<double>(c.size()), static_cast<double>(r.size()));
}

}  // namespace rouge_oracle
