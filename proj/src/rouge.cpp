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

#include "tagsum/rouge.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <map>
#include <stdexcept>

#include "tagsum/keyphrase.hpp"

namespace tagsum {
namespace {

using Units = std::map<std::vector<std::string>, std::size_t>;

std::size_t total(const Units& u) {
  std::size_t n = 0;
  for (const auto& [unit, c] : u) n += c;
  return n;
}

std::size_t clipped_overlap(const Units& candidate, const Units& reference) {
  std::size_t n = 0;
  for (const auto& [unit, c] : candidate) {
    auto it = reference.find(unit);
    if (it != reference.end()) n += std::min(c, it->second);
  }
  return n;
}

Units ngrams(std::span<const std::string> tokens, std::size_t n) {
  Units u;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++u[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return u;
}

Units su4_units(std::span<const std::string> tokens) {
  Units u = ngrams(tokens, 1);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    for (std::size_t j = i + 1; j < tokens.size() && j - i <= kSkipBigramMaxDistance; ++j) ++u[{tokens[i], tokens[j]}];
  return u;
}

RougeScore from_units(const Units& candidate, const Units& reference) {
  return make_score(static_cast<double>(clipped_overlap(candidate, reference)), static_cast<double>(total(candidate)),
                    static_cast<double>(total(reference)));
}

// --- Porter stemmer -------------------------------------------------------

bool consonant(const std::string& w, std::size_t i) {
  switch (w[i]) {
    case 'a': case 'e': case 'i': case 'o': case 'u': return false;
    case 'y': return i == 0 || !consonant(w, i - 1);
    default: return true;
  }
}

// Number of VC sequences in w[0, end).
int measure(const std::string& w, std::size_t end) {
  int m = 0;
  std::size_t i = 0;
  while (i < end && consonant(w, i)) ++i;
  while (i < end) {
    while (i < end && !consonant(w, i)) ++i;
    if (i >= end) break;
    while (i < end && consonant(w, i)) ++i;
    ++m;
  }
  return m;
}

bool has_vowel(const std::string& w, std::size_t end) {
  for (std::size_t i = 0; i < end; ++i)
    if (!consonant(w, i)) return true;
  return false;
}

bool double_consonant(const std::string& w, std::size_t end) {
  return end >= 2 && w[end - 1] == w[end - 2] && consonant(w, end - 1);
}

// consonant-vowel-consonant ending, last consonant not w, x or y.
bool cvc(const std::string& w, std::size_t end) {
  if (end < 3 || !consonant(w, end - 1) || consonant(w, end - 2) || !consonant(w, end - 3)) return false;
  const char c = w[end - 1];
  return c != 'w' && c != 'x' && c != 'y';
}

bool ends_with(const std::string& w, std::string_view s) {
  return w.size() >= s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0;
}

// Replaces the longest matching suffix when the remaining stem has
// measure > min_measure. Returns whether any suffix matched.
bool replace_suffix(std::string& w, std::initializer_list<std::pair<std::string_view, std::string_view>> rules,
                    int min_measure) {
  const std::pair<std::string_view, std::string_view>* best = nullptr;
  for (const auto& r : rules)
    if (ends_with(w, r.first) && (!best || r.first.size() > best->first.size())) best = &r;
  if (!best) return false;
  const std::size_t stem = w.size() - best->first.size();
  if (measure(w, stem) > min_measure) w = w.substr(0, stem) + std::string(best->second);
  return true;
}

}  // namespace

RougeScore make_score(double overlap, double candidate_units, double reference_units) {
  RougeScore s;
  s.precision = candidate_units > 0 ? overlap / candidate_units : 0.0;
  s.recall = reference_units > 0 ? overlap / reference_units : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n) {
  if (n == 0) throw std::invalid_argument("ROUGE-N needs n >= 1");
  return from_units(ngrams(candidate, n), ngrams(reference, n));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return make_score(static_cast<double>(lcs_length(candidate, reference)), static_cast<double>(candidate.size()),
                    static_cast<double>(reference.size()));
}

RougeScore rouge_su4(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return from_units(su4_units(candidate), su4_units(reference));
}

std::string porter_stem(std::string w) {
  if (w.size() <= 2) return w;
  // Step 1a
  if (ends_with(w, "sses") || ends_with(w, "ies")) w.resize(w.size() - 2);
  else if (!ends_with(w, "ss") && ends_with(w, "s")) w.pop_back();
  // Step 1b
  bool cleanup = false;
  if (ends_with(w, "eed")) {
    if (measure(w, w.size() - 3) > 0) w.pop_back();
  } else if (ends_with(w, "ed") && has_vowel(w, w.size() - 2)) {
    w.resize(w.size() - 2);
    cleanup = true;
  } else if (ends_with(w, "ing") && has_vowel(w, w.size() - 3)) {
    w.resize(w.size() - 3);
    cleanup = true;
  }
  if (cleanup) {
    if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
      w += 'e';
    } else if (double_consonant(w, w.size()) && w.back() != 'l' && w.back() != 's' && w.back() != 'z') {
      w.pop_back();
    } else if (measure(w, w.size()) == 1 && cvc(w, w.size())) {
      w += 'e';
    }
  }
  // Step 1c
  if (ends_with(w, "y") && has_vowel(w, w.size() - 1)) w.back() = 'i';
  // Step 2
  replace_suffix(w,
                 {{"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"}, {"izer", "ize"},
                  {"abli", "able"}, {"alli", "al"}, {"entli", "ent"}, {"eli", "e"}, {"ousli", "ous"},
                  {"ization", "ize"}, {"ation", "ate"}, {"ator", "ate"}, {"alism", "al"}, {"iveness", "ive"},
                  {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"}, {"iviti", "ive"}, {"biliti", "ble"}},
                 0);
  // Step 3
  replace_suffix(w,
                 {{"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"}, {"ical", "ic"}, {"ful", ""},
                  {"ness", ""}},
                 0);
  // Step 4; "ion" only after s or t.
  if (ends_with(w, "ion") && w.size() >= 4 && (w[w.size() - 4] == 's' || w[w.size() - 4] == 't')) {
    if (measure(w, w.size() - 3) > 1) w.resize(w.size() - 3);
  } else {
    replace_suffix(w,
                   {{"al", ""}, {"ance", ""}, {"ence", ""}, {"er", ""}, {"ic", ""}, {"able", ""}, {"ible", ""},
                    {"ant", ""}, {"ement", ""}, {"ment", ""}, {"ent", ""}, {"ou", ""}, {"ism", ""}, {"ate", ""},
                    {"iti", ""}, {"ous", ""}, {"ive", ""}, {"ize", ""}},
                   1);
  }
  // Step 5a
  if (ends_with(w, "e")) {
    const int m = measure(w, w.size() - 1);
    if (m > 1 || (m == 1 && !cvc(w, w.size() - 1))) w.pop_back();
  }
  // Step 5b
  if (measure(w, w.size()) > 1 && double_consonant(w, w.size()) && w.back() == 'l') w.pop_back();
  return w;
}

std::vector<std::string> rouge_tokens(std::string_view text, const RougeOptions& options) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    if (!(options.remove_stopwords && is_stopword(cur))) out.push_back(options.stem ? porter_stem(cur) : cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80)
      cur += static_cast<char>(std::tolower(c));
    else
      flush();
  }
  flush();
  return out;
}

RougeReport evaluate_rouge(std::span<const TextPair> pairs, const RougeOptions& options) {
  RougeReport report;
  auto add = [](RougeScore& acc, const RougeScore& s) {
    acc.precision += s.precision;
    acc.recall += s.recall;
    acc.f1 += s.f1;
  };
  for (const auto& p : pairs) {
    const auto cand = rouge_tokens(p.candidate, options);
    const auto ref = rouge_tokens(p.reference, options);
    ExampleRouge e;
    e.id = p.id;
    e.empty_reference = ref.empty();
    if (!e.empty_reference) {
      e.r1 = rouge_n(cand, ref, 1);
      e.r2 = rouge_n(cand, ref, 2);
      e.rl = rouge_l(cand, ref);
      e.rsu4 = rouge_su4(cand, ref);
    } else {
      ++report.empty_references;
    }
    add(report.r1, e.r1);
    add(report.r2, e.r2);
    add(report.rl, e.rl);
    add(report.rsu4, e.rsu4);
    report.examples.push_back(std::move(e));
  }
  if (!pairs.empty()) {
    const double n = static_cast<double>(pairs.size());
    for (RougeScore* s : {&report.r1, &report.r2, &report.rl, &report.rsu4}) {
      s->precision /= n;
      s->recall /= n;
      s->f1 /= n;
    }
  }
  return report;
}

nlohmann::json to_json(const RougeReport& report) {
  auto score = [](const RougeScore& s) {
    return nlohmann::json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  };
  return {{"examples", report.examples.size()},
          {"empty_references", report.empty_references},
          {"rouge_1", score(report.r1)},
          {"rouge_2", score(report.r2)},
          {"rouge_l", score(report.rl)},
          {"rouge_su4", score(report.rsu4)}};
}

void write_rouge_csv(const std::filesystem::path& path, const RougeReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "id,r1_p,r1_r,r1_f1,r2_p,r2_r,r2_f1,rl_p,rl_r,rl_f1,rsu4_p,rsu4_r,rsu4_f1,empty_reference\n";
  out << std::setprecision(9);
  for (const auto& e : report.examples) {
    out << '"';
    for (char c : e.id) out << (c == '"' ? std::string("\"\"") : std::string(1, c));
    out << '"';
    for (const RougeScore* s : {&e.r1, &e.r2, &e.rl, &e.rsu4}) out << ',' << s->precision << ',' << s->recall << ',' << s->f1;
    out << ',' << (e.empty_reference ? 1 : 0) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace tagsum
