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

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tagsum/config.hpp"

namespace tagsum {

using Index = Eigen::Index;

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kSpecialCount = 4;

/// Raised for malformed corpus input; the message names the file, line or
/// field at fault.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReferencePaper {
  std::string id;
  std::string abstract;
};

struct RawExample {
  std::string id;
  std::string target_abstract;
  std::vector<ReferencePaper> references;
  std::string related_work;

  /// Non-empty references with distinct ids different from `id`, and
  /// non-empty related work.
  void validate() const;
};

struct CorpusSplit {
  std::vector<RawExample> train;
  std::vector<RawExample> valid;
  std::vector<RawExample> test;
  std::size_t dropped = 0;  // examples removed by the reference-count filter

  std::size_t size() const { return train.size() + valid.size() + test.size(); }
};

// ---------------------------------------------------------------------------
// Tokenization

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
  virtual std::string detokenize(std::span<const std::string> tokens) const;
};

/// Lowercases, splits on whitespace, and emits every ASCII punctuation
/// character as its own token.
class WordTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> tokenize(std::string_view text) const override;
};

class Vocabulary {
 public:
  /// Specials only.
  Vocabulary();

  /// Tokens ordered by descending frequency, ties broken lexicographically;
  /// tokens seen fewer than min_freq times are dropped. max_size counts the
  /// specials. Throws CorpusError on an empty corpus.
  static Vocabulary build(std::span<const std::vector<std::string>> documents, std::size_t max_size,
                          std::size_t min_freq);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;
  const std::string& token(int id) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  std::vector<int> encode(std::span<const std::string> tokens) const;
  /// Drops PAD, BOS and EOS.
  std::vector<std::string> decode(std::span<const int> ids) const;

  static const char* special_token(int id);

 private:
  void append(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// JSONL ingestion

/// Parses one JSONL file. Errors name the line number, or the missing field
/// and the example id.
std::vector<RawExample> read_examples(const std::filesystem::path& path);
void write_examples(const std::filesystem::path& path, std::span<const RawExample> examples);

/// Reads train.jsonl, valid.jsonl and test.jsonl from a directory, dropping
/// examples with fewer than filter_min_refs references.
CorpusSplit load_corpus(const std::filesystem::path& dir, std::size_t filter_min_refs = 2);
void write_corpus(const std::filesystem::path& dir, const CorpusSplit& corpus);

// ---------------------------------------------------------------------------
// Encoded examples

using IdMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grid of padded id rows with its pad mask (true at pad positions).
struct PaddedIds {
  IdMatrix ids;
  MaskMatrix pad;

  /// Builds a rows x width grid, width = max(1, longest row).
  static PaddedIds from_rows(const std::vector<std::vector<int>>& rows, std::size_t row_count);
  /// Non-pad ids of row r.
  std::vector<int> row(Index r) const;
  /// Row r holds at least one non-pad id.
  bool row_present(Index r) const;
};

struct EncodedExample {
  std::string id;
  PaddedIds target;        // 1 x L_a
  PaddedIds references;    // |R|max x L_r
  PaddedIds keyphrases;    // |C|max x L_c
  PaddedIds negatives;     // K_neg x L_r
  std::vector<int> gold;   // BOS y_1 .. y_n EOS
  std::vector<std::pair<int, int>> keyphrase_reference_edges;  // (keyphrase row, reference row)
};

/// Truncates to the configured word limits, maps tokens to ids and pads the
/// reference and keyphrase grids to max_references / max_keyphrases rows.
/// Unknown tokens map to UNK. Negatives are attached separately.
EncodedExample encode_example(const RawExample& raw, const Vocabulary& vocab, const Tokenizer& tokenizer,
                              const std::vector<std::vector<std::string>>& keyphrases,
                              const std::vector<std::pair<int, int>>& keyphrase_reference_edges,
                              const ModelConfig& config);

/// Every distinct paper (targets and references) of a split, tokenized, in
/// order of first appearance.
struct PaperPool {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> tokens;

  static PaperPool from_examples(std::span<const RawExample> examples, const Tokenizer& tokenizer);
  std::size_t size() const { return ids.size(); }
};

/// k pool indices drawn uniformly without replacement from papers that are
/// neither the example's target nor one of its references (by id or by
/// identical token sequence). Deterministic in (example id, seed).
std::vector<std::size_t> sample_negatives(const RawExample& example, const PaperPool& pool, std::size_t k,
                                          std::uint64_t seed, const Tokenizer& tokenizer);

/// Attaches the given negative abstracts to an encoded example, truncated
/// like references.
void attach_negatives(EncodedExample& example, const std::vector<std::vector<std::string>>& negative_tokens,
                      const Vocabulary& vocab, const ModelConfig& config);

// ---------------------------------------------------------------------------
// Synthetic corpora

struct SyntheticOptions {
  std::size_t examples = 100;
  std::size_t vocab_size = 200;
  std::size_t refs_per_example = 4;  // mean; counts vary by +-1
  std::size_t abstract_words = 12;
  std::size_t copied_words = 3;      // leading words of each reference copied into the related work
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 7;
};

/// Word list used by the generator: vocab_size distinct pronounceable words.
std::vector<std::string> synthetic_words(std::size_t vocab_size);

/// Each related work concatenates the leading words of every reference and
/// ends with the target's first word. Throws if vocab_size < 50.
CorpusSplit generate_synthetic_corpus(const SyntheticOptions& options);

/// 64-bit FNV-1a; stable across platforms, used to derive per-example seeds.
std::uint64_t stable_hash(std::string_view text, std::uint64_t seed = 0);

}  // namespace tagsum
