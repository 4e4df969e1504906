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
#include <map>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "tagsum/corpus.hpp"

using namespace tagsum;
namespace fs = std::filesystem;

namespace {

std::string line(const std::string& id, int refs) {
  std::ostringstream s;
  s << R"({"id": ")" << id << R"(", "target_abstract": "we study graphs", "references": [)";
  for (int r = 0; r < refs; ++r)
    s << (r ? ", " : "") << R"({"id": ")" << id << "-r" << r << R"(", "abstract": "paper )" << r << R"( on trees"})";
  s << R"(], "related_work": "prior work studies trees."})";
  return s.str();
}

void write_file(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

fs::path corpus_dir(const std::string& name, const std::vector<std::string>& train) {
  auto dir = fixture::scratch_dir(name);
  write_file(dir / "train.jsonl", train);
  write_file(dir / "valid.jsonl", {});
  write_file(dir / "test.jsonl", {});
  return dir;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const CorpusError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string words(int n, const std::string& stem = "w") {
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? " " : "") + stem + std::to_string(i);
  return s;
}

}  // namespace

TEST_CASE("load_corpus keeps well-formed examples and counts filtered drops") {
  SUBCASE("three lines, filter 1") {
    const auto dir = corpus_dir("load3", {line("a", 1), line("b", 2), line("c", 3)});
    const auto corpus = load_corpus(dir, 1);
    CHECK(corpus.train.size() == 3);
    CHECK(corpus.dropped == 0);
    CHECK(corpus.train[2].references.size() == 3);
    CHECK(corpus.train[1].references[1].abstract == "paper 1 on trees");
  }
  SUBCASE("one reference, filter 2") {
    const auto dir = corpus_dir("load1", {line("a", 1)});
    const auto corpus = load_corpus(dir, 2);
    CHECK(corpus.size() == 0);
    CHECK(corpus.dropped == 1);
  }
}

TEST_CASE("load_corpus errors name the line, or the field and example id") {
  const auto bad_line = corpus_dir("badline", {line("a", 2), "{not json", line("c", 2)});
  const auto m1 = message_of([&] { load_corpus(bad_line, 1); });
  CHECK(m1.find("line 2") != std::string::npos);

  const auto missing = corpus_dir("missing", {R"({"id": "x7", "target_abstract": "t", "references": []})"});
  const auto m2 = message_of([&] { load_corpus(missing, 0); });
  CHECK(m2.find("related_work") != std::string::npos);
  CHECK(m2.find("x7") != std::string::npos);

  const auto m3 = message_of([&] { load_corpus(fixture::scratch_dir("nothing"), 1); });
  CHECK(m3.find("train.jsonl") != std::string::npos);
}

TEST_CASE("vocabulary orders by frequency then token and maps rare tokens to UNK") {
  WordTokenizer tok;
  const std::vector<std::vector<std::string>> docs{tok.tokenize("a a b")};
  const auto v = Vocabulary::build(docs, 10, 1);
  CHECK(v.size() == 6);
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);
  for (int i = 0; i < kSpecialCount; ++i) CHECK(v.id(Vocabulary::special_token(i)) == i);

  const auto rare = Vocabulary::build(docs, 10, 2);
  CHECK_FALSE(rare.contains("b"));
  CHECK(rare.id("b") == kUnk);

  const std::vector<std::vector<std::string>> ties{{"z", "y", "x", "y", "z"}};
  const auto t = Vocabulary::build(ties, 10, 1);
  CHECK(t.id("y") == 4);
  CHECK(t.id("z") == 5);
  CHECK(t.id("x") == 6);

  CHECK_THROWS_AS(Vocabulary::build(std::span<const std::vector<std::string>>{}, 10, 1), CorpusError);
}

TEST_CASE("synthetic vocabulary size is the distinct-token count plus four, capped") {
  const auto raw = fixture::tiny_raw(40);
  WordTokenizer tok;
  std::vector<std::vector<std::string>> docs;
  for (const auto& ex : raw.train) {
    docs.push_back(tok.tokenize(ex.target_abstract));
    for (const auto& r : ex.references) docs.push_back(tok.tokenize(r.abstract));
    docs.push_back(tok.tokenize(ex.related_work));
  }
  std::set<std::string> distinct;
  for (const auto& d : docs) distinct.insert(d.begin(), d.end());
  CHECK(Vocabulary::build(docs, 100000, 1).size() == static_cast<int>(distinct.size()) + 4);
  CHECK(Vocabulary::build(docs, 20, 1).size() == 20);
}

TEST_CASE("vocabulary is a bijection that survives save and load, and round-trips text") {
  WordTokenizer tok;
  const std::vector<std::vector<std::string>> docs{tok.tokenize("graph neural networks, for graphs."),
                                                   tok.tokenize("neural text generation")};
  const auto v = Vocabulary::build(docs, 100, 1);
  for (int i = 0; i < v.size(); ++i) CHECK(v.id(v.token(i)) == i);
  const auto path = fixture::scratch_dir("vocab") / "vocab.txt";
  v.save(path);
  const auto back = Vocabulary::load(path);
  REQUIRE(back.size() == v.size());
  for (int i = 0; i < v.size(); ++i) CHECK(back.token(i) == v.token(i));
  for (const auto& d : docs) {
    const auto ids = v.encode(d);
    for (int id : ids) CHECK(id < v.size());
    CHECK(v.decode(ids) == d);
  }
}

TEST_CASE("encode_example truncates, pads and frames the gold sequence") {
  ModelConfig config;  // 200 words, 5 references, 20 keyphrases
  WordTokenizer tok;
  RawExample raw;
  raw.id = "e1";
  raw.target_abstract = words(250);
  raw.references = {{"r0", words(5, "a")}, {"r1", ""}, {"r2", words(3, "b")}};
  raw.related_work = words(20, "y");
  std::vector<std::vector<std::string>> docs{tok.tokenize(raw.target_abstract), tok.tokenize(raw.related_work),
                                             tok.tokenize(raw.references[0].abstract)};
  const auto vocab = Vocabulary::build(docs, 1000, 1);
  const auto ex = encode_example(raw, vocab, tok, {{"a0"}, {"b1", "b2"}}, {{0, 0}}, config);

  CHECK(ex.target.ids.rows() == 1);
  CHECK(ex.target.row(0).size() == 200);
  CHECK(ex.target.row(0).back() == vocab.id("w199"));

  CHECK(ex.references.ids.rows() == 5);
  CHECK(ex.references.row(0).size() == 5);
  CHECK_FALSE(ex.references.row_present(1));
  CHECK(ex.references.row(2) == std::vector<int>{kUnk, kUnk, kUnk});
  for (Index r : {1, 3, 4}) CHECK(ex.references.pad.row(r).all());

  CHECK(ex.keyphrases.ids.rows() == 20);
  CHECK(fixture::count_present(ex.keyphrases) == 2);

  for (const auto* grid : {&ex.target, &ex.references, &ex.keyphrases}) {
    CHECK(grid->ids.rows() == grid->pad.rows());
    CHECK(grid->ids.cols() == grid->pad.cols());
    CHECK((grid->pad.array() == (grid->ids.array() == kPad)).all());
  }

  CHECK(ex.gold.front() == kBos);
  CHECK(ex.gold.back() == kEos);
  CHECK(ex.gold.size() == 22);

  config.max_related_work_words = 5;
  const auto cut = encode_example(raw, vocab, tok, {}, {}, config);
  CHECK(cut.gold.size() == 7);
  CHECK(cut.gold.front() == kBos);
  CHECK(cut.gold.back() == kEos);
}

TEST_CASE("empty abstracts encode to an all-pad row without error") {
  ModelConfig config;
  WordTokenizer tok;
  RawExample raw{"e", "", {{"r", "some words"}}, "text"};
  const std::vector<std::vector<std::string>> docs{{"text"}};
  const auto ex = encode_example(raw, Vocabulary::build(docs, 10, 1), tok, {}, {}, config);
  CHECK_FALSE(ex.target.row_present(0));
  CHECK(ex.target.pad.all());
}

TEST_CASE("negative sampling") {
  WordTokenizer tok;
  auto make = [](const std::string& id, std::vector<std::string> refs) {
    RawExample ex{id, "abstract of " + id, {}, "rw"};
    for (const auto& r : refs) ex.references.push_back({r, "abstract of " + r});
    return ex;
  };
  SUBCASE("a pool of exactly k + |R| + 1 papers returns the k non-references") {
    const std::vector<RawExample> examples{make("t", {"r1", "r2"}), make("n1", {"n2", "n3"})};
    const auto pool = PaperPool::from_examples(examples, tok);
    REQUIRE(pool.size() == 6);
    for (std::uint64_t seed : {0u, 1u, 99u}) {
      auto got = sample_negatives(examples[0], pool, 3, seed, tok);
      std::set<std::string> ids;
      for (auto i : got) ids.insert(pool.ids[i]);
      CHECK(ids == std::set<std::string>{"n1", "n2", "n3"});
    }
    CHECK_THROWS_AS(sample_negatives(examples[0], pool, 4, 0, tok), CorpusError);
  }
  SUBCASE("papers identical in text to a reference are excluded") {
    std::vector<RawExample> examples{make("t", {"r1"}), make("c", {"d"})};
    examples[1].references[0].abstract = "abstract of r1";
    const auto pool = PaperPool::from_examples(examples, tok);
    for (std::uint64_t seed = 0; seed < 20; ++seed)
      CHECK(pool.ids[sample_negatives(examples[0], pool, 1, seed, tok)[0]] == "c");
  }
  SUBCASE("same seed gives the same sample") {
    const auto raw = fixture::tiny_raw(30);
    const auto pool = PaperPool::from_examples(raw.train, tok);
    CHECK(sample_negatives(raw.train[3], pool, 4, 11, tok) == sample_negatives(raw.train[3], pool, 4, 11, tok));
    CHECK(sample_negatives(raw.train[3], pool, 4, 11, tok) != sample_negatives(raw.train[3], pool, 4, 12, tok));
  }
  SUBCASE("10,000 draws over six candidates are uniform") {
    const std::vector<RawExample> examples{make("t", {"r1"}), make("c1", {"c2", "c3"}), make("c4", {"c5", "c6"})};
    const auto pool = PaperPool::from_examples(examples, tok);
    REQUIRE(pool.size() == 8);
    std::map<std::string, int> hist;
    const int draws = 10000;
    for (int s = 0; s < draws; ++s) ++hist[pool.ids[sample_negatives(examples[0], pool, 1, s, tok)[0]]];
    REQUIRE(hist.size() == 6);
    const double expected = draws / 6.0;
    const double sigma = std::sqrt(draws * (1.0 / 6.0) * (5.0 / 6.0));
    double chi2 = 0.0;
    for (const auto& [id, n] : hist) {
      CHECK(std::abs(n - expected) < 3.0 * sigma);
      chi2 += (n - expected) * (n - expected) / expected;
    }
    CHECK(chi2 < 20.52);  // chi-square critical value, 5 dof, p = 0.001
  }
}

TEST_CASE("prepared negatives never repeat a reference of the same example") {
  ModelConfig config = fixture::tiny_config();
  const auto prepared = fixture::prepare(fixture::tiny_raw(40), config);
  for (const auto& ex : prepared.train.encoded) {
    CHECK(fixture::count_present(ex.negatives) == static_cast<std::size_t>(config.negatives));
    for (Index n = 0; n < ex.negatives.ids.rows(); ++n)
      for (Index r = 0; r < ex.references.ids.rows(); ++r)
        if (ex.references.row_present(r)) CHECK(ex.negatives.row(n) != ex.references.row(r));
  }
}

TEST_CASE("synthetic corpora") {
  SyntheticOptions o;
  o.examples = 100;
  o.refs_per_example = 4;
  o.seed = 3;
  SUBCASE("zero examples give empty splits") {
    o.examples = 0;
    CHECK(generate_synthetic_corpus(o).size() == 0);
  }
  SUBCASE("vocabularies below fifty words are rejected") {
    o.vocab_size = 49;
    CHECK_THROWS(generate_synthetic_corpus(o));
  }
  SUBCASE("a fixed seed writes byte-identical files") {
    const auto a = fixture::scratch_dir("synth_a"), b = fixture::scratch_dir("synth_b");
    write_corpus(a, generate_synthetic_corpus(o));
    write_corpus(b, generate_synthetic_corpus(o));
    for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl"}) CHECK(slurp(a / f) == slurp(b / f));
    CHECK(slurp(a / "train.jsonl").size() > 0);
  }
  SUBCASE("reloaded files recount the configured mean reference count") {
    const auto dir = fixture::scratch_dir("synth_mean");
    write_corpus(dir, generate_synthetic_corpus(o));
    const auto back = load_corpus(dir, 0);
    CHECK(back.size() == 100);
    std::size_t refs = 0;
    for (const auto* split : {&back.train, &back.valid, &back.test})
      for (const auto& ex : *split) refs += ex.references.size();
    CHECK(std::abs(static_cast<double>(refs) / 100.0 - 4.0) <= 0.5);
  }
  SUBCASE("related work tokens come from the references") {
    const auto corpus = generate_synthetic_corpus(o);
    WordTokenizer tok;
    std::size_t hit = 0, total = 0;
    std::set<std::string> ids;
    for (const auto* split : {&corpus.train, &corpus.valid, &corpus.test})
      for (const auto& ex : *split) {
        CHECK(ids.insert(ex.id).second);
        CHECK_NOTHROW(ex.validate());
        std::set<std::string> ref_tokens;
        for (const auto& r : ex.references)
          for (auto& t : tok.tokenize(r.abstract)) ref_tokens.insert(t);
        for (const auto& t : tok.tokenize(ex.related_work)) {
          ++total;
          hit += ref_tokens.count(t);
        }
      }
    CHECK(static_cast<double>(hit) / static_cast<double>(total) > 0.8);
  }
}

TEST_CASE("word tokenizer lowercases and splits punctuation") {
  WordTokenizer tok;
  CHECK(tok.tokenize("Graph-based, Models.") ==
        std::vector<std::string>{"graph", "-", "based", ",", "models", "."});
  CHECK(tok.tokenize("   ").empty());
}

TEST_CASE("stable hash is FNV-1a") {
  CHECK(stable_hash("") == 0xcbf29ce484222325ULL);
  CHECK(stable_hash("a") == 0xaf63dc4c8601ec8cULL);
}
