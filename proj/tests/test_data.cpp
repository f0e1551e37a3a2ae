#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <doctest.h>

#include "simcse/augment.hpp"
#include "simcse/data.hpp"
#include "simcse/errors.hpp"
#include "simcse/io.hpp"

namespace {

using simcse::Sentence;
using simcse::StsDataset;
using simcse::StsExample;
using simcse::StsSubset;
using simcse::Vocab;

std::filesystem::path fresh_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() / ("simcse_data_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_temp(const std::filesystem::path& dir, const std::string& name,
                       const std::string& body) {
  const auto path = dir / name;
  simcse::io::write_file_atomic(path.string(), body);
  return path.string();
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on runs of whitespace") {
  CHECK(simcse::tokenize("The  Cat\tsat\r\n") == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(simcse::tokenize("   ") == std::vector<std::string>{});
  CHECK(simcse::tokenize("") == std::vector<std::string>{});
}

TEST_CASE("vocab reserves pad, bos, unk and maps unknown tokens to unk") {
  const Vocab v = Vocab::with_reserved();
  CHECK(v.size() == 3);
  CHECK(v.lookup("<pad>") == Vocab::kPadId);
  CHECK(v.lookup("<bos>") == Vocab::kBosId);
  CHECK(v.lookup("<unk>") == Vocab::kUnkId);
  CHECK(v.lookup("zebra") == Vocab::kUnkId);
}

TEST_CASE("load_corpus assigns ids in first-occurrence order starting at 3") {
  const auto dir = fresh_dir("corpus_order");
  const std::string path = write_temp(dir, "c.txt", "a b\nc\n");
  const simcse::Corpus corpus = simcse::data::load_corpus(path);
  REQUIRE(corpus.sentences.size() == 2);
  CHECK(corpus.sentences[0] == Sentence{3, 4});
  CHECK(corpus.sentences[1] == Sentence{5});
  CHECK(corpus.vocab.lookup("a") == 3);
  CHECK(corpus.vocab.lookup("b") == 4);
  CHECK(corpus.vocab.lookup("c") == 5);
  CHECK(corpus.vocab.size() == 6);
}

TEST_CASE("load_corpus skips blank lines and rejects files without sentences") {
  const auto dir = fresh_dir("corpus_blank");
  const std::string path = write_temp(dir, "c.txt", "\n  \nfoo bar\n\n");
  const simcse::Corpus corpus = simcse::data::load_corpus(path);
  CHECK(corpus.sentences.size() == 1);

  const std::string empty = write_temp(dir, "e.txt", "\n \n\t\n");
  CHECK_THROWS_AS(simcse::data::load_corpus(empty), simcse::EmptyCorpusError);
  CHECK_THROWS_AS(simcse::data::load_corpus((dir / "missing.txt").string()), simcse::IoError);
}

TEST_CASE("load_corpus is idempotent across repeated loads") {
  const auto dir = fresh_dir("corpus_idem");
  const std::string path = write_temp(dir, "c.txt", "red fox\nred hen\nblue fox\n");
  const simcse::Corpus a = simcse::data::load_corpus(path);
  const simcse::Corpus b = simcse::data::load_corpus(path);
  CHECK(a.sentences == b.sentences);
  CHECK(a.vocab.to_token == b.vocab.to_token);
}

TEST_CASE("load_nli_triplets parses three tab-separated columns") {
  const auto dir = fresh_dir("nli_ok");
  const std::string corpus_path = write_temp(dir, "c.txt", "a b c d e\n");
  const simcse::Corpus corpus = simcse::data::load_corpus(corpus_path);
  const std::string path = write_temp(dir, "nli.tsv", "a b\tc d\te\nb\ta\tzzz\n");
  const auto rows = simcse::data::load_nli_triplets(path, corpus.vocab);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].anchor == Sentence{3, 4});
  REQUIRE(rows[0].positive.has_value());
  CHECK(*rows[0].positive == Sentence{5, 6});
  REQUIRE(rows[0].hard_negative.has_value());
  CHECK(*rows[0].hard_negative == Sentence{7});
  CHECK(*rows[1].hard_negative == Sentence{Vocab::kUnkId});
}

TEST_CASE("load_nli_triplets reports the offending line on bad column counts") {
  const auto dir = fresh_dir("nli_bad");
  const Vocab vocab = Vocab::with_reserved();
  const std::string two_cols = write_temp(dir, "two.tsv", "a\tb\tc\na\tb\n");
  CHECK_THROWS_WITH_AS(simcse::data::load_nli_triplets(two_cols, vocab),
                       doctest::Contains("two.tsv:2"), simcse::BadColumnCountError);
  const std::string empty_field = write_temp(dir, "void.tsv", "a\t\tb\n");
  CHECK_THROWS_AS(simcse::data::load_nli_triplets(empty_field, vocab), simcse::TooShortError);
  const std::string none = write_temp(dir, "none.tsv", "\n\n");
  CHECK(simcse::data::load_nli_triplets(none, vocab).empty());
}

TEST_CASE("load_sts reads manifest-relative tsv files and validates scores") {
  const auto dir = fresh_dir("sts_ok");
  write_temp(dir, "main.tsv", "a b\tc\t4.5\nd\te f\t0\n");
  const std::string manifest =
      write_temp(dir, "manifest.json", R"({"subsets":[{"name":"main","file":"main.tsv"}]})");
  const StsDataset ds = simcse::data::load_sts(manifest);
  REQUIRE(ds.subsets.size() == 1);
  CHECK(ds.subsets[0].name == "main");
  REQUIRE(ds.subsets[0].examples.size() == 2);
  CHECK(ds.subsets[0].examples[0].s1 == "a b");
  CHECK(ds.subsets[0].examples[0].gold == doctest::Approx(4.5));
  CHECK(ds.subsets[0].examples[1].gold == doctest::Approx(0.0));
}

TEST_CASE("load_sts accepts a bare-list manifest root") {
  const auto dir = fresh_dir("sts_list");
  write_temp(dir, "only.tsv", "x\ty\t2.5\n");
  const std::string manifest =
      write_temp(dir, "manifest.json", R"([{"name":"only","file":"only.tsv"}])");
  const StsDataset ds = simcse::data::load_sts(manifest);
  REQUIRE(ds.subsets.size() == 1);
  CHECK(ds.subsets[0].examples.size() == 1);
}

TEST_CASE("load_sts rejects out-of-range or malformed scores and empty subsets") {
  const auto dir = fresh_dir("sts_bad");
  write_temp(dir, "high.tsv", "a\tb\t5.1\n");
  const std::string high =
      write_temp(dir, "m1.json", R"({"subsets":[{"name":"high","file":"high.tsv"}]})");
  CHECK_THROWS_AS(simcse::data::load_sts(high), simcse::ScoreOutOfRangeError);

  write_temp(dir, "neg.tsv", "a\tb\t-0.25\n");
  const std::string neg =
      write_temp(dir, "m2.json", R"({"subsets":[{"name":"neg","file":"neg.tsv"}]})");
  CHECK_THROWS_AS(simcse::data::load_sts(neg), simcse::ScoreOutOfRangeError);

  write_temp(dir, "word.tsv", "a\tb\thigh\n");
  const std::string word =
      write_temp(dir, "m3.json", R"({"subsets":[{"name":"word","file":"word.tsv"}]})");
  CHECK_THROWS_AS(simcse::data::load_sts(word), simcse::ScoreOutOfRangeError);

  write_temp(dir, "void.tsv", "\n");
  const std::string void_manifest =
      write_temp(dir, "m4.json", R"({"subsets":[{"name":"void","file":"void.tsv"}]})");
  CHECK_THROWS_AS(simcse::data::load_sts(void_manifest), simcse::EmptyCorpusError);

  const std::string broken = write_temp(dir, "m5.json", "{nope");
  CHECK_THROWS_AS(simcse::data::load_sts(broken), simcse::IoError);
}

TEST_CASE("save_sts then load_sts round-trips names, texts, and scores") {
  const auto dir = fresh_dir("sts_round");
  StsDataset ds;
  StsSubset a;
  a.name = "alpha";
  a.examples.push_back({"the cat", "a cat", 4.75});
  a.examples.push_back({"dog", "train", 0.5});
  StsSubset b;
  b.name = "beta";
  b.examples.push_back({"x y z", "x y", 3.0});
  ds.subsets = {a, b};

  const std::string manifest = (dir / "manifest.json").string();
  simcse::data::save_sts(ds, manifest);
  const StsDataset back = simcse::data::load_sts(manifest);
  REQUIRE(back.subsets.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.subsets[i].name == ds.subsets[i].name);
    REQUIRE(back.subsets[i].examples.size() == ds.subsets[i].examples.size());
    for (std::size_t j = 0; j < ds.subsets[i].examples.size(); ++j) {
      CHECK(back.subsets[i].examples[j].s1 == ds.subsets[i].examples[j].s1);
      CHECK(back.subsets[i].examples[j].s2 == ds.subsets[i].examples[j].s2);
      CHECK(back.subsets[i].examples[j].gold == ds.subsets[i].examples[j].gold);
    }
  }
}

TEST_CASE("save_vocab then load_vocab restores the exact mapping") {
  const auto dir = fresh_dir("vocab_round");
  const std::string corpus_path = write_temp(dir, "c.txt", "walk run swim\nrun fly\n");
  const simcse::Corpus corpus = simcse::data::load_corpus(corpus_path);
  const std::string vocab_path = (dir / "vocab.json").string();
  simcse::data::save_vocab(corpus.vocab, vocab_path);
  const Vocab back = simcse::data::load_vocab(vocab_path);
  CHECK(back.to_token == corpus.vocab.to_token);
  CHECK(back.to_id == corpus.vocab.to_id);
}

TEST_CASE("load_vocab rejects sparse ids and missing reserved entries") {
  const auto dir = fresh_dir("vocab_bad");
  const std::string sparse =
      write_temp(dir, "sparse.json", R"({"<pad>":0,"<bos>":1,"<unk>":2,"a":4})");
  CHECK_THROWS_AS(simcse::data::load_vocab(sparse), simcse::IoError);
  const std::string unreserved = write_temp(dir, "unres.json", R"({"a":0,"b":1,"c":2})");
  CHECK_THROWS_AS(simcse::data::load_vocab(unreserved), simcse::IoError);
}

TEST_CASE("gen_toy_corpus emits cluster-major sentences with pinned probe sizes") {
  const auto toy = simcse::data::gen_toy_corpus(11, 8, 250, 256, {5, 10});
  CHECK(toy.sentences.size() == 2000);
  CHECK(toy.cluster_of.size() == 2000);
  for (int i = 0; i < 2000; ++i) CHECK(toy.cluster_of[static_cast<std::size_t>(i)] == i / 250);
  CHECK(toy.paraphrase_pairs.size() == 1000);
  CHECK(toy.triplets.size() == 1000);
  REQUIRE(toy.probes.subsets.size() == 2);
  CHECK(toy.probes.subsets[0].name == "probe_a");
  CHECK(toy.probes.subsets[0].examples.size() == 192);
  CHECK(toy.probes.subsets[1].name == "probe_b");
  CHECK(toy.probes.subsets[1].examples.size() == 320);
  for (const auto& subset : toy.probes.subsets) {
    for (const auto& ex : subset.examples) {
      CHECK((ex.gold == 0.0 || ex.gold == 5.0));
    }
  }
}

TEST_CASE("gen_toy_corpus is deterministic in the seed") {
  const auto a = simcse::data::gen_toy_corpus(3, 4, 12, 64, {4, 9});
  const auto b = simcse::data::gen_toy_corpus(3, 4, 12, 64, {4, 9});
  const auto c = simcse::data::gen_toy_corpus(4, 4, 12, 64, {4, 9});
  CHECK(a.sentences == b.sentences);
  CHECK(a.paraphrase_pairs == b.paraphrase_pairs);
  CHECK(a.triplets == b.triplets);
  CHECK(a.sentences != c.sentences);
}

TEST_CASE("gen_toy_corpus validates sizes and pairs stay within clusters") {
  CHECK_THROWS_AS(simcse::data::gen_toy_corpus(1, 8, 10, 31, {5, 10}),
                  simcse::VocabTooSmallError);
  CHECK_THROWS_AS(simcse::data::gen_toy_corpus(1, 0, 10, 64, {5, 10}), simcse::DimMismatchError);
  CHECK_THROWS_AS(simcse::data::gen_toy_corpus(1, 4, 10, 64, {6, 5}), simcse::DimMismatchError);

  const auto toy = simcse::data::gen_toy_corpus(9, 5, 20, 64, {5, 8});
  std::set<int> used;
  for (const auto& [x, y] : toy.paraphrase_pairs) {
    CHECK(toy.cluster_of[static_cast<std::size_t>(x)] == toy.cluster_of[static_cast<std::size_t>(y)]);
    CHECK(used.insert(x).second);
    CHECK(used.insert(y).second);
  }
  for (const auto& [a, p, n] : toy.triplets) {
    CHECK(toy.cluster_of[static_cast<std::size_t>(a)] == toy.cluster_of[static_cast<std::size_t>(p)]);
    CHECK(toy.cluster_of[static_cast<std::size_t>(a)] != toy.cluster_of[static_cast<std::size_t>(n)]);
  }
}

TEST_CASE("toy same-cluster lexical overlap exceeds cross-cluster overlap") {
  const auto toy = simcse::data::gen_toy_corpus(21, 4, 40, 128, {6, 10});
  Vocab vocab = Vocab::with_reserved();
  std::vector<Sentence> encoded;
  for (const auto& text : toy.sentences) {
    std::vector<std::string> words = simcse::tokenize(text);
    Sentence s;
    for (const auto& w : words) s.push_back(vocab.add(w));
    encoded.push_back(std::move(s));
  }
  double same_sum = 0.0;
  int same_n = 0;
  double cross_sum = 0.0;
  int cross_n = 0;
  for (std::size_t i = 0; i < encoded.size(); i += 7) {
    for (std::size_t j = i + 1; j < encoded.size(); j += 11) {
      const double f1 = simcse::augment::lexical_overlap_f1(encoded[i], encoded[j]);
      if (toy.cluster_of[i] == toy.cluster_of[j]) {
        same_sum += f1;
        ++same_n;
      } else {
        cross_sum += f1;
        ++cross_n;
      }
    }
  }
  REQUIRE(same_n > 0);
  REQUIRE(cross_n > 0);
  CHECK(same_sum / same_n > cross_sum / cross_n + 0.1);
}

TEST_CASE("load_synonyms keeps only in-vocab keys") {
  const auto dir = fresh_dir("syn");
  const std::string corpus_path = write_temp(dir, "c.txt", "big large huge small\n");
  const simcse::Corpus corpus = simcse::data::load_corpus(corpus_path);
  const std::string path = write_temp(
      dir, "syn.json", R"({"big":["large","huge"],"small":["tiny"],"ghost":["phantom"]})");
  const simcse::SynonymTable table = simcse::data::load_synonyms(path, corpus.vocab);
  REQUIRE(table.size() == 2);
  const auto& big = table.at(corpus.vocab.lookup("big"));
  CHECK(big == std::vector<int>{corpus.vocab.lookup("large"), corpus.vocab.lookup("huge")});
  CHECK(table.at(corpus.vocab.lookup("small")) == std::vector<int>{Vocab::kUnkId});
  CHECK(table.count(Vocab::kUnkId) == 0);
}

TEST_CASE("write_file_atomic replaces content without leaving temp files") {
  const auto dir = fresh_dir("atomic");
  const std::string path = (dir / "out.txt").string();
  simcse::io::write_file_atomic(path, "one");
  simcse::io::write_file_atomic(path, "two");
  CHECK(simcse::io::read_file(path) == "two");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++entries;
  CHECK(entries == 1);
}
