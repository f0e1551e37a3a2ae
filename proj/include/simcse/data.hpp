#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "simcse/augment.hpp"

namespace simcse {

/// Dense token table with three reserved slots. Stable across re-loads: ids
/// are assigned in first-occurrence order starting at 3.
struct Vocab {
  static constexpr int kPadId = 0;
  static constexpr int kBosId = 1;
  static constexpr int kUnkId = 2;

  std::unordered_map<std::string, int> to_id;
  std::vector<std::string> to_token;  // index = id

  /// Table holding only the reserved entries <pad>, <bos>, <unk>.
  static Vocab with_reserved();

  /// Id of the token, inserting it at the next dense id if new.
  int add(const std::string& token);

  /// Id of the token, or kUnkId when absent.
  int lookup(const std::string& token) const;

  int size() const { return static_cast<int>(to_token.size()); }
};

/// ASCII-lowercased whitespace tokens of one line. Empty for blank lines.
std::vector<std::string> tokenize(const std::string& line);

/// Token ids for the words, unknown words mapping to UNK. No BOS here; that
/// is prepended at encode time.
Sentence encode_tokens(const std::vector<std::string>& words, const Vocab& vocab);

struct Corpus {
  std::vector<Sentence> sentences;
  Vocab vocab;
};

/// Anchor with optional positive and hard negative. A hard negative implies
/// a positive.
struct TrainInstance {
  Sentence anchor;
  std::optional<Sentence> positive;
  std::optional<Sentence> hard_negative;
};

struct StsExample {
  std::string s1;
  std::string s2;
  double gold = 0.0;  // in [0, 5]
};

struct StsSubset {
  std::string name;
  std::vector<StsExample> examples;
};

struct StsDataset {
  std::vector<StsSubset> subsets;
};

namespace data {

/// One sentence per line, whitespace tokenization, lowercase folding, vocab
/// built in first-occurrence order after the reserved ids. Blank lines are
/// skipped. Throws EmptyCorpusError, IoError.
Corpus load_corpus(const std::string& path);

/// TSV with exactly premise, entailment and contradiction columns; unknown
/// tokens map to UNK. Rows are taken verbatim, one triplet per line.
/// Throws BadColumnCountError naming the line, TooShortError on an empty
/// field, IoError.
std::vector<TrainInstance> load_nli_triplets(const std::string& path, const Vocab& vocab);

/// Manifest JSON {"subsets": [{"name", "file"}]} (a bare list also parses);
/// files are TSV s1<TAB>s2<TAB>score resolved relative to the manifest.
/// Subsets keep manifest order and must be non-empty.
/// Throws ScoreOutOfRangeError, BadColumnCountError, EmptyCorpusError,
/// IoError.
StsDataset load_sts(const std::string& manifest_path);

/// Writes the manifest plus one "<name>.tsv" per subset next to it, scores
/// formatted with %.17g so a round-trip is lossless.
void save_sts(const StsDataset& dataset, const std::string& manifest_path);

/// Vocab as a JSON object token -> id (reserved entries included).
void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

/// Clustered synthetic corpus: text lines, cluster labels, same-cluster
/// paraphrase pairs, entailment/contradiction triplets and two STS-style
/// probe subsets of unequal size.
struct ToyData {
  std::vector<std::string> sentences;
  std::vector<int> cluster_of;
  std::vector<std::pair<int, int>> paraphrase_pairs;   // same-cluster index pairs
  std::vector<std::array<int, 3>> triplets;            // anchor, positive, negative
  StsDataset probes;                                   // gold 5 same cluster, 0 across
};

/// Deterministic per seed. Each cluster owns a disjoint topical pool;
/// a quarter of the vocabulary is shared function words; tokens are drawn
/// 80% topical / 20% shared. Needs vocab_size >= 4 * n_clusters (else
/// VocabTooSmallError).
ToyData gen_toy_corpus(std::uint64_t seed, int n_clusters, int per_cluster, int vocab_size,
                       std::pair<int, int> len_range);

/// Synonym table JSON {token: [token, ...]} mapped through the vocab;
/// entries whose key is unknown are dropped, unknown synonyms map to UNK.
SynonymTable load_synonyms(const std::string& path, const Vocab& vocab);

}  // namespace data
}  // namespace simcse
