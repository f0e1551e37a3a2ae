#pragma once

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

namespace simcse {

/// Token-id sequence, at least one token, no padding ids (0) inside.
using Sentence = std::vector<int>;

/// Token id -> candidate replacement ids.
using SynonymTable = std::unordered_map<int, std::vector<int>>;

namespace augment {

// Every operator is a deterministic function of (input, seed).

/// Keeps a contiguous span of ceil((1 - k/100) * len) tokens with a uniformly
/// random start. k in [0, 100); k = 0 returns the input unchanged.
Sentence crop(const Sentence& s, double k_percent, std::uint64_t seed);

/// Deletes round(k/100 * len) distinct uniformly chosen positions (round half
/// away from zero), capped at len - 1 so the output stays non-empty. Survivor
/// order is preserved.
Sentence word_delete(const Sentence& s, double k_percent, std::uint64_t seed);

/// Removes exactly one uniformly chosen token. Throws TooShortError when the
/// sentence has fewer than two tokens.
Sentence delete_one_word(const Sentence& s, std::uint64_t seed);

/// Swaps one uniformly chosen replaceable position (a token with a non-empty
/// table entry) for a uniformly chosen synonym. Output length equals input
/// length. Throws NoReplaceableTokenError when nothing can be replaced.
Sentence synonym_replace(const Sentence& s, const SynonymTable& table, std::uint64_t seed);

/// For each sentence i < m-1 emits the index pair (i, j) with j drawn
/// uniformly from {i+1, ..., min(i+window, m-1)}. window = 1 is the plain
/// next-sentence pairing. Needs window >= 1 and at least two sentences.
std::vector<std::pair<int, int>> next_sentence_pairs(const std::vector<Sentence>& corpus,
                                                     int window, std::uint64_t seed);

/// F1 overlap of the two distinct-token sets: P = |A∩B|/|A|, R = |A∩B|/|B|,
/// F1 = 2PR/(P+R), and 0 when the intersection is empty. Symmetric.
double lexical_overlap_f1(const Sentence& a, const Sentence& b);

}  // namespace augment
}  // namespace simcse
