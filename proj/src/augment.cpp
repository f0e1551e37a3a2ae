#include "simcse/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "simcse/errors.hpp"
#include "simcse/rng.hpp"

namespace simcse::augment {
namespace {

enum OpTag : std::uint64_t { kCrop = 1, kWordDelete, kDeleteOne, kSynonym, kNextSentence };

void require_sentence(const Sentence& s) {
  if (s.empty()) throw TooShortError("sentence is empty");
  for (int id : s) {
    if (id == 0) throw DimMismatchError("padding id inside a sentence");
  }
}

void require_percent(double k) {
  if (!(k >= 0.0 && k < 100.0)) {
    throw DimMismatchError("k_percent must lie in [0, 100), got " + std::to_string(k));
  }
}

}  // namespace

Sentence crop(const Sentence& s, double k_percent, std::uint64_t seed) {
  require_sentence(s);
  require_percent(k_percent);
  const auto len = static_cast<long long>(s.size());
  const auto drop = static_cast<long long>(std::floor(k_percent * static_cast<double>(len) / 100.0));
  const long long keep = len - drop;
  rng::Stream stream(rng::kDomainAugment, {seed, kCrop});
  const auto start = static_cast<long long>(stream.next_below(static_cast<std::uint64_t>(len - keep + 1)));
  return Sentence(s.begin() + start, s.begin() + start + keep);
}

Sentence word_delete(const Sentence& s, double k_percent, std::uint64_t seed) {
  require_sentence(s);
  require_percent(k_percent);
  const auto len = static_cast<long long>(s.size());
  long long count = std::lround(k_percent * static_cast<double>(len) / 100.0);
  count = std::min(count, len - 1);
  if (count <= 0) return s;

  // Partial Fisher-Yates draw of `count` distinct positions.
  std::vector<long long> idx(static_cast<std::size_t>(len));
  for (long long i = 0; i < len; ++i) idx[static_cast<std::size_t>(i)] = i;
  rng::Stream stream(rng::kDomainAugment, {seed, kWordDelete});
  std::set<long long> doomed;
  for (long long i = 0; i < count; ++i) {
    const auto j = i + static_cast<long long>(stream.next_below(static_cast<std::uint64_t>(len - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    doomed.insert(idx[static_cast<std::size_t>(i)]);
  }
  Sentence out;
  out.reserve(static_cast<std::size_t>(len - count));
  for (long long i = 0; i < len; ++i) {
    if (!doomed.count(i)) out.push_back(s[static_cast<std::size_t>(i)]);
  }
  return out;
}

Sentence delete_one_word(const Sentence& s, std::uint64_t seed) {
  require_sentence(s);
  if (s.size() < 2) throw TooShortError("need at least two tokens to delete one");
  rng::Stream stream(rng::kDomainAugment, {seed, kDeleteOne});
  const auto pos = static_cast<std::size_t>(stream.next_below(s.size()));
  Sentence out = s;
  out.erase(out.begin() + static_cast<Sentence::difference_type>(pos));
  return out;
}

Sentence synonym_replace(const Sentence& s, const SynonymTable& table, std::uint64_t seed) {
  require_sentence(s);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto it = table.find(s[i]);
    if (it != table.end() && !it->second.empty()) candidates.push_back(i);
  }
  if (candidates.empty()) throw NoReplaceableTokenError("no token has a synonym entry");
  rng::Stream stream(rng::kDomainAugment, {seed, kSynonym});
  const std::size_t pos = candidates[static_cast<std::size_t>(stream.next_below(candidates.size()))];
  const std::vector<int>& options = table.at(s[pos]);
  Sentence out = s;
  out[pos] = options[static_cast<std::size_t>(stream.next_below(options.size()))];
  return out;
}

std::vector<std::pair<int, int>> next_sentence_pairs(const std::vector<Sentence>& corpus,
                                                     int window, std::uint64_t seed) {
  if (window < 1) throw DimMismatchError("window must be at least 1");
  const int m = static_cast<int>(corpus.size());
  if (m < 2) throw EmptyCorpusError("need at least two sentences for next-sentence pairs");
  rng::Stream stream(rng::kDomainAugment, {seed, kNextSentence});
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(m - 1));
  for (int i = 0; i + 1 < m; ++i) {
    const int span = std::min(window, m - 1 - i);
    const int j = i + 1 + static_cast<int>(stream.next_below(static_cast<std::uint64_t>(span)));
    out.emplace_back(i, j);
  }
  return out;
}

double lexical_overlap_f1(const Sentence& a, const Sentence& b) {
  require_sentence(a);
  require_sentence(b);
  const std::set<int> sa(a.begin(), a.end());
  const std::set<int> sb(b.begin(), b.end());
  std::size_t common = 0;
  for (int id : sa) common += sb.count(id);
  if (common == 0) return 0.0;
  const double p = static_cast<double>(common) / static_cast<double>(sa.size());
  const double r = static_cast<double>(common) / static_cast<double>(sb.size());
  return 2.0 * p * r / (p + r);
}

}  // namespace simcse::augment
