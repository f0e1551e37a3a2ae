#include "simcse/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "simcse/errors.hpp"
#include "simcse/io.hpp"
#include "simcse/rng.hpp"

namespace simcse {

Vocab Vocab::with_reserved() {
  Vocab v;
  v.add("<pad>");
  v.add("<bos>");
  v.add("<unk>");
  return v;
}

int Vocab::add(const std::string& token) {
  auto [it, inserted] = to_id.try_emplace(token, static_cast<int>(to_token.size()));
  if (inserted) to_token.push_back(token);
  return it->second;
}

int Vocab::lookup(const std::string& token) const {
  auto it = to_id.find(token);
  return it == to_id.end() ? kUnkId : it->second;
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Sentence encode_tokens(const std::vector<std::string>& words, const Vocab& vocab) {
  Sentence out;
  out.reserve(words.size());
  for (const std::string& w : words) out.push_back(vocab.lookup(w));
  return out;
}

namespace data {
namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) {
    if (cur.back() == '\r') cur.pop_back();
    lines.push_back(std::move(cur));
  }
  return lines;
}

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == '\t') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_score(const std::string& raw, const std::string& where) {
  std::size_t lo = raw.find_first_not_of(" \r");
  std::size_t hi = raw.find_last_not_of(" \r");
  if (lo == std::string::npos) throw ScoreOutOfRangeError(where + ": empty score");
  const std::string field = raw.substr(lo, hi - lo + 1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ScoreOutOfRangeError(where + ": unparseable score '" + field + "'");
  }
  if (!(value >= 0.0 && value <= 5.0)) {
    throw ScoreOutOfRangeError(where + ": score " + field + " outside [0, 5]");
  }
  return value;
}

std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Corpus load_corpus(const std::string& path) {
  const std::string text = io::read_file(path);
  Corpus corpus;
  corpus.vocab = Vocab::with_reserved();
  for (const std::string& line : split_lines(text)) {
    const std::vector<std::string> words = tokenize(line);
    if (words.empty()) continue;
    Sentence s;
    s.reserve(words.size());
    for (const std::string& w : words) s.push_back(corpus.vocab.add(w));
    corpus.sentences.push_back(std::move(s));
  }
  if (corpus.sentences.empty()) throw EmptyCorpusError(path + " holds no sentences");
  return corpus;
}

std::vector<TrainInstance> load_nli_triplets(const std::string& path, const Vocab& vocab) {
  const std::string text = io::read_file(path);
  std::vector<TrainInstance> out;
  const std::vector<std::string> lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path + ":" + std::to_string(i + 1);
    const std::vector<std::string> fields = split_tsv(lines[i]);
    if (fields.size() != 3) {
      throw BadColumnCountError(where + ": expected 3 columns, got " +
                                std::to_string(fields.size()));
    }
    TrainInstance inst;
    Sentence* slots[3] = {nullptr, nullptr, nullptr};
    inst.positive.emplace();
    inst.hard_negative.emplace();
    slots[0] = &inst.anchor;
    slots[1] = &*inst.positive;
    slots[2] = &*inst.hard_negative;
    for (int f = 0; f < 3; ++f) {
      const std::vector<std::string> words = tokenize(fields[static_cast<std::size_t>(f)]);
      if (words.empty()) throw TooShortError(where + ": column " + std::to_string(f + 1) + " is empty");
      *slots[f] = encode_tokens(words, vocab);
    }
    out.push_back(std::move(inst));
  }
  return out;
}

StsDataset load_sts(const std::string& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest_path + ": bad manifest JSON: " + e.what());
  }
  nlohmann::json entries;
  if (manifest.is_array()) {
    entries = manifest;
  } else if (manifest.is_object() && manifest.contains("subsets")) {
    entries = manifest["subsets"];
  } else {
    throw IoError(manifest_path + ": manifest must be a list or hold a 'subsets' list");
  }

  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  StsDataset dataset;
  for (const auto& entry : entries) {
    if (!entry.is_object() || !entry.contains("name") || !entry.contains("file")) {
      throw IoError(manifest_path + ": each subset needs 'name' and 'file'");
    }
    StsSubset subset;
    subset.name = entry["name"].get<std::string>();
    const std::string file = (base / entry["file"].get<std::string>()).string();
    const std::vector<std::string> lines = split_lines(io::read_file(file));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const std::string where = file + ":" + std::to_string(i + 1);
      const std::vector<std::string> fields = split_tsv(lines[i]);
      if (fields.size() != 3) {
        throw BadColumnCountError(where + ": expected 3 columns, got " +
                                  std::to_string(fields.size()));
      }
      StsExample ex;
      ex.s1 = fields[0];
      ex.s2 = fields[1];
      ex.gold = parse_score(fields[2], where);
      subset.examples.push_back(std::move(ex));
    }
    if (subset.examples.empty()) throw EmptyCorpusError(file + " holds no examples");
    dataset.subsets.push_back(std::move(subset));
  }
  return dataset;
}

void save_sts(const StsDataset& dataset, const std::string& manifest_path) {
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  nlohmann::json entries = nlohmann::json::array();
  for (const StsSubset& subset : dataset.subsets) {
    const std::string file = subset.name + ".tsv";
    std::string body;
    for (const StsExample& ex : subset.examples) {
      body += ex.s1;
      body += '\t';
      body += ex.s2;
      body += '\t';
      body += format_score(ex.gold);
      body += '\n';
    }
    io::write_file_atomic((base / file).string(), body);
    entries.push_back({{"name", subset.name}, {"file", file}});
  }
  const nlohmann::json manifest = {{"subsets", entries}};
  io::write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  nlohmann::json obj = nlohmann::json::object();
  for (int id = 0; id < vocab.size(); ++id) {
    obj[vocab.to_token[static_cast<std::size_t>(id)]] = id;
  }
  io::write_file_atomic(path, obj.dump(2) + "\n");
}

Vocab load_vocab(const std::string& path) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad vocab JSON: " + e.what());
  }
  if (!obj.is_object()) throw IoError(path + ": vocab must be a JSON object");
  Vocab v;
  v.to_token.assign(obj.size(), "");
  for (const auto& [token, id_json] : obj.items()) {
    if (!id_json.is_number_integer()) throw IoError(path + ": non-integer id for '" + token + "'");
    const int id = id_json.get<int>();
    if (id < 0 || id >= static_cast<int>(obj.size()) ||
        !v.to_token[static_cast<std::size_t>(id)].empty()) {
      throw IoError(path + ": ids are not dense");
    }
    v.to_token[static_cast<std::size_t>(id)] = token;
    v.to_id[token] = id;
  }
  if (v.size() < 3 || v.to_token[0] != "<pad>" || v.to_token[1] != "<bos>" ||
      v.to_token[2] != "<unk>") {
    throw IoError(path + ": reserved entries <pad>/<bos>/<unk> missing");
  }
  return v;
}

ToyData gen_toy_corpus(std::uint64_t seed, int n_clusters, int per_cluster, int vocab_size,
                       std::pair<int, int> len_range) {
  if (n_clusters < 1 || per_cluster < 1) {
    throw DimMismatchError("n_clusters and per_cluster must be positive");
  }
  if (vocab_size < 4 * n_clusters) {
    throw VocabTooSmallError("vocab_size " + std::to_string(vocab_size) + " below 4*n_clusters = " +
                             std::to_string(4 * n_clusters));
  }
  if (len_range.first < 1 || len_range.second < len_range.first) {
    throw DimMismatchError("len_range must satisfy 1 <= lo <= hi");
  }

  std::vector<std::string> words(static_cast<std::size_t>(vocab_size));
  for (int i = 0; i < vocab_size; ++i) words[static_cast<std::size_t>(i)] = "w" + std::to_string(i);
  const int shared = vocab_size / 4;
  const int per_pool = (vocab_size - shared) / n_clusters;

  rng::Stream st(rng::kDomainToy, {seed});
  ToyData toy;

  auto topical = [&](int cluster, int k) { return words[static_cast<std::size_t>(shared + cluster * per_pool + k)]; };

  for (int c = 0; c < n_clusters; ++c) {
    for (int s = 0; s < per_cluster; ++s) {
      const int len = len_range.first +
                      static_cast<int>(st.next_below(
                          static_cast<std::uint64_t>(len_range.second - len_range.first + 1)));
      std::string line;
      for (int t = 0; t < len; ++t) {
        if (!line.empty()) line += ' ';
        if (st.next_u01() < 0.8) {
          line += topical(c, static_cast<int>(st.next_below(static_cast<std::uint64_t>(per_pool))));
        } else {
          line += words[static_cast<std::size_t>(st.next_below(static_cast<std::uint64_t>(shared)))];
        }
      }
      toy.sentences.push_back(std::move(line));
      toy.cluster_of.push_back(c);
    }
  }

  // Disjoint same-cluster pairs from a per-cluster shuffle.
  for (int c = 0; c < n_clusters; ++c) {
    std::vector<int> idx(static_cast<std::size_t>(per_cluster));
    for (int s = 0; s < per_cluster; ++s) idx[static_cast<std::size_t>(s)] = c * per_cluster + s;
    for (int s = per_cluster - 1; s > 0; --s) {
      const int j = static_cast<int>(st.next_below(static_cast<std::uint64_t>(s + 1)));
      std::swap(idx[static_cast<std::size_t>(s)], idx[static_cast<std::size_t>(j)]);
    }
    for (int s = 0; s + 1 < per_cluster; s += 2) {
      toy.paraphrase_pairs.emplace_back(idx[static_cast<std::size_t>(s)],
                                        idx[static_cast<std::size_t>(s + 1)]);
    }
  }

  if (n_clusters >= 2) {
    for (const auto& [a, b] : toy.paraphrase_pairs) {
      const int c = toy.cluster_of[static_cast<std::size_t>(a)];
      const int other =
          (c + 1 + static_cast<int>(st.next_below(static_cast<std::uint64_t>(n_clusters - 1)))) %
          n_clusters;
      const int neg = other * per_cluster + static_cast<int>(st.next_below(static_cast<std::uint64_t>(per_cluster)));
      toy.triplets.push_back({a, b, neg});
    }
  }

  auto draw_pair = [&](bool same) {
    int i = 0;
    int j = 0;
    if (same || n_clusters == 1) {
      const int c = static_cast<int>(st.next_below(static_cast<std::uint64_t>(n_clusters)));
      i = c * per_cluster + static_cast<int>(st.next_below(static_cast<std::uint64_t>(per_cluster)));
      j = c * per_cluster + static_cast<int>(st.next_below(static_cast<std::uint64_t>(per_cluster)));
      while (per_cluster > 1 && j == i) {
        j = c * per_cluster + static_cast<int>(st.next_below(static_cast<std::uint64_t>(per_cluster)));
      }
    } else {
      const int c1 = static_cast<int>(st.next_below(static_cast<std::uint64_t>(n_clusters)));
      const int c2 =
          (c1 + 1 + static_cast<int>(st.next_below(static_cast<std::uint64_t>(n_clusters - 1)))) %
          n_clusters;
      i = c1 * per_cluster + static_cast<int>(st.next_below(static_cast<std::uint64_t>(per_cluster)));
      j = c2 * per_cluster + static_cast<int>(st.next_below(static_cast<std::uint64_t>(per_cluster)));
    }
    return std::pair<int, int>{i, j};
  };

  for (const auto& [name, count] : {std::pair<const char*, int>{"probe_a", 192},
                                    std::pair<const char*, int>{"probe_b", 320}}) {
    StsSubset subset;
    subset.name = name;
    for (int k = 0; k < count; ++k) {
      const bool same = st.next_u01() < 0.5;
      const auto [i, j] = draw_pair(same);
      StsExample ex;
      ex.s1 = toy.sentences[static_cast<std::size_t>(i)];
      ex.s2 = toy.sentences[static_cast<std::size_t>(j)];
      const bool same_cluster =
          toy.cluster_of[static_cast<std::size_t>(i)] == toy.cluster_of[static_cast<std::size_t>(j)];
      ex.gold = same_cluster ? 5.0 : 0.0;
      subset.examples.push_back(std::move(ex));
    }
    toy.probes.subsets.push_back(std::move(subset));
  }
  return toy;
}

SynonymTable load_synonyms(const std::string& path, const Vocab& vocab) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad synonym JSON: " + e.what());
  }
  if (!obj.is_object()) throw IoError(path + ": synonym table must be a JSON object");
  SynonymTable table;
  for (const auto& [token, list] : obj.items()) {
    auto it = vocab.to_id.find(token);
    if (it == vocab.to_id.end()) continue;
    if (!list.is_array()) throw IoError(path + ": synonyms for '" + token + "' must be a list");
    std::vector<int> ids;
    for (const auto& syn : list) ids.push_back(vocab.lookup(syn.get<std::string>()));
    if (!ids.empty()) table[it->second] = std::move(ids);
  }
  return table;
}

}  // namespace data
}  // namespace simcse
