#include "simcse/embed.hpp"

#include <algorithm>
#include <cstring>

#include "simcse/data.hpp"
#include "simcse/errors.hpp"
#include "simcse/threads.hpp"

namespace simcse::embed {

TokenBatch make_token_batch(const std::vector<Sentence>& sentences, int max_len) {
  if (sentences.empty()) throw DimMismatchError("cannot pack an empty sentence list");
  if (max_len < 1) throw DimMismatchError("max_len must be at least 1");
  int width = 1;
  for (const Sentence& s : sentences) {
    width = std::max(width, std::min(max_len, static_cast<int>(s.size()) + 1));
  }
  TokenBatch batch(static_cast<int>(sentences.size()), width);
  for (int b = 0; b < batch.rows; ++b) {
    const Sentence& s = sentences[static_cast<std::size_t>(b)];
    const int len = std::min(max_len, static_cast<int>(s.size()) + 1);
    batch.lengths[static_cast<std::size_t>(b)] = len;
    batch.id(b, 0) = Vocab::kBosId;
    for (int t = 1; t < len; ++t) batch.id(b, t) = s[static_cast<std::size_t>(t - 1)];
  }
  return batch;
}

Mat encode_sentences(const EncoderModel& model, const std::vector<Sentence>& sentences) {
  Mat out(static_cast<int>(sentences.size()), model.config.d_model);
  const DropoutPlan plan{DropoutMode::none, 0};
  threads::parallel_chunks(static_cast<int>(sentences.size()), [&](int begin, int end) {
    const std::vector<Sentence> slice(sentences.begin() + begin, sentences.begin() + end);
    const TokenBatch batch = make_token_batch(slice, model.config.max_len);
    const Mat chunk = encoder::encode(model, batch, plan, Phase::eval);
    for (int b = 0; b < chunk.rows; ++b) {
      std::memcpy(out.row(begin + b).data(), chunk.row(b).data(),
                  sizeof(double) * static_cast<std::size_t>(chunk.cols));
    }
  });
  return out;
}

}  // namespace simcse::embed
