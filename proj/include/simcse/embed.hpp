#pragma once

#include <vector>

#include "simcse/augment.hpp"
#include "simcse/encoder.hpp"

namespace simcse::embed {

/// Packs sentences into a padded TokenBatch: a BOS token is prepended to each
/// row and rows longer than max_len are truncated to max_len tokens. Width is
/// the longest packed row. Throws DimMismatchError on an empty sentence list.
TokenBatch make_token_batch(const std::vector<Sentence>& sentences, int max_len);

/// Eval-phase embeddings (no dropout), one row per sentence. Work is split
/// into contiguous chunks capped by SIMCSE_KIT_THREADS; chunk boundaries do
/// not change the result because rows encode independently and padding cells
/// are never read.
Mat encode_sentences(const EncoderModel& model, const std::vector<Sentence>& sentences);

}  // namespace simcse::embed
