#pragma once

#include <string>
#include <vector>

#include "hatsc/model.hpp"

namespace hatsc {

struct DecodeResult {
  std::vector<int> ids;     // emitted token ids (BOS/EOS excluded)
  double logprob = 0.0;     // cumulative log-probability, EOS step included
  double score = 0.0;       // length-normalized logprob used for final ranking
  bool truncated = false;   // hit the length cap before emitting EOS
};

// Beam search over one sample's source streams (Sample::tgt is ignored).
// beam_width 1 reduces to greedy; probability ties break toward the lower
// token id, and the final ranking normalizes each beam's logprob by its
// emitted length. max_len 0 means the model's position limit.
DecodeResult decode_beam(HATModel& model, const Sample& sample, int beam_width, int max_len = 0);

// All surviving beams, best first (same ordering rule). Element 0 equals
// decode_beam's result.
std::vector<DecodeResult> decode_beam_all(HATModel& model, const Sample& sample, int beam_width,
                                          int max_len = 0);

// Batched greedy decoding for evaluation; one result per input sample.
// Identical, per sample, to decode_beam with beam_width 1.
std::vector<DecodeResult> decode_greedy(HATModel& model, const std::vector<Sample>& samples,
                                        int max_len = 0);

}  // namespace hatsc
