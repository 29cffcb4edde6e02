#include "hatsc/decode.hpp"

#include <algorithm>
#include <cmath>

#include "hatsc/errors.hpp"
#include "hatsc/ops.hpp"
#include "hatsc/tokenizer.hpp"

namespace hatsc {

namespace {

// Row-wise log-softmax in double precision.
std::vector<double> log_probs(const float* row, int v) {
  double mx = row[0];
  for (int i = 1; i < v; ++i) mx = std::max(mx, static_cast<double>(row[i]));
  double z = 0.0;
  for (int i = 0; i < v; ++i) z += std::exp(static_cast<double>(row[i]) - mx);
  const double log_z = mx + std::log(z);
  std::vector<double> out(static_cast<size_t>(v));
  for (int i = 0; i < v; ++i) out[static_cast<size_t>(i)] = static_cast<double>(row[i]) - log_z;
  return out;
}

double norm_score(double logprob, size_t emitted, bool finished) {
  // Emitted length counts the EOS step for finished beams; never below 1.
  const size_t len = std::max<size_t>(1, emitted + (finished ? 1 : 0));
  return logprob / static_cast<double>(len);
}

struct Beam {
  std::vector<int> ids;  // without BOS/EOS
  double logprob = 0.0;
  bool finished = false;
  bool truncated = false;
};

int resolve_max_len(const HATModel& model, int max_len) {
  const int cap = model.config().max_positions - 1;  // prefix holds BOS + emitted ids
  if (max_len == 0) return cap;
  if (max_len < 1 || max_len > cap) {
    throw UsageError("decode: max_len " + std::to_string(max_len) + " outside 1.." +
                     std::to_string(cap));
  }
  return max_len;
}

}  // namespace

std::vector<DecodeResult> decode_beam_all(HATModel& model, const Sample& sample, int beam_width,
                                          int max_len) {
  if (beam_width < 1) throw UsageError("decode: beam width must be at least 1");
  const int cap = resolve_max_len(model, max_len);

  // Encode once; the memory rows are identical copies, one per beam slot.
  const Batch batch(static_cast<size_t>(beam_width), sample);
  EncodedT<float> enc = model.encode(batch, false);

  std::vector<Beam> beams{Beam{}};
  for (int step = 0; step < cap; ++step) {
    bool any_active = false;
    for (const Beam& b : beams) any_active |= !b.finished;
    if (!any_active) break;

    // Every active beam has exactly `step` emitted ids, so prefixes align;
    // finished and unused rows are padded and their logits ignored.
    std::vector<std::vector<int>> prefixes(
        static_cast<size_t>(beam_width),
        [&] {
          std::vector<int> filler{kBosId};
          filler.resize(static_cast<size_t>(step) + 1, kPadId);
          return filler;
        }());
    for (size_t i = 0; i < beams.size(); ++i) {
      if (beams[i].finished) continue;
      prefixes[i].resize(1);
      prefixes[i].insert(prefixes[i].end(), beams[i].ids.begin(), beams[i].ids.end());
    }

    Tensor logits = model.decode_step(enc, prefixes);
    const int v = logits.dim(1);

    struct Cand {
      double logprob;
      size_t beam;   // index into `beams`
      int token;     // -1 = carry a finished beam through unchanged
    };
    std::vector<Cand> cands;
    for (size_t i = 0; i < beams.size(); ++i) {
      if (beams[i].finished) {
        cands.push_back({beams[i].logprob, i, -1});
        continue;
      }
      const auto lp = log_probs(logits.data() + static_cast<int64_t>(i) * v, v);
      for (int t = 0; t < v; ++t) {
        cands.push_back({beams[i].logprob + lp[static_cast<size_t>(t)], i, t});
      }
    }
    // Highest logprob first; exact ties prefer the lower token id, then the
    // earlier beam, making the search fully deterministic.
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
      if (x.logprob != y.logprob) return x.logprob > y.logprob;
      if (x.token != y.token) return x.token < y.token;
      return x.beam < y.beam;
    });

    std::vector<Beam> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size()) == beam_width) break;
      if (c.token < 0) {
        next.push_back(beams[c.beam]);
      } else if (c.token == kEosId) {
        Beam b = beams[c.beam];
        b.logprob = c.logprob;
        b.finished = true;
        next.push_back(std::move(b));
      } else {
        Beam b = beams[c.beam];
        b.logprob = c.logprob;
        b.ids.push_back(c.token);
        next.push_back(std::move(b));
      }
    }
    beams = std::move(next);
  }

  for (Beam& b : beams) {
    if (!b.finished) b.truncated = true;
  }
  std::vector<DecodeResult> results;
  results.reserve(beams.size());
  for (const Beam& b : beams) {
    DecodeResult r;
    r.ids = b.ids;
    r.logprob = b.logprob;
    r.truncated = b.truncated;
    r.score = norm_score(b.logprob, b.ids.size(), b.finished);
    results.push_back(std::move(r));
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const DecodeResult& a, const DecodeResult& b) { return a.score > b.score; });
  return results;
}

DecodeResult decode_beam(HATModel& model, const Sample& sample, int beam_width, int max_len) {
  return decode_beam_all(model, sample, beam_width, max_len).front();
}

std::vector<DecodeResult> decode_greedy(HATModel& model, const std::vector<Sample>& samples,
                                        int max_len) {
  if (samples.empty()) throw UsageError("decode: no samples");
  const int cap = resolve_max_len(model, max_len);
  const size_t b = samples.size();

  EncodedT<float> enc = model.encode(samples, false);
  std::vector<DecodeResult> results(b);
  std::vector<std::vector<int>> prefixes(b, std::vector<int>{kBosId});
  std::vector<char> done(b, 0);

  for (int step = 0; step < cap; ++step) {
    if (std::all_of(done.begin(), done.end(), [](char c) { return c != 0; })) break;
    Tensor logits = model.decode_step(enc, prefixes);
    const int v = logits.dim(1);
    for (size_t i = 0; i < b; ++i) {
      if (done[i]) {
        prefixes[i].push_back(kPadId);  // keep prefix lengths aligned
        continue;
      }
      const auto lp = log_probs(logits.data() + static_cast<int64_t>(i) * v, v);
      int best = 0;
      for (int t = 1; t < v; ++t) {
        if (lp[static_cast<size_t>(t)] > lp[static_cast<size_t>(best)]) best = t;
      }
      results[i].logprob += lp[static_cast<size_t>(best)];
      if (best == kEosId) {
        done[i] = 1;
        prefixes[i].push_back(kPadId);
      } else {
        results[i].ids.push_back(best);
        prefixes[i].push_back(best);
      }
    }
  }

  for (size_t i = 0; i < b; ++i) {
    results[i].truncated = !done[i];
    results[i].score = norm_score(results[i].logprob, results[i].ids.size(), done[i] != 0);
  }
  return results;
}

}  // namespace hatsc
