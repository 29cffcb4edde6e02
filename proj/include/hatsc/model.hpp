#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hatsc/ops.hpp"
#include "hatsc/rng.hpp"
#include "hatsc/tensor.hpp"

namespace hatsc {

// Hierarchical attention transformer for sequence-to-sequence spelling
// correction: one character-n-gram encoder stack per stream (n = 1..streams)
// and a decoder whose layers cross-attend to every stream's memory in order.
struct ModelConfig {
  int streams = 3;     // number of encoder streams; 1 = plain single-encoder baseline
  int d_model = 256;   // residual width, must divide by n_heads
  int n_heads = 8;
  int d_ff = 512;      // feed-forward inner width
  int n_layers = 4;    // layers per encoder stack and in the decoder
  double dropout = 0.3;
  int max_positions = 128;              // hard cap on any sequence length
  std::vector<int> src_vocab_sizes;     // one per stream, reserved ids included
  int tgt_vocab_size = 0;

  void validate() const;  // throws UsageError on inconsistent settings
};

// One encoded example: per-stream source id sequences and the target id
// sequence, each already ending with the end-of-sequence id. Unpadded;
// batching pads with the pad id internally.
struct Sample {
  std::vector<std::vector<int>> src;  // [stream][source length]
  std::vector<int> tgt;               // [target length]

  bool operator==(const Sample&) const = default;
};
using Batch = std::vector<Sample>;

// Encoder output kept alive across decode steps.
template <class R>
struct EncodedT {
  std::vector<TensorT<R>> memory;               // per stream [B, Ls, d_model]
  std::vector<std::vector<std::vector<char>>> src_pad;  // [stream][B][Ls], 1 = pad slot
  size_t batch = 0;
};

template <class R>
class HATModelT {
 public:
  HATModelT(ModelConfig config, uint64_t seed);

  // Mean label-smoothed cross-entropy over non-pad target positions under
  // teacher forcing (decoder sees BOS + target, predicts target + EOS —
  // the trailing EOS is already part of Sample::tgt).
  TensorT<R> forward_loss(const Batch& batch, bool train, double label_smoothing);

  // Teacher-forced next-token logits, shape [B, Lt, V]. Row t holds the
  // distribution for target position t given BOS + tgt[0..t).
  TensorT<R> teacher_logits(const Batch& batch, bool train);

  // Encoder pass over the source streams (targets in `batch` are ignored).
  EncodedT<R> encode(const Batch& batch, bool train);

  // Next-token logits [B, V] for equal-length decoder prefixes (each prefix
  // starts with BOS). Forward-only: runs without recording gradients.
  TensorT<R> decode_step(const EncodedT<R>& enc,
                         const std::vector<std::vector<int>>& prefixes);

  const ModelConfig& config() const { return config_; }

  // Registry of all trainable tensors in creation order; names are stable
  // ("enc1.layer0.self.wq", "dec.embed", ...) and used by checkpoints and
  // the optimizer.
  std::vector<std::pair<std::string, TensorT<R>>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, TensorT<R>>>& parameters() const { return params_; }
  TensorT<R>& parameter(const std::string& name);  // UsageError on unknown name
  int64_t param_count() const;

  Rng& rng() { return rng_; }

 private:
  struct AttnW {
    TensorT<R> wq, wk, wv, wo;
  };
  struct LnW {
    TensorT<R> gain, bias;
  };
  struct FfnW {
    TensorT<R> w1, b1, w2, b2;
  };
  struct EncLayer {
    AttnW self;
    LnW self_ln;
    FfnW ffn;
    LnW ffn_ln;
  };
  struct DecLayer {
    AttnW self;
    LnW self_ln;
    std::vector<AttnW> cross;  // one per stream
    std::vector<LnW> cross_ln;
    FfnW ffn;
    LnW ffn_ln;
  };
  struct Encoder {
    TensorT<R> embed;
    std::vector<EncLayer> layers;
  };

  enum class Init { kXavier, kEmbedding, kZero, kOne };

  TensorT<R> make_param(const std::string& name, Shape shape, Init init);
  AttnW make_attn(const std::string& prefix);
  LnW make_ln(const std::string& prefix);
  FfnW make_ffn(const std::string& prefix);

  // ids: flat row-major [B*L]; returns scaled embeddings + positions,
  // dropout applied when train.
  TensorT<R> embed(const TensorT<R>& table, const std::vector<int>& ids, int batch, int len,
                   bool train);
  TensorT<R> mha(const AttnW& w, const TensorT<R>& q_in, const TensorT<R>& kv_in,
                 const TensorT<R>& mask, bool train);
  TensorT<R> residual_norm(const TensorT<R>& x, const TensorT<R>& sub_out, const LnW& ln,
                           bool train);
  TensorT<R> ffn(const FfnW& w, const TensorT<R>& x);

  // Decoder stack over already-padded inputs; returns logits [B, Lt, V].
  TensorT<R> decoder_logits(const EncodedT<R>& enc, const std::vector<int>& flat_ids,
                            const std::vector<std::vector<char>>& tgt_pad, int batch, int len,
                            bool train);

  ModelConfig config_;
  Rng rng_;
  std::vector<std::pair<std::string, TensorT<R>>> params_;
  std::unordered_map<std::string, size_t> param_index_;
  std::vector<R> positional_;  // [max_positions * d_model] sinusoidal table

  std::vector<Encoder> encoders_;
  TensorT<R> dec_embed_;
  std::vector<DecLayer> dec_layers_;
};

using HATModel = HATModelT<float>;
using HATModelD = HATModelT<double>;

// Closed-form parameter total for a configuration; always equals the
// enumerated count of a constructed model's registry.
int64_t param_count_formula(const ModelConfig& config);

}  // namespace hatsc
