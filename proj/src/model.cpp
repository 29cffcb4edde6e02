#include "hatsc/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "hatsc/errors.hpp"
#include "hatsc/tokenizer.hpp"

namespace hatsc {

void ModelConfig::validate() const {
  if (streams < 1 || streams > 3) {
    throw UsageError("model config: streams must be 1..3, got " + std::to_string(streams));
  }
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
    throw UsageError("model config: d_model " + std::to_string(d_model) +
                     " must be a positive multiple of n_heads " + std::to_string(n_heads));
  }
  if (d_ff <= 0) throw UsageError("model config: d_ff must be positive");
  if (n_layers < 1) throw UsageError("model config: n_layers must be at least 1");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw UsageError("model config: dropout " + std::to_string(dropout) + " outside [0, 1)");
  }
  if (max_positions < 2) throw UsageError("model config: max_positions must be at least 2");
  if (src_vocab_sizes.size() != static_cast<size_t>(streams)) {
    throw UsageError("model config: need one source vocab size per stream");
  }
  for (int v : src_vocab_sizes) {
    if (v <= kSepId) throw UsageError("model config: source vocab too small for reserved ids");
  }
  if (tgt_vocab_size <= kSepId) {
    throw UsageError("model config: target vocab too small for reserved ids");
  }
}

namespace {

// Additive attention mask: 1 marks a forbidden (query, key) slot.
template <class R>
TensorT<R> make_mask(int batch, int heads, int lq, int lk,
                     const std::function<bool(int b, int q, int k)>& banned) {
  std::vector<R> m(static_cast<size_t>(batch) * heads * lq * lk, R(0));
  size_t i = 0;
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      for (int q = 0; q < lq; ++q) {
        for (int k = 0; k < lk; ++k, ++i) {
          if (banned(b, q, k)) m[i] = R(1);
        }
      }
    }
  }
  return TensorT<R>({batch, heads, lq, lk}, std::move(m));
}

}  // namespace

template <class R>
TensorT<R> HATModelT<R>::make_param(const std::string& name, Shape shape, Init init) {
  TensorT<R> t(shape);
  R* d = t.data();
  const int64_t n = t.size();
  switch (init) {
    case Init::kXavier: {
      const double fan_in = shape[0], fan_out = shape[1];
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (int64_t i = 0; i < n; ++i) {
        d[i] = static_cast<R>((rng_.uniform() * 2.0 - 1.0) * limit);
      }
      break;
    }
    case Init::kEmbedding: {
      const double sd = 1.0 / std::sqrt(static_cast<double>(config_.d_model));
      for (int64_t i = 0; i < n; ++i) d[i] = static_cast<R>(rng_.normal() * sd);
      break;
    }
    case Init::kZero:
      break;
    case Init::kOne:
      for (int64_t i = 0; i < n; ++i) d[i] = R(1);
      break;
  }
  t.set_requires_grad(true);
  param_index_[name] = params_.size();
  params_.emplace_back(name, t);
  return t;
}

template <class R>
typename HATModelT<R>::AttnW HATModelT<R>::make_attn(const std::string& prefix) {
  const int d = config_.d_model;
  AttnW w;
  w.wq = make_param(prefix + ".wq", {d, d}, Init::kXavier);
  w.wk = make_param(prefix + ".wk", {d, d}, Init::kXavier);
  w.wv = make_param(prefix + ".wv", {d, d}, Init::kXavier);
  w.wo = make_param(prefix + ".wo", {d, d}, Init::kXavier);
  return w;
}

template <class R>
typename HATModelT<R>::LnW HATModelT<R>::make_ln(const std::string& prefix) {
  LnW w;
  w.gain = make_param(prefix + ".gain", {config_.d_model}, Init::kOne);
  w.bias = make_param(prefix + ".bias", {config_.d_model}, Init::kZero);
  return w;
}

template <class R>
typename HATModelT<R>::FfnW HATModelT<R>::make_ffn(const std::string& prefix) {
  const int d = config_.d_model, f = config_.d_ff;
  FfnW w;
  w.w1 = make_param(prefix + ".w1", {d, f}, Init::kXavier);
  w.b1 = make_param(prefix + ".b1", {f}, Init::kZero);
  w.w2 = make_param(prefix + ".w2", {f, d}, Init::kXavier);
  w.b2 = make_param(prefix + ".b2", {d}, Init::kZero);
  return w;
}

template <class R>
HATModelT<R>::HATModelT(ModelConfig config, uint64_t seed)
    : config_(std::move(config)), rng_(seed) {
  config_.validate();
  const int d = config_.d_model;

  positional_.resize(static_cast<size_t>(config_.max_positions) * d);
  for (int pos = 0; pos < config_.max_positions; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double exponent = static_cast<double>(i - (i % 2)) / d;
      const double angle = pos / std::pow(10000.0, exponent);
      positional_[static_cast<size_t>(pos) * d + i] =
          static_cast<R>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }

  for (int s = 0; s < config_.streams; ++s) {
    const std::string base = "enc" + std::to_string(s + 1);
    Encoder enc;
    enc.embed = make_param(base + ".embed", {config_.src_vocab_sizes[static_cast<size_t>(s)], d},
                           Init::kEmbedding);
    for (int l = 0; l < config_.n_layers; ++l) {
      const std::string lp = base + ".layer" + std::to_string(l);
      EncLayer layer;
      layer.self = make_attn(lp + ".self");
      layer.self_ln = make_ln(lp + ".self_ln");
      layer.ffn = make_ffn(lp + ".ffn");
      layer.ffn_ln = make_ln(lp + ".ffn_ln");
      enc.layers.push_back(std::move(layer));
    }
    encoders_.push_back(std::move(enc));
  }

  dec_embed_ = make_param("dec.embed", {config_.tgt_vocab_size, d}, Init::kEmbedding);
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string lp = "dec.layer" + std::to_string(l);
    DecLayer layer;
    layer.self = make_attn(lp + ".self");
    layer.self_ln = make_ln(lp + ".self_ln");
    for (int s = 0; s < config_.streams; ++s) {
      const std::string cp = lp + ".cross" + std::to_string(s + 1);
      layer.cross.push_back(make_attn(cp));
      layer.cross_ln.push_back(make_ln(cp + "_ln"));
    }
    layer.ffn = make_ffn(lp + ".ffn");
    layer.ffn_ln = make_ln(lp + ".ffn_ln");
    dec_layers_.push_back(std::move(layer));
  }
}

template <class R>
TensorT<R>& HATModelT<R>::parameter(const std::string& name) {
  auto it = param_index_.find(name);
  if (it == param_index_.end()) throw UsageError("model: no parameter named '" + name + "'");
  return params_[it->second].second;
}

template <class R>
int64_t HATModelT<R>::param_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

int64_t param_count_formula(const ModelConfig& config) {
  config.validate();
  const int64_t d = config.d_model, f = config.d_ff;
  const int64_t n = config.n_layers, s = config.streams;
  const int64_t attn = 4 * d * d;       // wq, wk, wv, wo
  const int64_t ln = 2 * d;             // gain + bias
  const int64_t ffn = 2 * d * f + f + d;  // w1, b1, w2, b2
  const int64_t enc_layer = attn + ln + ffn + ln;
  const int64_t dec_layer = (attn + ln) * (1 + s) + ffn + ln;  // self + per-stream cross
  int64_t total = 0;
  for (int v : config.src_vocab_sizes) total += static_cast<int64_t>(v) * d;  // embeddings
  total += s * n * enc_layer;
  total += static_cast<int64_t>(config.tgt_vocab_size) * d;  // tied with the output head
  total += n * dec_layer;
  return total;
}

template <class R>
TensorT<R> HATModelT<R>::embed(const TensorT<R>& table, const std::vector<int>& ids, int batch,
                               int len, bool train) {
  const int d = config_.d_model;
  TensorT<R> x = embedding_lookup(table, ids);
  x = reshape(x, {batch, len, d});
  x = scale(x, static_cast<R>(std::sqrt(static_cast<double>(d))));
  std::vector<R> pe(positional_.begin(), positional_.begin() + static_cast<size_t>(len) * d);
  x = add(x, TensorT<R>({len, d}, std::move(pe)));
  return dropout(x, config_.dropout, train, rng_);
}

template <class R>
TensorT<R> HATModelT<R>::mha(const AttnW& w, const TensorT<R>& q_in, const TensorT<R>& kv_in,
                             const TensorT<R>& mask, bool train) {
  const int d = config_.d_model, h = config_.n_heads, dk = d / h;
  const int batch = q_in.dim(0), lq = q_in.dim(1), lk = kv_in.dim(1);

  auto split = [&](const TensorT<R>& t, int l) {
    return transpose(reshape(t, {batch, l, h, dk}), 1, 2);  // [B, H, L, dk]
  };
  TensorT<R> q = split(matmul(q_in, w.wq), lq);
  TensorT<R> k = split(matmul(kv_in, w.wk), lk);
  TensorT<R> v = split(matmul(kv_in, w.wv), lk);

  TensorT<R> scores = matmul(q, transpose(k, 2, 3));
  scores = scale(scores, static_cast<R>(1.0 / std::sqrt(static_cast<double>(dk))));
  scores = masked_fill(scores, mask, R(-1e9));
  TensorT<R> attn = softmax(scores, -1);
  attn = dropout(attn, config_.dropout, train, rng_);

  TensorT<R> ctx = matmul(attn, v);                       // [B, H, Lq, dk]
  ctx = reshape(transpose(ctx, 1, 2), {batch, lq, d});    // [B, Lq, d]
  return matmul(ctx, w.wo);
}

template <class R>
TensorT<R> HATModelT<R>::residual_norm(const TensorT<R>& x, const TensorT<R>& sub_out,
                                       const LnW& ln, bool train) {
  TensorT<R> y = add(x, dropout(sub_out, config_.dropout, train, rng_));
  return layer_norm(y, ln.gain, ln.bias, R(1e-5));
}

template <class R>
TensorT<R> HATModelT<R>::ffn(const FfnW& w, const TensorT<R>& x) {
  TensorT<R> h = relu(add(matmul(x, w.w1), w.b1));
  return add(matmul(h, w.w2), w.b2);
}

template <class R>
EncodedT<R> HATModelT<R>::encode(const Batch& batch, bool train) {
  if (batch.empty()) throw UsageError("encode: empty batch");
  const int b = static_cast<int>(batch.size());
  EncodedT<R> out;
  out.batch = batch.size();

  for (int s = 0; s < config_.streams; ++s) {
    int ls = 0;
    for (const Sample& sample : batch) {
      if (sample.src.size() != static_cast<size_t>(config_.streams)) {
        throw UsageError("encode: sample has " + std::to_string(sample.src.size()) +
                         " source streams, model expects " + std::to_string(config_.streams));
      }
      const auto& seq = sample.src[static_cast<size_t>(s)];
      if (seq.empty()) throw DataError("encode: empty source sequence");
      ls = std::max(ls, static_cast<int>(seq.size()));
    }
    if (ls > config_.max_positions) {
      throw DataError("encode: source length " + std::to_string(ls) + " exceeds max positions " +
                      std::to_string(config_.max_positions));
    }

    std::vector<int> flat(static_cast<size_t>(b) * ls, kPadId);
    std::vector<std::vector<char>> pad(static_cast<size_t>(b), std::vector<char>(ls, 1));
    for (int i = 0; i < b; ++i) {
      const auto& seq = batch[static_cast<size_t>(i)].src[static_cast<size_t>(s)];
      for (size_t j = 0; j < seq.size(); ++j) {
        flat[static_cast<size_t>(i) * ls + j] = seq[j];
        pad[static_cast<size_t>(i)][j] = 0;
      }
    }

    TensorT<R> mask = make_mask<R>(
        b, config_.n_heads, ls, ls,
        [&pad](int bi, int /*q*/, int k) { return pad[static_cast<size_t>(bi)][static_cast<size_t>(k)] != 0; });

    TensorT<R> x = embed(encoders_[static_cast<size_t>(s)].embed, flat, b, ls, train);
    for (EncLayer& layer : encoders_[static_cast<size_t>(s)].layers) {
      x = residual_norm(x, mha(layer.self, x, x, mask, train), layer.self_ln, train);
      x = residual_norm(x, ffn(layer.ffn, x), layer.ffn_ln, train);
    }
    out.memory.push_back(std::move(x));
    out.src_pad.push_back(std::move(pad));
  }
  return out;
}

template <class R>
TensorT<R> HATModelT<R>::decoder_logits(const EncodedT<R>& enc, const std::vector<int>& flat_ids,
                                        const std::vector<std::vector<char>>& tgt_pad, int batch,
                                        int len, bool train) {
  TensorT<R> self_mask = make_mask<R>(
      batch, config_.n_heads, len, len, [&tgt_pad](int b, int q, int k) {
        return k > q || tgt_pad[static_cast<size_t>(b)][static_cast<size_t>(k)] != 0;
      });
  std::vector<TensorT<R>> cross_masks;
  for (int s = 0; s < config_.streams; ++s) {
    const auto& pad = enc.src_pad[static_cast<size_t>(s)];
    const int lk = static_cast<int>(pad[0].size());
    cross_masks.push_back(make_mask<R>(
        batch, config_.n_heads, len, lk, [&pad](int b, int /*q*/, int k) {
          return pad[static_cast<size_t>(b)][static_cast<size_t>(k)] != 0;
        }));
  }

  TensorT<R> x = embed(dec_embed_, flat_ids, batch, len, train);
  for (DecLayer& layer : dec_layers_) {
    x = residual_norm(x, mha(layer.self, x, x, self_mask, train), layer.self_ln, train);
    for (int s = 0; s < config_.streams; ++s) {
      x = residual_norm(x,
                        mha(layer.cross[static_cast<size_t>(s)], x,
                            enc.memory[static_cast<size_t>(s)],
                            cross_masks[static_cast<size_t>(s)], train),
                        layer.cross_ln[static_cast<size_t>(s)], train);
    }
    x = residual_norm(x, ffn(layer.ffn, x), layer.ffn_ln, train);
  }
  // Output projection shares weights with the target embedding.
  return matmul(x, transpose(dec_embed_, 0, 1));  // [B, Lt, V]
}

template <class R>
TensorT<R> HATModelT<R>::teacher_logits(const Batch& batch, bool train) {
  EncodedT<R> enc = encode(batch, train);
  const int b = static_cast<int>(batch.size());
  int lt = 0;
  for (const Sample& sample : batch) {
    if (sample.tgt.empty()) throw DataError("decode: empty target sequence");
    lt = std::max(lt, static_cast<int>(sample.tgt.size()));
  }
  if (lt > config_.max_positions) {
    throw DataError("decode: target length " + std::to_string(lt) + " exceeds max positions " +
                    std::to_string(config_.max_positions));
  }

  // Teacher forcing: input row is BOS + tgt without its trailing token,
  // aligned so position t predicts tgt[t].
  std::vector<int> flat(static_cast<size_t>(b) * lt, kPadId);
  std::vector<std::vector<char>> pad(static_cast<size_t>(b), std::vector<char>(lt, 1));
  for (int i = 0; i < b; ++i) {
    const auto& tgt = batch[static_cast<size_t>(i)].tgt;
    flat[static_cast<size_t>(i) * lt] = kBosId;
    pad[static_cast<size_t>(i)][0] = 0;
    for (size_t j = 1; j < tgt.size(); ++j) {
      flat[static_cast<size_t>(i) * lt + j] = tgt[j - 1];
      pad[static_cast<size_t>(i)][j] = 0;
    }
  }
  return decoder_logits(enc, flat, pad, b, lt, train);
}

template <class R>
TensorT<R> HATModelT<R>::forward_loss(const Batch& batch, bool train, double label_smoothing) {
  TensorT<R> logits = teacher_logits(batch, train);
  const int b = logits.dim(0), lt = logits.dim(1), v = logits.dim(2);
  std::vector<int> targets(static_cast<size_t>(b) * lt, kPadId);
  for (int i = 0; i < b; ++i) {
    const auto& tgt = batch[static_cast<size_t>(i)].tgt;
    for (size_t j = 0; j < tgt.size(); ++j) targets[static_cast<size_t>(i) * lt + j] = tgt[j];
  }
  return cross_entropy(reshape(logits, {b * lt, v}), targets, label_smoothing, kPadId);
}

template <class R>
TensorT<R> HATModelT<R>::decode_step(const EncodedT<R>& enc,
                                     const std::vector<std::vector<int>>& prefixes) {
  if (prefixes.empty()) throw UsageError("decode_step: no prefixes");
  if (prefixes.size() != enc.batch) {
    throw UsageError("decode_step: " + std::to_string(prefixes.size()) + " prefixes for batch of " +
                     std::to_string(enc.batch));
  }
  const size_t len = prefixes[0].size();
  if (len == 0) throw UsageError("decode_step: empty prefix");
  for (const auto& p : prefixes) {
    if (p.size() != len) throw UsageError("decode_step: prefixes must share one length");
  }
  if (static_cast<int>(len) > config_.max_positions) {
    throw UsageError("decode_step: prefix length " + std::to_string(len) +
                     " exceeds max positions " + std::to_string(config_.max_positions));
  }

  NoGradGuard guard;
  const int b = static_cast<int>(prefixes.size()), lt = static_cast<int>(len);
  std::vector<int> flat;
  flat.reserve(static_cast<size_t>(b) * len);
  for (const auto& p : prefixes) flat.insert(flat.end(), p.begin(), p.end());
  const std::vector<std::vector<char>> pad(static_cast<size_t>(b), std::vector<char>(len, 0));

  TensorT<R> logits = decoder_logits(enc, flat, pad, b, lt, false);
  const int v = logits.dim(2);
  std::vector<R> last(static_cast<size_t>(b) * v);
  const R* src = logits.data();
  for (int i = 0; i < b; ++i) {
    const R* row = src + (static_cast<size_t>(i) * lt + (len - 1)) * v;
    std::copy(row, row + v, last.begin() + static_cast<size_t>(i) * v);
  }
  return TensorT<R>({b, v}, std::move(last));
}

template class HATModelT<float>;
template class HATModelT<double>;

}  // namespace hatsc
