#include "hatsc/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <unordered_set>

#include "hatsc/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace hatsc {
namespace ckpt_detail {

namespace {
constexpr char kMagic[4] = {'H', 'A', 'T', '1'};
constexpr uint32_t kVersion = 1;

void write_raw(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_raw(std::istream& in, void* p, size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw DataError(std::string("checkpoint: truncated while reading ") + what);
  }
}
}  // namespace

void write_u32(std::ostream& out, uint32_t v) { write_raw(out, &v, 4); }
void write_u64(std::ostream& out, uint64_t v) { write_raw(out, &v, 8); }
void write_f64(std::ostream& out, double v) { write_raw(out, &v, 8); }

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  write_raw(out, s.data(), s.size());
}

uint32_t read_u32(std::istream& in, const char* what) {
  uint32_t v;
  read_raw(in, &v, 4, what);
  return v;
}

uint64_t read_u64(std::istream& in, const char* what) {
  uint64_t v;
  read_raw(in, &v, 8, what);
  return v;
}

double read_f64(std::istream& in, const char* what) {
  double v;
  read_raw(in, &v, 8, what);
  return v;
}

std::string read_string(std::istream& in, const char* what) {
  const uint32_t n = read_u32(in, what);
  if (n > 1u << 20) throw DataError(std::string("checkpoint: implausible string length in ") + what);
  std::string s(n, '\0');
  read_raw(in, s.data(), n, what);
  return s;
}

void write_tensor_block(std::ostream& out,
                        const std::vector<std::pair<std::string, Tensor>>& tensors) {
  write_u32(out, static_cast<uint32_t>(tensors.size()));
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    write_string(out, name);
    write_u32(out, static_cast<uint32_t>(t.rank()));
    for (int d : t.shape()) write_u32(out, static_cast<uint32_t>(d));
    write_u64(out, offset);
    offset += static_cast<uint64_t>(t.size()) * sizeof(float);
  }
  write_u64(out, offset);  // payload size in bytes
  for (const auto& [name, t] : tensors) {
    write_raw(out, t.data(), static_cast<size_t>(t.size()) * sizeof(float));
  }
}

std::vector<std::pair<std::string, Tensor>> read_tensor_block(std::istream& in) {
  const uint32_t count = read_u32(in, "tensor count");
  if (count > 1u << 20) throw DataError("checkpoint: implausible tensor count");

  struct Entry {
    std::string name;
    Shape shape;
    uint64_t offset;
    uint64_t bytes;
  };
  std::vector<Entry> manifest;
  std::unordered_set<std::string> names;
  uint64_t expected_offset = 0;
  for (uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = read_string(in, "tensor name");
    if (!names.insert(e.name).second) {
      throw DataError("checkpoint: duplicate tensor name '" + e.name + "'");
    }
    const uint32_t ndim = read_u32(in, "tensor rank");
    if (ndim > 8) throw DataError("checkpoint: implausible tensor rank");
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      const uint32_t dim = read_u32(in, "tensor dim");
      if (dim == 0 || dim > 1u << 28) throw DataError("checkpoint: bad tensor dimension");
      e.shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    e.offset = read_u64(in, "tensor offset");
    e.bytes = static_cast<uint64_t>(numel) * sizeof(float);
    if (e.offset != expected_offset) {
      throw DataError("checkpoint: tensor '" + e.name + "' offset out of order");
    }
    expected_offset += e.bytes;
    manifest.push_back(std::move(e));
  }
  const uint64_t payload = read_u64(in, "payload size");
  if (payload != expected_offset) {
    throw DataError("checkpoint: payload size disagrees with manifest");
  }

  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(manifest.size());
  for (const Entry& e : manifest) {
    Tensor t(e.shape);
    read_raw(in, t.data(), static_cast<size_t>(e.bytes), e.name.c_str());
    tensors.emplace_back(e.name, std::move(t));
  }
  return tensors;
}

void atomic_write(const std::string& path, const std::function<void(std::ostream&)>& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    body(out);
    out.flush();
    if (!out) throw DataError("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot move " + tmp + " into place at " + path);
  }
}

namespace {

void write_config(std::ostream& out, const ModelConfig& cfg) {
  write_u32(out, static_cast<uint32_t>(cfg.streams));
  write_u32(out, static_cast<uint32_t>(cfg.d_model));
  write_u32(out, static_cast<uint32_t>(cfg.n_heads));
  write_u32(out, static_cast<uint32_t>(cfg.d_ff));
  write_u32(out, static_cast<uint32_t>(cfg.n_layers));
  write_f64(out, cfg.dropout);
  write_u32(out, static_cast<uint32_t>(cfg.max_positions));
  for (int v : cfg.src_vocab_sizes) write_u32(out, static_cast<uint32_t>(v));
  write_u32(out, static_cast<uint32_t>(cfg.tgt_vocab_size));
}

ModelConfig read_config(std::istream& in) {
  ModelConfig cfg;
  cfg.streams = static_cast<int>(read_u32(in, "config.streams"));
  if (cfg.streams < 1 || cfg.streams > 3) throw DataError("checkpoint: bad stream count");
  cfg.d_model = static_cast<int>(read_u32(in, "config.d_model"));
  cfg.n_heads = static_cast<int>(read_u32(in, "config.n_heads"));
  cfg.d_ff = static_cast<int>(read_u32(in, "config.d_ff"));
  cfg.n_layers = static_cast<int>(read_u32(in, "config.n_layers"));
  cfg.dropout = read_f64(in, "config.dropout");
  cfg.max_positions = static_cast<int>(read_u32(in, "config.max_positions"));
  for (int s = 0; s < cfg.streams; ++s) {
    cfg.src_vocab_sizes.push_back(static_cast<int>(read_u32(in, "config.src_vocab")));
  }
  cfg.tgt_vocab_size = static_cast<int>(read_u32(in, "config.tgt_vocab"));
  try {
    cfg.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint: stored config invalid: ") + e.what());
  }
  return cfg;
}

}  // namespace
}  // namespace ckpt_detail

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
  using namespace ckpt_detail;
  config.validate();
  atomic_write(path, [&](std::ostream& out) {
    write_raw(out, kMagic, 4);
    write_u32(out, kVersion);
    write_config(out, config);
    write_tensor_block(out, tensors);
  });
}

Checkpoint load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot read " + path);
  char magic[4];
  read_raw(in, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("checkpoint: " + path + " is not a model checkpoint");
  }
  const uint32_t version = read_u32(in, "version");
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint cp;
  cp.config = read_config(in);
  cp.tensors = read_tensor_block(in);
  // Hard EOF check: trailing bytes mean the file is not what we think.
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) throw DataError("checkpoint: trailing bytes after payload");
  return cp;
}

void save_model(const std::string& path, const HATModel& model) {
  save_checkpoint(path, model.config(), model.parameters());
}

HATModel load_model(const std::string& path, uint64_t seed) {
  Checkpoint cp = load_checkpoint(path);
  HATModel model(cp.config, seed);
  auto& params = model.parameters();
  if (params.size() != cp.tensors.size()) {
    throw DataError("checkpoint: expected " + std::to_string(params.size()) +
                    " tensors, file has " + std::to_string(cp.tensors.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    auto& [name, param] = params[i];
    auto& [stored_name, stored] = cp.tensors[i];
    if (name != stored_name) {
      throw DataError("checkpoint: tensor order mismatch: expected '" + name + "', found '" +
                      stored_name + "'");
    }
    if (param.shape() != stored.shape()) {
      throw DataError("checkpoint: shape mismatch for '" + name + "'");
    }
    param.values() = stored.values();
  }
  return model;
}

}  // namespace hatsc
