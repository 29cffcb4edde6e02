#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "hatsc/model.hpp"
#include "hatsc/tensor.hpp"

namespace hatsc {

// Binary model container: magic "HAT1", a fixed-field config record, a named
// tensor manifest, then one little-endian f32 payload. Values round-trip bit
// for bit. Files are written to a temp name and renamed into place so a
// crash never leaves a half-written checkpoint at the target path.

struct Checkpoint {
  ModelConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);
Checkpoint load_checkpoint(const std::string& path);  // DataError on any corruption

// Convenience wrappers tying the container to the model's parameter registry.
void save_model(const std::string& path, const HATModel& model);
// Rebuilds the model from the stored config, then overwrites every parameter
// from the file. Name or shape mismatches are data errors. `seed` only seeds
// the model's dropout stream (the stored weights replace the random init).
HATModel load_model(const std::string& path, uint64_t seed);

namespace ckpt_detail {

// Low-level primitives shared with the optimizer-state sidecar.
void write_u32(std::ostream& out, uint32_t v);
void write_u64(std::ostream& out, uint64_t v);
void write_f64(std::ostream& out, double v);
void write_string(std::ostream& out, const std::string& s);
uint32_t read_u32(std::istream& in, const char* what);
uint64_t read_u64(std::istream& in, const char* what);
double read_f64(std::istream& in, const char* what);
std::string read_string(std::istream& in, const char* what);

void write_tensor_block(std::ostream& out,
                        const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> read_tensor_block(std::istream& in);

// Write-to-temp-and-rename; `body` receives the open stream.
void atomic_write(const std::string& path, const std::function<void(std::ostream&)>& body);

}  // namespace ckpt_detail

}  // namespace hatsc
