#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "longred/model.hpp"

namespace longred {

// Checkpoint file: "LRD1" magic, a line-oriented text header (format version,
// dtype, model config snapshot, tensor directory with shapes/offsets, payload
// digest), then the raw little-endian tensor payload. Loading verifies the
// digest and reproduces every parameter bit for bit.

inline constexpr const char* kCheckpointMagic = "LRD1";
inline constexpr int kCheckpointVersion = 1;

template <typename T>
std::uint64_t save_checkpoint(const DecoderModel<T>& model, const std::filesystem::path& path);

template <typename T>
DecoderModel<T> load_checkpoint(const std::filesystem::path& path);

// Reads only the header; use to pick the template instantiation.
std::string checkpoint_dtype(const std::filesystem::path& path);
ModelConfig checkpoint_config(const std::filesystem::path& path);

// Digest over the concatenated raw parameter payload, matching the payload
// digest a checkpoint of this model would carry.
template <typename T>
std::uint64_t parameter_digest(const DecoderModel<T>& model);

std::uint64_t file_digest(const std::filesystem::path& path);

extern template std::uint64_t save_checkpoint<float>(const DecoderModel<float>&,
                                                     const std::filesystem::path&);
extern template std::uint64_t save_checkpoint<double>(const DecoderModel<double>&,
                                                      const std::filesystem::path&);
extern template DecoderModel<float> load_checkpoint<float>(const std::filesystem::path&);
extern template DecoderModel<double> load_checkpoint<double>(const std::filesystem::path&);
extern template std::uint64_t parameter_digest<float>(const DecoderModel<float>&);
extern template std::uint64_t parameter_digest<double>(const DecoderModel<double>&);

}  // namespace longred
