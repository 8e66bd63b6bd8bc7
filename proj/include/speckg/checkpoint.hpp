#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "speckg/encoder.hpp"
#include "speckg/tensor.hpp"

namespace speckg {

// Binary container, little-endian, layout documented in the README:
//   magic "SKGCKPT\n", u32 version, u64 dim, u64 entity_count,
//   u64 relation_count, u64 seed, u64 layers, u32 tensor_count,
//   then per tensor: u32 name_len, name bytes, u32 rank, u64 dims, f64 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint32_t version = kCheckpointVersion;
    std::uint64_t dim = 0;
    std::uint64_t entity_count = 0;
    std::uint64_t relation_count = 0;
    std::uint64_t seed = 0;
    std::uint64_t layers = 1;
};

struct Checkpoint {
    CheckpointMeta meta;
    std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);

Checkpoint load_checkpoint(const std::string& path);

// Model plus the final-layer entity representations it was selected with;
// scoring from a checkpoint needs no graph access.
struct LoadedModel {
    ModelParams params;
    Tensor entity_repr; // |E| x d
    CheckpointMeta meta;

    EncodedModel view() const;
};

void save_model_checkpoint(const std::string& path, const ModelParams& params,
                           const std::vector<double>& entity_repr, std::uint64_t seed);

LoadedModel load_model_checkpoint(const std::string& path);

} // namespace speckg
