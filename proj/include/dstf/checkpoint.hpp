#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dstf/model.hpp"
#include "json.hpp"

namespace dstf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary layout, all integers little-endian:
//   "DSTF" | u32 version | u32 n + n bytes of UTF-8 JSON | u32 tensor count |
//   per tensor: u16 n + name, u8 rank, u32 dims[rank], f32 payload.
struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct CheckpointData {
  nlohmann::json meta;  // {"model": ModelConfig, ...caller supplied keys}
  std::vector<StoredTensor> tensors;
};

void write_checkpoint(std::ostream& os, const CheckpointData& ckpt);
CheckpointData read_checkpoint(std::istream& is);

template <typename Real>
CheckpointData make_checkpoint(const DualStreamModel<Real>& model, const nlohmann::json& extra = nlohmann::json::object());

// Rebuilds a model from checkpoint data; every parameter must be present with its exact shape.
template <typename Real>
DualStreamModel<Real> model_from_checkpoint(const CheckpointData& ckpt);

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const DualStreamModel<Real>& model,
                     const nlohmann::json& extra = nlohmann::json::object());
CheckpointData load_checkpoint(const std::filesystem::path& path);

// FNV-1a 64 of the file bytes, as 16 hex digits; identifies a checkpoint in output headers.
std::string checkpoint_hash(const std::filesystem::path& path);

}  // namespace dstf
