#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lumamba/model.hpp"
#include "lumamba/optim.hpp"

namespace lumamba {

inline constexpr std::uint16_t kCheckpointVersion = 1;

// Named tensors plus a key = value echo of the configuration. Optimizer moments
// are stored as tensors named "adam.m/<param>" and "adam.v/<param>"; the step
// count, seed and stream counters live in the echo.
struct Checkpoint {
  std::vector<std::pair<std::string, Array>> tensors;
  std::map<std::string, std::string> echo;

  const Array* find(const std::string& name) const;
  const std::string& get(const std::string& key) const;  // throws if absent
};

// "LUMC" magic, u16 version, u32 tensor count, per tensor u16 name length + name,
// u8 rank, u32 dims, f32 data; then the echo as a u32 length-prefixed string.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Snapshot of a model (and optimizer state when given); `extra` is merged into the echo.
Checkpoint capture(const Model& model, const AdamW* optimizer = nullptr, const std::map<std::string, std::string>& extra = {});

ModelConfig checkpoint_model_config(const Checkpoint& ckpt);
ModelParts checkpoint_parts(const Checkpoint& ckpt);

// Copies every parameter of `store` from the checkpoint. Throws std::invalid_argument
// listing missing tensors and shape mismatches.
void load_parameters(ParamStore& store, const Checkpoint& ckpt);
// Model with the checkpoint's dimensions and parts, parameters loaded.
Model restore_model(const Checkpoint& ckpt);
void restore_optimizer(AdamW& optimizer, const Checkpoint& ckpt);

}  // namespace lumamba
