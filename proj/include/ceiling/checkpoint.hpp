#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ceiling/policy.hpp"

namespace ceiling::policy {

// Binary layout (all integers little-endian):
//   "CEIL" | u32 format version (1) | u32 n + n bytes UTF-8 JSON config
//   | u32 tensor count | per tensor: u8 rank, u32 dims[rank], f32 data (row-major)
//   | u8 moments flag | [first-moment block, second-moment block] (same tensor layout)
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  PolicyConfig config;
  PolicyParams params;
  std::optional<TaskId> task;
};

struct SaveOptions {
  bool include_moments = true;
  std::optional<TaskId> task;
};

std::string encode_checkpoint(const PolicyParams& params, const PolicyConfig& config, const SaveOptions& options = {});
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const PolicyParams& params, const PolicyConfig& config, const std::filesystem::path& path,
                     const SaveOptions& options = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ceiling::policy
