#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace soad {

/// Named float32 tensor with an explicit shape.
struct Tensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t elements() const;
};

/// Binary container shared by checkpoints, datasets and sample files.
///
/// Layout (all integers little-endian):
///
///     char[8]   magic            "SOADCKPT" | "SOADDATA" | "SOADSAMP"
///     u32       format version
///     u64       header length    followed by a UTF-8 JSON header
///     u32       tensor count
///     per tensor:
///       u32 name length, name bytes
///       u32 rank, u64 dims[rank]
///       f32 data[prod(dims)]     little-endian IEEE-754
struct Container {
  std::string magic;
  std::uint32_t version = 1;
  nlohmann::json header = nlohmann::json::object();
  std::vector<Tensor> tensors;

  const Tensor& tensor(const std::string& name) const;
};

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr const char* kCheckpointMagic = "SOADCKPT";
inline constexpr const char* kDatasetMagic = "SOADDATA";
inline constexpr const char* kSamplesMagic = "SOADSAMP";

/// Writes to a temporary sibling file and renames it over `path`.
void write_container(const std::filesystem::path& path, const Container& container);
Container read_container(const std::filesystem::path& path, const std::string& expected_magic);

/// Write `text` to `path` through a temporary file and rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace soad
