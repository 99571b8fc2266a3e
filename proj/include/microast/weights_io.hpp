#pragma once

#include "microast/network.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace microast {

/// .mast weight container. Layout (all integers little-endian):
///
///   "MAST" | u32 version | u32 plan_len | plan JSON | u32 manifest_len |
///   manifest JSON | zero pad to 64 | data region | u32 CRC32(data region)
///
/// JSON is compact with sorted object keys. Each manifest entry is
/// {"dtype":"f32","name":...,"nbytes":...,"offset":...,"shape":[n,c,h,w]};
/// offsets are absolute, 64-byte aligned and strictly increasing. The data
/// region spans from the first 64-byte boundary after the manifest to the
/// end of the last tensor. See docs/mast-format.md.
inline constexpr std::uint32_t kMastVersion = 1;
inline constexpr std::size_t kMastAlignment = 64;

struct ManifestEntry {
    std::string name;
    std::string dtype;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t nbytes = 0;
};

struct ContainerInfo {
    std::uint32_t version = 0;
    ChannelPlan plan;
    std::vector<ManifestEntry> manifest;
    std::uint32_t crc = 0;
};

std::vector<std::uint8_t> serialize_weights(const NetworkWeights& weights);

/// Throws IntegrityError (magic, version, CRC, manifest layout), SchemaError
/// (tensors vs. the embedded channel plan) or IoError (truncated data).
NetworkWeights deserialize_weights(std::span<const std::uint8_t> bytes);

/// Parses and checks the header, manifest and CRC without building weights.
ContainerInfo read_container_info(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file in the same directory, then renames.
void save_weights(const NetworkWeights& weights, const std::filesystem::path& path);
NetworkWeights load_weights(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace microast
