#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "proxytrain/layers.hpp"

namespace proxytrain {

/// On-disk parameter snapshot. Values round-trip bit-exactly (17 significant
/// digits); the full config snapshot is embedded for provenance together with
/// its FNV-1a hash, and loading refuses a file whose hash disagrees with the
/// expectation (both hashes are reported).
struct Checkpoint {
    std::vector<Parameter> params;
    std::string config_snapshot;
    std::uint64_t config_hash = 0;
};

void checkpoint_save(const std::filesystem::path& path, const std::vector<Parameter>& params,
                     const std::string& config_snapshot);

Checkpoint checkpoint_load(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_config_hash = std::nullopt);

}  // namespace proxytrain
