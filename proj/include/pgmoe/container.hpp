#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pgmoe {

// Versioned binary file: 8-byte magic, a JSON header, then length-prefixed
// little-endian double arrays. Doubles are stored raw, so round trips are exact.
inline constexpr std::string_view kContainerMagic{"PGMOEv1\n", 8};

struct Container {
    nlohmann::json header;
    std::vector<std::vector<double>> arrays;
};

void write_container(const std::filesystem::path& path, const Container& container);
Container read_container(const std::filesystem::path& path);

}  // namespace pgmoe
