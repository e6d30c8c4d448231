#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cclab {

std::string sha256_hex(std::string_view data);
std::string sha256_hex_file(const std::filesystem::path& path);

}  // namespace cclab
