#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace obstudy {

/// SHA-256 of `bytes`, lowercase hex (64 characters).
std::string sha256_hex(std::string_view bytes);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace obstudy
