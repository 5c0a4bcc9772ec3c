#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace gapweld {

// Reads a whole file; IoError when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Parse failures are reported as ValidationError naming the file.
nlohmann::json read_json_file(const std::filesystem::path& path);
nlohmann::json parse_json(const std::string& text, const std::string& context);

}  // namespace gapweld
