#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace garden {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& p);
std::vector<std::uint8_t> read_binary_file(const fs::path& p);
void write_text_file(const fs::path& p, std::string_view content);

// Writes via a temp file in the same directory followed by rename.
void write_file_atomic(const fs::path& p, std::string_view content);

std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string trim(std::string_view s);

// Lexical prefix test: true if `p` equals `prefix` or lives below it.
bool path_under(const fs::path& prefix, const fs::path& p);

struct CommandResult {
    int status = -1;     // exit status, or 128+signal if terminated by signal
    std::string output;  // combined stdout+stderr
};

// Runs argv[0] with the given arguments, capturing combined output.
// If `env` is set the child sees exactly those variables, nothing inherited.
CommandResult run_command(const std::vector<std::string>& argv,
                          const std::optional<fs::path>& workdir = std::nullopt,
                          const std::optional<std::map<std::string, std::string>>& env = std::nullopt);

} // namespace garden
