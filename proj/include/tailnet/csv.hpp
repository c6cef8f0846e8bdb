#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace tailnet::csv {

/// Splits one delimited line. Fields are trimmed of surrounding whitespace and a trailing '\r'.
std::vector<std::string_view> split(std::string_view line, char delimiter = ',');

/// Locale-independent decimal parse of the whole field. Returns false on any trailing garbage.
bool parse_double(std::string_view field, double& out);

bool parse_int(std::string_view field, long long& out);

/// Shortest text that reproduces the value: 17 significant digits, general notation.
std::string format_double(double value);

/// Line-oriented reader that tracks the 1-based line number for error messages.
class Reader {
public:
    explicit Reader(const std::filesystem::path& path);

    /// Reads the next non-empty line. Returns false at end of file.
    bool next(std::string& line);
    std::size_t line_number() const noexcept { return line_number_; }
    const std::filesystem::path& path() const noexcept { return path_; }

    /// "<path>:<line>" prefix for diagnostics.
    std::string where() const;

private:
    std::filesystem::path path_;
    std::ifstream in_;
    std::size_t line_number_ = 0;
};

}  // namespace tailnet::csv
