#include "tailnet/csv.hpp"

#include <charconv>
#include <cmath>

#include "tailnet/errors.hpp"

namespace tailnet::csv {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<std::string_view> split(std::string_view line, char delimiter) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delimiter, start);
        if (pos == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

bool parse_double(std::string_view field, double& out) {
    if (field.empty()) return false;
    if (field.front() == '+') field.remove_prefix(1);
    const auto* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), last, out);
    return ec == std::errc{} && ptr == last;
}

bool parse_int(std::string_view field, long long& out) {
    if (field.empty()) return false;
    const auto* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), last, out);
    return ec == std::errc{} && ptr == last;
}

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
    (void)ec;
    return std::string(buf, ptr);
}

Reader::Reader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) {
        throw InputError("cannot open '" + path.string() + "'");
    }
}

bool Reader::next(std::string& line) {
    while (std::getline(in_, line)) {
        ++line_number_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!trim(line).empty()) return true;
    }
    return false;
}

std::string Reader::where() const { return path_.string() + ":" + std::to_string(line_number_); }

}  // namespace tailnet::csv
