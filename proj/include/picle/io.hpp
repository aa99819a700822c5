#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace picle {

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, std::string_view content);
/// Write-then-rename so readers never observe a partial file.
void write_text_file_atomic(const std::filesystem::path& p, std::string_view content);

std::string read_binary_file(const std::filesystem::path& p);
void write_binary_file(const std::filesystem::path& p, std::string_view bytes);

/// Shortest decimal form that round-trips the exact double value.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{}) throw std::invalid_argument("bad double: " + std::string(s));
    return v;
}

std::string to_hex(std::uint64_t v);

}  // namespace picle
