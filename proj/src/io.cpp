#include "picle/io.hpp"

#include <fstream>
#include <stdexcept>

namespace picle {

std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + p.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

void write_text_file(const std::filesystem::path& p, std::string_view content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write: " + p.string());
}

void write_text_file_atomic(const std::filesystem::path& p, std::string_view content) {
    std::filesystem::path tmp = p;
    tmp += ".tmp";
    write_text_file(tmp, content);
    std::filesystem::rename(tmp, p);
}

std::string read_binary_file(const std::filesystem::path& p) { return read_text_file(p); }

void write_binary_file(const std::filesystem::path& p, std::string_view bytes) { write_text_file(p, bytes); }

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace picle
