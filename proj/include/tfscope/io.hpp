#ifndef TFSCOPE_IO_HPP
#define TFSCOPE_IO_HPP

#include "tfscope/error.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace tfscope {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(Errc::io, "cannot open " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return std::move(buffer).str();
}

/// Writes through a temporary sibling and renames, so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
    static std::atomic<unsigned> serial{0};
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ostringstream name;
    name << path.filename().string() << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
         << serial.fetch_add(1);
    const fs::path tmp = path.parent_path() / name.str();
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(Errc::io, "cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            fail(Errc::io, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        fail(Errc::io, "cannot rename onto " + path.string());
    }
}

/// printf-style formatting of one real with a fixed number of significant digits.
inline std::string format_real(double value, int significant_digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
    return buf;
}

inline std::vector<std::string> split(std::string_view text, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = text.find(delim, start);
        out.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) {
            return out;
        }
        start = pos + 1;
    }
}

inline double parse_real(const std::string& token) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(token, &used);
    } catch (const std::exception&) {
        fail(Errc::format, "not a number: '" + token + "'");
    }
    if (used != token.size()) {
        fail(Errc::format, "trailing characters in number: '" + token + "'");
    }
    return value;
}

inline long long parse_integer(const std::string& token) {
    std::size_t used = 0;
    long long value = 0;
    try {
        value = std::stoll(token, &used);
    } catch (const std::exception&) {
        fail(Errc::format, "not an integer: '" + token + "'");
    }
    if (used != token.size()) {
        fail(Errc::format, "trailing characters in integer: '" + token + "'");
    }
    return value;
}

/// Splits file contents into lines, dropping a trailing empty line and any '\r'.
inline std::vector<std::string> read_lines(const fs::path& path) {
    const std::string text = read_file(path);
    std::vector<std::string> lines = split(text, '\n');
    for (auto& line : lines) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
    }
    while (!lines.empty() && lines.back().empty()) {
        lines.pop_back();
    }
    return lines;
}

} // namespace tfscope

#endif
