#pragma once

#include "tfscope/io.hpp"

#include <atomic>
#include <string>
#include <unistd.h>

namespace support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> serial{0};
        path_ = tfscope::fs::temp_directory_path() /
                ("tfscope-test-" + std::to_string(::getpid()) + "-" + std::to_string(serial.fetch_add(1)));
        tfscope::fs::remove_all(path_);
        tfscope::fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        tfscope::fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const tfscope::fs::path& path() const { return path_; }
    tfscope::fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    tfscope::fs::path path_;
};

} // namespace support
