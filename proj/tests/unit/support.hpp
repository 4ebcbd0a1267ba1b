#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "dwc/io.hpp"

namespace dwc::testing {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("dwc_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

    std::filesystem::path write(const std::string& name, const std::string& content) const {
        auto p = path_ / name;
        io::write_file(p, content);
        return p;
    }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path source_dir() { return DWC_SOURCE_DIR; }

}  // namespace dwc::testing
