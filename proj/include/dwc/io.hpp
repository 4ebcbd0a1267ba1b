#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dwc/corpus.hpp"

namespace dwc::io {

/// Line reader over plain or gzip files (gzip is detected from the content,
/// not the extension).
class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path);
    ~LineReader();
    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    /// Next line without its trailing "\n" (a trailing "\r" is kept).
    bool next(std::string& line);

private:
    void* file_;
    std::vector<char> buf_;
};

class LineWriter {
public:
    /// gzip output when `gzip` is set. Directories are created as needed.
    LineWriter(const std::filesystem::path& path, bool gzip = false);
    ~LineWriter();
    LineWriter(const LineWriter&) = delete;
    LineWriter& operator=(const LineWriter&) = delete;

    void write_line(std::string_view line);
    void close();

private:
    std::filesystem::path path_;
    void* gz_ = nullptr;
    std::FILE* plain_ = nullptr;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

/// Reads a JSONL file of Documents. Throws ParseError naming the line.
std::vector<Document> read_documents(const std::filesystem::path& path);
void write_documents(const std::filesystem::path& path, std::span<const Document> docs, bool gzip = false);

}  // namespace dwc::io
