#include "dwc/io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "dwc/error.hpp"

namespace dwc::io {

namespace fs = std::filesystem;

LineReader::LineReader(const fs::path& path) : file_(nullptr), buf_(1 << 16) {
    if (!fs::is_regular_file(path)) throw RuntimeError("cannot read " + path.string() + ": not a readable file");
    file_ = gzopen(path.string().c_str(), "rb");
    if (file_ == nullptr) throw RuntimeError("cannot open " + path.string());
    gzbuffer(static_cast<gzFile>(file_), 1 << 17);
}

LineReader::~LineReader() {
    if (file_ != nullptr) gzclose(static_cast<gzFile>(file_));
}

bool LineReader::next(std::string& line) {
    line.clear();
    auto* f = static_cast<gzFile>(file_);
    bool any = false;
    while (gzgets(f, buf_.data(), static_cast<int>(buf_.size())) != nullptr) {
        any = true;
        const std::size_t n = std::strlen(buf_.data());
        if (n > 0 && buf_[n - 1] == '\n') {
            line.append(buf_.data(), n - 1);
            return true;
        }
        line.append(buf_.data(), n);
    }
    int err = 0;
    gzerror(f, &err);
    if (err != Z_OK && err != Z_STREAM_END) throw RuntimeError("read error in compressed stream");
    return any;
}

LineWriter::LineWriter(const fs::path& path, bool gzip) : path_(path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (gzip) {
        gz_ = gzopen(path.string().c_str(), "wb6");
        if (gz_ == nullptr) throw RuntimeError("cannot write " + path.string());
    } else {
        plain_ = std::fopen(path.string().c_str(), "wb");
        if (plain_ == nullptr) throw RuntimeError("cannot write " + path.string());
    }
}

LineWriter::~LineWriter() {
    try {
        close();
    } catch (...) {
    }
}

void LineWriter::write_line(std::string_view line) {
    if (gz_ != nullptr) {
        if (!line.empty() && gzwrite(static_cast<gzFile>(gz_), line.data(), static_cast<unsigned>(line.size())) == 0) {
            throw RuntimeError("write failed: " + path_.string());
        }
        gzputc(static_cast<gzFile>(gz_), '\n');
    } else {
        if (std::fwrite(line.data(), 1, line.size(), plain_) != line.size() || std::fputc('\n', plain_) == EOF) {
            throw RuntimeError("write failed: " + path_.string());
        }
    }
}

void LineWriter::close() {
    if (gz_ != nullptr) {
        gzclose(static_cast<gzFile>(gz_));
        gz_ = nullptr;
    }
    if (plain_ != nullptr) {
        const bool ok = std::fclose(plain_) == 0;
        plain_ = nullptr;
        if (!ok) throw RuntimeError("close failed: " + path_.string());
    }
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, std::string_view data) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + path.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw RuntimeError("write failed: " + path.string());
}

Json read_json(const fs::path& path) {
    const auto data = read_file(path);
    try {
        return Json::parse(data);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const Json& j) {
    write_file(path, j.dump(2, ' ', false, Json::error_handler_t::replace) + "\n");
}

std::vector<Document> read_documents(const fs::path& path) {
    LineReader reader(path);
    std::vector<Document> docs;
    std::string line;
    std::size_t line_no = 0;
    while (reader.next(line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            docs.push_back(decode_document(line));
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": " + e.what(), line_no, e.column());
        }
    }
    return docs;
}

void write_documents(const fs::path& path, std::span<const Document> docs, bool gzip) {
    LineWriter writer(path, gzip);
    for (const auto& d : docs) writer.write_line(encode_document(d));
    writer.close();
}

}  // namespace dwc::io
