#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "sigloss/errors.hpp"

namespace sigloss::io {

// A sink for output lines; file writers and in-memory test buffers both fit.
using LineSink = std::function<void(std::string_view)>;

class IoError : public Error {
 public:
  using Error::Error;
};

// Line-oriented file writer. A path ending in ".gz" is gzip-compressed with
// a fixed header (mtime 0, os 255) so identical content yields identical
// bytes across runs.
class LineWriter {
 public:
  LineWriter() = default;
  explicit LineWriter(const std::string& path) { open(path); }
  LineWriter(const LineWriter&) = delete;
  LineWriter& operator=(const LineWriter&) = delete;
  ~LineWriter() { close(); }

  void open(const std::string& path) {
    close();
    path_ = path;
    file_ = std::fopen(path.c_str(), "wb");
    if (!file_) throw IoError("cannot open for writing: " + path);
    gzip_ = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
    if (gzip_) {
      std::memset(&strm_, 0, sizeof(strm_));
      if (deflateInit2(&strm_, Z_BEST_SPEED, Z_DEFLATED, 15 + 16, 8,
                       Z_DEFAULT_STRATEGY) != Z_OK)
        throw IoError("deflateInit2 failed: " + path);
      std::memset(&header_, 0, sizeof(header_));
      header_.time = 0;
      header_.os = 255;
      deflateSetHeader(&strm_, &header_);
      zbuf_.resize(1 << 18);
    }
    buf_.reserve(1 << 16);
  }

  bool is_open() const { return file_ != nullptr; }

  void write_line(std::string_view line) {
    buf_.append(line);
    buf_.push_back('\n');
    if (buf_.size() >= (1 << 16)) flush_buffer(false);
  }

  LineSink sink() {
    return [this](std::string_view line) { write_line(line); };
  }

  void close() {
    if (!file_) return;
    flush_buffer(true);
    if (gzip_) deflateEnd(&strm_);
    std::fclose(file_);
    file_ = nullptr;
  }

 private:
  void flush_buffer(bool finish) {
    if (!gzip_) {
      if (!buf_.empty() &&
          std::fwrite(buf_.data(), 1, buf_.size(), file_) != buf_.size())
        throw IoError("write failed: " + path_);
      buf_.clear();
      return;
    }
    strm_.next_in = reinterpret_cast<Bytef*>(buf_.data());
    strm_.avail_in = static_cast<uInt>(buf_.size());
    int flush = finish ? Z_FINISH : Z_NO_FLUSH;
    do {
      strm_.next_out = zbuf_.data();
      strm_.avail_out = static_cast<uInt>(zbuf_.size());
      int rc = deflate(&strm_, flush);
      if (rc == Z_STREAM_ERROR) throw IoError("deflate failed: " + path_);
      size_t produced = zbuf_.size() - strm_.avail_out;
      if (produced &&
          std::fwrite(zbuf_.data(), 1, produced, file_) != produced)
        throw IoError("write failed: " + path_);
    } while (strm_.avail_out == 0 || (finish && strm_.avail_in > 0));
    buf_.clear();
  }

  std::string path_;
  std::FILE* file_ = nullptr;
  bool gzip_ = false;
  std::string buf_;
  std::vector<Bytef> zbuf_;
  z_stream strm_{};
  gz_header header_{};
};

// Line-oriented reader; detects gzip by magic bytes, so it reads both plain
// and compressed logs with the same call sites.
class LineReader {
 public:
  LineReader() = default;
  explicit LineReader(const std::string& path) { open(path); }
  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;
  ~LineReader() { close(); }

  void open(const std::string& path) {
    close();
    path_ = path;
    file_ = std::fopen(path.c_str(), "rb");
    if (!file_) throw IoError("cannot open for reading: " + path);
    in_.resize(1 << 18);
    in_len_ = std::fread(in_.data(), 1, in_.size(), file_);
    gzip_ = in_len_ >= 2 && in_[0] == 0x1f && in_[1] == 0x8b;
    if (gzip_) {
      std::memset(&strm_, 0, sizeof(strm_));
      if (inflateInit2(&strm_, 15 + 32) != Z_OK)
        throw IoError("inflateInit2 failed: " + path);
      strm_.next_in = in_.data();
      strm_.avail_in = static_cast<uInt>(in_len_);
      out_.resize(1 << 18);
    }
  }

  bool is_open() const { return file_ != nullptr; }

  // Reads the next line (without the trailing '\n'); false at end of input.
  bool getline(std::string& line) {
    line.clear();
    while (true) {
      size_t nl = pending_.find('\n', scan_pos_);
      if (nl != std::string::npos) {
        line.assign(pending_, 0, nl);
        pending_.erase(0, nl + 1);
        scan_pos_ = 0;
        return true;
      }
      scan_pos_ = pending_.size();
      if (!fill()) {
        if (pending_.empty()) return false;
        line.swap(pending_);
        pending_.clear();
        scan_pos_ = 0;
        return true;
      }
    }
  }

  void close() {
    if (!file_) return;
    if (gzip_) inflateEnd(&strm_);
    std::fclose(file_);
    file_ = nullptr;
    pending_.clear();
    scan_pos_ = 0;
  }

 private:
  bool fill() {
    if (!gzip_) {
      if (in_len_ == 0) in_len_ = std::fread(in_.data(), 1, in_.size(), file_);
      if (in_len_ == 0) return false;
      pending_.append(reinterpret_cast<char*>(in_.data()), in_len_);
      in_len_ = 0;
      return true;
    }
    while (true) {
      if (strm_.avail_in == 0) {
        in_len_ = std::fread(in_.data(), 1, in_.size(), file_);
        strm_.next_in = in_.data();
        strm_.avail_in = static_cast<uInt>(in_len_);
      }
      strm_.next_out = out_.data();
      strm_.avail_out = static_cast<uInt>(out_.size());
      int rc = inflate(&strm_, Z_NO_FLUSH);
      if (rc != Z_OK && rc != Z_STREAM_END && rc != Z_BUF_ERROR)
        throw IoError("inflate failed: " + path_);
      size_t produced = out_.size() - strm_.avail_out;
      if (produced) {
        pending_.append(reinterpret_cast<char*>(out_.data()), produced);
        return true;
      }
      if (rc == Z_STREAM_END) {
        // Concatenated gzip members are legal; restart if more input follows.
        if (strm_.avail_in == 0 && std::feof(file_)) return false;
        if (inflateReset2(&strm_, 15 + 32) != Z_OK) return false;
        continue;
      }
      if (rc == Z_BUF_ERROR && strm_.avail_in == 0 && std::feof(file_))
        return false;
    }
  }

  std::string path_;
  std::FILE* file_ = nullptr;
  bool gzip_ = false;
  std::vector<Bytef> in_;
  size_t in_len_ = 0;
  std::vector<Bytef> out_;
  z_stream strm_{};
  std::string pending_;
  size_t scan_pos_ = 0;
};

}  // namespace sigloss::io
