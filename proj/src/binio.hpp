#pragma once

// Little-endian byte buffers and atomic file output shared by the FPNN and
// FPFC formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "featprior/error.hpp"

namespace featprior::binio {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

class Writer {
 public:
  void bytes(std::span<const std::uint8_t> b) {
    const std::size_t at = buf_.size();
    buf_.resize(at + b.size());
    if (!b.empty()) std::memcpy(buf_.data() + at, b.data(), b.size());
  }
  void tag(std::string_view s) { bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}); }

  template <typename T>
  void pod(T v) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    bytes(raw);
  }

  std::vector<std::uint8_t>& buffer() noexcept { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, ErrorCode truncated) : data_(data), truncated_(truncated) {}

  std::span<const std::uint8_t> bytes(std::size_t n) {
    if (n > data_.size() - pos_) throw Error(truncated_, "unexpected end of data at byte " + std::to_string(pos_));
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
  T pod() {
    T v;
    std::memcpy(&v, bytes(sizeof(T)).data(), sizeof(T));
    return v;
  }

  bool at_end() const noexcept { return pos_ == data_.size(); }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  ErrorCode truncated_;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace featprior::binio
