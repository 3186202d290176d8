#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "coegan/errors.hpp"
#include "coegan/fid.hpp"
#include "coegan/tensor.hpp"

namespace coegan {

// Writes to a sibling temporary file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

// Little-endian serialization.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void bytes(std::string_view s) { out_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  const std::string& data() const noexcept { return out_; }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

// Bounds-checked reader; a short read throws FormatError naming the offset
// and the number of missing bytes.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return std::string(bytes(u32())); }

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated at byte offset " + std::to_string(pos_) + ", " +
                        std::to_string(n - (data_.size() - pos_)) + " byte(s) missing");
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string_view data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::string_view bytes);

// Minimal CSV: comma separated, no quoting (fields never contain commas).
using CsvRow = std::vector<std::string>;
std::string csv_line(const CsvRow& row);
std::vector<CsvRow> parse_csv(std::string_view text);

// FeatureMatrix files: "CGFM", u16 version, u64 n, u64 d, n*d little-endian
// f32 row-major. Files ending in .csv hold a header row and one row per sample.
void save_features(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix load_features(const std::filesystem::path& path);

// Tensor files: "CGTN", u16 version, u32 rank, u64 dims, little-endian f32 data.
std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(ByteReader& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Binary PGM (1 channel) or PPM (3 channels) from a C x H x W image in [0, 1].
void save_image(const std::filesystem::path& path, const Tensor& image);

}  // namespace coegan
