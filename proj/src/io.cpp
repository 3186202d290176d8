#include "coegan/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace coegan {

namespace {

constexpr std::uint16_t kFeatureVersion = 1;
constexpr std::uint16_t kTensorVersion = 1;

bool has_csv_extension(const std::filesystem::path& p) { return p.extension() == ".csv"; }

std::string format_float(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error("io", "write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string csv_line(const CsvRow& row) {
  std::string s;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) s += ',';
    s += row[i];
  }
  s += '\n';
  return s;
}

std::vector<CsvRow> parse_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      CsvRow row;
      std::size_t f = 0;
      while (true) {
        const std::size_t comma = line.find(',', f);
        row.emplace_back(line.substr(f, comma == std::string_view::npos ? std::string_view::npos : comma - f));
        if (comma == std::string_view::npos) break;
        f = comma + 1;
      }
      rows.push_back(std::move(row));
    }
    start = end + 1;
  }
  return rows;
}

void save_features(const std::filesystem::path& path, const FeatureMatrix& fm) {
  if (has_csv_extension(path)) {
    std::string out;
    CsvRow header;
    for (std::size_t j = 0; j < fm.d(); ++j) header.push_back("f" + std::to_string(j));
    out += csv_line(header);
    for (std::size_t i = 0; i < fm.n(); ++i) {
      CsvRow row;
      for (std::size_t j = 0; j < fm.d(); ++j)
        row.push_back(format_float(static_cast<float>(fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))));
      out += csv_line(row);
    }
    atomic_write(path, out);
    return;
  }
  ByteWriter w;
  w.bytes("CGFM");
  w.u16(kFeatureVersion);
  w.u64(fm.n());
  w.u64(fm.d());
  for (std::size_t i = 0; i < fm.n(); ++i)
    for (std::size_t j = 0; j < fm.d(); ++j)
      w.f32(static_cast<float>(fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
  atomic_write(path, w.data());
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  FeatureMatrix fm;
  fm.source = path.filename().string();
  if (has_csv_extension(path)) {
    const auto rows = parse_csv(bytes);
    if (rows.empty()) throw FormatError(path.string() + ": empty feature CSV");
    const std::size_t d = rows[0].size();
    fm.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(d));
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() != d) {
        throw FormatError(path.string() + ": row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                          " fields, expected " + std::to_string(d));
      }
      for (std::size_t j = 0; j < d; ++j) {
        double v = 0.0;
        const std::string& s = rows[i][j];
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) {
          throw FormatError(path.string() + ": row " + std::to_string(i) + " field " + std::to_string(j) +
                            " is not a number");
        }
        fm.values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j)) = v;
      }
    }
    return fm;
  }
  ByteReader in(bytes, path.string());
  if (in.bytes(4) != "CGFM") throw FormatError(path.string() + ": bad magic at byte offset 0");
  const auto version = in.u16();
  if (version != kFeatureVersion) throw FormatError(path.string() + ": unsupported version " + std::to_string(version));
  const auto n = in.u64(), d = in.u64();
  if (n > 0 && d > in.remaining() / 4 / n) {
    throw FormatError(path.string() + ": truncated at byte offset " + std::to_string(in.offset()) + ", " +
                      std::to_string(n * d * 4 - in.remaining()) + " byte(s) missing");
  }
  fm.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = 0; j < d; ++j) fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = in.f32();
  return fm;
}

std::string encode_tensor(const Tensor& t) {
  ByteWriter w;
  w.bytes("CGTN");
  w.u16(kTensorVersion);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape) w.u64(d);
  for (float v : t.data) w.f32(v);
  return w.take();
}

Tensor decode_tensor(ByteReader& in) {
  const std::size_t at = in.offset();
  if (in.bytes(4) != "CGTN") throw FormatError("tensor: bad magic at byte offset " + std::to_string(at));
  const auto version = in.u16();
  if (version != kTensorVersion) throw FormatError("tensor: unsupported version " + std::to_string(version));
  const auto rank = in.u32();
  if (rank > 16) throw FormatError("tensor: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = in.u64();
  const std::size_t count = rank ? shape_size(shape) : 0;
  if (count > in.remaining() / 4) {
    throw FormatError("tensor: truncated at byte offset " + std::to_string(in.offset()) + ", " +
                      std::to_string(count * 4 - in.remaining()) + " byte(s) missing");
  }
  std::vector<float> data(count);
  for (float& v : data) v = in.f32();
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) { atomic_write(path, encode_tensor(t)); }

Tensor load_tensor(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  ByteReader in(bytes, path.string());
  return decode_tensor(in);
}

void save_image(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || (image.shape[0] != 1 && image.shape[0] != 3)) {
    throw ShapeError("save_image: expected 1 x H x W or 3 x H x W, got " + shape_string(image.shape));
  }
  const std::size_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
  std::string out = (c == 1 ? "P5\n" : "P6\n") + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float v = std::clamp(image.data[(ch * h + y) * w + x], 0.0f, 1.0f);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
      }
  atomic_write(path, out);
}

}  // namespace coegan
