#include "coegan/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

namespace coegan {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct IdxHeader {
  std::vector<std::size_t> dims;
  std::size_t data_offset = 0;
};

IdxHeader parse_idx_header(const std::vector<unsigned char>& bytes, const std::string& name) {
  auto fail = [&](std::size_t offset, const std::string& what) {
    throw FormatError(name + ": " + what + " at byte offset " + std::to_string(offset));
  };
  if (bytes.size() < 4) fail(bytes.size(), "truncated magic (need 4 bytes, have " + std::to_string(bytes.size()) + ")");
  if (bytes[0] != 0 || bytes[1] != 0) fail(0, "bad IDX magic (expected two zero bytes)");
  if (bytes[2] != 0x08) fail(2, "unsupported IDX element type (expected 0x08 unsigned byte)");
  const std::size_t ndim = bytes[3];
  if (ndim == 0) fail(3, "IDX file declares zero dimensions");
  IdxHeader h;
  std::size_t off = 4;
  for (std::size_t i = 0; i < ndim; ++i, off += 4) {
    if (off + 4 > bytes.size()) fail(off, "truncated dimension header");
    h.dims.push_back((std::size_t(bytes[off]) << 24) | (std::size_t(bytes[off + 1]) << 16) |
                     (std::size_t(bytes[off + 2]) << 8) | std::size_t(bytes[off + 3]));
  }
  h.data_offset = off;
  std::size_t count = 1;
  for (std::size_t d : h.dims) count *= d;
  if (bytes.size() < off + count) {
    fail(bytes.size(), "truncated pixel data (need " + std::to_string(off + count) + " bytes, have " +
                           std::to_string(bytes.size()) + ")");
  }
  return h;
}

// Smooth blob template centred on a mode-dependent point of a circle.
double blob_value(const SynthSpec& spec, std::size_t mode, std::size_t y, std::size_t x) {
  const double h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(mode) / static_cast<double>(spec.modes);
  const double radius = spec.modes == 1 ? 0.0 : 0.25;
  const double cy = (0.5 + radius * std::sin(angle)) * h - 0.5;
  const double cx = (0.5 + radius * std::cos(angle)) * w - 0.5;
  const double sigma = std::max(h, w) / 8.0;
  const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
  return std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
}

// Outline shapes cycling through square, cross, diagonal and ring.
double shape_value(const SynthSpec& spec, std::size_t mode, std::size_t y, std::size_t x) {
  const double h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  const double v = (static_cast<double>(y) + 0.5) / h - 0.5;
  const double u = (static_cast<double>(x) + 0.5) / w - 0.5;
  const double half = 1.0 / std::max(h, w);
  switch (mode % 4) {
    case 0: return (std::abs(std::max(std::abs(u), std::abs(v)) - 0.3) <= half) ? 1.0 : 0.0;
    case 1: return (std::abs(u) <= half || std::abs(v) <= half) ? 1.0 : 0.0;
    case 2: return (std::abs(u - v) <= half) ? 1.0 : 0.0;
    default: return (std::abs(std::hypot(u, v) - 0.3) <= half) ? 1.0 : 0.0;
  }
}

}  // namespace

std::size_t Dataset::label_count() const {
  return std::set<int>(labels.begin(), labels.end()).size();
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  Shape s = images.shape;
  s[0] = indices.size();
  Tensor out(s);
  const std::size_t stride = images.sample_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw PreconditionError("dataset index out of range");
    std::copy_n(images.data.begin() + indices[i] * stride, stride, out.data.begin() + i * stride);
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  const auto bytes = read_file(images);
  const IdxHeader h = parse_idx_header(bytes, images.string());
  if (h.dims.size() != 3) {
    throw FormatError(images.string() + ": expected a 3-dimensional image file (n, rows, cols), got " +
                      std::to_string(h.dims.size()) + " dimensions at byte offset 3");
  }
  Dataset ds;
  ds.name = images.filename().string();
  ds.images = Tensor({h.dims[0], 1, h.dims[1], h.dims[2]});
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    ds.images.data[i] = static_cast<float>(bytes[h.data_offset + i]) / 255.0f;
  }
  ds.checksum = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));

  if (labels) {
    const auto lbytes = read_file(*labels);
    const IdxHeader lh = parse_idx_header(lbytes, labels->string());
    if (lh.dims.size() != 1) throw FormatError(labels->string() + ": label file must be 1-dimensional");
    if (lh.dims[0] != h.dims[0]) {
      throw FormatError(labels->string() + ": " + std::to_string(lh.dims[0]) + " labels for " +
                        std::to_string(h.dims[0]) + " images");
    }
    ds.labels.resize(lh.dims[0]);
    for (std::size_t i = 0; i < ds.labels.size(); ++i) ds.labels[i] = lbytes[lh.data_offset + i];
  }
  return ds;
}

std::string to_string(SynthKind kind) { return kind == SynthKind::Shapes ? "shapes" : "gaussian-mixture"; }

SynthKind parse_synth_kind(const std::string& s) {
  if (s == "gaussian-mixture") return SynthKind::GaussianMixture;
  if (s == "shapes") return SynthKind::Shapes;
  throw ConfigError("unknown synthetic dataset kind '" + s + "'");
}

Tensor synth_template(const SynthSpec& spec, std::size_t mode) {
  if (spec.modes == 0 || mode >= spec.modes) throw PreconditionError("synthetic mode out of range");
  Tensor t({1, spec.height, spec.width});
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x)
      t.data[y * spec.width + x] = static_cast<float>(
          spec.kind == SynthKind::Shapes ? shape_value(spec, mode, y, x) : blob_value(spec, mode, y, x));
  return t;
}

Tensor synth_samples(const SynthSpec& spec, std::size_t count, std::optional<std::size_t> mode, Rng& rng,
                     std::vector<int>* labels) {
  if (spec.height == 0 || spec.width == 0 || spec.modes == 0) throw PreconditionError("empty synthetic spec");
  std::vector<Tensor> templates;
  for (std::size_t m = 0; m < spec.modes; ++m) templates.push_back(synth_template(spec, m));
  const std::size_t px = spec.height * spec.width;
  Tensor out({count, 1, spec.height, spec.width});
  std::uniform_real_distribution<double> noise(-spec.noise, spec.noise);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t m = mode ? *mode : uniform_int<std::size_t>(rng, 0, spec.modes - 1);
    if (labels) labels->push_back(static_cast<int>(m));
    for (std::size_t p = 0; p < px; ++p) {
      const double v = templates[m].data[p] + (spec.noise > 0.0 ? noise(rng) : 0.0);
      out.data[i * px + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.n == 0) throw PreconditionError("synthetic dataset needs n > 0");
  Rng rng = make_rng(seed, {0x5e7d});
  Dataset ds;
  ds.name = "synthetic-" + to_string(spec.kind) + "-" + std::to_string(spec.modes);
  ds.images = synth_samples(spec, spec.n, std::nullopt, rng, &ds.labels);
  ds.checksum = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(ds.images.data.data()),
            static_cast<uInt>(ds.images.data.size() * sizeof(float))));
  return ds;
}

}  // namespace coegan
