#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coegan/rng.hpp"
#include "coegan/tensor.hpp"

namespace coegan {

// Image samples n x C x H x W with values in [0, 1].
struct Dataset {
  std::string name;
  Tensor images;
  std::vector<int> labels;  // empty when the source carries none
  std::uint32_t checksum = 0;  // CRC-32 of the source bytes / generated pixels

  std::size_t size() const noexcept { return images.batch(); }
  Shape sample_shape() const { return images.sample_shape(); }
  std::size_t channels() const { return images.shape.at(1); }
  std::size_t height() const { return images.shape.at(2); }
  std::size_t width() const { return images.shape.at(3); }
  bool has_labels() const noexcept { return !labels.empty(); }
  std::size_t label_count() const;

  // Copies the selected samples into one batch tensor.
  Tensor gather(std::span<const std::size_t> indices) const;
};

// IDX (MNIST / Fashion-MNIST) unsigned-byte image file, optionally with a
// matching label file.
Dataset load_idx(const std::filesystem::path& images,
                 const std::optional<std::filesystem::path>& labels = std::nullopt);

enum class SynthKind { GaussianMixture, Shapes };

std::string to_string(SynthKind kind);
SynthKind parse_synth_kind(const std::string& s);

struct SynthSpec {
  SynthKind kind = SynthKind::GaussianMixture;
  std::size_t modes = 2;
  std::size_t n = 1000;
  std::size_t height = 8;
  std::size_t width = 8;
  double noise = 0.1;  // per-pixel uniform noise half-width
};

// Mode template image (1 x H x W) used by synth_dataset.
Tensor synth_template(const SynthSpec& spec, std::size_t mode);

// Draws `count` fresh images of the given mode (all modes when `mode` is empty).
Tensor synth_samples(const SynthSpec& spec, std::size_t count, std::optional<std::size_t> mode, Rng& rng,
                     std::vector<int>* labels = nullptr);

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed);

}  // namespace coegan
