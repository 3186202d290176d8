#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "coegan/population.hpp"

namespace coegan {

inline constexpr std::uint16_t kCheckpointVersion = 1;

// One snapshot of an individual plus what is needed to rebuild its network.
struct Checkpoint {
  Individual individual;
  std::size_t generation = 0;
  Shape data_shape;
  std::size_t z_dim = 100;
  std::size_t channel_min = 32;
  std::size_t channel_max = 512;
};

// Structured text form of a genome, one gene per line.
std::string genome_to_text(const Genome& genome);
Genome genome_from_text(const std::string& text);

// "CGAN", u16 version, u32 payload size, payload, u32 CRC-32 of the payload.
// Payload: header text (u32 length + UTF-8), f64 fitness, u8 flagged, u32
// parameter count, then per entry u64 innovation id, weight tensor, bias tensor.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the network; every layer must come from the stored parameters.
Network checkpoint_network(const Checkpoint& ckpt);

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, std::size_t generation, Role role);

}  // namespace coegan
