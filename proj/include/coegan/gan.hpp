#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coegan/adam.hpp"
#include "coegan/dataset.hpp"
#include "coegan/network.hpp"
#include "coegan/rng.hpp"

namespace coegan {

// Probabilities are clamped to [eps, 1 - eps] before every logarithm.
inline constexpr double kProbabilityClamp = 1e-7;

double clamp_probability(double p);

// -mean(log d_real) - mean(log(1 - d_fake))
double d_loss(std::span<const float> d_real, std::span<const float> d_fake);

// Non-saturating generator loss: -mean(log d_fake)
double g_loss(std::span<const float> d_fake);

// n x z_dim standard-normal latent batch.
Tensor sample_latent(std::size_t n, std::size_t z_dim, Rng& rng);

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t batches_per_generation = 10;
  std::size_t z_dim = 100;
  AdamConfig adam;
};

struct TrainStats {
  std::vector<double> d_losses;  // loss of each batch, measured before the update
  std::vector<double> g_losses;
  std::size_t batches = 0;
  std::size_t skipped_d_updates = 0;
  std::size_t skipped_g_updates = 0;
  std::size_t rejected_param_groups = 0;

  bool nonfinite() const noexcept { return skipped_d_updates + skipped_g_updates + rejected_param_groups > 0; }
  double mean_d_loss() const;
  double mean_g_loss() const;
};

// One side of a training match: the network, its optimizer state and the
// random stream it owns.
struct Trainee {
  Network& net;
  AdamState& optimizer;
  Rng& rng;
};

// Runs cfg.batches_per_generation adversarial iterations. Each iteration
// updates the discriminator on a real + fake batch, then the generator through
// the (now frozen) discriminator. Real batches are read sequentially, with
// wraparound, from an ordering of the dataset shuffled by the discriminator's
// stream; latent vectors come from the generator's stream.
TrainStats train_pair(Trainee generator, Trainee discriminator, const Dataset& data, const TrainConfig& cfg);

// Convenience overload with fresh optimizer state and streams derived from `seed`.
TrainStats train_pair(Network& generator, Network& discriminator, const Dataset& data, const TrainConfig& cfg,
                      std::uint64_t seed);

}  // namespace coegan
