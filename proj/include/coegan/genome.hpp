#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "coegan/errors.hpp"
#include "coegan/network.hpp"
#include "coegan/rng.hpp"

namespace coegan {

// One layer abstraction. `out` is out_features for Linear genes and
// out_channels for Conv2d / Deconv2d genes; `kernel` is 0 for Linear.
struct Gene {
  LayerKind kind = LayerKind::Linear;
  Activation activation = Activation::ReLU;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::uint64_t innovation = 0;

  friend bool operator==(const Gene&, const Gene&) = default;
};

// Ordered gene list. Discriminators hold conv* then linear*; generators hold
// linear* then deconv*. Layers the phenotype adds on its own (the output
// layer, and the latent projection of a generator without linear genes) are
// keyed by the two extra innovation ids so their weights survive reproduction.
struct Genome {
  Role role = Role::Discriminator;
  std::vector<Gene> genes;
  std::uint64_t input_innovation = 0;
  std::uint64_t output_innovation = 0;

  std::vector<std::uint64_t> innovations() const;
  std::string describe() const;

  friend bool operator==(const Genome&, const Genome&) = default;
};

// Search space for gene creation and mutation.
struct GeneSpace {
  std::size_t channel_min = 32;
  std::size_t channel_max = 512;
  std::vector<std::size_t> kernel_sizes{3, 5};
  std::vector<Activation> activations{Activation::ReLU, Activation::ELU, Activation::LeakyReLU, Activation::Sigmoid,
                                      Activation::Tanh};
  bool allow_linear = false;  // when false new genes are conv (D) / deconv (G) only
  std::size_t genome_limit = 4;
};

class InnovationCounter {
 public:
  explicit InnovationCounter(std::uint64_t next = 1) : next_(next) {}
  std::uint64_t next() noexcept { return next_++; }
  std::uint64_t peek() const noexcept { return next_; }

 private:
  std::uint64_t next_;
};

// Throws PreconditionError naming the violated invariant.
void validate(const Genome& genome, std::size_t genome_limit);

std::vector<LayerKind> creatable_kinds(Role role, const GeneSpace& space);
Gene random_gene(LayerKind kind, const GeneSpace& space, Rng& rng, InnovationCounter& innovations);

// A single random gene; the phenotype appends the output layer.
Genome random_genome(Role role, const GeneSpace& space, Rng& rng, InnovationCounter& innovations);

struct MutationProbs {
  double add = 0.3;
  double remove = 0.1;
  double change = 0.1;
};

struct MutationOutcome {
  Genome genome;
  bool add_fired = false;
  bool add_skipped = false;  // fired but the genome was already at the limit
  bool remove_fired = false;
  bool change_fired = false;
};

// Add, remove and change are each drawn independently, in that order.
MutationOutcome mutate(const Genome& genome, Rng& rng, const MutationProbs& probs, const GeneSpace& space,
                       InnovationCounter& innovations);

// 1 - (positions with equal kind and activation) / max(len(a), len(b)).
double genome_distance(const Genome& a, const Genome& b);

struct LayerParams {
  Tensor weight;
  Tensor bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// Learned parameters keyed by innovation id.
using ParameterStore = std::map<std::uint64_t, LayerParams>;

class UnviableGenome : public Error {
 public:
  explicit UnviableGenome(const std::string& message) : Error("unviable_genome", message) {}
};

struct Phenotype {
  Network network;
  std::vector<std::uint64_t> layer_keys;  // innovation id of each network layer
  std::size_t transferred = 0;  // layers whose parameters came from the store
  std::size_t initialized = 0;
};

// Derives the network for a genome on C x H x W data. Store entries whose
// shapes match the derived layer are copied; other layers are initialized
// from `init_rng`. Throws UnviableGenome when the spatial dims cannot be
// reached by doubling.
Phenotype build_phenotype(const Genome& genome, const Shape& data_shape, std::size_t z_dim,
                          const ParameterStore& store, const GeneSpace& space, Rng& init_rng);

ParameterStore extract_parameters(const Phenotype& phenotype);

}  // namespace coegan
