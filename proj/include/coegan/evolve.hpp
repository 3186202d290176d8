#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "coegan/config.hpp"
#include "coegan/io.hpp"
#include "coegan/population.hpp"

namespace coegan {

// Frozen feature extractor plus cached dataset reference statistics.
struct FidContext {
  std::unique_ptr<FeatureExtractor> extractor;
  GaussianStats reference;
};

FidContext make_fid_context(const RunConfig& cfg, const Dataset& data);

// `count` generator samples drawn in chunks from the given latent stream.
Tensor generate_samples(const Network& generator, std::size_t count, std::size_t z_dim, Rng& rng,
                        std::size_t chunk = 256);

struct GenerationSummary {
  std::size_t generation = 0;
  std::uint64_t best_generator = 0;
  double best_generator_fid = 0.0;
  double mean_generator_fid = 0.0;
  std::uint64_t best_discriminator = 0;
  double best_discriminator_loss = 0.0;
  double mean_discriminator_loss = 0.0;
  std::size_t generator_species = 0;
  std::size_t discriminator_species = 0;
  double generator_threshold = 0.0;
  double discriminator_threshold = 0.0;
  std::size_t pairs = 0;
  std::size_t skipped_updates = 0;
  std::size_t flagged = 0;
  std::size_t retries = 0;
  std::size_t parent_copies = 0;
  std::size_t max_genome_length = 0;
};

struct EvolveResult {
  std::vector<GenerationSummary> generations;
  Population generators;
  Population discriminators;
  std::vector<std::string> log;
};

using GenerationObserver = std::function<void(const GenerationSummary&, const Population& gens,
                                              const Population& discs)>;

// Runs cfg.generations generations and writes the run directory:
//   config.txt                        sorted key = value echo
//   metrics.csv                       one row per generation
//   individuals.csv                   one row per individual per generation
//   log.txt                           notes (pairing fallbacks, unviable genomes)
//   checkpoints/gen-<g>/{generator,discriminator}.ckpt
// gen-0 holds the first individual of each initial population; gen-g (g >= 1)
// the fittest individual of generation g.
EvolveResult evolve(const RunConfig& cfg, const Dataset& data, const std::filesystem::path& run_dir,
                    const GenerationObserver& observer = {});

// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

// Groups pairs into waves that share no individual, preserving per-individual
// order; running the waves one after another reproduces the sequential result.
std::vector<std::vector<std::size_t>> schedule_waves(std::span<const Pairing> pairs);

std::string genome_signature(const Genome& genome);

CsvRow metrics_header();
CsvRow metrics_row(const GenerationSummary& s);
GenerationSummary parse_metrics_row(const CsvRow& row);
std::vector<GenerationSummary> read_metrics(const std::filesystem::path& path);

}  // namespace coegan
