#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "coegan/dataset.hpp"
#include "coegan/embed.hpp"
#include "coegan/fid.hpp"
#include "coegan/gan.hpp"
#include "coegan/genome.hpp"

namespace coegan {

enum class PairingStrategy { AllVsAll, AllVsKBest };

std::string to_string(PairingStrategy p);
PairingStrategy parse_pairing(const std::string& s);

enum class DatasetSource { Synthetic, Idx };

enum class FidBackend { Classifier, Pixels };

// Every experiment knob. Default construction gives the full-scale profile;
// desk() the small profile the command line uses unless told otherwise.
struct RunConfig {
  // evolution
  std::size_t generations = 100;
  std::size_t generator_population = 10;
  std::size_t discriminator_population = 10;
  MutationProbs mutation;  // 0.3, 0.1, 0.1
  std::size_t channel_min = 32;
  std::size_t channel_max = 512;
  std::size_t tournament_k = 2;
  std::size_t fid_samples = 5000;
  std::size_t genome_limit = 4;
  std::size_t species = 3;
  std::vector<std::size_t> kernel_sizes{3, 5};
  std::vector<Activation> activations{Activation::ReLU, Activation::ELU, Activation::LeakyReLU, Activation::Sigmoid,
                                      Activation::Tanh};
  bool allow_linear = false;
  PairingStrategy pairing = PairingStrategy::AllVsAll;
  std::size_t pairing_k = 1;

  // GAN training
  std::size_t batch_size = 64;
  std::size_t batches_per_generation = 10;
  double learning_rate = 0.003;
  std::size_t z_dim = 100;

  // fitness features
  FidBackend fid_backend = FidBackend::Classifier;
  std::size_t fid_reference = 5000;  // dataset samples behind the reference statistics
  ClassifierConfig classifier;

  // evaluation
  std::size_t pca_dims = 50;
  double perplexity = 30.0;
  std::size_t tsne_iterations = 1000;
  std::size_t samples_per_model = 1000;
  JaccardVariant jaccard = JaccardVariant::Symmetric;
  std::size_t montage_samples = 100;

  // data and run
  DatasetSource dataset = DatasetSource::Idx;
  std::filesystem::path idx_images;
  std::filesystem::path idx_labels;
  SynthSpec synth;
  std::uint64_t seed = 0;
  std::filesystem::path output = "run";
  std::size_t jobs = 1;
  std::string profile = "paper";

  static RunConfig paper();
  static RunConfig desk();
  static RunConfig for_profile(const std::string& name);

  GeneSpace gene_space() const;
  TrainConfig train_config() const;
  TsneConfig tsne_config(std::uint64_t tsne_seed) const;

  // Throws ConfigError naming the offending key.
  void validate() const;

  // Sorted key=value lines; parse(echo()) reproduces the config.
  std::string echo() const;
  std::map<std::string, std::string> to_map() const;
};

// Applies one key=value override; unknown keys and malformed values throw ConfigError.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

// Flat "key = value" text, '#' comments. `profile` (if present) is applied
// first so that the remaining keys override it.
RunConfig parse_config(const std::string& text, const RunConfig& base);
RunConfig load_config(const std::filesystem::path& path, const RunConfig& base);

Dataset load_dataset(const RunConfig& cfg);

// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace coegan
