#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coegan/config.hpp"
#include "coegan/embed.hpp"
#include "coegan/io.hpp"

namespace coegan {

struct EvalConfig {
  std::size_t pca_dims = 50;
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::size_t samples_per_model = 1000;
  JaccardVariant variant = JaccardVariant::Symmetric;
  std::size_t montage_samples = 100;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  static EvalConfig from(const RunConfig& cfg);
};

struct DiscriminatorSnapshot {
  std::size_t generation = 0;
  Network network;
};

// Draws n samples from a generator snapshot with the given stream.
using Sampler = std::function<Tensor(std::size_t n, Rng& rng)>;

struct GeneratorSnapshot {
  std::size_t generation = 0;
  Sampler sample;
};

struct JaccardCell {
  std::size_t disc_gen = 0;
  std::size_t gen_gen = 0;
  double j = 0.0;
  std::size_t matched_generated = 0;
  std::size_t matched_dataset = 0;
  std::string status = "ok";  // ok | missing-discriminator | missing-generator
};

// Images tiled for one labelled subset of one map.
struct MontageSpec {
  std::string label;
  std::vector<std::size_t> indices;  // into the map's points
  GridAssignment assignment;
};

struct EvalMap {
  std::size_t disc_gen = 0;
  EmbeddingMap map;
  std::vector<double> kl;
  std::vector<std::string> warnings;
  std::vector<MontageSpec> montages;
  Tensor montage_images;  // images of every index listed in `montages`, in order
};

struct EvalReport {
  double tau = 0.0;
  bool tau_degenerate = false;
  std::size_t tau_generation = 0;
  JaccardVariant variant = JaccardVariant::Symmetric;
  std::vector<std::size_t> disc_gens;
  std::vector<std::size_t> gen_gens;
  std::vector<JaccardCell> cells;  // disc_gen-major, gen_gen-minor
  std::vector<EvalMap> maps;
  std::map<std::string, std::vector<double>> min_distances;  // "d<disc>-g<gen>" -> per generated point
  std::vector<std::string> warnings;
  std::map<std::string, std::string> config;

  const JaccardCell* cell(std::size_t disc_gen, std::size_t gen_gen) const;
};

// Embeds dataset + generator samples through each discriminator's hidden
// features (PCA then t-SNE), sets tau from the latest generator generation and
// fills the Jaccard matrix.
EvalReport evaluate(const std::vector<DiscriminatorSnapshot>& discs, const std::vector<GeneratorSnapshot>& gens,
                    const Dataset& data, const EvalConfig& cfg);

// Loads gen-<g> checkpoints for each requested generation. Missing snapshots
// produce warning cells instead of failing.
EvalReport evaluate_run(const std::filesystem::path& run_dir, const std::vector<std::size_t>& generations,
                        const Dataset& data, const EvalConfig& cfg);

// Default label of a generator snapshot's points.
std::string map_label(std::size_t gen_gen);

CsvRow report_header();
std::string report_csv(const EvalReport& report);
std::vector<JaccardCell> parse_report_csv(std::string_view text);

// report.csv, report.json, tsne_kl.jsonl, montages/*.pgm|ppm and the
// montage inputs needed to re-render them.
void write_report(const EvalReport& report, const std::filesystem::path& out_dir);
EvalReport read_report(const std::filesystem::path& report_json);
void render_report(const EvalReport& report, const std::filesystem::path& out_dir);

}  // namespace coegan
