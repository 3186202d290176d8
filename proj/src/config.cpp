#include "coegan/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace coegan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_field = [](std::size_t RunConfig::*field) {
      return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_size(k, v); };
    };
    t["generations"] = size_field(&RunConfig::generations);
    t["population_generators"] = size_field(&RunConfig::generator_population);
    t["population_discriminators"] = size_field(&RunConfig::discriminator_population);
    t["mutation_add"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.mutation.add = parse_double(k, v); };
    t["mutation_remove"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.mutation.remove = parse_double(k, v); };
    t["mutation_change"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.mutation.change = parse_double(k, v); };
    t["channel_min"] = size_field(&RunConfig::channel_min);
    t["channel_max"] = size_field(&RunConfig::channel_max);
    t["tournament_k"] = size_field(&RunConfig::tournament_k);
    t["fid_samples"] = size_field(&RunConfig::fid_samples);
    t["genome_limit"] = size_field(&RunConfig::genome_limit);
    t["species"] = size_field(&RunConfig::species);
    t["kernel_sizes"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.kernel_sizes.clear();
      for (const auto& p : split(v, ',')) c.kernel_sizes.push_back(parse_size(k, p));
    };
    t["activations"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.activations.clear();
      for (const auto& p : split(v, ',')) {
        try {
          c.activations.push_back(parse_activation(p));
        } catch (const Error&) {
          throw ConfigError(k + ": unknown activation '" + p + "'");
        }
      }
    };
    t["allow_linear"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.allow_linear = parse_bool(k, v); };
    t["pairing"] = [](RunConfig& c, const std::string&, const std::string& v) { c.pairing = parse_pairing(v); };
    t["pairing_k"] = size_field(&RunConfig::pairing_k);
    t["batch_size"] = size_field(&RunConfig::batch_size);
    t["batches_per_generation"] = size_field(&RunConfig::batches_per_generation);
    t["learning_rate"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.learning_rate = parse_double(k, v); };
    t["optimizer"] = [](RunConfig&, const std::string& k, const std::string& v) {
      if (v != "adam") throw ConfigError(k + ": only 'adam' is supported, got '" + v + "'");
    };
    t["z_dim"] = size_field(&RunConfig::z_dim);
    t["fid_backend"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "classifier") c.fid_backend = FidBackend::Classifier;
      else if (v == "pixels") c.fid_backend = FidBackend::Pixels;
      else throw ConfigError(k + ": expected classifier or pixels, got '" + v + "'");
    };
    t["fid_reference"] = size_field(&RunConfig::fid_reference);
    t["classifier_channels"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.classifier.conv_channels = parse_size(k, v); };
    t["classifier_hidden"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.classifier.hidden = parse_size(k, v); };
    t["classifier_steps"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.classifier.steps = parse_size(k, v); };
    t["pca_dims"] = size_field(&RunConfig::pca_dims);
    t["tsne_perplexity"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.perplexity = parse_double(k, v); };
    t["tsne_iterations"] = size_field(&RunConfig::tsne_iterations);
    t["samples_per_model"] = size_field(&RunConfig::samples_per_model);
    t["jaccard_variant"] = [](RunConfig& c, const std::string&, const std::string& v) { c.jaccard = parse_jaccard_variant(v); };
    t["montage_samples"] = size_field(&RunConfig::montage_samples);
    t["dataset"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      if (v == "synthetic") c.dataset = DatasetSource::Synthetic;
      else if (v == "idx") c.dataset = DatasetSource::Idx;
      else throw ConfigError(k + ": expected synthetic or idx, got '" + v + "'");
    };
    t["idx_images"] = [](RunConfig& c, const std::string&, const std::string& v) { c.idx_images = v; };
    t["idx_labels"] = [](RunConfig& c, const std::string&, const std::string& v) { c.idx_labels = v; };
    t["synth_kind"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      try {
        c.synth.kind = parse_synth_kind(v);
      } catch (const Error&) {
        throw ConfigError(k + ": unknown synthetic kind '" + v + "'");
      }
    };
    t["synth_modes"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.modes = parse_size(k, v); };
    t["synth_n"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.n = parse_size(k, v); };
    t["synth_height"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.height = parse_size(k, v); };
    t["synth_width"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.width = parse_size(k, v); };
    t["synth_noise"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.synth.noise = parse_double(k, v); };
    t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_u64(k, v); };
    t["output"] = [](RunConfig& c, const std::string&, const std::string& v) { c.output = v; };
    t["jobs"] = size_field(&RunConfig::jobs);
    t["profile"] = [](RunConfig& c, const std::string&, const std::string& v) { c = RunConfig::for_profile(v); };
    return t;
  }();
  return table;
}

}  // namespace

std::string to_string(PairingStrategy p) { return p == PairingStrategy::AllVsAll ? "all-vs-all" : "all-vs-k-best"; }

PairingStrategy parse_pairing(const std::string& s) {
  if (s == "all-vs-all") return PairingStrategy::AllVsAll;
  if (s == "all-vs-k-best") return PairingStrategy::AllVsKBest;
  throw ConfigError("pairing: expected all-vs-all or all-vs-k-best, got '" + s + "'");
}

std::string format_number(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, p) : std::to_string(v);
}

RunConfig RunConfig::paper() { return RunConfig{}; }

RunConfig RunConfig::desk() {
  RunConfig c;
  c.profile = "desk";
  c.generations = 30;
  c.generator_population = 5;
  c.discriminator_population = 5;
  c.fid_samples = 1000;
  c.fid_reference = 1000;
  c.channel_min = 8;
  c.channel_max = 32;
  c.samples_per_model = 300;
  c.dataset = DatasetSource::Synthetic;
  c.synth = SynthSpec{};
  return c;
}

RunConfig RunConfig::for_profile(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  throw ConfigError("profile: expected desk or paper, got '" + name + "'");
}

GeneSpace RunConfig::gene_space() const {
  GeneSpace s;
  s.channel_min = channel_min;
  s.channel_max = channel_max;
  s.kernel_sizes = kernel_sizes;
  s.activations = activations;
  s.allow_linear = allow_linear;
  s.genome_limit = genome_limit;
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.batch_size = batch_size;
  t.batches_per_generation = batches_per_generation;
  t.z_dim = z_dim;
  t.adam.learning_rate = learning_rate;
  return t;
}

TsneConfig RunConfig::tsne_config(std::uint64_t tsne_seed) const {
  TsneConfig t;
  t.perplexity = perplexity;
  t.iterations = tsne_iterations;
  t.seed = tsne_seed;
  return t;
}

void RunConfig::validate() const {
  auto positive = [](const char* key, std::size_t v) {
    if (v == 0) throw ConfigError(std::string(key) + ": must be positive");
  };
  auto probability = [](const char* key, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(key) + ": probability must lie in [0, 1]");
  };
  positive("population_generators", generator_population);
  positive("population_discriminators", discriminator_population);
  probability("mutation_add", mutation.add);
  probability("mutation_remove", mutation.remove);
  probability("mutation_change", mutation.change);
  positive("channel_min", channel_min);
  if (channel_max < channel_min) throw ConfigError("channel_max: must be at least channel_min");
  positive("tournament_k", tournament_k);
  positive("fid_samples", fid_samples);
  if (fid_samples < 2) throw ConfigError("fid_samples: need at least 2 samples");
  positive("genome_limit", genome_limit);
  positive("species", species);
  if (kernel_sizes.empty()) throw ConfigError("kernel_sizes: must not be empty");
  for (std::size_t k : kernel_sizes)
    if (k == 0 || k % 2 == 0) throw ConfigError("kernel_sizes: kernels must be odd and positive");
  if (activations.empty()) throw ConfigError("activations: must not be empty");
  positive("pairing_k", pairing_k);
  if (pairing == PairingStrategy::AllVsKBest && (pairing_k > generator_population || pairing_k > discriminator_population)) {
    throw ConfigError("pairing_k: exceeds a population size");
  }
  positive("batch_size", batch_size);
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate: must be positive");
  positive("z_dim", z_dim);
  positive("fid_reference", fid_reference);
  positive("pca_dims", pca_dims);
  if (!(perplexity >= 1.0)) throw ConfigError("tsne_perplexity: must be at least 1");
  positive("samples_per_model", samples_per_model);
  positive("jobs", jobs);
  if (dataset == DatasetSource::Synthetic) {
    positive("synth_n", synth.n);
    positive("synth_modes", synth.modes);
    positive("synth_height", synth.height);
    positive("synth_width", synth.width);
  }
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> m;
  std::string acts;
  for (std::size_t i = 0; i < activations.size(); ++i) acts += (i ? "," : "") + to_string(activations[i]);
  m["activations"] = acts;
  m["allow_linear"] = allow_linear ? "true" : "false";
  m["batch_size"] = std::to_string(batch_size);
  m["batches_per_generation"] = std::to_string(batches_per_generation);
  m["channel_max"] = std::to_string(channel_max);
  m["channel_min"] = std::to_string(channel_min);
  m["classifier_channels"] = std::to_string(classifier.conv_channels);
  m["classifier_hidden"] = std::to_string(classifier.hidden);
  m["classifier_steps"] = std::to_string(classifier.steps);
  m["dataset"] = dataset == DatasetSource::Synthetic ? "synthetic" : "idx";
  m["fid_backend"] = fid_backend == FidBackend::Classifier ? "classifier" : "pixels";
  m["fid_reference"] = std::to_string(fid_reference);
  m["fid_samples"] = std::to_string(fid_samples);
  m["generations"] = std::to_string(generations);
  m["genome_limit"] = std::to_string(genome_limit);
  m["idx_images"] = idx_images.string();
  m["idx_labels"] = idx_labels.string();
  m["jaccard_variant"] = to_string(jaccard);
  m["jobs"] = std::to_string(jobs);
  m["kernel_sizes"] = join_sizes(kernel_sizes);
  m["learning_rate"] = format_number(learning_rate);
  m["montage_samples"] = std::to_string(montage_samples);
  m["mutation_add"] = format_number(mutation.add);
  m["mutation_change"] = format_number(mutation.change);
  m["mutation_remove"] = format_number(mutation.remove);
  m["optimizer"] = "adam";
  m["output"] = output.string();
  m["pairing"] = to_string(pairing);
  m["pairing_k"] = std::to_string(pairing_k);
  m["pca_dims"] = std::to_string(pca_dims);
  m["population_discriminators"] = std::to_string(discriminator_population);
  m["population_generators"] = std::to_string(generator_population);
  m["profile"] = profile;
  m["samples_per_model"] = std::to_string(samples_per_model);
  m["seed"] = std::to_string(seed);
  m["species"] = std::to_string(species);
  m["synth_height"] = std::to_string(synth.height);
  m["synth_kind"] = to_string(synth.kind);
  m["synth_modes"] = std::to_string(synth.modes);
  m["synth_n"] = std::to_string(synth.n);
  m["synth_noise"] = format_number(synth.noise);
  m["synth_width"] = std::to_string(synth.width);
  m["tournament_k"] = std::to_string(tournament_k);
  m["tsne_iterations"] = std::to_string(tsne_iterations);
  m["tsne_perplexity"] = format_number(perplexity);
  m["z_dim"] = std::to_string(z_dim);
  return m;
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown key '" + key + "'");
  it->second(cfg, key, value);
}

RunConfig parse_config(const std::string& text, const RunConfig& base) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  RunConfig cfg = base;
  for (const auto& [k, v] : entries)
    if (k == "profile") apply_setting(cfg, k, v);
  for (const auto& [k, v] : entries)
    if (k != "profile") apply_setting(cfg, k, v);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.dataset == DatasetSource::Synthetic) return synth_dataset(cfg.synth, cfg.seed);
  if (cfg.idx_images.empty()) throw ConfigError("idx_images: required when dataset = idx");
  if (cfg.idx_labels.empty()) return load_idx(cfg.idx_images);
  return load_idx(cfg.idx_images, cfg.idx_labels);
}

}  // namespace coegan
