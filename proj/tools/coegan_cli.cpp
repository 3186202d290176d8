#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "coegan/checkpoint.hpp"
#include "coegan/config.hpp"
#include "coegan/evaluate.hpp"
#include "coegan/evolve.hpp"
#include "coegan/io.hpp"

namespace fs = std::filesystem;
using namespace coegan;

namespace {

// Usage problems found after CLI11 parsing (exit 2).
struct UsageError : Error {
  explicit UsageError(const std::string& m) : Error("usage", m) {}
};

std::vector<std::size_t> parse_generations(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const unsigned long long v = std::stoull(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--generations: '" + item + "' is not a generation number");
    }
  }
  if (out.empty()) throw UsageError("--generations: empty list");
  return out;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

struct EvolveArgs {
  std::string config;
  std::string profile = "desk";
  std::vector<std::string> set;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> jobs;
  bool print_config = false;
  bool quiet = false;
};

int run_evolve(const EvolveArgs& a) {
  RunConfig cfg = RunConfig::for_profile(a.profile);
  if (!a.config.empty()) cfg = load_config(a.config, cfg);
  for (const std::string& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed) cfg.seed = *a.seed;
  if (!a.out.empty()) cfg.output = a.out;
  if (a.jobs) cfg.jobs = *a.jobs;
  cfg.validate();
  if (a.print_config) {
    std::cout << cfg.echo();
    return 0;
  }
  const Dataset data = load_dataset(cfg);
  evolve(cfg, data, cfg.output, [&](const GenerationSummary& s, const Population&, const Population&) {
    if (!a.quiet) {
      std::cerr << "generation " << s.generation << ": best FID " << format_number(s.best_generator_fid)
                << ", best D loss " << format_number(s.best_discriminator_loss) << "\n";
    }
  });
  return 0;
}

struct EvaluateArgs {
  std::string run;
  std::string generations;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> iterations;
  std::optional<double> perplexity;
  std::optional<std::size_t> pca;
  std::string variant;
  std::optional<std::size_t> jobs;
};

int run_evaluate(const EvaluateArgs& a) {
  const fs::path run(a.run);
  const fs::path echo = run / "config.txt";
  if (!fs::exists(echo)) throw UsageError(a.run + " is not a run directory (no config.txt)");
  RunConfig cfg = load_config(echo, RunConfig::desk());
  if (a.seed) cfg.seed = *a.seed;
  EvalConfig ec = EvalConfig::from(cfg);
  if (a.samples) ec.samples_per_model = *a.samples;
  if (a.iterations) ec.iterations = *a.iterations;
  if (a.perplexity) ec.perplexity = *a.perplexity;
  if (a.pca) ec.pca_dims = *a.pca;
  if (!a.variant.empty()) ec.variant = parse_jaccard_variant(a.variant);
  if (a.jobs) ec.jobs = *a.jobs;
  const Dataset data = load_dataset(cfg);
  EvalReport report = evaluate_run(run, parse_generations(a.generations), data, ec);
  report.config = cfg.to_map();
  report.config["eval_iterations"] = std::to_string(ec.iterations);
  report.config["eval_perplexity"] = format_number(ec.perplexity);
  report.config["eval_samples_per_model"] = std::to_string(ec.samples_per_model);
  report.config["eval_pca_dims"] = std::to_string(ec.pca_dims);
  report.config["eval_seed"] = std::to_string(ec.seed);
  const fs::path out = a.out.empty() ? run / "eval" : fs::path(a.out);
  write_report(report, out);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << report_csv(report);
  return 0;
}

int run_fid(const std::string& a, const std::string& b, const std::string& out) {
  const FeatureMatrix fa = load_features(a), fb = load_features(b);
  const GaussianStats sa = shrink_covariance(gaussian_stats(fa), fa.n());
  const GaussianStats sb = shrink_covariance(gaussian_stats(fb), fb.n());
  const double fid = frechet_distance(sa, sb);
  if (!out.empty()) atomic_write(out, csv_line({"a", "b", "fid"}) + csv_line({fs::path(a).filename().string(), fs::path(b).filename().string(), format_number(fid)}));
  std::cout << format_number(fid) << "\n";
  return 0;
}

struct TsneArgs {
  std::string input;
  std::string out;
  std::string kl_log;
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  std::size_t pca = 50;
  std::uint64_t seed = 0;
};

int run_tsne(const TsneArgs& a) {
  FeatureMatrix fm = load_features(a.input);
  if (a.pca > 0 && fm.d() > a.pca) fm = pca_reduce(fm, std::min(a.pca, fm.n())).projected;
  TsneConfig tc;
  tc.perplexity = a.perplexity;
  tc.iterations = a.iterations;
  tc.seed = a.seed;
  const TsneResult r = tsne_embed(fm, tc);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  const EmbeddingMap map = normalize_map(r.points, std::vector<std::string>(fm.n(), kDatasetLabel), fm.source);
  std::string csv = csv_line({"index", "x", "y", "nx", "ny"});
  for (Eigen::Index i = 0; i < r.points.rows(); ++i) {
    csv += csv_line({std::to_string(i), format_number(r.points(i, 0)), format_number(r.points(i, 1)),
                     format_number(map.points(i, 0)), format_number(map.points(i, 1))});
  }
  atomic_write(a.out, csv);
  if (!a.kl_log.empty()) {
    std::string log;
    for (std::size_t it = 0; it < r.kl.size(); ++it)
      log += "{\"iteration\":" + std::to_string(it + 1) + ",\"kl\":" + format_number(r.kl[it]) + "}\n";
    atomic_write(a.kl_log, log);
  }
  return 0;
}

int run_report(const std::string& report_json, const std::string& out) {
  const EvalReport r = read_report(report_json);
  render_report(r, out.empty() ? fs::path(report_json).parent_path() : fs::path(out));
  std::cout << report_csv(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coevolutionary GAN search with embedding-based evaluation"};
  app.require_subcommand(1);

  EvolveArgs ev;
  auto* evolve_cmd = app.add_subcommand("evolve", "Run the coevolutionary search");
  evolve_cmd->add_option("--config", ev.config, "Flat key = value config file")->check(CLI::ExistingFile);
  evolve_cmd->add_option("--profile", ev.profile, "Base profile")->check(CLI::IsMember({"desk", "paper"}));
  evolve_cmd->add_option("--set", ev.set, "Override one key (key=value), repeatable");
  evolve_cmd->add_option("--seed", ev.seed, "Run seed");
  evolve_cmd->add_option("--out", ev.out, "Run directory");
  evolve_cmd->add_option("--jobs", ev.jobs, "Concurrent pair trainings")->check(CLI::PositiveNumber);
  evolve_cmd->add_flag("--print-config", ev.print_config, "Print the resolved config and exit");
  evolve_cmd->add_flag("--quiet", ev.quiet, "No per-generation progress");

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Embedding-based evaluation of a run's snapshots");
  eval_cmd->add_option("--run", ea.run, "Run directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--generations", ea.generations, "Comma-separated generations")->required();
  eval_cmd->add_option("--out", ea.out, "Output directory (default <run>/eval)");
  eval_cmd->add_option("--seed", ea.seed, "Evaluation seed (default: run seed)");
  eval_cmd->add_option("--samples", ea.samples, "Samples per model")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--iterations", ea.iterations, "t-SNE iterations");
  eval_cmd->add_option("--perplexity", ea.perplexity, "t-SNE perplexity");
  eval_cmd->add_option("--pca", ea.pca, "PCA dimensions")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--variant", ea.variant, "Jaccard variant")->check(CLI::IsMember({"symmetric", "literal", "overlap"}));
  eval_cmd->add_option("--jobs", ea.jobs, "Concurrent discriminator snapshots")->check(CLI::PositiveNumber);

  std::string fid_a, fid_b, fid_out;
  auto* fid_cmd = app.add_subcommand("fid", "Frechet distance between two feature matrix files");
  fid_cmd->add_option("a", fid_a, "Feature matrix (.fm binary or .csv)")->required()->check(CLI::ExistingFile);
  fid_cmd->add_option("b", fid_b, "Feature matrix (.fm binary or .csv)")->required()->check(CLI::ExistingFile);
  fid_cmd->add_option("--out", fid_out, "Also write the result as CSV");
  std::uint64_t fid_seed = 0;
  fid_cmd->add_option("--seed", fid_seed, "Accepted for uniformity; the computation is deterministic");

  TsneArgs ta;
  auto* tsne_cmd = app.add_subcommand("tsne", "Embed a feature matrix in two dimensions");
  tsne_cmd->add_option("input", ta.input, "Feature matrix (.fm binary or .csv)")->required()->check(CLI::ExistingFile);
  tsne_cmd->add_option("--out", ta.out, "Output CSV of points")->required();
  tsne_cmd->add_option("--kl-log", ta.kl_log, "JSON-lines KL log");
  tsne_cmd->add_option("--perplexity", ta.perplexity, "Perplexity");
  tsne_cmd->add_option("--iterations", ta.iterations, "Iterations");
  tsne_cmd->add_option("--pca", ta.pca, "PCA dimensions before t-SNE (0 = none)");
  tsne_cmd->add_option("--seed", ta.seed, "Seed");

  std::string report_json, report_out;
  auto* report_cmd = app.add_subcommand("report", "Re-render CSV and montages from a saved report");
  report_cmd->add_option("--report", report_json, "report.json")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report_out, "Output directory (default: beside report.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*evolve_cmd) return run_evolve(ev);
    if (*eval_cmd) return run_evaluate(ea);
    if (*fid_cmd) return run_fid(fid_a, fid_b, fid_out);
    if (*tsne_cmd) return run_tsne(ta);
    if (*report_cmd) return run_report(report_json, report_out);
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}
