#include "coegan/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <json.hpp>
#include <memory>
#include <numeric>

#include "coegan/checkpoint.hpp"
#include "coegan/evolve.hpp"
#include "coegan/io.hpp"

namespace coegan {

namespace {

using json = nlohmann::json;

std::string distance_key(std::size_t d, std::size_t g) { return "d" + std::to_string(d) + "-g" + std::to_string(g); }

std::string file_label(const std::string& label) {
  std::string s = label;
  std::replace(s.begin(), s.end(), '@', '-');
  return s;
}

std::filesystem::path montage_file(const std::filesystem::path& dir, std::size_t disc_gen, const std::string& label,
                                   std::size_t channels) {
  return dir / "montages" / ("d" + std::to_string(disc_gen) + "-" + file_label(label) + (channels == 3 ? ".ppm" : ".pgm"));
}

std::filesystem::path montage_inputs(const std::filesystem::path& dir, std::size_t disc_gen) {
  return dir / "montage_inputs" / ("d" + std::to_string(disc_gen) + ".tensor");
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
  Shape s = t.shape;
  s[0] = idx.size();
  Tensor out(s);
  const std::size_t per = t.sample_size();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  return out;
}

std::size_t parse_size_field(const std::string& s, const char* what) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError(std::string("report: bad ") + what + " '" + s + "'");
  return v;
}

double parse_double_field(const std::string& s, const char* what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError(std::string("report: bad ") + what + " '" + s + "'");
  return v;
}

}  // namespace

EvalConfig EvalConfig::from(const RunConfig& cfg) {
  EvalConfig e;
  e.pca_dims = cfg.pca_dims;
  e.perplexity = cfg.perplexity;
  e.iterations = cfg.tsne_iterations;
  e.samples_per_model = cfg.samples_per_model;
  e.variant = cfg.jaccard;
  e.montage_samples = cfg.montage_samples;
  e.seed = cfg.seed;
  e.jobs = cfg.jobs;
  return e;
}

std::string map_label(std::size_t gen_gen) { return generator_label(gen_gen); }

const JaccardCell* EvalReport::cell(std::size_t disc_gen, std::size_t gen_gen) const {
  for (const JaccardCell& c : cells)
    if (c.disc_gen == disc_gen && c.gen_gen == gen_gen) return &c;
  return nullptr;
}

EvalReport evaluate(const std::vector<DiscriminatorSnapshot>& discs, const std::vector<GeneratorSnapshot>& gens,
                    const Dataset& data, const EvalConfig& cfg) {
  if (discs.empty() || gens.empty()) throw PreconditionError("evaluate: need at least one discriminator and one generator");
  if (cfg.samples_per_model == 0) throw PreconditionError("evaluate: samples_per_model must be positive");
  EvalReport report;
  report.variant = cfg.variant;

  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng pick = make_rng(cfg.seed, {0xda7a});
  std::shuffle(idx.begin(), idx.end(), pick);
  idx.resize(std::min(cfg.samples_per_model, data.size()));
  std::sort(idx.begin(), idx.end());

  Tensor all = data.gather(idx);
  std::vector<std::string> labels(idx.size(), kDatasetLabel);
  std::size_t latest = 0;
  for (const GeneratorSnapshot& g : gens) {
    Rng rng = make_rng(cfg.seed, {0x9e5, g.generation});
    Tensor samples = g.sample(cfg.samples_per_model, rng);
    samples.shape = Shape{cfg.samples_per_model};
    const Shape sample_shape = data.sample_shape();
    samples.shape.insert(samples.shape.end(), sample_shape.begin(), sample_shape.end());
    all = concat_batch(all, samples);
    labels.insert(labels.end(), cfg.samples_per_model, map_label(g.generation));
    latest = std::max(latest, g.generation);
    report.gen_gens.push_back(g.generation);
  }
  report.tau_generation = latest;
  for (const DiscriminatorSnapshot& d : discs) report.disc_gens.push_back(d.generation);

  report.maps.resize(discs.size());
  parallel_for(discs.size(), cfg.jobs, [&](std::size_t i) {
    const DiscriminatorSnapshot& d = discs[i];
    EvalMap& em = report.maps[i];
    em.disc_gen = d.generation;
    const FeatureMatrix fm = extract_features(d.network, all);
    const std::size_t k = std::min({cfg.pca_dims, fm.n(), fm.d()});
    const PcaResult pca = pca_reduce(fm, k);
    TsneConfig tc;
    tc.perplexity = cfg.perplexity;
    tc.iterations = cfg.iterations;
    tc.seed = derive_seed(cfg.seed, {0x75e, d.generation});
    TsneResult tsne = tsne_embed(pca.projected, tc);
    em.kl = std::move(tsne.kl);
    em.warnings = std::move(tsne.warnings);
    if (pca.rank_deficient) em.warnings.push_back("features span fewer than " + std::to_string(k) + " dimensions");
    em.map = normalize_map(tsne.points, labels, "discriminator@" + std::to_string(d.generation));

    std::vector<std::string> order{kDatasetLabel};
    for (const GeneratorSnapshot& g : gens) order.push_back(map_label(g.generation));
    std::vector<std::size_t> montage_idx;
    for (const std::string& label : order) {
      MontageSpec spec;
      spec.label = label;
      spec.indices = em.map.indices_of(label);
      if (spec.indices.size() > cfg.montage_samples) spec.indices.resize(cfg.montage_samples);
      if (spec.indices.empty()) continue;
      Eigen::MatrixXd pts(static_cast<Eigen::Index>(spec.indices.size()), 2);
      for (std::size_t p = 0; p < spec.indices.size(); ++p)
        pts.row(static_cast<Eigen::Index>(p)) = em.map.points.row(static_cast<Eigen::Index>(spec.indices[p]));
      const auto grid = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(spec.indices.size()))));
      spec.assignment = grid_montage(pts, grid);
      montage_idx.insert(montage_idx.end(), spec.indices.begin(), spec.indices.end());
      em.montages.push_back(std::move(spec));
    }
    em.montage_images = gather_rows(all, montage_idx);
  });

  std::vector<MapPair> last;
  for (const EvalMap& em : report.maps) last.push_back({em.map.subset(map_label(latest)), em.map.subset(kDatasetLabel)});
  const TauResult tau = threshold_tau(last);
  report.tau = tau.tau;
  report.tau_degenerate = tau.degenerate;
  if (tau.degenerate) report.warnings.push_back("tau is zero: every last-generation point coincides with a dataset point");

  for (const EvalMap& em : report.maps) {
    const Eigen::MatrixXd md = em.map.subset(kDatasetLabel);
    for (const GeneratorSnapshot& g : gens) {
      const Eigen::MatrixXd mg = em.map.subset(map_label(g.generation));
      JaccardCell c;
      c.disc_gen = em.disc_gen;
      c.gen_gen = g.generation;
      const Eigen::MatrixXd dist = map_distances(mg, md);
      std::vector<double> mins(static_cast<std::size_t>(dist.rows()));
      for (Eigen::Index r = 0; r < dist.rows(); ++r) mins[static_cast<std::size_t>(r)] = dist.row(r).minCoeff();
      report.min_distances[distance_key(em.disc_gen, g.generation)] = std::move(mins);
      if (tau.degenerate) {
        c.status = "degenerate-tau";
      } else {
        const JaccardResult jr = jaccard_index(mg, md, tau.tau, cfg.variant);
        c.j = jr.j;
        c.matched_generated = jr.matched_generated;
        c.matched_dataset = jr.matched_dataset;
      }
      report.cells.push_back(c);
    }
  }
  return report;
}

EvalReport evaluate_run(const std::filesystem::path& run_dir, const std::vector<std::size_t>& generations,
                        const Dataset& data, const EvalConfig& cfg) {
  if (generations.empty()) throw PreconditionError("evaluate_run: no generations requested");
  std::vector<DiscriminatorSnapshot> discs;
  std::vector<GeneratorSnapshot> gens;
  std::vector<std::string> warnings;
  for (std::size_t g : generations) {
    const auto dp = checkpoint_path(run_dir, g, Role::Discriminator);
    if (std::filesystem::exists(dp)) {
      discs.push_back({g, checkpoint_network(load_checkpoint(dp))});
    } else {
      warnings.push_back("missing discriminator snapshot for generation " + std::to_string(g));
    }
    const auto gp = checkpoint_path(run_dir, g, Role::Generator);
    if (std::filesystem::exists(gp)) {
      const Checkpoint ck = load_checkpoint(gp);
      auto net = std::make_shared<Network>(checkpoint_network(ck));
      const std::size_t z = ck.z_dim;
      gens.push_back({g, [net, z](std::size_t n, Rng& rng) { return generate_samples(*net, n, z, rng); }});
    } else {
      warnings.push_back("missing generator snapshot for generation " + std::to_string(g));
    }
  }
  if (discs.empty() || gens.empty()) {
    throw PreconditionError("evaluate_run: " + run_dir.string() + " holds no " +
                            (discs.empty() ? "discriminator" : "generator") + " snapshot for the requested generations");
  }
  EvalReport computed = evaluate(discs, gens, data, cfg);

  // Re-index the matrix over every requested generation, marking the gaps.
  EvalReport report = computed;
  report.disc_gens = generations;
  report.gen_gens = generations;
  report.cells.clear();
  report.warnings = warnings;
  report.warnings.insert(report.warnings.end(), computed.warnings.begin(), computed.warnings.end());
  for (std::size_t d : generations) {
    for (std::size_t g : generations) {
      if (const JaccardCell* c = computed.cell(d, g)) {
        report.cells.push_back(*c);
        continue;
      }
      JaccardCell c;
      c.disc_gen = d;
      c.gen_gen = g;
      const bool has_d = std::any_of(discs.begin(), discs.end(), [&](const auto& s) { return s.generation == d; });
      c.status = has_d ? "missing-generator" : "missing-discriminator";
      report.cells.push_back(c);
    }
  }
  return report;
}

CsvRow report_header() { return {"disc_gen", "gen_gen", "J", "n_matched_G", "n_matched_D", "tau", "status"}; }

std::string report_csv(const EvalReport& report) {
  std::string out = csv_line(report_header());
  for (const JaccardCell& c : report.cells) {
    const bool ok = c.status == "ok";
    out += csv_line({std::to_string(c.disc_gen), std::to_string(c.gen_gen), ok ? format_number(c.j) : "",
                     ok ? std::to_string(c.matched_generated) : "", ok ? std::to_string(c.matched_dataset) : "",
                     format_number(report.tau), c.status});
  }
  return out;
}

std::vector<JaccardCell> parse_report_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0] != report_header()) throw FormatError("report: unexpected CSV header");
  std::vector<JaccardCell> cells;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const CsvRow& r = rows[i];
    if (r.size() != report_header().size()) throw FormatError("report: row " + std::to_string(i) + " has wrong field count");
    JaccardCell c;
    c.disc_gen = parse_size_field(r[0], "disc_gen");
    c.gen_gen = parse_size_field(r[1], "gen_gen");
    c.status = r[6];
    if (c.status == "ok") {
      c.j = parse_double_field(r[2], "J");
      c.matched_generated = parse_size_field(r[3], "n_matched_G");
      c.matched_dataset = parse_size_field(r[4], "n_matched_D");
    }
    cells.push_back(c);
  }
  return cells;
}

void render_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  atomic_write(out_dir / "report.csv", report_csv(report));
  for (const EvalMap& em : report.maps) {
    if (em.montage_images.rank() != 4) continue;
    const std::size_t c = em.montage_images.shape[1];
    std::size_t offset = 0;
    for (const MontageSpec& spec : em.montages) {
      const Tensor images = slice_batch(em.montage_images, offset, spec.indices.size());
      offset += spec.indices.size();
      save_image(montage_file(out_dir, em.disc_gen, spec.label, c), render_montage(spec.assignment, images));
    }
  }
}

void write_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  render_report(report, out_dir);

  json j;
  j["tau"] = report.tau;
  j["tau_degenerate"] = report.tau_degenerate;
  j["tau_generation"] = report.tau_generation;
  j["variant"] = to_string(report.variant);
  j["disc_gens"] = report.disc_gens;
  j["gen_gens"] = report.gen_gens;
  j["warnings"] = report.warnings;
  j["config"] = report.config;
  j["cells"] = json::array();
  for (const JaccardCell& c : report.cells) {
    j["cells"].push_back({{"disc_gen", c.disc_gen},
                          {"gen_gen", c.gen_gen},
                          {"J", c.j},
                          {"n_matched_G", c.matched_generated},
                          {"n_matched_D", c.matched_dataset},
                          {"status", c.status}});
  }
  j["min_distances"] = report.min_distances;
  j["maps"] = json::array();
  std::string kl_log;
  for (const EvalMap& em : report.maps) {
    json m;
    m["disc_gen"] = em.disc_gen;
    m["provenance"] = em.map.provenance;
    m["labels"] = em.map.labels;
    json pts = json::array();
    for (Eigen::Index r = 0; r < em.map.points.rows(); ++r) pts.push_back({em.map.points(r, 0), em.map.points(r, 1)});
    m["points"] = std::move(pts);
    m["warnings"] = em.warnings;
    m["montages"] = json::array();
    for (const MontageSpec& s : em.montages) {
      m["montages"].push_back({{"label", s.label},
                               {"indices", s.indices},
                               {"grid", s.assignment.grid},
                               {"cells", s.assignment.cell},
                               {"cost", s.assignment.cost}});
    }
    m["montage_inputs"] = montage_inputs(".", em.disc_gen).lexically_normal().generic_string();
    if (em.montage_images.rank() == 4) save_tensor(montage_inputs(out_dir, em.disc_gen), em.montage_images);
    j["maps"].push_back(std::move(m));
    for (std::size_t it = 0; it < em.kl.size(); ++it) {
      kl_log += json{{"disc_gen", em.disc_gen}, {"iteration", it + 1}, {"kl", em.kl[it]}}.dump() + "\n";
    }
  }
  atomic_write(out_dir / "report.json", j.dump(1) + "\n");
  atomic_write(out_dir / "tsne_kl.jsonl", kl_log);
}

EvalReport read_report(const std::filesystem::path& report_json) {
  json j;
  try {
    j = json::parse(read_file(report_json));
  } catch (const json::exception& e) {
    throw FormatError(report_json.string() + ": " + e.what());
  }
  EvalReport r;
  try {
    r.tau = j.at("tau").get<double>();
    r.tau_degenerate = j.at("tau_degenerate").get<bool>();
    r.tau_generation = j.at("tau_generation").get<std::size_t>();
    r.variant = parse_jaccard_variant(j.at("variant").get<std::string>());
    r.disc_gens = j.at("disc_gens").get<std::vector<std::size_t>>();
    r.gen_gens = j.at("gen_gens").get<std::vector<std::size_t>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    r.config = j.at("config").get<std::map<std::string, std::string>>();
    r.min_distances = j.at("min_distances").get<std::map<std::string, std::vector<double>>>();
    for (const json& c : j.at("cells")) {
      JaccardCell cell;
      cell.disc_gen = c.at("disc_gen").get<std::size_t>();
      cell.gen_gen = c.at("gen_gen").get<std::size_t>();
      cell.j = c.at("J").get<double>();
      cell.matched_generated = c.at("n_matched_G").get<std::size_t>();
      cell.matched_dataset = c.at("n_matched_D").get<std::size_t>();
      cell.status = c.at("status").get<std::string>();
      r.cells.push_back(cell);
    }
    const auto base = report_json.parent_path();
    for (const json& m : j.at("maps")) {
      EvalMap em;
      em.disc_gen = m.at("disc_gen").get<std::size_t>();
      em.map.provenance = m.at("provenance").get<std::string>();
      em.map.labels = m.at("labels").get<std::vector<std::string>>();
      const json& pts = m.at("points");
      em.map.points.resize(static_cast<Eigen::Index>(pts.size()), 2);
      for (std::size_t p = 0; p < pts.size(); ++p) {
        em.map.points(static_cast<Eigen::Index>(p), 0) = pts[p].at(0).get<double>();
        em.map.points(static_cast<Eigen::Index>(p), 1) = pts[p].at(1).get<double>();
      }
      em.warnings = m.at("warnings").get<std::vector<std::string>>();
      for (const json& s : m.at("montages")) {
        MontageSpec spec;
        spec.label = s.at("label").get<std::string>();
        spec.indices = s.at("indices").get<std::vector<std::size_t>>();
        spec.assignment.grid = s.at("grid").get<std::size_t>();
        spec.assignment.cell = s.at("cells").get<std::vector<std::size_t>>();
        spec.assignment.cost = s.at("cost").get<double>();
        em.montages.push_back(std::move(spec));
      }
      const auto inputs = base / m.at("montage_inputs").get<std::string>();
      if (std::filesystem::exists(inputs)) em.montage_images = load_tensor(inputs);
      r.maps.push_back(std::move(em));
    }
  } catch (const json::exception& e) {
    throw FormatError(report_json.string() + ": " + e.what());
  }
  return r;
}

}  // namespace coegan
