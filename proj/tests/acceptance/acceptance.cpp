// Acceptance run: one PASS/FAIL line per criterion.
#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "coegan/checkpoint.hpp"
#include "coegan/config.hpp"
#include "coegan/evaluate.hpp"
#include "coegan/evolve.hpp"
#include "coegan/fid.hpp"
#include "coegan/gan.hpp"
#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "../support/process.hpp"
#include "../support/tempdir.hpp"

using namespace coegan;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      detail << (pass ? " | failed: " : "; ");
      detail << what;
      pass = false;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) { return oracle::median(std::move(v)); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------

void criterion_1(Outcome& o) {
  const auto t0 = Clock::now();
  Rng rng(2024);
  const Activation acts[] = {Activation::None, Activation::ReLU, Activation::ELU,
                             Activation::LeakyReLU, Activation::Sigmoid, Activation::Tanh};
  double worst = 0.0;
  std::string where;
  std::size_t checks = 0, components = 0;
  bool forward = true;
  for (LayerKind kind : {LayerKind::Linear, LayerKind::Conv2d, LayerKind::Deconv2d}) {
    for (int t = 0; t < 50; ++t) {
      const Geometry g = gradcheck::random_geometry(kind, rng);
      for (Activation a : acts) {
        const gradcheck::Result r = gradcheck::check_layer(g, a, rng);
        ++checks;
        components += r.components;
        forward = forward && r.forward_matches;
        if (r.max_rel > worst) {
          worst = r.max_rel;
          where = to_string(kind) + "/" + to_string(a) + " " + r.worst;
        }
      }
    }
  }
  o.detail << checks << " layer checks, " << components << " components, max relative error " << fmt(worst, 3);
  o.require(forward, "forward pass disagrees with direct summation");
  o.require(worst < 1e-4, "max relative error " + fmt(worst, 3) + " at " + where);
  o.require(seconds_since(t0) < 120.0, "took " + fmt(seconds_since(t0), 3) + " s");
}

void criterion_2(Outcome& o) {
  Rng rng(7);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = uniform_int<std::size_t>(rng, 1, 128), m = uniform_int<std::size_t>(rng, 1, 128);
    std::vector<float> real(n), fake(m);
    // a quarter of the batches probe the clamp region
    const bool edge = t % 4 == 0;
    for (float& v : real) v = static_cast<float>(edge ? uniform_real(rng, 0, 1e-6) : uniform_real(rng));
    for (float& v : fake) v = static_cast<float>(edge ? 1.0 - uniform_real(rng, 0, 1e-6) : uniform_real(rng));
    worst = std::max(worst, std::abs(d_loss(real, fake) - oracle::d_loss(real, fake, kProbabilityClamp)));
    worst = std::max(worst, std::abs(g_loss(fake) - oracle::g_loss(fake, kProbabilityClamp)));
  }
  const std::vector<float> half(64, 0.5f);
  const double da = std::abs(d_loss(half, half) - 2.0 * std::log(2.0));
  const double ga = std::abs(g_loss(half) - std::log(2.0));
  o.detail << "max oracle gap " << fmt(worst, 3) << " over 1000 batches, anchors off by " << fmt(da, 3) << " / "
           << fmt(ga, 3);
  o.require(worst <= 1e-6, "oracle gap " + fmt(worst, 3));
  o.require(da <= 1e-6, "2 ln 2 anchor");
  o.require(ga <= 1e-6, "ln 2 anchor");
}

Eigen::MatrixXd random_spd(Eigen::Index d, Rng& rng) {
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = uniform_real(rng, -1, 1);
  return a * a.transpose() + 0.05 * Eigen::MatrixXd::Identity(d, d);
}

void criterion_3(Outcome& o) {
  Rng rng(3);
  const Eigen::MatrixXd i2 = Eigen::MatrixXd::Identity(2, 2);
  const GaussianStats a{Eigen::VectorXd::Zero(2), i2};
  GaussianStats shifted = a, wide{Eigen::VectorXd::Zero(2), 4.0 * i2};
  shifted.mu(0) = 1.0;
  const double self = frechet_distance(a, a), unit = frechet_distance(a, shifted), diag = frechet_distance(a, wide);
  o.require(std::abs(self) <= 1e-9, "FD(a, a) = " + fmt(self, 3));
  o.require(std::abs(unit - 1.0) <= 1e-9, "unit mean shift gives " + fmt(unit, 12));
  o.require(std::abs(diag - 2.0) <= 1e-9, "I vs 4I gives " + fmt(diag, 12));

  double asym = 0.0, self_max = 0.0;
  std::size_t monotone_failures = 0;
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index d = 2 + t % 15;
    GaussianStats p{Eigen::VectorXd::Zero(d), random_spd(d, rng)}, q{Eigen::VectorXd::Zero(d), random_spd(d, rng)};
    for (Eigen::Index k = 0; k < d; ++k) {
      p.mu(k) = uniform_real(rng, -2, 2);
      q.mu(k) = uniform_real(rng, -2, 2);
    }
    asym = std::max(asym, std::abs(frechet_distance(p, q) - frechet_distance(q, p)));
    self_max = std::max(self_max, std::abs(frechet_distance(p, p)));
    Eigen::VectorXd dir(d);
    for (Eigen::Index k = 0; k < d; ++k) dir(k) = uniform_real(rng, -1, 1);
    dir.normalize();
    double prev = -1.0;
    for (double s : {0.0, 0.1, 0.5, 1.0, 3.0, 10.0}) {
      GaussianStats moved = q;
      moved.mu = p.mu + s * dir;
      const double f = frechet_distance(p, moved);
      if (!(f > prev)) ++monotone_failures;
      prev = f;
    }
  }
  o.detail << "analytic cases within 1e-9; 100 SPD instances: asymmetry " << fmt(asym, 3) << ", self "
           << fmt(self_max, 3) << ", monotonicity failures " << monotone_failures;
  o.require(asym <= 1e-9, "asymmetry " + fmt(asym, 3));
  o.require(self_max <= 1e-9, "self-distance " + fmt(self_max, 3));
  o.require(monotone_failures == 0, "mean-shift monotonicity");
}

// Separability of two labelled point sets in the plane: a perceptron with
// zero training errors is a separating line.
bool linearly_separable(const Eigen::MatrixXd& pts, const std::vector<int>& label) {
  const Eigen::Vector2d centre = pts.colwise().mean();
  double scale = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) scale = std::max(scale, (pts.row(i).transpose() - centre).norm());
  Eigen::Vector3d w = Eigen::Vector3d::Zero();
  for (int epoch = 0; epoch < 20000; ++epoch) {
    std::size_t errors = 0;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      const Eigen::Vector3d x((pts(i, 0) - centre(0)) / scale, (pts(i, 1) - centre(1)) / scale, 1.0);
      const double y = label[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
      if (y * w.dot(x) <= 0.0) {
        w += y * x;
        ++errors;
      }
    }
    if (errors == 0) return true;
  }
  return false;
}

void criterion_4(Outcome& o) {
  const std::size_t n = 200, d = 50;
  double worst_perp = 0.0, slowest = 0.0;
  std::size_t separable = 0, descended = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(seed, {0xc1});
    std::normal_distribution<double> noise;
    FeatureMatrix x;
    x.values.resize(n, d);
    std::vector<int> label(n);
    for (std::size_t i = 0; i < n; ++i) {
      label[i] = i < n / 2 ? 0 : 1;
      for (std::size_t k = 0; k < d; ++k)
        x.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = noise(rng) + (label[i] ? 2.0 : 0.0);
    }
    const AffinityModel aff = compute_affinities(x.values, 30.0);
    for (double a : aff.achieved) worst_perp = std::max(worst_perp, std::abs(a - 30.0));

    TsneConfig cfg;
    cfg.perplexity = 30.0;
    cfg.iterations = 1000;
    cfg.seed = seed;
    const auto t0 = Clock::now();
    const TsneResult r = tsne_embed(x, cfg);
    slowest = std::max(slowest, seconds_since(t0));
    if (linearly_separable(r.points, label)) ++separable;
    if (r.kl_at(cfg.iterations) < r.kl_at(cfg.exaggeration_iterations)) ++descended;
  }
  o.detail << "max perplexity error " << fmt(worst_perp, 3) << ", separable " << separable << "/10, KL descent "
           << descended << "/10, slowest run " << fmt(slowest, 3) << " s";
  o.require(worst_perp <= kPerplexityTolerance, "perplexity off by " + fmt(worst_perp, 3));
  o.require(separable == 10, "clusters separable in " + std::to_string(separable) + "/10 runs");
  o.require(descended == 10, "final KL below end-of-exaggeration KL in " + std::to_string(descended) + "/10 runs");
  o.require(slowest < 60.0, "run took " + fmt(slowest, 3) + " s");
}

Eigen::MatrixXd pts(std::initializer_list<std::pair<double, double>> list) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(list.size()), 2);
  Eigen::Index i = 0;
  for (auto [x, y] : list) {
    m(i, 0) = x;
    m(i, 1) = y;
    ++i;
  }
  return m;
}

void criterion_5(Outcome& o) {
  const Eigen::MatrixXd mg = pts({{0, 0}, {1, 1}}), md = pts({{0, 0}, {0.9, 0.9}});
  o.require(jaccard_index(mg, md, 0.2).j == 1.0, "tau 0.2 hand case");
  o.require(jaccard_index(mg, md, 0.1).j == 0.5, "tau 0.1 hand case");
  const Eigen::MatrixXd a = pts({{0.1, 0.1}, {0.2, 0.7}, {0.4, 0.4}});
  const Eigen::MatrixXd b = pts({{0.1, 0.16}, {0.9, 0.9}, {0.45, 0.4}, {0.2, 0.9}});
  // by hand: matches at tau 0.1 are a0-b0 (0.06) and a2-b2 (0.05), so (2 + 2) / 7
  o.require(jaccard_index(a, b, 0.1).j == 4.0 / 7.0, "three-point hand case");
  o.require(jaccard_index(mg, mg, 1e-6).j == 1.0, "J(mg, mg) = 1");
  o.require(jaccard_index(mg, md + Eigen::MatrixXd::Constant(2, 2, 3.0), 1.0).j == 0.0, "separated sets");

  Rng rng(5);
  std::size_t oracle_mismatch = 0, monotone_failures = 0;
  for (int t = 0; t < 200; ++t) {
    Eigen::MatrixXd g(20, 2), d(25, 2);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = uniform_real(rng);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = uniform_real(rng);
    double prev = 0.0;
    for (double tau = 0.005; tau < 1.5; tau *= 1.3) {
      const double j = jaccard_index(g, d, tau).j;
      if (j != oracle::jaccard(g, d, tau)) ++oracle_mismatch;
      if (j < prev) ++monotone_failures;
      prev = j;
    }
  }
  o.detail << "hand cases exact; 200 random sets: oracle mismatches " << oracle_mismatch << ", monotonicity failures "
           << monotone_failures;
  o.require(oracle_mismatch == 0, "oracle mismatch");
  o.require(monotone_failures == 0, "monotonicity");
}

Genome simple_genome(Role role, LayerKind kind, Activation act, std::size_t out, std::size_t kernel) {
  Genome g;
  g.role = role;
  g.genes = {Gene{kind, act, out, kernel, 1}};
  g.input_innovation = 100;
  g.output_innovation = 101;
  return g;
}

void criterion_6(Outcome& o) {
  const auto t0 = Clock::now();
  std::size_t held = 0;
  std::vector<std::string> per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthSpec spec;
    spec.modes = 2;
    spec.n = 1000;
    const Dataset data = synth_dataset(spec, seed);

    GeneSpace space;
    space.channel_min = 8;
    space.channel_max = 32;
    Rng init = make_rng(seed, {0xacc6});
    Network d = build_phenotype(simple_genome(Role::Discriminator, LayerKind::Conv2d, Activation::LeakyReLU, 16, 3),
                                data.sample_shape(), 16, {}, space, init)
                    .network;
    Network g = build_phenotype(simple_genome(Role::Generator, LayerKind::Deconv2d, Activation::Sigmoid, 16, 3),
                                data.sample_shape(), 16, {}, space, init)
                    .network;
    TrainConfig tc;
    tc.batch_size = 64;
    tc.batches_per_generation = 100;
    tc.z_dim = 16;
    const TrainStats ts = train_pair(g, d, data, tc, seed);

    std::vector<DiscriminatorSnapshot> discs{{100, d}};
    std::vector<GeneratorSnapshot> gens{
        {1, [spec](std::size_t n, Rng& rng) { return synth_samples(spec, n, 0, rng); }},
        {2, [spec](std::size_t n, Rng& rng) { return synth_samples(spec, n, std::nullopt, rng); }}};
    EvalConfig ec = EvalConfig::from(RunConfig::desk());
    ec.seed = seed;
    const EvalReport rep = evaluate(discs, gens, data, ec);
    const double collapsed = rep.cell(100, 1)->j, full = rep.cell(100, 2)->j;
    if (full - collapsed >= 0.2) ++held;
    per_seed.push_back(fmt(collapsed, 3) + "/" + fmt(full, 3));
    if (ts.batches < 100) o.require(false, "discriminator trained only " + std::to_string(ts.batches) + " batches");
  }
  const double elapsed = seconds_since(t0);
  o.detail << "J collapsed/full per seed:";
  for (const auto& s : per_seed) o.detail << " " << s;
  o.detail << "; gap >= 0.2 in " << held << "/5; " << fmt(elapsed, 3) << " s";
  o.require(held == 5, "gap >= 0.2 held in " + std::to_string(held) + "/5 seeds");
  o.require(elapsed < 300.0, "took " + fmt(elapsed, 3) + " s");
}

std::shared_ptr<Network> load_net(const fs::path& run, std::size_t gen, Role role, std::size_t* z = nullptr) {
  const Checkpoint ck = load_checkpoint(checkpoint_path(run, gen, role));
  if (z) *z = ck.z_dim;
  return std::make_shared<Network>(checkpoint_network(ck));
}

void criterion_7(Outcome& o) {
  const auto t0 = Clock::now();
  std::vector<double> fid1, fid30, j3, j30;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    testing::TempDir dir("acc7");
    RunConfig cfg = RunConfig::desk();
    cfg.seed = seed;
    const Dataset data = load_dataset(cfg);
    evolve(cfg, data, dir.path());
    const auto metrics = read_metrics(dir / "metrics.csv");
    fid1.push_back(metrics.front().best_generator_fid);
    fid30.push_back(metrics.back().best_generator_fid);

    std::vector<DiscriminatorSnapshot> discs{{30, *load_net(dir.path(), 30, Role::Discriminator)}};
    std::vector<GeneratorSnapshot> gens;
    for (std::size_t gen : {3, 30}) {
      std::size_t z = 0;
      auto net = load_net(dir.path(), gen, Role::Generator, &z);
      gens.push_back({gen, [net, z](std::size_t n, Rng& rng) { return generate_samples(*net, n, z, rng); }});
    }
    const EvalReport rep = evaluate(discs, gens, data, EvalConfig::from(cfg));
    j3.push_back(rep.cell(30, 3)->j);
    j30.push_back(rep.cell(30, 30)->j);
  }
  const double elapsed = seconds_since(t0);
  const double mf1 = median(fid1), mf30 = median(fid30), mj3 = median(j3), mj30 = median(j30);
  o.detail << "median best FID gen1 " << fmt(mf1) << " -> gen30 " << fmt(mf30) << "; median J gen3 " << fmt(mj3)
           << " -> gen30 " << fmt(mj30) << "; per seed FID/J:";
  for (std::size_t i = 0; i < fid1.size(); ++i)
    o.detail << " " << fmt(fid1[i]) << "->" << fmt(fid30[i]) << "/" << fmt(j3[i], 3) << "->" << fmt(j30[i], 3);
  o.detail << "; " << fmt(elapsed, 4) << " s";
  o.require(mf30 < mf1, "FID did not fall");
  o.require(mj30 > mj3, "J did not rise");
  o.require(elapsed < 1800.0, "took " + fmt(elapsed, 4) + " s");
}

const std::string kCli = COEGAN_CLI_PATH;

testing::ProcessResult cli(const std::string& args) { return testing::run_process(testing::quote(kCli) + " " + args); }

const char* kTinyRun =
    " --profile desk --set population_generators=2 --set population_discriminators=2 --set species=1"
    " --set fid_backend=pixels --set fid_samples=40 --set fid_reference=100 --set batch_size=16"
    " --set batches_per_generation=1 --set z_dim=8 --set channel_min=4 --set channel_max=8 --set synth_n=200 --quiet";

void criterion_8(Outcome& o) {
  const std::map<std::string, std::string> table{
      {"generations", "100"},        {"population_generators", "10"}, {"population_discriminators", "10"},
      {"mutation_add", "0.3"},       {"mutation_remove", "0.1"},      {"mutation_change", "0.1"},
      {"channel_min", "32"},         {"channel_max", "512"},          {"tournament_k", "2"},
      {"fid_samples", "5000"},       {"genome_limit", "4"},           {"species", "3"},
      {"batch_size", "64"},          {"batches_per_generation", "10"}, {"optimizer", "adam"},
      {"learning_rate", "0.003"},    {"pca_dims", "50"},              {"tsne_perplexity", "30"},
      {"tsne_iterations", "1000"},   {"samples_per_model", "1000"}};
  const auto echo = cli("evolve --profile paper --print-config");
  o.require(echo.status == 0, "--print-config exited " + std::to_string(echo.status));
  std::size_t matched = 0;
  for (const auto& [k, v] : table) {
    if (echo.output.find("\n" + k + " = " + v + "\n") != std::string::npos ||
        echo.output.rfind(k + " = " + v + "\n", 0) == 0) {
      ++matched;
    } else {
      o.require(false, "echo lacks '" + k + " = " + v + "'");
    }
  }
  o.require(RunConfig::paper().echo() == echo.output, "library and CLI echo differ");

  testing::TempDir dir("acc8");
  const std::string run = testing::quote((dir / "run").string());
  const auto ev = cli("evolve" + std::string(kTinyRun) + " --set generations=100 --seed 1 --out " + run);
  o.require(ev.status == 0, "evolve exited " + std::to_string(ev.status) + ": " + ev.output);
  const auto rep = cli("evaluate --run " + run + " --generations 5,10,100 --samples 60 --iterations 300 --out " +
                       testing::quote((dir / "eval").string()));
  o.require(rep.status == 0, "evaluate exited " + std::to_string(rep.status) + ": " + rep.output);
  std::size_t ok = 0;
  std::set<std::string> dgen, ggen;
  if (rep.status == 0) {
    const auto cells = parse_report_csv(read_file(dir / "eval" / "report.csv"));
    for (const JaccardCell& c : cells) {
      dgen.insert(std::to_string(c.disc_gen));
      ggen.insert(std::to_string(c.gen_gen));
      ok += c.status == "ok";
    }
    o.require(cells.size() == 9 && ok == 9 && dgen == std::set<std::string>{"5", "10", "100"} && dgen == ggen,
              "report is not a complete 3x3 matrix over 5, 10, 100");
  }
  o.detail << matched << "/" << table.size() << " published settings echoed; evaluate matrix " << dgen.size() << "x"
           << ggen.size() << " with " << ok << " ok cells";
}

std::map<std::string, std::string> csv_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().extension() == ".csv")
      out[fs::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

void criterion_9(Outcome& o) {
  testing::TempDir dir("acc9");
  FeatureMatrix a, b;
  Rng rng(9);
  a.values.resize(80, 12);
  b.values.resize(70, 12);
  for (Eigen::Index i = 0; i < a.values.size(); ++i) a.values.data()[i] = uniform_real(rng);
  for (Eigen::Index i = 0; i < b.values.size(); ++i) b.values.data()[i] = uniform_real(rng, 0, 1.2);
  save_features(dir / "a.fm", a);
  save_features(dir / "b.fm", b);
  const std::string fa = testing::quote((dir / "a.fm").string()), fb = testing::quote((dir / "b.fm").string());

  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path out = dir / ("rep" + std::to_string(rep));
    const std::string q = testing::quote(out.string());
    const std::string commands[] = {
        "evolve" + std::string(kTinyRun) + " --set generations=3 --seed 4 --out " + q + "/run",
        "evaluate --run " + q + "/run --generations 1,3 --samples 50 --iterations 200 --seed 4 --out " + q + "/eval",
        "tsne " + fa + " --perplexity 10 --iterations 250 --pca 5 --seed 4 --out " + q + "/tsne.csv",
        "fid " + fa + " " + fb + " --out " + q + "/fid.csv"};
    fs::create_directories(out);
    for (const std::string& c : commands) {
      const auto r = cli(c);
      o.require(r.status == 0, "'" + c.substr(0, c.find(' ')) + "' exited " + std::to_string(r.status) + ": " + r.output);
    }
  }
  const auto first = csv_files(dir / "rep0"), second = csv_files(dir / "rep1");
  o.require(!first.empty() && first.size() == second.size(), "different CSV sets");
  for (const auto& [name, bytes] : first) {
    ++compared;
    const auto it = second.find(name);
    if (it == second.end() || it->second != bytes) differing.push_back(name);
  }
  o.detail << compared << " CSV files compared across evolve, evaluate, tsne and fid; " << differing.size()
           << " differ";
  for (const auto& name : differing) o.require(false, name + " differs");
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<int, std::function<void(Outcome&)>>> criteria{
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4}, {5, criterion_5},
      {6, criterion_6}, {7, criterion_7}, {8, criterion_8}, {9, criterion_9}};
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail.str() << " ["
              << fmt(seconds_since(t0), 3) << " s]" << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
