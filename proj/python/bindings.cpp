#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "coegan/config.hpp"
#include "coegan/dataset.hpp"
#include "coegan/embed.hpp"
#include "coegan/evaluate.hpp"
#include "coegan/evolve.hpp"
#include "coegan/fid.hpp"
#include "coegan/gan.hpp"

namespace py = pybind11;
using namespace coegan;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FloatArray to_array(const Tensor& t) {
  FloatArray out(std::vector<py::ssize_t>(t.shape.begin(), t.shape.end()));
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

FeatureMatrix features(const Eigen::MatrixXd& x) {
  FeatureMatrix fm;
  fm.values = x;
  return fm;
}

RunConfig make_config(const std::string& profile, const std::map<std::string, std::string>& settings) {
  RunConfig cfg = RunConfig::for_profile(profile);
  for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
  cfg.validate();
  return cfg;
}

py::dict dataset_dict(const Dataset& ds) {
  py::dict d;
  d["name"] = ds.name;
  d["images"] = to_array(ds.images);
  d["labels"] = ds.labels;
  d["checksum"] = ds.checksum;
  return d;
}

}  // namespace

PYBIND11_MODULE(coegan, m) {
  m.doc() = "Coevolutionary GAN search and t-SNE based generator evaluation";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("d_loss", [](const std::vector<float>& real, const std::vector<float>& fake) { return d_loss(real, fake); },
        py::arg("real"), py::arg("fake"));
  m.def("g_loss", [](const std::vector<float>& fake) { return g_loss(fake); }, py::arg("fake"));

  m.def(
      "gaussian_stats",
      [](const Eigen::MatrixXd& x) {
        const GaussianStats s = gaussian_stats(features(x));
        return py::make_tuple(s.mu, s.sigma);
      },
      py::arg("features"));
  m.def(
      "frechet_distance",
      [](const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& sigma_a, const Eigen::VectorXd& mu_b,
         const Eigen::MatrixXd& sigma_b) {
        return frechet_distance(GaussianStats{mu_a, sigma_a}, GaussianStats{mu_b, sigma_b});
      },
      py::arg("mu_a"), py::arg("sigma_a"), py::arg("mu_b"), py::arg("sigma_b"));
  m.def(
      "fid",
      [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
        return frechet_distance(gaussian_stats(features(a)), gaussian_stats(features(b)));
      },
      py::arg("a"), py::arg("b"), "Frechet distance between Gaussian fits of two feature matrices.");

  m.def(
      "pca",
      [](const Eigen::MatrixXd& x, std::size_t k) {
        const PcaResult r = pca_reduce(features(x), k);
        return py::make_tuple(r.projected.values, r.variances, r.components);
      },
      py::arg("x"), py::arg("k"));
  m.def("affinities", [](const Eigen::MatrixXd& x, double perplexity) { return compute_affinities(x, perplexity).p; },
        py::arg("x"), py::arg("perplexity") = 30.0);
  m.def(
      "tsne",
      [](const Eigen::MatrixXd& x, double perplexity, std::size_t iterations, std::uint64_t seed) {
        TsneConfig cfg;
        cfg.perplexity = perplexity;
        cfg.iterations = iterations;
        cfg.seed = seed;
        TsneResult r;
        {
          py::gil_scoped_release release;
          r = tsne_embed(features(x), cfg);
        }
        return py::make_tuple(r.points, r.kl);
      },
      py::arg("x"), py::arg("perplexity") = 30.0, py::arg("iterations") = 1000, py::arg("seed") = 0);
  m.def(
      "normalize_map",
      [](const Eigen::MatrixXd& points) {
        return normalize_map(points, std::vector<std::string>(static_cast<std::size_t>(points.rows())), "").points;
      },
      py::arg("points"));
  m.def("map_distances", &map_distances, py::arg("mg"), py::arg("md"));
  m.def(
      "threshold_tau",
      [](const std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>>& maps) {
        std::vector<MapPair> pairs;
        for (const auto& [g, d] : maps) pairs.push_back({g, d});
        return threshold_tau(pairs).tau;
      },
      py::arg("maps"), "Median minimum distance over (generated, dataset) map pairs.");
  m.def(
      "jaccard",
      [](const Eigen::MatrixXd& mg, const Eigen::MatrixXd& md, double tau, const std::string& variant) {
        return jaccard_index(mg, md, tau, parse_jaccard_variant(variant)).j;
      },
      py::arg("mg"), py::arg("md"), py::arg("tau"), py::arg("variant") = "symmetric");
  m.def("grid_montage", [](const Eigen::MatrixXd& points, std::size_t g) { return grid_montage(points, g).cell; },
        py::arg("points"), py::arg("grid"));

  m.def(
      "synth_dataset",
      [](std::size_t modes, std::size_t n, std::size_t height, std::size_t width, double noise, const std::string& kind,
         std::uint64_t seed) {
        SynthSpec spec;
        spec.modes = modes;
        spec.n = n;
        spec.height = height;
        spec.width = width;
        spec.noise = noise;
        spec.kind = parse_synth_kind(kind);
        return dataset_dict(synth_dataset(spec, seed));
      },
      py::arg("modes") = 2, py::arg("n") = 1000, py::arg("height") = 8, py::arg("width") = 8, py::arg("noise") = 0.1,
      py::arg("kind") = "gaussian-mixture", py::arg("seed") = 0);
  m.def(
      "load_idx",
      [](const std::filesystem::path& images, std::optional<std::filesystem::path> labels) {
        return dataset_dict(load_idx(images, labels));
      },
      py::arg("images"), py::arg("labels") = std::nullopt);

  m.def(
      "config",
      [](const std::string& profile, const std::map<std::string, std::string>& settings) {
        return make_config(profile, settings).to_map();
      },
      py::arg("profile") = "desk", py::arg("settings") = std::map<std::string, std::string>{},
      "Resolved configuration as a key -> value dict.");
  m.def(
      "evolve",
      [](const std::filesystem::path& out, const std::string& profile, const std::map<std::string, std::string>& settings) {
        const RunConfig cfg = make_config(profile, settings);
        py::gil_scoped_release release;
        evolve(cfg, load_dataset(cfg), out);
      },
      py::arg("out"), py::arg("profile") = "desk", py::arg("settings") = std::map<std::string, std::string>{},
      "Runs the search and writes the run directory.");
  m.def(
      "read_metrics",
      [](const std::filesystem::path& path) {
        const CsvRow header = metrics_header();
        py::list rows;
        for (const GenerationSummary& s : read_metrics(path)) {
          const CsvRow row = metrics_row(s);
          py::dict d;
          for (std::size_t i = 0; i < header.size(); ++i) d[py::str(header[i])] = row[i];
          rows.append(d);
        }
        return rows;
      },
      py::arg("path"));
  m.def(
      "evaluate_run",
      [](const std::filesystem::path& run, const std::vector<std::size_t>& generations, const std::string& profile,
         const std::map<std::string, std::string>& settings, std::optional<std::filesystem::path> out) {
        const RunConfig cfg = make_config(profile, settings);
        EvalReport rep;
        {
          py::gil_scoped_release release;
          rep = evaluate_run(run, generations, load_dataset(cfg), EvalConfig::from(cfg));
          if (out) write_report(rep, *out);
        }
        py::list cells;
        for (const JaccardCell& c : rep.cells) {
          py::dict d;
          d["disc_gen"] = c.disc_gen;
          d["gen_gen"] = c.gen_gen;
          d["j"] = c.j;
          d["status"] = c.status;
          cells.append(d);
        }
        py::dict r;
        r["tau"] = rep.tau;
        r["cells"] = cells;
        r["warnings"] = rep.warnings;
        return r;
      },
      py::arg("run"), py::arg("generations"), py::arg("profile") = "desk",
      py::arg("settings") = std::map<std::string, std::string>{}, py::arg("out") = std::nullopt,
      "Cross-generation Jaccard matrix for a run directory. `settings` must describe the run's dataset.");
}
