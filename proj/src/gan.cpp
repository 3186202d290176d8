#include "coegan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coegan {

namespace {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

bool inside_clamp(double p) { return p > kProbabilityClamp && p < 1.0 - kProbabilityClamp; }

// Sequential reader over a shuffled ordering of the dataset, wrapping around.
class BatchCursor {
 public:
  BatchCursor(const Dataset& data, Rng& rng) : data_(data), order_(data.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng);
  }

  Tensor next(std::size_t count) {
    std::vector<std::size_t> idx(count);
    for (std::size_t& i : idx) {
      i = order_[pos_];
      pos_ = (pos_ + 1) % order_.size();
    }
    return data_.gather(idx);
  }

 private:
  const Dataset& data_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

double d_loss(std::span<const float> d_real, std::span<const float> d_fake) {
  if (d_real.empty() || d_fake.empty()) throw PreconditionError("d_loss: empty probability batch");
  double real = 0.0;
  for (float p : d_real) real += std::log(clamp_probability(p));
  double fake = 0.0;
  for (float p : d_fake) fake += std::log(1.0 - clamp_probability(p));
  return -real / static_cast<double>(d_real.size()) - fake / static_cast<double>(d_fake.size());
}

double g_loss(std::span<const float> d_fake) {
  if (d_fake.empty()) throw PreconditionError("g_loss: empty probability batch");
  double s = 0.0;
  for (float p : d_fake) s += std::log(clamp_probability(p));
  return -s / static_cast<double>(d_fake.size());
}

Tensor sample_latent(std::size_t n, std::size_t z_dim, Rng& rng) {
  if (n == 0 || z_dim == 0) throw PreconditionError("sample_latent: n and z_dim must be positive");
  Tensor z({n, z_dim});
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (float& v : z.data) v = dist(rng);
  return z;
}

double TrainStats::mean_d_loss() const { return mean_of(d_losses); }
double TrainStats::mean_g_loss() const { return mean_of(g_losses); }

TrainStats train_pair(Trainee generator, Trainee discriminator, const Dataset& data, const TrainConfig& cfg) {
  Network& g = generator.net;
  Network& d = discriminator.net;
  if (g.output_shape() != data.sample_shape()) {
    throw ShapeError("generator output " + shape_string(g.output_shape()) + " does not match dataset samples " +
                     shape_string(data.sample_shape()));
  }
  if (shape_size(d.output_shape()) != 1) throw ShapeError("discriminator must emit one value per sample");

  TrainStats stats;
  if (cfg.batches_per_generation == 0) return stats;
  if (cfg.batch_size == 0) throw PreconditionError("train_pair: batch size must be positive");

  BatchCursor cursor(data, discriminator.rng);
  const std::size_t b = cfg.batch_size;
  const double inv_b = 1.0 / static_cast<double>(b);

  for (std::size_t it = 0; it < cfg.batches_per_generation; ++it) {
    ++stats.batches;

    // Discriminator half-step on real + fake.
    {
      Tensor real = cursor.next(b);
      Tensor fake = g.forward(sample_latent(b, cfg.z_dim, generator.rng));
      fake.shape = real.shape;
      ForwardTrace trace;
      Tensor probs = d.forward(concat_batch(real, fake), trace);
      std::span<const float> p(probs.data);
      const double loss = d_loss(p.subspan(0, b), p.subspan(b, b));
      stats.d_losses.push_back(loss);
      if (!std::isfinite(loss) || !probs.all_finite()) {
        ++stats.skipped_d_updates;
      } else {
        Tensor upstream(probs.shape);
        for (std::size_t i = 0; i < b; ++i) {
          const double pr = p[i];
          const double pf = p[b + i];
          upstream.data[i] = inside_clamp(pr) ? static_cast<float>(-inv_b / pr) : 0.0f;
          upstream.data[b + i] = inside_clamp(pf) ? static_cast<float>(inv_b / (1.0 - pf)) : 0.0f;
        }
        NetworkGradients grads = d.backward(trace, upstream, false);
        auto params = d.parameters();
        stats.rejected_param_groups += adam_step(params, grads.params, discriminator.optimizer, cfg.adam).rejected_groups;
      }
    }

    // Generator half-step through the frozen discriminator.
    {
      ForwardTrace g_trace;
      Tensor fake = g.forward(sample_latent(b, cfg.z_dim, generator.rng), g_trace);
      ForwardTrace d_trace;
      Tensor probs = d.forward(fake, d_trace);
      const double loss = g_loss(probs.data);
      stats.g_losses.push_back(loss);
      if (!std::isfinite(loss) || !probs.all_finite()) {
        ++stats.skipped_g_updates;
      } else {
        Tensor upstream(probs.shape);
        for (std::size_t i = 0; i < b; ++i) {
          const double pf = probs.data[i];
          upstream.data[i] = inside_clamp(pf) ? static_cast<float>(-inv_b / pf) : 0.0f;
        }
        NetworkGradients d_grads = d.backward(d_trace, upstream, true);
        d_grads.input.shape = fake.shape;
        NetworkGradients g_grads = g.backward(g_trace, d_grads.input, false);
        auto params = g.parameters();
        stats.rejected_param_groups += adam_step(params, g_grads.params, generator.optimizer, cfg.adam).rejected_groups;
      }
    }
  }
  return stats;
}

TrainStats train_pair(Network& generator, Network& discriminator, const Dataset& data, const TrainConfig& cfg,
                      std::uint64_t seed) {
  AdamState g_opt, d_opt;
  Rng g_rng = make_rng(seed, {1});
  Rng d_rng = make_rng(seed, {2});
  return train_pair({generator, g_opt, g_rng}, {discriminator, d_opt, d_rng}, data, cfg);
}

}  // namespace coegan
