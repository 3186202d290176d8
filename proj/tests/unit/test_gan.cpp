#include <doctest.h>

#include <cmath>

#include "coegan/dataset.hpp"
#include "coegan/gan.hpp"
#include "../support/oracles.hpp"

using namespace coegan;

namespace {

Network tiny_generator(std::size_t z_dim, Rng& rng) {
  Network g(Role::Generator, {z_dim});
  Layer l(deconv_geometry({z_dim, 1, 1}, 1, 2), Activation::Sigmoid, 0);
  initialize(l, rng);
  g.add_layer(l);
  return g;
}

Network tiny_discriminator(Rng& rng) {
  Network d(Role::Discriminator, {1, 2, 2});
  Layer l(linear_geometry(4, 1), Activation::Sigmoid, 0);
  initialize(l, rng);
  d.add_layer(l);
  return d;
}

Dataset two_point_dataset() {
  Dataset ds;
  ds.name = "two-point";
  ds.images = Tensor({2, 1, 2, 2}, std::vector<float>{1, 0, 0, 1, 0, 1, 1, 0});
  return ds;
}

}  // namespace

TEST_CASE("loss anchors") {
  const std::vector<float> half(16, 0.5f), ones(16, 1.0f), zeros(16, 0.0f);
  CHECK(std::abs(d_loss(half, half) - 2.0 * std::log(2.0)) < 1e-6);
  CHECK(std::abs(g_loss(half) - std::log(2.0)) < 1e-6);
  CHECK(d_loss(ones, zeros) < 1e-6);
  CHECK(g_loss(ones) < 1e-6);
  CHECK(g_loss(zeros) == doctest::Approx(-std::log(kProbabilityClamp)).epsilon(1e-12));
}

TEST_CASE("losses match the scalar-loop oracle on random batches") {
  Rng rng(99);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = uniform_int<std::size_t>(rng, 1, 64), m = uniform_int<std::size_t>(rng, 1, 64);
    std::vector<float> real(n), fake(m);
    for (float& v : real) v = static_cast<float>(uniform_real(rng));
    for (float& v : fake) v = static_cast<float>(uniform_real(rng));
    CHECK(std::abs(d_loss(real, fake) - oracle::d_loss(real, fake, kProbabilityClamp)) < 1e-6);
    CHECK(std::abs(g_loss(fake) - oracle::g_loss(fake, kProbabilityClamp)) < 1e-6);
    CHECK(d_loss(real, fake) >= 0.0);
  }
}

TEST_CASE("losses on saturated probabilities stay finite") {
  const std::vector<float> zeros(4, 0.0f), ones(4, 1.0f);
  CHECK(std::isfinite(d_loss(zeros, ones)));
  CHECK(std::isfinite(g_loss(zeros)));
}

TEST_CASE("empty batches are rejected") {
  const std::vector<float> empty, some(3, 0.5f);
  CHECK_THROWS_AS(d_loss(empty, some), PreconditionError);
  CHECK_THROWS_AS(d_loss(some, empty), PreconditionError);
  CHECK_THROWS_AS(g_loss(empty), PreconditionError);
}

TEST_CASE("latent batches are standard normal and reproducible") {
  Rng a(17), b(17);
  CHECK(sample_latent(5, 3, a) == sample_latent(5, 3, b));
  Rng big(1);
  const Tensor z = sample_latent(10000, 1, big);
  CHECK(z.shape == Shape{10000, 1});
  double mean = 0.0, var = 0.0;
  for (float v : z.data) mean += v;
  mean /= 10000.0;
  for (float v : z.data) var += (v - mean) * (v - mean);
  var /= 9999.0;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.05);
  Rng c(1);
  CHECK_THROWS_AS(sample_latent(0, 3, c), PreconditionError);
  CHECK_THROWS_AS(sample_latent(3, 0, c), PreconditionError);
}

TEST_CASE("zero batches leaves both networks unchanged") {
  Rng rng(1);
  Network g = tiny_generator(3, rng), d = tiny_discriminator(rng);
  const Network g0 = g, d0 = d;
  TrainConfig cfg;
  cfg.batches_per_generation = 0;
  cfg.z_dim = 3;
  const TrainStats s = train_pair(g, d, two_point_dataset(), cfg, 7);
  CHECK(s.batches == 0);
  CHECK(s.d_losses.empty());
  CHECK(g.layers()[0].weight == g0.layers()[0].weight);
  CHECK(d.layers()[0].weight == d0.layers()[0].weight);
}

TEST_CASE("training a pair twice from the same state gives identical weights") {
  Rng rng(2);
  const Network g0 = tiny_generator(3, rng), d0 = tiny_discriminator(rng);
  TrainConfig cfg;
  cfg.z_dim = 3;
  cfg.batch_size = 2;
  Network g1 = g0, d1 = d0, g2 = g0, d2 = d0;
  train_pair(g1, d1, two_point_dataset(), cfg, 5);
  train_pair(g2, d2, two_point_dataset(), cfg, 5);
  CHECK(g1.layers()[0].weight == g2.layers()[0].weight);
  CHECK(d1.layers()[0].weight == d2.layers()[0].weight);
  CHECK(!(d1.layers()[0].weight == d0.layers()[0].weight));
}

TEST_CASE("discriminator loss falls on a two-point dataset (regression anchor)") {
  Rng rng(0);
  Network g = tiny_generator(3, rng), d = tiny_discriminator(rng);
  TrainConfig cfg;
  cfg.z_dim = 3;
  cfg.batch_size = 2;
  cfg.batches_per_generation = 200;
  const TrainStats s = train_pair(g, d, two_point_dataset(), cfg, 0);
  REQUIRE(s.d_losses.size() == 200);
  CHECK(s.d_losses.back() < s.d_losses.front());
  CHECK_FALSE(s.nonfinite());
}

TEST_CASE("train_pair rejects a generator whose output does not match the data") {
  Rng rng(4);
  Network g(Role::Generator, {3});
  Layer l(linear_geometry(3, 5), Activation::Sigmoid, 0);
  g.add_layer(l);
  Network d = tiny_discriminator(rng);
  TrainConfig cfg;
  cfg.z_dim = 3;
  CHECK_THROWS_AS(train_pair(g, d, two_point_dataset(), cfg, 1), ShapeError);
}
