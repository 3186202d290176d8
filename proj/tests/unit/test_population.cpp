#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "coegan/config.hpp"
#include "coegan/population.hpp"

using namespace coegan;

namespace {

Genome conv_genome(std::vector<Activation> acts) {
  Genome g;
  g.role = Role::Discriminator;
  std::uint64_t inn = 1;
  for (Activation a : acts) g.genes.push_back(Gene{LayerKind::Conv2d, a, 32, 3, inn++});
  g.input_innovation = 100;
  g.output_innovation = 101;
  return g;
}

Population population_of(const std::vector<Genome>& genomes, const std::vector<double>& fitness = {}) {
  Population pop;
  pop.role = genomes.empty() ? Role::Discriminator : genomes.front().role;
  for (std::size_t i = 0; i < genomes.size(); ++i) {
    Individual ind;
    ind.id = pop.next_id++;
    ind.genome = genomes[i];
    if (i < fitness.size()) ind.fitness = fitness[i];
    pop.individuals.push_back(ind);
  }
  return pop;
}

void check_partition(const Population& pop) {
  std::vector<int> seen(pop.individuals.size(), 0);
  for (const Species& s : pop.species) {
    CHECK_FALSE(s.members.empty());
    for (std::size_t m : s.members) {
      ++seen[m];
      CHECK(pop.individuals[m].species == s.id);
    }
  }
  for (int c : seen) CHECK(c == 1);
}

BuildContext small_context(std::uint64_t seed = 1) {
  BuildContext ctx;
  ctx.data_shape = {1, 8, 8};
  ctx.z_dim = 8;
  ctx.space.channel_min = 4;
  ctx.space.channel_max = 8;
  ctx.seed = seed;
  return ctx;
}

}  // namespace

TEST_CASE("ten clones form one species whatever the target") {
  Population pop = population_of(std::vector<Genome>(10, conv_genome({Activation::ReLU})));
  const SpeciationReport r = speciate(pop, 3);
  CHECK(r.species_count == 1);
  CHECK_FALSE(r.reached_target);
  CHECK(r.adjustments <= 50);
  check_partition(pop);
}

TEST_CASE("two well separated genome clusters are recovered with target 2") {
  std::vector<Genome> genomes;
  for (int i = 0; i < 4; ++i) genomes.push_back(conv_genome({Activation::ReLU, Activation::ReLU}));
  for (int i = 0; i < 4; ++i) genomes.push_back(conv_genome({Activation::Tanh, Activation::Sigmoid}));
  // Interleave so the clustering order does not give the answer away.
  std::swap(genomes[1], genomes[6]);
  Population pop = population_of(genomes);
  const SpeciationReport r = speciate(pop, 2);
  CHECK(r.species_count == 2);
  check_partition(pop);
  for (const Species& s : pop.species) {
    const Activation first = pop.individuals[s.members.front()].genome.genes[0].activation;
    for (std::size_t m : s.members) CHECK(pop.individuals[m].genome.genes[0].activation == first);
  }
}

TEST_CASE("target of three species is reached by raising the threshold") {
  const RunConfig cfg = RunConfig::paper();
  using A = Activation;
  // Three families; inside each family genomes differ by one position, so the
  // starting threshold of 0.3 splits them and only a larger one merges them.
  const std::vector<Genome> genomes{
      conv_genome({A::ReLU, A::ReLU}),       conv_genome({A::Tanh, A::Tanh}), conv_genome({A::ELU, A::ELU, A::ELU}),
      conv_genome({A::ReLU, A::LeakyReLU}),  conv_genome({A::Tanh, A::Sigmoid}), conv_genome({A::ELU, A::ELU, A::ReLU}),
      conv_genome({A::ReLU, A::ReLU}),       conv_genome({A::Tanh, A::Tanh}), conv_genome({A::ELU, A::ELU, A::ELU}),
      conv_genome({A::ELU, A::ELU, A::ELU})};
  Population pop = population_of(genomes);
  const SpeciationReport r = speciate(pop, cfg.species);
  CHECK(r.species_count == 3);
  CHECK(r.reached_target);
  CHECK(r.adjustments > 0);
  CHECK(r.threshold >= 0.5);
  check_partition(pop);
}

TEST_CASE("population no larger than the target gets one species each") {
  Population pop = population_of(std::vector<Genome>(2, conv_genome({Activation::ReLU})));
  speciate(pop, 3);
  CHECK(pop.species.size() == 2);
  check_partition(pop);
}

TEST_CASE("species ids persist when representatives survive") {
  std::vector<Genome> genomes;
  for (int i = 0; i < 3; ++i) genomes.push_back(conv_genome({Activation::ReLU, Activation::ReLU}));
  for (int i = 0; i < 3; ++i) genomes.push_back(conv_genome({Activation::Tanh, Activation::Sigmoid}));
  Population pop = population_of(genomes);
  speciate(pop, 2);
  std::map<std::uint64_t, Activation> before;
  for (const Species& s : pop.species) before[s.id] = s.representative.genes[0].activation;
  speciate(pop, 2);
  for (const Species& s : pop.species) {
    REQUIRE(before.count(s.id) == 1);
    CHECK(before[s.id] == s.representative.genes[0].activation);
  }
}

TEST_CASE("equal fitness gives uniform quotas up to rounding") {
  std::vector<Genome> genomes;
  for (int i = 0; i < 3; ++i) genomes.push_back(conv_genome({Activation::ReLU}));
  for (int i = 0; i < 3; ++i) genomes.push_back(conv_genome({Activation::Tanh}));
  for (int i = 0; i < 3; ++i) genomes.push_back(conv_genome({Activation::ELU}));
  Population pop = population_of(genomes, std::vector<double>(9, 1.0));
  speciate(pop, 3);
  REQUIRE(pop.species.size() == 3);
  const auto q = species_quotas(pop, 10);
  CHECK(q[0] + q[1] + q[2] == 10);
  for (std::size_t v : q) CHECK((v == 3 || v == 4));
}

TEST_CASE("a species with a strictly better mean rank gets a strictly larger quota") {
  // species A: ranks 1 and 2, species B: ranks 3 and 4 (inverse-rank scores 4,3 vs 2,1).
  std::vector<Genome> genomes{conv_genome({Activation::ReLU}), conv_genome({Activation::ReLU}),
                              conv_genome({Activation::Tanh}), conv_genome({Activation::Tanh})};
  Population pop = population_of(genomes, {0.1, 0.2, 0.3, 0.4});
  speciate(pop, 2);
  REQUIRE(pop.species.size() == 2);
  const auto q = species_quotas(pop, 4);
  // Exact shares 4*3.5/5 = 2.8 and 4*1.5/5 = 1.2.
  CHECK(q[0] == 3);
  CHECK(q[1] == 1);
}

TEST_CASE("tournament picks the fitter contestant and breaks ties by lower id") {
  Population pop = population_of(std::vector<Genome>(4, conv_genome({Activation::ReLU})), {0.5, 0.2, 0.2, 0.9});
  const std::vector<std::size_t> all{0, 1, 2, 3};
  Rng rng(1);
  std::map<std::size_t, int> wins;
  for (int t = 0; t < 2000; ++t) ++wins[tournament(pop, all, 2, rng)];
  // with replacement the worst wins only when drawn twice
  CHECK(wins[3] < wins[0]);
  CHECK(wins[1] > wins[2]);
  CHECK(wins[1] > wins[0]);
  const std::vector<std::size_t> tied{1, 2};
  for (int t = 0; t < 50; ++t) {
    const std::size_t w = tournament(pop, tied, 8, rng);
    CHECK((w == 1 || w == 2));
  }
  Population ties = population_of(std::vector<Genome>(2, conv_genome({Activation::ReLU})), {0.3, 0.3});
  const std::vector<std::size_t> both{0, 1};
  std::map<std::size_t, int> tie_wins;
  for (int t = 0; t < 400; ++t) ++tie_wins[tournament(ties, both, 2, rng)];
  CHECK(tie_wins[0] > 2 * tie_wins[1]);
}

TEST_CASE("all-vs-all pairing sizes") {
  auto make = [](std::size_t n) { return population_of(std::vector<Genome>(n, conv_genome({Activation::ReLU}))); };
  CHECK(pair_all_vs_all(make(10), make(10)).size() == 100);
  CHECK(pair_all_vs_all(make(1), make(1)).size() == 1);
  const auto pairs = pair_all_vs_all(make(3), make(2));
  CHECK(pairs.size() == 6);
  std::map<std::size_t, int> per_g;
  for (const Pairing& p : pairs) ++per_g[p.generator];
  for (auto& [g, c] : per_g) CHECK(c == 2);
}

TEST_CASE("all-vs-k-best pairing") {
  const Genome g0 = conv_genome({Activation::ReLU});
  Population gens = population_of(std::vector<Genome>(3, g0), {0.5, 0.1, 0.9});
  Population discs = population_of(std::vector<Genome>(3, g0), {0.4, 0.8, 0.2});
  Rng rng(1);

  SUBCASE("k equal to the population size is all-vs-all") {
    CHECK(pair_all_vs_k_best(gens, discs, 3, rng) == pair_all_vs_all(gens, discs));
  }
  SUBCASE("k = 1 with unique bests on a 3x3 instance") {
    const auto pairs = pair_all_vs_k_best(gens, discs, 1, rng);
    CHECK(pairs.size() == 3 + 3 - 1);
    for (const Pairing& p : pairs) CHECK((p.generator == 1 || p.discriminator == 2));
  }
  SUBCASE("ties go to the lower id") {
    Population tied = population_of(std::vector<Genome>(3, g0), {0.3, 0.3, 0.3});
    const auto pairs = pair_all_vs_k_best(tied, discs, 1, rng);
    for (const Pairing& p : pairs) CHECK((p.generator == 0 || p.discriminator == 2));
  }
  SUBCASE("missing fitness falls back to random k and is logged") {
    Population fresh = population_of(std::vector<Genome>(3, g0));
    std::vector<std::string> log;
    const auto pairs = pair_all_vs_k_best(fresh, discs, 1, rng, &log);
    CHECK(pairs.size() == 5);
    CHECK_FALSE(log.empty());
  }
}

TEST_CASE("discriminator fitness is the mean loss over its matches") {
  Population discs = population_of(std::vector<Genome>(2, conv_genome({Activation::ReLU})));
  std::vector<MatchResult> matches(3);
  matches[0].pair = {0, 0};
  matches[0].stats.d_losses = {1e-7, 2e-7};
  matches[1].pair = {1, 0};
  matches[1].stats.d_losses = {0.0};
  matches[2].pair = {0, 1};
  matches[2].stats.d_losses = {1.0, 3.0};
  assign_discriminator_fitness(discs, matches);
  CHECK(discs.individuals[0].fitness == doctest::Approx(0.75e-7));
  CHECK(discs.individuals[0].fitness < 1e-6);  // perfect separation
  CHECK(discs.individuals[1].fitness == doctest::Approx(2.0));
}

TEST_CASE("non-finite generator fitness becomes the worst value and is flagged") {
  Population gens = population_of(std::vector<Genome>(3, conv_genome({Activation::ReLU})));
  assign_generator_fitness(gens, [](std::size_t i) {
    if (i == 0) return std::nan("");
    if (i == 1) throw NumericError("diverged");
    return 4.0;
  });
  CHECK(gens.individuals[0].fitness == kWorstFitness);
  CHECK(gens.individuals[0].fitness_flagged);
  CHECK(gens.individuals[1].fitness == kWorstFitness);
  CHECK(gens.individuals[1].fitness_flagged);
  CHECK(gens.individuals[2].fitness == 4.0);
  CHECK(gens.best_index() == 2);
}

TEST_CASE("reproduction preserves size, continues ids and keeps parameter shapes safe") {
  const BuildContext ctx = small_context();
  InnovationCounter inn;
  Population pop = initial_population(Role::Generator, 6, ctx, inn);
  Rng frng(4);
  for (Individual& ind : pop.individuals) ind.fitness = uniform_real(frng);
  speciate(pop, 3);
  ReproductionConfig rc;
  rc.probs = MutationProbs{0.6, 0.2, 0.4};
  for (int round = 0; round < 5; ++round) {
    Rng rng(static_cast<std::uint64_t>(round));
    ReproductionReport rep;
    const std::uint64_t first_new = pop.next_id;
    Population next = select_and_reproduce(pop, ctx, rc, inn, rng, &rep);
    REQUIRE(next.individuals.size() == pop.individuals.size());
    for (const Individual& child : next.individuals) {
      CHECK(child.id >= first_new);
      CHECK(pop.find(child.parent) != nullptr);
      CHECK(child.genome.genes.size() <= ctx.space.genome_limit);
      const auto keys = child.genome.innovations();
      for (const auto& [k, v] : child.params) CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
      const Phenotype ph = build_individual(child, ctx);
      CHECK_NOTHROW(check_parameter_shapes(ph));
      CHECK(ph.initialized == 0);
    }
    for (Individual& ind : next.individuals) ind.fitness = uniform_real(frng);
    speciate(next, 3);
    pop = std::move(next);
  }
}

TEST_CASE("reproduction is deterministic") {
  const BuildContext ctx = small_context(9);
  InnovationCounter a_inn, b_inn;
  Population a = initial_population(Role::Discriminator, 5, ctx, a_inn);
  Population b = initial_population(Role::Discriminator, 5, ctx, b_inn);
  for (std::size_t i = 0; i < 5; ++i) a.individuals[i].fitness = b.individuals[i].fitness = 0.1 * double(i % 3);
  speciate(a, 3);
  speciate(b, 3);
  Rng ra(2), rb(2);
  const Population na = select_and_reproduce(a, ctx, ReproductionConfig{}, a_inn, ra);
  const Population nb = select_and_reproduce(b, ctx, ReproductionConfig{}, b_inn, rb);
  REQUIRE(na.individuals.size() == nb.individuals.size());
  for (std::size_t i = 0; i < na.individuals.size(); ++i) {
    CHECK(na.individuals[i].genome == nb.individuals[i].genome);
    CHECK(na.individuals[i].params == nb.individuals[i].params);
    CHECK(na.individuals[i].parent == nb.individuals[i].parent);
  }
}
