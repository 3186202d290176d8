#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "coegan/gan.hpp"
#include "coegan/genome.hpp"

namespace coegan {

// Fitness given to individuals whose evaluation produced a non-finite value.
inline constexpr double kWorstFitness = std::numeric_limits<double>::max();

struct Individual {
  std::uint64_t id = 0;
  Genome genome;
  ParameterStore params;  // keys are a subset of genome.innovations()
  double fitness = std::numeric_limits<double>::quiet_NaN();  // lower is better
  bool fitness_flagged = false;
  std::uint64_t species = 0;
  std::uint64_t parent = 0;  // 0 for the initial population
  std::size_t born = 0;  // generation of creation
};

struct Species {
  std::uint64_t id = 0;
  Genome representative;
  std::vector<std::size_t> members;  // indices into Population::individuals, ascending id
};

struct Population {
  Role role = Role::Discriminator;
  std::vector<Individual> individuals;  // ascending id
  std::vector<Species> species;
  std::size_t generation = 0;
  double threshold = 0.3;  // compatibility threshold delta
  std::uint64_t next_id = 1;
  std::uint64_t next_species_id = 1;

  // Lowest (fitness, id); requires fitness to be assigned.
  const Individual& best() const;
  std::size_t best_index() const;
  const Individual* find(std::uint64_t id) const;
};

// Strict weak order on (fitness, id): the preferred individual comes first.
bool fitter(const Individual& a, const Individual& b);

// Everything needed to turn a genome into a network for one run.
struct BuildContext {
  Shape data_shape;
  std::size_t z_dim = 100;
  GeneSpace space;
  std::uint64_t seed = 0;
};

// Initialization stream of an individual; used the first time its phenotype is built.
Rng individual_rng(const BuildContext& ctx, Role role, std::uint64_t id, std::uint64_t purpose);

Phenotype build_individual(const Individual& ind, const BuildContext& ctx);

// Throws std::logic_error when a layer's parameters disagree with its geometry.
void check_parameter_shapes(const Phenotype& phenotype);

// Individuals with one random gene each, parameters initialized.
Population initial_population(Role role, std::size_t size, const BuildContext& ctx, InnovationCounter& innovations);

struct SpeciationReport {
  std::size_t species_count = 0;
  double threshold = 0.0;
  std::size_t adjustments = 0;
  bool reached_target = false;
};

// Greedy representative clustering: each individual, in id order, joins the
// first species (in id order) whose representative lies within distance
// delta, or founds a new one. Delta is scaled by 0.9 / 1.1 until the species
// count equals `target` or the adjustment budget runs out; the closest count
// seen is kept. A population no larger than `target` gets one species per
// individual.
SpeciationReport speciate(Population& pop, std::size_t target);

// Offspring count per species (same order as pop.species), proportional to
// the mean inverse-rank score of its members; rounding by largest remainder.
std::vector<std::size_t> species_quotas(const Population& pop, std::size_t offspring);

// Index of the winner of a size-k tournament (with replacement) among members.
std::size_t tournament(const Population& pop, std::span<const std::size_t> members, std::size_t k, Rng& rng);

struct ReproductionConfig {
  MutationProbs probs;
  std::size_t tournament_k = 2;
  std::size_t max_retries = 5;
};

struct ReproductionReport {
  std::size_t retries = 0;  // unviable mutations that were re-drawn
  std::size_t parent_copies = 0;  // offspring that fell back to a copy of the parent
  std::size_t transferred_layers = 0;
  std::size_t initialized_layers = 0;
};

// Next generation: quotas per species, tournament parents, mutation and
// weight transfer by innovation id. Offspring ids continue from pop.next_id.
Population select_and_reproduce(const Population& pop, const BuildContext& ctx, const ReproductionConfig& cfg,
                                InnovationCounter& innovations, Rng& rng, ReproductionReport* report = nullptr);

// Indices into the generator and discriminator populations.
struct Pairing {
  std::size_t generator = 0;
  std::size_t discriminator = 0;

  friend bool operator==(const Pairing&, const Pairing&) = default;
};

// Pairs are ordered by (generator id, discriminator id).
std::vector<Pairing> pair_all_vs_all(const Population& gens, const Population& discs);

// Each generator meets the k fittest discriminators and each discriminator
// the k fittest generators. Populations without fitness fall back to k
// random individuals, reported through `log`.
std::vector<Pairing> pair_all_vs_k_best(const Population& gens, const Population& discs, std::size_t k, Rng& rng,
                                        std::vector<std::string>* log = nullptr);

struct MatchResult {
  Pairing pair;
  TrainStats stats;
};

// Discriminator fitness: mean over its matches of the match's mean d_loss.
void assign_discriminator_fitness(Population& discs, std::span<const MatchResult> matches);

// Generator fitness from a scorer (FID); non-finite scores become kWorstFitness, flagged.
void assign_generator_fitness(Population& gens, const std::function<double(std::size_t index)>& score);

}  // namespace coegan
