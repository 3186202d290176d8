#include "coegan/population.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace coegan {

namespace {

constexpr std::size_t kMaxThresholdAdjustments = 50;
constexpr double kMinThreshold = 0.01;
constexpr double kMaxThreshold = 1.0;

std::uint64_t role_salt(Role role) { return role == Role::Generator ? 0x67 : 0x64; }

struct Clustering {
  std::vector<Species> species;
  std::uint64_t next_species_id = 1;
  double threshold = 0.0;
};

Clustering cluster(const Population& pop, double delta) {
  Clustering c;
  c.threshold = delta;
  c.next_species_id = pop.next_species_id;
  c.species = pop.species;
  for (Species& s : c.species) s.members.clear();
  for (std::size_t i = 0; i < pop.individuals.size(); ++i) {
    const Genome& g = pop.individuals[i].genome;
    bool placed = false;
    for (Species& s : c.species) {
      if (genome_distance(g, s.representative) <= delta) {
        s.members.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) c.species.push_back(Species{c.next_species_id++, g, {i}});
  }
  std::erase_if(c.species, [](const Species& s) { return s.members.empty(); });
  for (Species& s : c.species) {
    // Keep the representative when an identical genome survives; otherwise
    // take the member closest to it.
    std::size_t chosen = s.members.front();
    double best = genome_distance(pop.individuals[chosen].genome, s.representative);
    for (std::size_t m : s.members) {
      if (pop.individuals[m].genome == s.representative) {
        chosen = m;
        best = -1.0;
        break;
      }
      const double d = genome_distance(pop.individuals[m].genome, s.representative);
      if (d < best) {
        best = d;
        chosen = m;
      }
    }
    s.representative = pop.individuals[chosen].genome;
  }
  return c;
}

std::size_t gap(std::size_t count, std::size_t target) { return count > target ? count - target : target - count; }

// Fractional ranks (ties share the mean rank) turned into scores, best = n.
std::vector<double> inverse_rank_scores(const Population& pop) {
  const std::size_t n = pop.individuals.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return fitter(pop.individuals[a], pop.individuals[b]); });
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pop.individuals[order[j + 1]].fitness == pop.individuals[order[i]].fitness) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) score[order[t]] = static_cast<double>(n) + 1.0 - mean_rank;
    i = j + 1;
  }
  return score;
}

ParameterStore restrict_store(const ParameterStore& store, const Genome& genome) {
  ParameterStore out;
  for (std::uint64_t key : genome.innovations()) {
    auto it = store.find(key);
    if (it != store.end()) out.emplace(key, it->second);
  }
  return out;
}

}  // namespace

bool fitter(const Individual& a, const Individual& b) {
  const bool an = std::isnan(a.fitness), bn = std::isnan(b.fitness);
  if (an != bn) return bn;
  if (!an && a.fitness != b.fitness) return a.fitness < b.fitness;
  return a.id < b.id;
}

std::size_t Population::best_index() const {
  if (individuals.empty()) throw PreconditionError("empty population has no best individual");
  std::size_t best = 0;
  for (std::size_t i = 1; i < individuals.size(); ++i)
    if (fitter(individuals[i], individuals[best])) best = i;
  return best;
}

const Individual& Population::best() const { return individuals[best_index()]; }

const Individual* Population::find(std::uint64_t id) const {
  for (const Individual& ind : individuals)
    if (ind.id == id) return &ind;
  return nullptr;
}

Rng individual_rng(const BuildContext& ctx, Role role, std::uint64_t id, std::uint64_t purpose) {
  return make_rng(ctx.seed, {role_salt(role), id, purpose});
}

Phenotype build_individual(const Individual& ind, const BuildContext& ctx) {
  Rng rng = individual_rng(ctx, ind.genome.role, ind.id, 0x1417);
  return build_phenotype(ind.genome, ctx.data_shape, ctx.z_dim, ind.params, ctx.space, rng);
}

void check_parameter_shapes(const Phenotype& phenotype) {
  for (const Layer& layer : phenotype.network.layers()) {
    if (layer.weight.shape != layer.geom.weight_shape() || layer.bias.shape != layer.geom.bias_shape()) {
      throw std::logic_error("layer " + std::to_string(layer.index) + " holds parameters " +
                             shape_string(layer.weight.shape) + " for geometry " +
                             shape_string(layer.geom.weight_shape()));
    }
  }
}

Population initial_population(Role role, std::size_t size, const BuildContext& ctx, InnovationCounter& innovations) {
  if (size == 0) throw PreconditionError("population size must be positive");
  Population pop;
  pop.role = role;
  for (std::size_t i = 0; i < size; ++i) {
    Individual ind;
    ind.id = pop.next_id++;
    Rng rng = individual_rng(ctx, role, ind.id, 0x9e40);
    for (std::size_t attempt = 0;; ++attempt) {
      ind.genome = random_genome(role, ctx.space, rng, innovations);
      try {
        const Phenotype ph = build_individual(ind, ctx);
        ind.params = extract_parameters(ph);
        break;
      } catch (const UnviableGenome&) {
        if (attempt >= 100) throw;
      }
    }
    pop.individuals.push_back(std::move(ind));
  }
  return pop;
}

SpeciationReport speciate(Population& pop, std::size_t target) {
  if (pop.individuals.empty()) throw PreconditionError("speciate: population is empty");
  if (target == 0) throw PreconditionError("speciate: species target must be positive");
  SpeciationReport report;

  Clustering best;
  if (pop.individuals.size() <= target) {
    best.next_species_id = pop.next_species_id;
    best.threshold = pop.threshold;
    for (std::size_t i = 0; i < pop.individuals.size(); ++i)
      best.species.push_back(Species{best.next_species_id++, pop.individuals[i].genome, {i}});
  } else {
    double delta = std::clamp(pop.threshold, kMinThreshold, kMaxThreshold);
    best = cluster(pop, delta);
    std::size_t count = best.species.size();
    while (count != target && report.adjustments < kMaxThresholdAdjustments) {
      const double next = std::clamp(count < target ? delta * 0.9 : delta * 1.1, kMinThreshold, kMaxThreshold);
      if (next == delta) break;
      delta = next;
      ++report.adjustments;
      Clustering c = cluster(pop, delta);
      count = c.species.size();
      if (gap(count, target) < gap(best.species.size(), target)) best = std::move(c);
    }
  }

  pop.species = std::move(best.species);
  pop.next_species_id = best.next_species_id;
  pop.threshold = best.threshold;
  for (const Species& s : pop.species)
    for (std::size_t m : s.members) pop.individuals[m].species = s.id;
  report.species_count = pop.species.size();
  report.threshold = pop.threshold;
  report.reached_target = report.species_count == std::min(target, pop.individuals.size());
  return report;
}

std::vector<std::size_t> species_quotas(const Population& pop, std::size_t offspring) {
  const std::vector<double> score = inverse_rank_scores(pop);
  std::vector<double> mean(pop.species.size(), 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < pop.species.size(); ++s) {
    const auto& members = pop.species[s].members;
    if (members.empty()) continue;
    for (std::size_t m : members) mean[s] += score[m];
    mean[s] /= static_cast<double>(members.size());
    total += mean[s];
  }
  std::vector<std::size_t> quota(pop.species.size(), 0);
  if (total <= 0.0) return quota;

  std::vector<double> remainder(pop.species.size(), 0.0);
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < pop.species.size(); ++s) {
    const double exact = static_cast<double>(offspring) * mean[s] / total;
    quota[s] = static_cast<std::size_t>(std::floor(exact));
    remainder[s] = exact - static_cast<double>(quota[s]);
    assigned += quota[s];
  }
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < pop.species.size(); ++s)
    if (!pop.species[s].members.empty()) order.push_back(s);
  auto lowest_id = [&](std::size_t s) { return pop.individuals[pop.species[s].members.front()].id; };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
    return lowest_id(a) < lowest_id(b);
  });
  for (std::size_t i = 0; assigned < offspring; i = (i + 1) % order.size(), ++assigned) ++quota[order[i]];
  return quota;
}

std::size_t tournament(const Population& pop, std::span<const std::size_t> members, std::size_t k, Rng& rng) {
  if (members.empty()) throw PreconditionError("tournament: species has no members");
  if (k == 0) throw PreconditionError("tournament: size must be positive");
  std::size_t winner = members[uniform_int<std::size_t>(rng, 0, members.size() - 1)];
  for (std::size_t i = 1; i < k; ++i) {
    const std::size_t rival = members[uniform_int<std::size_t>(rng, 0, members.size() - 1)];
    if (fitter(pop.individuals[rival], pop.individuals[winner])) winner = rival;
  }
  return winner;
}

Population select_and_reproduce(const Population& pop, const BuildContext& ctx, const ReproductionConfig& cfg,
                                InnovationCounter& innovations, Rng& rng, ReproductionReport* report) {
  if (pop.species.empty()) throw PreconditionError("select_and_reproduce: population has not been speciated");
  ReproductionReport local;
  ReproductionReport& rep = report ? *report : local;

  Population next;
  next.role = pop.role;
  next.generation = pop.generation + 1;
  next.threshold = pop.threshold;
  next.next_id = pop.next_id;
  next.next_species_id = pop.next_species_id;
  next.species = pop.species;
  for (Species& s : next.species) s.members.clear();

  const std::vector<std::size_t> quotas = species_quotas(pop, pop.individuals.size());
  for (std::size_t s = 0; s < pop.species.size(); ++s) {
    for (std::size_t q = 0; q < quotas[s]; ++q) {
      const Individual& parent = pop.individuals[tournament(pop, pop.species[s].members, cfg.tournament_k, rng)];
      Individual child;
      child.id = next.next_id++;
      child.parent = parent.id;
      child.species = pop.species[s].id;
      child.born = next.generation;

      bool built = false;
      for (std::size_t attempt = 0; attempt <= cfg.max_retries && !built; ++attempt) {
        Rng mutation_rng = individual_rng(ctx, pop.role, child.id, 0x6d7574 + attempt);
        child.genome = mutate(parent.genome, mutation_rng, cfg.probs, ctx.space, innovations).genome;
        child.params = restrict_store(parent.params, child.genome);
        try {
          const Phenotype ph = build_individual(child, ctx);
          check_parameter_shapes(ph);
          child.params = extract_parameters(ph);
          rep.transferred_layers += ph.transferred;
          rep.initialized_layers += ph.initialized;
          built = true;
        } catch (const UnviableGenome&) {
          ++rep.retries;
        }
      }
      if (!built) {
        child.genome = parent.genome;
        child.params = parent.params;
        ++rep.parent_copies;
      }
      next.species[s].members.push_back(next.individuals.size());
      next.individuals.push_back(std::move(child));
    }
  }
  std::erase_if(next.species, [](const Species& s) { return s.members.empty(); });
  return next;
}

std::vector<Pairing> pair_all_vs_all(const Population& gens, const Population& discs) {
  if (gens.individuals.empty() || discs.individuals.empty()) throw PreconditionError("pairing: empty population");
  std::vector<Pairing> pairs;
  pairs.reserve(gens.individuals.size() * discs.individuals.size());
  for (std::size_t g = 0; g < gens.individuals.size(); ++g)
    for (std::size_t d = 0; d < discs.individuals.size(); ++d) pairs.push_back({g, d});
  return pairs;
}

namespace {

std::vector<std::size_t> k_best(const Population& pop, std::size_t k, Rng& rng, std::vector<std::string>* log) {
  std::vector<std::size_t> idx(pop.individuals.size());
  std::iota(idx.begin(), idx.end(), 0);
  const bool evaluated = std::none_of(pop.individuals.begin(), pop.individuals.end(),
                                      [](const Individual& i) { return std::isnan(i.fitness); });
  if (evaluated) {
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return fitter(pop.individuals[a], pop.individuals[b]); });
  } else {
    std::shuffle(idx.begin(), idx.end(), rng);
    if (log) log->push_back("no fitness for " + to_string(pop.role) + "s yet; pairing with " + std::to_string(k) +
                            " random individuals");
  }
  idx.resize(k);
  return idx;
}

}  // namespace

std::vector<Pairing> pair_all_vs_k_best(const Population& gens, const Population& discs, std::size_t k, Rng& rng,
                                        std::vector<std::string>* log) {
  if (gens.individuals.empty() || discs.individuals.empty()) throw PreconditionError("pairing: empty population");
  if (k == 0 || k > gens.individuals.size() || k > discs.individuals.size()) {
    throw PreconditionError("pairing: k = " + std::to_string(k) + " must lie in [1, population size]");
  }
  const auto best_g = k_best(gens, k, rng, log);
  const auto best_d = k_best(discs, k, rng, log);
  std::set<std::pair<std::uint64_t, std::uint64_t>> seen;
  std::vector<Pairing> pairs;
  auto add = [&](std::size_t g, std::size_t d) {
    if (seen.emplace(gens.individuals[g].id, discs.individuals[d].id).second) pairs.push_back({g, d});
  };
  for (std::size_t g = 0; g < gens.individuals.size(); ++g)
    for (std::size_t d : best_d) add(g, d);
  for (std::size_t d = 0; d < discs.individuals.size(); ++d)
    for (std::size_t g : best_g) add(g, d);
  std::sort(pairs.begin(), pairs.end(), [&](const Pairing& a, const Pairing& b) {
    const auto ka = std::make_pair(gens.individuals[a.generator].id, discs.individuals[a.discriminator].id);
    const auto kb = std::make_pair(gens.individuals[b.generator].id, discs.individuals[b.discriminator].id);
    return ka < kb;
  });
  return pairs;
}

void assign_discriminator_fitness(Population& discs, std::span<const MatchResult> matches) {
  std::vector<double> sum(discs.individuals.size(), 0.0);
  std::vector<std::size_t> count(discs.individuals.size(), 0);
  for (const MatchResult& m : matches) {
    if (m.pair.discriminator >= discs.individuals.size()) throw PreconditionError("match refers to unknown discriminator");
    sum[m.pair.discriminator] += m.stats.d_losses.empty() ? std::numeric_limits<double>::quiet_NaN() : m.stats.mean_d_loss();
    ++count[m.pair.discriminator];
  }
  for (std::size_t i = 0; i < discs.individuals.size(); ++i) {
    Individual& ind = discs.individuals[i];
    const double f = count[i] ? sum[i] / static_cast<double>(count[i]) : std::numeric_limits<double>::quiet_NaN();
    ind.fitness_flagged = !std::isfinite(f);
    ind.fitness = ind.fitness_flagged ? kWorstFitness : f;
  }
}

void assign_generator_fitness(Population& gens, const std::function<double(std::size_t index)>& score) {
  for (std::size_t i = 0; i < gens.individuals.size(); ++i) {
    Individual& ind = gens.individuals[i];
    double f = std::numeric_limits<double>::quiet_NaN();
    try {
      f = score(i);
    } catch (const NumericError&) {
    }
    ind.fitness_flagged = !std::isfinite(f);
    ind.fitness = ind.fitness_flagged ? kWorstFitness : f;
  }
}

}  // namespace coegan
