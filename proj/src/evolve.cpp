#include "coegan/evolve.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "coegan/checkpoint.hpp"

namespace coegan {

namespace {

constexpr std::uint64_t kTrainStream = 0x74720000;
constexpr std::uint64_t kFidStream = 0xf1d00000;

std::string individuals_header() {
  return csv_line({"generation", "role", "id", "parent", "species", "fitness", "flagged", "genes", "parameters", "genome"});
}

void append_individuals(std::string& out, std::size_t generation, const Population& pop,
                        const std::vector<std::size_t>& parameter_counts) {
  for (std::size_t i = 0; i < pop.individuals.size(); ++i) {
    const Individual& ind = pop.individuals[i];
    out += csv_line({std::to_string(generation), to_string(pop.role), std::to_string(ind.id), std::to_string(ind.parent),
                     std::to_string(ind.species), format_number(ind.fitness), ind.fitness_flagged ? "1" : "0",
                     std::to_string(ind.genome.genes.size()), std::to_string(parameter_counts[i]),
                     genome_signature(ind.genome)});
  }
}

Checkpoint make_checkpoint(const Individual& ind, std::size_t generation, const BuildContext& ctx) {
  Checkpoint c;
  c.individual = ind;
  c.generation = generation;
  c.data_shape = ctx.data_shape;
  c.z_dim = ctx.z_dim;
  c.channel_min = ctx.space.channel_min;
  c.channel_max = ctx.space.channel_max;
  return c;
}

void write_checkpoints(const std::filesystem::path& run_dir, std::size_t generation, const Individual& g,
                       const Individual& d, const BuildContext& ctx) {
  save_checkpoint(checkpoint_path(run_dir, generation, Role::Generator), make_checkpoint(g, generation, ctx));
  save_checkpoint(checkpoint_path(run_dir, generation, Role::Discriminator), make_checkpoint(d, generation, ctx));
}

double mean_fitness(const Population& pop) {
  double s = 0.0;
  std::size_t n = 0;
  for (const Individual& ind : pop.individuals) {
    if (ind.fitness_flagged) continue;
    s += ind.fitness;
    ++n;
  }
  return n ? s / static_cast<double>(n) : kWorstFitness;
}

std::size_t to_size(const std::string& s) {
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("metrics: '" + s + "' is not an integer");
  return v;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("metrics: '" + s + "' is not a number");
  return v;
}

}  // namespace

FidContext make_fid_context(const RunConfig& cfg, const Dataset& data) {
  if (data.size() < 2) throw PreconditionError("FID reference needs at least 2 dataset samples");
  FidContext ctx;
  if (cfg.fid_backend == FidBackend::Classifier) {
    ctx.extractor = std::make_unique<NetworkFeatureExtractor>(
        train_feature_classifier(data, cfg.classifier, derive_seed(cfg.seed, {0xc1a5})));
  } else {
    ctx.extractor = std::make_unique<PixelFeatureExtractor>();
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(cfg.seed, {0x5e7});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::max<std::size_t>(2, std::min(cfg.fid_reference, data.size())));
  std::sort(idx.begin(), idx.end());
  const FeatureMatrix fm = ctx.extractor->extract(data.gather(idx));
  ctx.reference = shrink_covariance(gaussian_stats(fm), fm.n());
  return ctx;
}

Tensor generate_samples(const Network& generator, std::size_t count, std::size_t z_dim, Rng& rng, std::size_t chunk) {
  Shape shape{count};
  const Shape sample = generator.output_shape();
  shape.insert(shape.end(), sample.begin(), sample.end());
  Tensor out(shape);
  const std::size_t per = shape_size(sample);
  for (std::size_t first = 0; first < count; first += chunk) {
    const std::size_t n = std::min(chunk, count - first);
    const Tensor batch = generator.forward(sample_latent(n, z_dim, rng));
    std::copy(batch.data.begin(), batch.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(first * per));
  }
  return out;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::vector<std::size_t>> schedule_waves(std::span<const Pairing> pairs) {
  std::map<std::size_t, std::size_t> g_level, d_level;
  std::vector<std::vector<std::size_t>> waves;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::size_t level = 0;
    if (auto it = g_level.find(pairs[i].generator); it != g_level.end()) level = std::max(level, it->second + 1);
    if (auto it = d_level.find(pairs[i].discriminator); it != d_level.end()) level = std::max(level, it->second + 1);
    g_level[pairs[i].generator] = level;
    d_level[pairs[i].discriminator] = level;
    if (waves.size() <= level) waves.resize(level + 1);
    waves[level].push_back(i);
  }
  return waves;
}

std::string genome_signature(const Genome& genome) {
  std::string s;
  for (std::size_t i = 0; i < genome.genes.size(); ++i) {
    const Gene& g = genome.genes[i];
    if (i) s += '|';
    s += to_string(g.kind) + ":" + to_string(g.activation) + ":" + std::to_string(g.out);
    if (g.kernel) s += ":k" + std::to_string(g.kernel);
  }
  return s;
}

CsvRow metrics_header() {
  return {"generation",          "best_generator",        "best_generator_fid",  "mean_generator_fid",
          "best_discriminator",  "best_discriminator_loss", "mean_discriminator_loss", "generator_species",
          "discriminator_species", "generator_threshold",  "discriminator_threshold", "pairs",
          "skipped_updates",     "flagged",               "retries",             "parent_copies",
          "max_genome_length"};
}

CsvRow metrics_row(const GenerationSummary& s) {
  return {std::to_string(s.generation),
          std::to_string(s.best_generator),
          format_number(s.best_generator_fid),
          format_number(s.mean_generator_fid),
          std::to_string(s.best_discriminator),
          format_number(s.best_discriminator_loss),
          format_number(s.mean_discriminator_loss),
          std::to_string(s.generator_species),
          std::to_string(s.discriminator_species),
          format_number(s.generator_threshold),
          format_number(s.discriminator_threshold),
          std::to_string(s.pairs),
          std::to_string(s.skipped_updates),
          std::to_string(s.flagged),
          std::to_string(s.retries),
          std::to_string(s.parent_copies),
          std::to_string(s.max_genome_length)};
}

GenerationSummary parse_metrics_row(const CsvRow& row) {
  if (row.size() != metrics_header().size()) {
    throw FormatError("metrics: row has " + std::to_string(row.size()) + " fields, expected " +
                      std::to_string(metrics_header().size()));
  }
  GenerationSummary s;
  s.generation = to_size(row[0]);
  s.best_generator = to_size(row[1]);
  s.best_generator_fid = to_double(row[2]);
  s.mean_generator_fid = to_double(row[3]);
  s.best_discriminator = to_size(row[4]);
  s.best_discriminator_loss = to_double(row[5]);
  s.mean_discriminator_loss = to_double(row[6]);
  s.generator_species = to_size(row[7]);
  s.discriminator_species = to_size(row[8]);
  s.generator_threshold = to_double(row[9]);
  s.discriminator_threshold = to_double(row[10]);
  s.pairs = to_size(row[11]);
  s.skipped_updates = to_size(row[12]);
  s.flagged = to_size(row[13]);
  s.retries = to_size(row[14]);
  s.parent_copies = to_size(row[15]);
  s.max_genome_length = to_size(row[16]);
  return s;
}

std::vector<GenerationSummary> read_metrics(const std::filesystem::path& path) {
  const auto rows = parse_csv(read_file(path));
  if (rows.empty() || rows[0] != metrics_header()) throw FormatError(path.string() + ": unexpected metrics header");
  std::vector<GenerationSummary> out;
  for (std::size_t i = 1; i < rows.size(); ++i) out.push_back(parse_metrics_row(rows[i]));
  return out;
}

EvolveResult evolve(const RunConfig& cfg, const Dataset& data, const std::filesystem::path& run_dir,
                    const GenerationObserver& observer) {
  cfg.validate();
  if (data.images.rank() != 4) throw PreconditionError("evolve: dataset must be n x C x H x W");
  std::filesystem::create_directories(run_dir);
  atomic_write(run_dir / "config.txt", cfg.echo());

  BuildContext ctx;
  ctx.data_shape = data.sample_shape();
  ctx.z_dim = cfg.z_dim;
  ctx.space = cfg.gene_space();
  ctx.seed = cfg.seed;
  const TrainConfig train = cfg.train_config();
  ReproductionConfig repro;
  repro.probs = cfg.mutation;
  repro.tournament_k = cfg.tournament_k;

  InnovationCounter innovations;
  EvolveResult result;
  Population gens = initial_population(Role::Generator, cfg.generator_population, ctx, innovations);
  Population discs = initial_population(Role::Discriminator, cfg.discriminator_population, ctx, innovations);
  write_checkpoints(run_dir, 0, gens.individuals.front(), discs.individuals.front(), ctx);

  std::string metrics = csv_line(metrics_header());
  std::string individuals = individuals_header();
  atomic_write(run_dir / "metrics.csv", metrics);
  atomic_write(run_dir / "individuals.csv", individuals);
  if (cfg.generations == 0) {
    atomic_write(run_dir / "log.txt", "");
    result.generators = std::move(gens);
    result.discriminators = std::move(discs);
    return result;
  }

  const FidContext fid = make_fid_context(cfg, data);
  ReproductionReport last_repro;

  for (std::size_t generation = 1; generation <= cfg.generations; ++generation) {
    gens.generation = discs.generation = generation;

    std::vector<Pairing> pairs;
    if (cfg.pairing == PairingStrategy::AllVsAll) {
      pairs = pair_all_vs_all(gens, discs);
    } else {
      Rng pair_rng = make_rng(cfg.seed, {0x9a1, generation});
      std::vector<std::string> notes;
      pairs = pair_all_vs_k_best(gens, discs, cfg.pairing_k, pair_rng, &notes);
      for (auto& n : notes) result.log.push_back("generation " + std::to_string(generation) + ": " + n);
    }

    struct Slot {
      Network net;
      AdamState opt;
      Rng rng;
    };
    auto make_slots = [&](const Population& pop) {
      std::vector<Slot> slots;
      for (const Individual& ind : pop.individuals) {
        Phenotype ph = build_individual(ind, ctx);
        slots.push_back(Slot{std::move(ph.network), {}, individual_rng(ctx, pop.role, ind.id, kTrainStream + generation)});
      }
      return slots;
    };
    std::vector<Slot> g_slots = make_slots(gens), d_slots = make_slots(discs);

    std::vector<MatchResult> matches(pairs.size());
    for (const auto& wave : schedule_waves(pairs)) {
      parallel_for(wave.size(), cfg.jobs, [&](std::size_t w) {
        const std::size_t i = wave[w];
        Slot& g = g_slots[pairs[i].generator];
        Slot& d = d_slots[pairs[i].discriminator];
        matches[i].pair = pairs[i];
        matches[i].stats = train_pair({g.net, g.opt, g.rng}, {d.net, d.opt, d.rng}, data, train);
      });
    }

    auto store_back = [](Population& pop, std::vector<Slot>& slots, const BuildContext& c) {
      std::vector<std::size_t> counts;
      for (std::size_t i = 0; i < pop.individuals.size(); ++i) {
        Individual& ind = pop.individuals[i];
        Phenotype ph = build_individual(ind, c);
        ph.network = std::move(slots[i].net);
        ind.params = extract_parameters(ph);
        counts.push_back(ph.network.parameter_count());
        slots[i].net = std::move(ph.network);
      }
      return counts;
    };
    const auto g_params = store_back(gens, g_slots, ctx);
    const auto d_params = store_back(discs, d_slots, ctx);

    assign_discriminator_fitness(discs, matches);
    std::vector<double> fids(gens.individuals.size());
    parallel_for(gens.individuals.size(), cfg.jobs, [&](std::size_t i) {
      Rng rng = individual_rng(ctx, Role::Generator, gens.individuals[i].id, kFidStream + generation);
      try {
        fids[i] = fid_score(*fid.extractor, generate_samples(g_slots[i].net, cfg.fid_samples, cfg.z_dim, rng),
                            fid.reference);
      } catch (const NumericError&) {
        fids[i] = std::numeric_limits<double>::quiet_NaN();
      }
    });
    assign_generator_fitness(gens, [&](std::size_t i) { return fids[i]; });

    const Individual& best_g = gens.best();
    const Individual& best_d = discs.best();
    write_checkpoints(run_dir, generation, best_g, best_d, ctx);

    const SpeciationReport g_species = speciate(gens, cfg.species);
    const SpeciationReport d_species = speciate(discs, cfg.species);

    GenerationSummary s;
    s.generation = generation;
    s.best_generator = best_g.id;
    s.best_generator_fid = best_g.fitness;
    s.mean_generator_fid = mean_fitness(gens);
    s.best_discriminator = best_d.id;
    s.best_discriminator_loss = best_d.fitness;
    s.mean_discriminator_loss = mean_fitness(discs);
    s.generator_species = g_species.species_count;
    s.discriminator_species = d_species.species_count;
    s.generator_threshold = g_species.threshold;
    s.discriminator_threshold = d_species.threshold;
    s.pairs = pairs.size();
    for (const MatchResult& m : matches) s.skipped_updates += m.stats.skipped_d_updates + m.stats.skipped_g_updates;
    for (const Population* pop : {&gens, &discs})
      for (const Individual& ind : pop->individuals) {
        s.flagged += ind.fitness_flagged ? 1 : 0;
        s.max_genome_length = std::max(s.max_genome_length, ind.genome.genes.size());
      }
    s.retries = last_repro.retries;
    s.parent_copies = last_repro.parent_copies;

    metrics += csv_line(metrics_row(s));
    append_individuals(individuals, generation, gens, g_params);
    append_individuals(individuals, generation, discs, d_params);
    atomic_write(run_dir / "metrics.csv", metrics);
    atomic_write(run_dir / "individuals.csv", individuals);
    result.generations.push_back(s);
    if (observer) observer(s, gens, discs);

    if (generation < cfg.generations) {
      last_repro = {};
      Rng g_rng = make_rng(cfg.seed, {0x5e1, 1, generation});
      Rng d_rng = make_rng(cfg.seed, {0x5e1, 2, generation});
      gens = select_and_reproduce(gens, ctx, repro, innovations, g_rng, &last_repro);
      discs = select_and_reproduce(discs, ctx, repro, innovations, d_rng, &last_repro);
      if (last_repro.parent_copies) {
        result.log.push_back("generation " + std::to_string(generation + 1) + ": " +
                             std::to_string(last_repro.parent_copies) + " offspring copied from their parents");
      }
    }
  }

  std::string log;
  for (const auto& l : result.log) log += l + "\n";
  atomic_write(run_dir / "log.txt", log);
  result.generators = std::move(gens);
  result.discriminators = std::move(discs);
  return result;
}

}  // namespace coegan
