#include "coegan/genome.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace coegan {

namespace {

bool allowed_in_role(Role role, LayerKind kind) {
  if (role == Role::Generator) return kind != LayerKind::Conv2d;
  return kind != LayerKind::Deconv2d;
}

// Kinds that come first in the structural order of each role.
bool leading_kind(Role role, LayerKind kind) {
  return role == Role::Generator ? kind == LayerKind::Linear : kind == LayerKind::Conv2d;
}

template <class T>
const T& pick(const std::vector<T>& options, Rng& rng) {
  return options[uniform_int<std::size_t>(rng, 0, options.size() - 1)];
}

// Redraws from `options` avoiding `current` whenever another value exists.
template <class T>
T redraw(const std::vector<T>& options, const T& current, Rng& rng) {
  std::vector<T> others;
  for (const T& o : options)
    if (!(o == current)) others.push_back(o);
  return others.empty() ? current : pick(others, rng);
}

void load_or_init(Layer& layer, std::uint64_t key, const ParameterStore& store, Rng& rng, Phenotype& ph) {
  auto it = store.find(key);
  if (it != store.end() && it->second.weight.shape == layer.weight.shape && it->second.bias.shape == layer.bias.shape) {
    layer.weight = it->second.weight;
    layer.bias = it->second.bias;
    ++ph.transferred;
  } else {
    initialize(layer, rng);
    ++ph.initialized;
  }
}

void push_layer(Phenotype& ph, Geometry geom, Activation act, std::uint64_t key, const ParameterStore& store,
                Rng& rng) {
  Layer layer(std::move(geom), act);
  load_or_init(layer, key, store, rng, ph);
  ph.network.add_layer(std::move(layer));
  ph.layer_keys.push_back(key);
}

Phenotype build_discriminator(const Genome& genome, const Shape& data_shape, const ParameterStore& store, Rng& rng) {
  Phenotype ph;
  ph.network = Network(Role::Discriminator, data_shape);
  Shape current = data_shape;
  for (const Gene& gene : genome.genes) {
    if (gene.kind == LayerKind::Conv2d) {
      if (current.size() != 3) throw UnviableGenome("convolution gene after a linear gene");
      Geometry g = conv_geometry(current, gene.out, gene.kernel);
      current = g.out_shape;
      push_layer(ph, std::move(g), gene.activation, gene.innovation, store, rng);
    } else {
      Geometry g = linear_geometry(shape_size(current), gene.out);
      current = g.out_shape;
      push_layer(ph, std::move(g), gene.activation, gene.innovation, store, rng);
    }
  }
  const bool has_output = !genome.genes.empty() && genome.genes.back().kind == LayerKind::Linear &&
                          genome.genes.back().out == 1 && genome.genes.back().activation == Activation::Sigmoid;
  if (!has_output) {
    push_layer(ph, linear_geometry(shape_size(current), 1), Activation::Sigmoid, genome.output_innovation, store, rng);
  }
  return ph;
}

Phenotype build_generator(const Genome& genome, const Shape& data_shape, std::size_t z_dim,
                          const ParameterStore& store, const GeneSpace& space, Rng& rng) {
  std::vector<const Gene*> linear, deconv;
  for (const Gene& gene : genome.genes) (gene.kind == LayerKind::Linear ? linear : deconv).push_back(&gene);

  const std::size_t channels = data_shape[0], height = data_shape[1], width = data_shape[2];
  const bool append_output = deconv.empty() || deconv.back()->out != channels;
  const std::size_t doublings = deconv.size() + (append_output ? 1 : 0);
  const std::size_t factor = std::size_t{1} << doublings;
  if (doublings >= 31 || height % factor != 0 || width % factor != 0) {
    throw UnviableGenome("data " + shape_string(data_shape) + " is not divisible by 2^" + std::to_string(doublings) +
                         " for " + std::to_string(deconv.size()) + " deconvolution gene(s)" +
                         (append_output ? " plus the output layer" : ""));
  }
  const std::size_t h0 = height / factor, w0 = width / factor;

  // Reshape target (c, h0, w0); the last linear layer is coerced to c*h0*w0.
  std::size_t c = space.channel_min;
  if (!linear.empty()) {
    const double ratio = static_cast<double>(linear.back()->out) / static_cast<double>(h0 * w0);
    c = static_cast<std::size_t>(std::llround(ratio));
  }
  c = std::clamp(c, space.channel_min, space.channel_max);
  const std::size_t reshape_features = c * h0 * w0;

  Phenotype ph;
  ph.network = Network(Role::Generator, {z_dim});
  std::size_t features = z_dim;
  if (linear.empty()) {
    push_layer(ph, linear_geometry(features, reshape_features), Activation::ReLU, genome.input_innovation, store, rng);
  } else {
    for (std::size_t i = 0; i < linear.size(); ++i) {
      const std::size_t out = (i + 1 == linear.size()) ? reshape_features : linear[i]->out;
      push_layer(ph, linear_geometry(features, out), linear[i]->activation, linear[i]->innovation, store, rng);
      features = out;
    }
  }

  Shape current{c, h0, w0};
  for (const Gene* gene : deconv) {
    Geometry g = deconv_geometry(current, gene->out, gene->kernel);
    current = g.out_shape;
    push_layer(ph, std::move(g), gene->activation, gene->innovation, store, rng);
  }
  if (append_output) {
    Geometry g = deconv_geometry(current, channels, 3);
    current = g.out_shape;
    push_layer(ph, std::move(g), Activation::Sigmoid, genome.output_innovation, store, rng);
  }
  if (current != data_shape) {
    throw UnviableGenome("generator reaches " + shape_string(current) + " instead of " + shape_string(data_shape));
  }
  return ph;
}

}  // namespace

std::vector<std::uint64_t> Genome::innovations() const {
  std::vector<std::uint64_t> ids;
  for (const Gene& g : genes) ids.push_back(g.innovation);
  ids.push_back(input_innovation);
  ids.push_back(output_innovation);
  return ids;
}

std::string Genome::describe() const {
  std::ostringstream os;
  os << to_string(role) << "[";
  for (std::size_t i = 0; i < genes.size(); ++i) {
    const Gene& g = genes[i];
    if (i) os << ", ";
    os << to_string(g.kind) << "(" << to_string(g.activation) << ", out " << g.out;
    if (g.kernel) os << ", k" << g.kernel;
    os << ", #" << g.innovation << ")";
  }
  os << "]";
  return os.str();
}

void validate(const Genome& genome, std::size_t genome_limit) {
  if (genome.genes.empty()) throw PreconditionError("genome has no genes");
  if (genome.genes.size() > genome_limit) {
    throw PreconditionError("genome has " + std::to_string(genome.genes.size()) + " genes, limit is " +
                            std::to_string(genome_limit));
  }
  bool leading = true;
  for (const Gene& g : genome.genes) {
    if (!allowed_in_role(genome.role, g.kind)) {
      throw PreconditionError(to_string(g.kind) + " gene is not allowed in a " + to_string(genome.role));
    }
    if (g.out == 0) throw PreconditionError("gene with zero outputs");
    if ((g.kind == LayerKind::Linear) != (g.kernel == 0)) throw PreconditionError("kernel size present on wrong gene kind");
    const bool lead = leading_kind(genome.role, g.kind);
    if (lead && !leading) throw PreconditionError("genes violate the structural order of a " + to_string(genome.role));
    leading = leading && lead;
  }
}

std::vector<LayerKind> creatable_kinds(Role role, const GeneSpace& space) {
  std::vector<LayerKind> kinds{role == Role::Generator ? LayerKind::Deconv2d : LayerKind::Conv2d};
  if (space.allow_linear) kinds.push_back(LayerKind::Linear);
  return kinds;
}

Gene random_gene(LayerKind kind, const GeneSpace& space, Rng& rng, InnovationCounter& innovations) {
  Gene g;
  g.kind = kind;
  g.activation = pick(space.activations, rng);
  g.out = uniform_int<std::size_t>(rng, space.channel_min, space.channel_max);
  g.kernel = kind == LayerKind::Linear ? 0 : pick(space.kernel_sizes, rng);
  g.innovation = innovations.next();
  return g;
}

Genome random_genome(Role role, const GeneSpace& space, Rng& rng, InnovationCounter& innovations) {
  Genome genome;
  genome.role = role;
  genome.genes.push_back(random_gene(pick(creatable_kinds(role, space), rng), space, rng, innovations));
  genome.input_innovation = innovations.next();
  genome.output_innovation = innovations.next();
  return genome;
}

MutationOutcome mutate(const Genome& genome, Rng& rng, const MutationProbs& probs, const GeneSpace& space,
                       InnovationCounter& innovations) {
  MutationOutcome result;
  result.genome = genome;
  auto& genes = result.genome.genes;
  const double u_add = uniform_real(rng), u_remove = uniform_real(rng), u_change = uniform_real(rng);

  if (u_add < probs.add) {
    result.add_fired = true;
    if (genes.size() >= space.genome_limit) {
      result.add_skipped = true;
    } else {
      const LayerKind kind = pick(creatable_kinds(genome.role, space), rng);
      const std::size_t lead = static_cast<std::size_t>(
          std::count_if(genes.begin(), genes.end(), [&](const Gene& g) { return leading_kind(genome.role, g.kind); }));
      const std::size_t pos = leading_kind(genome.role, kind) ? uniform_int<std::size_t>(rng, 0, lead)
                                                               : uniform_int<std::size_t>(rng, lead, genes.size());
      genes.insert(genes.begin() + static_cast<std::ptrdiff_t>(pos), random_gene(kind, space, rng, innovations));
    }
  }

  if (u_remove < probs.remove) {
    result.remove_fired = true;
    if (genes.size() > 1) genes.erase(genes.begin() + static_cast<std::ptrdiff_t>(uniform_int<std::size_t>(rng, 0, genes.size() - 1)));
  }

  if (u_change < probs.change) {
    result.change_fired = true;
    Gene& g = genes[uniform_int<std::size_t>(rng, 0, genes.size() - 1)];
    const std::size_t attributes = g.kind == LayerKind::Linear ? 2 : 3;
    switch (uniform_int<std::size_t>(rng, 0, attributes - 1)) {
      case 0: g.activation = redraw(space.activations, g.activation, rng); break;
      case 1: {
        std::size_t out = g.out;
        if (space.channel_max > space.channel_min) {
          while (out == g.out) out = uniform_int<std::size_t>(rng, space.channel_min, space.channel_max);
        }
        g.out = out;
        break;
      }
      default: g.kernel = redraw(space.kernel_sizes, g.kernel, rng); break;
    }
    g.innovation = innovations.next();
  }
  return result;
}

double genome_distance(const Genome& a, const Genome& b) {
  if (a.role != b.role) throw PreconditionError("genome_distance: genomes have different roles");
  const std::size_t longest = std::max(a.genes.size(), b.genes.size());
  if (longest == 0) return 0.0;
  std::size_t matches = 0;
  for (std::size_t i = 0; i < std::min(a.genes.size(), b.genes.size()); ++i) {
    if (a.genes[i].kind == b.genes[i].kind && a.genes[i].activation == b.genes[i].activation) ++matches;
  }
  return 1.0 - static_cast<double>(matches) / static_cast<double>(longest);
}

Phenotype build_phenotype(const Genome& genome, const Shape& data_shape, std::size_t z_dim,
                          const ParameterStore& store, const GeneSpace& space, Rng& init_rng) {
  if (data_shape.size() != 3) throw PreconditionError("data shape must be C x H x W");
  validate(genome, std::max(space.genome_limit, genome.genes.size()));
  return genome.role == Role::Generator ? build_generator(genome, data_shape, z_dim, store, space, init_rng)
                                        : build_discriminator(genome, data_shape, store, init_rng);
}

ParameterStore extract_parameters(const Phenotype& phenotype) {
  ParameterStore store;
  const auto& layers = phenotype.network.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    store[phenotype.layer_keys[i]] = LayerParams{layers[i].weight, layers[i].bias};
  }
  return store;
}

}  // namespace coegan
