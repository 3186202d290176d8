#include "coegan/checkpoint.hpp"

#include <charconv>
#include <map>
#include <sstream>

#include "coegan/io.hpp"

namespace coegan {

namespace {

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw FormatError("checkpoint: bad value for " + key + ": '" + v + "'");
  return out;
}

Shape parse_shape(const std::string& s) {
  Shape shape;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, 'x')) shape.push_back(to_u64("data_shape", part));
  return shape;
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

std::string genome_to_text(const Genome& genome) {
  std::ostringstream os;
  os << "role = " << to_string(genome.role) << "\n";
  os << "input_innovation = " << genome.input_innovation << "\n";
  os << "output_innovation = " << genome.output_innovation << "\n";
  for (const Gene& g : genome.genes) {
    os << "gene = " << to_string(g.kind) << " " << to_string(g.activation) << " " << g.out << " " << g.kernel << " "
       << g.innovation << "\n";
  }
  return os.str();
}

Genome genome_from_text(const std::string& text) {
  Genome genome;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    if (key == "role") {
      genome.role = parse_role(value);
    } else if (key == "input_innovation") {
      genome.input_innovation = to_u64(key, value);
    } else if (key == "output_innovation") {
      genome.output_innovation = to_u64(key, value);
    } else if (key == "gene") {
      std::istringstream g(value);
      std::string kind, act, out, kernel, innovation;
      if (!(g >> kind >> act >> out >> kernel >> innovation)) throw FormatError("checkpoint: malformed gene '" + value + "'");
      Gene gene;
      try {
        gene.kind = parse_layer_kind(kind);
        gene.activation = parse_activation(act);
      } catch (const Error& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
      }
      gene.out = to_u64("gene out", out);
      gene.kernel = to_u64("gene kernel", kernel);
      gene.innovation = to_u64("gene innovation", innovation);
      genome.genes.push_back(gene);
    }
  }
  return genome;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const Individual& ind = ckpt.individual;
  std::ostringstream header;
  header << "id = " << ind.id << "\n"
         << "parent = " << ind.parent << "\n"
         << "species = " << ind.species << "\n"
         << "born = " << ind.born << "\n"
         << "generation = " << ckpt.generation << "\n"
         << "data_shape = " << shape_text(ckpt.data_shape) << "\n"
         << "z_dim = " << ckpt.z_dim << "\n"
         << "channel_min = " << ckpt.channel_min << "\n"
         << "channel_max = " << ckpt.channel_max << "\n"
         << genome_to_text(ind.genome);

  ByteWriter payload;
  payload.str(header.str());
  payload.f64(ind.fitness);
  payload.u8(ind.fitness_flagged ? 1 : 0);
  payload.u32(static_cast<std::uint32_t>(ind.params.size()));
  for (const auto& [key, p] : ind.params) {
    payload.u64(key);
    payload.bytes(encode_tensor(p.weight));
    payload.bytes(encode_tensor(p.bias));
  }

  ByteWriter w;
  w.bytes("CGAN");
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(payload.data().size()));
  w.bytes(payload.data());
  w.u32(crc32_of(payload.data()));
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what) {
  ByteReader in(bytes, what);
  if (in.bytes(4) != "CGAN") throw FormatError(what + ": bad magic at byte offset 0");
  const auto version = in.u16();
  if (version != kCheckpointVersion) {
    throw FormatError(what + ": format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const auto size = in.u32();
  const std::string_view payload_bytes = in.bytes(size);
  const auto stored_crc = in.u32();
  if (crc32_of(payload_bytes) != stored_crc) throw FormatError(what + ": checksum mismatch");

  ByteReader p(payload_bytes, what);
  const std::string header = p.str();
  Checkpoint ckpt;
  Individual& ind = ckpt.individual;
  std::map<std::string, std::string> fields;
  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos && line.compare(0, eq, "gene") != 0) fields[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto field = [&](const std::string& key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw FormatError(what + ": header lacks '" + key + "'");
    return it->second;
  };
  ind.id = to_u64("id", field("id"));
  ind.parent = to_u64("parent", field("parent"));
  ind.species = to_u64("species", field("species"));
  ind.born = to_u64("born", field("born"));
  ckpt.generation = to_u64("generation", field("generation"));
  ckpt.data_shape = parse_shape(field("data_shape"));
  ckpt.z_dim = to_u64("z_dim", field("z_dim"));
  ckpt.channel_min = to_u64("channel_min", field("channel_min"));
  ckpt.channel_max = to_u64("channel_max", field("channel_max"));
  ind.genome = genome_from_text(header);

  ind.fitness = p.f64();
  ind.fitness_flagged = p.u8() != 0;
  const auto count = p.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto key = p.u64();
    LayerParams lp;
    lp.weight = decode_tensor(p);
    lp.bias = decode_tensor(p);
    ind.params.emplace(key, std::move(lp));
  }
  if (p.remaining() != 0) throw FormatError(what + ": " + std::to_string(p.remaining()) + " trailing payload byte(s)");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  atomic_write(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path), path.string()); }

Network checkpoint_network(const Checkpoint& ckpt) {
  GeneSpace space;
  space.channel_min = ckpt.channel_min;
  space.channel_max = ckpt.channel_max;
  space.genome_limit = ckpt.individual.genome.genes.size();
  Rng unused(0);
  Phenotype ph = build_phenotype(ckpt.individual.genome, ckpt.data_shape, ckpt.z_dim, ckpt.individual.params, space, unused);
  if (ph.initialized != 0) {
    throw FormatError("checkpoint of individual " + std::to_string(ckpt.individual.id) + " lacks parameters for " +
                      std::to_string(ph.initialized) + " layer(s)");
  }
  return std::move(ph.network);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, std::size_t generation, Role role) {
  return run_dir / "checkpoints" / ("gen-" + std::to_string(generation)) / (to_string(role) + ".ckpt");
}

}  // namespace coegan
