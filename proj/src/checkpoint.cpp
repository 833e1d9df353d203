#include <bit>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "kbc/geometry.hpp"

namespace kbc {
namespace {

constexpr const char* kMagic = "KBC-CHECKPOINT 1";

static_assert(std::endian::native == std::endian::little,
              "checkpoint blocks are stored little-endian");

void write_block(std::ostream& out, const Matrix& m) {
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_block(std::istream& in, Matrix& m, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(m.size() * sizeof(double))) {
    throw DatasetError("truncated checkpoint " + path.string());
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const ModelParams& m, const std::filesystem::path& path) {
  m.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << kMagic << "\n";
  out << "model " << to_string(m.kind) << "\n";
  out << "n_entity " << m.num_entities() << "\n";
  out << "n_relation " << m.num_relations() << "\n";
  out << "dim " << m.dim() << "\n";
  out << "norm " << m.norm_p << "\n";
  out << "gamma " << format_double(m.gamma) << "\n";
  if (m.alpha) out << "alpha " << format_double(*m.alpha) << "\n";
  out << "data\n";
  write_block(out, m.entity);
  write_block(out, m.relation);
  for (const Matrix& w : m.projection) write_block(out, w);
  if (!out) throw DatasetError("failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kMagic) throw DatasetError(path.string() + " is not a checkpoint");
  std::map<std::string, std::string> header;
  while (std::getline(in, line) && line != "data") {
    std::istringstream fields(line);
    std::string key, value;
    fields >> key >> value;
    header[key] = value;
  }
  if (line != "data") throw DatasetError("checkpoint header not terminated");
  for (const char* key : {"model", "n_entity", "n_relation", "dim", "norm", "gamma"}) {
    if (!header.count(key)) {
      throw DatasetError("checkpoint header lacks '" + std::string(key) + "'");
    }
  }

  ModelParams m;
  m.kind = parse_model_kind(header["model"]);
  m.norm_p = std::stoi(header["norm"]);
  m.gamma = std::stod(header["gamma"]);
  if (header.count("alpha")) m.alpha = std::stod(header["alpha"]);
  const int n_entity = std::stoi(header["n_entity"]);
  const int n_relation = std::stoi(header["n_relation"]);
  const int dim = std::stoi(header["dim"]);
  if (n_entity < 0 || n_relation < 0 || dim <= 0) {
    throw DatasetError("invalid checkpoint dimensions");
  }
  m.entity.resize(n_entity, dim);
  m.relation.resize(n_relation, is_rotational(m.kind) ? dim / 2 : dim);
  read_block(in, m.entity, path);
  read_block(in, m.relation, path);
  if (has_projection(m.kind)) {
    const int pd = m.kind == ModelKind::TransR ? dim : dim / 2;
    m.projection.assign(static_cast<std::size_t>(n_relation), Matrix(pd, pd));
    for (Matrix& w : m.projection) read_block(in, w, path);
  }
  m.validate();
  return m;
}

}  // namespace kbc
