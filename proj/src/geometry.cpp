#include "kbc/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

namespace kbc {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::TransE:
      return "transe";
    case ModelKind::TransR:
      return "transr";
    case ModelKind::RotatE:
      return "rotate";
    case ModelKind::RRotatE:
      return "r-rotate";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "transe") return ModelKind::TransE;
  if (s == "transr") return ModelKind::TransR;
  if (s == "rotate") return ModelKind::RotatE;
  if (s == "r-rotate" || s == "rrotate") return ModelKind::RRotatE;
  throw ConfigError("unknown model kind '" + std::string(name) +
                    "' (expected transe, transr, rotate or r-rotate)");
}

void ModelParams::validate() const {
  if (gamma <= 0) throw ConfigError("gamma must be positive");
  if (norm_p != 1 && norm_p != 2) throw ConfigError("norm must be 1 or 2");
  if (dim() <= 0) throw ConfigError("dimension must be positive");
  if (is_rotational(kind) && dim() % 2 != 0) {
    throw ConfigError("rotational models need an even dimension");
  }
  if (relation.cols() != relation_dim()) {
    throw ConfigError("relation block has " + std::to_string(relation.cols()) +
                      " columns, expected " + std::to_string(relation_dim()));
  }
  if (has_projection(kind)) {
    if (projection.size() != static_cast<std::size_t>(num_relations())) {
      throw ConfigError("one projection matrix per relation is required");
    }
    for (const Matrix& w : projection) {
      if (w.rows() != projection_dim() || w.cols() != projection_dim()) {
        throw ConfigError("projection matrix has the wrong shape");
      }
    }
  } else if (!projection.empty()) {
    throw ConfigError(std::string(to_string(kind)) + " has no projection matrices");
  }
  if (alpha && !(*alpha > 0.0 && *alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
}

ModelParams init_params(const ModelShape& shape, std::mt19937_64& rng) {
  ModelParams m;
  m.kind = shape.kind;
  m.norm_p = shape.norm_p;
  m.gamma = shape.gamma;
  if (shape.dim <= 0 || shape.num_entities < 0 || shape.num_relations < 0) {
    throw ConfigError("invalid model shape");
  }
  const double range = shape.gamma / shape.dim;
  std::uniform_real_distribution<double> coord(-range, range);
  m.entity.resize(shape.num_entities, shape.dim);
  for (Eigen::Index i = 0; i < m.entity.size(); ++i) m.entity.data()[i] = coord(rng);

  const int rel_dim = is_rotational(shape.kind) ? shape.dim / 2 : shape.dim;
  m.relation.resize(shape.num_relations, rel_dim);
  if (is_rotational(shape.kind)) {
    std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
    for (Eigen::Index i = 0; i < m.relation.size(); ++i) {
      m.relation.data()[i] = wrap_phase(phase(rng));
    }
  } else {
    for (Eigen::Index i = 0; i < m.relation.size(); ++i) {
      m.relation.data()[i] = coord(rng);
    }
  }

  if (has_projection(shape.kind)) {
    const int pd = shape.kind == ModelKind::TransR ? shape.dim : shape.dim / 2;
    std::uniform_real_distribution<double> noise(-0.01, 0.01);
    m.projection.reserve(static_cast<std::size_t>(shape.num_relations));
    for (int r = 0; r < shape.num_relations; ++r) {
      Matrix w = Matrix::Identity(pd, pd);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += noise(rng);
      m.projection.push_back(std::move(w));
    }
  }
  m.validate();
  return m;
}

double norm_of(ModelKind kind, int p, std::span<const double> diff) {
  double acc = 0.0;
  if (is_rotational(kind)) {
    const std::size_t k = diff.size() / 2;
    const double* re = diff.data();
    const double* im = diff.data() + k;
    if (p == 1) {
      for (std::size_t j = 0; j < k; ++j) acc += std::sqrt(re[j] * re[j] + im[j] * im[j]);
      return acc;
    }
    for (std::size_t j = 0; j < k; ++j) acc += re[j] * re[j] + im[j] * im[j];
    return std::sqrt(acc);
  }
  if (p == 1) {
    for (double x : diff) acc += std::abs(x);
    return acc;
  }
  for (double x : diff) acc += x * x;
  return std::sqrt(acc);
}

void norm_gradient(ModelKind kind, int p, std::span<const double> diff, double norm,
                   std::span<double> out) {
  const std::size_t n = diff.size();
  if (p == 2) {
    if (norm == 0.0) {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = diff[i] / norm;
    return;
  }
  if (is_rotational(kind)) {
    const std::size_t k = n / 2;
    for (std::size_t j = 0; j < k; ++j) {
      const double re = diff[j];
      const double im = diff[j + k];
      const double mod = std::sqrt(re * re + im * im);
      out[j] = mod > 0.0 ? re / mod : 0.0;
      out[j + k] = mod > 0.0 ? im / mod : 0.0;
    }
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = diff[i] > 0.0 ? 1.0 : (diff[i] < 0.0 ? -1.0 : 0.0);
  }
}

Vec project(const ModelParams& m, RelationId r, const Eigen::Ref<const Vec>& e) {
  if (e.size() != m.dim()) throw ConfigError("vector dimension mismatch");
  const auto rr = static_cast<std::size_t>(r);
  switch (m.kind) {
    case ModelKind::TransE:
    case ModelKind::RotatE:
      return e;
    case ModelKind::TransR:
      return m.projection.at(rr) * e;
    case ModelKind::RRotatE: {
      const int k = m.complex_dim();
      Vec out(m.dim());
      out.head(k) = m.projection.at(rr) * e.head(k);
      out.tail(k) = m.projection.at(rr) * e.tail(k);
      return out;
    }
  }
  return e;
}

Matrix project_rows(const ModelParams& m, RelationId r, std::span<const EntityId> ids) {
  Matrix x(static_cast<Eigen::Index>(ids.size()), m.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = m.entity.row(ids[i]);
  }
  if (!has_projection(m.kind)) return x;
  const Matrix& w = m.projection.at(static_cast<std::size_t>(r));
  if (m.kind == ModelKind::TransR) return x * w.transpose();
  const int k = m.complex_dim();
  Matrix out(x.rows(), x.cols());
  out.leftCols(k).noalias() = x.leftCols(k) * w.transpose();
  out.rightCols(k).noalias() = x.rightCols(k) * w.transpose();
  return out;
}

Matrix project_all(const ModelParams& m, RelationId r) {
  if (!has_projection(m.kind)) return m.entity;
  const Matrix& w = m.projection.at(static_cast<std::size_t>(r));
  if (m.kind == ModelKind::TransR) return m.entity * w.transpose();
  const int k = m.complex_dim();
  Matrix out(m.entity.rows(), m.entity.cols());
  out.leftCols(k).noalias() = m.entity.leftCols(k) * w.transpose();
  out.rightCols(k).noalias() = m.entity.rightCols(k) * w.transpose();
  return out;
}

namespace {

Vec rotate(const ModelParams& m, RelationId r, const Eigen::Ref<const Vec>& x, double sign) {
  const int k = m.complex_dim();
  Vec y(x.size());
  for (int j = 0; j < k; ++j) {
    const double theta = sign * m.relation(r, j);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    y[j] = x[j] * c - x[j + k] * s;
    y[j + k] = x[j] * s + x[j + k] * c;
  }
  return y;
}

std::span<const double> as_span(const Vec& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

Vec apply_relation(const ModelParams& m, RelationId r, const Eigen::Ref<const Vec>& x) {
  if (is_rotational(m.kind)) return rotate(m, r, x, 1.0);
  return x + m.relation.row(r).transpose();
}

Vec apply_relation_inverse(const ModelParams& m, RelationId r,
                           const Eigen::Ref<const Vec>& x) {
  if (is_rotational(m.kind)) return rotate(m, r, x, -1.0);
  return x - m.relation.row(r).transpose();
}

Vec translate(const ModelParams& m, EntityId h, RelationId r) {
  return apply_relation(m, r, project(m, r, m.entity.row(h).transpose()));
}

Vec inv_translate(const ModelParams& m, EntityId t, RelationId r) {
  return apply_relation_inverse(m, r, project(m, r, m.entity.row(t).transpose()));
}

double score(const ModelParams& m, EntityId h, RelationId r, EntityId t) {
  const Vec diff = translate(m, h, r) - project(m, r, m.entity.row(t).transpose());
  return norm_of(m.kind, m.norm_p, as_span(diff));
}

double prototype_distance(const ModelParams& m, EntityId a, EntityId b, RelationId r) {
  const Vec diff = project(m, r, m.entity.row(a).transpose()) -
                   project(m, r, m.entity.row(b).transpose());
  return norm_of(m.kind, m.norm_p, as_span(diff));
}

double wrap_phase(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta, two_pi);
  if (w <= -std::numbers::pi) w += two_pi;
  if (w > std::numbers::pi) w -= two_pi;
  return w;
}

void check_compatible(const ModelParams& m, const KnowledgeBase& kb) {
  if (static_cast<std::size_t>(m.num_entities()) != kb.num_entities() ||
      static_cast<std::size_t>(m.num_relations()) != kb.num_relations()) {
    throw CompatibilityError(
        "checkpoint has " + std::to_string(m.num_entities()) + " entities / " +
        std::to_string(m.num_relations()) + " relations, dataset has " +
        std::to_string(kb.num_entities()) + " / " + std::to_string(kb.num_relations()));
  }
}

}  // namespace kbc
