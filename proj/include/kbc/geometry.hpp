#pragma once

// Translational models and the prototype distances they induce.
//
// Entity vectors have `dim` real coordinates. The rotational models read them
// as dim/2 complex numbers in split layout: [re_0 .. re_{k-1} | im_0 .. im_{k-1}].
// Relation rows hold translations (TransE, TransR) or phases (RotatE,
// R-RotatE). TransR projects with a dim x dim matrix; R-RotatE applies a
// k x k real matrix to the real and imaginary halves separately.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "kbc/kb.hpp"

namespace kbc {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

enum class ModelKind { TransE, TransR, RotatE, RRotatE };

std::string_view to_string(ModelKind kind);
// Accepts "transe", "transr", "rotate", "r-rotate" (case-insensitive).
ModelKind parse_model_kind(std::string_view name);

constexpr bool is_rotational(ModelKind k) {
  return k == ModelKind::RotatE || k == ModelKind::RRotatE;
}
constexpr bool has_projection(ModelKind k) {
  return k == ModelKind::TransR || k == ModelKind::RRotatE;
}
constexpr int default_norm(ModelKind k) { return k == ModelKind::TransR ? 2 : 1; }

struct ModelShape {
  ModelKind kind = ModelKind::TransE;
  int num_entities = 0;
  int num_relations = 0;  // including inverses
  int dim = 0;
  int norm_p = 1;
  double gamma = 6.0;
};

struct ModelParams {
  ModelKind kind = ModelKind::TransE;
  int norm_p = 1;
  double gamma = 6.0;
  Matrix entity;    // num_entities x dim
  Matrix relation;  // num_relations x dim (translations) or x dim/2 (phases)
  std::vector<Matrix> projection;  // per relation; empty for unprojected kinds
  std::optional<double> alpha;     // set when trained with the combined objective

  int num_entities() const { return static_cast<int>(entity.rows()); }
  int num_relations() const { return static_cast<int>(relation.rows()); }
  int dim() const { return static_cast<int>(entity.cols()); }
  int complex_dim() const { return dim() / 2; }
  int relation_dim() const { return is_rotational(kind) ? dim() / 2 : dim(); }
  int projection_dim() const {
    return kind == ModelKind::TransR ? dim() : (kind == ModelKind::RRotatE ? dim() / 2 : 0);
  }
  ModelShape shape() const {
    return {kind, num_entities(), num_relations(), dim(), norm_p, gamma};
  }

  // Throws ConfigError when blocks disagree with each other or the kind.
  void validate() const;
};

// Entity and translation coordinates uniform in [-gamma/dim, gamma/dim],
// phases uniform in (-pi, pi], projections identity plus U(-0.01, 0.01).
ModelParams init_params(const ModelShape& shape, std::mt19937_64& rng);

// Norm of a coordinate difference in the model's norm family: the plain
// p-norm for TransE/TransR, the p-norm of per-coordinate complex moduli for
// the rotational kinds.
double norm_of(ModelKind kind, int p, std::span<const double> diff);
// d norm / d diff. Kinks (zero coordinate for p = 1, zero vector for p = 2)
// get subgradient 0.
void norm_gradient(ModelKind kind, int p, std::span<const double> diff,
                   double norm, std::span<double> out);

// W_r e (or e for unprojected kinds).
Vec project(const ModelParams& m, RelationId r, const Eigen::Ref<const Vec>& e);
// Projection of the listed entity rows: ids.size() x dim.
Matrix project_rows(const ModelParams& m, RelationId r, std::span<const EntityId> ids);
// Projection of every entity: num_entities x dim.
Matrix project_all(const ModelParams& m, RelationId r);

// Relation step applied to an already projected vector: + r or rotation.
Vec apply_relation(const ModelParams& m, RelationId r, const Eigen::Ref<const Vec>& x);
// Inverse step: - r or conjugate rotation.
Vec apply_relation_inverse(const ModelParams& m, RelationId r,
                           const Eigen::Ref<const Vec>& x);

Vec translate(const ModelParams& m, EntityId h, RelationId r);
Vec inv_translate(const ModelParams& m, EntityId t, RelationId r);

// ||translate(h, r) - project(t)||.
double score(const ModelParams& m, EntityId h, RelationId r, EntityId t);
// ||W_r e_a - W_r e_b|| (relation-agnostic ||e_a - e_b|| without projection).
double prototype_distance(const ModelParams& m, EntityId a, EntityId b, RelationId r);

// Angle wrapped into (-pi, pi].
double wrap_phase(double theta);

// Binary checkpoint; layout documented in docs/checkpoint.md.
void save_checkpoint(const ModelParams& m, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

// Throws CompatibilityError unless the checkpoint fits the dataset.
void check_compatible(const ModelParams& m, const KnowledgeBase& kb);

}  // namespace kbc
