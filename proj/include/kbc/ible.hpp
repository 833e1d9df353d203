#pragma once

// Instance-based scoring: a candidate tail t for the query (h, r, ?) is
// scored by how close h is to the training heads p of (p, r, t) after the
// relation's transform. The combined score mixes this with the hinged
// translational score of (h, r, t).

#include <span>
#include <string>
#include <vector>

#include "kbc/geometry.hpp"
#include "kbc/kb.hpp"

namespace kbc {

enum class Direction { Tail, Head };
std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);

struct PrototypeScore {
  EntityId prototype = 0;
  double score = 0.0;  // in [0, gamma]
};

// Tail direction: max(gamma - ||trans_r(e_h) - trans_r(e_p)||, 0).
// Head direction: same with the inverse translation.
double f_score(const ModelParams& m, EntityId h, EntityId p, RelationId r,
               Direction dir = Direction::Tail);

// Dense scorer for all tail queries that share one relation. Holds the
// projection of every entity under r, so build one per relation and reuse it.
class RelationScorer {
 public:
  RelationScorer(const ModelParams& m, const KnowledgeBase& kb, RelationId r);

  RelationId relation() const { return r_; }
  // Hinged prototype scores f(h, p) for p in kb.train_index().heads(r).
  void prototype_scores(EntityId h, std::span<double> out) const;
  // Mean hinged prototype score per tail, divided by gamma; entities without
  // prototypes score 0.
  void ible(EntityId h, std::span<double> out) const;
  // T(h, r, t) for every t.
  void distances(EntityId h, std::span<double> out) const;
  // (1 - alpha) I(t) + (alpha / gamma) max(gamma - T(h, r, t), 0).
  void cible(EntityId h, double alpha, std::span<double> out) const;

 private:
  const ModelParams& m_;
  const KnowledgeBase& kb_;
  RelationId r_;
  Matrix projected_;
};

std::vector<double> ible_scores(const ModelParams& m, const KnowledgeBase& kb,
                                EntityId h, RelationId r);
std::vector<double> translational_distances(const ModelParams& m,
                                            const KnowledgeBase& kb, EntityId h,
                                            RelationId r);
// Throws ConfigError unless 0 < alpha < 1.
std::vector<double> cible_scores(const ModelParams& m, const KnowledgeBase& kb,
                                 EntityId h, RelationId r, double alpha);

// The k best candidate prototypes among the training heads of r, excluding h,
// by descending f score with ties broken by ascending id.
std::vector<PrototypeScore> top_prototypes(const ModelParams& m,
                                           const KnowledgeBase& kb, EntityId h,
                                           RelationId r, std::size_t k);

struct ExplainedPrototype {
  EntityId prototype = 0;
  double score = 0.0;
  std::vector<Triple> facts;  // supporting training facts, base-relation form
};

struct Explanation {
  EntityId entity = 0;
  RelationId relation = 0;  // base relation as asked
  Direction direction = Direction::Tail;
  std::vector<ExplainedPrototype> prototypes;
};

// Top-k prototypes for (entity, relation, ?) or (?, relation, entity).
Explanation explain(const ModelParams& m, const KnowledgeBase& kb, EntityId entity,
                    RelationId relation, Direction dir, std::size_t k);
std::string explanation_text(const Explanation& e, const Vocabulary& vocab);
std::string explanation_json(const Explanation& e, const Vocabulary& vocab);

}  // namespace kbc
