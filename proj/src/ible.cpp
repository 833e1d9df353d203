#include "kbc/ible.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace kbc {
std::string_view to_string(Direction d) {
  return d == Direction::Tail ? "tail" : "head";
}

Direction parse_direction(std::string_view s) {
  if (s == "tail") return Direction::Tail;
  if (s == "head") return Direction::Head;
  throw ConfigError("unknown direction '" + std::string(s) + "' (expected tail or head)");
}

double f_score(const ModelParams& m, EntityId h, EntityId p, RelationId r, Direction dir) {
  const Vec diff = dir == Direction::Tail ? Vec(translate(m, h, r) - translate(m, p, r))
                                          : Vec(inv_translate(m, h, r) - inv_translate(m, p, r));
  const double d = norm_of(m.kind, m.norm_p, {diff.data(), static_cast<std::size_t>(diff.size())});
  return std::max(m.gamma - d, 0.0);
}

RelationScorer::RelationScorer(const ModelParams& m, const KnowledgeBase& kb, RelationId r)
    : m_(m), kb_(kb), r_(r), projected_(project_all(m, r)) {
  check_compatible(m, kb);
}

void RelationScorer::prototype_scores(EntityId h, std::span<double> out) const {
  const auto heads = kb_.train_index().heads(r_);
  const auto hrow = projected_.row(h);
  Vec diff(projected_.cols());
  for (std::size_t i = 0; i < heads.size(); ++i) {
    diff = hrow - projected_.row(heads[i]);
    const double d =
        norm_of(m_.kind, m_.norm_p, {diff.data(), static_cast<std::size_t>(diff.size())});
    out[i] = std::max(m_.gamma - d, 0.0);
  }
}

void RelationScorer::ible(EntityId h, std::span<double> out) const {
  const auto heads = kb_.train_index().heads(r_);
  std::vector<double> f(heads.size());
  prototype_scores(h, f);
  std::vector<double> sum(out.size(), 0.0);
  std::vector<int> count(out.size(), 0);
  // Pairs are ordered by prototype id, so each tail accumulates in ascending
  // prototype order.
  std::size_t hi = 0;
  for (const auto& [p, t] : kb_.prototype_candidates(r_)) {
    while (heads[hi] != p) ++hi;
    sum[static_cast<std::size_t>(t)] += f[hi];
    ++count[static_cast<std::size_t>(t)];
  }
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = count[t] > 0 ? sum[t] / (m_.gamma * count[t]) : 0.0;
  }
}

void RelationScorer::distances(EntityId h, std::span<double> out) const {
  const Vec moved = apply_relation(m_, r_, projected_.row(h).transpose());
  Vec diff(projected_.cols());
  for (Eigen::Index t = 0; t < projected_.rows(); ++t) {
    diff = moved - projected_.row(t).transpose();
    out[static_cast<std::size_t>(t)] =
        norm_of(m_.kind, m_.norm_p, {diff.data(), static_cast<std::size_t>(diff.size())});
  }
}

void RelationScorer::cible(EntityId h, double alpha, std::span<double> out) const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  std::vector<double> dist(out.size());
  ible(h, out);
  distances(h, dist);
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = (1.0 - alpha) * out[t] + alpha / m_.gamma * std::max(m_.gamma - dist[t], 0.0);
  }
}

std::vector<double> ible_scores(const ModelParams& m, const KnowledgeBase& kb, EntityId h,
                                RelationId r) {
  std::vector<double> out(kb.num_entities());
  RelationScorer(m, kb, r).ible(h, out);
  return out;
}

std::vector<double> translational_distances(const ModelParams& m, const KnowledgeBase& kb,
                                            EntityId h, RelationId r) {
  std::vector<double> out(kb.num_entities());
  RelationScorer(m, kb, r).distances(h, out);
  return out;
}

std::vector<double> cible_scores(const ModelParams& m, const KnowledgeBase& kb, EntityId h,
                                 RelationId r, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  std::vector<double> out(kb.num_entities());
  RelationScorer(m, kb, r).cible(h, alpha, out);
  return out;
}

std::vector<PrototypeScore> top_prototypes(const ModelParams& m, const KnowledgeBase& kb,
                                           EntityId h, RelationId r, std::size_t k) {
  if (k == 0) return {};
  const auto heads = kb.train_index().heads(r);
  std::vector<double> f(heads.size());
  RelationScorer(m, kb, r).prototype_scores(h, f);
  std::vector<PrototypeScore> all;
  all.reserve(heads.size());
  for (std::size_t i = 0; i < heads.size(); ++i) {
    if (heads[i] != h) all.push_back({heads[i], f[i]});
  }
  const auto order = [](const PrototypeScore& a, const PrototypeScore& b) {
    return a.score != b.score ? a.score > b.score : a.prototype < b.prototype;
  };
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<long>(k), all.end(), order);
  all.resize(k);
  return all;
}

Explanation explain(const ModelParams& m, const KnowledgeBase& kb, EntityId entity,
                    RelationId relation, Direction dir, std::size_t k) {
  const Vocabulary& vocab = kb.vocab();
  if (!vocab.valid_entity(entity) || !vocab.valid_relation(relation)) {
    throw VocabularyError("explain: id out of range");
  }
  const RelationId query_rel = dir == Direction::Tail ? relation : vocab.inverse(relation);
  Explanation out{entity, relation, dir, {}};
  for (const PrototypeScore& ps : top_prototypes(m, kb, entity, query_rel, k)) {
    ExplainedPrototype item{ps.prototype, ps.score, {}};
    for (EntityId t : kb.tails_of(ps.prototype, query_rel)) {
      Triple fact{ps.prototype, query_rel, t};
      if (vocab.is_inverse(query_rel)) fact = {t, vocab.inverse(query_rel), ps.prototype};
      item.facts.push_back(fact);
    }
    out.prototypes.push_back(std::move(item));
  }
  return out;
}

std::string explanation_text(const Explanation& e, const Vocabulary& vocab) {
  std::ostringstream out;
  const std::string& name = vocab.entity_name(e.entity);
  const std::string rel = vocab.relation_label(e.relation);
  if (e.direction == Direction::Tail) {
    out << "query: (" << name << ", " << rel << ", ?)\n";
  } else {
    out << "query: (?, " << rel << ", " << name << ")\n";
  }
  if (e.prototypes.empty()) {
    out << "no prototypes\n";
    return out.str();
  }
  int rank = 1;
  for (const auto& p : e.prototypes) {
    char score[32];
    std::snprintf(score, sizeof(score), "%.4f", p.score);
    out << rank++ << ". " << vocab.entity_name(p.prototype) << "  f=" << score << "\n";
    for (const Triple& t : p.facts) {
      out << "     (" << vocab.entity_name(t.head) << ", " << vocab.relation_label(t.relation)
          << ", " << vocab.entity_name(t.tail) << ")\n";
    }
  }
  return out.str();
}

std::string explanation_json(const Explanation& e, const Vocabulary& vocab) {
  nlohmann::json j;
  j["entity"] = vocab.entity_name(e.entity);
  j["relation"] = vocab.relation_label(e.relation);
  j["direction"] = std::string(to_string(e.direction));
  j["prototypes"] = nlohmann::json::array();
  for (const auto& p : e.prototypes) {
    nlohmann::json item;
    item["entity"] = vocab.entity_name(p.prototype);
    item["score"] = p.score;
    item["facts"] = nlohmann::json::array();
    for (const Triple& t : p.facts) {
      item["facts"].push_back({vocab.entity_name(t.head), vocab.relation_label(t.relation),
                               vocab.entity_name(t.tail)});
    }
    j["prototypes"].push_back(std::move(item));
  }
  return j.dump(2);
}

}  // namespace kbc
