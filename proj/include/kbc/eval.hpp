#pragma once

// Filtered link-prediction ranking. Every split triple yields a tail query
// (h, r, ?) and a head query, which the augmented split already carries as
// (t, r^-1, ?).

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kbc/geometry.hpp"
#include "kbc/ible.hpp"
#include "kbc/kb.hpp"
#include "kbc/train.hpp"

namespace kbc {

enum class ScorerKind { Translational, Ible, Cible };
std::string_view to_string(ScorerKind s);
ScorerKind parse_scorer(std::string_view s);
// The scorer matching what an objective trains.
ScorerKind scorer_for(Objective o);

// 1 + number of unmasked rivals scoring >= the gold score. `mask` must be
// sorted; gold is never treated as masked. Throws VocabularyError for an
// out-of-range gold id.
long rank_of_gold(std::span<const double> scores, EntityId gold, std::span<const EntityId> mask);

struct Metrics {
  long count = 0;
  double mr = 0.0;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;

  static Metrics from_ranks(std::span<const long> ranks);
};

struct QueryRank {
  Triple query;  // tail form
  Direction direction = Direction::Tail;
  long rank = 0;
};

struct RankingReport {
  Metrics tail;
  Metrics head;
  Metrics all;
  std::vector<QueryRank> ranks;  // augmented split order
};

// Fills dense scores (higher is better) for every tail of (h, r, ?).
using TailScorer = std::function<void(EntityId h, std::span<double> out)>;
// Builds the tail scorer for one relation; called once per relation in the
// split, possibly from several threads.
using ScorerFactory = std::function<TailScorer(RelationId r)>;

RankingReport evaluate_with(const KnowledgeBase& kb, Split split, const ScorerFactory& factory,
                            int workers = 1);

// The translational scorer ranks by -T(h, r, t). Cible needs alpha and throws
// ConfigError without one.
RankingReport evaluate(const ModelParams& m, const KnowledgeBase& kb, Split split,
                       ScorerKind scorer, std::optional<double> alpha = std::nullopt,
                       int workers = 1);

std::string report_json(const RankingReport& r);
// Aligned rows: MR, MRR, H@1, H@3, H@10 for tail, head and all queries.
std::string report_table(const RankingReport& r, const std::string& label);

}  // namespace kbc
