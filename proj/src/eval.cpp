#include "kbc/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace kbc {

std::string_view to_string(ScorerKind s) {
  switch (s) {
    case ScorerKind::Translational:
      return "translational";
    case ScorerKind::Ible:
      return "ible";
    case ScorerKind::Cible:
      return "cible";
  }
  return "?";
}

ScorerKind parse_scorer(std::string_view s) {
  if (s == "translational") return ScorerKind::Translational;
  if (s == "ible") return ScorerKind::Ible;
  if (s == "cible") return ScorerKind::Cible;
  throw ConfigError("unknown scorer '" + std::string(s) + "' (expected translational, ible or cible)");
}

ScorerKind scorer_for(Objective o) {
  switch (o) {
    case Objective::TranslationalMargin:
      return ScorerKind::Translational;
    case Objective::IbleCe:
      return ScorerKind::Ible;
    case Objective::CibleCe:
      return ScorerKind::Cible;
  }
  return ScorerKind::Cible;
}

long rank_of_gold(std::span<const double> scores, EntityId gold, std::span<const EntityId> mask) {
  if (gold < 0 || static_cast<std::size_t>(gold) >= scores.size()) {
    throw VocabularyError("gold entity " + std::to_string(gold) + " out of range");
  }
  const double g = scores[static_cast<std::size_t>(gold)];
  long rank = 1;
  std::size_t mi = 0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    while (mi < mask.size() && static_cast<std::size_t>(mask[mi]) < e) ++mi;
    if (static_cast<EntityId>(e) == gold) continue;
    if (mi < mask.size() && static_cast<std::size_t>(mask[mi]) == e) continue;
    if (scores[e] >= g) ++rank;
  }
  return rank;
}

Metrics Metrics::from_ranks(std::span<const long> ranks) {
  Metrics m;
  m.count = static_cast<long>(ranks.size());
  if (ranks.empty()) return m;
  for (long r : ranks) {
    m.mr += static_cast<double>(r);
    m.mrr += 1.0 / static_cast<double>(r);
    m.hits1 += r <= 1 ? 1.0 : 0.0;
    m.hits3 += r <= 3 ? 1.0 : 0.0;
    m.hits10 += r <= 10 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mr /= n;
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

RankingReport evaluate_with(const KnowledgeBase& kb, Split split, const ScorerFactory& factory,
                            int workers) {
  const auto queries = kb.augmented(split);
  RankingReport report;
  report.ranks.resize(queries.size());
  std::vector<std::vector<std::size_t>> by_rel(kb.num_relations());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    by_rel[static_cast<std::size_t>(queries[i].relation)].push_back(i);
  }
  std::vector<RelationId> todo;
  for (std::size_t r = 0; r < by_rel.size(); ++r) {
    if (!by_rel[r].empty()) todo.push_back(static_cast<RelationId>(r));
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    std::vector<double> scores(kb.num_entities());
    try {
      for (std::size_t i = next++; i < todo.size(); i = next++) {
        const RelationId r = todo[i];
        const TailScorer score = factory(r);
        for (std::size_t qi : by_rel[static_cast<std::size_t>(r)]) {
          const Triple& q = queries[qi];
          score(q.head, scores);
          report.ranks[qi] = {q, kb.vocab().is_inverse(r) ? Direction::Head : Direction::Tail,
                              rank_of_gold(scores, q.tail, kb.filtered_mask(q.head, r))};
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
      next = todo.size();
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(todo.size())));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<long> tail, head, all;
  for (const QueryRank& q : report.ranks) {
    (q.direction == Direction::Tail ? tail : head).push_back(q.rank);
    all.push_back(q.rank);
  }
  report.tail = Metrics::from_ranks(tail);
  report.head = Metrics::from_ranks(head);
  report.all = Metrics::from_ranks(all);
  return report;
}

RankingReport evaluate(const ModelParams& m, const KnowledgeBase& kb, Split split,
                       ScorerKind scorer, std::optional<double> alpha, int workers) {
  check_compatible(m, kb);
  if (scorer == ScorerKind::Cible) {
    if (!alpha) throw ConfigError("the cible scorer needs alpha (set it in the config or checkpoint)");
    if (!(*alpha > 0.0 && *alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  }
  const double a = alpha.value_or(0.5);
  return evaluate_with(
      kb, split,
      [&](RelationId r) -> TailScorer {
        auto rs = std::make_shared<RelationScorer>(m, kb, r);
        switch (scorer) {
          case ScorerKind::Translational:
            return [rs](EntityId h, std::span<double> out) {
              rs->distances(h, out);
              for (double& v : out) v = -v;
            };
          case ScorerKind::Ible:
            return [rs](EntityId h, std::span<double> out) { rs->ible(h, out); };
          case ScorerKind::Cible:
            break;
        }
        return [rs, a](EntityId h, std::span<double> out) { rs->cible(h, a, out); };
      },
      workers);
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
  return {{"queries", m.count}, {"mr", m.mr},       {"mrr", m.mrr},
          {"hits@1", m.hits1},  {"hits@3", m.hits3}, {"hits@10", m.hits10}};
}

}  // namespace

std::string report_json(const RankingReport& r) {
  nlohmann::json j;
  j["tail"] = metrics_json(r.tail);
  j["head"] = metrics_json(r.head);
  j["all"] = metrics_json(r.all);
  return j.dump(2);
}

std::string report_table(const RankingReport& r, const std::string& label) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-24s %-6s %8s %8s %7s %7s %7s %7s\n", "run", "query", "count",
                "MR", "MRR", "H@1", "H@3", "H@10");
  out << buf;
  const auto row = [&](const char* dir, const Metrics& m) {
    std::snprintf(buf, sizeof(buf), "%-24s %-6s %8ld %8.1f %7.3f %7.1f %7.1f %7.1f\n",
                  label.c_str(), dir, m.count, m.mr, m.mrr, 100 * m.hits1, 100 * m.hits3,
                  100 * m.hits10);
    out << buf;
  };
  row("tail", r.tail);
  row("head", r.head);
  row("all", r.all);
  return out.str();
}

}  // namespace kbc
