#pragma once

// Horn rules over the inverse-augmented relation set, grounded on the
// training facts.
//
// A body (b1, b2, b3) with head r0 reads
//   b1(x, z1) ∧ b2(z1, z2) ∧ b3(z2, y) → r0(x, y).
// The two instance-based templates are
//   (r1, r1^-1, r0) → r0   and   (r0, r1, r1^-1) → r0,
// i.e. x and some w share an r1 neighbour, and w (or the r0 target) stands in
// for x. Every other rule is non-instance-based.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kbc/eval.hpp"
#include "kbc/kb.hpp"

namespace kbc {

struct Rule {
  std::array<RelationId, 3> body{};
  int length = 0;
  RelationId head = 0;
  bool is_ibl = false;

  std::span<const RelationId> body_span() const {
    return std::span<const RelationId>(body).first(static_cast<std::size_t>(length));
  }
  friend bool operator==(const Rule& a, const Rule& b) {
    return a.length == b.length && a.head == b.head &&
           std::equal(a.body.begin(), a.body.begin() + a.length, b.body.begin());
  }
};

bool classify_ibl(std::span<const RelationId> body, RelationId head, const Vocabulary& vocab);
inline bool classify_ibl(const Rule& rule, const Vocabulary& vocab) {
  return classify_ibl(rule.body_span(), rule.head, vocab);
}
Rule make_rule(std::span<const RelationId> body, RelationId head, const Vocabulary& vocab);

enum class RuleMode { All, IblOnly, NonIblOnly };
std::string_view to_string(RuleMode m);
RuleMode parse_rule_mode(std::string_view s);
bool mode_accepts(RuleMode m, bool is_ibl);

// Rules ordered by body length, then body ids lexicographically, then head.
void for_each_rule(const Vocabulary& vocab, int max_len, RuleMode mode,
                   const std::function<void(const Rule&)>& fn);
std::vector<Rule> enumerate_rules(const Vocabulary& vocab, int max_len, RuleMode mode);
// Size of the unfiltered rule space: sum over L of R^L * R, R = num_relations.
std::uint64_t rule_space_size(std::size_t num_relations, int max_len);

// "b1∧b2∧b3 → head"; with ascii, "b1&b2&b3 -> head" and "^-1" for inverses.
std::string rule_text(const Rule& rule, const Vocabulary& vocab, bool ascii = false);

struct RuleStats {
  long support = 0;     // distinct (x, y) grounding the body and the head
  long body_count = 0;  // distinct (x, y) grounding the body
  double precision = 0.0;

  bool supported() const { return body_count > 0; }
};

// Path join over the training index (inverse facts included).
RuleStats rule_stats(const KnowledgeBase& kb, const Rule& rule);

struct ClassQuality {
  long rules = 0;  // supported rules
  double avg_support = 0.0;
  double avg_precision = 0.0;
};

struct RuleQuality {
  ClassQuality ibl;
  ClassQuality non_ibl;
  long unsupported = 0;
  bool sampled = false;
  long visited = 0;
};

struct MinedRule {
  Rule rule;
  RuleStats stats;
};

struct MiningOptions {
  int max_len = 3;
  RuleMode mode = RuleMode::All;
  std::size_t entity_cap = 5000;  // exhaustive mining refuses larger KBs
  long sample_size = 0;           // > 0: uniform rule subsample instead
  std::uint64_t seed = 1;
  int workers = 1;
  bool keep_rules = false;  // collect rules into MiningResult::rules
  long min_support = 1;     // for kept rules
  int top_k_per_head = 0;   // 0 keeps every rule passing min_support
};

struct MiningResult {
  RuleQuality quality;
  std::vector<MinedRule> rules;  // by head, then precision desc, support desc
};

// Exhaustive mining grounds every body once as a bitset relation and scores
// all heads against it. Throws ConfigError above the entity cap unless a
// sample size is given.
MiningResult mine_rules(const KnowledgeBase& kb, const MiningOptions& opts);
RuleQuality aggregate_rule_quality(const KnowledgeBase& kb, int max_len,
                                   const MiningOptions& opts = {});

// Columns: head, body, is_ibl, support, body_count, precision.
void write_rules_csv(std::ostream& out, const std::vector<MinedRule>& rules,
                     const Vocabulary& vocab, bool ascii);
std::string quality_table(const RuleQuality& q, const std::string& label);
std::string quality_json(const RuleQuality& q);

// score(t) = sum over rules with head r of precision * (number of body paths
// from h to t).
std::vector<double> rule_rank(const KnowledgeBase& kb, std::span<const MinedRule> rules,
                              EntityId h, RelationId r);
ScorerFactory rule_scorer(const KnowledgeBase& kb, std::span<const MinedRule> rules);

}  // namespace kbc
