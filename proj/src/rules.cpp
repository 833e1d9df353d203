#include "kbc/rules.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdio>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace kbc {
namespace {

// Dense boolean relation over n entities, one bit row per source entity.
class BitRelation {
 public:
  explicit BitRelation(std::size_t n) : n_(n), words_((n + 63) / 64), bits_(n * words_, 0) {}

  std::uint64_t* row(std::size_t x) { return bits_.data() + x * words_; }
  const std::uint64_t* row(std::size_t x) const { return bits_.data() + x * words_; }
  std::size_t words() const { return words_; }
  const std::vector<std::uint32_t>& active() const { return active_; }

  void set(std::size_t x, std::size_t y) { row(x)[y / 64] |= std::uint64_t{1} << (y % 64); }

  void clear() {
    for (std::uint32_t x : active_) std::fill_n(row(x), words_, 0);
    active_.clear();
  }

  void refresh_active() {
    active_.clear();
    for (std::size_t x = 0; x < n_; ++x) {
      const auto* r = row(x);
      if (std::any_of(r, r + words_, [](std::uint64_t w) { return w != 0; })) {
        active_.push_back(static_cast<std::uint32_t>(x));
      }
    }
  }

  long count() const {
    long c = 0;
    for (std::uint32_t x : active_) {
      const auto* r = row(x);
      for (std::size_t w = 0; w < words_; ++w) c += std::popcount(r[w]);
    }
    return c;
  }

  long overlap(const BitRelation& other) const {
    long c = 0;
    for (std::uint32_t x : active_) {
      const auto* a = row(x);
      const auto* b = other.row(x);
      for (std::size_t w = 0; w < words_; ++w) c += std::popcount(a[w] & b[w]);
    }
    return c;
  }

  // out = this ∘ next: (x, y) with (x, z) here and (z, y) in next.
  void compose(const BitRelation& next, BitRelation& out) const {
    out.clear();
    for (std::uint32_t x : active_) {
      const auto* a = row(x);
      auto* o = out.row(x);
      bool any = false;
      for (std::size_t w = 0; w < words_; ++w) {
        std::uint64_t bits = a[w];
        while (bits) {
          const std::size_t z = w * 64 + static_cast<std::size_t>(std::countr_zero(bits));
          bits &= bits - 1;
          const auto* b = next.row(z);
          for (std::size_t v = 0; v < words_; ++v) {
            o[v] |= b[v];
            any |= b[v] != 0;
          }
        }
      }
      if (any) out.active_.push_back(x);
    }
  }

 private:
  std::size_t n_;
  std::size_t words_;
  std::vector<std::uint64_t> bits_;
  std::vector<std::uint32_t> active_;
};

bool rule_order(const Rule& a, const Rule& b) {
  if (a.length != b.length) return a.length < b.length;
  for (int i = 0; i < a.length; ++i) {
    if (a.body[static_cast<std::size_t>(i)] != b.body[static_cast<std::size_t>(i)]) {
      return a.body[static_cast<std::size_t>(i)] < b.body[static_cast<std::size_t>(i)];
    }
  }
  return a.head < b.head;
}

bool mined_order(const MinedRule& a, const MinedRule& b) {
  if (a.stats.precision != b.stats.precision) return a.stats.precision > b.stats.precision;
  if (a.stats.support != b.stats.support) return a.stats.support > b.stats.support;
  return rule_order(a.rule, b.rule);
}

struct Accumulator {
  double support[2] = {0, 0};  // [non-ibl, ibl]
  double precision[2] = {0, 0};
  long rules[2] = {0, 0};
  long unsupported = 0;
  long visited = 0;
  std::vector<std::vector<MinedRule>> kept;  // per head

  void add(const MinedRule& m, const MiningOptions& opts) {
    ++visited;
    if (!m.stats.supported()) {
      ++unsupported;
      return;
    }
    const int c = m.rule.is_ibl ? 1 : 0;
    support[c] += static_cast<double>(m.stats.support);
    precision[c] += m.stats.precision;
    ++rules[c];
    if (!opts.keep_rules || m.stats.support < opts.min_support) return;
    auto& bucket = kept[static_cast<std::size_t>(m.rule.head)];
    bucket.push_back(m);
    const auto k = static_cast<std::size_t>(opts.top_k_per_head);
    if (k > 0 && bucket.size() >= 4 * k + 64) prune(bucket, k);
  }

  static void prune(std::vector<MinedRule>& bucket, std::size_t k) {
    if (bucket.size() <= k) return;
    std::partial_sort(bucket.begin(), bucket.begin() + static_cast<long>(k), bucket.end(),
                      mined_order);
    bucket.resize(k);
  }
};

RuleStats make_stats(long support, long body_count) {
  RuleStats s{support, body_count, 0.0};
  if (body_count > 0) s.precision = static_cast<double>(support) / static_cast<double>(body_count);
  return s;
}

MiningResult finish(std::vector<Accumulator>& parts, const MiningOptions& opts, std::size_t num_rel,
                    bool sampled) {
  MiningResult out;
  Accumulator total;
  total.kept.resize(num_rel);
  for (Accumulator& a : parts) {
    for (int c = 0; c < 2; ++c) {
      total.support[c] += a.support[c];
      total.precision[c] += a.precision[c];
      total.rules[c] += a.rules[c];
    }
    total.unsupported += a.unsupported;
    total.visited += a.visited;
    for (std::size_t h = 0; h < a.kept.size(); ++h) {
      auto& dst = total.kept[h];
      dst.insert(dst.end(), a.kept[h].begin(), a.kept[h].end());
    }
  }
  const auto fill = [&](ClassQuality& q, int c) {
    q.rules = total.rules[c];
    if (q.rules > 0) {
      q.avg_support = total.support[c] / static_cast<double>(q.rules);
      q.avg_precision = total.precision[c] / static_cast<double>(q.rules);
    }
  };
  fill(out.quality.ibl, 1);
  fill(out.quality.non_ibl, 0);
  out.quality.unsupported = total.unsupported;
  out.quality.visited = total.visited;
  out.quality.sampled = sampled;
  for (auto& bucket : total.kept) {
    std::sort(bucket.begin(), bucket.end(), mined_order);
    if (opts.top_k_per_head > 0 && bucket.size() > static_cast<std::size_t>(opts.top_k_per_head)) {
      bucket.resize(static_cast<std::size_t>(opts.top_k_per_head));
    }
    out.rules.insert(out.rules.end(), bucket.begin(), bucket.end());
  }
  return out;
}

MiningResult mine_sampled(const KnowledgeBase& kb, const MiningOptions& opts) {
  const Vocabulary& vocab = kb.vocab();
  const std::size_t nr = kb.num_relations();
  std::vector<Accumulator> parts(1);
  parts[0].kept.resize(nr);
  if (nr == 0) return finish(parts, opts, nr, true);
  std::mt19937_64 rng(opts.seed);
  std::vector<Rule> ibl;
  if (opts.mode == RuleMode::IblOnly) ibl = enumerate_rules(vocab, opts.max_len, RuleMode::IblOnly);
  const std::uint64_t space = rule_space_size(nr, opts.max_len);
  for (long i = 0; i < opts.sample_size; ++i) {
    Rule rule;
    if (opts.mode == RuleMode::IblOnly) {
      if (ibl.empty()) break;
      rule = ibl[std::uniform_int_distribution<std::size_t>(0, ibl.size() - 1)(rng)];
    } else {
      do {
        std::uint64_t idx = std::uniform_int_distribution<std::uint64_t>(0, space - 1)(rng);
        std::uint64_t block = nr * nr;
        int len = 1;
        while (idx >= block) {
          idx -= block;
          block *= nr;
          ++len;
        }
        std::array<RelationId, 3> body{};
        const auto head = static_cast<RelationId>(idx % nr);
        idx /= nr;
        for (int j = len - 1; j >= 0; --j) {
          body[static_cast<std::size_t>(j)] = static_cast<RelationId>(idx % nr);
          idx /= nr;
        }
        rule = make_rule(std::span<const RelationId>(body).first(static_cast<std::size_t>(len)),
                         head, vocab);
      } while (!mode_accepts(opts.mode, rule.is_ibl));
    }
    parts[0].add({rule, rule_stats(kb, rule)}, opts);
  }
  return finish(parts, opts, nr, true);
}

}  // namespace

bool classify_ibl(std::span<const RelationId> body, RelationId head, const Vocabulary& vocab) {
  if (body.size() != 3) return false;
  const bool first = body[2] == head && body[1] == vocab.inverse(body[0]);
  const bool second = body[0] == head && body[2] == vocab.inverse(body[1]);
  return first || second;
}

Rule make_rule(std::span<const RelationId> body, RelationId head, const Vocabulary& vocab) {
  if (body.empty() || body.size() > 3) throw ConfigError("rule bodies have 1 to 3 relations");
  Rule r;
  std::copy(body.begin(), body.end(), r.body.begin());
  r.length = static_cast<int>(body.size());
  r.head = head;
  for (RelationId b : body) {
    if (!vocab.valid_relation(b)) throw VocabularyError("rule body relation out of range");
  }
  if (!vocab.valid_relation(head)) throw VocabularyError("rule head relation out of range");
  r.is_ibl = classify_ibl(body, head, vocab);
  return r;
}

std::string_view to_string(RuleMode m) {
  switch (m) {
    case RuleMode::All:
      return "all";
    case RuleMode::IblOnly:
      return "ibl-only";
    case RuleMode::NonIblOnly:
      return "non-ibl-only";
  }
  return "?";
}

RuleMode parse_rule_mode(std::string_view s) {
  if (s == "all") return RuleMode::All;
  if (s == "ibl-only" || s == "ibl") return RuleMode::IblOnly;
  if (s == "non-ibl-only" || s == "non-ibl") return RuleMode::NonIblOnly;
  throw ConfigError("unknown rule mode '" + std::string(s) +
                    "' (expected all, ibl-only or non-ibl-only)");
}

bool mode_accepts(RuleMode m, bool is_ibl) {
  return m == RuleMode::All || (m == RuleMode::IblOnly) == is_ibl;
}

void for_each_rule(const Vocabulary& vocab, int max_len, RuleMode mode,
                   const std::function<void(const Rule&)>& fn) {
  if (max_len < 1 || max_len > 3) throw ConfigError("max rule length must be 1, 2 or 3");
  const auto nr = static_cast<RelationId>(vocab.num_relations());
  std::array<RelationId, 3> body{};
  const auto emit = [&](int len) {
    for (RelationId h = 0; h < nr; ++h) {
      Rule r;
      r.body = body;
      r.length = len;
      r.head = h;
      r.is_ibl = classify_ibl(r.body_span(), h, vocab);
      if (mode_accepts(mode, r.is_ibl)) fn(r);
    }
  };
  for (int len = 1; len <= max_len; ++len) {
    body = {};
    for (RelationId a = 0; a < nr; ++a) {
      body[0] = a;
      if (len == 1) {
        emit(1);
        continue;
      }
      for (RelationId b = 0; b < nr; ++b) {
        body[1] = b;
        if (len == 2) {
          emit(2);
          continue;
        }
        for (RelationId c = 0; c < nr; ++c) {
          body[2] = c;
          emit(3);
        }
      }
    }
  }
}

std::vector<Rule> enumerate_rules(const Vocabulary& vocab, int max_len, RuleMode mode) {
  std::vector<Rule> out;
  for_each_rule(vocab, max_len, mode, [&](const Rule& r) { out.push_back(r); });
  return out;
}

std::uint64_t rule_space_size(std::size_t num_relations, int max_len) {
  std::uint64_t total = 0;
  std::uint64_t bodies = 1;
  for (int len = 1; len <= max_len; ++len) {
    bodies *= num_relations;
    total += bodies * num_relations;
  }
  return total;
}

std::string rule_text(const Rule& rule, const Vocabulary& vocab, bool ascii) {
  std::string out;
  for (int i = 0; i < rule.length; ++i) {
    if (i > 0) out += ascii ? "&" : "∧";
    out += vocab.relation_label(rule.body[static_cast<std::size_t>(i)], ascii);
  }
  out += ascii ? " -> " : " → ";
  out += vocab.relation_label(rule.head, ascii);
  return out;
}

RuleStats rule_stats(const KnowledgeBase& kb, const Rule& rule) {
  const TripleIndex& idx = kb.train_index();
  const std::size_t n = kb.num_entities();
  std::vector<int> stamp(n, -1);
  std::vector<EntityId> frontier, next;
  long body_count = 0;
  long support = 0;
  int tick = 0;
  for (EntityId x : idx.heads(rule.body[0])) {
    frontier.assign(1, x);
    for (int step = 0; step < rule.length && !frontier.empty(); ++step) {
      next.clear();
      ++tick;
      for (EntityId z : frontier) {
        for (EntityId y : idx.tails(z, rule.body[static_cast<std::size_t>(step)])) {
          if (stamp[static_cast<std::size_t>(y)] != tick) {
            stamp[static_cast<std::size_t>(y)] = tick;
            next.push_back(y);
          }
        }
      }
      frontier.swap(next);
    }
    const auto known = idx.tails(x, rule.head);
    body_count += static_cast<long>(frontier.size());
    for (EntityId y : frontier) {
      if (std::binary_search(known.begin(), known.end(), y)) ++support;
    }
  }
  return make_stats(support, body_count);
}

MiningResult mine_rules(const KnowledgeBase& kb, const MiningOptions& opts) {
  if (opts.max_len < 1 || opts.max_len > 3) throw ConfigError("max rule length must be 1, 2 or 3");
  if (opts.sample_size > 0) return mine_sampled(kb, opts);
  const std::size_t n = kb.num_entities();
  if (n > opts.entity_cap) {
    throw ConfigError(std::to_string(n) + " entities exceed the exhaustive mining cap of " +
                      std::to_string(opts.entity_cap) +
                      "; use sampling mode (a positive sample size)");
  }
  const Vocabulary& vocab = kb.vocab();
  const std::size_t nr = kb.num_relations();
  std::vector<BitRelation> rel(nr, BitRelation(n));
  for (std::size_t r = 0; r < nr; ++r) {
    for (const auto& [h, t] : kb.train_index().pairs(static_cast<RelationId>(r))) {
      rel[r].set(static_cast<std::size_t>(h), static_cast<std::size_t>(t));
    }
    rel[r].refresh_active();
  }

  // One unit of work per first body relation; results merge in unit order so
  // the outcome does not depend on the worker count.
  std::vector<Accumulator> parts(nr);
  const auto run_unit = [&](std::size_t a) {
    Accumulator& acc = parts[a];
    acc.kept.resize(nr);
    BitRelation ab(n), abc(n);
    const auto visit = [&](std::span<const RelationId> body, const BitRelation& grounded) {
      const long body_count = grounded.count();
      for (std::size_t h = 0; h < nr; ++h) {
        const auto head = static_cast<RelationId>(h);
        const bool ibl = classify_ibl(body, head, vocab);
        if (!mode_accepts(opts.mode, ibl)) continue;
        Rule rule;
        std::copy(body.begin(), body.end(), rule.body.begin());
        rule.length = static_cast<int>(body.size());
        rule.head = head;
        rule.is_ibl = ibl;
        const long support = body_count > 0 ? grounded.overlap(rel[h]) : 0;
        acc.add({rule, make_stats(support, body_count)}, opts);
      }
    };
    std::array<RelationId, 3> body{static_cast<RelationId>(a), 0, 0};
    visit(std::span<const RelationId>(body).first(1), rel[a]);
    if (opts.max_len < 2) return;
    for (std::size_t b = 0; b < nr; ++b) {
      body[1] = static_cast<RelationId>(b);
      rel[a].compose(rel[b], ab);
      visit(std::span<const RelationId>(body).first(2), ab);
      if (opts.max_len < 3) continue;
      for (std::size_t c = 0; c < nr; ++c) {
        body[2] = static_cast<RelationId>(c);
        ab.compose(rel[c], abc);
        visit(std::span<const RelationId>(body).first(3), abc);
      }
    }
  };

  const int workers = std::max(1, std::min<int>(opts.workers, static_cast<int>(nr)));
  if (workers == 1) {
    for (std::size_t a = 0; a < nr; ++a) run_unit(a);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) {
      pool.emplace_back([&] {
        for (std::size_t a = next++; a < nr; a = next++) run_unit(a);
      });
    }
    for (auto& t : pool) t.join();
  }
  return finish(parts, opts, nr, false);
}

RuleQuality aggregate_rule_quality(const KnowledgeBase& kb, int max_len, const MiningOptions& opts) {
  MiningOptions o = opts;
  o.max_len = max_len;
  o.keep_rules = false;
  return mine_rules(kb, o).quality;
}

void write_rules_csv(std::ostream& out, const std::vector<MinedRule>& rules,
                     const Vocabulary& vocab, bool ascii) {
  out << "head,body,is_ibl,support,body_count,precision\n";
  char prec[32];
  for (const MinedRule& m : rules) {
    std::string body;
    for (int i = 0; i < m.rule.length; ++i) {
      if (i > 0) body += ascii ? "&" : "∧";
      body += vocab.relation_label(m.rule.body[static_cast<std::size_t>(i)], ascii);
    }
    std::snprintf(prec, sizeof(prec), "%.6f", m.stats.precision);
    out << vocab.relation_label(m.rule.head, ascii) << "," << body << ","
        << (m.rule.is_ibl ? "true" : "false") << "," << m.stats.support << ","
        << m.stats.body_count << "," << prec << "\n";
  }
}

std::string quality_table(const RuleQuality& q, const std::string& label) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-16s %-8s %10s %12s %12s\n", "dataset", "class", "rules",
                "avg support", "avg prec %");
  out << buf;
  const auto row = [&](const char* name, const ClassQuality& c) {
    std::snprintf(buf, sizeof(buf), "%-16s %-8s %10ld %12.1f %12.1f\n", label.c_str(), name,
                  c.rules, c.avg_support, 100 * c.avg_precision);
    out << buf;
  };
  row("ibl", q.ibl);
  row("non-ibl", q.non_ibl);
  return out.str();
}

std::string quality_json(const RuleQuality& q) {
  const auto cls = [](const ClassQuality& c) {
    return nlohmann::json{{"rules", c.rules},
                          {"avg_support", c.avg_support},
                          {"avg_precision", c.avg_precision}};
  };
  nlohmann::json j{{"ibl", cls(q.ibl)},
                   {"non_ibl", cls(q.non_ibl)},
                   {"unsupported", q.unsupported},
                   {"visited", q.visited},
                   {"sampled", q.sampled}};
  return j.dump(2);
}

namespace {

void add_path_counts(const KnowledgeBase& kb, const MinedRule& m, EntityId h,
                     std::vector<double>& cur, std::vector<double>& next, std::span<double> out) {
  std::fill(cur.begin(), cur.end(), 0.0);
  cur[static_cast<std::size_t>(h)] = 1.0;
  for (RelationId rel : m.rule.body_span()) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t x = 0; x < cur.size(); ++x) {
      if (cur[x] == 0.0) continue;
      for (EntityId y : kb.tails_of(static_cast<EntityId>(x), rel)) {
        next[static_cast<std::size_t>(y)] += cur[x];
      }
    }
    cur.swap(next);
  }
  for (std::size_t t = 0; t < out.size(); ++t) out[t] += m.stats.precision * cur[t];
}

}  // namespace

std::vector<double> rule_rank(const KnowledgeBase& kb, std::span<const MinedRule> rules,
                              EntityId h, RelationId r) {
  const std::size_t n = kb.num_entities();
  std::vector<double> out(n, 0.0), cur(n), next(n);
  for (const MinedRule& m : rules) {
    if (m.rule.head == r) add_path_counts(kb, m, h, cur, next, out);
  }
  return out;
}

ScorerFactory rule_scorer(const KnowledgeBase& kb, std::span<const MinedRule> rules) {
  return [&kb, rules](RelationId r) -> TailScorer {
    auto mine = std::make_shared<std::vector<MinedRule>>();
    for (const MinedRule& m : rules) {
      if (m.rule.head == r) mine->push_back(m);
    }
    return [&kb, mine](EntityId h, std::span<double> out) {
      const std::size_t n = kb.num_entities();
      std::vector<double> cur(n), next(n);
      std::fill(out.begin(), out.end(), 0.0);
      for (const MinedRule& m : *mine) add_path_counts(kb, m, h, cur, next, out);
    };
  };
}

}  // namespace kbc
