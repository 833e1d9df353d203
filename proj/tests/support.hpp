#pragma once

// Shared fixtures and brute-force oracles. The oracles deliberately avoid the
// library's indexes and scorers: they scan triple lists and recompute scores
// coordinate by coordinate.

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kbc/geometry.hpp"
#include "kbc/kb.hpp"

namespace testing {

inline std::filesystem::path data_dir(const std::string& name) {
  return std::filesystem::path(KBC_TEST_DATA) / name;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("kbc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// KB with entities e0.. and relations r0.. from integer triples.
inline kbc::KnowledgeBase make_kb(int n_entity, int n_relation, std::vector<kbc::Triple> train,
                                  std::vector<kbc::Triple> valid = {},
                                  std::vector<kbc::Triple> test = {}) {
  kbc::Vocabulary v;
  for (int i = 0; i < n_entity; ++i) v.intern_entity("e" + std::to_string(i));
  for (int i = 0; i < n_relation; ++i) v.intern_relation("r" + std::to_string(i));
  return kbc::KnowledgeBase(std::move(v), std::move(train), std::move(valid), std::move(test));
}

inline std::vector<kbc::Triple> random_triples(int n_entity, int n_relation, int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> e(0, n_entity - 1), r(0, n_relation - 1);
  std::vector<kbc::Triple> out;
  for (int i = 0; i < n; ++i) out.push_back({e(rng), r(rng), e(rng)});
  return out;
}

// All augmented training facts as a plain list, by linear construction.
inline std::vector<kbc::Triple> augmented_list(const std::vector<kbc::Triple>& base, int n_relation) {
  std::vector<kbc::Triple> out = base;
  for (const auto& t : base) out.push_back({t.tail, t.relation + n_relation, t.head});
  return out;
}

// Plain norm of a difference vector in the model's family, written out per
// coordinate.
inline double naive_norm(kbc::ModelKind kind, int p, const std::vector<double>& d) {
  std::vector<double> mags;
  if (kbc::is_rotational(kind)) {
    const std::size_t k = d.size() / 2;
    for (std::size_t j = 0; j < k; ++j) mags.push_back(std::abs(std::complex<double>(d[j], d[j + k])));
  } else {
    for (double x : d) mags.push_back(std::abs(x));
  }
  double s = 0;
  for (double m : mags) s += p == 1 ? m : m * m;
  return p == 1 ? s : std::sqrt(s);
}

// W_r e computed with explicit loops.
inline std::vector<double> naive_project(const kbc::ModelParams& m, int r, int e) {
  const int d = m.dim();
  std::vector<double> x(d);
  for (int j = 0; j < d; ++j) x[j] = m.entity(e, j);
  if (m.kind == kbc::ModelKind::TransE || m.kind == kbc::ModelKind::RotatE) return x;
  const auto& w = m.projection[r];
  std::vector<double> y(d, 0.0);
  if (m.kind == kbc::ModelKind::TransR) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) y[i] += w(i, j) * x[j];
    return y;
  }
  const int k = d / 2;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      y[i] += w(i, j) * x[j];
      y[i + k] += w(i, j) * x[j + k];
    }
  }
  return y;
}

inline std::vector<double> naive_translate(const kbc::ModelParams& m, int r, int e) {
  std::vector<double> x = naive_project(m, r, e);
  if (!kbc::is_rotational(m.kind)) {
    for (int j = 0; j < m.dim(); ++j) x[j] += m.relation(r, j);
    return x;
  }
  const int k = m.dim() / 2;
  std::vector<double> y(x.size());
  for (int j = 0; j < k; ++j) {
    const auto z = std::complex<double>(x[j], x[j + k]) * std::polar(1.0, m.relation(r, j));
    y[j] = z.real();
    y[j + k] = z.imag();
  }
  return y;
}

inline double naive_distance(const kbc::ModelParams& m, const std::vector<double>& a,
                             const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return naive_norm(m.kind, m.norm_p, d);
}

// IBLE score vector for (h, r, ?) from the raw augmented training list.
inline std::vector<double> naive_ible(const kbc::ModelParams& m, const std::vector<kbc::Triple>& train_aug,
                                      int n_entity, int h, int r) {
  std::set<kbc::Triple> facts(train_aug.begin(), train_aug.end());
  std::vector<double> sum(n_entity, 0.0), cnt(n_entity, 0.0);
  const auto th = naive_translate(m, r, h);
  for (const auto& f : facts) {
    if (f.relation != r) continue;
    const double dist = naive_distance(m, th, naive_translate(m, r, f.head));
    sum[f.tail] += std::max(m.gamma - dist, 0.0);
    cnt[f.tail] += 1;
  }
  std::vector<double> out(n_entity, 0.0);
  for (int t = 0; t < n_entity; ++t) {
    if (cnt[t] > 0) out[t] = sum[t] / (m.gamma * cnt[t]);
  }
  return out;
}

inline double naive_T(const kbc::ModelParams& m, int h, int r, int t) {
  return naive_distance(m, naive_translate(m, r, h), naive_project(m, r, t));
}

// Rank by sorting: position of gold among unmasked candidates sorted by
// descending score, with gold placed after every equal score.
inline long sort_rank(const std::vector<double>& scores, int gold, const std::set<int>& mask) {
  std::vector<std::pair<double, int>> items;
  for (int e = 0; e < static_cast<int>(scores.size()); ++e) {
    if (e != gold && mask.count(e)) continue;
    items.push_back({scores[e], e == gold ? 1 : 0});
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].second == 1) return static_cast<long>(i + 1);
  }
  return -1;
}

// Distinct (x, y) pairs connected by the body path, by nested loops over the
// augmented fact list.
inline std::set<std::pair<int, int>> naive_body_pairs(const std::vector<kbc::Triple>& facts,
                                                      const std::vector<int>& body) {
  std::set<std::pair<int, int>> cur;
  for (const auto& f : facts) {
    if (f.relation == body[0]) cur.insert({f.head, f.tail});
  }
  for (std::size_t i = 1; i < body.size(); ++i) {
    std::set<std::pair<int, int>> next;
    for (const auto& [x, z] : cur) {
      for (const auto& f : facts) {
        if (f.relation == body[i] && f.head == z) next.insert({x, f.tail});
      }
    }
    cur.swap(next);
  }
  return cur;
}

// Support and body count from nested loops over the deduplicated augmented facts.
inline std::pair<long, long> naive_rule_stats(const std::vector<kbc::Triple>& aug,
                                              const std::vector<int>& body, int head) {
  const std::set<kbc::Triple> uniq(aug.begin(), aug.end());
  const std::vector<kbc::Triple> facts(uniq.begin(), uniq.end());
  const auto pairs = naive_body_pairs(facts, body);
  long support = 0;
  for (const auto& [x, y] : pairs) support += uniq.count({x, head, y}) ? 1 : 0;
  return {support, static_cast<long>(pairs.size())};
}

enum class NaiveScorer { Translational, Ible, Cible };

// Filtered ranks for every test triple in both directions (tail queries
// first, then head queries), from linear scans and the coordinate-wise score
// oracles.
inline std::vector<long> brute_ranks(const kbc::ModelParams& m, const std::vector<kbc::Triple>& train,
                                     const std::vector<kbc::Triple>& valid,
                                     const std::vector<kbc::Triple>& test, int n_entity,
                                     int n_relation, NaiveScorer scorer, double alpha) {
  const auto train_aug = augmented_list(train, n_relation);
  std::vector<kbc::Triple> known = train_aug;
  for (const auto* s : {&valid, &test}) {
    for (const kbc::Triple& t : augmented_list(*s, n_relation)) known.push_back(t);
  }
  std::vector<long> out;
  for (const kbc::Triple& q : augmented_list(test, n_relation)) {
    std::vector<double> scores(n_entity);
    const auto ible = naive_ible(m, train_aug, n_entity, q.head, q.relation);
    for (int t = 0; t < n_entity; ++t) {
      const double dist = naive_T(m, q.head, q.relation, t);
      switch (scorer) {
        case NaiveScorer::Translational:
          scores[t] = -dist;
          break;
        case NaiveScorer::Ible:
          scores[t] = ible[t];
          break;
        case NaiveScorer::Cible:
          scores[t] = (1 - alpha) * ible[t] + alpha / m.gamma * std::max(m.gamma - dist, 0.0);
          break;
      }
    }
    std::set<int> mask;
    for (const kbc::Triple& k : known) {
      if (k.head == q.head && k.relation == q.relation) mask.insert(k.tail);
    }
    out.push_back(sort_rank(scores, q.tail, mask));
  }
  return out;
}

}  // namespace testing
