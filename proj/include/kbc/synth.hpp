#pragma once

// Synthetic knowledge bases: exact translational lattices (every fact is
// e_h + r = e_t), thresholded continuous embeddings (approximate facts), and
// uniform random graphs.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "kbc/geometry.hpp"
#include "kbc/kb.hpp"

namespace kbc {

struct SyntheticKb {
  Vocabulary vocab;            // entities e0.., relations r0..
  std::vector<Triple> facts;   // base relations only
  Matrix entity;               // generating points (empty for random graphs)
  Matrix relation;
};

// Distinct integer points in [0, extent)^dim, relation steps in {-1, 0, 1}^dim
// (never all zero). extent <= 0 picks the smallest grid holding 2 * n_entity
// points.
SyntheticKb lattice_kb(int dim, int n_entity, int n_relation, int extent, std::mt19937_64& rng);
// Points uniform in [0, extent)^dim, relation vectors uniform on the sphere of
// radius `step`; (h, r, t) is a fact when ||e_h + r - e_t||_2 < tau.
SyntheticKb thresholded_kb(int dim, int n_entity, int n_relation, double extent, double step,
                           double tau, std::mt19937_64& rng);
SyntheticKb random_graph_kb(int n_entity, int n_relation, int n_facts, std::mt19937_64& rng);

// Shuffles the facts into train/valid/test by the given fractions of the
// total; the rest goes to train.
KnowledgeBase split_kb(const SyntheticKb& s, double valid_frac, double test_frac,
                       std::mt19937_64& rng);
// Writes train.txt, valid.txt and test.txt with entity and relation names.
void write_splits(const KnowledgeBase& kb, const std::filesystem::path& dir);

struct TheoremCase {
  long facts = 0;
  long attempts = 0;       // generations until a non-empty KB
  long rules_checked = 0;  // supported instance-based rules
  long below_one = 0;      // of those, precision < 1
  double min_precision = 1.0;
};

struct TheoremReport {
  std::vector<TheoremCase> exact;
  std::vector<TheoremCase> control;

  bool exact_holds() const;        // every exact case has all rules at 1.0
  bool control_violated() const;   // every control case has a rule below 1.0
};

struct TheoremOptions {
  int dim = 2;
  int n_entity = 40;
  int n_relation = 3;
  int cases = 20;
  int max_retries = 20;
  // Negative control: continuous points with fuzzy facts.
  double control_extent = 4.0;
  double control_step = 1.0;
  double control_tau = 0.6;
};

TheoremCase check_ibl_precision(const KnowledgeBase& kb);
// Throws DatasetError when retries cannot produce a non-empty KB.
TheoremReport verify_theorem_iblrule(const TheoremOptions& opts, std::mt19937_64& rng);
std::string theorem_text(const TheoremReport& r);
std::string theorem_json(const TheoremReport& r);

}  // namespace kbc
