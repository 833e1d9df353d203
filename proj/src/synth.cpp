#include "kbc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "kbc/rules.hpp"

namespace kbc {
namespace {

Vocabulary named_vocab(int n_entity, int n_relation) {
  Vocabulary v;
  for (int i = 0; i < n_entity; ++i) v.intern_entity("e" + std::to_string(i));
  for (int i = 0; i < n_relation; ++i) v.intern_relation("r" + std::to_string(i));
  v.freeze();
  return v;
}

void check_sizes(int dim, int n_entity, int n_relation) {
  if (dim <= 0 || n_entity <= 0 || n_relation <= 0) {
    throw ConfigError("synthetic KB sizes must be positive");
  }
}

std::vector<Triple> facts_within(const Matrix& entity, const Matrix& relation, double tol) {
  std::vector<Triple> out;
  for (Eigen::Index r = 0; r < relation.rows(); ++r) {
    for (Eigen::Index h = 0; h < entity.rows(); ++h) {
      const Eigen::RowVectorXd moved = entity.row(h) + relation.row(r);
      for (Eigen::Index t = 0; t < entity.rows(); ++t) {
        if ((moved - entity.row(t)).norm() < tol) {
          out.push_back({static_cast<EntityId>(h), static_cast<RelationId>(r),
                         static_cast<EntityId>(t)});
        }
      }
    }
  }
  return out;
}

}  // namespace

SyntheticKb lattice_kb(int dim, int n_entity, int n_relation, int extent, std::mt19937_64& rng) {
  check_sizes(dim, n_entity, n_relation);
  if (extent <= 0) {
    extent = 1;
    while (std::pow(extent, dim) < 2.0 * n_entity) ++extent;
  }
  if (std::pow(extent, dim) < n_entity) throw ConfigError("lattice too small for the entity count");
  SyntheticKb s{named_vocab(n_entity, n_relation), {}, Matrix(n_entity, dim),
                Matrix(n_relation, dim)};
  std::uniform_int_distribution<int> coord(0, extent - 1);
  std::set<std::vector<int>> used;
  for (int e = 0; e < n_entity; ++e) {
    std::vector<int> p(static_cast<std::size_t>(dim));
    do {
      for (int& c : p) c = coord(rng);
    } while (!used.insert(p).second);
    for (int j = 0; j < dim; ++j) s.entity(e, j) = p[static_cast<std::size_t>(j)];
  }
  std::uniform_int_distribution<int> step(-1, 1);
  for (int r = 0; r < n_relation; ++r) {
    do {
      for (int j = 0; j < dim; ++j) s.relation(r, j) = step(rng);
    } while (s.relation.row(r).cwiseAbs().sum() == 0);
  }
  s.facts = facts_within(s.entity, s.relation, 1e-9);
  return s;
}

SyntheticKb thresholded_kb(int dim, int n_entity, int n_relation, double extent, double step,
                           double tau, std::mt19937_64& rng) {
  check_sizes(dim, n_entity, n_relation);
  SyntheticKb s{named_vocab(n_entity, n_relation), {}, Matrix(n_entity, dim),
                Matrix(n_relation, dim)};
  std::uniform_real_distribution<double> coord(0.0, extent);
  std::normal_distribution<double> gauss;
  for (Eigen::Index i = 0; i < s.entity.size(); ++i) s.entity.data()[i] = coord(rng);
  for (int r = 0; r < n_relation; ++r) {
    for (int j = 0; j < dim; ++j) s.relation(r, j) = gauss(rng);
    s.relation.row(r) *= step / std::max(s.relation.row(r).norm(), 1e-12);
  }
  s.facts = facts_within(s.entity, s.relation, tau);
  return s;
}

SyntheticKb random_graph_kb(int n_entity, int n_relation, int n_facts, std::mt19937_64& rng) {
  check_sizes(1, n_entity, n_relation);
  const long space = static_cast<long>(n_entity) * n_entity * n_relation;
  if (n_facts < 0 || n_facts > space) throw ConfigError("fact count exceeds the possible triples");
  SyntheticKb s{named_vocab(n_entity, n_relation), {}, {}, {}};
  std::uniform_int_distribution<EntityId> ent(0, n_entity - 1);
  std::uniform_int_distribution<RelationId> rel(0, n_relation - 1);
  std::set<Triple> seen;
  while (static_cast<int>(seen.size()) < n_facts) seen.insert({ent(rng), rel(rng), ent(rng)});
  s.facts.assign(seen.begin(), seen.end());
  std::shuffle(s.facts.begin(), s.facts.end(), rng);
  return s;
}

KnowledgeBase split_kb(const SyntheticKb& s, double valid_frac, double test_frac,
                       std::mt19937_64& rng) {
  if (valid_frac < 0 || test_frac < 0 || valid_frac + test_frac >= 1) {
    throw ConfigError("split fractions must be non-negative and sum below 1");
  }
  std::vector<Triple> facts = s.facts;
  std::shuffle(facts.begin(), facts.end(), rng);
  const auto n = facts.size();
  const auto nv = static_cast<std::size_t>(std::floor(valid_frac * static_cast<double>(n)));
  const auto nt = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(n)));
  std::vector<Triple> valid(facts.begin(), facts.begin() + static_cast<long>(nv));
  std::vector<Triple> test(facts.begin() + static_cast<long>(nv),
                           facts.begin() + static_cast<long>(nv + nt));
  std::vector<Triple> train(facts.begin() + static_cast<long>(nv + nt), facts.end());
  return KnowledgeBase(s.vocab, std::move(train), std::move(valid), std::move(test));
}

void write_splits(const KnowledgeBase& kb, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Vocabulary& v = kb.vocab();
  for (Split sp : {Split::Train, Split::Valid, Split::Test}) {
    const auto path = dir / (std::string(to_string(sp)) + ".txt");
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write " + path.string());
    for (const Triple& t : kb.split(sp)) {
      out << v.entity_name(t.head) << '\t' << v.base_relation_name(t.relation) << '\t'
          << v.entity_name(t.tail) << '\n';
    }
  }
}

TheoremCase check_ibl_precision(const KnowledgeBase& kb) {
  MiningOptions opts;
  opts.max_len = 3;
  opts.mode = RuleMode::IblOnly;
  opts.keep_rules = true;
  opts.min_support = 0;
  TheoremCase c;
  for (const MinedRule& m : mine_rules(kb, opts).rules) {
    ++c.rules_checked;
    c.min_precision = std::min(c.min_precision, m.stats.precision);
    if (m.stats.precision < 1.0) ++c.below_one;
  }
  c.facts = static_cast<long>(kb.split(Split::Train).size());
  return c;
}

bool TheoremReport::exact_holds() const {
  return !exact.empty() && std::all_of(exact.begin(), exact.end(), [](const TheoremCase& c) {
           return c.rules_checked > 0 && c.below_one == 0;
         });
}

bool TheoremReport::control_violated() const {
  return !control.empty() && std::all_of(control.begin(), control.end(),
                                         [](const TheoremCase& c) { return c.below_one > 0; });
}

TheoremReport verify_theorem_iblrule(const TheoremOptions& opts, std::mt19937_64& rng) {
  if (opts.n_entity > 100) throw ConfigError("theorem check is limited to 100 entities");
  TheoremReport report;
  const auto run = [&](auto generate) {
    for (int attempt = 1; attempt <= opts.max_retries; ++attempt) {
      SyntheticKb s = generate();
      if (s.facts.empty()) continue;
      TheoremCase c =
          check_ibl_precision(KnowledgeBase(s.vocab, std::move(s.facts), {}, {}));
      c.attempts = attempt;
      return c;
    }
    throw DatasetError("no non-empty synthetic KB after " + std::to_string(opts.max_retries) +
                       " attempts; raise the entity or relation count");
  };
  for (int i = 0; i < opts.cases; ++i) {
    report.exact.push_back(
        run([&] { return lattice_kb(opts.dim, opts.n_entity, opts.n_relation, 0, rng); }));
    report.control.push_back(run([&] {
      return thresholded_kb(opts.dim, opts.n_entity, opts.n_relation, opts.control_extent,
                            opts.control_step, opts.control_tau, rng);
    }));
  }
  return report;
}

std::string theorem_text(const TheoremReport& r) {
  std::ostringstream out;
  const auto block = [&](const char* name, const std::vector<TheoremCase>& cases) {
    long rules = 0, below = 0;
    double mn = 1.0;
    for (const auto& c : cases) {
      rules += c.rules_checked;
      below += c.below_one;
      mn = std::min(mn, c.min_precision);
    }
    out << name << ": " << cases.size() << " KBs, " << rules << " supported rules, " << below
        << " below precision 1.0, min precision " << mn << "\n";
  };
  block("exact lattice", r.exact);
  block("thresholded control", r.control);
  out << (r.exact_holds() ? "all IBL rules precision 1.0 on exact KBs\n"
                          : "IBL rule below precision 1.0 on an exact KB\n");
  out << (r.control_violated() ? "control: every KB has a rule below 1.0 (expected)\n"
                               : "control: some KB kept every rule at 1.0\n");
  return out.str();
}

std::string theorem_json(const TheoremReport& r) {
  const auto cases = [](const std::vector<TheoremCase>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : v) {
      a.push_back({{"facts", c.facts},
                   {"attempts", c.attempts},
                   {"rules_checked", c.rules_checked},
                   {"below_one", c.below_one},
                   {"min_precision", c.min_precision}});
    }
    return a;
  };
  nlohmann::json j{{"exact", cases(r.exact)},
                   {"control", cases(r.control)},
                   {"exact_holds", r.exact_holds()},
                   {"control_violated", r.control_violated()}};
  return j.dump(2);
}

}  // namespace kbc
