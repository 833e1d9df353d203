#include "kbc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kbc/synth.hpp"

namespace kbc {

GradcheckResult gradcheck(ModelKind kind, Objective objective, std::uint64_t seed,
                          const GradcheckOptions& opts) {
  std::mt19937_64 rng(seed);
  SyntheticKb s = random_graph_kb(opts.entities, opts.base_relations, opts.facts, rng);
  const KnowledgeBase kb(s.vocab, s.facts, {}, {});

  const ModelShape shape{kind, opts.entities, 2 * opts.base_relations, opts.dim,
                         default_norm(kind), opts.gamma};
  ModelParams m = init_params(shape, rng);
  // Move projections well away from the identity so their gradient matters.
  std::uniform_real_distribution<double> noise(-0.3, 0.3);
  for (Matrix& w : m.projection) {
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] += noise(rng);
  }

  const auto train = kb.augmented(Split::Train);
  std::vector<Triple> picked;
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (int i = 0; i < opts.batch; ++i) picked.push_back(train[pick(rng)]);
  const Batch batch = make_batch(kb, picked, opts.negatives, rng, false);

  const Gradients g = gradients(m, kb, batch, objective, opts.alpha);
  const auto base_sig = kink_signature(m, kb, batch, objective);
  const auto loss = [&] {
    return loss_and_gradients(m, kb, batch, objective, opts.alpha, nullptr).total;
  };

  GradcheckResult res{kind, objective, seed, 0.0, g.max_abs(), 0, 0};
  const auto check_block = [&](Matrix& p, const Matrix& gp) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      double& x = p.data()[i];
      const double orig = x;
      x = orig + opts.step;
      const double up = loss();
      const bool same_up = kink_signature(m, kb, batch, objective) == base_sig;
      x = orig - opts.step;
      const double down = loss();
      const bool same_down = kink_signature(m, kb, batch, objective) == base_sig;
      x = orig;
      if (!same_up || !same_down) {
        ++res.skipped;
        continue;
      }
      const double numeric = (up - down) / (2 * opts.step);
      const double analytic = gp.data()[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), opts.floor});
      res.max_rel_error = std::max(res.max_rel_error, std::abs(numeric - analytic) / denom);
      ++res.checked;
    }
  };
  check_block(m.entity, g.entity);
  check_block(m.relation, g.relation);
  for (std::size_t r = 0; r < m.projection.size(); ++r) check_block(m.projection[r], g.projection[r]);
  return res;
}

std::string gradcheck_table(const std::vector<GradcheckResult>& results) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %-22s %6s %12s %12s %8s %8s\n", "model", "objective",
                "seed", "max rel err", "max |grad|", "checked", "kinks");
  out << buf;
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%-10s %-22s %6llu %12.3e %12.3e %8ld %8ld\n",
                  std::string(to_string(r.kind)).c_str(), std::string(to_string(r.objective)).c_str(),
                  static_cast<unsigned long long>(r.seed), r.max_rel_error, r.max_abs_gradient,
                  r.checked, r.skipped);
    out << buf;
  }
  return out.str();
}

}  // namespace kbc
