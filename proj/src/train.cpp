#include "kbc/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "kbc/eval.hpp"

namespace kbc {
namespace {

constexpr int kMaxRejections = 64;

// NaN distances propagate so divergence is detected.
double hinge(double gamma, double d) { return d >= gamma ? 0.0 : gamma - d; }

// Softmax cross-entropy of entry 0 over logits k * s; fills d loss / d s when
// grad is non-empty.
double softmax_nll(std::span<const double> s, double k, std::span<double> grad) {
  const double mx = k * *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double v : s) z += std::exp(k * v - mx);
  const double lse = mx + std::log(z);
  if (!grad.empty()) {
    for (std::size_t i = 0; i < s.size(); ++i) grad[i] = k * std::exp(k * s[i] - lse);
    grad[0] -= k;
  }
  return lse - k * s[0];
}

std::span<double> row_of(Matrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

// Forward (and optionally backward) pass over one batch, grouped by relation
// so each relation's projection is computed once.
class Engine {
 public:
  Engine(const ModelParams& m, const KnowledgeBase& kb, const Batch& batch, Objective objective,
         double alpha, Gradients* grad, std::vector<std::uint8_t>* signature)
      : m_(m),
        kb_(kb),
        batch_(batch),
        objective_(objective),
        alpha_(alpha),
        grad_(grad),
        sig_(signature),
        use_translational_(objective != Objective::IbleCe),
        use_prototypes_(objective != Objective::TranslationalMargin),
        slot_(kb.num_entities(), -1),
        head_pos_(kb.num_entities(), -1) {}

  LossBreakdown run() {
    LossBreakdown out;
    const std::size_t b = batch_.positives.size();
    if (b == 0) return out;
    std::vector<std::vector<std::size_t>> by_rel(kb_.num_relations());
    for (std::size_t q = 0; q < b; ++q) {
      by_rel[static_cast<std::size_t>(batch_.positives[q].relation)].push_back(q);
    }
    scale_ = 1.0 / static_cast<double>(b);
    for (std::size_t r = 0; r < by_rel.size(); ++r) {
      if (!by_rel[r].empty()) run_relation(static_cast<RelationId>(r), by_rel[r]);
    }
    out.margin = margin_sum_ * scale_;
    out.ible_ce = ible_sum_ * scale_;
    switch (objective_) {
      case Objective::TranslationalMargin:
        out.total = out.margin;
        break;
      case Objective::IbleCe:
        out.total = out.ible_ce;
        break;
      case Objective::CibleCe:
        out.total = cible_sum_ * scale_;
        break;
    }
    return out;
  }

 private:
  void add_row(EntityId e) {
    auto& s = slot_[static_cast<std::size_t>(e)];
    if (s < 0) {
      s = static_cast<int>(ids_.size());
      ids_.push_back(e);
    }
  }

  void record_branches(std::span<const double> diff, double dist) {
    sig_->push_back(dist < m_.gamma ? 1 : 0);
    if (m_.norm_p == 1 && !is_rotational(m_.kind)) {
      for (double x : diff) sig_->push_back(x > 0 ? 2 : (x < 0 ? 0 : 1));
    }
  }

  void run_relation(RelationId r, const std::vector<std::size_t>& queries) {
    const int d = m_.dim();
    const double gamma = m_.gamma;
    ids_.clear();
    for (std::size_t q : queries) {
      add_row(batch_.positives[q].head);
      add_row(batch_.positives[q].tail);
      for (EntityId e : batch_.negatives_of(q)) add_row(e);
    }
    std::span<const EntityId> heads;
    if (use_prototypes_) {
      heads = kb_.train_index().heads(r);
      for (std::size_t i = 0; i < heads.size(); ++i) {
        add_row(heads[i]);
        head_pos_[static_cast<std::size_t>(heads[i])] = static_cast<int>(i);
      }
    }
    const Matrix proj = project_rows(m_, r, ids_);
    Matrix gproj;
    if (grad_) gproj = Matrix::Zero(proj.rows(), proj.cols());

    const std::size_t nc = static_cast<std::size_t>(batch_.per_positive) + 1;
    std::vector<EntityId> cand(nc);
    std::vector<double> dist_t(nc), ible(nc), score(nc), g_t(nc), g_i(nc), g_s(nc);
    std::vector<double> dist_p(heads.size()), f(heads.size()), g_f(heads.size());
    Matrix diff_t(static_cast<Eigen::Index>(nc), d);
    Matrix diff_p(static_cast<Eigen::Index>(heads.size()), d);
    std::vector<double> unit(static_cast<std::size_t>(d));
    Vec moved(d), g_moved(d);

    for (std::size_t q : queries) {
      const Triple& pos = batch_.positives[q];
      const auto negs = batch_.negatives_of(q);
      cand[0] = pos.tail;
      std::copy(negs.begin(), negs.end(), cand.begin() + 1);
      const int hs = slot_[static_cast<std::size_t>(pos.head)];
      const EntityId skip = batch_.hold_out_query ? pos.head : -1;

      double margin_q = 0.0;
      if (use_translational_) {
        moved = apply_relation(m_, r, proj.row(hs).transpose());
        for (std::size_t c = 0; c < nc; ++c) {
          diff_t.row(static_cast<Eigen::Index>(c)) =
              moved.transpose() - proj.row(slot_[static_cast<std::size_t>(cand[c])]);
          dist_t[c] = norm_of(m_.kind, m_.norm_p, row_of(diff_t, static_cast<Eigen::Index>(c)));
          if (sig_) record_branches(row_of(diff_t, static_cast<Eigen::Index>(c)), dist_t[c]);
        }
        double neg = 0.0;
        for (std::size_t c = 1; c < nc; ++c) neg += hinge(gamma, dist_t[c]);
        margin_q = -hinge(gamma, dist_t[0]) + neg / static_cast<double>(nc - 1);
        margin_sum_ += margin_q;
      }

      if (use_prototypes_) {
        for (std::size_t i = 0; i < heads.size(); ++i) {
          diff_p.row(static_cast<Eigen::Index>(i)) =
              proj.row(hs) - proj.row(slot_[static_cast<std::size_t>(heads[i])]);
          dist_p[i] = norm_of(m_.kind, m_.norm_p, row_of(diff_p, static_cast<Eigen::Index>(i)));
          f[i] = hinge(gamma, dist_p[i]);
          if (sig_) record_branches(row_of(diff_p, static_cast<Eigen::Index>(i)), dist_p[i]);
        }
        for (std::size_t c = 0; c < nc; ++c) {
          double s = 0.0;
          std::size_t n = 0;
          for (EntityId p : kb_.prototypes_of(r, cand[c])) {
            if (p == skip) continue;
            s += f[static_cast<std::size_t>(head_pos_[static_cast<std::size_t>(p)])];
            ++n;
          }
          ible[c] = n == 0 ? 0.0 : s / (gamma * static_cast<double>(n));
        }
        const bool ible_grad = grad_ && objective_ == Objective::IbleCe;
        ible_sum_ += softmax_nll(ible, batch_.logit_scale, ible_grad ? std::span<double>(g_s) : std::span<double>());
      }

      if (objective_ == Objective::CibleCe) {
        for (std::size_t c = 0; c < nc; ++c) {
          score[c] = (1.0 - alpha_) * ible[c] + alpha_ / gamma * hinge(gamma, dist_t[c]);
        }
        cible_sum_ += softmax_nll(score, batch_.logit_scale, grad_ ? std::span<double>(g_s) : std::span<double>());
      }

      if (!grad_) continue;

      // d loss / d T(candidate) and d loss / d I(candidate), batch-mean scaled.
      std::fill(g_t.begin(), g_t.end(), 0.0);
      std::fill(g_i.begin(), g_i.end(), 0.0);
      switch (objective_) {
        case Objective::TranslationalMargin:
          if (dist_t[0] < gamma) g_t[0] = scale_;
          for (std::size_t c = 1; c < nc; ++c) {
            if (dist_t[c] < gamma) g_t[c] = -scale_ / static_cast<double>(nc - 1);
          }
          break;
        case Objective::IbleCe:
          for (std::size_t c = 0; c < nc; ++c) g_i[c] = scale_ * g_s[c];
          break;
        case Objective::CibleCe:
          for (std::size_t c = 0; c < nc; ++c) {
            g_i[c] = scale_ * (1.0 - alpha_) * g_s[c];
            if (dist_t[c] < gamma) g_t[c] = -scale_ * alpha_ / gamma * g_s[c];
          }
          break;
      }

      auto hrow = row_of(gproj, hs);
      if (use_prototypes_) {
        std::fill(g_f.begin(), g_f.end(), 0.0);
        for (std::size_t c = 0; c < nc; ++c) {
          if (g_i[c] == 0.0) continue;
          const auto protos = kb_.prototypes_of(r, cand[c]);
          const auto n = static_cast<std::size_t>(
              protos.size() - static_cast<std::size_t>(std::count(protos.begin(), protos.end(), skip)));
          if (n == 0) continue;
          const double w = g_i[c] / (gamma * static_cast<double>(n));
          for (EntityId p : protos) {
            if (p != skip) g_f[static_cast<std::size_t>(head_pos_[static_cast<std::size_t>(p)])] += w;
          }
        }
        for (std::size_t i = 0; i < heads.size(); ++i) {
          if (g_f[i] == 0.0 || !(dist_p[i] < gamma)) continue;
          const double g_dist = -g_f[i];
          norm_gradient(m_.kind, m_.norm_p, row_of(diff_p, static_cast<Eigen::Index>(i)), dist_p[i], unit);
          auto prow = row_of(gproj, slot_[static_cast<std::size_t>(heads[i])]);
          for (int j = 0; j < d; ++j) {
            hrow[static_cast<std::size_t>(j)] += g_dist * unit[static_cast<std::size_t>(j)];
            prow[static_cast<std::size_t>(j)] -= g_dist * unit[static_cast<std::size_t>(j)];
          }
        }
      }

      if (use_translational_) {
        g_moved.setZero();
        for (std::size_t c = 0; c < nc; ++c) {
          if (g_t[c] == 0.0) continue;
          norm_gradient(m_.kind, m_.norm_p, row_of(diff_t, static_cast<Eigen::Index>(c)), dist_t[c], unit);
          auto crow = row_of(gproj, slot_[static_cast<std::size_t>(cand[c])]);
          for (int j = 0; j < d; ++j) {
            const double v = g_t[c] * unit[static_cast<std::size_t>(j)];
            g_moved[j] += v;
            crow[static_cast<std::size_t>(j)] -= v;
          }
        }
        backprop_relation(r, moved, g_moved, hrow);
      }
    }

    if (grad_) backprop_projection(r, gproj);
    for (EntityId e : ids_) slot_[static_cast<std::size_t>(e)] = -1;
    for (EntityId e : heads) head_pos_[static_cast<std::size_t>(e)] = -1;
  }

  // moved = x + r, or moved = x rotated by the phases of r.
  void backprop_relation(RelationId r, const Vec& moved, const Vec& g_moved,
                         std::span<double> g_x) {
    if (!is_rotational(m_.kind)) {
      for (Eigen::Index j = 0; j < g_moved.size(); ++j) {
        g_x[static_cast<std::size_t>(j)] += g_moved[j];
        grad_->relation(r, j) += g_moved[j];
      }
      return;
    }
    const int k = m_.complex_dim();
    for (int j = 0; j < k; ++j) {
      const double theta = m_.relation(r, j);
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      const double gre = g_moved[j];
      const double gim = g_moved[j + k];
      g_x[static_cast<std::size_t>(j)] += gre * c + gim * s;
      g_x[static_cast<std::size_t>(j + k)] += -gre * s + gim * c;
      grad_->relation(r, j) += -gre * moved[j + k] + gim * moved[j];
    }
  }

  void backprop_projection(RelationId r, const Matrix& gproj) {
    const auto rows = static_cast<Eigen::Index>(ids_.size());
    if (!has_projection(m_.kind)) {
      for (Eigen::Index i = 0; i < rows; ++i) grad_->entity.row(ids_[static_cast<std::size_t>(i)]) += gproj.row(i);
      return;
    }
    Matrix x(rows, m_.dim());
    for (Eigen::Index i = 0; i < rows; ++i) x.row(i) = m_.entity.row(ids_[static_cast<std::size_t>(i)]);
    const Matrix& w = m_.projection[static_cast<std::size_t>(r)];
    Matrix& gw = grad_->projection[static_cast<std::size_t>(r)];
    Matrix gx(rows, m_.dim());
    if (m_.kind == ModelKind::TransR) {
      gx.noalias() = gproj * w;
      gw.noalias() += gproj.transpose() * x;
    } else {
      const int k = m_.complex_dim();
      gx.leftCols(k).noalias() = gproj.leftCols(k) * w;
      gx.rightCols(k).noalias() = gproj.rightCols(k) * w;
      gw.noalias() += gproj.leftCols(k).transpose() * x.leftCols(k);
      gw.noalias() += gproj.rightCols(k).transpose() * x.rightCols(k);
    }
    for (Eigen::Index i = 0; i < rows; ++i) grad_->entity.row(ids_[static_cast<std::size_t>(i)]) += gx.row(i);
  }

  const ModelParams& m_;
  const KnowledgeBase& kb_;
  const Batch& batch_;
  Objective objective_;
  double alpha_;
  Gradients* grad_;
  std::vector<std::uint8_t>* sig_;
  bool use_translational_;
  bool use_prototypes_;
  std::vector<int> slot_;
  std::vector<int> head_pos_;
  std::vector<EntityId> ids_;
  double scale_ = 0.0;
  double margin_sum_ = 0.0;
  double ible_sum_ = 0.0;
  double cible_sum_ = 0.0;
};

}  // namespace

std::vector<EntityId> sample_negatives(const KnowledgeBase& kb, const Triple& positive, int n,
                                       std::mt19937_64& rng, bool filtered, NegativeStats* stats) {
  if (n < 1) throw ConfigError("negative sample count must be at least 1");
  if (kb.num_entities() == 0) throw DatasetError("cannot sample from an empty entity set");
  std::uniform_int_distribution<EntityId> pick(0, static_cast<EntityId>(kb.num_entities()) - 1);
  const auto known = kb.tails_of(positive.head, positive.relation);
  std::vector<EntityId> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    EntityId e = pick(rng);
    if (filtered) {
      int tries = 0;
      while (std::binary_search(known.begin(), known.end(), e) && tries < kMaxRejections) {
        e = pick(rng);
        ++tries;
      }
      if (tries == kMaxRejections && std::binary_search(known.begin(), known.end(), e)) {
        if (stats) ++stats->fallbacks;
      }
    }
    if (stats) ++stats->draws;
    out.push_back(e);
  }
  return out;
}

Batch make_batch(const KnowledgeBase& kb, std::span<const Triple> positives, int n,
                 std::mt19937_64& rng, bool filtered, NegativeStats* stats) {
  Batch b;
  b.per_positive = n;
  b.positives.assign(positives.begin(), positives.end());
  b.negatives.reserve(positives.size() * static_cast<std::size_t>(n));
  for (const Triple& t : positives) {
    const auto negs = sample_negatives(kb, t, n, rng, filtered, stats);
    b.negatives.insert(b.negatives.end(), negs.begin(), negs.end());
  }
  return b;
}

Gradients Gradients::zeros_like(const ModelParams& m) {
  Gradients g;
  g.entity = Matrix::Zero(m.entity.rows(), m.entity.cols());
  g.relation = Matrix::Zero(m.relation.rows(), m.relation.cols());
  for (const Matrix& w : m.projection) g.projection.push_back(Matrix::Zero(w.rows(), w.cols()));
  return g;
}

void Gradients::set_zero() {
  entity.setZero();
  relation.setZero();
  for (Matrix& w : projection) w.setZero();
}

double Gradients::max_abs() const {
  double mx = 0.0;
  if (entity.size()) mx = std::max(mx, entity.cwiseAbs().maxCoeff());
  if (relation.size()) mx = std::max(mx, relation.cwiseAbs().maxCoeff());
  for (const Matrix& w : projection) {
    if (w.size()) mx = std::max(mx, w.cwiseAbs().maxCoeff());
  }
  return mx;
}

LossBreakdown loss_and_gradients(const ModelParams& m, const KnowledgeBase& kb, const Batch& batch,
                                 Objective objective, double alpha, Gradients* grad) {
  if (objective == Objective::CibleCe && !(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  check_compatible(m, kb);
  return Engine(m, kb, batch, objective, alpha, grad, nullptr).run();
}

double margin_loss(const ModelParams& m, const KnowledgeBase& kb, const Batch& batch) {
  return loss_and_gradients(m, kb, batch, Objective::TranslationalMargin, 0.5, nullptr).total;
}

double ce_loss(const ModelParams& m, const KnowledgeBase& kb, const Batch& batch, Objective scorer,
               double alpha) {
  if (scorer == Objective::TranslationalMargin) {
    throw ConfigError("ce_loss scores with ible-ce or cible-ce");
  }
  return loss_and_gradients(m, kb, batch, scorer, alpha, nullptr).total;
}

Gradients gradients(const ModelParams& m, const KnowledgeBase& kb, const Batch& batch,
                    Objective objective, double alpha) {
  Gradients g = Gradients::zeros_like(m);
  loss_and_gradients(m, kb, batch, objective, alpha, &g);
  return g;
}

std::vector<std::uint8_t> kink_signature(const ModelParams& m, const KnowledgeBase& kb,
                                         const Batch& batch, Objective objective) {
  std::vector<std::uint8_t> sig;
  Engine(m, kb, batch, objective, 0.5, nullptr, &sig).run();
  return sig;
}

Optimizer::Optimizer(const TrainConfig& cfg, const ModelParams& m)
    : kind_(cfg.optimizer),
      lr_(cfg.learning_rate),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps) {
  if (kind_ == OptimizerKind::Adam) {
    m1_ = Gradients::zeros_like(m);
    m2_ = Gradients::zeros_like(m);
  }
}

namespace {

void adam_update(Matrix& p, const Matrix& g, Matrix& m1, Matrix& m2, double lr, double b1,
                 double b2, double eps, double c1, double c2) {
  m1.array() = b1 * m1.array() + (1.0 - b1) * g.array();
  m2.array() = b2 * m2.array() + (1.0 - b2) * g.array().square();
  p.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
}

}  // namespace

void Optimizer::step(ModelParams& m, const Gradients& g) {
  ++t_;
  if (kind_ == OptimizerKind::Sgd) {
    m.entity -= lr_ * g.entity;
    m.relation -= lr_ * g.relation;
    for (std::size_t i = 0; i < m.projection.size(); ++i) m.projection[i] -= lr_ * g.projection[i];
    return;
  }
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  adam_update(m.entity, g.entity, m1_.entity, m2_.entity, lr_, beta1_, beta2_, eps_, c1, c2);
  adam_update(m.relation, g.relation, m1_.relation, m2_.relation, lr_, beta1_, beta2_, eps_, c1, c2);
  for (std::size_t i = 0; i < m.projection.size(); ++i) {
    adam_update(m.projection[i], g.projection[i], m1_.projection[i], m2_.projection[i], lr_, beta1_,
                beta2_, eps_, c1, c2);
  }
}

TrainResult train(const KnowledgeBase& kb, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (kb.split(Split::Train).empty()) throw DatasetError("training split is empty");
  std::mt19937_64 rng(cfg.seed);
  const ModelShape shape{cfg.model,
                         static_cast<int>(kb.num_entities()),
                         static_cast<int>(kb.num_relations()),
                         cfg.dim,
                         cfg.norm_p(),
                         cfg.gamma};
  ModelParams params = init_params(shape, rng);
  if (cfg.objective == Objective::CibleCe) params.alpha = cfg.alpha;

  TrainResult result;
  result.params = params;
  result.best_mrr = -1.0;
  Optimizer opt(cfg, params);
  Gradients grad = Gradients::zeros_like(params);
  std::vector<Triple> order(kb.augmented(Split::Train).begin(), kb.augmented(Split::Train).end());
  const bool validate = cfg.eval_every > 0 && !kb.split(Split::Valid).empty();
  const ScorerKind scorer = scorer_for(cfg.objective);
  int stale = 0;
  bool stop = false;

  for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown sum;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      Batch batch = make_batch(kb, std::span<const Triple>(order).subspan(start, len),
                               cfg.negatives, rng, cfg.filter_negatives, &result.negatives);
      batch.hold_out_query = cfg.hold_out_query;
      batch.logit_scale = cfg.logit_scale;
      grad.set_zero();
      const LossBreakdown loss =
          loss_and_gradients(params, kb, batch, cfg.objective, cfg.alpha, &grad);
      if (!std::isfinite(loss.total)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(opt.steps() + 1) + " (max |grad| " +
                              std::to_string(grad.max_abs()) + "); lower learning_rate");
      }
      opt.step(params, grad);
      sum.total += loss.total;
      sum.margin += loss.margin;
      sum.ible_ce += loss.ible_ce;
      ++batches;
      if (cfg.max_steps > 0 && opt.steps() >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    result.steps = opt.steps();
    const double nb = static_cast<double>(std::max(batches, 1L));
    result.history.push_back({opt.steps(), epoch, "total", sum.total / nb});
    if (cfg.objective == Objective::CibleCe) {
      result.history.push_back({opt.steps(), epoch, "translational", sum.margin / nb});
      result.history.push_back({opt.steps(), epoch, "ible", sum.ible_ce / nb});
    }

    if (validate && epoch % cfg.eval_every == 0) {
      const double mrr =
          evaluate(params, kb, Split::Valid, scorer, params.alpha, cfg.workers).all.mrr;
      result.validation.push_back({epoch, opt.steps(), mrr});
      if (mrr > result.best_mrr) {
        result.best_mrr = mrr;
        result.best_epoch = epoch;
        result.params = params;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        stop = true;
      }
    }
    if (on_epoch) on_epoch(result, epoch);
  }
  if (!validate) {
    result.params = params;
    result.best_epoch = cfg.epochs;
  }
  return result;
}

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path.string());
  out.precision(17);
  out << "step,component,value\n";
  for (const LossRecord& r : history) out << r.step << "," << r.component << "," << r.value << "\n";
}

}  // namespace kbc
