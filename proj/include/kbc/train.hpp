#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kbc/geometry.hpp"
#include "kbc/kb.hpp"

namespace kbc {

enum class Objective { TranslationalMargin, IbleCe, CibleCe };
enum class OptimizerKind { Sgd, Adam };

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view s);
std::string_view to_string(OptimizerKind o);
OptimizerKind parse_optimizer(std::string_view s);

// Hyperparameter grid searched over; defaults below are members of it.
struct SearchSpace {
  std::vector<double> learning_rates{1e-5, 2e-5, 5e-5, 1e-4, 2e-4, 5e-4};
  std::vector<int> batch_sizes{8, 16, 32, 64, 128, 256, 512, 1024};
  std::vector<int> dims{200, 500, 1000, 2000};
  std::vector<double> gammas{3, 6, 9, 12, 15, 18};
};

struct TrainConfig {
  ModelKind model = ModelKind::RRotatE;
  Objective objective = Objective::CibleCe;
  int dim = 500;
  double gamma = 6.0;
  double alpha = 0.5;
  double learning_rate = 5e-4;
  int batch_size = 256;
  int negatives = 128;
  int epochs = 100;
  long max_steps = 0;  // 0: bounded by epochs only
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int norm = 0;  // 0 picks the model's default
  std::uint64_t seed = 1;
  bool filter_negatives = true;
  bool hold_out_query = false;  // see Batch::hold_out_query
  double logit_scale = 1.0;     // see Batch::logit_scale
  int eval_every = 1;  // epochs between validation runs; 0 disables
  int patience = 10;   // validation runs without improvement
  int workers = 1;     // evaluation threads

  int norm_p() const { return norm == 0 ? default_norm(model) : norm; }
  // Throws ConfigError on out-of-range values.
  void validate() const;
  // Whether lr, batch size, dim and gamma all lie on the search grid.
  bool on_search_grid(const SearchSpace& space = {}) const;
  // Every key with its resolved value, in the config-file spelling.
  std::map<std::string, std::string> to_map() const;
};

// Applies `key = value` settings; unknown keys are collected and reported
// together in one ConfigError.
void apply_settings(TrainConfig& cfg, const std::map<std::string, std::string>& kv);
// Flat `key = value` document; '#' starts a comment.
std::map<std::string, std::string> parse_key_values(std::istream& in,
                                                    const std::string& origin);
TrainConfig load_config(const std::filesystem::path& path);
std::string config_text(const TrainConfig& cfg);

struct Batch {
  std::vector<Triple> positives;        // tail form
  std::vector<EntityId> negatives;      // positives.size() * per_positive
  int per_positive = 0;
  // Leave each query's head out of the prototype sets it is scored against, so
  // a positive cannot match itself.
  bool hold_out_query = false;
  // Cross-entropy losses apply the softmax to logit_scale * score.
  double logit_scale = 1.0;

  std::span<const EntityId> negatives_of(std::size_t i) const {
    return std::span<const EntityId>(negatives)
        .subspan(i * static_cast<std::size_t>(per_positive),
                 static_cast<std::size_t>(per_positive));
  }
};

struct NegativeStats {
  long draws = 0;
  long fallbacks = 0;  // negatives drawn unfiltered after rejection ran out
};

// n uniform tail corruptions of `positive`. In filtered mode, ids forming a
// known training fact are rejected; after a bounded number of rejections the
// draw falls back to an unfiltered one and stats->fallbacks is incremented.
std::vector<EntityId> sample_negatives(const KnowledgeBase& kb, const Triple& positive,
                                       int n, std::mt19937_64& rng, bool filtered = true,
                                       NegativeStats* stats = nullptr);

Batch make_batch(const KnowledgeBase& kb, std::span<const Triple> positives, int n,
                 std::mt19937_64& rng, bool filtered = true, NegativeStats* stats = nullptr);

struct Gradients {
  Matrix entity;
  Matrix relation;
  std::vector<Matrix> projection;

  static Gradients zeros_like(const ModelParams& m);
  void set_zero();
  double max_abs() const;
};

// Batch means. `margin` is the translational hinge loss
//   -max(gamma - T(h,r,t), 0) + (1/n) sum_i max(gamma - T(h,r,t'_i), 0),
// `ible_ce` the softmax cross-entropy of the gold tail against its negatives
// under the prototype score. `total` is the selected objective; the other two
// are filled when the objective computes them.
struct LossBreakdown {
  double total = 0.0;
  double margin = 0.0;
  double ible_ce = 0.0;
};

double margin_loss(const ModelParams& m, const KnowledgeBase& kb, const Batch& batch);
// Cross-entropy with the prototype score (objective IbleCe) or the combined
// score (CibleCe).
double ce_loss(const ModelParams& m, const KnowledgeBase& kb, const Batch& batch,
               Objective scorer, double alpha);

// Loss and, when `grad` is non-null, its exact (sub)gradient accumulated into
// *grad (which must be zeroed by the caller).
LossBreakdown loss_and_gradients(const ModelParams& m, const KnowledgeBase& kb,
                                 const Batch& batch, Objective objective, double alpha,
                                 Gradients* grad);

Gradients gradients(const ModelParams& m, const KnowledgeBase& kb, const Batch& batch,
                    Objective objective, double alpha);

// Returns a signature of every hinge and |x| branch taken by the loss; two
// parameter settings with equal signatures lie in the same smooth piece.
std::vector<std::uint8_t> kink_signature(const ModelParams& m, const KnowledgeBase& kb,
                                         const Batch& batch, Objective objective);

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const ModelParams& m);
  void step(ModelParams& m, const Gradients& g);
  long steps() const { return t_; }

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  Gradients m1_, m2_;
};

struct LossRecord {
  long step = 0;
  int epoch = 0;
  std::string component;  // "total", "translational", "ible"
  double value = 0.0;
};

struct ValidationRecord {
  int epoch = 0;
  long step = 0;
  double mrr = 0.0;
};

struct TrainResult {
  ModelParams params;  // best by validation MRR (final params if validation is off)
  std::vector<LossRecord> history;
  std::vector<ValidationRecord> validation;
  int best_epoch = 0;
  double best_mrr = 0.0;
  long steps = 0;
  NegativeStats negatives;
};

// Called after every epoch with the records appended so far.
using EpochCallback = std::function<void(const TrainResult&, int epoch)>;

// Throws DivergenceError when a loss becomes non-finite.
TrainResult train(const KnowledgeBase& kb, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);

}  // namespace kbc
