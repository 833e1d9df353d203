// kbc: train, evaluate and inspect knowledge-base completion models.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "kbc/eval.hpp"
#include "kbc/gradcheck.hpp"
#include "kbc/ible.hpp"
#include "kbc/rules.hpp"
#include "kbc/synth.hpp"
#include "kbc/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kCompat = 4, kDiverged = 5 };

struct Common {
  std::string data_dir;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int workers = 0;  // 0: all cores
  bool ascii = false;
};

int default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& argv)
      : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["argv"] = argv;
    j_["version"] = KBC_VERSION;
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j_["started"] = buf;
  }

  json& operator[](const char* key) { return j_[key]; }

  void dataset(const fs::path& dir) {
    for (const char* name : {"train.txt", "valid.txt", "test.txt", "entities.dict", "relations.dict"}) {
      const fs::path p = dir / name;
      if (fs::exists(p)) j_["datasets"].push_back({{"path", p.string()}, {"fnv1a64", kbc::file_checksum(p)}});
    }
  }

  void input(const fs::path& p) {
    j_["inputs"].push_back({{"path", p.string()}, {"fnv1a64", kbc::file_checksum(p)}});
  }

  void output(const fs::path& p) { j_["outputs"].push_back(p.string()); }

  void write(const fs::path& out_dir) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["timings"]["wall_seconds"] = wall;
    fs::create_directories(out_dir);
    std::ofstream(out_dir / "manifest.json") << j_.dump(2) << "\n";
  }

 private:
  std::chrono::steady_clock::time_point start_;
  json j_;
};

void add_common(CLI::App* app, Common& c, bool data = true) {
  if (data) {
    app->add_option("--data-dir", c.data_dir, "dataset directory (train/valid/test.txt)")
        ->envname("KBC_DATA_DIR");
  }
  app->add_option("--out-dir", c.out_dir, "output directory")->envname("KBC_OUT_DIR");
  app->add_option("--seed", c.seed, "random seed")->envname("KBC_SEED");
  app->add_option("--workers", c.workers, "worker threads (0: all cores)")->envname("KBC_WORKERS");
}

void require_data(const Common& c) {
  if (c.data_dir.empty()) throw kbc::ConfigError("--data-dir is required");
}

kbc::RelationId base_relation(const kbc::Vocabulary& v, const std::string& name) {
  return v.relation_id(name);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw kbc::DatasetError("cannot write " + p.string());
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-base completion with translational and prototype models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(KBC_VERSION));
  std::vector<std::string> args(argv, argv + argc);

  // train
  Common tr;
  std::string train_config;
  std::string train_model;
  std::vector<std::string> train_set;
  bool train_quiet = false;
  auto* train_cmd = app.add_subcommand("train", "train a model and write its best checkpoint");
  add_common(train_cmd, tr);
  train_cmd->add_option("--config", train_config, "key = value config file")->envname("KBC_CONFIG");
  train_cmd->add_option("--model", train_model, "transe, transr, rotate or r-rotate");
  train_cmd->add_option("--set", train_set, "override a config key (key=value)");
  train_cmd->add_flag("--quiet", train_quiet, "no per-epoch progress");

  // evaluate
  Common ev;
  std::string ev_checkpoint, ev_split = "test", ev_scorer = "cible";
  std::optional<double> ev_alpha;
  auto* eval_cmd = app.add_subcommand("evaluate", "filtered ranking metrics of a checkpoint");
  add_common(eval_cmd, ev);
  eval_cmd->add_option("--checkpoint", ev_checkpoint)->required();
  eval_cmd->add_option("--split", ev_split, "valid or test");
  eval_cmd->add_option("--scorer", ev_scorer, "translational, ible or cible");
  eval_cmd->add_option("--alpha", ev_alpha, "mixing weight (overrides the checkpoint)");

  // explain
  Common ex;
  std::string ex_checkpoint, ex_entity, ex_relation, ex_direction = "tail";
  std::size_t ex_k = 10;
  bool ex_json = false;
  auto* explain_cmd = app.add_subcommand("explain", "top prototypes for a query");
  add_common(explain_cmd, ex);
  explain_cmd->add_option("--checkpoint", ex_checkpoint)->required();
  explain_cmd->add_option("--entity", ex_entity)->required();
  explain_cmd->add_option("--relation", ex_relation)->required();
  explain_cmd->add_option("--direction", ex_direction, "tail: (e, r, ?), head: (?, r, e)");
  explain_cmd->add_option("--k", ex_k, "prototypes to list");
  explain_cmd->add_flag("--json", ex_json, "print JSON instead of text");
  explain_cmd->add_flag("--ascii", ex.ascii, "write inverse relations as name^-1");

  // mine-rules
  Common mr;
  kbc::MiningOptions mopts;
  std::string mr_mode = "all", mr_eval_split;
  auto* mine_cmd = app.add_subcommand("mine-rules", "exhaustive rule mining and class averages");
  add_common(mine_cmd, mr);
  mine_cmd->add_option("--max-rule-len", mopts.max_len, "1 to 3");
  mine_cmd->add_option("--mode", mr_mode, "all, ibl-only or non-ibl-only");
  mine_cmd->add_flag("--ascii", mr.ascii, "ASCII rule notation");
  mine_cmd->add_option("--entity-cap", mopts.entity_cap, "largest KB mined exhaustively");
  mine_cmd->add_option("--sample-size", mopts.sample_size, "rules to sample instead (0: all)");
  mine_cmd->add_option("--min-support", mopts.min_support, "support needed to list a rule");
  mine_cmd->add_option("--top-k", mopts.top_k_per_head, "rules listed per head (0: all)");
  mine_cmd->add_option("--evaluate-split", mr_eval_split,
                       "rank this split with the listed rules (valid or test)");

  // gradcheck
  Common gc;
  std::string gc_model = "all", gc_objective = "all";
  int gc_seeds = 3;
  double gc_tolerance = 1e-4;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  add_common(grad_cmd, gc, false);
  grad_cmd->add_option("--model", gc_model, "model kind or all");
  grad_cmd->add_option("--objective", gc_objective, "objective or all");
  grad_cmd->add_option("--seeds", gc_seeds, "random instances per pair");
  grad_cmd->add_option("--tolerance", gc_tolerance, "maximum relative error");

  // verify-theorem
  Common vt;
  kbc::TheoremOptions topts;
  auto* theorem_cmd =
      app.add_subcommand("verify-theorem", "instance-based rule precision on exact synthetic KBs");
  add_common(theorem_cmd, vt, false);
  theorem_cmd->add_option("--dim", topts.dim);
  theorem_cmd->add_option("--entities", topts.n_entity);
  theorem_cmd->add_option("--relations", topts.n_relation);
  theorem_cmd->add_option("--cases", topts.cases);
  theorem_cmd->add_option("--tau", topts.control_tau, "fact threshold of the control KBs");

  // synthesize
  Common sy;
  std::string sy_kind = "lattice";
  int sy_dim = 2, sy_entities = 40, sy_relations = 3, sy_facts = 200;
  double sy_valid = 0.1, sy_test = 0.1, sy_tau = 0.6;
  auto* synth_cmd = app.add_subcommand("synthesize", "write a synthetic dataset");
  add_common(synth_cmd, sy, false);
  synth_cmd->add_option("--kind", sy_kind, "lattice, threshold or random");
  synth_cmd->add_option("--dim", sy_dim);
  synth_cmd->add_option("--entities", sy_entities);
  synth_cmd->add_option("--relations", sy_relations);
  synth_cmd->add_option("--facts", sy_facts, "fact count (random graphs)");
  synth_cmd->add_option("--tau", sy_tau, "fact threshold (threshold kind)");
  synth_cmd->add_option("--valid-frac", sy_valid);
  synth_cmd->add_option("--test-frac", sy_test);

  // export-embeddings
  Common ee;
  std::string ee_checkpoint, ee_relation;
  auto* export_cmd =
      app.add_subcommand("export-embeddings", "projected entity vectors under one relation");
  add_common(export_cmd, ee);
  export_cmd->add_option("--checkpoint", ee_checkpoint)->required();
  export_cmd->add_option("--relation", ee_relation)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (train_cmd->parsed()) {
      require_data(tr);
      kbc::TrainConfig cfg;
      Manifest man("train", args);
      if (!train_config.empty()) {
        cfg = kbc::load_config(train_config);
        man.input(train_config);
      }
      std::map<std::string, std::string> kv;
      for (const auto& s : train_set) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw kbc::ConfigError("--set expects key=value, got " + s);
        kv[s.substr(0, eq)] = s.substr(eq + 1);
      }
      if (!train_model.empty()) kv["model"] = train_model;
      kv["seed"] = std::to_string(tr.seed);
      if (tr.workers > 0) kv["workers"] = std::to_string(tr.workers);
      kbc::apply_settings(cfg, kv);
      cfg.validate();

      const kbc::KnowledgeBase kb = kbc::load_dataset(tr.data_dir);
      man.dataset(tr.data_dir);
      man["config"] = cfg.to_map();
      man["seed"] = cfg.seed;
      if (!cfg.on_search_grid()) {
        std::cerr << "note: lr, batch size, dim or gamma lies off the search grid\n";
      }
      const fs::path out = tr.out_dir;
      fs::create_directories(out);
      write_text(out / "config.txt", kbc::config_text(cfg));

      const auto t0 = std::chrono::steady_clock::now();
      const auto result = kbc::train(kb, cfg, [&](const kbc::TrainResult& r, int epoch) {
        if (train_quiet) return;
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        double loss = 0.0;
        for (const auto& h : r.history) {
          if (h.epoch == epoch && h.component == "total") loss = h.value;
        }
        std::fprintf(stderr, "epoch %4d  step %7ld  loss %.5f", epoch, r.steps, loss);
        if (!r.validation.empty() && r.validation.back().epoch == epoch) {
          std::fprintf(stderr, "  valid MRR %.4f", r.validation.back().mrr);
        }
        std::fprintf(stderr, "  %.0fs\n", secs);
      });
      const double train_secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

      kbc::save_checkpoint(result.params, out / "checkpoint.bin");
      kbc::write_loss_csv(result.history, out / "loss.csv");
      {
        std::ofstream v(out / "validation.csv");
        v << "epoch,step,mrr\n";
        for (const auto& r : result.validation) v << r.epoch << "," << r.step << "," << r.mrr << "\n";
      }
      man.output(out / "checkpoint.bin");
      man.output(out / "loss.csv");
      man.output(out / "validation.csv");
      man["result"] = {{"best_epoch", result.best_epoch},
                       {"best_valid_mrr", result.best_mrr},
                       {"steps", result.steps},
                       {"negative_draws", result.negatives.draws},
                       {"negative_fallbacks", result.negatives.fallbacks}};
      man["timings"]["train_seconds"] = train_secs;
      if (!kb.split(kbc::Split::Test).empty()) {
        const auto report = kbc::evaluate(result.params, kb, kbc::Split::Test,
                                          kbc::scorer_for(cfg.objective), result.params.alpha,
                                          cfg.workers);
        write_text(out / "test_report.json", kbc::report_json(report) + "\n");
        man.output(out / "test_report.json");
        std::cout << kbc::report_table(report, std::string(kbc::to_string(cfg.model)) + "/" +
                                                   std::string(kbc::to_string(cfg.objective)));
      }
      man.write(out);
    } else if (eval_cmd->parsed()) {
      require_data(ev);
      Manifest man("evaluate", args);
      const kbc::ModelParams m = kbc::load_checkpoint(ev_checkpoint);
      man.input(ev_checkpoint);
      const kbc::KnowledgeBase kb = kbc::load_dataset(ev.data_dir);
      man.dataset(ev.data_dir);
      const auto scorer = kbc::parse_scorer(ev_scorer);
      const auto split = kbc::parse_split(ev_split);
      const auto alpha = ev_alpha ? ev_alpha : m.alpha;
      const int workers = ev.workers > 0 ? ev.workers : default_workers();
      const auto report = kbc::evaluate(m, kb, split, scorer, alpha, workers);
      const fs::path out = ev.out_dir;
      fs::create_directories(out);
      write_text(out / "report.json", kbc::report_json(report) + "\n");
      std::cout << kbc::report_table(report, std::string(kbc::to_string(m.kind)) + "/" + ev_scorer);
      man["scorer"] = ev_scorer;
      man["split"] = ev_split;
      if (alpha) man["alpha"] = *alpha;
      man["workers"] = workers;
      man.output(out / "report.json");
      man.write(out);
    } else if (explain_cmd->parsed()) {
      require_data(ex);
      Manifest man("explain", args);
      const kbc::ModelParams m = kbc::load_checkpoint(ex_checkpoint);
      man.input(ex_checkpoint);
      const kbc::KnowledgeBase kb = kbc::load_dataset(ex.data_dir);
      man.dataset(ex.data_dir);
      const auto& v = kb.vocab();
      const kbc::EntityId e = v.entity_id(ex_entity);
      const kbc::RelationId r = base_relation(v, ex_relation);
      const auto expl = kbc::explain(m, kb, e, r, kbc::parse_direction(ex_direction), ex_k);
      const fs::path out = ex.out_dir;
      fs::create_directories(out);
      const std::string js = kbc::explanation_json(expl, v);
      write_text(out / "explanation.json", js + "\n");
      std::cout << (ex_json ? js + "\n" : kbc::explanation_text(expl, v));
      man.output(out / "explanation.json");
      man.write(out);
    } else if (mine_cmd->parsed()) {
      require_data(mr);
      Manifest man("mine-rules", args);
      const kbc::KnowledgeBase kb = kbc::load_dataset(mr.data_dir);
      man.dataset(mr.data_dir);
      mopts.mode = kbc::parse_rule_mode(mr_mode);
      mopts.seed = mr.seed;
      mopts.workers = mr.workers > 0 ? mr.workers : default_workers();
      mopts.keep_rules = true;
      const auto t0 = std::chrono::steady_clock::now();
      const auto mined = kbc::mine_rules(kb, mopts);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const fs::path out = mr.out_dir;
      fs::create_directories(out);
      {
        std::ofstream csv(out / "rules.csv");
        kbc::write_rules_csv(csv, mined.rules, kb.vocab(), mr.ascii);
      }
      write_text(out / "quality.json", kbc::quality_json(mined.quality) + "\n");
      std::cout << kbc::quality_table(mined.quality, fs::path(mr.data_dir).filename().string());
      man["options"] = {{"max_rule_len", mopts.max_len},   {"mode", mr_mode},
                        {"entity_cap", mopts.entity_cap},   {"sample_size", mopts.sample_size},
                        {"min_support", mopts.min_support}, {"top_k", mopts.top_k_per_head}};
      man["seed"] = mr.seed;
      man["timings"]["mining_seconds"] = secs;
      man.output(out / "rules.csv");
      man.output(out / "quality.json");
      if (!mr_eval_split.empty()) {
        const auto split = kbc::parse_split(mr_eval_split);
        const auto report =
            kbc::evaluate_with(kb, split, kbc::rule_scorer(kb, mined.rules), mopts.workers);
        write_text(out / "rule_report.json", kbc::report_json(report) + "\n");
        std::cout << kbc::report_table(report, "rules/" + mr_mode);
        man.output(out / "rule_report.json");
      }
      man.write(out);
    } else if (grad_cmd->parsed()) {
      Manifest man("gradcheck", args);
      std::vector<kbc::ModelKind> kinds;
      if (gc_model == "all") {
        kinds = {kbc::ModelKind::TransE, kbc::ModelKind::TransR, kbc::ModelKind::RotatE,
                 kbc::ModelKind::RRotatE};
      } else {
        kinds = {kbc::parse_model_kind(gc_model)};
      }
      std::vector<kbc::Objective> objs;
      if (gc_objective == "all") {
        objs = {kbc::Objective::TranslationalMargin, kbc::Objective::IbleCe,
                kbc::Objective::CibleCe};
      } else {
        objs = {kbc::parse_objective(gc_objective)};
      }
      std::vector<kbc::GradcheckResult> results;
      double worst = 0.0;
      for (auto k : kinds) {
        for (auto o : objs) {
          for (int s = 0; s < gc_seeds; ++s) {
            results.push_back(kbc::gradcheck(k, o, gc.seed + static_cast<std::uint64_t>(s)));
            worst = std::max(worst, results.back().max_rel_error);
          }
        }
      }
      std::cout << kbc::gradcheck_table(results);
      std::printf("max relative error %.3e (tolerance %.1e)\n", worst, gc_tolerance);
      man["seed"] = gc.seed;
      man["max_rel_error"] = worst;
      man.write(gc.out_dir);
      if (!(worst < gc_tolerance)) return kFailure;
    } else if (theorem_cmd->parsed()) {
      Manifest man("verify-theorem", args);
      std::mt19937_64 rng(vt.seed);
      const auto report = kbc::verify_theorem_iblrule(topts, rng);
      const fs::path out = vt.out_dir;
      fs::create_directories(out);
      write_text(out / "theorem.json", kbc::theorem_json(report) + "\n");
      std::cout << kbc::theorem_text(report);
      man["seed"] = vt.seed;
      man["options"] = {{"dim", topts.dim},
                        {"entities", topts.n_entity},
                        {"relations", topts.n_relation},
                        {"cases", topts.cases},
                        {"tau", topts.control_tau}};
      man.output(out / "theorem.json");
      man.write(out);
      if (!report.exact_holds()) return kFailure;
    } else if (synth_cmd->parsed()) {
      Manifest man("synthesize", args);
      std::mt19937_64 rng(sy.seed);
      kbc::SyntheticKb s;
      if (sy_kind == "lattice") {
        s = kbc::lattice_kb(sy_dim, sy_entities, sy_relations, 0, rng);
      } else if (sy_kind == "threshold") {
        s = kbc::thresholded_kb(sy_dim, sy_entities, sy_relations, 4.0, 1.0, sy_tau, rng);
      } else if (sy_kind == "random") {
        s = kbc::random_graph_kb(sy_entities, sy_relations, sy_facts, rng);
      } else {
        throw kbc::ConfigError("unknown kind '" + sy_kind + "' (expected lattice, threshold or random)");
      }
      const auto kb = kbc::split_kb(s, sy_valid, sy_test, rng);
      kbc::write_splits(kb, sy.out_dir);
      std::printf("%zu facts: %zu train, %zu valid, %zu test\n", s.facts.size(),
                  kb.split(kbc::Split::Train).size(), kb.split(kbc::Split::Valid).size(),
                  kb.split(kbc::Split::Test).size());
      man["seed"] = sy.seed;
      man["options"] = {{"kind", sy_kind},   {"dim", sy_dim},     {"entities", sy_entities},
                        {"relations", sy_relations}, {"facts", sy_facts}, {"tau", sy_tau},
                        {"valid_frac", sy_valid},    {"test_frac", sy_test}};
      man.dataset(sy.out_dir);
      man.write(sy.out_dir);
    } else if (export_cmd->parsed()) {
      require_data(ee);
      Manifest man("export-embeddings", args);
      const kbc::ModelParams m = kbc::load_checkpoint(ee_checkpoint);
      man.input(ee_checkpoint);
      const kbc::KnowledgeBase kb = kbc::load_dataset(ee.data_dir);
      man.dataset(ee.data_dir);
      kbc::check_compatible(m, kb);
      const kbc::RelationId r = base_relation(kb.vocab(), ee_relation);
      const kbc::Matrix p = kbc::project_all(m, r);
      const fs::path out = ee.out_dir;
      fs::create_directories(out);
      std::ofstream csv(out / "embeddings.csv");
      csv.precision(17);
      for (Eigen::Index e = 0; e < p.rows(); ++e) {
        csv << kb.vocab().entity_name(static_cast<kbc::EntityId>(e));
        for (Eigen::Index j = 0; j < p.cols(); ++j) csv << "," << p(e, j);
        csv << "\n";
      }
      man.output(out / "embeddings.csv");
      man.write(out);
    }
  } catch (const kbc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const kbc::CompatibilityError& e) {
    std::cerr << "compatibility error: " << e.what() << "\n";
    return kCompat;
  } catch (const kbc::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const kbc::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kData;
  } catch (const kbc::VocabularyError& e) {
    std::cerr << "vocabulary error: " << e.what() << "\n";
    return kData;
  } catch (const kbc::DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
