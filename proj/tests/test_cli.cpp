#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "kbc/geometry.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Run kbc_run(const std::string& args) {
  static const fs::path scratch = testing::temp_dir("cli_io");
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string(KBC_BIN) + " " + args + " > " + out.string() + " 2> " +
                          err.string() + " < /dev/null";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// A small random dataset shared by the cases below.
fs::path dataset() {
  static const fs::path dir = [] {
    const fs::path d = testing::temp_dir("cli_data");
    const Run r = kbc_run("synthesize --kind random --entities 30 --relations 3 --facts 150 "
                          "--valid-frac 0.1 --test-frac 0.1 --seed 4 --out-dir " + d.string());
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

const std::string kTiny = "--set dim=8 --set epochs=2 --set batch_size=32 --set negatives=8 --quiet";

}  // namespace

TEST_CASE("synthesize writes three splits and a manifest") {
  const fs::path d = dataset();
  for (const char* f : {"train.txt", "valid.txt", "test.txt", "manifest.json"}) CHECK(fs::exists(d / f));
  const auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
  CHECK(m["command"] == "synthesize");
  CHECK(m["datasets"].size() == 3);
}

TEST_CASE("train writes its artifacts and is deterministic") {
  const fs::path a = testing::temp_dir("cli_train_a"), b = testing::temp_dir("cli_train_b");
  const std::string common = "train --data-dir " + dataset().string() + " --model transe " +
                             "--set objective=translational-margin " + kTiny + " --seed 3 --workers 1";
  const Run ra = kbc_run(common + " --out-dir " + a.string());
  REQUIRE(ra.code == 0);
  const Run rb = kbc_run(common + " --out-dir " + b.string());
  REQUIRE(rb.code == 0);
  for (const char* f : {"checkpoint.bin", "loss.csv", "manifest.json", "config.txt", "test_report.json"}) {
    CHECK(fs::exists(a / f));
  }
  CHECK(slurp(a / "loss.csv") == slurp(b / "loss.csv"));
  CHECK(slurp(a / "checkpoint.bin") == slurp(b / "checkpoint.bin"));
  CHECK(ra.out.find("MRR") != std::string::npos);

  const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(m["command"] == "train");
  CHECK(m["config"]["model"] == "transe");
  CHECK(m["seed"] == 3);
  CHECK(m["datasets"][0]["fnv1a64"].get<std::string>().size() == 16);
  CHECK(m["timings"].contains("wall_seconds"));
}

TEST_CASE("train reports configuration and data problems with distinct exit codes") {
  const fs::path out = testing::temp_dir("cli_train_bad");
  const Run unknown = kbc_run("train --data-dir " + dataset().string() + " --set dmi=3 --set gama=1 --out-dir " +
                              out.string());
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("dmi") != std::string::npos);
  CHECK(unknown.err.find("gama") != std::string::npos);

  const fs::path empty = testing::temp_dir("cli_no_train");
  std::ofstream(empty / "valid.txt") << "";
  std::ofstream(empty / "test.txt") << "";
  const Run missing = kbc_run("train --data-dir " + empty.string() + " --out-dir " + out.string());
  CHECK(missing.code == 3);
  CHECK(missing.err.find("train.txt") != std::string::npos);

  CHECK(kbc_run("train --bogus-flag").code == 2);
  CHECK(kbc_run("train --out-dir " + out.string()).code == 2);  // no data directory
}

TEST_CASE("evaluate checks scorer and dataset compatibility") {
  const fs::path run = testing::temp_dir("cli_eval_model");
  REQUIRE(kbc_run("train --data-dir " + dataset().string() + " --model transe --set objective=translational-margin " +
                  kTiny + " --out-dir " + run.string())
              .code == 0);
  const std::string ckpt = (run / "checkpoint.bin").string();
  const fs::path out = testing::temp_dir("cli_eval_out");

  const Run ible = kbc_run("evaluate --data-dir " + dataset().string() + " --checkpoint " + ckpt +
                           " --scorer ible --out-dir " + out.string());
  CHECK(ible.code == 0);
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report["all"]["queries"] == 30);  // 15 test triples, both directions
  CHECK(report["all"]["mrr"].get<double>() > 0.0);

  CHECK(kbc_run("evaluate --data-dir " + dataset().string() + " --checkpoint " + ckpt +
                " --scorer cible --out-dir " + out.string())
            .code == 2);
  CHECK(kbc_run("evaluate --data-dir " + dataset().string() + " --checkpoint " + ckpt +
                " --scorer cible --alpha 0.5 --out-dir " + out.string())
            .code == 0);

  const fs::path other = testing::temp_dir("cli_other_data");
  REQUIRE(kbc_run("synthesize --kind random --entities 12 --relations 3 --facts 40 --seed 1 --out-dir " +
                  other.string())
              .code == 0);
  const Run mismatch = kbc_run("evaluate --data-dir " + other.string() + " --checkpoint " + ckpt +
                               " --scorer ible --out-dir " + out.string());
  CHECK(mismatch.code == 4);
}

TEST_CASE("explain lists prototypes, handles empty cases and suggests names") {
  // r1 appears only in the test split, so it has no training candidates.
  const fs::path d = testing::temp_dir("cli_explain_data");
  std::ofstream(d / "train.txt") << "ann\tparent_of\tbob\ncid\tparent_of\tbob\ndan\tparent_of\teve\n";
  std::ofstream(d / "valid.txt") << "";
  std::ofstream(d / "test.txt") << "ann\tfriend_of\tdan\n";
  const fs::path run = testing::temp_dir("cli_explain_model");
  REQUIRE(kbc_run("train --data-dir " + d.string() + " --model transe " + kTiny + " --out-dir " + run.string())
              .code == 0);
  const std::string base = "explain --data-dir " + d.string() + " --checkpoint " +
                           (run / "checkpoint.bin").string() + " --out-dir " + run.string();

  const Run listed = kbc_run(base + " --entity ann --relation parent_of --k 5");
  CHECK(listed.code == 0);
  CHECK(listed.out.find("(ann, parent_of, ?)") != std::string::npos);
  CHECK(listed.out.find("cid") != std::string::npos);
  CHECK(listed.out.find("(cid, parent_of, bob)") != std::string::npos);

  const Run none = kbc_run(base + " --entity ann --relation friend_of");
  CHECK(none.code == 0);
  CHECK(none.out.find("no prototypes") != std::string::npos);

  const Run zero = kbc_run(base + " --entity ann --relation parent_of --k 0");
  CHECK(zero.code == 0);

  const Run json = kbc_run(base + " --entity bob --relation parent_of --direction head --json");
  CHECK(json.code == 0);
  const auto j = nlohmann::json::parse(json.out);
  CHECK(j["direction"] == "head");

  const Run typo = kbc_run(base + " --entity anne --relation parent_of");
  CHECK(typo.code == 3);
  CHECK(typo.err.find("ann") != std::string::npos);
}

TEST_CASE("export-embeddings writes one projected row per entity") {
  const fs::path run = testing::temp_dir("cli_export_model");
  REQUIRE(kbc_run("train --data-dir " + dataset().string() + " --model r-rotate " + kTiny +
                  " --out-dir " + run.string())
              .code == 0);
  const auto m = kbc::load_checkpoint(run / "checkpoint.bin");
  const fs::path out = testing::temp_dir("cli_export_out");
  const Run r = kbc_run("export-embeddings --data-dir " + dataset().string() + " --checkpoint " +
                        (run / "checkpoint.bin").string() + " --relation r1 --out-dir " + out.string());
  REQUIRE(r.code == 0);
  const auto rows = read_csv(out / "embeddings.csv");
  REQUIRE(rows.size() == 30);
  const auto kb = kbc::load_dataset(dataset());
  double worst = 0.0;
  for (const auto& row : rows) {
    REQUIRE(row.size() == 9);
    const int e = kb.vocab().entity_id(row[0]);
    const auto want = testing::naive_project(m, 1, e);
    for (int j = 0; j < 8; ++j) worst = std::max(worst, std::abs(std::stod(row[j + 1]) - want[j]));
  }
  CHECK(worst < 1e-12);

  // Unprojected models export the raw embeddings.
  const fs::path te = testing::temp_dir("cli_export_transe");
  REQUIRE(kbc_run("train --data-dir " + dataset().string() + " --model transe " + kTiny + " --out-dir " + te.string())
              .code == 0);
  const auto mt = kbc::load_checkpoint(te / "checkpoint.bin");
  REQUIRE(kbc_run("export-embeddings --data-dir " + dataset().string() + " --checkpoint " +
                  (te / "checkpoint.bin").string() + " --relation r0 --out-dir " + out.string())
              .code == 0);
  const auto raw = read_csv(out / "embeddings.csv");
  const int e0 = kb.vocab().entity_id(raw[0][0]);
  CHECK(std::stod(raw[0][1]) == mt.entity(e0, 0));
  CHECK(kbc_run("export-embeddings --data-dir " + dataset().string() + " --checkpoint " +
                (te / "checkpoint.bin").string() + " --relation nope --out-dir " + out.string())
            .code == 3);
}

TEST_CASE("mine-rules, gradcheck and verify-theorem") {
  const fs::path out = testing::temp_dir("cli_mine");
  const Run mine = kbc_run("mine-rules --data-dir " + dataset().string() + " --ascii --out-dir " + out.string());
  CHECK(mine.code == 0);
  const auto rows = read_csv(out / "rules.csv");
  REQUIRE(!rows.empty());
  CHECK(rows[0] == std::vector<std::string>{"head", "body", "is_ibl", "support", "body_count", "precision"});
  const auto q = nlohmann::json::parse(slurp(out / "quality.json"));
  CHECK(q.contains("ibl"));
  CHECK(kbc_run("mine-rules --data-dir " + dataset().string() + " --entity-cap 10 --out-dir " + out.string())
            .code == 2);

  const Run grad = kbc_run("gradcheck --seeds 1 --out-dir " + out.string());
  CHECK(grad.code == 0);
  CHECK(grad.out.find("max relative error") != std::string::npos);

  const Run theorem = kbc_run("verify-theorem --cases 3 --out-dir " + out.string());
  CHECK(theorem.code == 0);
  CHECK(theorem.out.find("all IBL rules precision 1.0") != std::string::npos);
  CHECK(fs::exists(out / "theorem.json"));
}
