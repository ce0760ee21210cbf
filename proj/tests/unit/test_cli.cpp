#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "msvae/latentio.hpp"
#include "test_support.hpp"

using namespace msvae;
using msvae::testing::bit_equal;
using msvae::testing::TempDir;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string p(const TempDir& d, const std::string& name) { return (d / name).string(); }

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

json small_config(int stages, int epochs = 4) {
  json s = json::array();
  for (int k = 0; k < stages; ++k) {
    s.push_back({{"epochs", epochs}, {"hidden", {12}}, {"lr", 1e-3},
                 {"activation", "tanh"}, {"seed", k}, {"batch_size", 64}});
  }
  return json{{"stages", s}, {"eval", {{"n", 100}, {"seeds", {3}}}}, {"finetune", {{"epochs", 2}}}};
}

std::string config_file(const TempDir& d, const json& j, const std::string& name = "cfg.json") {
  write_text(p(d, name), j.dump());
  return p(d, name);
}

// Generated data plus a stack trained on it.
void prepare(const TempDir& d, int stages) {
  REQUIRE(run({"gen-data", "--n", "300", "--seed", "1", "--out", p(d, "data.csv")}).code == 0);
  const Result r = run({"train", "--config", config_file(d, small_config(stages)), "--data",
                        p(d, "data.csv"), "--out", p(d, "stack")});
  REQUIRE(r.code == 0);
}

std::vector<std::string> csv_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

}  // namespace

TEST_CASE("gen-data: default width, determinism, header-only output") {
  TempDir d("cli_gen");
  REQUIRE(run({"gen-data", "--n", "50", "--seed", "7", "--out", p(d, "a.csv")}).code == 0);
  REQUIRE(run({"gen-data", "--n", "50", "--seed", "7", "--out", p(d, "b.csv")}).code == 0);
  const Matrix a = csv_import(p(d, "a.csv"));
  CHECK(a.rows() == 50);
  CHECK(a.cols() == 19);
  CHECK(read_file(p(d, "a.csv")) == read_file(p(d, "b.csv")));
  CHECK(std::filesystem::exists(p(d, "a.csv.manifest.json")));
  REQUIRE(run({"gen-data", "--n", "0", "--out", p(d, "e.csv")}).code == 0);
  CHECK(csv_lines(p(d, "e.csv")).size() == 1);

  write_text(p(d, "cap.json"), R"({"kind": "cap", "cap_min": 0.2})");
  REQUIRE(run({"gen-data", "--spec", p(d, "cap.json"), "--n", "40", "--out", p(d, "c.csv")}).code == 0);
  CHECK(csv_import(p(d, "c.csv")).col(0).minCoeff() > 0.2);
  write_text(p(d, "bad.json"), R"({"kind": "cap", "radius": 2})");
  CHECK(run({"gen-data", "--spec", p(d, "bad.json"), "--n", "4", "--out", p(d, "x.csv")}).code == 2);
}

TEST_CASE("train: single stage, resume, refusals") {
  TempDir d("cli_train");
  REQUIRE(run({"gen-data", "--n", "200", "--out", p(d, "data.csv")}).code == 0);
  REQUIRE(run({"train", "--config", config_file(d, small_config(1), "one.json"), "--data",
               p(d, "data.csv"), "--out", p(d, "one")}).code == 0);
  CHECK(load_stack(p(d, "one")).size() == 1);
  CHECK(csv_lines(p(d, "one/gamma_stage_0.csv")).size() == 5);

  const std::string two = config_file(d, small_config(2), "two.json");
  CHECK(run({"train", "--config", two, "--data", p(d, "data.csv"), "--out", p(d, "one")}).code == 2);
  const Result resumed =
      run({"train", "--config", two, "--data", p(d, "data.csv"), "--out", p(d, "one"), "--resume"});
  REQUIRE(resumed.code == 0);
  CHECK(resumed.out.find("stage 0") == std::string::npos);
  CHECK(resumed.out.find("stage 1") != std::string::npos);
  REQUIRE(run({"train", "--config", two, "--data", p(d, "data.csv"), "--out", p(d, "fresh")}).code == 0);
  const StageStack a = load_stack(p(d, "one")), b = load_stack(p(d, "fresh"));
  REQUIRE(a.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < a[k].parameters().size(); ++i) {
      CHECK(bit_equal(a[k].parameters()[i]->value, b[k].parameters()[i]->value));
    }
  }

  json changed = small_config(3);
  changed["stages"][0]["lr"] = 5e-3;
  CHECK(run({"train", "--config", config_file(d, changed, "changed.json"), "--data",
             p(d, "data.csv"), "--out", p(d, "one"), "--resume"}).code == 2);
}

TEST_CASE("exit codes: configuration, data, numerical") {
  TempDir d("cli_exit");
  REQUIRE(run({"gen-data", "--n", "100", "--out", p(d, "data.csv")}).code == 0);
  json unknown = small_config(1);
  unknown["eval"]["binz"] = 3;
  CHECK(run({"train", "--config", config_file(d, unknown), "--data", p(d, "data.csv"), "--out",
             p(d, "s")}).code == 2);
  json neg = small_config(1);
  neg["stages"][0]["lr"] = -1.0;
  CHECK(run({"train", "--config", config_file(d, neg), "--data", p(d, "data.csv"), "--out",
             p(d, "s")}).code == 2);
  CHECK(run({"train", "--bogus"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"--help"}).code == 0);

  write_text(p(d, "broken.csv"), "x0,x1\n1,2\n3\n");
  CHECK(run({"train", "--data", p(d, "broken.csv"), "--out", p(d, "s")}).code == 3);
  CHECK(run({"sample", "--stack", p(d, "missing"), "--out", p(d, "x.csv")}).code == 3);

  write_text(p(d, "nan.csv"), "x0,x1\n1,nan\n0.5,0.5\n");
  const Result r = run({"train", "--config", config_file(d, small_config(1), "ok.json"), "--data",
                        p(d, "nan.csv"), "--out", p(d, "s")});
  CHECK(r.code == 4);
  CHECK(r.err.find("epoch 0") != std::string::npos);
}

TEST_CASE("sample: stage 0 is plain decoding, seeds are deterministic") {
  TempDir d("cli_sample");
  prepare(d, 2);
  REQUIRE(run({"sample", "--stack", p(d, "stack"), "--stage", "0", "--seed", "5", "--out",
               p(d, "s0.csv")}).code == 0);
  const StageStack stack = load_stack(p(d, "stack"));
  const Matrix s0 = csv_import(p(d, "s0.csv"));
  CHECK(s0.rows() == 1000);
  CHECK(bit_equal(s0, cascade_sample(StageStack({stack[0]}), 1000, 5)));

  REQUIRE(run({"sample", "--stack", p(d, "stack"), "--n", "40", "--seeds", "1,2", "--mode",
               "mean_chain", "--out", p(d, "s.csv")}).code == 0);
  REQUIRE(run({"sample", "--stack", p(d, "stack"), "--n", "40", "--seed", "2", "--mode",
               "mean_chain", "--out", p(d, "again.csv")}).code == 0);
  CHECK(read_file(p(d, "s_seed2.csv")) == read_file(p(d, "again.csv")));
  CHECK(read_file(p(d, "s_seed1.csv")) != read_file(p(d, "again.csv")));
  CHECK(run({"sample", "--stack", p(d, "stack"), "--mode", "greedy", "--out", p(d, "g.csv")}).code == 2);
  CHECK(run({"sample", "--stack", p(d, "stack"), "--stage", "5", "--out", p(d, "g.csv")}).code == 2);
}

TEST_CASE("eval: ground truth, histogram sums, W1 column, summaries") {
  TempDir d("cli_eval");
  REQUIRE(run({"gen-data", "--n", "120", "--seed", "2", "--out", p(d, "truth.csv")}).code == 0);
  REQUIRE(run({"gen-data", "--n", "80", "--seed", "3", "--out", p(d, "more.csv")}).code == 0);
  REQUIRE(run({"eval", "--samples", p(d, "truth.csv"), p(d, "more.csv"), "--reference",
               p(d, "truth.csv"), "--out", p(d, "ev")}).code == 0);

  std::vector<std::vector<std::string>> stats;
  for (const std::string& line : csv_lines(p(d, "ev/recovery_stats.csv"))) stats.push_back(fields(line));
  REQUIRE(stats.size() == 5);
  CHECK(stats[0] == std::vector<std::string>{"sample", "n", "mean_norm", "frac_below",
                                             "frac_within", "w1_to_unit"});
  CHECK(stats[1][0] == "truth");
  CHECK(stats[1][4] == "1");
  CHECK(std::stod(stats[1][5]) < 1e-12);
  CHECK(stats[3][0] == "mean");
  CHECK(stats[4][0] == "std");
  CHECK(stats[3][1] == "100");

  const Matrix hist = csv_import(p(d, "ev/norm_histogram.csv"), true);
  CHECK(hist.rows() == 62);
  CHECK(hist.col(2).sum() == 120);
  CHECK(hist.col(3).sum() == 80);

  const std::vector<std::string> dn = csv_lines(p(d, "ev/diversity_novelty.csv"));
  REQUIRE(dn.size() == 5);
  CHECK(fields(dn[1])[0] == "truth");
  CHECK(fields(dn[1])[3] == "0");
  CHECK(read_file(p(d, "ev/norm_histogram.svg")).rfind("<svg", 0) == 0);

  write_text(p(d, "hand.csv"), "x0,x1\n0.9,0\n0,1\n1.1,0\n0.3,0.4\n");
  REQUIRE(run({"eval", "--samples", p(d, "hand.csv"), "--bins", "3", "--lo", "0.5", "--hi",
               "1.1", "--out", p(d, "ev2")}).code == 0);
  const std::vector<std::string> row = fields(csv_lines(p(d, "ev2/recovery_stats.csv"))[1]);
  const RecoveryStats hand = recovery_stats(csv_import(p(d, "hand.csv")));
  CHECK(std::stod(row[5]) == hand.w1_to_unit);
  CHECK(std::stod(row[3]) == hand.frac_below);
  CHECK(std::abs(std::stod(row[5]) - (0.1 + 0.0 + 0.1 + 0.5) / 4.0) < 1e-15);
  const std::vector<std::string> h = csv_lines(p(d, "ev2/norm_histogram.csv"));
  REQUIRE(h.size() == 6);
  CHECK(h[1] == "-inf,0.5,0");
  CHECK(h[5] == "1.1,inf,1");
  CHECK_FALSE(std::filesystem::exists(p(d, "ev2/diversity_novelty.csv")));
  CHECK(run({"eval", "--samples", p(d, "hand.csv"), "--reference", p(d, "truth.csv"), "--out",
             p(d, "ev3")}).code == 3);
}

TEST_CASE("diagnose: partitions, gamma ordering flag, minimal-improvement note") {
  TempDir d("cli_diag");
  prepare(d, 2);
  const Result r = run({"diagnose", "--stack", p(d, "stack"), "--data", p(d, "data.csv"), "--out",
                        p(d, "report.txt"), "--trials", "30"});
  REQUIRE(r.code == 0);
  CHECK(read_file(p(d, "report.txt")) == r.out);
  CHECK(r.out.find("decoder_diversity: 30") != std::string::npos);
  CHECK(r.out.find("gamma_convergence_epoch:") != std::string::npos);

  // Constructed stack: gamma falls from stage 0 to 1, stage 1 is near one.
  StageStack stack = load_stack(p(d, "stack"));
  stack[0].log_gamma.value(0, 0) = std::log(0.95);
  stack[1].log_gamma.value(0, 0) = std::log(0.92);
  save_stack(p(d, "built"), stack);
  const Result b = run({"diagnose", "--stack", p(d, "built"), "--data", p(d, "data.csv"), "--out",
                        p(d, "built.txt"), "--trials", "5"});
  REQUIRE(b.code == 0);
  CHECK(b.out.find("gamma_order: not_increasing") != std::string::npos);
  CHECK(b.out.find("note: minimal further improvement") != std::string::npos);
  CHECK(b.out.find("gamma_convergence_epoch") == std::string::npos);
  std::istringstream lines(b.out);
  int lo = 0, mid = 0, hi = 0;
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("census_lo: ", 0) == 0) lo = std::stoi(line.substr(11));
    if (line.rfind("census_mid: ", 0) == 0) mid = std::stoi(line.substr(12));
    if (line.rfind("census_hi: ", 0) == 0) {
      hi = std::stoi(line.substr(11));
      CHECK(lo + mid + hi == 8);
    }
  }
}

TEST_CASE("finetune: mode names, frozen weights, region report") {
  TempDir d("cli_ft");
  prepare(d, 2);
  const StageStack pre = load_stack(p(d, "stack"));
  for (const std::string mode : {"whole", "inner", "outer"}) {
    const std::string out = p(d, "ft_" + mode);
    const Result r = run({"finetune", "--stack", p(d, "stack"), "--mode", mode, "--config",
                          p(d, "cfg.json"), "--out", out});
    REQUIRE(r.code == 0);
    const StageStack post = load_stack(out);
    CHECK(frozen_parameters_preserved(pre[1], post[1]));
    const std::vector<std::string> frozen = csv_lines(out + "/frozen_check.csv");
    REQUIRE(frozen.size() == 3);
    CHECK(frozen[1].rfind("0,whole,", 0) == 0);
    CHECK(frozen[2].rfind("1," + mode + ",", 0) == 0);
    CHECK(csv_lines(out + "/region_fraction.csv").size() == 3);
  }
  CHECK(run({"finetune", "--stack", p(d, "stack"), "--mode", "sideways", "--out", p(d, "x")}).code == 2);
  REQUIRE(run({"gen-data", "--n", "30", "--out", p(d, "narrow.csv"), "--spec",
               config_file(d, json{{"kind", "circle"}}, "circle.json")}).code == 0);
  CHECK(run({"finetune", "--stack", p(d, "stack"), "--data", p(d, "narrow.csv"), "--config",
             p(d, "cfg.json"), "--out", p(d, "y")}).code == 3);
}

TEST_CASE("manifests record input hashes deterministically") {
  TempDir d("cli_manifest");
  prepare(d, 1);
  REQUIRE(run({"sample", "--stack", p(d, "stack"), "--n", "10", "--out", p(d, "a.csv")}).code == 0);
  const json m1 = json::parse(read_file(p(d, "a.csv.manifest.json")));
  REQUIRE(run({"sample", "--stack", p(d, "stack"), "--n", "10", "--out", p(d, "a.csv")}).code == 0);
  const json m2 = json::parse(read_file(p(d, "a.csv.manifest.json")));
  CHECK(m1 == m2);
  CHECK(m1["command"] == "sample");
  CHECK(m1["inputs"][0]["fnv1a64"].get<std::string>().size() == 16);
  const json t = json::parse(read_file(p(d, "stack/manifest.json")));
  CHECK(t["inputs"][0]["fnv1a64"] ==
        [&] {
          char buf[17];
          std::snprintf(buf, sizeof(buf), "%016llx",
                        static_cast<unsigned long long>(cli::fnv1a64(read_file(p(d, "data.csv")))));
          return std::string(buf);
        }());
  CHECK(cli::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(cli::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("run config: defaults, round trip, strictness") {
  const cli::RunConfig def;
  CHECK(def.stages.size() == 3);
  CHECK(def.stages[0].hidden == std::vector<Index>{512, 512, 512});
  CHECK(def.eval.n == 1000);
  CHECK(def.eval.bins == 60);
  const json j = cli::to_json(def);
  CHECK(cli::to_json(cli::parse_run_config(j)) == j);
  CHECK_THROWS_AS(cli::parse_run_config(json{{"eval", {{"n", "many"}}}}), ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json{{"stages", json::array()}}), ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json{{"stages", {{{"epochs", -1}}}}}), ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json{{"finetune", {{"mode", "all"}}}}), ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json{{"diagnose", {{"aggregation", "max"}}}}), ConfigError);
  CHECK_THROWS_AS(cli::parse_run_config(json::array()), ConfigError);
}
