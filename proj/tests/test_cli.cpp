#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dicap/config.hpp"
#include "dicap/nets.hpp"
#include "dicap/runner.hpp"

using namespace dicap;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "dicap_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

int run_binary(const std::string& args) {
  std::string cmd = std::string(DICAP_BIN) + " " + args;
  int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

nlohmann::json read_summary(const fs::path& out) {
  return nlohmann::json::parse(slurp(out / "summary.json"));
}

ExperimentConfig tiny_estimate_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.run.command = "estimate";
  cfg.run.seed = 3;
  cfg.run.out = out.string();
  cfg.channel.kind = "bsc";
  cfg.channel.p = {0.1};
  cfg.train.iters = 30;
  cfg.train.n = 64;
  cfg.train.batch = 4;
  cfg.train.est_hidden = 16;
  cfg.train.est_fc_width = 16;
  cfg.train.est_fc_depth = 1;
  cfg.train.eval_len = 20000;
  return cfg;
}

}  // namespace

TEST_CASE("every shipped preset parses and materializes") {
  const std::vector<std::string> presets{
      "ge-sweep", "ising-fb",   "trapdoor-fb", "trapdoor-ff",
      "post-sweep", "nost-sweep", "pam-shaping", "qam-shaping"};
  for (const std::string& name : presets) {
    CAPTURE(name);
    ExperimentConfig cfg =
        parse_config_file(std::string(DICAP_PRESET_DIR) + "/" + name + ".cfg");
    CHECK(cfg.run.command.empty());  // the CLI verb decides
    if (name == "ge-sweep" || name == "post-sweep" || name == "nost-sweep")
      CHECK(channel_grid(cfg).size() == 3);
    if (name == "ising-fb" || name == "trapdoor-fb")
      CHECK(cfg.run.feedback);
    if (name == "pam-shaping")
      CHECK(config_constellation(cfg).order == 16);
    if (name == "qam-shaping") {
      Constellation c = config_constellation(cfg);
      CHECK(c.kind == ConstellationKind::kQam);
      CHECK(c.order == 64);
    }
  }
}

TEST_CASE("lemma2 run writes a complete record with the counting table") {
  fs::path out = scratch("lemma2");
  ExperimentConfig cfg;
  cfg.run.command = "lemma2";
  cfg.run.out = out.string();
  cfg.lemma2.m_max = 8;
  CHECK(run_and_record(cfg) == 0);

  nlohmann::json rec = read_summary(out);
  CHECK(rec["status"] == "complete");
  CHECK(rec["command"] == "lemma2");
  CHECK(rec["metrics"]["all_hold"] == true);
  CHECK(rec["metrics"]["m_max"] == 8);
  CHECK(rec["build_id"].get<std::string>() != "");
  CHECK(rec["wall_ms"].get<double>() >= 0.0);

  // the config echo re-parses to the executed config
  ExperimentConfig back = parse_config_text(rec["config"].get<std::string>());
  CHECK(back == cfg);

  std::string csv = slurp(out / "lemma2.csv");
  CHECK(csv.rfind("m,count,log_count_nats,log_bound_nats,holds\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);  // header + 8 rows
  CHECK(csv.find("2,8,") != std::string::npos);
  CHECK(csv.find("3,121.5,") != std::string::npos);
}

TEST_CASE("oracle run records the closed-form value") {
  fs::path out = scratch("oracle");
  ExperimentConfig cfg;
  cfg.run.command = "oracle";
  cfg.run.out = out.string();
  cfg.channel.kind = "z";
  cfg.channel.p = {0.5};
  CHECK(run_and_record(cfg) == 0);
  nlohmann::json rec = read_summary(out);
  CHECK(rec["status"] == "complete");
  double cap = rec["metrics"]["points"][0]["capacity_bits"].get<double>();
  CHECK(cap == doctest::Approx(0.321928).epsilon(1e-5));

  // no closed form for feedforward trapdoor: config-level rejection
  cfg.channel.kind = "trapdoor";
  CHECK_THROWS_AS(run_and_record(cfg), std::invalid_argument);
}

TEST_CASE("estimate run writes curve, model, and reproducible artifacts") {
  fs::path out_a = scratch("est_a");
  ExperimentConfig cfg = tiny_estimate_config(out_a);
  CHECK(run_and_record(cfg) == 0);

  nlohmann::json rec = read_summary(out_a);
  CHECK(rec["status"] == "complete");
  nlohmann::json point = rec["metrics"]["points"][0];
  CHECK(point["channel"] == "bsc(p=0.1)");
  CHECK(point["diverged"] == false);
  CHECK(point["oracle_bits"].get<double>() ==
        doctest::Approx(0.531004).epsilon(1e-5));
  for (const auto& a : rec["artifacts"])
    CHECK(fs::exists(a.get<std::string>()));

  std::string curve = slurp(out_a / "curve.csv");
  CHECK(curve.rfind("iter,d_y_nats,d_xy_nats,di_bits\n", 0) == 0);
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 31);

  // the serialized model loads back into a same-shaped network
  Rng rng(99);
  DineModel fresh = make_dine_model(2, 2, 16, 16, 1, rng);
  load_model((out_a / "model.bin").string(), fresh.named());

  // identical config + seed: byte-identical curve and model
  fs::path out_b = scratch("est_b");
  ExperimentConfig cfg_b = tiny_estimate_config(out_b);
  CHECK(run_and_record(cfg_b) == 0);
  CHECK(slurp(out_b / "curve.csv") == curve);
  CHECK(slurp(out_b / "model.bin") == slurp(out_a / "model.bin"));
}

TEST_CASE("shape run writes the pmf table and per-point laws") {
  fs::path out = scratch("shape");
  ExperimentConfig cfg;
  cfg.run.command = "shape";
  cfg.run.out = out.string();
  cfg.run.seed = 7;
  cfg.shaping.constellation = "pam";
  cfg.shaping.order = 4;
  cfg.shaping.snr_db = {5.0};
  cfg.shaping.iters = 80;
  cfg.shaping.n = 64;
  cfg.shaping.ratio = 1;
  cfg.shaping.mine_width = 16;
  cfg.shaping.mine_depth = 1;
  cfg.shaping.eval_n = 1000;
  cfg.shaping.quad_order = 32;
  CHECK(run_and_record(cfg) == 0);

  nlohmann::json rec = read_summary(out);
  CHECK(rec["status"] == "complete");
  nlohmann::json point = rec["metrics"]["points"][0];
  CHECK(point["snr_db"] == doctest::Approx(5.0));
  CHECK(point["mi_uniform_bits"].get<double>() > 0.5);
  CHECK(fs::exists(out / "curve.csv"));
  CHECK(fs::exists(out / "model.bin"));
  nlohmann::json pmf = nlohmann::json::parse(slurp(out / "pmf.json"));
  CHECK(pmf["pmf"].size() == 4);
}

TEST_CASE("qgraph dispatch validates the channel family up front") {
  fs::path out = scratch("qg_bad");
  ExperimentConfig cfg;
  cfg.run.command = "qgraph";
  cfg.run.out = out.string();
  cfg.channel.kind = "bsc";
  CHECK_THROWS_WITH_AS(run_and_record(cfg),
                       doctest::Contains("unifilar finite-state"),
                       std::invalid_argument);

  cfg.channel.kind = "ising";
  cfg.channel.p = {0.3, 0.5};
  CHECK_THROWS_WITH_AS(run_and_record(cfg), doctest::Contains("sweep"),
                       std::invalid_argument);

  cfg.channel.p = {0.5};
  cfg.run.estimator = "mine";
  CHECK_THROWS_WITH_AS(run_and_record(cfg),
                       doctest::Contains("run.estimator"),
                       std::invalid_argument);
}

TEST_CASE("the binary handles the fast commands end to end") {
  fs::path dir = scratch("bin");

  // mandated oracle output line
  spit(dir / "bsc.cfg", "[channel]\nkind = bsc\np = 0.1\n");
  int rc = run_binary("oracle --config " + (dir / "bsc.cfg").string() +
                      " --out " + (dir / "o").string() + " > " +
                      (dir / "oracle.txt").string());
  CHECK(rc == 0);
  std::string line = slurp(dir / "oracle.txt");
  CHECK(line.rfind("0.531004 bits\n", 0) == 0);
  CHECK(fs::exists(dir / "o" / "summary.json"));

  // lemma2 without a config file
  rc = run_binary("lemma2 --m-max 6 --out " + (dir / "l").string() +
                  " > /dev/null");
  CHECK(rc == 0);
  nlohmann::json rec = read_summary(dir / "l");
  CHECK(rec["metrics"]["all_hold"] == true);
  CHECK(rec["metrics"]["m_max"] == 6);

  // unknown key: nonzero exit, field named on stderr, no record
  spit(dir / "bad.cfg", "[channel]\nkind = bsc\nflip = 0.1\n");
  rc = run_binary("oracle --config " + (dir / "bad.cfg").string() + " --out " +
                  (dir / "bad").string() + " 2> " +
                  (dir / "err.txt").string());
  CHECK(rc == 2);
  CHECK(slurp(dir / "err.txt").find("channel.flip") != std::string::npos);
  CHECK(!fs::exists(dir / "bad" / "summary.json"));

  // a config that pins another command is rejected
  spit(dir / "pin.cfg", "[run]\ncommand = oracle\n[channel]\nkind = bsc\n");
  rc = run_binary("lemma2 --config " + (dir / "pin.cfg").string() +
                  " 2> /dev/null");
  CHECK(rc == 2);

  // missing required --config
  rc = run_binary("estimate 2> /dev/null");
  CHECK(rc != 0);
}

TEST_CASE("seed and workers flags override the file values") {
  fs::path dir = scratch("override");
  spit(dir / "z.cfg",
       "[run]\nseed = 5\nworkers = 1\n[channel]\nkind = z\np = 0.5\n");
  int rc = run_binary("oracle --config " + (dir / "z.cfg").string() +
                      " --seed 11 --workers 2 --out " + (dir / "o").string() +
                      " > /dev/null");
  CHECK(rc == 0);
  nlohmann::json rec = read_summary(dir / "o");
  ExperimentConfig echoed =
      parse_config_text(rec["config"].get<std::string>());
  CHECK(echoed.run.seed == 11);
  CHECK(echoed.run.workers == 2);
}
