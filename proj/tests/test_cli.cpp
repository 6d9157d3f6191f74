#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "fleet_sim.hpp"
#include "json.hpp"
#include "piml/cli.hpp"
#include "piml/error.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "piml");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = piml::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("piml_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path small_fleet(const fs::path& root) {
  auto spec = piml::testing::fleet_spec("FD001");
  spec.train_units = spec.test_units = 10;
  piml::testing::write_fleet(root / "data", piml::testing::simulate_fleet(spec, 6));
  return root / "data";
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("gradcheck passes and prints an error below 1e-6") {
  const auto dir = fresh("gradcheck");
  const auto r = run({"gradcheck", "--out-dir", dir.string()});
  CHECK(r.code == 0);
  std::smatch m;
  REQUIRE(std::regex_search(r.out, m, std::regex("max relative error: ([0-9.eE+-]+)")));
  CHECK(std::stod(m[1]) < 1e-6);
  CHECK(fs::exists(dir / "manifest_gradcheck.json"));
}

TEST_CASE("gradcheck fails with exit 2 above its threshold") {
  const auto dir = fresh("gradcheck_fail");
  const auto r = run({"gradcheck", "--out-dir", dir.string(), "--set", "gradcheck_threshold=1e-20"});
  CHECK(r.code == 2);
}

TEST_CASE("exactly one subcommand") {
  CHECK(run({}).code != 0);
  CHECK(run({"ingest", "estimate"}).code != 0);
}

TEST_CASE("unknown override key is a parse error") {
  const auto dir = fresh("badkey");
  const auto r = run({"gradcheck", "--out-dir", dir.string(), "--set", "learning_rate=1"});
  CHECK(r.code == 1);
  CHECK(r.err.find("learning_rate") != std::string::npos);
}

TEST_CASE("config file errors name the file and line") {
  const auto dir = fresh("badconfig");
  std::ofstream(dir / "run.toml") << "condition = FD001\nepochs = many\n";
  const auto r = run({"gradcheck", "--config", (dir / "run.toml").string(), "--out-dir", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("run.toml:2") != std::string::npos);
}

TEST_CASE("invalid value is a validation failure") {
  const auto dir = fresh("invalid");
  CHECK(run({"gradcheck", "--out-dir", dir.string(), "--set", "batch_size=0"}).code == 2);
}

TEST_CASE("evaluate without a RUL file exits 1 naming it") {
  const auto root = fresh("missing_rul");
  const auto data = small_fleet(root);
  const auto out = root / "out";
  const std::vector<std::string> common{"--data-dir", data.string(), "--out-dir", out.string(),
                                        "--set", "epochs=1", "--set", "seeds=[0]"};
  auto with = [&](std::string sub) {
    std::vector<std::string> a{std::move(sub)};
    a.insert(a.end(), common.begin(), common.end());
    return a;
  };
  REQUIRE(run(with("train")).code == 0);
  fs::remove(data / "RUL_FD001.txt");
  const auto r = run(with("evaluate"));
  CHECK(r.code == 1);
  CHECK(r.err.find("RUL_FD001.txt") != std::string::npos);
}

TEST_CASE("a held lock refuses a second run") {
  const auto dir = fresh("lock");
  piml::DirectoryLock lock(dir);
  CHECK_THROWS_AS(piml::DirectoryLock{dir}, piml::IoError);
}

TEST_CASE("ingest, estimate, train, evaluate compose into an ablate cell") {
  const auto root = fresh("compose");
  const auto data = small_fleet(root);
  const std::vector<std::string> common{"--data-dir", data.string(), "--set", "epochs=3", "--set", "seeds=[0, 1]",
                                        "--set", "target_scaling=train_max", "--quiet"};
  auto with = [&](std::string sub, const fs::path& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> a{std::move(sub), "--out-dir", out.string()};
    a.insert(a.end(), common.begin(), common.end());
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  const auto steps = root / "steps";
  const std::vector<std::string> cell{"--set", "use_mu=true", "--set", "use_rho=true"};
  REQUIRE(run(with("ingest", steps)).code == 0);
  REQUIRE(run(with("estimate", steps)).code == 0);
  REQUIRE(run(with("train", steps, cell)).code == 0);
  REQUIRE(run(with("evaluate", steps, cell)).code == 0);
  CHECK(fs::exists(steps / "physics" / "sensor_02.json"));
  CHECK(fs::exists(steps / "runs" / "mu1_rho1_seed1" / "checkpoint.json"));

  const auto whole = root / "whole";
  REQUIRE(run(with("ablate", whole)).code == 0);

  std::map<std::string, std::string> ablate_rows;
  std::istringstream report(slurp(whole / "report.csv"));
  std::string line;
  std::getline(report, line);
  CHECK(line == "condition,mu,rho,seed,test_mse,test_l1");
  int rows = 0;
  while (std::getline(report, line)) {
    ++rows;
    const auto key = line.substr(0, line.find(',', line.find(',', line.find(',', line.find(',') + 1) + 1) + 1));
    ablate_rows[key] = line;
  }
  CHECK(rows == 8);  // 4 cells x 2 seeds

  std::istringstream metrics(slurp(steps / "metrics.csv"));
  std::getline(metrics, line);
  int matched = 0;
  while (std::getline(metrics, line)) {
    const auto key = line.substr(0, line.find(',', line.find(',', line.find(',', line.find(',') + 1) + 1) + 1));
    REQUIRE(ablate_rows.count(key) == 1);
    CHECK(ablate_rows[key] == line);
    ++matched;
  }
  CHECK(matched == 2);

  const auto manifest = read_json(whole / "manifest_ablate.json");
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  CHECK(manifest["seeds"] == nlohmann::json::array({0, 1}));
  CHECK(manifest["version"] == piml::kVersion);
}

TEST_CASE("generate writes a CSV and its sidecar") {
  const auto root = fresh("generate");
  const auto data = small_fleet(root);
  const auto out = root / "out";
  REQUIRE(run({"estimate", "--data-dir", data.string(), "--out-dir", out.string(), "--quiet"}).code == 0);
  const auto r = run({"generate", "--out-dir", out.string(), "--set", "synth_paths=3", "--set", "synth_length=15"});
  REQUIRE(r.code == 0);
  const auto csv = slurp(out / "synthetic.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 15);
  CHECK(fs::exists(out / "synthetic.json"));
}
