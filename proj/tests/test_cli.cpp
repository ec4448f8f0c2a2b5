#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "lbdp/lbdp.hpp"

using namespace lbdp;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("lbdp_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream f(p);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  }

  std::string simulated_panel(std::uint64_t seed = 1) {
    const auto p = path("panel_" + std::to_string(seed) + ".csv");
    const auto r = run({"simulate", "--lambda", "7", "--mu", "5", "--z0", "10", "--dt", "0.1", "--n-obs", "10",
                        "--replicates", "3", "--condition-nonextinct", "--seed", std::to_string(seed), "-o", p});
    EXPECT_EQ(r.code, 0) << r.err;
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SimulateIsDeterministicAndEchoesConfig) {
  const auto a = run({"simulate", "--lambda", "7", "--mu", "5", "--z0", "4", "--dt", "0.25", "--n-obs", "8",
                      "--replicates", "5", "--condition-nonextinct", "--seed", "77", "--metadata", path("m.json")});
  const auto b = run({"simulate", "--lambda", "7", "--mu", "5", "--z0", "4", "--dt", "0.25", "--n-obs", "8",
                      "--replicates", "5", "--condition-nonextinct", "--seed", "77"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("# schema: lbdp.panel/1"), std::string::npos);
  std::istringstream in(a.out);
  const auto panel = read_panel_csv(in);
  ASSERT_EQ(panel.size(), 5u);
  for (const auto& tr : panel.trajectories()) {
    EXPECT_EQ(tr.size(), 9u);
    EXPECT_EQ(tr.counts().front(), 4);
    EXPECT_GT(tr.counts().back(), 0);
  }
  SimConfig cfg{Rates(7, 5), 4, regular_times(0.25, 8), true, derive_seed(77, 2)};
  EXPECT_TRUE(std::ranges::equal(panel[2].counts(), simulate_trajectory(cfg).counts()));

  const auto meta = json::parse(slurp(path("m.json")));
  EXPECT_EQ(meta["schema"], "lbdp.simulate-meta/1");
  EXPECT_EQ(meta["seed"], 77u);
  EXPECT_EQ(meta["config"]["lambda"], 7.0);
  EXPECT_EQ(meta["config"]["z0"], 4);
  EXPECT_EQ(meta["config"]["replicates"], 5);
  EXPECT_EQ(meta["config"]["condition_nonextinct"], true);
  EXPECT_EQ(meta["config"]["obs_times"].size(), 9u);
  std::int64_t total = 0;
  for (const auto& r : meta["rejections"]["per_trajectory"]) total += r.get<std::int64_t>();
  EXPECT_EQ(meta["rejections"]["total"], total);
}

TEST_F(Cli, SimulateAutoSeedIsRecordedAndReproducible) {
  const auto out = path("auto.csv");
  const auto a = run({"simulate", "--lambda", "2", "--mu", "1", "--z0", "3", "--times", "0,0.5,2", "-o", out});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto meta = json::parse(slurp(out + ".meta.json"));
  EXPECT_EQ(meta["seed_source"], "auto");
  const auto seed = meta["seed"].get<std::uint64_t>();
  const auto b = run({"simulate", "--lambda", "2", "--mu", "1", "--z0", "3", "--times", "0,0.5,2", "--seed",
                      std::to_string(seed)});
  EXPECT_EQ(b.out, slurp(out));
  EXPECT_EQ(meta["config"]["obs_times"], json::parse("[0.0, 0.5, 2.0]"));
}

TEST_F(Cli, SimulateUsageAndCapExitCodes) {
  EXPECT_EQ(run({"simulate", "--lambda", "1", "--mu", "1", "--z0", "2"}).code, cli::exit_usage);
  EXPECT_EQ(run({"simulate", "--lambda", "1", "--mu", "1", "--z0", "2", "--dt", "0.1"}).code, cli::exit_usage);
  EXPECT_EQ(run({"simulate", "--lambda", "-1", "--mu", "1", "--z0", "2", "--dt", "0.1", "--n-obs", "3"}).code,
            cli::exit_usage);
  EXPECT_EQ(run({"simulate", "--lambda", "1", "--mu", "1", "--z0", "2", "--times", "0,1", "--dt", "0.1",
                 "--n-obs", "3"})
                .code,
            cli::exit_usage);
  EXPECT_EQ(run({"simulate", "--lambda", "1", "--mu", "1", "--z0", "2", "--times", "0,1,1"}).code, cli::exit_usage);
  EXPECT_EQ(run({"simulate", "--bogus"}).code, cli::exit_usage);
  EXPECT_EQ(run({}).code, cli::exit_usage);
  const auto cap = run({"simulate", "--lambda", "10", "--mu", "0", "--z0", "5", "--dt", "1", "--n-obs", "3",
                        "--max-pop", "1000", "--seed", "1"});
  EXPECT_EQ(cap.code, cli::exit_resource_cap);
  EXPECT_NE(cap.err.find("cap"), std::string::npos);
  const auto doomed = run({"simulate", "--lambda", "0", "--mu", "5", "--z0", "1", "--times", "0,10",
                           "--condition-nonextinct", "--max-attempts", "10", "--seed", "1"});
  EXPECT_EQ(doomed.code, cli::exit_resource_cap);
  EXPECT_EQ(run({"--help"}).code, cli::exit_ok);
}

TEST_F(Cli, EstimateResultFileRoundTrips) {
  const auto panel_path = simulated_panel();
  const auto r = run({"estimate", "-i", panel_path, "-m", "spmle", "--seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  for (const char* key : {"schema", "artifact_version", "method", "lambda", "mu", "omega", "se_lambda", "se_mu",
                          "se_omega", "cov", "loglik", "converged", "diagnostics", "seed"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["schema"], "lbdp.result/1");
  EXPECT_EQ(j["method"], "spmle");
  EXPECT_EQ(j["seed"], 5u);

  std::ifstream in(panel_path);
  const auto panel = read_panel_csv(in);
  FitOptions o;
  o.seed = 5;
  const auto f = fit(panel, Method::spmle, o);
  EXPECT_EQ(j["lambda"].get<double>(), f.rates.lambda());
  EXPECT_EQ(j["mu"].get<double>(), f.rates.mu());
  EXPECT_EQ(j["omega"].get<double>(), f.omega_hat);
  EXPECT_EQ(j["se_lambda"].get<double>(), *f.se_lambda());
  EXPECT_EQ(j["cov"][0][1].get<double>(), (*f.cov)(0, 1));
  EXPECT_EQ(j["loglik"].get<double>(), *f.loglik);

  EXPECT_EQ(run({"estimate", "-i", panel_path, "-m", "spmle", "--seed", "5"}).out, r.out);
}

TEST_F(Cli, EstimateAllWritesArray) {
  const auto panel_path = simulated_panel(2);
  const auto out = path("all.json");
  const auto r = run({"estimate", "-i", panel_path, "-m", "all", "--seed", "1", "-o", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto arr = json::parse(slurp(out));
  ASSERT_TRUE(arr.is_array());
  ASSERT_EQ(arr.size(), 6u);
  std::vector<std::string> names;
  for (const auto& e : arr) {
    EXPECT_EQ(e["schema"], "lbdp.result/1");
    EXPECT_TRUE(e["converged"].get<bool>()) << e.dump();
    names.push_back(e["method"]);
  }
  EXPECT_EQ(names, (std::vector<std::string>{"gw", "qg", "spmle", "spmle-adjusted", "mle", "mv-spmle"}));
}

TEST_F(Cli, GwOnUnequalSpacingPointsToQg) {
  const auto p = write("u.csv", "trajectory_id,time,count\na,0,5\na,0.1,6\na,0.3,9\nb,0,4\nb,0.2,6\nb,0.3,8\n");
  const auto r = run({"estimate", "-i", p, "-m", "gw"});
  EXPECT_EQ(r.code, cli::exit_usage);
  EXPECT_NE(r.err.find("qg"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());

  const auto sim = path("uneven.csv");
  ASSERT_EQ(run({"simulate", "--lambda", "7", "--mu", "5", "--z0", "10", "--times", "0,0.1,0.3,0.4,0.7,0.8",
                 "--replicates", "6", "--condition-nonextinct", "--seed", "3", "-o", sim})
                .code,
            0);
  EXPECT_EQ(run({"estimate", "-i", sim, "-m", "gw"}).code, cli::exit_usage);
  const auto all = run({"estimate", "-i", sim, "-m", "all", "--seed", "2"});
  EXPECT_EQ(all.code, cli::exit_ok) << all.err;
  const auto arr = json::parse(all.out);
  EXPECT_EQ(arr[0]["error_kind"], "precondition");
  EXPECT_FALSE(arr[0]["converged"].get<bool>());
  for (std::size_t i = 1; i < arr.size(); ++i) EXPECT_TRUE(arr[i]["converged"].get<bool>()) << arr[i].dump();
}

TEST_F(Cli, MalformedPanelIsUsageError) {
  const auto p = write("bad.csv", "trajectory_id,time,count\n1,0,3\n1,0.1,three\n");
  const auto r = run({"estimate", "-i", p, "-m", "qg"});
  EXPECT_EQ(r.code, cli::exit_usage);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
  const auto dup = write("dup.csv", "trajectory_id,time,count\n1,0,3\n1,0,4\n");
  EXPECT_EQ(run({"estimate", "-i", dup, "-m", "qg"}).code, cli::exit_usage);
  EXPECT_EQ(run({"estimate", "-i", path("missing.csv"), "-m", "qg"}).code, cli::exit_usage);
  EXPECT_EQ(run({"estimate", "-i", simulated_panel(), "-m", "nope"}).code, cli::exit_usage);
}

TEST_F(Cli, NonConvergenceExitCode) {
  const auto r = run({"estimate", "-i", simulated_panel(3), "-m", "spmle", "--max-iterations", "2", "--restarts",
                      "0", "--seed", "1"});
  EXPECT_EQ(r.code, cli::exit_nonconvergence) << r.err;
  EXPECT_FALSE(json::parse(r.out)["converged"].get<bool>());
}

TEST_F(Cli, PmfColumnsAndExactCap) {
  const auto r = run({"pmf", "--lambda", "7", "--mu", "5", "-t", "1", "-a", "3", "--k-max", "40"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# schema: lbdp.pmf/1");
  while (std::getline(in, line) && line.starts_with('#')) {
  }
  EXPECT_EQ(line, "k,exact,spa,spa_normalized,spa_conditional,ratio_spa,ratio_spa_normalized,ratio_spa_conditional");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    rows.push_back(cols);
  }
  ASSERT_EQ(rows.size(), 41u);
  const Rates rates(7, 5);
  for (std::int64_t k = 0; k <= 40; ++k) {
    const auto& c = rows[k];
    ASSERT_EQ(c.size(), 8u);
    EXPECT_EQ(std::stoll(c[0]), k);
    EXPECT_EQ(std::stod(c[1]), transition_prob(k, 1, 3, rates));
    EXPECT_EQ(std::stod(c[2]), spa_pmf(k, 1, 3, rates));
    if (k >= 1) {
      EXPECT_EQ(std::stod(c[4]), spa_pmf_conditional(k, 1, 3, rates));
    }
  }
  EXPECT_EQ(rows[0][5], "1");
  EXPECT_EQ(rows[1][7], "1");

  const auto capped = run({"pmf", "--lambda", "7", "--mu", "5", "-t", "1", "-a", "3", "--k-max", "5",
                           "--exact-cap", "10"});
  ASSERT_EQ(capped.code, 0);
  EXPECT_NE(capped.out.find("# exact omitted"), std::string::npos);
  EXPECT_NE(capped.out.find("\n3,NA,"), std::string::npos);
  EXPECT_EQ(run({"pmf", "--lambda", "7", "--mu", "5", "-t", "0", "-a", "3"}).code, cli::exit_usage);
}

TEST_F(Cli, BenchmarkReportsAreThreadIndependent) {
  auto bench = [&](const std::string& prefix, const char* threads) {
    setenv("LBDP_THREADS", threads, 1);
    const auto r = run({"benchmark", "--lambda", "7", "--mu", "5", "--z0", "10,20", "--n-transitions", "8", "--m",
                        "2", "--replicates", "5", "--methods", "gw,qg,spmle", "--seed", "11", "-o", path(prefix)});
    unsetenv("LBDP_THREADS");
    EXPECT_EQ(r.code, 0) << r.err;
  };
  bench("one", "1");
  bench("three", "3");
  EXPECT_EQ(slurp(path("one.csv")), slurp(path("three.csv")));
  EXPECT_EQ(slurp(path("one.json")), slurp(path("three.json")));
  const auto csv = slurp(path("one.csv"));
  EXPECT_TRUE(csv.starts_with("# schema: lbdp.benchmark/1"));
  const auto doc = json::parse(slurp(path("one.json")));
  EXPECT_EQ(doc["schema"], "lbdp.benchmark/1");
  ASSERT_EQ(doc["cells"].size(), 2u);
  EXPECT_EQ(doc["cells"][1]["z0"], 20);
  EXPECT_EQ(doc["cells"][0]["rows"].size(), 3u);
  EXPECT_EQ(doc["cells"][0]["rows"][2]["method"], "spmle");
}

TEST_F(Cli, BenchmarkWithRandomGaps) {
  const auto r = run({"benchmark", "--lambda", "7", "--mu", "5", "--z0", "10", "--n-transitions", "5", "--gap-lo",
                      "0.05", "--gap-hi", "0.2", "--replicates", "3", "--methods", "gw,qg", "--seed", "4", "-o",
                      path("gaps")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = json::parse(slurp(path("gaps.json")));
  const auto& rows = doc["cells"][0]["rows"];
  EXPECT_EQ(rows[0]["n_failed"], 3);
  EXPECT_NE(rows[0]["first_error"].get<std::string>().find("qg"), std::string::npos);
  EXPECT_EQ(rows[1]["n_ok"], 3);
  EXPECT_TRUE(doc["cells"][0]["dt"].is_null());
}

TEST_F(Cli, ConfigFileSuppliesDefaults) {
  const auto cfg = write("sim.toml", "[simulate]\nlambda = 7\nmu = 5\nz0 = 4\ndt = 0.5\nn-obs = 2\nseed = 9\n");
  const auto a = run({"simulate", "--config", cfg});
  const auto b = run({"simulate", "--lambda", "7", "--mu", "5", "--z0", "4", "--dt", "0.5", "--n-obs", "2",
                      "--seed", "9"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto c = run({"simulate", "--config", cfg, "--seed", "10"});
  EXPECT_NE(c.out, a.out);
  EXPECT_EQ(run({"simulate", "--config", path("absent.toml")}).code, cli::exit_usage);
}
