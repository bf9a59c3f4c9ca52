#include <doctest.h>

#include <sys/wait.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

// Runs sdesign with `args`; stderr is captured, stdout goes to `stdout_file`.
Result run(const std::string& args, const fs::path& stdout_file = "/dev/null") {
  const fs::path err = fs::temp_directory_path() / ("sdesign_cli_err_" + std::to_string(::getpid()));
  const std::string cmd = std::string("timeout 120 ") + SDESIGN_BINARY + " " + args + " >" +
                          stdout_file.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err);
  r.err.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  fs::remove(err);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Workspace {
  fs::path path;
  Workspace() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() / ("sdesign_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workspace() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

json small_config() {
  return json::parse(R"({
    "n": 20, "n0": 6, "replications": 3,
    "true_beta": [0, 1, 1],
    "covariate_model": {"kind": "dynamic", "intercept": [0.2], "slope": [0.02]},
    "policies": [
      {"kind": "myopic"},
      {"kind": "nonmyopic", "horizon": 1, "dist": "correct"},
      {"kind": "pseudo", "trajectories": 4, "dist": "correct"}
    ],
    "seeds": {"covariates": 1, "deviates": 2, "policy": 3}
  })");
}

}  // namespace

TEST_CASE("cli: invalid configs exit 2 and name the field") {
  Workspace ws;
  json c = small_config();
  c.erase("n0");
  const auto path = ws.write("bad.json", c.dump());
  const Result r = run("simulate --config " + path.string() + " --out " + (ws.path / "out").string());
  CHECK(r.code == 2);
  CHECK(r.err.find("n0") != std::string::npos);
  CHECK_FALSE(fs::exists(ws.path / "out" / "results.csv"));

  const auto broken = ws.write("broken.json", "{ \"n\": ");
  CHECK(run("simulate --config " + broken.string()).code == 2);
  CHECK(run("simulate --config " + (ws.path / "none.json").string()).code == 2);
  CHECK(run("simulate").code == 2);
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("cli: simulate writes its files and reruns byte for byte") {
  Workspace ws;
  const auto config = ws.write("study.json", small_config().dump());
  const auto a = ws.path / "a", b = ws.path / "b";
  REQUIRE(run("simulate -q --config " + config.string() + " --out " + a.string()).code == 0);
  REQUIRE(run("simulate -q --jobs 2 --config " + config.string() + " --out " + b.string()).code == 0);
  for (const char* f : {"results.csv", "summary.csv", "table.csv", "manifest.json"}) CHECK(fs::exists(a / f));
  for (const char* f : {"results.csv", "summary.csv", "table.csv"}) CHECK(slurp(a / f) == slurp(b / f));

  const json manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["seeds"]["policy"] == 3);
  CHECK(manifest["failed_runs"].empty());
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);

  const auto c = ws.path / "c";
  REQUIRE(run("simulate -q --seed-policy 99 --config " + config.string() + " --out " + c.string()).code == 0);
  CHECK(slurp(c / "results.csv") != slurp(a / "results.csv"));
  CHECK(json::parse(slurp(c / "manifest.json"))["seeds"]["policy"] == 99);

  CHECK(run("simulate -q --quantiles 0.5,2 --config " + config.string() + " --out " + c.string()).code == 2);
}

TEST_CASE("cli: report summarizes a results file") {
  Workspace ws;
  const auto config = ws.write("study.json", small_config().dump());
  const auto out = ws.path / "out";
  REQUIRE(run("simulate -q --config " + config.string() + " --out " + out.string()).code == 0);

  const auto stdout_file = ws.path / "summary.txt";
  REQUIRE(run("report " + (out / "results.csv").string(), stdout_file).code == 0);
  CHECK(slurp(stdout_file) == slurp(out / "summary.csv"));

  const auto custom = ws.path / "custom.csv";
  REQUIRE(run("report " + (out / "results.csv").string() + " --quantiles 0.25,0.75 --out " + custom.string()).code == 0);
  CHECK(slurp(custom).rfind("policy,sample_size,metric,q25,q75\n", 0) == 0);

  const auto bad = ws.write("bad.csv", "policy,replication\nmyopic,1\n");
  const Result r = run("report " + bad.string());
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
  CHECK(run("report " + (ws.path / "missing.csv").string()).code == 2);
}

TEST_CASE("cli: serve rejects unusable bind addresses") {
  Workspace ws;
  const std::string state = " --state-dir " + (ws.path / "state").string();
  CHECK(run("serve --bind nonsense" + state).code == 1);
  CHECK(run("serve --bind 127.0.0.1:99999" + state).code == 1);
  CHECK(run("serve --bind 999.1.1.1:80" + state).code == 1);

  const auto corrupt = ws.path / "corrupt";
  fs::create_directories(corrupt);
  std::ofstream(corrupt / "x.log") << "garbage\n";
  CHECK(run("serve --bind 127.0.0.1:0 --state-dir " + corrupt.string()).code == 1);
}
