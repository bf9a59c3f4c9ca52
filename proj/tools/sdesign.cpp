// sdesign: run simulation studies, summarize their results, serve live trials.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "seqdesign/errors.hpp"
#include "seqdesign/http_api.hpp"
#include "seqdesign/service.hpp"
#include "seqdesign/study_io.hpp"

// after the Eigen headers: httplib pulls in <resolv.h>, whose _res macro
// collides with Eigen identifiers
#include <CLI11.hpp>
#include <httplib.h>

namespace fs = std::filesystem;
using namespace seqdesign;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInput = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_quantiles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double p = 0.0;
    try {
      p = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !(p >= 0.0 && p <= 1.0))
      throw UsageError("--quantiles: '" + item + "' is not a level in [0,1]");
    out.push_back(p);
  }
  if (out.empty()) throw UsageError("--quantiles: expected a comma-separated list");
  return out;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  body(out);
  if (!out) throw InputError("write to '" + path.string() + "' failed");
}

struct SimulateArgs {
  std::string config;
  std::string out = "out";
  int jobs = 0;
  std::optional<std::uint64_t> seed_covariates, seed_deviates, seed_policy;
  std::string quantiles;
  bool quiet = false;
};

int simulate(const SimulateArgs& args) {
  StudyConfig config;
  std::vector<double> quantiles = kDefaultQuantiles;
  try {
    config = load_study_config(args.config);
    if (!args.quantiles.empty()) quantiles = parse_quantiles(args.quantiles);
  } catch (const ConfigError& e) {
    std::cerr << "error: invalid configuration '" << args.config << "'\n";
    for (const auto& d : e.diagnostics()) std::cerr << "  " << d << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  if (args.seed_covariates) config.seeds.covariates = *args.seed_covariates;
  if (args.seed_deviates) config.seeds.deviates = *args.seed_deviates;
  if (args.seed_policy) config.seeds.policy = *args.seed_policy;

  try {
    const fs::path out(args.out);
    fs::create_directories(out);
    if (!args.quiet)
      std::cerr << "running " << config.replications << " replications x " << config.policies.size()
                << " policies\n";
    const auto start = std::chrono::steady_clock::now();
    const StudyResult result = run_study(config, args.jobs);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    json failures = json::array();
    for (const auto& rec : result.replications)
      for (const auto& trace : rec.policies)
        if (trace.failed) {
          failures.push_back({{"replication", rec.replication}, {"policy", trace.policy}, {"error", trace.error}});
          std::cerr << "warning: replication " << rec.replication << ", " << trace.policy
                    << " failed: " << trace.error << '\n';
        }

    const ResultTable table = result_table(config, result);
    write_file(out / "results.csv", [&](std::ostream& o) { write_results_csv(o, table); });
    write_file(out / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, summarize(table, quantiles), quantiles); });
    const std::string baseline = config.policies[config.baseline_index()].label();
    write_file(out / "table.csv", [&](std::ostream& o) { write_efficiency_table_csv(o, efficiency_table(table, baseline)); });

    const json manifest{
        {"config_path", args.config},
        {"config_hash", config_hash(config)},
        {"config", to_json(config)},
        {"seeds", {{"covariates", config.seeds.covariates}, {"deviates", config.seeds.deviates}, {"policy", config.seeds.policy}}},
        {"quantiles", quantiles},
        {"jobs", args.jobs},
        {"wall_time_seconds", wall},
        {"failed_runs", failures},
        {"files", {"results.csv", "summary.csv", "table.csv"}}};
    write_file(out / "manifest.json", [&](std::ostream& o) { o << manifest.dump(2) << '\n'; });
    if (!args.quiet) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.1f", wall);
      std::cerr << "wrote " << out.string() << " in " << buf << " s\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

int report(const std::string& results_path, const std::string& quantile_text, const std::string& out_path) {
  ResultTable table;
  std::vector<double> quantiles = kDefaultQuantiles;
  try {
    if (!quantile_text.empty()) quantiles = parse_quantiles(quantile_text);
    std::ifstream in(results_path, std::ios::binary);
    if (!in) throw InputError("cannot open results file '" + results_path + "'");
    table = read_results_csv(in);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  try {
    const auto rows = summarize(table, quantiles);
    if (out_path.empty()) {
      write_summary_csv(std::cout, rows, quantiles);
    } else {
      write_file(out_path, [&](std::ostream& o) { write_summary_csv(o, rows, quantiles); });
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

httplib::Server* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

int serve(const std::string& state_dir, const std::string& bind) {
  const auto colon = bind.rfind(':');
  int port = -1;
  if (colon != std::string::npos && colon > 0) {
    try {
      std::size_t used = 0;
      port = std::stoi(bind.substr(colon + 1), &used);
      if (used != bind.size() - colon - 1) port = -1;
    } catch (const std::exception&) {
      port = -1;
    }
  }
  if (port < 0 || port > 65535) {
    std::cerr << "error: invalid bind address '" << bind << "', expected host:port\n";
    return kExitRuntime;
  }
  const std::string host = bind.substr(0, colon);

  try {
    TrialRegistry registry(state_dir);
    httplib::Server server;
    mount_routes(server, registry);
    // SO_REUSEADDR only: with SO_REUSEPORT a second server could share a busy port
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
    });
    if (!server.bind_to_port(host, port)) {
      std::cerr << "error: cannot bind " << bind << " (address invalid or port in use)\n";
      return kExitRuntime;
    }
    g_server = &server;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    std::cerr << "listening on " << bind << ", " << registry.ids().size() << " trial(s) recovered from "
              << state_dir << '\n';
    server.listen_after_bind();
    g_server = nullptr;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential optimal designs for logistic models with binary treatment"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate_cmd = app.add_subcommand("simulate", "Run a simulation study");
  simulate_cmd->add_option("--config", sim.config, "Study config (JSON)")->required();
  simulate_cmd->add_option("--out", sim.out, "Output directory")->capture_default_str();
  simulate_cmd->add_option("--jobs", sim.jobs, "Parallel replications (0 = all cores)")->capture_default_str();
  simulate_cmd->add_option("--seed-covariates", sim.seed_covariates, "Override the covariate seed");
  simulate_cmd->add_option("--seed-deviates", sim.seed_deviates, "Override the response deviate seed");
  simulate_cmd->add_option("--seed-policy", sim.seed_policy, "Override the allocation seed");
  simulate_cmd->add_option("--quantiles", sim.quantiles, "Summary quantile levels, e.g. 0.1,0.5,0.9");
  simulate_cmd->add_flag("-q,--quiet", sim.quiet, "No progress messages");

  std::string results_path, report_quantiles, report_out;
  auto* report_cmd = app.add_subcommand("report", "Summarize a results file");
  report_cmd->add_option("results", results_path, "results.csv from simulate")->required();
  report_cmd->add_option("--quantiles", report_quantiles, "Quantile levels, e.g. 0.1,0.5,0.9");
  report_cmd->add_option("--out", report_out, "Summary file (default: stdout)");

  std::string state_dir = "state", bind = "127.0.0.1:8080";
  auto* serve_cmd = app.add_subcommand("serve", "Serve the live trial API");
  serve_cmd->add_option("--state-dir", state_dir, "Directory of trial event logs")->capture_default_str();
  serve_cmd->add_option("--bind", bind, "host:port")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitInput;
  }

  if (*simulate_cmd) return simulate(sim);
  if (*report_cmd) return report(results_path, report_quantiles, report_out);
  return serve(state_dir, bind);
}
