#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "seqdesign/errors.hpp"
#include "seqdesign/study_io.hpp"

using namespace seqdesign;
using namespace testing_support;
using nlohmann::json;

namespace {

json small_study() {
  return json::parse(R"({
    "n": 24, "n0": 6, "replications": 4,
    "true_beta": [0, 1, 1],
    "covariate_model": {"kind": "static", "p": [0.5]},
    "policies": [
      {"kind": "myopic"},
      {"kind": "nonmyopic", "horizon": 0, "dist": "correct"},
      {"kind": "nonmyopic", "horizon": 1, "dist": "empirical"},
      {"kind": "pseudo", "trajectories": 5, "dist": "correct"}
    ],
    "seeds": {"covariates": 11, "deviates": 12, "policy": 13}
  })");
}

std::string results_text(const StudyConfig& config, const StudyResult& result) {
  std::ostringstream out;
  write_results_csv(out, result_table(config, result));
  return out.str();
}

std::vector<std::string> diagnostics_of(const json& j) {
  try {
    study_config_from_json(j);
  } catch (const ConfigError& e) {
    return e.diagnostics();
  }
  return {};
}

bool mentions(const std::vector<std::string>& diags, const std::string& field) {
  for (const auto& d : diags)
    if (d.rfind(field, 0) == 0) return true;
  return false;
}

}  // namespace

TEST_CASE("type 7 quantiles") {
  CHECK(quantile({1, 2, 3, 4}, 0.1) == doctest::Approx(1.3));
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({4, 1, 3, 2}, 0.9) == doctest::Approx(3.7));
  CHECK(quantile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.4) == doctest::Approx(4.6));
  CHECK(quantile({7}, 0.3) == 7);
  CHECK(quantile({1, 2}, 0.0) == 1);
  CHECK(quantile({1, 2}, 1.0) == 2);
  CHECK(quantile({1, std::nan(""), 3}, 0.5) == 2);
  CHECK(std::isnan(quantile({}, 0.5)));
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(quantile({1, 2, inf}, 0.5) == 2);
  CHECK(quantile({1, 2, inf}, 0.75) == inf);
  CHECK(quantile({1, inf, inf}, 0.5) == inf);
}

TEST_CASE("responses are one iff the deviate is below the success probability") {
  const Vector beta = (Vector(3) << 0, 1, 1).finished();
  const Vector x = (Vector(3) << 1, 1, -1).finished();  // pi = 0.5
  CHECK(respond(x, beta, 0.49) == 1);
  CHECK(respond(x, beta, 0.51) == 0);
  const auto u = generate_deviates(1000, 5);
  CHECK(u == generate_deviates(1000, 5));
  for (double v : u) CHECK((v > 0 && v < 1));
}

TEST_CASE("policies in a replication share covariates, deviates and initial design") {
  const StudyConfig config = study_config_from_json(small_study());
  const ReplicationRecord rec = run_replication(config, 2);
  CHECK(rec.covariates.size() == 24);
  CHECK(rec.deviates.size() == 24);
  REQUIRE(rec.policies.size() == 4);
  for (const auto& trace : rec.policies) {
    CHECK_FALSE(trace.failed);
    CHECK(std::equal(rec.initial_treatments.begin(), rec.initial_treatments.end(), trace.treatments.begin()));
    CHECK(trace.psi.size() == 19);
    for (std::size_t j = 0; j < 24; ++j) {
      const Vector x = build_row(rec.covariates[j], trace.treatments[j], config.spec);
      CHECK(trace.responses[j] == respond(x, config.true_beta, rec.deviates[j]));
    }
    // psi is evaluated at the true coefficients
    const Matrix X = build_design(rec.covariates, trace.treatments, config.spec);
    CHECK(trace.psi.back() == objective(X, config.true_beta, config.criterion));
  }
  // the horizon-zero lookahead draws only its coin, so it replays the myopic run
  CHECK(rec.policies[1].treatments == rec.policies[0].treatments);
  for (double e : rec.policies[1].efficiency) CHECK(e == 1.0);
  for (double e : rec.policies[0].efficiency) CHECK(e == 1.0);
}

TEST_CASE("replications differ from each other and repeat exactly") {
  const StudyConfig config = study_config_from_json(small_study());
  const auto a = run_replication(config, 1);
  const auto b = run_replication(config, 2);
  CHECK(a.covariates != b.covariates);
  const auto again = run_replication(config, 1);
  CHECK(again.policies[3].treatments == a.policies[3].treatments);
  CHECK(again.deviates == a.deviates);
}

TEST_CASE("parallel study equals the serial reference byte for byte") {
  const StudyConfig config = study_config_from_json(small_study());
  const std::string serial = results_text(config, run_study_serial(config));
  CHECK(results_text(config, run_study(config, 1)) == serial);
  CHECK(results_text(config, run_study(config, 3)) == serial);
  CHECK(results_text(config, run_study(config, 0)) == serial);
}

TEST_CASE("results file round trip") {
  const StudyConfig config = study_config_from_json(small_study());
  const ResultTable table = result_table(config, run_study(config));
  CHECK(table.rows.size() == 4u * 4u * 19u);
  CHECK(table.beta_names == std::vector<std::string>{"beta_0", "beta_z", "beta_t"});
  std::ostringstream first;
  write_results_csv(first, table);
  CHECK(first.str().rfind("policy,replication,sample_size,psi,eff,beta_0,beta_z,beta_t\n", 0) == 0);
  std::istringstream in(first.str());
  const ResultTable back = read_results_csv(in);
  std::ostringstream second;
  write_results_csv(second, back);
  CHECK(second.str() == first.str());

  std::istringstream bad_header("policy,replication,psi\nmyopic,1,2\n");
  CHECK_THROWS_AS(read_results_csv(bad_header), SchemaError);
  std::istringstream bad_row("policy,replication,sample_size,psi,eff,beta_0\nmyopic,1,10,abc,1,0\n");
  CHECK_THROWS_AS(read_results_csv(bad_row), SchemaError);
  std::istringstream short_row("policy,replication,sample_size,psi,eff,beta_0\nmyopic,1,10\n");
  CHECK_THROWS_AS(read_results_csv(short_row), SchemaError);
}

TEST_CASE("summaries and the efficiency table") {
  ResultTable table;
  table.beta_names = {"beta_0"};
  for (int r = 1; r <= 5; ++r) {
    table.rows.push_back({"myopic", r, 10, 1.0, 1.0, {0.0}});
    table.rows.push_back({"other", r, 10, 2.0, 0.9 + 0.05 * r, {static_cast<double>(r)}});
  }
  const auto rows = summarize(table, {0.5});
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].policy == "myopic");
  CHECK(rows[3].policy == "other");
  CHECK(rows[4].metric == "eff");
  CHECK(rows[4].values[0] == doctest::Approx(1.05));
  CHECK(rows[5].metric == "beta_0");
  CHECK(rows[5].values[0] == 3.0);
  const auto eff = efficiency_table(table);
  REQUIRE(eff.size() == 1);
  CHECK(eff[0].policy == "other");
  CHECK(eff[0].median == doctest::Approx(1.05));
  CHECK(eff[0].q10 == doctest::Approx(0.97));
  CHECK(eff[0].q90 == doctest::Approx(1.13));
}

TEST_CASE("config errors name the offending fields") {
  json j = small_study();
  j.erase("n0");
  CHECK(mentions(diagnostics_of(j), "n0"));

  j = small_study();
  j["n0"] = 30;
  CHECK(mentions(diagnostics_of(j), "n0"));

  j = small_study();
  j["policies"] = json::array({{{"kind", "pseudo"}, {"trajectories", 5}}});
  CHECK(mentions(diagnostics_of(j), "policies"));

  j = small_study();
  j["policies"].push_back({{"kind", "nonmyopic"}, {"horizon", 5}});
  CHECK(mentions(diagnostics_of(j), "policies[4]"));

  j = small_study();
  j["policies"].push_back({{"kind", "myopic"}});
  CHECK(mentions(diagnostics_of(j), "policies[4]"));

  j = small_study();
  j["true_beta"] = {0, 1};
  CHECK(mentions(diagnostics_of(j), "true_beta"));

  j = small_study();
  j["covariate_model"] = {{"kind", "empirical"}};
  CHECK(mentions(diagnostics_of(j), "covariate_model"));

  j = small_study();
  j.erase("n");
  j["replications"] = 0;
  j["true_beta"] = "x";
  const auto many = diagnostics_of(j);
  CHECK(mentions(many, "n"));
  CHECK(mentions(many, "replications"));
  CHECK(mentions(many, "true_beta"));

  CHECK(diagnostics_of(small_study()).empty());
}

TEST_CASE("config documents round trip and hash stably") {
  const StudyConfig config = study_config_from_json(small_study());
  const StudyConfig back = study_config_from_json(to_json(config));
  CHECK(to_json(back) == to_json(config));
  CHECK(config_hash(back) == config_hash(config));
  StudyConfig other = config;
  other.seeds.policy = 99;
  CHECK(config_hash(other) != config_hash(config));
  CHECK(format_number(0.1) == "0.1");
  for (double v : {1.0 / 3.0, 2.0 / 7.0 * 1e-9, 123456.789012345678})
    CHECK(std::strtod(format_number(v).c_str(), nullptr) == v);
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
}

TEST_CASE("shipped study configs parse") {
  for (const char* name : {"study1.json", "study2.json"}) {
    const StudyConfig c = load_study_config(std::string(SDESIGN_SOURCE_DIR) + "/configs/" + name);
    CHECK(c.n == 100);
    CHECK(c.n0 == 10);
    CHECK(c.replications == 20);
    CHECK(c.policies[c.baseline_index()].label() == "myopic");
  }
  CHECK_THROWS_AS(load_study_config("/nonexistent/config.json"), InputError);
}
