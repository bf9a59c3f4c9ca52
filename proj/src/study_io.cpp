#include "seqdesign/study_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "seqdesign/errors.hpp"

namespace seqdesign {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (k) out += sep;
    out += parts[k];
  }
  return out;
}

// Runs `parse`, turning any exception into a diagnostic for `field`.
template <typename F>
void field(std::vector<std::string>& diags, const std::string& name, F&& parse) {
  try {
    parse();
  } catch (const ConfigError& e) {
    for (const auto& d : e.diagnostics()) diags.push_back(name + (d.front() == '[' ? "" : ".") + d);
  } catch (const json::out_of_range&) {
    diags.push_back(name + ": missing required key");
  } catch (const json::type_error& e) {
    diags.push_back(name + ": wrong type (" + std::string(e.what()) + ")");
  } catch (const std::exception& e) {
    diags.push_back(name + ": " + e.what());
  }
}

void require(std::vector<std::string>& diags, const json& j, const char* key) {
  if (!j.contains(key)) diags.push_back(std::string(key) + ": missing required field");
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : std::runtime_error("invalid configuration: " + join(diagnostics, "; ")),
      diagnostics_(std::move(diagnostics)) {}

DesignBlock design_block_from_json(const json& j, std::optional<std::size_t> num_covariates,
                                   std::vector<std::string>& diags) {
  DesignBlock b{ModelSpec::main_effects(num_covariates.value_or(1)), CauchyPrior({}), Criterion::d_optimal(1)};
  field(diags, "model", [&] {
    if (j.contains("model")) b.spec = model_spec_from_json(j.at("model"));
    if (num_covariates && b.spec.num_covariates() != *num_covariates)
      throw StructuralError("num_covariates disagrees with covariate_model");
  });
  b.prior = CauchyPrior::defaults(b.spec);
  b.criterion = Criterion::treatment_effect(b.spec);
  if (j.contains("prior")) field(diags, "prior", [&] {
      const auto& p = j.at("prior");
      if (p.is_array()) {
        b.prior = prior_from_json(p);
        if (b.prior.size() != b.spec.q()) throw StructuralError("needs one component per model term");
      } else {
        b.prior = CauchyPrior::defaults(b.spec, p.value("intercept_scale", 10.0), p.value("slope_scale", 2.5));
      }
    });
  if (j.contains("criterion")) field(diags, "criterion", [&] {
      b.criterion = criterion_from_json(j.at("criterion"), b.spec);
    });
  return b;
}

Criterion criterion_from_json(const json& j, const ModelSpec& spec) {
  const auto kind = j.value("kind", std::string("DA"));
  if (kind == "D") return Criterion::d_optimal(spec.q());
  if (kind != "DA") throw DomainError("kind must be 'D' or 'DA'");
  if (!j.contains("contrasts")) return Criterion::treatment_effect(spec);
  const auto cols = j.at("contrasts").get<std::vector<std::vector<double>>>();
  Matrix A(static_cast<Eigen::Index>(spec.q()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k].size() != spec.q()) throw StructuralError("each contrast needs q entries");
    for (std::size_t r = 0; r < cols[k].size(); ++r)
      A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = cols[k][r];
  }
  return Criterion::da_optimal(std::move(A));
}

json to_json(const Criterion& criterion) {
  if (criterion.kind() == CriterionKind::D) return {{"kind", "D"}};
  json cols = json::array();
  const Matrix& A = criterion.contrasts();
  for (Eigen::Index k = 0; k < A.cols(); ++k) {
    json col = json::array();
    for (Eigen::Index r = 0; r < A.rows(); ++r) col.push_back(A(r, k));
    cols.push_back(col);
  }
  return {{"kind", "DA"}, {"contrasts", cols}};
}

SamplingMode sampling_mode_from_json(const json& j) {
  const auto s = j.get<std::string>();
  if (s == "biased_coin") return SamplingMode::BiasedCoin;
  if (s == "deterministic") return SamplingMode::Deterministic;
  throw DomainError("must be 'biased_coin' or 'deterministic'");
}

const char* sampling_mode_name(SamplingMode mode) {
  return mode == SamplingMode::BiasedCoin ? "biased_coin" : "deterministic";
}

StudyConfig study_config_from_json(const json& j) {
  std::vector<std::string> diags;
  if (!j.is_object()) throw ConfigError({"<root>: expected an object"});
  for (const char* key : {"n", "n0", "true_beta", "covariate_model", "policies"}) require(diags, j, key);

  StudyConfig c;
  bool have_covariates = false;
  if (j.contains("n")) field(diags, "n", [&] {
      const auto v = j.at("n").get<long long>();
      if (v < 2) throw DomainError("must be at least 2");
      c.n = static_cast<std::size_t>(v);
    });
  if (j.contains("n0")) field(diags, "n0", [&] {
      const auto v = j.at("n0").get<long long>();
      if (v < 1) throw DomainError("must be at least 1");
      c.n0 = static_cast<std::size_t>(v);
    });
  if (j.contains("n") && j.contains("n0") && c.n0 >= c.n && diags.empty())
    diags.push_back("n0: must be smaller than n");
  if (j.contains("replications")) field(diags, "replications", [&] {
      const auto v = j.at("replications").get<int>();
      if (v < 1) throw DomainError("must be at least 1");
      c.replications = v;
    });
  if (j.contains("covariate_model")) field(diags, "covariate_model", [&] {
      c.covariate_model = CovariateModel::from_json(j.at("covariate_model"));
      if (c.covariate_model.kind() == CovariateKind::Empirical)
        throw DomainError("the data-generating covariate model must be static or dynamic");
      have_covariates = true;
    });

  if (have_covariates || !j.contains("covariate_model")) {
    DesignBlock block = design_block_from_json(
        j, have_covariates ? std::optional(c.covariate_model.num_covariates()) : std::nullopt, diags);
    c.spec = std::move(block.spec);
    c.prior = std::move(block.prior);
    c.criterion = std::move(block.criterion);
  }
  if (j.contains("true_beta")) field(diags, "true_beta", [&] {
      const auto v = j.at("true_beta").get<std::vector<double>>();
      if (v.size() != c.spec.q())
        throw StructuralError("expected " + std::to_string(c.spec.q()) + " coefficients, got " +
                              std::to_string(v.size()));
      c.true_beta = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    });
  if (j.contains("policies")) field(diags, "policies", [&] {
      const auto& arr = j.at("policies");
      if (!arr.is_array() || arr.empty()) throw DomainError("expected a non-empty list");
      c.policies.clear();
      std::set<std::string> labels;
      std::vector<std::string> sub;
      for (std::size_t k = 0; k < arr.size(); ++k) {
        field(sub, "[" + std::to_string(k) + "]", [&] {
          PolicySpec p = PolicySpec::from_json(arr[k]);
          if (p.kind == PolicyKind::Nonmyopic && p.horizon > NonmyopicConfig{}.max_horizon)
            throw DomainError("horizon exceeds the cap of " + std::to_string(NonmyopicConfig{}.max_horizon));
          if (!labels.insert(p.label()).second) throw DomainError("duplicate policy name '" + p.label() + "'");
          c.policies.push_back(std::move(p));
        });
      }
      if (!sub.empty()) throw ConfigError(sub);
      (void)c.baseline_index();
    });
  if (j.contains("seeds")) field(diags, "seeds", [&] {
      const auto& s = j.at("seeds");
      c.seeds.covariates = s.value("covariates", c.seeds.covariates);
      c.seeds.deviates = s.value("deviates", c.seeds.deviates);
      c.seeds.policy = s.value("policy", c.seeds.policy);
    });
  if (j.contains("initial_design")) field(diags, "initial_design", [&] {
      c.random_starts = j.at("initial_design").value("random_starts", 10);
      if (c.random_starts < 1) throw DomainError("random_starts must be at least 1");
    });
  if (j.contains("sampling")) field(diags, "sampling", [&] {
      c.mode = sampling_mode_from_json(j.at("sampling"));
    });
  if (j.contains("fit")) field(diags, "fit", [&] {
      const auto& f = j.at("fit");
      c.fit.tol = f.value("tol", c.fit.tol);
      c.fit.max_iter = f.value("max_iter", c.fit.max_iter);
      if (!(c.fit.tol > 0.0) || c.fit.max_iter < 1) throw DomainError("tol and max_iter must be positive");
    });

  if (!diags.empty()) throw ConfigError(std::move(diags));
  return c;
}

StudyConfig load_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("<document>: ") + e.what()});
  }
  return study_config_from_json(j);
}

json to_json(const StudyConfig& c) {
  json policies = json::array();
  for (const auto& p : c.policies) policies.push_back(p.to_json());
  std::vector<double> beta(c.true_beta.data(), c.true_beta.data() + c.true_beta.size());
  return {{"n", c.n},
          {"n0", c.n0},
          {"replications", c.replications},
          {"model", to_json(c.spec)},
          {"prior", to_json(c.prior)},
          {"criterion", to_json(c.criterion)},
          {"true_beta", beta},
          {"covariate_model", c.covariate_model.to_json()},
          {"policies", policies},
          {"seeds", {{"covariates", c.seeds.covariates}, {"deviates", c.seeds.deviates}, {"policy", c.seeds.policy}}},
          {"initial_design", {{"random_starts", c.random_starts}}},
          {"sampling", sampling_mode_name(c.mode)},
          {"fit", {{"tol", c.fit.tol}, {"max_iter", c.fit.max_iter}}}};
}

std::string config_hash(const StudyConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int digits = 12; digits < 17; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_results_csv(std::ostream& out, const ResultTable& table) {
  out << "policy,replication,sample_size,psi,eff";
  for (const auto& name : table.beta_names) out << ',' << name;
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.policy << ',' << row.replication << ',' << row.sample_size << ','
        << format_number(row.psi) << ',' << format_number(row.efficiency);
    for (double b : row.beta) out << ',' << format_number(b);
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, std::size_t line_no) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw SchemaError("line " + std::to_string(line_no) + ": '" + s + "' is not a number");
  return v;
}

long long parse_integer(const std::string& s, std::size_t line_no) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || v < 0)
    throw SchemaError("line " + std::to_string(line_no) + ": '" + s + "' is not a non-negative integer");
  return v;
}

}  // namespace

ResultTable read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("results file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  const std::vector<std::string> fixed{"policy", "replication", "sample_size", "psi", "eff"};
  if (header.size() < fixed.size() + 1 ||
      !std::equal(fixed.begin(), fixed.end(), header.begin()))
    throw SchemaError("header must start with policy,replication,sample_size,psi,eff followed by beta columns");

  ResultTable table;
  for (std::size_t k = fixed.size(); k < header.size(); ++k) {
    if (header[k].rfind("beta_", 0) != 0)
      throw SchemaError("column '" + header[k] + "' is not a beta_ column");
    table.beta_names.push_back(header[k]);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
    ResultRow row;
    row.policy = cells[0];
    if (row.policy.empty()) throw SchemaError("line " + std::to_string(line_no) + ": empty policy");
    row.replication = static_cast<int>(parse_integer(cells[1], line_no));
    row.sample_size = static_cast<std::size_t>(parse_integer(cells[2], line_no));
    row.psi = parse_double(cells[3], line_no);
    row.efficiency = parse_double(cells[4], line_no);
    for (std::size_t k = fixed.size(); k < cells.size(); ++k) row.beta.push_back(parse_double(cells[k], line_no));
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows,
                       const std::vector<double>& quantiles) {
  out << "policy,sample_size,metric";
  for (double p : quantiles) out << ",q" << format_number(p * 100.0);
  out << '\n';
  for (const auto& row : rows) {
    out << row.policy << ',' << row.sample_size << ',' << row.metric;
    for (double v : row.values) out << ',' << format_number(v);
    out << '\n';
  }
}

void write_efficiency_table_csv(std::ostream& out, const std::vector<EfficiencyTableRow>& rows) {
  out << "policy,median,q40,q60,q10,q90\n";
  for (const auto& r : rows)
    out << r.policy << ',' << format_number(r.median) << ',' << format_number(r.q40) << ','
        << format_number(r.q60) << ',' << format_number(r.q10) << ',' << format_number(r.q90) << '\n';
}

}  // namespace seqdesign
