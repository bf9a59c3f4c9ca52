#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqdesign/simharness.hpp"

namespace seqdesign {

/// Invalid study or trial configuration; one diagnostic per offending field,
/// each prefixed with the field path.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

/// Results file does not match the expected columns.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Model, prior and criterion of a study or trial document, each optional:
/// main effects, default Cauchy scales and the treatment-effect criterion.
/// Problems are appended to `diags` rather than thrown.
struct DesignBlock {
  ModelSpec spec;
  CauchyPrior prior;
  Criterion criterion;
};
DesignBlock design_block_from_json(const nlohmann::json& j,
                                   std::optional<std::size_t> num_covariates,
                                   std::vector<std::string>& diags);

Criterion criterion_from_json(const nlohmann::json& j, const ModelSpec& spec);
nlohmann::json to_json(const Criterion& criterion);
SamplingMode sampling_mode_from_json(const nlohmann::json& j);
const char* sampling_mode_name(SamplingMode mode);

/// Parses a study document. Required keys: n, n0, true_beta,
/// covariate_model, policies. Everything else has defaults.
StudyConfig study_config_from_json(const nlohmann::json& j);
StudyConfig load_study_config(const std::string& path);
nlohmann::json to_json(const StudyConfig& config);

/// FNV-1a over the canonical (sorted-key) dump of the config, as hex.
std::string config_hash(const StudyConfig& config);

/// Header: policy,replication,sample_size,psi,eff,<beta names...>
void write_results_csv(std::ostream& out, const ResultTable& table);
ResultTable read_results_csv(std::istream& in);

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows,
                       const std::vector<double>& quantiles);
void write_efficiency_table_csv(std::ostream& out, const std::vector<EfficiencyTableRow>& rows);

/// At least 12 significant digits, more when needed to read back the same
/// double; inf and nan spelled out.
std::string format_number(double v);

}  // namespace seqdesign
