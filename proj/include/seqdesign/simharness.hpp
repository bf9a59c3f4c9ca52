#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqdesign/covariates.hpp"
#include "seqdesign/criteria.hpp"
#include "seqdesign/policy.hpp"
#include "seqdesign/trial.hpp"

namespace seqdesign {

struct StudySeeds {
  std::uint64_t covariates = 1;
  std::uint64_t deviates = 2;
  std::uint64_t policy = 3;
};

/// Full description of a comparative simulation study.
struct StudyConfig {
  std::size_t n = 100;
  std::size_t n0 = 10;
  int replications = 20;
  ModelSpec spec = ModelSpec::main_effects(1);
  CauchyPrior prior = CauchyPrior::defaults(ModelSpec::main_effects(1));
  Criterion criterion = Criterion::treatment_effect(ModelSpec::main_effects(1));
  Vector true_beta = Vector::Zero(3);
  CovariateModel covariate_model = CovariateModel::fixed({0.5});
  std::vector<PolicySpec> policies{PolicySpec::myopic()};
  StudySeeds seeds{};
  int random_starts = 10;
  FitOptions fit{};
  SamplingMode mode = SamplingMode::BiasedCoin;

  /// Index of the efficiency baseline (the first myopic policy).
  std::size_t baseline_index() const;
};

/// One policy's run within a replication. Traces are indexed by sample size
/// n0..n (length n - n0 + 1).
struct PolicyTrace {
  std::string policy;
  bool failed = false;
  std::string error;
  std::vector<double> psi;         // criterion at the true beta
  std::vector<Vector> beta;        // estimate after each sample size
  std::vector<double> efficiency;  // vs the baseline policy
  std::vector<AllocationEvent> history;
  std::vector<int> treatments;
  std::vector<int> responses;
};

struct ReplicationRecord {
  int replication = 0;  // 1-based
  std::vector<Covariates> covariates;
  std::vector<double> deviates;
  std::vector<int> initial_treatments;
  std::vector<PolicyTrace> policies;
};

struct StudyResult {
  std::vector<ReplicationRecord> replications;
};

/// n uniforms in (0,1) from a stream seeded by `seed`.
std::vector<double> generate_deviates(std::size_t n, std::uint64_t seed);

/// y = 1 iff u < pi(x, true_beta), so that P(y = 1) = pi.
int respond(const Vector& x, const Vector& true_beta, double u);

/// One replication: a single covariate realization, deviate vector and
/// initial design shared by every policy, and every policy's allocation
/// stream started from the same seed; each policy run to n subjects; the
/// criterion evaluated at the true beta for every sample size in [n0, n].
/// A failing policy is recorded as failed without aborting the others.
ReplicationRecord run_replication(const StudyConfig& config, int replication);

/// Replications 1..R in parallel (OpenMP, `jobs` threads; 0 = default).
/// Results are placed by replication index, so the output does not depend on
/// scheduling.
StudyResult run_study(const StudyConfig& config, int jobs = 0);

/// Serial reference for run_study.
StudyResult run_study_serial(const StudyConfig& config);

/// Flat per-(policy, replication, sample size) record, the unit of the
/// results file.
struct ResultRow {
  std::string policy;
  int replication = 0;
  std::size_t sample_size = 0;
  double psi = 0.0;
  double efficiency = 0.0;
  std::vector<double> beta;
};

struct ResultTable {
  std::vector<std::string> beta_names;
  std::vector<ResultRow> rows;
};

ResultTable result_table(const StudyConfig& config, const StudyResult& result);

/// Type-7 quantile (linear interpolation between order statistics). NaNs are
/// ignored; an empty sample gives NaN.
double quantile(std::vector<double> values, double p);

inline const std::vector<double> kDefaultQuantiles{0.1, 0.4, 0.5, 0.6, 0.9};

struct SummaryRow {
  std::string policy;
  std::size_t sample_size = 0;
  std::string metric;  // "psi", "eff" or a beta name
  std::vector<double> values;
};

/// Quantiles of psi, efficiency and every coefficient per (policy, sample
/// size), in first-seen policy order and increasing sample size.
std::vector<SummaryRow> summarize(const ResultTable& table,
                                  const std::vector<double>& quantiles = kDefaultQuantiles);

/// End-of-trial efficiency distribution per non-baseline policy, laid out
/// as median, 40-60% interval, 10-90% interval.
struct EfficiencyTableRow {
  std::string policy;
  double median = 0.0;
  double q40 = 0.0, q60 = 0.0;
  double q10 = 0.0, q90 = 0.0;
};

std::vector<EfficiencyTableRow> efficiency_table(const ResultTable& table,
                                                 const std::string& baseline = "myopic");

}  // namespace seqdesign
