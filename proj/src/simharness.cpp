#include "seqdesign/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "seqdesign/errors.hpp"
#include "seqdesign/rng.hpp"

namespace seqdesign {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

PolicyTrace run_policy(const StudyConfig& config, const PolicySpec& policy,
                       std::span<const Covariates> Z, std::span<const double> u,
                       std::span<const int> initial, std::uint64_t policy_seed) {
  PolicyTrace trace;
  trace.policy = policy.label();

  SequentialConfig seq;
  seq.n = config.n;
  seq.n0 = config.n0;
  seq.spec = config.spec;
  seq.prior = config.prior;
  seq.criterion = config.criterion;
  seq.fit = config.fit;
  seq.random_starts = config.random_starts;
  seq.seed = policy_seed;
  seq.mode = config.mode;

  const Vector& truth = config.true_beta;
  auto responder = [&](const Vector& x, double deviate) { return respond(x, truth, deviate); };
  auto allocator = [&](TrialState& state, Rng& rng) {
    return allocate(policy, state, config.criterion, config.covariate_model, config.n, rng,
                    config.mode);
  };
  auto observer = [&](const TrialState& state) {
    const Matrix X = state.design(state.num_responses());
    trace.psi.push_back(objective(X, truth, config.criterion));
    trace.beta.push_back(state.beta_hat());
  };

  try {
    const TrialState final_state =
        run_sequential(Z, u, responder, seq, allocator, initial, observer);
    trace.history = final_state.history();
    trace.treatments = final_state.treatments();
    trace.responses = final_state.responses();
  } catch (const std::exception& e) {
    trace.failed = true;
    trace.error = e.what();
  }
  const std::size_t length = config.n - config.n0 + 1;
  trace.psi.resize(length, kNaN);
  trace.beta.resize(length, Vector::Constant(static_cast<Eigen::Index>(config.spec.q()), kNaN));
  return trace;
}

}  // namespace

std::size_t StudyConfig::baseline_index() const {
  for (std::size_t k = 0; k < policies.size(); ++k)
    if (policies[k].kind == PolicyKind::Myopic) return k;
  throw ContractError("study needs a myopic policy as the efficiency baseline");
}

std::vector<double> generate_deviates(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> u(n);
  for (auto& v : u) v = rng.uniform();
  return u;
}

int respond(const Vector& x, const Vector& true_beta, double u) {
  return u < response_prob(x, true_beta) ? 1 : 0;
}

ReplicationRecord run_replication(const StudyConfig& config, int replication) {
  if (config.n0 == 0 || config.n0 >= config.n) throw ContractError("study needs 0 < n0 < n");
  if (static_cast<std::size_t>(config.true_beta.size()) != config.spec.q())
    throw StructuralError("true beta has the wrong length");
  const std::size_t baseline = config.baseline_index();
  const auto rep = static_cast<std::uint64_t>(replication);

  ReplicationRecord record;
  record.replication = replication;

  Rng covariate_rng(derive_seed(config.seeds.covariates, {rep}));
  record.covariates.reserve(config.n);
  for (std::size_t j = 1; j <= config.n; ++j)
    record.covariates.push_back(config.covariate_model.sample(j, covariate_rng));
  record.deviates = generate_deviates(config.n, derive_seed(config.seeds.deviates, {rep}));

  const std::uint64_t policy_seed = derive_seed(config.seeds.policy, {rep});
  Rng design_rng = initial_design_rng(policy_seed);
  record.initial_treatments =
      initial_design(std::span(record.covariates).first(config.n0), config.spec, config.criterion,
                     config.random_starts, design_rng);

  for (const auto& policy : config.policies)
    record.policies.push_back(run_policy(config, policy, record.covariates, record.deviates,
                                         record.initial_treatments, policy_seed));

  const auto& reference = record.policies[baseline].psi;
  const int m = config.criterion.m();
  for (auto& trace : record.policies) {
    trace.efficiency.resize(trace.psi.size(), kNaN);
    for (std::size_t k = 0; k < trace.psi.size(); ++k) {
      const double a = reference[k];
      const double b = trace.psi[k];
      if (std::isfinite(a) && std::isfinite(b) && a > 0.0 && b > 0.0)
        trace.efficiency[k] = relative_efficiency(a, b, m);
    }
  }
  return record;
}

StudyResult run_study(const StudyConfig& config, int jobs) {
  if (config.replications < 1) throw ContractError("study needs at least one replication");
  (void)config.baseline_index();
  StudyResult result;
  result.replications.resize(static_cast<std::size_t>(config.replications));
  std::exception_ptr failure;

#ifdef _OPENMP
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
#endif
  for (int r = 0; r < config.replications; ++r) {
    try {
      result.replications[static_cast<std::size_t>(r)] = run_replication(config, r + 1);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  (void)jobs;
  if (failure) std::rethrow_exception(failure);
  return result;
}

StudyResult run_study_serial(const StudyConfig& config) {
  if (config.replications < 1) throw ContractError("study needs at least one replication");
  StudyResult result;
  for (int r = 1; r <= config.replications; ++r)
    result.replications.push_back(run_replication(config, r));
  return result;
}

ResultTable result_table(const StudyConfig& config, const StudyResult& result) {
  ResultTable table;
  for (std::size_t j = 0; j < config.spec.q(); ++j)
    table.beta_names.push_back(config.spec.coefficient_name(j));
  for (const auto& record : result.replications) {
    for (const auto& trace : record.policies) {
      for (std::size_t k = 0; k < trace.psi.size(); ++k) {
        ResultRow row;
        row.policy = trace.policy;
        row.replication = record.replication;
        row.sample_size = config.n0 + k;
        row.psi = trace.psi[k];
        row.efficiency = k < trace.efficiency.size() ? trace.efficiency[k] : kNaN;
        row.beta.assign(trace.beta[k].data(), trace.beta[k].data() + trace.beta[k].size());
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

double quantile(std::vector<double> values, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile level must lie in [0,1]");
  std::erase_if(values, [](double v) { return std::isnan(v); });
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  // frac == 0 must not touch values[hi]: 0 * inf is NaN
  if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
  if (std::isinf(values[hi])) return values[hi];
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<SummaryRow> summarize(const ResultTable& table, const std::vector<double>& quantiles) {
  std::vector<std::string> policy_order;
  // (policy, sample size) -> metric samples: psi, eff, beta...
  std::map<std::pair<std::string, std::size_t>, std::vector<std::vector<double>>> samples;
  const std::size_t metrics = 2 + table.beta_names.size();
  for (const auto& row : table.rows) {
    if (std::find(policy_order.begin(), policy_order.end(), row.policy) == policy_order.end())
      policy_order.push_back(row.policy);
    auto& bucket = samples[{row.policy, row.sample_size}];
    bucket.resize(metrics);
    bucket[0].push_back(row.psi);
    bucket[1].push_back(row.efficiency);
    for (std::size_t j = 0; j < table.beta_names.size(); ++j)
      bucket[2 + j].push_back(j < row.beta.size() ? row.beta[j] : kNaN);
  }

  std::vector<std::string> metric_names{"psi", "eff"};
  metric_names.insert(metric_names.end(), table.beta_names.begin(), table.beta_names.end());

  std::vector<SummaryRow> out;
  for (const auto& policy : policy_order) {
    for (auto it = samples.lower_bound({policy, 0});
         it != samples.end() && it->first.first == policy; ++it) {
      for (std::size_t metric = 0; metric < metrics; ++metric) {
        SummaryRow row{policy, it->first.second, metric_names[metric], {}};
        for (double p : quantiles) row.values.push_back(quantile(it->second[metric], p));
        out.push_back(std::move(row));
      }
    }
  }
  return out;
}

std::vector<EfficiencyTableRow> efficiency_table(const ResultTable& table,
                                                 const std::string& baseline) {
  std::size_t last = 0;
  for (const auto& row : table.rows) last = std::max(last, row.sample_size);
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> end_eff;
  for (const auto& row : table.rows) {
    if (row.policy == baseline || row.sample_size != last) continue;
    if (!end_eff.contains(row.policy)) order.push_back(row.policy);
    end_eff[row.policy].push_back(row.efficiency);
  }
  std::vector<EfficiencyTableRow> out;
  for (const auto& policy : order) {
    const auto& v = end_eff[policy];
    out.push_back({policy, quantile(v, 0.5), quantile(v, 0.4), quantile(v, 0.6), quantile(v, 0.1),
                   quantile(v, 0.9)});
  }
  return out;
}

}  // namespace seqdesign
