#pragma once

#include <atomic>
#include <cstdint>
#include <functional>

#include "seqdesign/covariates.hpp"
#include "seqdesign/policy_myopic.hpp"

namespace seqdesign {

/// Instrumentation for lookahead policies.
struct EvalCounter {
  std::atomic<std::uint64_t> objective_evaluations{0};
  std::atomic<std::uint64_t> leaf_evaluations{0};
};

struct NonmyopicConfig {
  int horizon = 1;
  CovariateModel covariate_model = CovariateModel::fixed({0.5});
  /// Total trial size n; the horizon shrinks to n - i near the end.
  std::size_t n_total = 100;
  int max_horizon = 4;
  /// Refit the estimate on hypothesized responses inside the tree.
  bool refit_in_tree = false;
};

/// argmin over t of the candidate objective for the next subject; ties
/// (including both infinite) go to -1.
int optimal_future_treatment(const TrialState& state_plus, const Covariates& z_next,
                             const Vector& beta, const Criterion& criterion);

/// (1 - pi) c(0) + pi c(1), pi the response probability of the pending
/// subject under treatment t_i at beta. Zero-weight branches are dropped so
/// an infinite continuation cannot turn into NaN.
double expect_over_response(const TrialState& state, int t_i,
                            const std::function<double(int)>& continuation, const Vector& beta);

/// Expected objective after i + N subjects when the subject with covariates
/// z_i (subject i = state.num_allocated() + 1) receives t_i. N = 0 is the
/// candidate objective itself. For N > 0:
///
///   psi_N(t_i) = sum_z P(z_{i+1} = z) E_{y_i}[ psi_{N-1}(t*_{i+1}(z, t_i, y_i)) ]
///
/// with t* the myopic argmin for the next subject and beta held fixed unless
/// config.refit_in_tree is set. The horizon is truncated to n_total - i.
double psi_horizon(const TrialState& state, const Covariates& z_i, int t_i, int horizon,
                   const NonmyopicConfig& config, const Vector& beta,
                   const Criterion& criterion, EvalCounter* counter = nullptr);

/// Biased coin (or argmin) on psi_N of both candidates for the pending
/// subject. An empirical covariate model in `config` is refreshed from the
/// covariates of subjects 1..i before evaluation.
AllocationDecision allocate_nonmyopic(TrialState& state, const NonmyopicConfig& config,
                                      const Criterion& criterion, Rng& rng,
                                      SamplingMode mode = SamplingMode::BiasedCoin,
                                      EvalCounter* counter = nullptr);

}  // namespace seqdesign
