#pragma once

#include <cstddef>
#include <vector>

#include "seqdesign/covariates.hpp"
#include "seqdesign/policy_myopic.hpp"
#include "seqdesign/policy_nonmyopic.hpp"

namespace seqdesign {

/// Simulated covariates for subjects i+1..n.
struct Trajectory {
  std::vector<Covariates> z_future;
  /// Treatments chosen by the most recent greedy rollout along this path.
  std::vector<int> rollout_treatments;
};

struct PseudoConfig {
  int trajectories = 10;  // M
  CovariateModel covariate_model = CovariateModel::fixed({0.5});
  std::size_t n_total = 100;
};

/// M independent trajectories for subjects i+1..n; subject j is drawn from
/// the model at index j. Drawn from `rng` in order, trajectory by trajectory,
/// so the draws consumed grow with M * (n - i). Requires i < n.
std::vector<Trajectory> generate_trajectories(const CovariateModel& model, std::size_t i,
                                              std::size_t n, int M, Rng& rng);

/// Assigns t_i to the subject with covariates z_i, then walks the trajectory
/// assigning each subject the myopic argmin (ties to -1) with beta frozen.
/// Returns the objective of the completed pseudo-design. Writes the chosen
/// treatments into `treatments` when given.
double greedy_rollout(const TrialState& state, const Covariates& z_i, int t_i,
                      const Trajectory& trajectory, const Vector& beta,
                      const Criterion& criterion, std::vector<int>* treatments = nullptr,
                      EvalCounter* counter = nullptr);

/// Mean of greedy_rollout over the trajectories. Rollouts run in parallel
/// (OpenMP); the reduction is done in trajectory order so the result is
/// bitwise identical to average_objective_serial.
double average_objective(const TrialState& state, const Covariates& z_i, int t_i,
                         std::span<const Trajectory> trajectories, const Vector& beta,
                         const Criterion& criterion, EvalCounter* counter = nullptr);

/// Serial reference for average_objective.
double average_objective_serial(const TrialState& state, const Covariates& z_i, int t_i,
                                std::span<const Trajectory> trajectories, const Vector& beta,
                                const Criterion& criterion, EvalCounter* counter = nullptr);

/// Pseudo-nonmyopic allocation for the pending subject i. For i < n both
/// candidates are scored by average_objective over one shared set of
/// trajectories; for i = n the candidate objective is used directly. The
/// trajectories are drawn from `rng` first, the coin deviate after them.
AllocationDecision allocate_pseudo(TrialState& state, const PseudoConfig& config,
                                   const Criterion& criterion, Rng& rng,
                                   SamplingMode mode = SamplingMode::BiasedCoin,
                                   EvalCounter* counter = nullptr);

}  // namespace seqdesign
