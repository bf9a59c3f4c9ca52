#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "seqdesign/covariates.hpp"
#include "seqdesign/policy_myopic.hpp"
#include "seqdesign/policy_nonmyopic.hpp"
#include "seqdesign/policy_pseudo.hpp"

namespace seqdesign {

enum class PolicyKind { Myopic, Nonmyopic, Pseudo };
enum class CovariateAssumption { Correct, Empirical };

/// A named allocation policy as it appears in study and trial configs.
struct PolicySpec {
  PolicyKind kind = PolicyKind::Myopic;
  int horizon = 0;       // nonmyopic N
  int trajectories = 0;  // pseudo M
  CovariateAssumption dist = CovariateAssumption::Correct;
  std::string name;      // empty -> label()

  static PolicySpec myopic() { return {}; }
  static PolicySpec nonmyopic(int horizon, CovariateAssumption dist) {
    return {PolicyKind::Nonmyopic, horizon, 0, dist, {}};
  }
  static PolicySpec pseudo(int trajectories, CovariateAssumption dist) {
    return {PolicyKind::Pseudo, 0, trajectories, dist, {}};
  }

  /// e.g. "myopic", "nonmyopic_N2_empirical", "pseudo_M100_correct".
  std::string label() const;

  nlohmann::json to_json() const;
  static PolicySpec from_json(const nlohmann::json& j);
};

/// Allocates the pending subject with the given policy. `true_model` is the
/// covariate distribution used under CovariateAssumption::Correct.
AllocationDecision allocate(const PolicySpec& policy, TrialState& state, const Criterion& criterion,
                            const CovariateModel& true_model, std::size_t n_total, Rng& rng,
                            SamplingMode mode = SamplingMode::BiasedCoin);

}  // namespace seqdesign
