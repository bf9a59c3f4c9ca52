#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqdesign/criteria.hpp"
#include "seqdesign/model.hpp"
#include "seqdesign/rng.hpp"

namespace seqdesign {

/// One allocation. Subjects are numbered from 1. Initial-design allocations
/// carry no candidate objectives (NaN) and probability 1 for the chosen arm.
struct AllocationEvent {
  std::size_t subject = 0;
  double psi_minus = 0.0;
  double psi_plus = 0.0;
  double prob_plus = 0.5;
  int treatment = 0;
  bool initial = false;
};

/// Covariates, treatments and responses of the subjects enrolled so far, plus
/// the MAP estimate fitted on every subject that has a response.
///
/// Subjects move through: covariates recorded -> treatment assigned ->
/// response recorded. Only the initial batch may have several subjects
/// awaiting responses at once; responses always arrive in subject order.
class TrialState {
 public:
  TrialState(ModelSpec spec, CauchyPrior prior, FitOptions fit = {});

  const ModelSpec& spec() const { return spec_; }
  const CauchyPrior& prior() const { return prior_; }
  const FitOptions& fit_options() const { return fit_; }

  /// Number of subjects with covariates (i).
  std::size_t size() const { return Z_.size(); }
  std::size_t num_allocated() const { return t_.size(); }
  std::size_t num_responses() const { return y_.size(); }
  bool has_pending_subject() const { return Z_.size() > t_.size(); }
  bool awaiting_response() const { return t_.size() > y_.size(); }

  const std::vector<Covariates>& covariates() const { return Z_; }
  const std::vector<int>& treatments() const { return t_; }
  const std::vector<int>& responses() const { return y_; }
  const std::vector<AllocationEvent>& history() const { return history_; }
  const ParameterEstimate& estimate() const { return estimate_; }
  const Vector& beta_hat() const { return estimate_.beta; }

  /// Covariates of the subject awaiting allocation.
  const Covariates& pending_covariates() const;

  /// Appends a subject awaiting allocation. Every earlier subject must have a
  /// response.
  void record_subject(Covariates z);
  /// Allocates the pending subject.
  void assign_treatment(int treatment, AllocationEvent event);
  /// Appends a block of subjects with treatments already chosen (the initial
  /// design). Requires no pending subject and no outstanding responses.
  void enroll_initial(std::span<const Covariates> Z, std::span<const int> t);
  /// Appends the response of the earliest subject without one and refits the
  /// MAP estimate on all subjects with responses. Throws DomainError if y is
  /// not 0 or 1; the state is unchanged on any error.
  void record_response(int y);

  /// Design rows for the first `count` allocated subjects.
  Matrix design(std::optional<std::size_t> count = std::nullopt) const;
  /// Information matrix of the allocated rows at beta, accumulated in subject
  /// order.
  Matrix information(const Vector& beta) const;

 private:
  ModelSpec spec_;
  CauchyPrior prior_;
  FitOptions fit_;
  std::vector<Covariates> Z_;
  std::vector<int> t_;
  std::vector<int> y_;
  std::vector<AllocationEvent> history_;
  ParameterEstimate estimate_;
};

/// Ridge added to the information matrix while building the initial design.
inline constexpr double kInitialDesignRidge = 1e-6;

/// Objective used by the coordinate exchange: criterion evaluated on
/// X'WX + ridge I at beta = 0.
double regularized_design_objective(std::span<const Covariates> Z, std::span<const int> t,
                                    const ModelSpec& spec, const Criterion& criterion,
                                    double ridge = kInitialDesignRidge);

/// Coordinate exchange over the treatment vector, assuming beta = 0. Each
/// start is a random treatment vector; positions are swept in order, each
/// taking the better of {-1, +1} (the incumbent wins exact ties), until a
/// sweep changes nothing. Returns the best of `random_starts` results.
std::vector<int> initial_design(std::span<const Covariates> Z, const ModelSpec& spec,
                                const Criterion& criterion, int random_starts, Rng& rng);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CauchyPrior& prior);
CauchyPrior prior_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AllocationEvent& event);
AllocationEvent allocation_event_from_json(const nlohmann::json& j);

/// Self-describing document; the estimate is stored for inspection but is
/// recomputed on load.
nlohmann::json to_json(const TrialState& state);
TrialState trial_state_from_json(const nlohmann::json& j);

}  // namespace seqdesign
