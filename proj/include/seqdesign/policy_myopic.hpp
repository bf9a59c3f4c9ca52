#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "seqdesign/criteria.hpp"
#include "seqdesign/rng.hpp"
#include "seqdesign/trial.hpp"

namespace seqdesign {

struct AllocationDecision {
  double prob_plus = 0.5;
  double psi_plus = 0.0;
  double psi_minus = 0.0;
  int sampled = 0;
};

enum class SamplingMode {
  BiasedCoin,     // inverse-objective weighted coin
  Deterministic,  // argmin, fair coin on exact ties
};

/// Inverse-objective weights over any number of candidate treatments.
/// +infinity gets weight 0; if every objective is +infinity the choice is
/// uniform. Throws DomainError on negative or NaN objectives.
std::vector<double> allocation_probabilities(std::span<const double> psi);

/// P(t = +1) = psi_plus^-1 / (psi_plus^-1 + psi_minus^-1) with the limits above.
double allocation_probability(double psi_plus, double psi_minus);

/// Turns candidate objectives and a uniform deviate into a decision:
/// +1 iff u < P(+1) (biased coin) or the argmin (deterministic mode).
AllocationDecision decide(double psi_plus, double psi_minus, double u, SamplingMode mode);

/// Evaluates both candidates for the pending subject at the current
/// estimate, samples, and assigns the treatment. The coin deviate is the
/// first draw from `rng`.
AllocationDecision allocate_myopic(TrialState& state, const Criterion& criterion, Rng& rng,
                                   SamplingMode mode = SamplingMode::BiasedCoin);

/// Maps (design row, uniform deviate) to a binary response.
using Responder = std::function<int(const Vector& x, double u)>;
/// Allocates the pending subject of a state.
using Allocator = std::function<AllocationDecision(TrialState& state, Rng& rng)>;
/// Called after every response from the n0-th onward.
using StepObserver = std::function<void(const TrialState& state)>;

struct SequentialConfig {
  std::size_t n = 100;
  std::size_t n0 = 10;
  ModelSpec spec = ModelSpec::main_effects(1);
  CauchyPrior prior = CauchyPrior::defaults(ModelSpec::main_effects(1));
  Criterion criterion = Criterion::treatment_effect(ModelSpec::main_effects(1));
  FitOptions fit{};
  int random_starts = 10;
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::BiasedCoin;
};

/// Per-subject allocation stream: subject i always sees the same generator
/// for a given seed, independent of what other subjects consumed. Used by
/// live trials, which must resume after a restart without replaying draws.
Rng subject_rng(std::uint64_t seed, std::size_t subject_index);
/// Single stream consumed by every allocation of an offline run, in order.
/// Policies that draw only their coin stay in step with each other; policies
/// with extra draws do not.
Rng allocation_rng(std::uint64_t seed);
Rng initial_design_rng(std::uint64_t seed);

/// Sequential design: an initial exchange design for the first n0 subjects at
/// beta = 0, their responses and a fit, then for each later subject observe
/// covariates, allocate, observe the response, refit. `deviates[j]` is the
/// uniform handed to the responder for subject j+1. If
/// `initial_treatments` is given it replaces the exchange step. Allocations
/// draw from allocation_rng(config.seed).
TrialState run_sequential(std::span<const Covariates> stream, std::span<const double> deviates,
                          const Responder& responder, const SequentialConfig& config,
                          const Allocator& allocator,
                          std::optional<std::span<const int>> initial_treatments = std::nullopt,
                          const StepObserver& observer = {});

TrialState run_sequential_myopic(std::span<const Covariates> stream,
                                 std::span<const double> deviates, const Responder& responder,
                                 const SequentialConfig& config);

}  // namespace seqdesign
