#include "seqdesign/policy_myopic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqdesign/errors.hpp"

namespace seqdesign {

namespace {

constexpr std::uint64_t kInitialDesignStream = 0x8000000000000001ULL;
constexpr std::uint64_t kAllocationStream = 0x8000000000000002ULL;

}  // namespace

std::vector<double> allocation_probabilities(std::span<const double> psi) {
  if (psi.empty()) throw ContractError("no candidate treatments");
  for (double v : psi)
    if (std::isnan(v) || v < 0.0) throw DomainError("candidate objectives must be non-negative");

  std::vector<double> p(psi.size(), 0.0);
  const auto zeros = std::count(psi.begin(), psi.end(), 0.0);
  const auto infinities = std::count_if(psi.begin(), psi.end(), [](double v) { return std::isinf(v); });

  if (zeros > 0) {
    for (std::size_t k = 0; k < psi.size(); ++k)
      if (psi[k] == 0.0) p[k] = 1.0 / static_cast<double>(zeros);
  } else if (infinities == static_cast<std::ptrdiff_t>(psi.size())) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(psi.size()));
  } else {
    // Weights min/psi are in (0,1], so huge objectives cannot overflow.
    const double smallest = *std::min_element(psi.begin(), psi.end());
    double total = 0.0;
    for (std::size_t k = 0; k < psi.size(); ++k) {
      p[k] = std::isinf(psi[k]) ? 0.0 : smallest / psi[k];
      total += p[k];
    }
    for (auto& v : p) v /= total;
  }
  return p;
}

double allocation_probability(double psi_plus, double psi_minus) {
  const double psi[2] = {psi_plus, psi_minus};
  return allocation_probabilities(psi)[0];
}

AllocationDecision decide(double psi_plus, double psi_minus, double u, SamplingMode mode) {
  AllocationDecision d;
  d.psi_plus = psi_plus;
  d.psi_minus = psi_minus;
  if (mode == SamplingMode::BiasedCoin) {
    d.prob_plus = allocation_probability(psi_plus, psi_minus);
  } else {
    if (std::isnan(psi_plus) || std::isnan(psi_minus) || psi_plus < 0.0 || psi_minus < 0.0)
      throw DomainError("candidate objectives must be non-negative");
    d.prob_plus = psi_plus < psi_minus ? 1.0 : (psi_minus < psi_plus ? 0.0 : 0.5);
  }
  d.sampled = u < d.prob_plus ? 1 : -1;
  return d;
}

AllocationDecision allocate_myopic(TrialState& state, const Criterion& criterion, Rng& rng,
                                   SamplingMode mode) {
  const double u = rng.uniform();
  const Covariates& z = state.pending_covariates();
  const Vector& beta = state.beta_hat();
  const double psi_plus = candidate_objective(state, z, 1, beta, criterion);
  const double psi_minus = candidate_objective(state, z, -1, beta, criterion);
  const AllocationDecision d = decide(psi_plus, psi_minus, u, mode);
  state.assign_treatment(d.sampled, {0, d.psi_minus, d.psi_plus, d.prob_plus, d.sampled, false});
  return d;
}

Rng subject_rng(std::uint64_t seed, std::size_t subject_index) {
  return Rng(derive_seed(seed, {static_cast<std::uint64_t>(subject_index)}));
}

Rng allocation_rng(std::uint64_t seed) {
  return Rng(derive_seed(seed, {kAllocationStream}));
}

Rng initial_design_rng(std::uint64_t seed) {
  return Rng(derive_seed(seed, {kInitialDesignStream}));
}

TrialState run_sequential(std::span<const Covariates> stream, std::span<const double> deviates,
                          const Responder& responder, const SequentialConfig& config,
                          const Allocator& allocator,
                          std::optional<std::span<const int>> initial_treatments,
                          const StepObserver& observer) {
  if (config.n0 == 0 || config.n0 > config.n)
    throw ContractError("sequential design needs 1 <= n0 <= n");
  if (stream.size() < config.n)
    throw InputError("covariate stream has " + std::to_string(stream.size()) +
                     " subjects, need " + std::to_string(config.n));
  if (deviates.size() < config.n)
    throw InputError("deviate stream has " + std::to_string(deviates.size()) +
                     " values, need " + std::to_string(config.n));

  TrialState state(config.spec, config.prior, config.fit);
  const auto initial_block = stream.first(config.n0);

  std::vector<int> t0;
  if (initial_treatments) {
    if (initial_treatments->size() != config.n0)
      throw InputError("initial treatment vector must have n0 entries");
    t0.assign(initial_treatments->begin(), initial_treatments->end());
  } else {
    Rng rng = initial_design_rng(config.seed);
    t0 = initial_design(initial_block, config.spec, config.criterion, config.random_starts, rng);
  }
  state.enroll_initial(initial_block, t0);
  for (std::size_t j = 0; j < config.n0; ++j) {
    const Vector x = build_row(stream[j], t0[j], config.spec);
    state.record_response(responder(x, deviates[j]));
  }
  if (observer) observer(state);

  Rng rng = allocation_rng(config.seed);
  for (std::size_t j = config.n0; j < config.n; ++j) {
    state.record_subject(stream[j]);
    const AllocationDecision d = allocator(state, rng);
    const Vector x = build_row(stream[j], d.sampled, config.spec);
    state.record_response(responder(x, deviates[j]));
    if (observer) observer(state);
  }
  return state;
}

TrialState run_sequential_myopic(std::span<const Covariates> stream,
                                 std::span<const double> deviates, const Responder& responder,
                                 const SequentialConfig& config) {
  const Criterion criterion = config.criterion;
  const SamplingMode mode = config.mode;
  return run_sequential(stream, deviates, responder, config,
                        [&](TrialState& state, Rng& rng) {
                          return allocate_myopic(state, criterion, rng, mode);
                        });
}

}  // namespace seqdesign
