#include "seqdesign/policy_pseudo.hpp"

#include "seqdesign/errors.hpp"

namespace seqdesign {

namespace {

// Rollout starting from the information matrix that already includes
// subject i.
double rollout_from(const Matrix& info_with_i, const ModelSpec& spec,
                    const Trajectory& trajectory, const Vector& beta,
                    const Criterion& criterion, std::vector<int>* treatments,
                    EvalCounter* counter) {
  if (trajectory.z_future.empty()) throw ContractError("greedy rollout needs a non-empty trajectory");
  Matrix info = info_with_i;
  double last = 0.0;
  if (treatments) treatments->clear();
  for (const auto& z : trajectory.z_future) {
    const Vector plus = build_row(z, 1, spec);
    const Vector minus = build_row(z, -1, spec);
    const double psi_plus = criterion.evaluate_with_row(info, plus, beta);
    const double psi_minus = criterion.evaluate_with_row(info, minus, beta);
    if (counter) counter->objective_evaluations += 2;
    const bool take_plus = psi_plus < psi_minus;
    accumulate_information(info, take_plus ? plus : minus, beta);
    last = take_plus ? psi_plus : psi_minus;
    if (treatments) treatments->push_back(take_plus ? 1 : -1);
  }
  return last;
}

Matrix info_with_subject(const TrialState& state, const Covariates& z_i, int t_i,
                         const Vector& beta) {
  Matrix info = state.information(beta);
  accumulate_information(info, build_row(z_i, t_i, state.spec()), beta);
  return info;
}

}  // namespace

std::vector<Trajectory> generate_trajectories(const CovariateModel& model, std::size_t i,
                                              std::size_t n, int M, Rng& rng) {
  if (i >= n) throw ContractError("trajectories need i < n; the last subject is the terminal case");
  if (M < 1) throw ContractError("need at least one trajectory");
  std::vector<Trajectory> out(static_cast<std::size_t>(M));
  for (auto& trajectory : out) {
    trajectory.z_future.reserve(n - i);
    for (std::size_t j = i + 1; j <= n; ++j) trajectory.z_future.push_back(model.sample(j, rng));
  }
  return out;
}

double greedy_rollout(const TrialState& state, const Covariates& z_i, int t_i,
                      const Trajectory& trajectory, const Vector& beta,
                      const Criterion& criterion, std::vector<int>* treatments,
                      EvalCounter* counter) {
  return rollout_from(info_with_subject(state, z_i, t_i, beta), state.spec(), trajectory, beta,
                      criterion, treatments, counter);
}

double average_objective(const TrialState& state, const Covariates& z_i, int t_i,
                         std::span<const Trajectory> trajectories, const Vector& beta,
                         const Criterion& criterion, EvalCounter* counter) {
  if (trajectories.empty()) throw ContractError("need at least one trajectory");
  const Matrix info = info_with_subject(state, z_i, t_i, beta);
  const auto M = static_cast<std::ptrdiff_t>(trajectories.size());
  std::vector<double> values(trajectories.size());
  std::exception_ptr failure;

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t m = 0; m < M; ++m) {
    try {
      values[static_cast<std::size_t>(m)] =
          rollout_from(info, state.spec(), trajectories[static_cast<std::size_t>(m)], beta,
                       criterion, nullptr, counter);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(M);
}

double average_objective_serial(const TrialState& state, const Covariates& z_i, int t_i,
                                std::span<const Trajectory> trajectories, const Vector& beta,
                                const Criterion& criterion, EvalCounter* counter) {
  if (trajectories.empty()) throw ContractError("need at least one trajectory");
  const Matrix info = info_with_subject(state, z_i, t_i, beta);
  double sum = 0.0;
  for (const auto& trajectory : trajectories)
    sum += rollout_from(info, state.spec(), trajectory, beta, criterion, nullptr, counter);
  return sum / static_cast<double>(trajectories.size());
}

AllocationDecision allocate_pseudo(TrialState& state, const PseudoConfig& config,
                                   const Criterion& criterion, Rng& rng, SamplingMode mode,
                                   EvalCounter* counter) {
  const std::size_t i = state.num_allocated() + 1;
  if (i > config.n_total) throw ContractError("subject index exceeds the trial size");
  const Covariates z = state.pending_covariates();
  const Vector& beta = state.beta_hat();

  double psi_plus = 0.0;
  double psi_minus = 0.0;
  if (i == config.n_total) {
    psi_plus = candidate_objective(state, z, 1, beta, criterion);
    psi_minus = candidate_objective(state, z, -1, beta, criterion);
  } else {
    const CovariateModel model = config.covariate_model.kind() == CovariateKind::Empirical
                                     ? config.covariate_model.with_observations(state.covariates())
                                     : config.covariate_model;
    const auto trajectories = generate_trajectories(model, i, config.n_total, config.trajectories, rng);
    psi_plus = average_objective(state, z, 1, trajectories, beta, criterion, counter);
    psi_minus = average_objective(state, z, -1, trajectories, beta, criterion, counter);
  }
  const AllocationDecision d = decide(psi_plus, psi_minus, rng.uniform(), mode);
  state.assign_treatment(d.sampled, {0, d.psi_minus, d.psi_plus, d.prob_plus, d.sampled, false});
  return d;
}

}  // namespace seqdesign
