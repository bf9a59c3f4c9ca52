#include "seqdesign/policy_nonmyopic.hpp"

#include <algorithm>

#include "seqdesign/errors.hpp"

namespace seqdesign {

namespace {

// One node of the lookahead tree: the allocated rows so far (as an
// information matrix at `beta`) and the subject index being decided.
struct Node {
  Matrix info;
  Vector beta;
  std::vector<Vector> rows;  // kept only when refitting
  std::vector<int> ys;
  std::size_t subject = 0;
};

class Lookahead {
 public:
  Lookahead(const TrialState& state, const NonmyopicConfig& config, const Criterion& criterion,
            EvalCounter* counter)
      : spec_(state.spec()),
        prior_(state.prior()),
        fit_(state.fit_options()),
        config_(config),
        criterion_(criterion),
        support_(config.covariate_model.support()),
        counter_(counter) {}

  Node root(const TrialState& state, const Vector& beta) const {
    Node node{state.information(beta), beta, {}, {}, state.num_allocated() + 1};
    if (config_.refit_in_tree) {
      for (std::size_t j = 0; j < state.num_allocated(); ++j)
        node.rows.push_back(build_row(state.covariates()[j], state.treatments()[j], spec_));
      node.ys = state.responses();
    }
    return node;
  }

  double psi(const Node& node, const Covariates& z, int t, int horizon) const {
    const Vector x = build_row(z, t, spec_);
    if (horizon == 0) {
      count_leaf();
      return criterion_.evaluate_with_row(node.info, x, node.beta);
    }
    const double pi = logistic(x.dot(node.beta));
    double total = 0.0;
    for (const auto& z_next : support_) {
      const double pz = config_.covariate_model.prob(node.subject + 1, z_next);
      double inner = 0.0;
      for (int y : {0, 1}) {
        const double wy = y == 1 ? pi : 1.0 - pi;
        const Node child = extend(node, x, y);
        const int t_star = argmin(child, z_next);
        const double value = psi(child, z_next, t_star, horizon - 1);
        if (wy > 0.0) inner += wy * value;
      }
      if (pz > 0.0) total += pz * inner;
    }
    return total;
  }

 private:
  Node extend(const Node& node, const Vector& x, int y) const {
    Node child;
    child.subject = node.subject + 1;
    if (!config_.refit_in_tree) {
      child.info = node.info;
      child.beta = node.beta;
      accumulate_information(child.info, x, node.beta);
      return child;
    }
    child.rows = node.rows;
    child.rows.push_back(x);
    child.ys = node.ys;
    child.ys.push_back(y);
    Matrix X(static_cast<Eigen::Index>(child.rows.size()), x.size());
    for (std::size_t r = 0; r < child.rows.size(); ++r)
      X.row(static_cast<Eigen::Index>(r)) = child.rows[r].transpose();
    child.beta = fit_map(X, child.ys, prior_, fit_).beta;
    child.info = information_matrix(X, child.beta);
    return child;
  }

  int argmin(const Node& node, const Covariates& z) const {
    const double plus = criterion_.evaluate_with_row(node.info, build_row(z, 1, spec_), node.beta);
    const double minus = criterion_.evaluate_with_row(node.info, build_row(z, -1, spec_), node.beta);
    if (counter_) counter_->objective_evaluations += 2;
    return plus < minus ? 1 : -1;
  }

  void count_leaf() const {
    if (!counter_) return;
    ++counter_->leaf_evaluations;
    ++counter_->objective_evaluations;
  }

  const ModelSpec& spec_;
  const CauchyPrior& prior_;
  const FitOptions& fit_;
  const NonmyopicConfig& config_;
  const Criterion& criterion_;
  std::vector<Covariates> support_;
  EvalCounter* counter_;
};

}  // namespace

int optimal_future_treatment(const TrialState& state_plus, const Covariates& z_next,
                             const Vector& beta, const Criterion& criterion) {
  const double plus = candidate_objective(state_plus, z_next, 1, beta, criterion);
  const double minus = candidate_objective(state_plus, z_next, -1, beta, criterion);
  return plus < minus ? 1 : -1;
}

double expect_over_response(const TrialState& state, int t_i,
                            const std::function<double(int)>& continuation, const Vector& beta) {
  const double pi = response_prob(build_row(state.pending_covariates(), t_i, state.spec()), beta);
  double total = 0.0;
  if (1.0 - pi > 0.0) total += (1.0 - pi) * continuation(0);
  if (pi > 0.0) total += pi * continuation(1);
  return total;
}

double psi_horizon(const TrialState& state, const Covariates& z_i, int t_i, int horizon,
                   const NonmyopicConfig& config, const Vector& beta,
                   const Criterion& criterion, EvalCounter* counter) {
  if (horizon < 0) throw ContractError("horizon must be non-negative");
  if (horizon > config.max_horizon)
    throw ContractError("horizon " + std::to_string(horizon) + " exceeds the cap of " +
                        std::to_string(config.max_horizon));
  if (config.covariate_model.num_covariates() != state.spec().num_covariates())
    throw StructuralError("covariate model and model spec disagree on the number of covariates");
  const std::size_t subject = state.num_allocated() + 1;
  if (subject > config.n_total) throw ContractError("subject index exceeds the trial size");

  const int effective =
      static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(horizon), config.n_total - subject));
  if (effective == 0) {
    if (counter) {
      ++counter->leaf_evaluations;
      ++counter->objective_evaluations;
    }
    return candidate_objective(state, z_i, t_i, beta, criterion);
  }
  const Lookahead tree(state, config, criterion, counter);
  return tree.psi(tree.root(state, beta), z_i, t_i, effective);
}

AllocationDecision allocate_nonmyopic(TrialState& state, const NonmyopicConfig& config,
                                      const Criterion& criterion, Rng& rng, SamplingMode mode,
                                      EvalCounter* counter) {
  const double u = rng.uniform();
  NonmyopicConfig resolved = config;
  if (config.covariate_model.kind() == CovariateKind::Empirical)
    resolved.covariate_model = config.covariate_model.with_observations(state.covariates());

  const Covariates z = state.pending_covariates();
  const Vector& beta = state.beta_hat();
  const double psi_plus = psi_horizon(state, z, 1, config.horizon, resolved, beta, criterion, counter);
  const double psi_minus = psi_horizon(state, z, -1, config.horizon, resolved, beta, criterion, counter);
  const AllocationDecision d = decide(psi_plus, psi_minus, u, mode);
  state.assign_treatment(d.sampled, {0, d.psi_minus, d.psi_plus, d.prob_plus, d.sampled, false});
  return d;
}

}  // namespace seqdesign
