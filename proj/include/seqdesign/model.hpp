#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace seqdesign {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Covariate values for one subject, each entry in {-1, +1}.
using Covariates = std::vector<int>;

enum class TermKind { Intercept, Covariate, Treatment, Interaction };

struct Term {
  TermKind kind = TermKind::Intercept;
  std::size_t covariate = 0;  // used by Covariate and Interaction

  static Term intercept() { return {TermKind::Intercept, 0}; }
  static Term main(std::size_t k) { return {TermKind::Covariate, k}; }
  static Term treatment() { return {TermKind::Treatment, 0}; }
  static Term interaction(std::size_t k) { return {TermKind::Interaction, k}; }

  bool operator==(const Term&) const = default;
};

/// Ordered term structure of the linear predictor. Exactly one intercept and
/// one treatment main effect; covariate references are checked against the
/// number of covariates.
class ModelSpec {
 public:
  ModelSpec(std::vector<Term> terms, std::size_t num_covariates);

  /// (1, z_1..z_s, t)
  static ModelSpec main_effects(std::size_t num_covariates);
  /// (1, z_1..z_s, t, z_1 t..z_s t)
  static ModelSpec with_interactions(std::size_t num_covariates);

  std::size_t q() const { return terms_.size(); }
  std::size_t num_covariates() const { return s_; }
  const std::vector<Term>& terms() const { return terms_; }
  std::size_t intercept_index() const { return intercept_; }
  std::size_t treatment_index() const { return treatment_; }

  /// Column label used in exported tables: beta_0, beta_z, beta_t, ...
  std::string coefficient_name(std::size_t j) const;

  bool operator==(const ModelSpec&) const = default;

 private:
  std::vector<Term> terms_;
  std::size_t s_;
  std::size_t intercept_ = 0;
  std::size_t treatment_ = 0;
};

struct CauchyComponent {
  double location = 0.0;
  double scale = 1.0;
  bool operator==(const CauchyComponent&) const = default;
};

/// Independent Cauchy priors, one per coefficient.
class CauchyPrior {
 public:
  explicit CauchyPrior(std::vector<CauchyComponent> components);

  /// Location 0; scale `intercept_scale` on the intercept and `slope_scale`
  /// on every other term.
  static CauchyPrior defaults(const ModelSpec& spec, double intercept_scale = 10.0,
                              double slope_scale = 2.5);

  std::size_t size() const { return components_.size(); }
  const CauchyComponent& operator[](std::size_t j) const { return components_[j]; }
  const std::vector<CauchyComponent>& components() const { return components_; }

  double log_density(const Vector& beta) const;
  Vector gradient(const Vector& beta) const;
  Vector hessian_diagonal(const Vector& beta) const;

  bool operator==(const CauchyPrior&) const = default;

 private:
  std::vector<CauchyComponent> components_;
};

struct ParameterEstimate {
  Vector beta;
  bool converged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;
};

struct FitOptions {
  double tol = 1e-8;  // gradient infinity-norm
  int max_iter = 100;
  int max_halvings = 30;
};

Vector build_row(const Covariates& z, int treatment, const ModelSpec& spec);
Matrix build_design(std::span<const Covariates> Z, std::span<const int> t,
                    const ModelSpec& spec);

/// exp(eta) / (1 + exp(eta)), branch-stable for large |eta|.
double logistic(double eta);
/// pi (1 - pi), the logistic weight.
double logistic_weight(double eta);
double response_prob(const Vector& x, const Vector& beta);

/// info += w(x'beta) x x'. Every information matrix in the library is built
/// with this routine, row by row, so incremental and from-scratch
/// construction agree bitwise.
void accumulate_information(Matrix& info, const Vector& x, const Vector& beta);
void accumulate_information(Matrix& info, const Vector& x, double weight);

/// X' W X with W = diag(pi_j (1 - pi_j)) evaluated at beta.
Matrix information_matrix(const Matrix& X, const Vector& beta);

/// Bernoulli log-likelihood plus the full Cauchy log-densities (including
/// the -log(pi * scale) normalizers).
double penalized_log_posterior(const Matrix& X, std::span<const int> y, const Vector& beta,
                               const CauchyPrior& prior);
Vector penalized_gradient(const Matrix& X, std::span<const int> y, const Vector& beta,
                          const CauchyPrior& prior);
Matrix penalized_hessian(const Matrix& X, std::span<const int> y, const Vector& beta,
                         const CauchyPrior& prior);

/// Maximum a posteriori fit by damped Newton with step halving. Falls back
/// to a steepest-ascent direction when the Hessian is not negative definite.
/// Throws FitError if the objective becomes non-finite.
ParameterEstimate fit_map(const Matrix& X, std::span<const int> y, const CauchyPrior& prior,
                          const FitOptions& options = {},
                          const std::optional<Vector>& init = std::nullopt);

}  // namespace seqdesign
