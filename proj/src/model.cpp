#include "seqdesign/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "seqdesign/errors.hpp"

namespace seqdesign {

ModelSpec::ModelSpec(std::vector<Term> terms, std::size_t num_covariates)
    : terms_(std::move(terms)), s_(num_covariates) {
  int intercepts = 0;
  int treatments = 0;
  for (std::size_t j = 0; j < terms_.size(); ++j) {
    const auto& term = terms_[j];
    switch (term.kind) {
      case TermKind::Intercept:
        ++intercepts;
        intercept_ = j;
        break;
      case TermKind::Treatment:
        ++treatments;
        treatment_ = j;
        break;
      case TermKind::Covariate:
      case TermKind::Interaction:
        if (term.covariate >= s_)
          throw StructuralError("model term " + std::to_string(j) + " references covariate " +
                                std::to_string(term.covariate) + " but only " +
                                std::to_string(s_) + " covariates exist");
        break;
    }
  }
  if (intercepts != 1) throw StructuralError("model must have exactly one intercept term");
  if (treatments != 1) throw StructuralError("model must have exactly one treatment term");
}

ModelSpec ModelSpec::main_effects(std::size_t num_covariates) {
  std::vector<Term> terms{Term::intercept()};
  for (std::size_t k = 0; k < num_covariates; ++k) terms.push_back(Term::main(k));
  terms.push_back(Term::treatment());
  return ModelSpec(std::move(terms), num_covariates);
}

ModelSpec ModelSpec::with_interactions(std::size_t num_covariates) {
  std::vector<Term> terms{Term::intercept()};
  for (std::size_t k = 0; k < num_covariates; ++k) terms.push_back(Term::main(k));
  terms.push_back(Term::treatment());
  for (std::size_t k = 0; k < num_covariates; ++k) terms.push_back(Term::interaction(k));
  return ModelSpec(std::move(terms), num_covariates);
}

std::string ModelSpec::coefficient_name(std::size_t j) const {
  const auto& term = terms_.at(j);
  const std::string z = s_ == 1 ? "z" : "z" + std::to_string(term.covariate + 1);
  switch (term.kind) {
    case TermKind::Intercept: return "beta_0";
    case TermKind::Treatment: return "beta_t";
    case TermKind::Covariate: return "beta_" + z;
    case TermKind::Interaction: return "beta_" + z + "t";
  }
  return "beta_" + std::to_string(j);
}

CauchyPrior::CauchyPrior(std::vector<CauchyComponent> components)
    : components_(std::move(components)) {
  for (std::size_t j = 0; j < components_.size(); ++j) {
    const auto& c = components_[j];
    if (!(c.scale > 0.0) || !std::isfinite(c.scale) || !std::isfinite(c.location))
      throw DomainError("prior scale for coefficient " + std::to_string(j) +
                        " must be positive and finite");
  }
}

CauchyPrior CauchyPrior::defaults(const ModelSpec& spec, double intercept_scale,
                                  double slope_scale) {
  std::vector<CauchyComponent> components(spec.q(), {0.0, slope_scale});
  components[spec.intercept_index()].scale = intercept_scale;
  return CauchyPrior(std::move(components));
}

double CauchyPrior::log_density(const Vector& beta) const {
  double total = 0.0;
  for (std::size_t j = 0; j < components_.size(); ++j) {
    const auto& c = components_[j];
    const double u = (beta[j] - c.location) / c.scale;
    total += -std::log(std::numbers::pi * c.scale) - std::log1p(u * u);
  }
  return total;
}

Vector CauchyPrior::gradient(const Vector& beta) const {
  Vector g(components_.size());
  for (std::size_t j = 0; j < components_.size(); ++j) {
    const auto& c = components_[j];
    const double u = (beta[j] - c.location) / c.scale;
    g[j] = -2.0 * u / (c.scale * (1.0 + u * u));
  }
  return g;
}

Vector CauchyPrior::hessian_diagonal(const Vector& beta) const {
  Vector h(components_.size());
  for (std::size_t j = 0; j < components_.size(); ++j) {
    const auto& c = components_[j];
    const double u = (beta[j] - c.location) / c.scale;
    const double d = 1.0 + u * u;
    h[j] = -2.0 * (1.0 - u * u) / (c.scale * c.scale * d * d);
  }
  return h;
}

Vector build_row(const Covariates& z, int treatment, const ModelSpec& spec) {
  if (z.size() != spec.num_covariates())
    throw StructuralError("expected " + std::to_string(spec.num_covariates()) +
                          " covariates, got " + std::to_string(z.size()));
  for (int v : z)
    if (v != 1 && v != -1) throw DomainError("covariate values must be -1 or +1");
  if (treatment != 1 && treatment != -1) throw DomainError("treatment must be -1 or +1");

  Vector x(spec.q());
  const auto& terms = spec.terms();
  for (std::size_t j = 0; j < terms.size(); ++j) {
    const auto& term = terms[j];
    switch (term.kind) {
      case TermKind::Intercept: x[j] = 1.0; break;
      case TermKind::Treatment: x[j] = treatment; break;
      case TermKind::Covariate: x[j] = z[term.covariate]; break;
      case TermKind::Interaction: x[j] = z[term.covariate] * treatment; break;
    }
  }
  return x;
}

Matrix build_design(std::span<const Covariates> Z, std::span<const int> t,
                    const ModelSpec& spec) {
  if (Z.size() != t.size()) throw StructuralError("covariate and treatment counts differ");
  Matrix X(static_cast<Eigen::Index>(Z.size()), static_cast<Eigen::Index>(spec.q()));
  for (std::size_t j = 0; j < Z.size(); ++j)
    X.row(static_cast<Eigen::Index>(j)) = build_row(Z[j], t[j], spec).transpose();
  return X;
}

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double logistic_weight(double eta) {
  const double p = logistic(eta);
  return p * (1.0 - p);
}

double response_prob(const Vector& x, const Vector& beta) {
  if (x.size() != beta.size()) throw StructuralError("row and coefficient sizes differ");
  return logistic(x.dot(beta));
}

void accumulate_information(Matrix& info, const Vector& x, double weight) {
  const auto q = x.size();
  for (Eigen::Index a = 0; a < q; ++a) {
    const double wa = weight * x[a];
    for (Eigen::Index b = 0; b < q; ++b) info(a, b) += wa * x[b];
  }
}

void accumulate_information(Matrix& info, const Vector& x, const Vector& beta) {
  accumulate_information(info, x, logistic_weight(x.dot(beta)));
}

Matrix information_matrix(const Matrix& X, const Vector& beta) {
  if (X.cols() != beta.size()) throw StructuralError("design and coefficient sizes differ");
  Matrix info = Matrix::Zero(X.cols(), X.cols());
  for (Eigen::Index j = 0; j < X.rows(); ++j) {
    const Vector x = X.row(j).transpose();
    accumulate_information(info, x, beta);
  }
  return info;
}

namespace {

double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

void check_data(const Matrix& X, std::span<const int> y, const Vector& beta,
                const CauchyPrior& prior) {
  if (static_cast<std::size_t>(X.rows()) != y.size())
    throw StructuralError("design rows and response count differ");
  if (X.cols() != beta.size() || prior.size() != static_cast<std::size_t>(beta.size()))
    throw StructuralError("coefficient dimension mismatch");
  for (int v : y)
    if (v != 0 && v != 1) throw DomainError("responses must be 0 or 1");
}

}  // namespace

double penalized_log_posterior(const Matrix& X, std::span<const int> y, const Vector& beta,
                               const CauchyPrior& prior) {
  check_data(X, y, beta, prior);
  double ll = 0.0;
  for (Eigen::Index j = 0; j < X.rows(); ++j) {
    const double eta = X.row(j).dot(beta);
    ll += y[j] * eta - softplus(eta);
  }
  return ll + prior.log_density(beta);
}

Vector penalized_gradient(const Matrix& X, std::span<const int> y, const Vector& beta,
                          const CauchyPrior& prior) {
  check_data(X, y, beta, prior);
  Vector g = prior.gradient(beta);
  for (Eigen::Index j = 0; j < X.rows(); ++j) {
    const double resid = y[j] - logistic(X.row(j).dot(beta));
    g += resid * X.row(j).transpose();
  }
  return g;
}

Matrix penalized_hessian(const Matrix& X, std::span<const int> y, const Vector& beta,
                         const CauchyPrior& prior) {
  check_data(X, y, beta, prior);
  Matrix H = -information_matrix(X, beta);
  H.diagonal() += prior.hessian_diagonal(beta);
  return H;
}

ParameterEstimate fit_map(const Matrix& X, std::span<const int> y, const CauchyPrior& prior,
                          const FitOptions& options, const std::optional<Vector>& init) {
  Vector beta = init.value_or(Vector::Zero(X.cols()));
  check_data(X, y, beta, prior);

  auto objective = [&](const Vector& b) { return penalized_log_posterior(X, y, b, prior); };
  double f = objective(beta);
  if (!std::isfinite(f)) throw FitError("non-finite objective at the starting point", 0);

  Vector g = penalized_gradient(X, y, beta, prior);
  double gnorm = g.lpNorm<Eigen::Infinity>();
  int iter = 0;
  constexpr double kSlack = 64.0 * std::numeric_limits<double>::epsilon();

  while (gnorm > options.tol && iter < options.max_iter) {
    ++iter;
    const Matrix H = penalized_hessian(X, y, beta, prior);
    if (!H.allFinite() || !g.allFinite())
      throw FitError("non-finite derivatives during fitting", iter);

    Vector direction;
    Eigen::LLT<Matrix> llt(-H);
    if (llt.info() == Eigen::Success) {
      direction = llt.solve(g);
    } else {
      direction = g;
    }

    bool accepted = false;
    double step = 1.0;
    for (int h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
      const Vector candidate = beta + step * direction;
      const double fc = objective(candidate);
      if (!std::isfinite(fc)) continue;
      if (fc >= f) {
        beta = candidate;
        f = fc;
        g = penalized_gradient(X, y, beta, prior);
        accepted = true;
        break;
      }
      // Near the optimum rounding can hide an ascent; accept if the gradient shrinks.
      if (fc >= f - kSlack * (1.0 + std::abs(f))) {
        Vector gc = penalized_gradient(X, y, candidate, prior);
        if (gc.lpNorm<Eigen::Infinity>() < gnorm) {
          beta = candidate;
          f = fc;
          g = std::move(gc);
          accepted = true;
          break;
        }
      }
    }
    if (!std::isfinite(f)) throw FitError("non-finite objective during fitting", iter);
    gnorm = g.lpNorm<Eigen::Infinity>();
    if (!accepted) break;
  }

  if (!beta.allFinite()) throw FitError("non-finite estimate", iter);
  return {beta, gnorm <= options.tol, iter, gnorm};
}

}  // namespace seqdesign
