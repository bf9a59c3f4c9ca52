#include "seqdesign/criteria.hpp"

#include <cmath>
#include <limits>

#include "seqdesign/errors.hpp"
#include "seqdesign/trial.hpp"

namespace seqdesign {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double singularity_scale(const Matrix& info) {
  double scale = 1.0;
  for (Eigen::Index r = 0; r < info.rows(); ++r) scale *= info.row(r).norm();
  return scale;
}

}  // namespace

Criterion Criterion::d_optimal(std::size_t q) {
  if (q == 0) throw StructuralError("criterion needs q >= 1");
  return Criterion(CriterionKind::D, Matrix(), q);
}

Criterion Criterion::da_optimal(Matrix contrasts) {
  const auto q = static_cast<std::size_t>(contrasts.rows());
  const auto m = static_cast<std::size_t>(contrasts.cols());
  if (m == 0 || m >= q)
    throw ContractError("D_A contrast matrix must have 0 < m < q columns (q=" +
                        std::to_string(q) + ", m=" + std::to_string(m) + ")");
  for (Eigen::Index c = 0; c < contrasts.cols(); ++c)
    if (contrasts.col(c).cwiseAbs().maxCoeff() == 0.0)
      throw ContractError("D_A contrast matrix has an all-zero column");
  return Criterion(CriterionKind::DA, std::move(contrasts), q);
}

Criterion Criterion::treatment_effect(const ModelSpec& spec) {
  Matrix A = Matrix::Zero(static_cast<Eigen::Index>(spec.q()), 1);
  A(static_cast<Eigen::Index>(spec.treatment_index()), 0) = 1.0;
  return da_optimal(std::move(A));
}

bool is_singular(const Matrix& info) {
  const double scale = singularity_scale(info);
  if (!(scale > 0.0) || !std::isfinite(scale)) return true;
  const double det = info.partialPivLu().determinant();
  return !(std::abs(det) >= kSingularityThreshold * scale);
}

double Criterion::evaluate(const Matrix& info) const {
  if (static_cast<std::size_t>(info.rows()) != q_ || static_cast<std::size_t>(info.cols()) != q_)
    throw StructuralError("information matrix is not q x q");
  const double scale = singularity_scale(info);
  if (!(scale > 0.0) || !std::isfinite(scale)) return kInf;
  const Eigen::PartialPivLU<Matrix> lu(info);
  const double det = lu.determinant();
  if (!(std::abs(det) >= kSingularityThreshold * scale) || det < 0.0) return kInf;

  if (kind_ == CriterionKind::D) return 1.0 / det;

  const Matrix V = lu.solve(A_);
  if (A_.cols() == 1) {
    const double v = A_.col(0).dot(V.col(0));
    return v > 0.0 ? v : kInf;
  }
  const double v = (A_.transpose() * V).determinant();
  return v > 0.0 ? v : kInf;
}

double Criterion::evaluate_regularized(const Matrix& info, double ridge) const {
  Matrix reg = info;
  reg.diagonal().array() += ridge;
  return evaluate(reg);
}

double Criterion::evaluate_with_row(const Matrix& info, const Vector& x,
                                    const Vector& beta) const {
  Matrix extended = info;
  accumulate_information(extended, x, beta);
  return evaluate(extended);
}

double d_objective(const Matrix& X, const Vector& beta) {
  return Criterion::d_optimal(static_cast<std::size_t>(X.cols()))
      .evaluate(information_matrix(X, beta));
}

double da_objective(const Matrix& X, const Vector& beta, const Criterion& criterion) {
  if (criterion.kind() != CriterionKind::DA) throw ContractError("da_objective needs a D_A criterion");
  if (static_cast<std::size_t>(X.cols()) != criterion.q())
    throw StructuralError("design has the wrong number of columns for the criterion");
  return criterion.evaluate(information_matrix(X, beta));
}

double objective(const Matrix& X, const Vector& beta, const Criterion& criterion) {
  if (static_cast<std::size_t>(X.cols()) != criterion.q())
    throw StructuralError("design has the wrong number of columns for the criterion");
  return criterion.evaluate(information_matrix(X, beta));
}

double candidate_objective(const TrialState& state, const Covariates& z, int treatment,
                           const Vector& beta, const Criterion& criterion) {
  if (criterion.q() != state.spec().q())
    throw StructuralError("criterion and model dimensions differ");
  const Vector x = build_row(z, treatment, state.spec());
  return criterion.evaluate_with_row(state.information(beta), x, beta);
}

double relative_efficiency(double psi_ref, double psi, int m) {
  if (!(psi_ref > 0.0) || !(psi > 0.0) || !std::isfinite(psi_ref) || !std::isfinite(psi))
    throw DomainError("relative efficiency needs finite positive objectives");
  if (m <= 0) throw DomainError("relative efficiency needs m >= 1");
  return std::pow(psi_ref / psi, 1.0 / m);
}

}  // namespace seqdesign
