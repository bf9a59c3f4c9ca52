#pragma once

#include "seqdesign/model.hpp"

namespace seqdesign {

class TrialState;

enum class CriterionKind { D, DA };

/// Information-matrix objective. Lower is better; a singular information
/// matrix maps to +infinity.
class Criterion {
 public:
  static Criterion d_optimal(std::size_t q);
  /// `contrasts` is q x m with m < q and no all-zero column.
  static Criterion da_optimal(Matrix contrasts);
  /// D_A with A = e_t, the unit vector on the treatment main effect.
  static Criterion treatment_effect(const ModelSpec& spec);

  CriterionKind kind() const { return kind_; }
  const Matrix& contrasts() const { return A_; }
  std::size_t q() const { return q_; }
  /// Exponent denominator for relative efficiency: m for D_A, q for D.
  int m() const { return kind_ == CriterionKind::DA ? static_cast<int>(A_.cols()) : static_cast<int>(q_); }

  /// Objective on an already-formed information matrix.
  double evaluate(const Matrix& info) const;
  /// Objective on info + ridge * I.
  double evaluate_regularized(const Matrix& info, double ridge) const;
  /// Objective on info + w(x'beta) x x', leaving info untouched.
  double evaluate_with_row(const Matrix& info, const Vector& x, const Vector& beta) const;

 private:
  Criterion(CriterionKind kind, Matrix A, std::size_t q) : kind_(kind), A_(std::move(A)), q_(q) {}
  CriterionKind kind_;
  Matrix A_;
  std::size_t q_;
};

/// |info| below this fraction of the product of its row norms is singular.
inline constexpr double kSingularityThreshold = 1e-12;

bool is_singular(const Matrix& info);

/// |(X'WX)^-1|
double d_objective(const Matrix& X, const Vector& beta);
/// |A'(X'WX)^-1 A|
double da_objective(const Matrix& X, const Vector& beta, const Criterion& criterion);
/// Dispatches on criterion.kind().
double objective(const Matrix& X, const Vector& beta, const Criterion& criterion);

/// Objective after appending build_row(z, t) to the state's allocated rows.
/// The state is not modified.
double candidate_objective(const TrialState& state, const Covariates& z, int treatment,
                           const Vector& beta, const Criterion& criterion);

/// (psi_ref / psi)^(1/m)
double relative_efficiency(double psi_ref, double psi, int m);

}  // namespace seqdesign
