#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqdesign/model.hpp"
#include "seqdesign/rng.hpp"

namespace seqdesign {

enum class CovariateKind { Static, Dynamic, Empirical };

/// Distribution of a subject's covariates over {-1,+1}^s with independent
/// coordinates. Subject indices start at 1.
///
///  - static:    P(z_k = +1) = p_k for every subject
///  - dynamic:   P(z_k = +1) = clamp(intercept_k + slope_k * i, 0, 1)
///  - empirical: observed proportion of +1 per coordinate, clamped to
///               [lo, hi] (0.5 before any observation)
class CovariateModel {
 public:
  static CovariateModel fixed(std::vector<double> prob_plus);
  static CovariateModel dynamic(std::vector<double> intercept, std::vector<double> slope);
  /// Empty-count empirical model; pass std::nullopt to disable clamping.
  static CovariateModel empirical(std::size_t num_covariates,
                                  std::optional<std::pair<double, double>> clamp = std::pair{0.01, 0.99});
  /// Empirical model fed with every row of Z, keeping this model's clamp.
  CovariateModel with_observations(std::span<const Covariates> Z) const;

  CovariateKind kind() const { return kind_; }
  std::size_t num_covariates() const { return s_; }
  std::optional<std::pair<double, double>> clamp() const { return clamp_; }

  /// P(z_k = +1) for the subject at `subject_index`.
  double prob_plus(std::size_t subject_index, std::size_t coordinate) const;
  /// Joint probability of `value`. Throws DomainError outside the support.
  double prob(std::size_t subject_index, const Covariates& value) const;
  Covariates sample(std::size_t subject_index, Rng& rng) const;
  /// New empirical model with `value` counted. ContractError for other kinds.
  CovariateModel observe(const Covariates& value) const;

  /// {-1,+1}^s in lexicographic order with -1 first.
  std::vector<Covariates> support() const;

  std::size_t plus_count(std::size_t k) const { return plus_.at(k); }
  std::size_t minus_count(std::size_t k) const { return minus_.at(k); }

  nlohmann::json to_json() const;
  static CovariateModel from_json(const nlohmann::json& j);

 private:
  CovariateModel(CovariateKind kind, std::size_t s) : kind_(kind), s_(s) {}

  CovariateKind kind_;
  std::size_t s_;
  std::vector<double> a_;  // static probability or dynamic intercept
  std::vector<double> b_;  // dynamic slope
  std::vector<std::size_t> plus_, minus_;
  std::optional<std::pair<double, double>> clamp_;
};

}  // namespace seqdesign
