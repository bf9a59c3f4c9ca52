#include "seqdesign/covariates.hpp"

#include <algorithm>
#include <cmath>

#include "seqdesign/errors.hpp"

namespace seqdesign {

using nlohmann::json;

namespace {

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(what) + " must lie in [0,1]");
}

}  // namespace

CovariateModel CovariateModel::fixed(std::vector<double> prob_plus) {
  if (prob_plus.empty()) throw StructuralError("covariate model needs at least one covariate");
  for (double p : prob_plus) check_probability(p, "static covariate probability");
  CovariateModel m(CovariateKind::Static, prob_plus.size());
  m.a_ = std::move(prob_plus);
  return m;
}

CovariateModel CovariateModel::dynamic(std::vector<double> intercept, std::vector<double> slope) {
  if (intercept.empty() || intercept.size() != slope.size())
    throw StructuralError("dynamic covariate rule needs matching intercept and slope vectors");
  CovariateModel m(CovariateKind::Dynamic, intercept.size());
  m.a_ = std::move(intercept);
  m.b_ = std::move(slope);
  return m;
}

CovariateModel CovariateModel::empirical(std::size_t num_covariates,
                                         std::optional<std::pair<double, double>> clamp) {
  if (num_covariates == 0) throw StructuralError("covariate model needs at least one covariate");
  if (clamp && !(clamp->first > 0.0 && clamp->first < clamp->second && clamp->second < 1.0))
    throw DomainError("empirical clamp bounds must satisfy 0 < lo < hi < 1");
  CovariateModel m(CovariateKind::Empirical, num_covariates);
  m.plus_.assign(num_covariates, 0);
  m.minus_.assign(num_covariates, 0);
  m.clamp_ = clamp;
  return m;
}

CovariateModel CovariateModel::with_observations(std::span<const Covariates> Z) const {
  CovariateModel m = empirical(s_, kind_ == CovariateKind::Empirical ? clamp_ : std::pair{0.01, 0.99});
  for (const auto& z : Z) {
    if (z.size() != s_) throw DomainError("covariate vector has the wrong length");
    for (std::size_t k = 0; k < s_; ++k) {
      if (z[k] == 1) ++m.plus_[k];
      else if (z[k] == -1) ++m.minus_[k];
      else throw DomainError("covariate values must be -1 or +1");
    }
  }
  return m;
}

double CovariateModel::prob_plus(std::size_t subject_index, std::size_t k) const {
  if (k >= s_) throw DomainError("covariate coordinate out of range");
  switch (kind_) {
    case CovariateKind::Static:
      return a_[k];
    case CovariateKind::Dynamic:
      return std::clamp(a_[k] + b_[k] * static_cast<double>(subject_index), 0.0, 1.0);
    case CovariateKind::Empirical: {
      const std::size_t total = plus_[k] + minus_[k];
      const double p = total == 0 ? 0.5 : static_cast<double>(plus_[k]) / static_cast<double>(total);
      return clamp_ ? std::clamp(p, clamp_->first, clamp_->second) : p;
    }
  }
  return 0.5;
}

double CovariateModel::prob(std::size_t subject_index, const Covariates& value) const {
  if (value.size() != s_) throw DomainError("covariate vector has the wrong length");
  double p = 1.0;
  for (std::size_t k = 0; k < s_; ++k) {
    const double plus = prob_plus(subject_index, k);
    if (value[k] == 1) p *= plus;
    else if (value[k] == -1) p *= 1.0 - plus;
    else throw DomainError("covariate value outside {-1,+1}");
  }
  return p;
}

Covariates CovariateModel::sample(std::size_t subject_index, Rng& rng) const {
  Covariates z(s_);
  for (std::size_t k = 0; k < s_; ++k) z[k] = rng.sign_with_prob(prob_plus(subject_index, k));
  return z;
}

CovariateModel CovariateModel::observe(const Covariates& value) const {
  if (kind_ != CovariateKind::Empirical)
    throw ContractError("observe() applies to empirical covariate models only");
  if (value.size() != s_) throw DomainError("covariate vector has the wrong length");
  CovariateModel m = *this;
  for (std::size_t k = 0; k < s_; ++k) {
    if (value[k] == 1) ++m.plus_[k];
    else if (value[k] == -1) ++m.minus_[k];
    else throw DomainError("covariate value outside {-1,+1}");
  }
  return m;
}

std::vector<Covariates> CovariateModel::support() const {
  std::vector<Covariates> out;
  const std::size_t count = std::size_t{1} << s_;
  out.reserve(count);
  for (std::size_t mask = 0; mask < count; ++mask) {
    Covariates z(s_);
    for (std::size_t k = 0; k < s_; ++k) z[k] = (mask >> (s_ - 1 - k)) & 1U ? 1 : -1;
    out.push_back(std::move(z));
  }
  return out;
}

json CovariateModel::to_json() const {
  switch (kind_) {
    case CovariateKind::Static:
      return {{"kind", "static"}, {"p", a_}};
    case CovariateKind::Dynamic:
      return {{"kind", "dynamic"}, {"intercept", a_}, {"slope", b_}};
    case CovariateKind::Empirical: {
      json j = {{"kind", "empirical"}, {"num_covariates", s_}};
      if (clamp_) j["clamp"] = {clamp_->first, clamp_->second};
      else j["clamp"] = nullptr;
      return j;
    }
  }
  return {};
}

namespace {

std::vector<double> scalar_or_vector(const json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  return {j.get<double>()};
}

}  // namespace

CovariateModel CovariateModel::from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "static") return fixed(scalar_or_vector(j.at("p")));
  if (kind == "dynamic") {
    auto slope = scalar_or_vector(j.at("slope"));
    auto intercept = j.contains("intercept") ? scalar_or_vector(j.at("intercept"))
                                             : std::vector<double>(slope.size(), 0.0);
    return dynamic(std::move(intercept), std::move(slope));
  }
  if (kind == "empirical") {
    std::optional<std::pair<double, double>> clamp = std::pair{0.01, 0.99};
    if (j.contains("clamp")) {
      if (j.at("clamp").is_null()) clamp.reset();
      else clamp = std::pair{j.at("clamp").at(0).get<double>(), j.at("clamp").at(1).get<double>()};
    }
    return empirical(j.value("num_covariates", std::size_t{1}), clamp);
  }
  throw DomainError("unknown covariate model kind '" + kind + "'");
}

}  // namespace seqdesign
