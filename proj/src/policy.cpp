#include "seqdesign/policy.hpp"

#include "seqdesign/errors.hpp"

namespace seqdesign {

using nlohmann::json;

namespace {

const char* dist_name(CovariateAssumption d) {
  return d == CovariateAssumption::Correct ? "correct" : "empirical";
}

CovariateModel resolve_model(CovariateAssumption dist, const CovariateModel& true_model) {
  if (dist == CovariateAssumption::Correct) return true_model;
  return CovariateModel::empirical(true_model.num_covariates());
}

}  // namespace

std::string PolicySpec::label() const {
  if (!name.empty()) return name;
  switch (kind) {
    case PolicyKind::Myopic: return "myopic";
    case PolicyKind::Nonmyopic:
      return "nonmyopic_N" + std::to_string(horizon) + "_" + dist_name(dist);
    case PolicyKind::Pseudo:
      return "pseudo_M" + std::to_string(trajectories) + "_" + dist_name(dist);
  }
  return "policy";
}

json PolicySpec::to_json() const {
  json j;
  switch (kind) {
    case PolicyKind::Myopic: j["kind"] = "myopic"; break;
    case PolicyKind::Nonmyopic:
      j = {{"kind", "nonmyopic"}, {"horizon", horizon}, {"dist", dist_name(dist)}};
      break;
    case PolicyKind::Pseudo:
      j = {{"kind", "pseudo"}, {"trajectories", trajectories}, {"dist", dist_name(dist)}};
      break;
  }
  if (!name.empty()) j["name"] = name;
  return j;
}

PolicySpec PolicySpec::from_json(const json& j) {
  PolicySpec p;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "myopic") {
    p.kind = PolicyKind::Myopic;
  } else if (kind == "nonmyopic") {
    p.kind = PolicyKind::Nonmyopic;
    p.horizon = j.at("horizon").get<int>();
    if (p.horizon < 0) throw DomainError("horizon must be non-negative");
  } else if (kind == "pseudo") {
    p.kind = PolicyKind::Pseudo;
    p.trajectories = j.at("trajectories").get<int>();
    if (p.trajectories < 1) throw DomainError("trajectories must be at least 1");
  } else {
    throw DomainError("unknown policy kind '" + kind + "'");
  }
  const auto dist = j.value("dist", std::string("correct"));
  if (dist == "correct") p.dist = CovariateAssumption::Correct;
  else if (dist == "empirical") p.dist = CovariateAssumption::Empirical;
  else throw DomainError("dist must be 'correct' or 'empirical'");
  p.name = j.value("name", std::string());
  return p;
}

AllocationDecision allocate(const PolicySpec& policy, TrialState& state, const Criterion& criterion,
                            const CovariateModel& true_model, std::size_t n_total, Rng& rng,
                            SamplingMode mode) {
  switch (policy.kind) {
    case PolicyKind::Myopic:
      return allocate_myopic(state, criterion, rng, mode);
    case PolicyKind::Nonmyopic: {
      NonmyopicConfig config;
      config.horizon = policy.horizon;
      config.covariate_model = resolve_model(policy.dist, true_model);
      config.n_total = n_total;
      return allocate_nonmyopic(state, config, criterion, rng, mode);
    }
    case PolicyKind::Pseudo: {
      PseudoConfig config;
      config.trajectories = policy.trajectories;
      config.covariate_model = resolve_model(policy.dist, true_model);
      config.n_total = n_total;
      return allocate_pseudo(state, config, criterion, rng, mode);
    }
  }
  throw ContractError("unknown policy kind");
}

}  // namespace seqdesign
