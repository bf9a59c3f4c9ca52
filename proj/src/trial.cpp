#include "seqdesign/trial.hpp"

#include <limits>

#include "seqdesign/errors.hpp"
#include "seqdesign/json_util.hpp"

namespace seqdesign {

using nlohmann::json;

TrialState::TrialState(ModelSpec spec, CauchyPrior prior, FitOptions fit)
    : spec_(std::move(spec)), prior_(std::move(prior)), fit_(fit) {
  if (prior_.size() != spec_.q())
    throw StructuralError("prior has " + std::to_string(prior_.size()) +
                          " components but the model has " + std::to_string(spec_.q()) +
                          " terms");
  estimate_.beta = Vector::Zero(static_cast<Eigen::Index>(spec_.q()));
  estimate_.converged = true;
}

const Covariates& TrialState::pending_covariates() const {
  if (!has_pending_subject()) throw SequencingError("no subject is awaiting allocation");
  return Z_.back();
}

void TrialState::record_subject(Covariates z) {
  if (has_pending_subject())
    throw SequencingError("subject " + std::to_string(Z_.size()) + " has not been allocated");
  if (awaiting_response())
    throw SequencingError("subject " + std::to_string(y_.size() + 1) +
                          " has no recorded response");
  (void)build_row(z, 1, spec_);
  Z_.push_back(std::move(z));
}

void TrialState::assign_treatment(int treatment, AllocationEvent event) {
  if (!has_pending_subject()) throw SequencingError("no subject is awaiting allocation");
  if (treatment != 1 && treatment != -1) throw DomainError("treatment must be -1 or +1");
  event.subject = Z_.size();
  event.treatment = treatment;
  t_.push_back(treatment);
  history_.push_back(event);
}

void TrialState::enroll_initial(std::span<const Covariates> Z, std::span<const int> t) {
  if (has_pending_subject() || awaiting_response())
    throw SequencingError("initial block requires a state with no outstanding subjects");
  if (Z.size() != t.size()) throw StructuralError("initial covariate and treatment counts differ");
  for (std::size_t j = 0; j < Z.size(); ++j) (void)build_row(Z[j], t[j], spec_);
  for (std::size_t j = 0; j < Z.size(); ++j) {
    Z_.push_back(Z[j]);
    t_.push_back(t[j]);
    AllocationEvent event;
    event.subject = Z_.size();
    event.treatment = t[j];
    event.psi_minus = std::numeric_limits<double>::quiet_NaN();
    event.psi_plus = std::numeric_limits<double>::quiet_NaN();
    event.prob_plus = t[j] == 1 ? 1.0 : 0.0;
    event.initial = true;
    history_.push_back(event);
  }
}

void TrialState::record_response(int y) {
  if (y != 0 && y != 1) throw DomainError("response must be 0 or 1, got " + std::to_string(y));
  if (!awaiting_response()) throw SequencingError("no allocated subject is awaiting a response");
  std::vector<int> ys = y_;
  ys.push_back(y);
  const Matrix X = design(ys.size());
  ParameterEstimate fitted = fit_map(X, ys, prior_, fit_);
  y_ = std::move(ys);
  estimate_ = std::move(fitted);
}

Matrix TrialState::design(std::optional<std::size_t> count) const {
  const std::size_t rows = count.value_or(t_.size());
  if (rows > t_.size()) throw StructuralError("requested more design rows than allocated subjects");
  return build_design(std::span(Z_).first(rows), std::span(t_).first(rows), spec_);
}

Matrix TrialState::information(const Vector& beta) const {
  if (static_cast<std::size_t>(beta.size()) != spec_.q())
    throw StructuralError("coefficient vector has the wrong length");
  Matrix info = Matrix::Zero(beta.size(), beta.size());
  for (std::size_t j = 0; j < t_.size(); ++j)
    accumulate_information(info, build_row(Z_[j], t_[j], spec_), beta);
  return info;
}

double regularized_design_objective(std::span<const Covariates> Z, std::span<const int> t,
                                    const ModelSpec& spec, const Criterion& criterion,
                                    double ridge) {
  const Matrix X = build_design(Z, t, spec);
  const Vector zero = Vector::Zero(static_cast<Eigen::Index>(spec.q()));
  return criterion.evaluate_regularized(information_matrix(X, zero), ridge);
}

std::vector<int> initial_design(std::span<const Covariates> Z, const ModelSpec& spec,
                                const Criterion& criterion, int random_starts, Rng& rng) {
  if (Z.empty()) throw ContractError("initial design needs at least one subject");
  if (random_starts < 1) throw ContractError("initial design needs at least one random start");

  std::vector<int> best;
  double best_value = std::numeric_limits<double>::infinity();

  for (int start = 0; start < random_starts; ++start) {
    std::vector<int> t(Z.size());
    for (auto& v : t) v = rng.sign_with_prob(0.5);
    double current = regularized_design_objective(Z, t, spec, criterion);

    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t pos = 0; pos < t.size(); ++pos) {
        t[pos] = -t[pos];
        const double swapped = regularized_design_objective(Z, t, spec, criterion);
        if (swapped < current) {
          current = swapped;
          changed = true;
        } else {
          t[pos] = -t[pos];
        }
      }
    }
    if (best.empty() || current < best_value) {
      best = t;
      best_value = current;
    }
  }
  return best;
}

json to_json(const ModelSpec& spec) {
  json terms = json::array();
  for (const auto& term : spec.terms()) {
    const std::string z = "z" + std::to_string(term.covariate + 1);
    switch (term.kind) {
      case TermKind::Intercept: terms.push_back("intercept"); break;
      case TermKind::Treatment: terms.push_back("t"); break;
      case TermKind::Covariate: terms.push_back(z); break;
      case TermKind::Interaction: terms.push_back(z + ":t"); break;
    }
  }
  return {{"num_covariates", spec.num_covariates()}, {"terms", terms}};
}

namespace {

std::size_t parse_covariate_index(const std::string& name) {
  if (name.size() < 2 || name[0] != 'z') throw StructuralError("unknown model term '" + name + "'");
  std::size_t idx = 0;
  for (std::size_t i = 1; i < name.size(); ++i) {
    if (name[i] < '0' || name[i] > '9') throw StructuralError("unknown model term '" + name + "'");
    idx = idx * 10 + static_cast<std::size_t>(name[i] - '0');
  }
  if (idx == 0) throw StructuralError("covariates are numbered from z1");
  return idx - 1;
}

}  // namespace

ModelSpec model_spec_from_json(const json& j) {
  const auto s = j.at("num_covariates").get<std::size_t>();
  if (!j.contains("terms")) return ModelSpec::main_effects(s);
  std::vector<Term> terms;
  for (const auto& item : j.at("terms")) {
    const auto name = item.get<std::string>();
    if (name == "intercept" || name == "1") {
      terms.push_back(Term::intercept());
    } else if (name == "t") {
      terms.push_back(Term::treatment());
    } else if (auto colon = name.find(':'); colon != std::string::npos) {
      if (name.substr(colon + 1) != "t") throw StructuralError("unknown model term '" + name + "'");
      terms.push_back(Term::interaction(parse_covariate_index(name.substr(0, colon))));
    } else {
      terms.push_back(Term::main(parse_covariate_index(name)));
    }
  }
  return ModelSpec(std::move(terms), s);
}

json to_json(const CauchyPrior& prior) {
  json out = json::array();
  for (const auto& c : prior.components())
    out.push_back({{"location", c.location}, {"scale", c.scale}});
  return out;
}

CauchyPrior prior_from_json(const json& j) {
  std::vector<CauchyComponent> components;
  for (const auto& c : j)
    components.push_back({c.value("location", 0.0), c.at("scale").get<double>()});
  return CauchyPrior(std::move(components));
}

json to_json(const AllocationEvent& e) {
  return {{"subject", e.subject},
          {"psi_minus", json_number(e.psi_minus)},
          {"psi_plus", json_number(e.psi_plus)},
          {"prob_plus", e.prob_plus},
          {"treatment", e.treatment},
          {"initial", e.initial}};
}

AllocationEvent allocation_event_from_json(const json& j) {
  AllocationEvent e;
  e.subject = j.at("subject").get<std::size_t>();
  e.psi_minus = number_from_json(j.at("psi_minus"));
  e.psi_plus = number_from_json(j.at("psi_plus"));
  e.prob_plus = j.at("prob_plus").get<double>();
  e.treatment = j.at("treatment").get<int>();
  e.initial = j.value("initial", false);
  return e;
}

json to_json(const TrialState& state) {
  json history = json::array();
  for (const auto& e : state.history()) history.push_back(to_json(e));
  json beta = json::array();
  for (Eigen::Index k = 0; k < state.beta_hat().size(); ++k) beta.push_back(state.beta_hat()[k]);
  const auto& fit = state.fit_options();
  return {{"model", to_json(state.spec())},
          {"prior", to_json(state.prior())},
          {"fit", {{"tol", fit.tol}, {"max_iter", fit.max_iter}, {"max_halvings", fit.max_halvings}}},
          {"covariates", state.covariates()},
          {"treatments", state.treatments()},
          {"responses", state.responses()},
          {"history", history},
          {"beta_hat", beta}};
}

TrialState trial_state_from_json(const json& j) {
  FitOptions fit;
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    fit.tol = f.value("tol", fit.tol);
    fit.max_iter = f.value("max_iter", fit.max_iter);
    fit.max_halvings = f.value("max_halvings", fit.max_halvings);
  }
  TrialState state(model_spec_from_json(j.at("model")), prior_from_json(j.at("prior")), fit);
  const auto Z = j.at("covariates").get<std::vector<Covariates>>();
  const auto t = j.at("treatments").get<std::vector<int>>();
  const auto y = j.at("responses").get<std::vector<int>>();
  const auto& history = j.at("history");
  if (history.size() != t.size()) throw InputError("history and treatment counts differ");
  if (y.size() > t.size() || t.size() > Z.size()) throw InputError("inconsistent trial lengths");

  // Replays in protocol order: an initial block, then one subject at a time.
  std::size_t j_subject = 0;
  std::size_t responded = 0;
  while (j_subject < t.size()) {
    const auto first = allocation_event_from_json(history[j_subject]);
    if (first.initial) {
      std::size_t end = j_subject;
      while (end < t.size() && allocation_event_from_json(history[end]).initial) ++end;
      state.enroll_initial(std::span(Z).subspan(j_subject, end - j_subject),
                           std::span(t).subspan(j_subject, end - j_subject));
      j_subject = end;
    } else {
      while (responded < j_subject) state.record_response(y.at(responded++));
      state.record_subject(Z[j_subject]);
      state.assign_treatment(t[j_subject], first);
      ++j_subject;
    }
  }
  while (responded < y.size()) state.record_response(y[responded++]);
  if (Z.size() > t.size()) state.record_subject(Z.back());
  return state;
}

}  // namespace seqdesign
