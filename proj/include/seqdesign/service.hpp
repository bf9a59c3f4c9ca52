#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqdesign/covariates.hpp"
#include "seqdesign/policy.hpp"
#include "seqdesign/trial.hpp"

namespace seqdesign {

/// Settings of one live trial, fixed at creation.
struct TrialConfig {
  std::string id;
  std::size_t n = 100;
  std::size_t n0 = 10;
  ModelSpec spec = ModelSpec::main_effects(1);
  CauchyPrior prior = CauchyPrior::defaults(ModelSpec::main_effects(1));
  Criterion criterion = Criterion::treatment_effect(ModelSpec::main_effects(1));
  PolicySpec policy = PolicySpec::myopic();
  CovariateModel covariate_model = CovariateModel::fixed({0.5});
  std::uint64_t seed = 1;
  int random_starts = 10;
  SamplingMode mode = SamplingMode::BiasedCoin;
  FitOptions fit{};
};

/// Required keys: n, n0, covariate_model, policy. Throws ConfigError.
TrialConfig trial_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrialConfig& config);

enum class Phase { CollectingInitial, Active, Complete };
const char* phase_name(Phase phase);

/// A failed request, carrying an HTTP status and a stable error code.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message,
               nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message), status_(status), code_(std::move(code)),
        details_(std::move(details)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const nlohmann::json& details() const { return details_; }
  nlohmann::json to_json() const;

 private:
  int status_;
  std::string code_;
  nlohmann::json details_;
};

/// One log record: {seq, ts, kind, payload}.
struct LogEvent {
  std::uint64_t seq = 0;
  std::string ts;
  std::string kind;
  nlohmann::json payload;

  nlohmann::json to_json() const;
  static LogEvent from_json(const nlohmann::json& j);
};

/// In-memory trial: the state machine driven by events. Every change goes
/// through apply(), both live and on replay, so a replayed session equals the
/// live one. Kinds: created, enrolled, initial_design, allocated, response.
class TrialSession {
 public:
  explicit TrialSession(TrialConfig config);

  const TrialConfig& config() const { return config_; }
  const TrialState& state() const { return state_; }
  Phase phase() const { return phase_; }
  std::uint64_t last_seq() const { return last_seq_; }

  /// Events an enrollment would produce; the allocation RNG is drawn here
  /// and its outcome is stored in the event. Does not change the session.
  std::vector<std::pair<std::string, nlohmann::json>> plan_enroll(const Covariates& z) const;
  /// Events left unwritten by an interrupted commit: the initial design when
  /// all n0 subjects are enrolled but the design event is missing.
  std::vector<std::pair<std::string, nlohmann::json>> plan_recovery() const;
  /// Validated response event for subject `subject_index` (1-based).
  nlohmann::json plan_response(std::size_t subject_index, int y) const;

  void apply(const std::string& kind, const nlohmann::json& payload, std::uint64_t seq);

  /// Criterion of the responded design at the current estimate.
  double current_psi() const;
  /// Subjects enrolled, including those still waiting for the initial design.
  std::size_t enrolled() const { return state_.size() + buffered_.size(); }

  nlohmann::json snapshot() const;

 private:
  void check_enroll(const Covariates& z) const;
  std::vector<int> design_for(const std::vector<Covariates>& Z) const;

  TrialConfig config_;
  TrialState state_;
  Phase phase_ = Phase::CollectingInitial;
  std::vector<Covariates> buffered_;
  std::vector<double> psi_trace_;
  std::vector<Vector> beta_trace_;
  std::uint64_t last_seq_ = 0;
};

/// File-backed collection of sessions. Each trial owns `<state_dir>/<id>.log`,
/// one JSON event per line, appended and fsynced before the change is
/// visible. Construction replays every log found in `state_dir`.
class TrialRegistry {
 public:
  explicit TrialRegistry(std::filesystem::path state_dir);
  ~TrialRegistry();
  TrialRegistry(const TrialRegistry&) = delete;
  TrialRegistry& operator=(const TrialRegistry&) = delete;

  nlohmann::json create_trial(const nlohmann::json& config);
  nlohmann::json enroll(const std::string& id, const nlohmann::json& body);
  nlohmann::json record_response(const std::string& id, const nlohmann::json& body);
  nlohmann::json snapshot(const std::string& id) const;
  nlohmann::json events(const std::string& id, std::uint64_t since = 0) const;
  std::vector<std::string> ids() const;

 private:
  struct Entry {
    std::shared_mutex mutex;
    TrialSession session;
    std::vector<LogEvent> events;
    int fd = -1;
    explicit Entry(TrialSession s) : session(std::move(s)) {}
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  /// Applies the events to a copy of the session, logs them, then commits.
  void commit(Entry& entry, const std::vector<std::pair<std::string, nlohmann::json>>& planned);
  void recover(const std::filesystem::path& log);

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace seqdesign
