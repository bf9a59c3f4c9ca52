#include "seqdesign/service.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <random>

#include "seqdesign/errors.hpp"
#include "seqdesign/json_util.hpp"
#include "seqdesign/study_io.hpp"

namespace seqdesign {

using nlohmann::json;

namespace {

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(json_number(v[k]));
  return out;
}

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
  return true;
}

std::string generate_id() {
  std::random_device rd;
  const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  char buf[32];
  std::snprintf(buf, sizeof buf, "trial-%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

ServiceError sequencing(const std::string& message) {
  return ServiceError(409, "sequencing_error", message);
}

Covariates parse_covariates(const json& body) {
  if (!body.is_object() || !body.contains("covariates"))
    throw ServiceError(400, "invalid_request", "body must be an object with a 'covariates' field");
  const auto& c = body.at("covariates");
  Covariates z;
  if (c.is_number_integer()) {
    z.push_back(c.get<int>());
  } else if (c.is_array()) {
    for (const auto& v : c) {
      if (!v.is_number_integer())
        throw ServiceError(400, "invalid_covariates", "covariates must be -1 or +1");
      z.push_back(v.get<int>());
    }
  } else {
    throw ServiceError(400, "invalid_covariates", "covariates must be a list of -1/+1 values");
  }
  return z;
}

void write_all(int fd, const std::string& text) {
  std::size_t done = 0;
  while (done < text.size()) {
    const ssize_t w = ::write(fd, text.data() + done, text.size() - done);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw ServiceError(500, "storage_error", std::string("event log write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(w);
  }
  if (::fsync(fd) != 0)
    throw ServiceError(500, "storage_error", std::string("event log fsync failed: ") + std::strerror(errno));
}

}  // namespace

TrialConfig trial_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError({"<root>: expected an object"});
  std::vector<std::string> diags;
  for (const char* key : {"n", "n0", "covariate_model", "policy"})
    if (!j.contains(key)) diags.push_back(std::string(key) + ": missing required field");

  TrialConfig c;
  auto field = [&](const char* name, auto&& parse) {
    if (!j.contains(name)) return;
    try {
      parse(j.at(name));
    } catch (const std::exception& e) {
      diags.push_back(std::string(name) + ": " + e.what());
    }
  };
  field("id", [&](const json& v) {
    c.id = v.get<std::string>();
    if (!valid_id(c.id)) throw DomainError("use 1-64 letters, digits, '-' or '_'");
  });
  field("n", [&](const json& v) {
    const auto n = v.get<long long>();
    if (n < 2) throw DomainError("must be at least 2");
    c.n = static_cast<std::size_t>(n);
  });
  field("n0", [&](const json& v) {
    const auto n0 = v.get<long long>();
    if (n0 < 1) throw DomainError("must be at least 1");
    c.n0 = static_cast<std::size_t>(n0);
  });
  if (diags.empty() && c.n0 >= c.n) diags.push_back("n0: must be smaller than n");
  bool have_covariates = false;
  field("covariate_model", [&](const json& v) {
    c.covariate_model = CovariateModel::from_json(v);
    have_covariates = true;
  });
  if (have_covariates || !j.contains("covariate_model")) {
    DesignBlock block = design_block_from_json(
        j, have_covariates ? std::optional(c.covariate_model.num_covariates()) : std::nullopt, diags);
    c.spec = std::move(block.spec);
    c.prior = std::move(block.prior);
    c.criterion = std::move(block.criterion);
  }
  field("policy", [&](const json& v) {
    c.policy = PolicySpec::from_json(v);
    if (c.policy.kind == PolicyKind::Nonmyopic && c.policy.horizon > NonmyopicConfig{}.max_horizon)
      throw DomainError("horizon exceeds the cap of " + std::to_string(NonmyopicConfig{}.max_horizon));
  });
  field("seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); });
  field("random_starts", [&](const json& v) {
    c.random_starts = v.get<int>();
    if (c.random_starts < 1) throw DomainError("must be at least 1");
  });
  field("sampling", [&](const json& v) { c.mode = sampling_mode_from_json(v); });
  field("fit", [&](const json& v) {
    c.fit.tol = v.value("tol", c.fit.tol);
    c.fit.max_iter = v.value("max_iter", c.fit.max_iter);
    if (!(c.fit.tol > 0.0) || c.fit.max_iter < 1) throw DomainError("tol and max_iter must be positive");
  });
  if (!diags.empty()) throw ConfigError(std::move(diags));
  return c;
}

json to_json(const TrialConfig& c) {
  return {{"id", c.id},
          {"n", c.n},
          {"n0", c.n0},
          {"model", to_json(c.spec)},
          {"prior", to_json(c.prior)},
          {"criterion", to_json(c.criterion)},
          {"policy", c.policy.to_json()},
          {"covariate_model", c.covariate_model.to_json()},
          {"seed", c.seed},
          {"random_starts", c.random_starts},
          {"sampling", sampling_mode_name(c.mode)},
          {"fit", {{"tol", c.fit.tol}, {"max_iter", c.fit.max_iter}}}};
}

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::CollectingInitial: return "collecting_initial";
    case Phase::Active: return "active";
    case Phase::Complete: return "complete";
  }
  return "unknown";
}

json ServiceError::to_json() const {
  return {{"error", {{"code", code_}, {"message", what()}, {"details", details_}}}};
}

json LogEvent::to_json() const {
  return {{"seq", seq}, {"ts", ts}, {"kind", kind}, {"payload", payload}};
}

LogEvent LogEvent::from_json(const json& j) {
  return {j.at("seq").get<std::uint64_t>(), j.at("ts").get<std::string>(),
          j.at("kind").get<std::string>(), j.at("payload")};
}

TrialSession::TrialSession(TrialConfig config)
    : config_(std::move(config)), state_(config_.spec, config_.prior, config_.fit) {}

void TrialSession::check_enroll(const Covariates& z) const {
  if (phase_ == Phase::Complete) throw ServiceError(409, "trial_complete", "the trial is complete");
  if (enrolled() >= config_.n)
    throw ServiceError(409, "trial_full",
                       "all " + std::to_string(config_.n) + " subjects are enrolled");
  try {
    (void)build_row(z, 1, config_.spec);
  } catch (const std::exception& e) {
    throw ServiceError(400, "invalid_covariates", e.what());
  }
  if (phase_ == Phase::Active && state_.awaiting_response())
    throw sequencing("subject " + std::to_string(state_.num_responses() + 1) +
                     " has no recorded response");
}

std::vector<std::pair<std::string, json>> TrialSession::plan_enroll(const Covariates& z) const {
  check_enroll(z);
  std::vector<std::pair<std::string, json>> out;
  const std::size_t subject = enrolled() + 1;
  if (phase_ == Phase::CollectingInitial) {
    out.emplace_back("enrolled", json{{"subject", subject}, {"covariates", z}});
    if (subject == config_.n0) {
      std::vector<Covariates> Z = buffered_;
      Z.push_back(z);
      out.emplace_back("initial_design", json{{"treatments", design_for(Z)}});
    }
    return out;
  }
  TrialState scratch = state_;
  scratch.record_subject(z);
  Rng rng = subject_rng(config_.seed, subject);
  const AllocationDecision d = allocate(config_.policy, scratch, config_.criterion,
                                        config_.covariate_model, config_.n, rng, config_.mode);
  out.emplace_back("allocated", json{{"subject", subject},
                                     {"covariates", z},
                                     {"treatment", d.sampled},
                                     {"prob_plus", d.prob_plus},
                                     {"psi_plus", json_number(d.psi_plus)},
                                     {"psi_minus", json_number(d.psi_minus)}});
  return out;
}

std::vector<int> TrialSession::design_for(const std::vector<Covariates>& Z) const {
  Rng rng = initial_design_rng(config_.seed);
  return initial_design(Z, config_.spec, config_.criterion, config_.random_starts, rng);
}

std::vector<std::pair<std::string, json>> TrialSession::plan_recovery() const {
  if (phase_ != Phase::CollectingInitial || buffered_.size() != config_.n0) return {};
  return {{"initial_design", json{{"treatments", design_for(buffered_)}}}};
}

json TrialSession::plan_response(std::size_t subject_index, int y) const {
  if (y != 0 && y != 1) throw ServiceError(400, "invalid_value", "y must be 0 or 1");
  if (subject_index < 1 || subject_index > enrolled())
    throw ServiceError(404, "unknown_subject",
                       "subject " + std::to_string(subject_index) + " is not enrolled");
  if (subject_index > state_.num_allocated())
    throw sequencing("subject " + std::to_string(subject_index) + " has no treatment yet");
  if (subject_index <= state_.num_responses())
    throw ServiceError(409, "duplicate_response",
                       "subject " + std::to_string(subject_index) + " already has a response");
  if (subject_index != state_.num_responses() + 1)
    throw sequencing("responses are recorded in subject order; next is subject " +
                     std::to_string(state_.num_responses() + 1));
  return {{"subject", subject_index}, {"y", y}};
}

void TrialSession::apply(const std::string& kind, const json& payload, std::uint64_t seq) {
  if (seq <= last_seq_) throw InputError("event sequence numbers must increase");
  if (kind == "created") {
    // configuration is consumed by the constructor
  } else if (kind == "enrolled") {
    if (phase_ != Phase::CollectingInitial) throw InputError("enrolled event outside the initial phase");
    Covariates z = payload.at("covariates").get<Covariates>();
    (void)build_row(z, 1, config_.spec);
    buffered_.push_back(std::move(z));
  } else if (kind == "initial_design") {
    const auto t = payload.at("treatments").get<std::vector<int>>();
    if (phase_ != Phase::CollectingInitial || buffered_.size() != config_.n0 || t.size() != config_.n0)
      throw InputError("initial design event does not match the enrolled subjects");
    state_.enroll_initial(buffered_, t);
    buffered_.clear();
    phase_ = Phase::Active;
  } else if (kind == "allocated") {
    if (phase_ != Phase::Active) throw InputError("allocation outside the active phase");
    state_.record_subject(payload.at("covariates").get<Covariates>());
    AllocationEvent event;
    event.prob_plus = payload.at("prob_plus").get<double>();
    event.psi_plus = number_from_json(payload.at("psi_plus"));
    event.psi_minus = number_from_json(payload.at("psi_minus"));
    state_.assign_treatment(payload.at("treatment").get<int>(), event);
  } else if (kind == "response") {
    if (payload.at("subject").get<std::size_t>() != state_.num_responses() + 1)
      throw InputError("response event out of order");
    state_.record_response(payload.at("y").get<int>());
    if (state_.num_responses() >= config_.n0) {
      psi_trace_.push_back(current_psi());
      beta_trace_.push_back(state_.beta_hat());
    }
    if (state_.num_responses() == config_.n) phase_ = Phase::Complete;
  } else {
    throw InputError("unknown event kind '" + kind + "'");
  }
  last_seq_ = seq;
}

double TrialSession::current_psi() const {
  return objective(state_.design(state_.num_responses()), state_.beta_hat(), config_.criterion);
}

json TrialSession::snapshot() const {
  json beta_names = json::array();
  for (std::size_t j = 0; j < config_.spec.q(); ++j) beta_names.push_back(config_.spec.coefficient_name(j));

  json subjects = json::array();
  const auto& history = state_.history();
  for (std::size_t k = 0; k < state_.size(); ++k) {
    json s{{"subject", k + 1}, {"covariates", state_.covariates()[k]}};
    if (k < history.size()) {
      const auto& e = history[k];
      s["treatment"] = e.treatment;
      s["prob_plus"] = e.prob_plus;
      s["allocation_probability"] = e.treatment == 1 ? e.prob_plus : 1.0 - e.prob_plus;
      s["psi_plus"] = json_number(e.psi_plus);
      s["psi_minus"] = json_number(e.psi_minus);
      s["initial"] = e.initial;
    } else {
      s["treatment"] = nullptr;
    }
    s["response"] = k < state_.num_responses() ? json(state_.responses()[k]) : json(nullptr);
    subjects.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < buffered_.size(); ++k)
    subjects.push_back({{"subject", state_.size() + k + 1},
                        {"covariates", buffered_[k]},
                        {"treatment", nullptr},
                        {"response", nullptr},
                        {"initial", true}});

  json cells = json::array();
  for (const auto& z : CovariateModel::empirical(config_.spec.num_covariates()).support()) {
    for (int t : {-1, 1}) {
      std::size_t count = 0;
      for (std::size_t k = 0; k < state_.num_allocated(); ++k)
        if (state_.covariates()[k] == z && state_.treatments()[k] == t) ++count;
      cells.push_back({{"z", z}, {"t", t}, {"count", count}});
    }
  }

  json psi = json::array();
  for (double v : psi_trace_) psi.push_back(json_number(v));
  json betas = json::array();
  for (const auto& b : beta_trace_) betas.push_back(vector_json(b));
  json sizes = json::array();
  for (std::size_t k = 0; k < psi_trace_.size(); ++k) sizes.push_back(config_.n0 + k);

  json pending = nullptr;
  if (state_.awaiting_response()) pending = state_.num_responses() + 1;

  return {{"id", config_.id},
          {"phase", phase_name(phase_)},
          {"n", config_.n},
          {"n0", config_.n0},
          {"i", state_.num_allocated()},
          {"enrolled", enrolled()},
          {"num_responses", state_.num_responses()},
          {"pending_response", pending},
          {"beta_names", beta_names},
          {"beta_hat", vector_json(state_.beta_hat())},
          {"psi_trace", psi},
          {"beta_trace", betas},
          {"trace_sample_sizes", sizes},
          {"subjects", subjects},
          {"cell_counts", cells},
          {"last_seq", last_seq_},
          {"config", to_json(config_)}};
}

TrialRegistry::TrialRegistry(std::filesystem::path state_dir) : dir_(std::move(state_dir)) {
  std::filesystem::create_directories(dir_);
  std::vector<std::filesystem::path> logs;
  for (const auto& entry : std::filesystem::directory_iterator(dir_))
    if (entry.is_regular_file() && entry.path().extension() == ".log") logs.push_back(entry.path());
  std::sort(logs.begin(), logs.end());
  for (const auto& log : logs) recover(log);
}

TrialRegistry::~TrialRegistry() {
  for (auto& [id, entry] : sessions_)
    if (entry->fd >= 0) ::close(entry->fd);
}

void TrialRegistry::recover(const std::filesystem::path& log) {
  std::ifstream in(log, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = log.filename().string();

  std::vector<LogEvent> events;
  std::size_t pos = 0;
  std::size_t good_end = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // torn final record
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) {
      good_end = pos;
      continue;
    }
    try {
      events.push_back(LogEvent::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw InputError(name + ": unreadable event: " + e.what());
    }
    good_end = pos;
  }
  if (events.empty()) {
    // never acknowledged: the creating write did not complete
    std::filesystem::remove(log);
    return;
  }
  if (events.front().kind != "created")
    throw InputError(name + ": log does not start with a created event");

  TrialSession session(trial_config_from_json(events.front().payload.at("config")));
  if (session.config().id + ".log" != name) throw InputError(name + ": trial id does not match file name");
  for (const auto& e : events) {
    try {
      session.apply(e.kind, e.payload, e.seq);
    } catch (const std::exception& ex) {
      throw InputError(name + ": event " + std::to_string(e.seq) + " cannot be replayed: " + ex.what());
    }
  }

  const int fd = ::open(log.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC);
  if (fd < 0) throw InputError(name + ": cannot open for append: " + std::strerror(errno));
  if (good_end < text.size() && ::ftruncate(fd, static_cast<off_t>(good_end)) != 0) {
    ::close(fd);
    throw InputError(name + ": cannot drop torn record: " + std::strerror(errno));
  }
  auto entry = std::make_shared<Entry>(std::move(session));
  entry->events = std::move(events);
  entry->fd = fd;
  const auto unfinished = entry->session.plan_recovery();
  if (!unfinished.empty()) commit(*entry, unfinished);
  sessions_.emplace(entry->session.config().id, std::move(entry));
}

std::shared_ptr<TrialRegistry::Entry> TrialRegistry::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "not_found", "no trial with id '" + id + "'");
  return it->second;
}

void TrialRegistry::commit(Entry& entry, const std::vector<std::pair<std::string, json>>& planned) {
  TrialSession next = entry.session;
  std::vector<LogEvent> staged;
  std::string text;
  for (const auto& [kind, payload] : planned) {
    LogEvent e{next.last_seq() + 1, timestamp(), kind, payload};
    try {
      next.apply(e.kind, e.payload, e.seq);
    } catch (const FitError& ex) {
      throw ServiceError(422, "fit_failed", ex.what());
    }
    text += e.to_json().dump() + "\n";
    staged.push_back(std::move(e));
  }
  write_all(entry.fd, text);
  entry.session = std::move(next);
  entry.events.insert(entry.events.end(), staged.begin(), staged.end());
}

json TrialRegistry::create_trial(const json& body) {
  TrialConfig config;
  try {
    config = trial_config_from_json(body);
  } catch (const ConfigError& e) {
    throw ServiceError(400, "invalid_config", e.what(), e.diagnostics());
  }
  std::unique_lock lock(mutex_);
  if (config.id.empty()) {
    do config.id = generate_id();
    while (sessions_.contains(config.id));
  }
  if (sessions_.contains(config.id))
    throw ServiceError(409, "conflict", "a trial with id '" + config.id + "' already exists");

  const auto path = dir_ / (config.id + ".log");
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw ServiceError(409, "conflict", "a trial with id '" + config.id + "' already exists");
    throw ServiceError(500, "storage_error", std::string("cannot create event log: ") + std::strerror(errno));
  }
  auto entry = std::make_shared<Entry>(TrialSession(config));
  entry->fd = fd;
  try {
    commit(*entry, {{"created", json{{"config", to_json(config)}}}});
  } catch (...) {
    ::close(fd);
    std::filesystem::remove(path);
    throw;
  }
  json snap = entry->session.snapshot();
  sessions_.emplace(config.id, std::move(entry));
  return snap;
}

json TrialRegistry::enroll(const std::string& id, const json& body) {
  const Covariates z = parse_covariates(body);
  auto entry = find(id);
  std::unique_lock lock(entry->mutex);
  const auto planned = entry->session.plan_enroll(z);
  commit(*entry, planned);

  const TrialSession& s = entry->session;
  const std::size_t subject = s.enrolled();
  json out{{"subject_index", subject}, {"phase", phase_name(s.phase())}};
  const auto& [kind, payload] = planned.back();
  if (kind == "enrolled") {
    out["treatment"] = nullptr;
    out["allocation_probability"] = nullptr;
    out["initial_remaining"] = s.config().n0 - subject;
  } else if (kind == "initial_design") {
    json initial = json::array();
    const auto& t = s.state().treatments();
    for (std::size_t k = 0; k < t.size(); ++k) initial.push_back({{"subject_index", k + 1}, {"treatment", t[k]}});
    out["treatment"] = t.back();
    out["allocation_probability"] = 1.0;
    out["initial_treatments"] = initial;
  } else {
    const int t = payload.at("treatment").get<int>();
    const double p = payload.at("prob_plus").get<double>();
    out["treatment"] = t;
    out["allocation_probability"] = t == 1 ? p : 1.0 - p;
    out["prob_plus"] = p;
    out["psi_plus"] = payload.at("psi_plus");
    out["psi_minus"] = payload.at("psi_minus");
  }
  return out;
}

json TrialRegistry::record_response(const std::string& id, const json& body) {
  if (!body.is_object() || !body.contains("subject_index") || !body.contains("y"))
    throw ServiceError(400, "invalid_request", "body must carry 'subject_index' and 'y'");
  if (!body.at("subject_index").is_number_integer() || !body.at("y").is_number_integer())
    throw ServiceError(400, "invalid_request", "'subject_index' and 'y' must be integers");
  const auto subject = body.at("subject_index").get<long long>();
  const auto y = body.at("y").get<long long>();
  if (y != 0 && y != 1) throw ServiceError(400, "invalid_value", "y must be 0 or 1");
  if (subject < 1) throw ServiceError(404, "unknown_subject", "subjects are numbered from 1");

  auto entry = find(id);
  std::unique_lock lock(entry->mutex);
  const json payload = entry->session.plan_response(static_cast<std::size_t>(subject), static_cast<int>(y));
  commit(*entry, {{"response", payload}});

  const TrialSession& s = entry->session;
  return {{"subject_index", subject},
          {"y", y},
          {"phase", phase_name(s.phase())},
          {"beta_hat", vector_json(s.state().beta_hat())},
          {"psi_current", json_number(s.current_psi())}};
}

json TrialRegistry::snapshot(const std::string& id) const {
  auto entry = find(id);
  std::shared_lock lock(entry->mutex);
  return entry->session.snapshot();
}

json TrialRegistry::events(const std::string& id, std::uint64_t since) const {
  auto entry = find(id);
  std::shared_lock lock(entry->mutex);
  json out = json::array();
  for (const auto& e : entry->events)
    if (e.seq > since) out.push_back(e.to_json());
  return {{"id", id}, {"events", out}};
}

std::vector<std::string> TrialRegistry::ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, entry] : sessions_) out.push_back(id);
  return out;
}

}  // namespace seqdesign
