#include "oraclebo/session.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

namespace oraclebo::session {

using nlohmann::json;

namespace {

const std::set<std::string> kCreateKeys{"clip",   "corruption", "corruption_seed", "profile", "profile_text",
                                        "n_bins", "d0",         "budget",          "l_count", "seed",
                                        "n_low",  "q",          "n_mc",            "n_raw",   "r_init",
                                        "sigma"};

ServiceError bad_request(const std::string& field, const std::string& message) {
  return ServiceError(400, "invalid_config", field + ": " + message, field);
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::parse_error&) {
    throw ServiceError(400, "invalid_json", "request body is not valid JSON");
  }
}

int int_field(const json& j, const std::string& key, int fallback, int min_value) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw bad_request(key, "must be an integer");
  const auto x = v.get<long long>();
  if (x < min_value || x > 1'000'000) throw bad_request(key, "is out of range");
  return static_cast<int>(x);
}

double number_field(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw bad_request(key, "must be a number");
  return v.get<double>();
}

std::string string_field(const json& j, const std::string& key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) throw bad_request(key, "must be a string");
  return v.get<std::string>();
}

std::uint64_t seed_field(const json& j, const std::string& key) {
  if (!j.contains(key)) return 0;
  const json& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw bad_request(key, "must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::string corruption_name(audio::CorruptionKind k) {
  switch (k) {
    case audio::CorruptionKind::None:
      return "none";
    case audio::CorruptionKind::Random:
      return "random";
    case audio::CorruptionKind::Profile:
      return "profile";
  }
  return "random";
}

json vector_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::unique_ptr<audio::AudioScene> build_scene(const CreateRequest& r) {
  const auto ids = audio::clip_ids();
  if (std::find(ids.begin(), ids.end(), r.clip) == ids.end()) {
    throw ServiceError(404, "clip_not_found", "unknown clip '" + r.clip + "'", "clip");
  }
  try {
    audio::clinical_bins(r.n_bins);
  } catch (const audio::AudioError& e) {
    throw bad_request("n_bins", e.what());
  }
  if (!(r.d0 > 0.0)) throw bad_request("d0", "must be positive");
  audio::SceneConfig sc;
  sc.clip = r.clip;
  sc.corruption = r.corruption;
  sc.corruption_seed = r.corruption_seed;
  sc.profile = r.profile;
  sc.n_bins = r.n_bins;
  sc.d0 = r.d0;
  if (r.corruption != audio::CorruptionKind::Profile) return std::make_unique<audio::AudioScene>(audio::make_scene(sc));

  audio::HearingProfile profile;
  try {
    if (!r.profile_text.empty()) {
      profile = audio::parse_profile(r.profile_text);
    } else {
      const auto names = audio::bundled_profile_names();
      if (std::find(names.begin(), names.end(), r.profile) != names.end()) {
        profile = audio::bundled_profile(r.profile);
      } else {
        if (!std::filesystem::exists(r.profile)) {
          throw ServiceError(404, "profile_not_found", "profile '" + r.profile + "' does not exist", "profile");
        }
        profile = audio::load_profile(r.profile);
      }
    }
  } catch (const audio::ProfileError& e) {
    throw ServiceError(400, "invalid_profile", e.what(), "profile." + e.field());
  }
  audio::ScoreScale scale;
  scale.d0 = r.d0;
  audio::ListenerModel listener(audio::clip_by_id(r.clip), audio::hearing_loss_filter(profile, r.n_bins), scale);
  audio::HearingProfile measured = audio::measure_profile(listener.corruption(), audio::ProfileSource::HearingLoss);
  return std::make_unique<audio::AudioScene>(
      audio::AudioScene{sc, std::move(listener), measured, audio::clinical_bins(r.n_bins)});
}

}  // namespace

std::string ServiceError::to_json() const {
  json j{{"code", code_}, {"message", what()}};
  if (field_) j["field"] = *field_;
  return j.dump();
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::AwaitingScore:
      return "awaiting-score";
    case Phase::Proposing:
      return "proposing";
    case Phase::Finished:
      return "finished";
  }
  return "finished";
}

CreateRequest CreateRequest::from_json(const std::string& body) {
  const json j = body.empty() ? json::object() : parse_body(body);
  if (!j.is_object()) throw ServiceError(400, "invalid_json", "request body must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kCreateKeys.count(key)) throw bad_request(key, "unknown key");
  }
  CreateRequest r;
  r.clip = string_field(j, "clip", r.clip);
  const std::string corruption = string_field(j, "corruption", "");
  r.profile = string_field(j, "profile", "");
  r.profile_text = string_field(j, "profile_text", "");
  if (corruption.empty()) {
    r.corruption = (r.profile.empty() && r.profile_text.empty()) ? audio::CorruptionKind::Random
                                                                  : audio::CorruptionKind::Profile;
  } else if (corruption == "random") {
    r.corruption = audio::CorruptionKind::Random;
  } else if (corruption == "profile") {
    r.corruption = audio::CorruptionKind::Profile;
  } else if (corruption == "none") {
    r.corruption = audio::CorruptionKind::None;
  } else {
    throw bad_request("corruption", "must be random, profile or none");
  }
  if (r.corruption == audio::CorruptionKind::Profile && r.profile.empty() && r.profile_text.empty()) {
    throw bad_request("profile", "a profile name, path or profile_text is required");
  }
  r.corruption_seed = seed_field(j, "corruption_seed");
  r.n_bins = static_cast<std::size_t>(int_field(j, "n_bins", static_cast<int>(r.n_bins), 2));
  r.d0 = number_field(j, "d0", r.d0);
  auto& o = r.options;
  o.budget = int_field(j, "budget", o.budget, 0);
  o.l_count = static_cast<std::size_t>(int_field(j, "l_count", static_cast<int>(o.l_count), 0));
  if (o.l_count > audio::kClinicalFrequencies.size()) throw bad_request("l_count", "at most 7 audiogram queries exist");
  if (o.budget < static_cast<int>(o.l_count)) throw bad_request("budget", "must be at least l_count");
  o.seed = seed_field(j, "seed");
  o.n_low = int_field(j, "n_low", o.n_low, 1);
  o.q = int_field(j, "q", o.q, 1);
  o.n_mc = int_field(j, "n_mc", o.n_mc, 1);
  o.n_raw = int_field(j, "n_raw", o.n_raw, 1);
  o.r_init = int_field(j, "r_init", o.r_init, 1);
  o.sigma = number_field(j, "sigma", o.sigma);
  if (!(o.sigma > 0.0)) throw bad_request("sigma", "must be positive");
  return r;
}

std::string CreateRequest::to_json() const {
  json j{{"clip", clip},
         {"corruption", corruption_name(corruption)},
         {"corruption_seed", corruption_seed},
         {"n_bins", n_bins},
         {"d0", d0},
         {"budget", options.budget},
         {"l_count", options.l_count},
         {"seed", options.seed},
         {"n_low", options.n_low},
         {"q", options.q},
         {"n_mc", options.n_mc},
         {"n_raw", options.n_raw},
         {"r_init", options.r_init},
         {"sigma", options.sigma}};
  if (!profile.empty()) j["profile"] = profile;
  if (!profile_text.empty()) j["profile_text"] = profile_text;
  return j.dump();
}

Session::Session(std::string id, CreateRequest request) : id_(std::move(id)), request_(std::move(request)) {
  scene_ = build_scene(request_);
  try {
    personalizer_ = std::make_unique<audio::Personalizer>(*scene_, request_.options);
  } catch (const std::invalid_argument& e) {
    throw ServiceError(400, "invalid_config", e.what());
  }
  advance();
}

void Session::advance() {
  phase_ = Phase::Proposing;
  pending_.reset();
  clip_.reset();
  publish();
  if (stopped_ || personalizer_->finished()) {
    phase_ = Phase::Finished;
  } else {
    pending_ = personalizer_->pending_filter();
    const audio::Clip rendered = audio::apply_filter(scene_->listener.corrupted(), *pending_);
    clip_ = std::make_shared<const std::string>(audio::render_wav(rendered));
    phase_ = Phase::AwaitingScore;
  }
  publish();
}

void Session::publish() {
  const auto& ledger = personalizer_->engine().ledger();
  json j;
  j["session_id"] = id_;
  j["phase"] = to_string(phase_);
  j["config"] = json::parse(request_.to_json());
  j["ledger"] = {{"filter_used", ledger.filter_used()},
                 {"dimension_used", ledger.dimension_used()},
                 {"total_budget", ledger.total_budget()},
                 {"remaining", ledger.remaining()}};
  j["iteration"] = static_cast<int>(history_.size());
  json audiogram = json::array();
  for (const auto& f : personalizer_->audiogram()) {
    audiogram.push_back({{"frequency_hz", audio::bin_frequency(f.index, request_.n_bins)},
                         {"compensation_db", audio::kEngineRangeDb * f.value}});
  }
  j["audiogram"] = audiogram;
  json history = json::array();
  for (const auto& h : history_) {
    history.push_back({{"iteration", h.iteration},
                       {"score", h.score},
                       {"timestamp", h.timestamp},
                       {"candidate_db", vector_json(h.candidate.gains_db)}});
  }
  j["history"] = history;
  const auto best = personalizer_->best_score();
  j["best_score"] = best ? json(*best) : json(nullptr);
  const auto best_filter = personalizer_->best_filter();
  j["best_filter_db"] = best_filter ? vector_json(best_filter->gains_db) : json(nullptr);
  j["pending_candidate_db"] = pending_ ? vector_json(pending_->gains_db) : json(nullptr);
  std::atomic_store(&state_, std::make_shared<const std::string>(j.dump()));
}

std::shared_ptr<const std::string> Session::clip() const {
  auto c = std::atomic_load(&clip_);
  if (!c) throw ServiceError(409, "wrong_phase", "session is not awaiting a score");
  return c;
}

std::shared_ptr<const std::string> Session::state_json() const { return std::atomic_load(&state_); }

void Session::submit_score(double score, std::optional<int> expected_iteration, std::string timestamp) {
  if (phase_ != Phase::AwaitingScore) throw ServiceError(409, "wrong_phase", "session is not awaiting a score");
  const int iteration = static_cast<int>(history_.size());
  if (expected_iteration && *expected_iteration != iteration) {
    throw ServiceError(409, "stale_submission",
                       "score is for iteration " + std::to_string(*expected_iteration) + " but the session is at " +
                           std::to_string(iteration),
                       "iteration");
  }
  if (!(score >= 0.0 && score <= 10.0)) throw ServiceError(422, "score_out_of_range", "score must lie in [0, 10]", "score");
  HistoryEntry entry{iteration, *pending_, score, std::move(timestamp)};
  personalizer_->submit_score(score);
  history_.push_back(std::move(entry));
  advance();
}

void Session::finish() {
  stopped_ = true;
  if (phase_ != Phase::Finished) advance();
}

std::string Session::persistence_json() const {
  json scores = json::array();
  for (const auto& h : history_) scores.push_back({{"score", h.score}, {"timestamp", h.timestamp}});
  json j{{"id", id_}, {"request", json::parse(request_.to_json())}, {"scores", scores}, {"stopped", stopped_}};
  return j.dump(2) + "\n";
}

std::unique_ptr<Session> Session::restore(const std::string& persisted) {
  const json j = json::parse(persisted);
  auto s = std::make_unique<Session>(j.at("id").get<std::string>(), CreateRequest::from_json(j.at("request").dump()));
  for (const auto& e : j.at("scores")) {
    s->submit_score(e.at("score").get<double>(), std::nullopt, e.at("timestamp").get<std::string>());
  }
  if (j.value("stopped", false)) s->finish();
  return s;
}

SessionManager::SessionManager(std::optional<std::filesystem::path> store_dir) : store_dir_(std::move(store_dir)) {
  if (!store_dir_) return;
  std::filesystem::create_directories(*store_dir_);
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(*store_dir_)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
      std::shared_ptr<Session> s = Session::restore(ss.str());
      sessions_[s->id()] = std::move(s);
    } catch (const std::exception& e) {
      std::cerr << "skipping unreadable session file " << path << ": " << e.what() << "\n";
    }
  }
}

std::string SessionManager::new_id() {
  static thread_local std::mt19937_64 gen{std::random_device{}()};
  for (;;) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen() ^ ++counter_));
    if (!sessions_.count(buf)) return buf;
  }
}

std::string SessionManager::create(const std::string& body) {
  CreateRequest req = CreateRequest::from_json(body);
  std::string id;
  {
    std::unique_lock lock(map_mutex_);
    id = new_id();
    sessions_[id] = nullptr;  // reserve
  }
  std::shared_ptr<Session> s;
  try {
    s = std::make_shared<Session>(id, std::move(req));
  } catch (...) {
    std::unique_lock lock(map_mutex_);
    sessions_.erase(id);
    throw;
  }
  persist(*s);
  const std::string state = *s->state_json();
  {
    std::unique_lock lock(map_mutex_);
    sessions_[id] = std::move(s);
  }
  return state;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end() || !it->second) throw ServiceError(404, "not_found", "unknown session '" + id + "'");
  return it->second;
}

std::string SessionManager::state(const std::string& id) const { return *find(id)->state_json(); }

std::shared_ptr<const std::string> SessionManager::clip(const std::string& id) const { return find(id)->clip(); }

std::string SessionManager::submit_score(const std::string& id, const std::string& body) {
  const std::shared_ptr<Session> s = find(id);
  const json j = parse_body(body);
  if (!j.is_object() || !j.contains("score")) throw ServiceError(400, "invalid_request", "body needs a score", "score");
  if (!j.at("score").is_number()) throw ServiceError(422, "score_out_of_range", "score must be a number in [0, 10]", "score");
  std::optional<int> expected;
  if (j.contains("iteration")) {
    if (!j.at("iteration").is_number_integer()) throw ServiceError(400, "invalid_request", "iteration must be an integer", "iteration");
    expected = j.at("iteration").get<int>();
  }
  std::unique_lock lock(s->mutation_mutex(), std::try_to_lock);
  if (!lock.owns_lock()) throw ServiceError(409, "busy", "another mutation of this session is in progress");
  s->submit_score(j.at("score").get<double>(), expected, now_iso8601());
  persist(*s);
  return *s->state_json();
}

std::string SessionManager::finish(const std::string& id) {
  const std::shared_ptr<Session> s = find(id);
  std::unique_lock lock(s->mutation_mutex(), std::try_to_lock);
  if (!lock.owns_lock()) throw ServiceError(409, "busy", "another mutation of this session is in progress");
  s->finish();
  persist(*s);
  return *s->state_json();
}

std::vector<std::string> SessionManager::ids() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) {
    if (s) out.push_back(id);
  }
  return out;
}

void SessionManager::persist(const Session& s) const {
  if (!store_dir_) return;
  const auto path = *store_dir_ / (s.id() + ".json");
  const auto tmp = *store_dir_ / (s.id() + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    out << s.persistence_json();
    if (!out) throw ServiceError(500, "storage_error", "cannot write session snapshot");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ServiceError(500, "storage_error", "cannot store session snapshot: " + ec.message());
}

void install_routes(httplib::Server& server, SessionManager& manager) {
  auto guarded = [](auto fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const ServiceError& e) {
        res.status = e.status();
        res.set_content(e.to_json(), "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(ServiceError(500, "internal", e.what()).to_json(), "application/json");
      }
    };
  };
  server.Post("/sessions", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
                res.status = 201;
                res.set_content(manager.create(req.body), "application/json");
              }));
  server.Get(R"(/sessions/([^/]+))", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
               res.set_content(manager.state(req.matches[1]), "application/json");
             }));
  server.Get(R"(/sessions/([^/]+)/clip)", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
               const auto wav = manager.clip(req.matches[1]);
               res.set_content(*wav, "audio/wav");
             }));
  server.Post(R"(/sessions/([^/]+)/score)", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
                res.set_content(manager.submit_score(req.matches[1], req.body), "application/json");
              }));
  server.Post(R"(/sessions/([^/]+)/finish)", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
                res.set_content(manager.finish(req.matches[1]), "application/json");
              }));
}

std::pair<std::string, int> parse_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == listen.size()) {
    throw std::invalid_argument("listen address must be host:port");
  }
  const std::string host = listen.substr(0, colon);
  const std::string port_text = listen.substr(colon + 1);
  if (!std::all_of(port_text.begin(), port_text.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw std::invalid_argument("port must be numeric");
  }
  const int port = std::stoi(port_text);
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range");
  return {host, port};
}

}  // namespace oraclebo::session
