#pragma once

#include "oraclebo/audio.hpp"

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

namespace httplib {
class Server;
}

namespace oraclebo::session {

/// An API error: HTTP status, machine-readable code, message and optionally the offending field.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, std::string code, const std::string& message, std::optional<std::string> field = {})
      : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }
  const std::optional<std::string>& field() const noexcept { return field_; }
  /// {"code", "message", "field"?}
  std::string to_json() const;

 private:
  int status_;
  std::string code_;
  std::optional<std::string> field_;
};

enum class Phase { AwaitingScore, Proposing, Finished };
std::string to_string(Phase phase);

/// Body of POST /sessions. Corruption is "random" (with corruption_seed), "profile" (bundled name or path,
/// or inline `profile_text`) or "none".
struct CreateRequest {
  std::string clip = "speech";
  audio::CorruptionKind corruption = audio::CorruptionKind::Random;
  std::uint64_t corruption_seed = 0;
  std::string profile;
  std::string profile_text;
  std::size_t n_bins = audio::kDefaultBins;
  double d0 = 10.0;
  audio::PersonalizationOptions options;

  /// Throws ServiceError 400 (with field) on malformed input.
  static CreateRequest from_json(const std::string& body);
  std::string to_json() const;
};

struct HistoryEntry {
  int iteration = 0;
  audio::SpectralFilter candidate;
  double score = 0.0;
  std::string timestamp;
};

/// One live personalization session. Mutations are serialized by the caller (SessionManager).
class Session {
 public:
  /// Throws ServiceError 404 for unknown clips or profiles, 400 for invalid settings.
  Session(std::string id, CreateRequest request);

  const std::string& id() const noexcept { return id_; }
  const CreateRequest& request() const noexcept { return request_; }
  Phase phase() const noexcept { return phase_; }
  const std::vector<HistoryEntry>& history() const noexcept { return history_; }
  const audio::Personalizer& personalizer() const noexcept { return *personalizer_; }
  const audio::AudioScene& scene() const noexcept { return *scene_; }

  /// WAV of the pending candidate applied to the corrupted clip. Throws 409 unless awaiting a score.
  std::shared_ptr<const std::string> clip() const;
  /// Lock-free read of the latest published state JSON.
  std::shared_ptr<const std::string> state_json() const;

  /// Throws 409 on wrong phase or when `expected_iteration` is stale, 422 for scores outside [0, 10].
  void submit_score(double score, std::optional<int> expected_iteration, std::string timestamp);
  void finish();

  /// {"id", "request", "scores": [{"score", "timestamp"}], "stopped"}
  std::string persistence_json() const;
  /// Rebuilds a session by replaying recorded scores through a fresh engine.
  static std::unique_ptr<Session> restore(const std::string& persisted);

  std::mutex& mutation_mutex() { return mutex_; }

 private:
  void advance();
  void publish();

  std::string id_;
  CreateRequest request_;
  std::unique_ptr<audio::AudioScene> scene_;
  std::unique_ptr<audio::Personalizer> personalizer_;
  Phase phase_ = Phase::Proposing;
  bool stopped_ = false;
  std::vector<HistoryEntry> history_;
  std::optional<audio::SpectralFilter> pending_;
  std::shared_ptr<const std::string> clip_;
  std::shared_ptr<const std::string> state_;
  std::mutex mutex_;
};

/// Registry of sessions with optional JSON persistence (one file per session in `store_dir`).
class SessionManager {
 public:
  /// Loads every persisted session found in `store_dir`.
  explicit SessionManager(std::optional<std::filesystem::path> store_dir = std::nullopt);

  /// Returns the state JSON of the new session, including "session_id".
  std::string create(const std::string& body);
  std::string state(const std::string& id) const;
  std::shared_ptr<const std::string> clip(const std::string& id) const;
  /// Body: {"score": x, "iteration"?: k}. Concurrent mutations of the same session get 409.
  std::string submit_score(const std::string& id, const std::string& body);
  std::string finish(const std::string& id);

  std::vector<std::string> ids() const;

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  void persist(const Session& s) const;
  std::string new_id();

  std::optional<std::filesystem::path> store_dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t counter_ = 0;
};

/// Binds the HTTP routes to a manager.
void install_routes(httplib::Server& server, SessionManager& manager);

/// Splits "host:port"; throws std::invalid_argument on malformed input.
std::pair<std::string, int> parse_listen(const std::string& listen);

}  // namespace oraclebo::session
