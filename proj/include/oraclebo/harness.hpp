#pragma once

#include "oraclebo/audio.hpp"
#include "oraclebo/objectives.hpp"
#include "oraclebo/optimizer.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oraclebo::harness {

/// Invalid experiment configuration; `field` names the offending key when known.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// One comparison arm of an experiment.
struct ModeSpec {
  std::string label;
  optimizer::Mode mode = optimizer::Mode::OracleBo;
  std::size_t l_count = 0;
  optimizer::DimensionSelection selection = optimizer::DimensionSelection::Random;
  std::vector<std::size_t> explicit_dims;
};

/// How `sigma` in a config is read: directly in normalized [-1, 1] units, or in the objective's native
/// units (converted with the mean active-coordinate width).
enum class SigmaUnits { Normalized, Native };

struct AudioExperiment {
  audio::SceneConfig scene;
  audio::PersonalizationOptions options;
};

struct ExperimentConfig {
  std::string name = "experiment";
  objectives::ObjectiveId objective = objectives::ObjectiveId::P1;
  std::vector<std::size_t> active;
  /// Shared run settings; per-mode fields (mode, l_count, selection, seed, f_evals) are filled per run.
  optimizer::RunConfig base;
  SigmaUnits sigma_units = SigmaUnits::Normalized;
  int n_repeats = 10;
  std::vector<ModeSpec> modes;
  /// Present for audio-scene experiments; `objective` and `modes` are then unused.
  std::optional<AudioExperiment> audio;
  std::string csv_name = "regret.csv";
  std::string summary_name = "summary.json";

  /// Throws ConfigError.
  void validate() const;
};

/// Parses the JSON experiment format. Unknown keys are errors. Throws ConfigError.
ExperimentConfig parse_experiment(std::string_view json_text);
/// Throws ConfigError if the file cannot be read or parsed.
ExperimentConfig load_experiment(const std::string& path);

/// Fully resolved settings for one (mode, repeat) run: seed = base seed + repeat, and with a budget set,
/// f_evals = B - L * dimension_cost.
optimizer::RunConfig mode_run_config(const ExperimentConfig& cfg, const ModeSpec& mode, int repeat);

struct RunOutcome {
  int repeat = 0;
  std::uint64_t seed = 0;
  optimizer::RegretTrace trace;
  /// Audio runs only.
  std::optional<audio::PersonalizationResult> audio;

  bool failed() const { return trace.error.has_value(); }
};

struct ModeResult {
  std::string label;
  optimizer::Mode mode = optimizer::Mode::OracleBo;
  std::size_t l_count = 0;
  std::vector<RunOutcome> runs;  // ordered by repeat

  int failures() const;
};

struct AggregateRow {
  int iteration = 0;
  std::string mode;
  double median_regret = 0.0;
  double mean_regret = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double qf_used = 0.0;
  double qd_used = 0.0;
};

struct AggregateResult {
  std::string name;
  std::vector<ModeResult> modes;
  /// Sorted by mode (config order), then iteration.
  std::vector<AggregateRow> rows;
};

/// Linear-interpolation quantile (type 7) of an unsorted sample; throws on empty input.
double quantile(std::vector<double> values, double p);
double median(std::vector<double> values);

/// Per-iteration statistics over the successful runs of each mode. A run shorter than the longest carries
/// its last record forward.
std::vector<AggregateRow> aggregate_rows(const std::vector<ModeResult>& modes);

/// Worker count: ORACLEBO_THREADS if set and positive, else hardware concurrency, never above `tasks`.
int worker_count(std::size_t tasks);

/// Runs every (mode, repeat) pair, possibly in parallel; results do not depend on scheduling.
AggregateResult run_experiment(const ExperimentConfig& cfg);

void emit_csv(const AggregateResult& result, std::ostream& out);
std::string to_csv(const AggregateResult& result);

/// Deterministic JSON summary: per-mode final regrets (null for failed runs), median and mean final
/// regret, failure count; audio runs add best, baseline and corrupted scores.
std::string summary_json(const AggregateResult& result, const ExperimentConfig& cfg);

/// Writes csv_name and summary_name into `out_dir` (created if needed). Throws std::runtime_error on I/O failure.
void write_outputs(const AggregateResult& result, const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace oraclebo::harness
