#pragma once

#include "oraclebo/dms.hpp"
#include "oraclebo/handles.hpp"
#include "oraclebo/optimizer.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oraclebo::audio {

using Vector = Eigen::VectorXd;

inline constexpr int kWindow = 1024;
inline constexpr int kHop = 256;
inline constexpr double kMaxFrequency = 8000.0;
inline constexpr int kMinSampleRate = 16000;
inline constexpr std::array<double, 7> kClinicalFrequencies{500, 1000, 2000, 3000, 4000, 6000, 8000};
/// 513 bins put every clinical frequency exactly on the grid (15.625 Hz spacing).
inline constexpr std::size_t kDefaultBins = 513;
/// Engine coordinate +-1 maps to +-30 dB.
inline constexpr double kEngineRangeDb = 30.0;

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mono PCM in [-1, 1] nominal range.
struct Clip {
  std::vector<double> samples;
  int sample_rate = kMinSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Per-bin gains in dB on n bins spanning 0..8 kHz uniformly.
struct SpectralFilter {
  Vector gains_db;

  std::size_t n_bins() const { return static_cast<std::size_t>(gains_db.size()); }
  static SpectralFilter flat(std::size_t n_bins, double db);
  /// Throws AudioError unless n >= 2 and every gain lies in [-60, 60] dB.
  void validate() const;
};

double bin_frequency(std::size_t k, std::size_t n_bins);

/// Grid index of an exact frequency, if it falls on the grid.
std::optional<std::size_t> bin_at(double hz, std::size_t n_bins);

/// Indices of the seven clinical frequencies; throws AudioError if any misses the grid.
std::vector<std::size_t> clinical_bins(std::size_t n_bins);

/// Clinical bins in audiogram query order: octaves (500, 1k, 2k, 4k, 8k) first, then 3k and 6k.
std::vector<std::size_t> audiogram_query_order(std::size_t n_bins);

enum class ProfileSource { HearingLoss, RandomDistortion };

/// Audiogram: gains (dB) at the seven clinical frequencies, in kClinicalFrequencies order.
struct HearingProfile {
  std::array<double, 7> gains_db{};
  ProfileSource source = ProfileSource::HearingLoss;
};

/// Parse failure with the offending field ("line 3", "frequency 8000", ...).
class ProfileError : public std::runtime_error {
 public:
  ProfileError(std::string field, const std::string& message)
      : std::runtime_error(message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// "frequency_hz,gain_db" per line; '#' comments, blank lines and one non-numeric header are skipped.
HearingProfile parse_profile(std::string_view text);
HearingProfile load_profile(const std::string& path);
void validate_profile(const HearingProfile& profile);

std::vector<std::string> bundled_profile_names();
/// Throws AudioError for unknown names.
HearingProfile bundled_profile(std::string_view name);

/// Piecewise-linear interpolation in log frequency through (hz, dB) knots sorted by frequency; flat beyond
/// the end knots. A single knot gives a flat filter.
SpectralFilter interpolate_log(const std::vector<double>& knot_hz, const std::vector<double>& knot_db, std::size_t n_bins);

/// interpolate_log through the seven clinical knots.
SpectralFilter interpolate_knots(const std::array<double, 7>& knot_db, std::size_t n_bins);

/// Compensation: negated profile gains, interpolated.
SpectralFilter audiogram_baseline(const HearingProfile& profile, std::size_t n_bins);

/// Corruption b1: the profile's gains, interpolated and limited to [-60, 60] dB.
SpectralFilter hearing_loss_filter(const HearingProfile& profile, std::size_t n_bins);

/// Knot frequencies of the random distortion: 1/3-octave steps from 125 Hz to 8 kHz.
std::vector<double> distortion_knots();

/// Corruption b2: i.i.d. uniform gains in [-range, range] dB at the distortion knots, interpolated in
/// log frequency and flat beyond the end knots.
SpectralFilter random_distortion(std::size_t n_bins, std::uint64_t seed, double range_db = kEngineRangeDb);

/// The corruption's gains at the clinical frequencies.
HearingProfile measure_profile(const SpectralFilter& corruption, ProfileSource source);

/// Zero-phase filtering, circular over the clip (Hann 1024 / hop 256 overlap-add with frames padded to
/// the clip length, computed as a single transform). Output length equals input length.
Clip apply_filter(const Clip& clip, const SpectralFilter& filter);

/// Engine coordinates to a filter: dB = 30 * h.
SpectralFilter filter_from_engine(const Vector& h);

Clip sine(double frequency, double seconds, int sample_rate, double amplitude = 0.5);

/// Harmonic buzz (f0 140 Hz, 50 harmonics, 4 Hz syllable envelope) plus broadband noise, peak 0.5.
Clip synthetic_speech(std::uint64_t seed = 0, double seconds = 1.0, int sample_rate = kMinSampleRate);

/// Built-in clips by id ("speech", "sine440"); throws AudioError for unknown ids.
Clip clip_by_id(std::string_view id);
std::vector<std::string> clip_ids();

/// RIFF/WAVE PCM16 mono.
std::string render_wav(const Clip& clip);
void write_wav(const Clip& clip, const std::string& path);

struct ScoreScale {
  /// Log-spectral distance (dB) at which the score is 5.
  double d0 = 10.0;
  double low_hz = 100.0;
  double high_hz = 8000.0;
};

/// Simulated listener: scores how close a compensated rendering sounds to the clean reference.
class ListenerModel {
 public:
  ListenerModel(Clip clean, SpectralFilter corruption, ScoreScale scale = {});

  const Clip& clean() const noexcept { return clean_; }
  const Clip& corrupted() const noexcept { return corrupted_; }
  const SpectralFilter& corruption() const noexcept { return corruption_; }
  const ScoreScale& scale() const noexcept { return scale_; }

  /// RMS over frames and bins (100 Hz..8 kHz) of the dB spectrogram difference to the clean clip.
  double distance(const SpectralFilter& candidate) const;
  double distance_of(const Clip& rendered) const;

 private:
  Clip clean_;
  SpectralFilter corruption_;
  ScoreScale scale_;
  Clip corrupted_;
  Eigen::MatrixXd clean_db_;
};

/// 10 * d0 / (d0 + D), rounded to the nearest 0.5.
double score_from_distance(double distance, double d0);
double simulated_score(const ListenerModel& listener, const SpectralFilter& candidate);

/// Optimal compensation at a clinical bin, in engine coordinates (clamped to [-1, 1]).
/// Throws AudioError if `j` is not a clinical bin.
dms::DimensionFact dimension_query_audio(const ListenerModel& listener, std::size_t j);

enum class CorruptionKind { None, Random, Profile };

struct SceneConfig {
  std::string clip = "speech";
  CorruptionKind corruption = CorruptionKind::Random;
  std::uint64_t corruption_seed = 0;
  /// Bundled profile name or path to a profile file.
  std::string profile;
  std::size_t n_bins = kDefaultBins;
  double d0 = 10.0;
};

struct AudioScene {
  SceneConfig config;
  ListenerModel listener;
  HearingProfile measured;
  std::vector<std::size_t> clinical;
};

AudioScene make_scene(const SceneConfig& cfg);

/// Satisfaction as a minimization objective without a prior: f(h) = -score(30 h dB); known minimum -10.
ObjectiveHandle audio_objective(const ListenerModel& listener);
DimensionOracleHandle audio_oracle(const ListenerModel& listener);

/// Settings shared by the in-process simulation and live sessions.
struct PersonalizationOptions {
  int budget = 30;
  std::size_t l_count = 5;
  std::uint64_t seed = 0;
  int n_low = 4;
  int q = 5;
  int n_mc = 256;
  int n_raw = 512;
  int r_init = 5;
  double sigma = 1.0;
};

/// OracleBO configuration for a scene: facts at the first L bins of audiogram_query_order, first
/// candidate at the search origin.
optimizer::RunConfig personalization_config(const AudioScene& scene, const PersonalizationOptions& options);

/// Compensation implied by revealed audiogram facts (engine coordinates): their dB values interpolated
/// in log frequency. No facts gives a flat 0 dB filter.
SpectralFilter prior_from_facts(const std::vector<dms::DimensionFact>& facts, std::size_t n_bins);

/// One personalization run, driven one score at a time.
///
/// The audiogram facts are queried on construction. The engine then searches offsets around their
/// interpolation: a candidate h renders as prior + 30 h dB (limited to +-60 dB), so the facts sit at
/// offset 0 in engine coordinates.
class Personalizer {
 public:
  Personalizer(const AudioScene& scene, const PersonalizationOptions& options);

  const optimizer::RunConfig& config() const noexcept { return engine_.config(); }
  const optimizer::Engine& engine() const noexcept { return engine_; }
  const SpectralFilter& prior() const noexcept { return prior_; }
  /// Facts as measured, in absolute engine coordinates.
  const std::vector<dms::DimensionFact>& audiogram() const noexcept { return audiogram_; }

  bool finished() const noexcept { return !engine_.can_query(); }
  /// Pending engine point; throws std::logic_error when finished.
  const optimizer::Proposal& pending();
  SpectralFilter pending_filter();
  /// Records a satisfaction score in [0, 10] for the pending candidate.
  void submit_score(double score);

  SpectralFilter filter_for(const Vector& h) const;
  std::optional<double> best_score() const;
  std::optional<SpectralFilter> best_filter() const;

 private:
  optimizer::Engine engine_;
  std::vector<dms::DimensionFact> audiogram_;
  SpectralFilter prior_;
};

struct PersonalizationResult {
  optimizer::RegretTrace trace;
  double best_score = 0.0;
  double baseline_score = 0.0;
  double corrupted_score = 0.0;
  SpectralFilter best_filter;
};

/// Runs a Personalizer against the scene's simulated listener until the budget is spent.
/// Trace regret is 10 minus the best score so far.
PersonalizationResult run_personalization(const AudioScene& scene, const PersonalizationOptions& options);

}  // namespace oraclebo::audio
