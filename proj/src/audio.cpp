#include "oraclebo/audio.hpp"

#include "oraclebo/random.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace oraclebo::audio {

namespace {

constexpr std::uint64_t kDistortionTag = 0xB2;
constexpr std::uint64_t kSpeechTag = 0x5350;
constexpr double kMaxFilterDb = 60.0;
// Magnitude floor for dB spectra; far below the synthetic clips' noise floor.
constexpr double kMagnitudeFloor = 1e-9;

const std::vector<double>& hann() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kWindow);
    for (int n = 0; n < kWindow; ++n) v[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kWindow);
    return v;
  }();
  return w;
}

void check_clip(const Clip& clip) {
  if (clip.samples.empty()) throw AudioError("empty clip");
  if (clip.sample_rate < kMinSampleRate) {
    throw AudioError("unsupported sample rate " + std::to_string(clip.sample_rate) + " (need >= 16000)");
  }
}

// Filter gains (linear) at bins 0..n_fft/2 of an n_fft-point transform.
std::vector<double> transform_gains(const SpectralFilter& filter, int sample_rate, std::size_t n_fft) {
  const std::size_t n = filter.n_bins();
  std::vector<double> g(n_fft / 2 + 1);
  for (std::size_t k = 0; k <= n_fft / 2; ++k) {
    const double hz = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
    const double pos = hz / kMaxFrequency * static_cast<double>(n - 1);
    double db;
    if (pos >= static_cast<double>(n - 1)) {
      db = filter.gains_db[static_cast<Eigen::Index>(n - 1)];
    } else {
      const auto i = static_cast<Eigen::Index>(std::floor(pos));
      const double frac = pos - static_cast<double>(i);
      db = frac == 0.0 ? filter.gains_db[i] : (1.0 - frac) * filter.gains_db[i] + frac * filter.gains_db[i + 1];
    }
    g[k] = std::pow(10.0, db / 20.0);
  }
  return g;
}

// |X| in dB for frames fully inside the clip, restricted to bins [k_lo, k_hi].
Eigen::MatrixXd db_spectrogram(const Clip& clip, int k_lo, int k_hi) {
  const auto len = static_cast<Eigen::Index>(clip.samples.size());
  if (len < kWindow) throw AudioError("clip shorter than one analysis window");
  const Eigen::Index frames = (len - kWindow) / kHop + 1;
  Eigen::MatrixXd out(frames, k_hi - k_lo + 1);
  Eigen::FFT<double> fft;
  const auto& w = hann();
  std::vector<double> buf(kWindow);
  std::vector<std::complex<double>> spec;
  for (Eigen::Index f = 0; f < frames; ++f) {
    const std::size_t start = static_cast<std::size_t>(f * kHop);
    for (int n = 0; n < kWindow; ++n) buf[n] = clip.samples[start + n] * w[n];
    fft.fwd(spec, buf);
    for (int k = k_lo; k <= k_hi; ++k) {
      out(f, k - k_lo) = 20.0 * std::log10(std::max(std::abs(spec[k]), kMagnitudeFloor));
    }
  }
  return out;
}

std::pair<int, int> score_bins(const ScoreScale& scale, int sample_rate) {
  const int k_lo = static_cast<int>(std::ceil(scale.low_hz * kWindow / sample_rate));
  const int k_hi = std::min(kWindow / 2, static_cast<int>(std::floor(scale.high_hz * kWindow / sample_rate)));
  if (k_lo > k_hi) throw AudioError("empty scoring band");
  return {k_lo, k_hi};
}

double parse_double(std::string_view s, const std::string& field) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ProfileError(field, field + ": '" + std::string(s) + "' is not a number");
  }
  return v;
}

}  // namespace

SpectralFilter SpectralFilter::flat(std::size_t n_bins, double db) {
  return SpectralFilter{Vector::Constant(static_cast<Eigen::Index>(n_bins), db)};
}

void SpectralFilter::validate() const {
  if (gains_db.size() < 2) throw AudioError("filter needs at least two bins");
  if (!gains_db.allFinite()) throw AudioError("filter gains must be finite");
  if (gains_db.cwiseAbs().maxCoeff() > kMaxFilterDb) throw AudioError("filter gains must lie within [-60, 60] dB");
}

double bin_frequency(std::size_t k, std::size_t n_bins) {
  return kMaxFrequency * static_cast<double>(k) / static_cast<double>(n_bins - 1);
}

std::optional<std::size_t> bin_at(double hz, std::size_t n_bins) {
  if (n_bins < 2 || hz < 0.0 || hz > kMaxFrequency) return std::nullopt;
  const double pos = hz / kMaxFrequency * static_cast<double>(n_bins - 1);
  const double k = std::round(pos);
  if (std::abs(bin_frequency(static_cast<std::size_t>(k), n_bins) - hz) > 1e-9) return std::nullopt;
  return static_cast<std::size_t>(k);
}

std::vector<std::size_t> clinical_bins(std::size_t n_bins) {
  std::vector<std::size_t> out;
  for (double hz : kClinicalFrequencies) {
    const auto k = bin_at(hz, n_bins);
    if (!k) {
      throw AudioError("bin grid of " + std::to_string(n_bins) + " bins misses clinical frequency " +
                       std::to_string(static_cast<int>(hz)) + " Hz");
    }
    out.push_back(*k);
  }
  return out;
}

std::vector<std::size_t> audiogram_query_order(std::size_t n_bins) {
  const auto bins = clinical_bins(n_bins);
  // kClinicalFrequencies: 500 1k 2k 3k 4k 6k 8k
  return {bins[0], bins[1], bins[2], bins[4], bins[6], bins[3], bins[5]};
}

void validate_profile(const HearingProfile& profile) {
  for (std::size_t i = 0; i < profile.gains_db.size(); ++i) {
    const double g = profile.gains_db[i];
    if (!(g >= -120.0 && g <= 30.0)) {
      const std::string field = "frequency " + std::to_string(static_cast<int>(kClinicalFrequencies[i]));
      throw ProfileError(field, field + " Hz: gain " + std::to_string(g) + " dB outside [-120, 30]");
    }
  }
}

HearingProfile parse_profile(std::string_view text) {
  std::array<std::optional<double>, 7> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const std::string field = "line " + std::to_string(line_no);
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ProfileError(field, field + ": expected 'frequency_hz,gain_db'");
    const std::string_view lhs = std::string_view(line).substr(0, comma);
    const std::string_view rhs = std::string_view(line).substr(comma + 1);
    if (rhs.find(',') != std::string_view::npos) throw ProfileError(field, field + ": too many fields");
    double hz = 0.0;
    try {
      hz = parse_double(lhs, field);
    } catch (const ProfileError&) {
      if (header_allowed) {
        header_allowed = false;
        continue;
      }
      throw;
    }
    header_allowed = false;
    const double gain = parse_double(rhs, field);
    const auto it = std::find(kClinicalFrequencies.begin(), kClinicalFrequencies.end(), hz);
    if (it == kClinicalFrequencies.end()) {
      throw ProfileError(field, field + ": " + std::string(lhs) + " Hz is not a clinical frequency");
    }
    auto& slot = seen[static_cast<std::size_t>(it - kClinicalFrequencies.begin())];
    if (slot) throw ProfileError(field, field + ": duplicate measurement at " + std::string(lhs) + " Hz");
    slot = gain;
  }
  HearingProfile profile;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) {
      const std::string hz = std::to_string(static_cast<int>(kClinicalFrequencies[i]));
      throw ProfileError("frequency " + hz, "missing measurement at " + hz + " Hz");
    }
    profile.gains_db[i] = *seen[i];
  }
  validate_profile(profile);
  return profile;
}

HearingProfile load_profile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open profile file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_profile(ss.str());
}

namespace {

const std::map<std::string, std::array<double, 7>, std::less<>>& bundled_profiles() {
  static const std::map<std::string, std::array<double, 7>, std::less<>> profiles{
      {"mild_sloping", {-10, -15, -25, -30, -35, -40, -45}},
      {"moderate_sloping", {-20, -25, -35, -45, -50, -55, -60}},
      {"steep_highfreq", {-5, -5, -10, -30, -50, -65, -70}},
  };
  return profiles;
}

}  // namespace

std::vector<std::string> bundled_profile_names() {
  std::vector<std::string> out;
  for (const auto& [name, gains] : bundled_profiles()) out.push_back(name);
  return out;
}

HearingProfile bundled_profile(std::string_view name) {
  const auto& all = bundled_profiles();
  const auto it = all.find(name);
  if (it == all.end()) throw AudioError("unknown bundled profile '" + std::string(name) + "'");
  return HearingProfile{it->second, ProfileSource::HearingLoss};
}

SpectralFilter interpolate_log(const std::vector<double>& knot_hz, const std::vector<double>& knot_db, std::size_t n_bins) {
  if (n_bins < 2) throw AudioError("filter needs at least two bins");
  if (knot_hz.empty() || knot_hz.size() != knot_db.size()) throw AudioError("interpolation needs matching knots");
  for (std::size_t i = 1; i < knot_hz.size(); ++i) {
    if (!(knot_hz[i] > knot_hz[i - 1])) throw AudioError("interpolation knots must be strictly increasing");
  }
  SpectralFilter out{Vector(static_cast<Eigen::Index>(n_bins))};
  for (std::size_t k = 0; k < n_bins; ++k) {
    const double hz = bin_frequency(k, n_bins);
    double db;
    if (hz <= knot_hz.front()) {
      db = knot_db.front();
    } else if (hz >= knot_hz.back()) {
      db = knot_db.back();
    } else {
      std::size_t i = 0;
      while (hz > knot_hz[i + 1]) ++i;
      if (hz == knot_hz[i + 1]) {
        db = knot_db[i + 1];
      } else {
        const double t = std::log(hz / knot_hz[i]) / std::log(knot_hz[i + 1] / knot_hz[i]);
        db = knot_db[i] + t * (knot_db[i + 1] - knot_db[i]);
      }
    }
    out.gains_db[static_cast<Eigen::Index>(k)] = db;
  }
  return out;
}

SpectralFilter interpolate_knots(const std::array<double, 7>& knot_db, std::size_t n_bins) {
  return interpolate_log({kClinicalFrequencies.begin(), kClinicalFrequencies.end()}, {knot_db.begin(), knot_db.end()},
                         n_bins);
}

SpectralFilter audiogram_baseline(const HearingProfile& profile, std::size_t n_bins) {
  std::array<double, 7> neg{};
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = std::clamp(-profile.gains_db[i], -kMaxFilterDb, kMaxFilterDb);
  return interpolate_knots(neg, n_bins);
}

SpectralFilter hearing_loss_filter(const HearingProfile& profile, std::size_t n_bins) {
  SpectralFilter f = interpolate_knots(profile.gains_db, n_bins);
  f.gains_db = f.gains_db.cwiseMax(-kMaxFilterDb).cwiseMin(kMaxFilterDb);
  return f;
}

std::vector<double> distortion_knots() {
  std::vector<double> hz;
  for (int i = 0; i <= 18; ++i) hz.push_back(125.0 * std::pow(2.0, i / 3.0));
  return hz;
}

SpectralFilter random_distortion(std::size_t n_bins, std::uint64_t seed, double range_db) {
  CounterRng rng(derive_key(seed, kDistortionTag));
  const std::vector<double> knots = distortion_knots();
  std::vector<double> db(knots.size());
  for (double& v : db) v = rng.uniform(-range_db, range_db);
  return interpolate_log(knots, db, n_bins);
}

HearingProfile measure_profile(const SpectralFilter& corruption, ProfileSource source) {
  const auto bins = clinical_bins(corruption.n_bins());
  HearingProfile p;
  p.source = source;
  for (std::size_t i = 0; i < bins.size(); ++i) p.gains_db[i] = corruption.gains_db[static_cast<Eigen::Index>(bins[i])];
  return p;
}

Clip apply_filter(const Clip& clip, const SpectralFilter& filter) {
  check_clip(clip);
  filter.validate();
  if ((filter.gains_db.array() == 0.0).all()) return clip;

  // Circular filtering over the whole clip. This is the Hann 1024 / hop 256 overlap-add with every frame
  // zero-padded to the clip length: the windows sum to a constant, so the frames collapse into one
  // transform. Nothing rings out past the clip edges, and inverse gains cancel exactly.
  const std::size_t len = clip.samples.size();
  const std::vector<double> g = transform_gains(filter, clip.sample_rate, len);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, clip.samples);
  spec[0] *= g[0];
  for (std::size_t k = 1; k < (len + 1) / 2; ++k) {
    spec[k] *= g[k];
    spec[len - k] *= g[k];
  }
  if (len % 2 == 0) spec[len / 2] *= g[len / 2];
  Clip out;
  out.sample_rate = clip.sample_rate;
  fft.inv(out.samples, spec);
  out.samples.resize(len);
  return out;
}

SpectralFilter filter_from_engine(const Vector& h) { return SpectralFilter{kEngineRangeDb * h}; }

Clip sine(double frequency, double seconds, int sample_rate, double amplitude) {
  Clip c;
  c.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(std::lround(seconds * sample_rate));
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * frequency * static_cast<double>(i) / sample_rate);
  }
  return c;
}

Clip synthetic_speech(std::uint64_t seed, double seconds, int sample_rate) {
  constexpr double f0 = 140.0;
  constexpr int harmonics = 50;
  Clip c;
  c.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(std::lround(seconds * sample_rate));
  c.samples.resize(n);
  CounterRng rng(derive_key(seed, kSpeechTag));
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double env = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * 4.0 * t);
    double v = 0.0;
    for (int h = 1; h <= harmonics; ++h) v += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
    c.samples[i] = env * v + 0.05 * rng.normal();
    peak = std::max(peak, std::abs(c.samples[i]));
  }
  const double scale = 0.5 / peak;
  for (double& s : c.samples) s *= scale;
  return c;
}

Clip clip_by_id(std::string_view id) {
  if (id == "speech") return synthetic_speech(0);
  if (id == "sine440") return sine(440.0, 1.0, kMinSampleRate);
  throw AudioError("unknown clip '" + std::string(id) + "'");
}

std::vector<std::string> clip_ids() { return {"speech", "sine440"}; }

std::string render_wav(const Clip& clip) {
  if (clip.sample_rate <= 0) throw AudioError("invalid sample rate");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
  };
  const auto rate = static_cast<std::uint32_t>(clip.sample_rate);
  out += "RIFF";
  u32(36 + data_bytes);
  out += "WAVEfmt ";
  u32(16);
  u16(1);
  u16(1);
  u32(rate);
  u32(rate * 2);
  u16(2);
  u16(16);
  out += "data";
  u32(data_bytes);
  for (double s : clip.samples) {
    const double c = std::clamp(std::isnan(s) ? 0.0 : s, -1.0, 1.0);
    u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  return out;
}

void write_wav(const Clip& clip, const std::string& path) {
  const std::string bytes = render_wav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AudioError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw AudioError("write failed for " + path);
}

ListenerModel::ListenerModel(Clip clean, SpectralFilter corruption, ScoreScale scale)
    : clean_(std::move(clean)), corruption_(std::move(corruption)), scale_(scale) {
  check_clip(clean_);
  if (clean_.duration() < 1.0) throw AudioError("listener reference clip must be at least 1 s long");
  if (!(scale_.d0 > 0.0)) throw AudioError("d0 must be positive");
  corruption_.validate();
  corrupted_ = apply_filter(clean_, corruption_);
  const auto [k_lo, k_hi] = score_bins(scale_, clean_.sample_rate);
  clean_db_ = db_spectrogram(clean_, k_lo, k_hi);
}

double ListenerModel::distance_of(const Clip& rendered) const {
  if (rendered.samples.size() != clean_.samples.size() || rendered.sample_rate != clean_.sample_rate) {
    throw AudioError("rendered clip does not match the reference");
  }
  const auto [k_lo, k_hi] = score_bins(scale_, clean_.sample_rate);
  const Eigen::MatrixXd db = db_spectrogram(rendered, k_lo, k_hi);
  return std::sqrt((db - clean_db_).array().square().mean());
}

double ListenerModel::distance(const SpectralFilter& candidate) const {
  return distance_of(apply_filter(corrupted_, candidate));
}

double score_from_distance(double distance, double d0) {
  const double raw = 10.0 * d0 / (d0 + std::max(0.0, distance));
  return std::clamp(std::round(raw * 2.0) / 2.0, 0.0, 10.0);
}

double simulated_score(const ListenerModel& listener, const SpectralFilter& candidate) {
  return score_from_distance(listener.distance(candidate), listener.scale().d0);
}

dms::DimensionFact dimension_query_audio(const ListenerModel& listener, std::size_t j) {
  const auto bins = clinical_bins(listener.corruption().n_bins());
  if (std::find(bins.begin(), bins.end(), j) == bins.end()) {
    throw AudioError("bin " + std::to_string(j) + " is not at a clinical frequency");
  }
  const double db = -listener.corruption().gains_db[static_cast<Eigen::Index>(j)];
  return {j, std::clamp(db / kEngineRangeDb, -1.0, 1.0)};
}

AudioScene make_scene(const SceneConfig& cfg) {
  Clip clean = clip_by_id(cfg.clip);
  clinical_bins(cfg.n_bins);
  SpectralFilter corruption;
  ProfileSource source = ProfileSource::RandomDistortion;
  switch (cfg.corruption) {
    case CorruptionKind::None:
      corruption = SpectralFilter::flat(cfg.n_bins, 0.0);
      break;
    case CorruptionKind::Random:
      corruption = random_distortion(cfg.n_bins, cfg.corruption_seed);
      break;
    case CorruptionKind::Profile: {
      const auto names = bundled_profile_names();
      const HearingProfile p = std::find(names.begin(), names.end(), cfg.profile) != names.end()
                                   ? bundled_profile(cfg.profile)
                                   : load_profile(cfg.profile);
      corruption = hearing_loss_filter(p, cfg.n_bins);
      source = ProfileSource::HearingLoss;
      break;
    }
  }
  ScoreScale scale;
  scale.d0 = cfg.d0;
  ListenerModel listener(std::move(clean), std::move(corruption), scale);
  HearingProfile measured = measure_profile(listener.corruption(), source);
  return AudioScene{cfg, std::move(listener), measured, clinical_bins(cfg.n_bins)};
}

ObjectiveHandle audio_objective(const ListenerModel& listener) {
  ObjectiveHandle h;
  h.dimension = listener.corruption().n_bins();
  h.evaluate = [&listener](const Vector& x) { return -simulated_score(listener, filter_from_engine(x)); };
  h.known_minimum = -10.0;
  h.sweepable = true;
  return h;
}

DimensionOracleHandle audio_oracle(const ListenerModel& listener) {
  DimensionOracleHandle o;
  o.dimension = listener.corruption().n_bins();
  o.query = [&listener](std::size_t j) { return dimension_query_audio(listener, j); };
  return o;
}

optimizer::RunConfig personalization_config(const AudioScene& scene, const PersonalizationOptions& options) {
  if (options.l_count > scene.clinical.size()) throw std::invalid_argument("at most 7 audiogram queries are available");
  if (options.budget < static_cast<int>(options.l_count)) throw std::invalid_argument("budget is smaller than l_count");
  optimizer::RunConfig c;
  c.n_high = scene.listener.corruption().n_bins();
  c.n_low = options.n_low;
  c.q = options.q;
  c.n_mc = options.n_mc;
  c.n_raw = options.n_raw;
  c.budget = options.budget;
  c.l_count = options.l_count;
  c.f_evals = options.budget - static_cast<int>(options.l_count);
  c.r_init = std::min(options.r_init, c.f_evals);
  c.l_selection = optimizer::DimensionSelection::Explicit;
  const auto order = audiogram_query_order(c.n_high);
  c.l_explicit.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(options.l_count));
  c.dms.sigma = options.sigma;
  c.seed = options.seed;
  c.mode = optimizer::Mode::OracleBo;
  c.center_first = true;
  c.validate();
  return c;
}

SpectralFilter prior_from_facts(const std::vector<dms::DimensionFact>& facts, std::size_t n_bins) {
  if (facts.empty()) return SpectralFilter::flat(n_bins, 0.0);
  std::vector<std::pair<double, double>> knots;
  for (const auto& f : facts) knots.emplace_back(bin_frequency(f.index, n_bins), kEngineRangeDb * f.value);
  std::sort(knots.begin(), knots.end());
  std::vector<double> hz, db;
  for (const auto& [h, d] : knots) {
    if (!hz.empty() && hz.back() == h) throw AudioError("duplicate audiogram fact");
    hz.push_back(h);
    db.push_back(d);
  }
  return interpolate_log(hz, db, n_bins);
}

Personalizer::Personalizer(const AudioScene& scene, const PersonalizationOptions& options)
    : engine_(personalization_config(scene, options), scene.listener.corruption().n_bins(),
              optimizer::AcquisitionKind::BatchDms) {
  const std::size_t n = scene.listener.corruption().n_bins();
  for (std::size_t j : engine_.config().l_explicit) audiogram_.push_back(dimension_query_audio(scene.listener, j));
  prior_ = prior_from_facts(audiogram_, n);
  for (const auto& f : audiogram_) {
    const double offset = f.value - prior_.gains_db[static_cast<Eigen::Index>(f.index)] / kEngineRangeDb;
    engine_.record_dimension_query({f.index, std::clamp(offset, -1.0, 1.0)}, true);
  }
}

const optimizer::Proposal& Personalizer::pending() {
  if (finished()) throw std::logic_error("personalization budget is spent");
  return engine_.pending();
}

SpectralFilter Personalizer::pending_filter() { return filter_for(pending().high); }

void Personalizer::submit_score(double score) {
  if (!(score >= 0.0 && score <= 10.0)) throw std::invalid_argument("score must lie in [0, 10]");
  pending();
  engine_.observe(-score);
}

SpectralFilter Personalizer::filter_for(const Vector& h) const {
  Vector db = prior_.gains_db + kEngineRangeDb * h;
  return SpectralFilter{db.cwiseMax(-kMaxFilterDb).cwiseMin(kMaxFilterDb)};
}

std::optional<double> Personalizer::best_score() const {
  const auto v = engine_.best_value();
  if (!v) return std::nullopt;
  return -*v;
}

std::optional<SpectralFilter> Personalizer::best_filter() const {
  const auto h = engine_.best_point();
  if (!h) return std::nullopt;
  return filter_for(*h);
}

PersonalizationResult run_personalization(const AudioScene& scene, const PersonalizationOptions& options) {
  Personalizer p(scene, options);
  PersonalizationResult r;
  r.trace.mode = optimizer::Mode::OracleBo;
  r.trace.facts = p.audiogram();
  while (!p.finished()) {
    const optimizer::Proposal prop = p.pending();
    const double score = simulated_score(scene.listener, p.filter_for(prop.high));
    p.submit_score(score);
    const auto& ledger = p.engine().ledger();
    optimizer::TraceRecord rec;
    rec.iteration = prop.iteration + 1;
    rec.queried_h = prop.high;
    rec.observed_f = -score;
    rec.best_so_far = -*p.best_score();
    rec.regret = rec.best_so_far + 10.0;
    rec.filter_used = ledger.filter_used();
    rec.dimension_used = ledger.dimension_used();
    rec.total_budget = ledger.total_budget();
    rec.initial_stage = prop.initial_stage;
    r.trace.records.push_back(std::move(rec));
  }
  const std::size_t n = scene.listener.corruption().n_bins();
  r.best_score = p.best_score().value_or(0.0);
  r.best_filter = p.best_filter().value_or(p.prior());
  r.baseline_score = simulated_score(scene.listener, audiogram_baseline(scene.measured, n));
  r.corrupted_score = simulated_score(scene.listener, SpectralFilter::flat(n, 0.0));
  return r;
}

}  // namespace oraclebo::audio
