#include "oraclebo/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace oraclebo::harness {

using nlohmann::json;

namespace {

const std::set<std::string> kTopKeys{"name",          "objective",    "active",        "n_high",     "n_low",
                                     "f_evals",       "budget",       "r_init",        "q",          "n_mc",
                                     "n_raw",         "perturbation_step", "sigma",    "sigma_units", "weighting",
                                     "set_score",     "kernel",       "noise_variance", "mle_restarts", "fact_noise_std",
                                     "filter_cost",   "dimension_cost", "center_first", "seed",       "n_repeats",
                                     "modes",         "outputs",      "audio"};
const std::set<std::string> kModeKeys{"label", "mode", "l_count", "l_selection", "explicit"};
const std::set<std::string> kOutputKeys{"csv", "summary"};
const std::set<std::string> kAudioKeys{"clip",  "corruption", "corruption_seed", "profile", "n_bins", "d0",  "budget",
                                       "l_count", "n_low",    "q",               "n_mc",    "n_raw",  "r_init", "sigma"};

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where.empty() ? "config" : where, "expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
  }
}

template <typename T>
T get(const json& obj, const std::string& key, const std::string& field, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, "has the wrong type");
  }
}

int get_int(const json& obj, const std::string& key, const std::string& field, int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(field, "must be an integer");
  return v.get<int>();
}

std::uint64_t get_seed(const json& obj, const std::string& key, const std::string& field, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError(field, "must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::vector<std::size_t> get_indices(const json& obj, const std::string& key, const std::string& field) {
  std::vector<std::size_t> out;
  if (!obj.contains(key)) return out;
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(field, "must be an array of indices");
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<long long>() < 0) throw ConfigError(field, "must contain non-negative integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double native_sigma_scale(const ExperimentConfig& cfg) {
  const auto spec = objectives::make_objective(cfg.objective, cfg.base.n_high, cfg.active);
  double width = 0.0;
  for (std::size_t a : spec.active) {
    width += spec.upper[static_cast<Eigen::Index>(a)] - spec.lower[static_cast<Eigen::Index>(a)];
  }
  width /= static_cast<double>(spec.active.size());
  return 2.0 / width;
}

json number_or_null(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void ExperimentConfig::validate() const {
  if (n_repeats < 1) throw ConfigError("n_repeats", "must be at least 1");
  if (csv_name.empty()) throw ConfigError("outputs.csv", "must not be empty");
  if (summary_name.empty()) throw ConfigError("outputs.summary", "must not be empty");
  if (audio) {
    const auto& s = audio->scene;
    if (s.corruption == audio::CorruptionKind::Profile) {
      const auto names = audio::bundled_profile_names();
      if (std::find(names.begin(), names.end(), s.profile) == names.end() && !std::filesystem::exists(s.profile)) {
        throw ConfigError("audio.profile", "profile '" + s.profile + "' does not exist");
      }
    }
    const auto ids = audio::clip_ids();
    if (std::find(ids.begin(), ids.end(), s.clip) == ids.end()) throw ConfigError("audio.clip", "unknown clip '" + s.clip + "'");
    try {
      audio::clinical_bins(s.n_bins);
    } catch (const audio::AudioError& e) {
      throw ConfigError("audio.n_bins", e.what());
    }
    const auto& o = audio->options;
    if (o.l_count > audio::kClinicalFrequencies.size()) throw ConfigError("audio.l_count", "at most 7 audiogram queries exist");
    if (o.budget < static_cast<int>(o.l_count)) throw ConfigError("audio.budget", "smaller than l_count");
    if (!(o.sigma > 0.0)) throw ConfigError("audio.sigma", "must be positive");
    if (!(s.d0 > 0.0)) throw ConfigError("audio.d0", "must be positive");
    return;
  }
  if (modes.empty()) throw ConfigError("modes", "at least one mode is required");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string field = "modes[" + std::to_string(i) + "]";
    if (!labels.insert(modes[i].label).second) throw ConfigError(field + ".label", "duplicate label '" + modes[i].label + "'");
    if (modes[i].label.find_first_of(",\"\n\r") != std::string::npos) {
      throw ConfigError(field + ".label", "must not contain commas, quotes or newlines");
    }
  }
  try {
    objectives::make_objective(objective, base.n_high, active);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("active", e.what());
  }
  for (std::size_t i = 0; i < modes.size(); ++i) {
    try {
      mode_run_config(*this, modes[i], 0).validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("modes[" + std::to_string(i) + "]", e.what());
    }
  }
}

ExperimentConfig parse_experiment(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  check_keys(root, kTopKeys, "");
  ExperimentConfig cfg;
  cfg.name = get<std::string>(root, "name", "name", cfg.name);
  auto& b = cfg.base;
  if (root.contains("objective")) {
    const auto id = objectives::parse_objective_id(get<std::string>(root, "objective", "objective", ""));
    if (!id) throw ConfigError("objective", "unknown objective");
    cfg.objective = *id;
  }
  cfg.active = get_indices(root, "active", "active");
  const int n_high = get_int(root, "n_high", "n_high", static_cast<int>(b.n_high));
  if (n_high < 1) throw ConfigError("n_high", "must be positive");
  b.n_high = static_cast<std::size_t>(n_high);
  b.n_low = get_int(root, "n_low", "n_low", b.n_low);
  b.f_evals = get_int(root, "f_evals", "f_evals", b.f_evals);
  if (root.contains("budget")) b.budget = get_int(root, "budget", "budget", 0);
  b.r_init = get_int(root, "r_init", "r_init", b.r_init);
  b.q = get_int(root, "q", "q", b.q);
  b.n_mc = get_int(root, "n_mc", "n_mc", b.n_mc);
  b.n_raw = get_int(root, "n_raw", "n_raw", b.n_raw);
  b.perturbation_step = get<double>(root, "perturbation_step", "perturbation_step", b.perturbation_step);
  b.dms.sigma = get<double>(root, "sigma", "sigma", b.dms.sigma);
  const std::string units = get<std::string>(root, "sigma_units", "sigma_units", "normalized");
  if (units == "normalized") {
    cfg.sigma_units = SigmaUnits::Normalized;
  } else if (units == "native") {
    cfg.sigma_units = SigmaUnits::Native;
  } else {
    throw ConfigError("sigma_units", "must be 'normalized' or 'native'");
  }
  const std::string weighting = get<std::string>(root, "weighting", "weighting", "single");
  if (weighting == "single") {
    b.dms.weighting = dms::QeiWeighting::Single;
  } else if (weighting == "per_dimension") {
    b.dms.weighting = dms::QeiWeighting::PerDimension;
  } else {
    throw ConfigError("weighting", "must be 'single' or 'per_dimension'");
  }
  const std::string set_score = get<std::string>(root, "set_score", "set_score", "max");
  if (set_score == "max") {
    b.set_score = acquisition::SetScore::Max;
  } else if (set_score == "sum") {
    b.set_score = acquisition::SetScore::Sum;
  } else {
    throw ConfigError("set_score", "must be 'max' or 'sum'");
  }
  const std::string kernel = get<std::string>(root, "kernel", "kernel", "ard");
  if (kernel == "ard") {
    b.kernel = gpr::KernelVariant::Ard;
  } else if (kernel == "mahalanobis") {
    b.kernel = gpr::KernelVariant::Mahalanobis;
  } else {
    throw ConfigError("kernel", "must be 'ard' or 'mahalanobis'");
  }
  b.noise_variance = get<double>(root, "noise_variance", "noise_variance", b.noise_variance);
  b.mle_restarts = get_int(root, "mle_restarts", "mle_restarts", b.mle_restarts);
  b.fact_noise_std = get<double>(root, "fact_noise_std", "fact_noise_std", b.fact_noise_std);
  b.filter_cost = get_int(root, "filter_cost", "filter_cost", b.filter_cost);
  b.dimension_cost = get_int(root, "dimension_cost", "dimension_cost", b.dimension_cost);
  b.center_first = get<bool>(root, "center_first", "center_first", b.center_first);
  b.seed = get_seed(root, "seed", "seed", b.seed);
  cfg.n_repeats = get_int(root, "n_repeats", "n_repeats", cfg.n_repeats);

  if (root.contains("modes")) {
    const json& modes = root.at("modes");
    if (!modes.is_array()) throw ConfigError("modes", "must be an array");
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const std::string field = "modes[" + std::to_string(i) + "]";
      const json& m = modes[i];
      check_keys(m, kModeKeys, field);
      ModeSpec spec;
      const auto mode = optimizer::parse_mode(get<std::string>(m, "mode", field + ".mode", ""));
      if (!mode) throw ConfigError(field + ".mode", "must be oraclebo, alebo_l or alebo_plain");
      spec.mode = *mode;
      const int l = get_int(m, "l_count", field + ".l_count", 0);
      if (l < 0) throw ConfigError(field + ".l_count", "must be non-negative");
      spec.l_count = static_cast<std::size_t>(l);
      if (spec.mode == optimizer::Mode::AleboPlain && spec.l_count != 0) {
        throw ConfigError(field + ".l_count", "alebo_plain reveals no dimensions");
      }
      const auto sel = optimizer::parse_selection(get<std::string>(m, "l_selection", field + ".l_selection", "random"));
      if (!sel) throw ConfigError(field + ".l_selection", "must be top, random or explicit");
      spec.selection = *sel;
      spec.explicit_dims = get_indices(m, "explicit", field + ".explicit");
      spec.label = get<std::string>(m, "label", field + ".label",
                                    optimizer::to_string(spec.mode) + "_L" + std::to_string(spec.l_count));
      cfg.modes.push_back(std::move(spec));
    }
  }
  if (root.contains("outputs")) {
    const json& out = root.at("outputs");
    check_keys(out, kOutputKeys, "outputs");
    cfg.csv_name = get<std::string>(out, "csv", "outputs.csv", cfg.csv_name);
    cfg.summary_name = get<std::string>(out, "summary", "outputs.summary", cfg.summary_name);
  }
  if (root.contains("audio")) {
    const json& a = root.at("audio");
    check_keys(a, kAudioKeys, "audio");
    AudioExperiment ax;
    ax.scene.clip = get<std::string>(a, "clip", "audio.clip", ax.scene.clip);
    const std::string corruption = get<std::string>(a, "corruption", "audio.corruption", "random");
    if (corruption == "random") {
      ax.scene.corruption = audio::CorruptionKind::Random;
    } else if (corruption == "profile") {
      ax.scene.corruption = audio::CorruptionKind::Profile;
    } else if (corruption == "none") {
      ax.scene.corruption = audio::CorruptionKind::None;
    } else {
      throw ConfigError("audio.corruption", "must be random, profile or none");
    }
    ax.scene.corruption_seed = get_seed(a, "corruption_seed", "audio.corruption_seed", 0);
    ax.scene.profile = get<std::string>(a, "profile", "audio.profile", "");
    if (ax.scene.corruption == audio::CorruptionKind::Profile && ax.scene.profile.empty()) {
      throw ConfigError("audio.profile", "required when corruption is 'profile'");
    }
    const int bins = get_int(a, "n_bins", "audio.n_bins", static_cast<int>(ax.scene.n_bins));
    if (bins < 2) throw ConfigError("audio.n_bins", "must be at least 2");
    ax.scene.n_bins = static_cast<std::size_t>(bins);
    ax.scene.d0 = get<double>(a, "d0", "audio.d0", ax.scene.d0);
    auto& o = ax.options;
    o.budget = get_int(a, "budget", "audio.budget", o.budget);
    const int l = get_int(a, "l_count", "audio.l_count", static_cast<int>(o.l_count));
    if (l < 0) throw ConfigError("audio.l_count", "must be non-negative");
    o.l_count = static_cast<std::size_t>(l);
    o.n_low = get_int(a, "n_low", "audio.n_low", o.n_low);
    o.q = get_int(a, "q", "audio.q", o.q);
    o.n_mc = get_int(a, "n_mc", "audio.n_mc", o.n_mc);
    o.n_raw = get_int(a, "n_raw", "audio.n_raw", o.n_raw);
    o.r_init = get_int(a, "r_init", "audio.r_init", o.r_init);
    o.sigma = get<double>(a, "sigma", "audio.sigma", o.sigma);
    cfg.audio = ax;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str());
}

optimizer::RunConfig mode_run_config(const ExperimentConfig& cfg, const ModeSpec& mode, int repeat) {
  optimizer::RunConfig r = cfg.base;
  r.mode = mode.mode;
  r.l_count = mode.l_count;
  r.l_selection = mode.selection;
  r.l_explicit = mode.explicit_dims;
  r.seed = cfg.base.seed + static_cast<std::uint64_t>(repeat);
  if (r.budget) r.f_evals = (*r.budget - static_cast<int>(mode.l_count) * r.dimension_cost) / r.filter_cost;
  if (cfg.sigma_units == SigmaUnits::Native) r.dms.sigma = cfg.base.dms.sigma * native_sigma_scale(cfg);
  if (r.f_evals > 0) r.r_init = std::min(r.r_init, r.f_evals);
  return r;
}

int ModeResult::failures() const {
  return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.failed(); }));
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return values[lo] + t * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

std::vector<AggregateRow> aggregate_rows(const std::vector<ModeResult>& modes) {
  std::vector<AggregateRow> rows;
  for (const auto& m : modes) {
    std::vector<const std::vector<optimizer::TraceRecord>*> traces;
    std::size_t longest = 0;
    for (const auto& run : m.runs) {
      if (run.failed() || run.trace.records.empty()) continue;
      traces.push_back(&run.trace.records);
      longest = std::max(longest, run.trace.records.size());
    }
    for (std::size_t i = 0; i < longest; ++i) {
      std::vector<double> regrets;
      double qf = 0.0;
      double qd = 0.0;
      for (const auto* t : traces) {
        const auto& rec = (*t)[std::min(i, t->size() - 1)];
        regrets.push_back(rec.regret.value_or(rec.best_so_far));
        qf += rec.filter_used;
        qd += rec.dimension_used;
      }
      AggregateRow row;
      row.iteration = static_cast<int>(i) + 1;
      row.mode = m.label;
      row.median_regret = median(regrets);
      double sum = 0.0;
      for (double v : regrets) sum += v;
      row.mean_regret = sum / static_cast<double>(regrets.size());
      row.q25 = quantile(regrets, 0.25);
      row.q75 = quantile(regrets, 0.75);
      row.qf_used = qf / static_cast<double>(traces.size());
      row.qd_used = qd / static_cast<double>(traces.size());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

int worker_count(std::size_t tasks) {
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("ORACLEBO_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) n = static_cast<int>(std::min<long>(v, 1024));
  }
  return static_cast<int>(std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(n), tasks)));
}

namespace {

RunOutcome run_synthetic(const ExperimentConfig& cfg, const ModeSpec& mode, int repeat) {
  RunOutcome out;
  out.repeat = repeat;
  out.trace.mode = mode.mode;
  try {
    const optimizer::RunConfig rc = mode_run_config(cfg, mode, repeat);
    out.seed = rc.seed;
    const auto spec = objectives::make_objective(cfg.objective, rc.n_high, cfg.active);
    out.trace = optimizer::run(objectives::to_handle(spec), objectives::to_oracle(spec), rc);
  } catch (const std::exception& e) {
    out.trace.error = e.what();
  }
  return out;
}

RunOutcome run_audio(const ExperimentConfig& cfg, int repeat) {
  RunOutcome out;
  out.repeat = repeat;
  try {
    AudioExperiment ax = *cfg.audio;
    ax.scene.corruption_seed += static_cast<std::uint64_t>(repeat);
    ax.options.seed = cfg.base.seed + static_cast<std::uint64_t>(repeat);
    out.seed = ax.options.seed;
    const audio::AudioScene scene = audio::make_scene(ax.scene);
    audio::PersonalizationResult r = audio::run_personalization(scene, ax.options);
    out.trace = r.trace;
    out.audio = std::move(r);
  } catch (const std::exception& e) {
    out.trace.error = e.what();
  }
  return out;
}

}  // namespace

AggregateResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  AggregateResult result;
  result.name = cfg.name;
  std::vector<ModeSpec> modes = cfg.modes;
  if (cfg.audio) {
    ModeSpec m;
    m.label = "oraclebo_L" + std::to_string(cfg.audio->options.l_count);
    m.mode = optimizer::Mode::OracleBo;
    m.l_count = cfg.audio->options.l_count;
    m.selection = optimizer::DimensionSelection::Explicit;
    modes = {m};
  }
  const auto reps = static_cast<std::size_t>(cfg.n_repeats);
  for (const auto& m : modes) {
    ModeResult mr;
    mr.label = m.label;
    mr.mode = m.mode;
    mr.l_count = m.l_count;
    mr.runs.resize(reps);
    result.modes.push_back(std::move(mr));
  }
  const std::size_t tasks = modes.size() * reps;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks; t = next++) {
      const std::size_t mi = t / reps;
      const int repeat = static_cast<int>(t % reps);
      result.modes[mi].runs[static_cast<std::size_t>(repeat)] =
          cfg.audio ? run_audio(cfg, repeat) : run_synthetic(cfg, modes[mi], repeat);
    }
  };
  const int n_workers = worker_count(tasks);
  std::vector<std::thread> pool;
  for (int i = 1; i < n_workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  result.rows = aggregate_rows(result.modes);
  return result;
}

void emit_csv(const AggregateResult& result, std::ostream& out) {
  out << "iteration,mode,median_regret,mean_regret,q25,q75,qf_used,qd_used\n";
  for (const auto& r : result.rows) {
    out << r.iteration << ',' << r.mode << ',' << format_g(r.median_regret) << ',' << format_g(r.mean_regret) << ','
        << format_g(r.q25) << ',' << format_g(r.q75) << ',' << format_g(r.qf_used) << ',' << format_g(r.qd_used) << '\n';
  }
}

std::string to_csv(const AggregateResult& result) {
  std::ostringstream ss;
  emit_csv(result, ss);
  return ss.str();
}

std::string summary_json(const AggregateResult& result, const ExperimentConfig& cfg) {
  json root;
  root["name"] = result.name;
  root["n_repeats"] = cfg.n_repeats;
  root["base_seed"] = cfg.base.seed;
  if (cfg.audio) {
    root["kind"] = "audio";
    root["clip"] = cfg.audio->scene.clip;
    root["budget"] = cfg.audio->options.budget;
  } else {
    root["kind"] = "synthetic";
    root["objective"] = objectives::to_string(cfg.objective);
    root["n_high"] = cfg.base.n_high;
    root["n_low"] = cfg.base.n_low;
  }
  json modes = json::array();
  for (const auto& m : result.modes) {
    json jm;
    jm["label"] = m.label;
    jm["mode"] = optimizer::to_string(m.mode);
    jm["l_count"] = m.l_count;
    jm["failures"] = m.failures();
    json finals = json::array();
    json errors = json::array();
    std::vector<double> ok;
    for (const auto& run : m.runs) {
      const auto fr = run.failed() ? std::nullopt : run.trace.final_regret();
      finals.push_back(number_or_null(fr));
      if (fr) ok.push_back(*fr);
      if (run.trace.error) errors.push_back({{"repeat", run.repeat}, {"error", *run.trace.error}});
    }
    jm["final_regrets"] = finals;
    jm["median_final_regret"] = ok.empty() ? json(nullptr) : json(median(ok));
    double sum = 0.0;
    for (double v : ok) sum += v;
    jm["mean_final_regret"] = ok.empty() ? json(nullptr) : json(sum / static_cast<double>(ok.size()));
    if (!errors.empty()) jm["errors"] = errors;
    if (cfg.audio) {
      json scores = json::array();
      for (const auto& run : m.runs) {
        if (!run.audio) {
          scores.push_back(nullptr);
          continue;
        }
        scores.push_back({{"repeat", run.repeat},
                          {"best", run.audio->best_score},
                          {"baseline", run.audio->baseline_score},
                          {"corrupted", run.audio->corrupted_score}});
      }
      jm["scores"] = scores;
    }
    modes.push_back(std::move(jm));
  }
  root["modes"] = modes;
  return root.dump(2) + "\n";
}

void write_outputs(const AggregateResult& result, const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir + ": " + ec.message());
  auto write = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
  };
  write(fs::path(out_dir) / cfg.csv_name, to_csv(result));
  write(fs::path(out_dir) / cfg.summary_name, summary_json(result, cfg));
}

}  // namespace oraclebo::harness
