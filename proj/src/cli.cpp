#include "oraclebo/cli.hpp"

#include "oraclebo/audio.hpp"
#include "oraclebo/harness.hpp"
#include "oraclebo/session.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>

namespace oraclebo::cli {

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::optional<int> repeats;
  std::vector<std::string> modes;
};

void add_common(CLI::App* sub, CommonFlags& f, bool config_required) {
  auto* c = sub->add_option("--config", f.config, "JSON experiment file");
  if (config_required) c->required();
  sub->add_option("--seed", f.seed, "Base seed (repeat r uses seed + r)");
  sub->add_option("--out-dir", f.out_dir, "Output directory")->capture_default_str();
  sub->add_option("--repeats", f.repeats, "Number of seeded repeats per mode")->check(CLI::PositiveNumber);
  sub->add_option("--mode", f.modes, "Run only these modes (label or mode name); repeatable");
}

void apply_overrides(harness::ExperimentConfig& cfg, const CommonFlags& f) {
  if (f.seed) cfg.base.seed = *f.seed;
  if (f.repeats) cfg.n_repeats = *f.repeats;
  if (!f.modes.empty() && !cfg.audio) {
    std::vector<harness::ModeSpec> kept;
    for (const auto& m : cfg.modes) {
      const bool match = std::any_of(f.modes.begin(), f.modes.end(), [&](const std::string& want) {
        return want == m.label || want == optimizer::to_string(m.mode);
      });
      if (match) kept.push_back(m);
    }
    if (kept.empty()) throw harness::ConfigError("--mode", "no configured mode matches");
    cfg.modes = std::move(kept);
  }
  cfg.validate();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void report(const harness::AggregateResult& result, std::ostream& out) {
  for (const auto& m : result.modes) {
    std::vector<double> finals;
    for (const auto& r : m.runs) {
      if (!r.failed() && r.trace.final_regret()) finals.push_back(*r.trace.final_regret());
    }
    out << m.label << ": median final regret "
        << (finals.empty() ? std::string("n/a") : fmt(harness::median(finals))) << " over " << finals.size()
        << " runs, " << m.failures() << " failed\n";
  }
}

int run_bench(const CommonFlags& f, std::ostream& out) {
  harness::ExperimentConfig cfg = harness::load_experiment(f.config);
  if (cfg.audio) throw harness::ConfigError("audio", "bench runs synthetic experiments; use audio-sim");
  apply_overrides(cfg, f);
  const auto result = harness::run_experiment(cfg);
  harness::write_outputs(result, cfg, f.out_dir);
  report(result, out);
  out << "wrote " << f.out_dir << "/" << cfg.csv_name << "\n";
  return kExitOk;
}

int run_audio_sim(const CommonFlags& f, std::ostream& out) {
  harness::ExperimentConfig cfg;
  if (!f.config.empty()) {
    cfg = harness::load_experiment(f.config);
    if (!cfg.audio) throw harness::ConfigError("audio", "audio-sim needs an \"audio\" section");
  } else {
    cfg.name = "audio_sim";
    cfg.n_repeats = 1;
    cfg.audio = harness::AudioExperiment{};
    cfg.csv_name = "audio_regret.csv";
    cfg.summary_name = "audio_summary.json";
  }
  if (!f.modes.empty() &&
      std::any_of(f.modes.begin(), f.modes.end(), [](const std::string& m) { return m != "oraclebo"; })) {
    throw harness::ConfigError("--mode", "audio-sim runs oraclebo only");
  }
  apply_overrides(cfg, f);
  const auto result = harness::run_experiment(cfg);
  harness::write_outputs(result, cfg, f.out_dir);
  for (const auto& run : result.modes.front().runs) {
    if (!run.audio) {
      out << "repeat " << run.repeat << ": failed: " << run.trace.error.value_or("unknown error") << "\n";
      continue;
    }
    out << "repeat " << run.repeat << ": best " << fmt(run.audio->best_score) << ", audiogram baseline "
        << fmt(run.audio->baseline_score) << ", uncompensated " << fmt(run.audio->corrupted_score) << "\n";
  }
  out << "wrote " << f.out_dir << "/" << cfg.csv_name << "\n";
  return result.modes.front().failures() == 0 ? kExitOk : kExitRuntime;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

int run_serve(const std::string& listen, const std::string& store_dir, std::ostream& out, std::ostream& err) {
  std::pair<std::string, int> addr;
  try {
    addr = session::parse_listen(listen);
  } catch (const std::invalid_argument& e) {
    err << "error: --listen: " << e.what() << "\n";
    return kExitConfig;
  }
  std::optional<std::filesystem::path> store;
  if (!store_dir.empty()) store = store_dir;
  session::SessionManager manager(store);
  httplib::Server server;
  session::install_routes(server, manager);
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  out << "listening on " << addr.first << ":" << addr.second << "\n" << std::flush;
  const bool ok = server.listen(addr.first, addr.second);
  g_server = nullptr;
  if (!ok) {
    err << "error: cannot listen on " << listen << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run_profile_check(const std::string& path, std::ostream& out) {
  const audio::HearingProfile p = audio::load_profile(path);
  out << "profile ok\n";
  for (std::size_t i = 0; i < p.gains_db.size(); ++i) {
    out << "  " << audio::kClinicalFrequencies[i] << " Hz: " << fmt(p.gains_db[i]) << " dB\n";
  }
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Budgeted Bayesian optimization with hybrid filter and dimension queries", "oraclebo"};
  app.require_subcommand(1);

  CommonFlags bench_flags;
  auto* bench = app.add_subcommand("bench", "Run a synthetic experiment config and write regret CSV/JSON");
  add_common(bench, bench_flags, true);

  CommonFlags audio_flags;
  audio_flags.out_dir = "out";
  auto* audio_sim = app.add_subcommand("audio-sim", "Personalize against a simulated listener");
  add_common(audio_sim, audio_flags, false);

  std::string listen = "127.0.0.1:8080";
  std::string store_dir;
  auto* serve = app.add_subcommand("serve", "Start the session service");
  serve->add_option("--listen", listen, "host:port")->capture_default_str();
  serve->add_option("--store-dir", store_dir, "Directory for session snapshots (enables resume)");

  std::string profile_path;
  auto* check = app.add_subcommand("profile-check", "Validate a hearing profile file");
  check->add_option("profile", profile_path, "Profile file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*bench) return run_bench(bench_flags, out);
    if (*audio_sim) return run_audio_sim(audio_flags, out);
    if (*serve) return run_serve(listen, store_dir, out, err);
    if (*check) return run_profile_check(profile_path, out);
  } catch (const harness::ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const audio::ProfileError& e) {
    err << "invalid profile (" << e.field() << "): " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace oraclebo::cli
