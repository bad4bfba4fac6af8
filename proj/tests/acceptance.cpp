// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is nonzero if any line fails.

#include "oraclebo/acquisition.hpp"
#include "oraclebo/dms.hpp"
#include "oraclebo/gpr.hpp"
#include "oraclebo/harness.hpp"
#include "oraclebo/objectives.hpp"
#include "oracle_models.hpp"
#include "support.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>

using namespace oraclebo;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using testing_support::uniform_matrix;
using testing_support::uniform_vector;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string num(double v) { return fmt("%.6g", v); }

harness::ExperimentConfig load(const std::string& name) {
  return harness::load_experiment(std::string(ORACLEBO_SOURCE_DIR) + "/configs/" + name);
}

const harness::ModeResult& mode(const harness::AggregateResult& r, const std::string& label) {
  for (const auto& m : r.modes) {
    if (m.label == label) return m;
  }
  throw std::runtime_error("no mode " + label);
}

// Median final regret over successful runs; +inf when every run failed.
double median_final(const harness::ModeResult& m) {
  std::vector<double> v;
  for (const auto& run : m.runs) {
    if (!run.failed() && run.trace.final_regret()) v.push_back(*run.trace.final_regret());
  }
  return v.empty() ? std::numeric_limits<double>::infinity() : harness::median(v);
}

int total_failures(const harness::AggregateResult& r) {
  int n = 0;
  for (const auto& m : r.modes) n += m.failures();
  return n;
}

Verdict benchmark_values() {
  using namespace objectives;
  double worst_branin = 0.0;
  const auto br = make_objective(ObjectiveId::Branin, 2);
  for (const auto& m : kBraninMinimizers) {
    worst_branin = std::max(worst_branin, std::abs(evaluate_native(br, Vector{{m[0], m[1]}}) - 0.397887));
  }
  const auto h6 = make_objective(ObjectiveId::Hartmann6, 6);
  Vector xh(6);
  for (int i = 0; i < 6; ++i) xh[i] = kHartmann6Minimizer[static_cast<std::size_t>(i)];
  const double hartmann_err = std::abs(evaluate_native(h6, xh) + 3.32237);
  const auto rb = make_objective(ObjectiveId::Rosenbrock, 4);
  const double rosen = std::abs(evaluate_native(rb, Vector::Ones(4)));
  double staircase = 0.0;
  for (auto id : {ObjectiveId::P1, ObjectiveId::P2, ObjectiveId::P3}) {
    const auto p = make_objective(id, 10);
    staircase = std::max(staircase, std::abs(evaluate_native(p, Vector::Zero(10))));
  }
  Verdict v;
  v.pass = worst_branin <= 1e-5 && hartmann_err <= 1e-4 && rosen == 0.0 && staircase == 0.0;
  v.detail = "branin max err " + num(worst_branin) + ", hartmann6 err " + num(hartmann_err) + ", rosenbrock " +
             num(rosen) + ", P1-P3 max " + num(staircase);
  return v;
}

Verdict gpr_oracle() {
  double worst = 0.0, worst_interp = 0.0;
  int jittered = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(seed % 5);
    const Matrix x = uniform_matrix(20, d, -1, 1, 7000 + seed);
    const Vector f = uniform_vector(20, -3, 3, 8000 + seed);
    const Matrix xs = uniform_matrix(25, d, -1.2, 1.2, 9000 + seed);
    const Vector ell = uniform_vector(d, 0.2, 0.8, 10000 + seed);
    const double a0 = 0.5 + static_cast<double>(seed % 3);
    const bool standardize = seed % 2 == 1;
    gpr::ObservationSet obs(d);
    for (Eigen::Index i = 0; i < 20; ++i) obs.add(x.row(i).transpose(), f[i]);
    const auto model = gpr::fit_posterior(obs, gpr::KernelParams::ard(a0, ell, 1e-4), gpr::PosteriorOptions{standardize});
    const auto p = gpr::predict(model, xs);
    const auto o = testing_oracles::dense_predict(x, f, xs, a0, ell, 1e-4, standardize);
    worst = std::max({worst, (p.mean - o.mean).cwiseAbs().maxCoeff(),
                      (p.variance - o.variance.cwiseMax(0.0)).cwiseAbs().maxCoeff()});

    // Interpolation needs a well-conditioned noise-free Gram matrix, so these problems are 3-5 dimensional.
    const Eigen::Index di = 3 + static_cast<Eigen::Index>(seed % 3);
    const Matrix xi = uniform_matrix(20, di, -1, 1, 11000 + seed);
    gpr::ObservationSet obs_i(di);
    for (Eigen::Index i = 0; i < 20; ++i) obs_i.add(xi.row(i).transpose(), f[i]);
    const auto exact = gpr::fit_posterior(obs_i, gpr::KernelParams::ard(1.0, Vector::Constant(di, 0.3)));
    if (exact.applied_jitter() > 0.0) ++jittered;
    worst_interp = std::max(worst_interp, (gpr::predict(exact, xi).mean - f).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-8 && worst_interp <= 1e-6 && jittered == 0,
          "max |posterior - dense| " + num(worst) + " (tol 1e-8), interpolation err " + num(worst_interp) +
              " (tol 1e-6), " + std::to_string(jittered) + " fits needed jitter"};
}

Verdict ei_consistency() {
  // Closed form against plain Monte-Carlo from the predictive normal.
  int ei_ok = 0;
  double worst_ratio = 0.0;
  CounterRng cfg_rng(31);
  for (int c = 0; c < 20; ++c) {
    const double mean = cfg_rng.uniform(-2, 2), sd = cfg_rng.uniform(0.1, 2), best = mean + cfg_rng.uniform(-2, 2) * sd;
    const int n = 1000000;
    CounterRng rng(derive_key(41, static_cast<std::uint64_t>(c)));
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double imp = std::max(best - (mean + sd * rng.normal()), 0.0);
      s += imp;
      s2 += imp * imp;
    }
    const double m = s / n;
    const double se = std::sqrt((s2 / n - m * m) * n / (n - 1.0) / n);
    const double ratio = std::abs(acquisition::expected_improvement(mean, sd * sd, best) - m) / se;
    worst_ratio = std::max(worst_ratio, ratio);
    if (ratio <= 3.0) ++ei_ok;
  }

  int qei_ok = 0;
  double worst_q = 0.0;
  for (std::uint64_t c = 0; c < 50; ++c) {
    gpr::ObservationSet obs(2);
    const Matrix x = uniform_matrix(6, 2, -1, 1, 300 + c);
    const Vector y = uniform_vector(6, -2, 2, 400 + c);
    for (Eigen::Index i = 0; i < 6; ++i) obs.add(x.row(i).transpose(), y[i]);
    const auto model = gpr::fit_posterior(std::move(obs), gpr::KernelParams::ard(1.0, Vector::Constant(2, 0.6), 1e-6));
    const Matrix pt = uniform_matrix(1, 2, -1, 1, 500 + c);
    const gpr::Prediction p = gpr::predict(model, pt);
    CounterRng rng(600 + c);
    const double best = p.mean[0] + rng.uniform(-2, 2) * std::sqrt(p.variance[0]);
    const int n_mc = 10000;
    const double exact = acquisition::expected_improvement(model, pt, best)[0];
    const double mc = acquisition::qei_scores(model, pt, best, n_mc, c)[0];
    const Matrix draws = gpr::sample_joint(model, pt, n_mc, c);
    const Eigen::ArrayXd imp = (best - draws.col(0).array()).cwiseMax(0.0);
    const double se = std::sqrt((imp - imp.mean()).square().sum() / (n_mc - 1) / n_mc);
    const double ratio = std::abs(mc - exact) / se;
    worst_q = std::max(worst_q, ratio);
    if (ratio <= 3.0) ++qei_ok;
  }
  return {ei_ok == 20 && qei_ok == 50, "EI vs 1e6 MC within 3 SE on " + std::to_string(ei_ok) + "/20 (worst " +
                                           num(worst_ratio) + " SE), qEI(q=1) vs EI on " + std::to_string(qei_ok) +
                                           "/50 (worst " + num(worst_q) + " SE)"};
}

Verdict feasibility_matrix() {
  using objectives::ObjectiveId;
  long records = 0, bad_points = 0, bad_budget = 0, failures = 0, runs = 0;
  for (auto id : {ObjectiveId::P1, ObjectiveId::P2, ObjectiveId::P3, ObjectiveId::Branin, ObjectiveId::Hartmann6,
                  ObjectiveId::Rosenbrock}) {
    harness::ExperimentConfig cfg = load("p1_desk.json");
    cfg.name = "matrix_" + objectives::to_string(id);
    cfg.objective = id;
    cfg.modes.push_back({"oraclebo_L5_top", optimizer::Mode::OracleBo, 5, optimizer::DimensionSelection::Top, {}});
    cfg.validate();
    const auto result = harness::run_experiment(cfg);
    for (const auto& m : result.modes) {
      for (const auto& run : m.runs) {
        ++runs;
        if (run.failed()) ++failures;
        for (const auto& rec : run.trace.records) {
          ++records;
          if (rec.queried_h.size() != static_cast<Eigen::Index>(cfg.base.n_high) ||
              !(rec.queried_h.cwiseAbs().maxCoeff() <= 1.0)) {
            ++bad_points;
          }
          if (rec.filter_used + rec.dimension_used > rec.total_budget) ++bad_budget;
        }
      }
    }
  }
  return {bad_points == 0 && bad_budget == 0 && failures == 0 && records > 0,
          std::to_string(runs) + " runs, " + std::to_string(records) + " records: " + std::to_string(bad_points) +
              " infeasible, " + std::to_string(bad_budget) + " over budget, " + std::to_string(failures) + " failed"};
}

struct DeskResult {
  Verdict hybrid;
  Verdict determinism;
};

DeskResult hybrid_and_determinism() {
  const auto cfg = load("p1_desk.json");
  const auto a = harness::run_experiment(cfg);
  const double ob = median_final(mode(a, "oraclebo_L5"));
  const double al = median_final(mode(a, "alebo_L5"));
  const double plain = median_final(mode(a, "alebo_plain"));
  DeskResult out;
  out.hybrid = {ob < plain && al < plain && total_failures(a) == 0,
                "median final regret OracleBO(L=5) " + num(ob) + ", ALEBO(L=5) " + num(al) + ", plain ALEBO " +
                    num(plain) + " (need both below plain)"};

  const auto b = harness::run_experiment(cfg);
  const std::string csv_a = harness::to_csv(a), csv_b = harness::to_csv(b);
  const bool same_summary = harness::summary_json(a, cfg) == harness::summary_json(b, cfg);
  out.determinism = {csv_a == csv_b && same_summary && !csv_a.empty(),
                     "p1_desk run twice: CSV " + std::string(csv_a == csv_b ? "identical" : "differs") + " (" +
                         std::to_string(csv_a.size()) + " bytes), summary " + (same_summary ? "identical" : "differs")};
  return out;
}

Verdict sweet_spot() {
  const auto cfg = load("sweet_spot.json");
  const auto r = harness::run_experiment(cfg);
  std::ostringstream detail;
  double best_mid = std::numeric_limits<double>::infinity();
  for (const auto& m : r.modes) {
    const double v = median_final(m);
    detail << m.label << "=" << num(v) << " ";
    if (m.l_count > 0 && m.l_count < 45) best_mid = std::min(best_mid, v);
  }
  const double l0 = median_final(mode(r, "L0")), l15 = median_final(mode(r, "L15")), l45 = median_final(mode(r, "L45"));
  detail << "(need L15 <= L0 and L45 >= best intermediate " << num(best_mid) << ")";
  return {l15 <= l0 && l45 >= best_mid && total_failures(r) == 0, detail.str()};
}

Verdict top_vs_random() {
  const auto cfg = load("rosenbrock_top_vs_random.json");
  const auto r = harness::run_experiment(cfg);
  const double top = median_final(mode(r, "top_L4")), rnd = median_final(mode(r, "random_L4"));
  return {top <= rnd && total_failures(r) == 0,
          "Rosenbrock median final regret top " + num(top) + ", random " + num(rnd) + " (need top <= random)"};
}

Verdict audio_simulation() {
  const auto cfg = load("audio_random.json");
  const auto r = harness::run_experiment(cfg);
  int wins = 0, n = 0;
  std::ostringstream detail;
  for (const auto& run : r.modes.front().runs) {
    ++n;
    if (!run.audio) {
      detail << "seed " << run.repeat << " failed; ";
      continue;
    }
    if (run.audio->best_score >= run.audio->baseline_score) ++wins;
    detail << "seed " << run.repeat << ": " << num(run.audio->best_score) << " vs " << num(run.audio->baseline_score)
           << "; ";
  }
  detail << "OracleBO >= audiogram baseline on " << wins << "/" << n << " seeds";
  return {wins == n && n == 5, detail.str()};
}

Verdict dms_brute_force() {
  CounterRng rng(5150);
  int agree = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const Eigen::Index q = 1 + static_cast<Eigen::Index>(rng.below(10));
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(20));
    acquisition::CandidateBatch b;
    b.points_high = uniform_matrix(q, n, -1, 1, rng.next_u64());
    b.points_low = b.points_high.leftCols(2);
    b.qei = uniform_vector(q, 0, 2, rng.next_u64());
    if (rng.uniform() < 0.15) b.qei[static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(q)))] = 0.0;
    std::vector<dms::DimensionFact> facts;
    const auto n_facts = rng.below(std::min<std::uint64_t>(static_cast<std::uint64_t>(n), 8) + 1);
    for (std::uint64_t k = 0; k < n_facts; ++k) {
      facts.push_back({static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n))), rng.uniform(-1, 1)});
    }
    const double sigma = rng.uniform(0.2, 2.0);
    const bool per_dim = rng.uniform() < 0.5;
    const dms::DmsConfig c{sigma, per_dim ? dms::QeiWeighting::PerDimension : dms::QeiWeighting::Single};
    if (dms::dms_select(b, facts, c).batch_index == testing_oracles::brute_force(b, facts, sigma, per_dim)) ++agree;
  }
  return {agree == 200, std::to_string(agree) + "/200 instances match exhaustive evaluation"};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const std::string& name, const std::function<Verdict()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << " [" << fmt("%.1f", secs) << " s]"
              << std::endl;
  };

  report("benchmark-values", benchmark_values);
  report("gpr-oracle", gpr_oracle);
  report("ei-qei-consistency", ei_consistency);
  report("dms-brute-force", dms_brute_force);
  report("feasibility-budget", feasibility_matrix);
  DeskResult desk;
  report("hybrid-benefit", [&] {
    desk = hybrid_and_determinism();
    return desk.hybrid;
  });
  report("determinism", [&] { return desk.determinism; });
  report("sweet-spot", sweet_spot);
  report("top-vs-random", top_vs_random);
  report("audio-simulation", audio_simulation);
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
