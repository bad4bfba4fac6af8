#include "oraclebo/optimizer.hpp"

#include "oraclebo/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace oraclebo::optimizer {

namespace {

// Stream tags for derive_key.
constexpr std::uint64_t kInitTag = 1;
constexpr std::uint64_t kMleTag = 2;
constexpr std::uint64_t kAcquisitionTag = 3;
constexpr std::uint64_t kFactNoiseTag = 4;
constexpr std::uint64_t kDimensionTag = 5;

double median_pairwise_distance(const Eigen::MatrixXd& pts) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < pts.rows(); ++j) d.push_back((pts.row(i) - pts.row(j)).norm());
  }
  if (d.empty()) return 1.0;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  const double m = d[d.size() / 2];
  return m > 1e-12 ? m : 1.0;
}

gpr::KernelParams default_kernel(gpr::KernelVariant variant, Eigen::Index dim, double lengthscale, double noise) {
  if (variant == gpr::KernelVariant::Ard) {
    return gpr::KernelParams::ard(1.0, Vector::Constant(dim, lengthscale), noise);
  }
  return gpr::KernelParams::mahalanobis_kernel(
      1.0, Eigen::MatrixXd::Identity(dim, dim) / (2.0 * lengthscale * lengthscale), noise);
}

}  // namespace

BudgetLedger::BudgetLedger(int total_budget, int filter_cost, int dimension_cost)
    : total_(total_budget), filter_cost_(filter_cost), dimension_cost_(dimension_cost) {
  if (total_budget < 0) throw std::invalid_argument("budget must be nonnegative");
  if (filter_cost < 1 || dimension_cost < 1) throw std::invalid_argument("query costs must be positive");
}

void BudgetLedger::charge_filter() {
  if (!can_filter()) throw std::logic_error("filter query exceeds the budget");
  ++filter_used_;
}

void BudgetLedger::charge_dimension() {
  if (!can_dimension()) throw std::logic_error("dimension query exceeds the budget");
  ++dimension_used_;
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::OracleBo:
      return "oraclebo";
    case Mode::AleboL:
      return "alebo_l";
    case Mode::AleboPlain:
      return "alebo_plain";
  }
  return "unknown";
}

std::optional<Mode> parse_mode(std::string_view name) {
  if (name == "oraclebo") return Mode::OracleBo;
  if (name == "alebo_l") return Mode::AleboL;
  if (name == "alebo_plain" || name == "alebo") return Mode::AleboPlain;
  return std::nullopt;
}

std::string to_string(DimensionSelection s) {
  switch (s) {
    case DimensionSelection::Top:
      return "top";
    case DimensionSelection::Random:
      return "random";
    case DimensionSelection::Explicit:
      return "explicit";
  }
  return "unknown";
}

std::optional<DimensionSelection> parse_selection(std::string_view name) {
  if (name == "top") return DimensionSelection::Top;
  if (name == "random") return DimensionSelection::Random;
  if (name == "explicit") return DimensionSelection::Explicit;
  return std::nullopt;
}

void RunConfig::validate() const {
  if (n_high < 1) throw std::invalid_argument("n_high must be >= 1");
  if (n_low < 1 || static_cast<std::size_t>(n_low) > n_high) throw std::invalid_argument("n_low must be in [1, n_high]");
  if (f_evals < 0) throw std::invalid_argument("f_evals must be >= 0");
  if (r_init < 1 || r_init > f_evals) {
    if (!(f_evals == 0 && r_init >= 0)) throw std::invalid_argument("r_init must be in [1, f_evals]");
  }
  if (q < 1) throw std::invalid_argument("q must be >= 1");
  if (n_mc < 1) throw std::invalid_argument("n_mc must be >= 1");
  if (n_raw < q) throw std::invalid_argument("n_raw must be >= q");
  if (!(dms.sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (l_count > n_high) throw std::invalid_argument("l_count must be <= n_high");
  if (l_selection == DimensionSelection::Explicit && l_explicit.size() < l_count) {
    throw std::invalid_argument("explicit dimension list is shorter than l_count");
  }
  for (std::size_t j : l_explicit) {
    if (j >= n_high) throw std::invalid_argument("explicit dimension index out of range");
  }
  if (budget && *budget < 0) throw std::invalid_argument("budget must be nonnegative");
  if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise_variance must be nonnegative");
  if (!(fact_noise_std >= 0.0)) throw std::invalid_argument("fact_noise_std must be nonnegative");
  if (filter_cost < 1 || dimension_cost < 1) throw std::invalid_argument("query costs must be >= 1");
}

std::optional<double> RegretTrace::final_best() const {
  if (records.empty()) return std::nullopt;
  return records.back().best_so_far;
}

std::optional<double> RegretTrace::final_regret() const {
  if (records.empty()) return std::nullopt;
  return records.back().regret;
}

namespace {

embedding::EmbeddingSpec default_embedding(const RunConfig& cfg, std::size_t search_dim) {
  if (search_dim < 1) throw std::invalid_argument("search space must have at least one dimension");
  const auto d = static_cast<Eigen::Index>(std::min<std::size_t>(static_cast<std::size_t>(cfg.n_low), search_dim));
  return embedding::make_embedding(static_cast<Eigen::Index>(search_dim), d, cfg.seed);
}

}  // namespace

Engine::Engine(RunConfig cfg, std::size_t search_dim, AcquisitionKind kind)
    : Engine(cfg, default_embedding(cfg, search_dim), kind) {}

Engine::Engine(RunConfig cfg, embedding::EmbeddingSpec spec, AcquisitionKind kind)
    : cfg_(std::move(cfg)), kind_(kind), spec_(std::move(spec)) {
  if (spec_.n_low < 1 || spec_.n_low > cfg_.n_low) throw std::invalid_argument("embedding dimension exceeds n_low");
  ledger_ = BudgetLedger(cfg_.total_budget(), cfg_.filter_cost, cfg_.dimension_cost);
  obs_ = gpr::ObservationSet(spec_.n_low);
  if (cfg_.r_init > 0) initial_points_ = embedding::sample_polytope(spec_, cfg_.r_init, derive_key(cfg_.seed, kInitTag));
}

void Engine::record_dimension_query(const dms::DimensionFact& fact, bool use_in_dms) {
  ledger_.charge_dimension();
  if (use_in_dms) facts_.push_back(fact);
}

bool Engine::can_query() const noexcept { return ledger_.filter_used() < cfg_.f_evals && ledger_.can_filter(); }

const Proposal& Engine::pending() {
  if (!pending_) {
    if (!can_query()) throw std::logic_error("no filter budget left for another proposal");
    pending_ = make_proposal();
  }
  return *pending_;
}

void Engine::observe(double value) {
  if (!pending_) throw std::logic_error("observe() without a pending proposal");
  if (!std::isfinite(value)) throw std::invalid_argument("observed value is not finite");
  ledger_.charge_filter();
  obs_.add(pending_->low, value);
  pending_.reset();
}

std::optional<double> Engine::best_value() const {
  if (obs_.empty()) return std::nullopt;
  return obs_.values()[obs_.argmin()];
}

std::optional<Vector> Engine::best_point() const {
  if (obs_.empty()) return std::nullopt;
  return embedding::project_up(spec_, obs_.points().row(obs_.argmin()).transpose());
}

gpr::KernelParams Engine::fit_kernel() {
  if (lengthscale_hint_ <= 0.0) lengthscale_hint_ = median_pairwise_distance(obs_.points());
  const gpr::KernelParams fallback =
      default_kernel(cfg_.kernel, obs_.dim(), lengthscale_hint_, cfg_.noise_variance);
  if (obs_.size() < 2) return last_kernel_.value_or(fallback);

  gpr::MleOptions opts;
  opts.noise_variance = cfg_.noise_variance;
  opts.max_sweeps = cfg_.mle_sweeps;
  opts.line_search_iterations = cfg_.mle_line_iterations;
  opts.lengthscale_hint = lengthscale_hint_;
  opts.initial = last_kernel_.value_or(fallback);
  const int restarts = last_kernel_ ? 1 : cfg_.mle_restarts;
  const gpr::MleFit fit = gpr::fit_kernel_mle(obs_, cfg_.kernel, restarts, derive_key(cfg_.seed, kMleTag, iteration()), opts);
  if (std::isfinite(fit.log_likelihood)) last_kernel_ = fit.params;
  return last_kernel_.value_or(fallback);
}

Proposal Engine::make_proposal() {
  Proposal p;
  p.iteration = iteration();
  if (p.iteration < cfg_.r_init || obs_.empty()) {
    p.initial_stage = true;
    if (cfg_.center_first && p.iteration == 0) {
      p.low = Vector::Zero(spec_.n_low);
    } else {
      const Eigen::Index row = std::min<Eigen::Index>(p.iteration, initial_points_.rows() - 1);
      p.low = initial_points_.row(row).transpose();
    }
  } else {
    const gpr::KernelParams kernel = fit_kernel();
    const gpr::PosteriorModel model = gpr::fit_posterior(obs_, kernel);
    const double best_f = obs_.values()[obs_.argmin()];
    const std::uint64_t key = derive_key(cfg_.seed, kAcquisitionTag, static_cast<std::uint64_t>(p.iteration));
    if (kind_ == AcquisitionKind::BatchDms) {
      acquisition::BatchOptions opts;
      opts.q = cfg_.q;
      opts.n_raw = cfg_.n_raw;
      opts.n_mc = cfg_.n_mc;
      opts.perturbation_step = cfg_.perturbation_step;
      opts.set_score = cfg_.set_score;
      const acquisition::CandidateBatch batch = acquisition::propose_batch(model, spec_, best_f, opts, key);
      p.low = dms::dms_select(batch, facts_, cfg_.dms).chosen_low;
    } else {
      p.low = acquisition::propose_single(model, spec_, best_f, cfg_.n_raw, cfg_.perturbation_step, key);
    }
  }
  p.high = embedding::project_up(spec_, p.low);
  return p;
}

std::vector<std::size_t> select_dimensions(const ObjectiveHandle& objective, std::size_t count,
                                           DimensionSelection strategy, std::uint64_t seed) {
  const std::size_t n = objective.dimension;
  if (count > n) throw std::invalid_argument("cannot select more dimensions than the objective has");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count == n) return all;

  if (strategy == DimensionSelection::Random) {
    CounterRng rng(derive_key(seed, kDimensionTag));
    for (std::size_t i = 0; i < count; ++i) std::swap(all[i], all[i + rng.below(n - i)]);
    all.resize(count);
    return all;
  }
  if (strategy != DimensionSelection::Top) throw UnsupportedStrategy("explicit selection needs a dimension list");
  if (!objective.sweepable) throw UnsupportedStrategy("top-variance selection needs a sweepable objective");

  constexpr int kSweepPoints = 21;
  std::vector<double> variance(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    Vector h = Vector::Zero(static_cast<Eigen::Index>(n));
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int k = 0; k < kSweepPoints; ++k) {
      h[static_cast<Eigen::Index>(j)] = -1.0 + 2.0 * k / (kSweepPoints - 1);
      const double f = objective.evaluate(h);
      sum += f;
      sum_sq += f * f;
    }
    const double mean = sum / kSweepPoints;
    variance[j] = std::max(0.0, sum_sq / kSweepPoints - mean * mean);
  }
  std::stable_sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) { return variance[a] > variance[b]; });
  all.resize(count);
  return all;
}

std::vector<std::size_t> revealed_dimensions(const ObjectiveHandle& objective, const RunConfig& cfg, std::size_t count) {
  if (count == 0) return {};
  if (cfg.l_selection == DimensionSelection::Explicit) {
    if (cfg.l_explicit.size() < count) throw std::invalid_argument("explicit dimension list is shorter than l_count");
    std::vector<std::size_t> dims(cfg.l_explicit.begin(), cfg.l_explicit.begin() + static_cast<std::ptrdiff_t>(count));
    if (std::set<std::size_t>(dims.begin(), dims.end()).size() != dims.size()) {
      throw std::invalid_argument("explicit dimension list has duplicates");
    }
    return dims;
  }
  return select_dimensions(objective, count, cfg.l_selection, cfg.seed);
}

namespace {

void check_handles(const ObjectiveHandle& objective, const DimensionOracleHandle& oracle, const RunConfig& cfg) {
  cfg.validate();
  if (objective.dimension != cfg.n_high || oracle.dimension != cfg.n_high) {
    throw std::invalid_argument("objective/oracle dimension does not match n_high");
  }
  if (!objective.evaluate) throw std::invalid_argument("objective has no evaluator");
}

dms::DimensionFact query_fact(const DimensionOracleHandle& oracle, std::size_t j, const RunConfig& cfg,
                              CounterRng& noise) {
  if (!oracle.query) throw std::invalid_argument("dimension oracle has no query function");
  dms::DimensionFact fact = oracle.query(j);
  if (cfg.fact_noise_std > 0.0) fact.value = std::clamp(fact.value + cfg.fact_noise_std * noise.normal(), -1.0, 1.0);
  return fact;
}

TraceRecord make_record(const Proposal& p, const Vector& full_h, double f, const BudgetLedger& ledger,
                        const std::vector<TraceRecord>& prior, const ObjectiveHandle& objective) {
  TraceRecord rec;
  rec.iteration = p.iteration + 1;
  rec.queried_h = full_h;
  rec.observed_f = f;
  rec.best_so_far = prior.empty() ? f : std::min(prior.back().best_so_far, f);
  if (objective.known_minimum) rec.regret = rec.best_so_far - *objective.known_minimum;
  rec.filter_used = ledger.filter_used();
  rec.dimension_used = ledger.dimension_used();
  rec.total_budget = ledger.total_budget();
  rec.initial_stage = p.initial_stage;
  return rec;
}

}  // namespace

RegretTrace run_oraclebo(const ObjectiveHandle& objective, const DimensionOracleHandle& oracle, const RunConfig& cfg) {
  check_handles(objective, oracle, cfg);
  RegretTrace trace;
  trace.mode = Mode::OracleBo;
  Engine engine(cfg, cfg.n_high, AcquisitionKind::BatchDms);

  CounterRng noise(derive_key(cfg.seed, kFactNoiseTag));
  for (std::size_t j : revealed_dimensions(objective, cfg, cfg.l_count)) {
    if (!engine.ledger().can_dimension()) break;
    const dms::DimensionFact fact = query_fact(oracle, j, cfg, noise);
    engine.record_dimension_query(fact, true);
    trace.facts.push_back(fact);
  }

  while (engine.can_query()) {
    Proposal p;
    double f = 0.0;
    try {
      p = engine.pending();
      f = objective.evaluate(p.high);
      engine.observe(f);
    } catch (const std::exception& e) {
      trace.error = e.what();
      break;
    }
    trace.records.push_back(make_record(p, p.high, f, engine.ledger(), trace.records, objective));
  }
  return trace;
}

RegretTrace run_alebo_l(const ObjectiveHandle& objective, const DimensionOracleHandle& oracle, const RunConfig& cfg) {
  check_handles(objective, oracle, cfg);
  RegretTrace trace;
  trace.mode = cfg.mode == Mode::AleboPlain ? Mode::AleboPlain : Mode::AleboL;
  const std::size_t l_count = cfg.mode == Mode::AleboPlain ? 0 : cfg.l_count;

  RunConfig run_cfg = cfg;
  run_cfg.l_count = l_count;
  if (cfg.mode == Mode::AleboPlain && !cfg.budget) run_cfg.budget = cfg.total_budget();

  BudgetLedger ledger(run_cfg.total_budget(), cfg.filter_cost, cfg.dimension_cost);
  CounterRng noise(derive_key(cfg.seed, kFactNoiseTag));
  Vector base = Vector::Zero(static_cast<Eigen::Index>(cfg.n_high));
  std::vector<bool> revealed(cfg.n_high, false);
  for (std::size_t j : revealed_dimensions(objective, run_cfg, l_count)) {
    if (!ledger.can_dimension()) break;
    const dms::DimensionFact fact = query_fact(oracle, j, cfg, noise);
    ledger.charge_dimension();
    base[static_cast<Eigen::Index>(j)] = fact.value;
    revealed[j] = true;
    trace.facts.push_back(fact);
  }
  std::vector<std::size_t> free;
  for (std::size_t j = 0; j < cfg.n_high; ++j) {
    if (!revealed[j]) free.push_back(j);
  }

  if (free.empty()) {
    // Every coordinate is known: a single evaluation of the revealed vector.
    if (cfg.f_evals > 0 && ledger.can_filter()) {
      Proposal p;
      p.initial_stage = true;
      double f = 0.0;
      try {
        f = objective.evaluate(base);
      } catch (const std::exception& e) {
        trace.error = e.what();
        return trace;
      }
      ledger.charge_filter();
      trace.records.push_back(make_record(p, base, f, ledger, trace.records, objective));
    }
    return trace;
  }

  // The reduced search reuses the full-space embedding with the revealed columns removed, so
  // ALEBO(L) runs are paired with ALEBO(0) runs of the same seed.
  embedding::EmbeddingSpec reduced = embedding::make_embedding(
      static_cast<Eigen::Index>(cfg.n_high), static_cast<Eigen::Index>(cfg.n_low), cfg.seed);
  if (!trace.facts.empty()) {
    std::vector<Eigen::Index> keep(free.begin(), free.end());
    if (keep.size() >= static_cast<std::size_t>(cfg.n_low)) {
      reduced = embedding::restrict_embedding(reduced, keep);
    } else {
      reduced = embedding::make_embedding(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()), cfg.seed);
    }
  }
  Engine engine(run_cfg, std::move(reduced), AcquisitionKind::SingleEi);
  for (std::size_t i = 0; i < static_cast<std::size_t>(ledger.dimension_used()); ++i) {
    engine.record_dimension_query(trace.facts[i], false);
  }

  while (engine.can_query()) {
    Proposal p;
    Vector full = base;
    double f = 0.0;
    try {
      p = engine.pending();
      for (std::size_t i = 0; i < free.size(); ++i) {
        full[static_cast<Eigen::Index>(free[i])] = p.high[static_cast<Eigen::Index>(i)];
      }
      f = objective.evaluate(full);
      engine.observe(f);
    } catch (const std::exception& e) {
      trace.error = e.what();
      break;
    }
    trace.records.push_back(make_record(p, full, f, engine.ledger(), trace.records, objective));
  }
  return trace;
}

RegretTrace run(const ObjectiveHandle& objective, const DimensionOracleHandle& oracle, const RunConfig& cfg) {
  if (cfg.mode == Mode::OracleBo) return run_oraclebo(objective, oracle, cfg);
  return run_alebo_l(objective, oracle, cfg);
}

}  // namespace oraclebo::optimizer
