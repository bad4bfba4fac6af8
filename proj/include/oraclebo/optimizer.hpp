#pragma once

#include "oraclebo/acquisition.hpp"
#include "oraclebo/dms.hpp"
#include "oraclebo/embedding.hpp"
#include "oraclebo/gpr.hpp"
#include "oraclebo/handles.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace oraclebo::optimizer {

using Vector = Eigen::VectorXd;

/// Joint budget over filter (Q_f) and dimension (Q_d) queries: cost_f * Q_f + cost_d * Q_d <= B.
class BudgetLedger {
 public:
  BudgetLedger() = default;
  explicit BudgetLedger(int total_budget, int filter_cost = 1, int dimension_cost = 1);

  int total_budget() const noexcept { return total_; }
  int filter_used() const noexcept { return filter_used_; }
  int dimension_used() const noexcept { return dimension_used_; }
  int spent() const noexcept { return filter_used_ * filter_cost_ + dimension_used_ * dimension_cost_; }
  int remaining() const noexcept { return total_ - spent(); }

  bool can_filter() const noexcept { return spent() + filter_cost_ <= total_; }
  bool can_dimension() const noexcept { return spent() + dimension_cost_ <= total_; }

  /// Both throw std::logic_error when the charge would exceed the budget.
  void charge_filter();
  void charge_dimension();

 private:
  int total_ = 0;
  int filter_cost_ = 1;
  int dimension_cost_ = 1;
  int filter_used_ = 0;
  int dimension_used_ = 0;
};

enum class Mode { OracleBo, AleboL, AleboPlain };
enum class DimensionSelection { Top, Random, Explicit };

std::string to_string(Mode mode);
std::optional<Mode> parse_mode(std::string_view name);
std::string to_string(DimensionSelection s);
std::optional<DimensionSelection> parse_selection(std::string_view name);

struct RunConfig {
  std::size_t n_high = 100;
  int n_low = 4;
  int f_evals = 50;
  /// Total budget B; defaults to f_evals + l_count (unit costs).
  std::optional<int> budget;
  int r_init = 5;
  int q = 5;
  int n_mc = 256;
  int n_raw = 512;
  double perturbation_step = 0.05;
  acquisition::SetScore set_score = acquisition::SetScore::Max;
  dms::DmsConfig dms;
  std::size_t l_count = 0;
  DimensionSelection l_selection = DimensionSelection::Random;
  std::vector<std::size_t> l_explicit;
  std::uint64_t seed = 0;
  Mode mode = Mode::OracleBo;

  gpr::KernelVariant kernel = gpr::KernelVariant::Ard;
  /// Observation noise in standardized units.
  double noise_variance = 1e-6;
  /// MLE restarts for the first fit; later fits warm-start from the previous optimum with one restart.
  int mle_restarts = 3;
  int mle_sweeps = 3;
  int mle_line_iterations = 12;

  /// Standard deviation of additive Gaussian corruption on revealed coordinates (normalized units).
  double fact_noise_std = 0.0;
  int filter_cost = 1;
  int dimension_cost = 1;
  /// Evaluate the embedding origin as the first initial point.
  bool center_first = false;

  int total_budget() const {
    return budget.value_or(f_evals * filter_cost + static_cast<int>(l_count) * dimension_cost);
  }

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

struct TraceRecord {
  int iteration = 0;
  Vector queried_h;
  double observed_f = 0.0;
  double best_so_far = 0.0;
  std::optional<double> regret;
  int filter_used = 0;
  int dimension_used = 0;
  int total_budget = 0;
  bool initial_stage = false;
};

struct RegretTrace {
  Mode mode = Mode::OracleBo;
  std::vector<TraceRecord> records;
  std::vector<dms::DimensionFact> facts;
  std::optional<std::string> error;

  std::optional<double> final_best() const;
  std::optional<double> final_regret() const;
};

enum class AcquisitionKind { BatchDms, SingleEi };

struct Proposal {
  int iteration = 0;
  Vector low;
  Vector high;
  bool initial_stage = false;
};

/// Stepwise optimizer state in one search space: propose, observe, repeat.
///
/// Every proposal is a deterministic function of the configuration and the observation history, so
/// replaying the same observations reproduces the same sequence of proposals.
class Engine {
 public:
  Engine(RunConfig cfg, std::size_t search_dim, AcquisitionKind kind);
  /// Uses a prebuilt embedding; its n_low must not exceed cfg.n_low.
  Engine(RunConfig cfg, embedding::EmbeddingSpec spec, AcquisitionKind kind);

  /// Charges one dimension query. Facts are in search-space coordinates; `use_in_dms` adds the fact to
  /// the set the sampler matches against.
  void record_dimension_query(const dms::DimensionFact& fact, bool use_in_dms);

  bool can_query() const noexcept;

  /// The next point to evaluate; computed on first call and cached until observe().
  const Proposal& pending();
  bool has_pending() const noexcept { return pending_.has_value(); }

  void observe(double value);

  const RunConfig& config() const noexcept { return cfg_; }
  const BudgetLedger& ledger() const noexcept { return ledger_; }
  const embedding::EmbeddingSpec& embedding() const noexcept { return spec_; }
  const gpr::ObservationSet& observations() const noexcept { return obs_; }
  const std::vector<dms::DimensionFact>& facts() const noexcept { return facts_; }
  std::optional<double> best_value() const;
  /// High-dimensional point of the best observation so far.
  std::optional<Vector> best_point() const;
  int iteration() const noexcept { return ledger_.filter_used(); }

 private:
  Proposal make_proposal();
  gpr::KernelParams fit_kernel();

  RunConfig cfg_;
  AcquisitionKind kind_;
  embedding::EmbeddingSpec spec_;
  BudgetLedger ledger_;
  gpr::ObservationSet obs_;
  std::vector<dms::DimensionFact> facts_;
  std::optional<Proposal> pending_;
  std::optional<gpr::KernelParams> last_kernel_;
  double lengthscale_hint_ = 0.0;
  Eigen::MatrixXd initial_points_;
};

/// Raised by select_dimensions for strategies the objective cannot support.
class UnsupportedStrategy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Top: rank coordinates by the variance of f along a 21-point sweep through the domain midpoint.
/// Random: seeded sample without replacement. Explicit is not handled here.
std::vector<std::size_t> select_dimensions(const ObjectiveHandle& objective, std::size_t count,
                                           DimensionSelection strategy, std::uint64_t seed);

/// Revealed coordinates for a run, honoring l_selection / l_explicit.
std::vector<std::size_t> revealed_dimensions(const ObjectiveHandle& objective, const RunConfig& cfg, std::size_t count);

RegretTrace run_oraclebo(const ObjectiveHandle& objective, const DimensionOracleHandle& oracle, const RunConfig& cfg);
RegretTrace run_alebo_l(const ObjectiveHandle& objective, const DimensionOracleHandle& oracle, const RunConfig& cfg);

/// Dispatches on cfg.mode; AleboPlain is run_alebo_l with no dimension queries.
RegretTrace run(const ObjectiveHandle& objective, const DimensionOracleHandle& oracle, const RunConfig& cfg);

}  // namespace oraclebo::optimizer
