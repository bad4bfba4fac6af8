#include "oraclebo/acquisition.hpp"

#include "oraclebo/random.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oraclebo::acquisition {

double expected_improvement(const gpr::PosteriorModel& model, const Vector& y, double best_f) {
  const gpr::Prediction p = gpr::predict(model, y.transpose());
  return expected_improvement(p.mean[0], p.variance[0], best_f);
}

Vector expected_improvement(const gpr::PosteriorModel& model, const Matrix& points, double best_f) {
  const gpr::Prediction p = gpr::predict(model, points);
  Vector out(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) out[i] = expected_improvement(p.mean[i], p.variance[i], best_f);
  return out;
}

Vector qei_scores(const gpr::PosteriorModel& model, const Matrix& batch, double best_f, int n_mc, std::uint64_t seed) {
  if (batch.rows() < 1) throw std::invalid_argument("qei_scores: empty batch");
  if (n_mc < 1) throw std::invalid_argument("qei_scores: n_mc must be >= 1");
  const Matrix draws = gpr::sample_joint(model, batch, n_mc, seed);
  return (best_f - draws.array()).cwiseMax(0.0).colwise().mean().transpose();
}

Matrix candidate_pool(const gpr::PosteriorModel& model, const embedding::EmbeddingSpec& spec, int n_raw, int n_local,
                      double step, std::uint64_t seed) {
  const Matrix raw = embedding::sample_polytope(spec, std::max(1, n_raw), derive_key(seed, 1));
  std::vector<Vector> local;
  if (n_local > 0 && !model.observations().empty()) {
    const Vector incumbent = model.observations().points().row(model.observations().argmin()).transpose();
    CounterRng rng(derive_key(seed, 2));
    for (int i = 0; i < n_local; ++i) {
      Vector u(spec.n_low);
      for (Eigen::Index k = 0; k < u.size(); ++k) u[k] = rng.normal();
      const double norm = u.norm();
      if (norm == 0.0) continue;
      Vector delta = u * (step / norm);
      for (int shrink = 0; shrink < 40; ++shrink) {
        const Vector cand = incumbent + delta;
        if (embedding::is_feasible(spec, cand)) {
          local.push_back(cand);
          break;
        }
        delta *= 0.5;
      }
    }
  }

  Matrix pool(raw.rows() + static_cast<Eigen::Index>(local.size()), spec.n_low);
  pool.topRows(raw.rows()) = raw;
  for (std::size_t i = 0; i < local.size(); ++i) pool.row(raw.rows() + static_cast<Eigen::Index>(i)) = local[i].transpose();

  // Drop exact duplicates, keeping the first occurrence.
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(pool.rows()));
  for (Eigen::Index i = 0; i < pool.rows(); ++i) {
    bool dup = false;
    for (Eigen::Index j : keep) {
      if ((pool.row(i) - pool.row(j)).cwiseAbs().maxCoeff() <= 1e-12) {
        dup = true;
        break;
      }
    }
    if (!dup) keep.push_back(i);
  }
  Matrix unique(static_cast<Eigen::Index>(keep.size()), spec.n_low);
  for (std::size_t i = 0; i < keep.size(); ++i) unique.row(static_cast<Eigen::Index>(i)) = pool.row(keep[i]);
  return unique;
}

namespace {

std::vector<Eigen::Index> rank_descending(const Vector& scores) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

CandidateBatch propose_batch(const gpr::PosteriorModel& model, const embedding::EmbeddingSpec& spec, double best_f,
                             const BatchOptions& options, std::uint64_t seed) {
  if (options.q < 1) throw std::invalid_argument("propose_batch: q must be >= 1");
  if (options.n_raw < options.q) throw std::invalid_argument("propose_batch: n_raw must be >= q");
  const Matrix pool = candidate_pool(model, spec, options.n_raw, 2 * options.q, options.perturbation_step, seed);
  const Eigen::Index q = options.q;
  if (pool.rows() < q) throw std::logic_error("propose_batch: fewer than q feasible candidates");

  const Vector ei = expected_improvement(model, pool, best_f);
  const std::vector<Eigen::Index> order = rank_descending(ei);
  const Eigen::Index n_sets = std::max<Eigen::Index>(1, std::min<Eigen::Index>(q, pool.rows() / q));

  CandidateBatch best;
  double best_value = -1.0;
  for (Eigen::Index k = 0; k < n_sets; ++k) {
    Matrix members(q, spec.n_low);
    for (Eigen::Index i = 0; i < q; ++i) members.row(i) = pool.row(order[static_cast<std::size_t>(k * q + i)]);
    const Vector scores = qei_scores(model, members, best_f, options.n_mc, derive_key(seed, 3, k));
    const double value = options.set_score == SetScore::Max ? scores.maxCoeff() : scores.sum();
    if (value > best_value) {
      best_value = value;
      best.points_low = members;
      best.qei = scores;
    }
  }
  best.points_high.resize(q, spec.n_high);
  for (Eigen::Index i = 0; i < q; ++i) {
    best.points_high.row(i) = embedding::project_up(spec, best.points_low.row(i).transpose()).transpose();
  }
  return best;
}

Vector propose_single(const gpr::PosteriorModel& model, const embedding::EmbeddingSpec& spec, double best_f,
                      int n_raw, double perturbation_step, std::uint64_t seed) {
  const Matrix pool = candidate_pool(model, spec, n_raw, 10, perturbation_step, seed);
  const Vector ei = expected_improvement(model, pool, best_f);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < ei.size(); ++i) {
    if (ei[i] > ei[best]) best = i;
  }
  return pool.row(best).transpose();
}

}  // namespace oraclebo::acquisition
