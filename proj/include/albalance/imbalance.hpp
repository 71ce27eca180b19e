#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "albalance/dataset.hpp"
#include "albalance/error.hpp"
#include "albalance/rng.hpp"

namespace albalance {

/// Class-count statistics. stddev is the population standard deviation
/// and ir = stddev / mean.
struct ImbalanceStats {
  std::vector<std::size_t> per_class;
  double mean = 0.0;
  double stddev = 0.0;
  double ir = 0.0;

  std::size_t total() const { return std::accumulate(per_class.begin(), per_class.end(), std::size_t{0}); }
};

inline ImbalanceStats imbalance_ratio(std::span<const std::size_t> per_class) {
  if (per_class.empty()) throw Error(ErrorCode::kEmptyInput, "imbalance ratio of zero classes");
  ImbalanceStats stats;
  stats.per_class.assign(per_class.begin(), per_class.end());
  const double n = static_cast<double>(per_class.size());
  const double total = static_cast<double>(stats.total());
  if (total == 0.0) throw Error(ErrorCode::kAllZeroCounts, "imbalance ratio of all-zero counts");
  stats.mean = total / n;
  double ss = 0.0;
  for (std::size_t c : per_class) {
    const double d = static_cast<double>(c) - stats.mean;
    ss += d * d;
  }
  stats.stddev = std::sqrt(ss / n);
  stats.ir = stats.stddev / stats.mean;
  return stats;
}

inline ImbalanceStats labeled_profile(const PoolState& pool) {
  if (pool.labeled_count() == 0) {
    throw Error(ErrorCode::kEmptyLabeledSet, "imbalance profile of an empty labeled set");
  }
  return imbalance_ratio(pool.per_class_counts());
}

struct InductionSpec {
  double target_ir = 0.0;
  std::size_t min_per_class = 1;
  std::uint64_t rng_seed = 0;
  std::size_t max_iters = 100;
  double tolerance = 0.01;
};

namespace detail {

// Geometric long tail over a fixed class order: the class at rank j keeps
// round(max_count * rate^j) samples, clamped to [min_per_class, available].
inline std::vector<std::size_t> decay_profile(std::span<const std::size_t> counts,
                                              std::span<const std::size_t> order, double rate,
                                              std::size_t min_per_class) {
  const double max_count = static_cast<double>(*std::max_element(counts.begin(), counts.end()));
  std::vector<std::size_t> out(counts.size());
  double scale = 1.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const std::size_t c = order[rank];
    const auto kept = static_cast<std::size_t>(std::llround(max_count * scale));
    out[c] = std::min(counts[c], std::max(min_per_class, kept));
    scale *= rate;
  }
  return out;
}

// Flattening: every class is truncated at `cap`.
inline std::vector<std::size_t> capped_profile(std::span<const std::size_t> counts, double cap) {
  const auto limit = static_cast<std::size_t>(std::llround(cap));
  std::vector<std::size_t> out(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) out[c] = std::min(counts[c], limit);
  return out;
}

}  // namespace detail

/// Per-class target counts whose imbalance ratio lies within
/// `spec.tolerance` of `spec.target_ir`. Counts only ever shrink.
///
/// Raising imbalance uses a geometric decay over a seeded random class order
/// with the decay rate found by bisection. Lowering it truncates every class
/// at a common cap, also found by bisection.
inline std::vector<std::size_t> induce_imbalance(std::span<const std::size_t> per_class,
                                                 const InductionSpec& spec) {
  if (per_class.empty()) throw Error(ErrorCode::kEmptyInput, "no classes to prune");
  if (std::accumulate(per_class.begin(), per_class.end(), std::size_t{0}) == 0) {
    throw Error(ErrorCode::kAllZeroCounts, "no samples to prune");
  }
  if (spec.target_ir < 0.0 || !std::isfinite(spec.target_ir)) {
    throw Error(ErrorCode::kInfeasibleTarget, "target imbalance ratio must be finite and >= 0");
  }
  if (spec.min_per_class < 1) {
    throw Error(ErrorCode::kInfeasibleTarget, "min_per_class must be at least 1");
  }
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] < spec.min_per_class) {
      throw Error(ErrorCode::kInfeasibleTarget,
                  "class " + std::to_string(c) + " has " + std::to_string(per_class[c]) +
                      " samples, fewer than min_per_class " + std::to_string(spec.min_per_class));
    }
  }

  const std::vector<std::size_t> input(per_class.begin(), per_class.end());
  auto ir_of = [](const std::vector<std::size_t>& counts) { return imbalance_ratio(counts).ir; };
  auto miss = [&](const std::vector<std::size_t>& counts) {
    return std::abs(ir_of(counts) - spec.target_ir);
  };
  if (miss(input) <= spec.tolerance) return input;

  std::vector<std::size_t> lo_counts;
  std::vector<std::size_t> hi_counts;
  if (spec.target_ir > ir_of(input)) {
    std::vector<std::size_t> order(input.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(spec.rng_seed);
    shuffle(order, rng);

    // rate 0 gives the steepest tail reachable under the floor.
    const auto steepest = detail::decay_profile(input, order, 0.0, spec.min_per_class);
    if (ir_of(steepest) < spec.target_ir - spec.tolerance) {
      throw Error(ErrorCode::kInfeasibleTarget,
                  "target ir " + std::to_string(spec.target_ir) +
                      " exceeds the largest reachable ir " + std::to_string(ir_of(steepest)) +
                      " under min_per_class " + std::to_string(spec.min_per_class));
    }
    double lo = 0.0;  // ir above target
    double hi = 1.0;  // ir below target
    for (std::size_t it = 0; it < spec.max_iters; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (ir_of(detail::decay_profile(input, order, mid, spec.min_per_class)) > spec.target_ir) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    lo_counts = detail::decay_profile(input, order, lo, spec.min_per_class);
    hi_counts = detail::decay_profile(input, order, hi, spec.min_per_class);
  } else {
    const double smallest = static_cast<double>(*std::min_element(input.begin(), input.end()));
    double lo = smallest;  // ir below target
    double hi = static_cast<double>(*std::max_element(input.begin(), input.end()));
    for (std::size_t it = 0; it < spec.max_iters; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (ir_of(detail::capped_profile(input, mid)) < spec.target_ir) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    lo_counts = detail::capped_profile(input, lo);
    hi_counts = detail::capped_profile(input, hi);
  }

  const auto& best = miss(lo_counts) <= miss(hi_counts) ? lo_counts : hi_counts;
  if (miss(best) > spec.tolerance) {
    throw Error(ErrorCode::kTargetUnreachable,
                "no pruning within " + std::to_string(spec.max_iters) +
                    " bisection steps reaches ir " + std::to_string(spec.target_ir) +
                    " (closest " + std::to_string(ir_of(best)) + ")");
  }
  return best;
}

/// Keeps exactly counts[c] uniformly chosen samples of every class c. The
/// survivors keep their relative file order and are renumbered densely.
inline Dataset prune_dataset(const EmbeddingStore& store, const LabelOracle& oracle,
                             std::span<const std::size_t> counts, std::uint64_t rng_seed) {
  if (counts.size() != oracle.n_classes()) {
    throw Error(ErrorCode::kCountsExceedAvailability,
                "got " + std::to_string(counts.size()) + " counts for " +
                    std::to_string(oracle.n_classes()) + " classes");
  }
  std::vector<std::vector<SampleId>> by_class(oracle.n_classes());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    by_class[oracle.label(static_cast<SampleId>(i))].push_back(static_cast<SampleId>(i));
  }
  Rng rng(rng_seed);
  std::vector<SampleId> kept;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (counts[c] > by_class[c].size()) {
      throw Error(ErrorCode::kCountsExceedAvailability,
                  "class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                      " samples, " + std::to_string(counts[c]) + " requested");
    }
    const auto picked = sample_without_replacement<SampleId>(by_class[c], counts[c], rng);
    kept.insert(kept.end(), picked.begin(), picked.end());
  }
  std::sort(kept.begin(), kept.end());
  return Dataset{store.subset(kept), oracle.subset(kept)};
}

}  // namespace albalance
