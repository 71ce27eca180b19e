#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "albalance/acquisition.hpp"
#include "albalance/classifiers.hpp"
#include "albalance/dataset.hpp"
#include "albalance/error.hpp"
#include "albalance/imbalance.hpp"
#include "albalance/rng.hpp"

namespace albalance {

enum class SchemePolicy { kCsSvmOnly, kSoftmaxThOnly, kAutoSwitch };

inline std::string_view policy_name(SchemePolicy policy) {
  switch (policy) {
    case SchemePolicy::kCsSvmOnly: return "cs_svm_only";
    case SchemePolicy::kSoftmaxThOnly: return "softmax_th_only";
    case SchemePolicy::kAutoSwitch: return "auto_switch";
  }
  return "?";
}

inline SchemePolicy parse_policy(std::string_view name) {
  for (auto p : {SchemePolicy::kCsSvmOnly, SchemePolicy::kSoftmaxThOnly, SchemePolicy::kAutoSwitch}) {
    if (policy_name(p) == name) return p;
  }
  throw Error(ErrorCode::kUnknownName, "unknown scheme policy '" + std::string(name) + "'");
}

struct DataPaths {
  std::string embeddings;
  std::string labels;
  std::string test_embeddings;
  std::string test_labels;

  bool operator==(const DataPaths&) const = default;
};

struct RunConfig {
  std::size_t budget = 8000;
  std::size_t iterations = 16;
  std::string acquisition = "dmcs-rand";
  SchemePolicy scheme_policy = SchemePolicy::kAutoSwitch;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  SchemeConfigs training;
  bool normalize = true;
  std::size_t threads = 0;  // 0: hardware concurrency, capped by ALBALANCE_THREADS
  DataPaths data;
};

/// Per-iteration batch sizes: floor(b/t) each, the remainder on the last one.
inline std::vector<std::size_t> batch_schedule(std::size_t budget, std::size_t iterations) {
  if (iterations == 0) throw Error(ErrorCode::kInvalidConfig, "iterations must be >= 1");
  std::vector<std::size_t> sizes(iterations, budget / iterations);
  sizes.back() += budget % iterations;
  return sizes;
}

struct SwitchState {
  Scheme active = Scheme::kCsSvm;
  bool switched = false;
  std::optional<std::size_t> switch_iteration;
};

/// One-way switch: the first time the softmax score strictly beats the SVM
/// score the softmax scheme becomes active for good.
inline SwitchState scheme_switch_decision(double cv_svm, double cv_softmax, const SwitchState& state,
                                          std::size_t iteration) {
  if (state.switched || !(cv_softmax > cv_svm)) return state;
  SwitchState next;
  next.active = Scheme::kSoftmaxTh;
  next.switched = true;
  next.switch_iteration = iteration;
  return next;
}

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t batch_size = 0;
  std::size_t labeled_count = 0;
  double accuracy = 0.0;  // mean per-class accuracy on the test set
  double ir = 0.0;        // labeled-set imbalance ratio
  Scheme scheme = Scheme::kCsSvm;
  std::optional<double> cv_svm;
  std::optional<double> cv_softmax;
  bool switched = false;
  bool model_trained = true;
  std::size_t minority_picks = 0;
  std::size_t auxiliary_picks = 0;
  std::size_t fallback_picks = 0;
  std::vector<std::size_t> per_class_counts;
};

struct RunMetadata {
  bool normalized = true;
  std::vector<std::string> class_names;
  std::vector<std::string> deviations;
  std::vector<std::string> warnings;
};

struct RunRecord {
  std::uint64_t seed = 0;
  RunConfig config;
  RunMetadata metadata;
  std::vector<IterationRecord> iterations;
};

inline std::vector<std::string> standard_deviations() {
  return {
      "softmax_th: one-hidden-layer head over frozen embeddings stands in for CNN fine-tuning",
      "cs_svm probabilities: softmax over one-vs-rest decision values",
      "cs_svm class weights: s / (n_eff * s_c), rescaled to mean 1 over the training samples",
      "cds-bal score: nearest minority centroid distance minus nearest majority centroid distance",
      "minority quotas: scaled to the iteration budget when they exceed it, largest-remainder rounding",
      "auto_switch: one-way; cs_svm is no longer trained after the switch",
  };
}

/// Cross-validation score of a scheme at the end of an iteration.
using CvScorer = std::function<double(Scheme scheme, std::size_t iteration, const PoolState& pool,
                                      std::uint64_t seed)>;

/// Number of worker threads: `requested` (0 = hardware concurrency), capped by
/// the ALBALANCE_THREADS environment variable.
inline std::size_t resolve_threads(std::size_t requested) {
  std::size_t n = requested > 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ALBALANCE_THREADS")) {
    char* end = nullptr;
    const unsigned long cap = std::strtoul(env, &end, 10);
    if (end != env && cap > 0) n = std::min<std::size_t>(n, cap);
  }
  return n;
}

inline bool is_balanced(const LabelOracle& oracle) {
  const auto counts = oracle.class_counts();
  return std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) == counts.end();
}

/// Active-learning run for a single seed.
inline RunRecord run_seed(const RunConfig& config, std::uint64_t seed, const Dataset& pool_data,
                          const Dataset& test_data, const CvScorer& scorer = {}) {
  const EmbeddingStore& store = pool_data.store;
  const LabelOracle& oracle = pool_data.oracle;
  const AcquisitionSpec spec = parse_acquisition(config.acquisition);
  const auto schedule = batch_schedule(config.budget, config.iterations);
  if (config.budget > store.size()) {
    throw Error(ErrorCode::kCountExceedsPool, "budget " + std::to_string(config.budget) +
                                                  " exceeds the pool of " + std::to_string(store.size()));
  }

  RunRecord record;
  record.seed = seed;
  record.config = config;
  record.metadata.normalized = store.normalized();
  record.metadata.class_names = oracle.class_names();
  record.metadata.deviations = standard_deviations();
  if (!is_balanced(test_data.oracle)) {
    record.metadata.warnings.push_back("test set is not balanced; mean per-class accuracy still reported");
  }

  auto score = [&](Scheme scheme, std::size_t k, const PoolState& pool) {
    const std::uint64_t cv_seed = derive_seed(seed, "cv", k);
    if (scorer) return scorer(scheme, k, pool, cv_seed);
    try {
      return cross_validate_scheme(store, pool, oracle, scheme, config.training, cv_seed);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateFold && e.code() != ErrorCode::kTooFewClasses) throw;
      return 0.0;
    }
  };
  auto train = [&](Scheme scheme, std::size_t k, const PoolState& pool) -> std::optional<ClassifierModel> {
    try {
      return train_scheme(scheme, store, pool.labeled(), oracle, config.training,
                          derive_seed(seed, scheme_name(scheme), k));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTooFewClasses) throw;
      record.metadata.warnings.push_back("iteration " + std::to_string(k) + ": " +
                                         std::string(scheme_name(scheme)) + " untrainable (" + e.what() + ")");
      return std::nullopt;
    }
  };

  SwitchState state;
  if (config.scheme_policy == SchemePolicy::kSoftmaxThOnly) state.active = Scheme::kSoftmaxTh;

  PoolState pool(store.size(), oracle.n_classes());
  std::optional<ClassifierModel> model;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    IterationRecord it;
    it.iteration = k;
    it.scheme = state.active;
    const std::size_t before = pool.labeled_count();
    if (k == 0) {
      // Shared across acquisition functions: depends on the seed alone.
      pool = seed_initial(pool, schedule[0], derive_seed(seed, "seeding"), oracle);
    } else {
      const AcquisitionContext ctx{pool, store, oracle, model ? &*model : nullptr, schedule[k],
                                   derive_seed(seed, "acquisition", k)};
      SelectionResult picked;
      if (!model && needs_model(spec)) {
        picked = af_random(ctx);
        std::fill(picked.stages.begin(), picked.stages.end(), Stage::kFallbackRandom);
        record.metadata.warnings.push_back("iteration " + std::to_string(k) + ": no model, " +
                                           spec.name() + " replaced by random");
      } else {
        picked = acquire(spec, ctx);
      }
      it.minority_picks = picked.count(Stage::kMinorityQuota);
      it.auxiliary_picks = picked.count(Stage::kAuxiliary);
      it.fallback_picks = picked.count(Stage::kFallbackRandom);
      pool = label_batch(pool, picked.ids, oracle);
    }
    pool = pool.at_iteration(k);
    it.batch_size = pool.labeled_count() - before;
    it.labeled_count = pool.labeled_count();
    it.per_class_counts = pool.per_class_counts();
    it.ir = labeled_profile(pool).ir;

    model = train(state.active, k, pool);
    it.model_trained = model.has_value();
    it.accuracy = model ? evaluate_balanced(*model, test_data.store, test_data.oracle) : 0.0;

    if (config.scheme_policy == SchemePolicy::kAutoSwitch && !state.switched) {
      it.cv_svm = score(Scheme::kCsSvm, k, pool);
      it.cv_softmax = score(Scheme::kSoftmaxTh, k, pool);
      state = scheme_switch_decision(*it.cv_svm, *it.cv_softmax, state, k);
      if (state.switched) {
        it.switched = true;
        // Training is deterministic per (seed, scheme, iteration), so training
        // here gives the same model as training alongside the SVM every time.
        model = train(Scheme::kSoftmaxTh, k, pool);
      }
    }
    record.iterations.push_back(std::move(it));
  }
  return record;
}

/// One RunRecord per configured seed, in seed order. Seeds run in parallel.
inline std::vector<RunRecord> run_experiment(const RunConfig& config, const Dataset& pool_data,
                                             const Dataset& test_data, const CvScorer& scorer = {}) {
  if (config.seeds.empty()) throw Error(ErrorCode::kInvalidConfig, "at least one seed is required");
  if (test_data.oracle.n_classes() != pool_data.oracle.n_classes()) {
    throw Error(ErrorCode::kClassAbsent, "test set and pool disagree on the class list");
  }
  std::vector<std::optional<RunRecord>> results(config.seeds.size());
  std::vector<std::exception_ptr> errors(config.seeds.size());
  const std::size_t workers = std::min(resolve_threads(config.threads), config.seeds.size());
  std::size_t next = 0;
  std::mutex mutex;
  auto work = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mutex);
        if (next == config.seeds.size()) return;
        i = next++;
      }
      try {
        results[i] = run_seed(config, config.seeds[i], pool_data, test_data, scorer);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  std::vector<RunRecord> out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    out.push_back(std::move(*results[i]));
  }
  return out;
}

struct AggregatePoint {
  std::size_t iteration = 0;
  std::size_t labeled_count = 0;
  double acc_mean = 0.0;
  double acc_std = 0.0;
  double ir_mean = 0.0;
  double ir_std = 0.0;
  std::string scheme;  // "mixed" when seeds disagree
};

namespace detail {

inline std::pair<double, double> mean_and_population_std(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

}  // namespace detail

/// Per-iteration mean and population standard deviation across seeds.
inline std::vector<AggregatePoint> aggregate_runs(const std::vector<RunRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::kMismatchedRecords, "no run records to aggregate");
  const std::size_t t = records.front().iterations.size();
  for (const auto& r : records) {
    if (r.iterations.size() != t) {
      throw Error(ErrorCode::kMismatchedRecords,
                  "run records disagree on iteration count (" + std::to_string(t) + " vs " +
                      std::to_string(r.iterations.size()) + ")");
    }
  }
  std::vector<AggregatePoint> out;
  for (std::size_t k = 0; k < t; ++k) {
    AggregatePoint point;
    point.iteration = records.front().iterations[k].iteration;
    point.labeled_count = records.front().iterations[k].labeled_count;
    point.scheme = scheme_name(records.front().iterations[k].scheme);
    std::vector<double> acc;
    std::vector<double> ir;
    for (const auto& r : records) {
      const auto& it = r.iterations[k];
      if (it.labeled_count != point.labeled_count) {
        throw Error(ErrorCode::kMismatchedRecords,
                    "run records disagree on labeled count at iteration " + std::to_string(k));
      }
      if (scheme_name(it.scheme) != point.scheme) point.scheme = "mixed";
      acc.push_back(it.accuracy);
      ir.push_back(it.ir);
    }
    std::tie(point.acc_mean, point.acc_std) = detail::mean_and_population_std(acc);
    std::tie(point.ir_mean, point.ir_std) = detail::mean_and_population_std(ir);
    out.push_back(std::move(point));
  }
  return out;
}

}  // namespace albalance
