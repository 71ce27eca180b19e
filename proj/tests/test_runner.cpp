#include <gtest/gtest.h>

#include "albalance/report.hpp"
#include "albalance/runner.hpp"
#include "support.hpp"

using namespace albalance;
using namespace albalance::testing;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIo;
}

RunConfig small_config(std::string af, SchemePolicy policy, std::size_t budget, std::size_t iterations) {
  RunConfig cfg;
  cfg.acquisition = std::move(af);
  cfg.scheme_policy = policy;
  cfg.budget = budget;
  cfg.iterations = iterations;
  cfg.seeds = {0};
  cfg.training = fast_training();
  cfg.threads = 1;
  return cfg;
}

const SyntheticTask& shared_task() {
  static const SyntheticTask task = long_tailed_task(6, 80, 0.6, 8, 10, 8, 1.0, 0.4, 3);
  return task;
}

}  // namespace

TEST(Schedule, EvenSplit) {
  EXPECT_EQ(batch_schedule(8000, 16), std::vector<std::size_t>(16, 500));
}

TEST(Schedule, RemainderOnLastIteration) {
  EXPECT_EQ(batch_schedule(10, 3), (std::vector<std::size_t>{3, 3, 4}));
  EXPECT_EQ(batch_schedule(7, 1), (std::vector<std::size_t>{7}));
  EXPECT_EQ(code_of([] { batch_schedule(10, 0); }), ErrorCode::kInvalidConfig);
}

TEST(Switch, OneWayOnStrictImprovement) {
  SwitchState s;
  s = scheme_switch_decision(0.5, 0.5, s, 0);
  EXPECT_FALSE(s.switched);
  EXPECT_EQ(s.active, Scheme::kCsSvm);
  s = scheme_switch_decision(0.5, 0.6, s, 3);
  EXPECT_TRUE(s.switched);
  EXPECT_EQ(s.active, Scheme::kSoftmaxTh);
  EXPECT_EQ(*s.switch_iteration, 3u);
  s = scheme_switch_decision(0.9, 0.1, s, 4);
  EXPECT_EQ(s.active, Scheme::kSoftmaxTh);
  EXPECT_EQ(*s.switch_iteration, 3u);
}

TEST(Aggregate, MeanAndPopulationStd) {
  RunRecord a;
  RunRecord b;
  IterationRecord ia;
  ia.labeled_count = 10;
  ia.accuracy = 0.4;
  ia.ir = 0.2;
  IterationRecord ib = ia;
  ib.accuracy = 0.6;
  ib.ir = 0.4;
  ib.scheme = Scheme::kSoftmaxTh;
  a.iterations = {ia};
  b.iterations = {ib};
  const auto points = aggregate_runs({a, b});
  ASSERT_EQ(points.size(), 1u);
  EXPECT_NEAR(points[0].acc_mean, 0.5, 1e-12);
  EXPECT_NEAR(points[0].acc_std, 0.1, 1e-12);
  EXPECT_NEAR(points[0].ir_mean, 0.3, 1e-12);
  EXPECT_NEAR(points[0].ir_std, 0.1, 1e-12);
  EXPECT_EQ(points[0].scheme, "mixed");
  EXPECT_EQ(aggregate_runs({a}).front().acc_std, 0.0);
  EXPECT_EQ(aggregate_runs({a}).front().scheme, "cs_svm");
}

TEST(Aggregate, MismatchedRecords) {
  RunRecord a;
  RunRecord b;
  a.iterations.resize(2);
  b.iterations.resize(3);
  EXPECT_EQ(code_of([&] { aggregate_runs({a, b}); }), ErrorCode::kMismatchedRecords);
  EXPECT_EQ(code_of([&] { aggregate_runs({}); }), ErrorCode::kMismatchedRecords);
}

TEST(Run, BudgetAccountingAndMonotoneLabeling) {
  const auto& task = shared_task();
  const RunConfig cfg = small_config("dmcs-rand", SchemePolicy::kAutoSwitch, 100, 5);
  const RunRecord r = run_seed(cfg, 0, task.pool, task.test);
  ASSERT_EQ(r.iterations.size(), 5u);
  std::size_t total = 0;
  for (std::size_t k = 0; k < 5; ++k) {
    const auto& it = r.iterations[k];
    EXPECT_EQ(it.iteration, k);
    EXPECT_EQ(it.batch_size, 20u);
    total += it.batch_size;
    EXPECT_EQ(it.labeled_count, total);
    EXPECT_EQ(std::accumulate(it.per_class_counts.begin(), it.per_class_counts.end(), std::size_t{0}), total);
    if (k > 0) {
      for (std::size_t c = 0; c < it.per_class_counts.size(); ++c) {
        EXPECT_GE(it.per_class_counts[c], r.iterations[k - 1].per_class_counts[c]);
      }
      EXPECT_EQ(it.minority_picks + it.auxiliary_picks + it.fallback_picks, it.batch_size);
    }
    EXPECT_NEAR(it.ir, imbalance_ratio(it.per_class_counts).ir, 1e-15);
    EXPECT_GE(it.accuracy, 0.0);
    EXPECT_LE(it.accuracy, 1.0);
  }
  EXPECT_EQ(total, cfg.budget);
}

TEST(Run, SingleIteration) {
  const auto& task = shared_task();
  const RunRecord r = run_seed(small_config("random", SchemePolicy::kCsSvmOnly, 30, 1), 2, task.pool, task.test);
  ASSERT_EQ(r.iterations.size(), 1u);
  EXPECT_EQ(r.iterations[0].labeled_count, 30u);
  EXPECT_FALSE(r.iterations[0].cv_svm.has_value());
}

TEST(Run, InitialSubsetIsSharedAcrossAcquisitionFunctions) {
  const auto& task = shared_task();
  const RunRecord a = run_seed(small_config("random", SchemePolicy::kCsSvmOnly, 60, 3), 4, task.pool, task.test);
  const RunRecord b = run_seed(small_config("coreset", SchemePolicy::kCsSvmOnly, 60, 3), 4, task.pool, task.test);
  EXPECT_EQ(a.iterations[0].per_class_counts, b.iterations[0].per_class_counts);
  EXPECT_EQ(a.iterations[0].accuracy, b.iterations[0].accuracy);
}

TEST(Run, DeterministicPerSeedAndThreadCount) {
  const auto& task = shared_task();
  RunConfig cfg = small_config("cmcs-marg", SchemePolicy::kAutoSwitch, 90, 3);
  cfg.seeds = {0, 1, 2};
  const auto serial = run_experiment(cfg, task.pool, task.test);
  cfg.threads = 3;
  const auto parallel = run_experiment(cfg, task.pool, task.test);
  ASSERT_EQ(serial.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(serial[i].seed, cfg.seeds[i]);
    EXPECT_EQ(to_json(serial[i]).dump(), to_json(parallel[i]).dump());
  }
  EXPECT_NE(to_json(serial[0]).dump(), to_json(serial[1]).dump());
}

TEST(Run, BudgetAbovePool) {
  const auto& task = shared_task();
  const RunConfig cfg = small_config("random", SchemePolicy::kCsSvmOnly, task.pool.store.size() + 1, 2);
  EXPECT_EQ(code_of([&] { run_seed(cfg, 0, task.pool, task.test); }), ErrorCode::kCountExceedsPool);
}

TEST(Run, TestSetWithOtherClassesIsRejected) {
  const auto& task = shared_task();
  const Dataset other = long_tailed_task(4, 10, 0.0, 1, 5, 8, 1.0, 0.4, 3).test;
  EXPECT_EQ(code_of([&] {
              run_experiment(small_config("random", SchemePolicy::kCsSvmOnly, 20, 2), task.pool, other);
            }),
            ErrorCode::kClassAbsent);
}

TEST(Run, RiggedScoresSwitchExactlyOnce) {
  const auto& task = shared_task();
  const std::size_t k_switch = 3;
  const CvScorer rigged = [&](Scheme scheme, std::size_t k, const PoolState&, std::uint64_t) {
    if (scheme == Scheme::kCsSvm) return 0.5;
    return k >= k_switch ? 0.6 : 0.4;
  };
  const RunRecord r = run_seed(small_config("dmcs-rand", SchemePolicy::kAutoSwitch, 120, 6), 0, task.pool,
                               task.test, rigged);
  std::size_t switches = 0;
  for (const auto& it : r.iterations) switches += it.switched ? 1 : 0;
  EXPECT_EQ(switches, 1u);
  EXPECT_TRUE(r.iterations[k_switch].switched);
  for (std::size_t k = 0; k <= k_switch; ++k) {
    EXPECT_EQ(r.iterations[k].scheme, Scheme::kCsSvm);
    EXPECT_TRUE(r.iterations[k].cv_svm.has_value());
  }
  for (std::size_t k = k_switch + 1; k < r.iterations.size(); ++k) {
    EXPECT_EQ(r.iterations[k].scheme, Scheme::kSoftmaxTh);
    EXPECT_FALSE(r.iterations[k].cv_svm.has_value());
  }
}

TEST(Run, FixedPoliciesNeverSwitch) {
  const auto& task = shared_task();
  const CvScorer always_softmax = [](Scheme s, std::size_t, const PoolState&, std::uint64_t) {
    return s == Scheme::kSoftmaxTh ? 1.0 : 0.0;
  };
  for (SchemePolicy p : {SchemePolicy::kCsSvmOnly, SchemePolicy::kSoftmaxThOnly}) {
    const RunRecord r = run_seed(small_config("random", p, 60, 3), 0, task.pool, task.test, always_softmax);
    for (const auto& it : r.iterations) {
      EXPECT_FALSE(it.switched);
      EXPECT_EQ(it.scheme, p == SchemePolicy::kCsSvmOnly ? Scheme::kCsSvm : Scheme::kSoftmaxTh);
    }
  }
}

TEST(Run, UntrainableIterationFallsBackToRandom) {
  BlobSpec spec;
  spec.per_class = {300, 1};
  spec.dim = 4;
  spec.seed = 1;
  const Dataset pool = make_blobs(spec, "pool");
  spec.per_class = {5, 5};
  const Dataset test = make_blobs(spec, "test");
  const RunRecord r = run_seed(small_config("margin", SchemePolicy::kCsSvmOnly, 10, 2), 0, pool, test);
  ASSERT_FALSE(r.iterations[0].model_trained) << "seed subset unexpectedly holds both classes";
  EXPECT_EQ(r.iterations[0].accuracy, 0.0);
  EXPECT_EQ(r.iterations[1].fallback_picks, 5u);
  EXPECT_FALSE(r.metadata.warnings.empty());
}

TEST(Run, RandomSamplingKeepsImbalanceLowOnBalancedPool) {
  const SyntheticTask task = long_tailed_task(100, 120, 0.0, 1, 2, 8, 1.0, 0.4, 7);
  const RunRecord r =
      run_seed(small_config("random", SchemePolicy::kCsSvmOnly, 10000, 2), 0, task.pool, task.test);
  for (const auto& it : r.iterations) EXPECT_LE(it.ir, 0.15) << "iteration " << it.iteration;
}

TEST(Run, MetadataListsDeviationsAndNormalization) {
  const auto& task = shared_task();
  const RunRecord r = run_seed(small_config("random", SchemePolicy::kCsSvmOnly, 20, 2), 0, task.pool, task.test);
  EXPECT_EQ(r.metadata.deviations, standard_deviations());
  EXPECT_TRUE(r.metadata.normalized);
  EXPECT_EQ(r.metadata.class_names, task.pool.oracle.class_names());
}

TEST(Threads, EnvironmentCapsWorkers) {
  ::setenv("ALBALANCE_THREADS", "2", 1);
  EXPECT_EQ(resolve_threads(8), 2u);
  EXPECT_EQ(resolve_threads(1), 1u);
  ::unsetenv("ALBALANCE_THREADS");
  EXPECT_EQ(resolve_threads(5), 5u);
}

TEST(Switch, ScoreExamples) {
  SwitchState s;
  EXPECT_FALSE(scheme_switch_decision(0.7, 0.6, s, 0).switched);
  EXPECT_FALSE(scheme_switch_decision(0.6, 0.6, s, 0).switched);
  s = scheme_switch_decision(0.6, 0.65, s, 2);
  EXPECT_TRUE(s.switched);
  EXPECT_EQ(scheme_switch_decision(0.9, 0.1, s, 3).active, Scheme::kSoftmaxTh);
}

TEST(Run, SixteenRecordsOfFiveHundred) {
  const SyntheticTask task = long_tailed_task(10, 850, 0.0, 1, 3, 4, 1.0, 0.4, 1);
  RunConfig cfg = small_config("random", SchemePolicy::kCsSvmOnly, 8000, 16);
  cfg.training.svm.epochs = 1;
  const RunRecord r = run_seed(cfg, 0, task.pool, task.test);
  ASSERT_EQ(r.iterations.size(), 16u);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(r.iterations[k].labeled_count, 500 * (k + 1));
}

TEST(Run, SingleShotEqualsRandomSelection) {
  const auto& task = shared_task();
  const RunRecord r = run_seed(small_config("dmcs-rand", SchemePolicy::kCsSvmOnly, 40, 1), 3, task.pool, task.test);
  const PoolState seeded = seed_initial(PoolState(task.pool.store.size(), 6), 40, derive_seed(3, "seeding"),
                                        task.pool.oracle);
  EXPECT_EQ(r.iterations[0].per_class_counts, seeded.per_class_counts());
}

namespace {

std::vector<double> mean_ir_curve(const RunConfig& base, const std::string& af, const SyntheticTask& task) {
  RunConfig cfg = base;
  cfg.acquisition = af;
  cfg.seeds = {0, 1, 2, 3, 4};
  const auto points = aggregate_runs(run_experiment(cfg, task.pool, task.test));
  std::vector<double> out;
  for (const auto& p : points) out.push_back(p.ir_mean);
  return out;
}

}  // namespace

TEST(Run, DiversityMinorityLowersImbalanceOnFiveClasses) {
  const SyntheticTask task = long_tailed_task(5, 300, 0.8, 15, 10, 8, 1.5, 0.4, 21);
  const RunConfig cfg = small_config("random", SchemePolicy::kCsSvmOnly, 180, 9);
  const auto dmcs = mean_ir_curve(cfg, "dmcs-rand", task);
  const auto rnd = mean_ir_curve(cfg, "random", task);
  for (std::size_t k = 2; k <= 8; ++k) EXPECT_LT(dmcs[k], rnd[k]) << "iteration " << k;
}

TEST(Run, CdsBalLowersImbalanceOnThreeClasses) {
  const SyntheticTask task = long_tailed_task(3, 300, 0.8, 15, 10, 8, 2.0, 0.4, 22);
  const RunConfig cfg = small_config("random", SchemePolicy::kCsSvmOnly, 80, 4);
  const auto cds = mean_ir_curve(cfg, "cds-bal", task);
  const auto rnd = mean_ir_curve(cfg, "random", task);
  EXPECT_LT(cds[3], rnd[3]);
}
