// Writes a synthetic Gaussian-blob pool and a balanced test set in the
// ALEMB1 + label-list formats, optionally with an induced long tail.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "albalance/dataset.hpp"
#include "albalance/imbalance.hpp"
#include "albalance/synthetic.hpp"

namespace {

void write_dataset(const albalance::Dataset& data, const std::string& stem) {
  std::ofstream emb(stem + ".alemb", std::ios::binary);
  albalance::write_alemb(emb, data.store.vectors());
  std::ofstream labels(stem + ".labels", std::ios::binary);
  albalance::write_labels(labels, data.oracle);
  if (!emb || !labels) throw albalance::Error(albalance::ErrorCode::kIo, "cannot write " + stem + ".*");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic Gaussian-blob pools for albalance", "albalance-synth"};
  std::size_t classes = 20;
  std::size_t per_class = 400;
  std::size_t test_per_class = 50;
  std::size_t dim = 16;
  double spread = 1.0;
  double noise = 0.35;
  double target_ir = 0.0;
  std::size_t min_per_class = 10;
  std::uint64_t seed = 0;
  std::string out = "synthetic";
  app.add_option("--classes", classes)->capture_default_str();
  app.add_option("--per-class", per_class, "pool samples per class before pruning")->capture_default_str();
  app.add_option("--test-per-class", test_per_class)->capture_default_str();
  app.add_option("--dim", dim)->capture_default_str();
  app.add_option("--spread", spread, "std of class centers")->capture_default_str();
  app.add_option("--noise", noise, "within-class std")->capture_default_str();
  app.add_option("--target-ir", target_ir, "induce this imbalance ratio in the pool (0 = balanced)")
      ->capture_default_str();
  app.add_option("--min-per-class", min_per_class)->capture_default_str();
  app.add_option("--seed", seed)->capture_default_str();
  app.add_option("--out", out, "output stem: <out>_pool.* and <out>_test.*")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    albalance::BlobSpec spec;
    spec.per_class.assign(classes, per_class);
    spec.dim = dim;
    spec.center_spread = spread;
    spec.noise = noise;
    spec.seed = seed;
    albalance::Dataset pool = albalance::make_blobs(spec, "pool");
    if (target_ir > 0.0) {
      albalance::InductionSpec induction;
      induction.target_ir = target_ir;
      induction.min_per_class = min_per_class;
      induction.rng_seed = albalance::derive_seed(seed, "induction");
      const auto counts = albalance::induce_imbalance(pool.oracle.class_counts(), induction);
      pool = albalance::prune_dataset(pool.store, pool.oracle, counts, albalance::derive_seed(seed, "prune"));
    }
    spec.per_class.assign(classes, test_per_class);
    const albalance::Dataset test = albalance::make_blobs(spec, "test");
    write_dataset(pool, out + "_pool");
    write_dataset(test, out + "_test");
    const auto stats = albalance::imbalance_ratio(pool.oracle.class_counts());
    std::cout << "pool: " << pool.oracle.size() << " samples, ir " << stats.ir << "; test: " << test.oracle.size()
              << " samples\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
