#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "albalance/classifiers.hpp"
#include "albalance/dataset.hpp"
#include "albalance/imbalance.hpp"
#include "albalance/rng.hpp"
#include "albalance/runner.hpp"
#include "albalance/synthetic.hpp"

namespace albalance::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("albalance_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_dataset_files(const Dataset& data, const std::string& emb_path, const std::string& label_path) {
  std::ofstream emb(emb_path, std::ios::binary);
  write_alemb(emb, data.store.vectors());
  std::ofstream labels(label_path, std::ios::binary);
  write_labels(labels, data.oracle);
}

/// Label file body with counts[c] samples of class "c<c>".
inline std::string label_text(const std::vector<std::size_t>& counts) {
  std::string out;
  std::size_t id = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (std::size_t k = 0; k < counts[c]; ++k) out += "s" + std::to_string(id++) + ",c" + std::to_string(c) + "\n";
  }
  return out;
}

/// A model whose probabilities are softmax(x) of the stored row. Storing
/// log-probabilities as embeddings therefore gives a model that reproduces a
/// chosen probability table.
inline ClassifierModel table_model(std::size_t n_classes) {
  ClassifierModel model;
  model.scheme = Scheme::kSvmPlain;
  model.n_classes = n_classes;
  model.dim = n_classes;
  model.params.output_weights = Matrix::Identity(static_cast<Eigen::Index>(n_classes), static_cast<Eigen::Index>(n_classes));
  model.params.output_bias = Vector::Zero(static_cast<Eigen::Index>(n_classes));
  model.present.assign(n_classes, 1);
  model.class_priors.assign(n_classes, 1.0 / static_cast<double>(n_classes));
  return model;
}

inline EmbeddingStore store_from_probabilities(const std::vector<std::vector<double>>& probs) {
  Matrix x(static_cast<Eigen::Index>(probs.size()), static_cast<Eigen::Index>(probs.front().size()));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    for (std::size_t c = 0; c < probs[i].size(); ++c) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = std::log(probs[i][c]);
    }
  }
  return EmbeddingStore(std::move(x));
}

inline std::vector<double> random_prob_vector(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double sum = 0.0;
  for (double& v : p) {
    v = 0.01 + rng.uniform();
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

/// Small, fast training settings for runs over synthetic pools.
inline SchemeConfigs fast_training() {
  SchemeConfigs cfg;
  cfg.svm.epochs = 10;
  cfg.svm.learning_rate = 0.1;
  cfg.svm.l2 = 1e-3;
  cfg.softmax.epochs = 10;
  cfg.softmax.hidden_width = 16;
  cfg.softmax.learning_rate = 0.05;
  return cfg;
}

/// Synthetic long-tailed pool plus a balanced test set drawn from the same blobs.
struct SyntheticTask {
  Dataset pool;
  Dataset test;
};

inline SyntheticTask long_tailed_task(std::size_t n_classes, std::size_t per_class, double target_ir,
                                      std::size_t min_per_class, std::size_t test_per_class, std::size_t dim,
                                      double spread, double noise, std::uint64_t seed) {
  BlobSpec spec;
  spec.per_class.assign(n_classes, per_class);
  spec.dim = dim;
  spec.center_spread = spread;
  spec.noise = noise;
  spec.seed = seed;
  Dataset full = make_blobs(spec, "pool");
  if (target_ir > 0.0) {
    InductionSpec induction;
    induction.target_ir = target_ir;
    induction.min_per_class = min_per_class;
    induction.rng_seed = derive_seed(seed, "induction");
    const auto counts = induce_imbalance(full.oracle.class_counts(), induction);
    full = prune_dataset(full.store, full.oracle, counts, derive_seed(seed, "prune"));
  }
  spec.per_class.assign(n_classes, test_per_class);
  Dataset test = make_blobs(spec, "test");
  return SyntheticTask{Dataset{full.store.l2_normalized(), full.oracle},
                       Dataset{test.store.l2_normalized(), test.oracle}};
}

}  // namespace albalance::testing
