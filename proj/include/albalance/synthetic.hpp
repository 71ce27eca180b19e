#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "albalance/dataset.hpp"
#include "albalance/rng.hpp"

namespace albalance {

/// Isotropic Gaussian blobs, one per class. Class centers are drawn from
/// N(0, center_spread^2 I) and samples from N(center, noise^2 I). Rows are
/// shuffled so file order carries no class information.
struct BlobSpec {
  std::vector<std::size_t> per_class;
  std::size_t dim = 16;
  double center_spread = 1.0;
  double noise = 0.3;
  std::uint64_t seed = 0;
};

inline Matrix blob_centers(std::size_t n_classes, std::size_t dim, double spread, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "blob-centers"));
  Matrix centers(static_cast<Eigen::Index>(n_classes), static_cast<Eigen::Index>(dim));
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(c, j) = spread * rng.normal();
  }
  return centers;
}

/// `sample_stream` separates draws of pools and test sets that share centers.
inline Dataset make_blobs(const BlobSpec& spec, std::string_view sample_stream = "pool") {
  const Matrix centers = blob_centers(spec.per_class.size(), spec.dim, spec.center_spread, spec.seed);
  std::vector<ClassId> labels;
  for (std::size_t c = 0; c < spec.per_class.size(); ++c) {
    labels.insert(labels.end(), spec.per_class[c], static_cast<ClassId>(c));
  }
  Rng rng(derive_seed(spec.seed, sample_stream));
  shuffle(labels, rng);
  Matrix x(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(spec.dim));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const ClassId c = labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = centers(c, j) + spec.noise * rng.normal();
  }
  std::vector<std::string> class_names;
  for (std::size_t c = 0; c < spec.per_class.size(); ++c) class_names.push_back("class" + std::to_string(c));
  std::vector<std::string> sample_names;
  for (std::size_t i = 0; i < labels.size(); ++i) sample_names.push_back(std::string(sample_stream) + std::to_string(i));
  return Dataset{EmbeddingStore(std::move(x)), LabelOracle(std::move(labels), std::move(class_names),
                                                           std::move(sample_names))};
}

}  // namespace albalance
