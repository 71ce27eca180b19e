#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "albalance/error.hpp"
#include "albalance/rng.hpp"

namespace albalance {

using SampleId = std::uint32_t;
using ClassId = std::uint32_t;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Sample ids are dense row indices into the embedding matrix.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(Matrix vectors, bool normalized = false)
      : vectors_(std::move(vectors)), normalized_(normalized) {
    if (vectors_.rows() == 0 || vectors_.cols() == 0) {
      throw Error(ErrorCode::kEmptyDataset, "embedding store needs n_samples > 0 and dim > 0");
    }
    if (!vectors_.allFinite()) {
      for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
        if (!vectors_.row(i).allFinite()) {
          throw Error(ErrorCode::kNonFinite,
                      "non-finite value in embedding row " + std::to_string(i));
        }
      }
    }
  }

  std::size_t size() const { return static_cast<std::size_t>(vectors_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  const Matrix& vectors() const { return vectors_; }
  auto row(SampleId id) const { return vectors_.row(id); }
  bool normalized() const { return normalized_; }

  /// Copy with every row scaled to unit L2 norm. All-zero rows stay zero.
  EmbeddingStore l2_normalized() const {
    Matrix out = vectors_;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double norm = out.row(i).norm();
      if (norm > 0.0) out.row(i) /= norm;
    }
    return EmbeddingStore(std::move(out), true);
  }

  EmbeddingStore subset(std::span<const SampleId> ids) const {
    Matrix out(static_cast<Eigen::Index>(ids.size()), vectors_.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = vectors_.row(ids[i]);
    return EmbeddingStore(std::move(out), normalized_);
  }

 private:
  Matrix vectors_;
  bool normalized_;
};

// Ground truth, consulted only when a sample is annotated or evaluated.
class LabelOracle {
 public:
  LabelOracle(std::vector<ClassId> labels, std::vector<std::string> class_names,
              std::vector<std::string> sample_names = {})
      : labels_(std::move(labels)),
        class_names_(std::move(class_names)),
        sample_names_(std::move(sample_names)) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] >= class_names_.size()) {
        throw Error(ErrorCode::kLabelOutOfRange,
                    "label " + std::to_string(labels_[i]) + " of sample " + std::to_string(i) +
                        " is outside [0, " + std::to_string(class_names_.size()) + ")");
      }
    }
    if (sample_names_.empty()) {
      sample_names_.reserve(labels_.size());
      for (std::size_t i = 0; i < labels_.size(); ++i) sample_names_.push_back(std::to_string(i));
    }
  }

  /// Oracle over `n_classes` anonymous classes named "0".."n-1".
  static LabelOracle with_class_count(std::vector<ClassId> labels, std::size_t n_classes) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < n_classes; ++c) names.push_back(std::to_string(c));
    return LabelOracle(std::move(labels), std::move(names));
  }

  ClassId label(SampleId id) const { return labels_.at(id); }
  std::size_t size() const { return labels_.size(); }
  std::size_t n_classes() const { return class_names_.size(); }
  const std::vector<ClassId>& labels() const { return labels_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  const std::vector<std::string>& sample_names() const { return sample_names_; }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(n_classes(), 0);
    for (ClassId c : labels_) ++counts[c];
    return counts;
  }

  LabelOracle subset(std::span<const SampleId> ids) const {
    std::vector<ClassId> labels;
    std::vector<std::string> names;
    labels.reserve(ids.size());
    names.reserve(ids.size());
    for (SampleId id : ids) {
      labels.push_back(labels_.at(id));
      names.push_back(sample_names_.at(id));
    }
    return LabelOracle(std::move(labels), class_names_, std::move(names));
  }

 private:
  std::vector<ClassId> labels_;
  std::vector<std::string> class_names_;
  std::vector<std::string> sample_names_;
};

struct Dataset {
  EmbeddingStore store;
  LabelOracle oracle;
};

/// Labeled/unlabeled partition at one active-learning iteration. Transitions
/// return new snapshots; a PoolState is never mutated after construction.
class PoolState {
 public:
  PoolState(std::size_t n_samples, std::size_t n_classes)
      : is_labeled_(n_samples, 0), per_class_counts_(n_classes, 0) {}

  std::size_t n_samples() const { return is_labeled_.size(); }
  std::size_t n_classes() const { return per_class_counts_.size(); }
  std::size_t iteration() const { return iteration_; }

  /// Labeled ids in the order they were annotated.
  const std::vector<SampleId>& labeled() const { return labeled_; }
  std::size_t labeled_count() const { return labeled_.size(); }
  std::size_t unlabeled_count() const { return is_labeled_.size() - labeled_.size(); }
  bool is_labeled(SampleId id) const { return is_labeled_.at(id) != 0; }
  const std::vector<std::size_t>& per_class_counts() const { return per_class_counts_; }

  /// Unlabeled ids, ascending.
  std::vector<SampleId> unlabeled() const {
    std::vector<SampleId> out;
    out.reserve(unlabeled_count());
    for (std::size_t i = 0; i < is_labeled_.size(); ++i) {
      if (!is_labeled_[i]) out.push_back(static_cast<SampleId>(i));
    }
    return out;
  }

  std::vector<SampleId> labeled_of_class(ClassId c, const LabelOracle& oracle) const {
    std::vector<SampleId> out;
    for (SampleId id : labeled_) {
      if (oracle.label(id) == c) out.push_back(id);
    }
    return out;
  }

  PoolState at_iteration(std::size_t k) const {
    PoolState next = *this;
    next.iteration_ = k;
    return next;
  }

 private:
  friend PoolState label_batch(const PoolState&, std::span<const SampleId>, const LabelOracle&);

  std::vector<SampleId> labeled_;
  std::vector<std::uint8_t> is_labeled_;
  std::vector<std::size_t> per_class_counts_;
  std::size_t iteration_ = 0;
};

inline PoolState label_batch(const PoolState& pool, std::span<const SampleId> ids,
                             const LabelOracle& oracle) {
  PoolState next = pool;
  for (SampleId id : ids) {
    if (id >= pool.n_samples()) {
      throw Error(ErrorCode::kUnknownId, "unknown sample id " + std::to_string(id));
    }
    if (pool.is_labeled(id)) {
      throw Error(ErrorCode::kAlreadyLabeled, "sample " + std::to_string(id) + " is already labeled");
    }
    if (next.is_labeled_[id]) {
      throw Error(ErrorCode::kDuplicateId, "sample " + std::to_string(id) + " appears twice in batch");
    }
    next.is_labeled_[id] = 1;
    next.labeled_.push_back(id);
    ++next.per_class_counts_.at(oracle.label(id));
  }
  return next;
}

/// Labels `count` ids drawn uniformly without replacement from the unlabeled set.
inline PoolState seed_initial(const PoolState& pool, std::size_t count, std::uint64_t rng_seed,
                              const LabelOracle& oracle) {
  if (count > pool.unlabeled_count()) {
    throw Error(ErrorCode::kCountExceedsPool,
                "cannot seed " + std::to_string(count) + " labels from " +
                    std::to_string(pool.unlabeled_count()) + " unlabeled samples");
  }
  Rng rng(rng_seed);
  const std::vector<SampleId> unlabeled = pool.unlabeled();
  const auto picked = sample_without_replacement<SampleId>(unlabeled, count, rng);
  return label_batch(pool, picked, oracle);
}

// ---------------------------------------------------------------------------
// ALEMB1 embedding files and sample,class label lists.

inline constexpr std::array<char, 6> kAlembMagic = {'A', 'L', 'E', 'M', 'B', '1'};
inline constexpr std::uint8_t kAlembVersion = 1;

namespace detail {

inline std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

}  // namespace detail

/// Reads an ALEMB1 stream into a row-major matrix of doubles.
inline Matrix read_alemb(std::istream& in) {
  unsigned char header[16];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(header))) {
    throw Error(ErrorCode::kMalformedHeader, "embedding header shorter than 16 bytes");
  }
  if (std::memcmp(header, kAlembMagic.data(), kAlembMagic.size()) != 0) {
    throw Error(ErrorCode::kMalformedHeader, "embedding magic is not ALEMB1");
  }
  if (header[6] != kAlembVersion) {
    throw Error(ErrorCode::kMalformedHeader,
                "unsupported embedding version " + std::to_string(header[6]));
  }
  if (header[7] != 0) throw Error(ErrorCode::kMalformedHeader, "reserved header byte is not zero");
  const std::uint32_t n = detail::read_u32_le(header + 8);
  const std::uint32_t dim = detail::read_u32_le(header + 12);
  if (n == 0 || dim == 0) {
    throw Error(ErrorCode::kMalformedHeader, "embedding header declares an empty matrix");
  }

  Matrix out(n, dim);
  std::vector<unsigned char> row(static_cast<std::size_t>(dim) * 4);
  for (std::uint32_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (in.gcount() != static_cast<std::streamsize>(row.size())) {
      throw Error(ErrorCode::kTruncatedData, "embedding data ends at row " + std::to_string(i) +
                                                 " of " + std::to_string(n));
    }
    for (std::uint32_t j = 0; j < dim; ++j) {
      const float v = std::bit_cast<float>(detail::read_u32_le(row.data() + 4 * j));
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFinite, "non-finite value at row " + std::to_string(i) +
                                               ", column " + std::to_string(j));
      }
      out(i, j) = v;
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kRowCountMismatch,
                "embedding file holds more data than its header declares");
  }
  return out;
}

/// Writes `vectors` as ALEMB1, narrowing each entry to float32.
inline void write_alemb(std::ostream& out, const Matrix& vectors) {
  out.write(kAlembMagic.data(), kAlembMagic.size());
  out.put(static_cast<char>(kAlembVersion));
  out.put(0);
  detail::write_u32_le(out, static_cast<std::uint32_t>(vectors.rows()));
  detail::write_u32_le(out, static_cast<std::uint32_t>(vectors.cols()));
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
      detail::write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(vectors(i, j))));
    }
  }
}

struct LabelList {
  std::vector<std::string> sample_names;
  std::vector<std::string> class_names;  // index order = first appearance
  std::vector<ClassId> labels;
};

/// Parses `<sample_name>,<class_name>` lines. With `known_classes`, class
/// indices follow that list and unseen names are rejected; otherwise indices
/// are assigned by first appearance. Blank lines are skipped.
inline LabelList read_labels(std::istream& in,
                             const std::vector<std::string>* known_classes = nullptr) {
  LabelList out;
  std::unordered_map<std::string, ClassId> index;
  if (known_classes) {
    out.class_names = *known_classes;
    for (std::size_t c = 0; c < known_classes->size(); ++c) {
      index.emplace((*known_classes)[c], static_cast<ClassId>(c));
    }
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == line.size()) {
      throw Error(ErrorCode::kMalformedLabels,
                  "label line " + std::to_string(line_no) + " is not <sample_name>,<class_name>");
    }
    std::string class_name = line.substr(comma + 1);
    auto it = index.find(class_name);
    if (it == index.end()) {
      if (known_classes) {
        throw Error(ErrorCode::kLabelOutOfRange,
                    "label line " + std::to_string(line_no) + " names unknown class '" +
                        class_name + "'");
      }
      it = index.emplace(class_name, static_cast<ClassId>(out.class_names.size())).first;
      out.class_names.push_back(class_name);
    }
    out.sample_names.push_back(line.substr(0, comma));
    out.labels.push_back(it->second);
  }
  return out;
}

inline void write_labels(std::ostream& out, const LabelOracle& oracle) {
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    out << oracle.sample_names()[i] << ',' << oracle.class_names()[oracle.labels()[i]] << '\n';
  }
}

struct LoadOptions {
  bool normalize = true;
  const std::vector<std::string>* known_classes = nullptr;
};

inline Dataset load_dataset(std::istream& embeddings, std::istream& labels,
                            const LoadOptions& options = {}) {
  Matrix vectors = read_alemb(embeddings);
  LabelList list = read_labels(labels, options.known_classes);
  if (list.labels.size() != static_cast<std::size_t>(vectors.rows())) {
    throw Error(ErrorCode::kRowCountMismatch,
                "embeddings have " + std::to_string(vectors.rows()) + " rows but labels have " +
                    std::to_string(list.labels.size()));
  }
  EmbeddingStore store(std::move(vectors));
  if (options.normalize) store = store.l2_normalized();
  return Dataset{std::move(store), LabelOracle(std::move(list.labels), std::move(list.class_names),
                                               std::move(list.sample_names))};
}

inline std::ifstream open_input(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for reading");
  return in;
}

inline Dataset load_dataset_files(const std::string& embedding_path, const std::string& label_path,
                                  const LoadOptions& options = {}) {
  auto emb = open_input(embedding_path, true);
  auto labels = open_input(label_path, false);
  return load_dataset(emb, labels, options);
}

}  // namespace albalance
