#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "albalance/dataset.hpp"
#include "albalance/error.hpp"
#include "albalance/rng.hpp"

namespace albalance {

// CS_SVM and SVM_PLAIN are one-vs-rest linear SVMs over the frozen
// embeddings (class-weighted and unweighted). SOFTMAX_TH and SOFTMAX_PLAIN
// are a trainable one-hidden-layer head, with and without prior thresholding.
enum class Scheme { kCsSvm, kSoftmaxTh, kSvmPlain, kSoftmaxPlain };

inline std::string_view scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::kCsSvm: return "cs_svm";
    case Scheme::kSoftmaxTh: return "softmax_th";
    case Scheme::kSvmPlain: return "svm";
    case Scheme::kSoftmaxPlain: return "softmax";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::kCsSvm, Scheme::kSoftmaxTh, Scheme::kSvmPlain, Scheme::kSoftmaxPlain}) {
    if (scheme_name(s) == name) return s;
  }
  throw Error(ErrorCode::kUnknownName, "unknown training scheme '" + std::string(name) + "'");
}

inline bool is_svm(Scheme scheme) { return scheme == Scheme::kCsSvm || scheme == Scheme::kSvmPlain; }

struct TrainConfig {
  std::size_t epochs = 60;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  double l2 = 1e-4;
  std::size_t hidden_width = 256;  // softmax head only; 0 = multinomial logistic regression
  std::size_t plateau_patience = 10;
  double lr_decay = 0.1;
  double momentum = 0.9;
};

inline TrainConfig default_svm_config() {
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 0.1;
  cfg.l2 = 1e-4;
  cfg.hidden_width = 0;
  cfg.plateau_patience = 5;
  cfg.momentum = 0.0;
  return cfg;
}

inline TrainConfig default_softmax_config() { return TrainConfig{}; }

struct ClassWeights {
  std::vector<double> weights;
  std::vector<bool> empty_class;  // classes that had no samples; weight 1
};

/// weights[c] = s / (n_eff * s_c): s labeled samples, n_eff non-empty classes.
inline ClassWeights class_weights_balanced(std::span<const std::size_t> per_class_counts) {
  const std::size_t total =
      std::accumulate(per_class_counts.begin(), per_class_counts.end(), std::size_t{0});
  if (total == 0) throw Error(ErrorCode::kAllZeroCounts, "class weights of an empty labeled set");
  const auto n_eff = static_cast<double>(
      std::count_if(per_class_counts.begin(), per_class_counts.end(), [](std::size_t c) { return c > 0; }));
  ClassWeights out;
  for (std::size_t count : per_class_counts) {
    if (count == 0) {
      out.weights.push_back(1.0);
      out.empty_class.push_back(true);
    } else {
      out.weights.push_back(static_cast<double>(total) / (n_eff * static_cast<double>(count)));
      out.empty_class.push_back(false);
    }
  }
  return out;
}

inline ClassWeights uniform_class_weights(std::size_t n_classes, double value = 1.0) {
  return ClassWeights{std::vector<double>(n_classes, value), std::vector<bool>(n_classes, false)};
}

/// Network parameters. SVM schemes leave the hidden layer empty.
struct Parameters {
  Matrix hidden_weights;  // H x d
  Vector hidden_bias;     // H
  Matrix output_weights;  // n_classes x (H or d)
  Vector output_bias;     // n_classes

  bool has_hidden() const { return hidden_weights.rows() > 0; }
};

struct TrainingMeta {
  std::size_t epochs_run = 0;
  std::uint64_t seed = 0;
  double first_loss = 0.0;
  double final_loss = 0.0;
  double final_learning_rate = 0.0;
  std::vector<bool> excluded_classes;  // no labeled samples; probability forced to 0
};

struct ClassifierModel {
  Scheme scheme = Scheme::kCsSvm;
  std::size_t n_classes = 0;
  std::size_t dim = 0;
  Parameters params;
  std::vector<double> class_priors;
  std::vector<std::uint8_t> present;
  TrainingMeta meta;
};

using ProbMatrix = Matrix;  // one row per queried sample

struct Top2 {
  ClassId first = 0;
  ClassId second = 0;
  double margin = 0.0;
};

// ---------------------------------------------------------------------------
// Forward passes.

/// Hidden-layer activations tanh(X W1^T + b1); X itself without a hidden layer.
inline Matrix hidden_activations(const Parameters& params, const Matrix& x) {
  if (!params.has_hidden()) return x;
  Matrix z = x * params.hidden_weights.transpose();
  z.rowwise() += params.hidden_bias.transpose();
  return z.array().tanh().matrix();
}

inline Matrix output_scores(const Parameters& params, const Matrix& features) {
  Matrix s = features * params.output_weights.transpose();
  s.rowwise() += params.output_bias.transpose();
  return s;
}

/// Row-wise softmax over the classes flagged in `present`; absent classes get 0.
inline Matrix masked_softmax(const Matrix& scores, std::span<const std::uint8_t> present) {
  Matrix p(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      if (present[c]) top = std::max(top, scores(i, c));
    }
    double sum = 0.0;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      p(i, c) = present[c] ? std::exp(scores(i, c) - top) : 0.0;
      sum += p(i, c);
    }
    p.row(i) /= sum;
  }
  return p;
}

/// Divides each probability by its class prior and renormalizes.
inline void rectify_by_priors(Eigen::Ref<Eigen::RowVectorXd> probs, std::span<const double> priors) {
  double sum = 0.0;
  for (Eigen::Index c = 0; c < probs.size(); ++c) {
    probs[c] /= priors[static_cast<std::size_t>(c)];
    sum += probs[c];
  }
  if (sum > 0.0) probs /= sum;
}

inline Matrix gather_rows(const EmbeddingStore& store, std::span<const SampleId> ids) {
  Matrix x(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(store.dim()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= store.size()) {
      throw Error(ErrorCode::kUnknownId, "sample id " + std::to_string(ids[i]) + " is out of range");
    }
    x.row(static_cast<Eigen::Index>(i)) = store.row(ids[i]);
  }
  return x;
}

inline ProbMatrix predict_proba(const ClassifierModel& model, const Matrix& x) {
  ProbMatrix p = masked_softmax(output_scores(model.params, hidden_activations(model.params, x)),
                                model.present);
  if (model.scheme == Scheme::kSoftmaxTh) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) rectify_by_priors(p.row(i), model.class_priors);
  }
  return p;
}

inline ProbMatrix predict_proba(const ClassifierModel& model, const EmbeddingStore& store,
                                std::span<const SampleId> ids) {
  if (ids.empty()) return ProbMatrix(0, static_cast<Eigen::Index>(model.n_classes));
  return predict_proba(model, gather_rows(store, ids));
}

/// Two most probable classes; ties go to the lower class index.
inline Top2 top2_of(const Eigen::Ref<const Eigen::RowVectorXd>& probs) {
  if (probs.size() < 2) throw Error(ErrorCode::kSingleClassModel, "top-2 needs at least 2 classes");
  Top2 out;
  out.first = probs[1] > probs[0] ? 1 : 0;
  out.second = 1 - out.first;
  for (Eigen::Index c = 2; c < probs.size(); ++c) {
    if (probs[c] > probs[out.first]) {
      out.second = out.first;
      out.first = static_cast<ClassId>(c);
    } else if (probs[c] > probs[out.second]) {
      out.second = static_cast<ClassId>(c);
    }
  }
  out.margin = probs[out.first] - probs[out.second];
  return out;
}

inline std::vector<Top2> predict_top2(const ProbMatrix& probs) {
  std::vector<Top2> out;
  out.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) out.push_back(top2_of(probs.row(i)));
  return out;
}

inline std::vector<Top2> predict_top2(const ClassifierModel& model, const EmbeddingStore& store,
                                      std::span<const SampleId> ids) {
  if (model.n_classes < 2) throw Error(ErrorCode::kSingleClassModel, "top-2 of a single-class model");
  return predict_top2(predict_proba(model, store, ids));
}

inline std::vector<ClassId> predict_labels(const ClassifierModel& model, const Matrix& x) {
  const ProbMatrix p = predict_proba(model, x);
  std::vector<ClassId> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < p.cols(); ++c) {
      if (p(i, c) > p(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<ClassId>(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation.

/// Mean over classes of per-class accuracy. With `require_all_classes`, every
/// class in [0, n_classes) must occur in `truth`; otherwise the mean runs over
/// the classes that do.
inline double balanced_accuracy(std::span<const ClassId> predicted, std::span<const ClassId> truth,
                                std::size_t n_classes, bool require_all_classes = true) {
  std::vector<std::size_t> hits(n_classes, 0);
  std::vector<std::size_t> totals(n_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++totals[truth[i]];
    if (predicted[i] == truth[i]) ++hits[truth[i]];
  }
  double sum = 0.0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (totals[c] == 0) {
      if (require_all_classes) {
        throw Error(ErrorCode::kClassAbsent, "class " + std::to_string(c) + " is absent from the test set");
      }
      continue;
    }
    sum += static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    ++classes;
  }
  if (classes == 0) throw Error(ErrorCode::kClassAbsent, "no classes to evaluate");
  return sum / static_cast<double>(classes);
}

inline double evaluate_balanced(const ClassifierModel& model, const EmbeddingStore& test_store,
                                const LabelOracle& test_oracle) {
  const auto predicted = predict_labels(model, test_store.vectors());
  return balanced_accuracy(predicted, test_oracle.labels(), model.n_classes);
}

// ---------------------------------------------------------------------------
// Objectives and gradients. Both are full-batch over the rows of `x`; SGD
// calls them on mini-batches.

struct Gradient {
  Parameters grad;
  double objective = 0.0;
};

/// Sum over one-vs-rest problems of
///   l2/2 |w_c|^2 + 1/N sum_i weight_i * max(0, 1 - y_ic (w_c . x_i + b_c)),
/// y_ic = +1 when label_i == c, else -1. Only `present` classes contribute.
inline Gradient svm_objective_and_gradient(const Parameters& params, const Matrix& x,
                                           std::span<const ClassId> labels,
                                           std::span<const double> sample_weights, double l2,
                                           std::span<const std::uint8_t> present) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = params.output_weights.rows();
  const Matrix scores = output_scores(params, x);
  Matrix d_scores = Matrix::Zero(n, k);
  double hinge = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = sample_weights[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < k; ++c) {
      if (!present[c]) continue;
      const double y = labels[static_cast<std::size_t>(i)] == static_cast<ClassId>(c) ? 1.0 : -1.0;
      const double m = y * scores(i, c);
      if (m < 1.0) {
        hinge += w * (1.0 - m);
        d_scores(i, c) = -w * y * inv_n;
      }
    }
  }
  Gradient out;
  out.grad.output_weights = d_scores.transpose() * x + l2 * params.output_weights;
  out.grad.output_bias = d_scores.colwise().sum().transpose();
  double reg = 0.0;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (present[c]) {
      reg += params.output_weights.row(c).squaredNorm();
    } else {
      out.grad.output_weights.row(c).setZero();
    }
  }
  out.objective = 0.5 * l2 * reg + hinge * inv_n;
  return out;
}

/// Mean cross-entropy of the masked softmax plus l2/2 (|W1|^2 + |W2|^2).
inline Gradient softmax_loss_and_gradient(const Parameters& params, const Matrix& x,
                                          std::span<const ClassId> labels, double l2,
                                          std::span<const std::uint8_t> present) {
  const Eigen::Index n = x.rows();
  const Matrix act = hidden_activations(params, x);
  const Matrix probs = masked_softmax(output_scores(params, act), present);
  const double inv_n = 1.0 / static_cast<double>(n);

  double nll = 0.0;
  Matrix d_scores = probs;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    nll -= std::log(std::max(probs(i, y), std::numeric_limits<double>::min()));
    d_scores(i, y) -= 1.0;
  }
  d_scores *= inv_n;

  Gradient out;
  out.grad.output_weights = d_scores.transpose() * act + l2 * params.output_weights;
  out.grad.output_bias = d_scores.colwise().sum().transpose();
  double reg = params.output_weights.squaredNorm();
  if (params.has_hidden()) {
    const Matrix d_act = d_scores * params.output_weights;
    const Matrix d_pre = d_act.array() * (1.0 - act.array().square());
    out.grad.hidden_weights = d_pre.transpose() * x + l2 * params.hidden_weights;
    out.grad.hidden_bias = d_pre.colwise().sum().transpose();
    reg += params.hidden_weights.squaredNorm();
  }
  out.objective = nll * inv_n + 0.5 * l2 * reg;
  return out;
}

// ---------------------------------------------------------------------------
// Training.

namespace detail {

struct TrainingSet {
  Matrix x;
  std::vector<ClassId> labels;
  std::vector<std::size_t> counts;
  std::vector<std::uint8_t> present;
};

inline TrainingSet assemble(const EmbeddingStore& store, std::span<const SampleId> ids,
                            const LabelOracle& oracle) {
  TrainingSet set;
  set.x = gather_rows(store, ids);
  set.counts.assign(oracle.n_classes(), 0);
  for (SampleId id : ids) {
    set.labels.push_back(oracle.label(id));
    ++set.counts[oracle.label(id)];
  }
  for (std::size_t c : set.counts) set.present.push_back(c > 0 ? 1 : 0);
  const auto distinct = std::count(set.present.begin(), set.present.end(), std::uint8_t{1});
  if (distinct < 2) {
    throw Error(ErrorCode::kTooFewClasses,
                "training needs at least 2 labeled classes, got " + std::to_string(distinct));
  }
  return set;
}

inline void axpy(Parameters& p, double alpha, const Parameters& g) {
  p.output_weights += alpha * g.output_weights;
  p.output_bias += alpha * g.output_bias;
  if (p.has_hidden()) {
    p.hidden_weights += alpha * g.hidden_weights;
    p.hidden_bias += alpha * g.hidden_bias;
  }
}

inline Parameters zeros_like(const Parameters& p) {
  Parameters z;
  z.hidden_weights = Matrix::Zero(p.hidden_weights.rows(), p.hidden_weights.cols());
  z.hidden_bias = Vector::Zero(p.hidden_bias.size());
  z.output_weights = Matrix::Zero(p.output_weights.rows(), p.output_weights.cols());
  z.output_bias = Vector::Zero(p.output_bias.size());
  return z;
}

struct SgdResult {
  std::size_t epochs_run = 0;
  double first_loss = 0.0;
  double final_loss = 0.0;
  double final_learning_rate = 0.0;
};

/// Mini-batch SGD with momentum and a plateau learning-rate decay.
/// `batch_grad(params, rows)` returns the gradient on the given rows.
/// With `full_objective`, the loss tracked per epoch is the full-data
/// objective and the best epoch's parameters are kept; otherwise the tracked
/// loss is the running mean of mini-batch losses and the last epoch wins.
template <class BatchGrad, class FullObjective>
SgdResult run_sgd(Parameters& params, std::size_t n_rows, const TrainConfig& cfg, std::uint64_t seed,
                  BatchGrad batch_grad, FullObjective full_objective, bool keep_best) {
  if (cfg.epochs == 0) throw Error(ErrorCode::kInvalidConfig, "epochs must be >= 1");
  if (cfg.batch_size == 0) throw Error(ErrorCode::kInvalidConfig, "batch_size must be >= 1");
  Rng rng(derive_seed(seed, "sgd"));
  std::vector<Eigen::Index> order(n_rows);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Parameters velocity = zeros_like(params);
  Parameters best = params;

  SgdResult result;
  double lr = cfg.learning_rate;
  double best_loss = std::numeric_limits<double>::infinity();
  double plateau_ref = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double running = 0.0;
    for (std::size_t start = 0; start < n_rows; start += cfg.batch_size) {
      const std::size_t stop = std::min(n_rows, start + cfg.batch_size);
      const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
      Gradient g = batch_grad(params, rows);
      running += g.objective * static_cast<double>(rows.size());
      if (cfg.momentum > 0.0) {
        velocity.output_weights = cfg.momentum * velocity.output_weights + g.grad.output_weights;
        velocity.output_bias = cfg.momentum * velocity.output_bias + g.grad.output_bias;
        if (params.has_hidden()) {
          velocity.hidden_weights = cfg.momentum * velocity.hidden_weights + g.grad.hidden_weights;
          velocity.hidden_bias = cfg.momentum * velocity.hidden_bias + g.grad.hidden_bias;
        }
        axpy(params, -lr, velocity);
      } else {
        axpy(params, -lr, g.grad);
      }
    }
    const double loss = keep_best ? full_objective(params) : running / static_cast<double>(n_rows);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::kDiverged,
                  "training diverged at epoch " + std::to_string(epoch + 1) +
                      "; lower learning_rate (currently " + std::to_string(cfg.learning_rate) + ")");
    }
    if (epoch == 0) result.first_loss = loss;
    result.epochs_run = epoch + 1;
    if (keep_best && loss <= best_loss) {
      best_loss = loss;
      best = params;
    }
    if (loss < plateau_ref * (1.0 - 1e-4)) {
      plateau_ref = loss;
      stale = 0;
    } else if (++stale >= cfg.plateau_patience) {
      lr *= cfg.lr_decay;
      stale = 0;
    }
    result.final_loss = loss;
  }
  if (keep_best) {
    params = std::move(best);
    result.final_loss = best_loss;
  }
  result.final_learning_rate = lr;
  return result;
}

inline std::vector<double> smoothed_priors(std::span<const std::size_t> counts) {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  std::vector<double> priors;
  for (std::size_t c : counts) {
    priors.push_back((static_cast<double>(c) + 1.0) / (total + static_cast<double>(counts.size())));
  }
  return priors;
}

inline void fill_meta(ClassifierModel& model, const TrainingSet& set, const SgdResult& sgd,
                      std::uint64_t seed) {
  model.meta.epochs_run = sgd.epochs_run;
  model.meta.seed = seed;
  model.meta.first_loss = sgd.first_loss;
  model.meta.final_loss = sgd.final_loss;
  model.meta.final_learning_rate = sgd.final_learning_rate;
  model.meta.excluded_classes.clear();
  for (std::uint8_t p : set.present) model.meta.excluded_classes.push_back(p == 0);
}

}  // namespace detail

/// One-vs-rest linear SVMs trained by SGD on the weighted hinge loss. Class
/// weights are rescaled so their mean over the training samples is 1, which
/// makes the fit invariant to a common factor on all weights.
inline ClassifierModel train_svm(const EmbeddingStore& store, std::span<const SampleId> ids,
                                 const LabelOracle& oracle, const ClassWeights& weights,
                                 const TrainConfig& cfg, std::uint64_t seed,
                                 Scheme scheme = Scheme::kCsSvm) {
  const detail::TrainingSet set = detail::assemble(store, ids, oracle);
  if (weights.weights.size() != oracle.n_classes()) {
    throw Error(ErrorCode::kInvalidConfig, "class weight count does not match class count");
  }
  std::vector<double> sample_weights;
  double weight_sum = 0.0;
  for (ClassId y : set.labels) {
    const double w = weights.weights[y];
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidConfig, "class weights must be finite and > 0");
    }
    sample_weights.push_back(w);
    weight_sum += w;
  }
  const double rescale = static_cast<double>(set.labels.size()) / weight_sum;
  for (double& w : sample_weights) w *= rescale;

  const auto n_classes = static_cast<Eigen::Index>(oracle.n_classes());
  ClassifierModel model;
  model.scheme = scheme;
  model.n_classes = oracle.n_classes();
  model.dim = store.dim();
  model.present = set.present;
  model.class_priors = detail::smoothed_priors(set.counts);
  model.params.output_weights = Matrix::Zero(n_classes, static_cast<Eigen::Index>(store.dim()));
  model.params.output_bias = Vector::Zero(n_classes);

  auto batch_grad = [&](const Parameters& p, const std::vector<Eigen::Index>& rows) {
    const Matrix xb = set.x(rows, Eigen::all);
    std::vector<ClassId> yb;
    std::vector<double> wb;
    for (Eigen::Index r : rows) {
      yb.push_back(set.labels[static_cast<std::size_t>(r)]);
      wb.push_back(sample_weights[static_cast<std::size_t>(r)]);
    }
    return svm_objective_and_gradient(p, xb, yb, wb, cfg.l2, set.present);
  };
  auto full = [&](const Parameters& p) {
    return svm_objective_and_gradient(p, set.x, set.labels, sample_weights, cfg.l2, set.present).objective;
  };
  const auto sgd = detail::run_sgd(model.params, set.labels.size(), cfg, seed, batch_grad, full, true);
  detail::fill_meta(model, set, sgd, seed);
  return model;
}

inline ClassifierModel train_cs_svm(const EmbeddingStore& store, const PoolState& pool,
                                    const LabelOracle& oracle, const ClassWeights& weights,
                                    const TrainConfig& cfg, std::uint64_t seed) {
  return train_svm(store, pool.labeled(), oracle, weights, cfg, seed, Scheme::kCsSvm);
}

/// One-hidden-layer tanh head trained with cross-entropy. hidden_width 0
/// degenerates to multinomial logistic regression. The output layer starts at
/// zero so the fit does not depend on how classes are numbered.
inline ClassifierModel train_softmax(const EmbeddingStore& store, std::span<const SampleId> ids,
                                     const LabelOracle& oracle, const TrainConfig& cfg,
                                     std::uint64_t seed, Scheme scheme = Scheme::kSoftmaxTh) {
  const detail::TrainingSet set = detail::assemble(store, ids, oracle);
  const auto n_classes = static_cast<Eigen::Index>(oracle.n_classes());
  const auto dim = static_cast<Eigen::Index>(store.dim());
  const auto hidden = static_cast<Eigen::Index>(cfg.hidden_width);

  ClassifierModel model;
  model.scheme = scheme;
  model.n_classes = oracle.n_classes();
  model.dim = store.dim();
  model.present = set.present;
  model.class_priors = detail::smoothed_priors(set.counts);
  if (hidden > 0) {
    Rng init(derive_seed(seed, "init"));
    const double bound = std::sqrt(6.0 / static_cast<double>(dim + hidden));
    model.params.hidden_weights.resize(hidden, dim);
    for (Eigen::Index h = 0; h < hidden; ++h) {
      for (Eigen::Index j = 0; j < dim; ++j) model.params.hidden_weights(h, j) = init.uniform(-bound, bound);
    }
    model.params.hidden_bias = Vector::Zero(hidden);
  }
  model.params.output_weights = Matrix::Zero(n_classes, hidden > 0 ? hidden : dim);
  model.params.output_bias = Vector::Zero(n_classes);

  auto batch_grad = [&](const Parameters& p, const std::vector<Eigen::Index>& rows) {
    const Matrix xb = set.x(rows, Eigen::all);
    std::vector<ClassId> yb;
    for (Eigen::Index r : rows) yb.push_back(set.labels[static_cast<std::size_t>(r)]);
    return softmax_loss_and_gradient(p, xb, yb, cfg.l2, set.present);
  };
  auto unused = [](const Parameters&) { return 0.0; };
  const auto sgd = detail::run_sgd(model.params, set.labels.size(), cfg, seed, batch_grad, unused, false);
  detail::fill_meta(model, set, sgd, seed);
  return model;
}

inline ClassifierModel train_softmax_th(const EmbeddingStore& store, const PoolState& pool,
                                        const LabelOracle& oracle, const TrainConfig& cfg,
                                        std::uint64_t seed) {
  return train_softmax(store, pool.labeled(), oracle, cfg, seed, Scheme::kSoftmaxTh);
}

struct SchemeConfigs {
  TrainConfig svm = default_svm_config();
  TrainConfig softmax = default_softmax_config();
};

/// Trains `scheme` on `ids`; CS_SVM derives balanced weights from the ids' labels.
inline ClassifierModel train_scheme(Scheme scheme, const EmbeddingStore& store,
                                    std::span<const SampleId> ids, const LabelOracle& oracle,
                                    const SchemeConfigs& configs, std::uint64_t seed) {
  switch (scheme) {
    case Scheme::kCsSvm: {
      std::vector<std::size_t> counts(oracle.n_classes(), 0);
      for (SampleId id : ids) ++counts[oracle.label(id)];
      return train_svm(store, ids, oracle, class_weights_balanced(counts), configs.svm, seed, scheme);
    }
    case Scheme::kSvmPlain:
      return train_svm(store, ids, oracle, uniform_class_weights(oracle.n_classes()), configs.svm, seed,
                       scheme);
    case Scheme::kSoftmaxTh:
    case Scheme::kSoftmaxPlain:
      return train_softmax(store, ids, oracle, configs.softmax, seed, scheme);
  }
  throw Error(ErrorCode::kUnknownName, "unknown scheme");
}

// ---------------------------------------------------------------------------
// Cross-validation.

struct Split {
  std::vector<SampleId> train;
  std::vector<SampleId> held_out;
};

/// Stratified split holding out round(fraction * N) samples, allotted to
/// classes by largest remainder. Every class keeps at least one training
/// sample, so the held-out fold can come out smaller than requested.
inline Split stratified_split(std::span<const SampleId> ids, const LabelOracle& oracle,
                              double held_out_fraction, std::uint64_t seed) {
  std::vector<std::vector<SampleId>> groups(oracle.n_classes());
  for (SampleId id : ids) groups[oracle.label(id)].push_back(id);
  Rng rng(seed);
  for (auto& g : groups) {
    std::sort(g.begin(), g.end());
    shuffle(g, rng);
  }
  const auto target = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(ids.size())));
  std::vector<std::size_t> quota(groups.size(), 0);
  std::vector<double> remainder(groups.size(), 0.0);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    if (groups[c].empty()) continue;
    const double exact = held_out_fraction * static_cast<double>(groups[c].size());
    quota[c] = std::min(static_cast<std::size_t>(std::floor(exact)), groups[c].size() - 1);
    remainder[c] = exact - std::floor(exact);
    assigned += quota[c];
  }
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t c : order) {
    if (assigned >= target) break;
    if (!groups[c].empty() && quota[c] + 1 < groups[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }
  Split split;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    split.held_out.insert(split.held_out.end(), groups[c].begin(),
                          groups[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
    split.train.insert(split.train.end(), groups[c].begin() + static_cast<std::ptrdiff_t>(quota[c]),
                       groups[c].end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.held_out.begin(), split.held_out.end());
  return split;
}

/// Mean per-class accuracy (over classes present in the held-out fold) of
/// `scheme` trained on a stratified 80% of `ids` and scored on the rest.
inline double cross_validate_scheme(const EmbeddingStore& store, std::span<const SampleId> ids,
                                    const LabelOracle& oracle, Scheme scheme,
                                    const SchemeConfigs& configs, std::uint64_t seed) {
  const Split split = stratified_split(ids, oracle, 0.2, derive_seed(seed, "cv-split"));
  std::vector<std::uint8_t> in_fold(oracle.n_classes(), 0);
  std::vector<std::uint8_t> in_train(oracle.n_classes(), 0);
  for (SampleId id : split.held_out) in_fold[oracle.label(id)] = 1;
  for (SampleId id : split.train) in_train[oracle.label(id)] = 1;
  if (std::count(in_fold.begin(), in_fold.end(), 1) < 2 || std::count(in_train.begin(), in_train.end(), 1) < 2) {
    throw Error(ErrorCode::kDegenerateFold,
                "cross-validation folds need at least 2 classes each (" + std::to_string(ids.size()) +
                    " labeled samples)");
  }
  const ClassifierModel model = train_scheme(scheme, store, split.train, oracle, configs, derive_seed(seed, "cv-train"));
  const auto predicted = predict_labels(model, gather_rows(store, split.held_out));
  std::vector<ClassId> truth;
  for (SampleId id : split.held_out) truth.push_back(oracle.label(id));
  return balanced_accuracy(predicted, truth, oracle.n_classes(), false);
}

inline double cross_validate_scheme(const EmbeddingStore& store, const PoolState& pool,
                                    const LabelOracle& oracle, Scheme scheme,
                                    const SchemeConfigs& configs, std::uint64_t seed) {
  return cross_validate_scheme(store, pool.labeled(), oracle, scheme, configs, seed);
}

}  // namespace albalance
