#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "albalance/classifiers.hpp"
#include "albalance/dataset.hpp"
#include "albalance/error.hpp"
#include "albalance/rng.hpp"

namespace albalance {

enum class AfKind { kRandom, kMargin, kCoreset, kCdsBal, kMinority };
enum class McsVariant { kCertainty, kUncertainty, kDiversity };
enum class Auxiliary { kRandom, kMargin };

struct AcquisitionSpec {
  AfKind kind = AfKind::kRandom;
  McsVariant variant = McsVariant::kDiversity;
  Auxiliary auxiliary = Auxiliary::kRandom;

  std::string name() const {
    switch (kind) {
      case AfKind::kRandom: return "random";
      case AfKind::kMargin: return "margin";
      case AfKind::kCoreset: return "coreset";
      case AfKind::kCdsBal: return "cds-bal";
      case AfKind::kMinority: break;
    }
    const char* prefix = variant == McsVariant::kCertainty     ? "cmcs"
                         : variant == McsVariant::kUncertainty ? "umcs"
                                                               : "dmcs";
    return std::string(prefix) + (auxiliary == Auxiliary::kRandom ? "-rand" : "-marg");
  }
};

inline const std::vector<std::string>& acquisition_names() {
  static const std::vector<std::string> names = {"random",    "margin",    "coreset",   "cds-bal",
                                                 "cmcs-rand", "cmcs-marg", "umcs-rand", "umcs-marg",
                                                 "dmcs-rand", "dmcs-marg"};
  return names;
}

inline AcquisitionSpec parse_acquisition(std::string_view name) {
  if (name == "random") return {AfKind::kRandom};
  if (name == "margin") return {AfKind::kMargin};
  if (name == "coreset") return {AfKind::kCoreset};
  if (name == "cds-bal") return {AfKind::kCdsBal};
  if (name.size() == 9 && name[4] == '-') {
    AcquisitionSpec spec{AfKind::kMinority};
    const auto family = name.substr(0, 4);
    const auto aux = name.substr(5);
    bool ok = true;
    if (family == "cmcs") {
      spec.variant = McsVariant::kCertainty;
    } else if (family == "umcs") {
      spec.variant = McsVariant::kUncertainty;
    } else if (family == "dmcs") {
      spec.variant = McsVariant::kDiversity;
    } else {
      ok = false;
    }
    if (aux == "rand") {
      spec.auxiliary = Auxiliary::kRandom;
    } else if (aux == "marg") {
      spec.auxiliary = Auxiliary::kMargin;
    } else {
      ok = false;
    }
    if (ok) return spec;
  }
  throw Error(ErrorCode::kUnknownName, "unknown acquisition function '" + std::string(name) + "'");
}

/// Which step of an acquisition function picked a sample.
enum class Stage { kRandom, kMargin, kCoreset, kCdsBal, kMinorityQuota, kAuxiliary, kFallbackRandom };

inline std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kRandom: return "random";
    case Stage::kMargin: return "margin";
    case Stage::kCoreset: return "coreset";
    case Stage::kCdsBal: return "cds-bal";
    case Stage::kMinorityQuota: return "minority";
    case Stage::kAuxiliary: return "auxiliary";
    case Stage::kFallbackRandom: return "fallback-random";
  }
  return "?";
}

inline constexpr std::int64_t kNoClass = -1;

struct SelectionResult {
  std::vector<SampleId> ids;
  std::vector<Stage> stages;
  std::vector<std::int64_t> target_class;  // kNoClass unless picked for a class quota

  void add(SampleId id, Stage stage, std::int64_t target = kNoClass) {
    ids.push_back(id);
    stages.push_back(stage);
    target_class.push_back(target);
  }

  std::size_t count(Stage stage) const {
    return static_cast<std::size_t>(std::count(stages.begin(), stages.end(), stage));
  }
};

struct AcquisitionContext {
  const PoolState& pool;
  const EmbeddingStore& store;
  const LabelOracle& oracle;  // read only for already-labeled samples
  const ClassifierModel* model = nullptr;
  std::size_t per_iter_budget = 0;
  std::uint64_t rng_seed = 0;

  std::size_t budget() const { return std::min(per_iter_budget, pool.unlabeled_count()); }

  const ClassifierModel& require_model(std::string_view af) const {
    if (!model) throw Error(ErrorCode::kMissingModel, std::string(af) + " needs a trained model");
    return *model;
  }
};

/// Representation used for distance-based selection: the frozen embeddings,
/// or the hidden-layer activations when the model has a hidden layer.
class FeatureSpace {
 public:
  explicit FeatureSpace(const AcquisitionContext& ctx) {
    if (ctx.model && ctx.model->params.has_hidden()) {
      owned_ = hidden_activations(ctx.model->params, ctx.store.vectors());
      view_ = &*owned_;
    } else {
      view_ = &ctx.store.vectors();
    }
  }
  FeatureSpace(const FeatureSpace&) = delete;
  FeatureSpace& operator=(const FeatureSpace&) = delete;

  const Matrix& matrix() const { return *view_; }

 private:
  std::optional<Matrix> owned_;
  const Matrix* view_ = nullptr;
};

// ---------------------------------------------------------------------------
// Greedy k-center.

inline double squared_distance(const Matrix& features, SampleId a, SampleId b) {
  const double* pa = features.row(a).data();
  const double* pb = features.row(b).data();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double d = pa[j] - pb[j];
    sum += d * d;
  }
  return sum;
}

struct KCenterResult {
  std::vector<SampleId> picks;
  std::vector<double> radii;  // distance of each pick to its nearest center when picked
};

/// Repeatedly picks the candidate farthest from its nearest center (anchors
/// plus earlier picks). Ties go to the lowest id; with no anchors the first
/// pick is therefore the lowest candidate id.
inline KCenterResult greedy_k_center_with_radii(std::span<const SampleId> candidates,
                                                std::span<const SampleId> anchors, std::size_t count,
                                                const Matrix& features) {
  std::vector<SampleId> pool(candidates.begin(), candidates.end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  if (count > pool.size()) {
    throw Error(ErrorCode::kCountExceedsCandidates, "cannot pick " + std::to_string(count) + " of " +
                                                        std::to_string(pool.size()) + " candidates");
  }
  std::vector<double> nearest(pool.size(), std::numeric_limits<double>::infinity());
  for (SampleId a : anchors) {
    for (std::size_t j = 0; j < pool.size(); ++j) {
      nearest[j] = std::min(nearest[j], squared_distance(features, pool[j], a));
    }
  }
  std::vector<std::uint8_t> taken(pool.size(), 0);
  KCenterResult out;
  for (std::size_t pick = 0; pick < count; ++pick) {
    std::size_t best = pool.size();
    double best_d = -1.0;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (!taken[j] && nearest[j] > best_d) {
        best = j;
        best_d = nearest[j];
      }
    }
    taken[best] = 1;
    out.picks.push_back(pool[best]);
    out.radii.push_back(std::sqrt(best_d));
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (!taken[j]) nearest[j] = std::min(nearest[j], squared_distance(features, pool[j], pool[best]));
    }
  }
  return out;
}

inline std::vector<SampleId> greedy_k_center(std::span<const SampleId> candidates,
                                             std::span<const SampleId> anchors, std::size_t count,
                                             const Matrix& features) {
  return greedy_k_center_with_radii(candidates, anchors, count, features).picks;
}

// ---------------------------------------------------------------------------
// Baselines.

namespace detail {

// Ids ordered by (key, id), ascending or descending in key.
inline std::vector<SampleId> order_by_key(std::span<const SampleId> ids, std::span<const double> keys,
                                          bool descending) {
  std::vector<std::size_t> idx(ids.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return descending ? keys[a] > keys[b] : keys[a] < keys[b];
    return ids[a] < ids[b];
  });
  std::vector<SampleId> out;
  out.reserve(ids.size());
  for (std::size_t i : idx) out.push_back(ids[i]);
  return out;
}

inline std::vector<double> margins_of(const ClassifierModel& model, const EmbeddingStore& store,
                                      std::span<const SampleId> ids) {
  std::vector<double> out;
  for (const Top2& t : predict_top2(model, store, ids)) out.push_back(t.margin);
  return out;
}

inline std::vector<SampleId> random_from(std::span<const SampleId> ids, std::size_t count,
                                         std::uint64_t seed) {
  Rng rng(derive_seed(seed, "af-random"));
  return sample_without_replacement<SampleId>(ids, count, rng);
}

inline std::vector<SampleId> lowest_margin_from(const ClassifierModel& model, const EmbeddingStore& store,
                                                std::span<const SampleId> ids, std::size_t count) {
  const auto margins = margins_of(model, store, ids);
  auto ordered = order_by_key(ids, margins, false);
  ordered.resize(std::min(count, ordered.size()));
  return ordered;
}

}  // namespace detail

inline SelectionResult af_random(const AcquisitionContext& ctx) {
  const auto unlabeled = ctx.pool.unlabeled();
  SelectionResult out;
  for (SampleId id : detail::random_from(unlabeled, ctx.budget(), ctx.rng_seed)) out.add(id, Stage::kRandom);
  return out;
}

/// Smallest top-2 margins first; ties by id.
inline SelectionResult af_margin(const AcquisitionContext& ctx) {
  const ClassifierModel& model = ctx.require_model("margin");
  const auto unlabeled = ctx.pool.unlabeled();
  SelectionResult out;
  for (SampleId id : detail::lowest_margin_from(model, ctx.store, unlabeled, ctx.budget())) {
    out.add(id, Stage::kMargin);
  }
  return out;
}

inline SelectionResult af_coreset(const AcquisitionContext& ctx) {
  if (ctx.pool.labeled_count() == 0) {
    throw Error(ErrorCode::kEmptyLabeledSet, "coreset needs a non-empty labeled set");
  }
  const FeatureSpace features(ctx);
  const auto unlabeled = ctx.pool.unlabeled();
  SelectionResult out;
  for (SampleId id : greedy_k_center(unlabeled, ctx.pool.labeled(), ctx.budget(), features.matrix())) {
    out.add(id, Stage::kCoreset);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Minority-class allocation.

struct MinorityAllocation {
  double mu = 0.0;                 // labeled samples per class
  std::vector<double> raw_quota;   // mu - s_c for minority classes, else 0
  std::vector<double> quota;       // raw_quota, scaled down if it overflows the budget
  std::vector<bool> minority;      // s_c < mu
  bool capped = false;

  /// Largest-remainder integerization of `quota` to round(sum), never above
  /// `budget`. Remainder ties go to the lower class index.
  std::vector<std::size_t> integer_quotas(std::size_t budget) const {
    const double sum = std::accumulate(quota.begin(), quota.end(), 0.0);
    const std::size_t target = std::min(budget, static_cast<std::size_t>(std::llround(sum)));
    std::vector<std::size_t> out(quota.size(), 0);
    std::vector<double> remainder(quota.size(), 0.0);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < quota.size(); ++c) {
      const double fl = std::floor(quota[c]);
      out[c] = static_cast<std::size_t>(fl);
      remainder[c] = quota[c] - fl;
      assigned += out[c];
    }
    std::vector<std::size_t> order(quota.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t c : order) {
      if (assigned >= target) break;
      if (quota[c] > 0.0) {
        ++out[c];
        ++assigned;
      }
    }
    // Round-off can leave the floors a unit above the target.
    for (std::size_t i = order.size(); i-- > 0 && assigned > target;) {
      if (out[order[i]] > 0) {
        --out[order[i]];
        --assigned;
      }
    }
    return out;
  }
};

/// m_c = mu - s_c when s_c < mu, else 0, with mu = s / n over all n classes.
/// When the quotas exceed the iteration budget they are scaled to sum to it.
inline MinorityAllocation minority_allocation(std::span<const std::size_t> per_class_counts,
                                              std::size_t per_iter_budget) {
  MinorityAllocation alloc;
  const double total = static_cast<double>(
      std::accumulate(per_class_counts.begin(), per_class_counts.end(), std::size_t{0}));
  alloc.mu = per_class_counts.empty() ? 0.0 : total / static_cast<double>(per_class_counts.size());
  double sum = 0.0;
  for (std::size_t count : per_class_counts) {
    const double s = static_cast<double>(count);
    const bool minority = s < alloc.mu;
    alloc.minority.push_back(minority);
    alloc.raw_quota.push_back(minority ? alloc.mu - s : 0.0);
    sum += alloc.raw_quota.back();
  }
  alloc.quota = alloc.raw_quota;
  if (sum > static_cast<double>(per_iter_budget)) {
    alloc.capped = true;
    const double scale = static_cast<double>(per_iter_budget) / sum;
    for (double& q : alloc.quota) q *= scale;
  }
  return alloc;
}

inline MinorityAllocation minority_allocation(const PoolState& pool, std::size_t per_iter_budget) {
  return minority_allocation(pool.per_class_counts(), per_iter_budget);
}

/// Unlabeled ids whose top-1 predicted class is `c`.
inline std::vector<SampleId> minority_candidates(const AcquisitionContext& ctx, ClassId c) {
  const ClassifierModel& model = ctx.require_model("minority_candidates");
  const auto unlabeled = ctx.pool.unlabeled();
  const auto probs = predict_proba(model, ctx.store, unlabeled);
  std::vector<SampleId> out;
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    if (top2_of(probs.row(static_cast<Eigen::Index>(i))).first == c) out.push_back(unlabeled[i]);
  }
  return out;
}

/// Picks up to `quota` of a class's candidates. `margins` is aligned with
/// `candidates`; `anchors` are the class's labeled samples (diversity only).
/// When the candidates fit in the quota all of them are returned in id order,
/// whatever the variant.
inline std::vector<SampleId> select_within_class(McsVariant variant, std::span<const SampleId> candidates,
                                                 std::size_t quota, std::span<const double> margins,
                                                 std::span<const SampleId> anchors, const Matrix& features) {
  if (candidates.size() <= quota) {
    std::vector<SampleId> all(candidates.begin(), candidates.end());
    std::sort(all.begin(), all.end());
    return all;
  }
  std::vector<SampleId> out;
  switch (variant) {
    case McsVariant::kCertainty:
      out = detail::order_by_key(candidates, margins, true);
      break;
    case McsVariant::kUncertainty:
      out = detail::order_by_key(candidates, margins, false);
      break;
    case McsVariant::kDiversity:
      return greedy_k_center(candidates, anchors, quota, features);
  }
  out.resize(quota);
  return out;
}

inline std::vector<SampleId> select_within_class(McsVariant variant, std::span<const SampleId> candidates,
                                                 std::size_t quota, const AcquisitionContext& ctx, ClassId c) {
  const ClassifierModel& model = ctx.require_model("select_within_class");
  const auto margins = detail::margins_of(model, ctx.store, candidates);
  const auto anchors = ctx.pool.labeled_of_class(c, ctx.oracle);
  if (variant == McsVariant::kDiversity && candidates.size() > quota) {
    const FeatureSpace features(ctx);
    return select_within_class(variant, candidates, quota, margins, anchors, features.matrix());
  }
  return select_within_class(variant, candidates, quota, margins, anchors, ctx.store.vectors());
}

/// Minority-class oriented acquisition: class quotas from the labeled
/// distribution are filled, most deficient class first, from the samples the
/// model predicts as that class; the rest of the budget goes to the auxiliary
/// function over whatever is still unselected.
inline SelectionResult af_mcs(McsVariant variant, Auxiliary auxiliary, const AcquisitionContext& ctx) {
  const ClassifierModel& model = ctx.require_model("minority-class acquisition");
  const std::size_t budget = ctx.budget();
  const auto unlabeled = ctx.pool.unlabeled();
  const auto top2 = predict_top2(model, ctx.store, unlabeled);

  const MinorityAllocation alloc = minority_allocation(ctx.pool, budget);
  const auto quotas = alloc.integer_quotas(budget);

  std::vector<std::vector<SampleId>> candidates(ctx.pool.n_classes());
  std::vector<std::vector<double>> margins(ctx.pool.n_classes());
  for (std::size_t i = 0; i < unlabeled.size(); ++i) {
    candidates[top2[i].first].push_back(unlabeled[i]);
    margins[top2[i].first].push_back(top2[i].margin);
  }

  std::vector<std::size_t> classes;
  for (std::size_t c = 0; c < quotas.size(); ++c) {
    if (quotas[c] > 0) classes.push_back(c);
  }
  std::stable_sort(classes.begin(), classes.end(),
                   [&](std::size_t a, std::size_t b) { return alloc.quota[a] > alloc.quota[b]; });

  std::optional<FeatureSpace> features;
  if (variant == McsVariant::kDiversity && !classes.empty()) features.emplace(ctx);
  const Matrix& space = features ? features->matrix() : ctx.store.vectors();

  SelectionResult out;
  for (std::size_t c : classes) {
    const auto anchors = variant == McsVariant::kDiversity
                             ? ctx.pool.labeled_of_class(static_cast<ClassId>(c), ctx.oracle)
                             : std::vector<SampleId>{};
    const auto picked = select_within_class(variant, candidates[c], quotas[c], margins[c], anchors, space);
    for (SampleId id : picked) out.add(id, Stage::kMinorityQuota, static_cast<std::int64_t>(c));
  }

  if (out.ids.size() < budget) {
    std::vector<SampleId> chosen = out.ids;
    std::sort(chosen.begin(), chosen.end());
    std::vector<SampleId> rest;
    std::set_difference(unlabeled.begin(), unlabeled.end(), chosen.begin(), chosen.end(),
                        std::back_inserter(rest));
    const std::size_t remaining = budget - out.ids.size();
    const auto fill = auxiliary == Auxiliary::kRandom
                          ? detail::random_from(rest, remaining, ctx.rng_seed)
                          : detail::lowest_margin_from(model, ctx.store, rest, remaining);
    for (SampleId id : fill) out.add(id, Stage::kAuxiliary);
  }
  return out;
}

/// Scores each sample by its distance to the nearest minority-class centroid
/// minus its distance to the nearest majority-class centroid (frozen
/// embeddings, centroids of the labeled samples) and takes the lowest.
/// Without both a minority and a majority centroid it falls back to random.
inline SelectionResult af_cds_bal(const AcquisitionContext& ctx) {
  if (ctx.pool.labeled_count() == 0) {
    throw Error(ErrorCode::kEmptyLabeledSet, "cds-bal needs a non-empty labeled set");
  }
  const auto& counts = ctx.pool.per_class_counts();
  const MinorityAllocation alloc = minority_allocation(counts, ctx.budget());
  const auto dim = static_cast<Eigen::Index>(ctx.store.dim());
  Matrix centroids = Matrix::Zero(static_cast<Eigen::Index>(counts.size()), dim);
  for (SampleId id : ctx.pool.labeled()) centroids.row(ctx.oracle.label(id)) += ctx.store.row(id);
  std::vector<Eigen::Index> minority;
  std::vector<Eigen::Index> majority;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    centroids.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
    (alloc.minority[c] ? minority : majority).push_back(static_cast<Eigen::Index>(c));
  }

  const auto unlabeled = ctx.pool.unlabeled();
  SelectionResult out;
  if (minority.empty() || majority.empty()) {
    for (SampleId id : detail::random_from(unlabeled, ctx.budget(), ctx.rng_seed)) {
      out.add(id, Stage::kFallbackRandom);
    }
    return out;
  }
  auto nearest = [&](SampleId id, const std::vector<Eigen::Index>& group) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index c : group) best = std::min(best, (ctx.store.row(id) - centroids.row(c)).norm());
    return best;
  };
  std::vector<double> scores;
  scores.reserve(unlabeled.size());
  for (SampleId id : unlabeled) scores.push_back(nearest(id, minority) - nearest(id, majority));
  auto ordered = detail::order_by_key(unlabeled, scores, false);
  ordered.resize(ctx.budget());
  for (SampleId id : ordered) out.add(id, Stage::kCdsBal);
  return out;
}

inline SelectionResult acquire(const AcquisitionSpec& spec, const AcquisitionContext& ctx) {
  switch (spec.kind) {
    case AfKind::kRandom: return af_random(ctx);
    case AfKind::kMargin: return af_margin(ctx);
    case AfKind::kCoreset: return af_coreset(ctx);
    case AfKind::kCdsBal: return af_cds_bal(ctx);
    case AfKind::kMinority: return af_mcs(spec.variant, spec.auxiliary, ctx);
  }
  throw Error(ErrorCode::kUnknownName, "unknown acquisition kind");
}

inline bool needs_model(const AcquisitionSpec& spec) {
  return spec.kind == AfKind::kMargin || spec.kind == AfKind::kMinority;
}

}  // namespace albalance
