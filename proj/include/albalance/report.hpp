#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "albalance/config.hpp"
#include "albalance/error.hpp"
#include "albalance/imbalance.hpp"
#include "albalance/runner.hpp"

namespace albalance {

/// Fixed-point with 6 decimals, independent of the C locale.
inline std::string format_fixed6(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, 6);
  if (ec != std::errc{}) throw Error(ErrorCode::kIo, "cannot format value");
  std::string out(buf, end);
  if (out == "-0.000000") out = "0.000000";
  return out;
}

inline Json stats_to_json(const ImbalanceStats& stats) {
  Json j;
  j["per_class"] = stats.per_class;
  j["mean"] = stats.mean;
  j["std"] = stats.stddev;
  j["ir"] = stats.ir;
  return j;
}

inline Json to_json(const IterationRecord& it) {
  Json j;
  j["iteration"] = it.iteration;
  j["batch_size"] = it.batch_size;
  j["labeled_count"] = it.labeled_count;
  j["accuracy"] = it.accuracy;
  j["ir"] = it.ir;
  j["scheme"] = scheme_name(it.scheme);
  j["cv_svm"] = it.cv_svm ? Json(*it.cv_svm) : Json(nullptr);
  j["cv_softmax"] = it.cv_softmax ? Json(*it.cv_softmax) : Json(nullptr);
  j["switched"] = it.switched;
  j["model_trained"] = it.model_trained;
  j["picks"]["minority"] = it.minority_picks;
  j["picks"]["auxiliary"] = it.auxiliary_picks;
  j["picks"]["fallback"] = it.fallback_picks;
  j["per_class_counts"] = it.per_class_counts;
  return j;
}

inline Json to_json(const RunRecord& record) {
  Json j;
  j["seed"] = record.seed;
  j["config"] = to_json(record.config);
  j["metadata"]["normalized"] = record.metadata.normalized;
  j["metadata"]["class_names"] = record.metadata.class_names;
  j["metadata"]["deviations"] = record.metadata.deviations;
  j["metadata"]["warnings"] = record.metadata.warnings;
  j["iterations"] = Json::array();
  for (const auto& it : record.iterations) j["iterations"].push_back(to_json(it));
  return j;
}

inline IterationRecord iteration_from_json(const Json& j) {
  IterationRecord it;
  it.iteration = j.at("iteration").get<std::size_t>();
  it.batch_size = j.at("batch_size").get<std::size_t>();
  it.labeled_count = j.at("labeled_count").get<std::size_t>();
  it.accuracy = j.at("accuracy").get<double>();
  it.ir = j.at("ir").get<double>();
  it.scheme = parse_scheme(j.at("scheme").get<std::string>());
  if (!j.at("cv_svm").is_null()) it.cv_svm = j.at("cv_svm").get<double>();
  if (!j.at("cv_softmax").is_null()) it.cv_softmax = j.at("cv_softmax").get<double>();
  it.switched = j.at("switched").get<bool>();
  it.model_trained = j.at("model_trained").get<bool>();
  it.minority_picks = j.at("picks").at("minority").get<std::size_t>();
  it.auxiliary_picks = j.at("picks").at("auxiliary").get<std::size_t>();
  it.fallback_picks = j.at("picks").at("fallback").get<std::size_t>();
  it.per_class_counts = j.at("per_class_counts").get<std::vector<std::size_t>>();
  return it;
}

inline RunRecord run_record_from_json(const Json& j) {
  try {
    RunRecord record;
    record.seed = j.at("seed").get<std::uint64_t>();
    record.config = run_config_from_json(j.at("config"));
    const Json& meta = j.at("metadata");
    record.metadata.normalized = meta.at("normalized").get<bool>();
    record.metadata.class_names = meta.at("class_names").get<std::vector<std::string>>();
    record.metadata.deviations = meta.at("deviations").get<std::vector<std::string>>();
    record.metadata.warnings = meta.at("warnings").get<std::vector<std::string>>();
    for (const Json& it : j.at("iterations")) record.iterations.push_back(iteration_from_json(it));
    return record;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kMismatchedRecords, std::string("malformed run record: ") + e.what());
  }
}

inline constexpr const char* kCurvesHeader = "iteration,labeled_count,acc_mean,acc_std,ir_mean,ir_std,scheme";

inline std::string curves_csv(const std::vector<AggregatePoint>& points) {
  std::string out = kCurvesHeader;
  out += '\n';
  for (const auto& p : points) {
    out += std::to_string(p.iteration) + ',' + std::to_string(p.labeled_count) + ',' + format_fixed6(p.acc_mean) +
           ',' + format_fixed6(p.acc_std) + ',' + format_fixed6(p.ir_mean) + ',' + format_fixed6(p.ir_std) + ',' +
           p.scheme + '\n';
  }
  return out;
}

}  // namespace albalance
