#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "albalance/config.hpp"
#include "albalance/dataset.hpp"
#include "albalance/error.hpp"
#include "albalance/imbalance.hpp"
#include "albalance/report.hpp"
#include "albalance/runner.hpp"

namespace albalance::cli {

namespace fs = std::filesystem;

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kInfeasibleTarget:
    case ErrorCode::kTargetUnreachable:
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kMismatchedRecords:
      return 2;
    default:
      return 1;
  }
}

inline void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const fs::path& path) {
  auto in = open_input(path.string(), true);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string format_fixed(double value, int digits) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, digits);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

/// Table-style summary followed by a one-line JSON report.
inline void print_stats(std::ostream& out, const ImbalanceStats& stats) {
  out << "Class  Images  Mean(mu)  Std(sigma)  ir\n";
  out << stats.per_class.size() << "  " << stats.total() << "  " << format_fixed(stats.mean, 2) << "  "
      << format_fixed(stats.stddev, 2) << "  " << format_fixed(stats.ir, 3) << '\n';
  Json j;
  j["classes"] = stats.per_class.size();
  j["images"] = stats.total();
  j["mean"] = stats.mean;
  j["std"] = stats.stddev;
  j["ir"] = stats.ir;
  j["per_class"] = stats.per_class;
  out << j.dump() << '\n';
}

struct InduceArgs {
  std::string embeddings;
  std::string labels;
  double target_ir = 0.0;
  std::size_t min_per_class = 1;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  std::string out_labels;
  std::string out_report;
  std::string out_embeddings;
};

inline int cmd_induce(const InduceArgs& args, std::ostream& out) {
  std::optional<EmbeddingStore> store;
  std::optional<LabelOracle> oracle;
  {
    auto label_in = open_input(args.labels, false);
    LabelList list = read_labels(label_in);
    if (!args.embeddings.empty()) {
      auto emb_in = open_input(args.embeddings, true);
      Matrix vectors = read_alemb(emb_in);
      if (static_cast<std::size_t>(vectors.rows()) != list.labels.size()) {
        throw Error(ErrorCode::kRowCountMismatch, "embeddings and labels disagree on the sample count");
      }
      store.emplace(std::move(vectors));
    }
    oracle.emplace(std::move(list.labels), std::move(list.class_names), std::move(list.sample_names));
  }
  if (oracle->size() == 0) throw Error(ErrorCode::kEmptyDataset, "labels file is empty");

  InductionSpec spec;
  spec.target_ir = args.target_ir;
  spec.min_per_class = args.min_per_class;
  spec.rng_seed = derive_seed(args.seed, "induction");
  spec.max_iters = args.max_iters;
  const auto counts = induce_imbalance(oracle->class_counts(), spec);

  const bool have_embeddings = store.has_value();
  // Without embeddings, prune over a placeholder one-column store.
  if (!have_embeddings) store.emplace(Matrix::Zero(static_cast<Eigen::Index>(oracle->size()), 1));
  const Dataset pruned = prune_dataset(*store, *oracle, counts, derive_seed(args.seed, "prune"));
  const ImbalanceStats stats = imbalance_ratio(pruned.oracle.class_counts());

  std::ostringstream labels_text;
  write_labels(labels_text, pruned.oracle);
  write_text_file(args.out_labels, labels_text.str());
  write_text_file(args.out_report, stats_to_json(stats).dump() + "\n");
  if (!args.out_embeddings.empty()) {
    if (!have_embeddings) throw Error(ErrorCode::kIo, "--out-embeddings needs --embeddings");
    std::ostringstream emb;
    write_alemb(emb, pruned.store.vectors());
    write_text_file(args.out_embeddings, emb.str());
  }
  out << "kept " << stats.total() << " of " << oracle->size() << " samples; ir " << format_fixed(stats.ir, 4)
      << " (target " << format_fixed(args.target_ir, 4) << ")\n";
  return 0;
}

inline int cmd_stats(const std::string& labels_path, bool json_only, std::ostream& out) {
  auto in = open_input(labels_path, false);
  const LabelList list = read_labels(in);
  std::vector<std::size_t> counts(list.class_names.size(), 0);
  for (ClassId c : list.labels) ++counts[c];
  const ImbalanceStats stats = imbalance_ratio(counts);
  if (json_only) {
    out << stats_to_json(stats).dump() << '\n';
  } else {
    print_stats(out, stats);
  }
  return 0;
}

struct RunArgs {
  std::string config;
  std::string out_dir;
  DataPaths data;
};

inline std::string record_file_name(std::size_t index, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "record_%03zu_seed%llu.json", index, static_cast<unsigned long long>(seed));
  return buf;
}

inline int cmd_run(const RunArgs& args, std::ostream& out) {
  RunConfig cfg = [&] {
    auto in = open_input(args.config, false);
    return parse_run_config(in);
  }();
  if (!args.data.embeddings.empty()) cfg.data.embeddings = args.data.embeddings;
  if (!args.data.labels.empty()) cfg.data.labels = args.data.labels;
  if (!args.data.test_embeddings.empty()) cfg.data.test_embeddings = args.data.test_embeddings;
  if (!args.data.test_labels.empty()) cfg.data.test_labels = args.data.test_labels;
  std::vector<std::string> missing;
  if (cfg.data.embeddings.empty()) missing.push_back("data.embeddings");
  if (cfg.data.labels.empty()) missing.push_back("data.labels");
  if (cfg.data.test_embeddings.empty()) missing.push_back("data.test_embeddings");
  if (cfg.data.test_labels.empty()) missing.push_back("data.test_labels");
  if (!missing.empty()) {
    std::string msg = "invalid config:";
    for (const auto& m : missing) msg += "\n  " + m + ": missing (set in [data] or by flag)";
    throw Error(ErrorCode::kInvalidConfig, msg);
  }

  LoadOptions options;
  options.normalize = cfg.normalize;
  const Dataset pool = load_dataset_files(cfg.data.embeddings, cfg.data.labels, options);
  options.known_classes = &pool.oracle.class_names();
  const Dataset test = load_dataset_files(cfg.data.test_embeddings, cfg.data.test_labels, options);

  const auto records = run_experiment(cfg, pool, test);
  const std::string csv = curves_csv(aggregate_runs(records));

  std::vector<fs::path> written;
  try {
    fs::create_directories(args.out_dir);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const fs::path path = fs::path(args.out_dir) / record_file_name(i, records[i].seed);
      written.push_back(path);
      write_text_file(path, to_json(records[i]).dump(2) + "\n");
    }
    const fs::path curves = fs::path(args.out_dir) / "curves.csv";
    written.push_back(curves);
    write_text_file(curves, csv);
  } catch (...) {
    std::error_code ignored;
    for (const auto& p : written) fs::remove(p, ignored);
    throw;
  }
  out << "wrote " << records.size() << " run record(s) and curves.csv to " << args.out_dir << '\n';
  return 0;
}

inline int cmd_curves(const std::string& records_dir, const std::string& out_path, std::ostream& out) {
  std::error_code ec;
  if (!fs::is_directory(records_dir, ec)) throw Error(ErrorCode::kIo, "'" + records_dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(records_dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("record_") && name.ends_with(".json")) {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) throw Error(ErrorCode::kIo, "no run records in '" + records_dir + "'");
  std::sort(files.begin(), files.end());

  std::vector<RunRecord> records;
  std::string config_echo;
  for (const auto& f : files) {
    Json j;
    try {
      j = Json::parse(read_text_file(f));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kIo, "cannot parse '" + f.string() + "': " + e.what());
    }
    records.push_back(run_record_from_json(j));
    const std::string echo = to_json(records.back().config).dump();
    if (config_echo.empty()) {
      config_echo = echo;
    } else if (echo != config_echo) {
      throw Error(ErrorCode::kMismatchedRecords, "'" + f.string() + "' was produced by a different config");
    }
  }
  const std::string csv = curves_csv(aggregate_runs(records));
  const fs::path target = out_path.empty() ? fs::path(records_dir) / "curves.csv" : fs::path(out_path);
  write_text_file(target, csv);
  out << "wrote " << target.string() << " from " << records.size() << " record(s)\n";
  return 0;
}

/// Entry point shared by the albalance binary and the tests. `args` excludes
/// the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Active learning simulation on imbalanced pools of precomputed embeddings", "albalance"};
  app.require_subcommand(1, 1);

  InduceArgs induce_args;
  auto* induce = app.add_subcommand("induce", "Prune a labeled dataset to a target imbalance ratio");
  induce->add_option("--embeddings", induce_args.embeddings, "ALEMB1 embedding file (optional)");
  induce->add_option("--labels", induce_args.labels, "sample,class label file")->required();
  induce->add_option("--target-ir", induce_args.target_ir, "target imbalance ratio (std/mean)")->required();
  induce->add_option("--min-per-class", induce_args.min_per_class, "per-class floor")->capture_default_str();
  induce->add_option("--seed", induce_args.seed, "random seed")->capture_default_str();
  induce->add_option("--max-iters", induce_args.max_iters, "bisection steps")->capture_default_str();
  induce->add_option("--out-labels", induce_args.out_labels, "pruned label file")->required();
  induce->add_option("--out-report", induce_args.out_report, "imbalance statistics JSON")->required();
  induce->add_option("--out-embeddings", induce_args.out_embeddings, "pruned ALEMB1 file");

  std::string stats_labels;
  bool stats_json = false;
  auto* stats = app.add_subcommand("stats", "Class count statistics of a label file");
  stats->add_option("--labels", stats_labels, "sample,class label file")->required();
  stats->add_flag("--json", stats_json, "print only the JSON report");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run an active-learning experiment from a config file");
  run->add_option("--config", run_args.config, "run config (TOML subset)")->required();
  run->add_option("--out", run_args.out_dir, "output directory")->required();
  run->add_option("--embeddings", run_args.data.embeddings, "pool embeddings (overrides config)");
  run->add_option("--labels", run_args.data.labels, "pool labels (overrides config)");
  run->add_option("--test-embeddings", run_args.data.test_embeddings, "test embeddings (overrides config)");
  run->add_option("--test-labels", run_args.data.test_labels, "test labels (overrides config)");

  std::string records_dir;
  std::string curves_out;
  auto* curves = app.add_subcommand("curves", "Rebuild the aggregate curves CSV from run records");
  curves->add_option("--records", records_dir, "directory of record_*.json files")->required();
  curves->add_option("--out", curves_out, "output CSV (default: <records>/curves.csv)");

  std::vector<std::string> argv_storage{"albalance"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*induce) return cmd_induce(induce_args, out);
    if (*stats) return cmd_stats(stats_labels, stats_json, out);
    if (*run) return cmd_run(run_args, out);
    if (*curves) return cmd_curves(records_dir, curves_out, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace albalance::cli
