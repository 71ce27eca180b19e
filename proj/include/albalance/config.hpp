#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "albalance/acquisition.hpp"
#include "albalance/classifiers.hpp"
#include "albalance/error.hpp"
#include "albalance/runner.hpp"

namespace albalance {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Run configuration files: a TOML subset. `[section]` headers, `key = value`
// lines, `#` comments. Values are double-quoted strings, true/false,
// integers, reals, or single-line arrays of those.

namespace detail {

class TomlLine {
 public:
  TomlLine(std::string_view text, std::size_t line_no) : text_(text), line_no_(line_no) {}

  Json parse_value() {
    skip_space();
    if (pos_ >= text_.size()) fail("missing value");
    const char ch = text_[pos_];
    if (ch == '"') return parse_string();
    if (ch == '[') return parse_array();
    return parse_scalar();
  }

  void expect_end() {
    skip_space();
    if (pos_ != text_.size()) fail("unexpected trailing text '" + std::string(text_.substr(pos_)) + "'");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::kInvalidConfig, "config line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
  }

  Json parse_string() {
    std::string out;
    ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char ch = text_[pos_++];
      if (ch == '\\') {
        if (pos_ >= text_.size()) fail("dangling escape");
        const char esc = text_[pos_++];
        switch (esc) {
          case 'n': ch = '\n'; break;
          case 't': ch = '\t'; break;
          case '"': ch = '"'; break;
          case '\\': ch = '\\'; break;
          default: fail(std::string("unsupported escape \\") + esc);
        }
      }
      out.push_back(ch);
    }
    if (pos_ >= text_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  Json parse_array() {
    Json out = Json::array();
    ++pos_;
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) fail("unterminated array");
      if (text_[pos_] == ']') {
        ++pos_;
        return out;
      }
      if (text_[pos_] == '[') fail("nested arrays are not supported");
      out.push_back(parse_value());
      skip_space();
      if (pos_ < text_.size() && text_[pos_] == ',') ++pos_;
    }
  }

  Json parse_scalar() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ']' && text_[pos_] != ' ' &&
           text_[pos_] != '\t') {
      ++pos_;
    }
    const std::string_view token = text_.substr(start, pos_ - start);
    if (token == "true") return true;
    if (token == "false") return false;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (!token.empty() && token.front() == '+') ++first;
    std::int64_t integer = 0;
    auto [iend, iec] = std::from_chars(first, last, integer);
    if (iec == std::errc{} && iend == last) return integer;
    double real = 0.0;
    auto [dend, dec] = std::from_chars(first, last, real);
    if (dec == std::errc{} && dend == last) return real;
    fail("cannot parse value '" + std::string(token) + "'");
  }

  std::string_view text_;
  std::size_t line_no_;
  std::size_t pos_ = 0;
};

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Parses the TOML subset into a JSON object of section objects.
inline Json parse_config_text(std::istream& in) {
  Json doc = Json::object();
  Json* section = &doc;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    detail::TomlLine parser(line, line_no);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) parser.fail("malformed section header");
      const std::string name = detail::trim(line.substr(1, line.size() - 2));
      if (doc.contains(name)) parser.fail("duplicate section [" + name + "]");
      doc[name] = Json::object();
      section = &doc[name];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) parser.fail("expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) parser.fail("empty key");
    if (section->contains(key)) parser.fail("duplicate key '" + key + "'");
    detail::TomlLine value(std::string_view(line).substr(eq + 1), line_no);
    (*section)[key] = value.parse_value();
    value.expect_end();
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Schema.

namespace detail {

class SchemaReader {
 public:
  explicit SchemaReader(const Json& doc) : doc_(doc) {}

  const Json* section(const std::string& name, bool required) {
    if (!doc_.contains(name)) {
      if (required) problems_.push_back("[" + name + "]: missing section");
      return nullptr;
    }
    const Json& s = doc_[name];
    if (!s.is_object()) {
      problems_.push_back(name + ": expected a section");
      return nullptr;
    }
    return &s;
  }

  template <class T, class Check>
  void read(const Json* section, const std::string& sname, const std::string& key, T& out, Check check,
            const char* expectation) {
    if (!section || !section->contains(key)) return;
    const Json& v = (*section)[key];
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
      if (ok) out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = v.is_string() && check(v.get<std::string>());
      if (ok) out = v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      ok = v.is_number() && check(v.get<double>());
      if (ok) out = v.get<double>();
    } else {
      ok = v.is_number_integer() && v.get<std::int64_t>() >= 0 && check(v.get<std::int64_t>());
      if (ok) out = static_cast<T>(v.get<std::int64_t>());
    }
    if (!ok) problems_.push_back(sname + "." + key + ": expected " + expectation + ", got " + v.dump());
  }

  void read_seeds(const Json* section, std::vector<std::uint64_t>& out) {
    if (!section || !section->contains("seeds")) return;
    const Json& v = (*section)["seeds"];
    std::vector<std::uint64_t> seeds;
    bool ok = v.is_array() && !v.empty();
    if (ok) {
      for (const Json& s : v) {
        if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
          ok = false;
          break;
        }
        seeds.push_back(static_cast<std::uint64_t>(s.get<std::int64_t>()));
      }
    }
    if (ok) {
      out = std::move(seeds);
    } else {
      problems_.push_back("run.seeds: expected a non-empty array of non-negative integers, got " + v.dump());
    }
  }

  void reject_unknown(const Json* section, const std::string& sname, std::initializer_list<std::string_view> keys) {
    if (!section) return;
    for (const auto& [key, value] : section->items()) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        problems_.push_back(sname + "." + key + ": unknown key");
      }
    }
  }

  void reject_unknown_sections(std::initializer_list<std::string_view> names) {
    for (const auto& [key, value] : doc_.items()) {
      if (std::find(names.begin(), names.end(), key) == names.end()) {
        problems_.push_back(value.is_object() ? "[" + key + "]: unknown section"
                                              : key + ": key outside any section");
      }
    }
  }

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  const Json& doc_;
  std::vector<std::string> problems_;
};

inline void read_training(SchemaReader& reader, const Json* section, const std::string& name,
                          TrainConfig& cfg, bool with_hidden) {
  auto positive = [](auto v) { return v > 0; };
  auto non_negative = [](auto v) { return v >= 0; };
  auto fraction = [](double v) { return v > 0.0 && v <= 1.0; };
  auto momentum = [](double v) { return v >= 0.0 && v < 1.0; };
  reader.read(section, name, "epochs", cfg.epochs, positive, "an integer >= 1");
  reader.read(section, name, "learning_rate", cfg.learning_rate, positive, "a real > 0");
  reader.read(section, name, "batch_size", cfg.batch_size, positive, "an integer >= 1");
  reader.read(section, name, "l2", cfg.l2, non_negative, "a real >= 0");
  reader.read(section, name, "plateau_patience", cfg.plateau_patience, positive, "an integer >= 1");
  reader.read(section, name, "lr_decay", cfg.lr_decay, fraction, "a real in (0, 1]");
  reader.read(section, name, "momentum", cfg.momentum, momentum, "a real in [0, 1)");
  if (with_hidden) {
    reader.read(section, name, "hidden_width", cfg.hidden_width, non_negative, "an integer >= 0");
    reader.reject_unknown(section, name,
                          {"epochs", "learning_rate", "batch_size", "l2", "plateau_patience", "lr_decay",
                           "momentum", "hidden_width"});
  } else {
    reader.reject_unknown(section, name,
                          {"epochs", "learning_rate", "batch_size", "l2", "plateau_patience", "lr_decay",
                           "momentum"});
  }
}

}  // namespace detail

/// Validates a parsed config document and fills a RunConfig. Every bad field
/// is reported in one kInvalidConfig error, one per line.
inline RunConfig run_config_from_json(const Json& doc) {
  RunConfig cfg;
  detail::SchemaReader reader(doc);
  if (!doc.is_object()) throw Error(ErrorCode::kInvalidConfig, "config is not a table of sections");
  reader.reject_unknown_sections({"run", "data", "svm", "softmax"});

  const Json* run = reader.section("run", true);
  auto any = [](auto) { return true; };
  auto positive = [](auto v) { return v > 0; };
  reader.read(run, "run", "budget", cfg.budget, positive, "an integer >= 1");
  reader.read(run, "run", "iterations", cfg.iterations, positive, "an integer >= 1");
  auto known_af = [](const std::string& s) {
    const auto& names = acquisition_names();
    return std::find(names.begin(), names.end(), s) != names.end();
  };
  reader.read(run, "run", "acquisition", cfg.acquisition, known_af,
              "one of random, margin, coreset, cds-bal, {cmcs,umcs,dmcs}-{rand,marg}");
  std::string policy(policy_name(cfg.scheme_policy));
  auto known_policy = [](const std::string& s) {
    return s == "cs_svm_only" || s == "softmax_th_only" || s == "auto_switch";
  };
  reader.read(run, "run", "scheme", policy, known_policy, "one of cs_svm_only, softmax_th_only, auto_switch");
  cfg.scheme_policy = parse_policy(policy);
  reader.read_seeds(run, cfg.seeds);
  reader.read(run, "run", "threads", cfg.threads, any, "an integer >= 0");
  reader.reject_unknown(run, "run", {"budget", "iterations", "acquisition", "scheme", "seeds", "threads"});

  const Json* data = reader.section("data", false);
  reader.read(data, "data", "embeddings", cfg.data.embeddings, any, "a path string");
  reader.read(data, "data", "labels", cfg.data.labels, any, "a path string");
  reader.read(data, "data", "test_embeddings", cfg.data.test_embeddings, any, "a path string");
  reader.read(data, "data", "test_labels", cfg.data.test_labels, any, "a path string");
  reader.read(data, "data", "normalize", cfg.normalize, any, "true or false");
  reader.reject_unknown(data, "data", {"embeddings", "labels", "test_embeddings", "test_labels", "normalize"});

  detail::read_training(reader, reader.section("svm", false), "svm", cfg.training.svm, false);
  detail::read_training(reader, reader.section("softmax", false), "softmax", cfg.training.softmax, true);

  if (!reader.problems().empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : reader.problems()) msg += "\n  " + p;
    throw Error(ErrorCode::kInvalidConfig, msg);
  }
  return cfg;
}

inline RunConfig parse_run_config(std::istream& in) { return run_config_from_json(parse_config_text(in)); }

inline Json training_to_json(const TrainConfig& cfg, bool with_hidden) {
  Json j;
  j["epochs"] = cfg.epochs;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["l2"] = cfg.l2;
  j["plateau_patience"] = cfg.plateau_patience;
  j["lr_decay"] = cfg.lr_decay;
  j["momentum"] = cfg.momentum;
  if (with_hidden) j["hidden_width"] = cfg.hidden_width;
  return j;
}

/// Config echo. Thread count is left out: it never changes results.
inline Json to_json(const RunConfig& cfg) {
  Json j;
  j["run"]["budget"] = cfg.budget;
  j["run"]["iterations"] = cfg.iterations;
  j["run"]["acquisition"] = cfg.acquisition;
  j["run"]["scheme"] = policy_name(cfg.scheme_policy);
  j["run"]["seeds"] = cfg.seeds;
  j["data"]["embeddings"] = cfg.data.embeddings;
  j["data"]["labels"] = cfg.data.labels;
  j["data"]["test_embeddings"] = cfg.data.test_embeddings;
  j["data"]["test_labels"] = cfg.data.test_labels;
  j["data"]["normalize"] = cfg.normalize;
  j["svm"] = training_to_json(cfg.training.svm, false);
  j["softmax"] = training_to_json(cfg.training.softmax, true);
  return j;
}

}  // namespace albalance
