#ifndef OULAB_CONFIG_HPP
#define OULAB_CONFIG_HPP

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "oulab/errors.hpp"
#include "oulab/levy.hpp"
#include "oulab/ou_model.hpp"

// Experiment configuration: a JSON document with a mandatory seed, a model
// block and an experiment block. Errors name the file and line of the
// offending value.

namespace oulab {

using Json = nlohmann::json;

struct JumpsConfig {
  std::string kind = "none";  ///< none | compound_poisson | stable | power_density | log_power_density
  std::string law;            ///< compound Poisson only: fixed | exponential | normal | uniform
  std::string support_sign;   ///< empty: derived from the parameters
  std::map<std::string, double> params;

  bool operator==(const JumpsConfig&) const = default;
};

struct ModelConfig {
  double mean_reversion = 1.0;
  double start = 0.0;
  double drift = 0.0;
  double sigma = 0.0;
  JumpsConfig jumps;

  bool operator==(const ModelConfig&) const = default;
};

/// Parameters of every experiment kind; each kind accepts a subset.
struct ExperimentParams {
  std::optional<double> horizon, dt, t, level, eps, y_lo, y_hi;
  std::optional<std::uint64_t> paths, y_points, random_levels;
  std::optional<std::vector<double>> levels, times, epsilons, theta, horizons;
  std::optional<std::string> law;
  std::optional<bool> bridge;

  bool operator==(const ExperimentParams&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  std::string experiment;
  ExperimentParams params;
  std::string output = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"simulate", "density", "localtime", "ergodic", "passage", "check"};
  return k;
}

namespace detail {

// Line of every value in a JSON text, keyed by JSON pointer. Only called on
// text nlohmann has already accepted, so the scanner can be forgiving.
class JsonLines {
 public:
  explicit JsonLines(const std::string& text) : s_(text) {
    skip();
    value("");
  }

  int line(const std::string& pointer) const {
    // fall back to the nearest enclosing value
    std::string p = pointer;
    for (;;) {
      if (auto it = lines_.find(p); it != lines_.end()) return it->second;
      if (p.empty()) return 0;
      p.erase(p.rfind('/'));
    }
  }

 private:
  void skip() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) {
      if (s_[i_] == '\n') ++line_;
      ++i_;
    }
  }

  std::string string() {
    std::string out;
    ++i_;
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\') {
        out += s_[i_ + 1] == '/' ? '/' : s_[i_ + 1];
        i_ += 2;
        continue;
      }
      out += s_[i_++];
    }
    ++i_;
    return out;
  }

  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) out += c == '~' ? "~0" : c == '/' ? "~1" : std::string(1, c);
    return out;
  }

  void value(const std::string& path) {
    lines_[path] = line_;
    if (i_ >= s_.size()) return;
    const char c = s_[i_];
    if (c == '{') {
      ++i_;
      skip();
      while (i_ < s_.size() && s_[i_] != '}') {
        const std::string key = string();
        skip();
        ++i_;  // ':'
        skip();
        value(path + "/" + escape(key));
        skip();
        if (s_[i_] == ',') ++i_;
        skip();
      }
      ++i_;
    } else if (c == '[') {
      ++i_;
      skip();
      for (std::size_t k = 0; i_ < s_.size() && s_[i_] != ']'; ++k) {
        value(path + "/" + std::to_string(k));
        skip();
        if (s_[i_] == ',') ++i_;
        skip();
      }
      ++i_;
    } else if (c == '"') {
      string();
    } else {
      while (i_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[i_])) && s_[i_] != ',' && s_[i_] != '}' &&
             s_[i_] != ']')
        ++i_;
    }
  }

  const std::string& s_;
  std::size_t i_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

class ConfigReader {
 public:
  ConfigReader(const std::string& text, std::string source) : lines_(text), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& pointer, const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(lines_.line(pointer)) + ": " +
                      (pointer.empty() ? std::string("/") : pointer) + ": " + msg);
  }

  const Json& member(const Json& obj, const std::string& ptr, const char* key) const {
    if (!obj.contains(key)) fail(ptr, std::string("missing required key '") + key + "'");
    return obj.at(key);
  }

  void only_keys(const Json& obj, const std::string& ptr, const std::set<std::string>& allowed) const {
    if (!obj.is_object()) fail(ptr, "expected an object");
    for (const auto& [k, v] : obj.items())
      if (!allowed.count(k)) fail(ptr + "/" + k, "unknown key '" + k + "'");
  }

  double number(const Json& v, const std::string& ptr) const {
    if (!v.is_number()) fail(ptr, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(ptr, "expected a finite number");
    return d;
  }

  double positive(const Json& v, const std::string& ptr) const {
    const double d = number(v, ptr);
    if (!(d > 0.0)) fail(ptr, "must be positive");
    return d;
  }

  std::uint64_t count(const Json& v, const std::string& ptr) const {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      fail(ptr, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string text(const Json& v, const std::string& ptr) const {
    if (!v.is_string()) fail(ptr, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const Json& v, const std::string& ptr) const {
    if (!v.is_array() || v.empty()) fail(ptr, "expected a non-empty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], ptr + "/" + std::to_string(i)));
    return out;
  }

 private:
  JsonLines lines_;
  std::string source_;
};

inline const std::map<std::string, std::set<std::string>>& experiment_keys() {
  static const std::map<std::string, std::set<std::string>> k{
      {"simulate", {"horizon", "dt", "paths"}},
      {"density", {"law", "t", "y_lo", "y_hi", "y_points"}},
      {"localtime", {"horizon", "dt", "levels", "random_levels", "times", "epsilons"}},
      {"ergodic", {"level", "horizons", "eps", "paths", "dt"}},
      {"passage", {"level", "horizon", "paths", "dt", "bridge", "theta"}},
      {"check", {}},
  };
  return k;
}

inline const std::map<std::string, std::set<std::string>>& jump_param_keys() {
  static const std::map<std::string, std::set<std::string>> k{
      {"none", {}},
      {"compound_poisson:fixed", {"rate", "value"}},
      {"compound_poisson:exponential", {"rate", "law_rate"}},
      {"compound_poisson:normal", {"rate", "mean", "sd"}},
      {"compound_poisson:uniform", {"rate", "lower", "upper"}},
      {"stable", {"index", "scale", "skew"}},
      {"power_density", {"coefficient", "exponent", "lower", "upper"}},
      {"log_power_density", {"coefficient", "log_exponent", "lower"}},
  };
  return k;
}

inline std::optional<SupportSign> parse_sign(const std::string& s) {
  if (s == "two_sided") return SupportSign::two_sided;
  if (s == "positive_only") return SupportSign::positive_only;
  if (s == "negative_only") return SupportSign::negative_only;
  return std::nullopt;
}

}  // namespace detail

/// Builds the jump measure; throws ConfigError with a plain message.
inline JumpMeasure build_jumps(const JumpsConfig& j) {
  auto p = [&](const char* key) {
    auto it = j.params.find(key);
    if (it == j.params.end()) throw ConfigError(std::string("jumps: missing parameter '") + key + "'");
    return it->second;
  };
  auto opt = [&](const char* key, double fallback) {
    auto it = j.params.find(key);
    return it == j.params.end() ? fallback : it->second;
  };
  std::optional<SupportSign> sign;
  if (!j.support_sign.empty()) {
    sign = detail::parse_sign(j.support_sign);
    if (!sign) throw ConfigError("jumps: support_sign must be two_sided, positive_only or negative_only");
  }
  JumpMeasure m;
  if (j.kind == "none") {
    return m;
  } else if (j.kind == "compound_poisson") {
    JumpLaw law;
    if (j.law == "fixed") law = FixedJump{p("value")};
    else if (j.law == "exponential") law = ExponentialJump{p("law_rate"), sign.value_or(SupportSign::positive_only)};
    else if (j.law == "normal") law = NormalJump{p("mean"), p("sd")};
    else if (j.law == "uniform") law = UniformJump{p("lower"), p("upper")};
    else throw ConfigError("jumps: law must be fixed, exponential, normal or uniform");
    m = JumpMeasure::compound_poisson(p("rate"), law);
  } else if (j.kind == "stable") {
    m = JumpMeasure::stable(p("index"), p("scale"), p("skew"));
  } else if (j.kind == "power_density") {
    m = JumpMeasure::power_density(p("coefficient"), p("exponent"), sign.value_or(SupportSign::two_sided),
                                   opt("lower", 0.0), opt("upper", infinity));
  } else if (j.kind == "log_power_density") {
    m = JumpMeasure::log_power_density(p("coefficient"), p("log_exponent"), sign.value_or(SupportSign::two_sided),
                                       opt("lower", std::numbers::e));
  } else {
    throw ConfigError("jumps: unknown kind '" + j.kind + "'");
  }
  if (sign && m.support_sign() != *sign)
    throw ConfigError("jumps: support_sign " + j.support_sign + " contradicts the parameters (which give " +
                      to_string(m.support_sign()) + ")");
  return m;
}

inline OuModel build_model(const ModelConfig& c) {
  const auto jumps = build_jumps(c.jumps);
  const LevyTriplet driver =
      (c.drift == 0.0 && c.sigma == 0.0 && jumps.is_none()) ? LevyTriplet::zero() : LevyTriplet(c.drift, c.sigma, jumps);
  return OuModel(c.mean_reversion, c.start, driver);
}

/// Parses and validates a config. `source` names the file in messages.
inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "config") {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    int line = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) line += text[i] == '\n';
    std::string what = e.what();
    if (auto k = what.find("parse error"); k != std::string::npos) what = what.substr(k);
    throw ConfigError(source + ":" + std::to_string(line) + ": " + what);
  }
  const detail::ConfigReader r(text, source);
  r.only_keys(doc, "", {"seed", "model", "experiment", "output"});
  ExperimentConfig c;
  c.seed = r.count(r.member(doc, "", "seed"), "/seed");
  if (doc.contains("output")) c.output = r.text(doc["output"], "/output");

  const Json& model = r.member(doc, "", "model");
  r.only_keys(model, "/model", {"mean_reversion", "start", "drift", "sigma", "jumps"});
  c.model.mean_reversion = r.positive(r.member(model, "/model", "mean_reversion"), "/model/mean_reversion");
  if (model.contains("start")) c.model.start = r.number(model["start"], "/model/start");
  if (model.contains("drift")) c.model.drift = r.number(model["drift"], "/model/drift");
  if (model.contains("sigma")) {
    c.model.sigma = r.number(model["sigma"], "/model/sigma");
    if (c.model.sigma < 0.0) r.fail("/model/sigma", "must be non-negative");
  }
  if (model.contains("jumps")) {
    const Json& j = model["jumps"];
    r.only_keys(j, "/model/jumps", {"kind", "law", "support_sign", "params"});
    c.model.jumps.kind = r.text(r.member(j, "/model/jumps", "kind"), "/model/jumps/kind");
    if (j.contains("law")) c.model.jumps.law = r.text(j["law"], "/model/jumps/law");
    if (j.contains("support_sign")) c.model.jumps.support_sign = r.text(j["support_sign"], "/model/jumps/support_sign");
    std::string key = c.model.jumps.kind;
    if (key == "compound_poisson") key += ":" + c.model.jumps.law;
    else if (j.contains("law")) r.fail("/model/jumps/law", "only compound_poisson jumps take a law");
    const auto& keys = detail::jump_param_keys();
    if (!keys.count(key)) {
      if (c.model.jumps.kind == "compound_poisson") r.fail("/model/jumps/law", "unknown or missing jump law");
      r.fail("/model/jumps/kind", "unknown jump kind '" + c.model.jumps.kind + "'");
    }
    if (j.contains("params")) {
      r.only_keys(j["params"], "/model/jumps/params", keys.at(key));
      for (const auto& [k, v] : j["params"].items()) c.model.jumps.params[k] = r.number(v, "/model/jumps/params/" + k);
    }
  }
  try {
    build_model(c.model);
  } catch (const ConfigError& e) {
    r.fail(model.contains("jumps") ? "/model/jumps" : "/model", e.what());
  }

  const Json& ex = r.member(doc, "", "experiment");
  if (!ex.is_object()) r.fail("/experiment", "expected an object");
  c.experiment = r.text(r.member(ex, "/experiment", "kind"), "/experiment/kind");
  const auto& ek = detail::experiment_keys();
  if (!ek.count(c.experiment)) r.fail("/experiment/kind", "unknown experiment '" + c.experiment + "'");
  auto allowed = ek.at(c.experiment);
  allowed.insert("kind");
  r.only_keys(ex, "/experiment", allowed);
  auto& P = c.params;
  auto ptr = [](const char* k) { return std::string("/experiment/") + k; };
  if (ex.contains("horizon")) P.horizon = r.positive(ex["horizon"], ptr("horizon"));
  if (ex.contains("dt")) P.dt = r.positive(ex["dt"], ptr("dt"));
  if (ex.contains("t")) P.t = r.positive(ex["t"], ptr("t"));
  if (ex.contains("level")) P.level = r.number(ex["level"], ptr("level"));
  if (ex.contains("eps")) P.eps = r.positive(ex["eps"], ptr("eps"));
  if (ex.contains("y_lo")) P.y_lo = r.number(ex["y_lo"], ptr("y_lo"));
  if (ex.contains("y_hi")) P.y_hi = r.number(ex["y_hi"], ptr("y_hi"));
  for (auto [key, field] : {std::pair{"paths", &P.paths}, std::pair{"y_points", &P.y_points},
                            std::pair{"random_levels", &P.random_levels}}) {
    if (!ex.contains(key)) continue;
    *field = r.count(ex[key], ptr(key));
    if (**field == 0) r.fail(ptr(key), "must be positive");
  }
  for (auto [key, field] : {std::pair{"levels", &P.levels}, std::pair{"times", &P.times},
                            std::pair{"epsilons", &P.epsilons}, std::pair{"theta", &P.theta},
                            std::pair{"horizons", &P.horizons}})
    if (ex.contains(key)) *field = r.numbers(ex[key], ptr(key));
  if (ex.contains("law")) {
    P.law = r.text(ex["law"], ptr("law"));
    if (*P.law != "transition" && *P.law != "invariant") r.fail(ptr("law"), "must be transition or invariant");
  }
  if (ex.contains("bridge")) {
    if (!ex["bridge"].is_boolean()) r.fail(ptr("bridge"), "expected true or false");
    P.bridge = ex["bridge"].get<bool>();
  }

  // cross-field checks
  const auto& m = c.model;
  if (c.experiment == "density") {
    if (!P.law) r.fail("/experiment", "density needs 'law'");
    if (*P.law == "transition" && !P.t) r.fail("/experiment", "transition density needs 't'");
    if (*P.law == "invariant" && P.t) r.fail(ptr("t"), "invariant density takes no 't'");
    if (!P.y_lo || !P.y_hi || !P.y_points) r.fail("/experiment", "density needs y_lo, y_hi and y_points");
    if (!(*P.y_hi > *P.y_lo)) r.fail(ptr("y_hi"), "must exceed y_lo");
    if (*P.y_points < 2) r.fail(ptr("y_points"), "need at least two points");
  }
  if (c.experiment == "simulate" && !P.horizon) r.fail("/experiment", "simulate needs 'horizon'");
  if (c.experiment == "localtime") {
    if (!P.horizon) r.fail("/experiment", "localtime needs 'horizon'");
    if (P.levels.has_value() == P.random_levels.has_value())
      r.fail("/experiment", "localtime needs exactly one of 'levels' and 'random_levels'");
    if (P.times)
      for (std::size_t i = 0; i < P.times->size(); ++i)
        if (!((*P.times)[i] > 0.0 && (*P.times)[i] <= *P.horizon))
          r.fail(ptr("times") + "/" + std::to_string(i), "times must lie in (0, horizon]");
    if (P.epsilons)
      for (std::size_t i = 0; i < P.epsilons->size(); ++i)
        if (!((*P.epsilons)[i] > 0.0) || (i && !((*P.epsilons)[i] < (*P.epsilons)[i - 1])))
          r.fail(ptr("epsilons") + "/" + std::to_string(i), "epsilons must be positive and decreasing");
  }
  if (c.experiment == "ergodic") {
    if (!P.level || !P.horizons || !P.eps || !P.paths) r.fail("/experiment", "ergodic needs level, horizons, eps and paths");
    for (std::size_t i = 0; i < P.horizons->size(); ++i)
      if (!((*P.horizons)[i] > 0.0) || (i && !((*P.horizons)[i] > (*P.horizons)[i - 1])))
        r.fail(ptr("horizons") + "/" + std::to_string(i), "horizons must be positive and increasing");
  }
  if (c.experiment == "passage") {
    if (!P.level || !P.horizon || !P.paths) r.fail("/experiment", "passage needs level, horizon and paths");
    if (!(*P.level > m.start)) r.fail(ptr("level"), "level must exceed model.start");
    if (P.theta)
      for (std::size_t i = 0; i < P.theta->size(); ++i)
        if (!((*P.theta)[i] > 0.0)) r.fail(ptr("theta") + "/" + std::to_string(i), "theta values must be positive");
  }
  return c;
}

/// Canonical JSON form; parse_config(to_json(c).dump()) == c.
inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["output"] = c.output;
  Json& m = j["model"];
  m["mean_reversion"] = c.model.mean_reversion;
  m["start"] = c.model.start;
  m["drift"] = c.model.drift;
  m["sigma"] = c.model.sigma;
  Json& jumps = m["jumps"];
  jumps["kind"] = c.model.jumps.kind;
  if (!c.model.jumps.law.empty()) jumps["law"] = c.model.jumps.law;
  if (!c.model.jumps.support_sign.empty()) jumps["support_sign"] = c.model.jumps.support_sign;
  jumps["params"] = Json::object();
  for (const auto& [k, v] : c.model.jumps.params) jumps["params"][k] = v;
  Json& e = j["experiment"];
  e["kind"] = c.experiment;
  const auto& P = c.params;
  auto put = [&](const char* k, const auto& v) {
    if (v) e[k] = *v;
  };
  put("horizon", P.horizon);
  put("dt", P.dt);
  put("t", P.t);
  put("level", P.level);
  put("eps", P.eps);
  put("y_lo", P.y_lo);
  put("y_hi", P.y_hi);
  put("paths", P.paths);
  put("y_points", P.y_points);
  put("random_levels", P.random_levels);
  put("levels", P.levels);
  put("times", P.times);
  put("epsilons", P.epsilons);
  put("theta", P.theta);
  put("horizons", P.horizons);
  put("law", P.law);
  put("bridge", P.bridge);
  return j;
}

}  // namespace oulab

#endif
