#ifndef OULAB_EXPERIMENT_HPP
#define OULAB_EXPERIMENT_HPP

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/version.hpp>

#include "oulab/config.hpp"
#include "oulab/csv.hpp"
#include "oulab/errors.hpp"
#include "oulab/occupation.hpp"
#include "oulab/ou_model.hpp"
#include "oulab/passage.hpp"
#include "oulab/rng.hpp"
#include "oulab/spectral.hpp"

#define OULAB_VERSION "0.1.0"

namespace oulab {

struct Artifact {
  std::string file;
  std::string content;
};

/// Everything an experiment produces, before anything touches the disk.
struct RunOutput {
  Json report = Json::object();
  std::vector<Artifact> artifacts;
  std::vector<std::string> lines;  ///< human-readable summary
};

/// Stream index reserved for drawing random local-time levels.
inline constexpr std::uint64_t level_draw_index = (1ULL << 55);

namespace detail {

inline csv::Metadata run_metadata(const ExperimentConfig& c) {
  return {{"experiment", c.experiment}, {"seed", std::to_string(c.seed)}};
}

template <class T>
Artifact artifact(std::string file, const T& obj, csv::Metadata meta) {
  std::ostringstream os;
  write_csv(os, obj, std::move(meta));
  return {std::move(file), os.str()};
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string moment_word(MomentStatus s) {
  switch (s) {
    case MomentStatus::finite: return "satisfied";
    case MomentStatus::infinite: return "violated";
    default: return "undetermined";
  }
}

inline void run_check(const OuModel& m, RunOutput& out) {
  const auto ex = check_existence_criterion(m);
  const auto lm = log_moment_finite(m.driver().jumps());
  std::string ex_text = "Theorem 3.1";
  if (ex.kind == ExistenceKind::gaussian_case) ex_text += "(a)";
  if (ex.kind == ExistenceKind::jump_case) ex_text += "(b)";
  ex_text += ": " + to_string(ex.kind);
  if (ex.kind == ExistenceKind::jump_case) ex_text += " (alpha=" + fmt(ex.alpha) + ", c=" + fmt(ex.c) + ")";
  const std::string line = ex_text + "; (2.4): " + moment_word(lm.status);
  out.lines.push_back(line);
  out.report["verdict"] = line;
  out.report["existence"] = {{"kind", to_string(ex.kind)}, {"diagnostic", ex.diagnostic}};
  if (ex.kind == ExistenceKind::jump_case || std::isfinite(ex.alpha)) {
    out.report["existence"]["alpha"] = ex.alpha;
    out.report["existence"]["r_squared"] = ex.r_squared;
  }
  if (ex.kind == ExistenceKind::jump_case) out.report["existence"]["c"] = ex.c;
  out.report["log_moment"] = {{"status", to_string(lm.status)}, {"diagnostic", lm.diagnostic}};
  if (lm.finite()) out.report["log_moment"]["value"] = lm.value;
}

inline void run_simulate(const ExperimentConfig& c, const OuModel& m, RunOutput& out) {
  const auto& P = c.params;
  const double dt = P.dt.value_or(default_dt(m));
  const std::uint64_t n = P.paths.value_or(1);
  for (std::uint64_t i = 0; i < n; ++i) {
    RandomStream rng(c.seed, stream_id(StreamPurpose::simulate, i));
    const auto path = simulate_path(m, *P.horizon, dt, rng);
    auto meta = run_metadata(c);
    meta.emplace_back("path", std::to_string(i));
    out.artifacts.push_back(artifact("path_" + std::to_string(i) + ".csv", path, meta));
    out.report["paths"].push_back({{"path", i}, {"final", path.values.back()}, {"jumps", path.jumps.size()}});
  }
  out.lines.push_back("simulated " + std::to_string(n) + " path(s) to t = " + fmt(*P.horizon) + " with dt = " + fmt(dt));
}

inline void run_density(const ExperimentConfig& c, const OuModel& m, RunOutput& out) {
  const auto& P = c.params;
  const auto y = uniform_grid(*P.y_lo, *P.y_hi, *P.y_points);
  const bool inv = *P.law == "invariant";
  const auto plan = inv ? plan_invariant_grid(m, y) : plan_transition_grid(m, *P.t, y);
  const auto thetas = symmetric_theta_grid(plan.cutoff, plan.spacing);
  const auto grid = inv ? invariant_cf(m, thetas) : transition_cf(m, *P.t, thetas);
  const auto d = invert_to_density(grid, y);
  out.artifacts.push_back(artifact("cf.csv", grid, run_metadata(c)));
  out.artifacts.push_back(artifact("density.csv", d, run_metadata(c)));
  out.report["law"] = grid.tag.str();
  out.report["theta_cutoff"] = plan.cutoff;
  out.report["theta_nodes"] = thetas.size();
  out.report["total_mass"] = d.total_mass;
  out.report["max_negativity"] = d.max_negativity;
  out.lines.push_back(grid.tag.str() + " density on " + std::to_string(y.size()) + " points, mass " +
                      fmt(d.total_mass) + ", cutoff " + fmt(plan.cutoff));
}

inline void run_localtime(const ExperimentConfig& c, const OuModel& m, RunOutput& out) {
  const auto& P = c.params;
  const double dt = P.dt.value_or(default_dt(m));
  std::vector<double> levels;
  if (P.levels) {
    levels = *P.levels;
  } else {
    RandomStream rng(c.seed, stream_id(StreamPurpose::local_time, level_draw_index));
    levels = random_levels(m, *P.random_levels, rng);
  }
  std::vector<double> times;
  if (P.times) {
    times = *P.times;
  } else {
    for (int j = 1; j <= 20; ++j) times.push_back(*P.horizon * j / 20.0);
  }
  const auto schedule = P.epsilons ? *P.epsilons : default_schedule(m);
  std::size_t converged = 0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    RandomStream rng(c.seed, stream_id(StreamPurpose::local_time, k));
    const auto path = simulate_path(m, *P.horizon, dt, rng);
    const auto e = local_time_estimate(path, levels[k], times, schedule);
    converged += e.converged;
    auto meta = run_metadata(c);
    meta.emplace_back("path", std::to_string(k));
    out.artifacts.push_back(artifact("localtime_" + std::to_string(k) + ".csv", e, meta));
    out.report["levels"].push_back(
        {{"level", levels[k]}, {"converged", e.converged}, {"diagnostics", e.diagnostics}, {"tolerance", e.tolerance}});
  }
  out.report["converged"] = converged;
  out.lines.push_back("local time at " + std::to_string(levels.size()) + " level(s): " + std::to_string(converged) +
                      " converged");
}

inline void run_ergodic(const ExperimentConfig& c, const OuModel& m, unsigned threads, RunOutput& out) {
  const auto& P = c.params;
  ErgodicOptions opts;
  opts.dt = P.dt.value_or(0.0);
  opts.threads = threads;
  const auto e = ergodic_ratio(m, *P.level, *P.horizons, *P.eps, *P.paths, c.seed, opts);
  out.artifacts.push_back(artifact("ergodic.csv", e, run_metadata(c)));
  out.report["f_ref"] = e.f_ref;
  out.report["horizons"] = e.horizons;
  out.report["ratios"] = e.ratios;
  out.report["stderrs"] = e.stderrs;
  out.lines.push_back("f(" + fmt(e.level) + ") = " + fmt(e.f_ref));
  for (std::size_t j = 0; j < e.horizons.size(); ++j)
    out.lines.push_back("L(x,t)/t at t = " + fmt(e.horizons[j]) + ": " + fmt(e.ratios[j]) + " +/- " + fmt(e.stderrs[j]));
}

inline void run_passage(const ExperimentConfig& c, const OuModel& m, unsigned threads, RunOutput& out) {
  const auto& P = c.params;
  if (P.theta) require_no_positive_jumps(m);
  PassageOptions opts;
  opts.dt = P.dt.value_or(0.0);
  opts.bridge = P.bridge.value_or(true);
  opts.threads = threads;
  const auto r = first_passage_mc(m, *P.level, *P.horizon, *P.paths, c.seed, opts);
  out.artifacts.push_back(artifact("passage.csv", r, run_metadata(c)));
  const auto& s = r.summary;
  Json summary = {{"paths", s.paths},
                  {"uncensored", s.uncensored},
                  {"censoring_rate", s.censoring_rate},
                  {"exact_landings", s.exact_landings}};
  if (s.uncensored >= 100) {
    summary["creep_fraction"] = s.creep_fraction;
    summary["overshoot_quantiles"] = s.overshoot_quantiles;
    out.lines.push_back("creep fraction " + fmt(s.creep_fraction) + ", min overshoot " + fmt(s.min_overshoot()) +
                        ", censoring " + fmt(s.censoring_rate));
  } else {
    summary["note"] = "creep statistics need at least 100 uncensored paths";
    out.lines.push_back("only " + std::to_string(s.uncensored) + " uncensored paths; creep statistics withheld");
  }
  out.report["passage"] = summary;
  if (P.theta) {
    auto t = hadjiev_laplace(m, *P.level, *P.theta);
    attach_monte_carlo(t, r);
    out.artifacts.push_back(artifact("laplace.csv", t, run_metadata(c)));
    out.report["laplace"] = {{"theta", t.theta}, {"value", t.values}, {"mc_value", t.mc_values}, {"mc_stderr", t.mc_stderrs}};
    for (std::size_t i = 0; i < t.theta.size(); ++i)
      out.lines.push_back("E exp(-" + fmt(t.theta[i]) + " T) = " + fmt(t.values[i]) + "; Monte Carlo " +
                          fmt(t.mc_values[i]) + " +/- " + fmt(t.mc_stderrs[i]));
  }
}

}  // namespace detail

/// Runs the experiment in memory. Library errors propagate.
inline RunOutput execute(const ExperimentConfig& c, unsigned threads = 1) {
  const OuModel m = build_model(c.model);
  RunOutput out;
  out.report["experiment"] = c.experiment;
  if (c.experiment == "check") detail::run_check(m, out);
  else if (c.experiment == "simulate") detail::run_simulate(c, m, out);
  else if (c.experiment == "density") detail::run_density(c, m, out);
  else if (c.experiment == "localtime") detail::run_localtime(c, m, out);
  else if (c.experiment == "ergodic") detail::run_ergodic(c, m, threads, out);
  else if (c.experiment == "passage") detail::run_passage(c, m, threads, out);
  else throw ConfigError("unknown experiment '" + c.experiment + "'");
  return out;
}

/// Adds config.json, report.json and manifest.json to the artifacts.
inline void finalize(const ExperimentConfig& c, RunOutput& out) {
  const std::string config_text = to_json(c).dump(2) + "\n";
  out.artifacts.push_back({"config.json", config_text});
  out.artifacts.push_back({"report.json", out.report.dump(2) + "\n"});
  Json manifest;
  manifest["config_hash"] = csv::hex64(csv::fnv1a64(to_json(c).dump()));
  manifest["seed"] = c.seed;
  manifest["experiment"] = c.experiment;
  manifest["hash"] = "fnv1a64";
  manifest["versions"] = {{"oulab", OULAB_VERSION},
                          {"boost", std::to_string(BOOST_VERSION / 100000) + "." +
                                        std::to_string(BOOST_VERSION / 100 % 1000) + "." +
                                        std::to_string(BOOST_VERSION % 100)},
                          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  manifest["artifacts"] = Json::array();
  for (const auto& a : out.artifacts)
    manifest["artifacts"].push_back(
        {{"file", a.file}, {"bytes", a.content.size()}, {"hash", csv::hex64(csv::fnv1a64(a.content))}});
  out.artifacts.push_back({"manifest.json", manifest.dump(2) + "\n"});
}

inline void write_artifacts(const std::filesystem::path& dir, const RunOutput& out) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  for (const auto& a : out.artifacts) {
    std::ofstream f(dir / a.file, std::ios::binary);
    f << a.content;
    if (!f) throw ConfigError("cannot write " + (dir / a.file).string());
  }
}

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_refused = 2, exit_numerical = 3 };

/// Calls body() and maps library errors to exit codes, reporting on err.
template <class Body>
int guarded(Body&& body, std::ostream& err) {
  try {
    body();
    return exit_ok;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const PreconditionError& e) {
    err << "refused: " << e.what() << '\n';
    return exit_refused;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  }
}

/// Runs, writes artifacts under `dir` and maps errors to exit codes.
inline int run(const ExperimentConfig& c, const std::filesystem::path& dir, unsigned threads, std::ostream& out,
               std::ostream& err, bool quiet = false) {
  return guarded(
      [&] {
        auto res = execute(c, threads);
        finalize(c, res);
        write_artifacts(dir, res);
        if (quiet) return;
        for (const auto& l : res.lines) out << l << '\n';
        out << "wrote " << res.artifacts.size() << " files to " << dir.string() << '\n';
      },
      err);
}

}  // namespace oulab

#endif
