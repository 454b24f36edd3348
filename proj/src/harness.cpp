#include "bayesdet/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "bayesdet/errors.hpp"
#include "bayesdet/metrics.hpp"

namespace bayesdet {

namespace {

std::string case_name(CaseKind k) { return k == CaseKind::crack ? "crack" : "corrosion"; }
std::string reference_name(ReferenceKind k) { return k == ReferenceKind::rejection ? "rejection" : "kalman"; }
std::string policy_name(ExecutionPolicy p) { return p == ExecutionPolicy::serial ? "serial" : "parallel"; }

CaseKind case_from(const std::string& s) {
  if (s == "crack") return CaseKind::crack;
  if (s == "corrosion") return CaseKind::corrosion;
  throw ConfigError("unknown case '" + s + "'");
}

ReferenceKind reference_from(const std::string& s) {
  if (s == "rejection") return ReferenceKind::rejection;
  if (s == "kalman") return ReferenceKind::kalman;
  throw ConfigError("unknown reference '" + s + "'");
}

ExecutionPolicy policy_from(const std::string& s) {
  if (s == "serial") return ExecutionPolicy::serial;
  if (s == "parallel") return ExecutionPolicy::parallel;
  throw ConfigError("unknown policy '" + s + "'");
}

std::size_t series_length(const CaseConfig& c) {
  return c.kind == CaseKind::crack ? kCrackSteps : kCorrosionYears;
}

Eigen::MatrixXd correlation_from_covariance(const Eigen::MatrixXd& cov) {
  const Eigen::VectorXd inv = cov.diagonal().cwiseSqrt().cwiseInverse();
  return inv.asDiagonal() * cov * inv.asDiagonal();
}

MeasurementSeries prefix(const MeasurementSeries& data, std::size_t k) {
  return MeasurementSeries(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(k));
}

double empirical_quantile(std::vector<double> values, double p) {
  const std::vector<double> lw(values.size(), -std::log(static_cast<double>(values.size())));
  return weighted_quantile(values, lw, p);
}

using MetricRow = std::vector<std::pair<std::string, double>>;

MetricRow step_metrics(const StepRecord& est, const ReferencePosterior& ref,
                       const std::vector<std::string>& names) {
  MetricRow row;
  row.emplace_back("mean_l2", l2_rel_error_norm(ref.mean, est.mean));
  row.emplace_back("std_l2", l2_rel_error_norm(ref.std, est.std));
  if (ref.correlation.rows() >= 2 && strict_lower_triangle(ref.correlation).squaredNorm() > 0.0) {
    row.emplace_back("corr_l2", correlation_error_norm(ref.correlation, est.correlation));
  }
  for (Eigen::Index i = 0; i < ref.mean.size(); ++i) {
    const auto& name = names[static_cast<std::size_t>(i)];
    if (ref.mean(i) != 0.0) row.emplace_back("mean_rel:" + name, relative_error(ref.mean(i), est.mean(i)));
    if (ref.std(i) != 0.0) row.emplace_back("std_rel:" + name, relative_error(ref.std(i), est.std(i)));
  }
  return row;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  filter_config.validate();
  if (problem.kind == CaseKind::corrosion) {
    if (problem.n_elements < 1) throw ConfigError("n_elements must be at least 1");
    if (problem.n_sensors != 2 && problem.n_sensors != 4 && problem.n_sensors != 10) {
      throw ConfigError("n_sensors must be 2, 4 or 10");
    }
    if (reference.kind != ReferenceKind::kalman) throw ConfigError("the corrosion case uses the kalman reference");
    if (problem.kl_modes < 1 || problem.kl_modes > problem.kl_nodes) {
      throw ConfigError("kl_modes must lie in [1, kl_nodes]");
    }
  } else if (reference.kind != ReferenceKind::rejection) {
    throw ConfigError("the crack case uses the rejection reference");
  }
  const std::size_t length = series_length(problem);
  auto check_steps = [length](const std::vector<std::size_t>& steps, const char* what) {
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i] < 1 || steps[i] > length || (i > 0 && steps[i] <= steps[i - 1])) {
        throw ConfigError(std::string(what) + " must be strictly increasing within [1, " +
                          std::to_string(length) + "]");
      }
    }
  };
  check_steps(smc_steps, "smc_steps");
  check_steps(reference.smc_steps, "reference.smc_steps");
  if (!smc_steps.empty() && filter != Algorithm::smc) throw ConfigError("smc_steps requires the smc filter");
  if (reference.kind == ReferenceKind::rejection &&
      (reference.k_max < 1 || reference.k_max > length || reference.n_samples < 1)) {
    throw ConfigError("rejection reference needs 1 <= k_max <= series length and n_samples >= 1");
  }
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["case"] = {{"kind", case_name(c.problem.kind)},
               {"n_elements", c.problem.n_elements},
               {"n_sensors", c.problem.n_sensors},
               {"truth_seed", c.problem.truth_seed},
               {"kl_modes", c.problem.kl_modes},
               {"kl_nodes", c.problem.kl_nodes}};
  j["filter"] = std::string(to_string(c.filter));
  const auto& f = c.filter_config;
  j["filter_config"] = {{"n_particles", f.n_particles},
                        {"resample_fraction", f.resample_fraction},
                        {"n_gm", f.n_gm},
                        {"burn_in", f.burn_in},
                        {"policy", policy_name(f.policy)},
                        {"em",
                         {{"regularization", f.em.regularization},
                          {"relative_tolerance", f.em.relative_tolerance},
                          {"max_iterations", f.em.max_iterations}}}};
  j["repetitions"] = c.repetitions;
  j["reference"] = {{"kind", reference_name(c.reference.kind)},
                    {"k_max", c.reference.k_max},
                    {"n_samples", c.reference.n_samples},
                    {"seed", c.reference.seed},
                    {"smc_steps", c.reference.smc_steps},
                    {"smc_particles", c.reference.smc_particles}};
  j["output_dir"] = c.output_dir;
  j["base_seed"] = c.base_seed;
  j["smc_steps"] = c.smc_steps;
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (j.contains("case")) {
      const auto& p = j.at("case");
      c.problem.kind = case_from(p.value("kind", case_name(c.problem.kind)));
      c.problem.n_elements = p.value("n_elements", c.problem.n_elements);
      c.problem.n_sensors = p.value("n_sensors", c.problem.n_sensors);
      c.problem.truth_seed = p.value("truth_seed", c.problem.truth_seed);
      c.problem.kl_modes = p.value("kl_modes", c.problem.kl_modes);
      c.problem.kl_nodes = p.value("kl_nodes", c.problem.kl_nodes);
    }
    if (j.contains("filter")) c.filter = algorithm_from_string(j.at("filter").get<std::string>());
    if (j.contains("filter_config")) {
      const auto& f = j.at("filter_config");
      auto& fc = c.filter_config;
      fc.n_particles = f.value("n_particles", fc.n_particles);
      fc.resample_fraction = f.value("resample_fraction", fc.resample_fraction);
      fc.n_gm = f.value("n_gm", fc.n_gm);
      fc.burn_in = f.value("burn_in", fc.burn_in);
      fc.policy = policy_from(f.value("policy", policy_name(fc.policy)));
      if (f.contains("em")) {
        const auto& e = f.at("em");
        fc.em.regularization = e.value("regularization", fc.em.regularization);
        fc.em.relative_tolerance = e.value("relative_tolerance", fc.em.relative_tolerance);
        fc.em.max_iterations = e.value("max_iterations", fc.em.max_iterations);
      }
    }
    c.repetitions = j.value("repetitions", c.repetitions);
    if (j.contains("reference")) {
      const auto& r = j.at("reference");
      c.reference.kind = reference_from(r.value("kind", reference_name(c.reference.kind)));
      c.reference.k_max = r.value("k_max", c.reference.k_max);
      c.reference.n_samples = r.value("n_samples", c.reference.n_samples);
      c.reference.seed = r.value("seed", c.reference.seed);
      c.reference.smc_steps = r.value("smc_steps", c.reference.smc_steps);
      c.reference.smc_particles = r.value("smc_particles", c.reference.smc_particles);
    } else if (c.problem.kind == CaseKind::corrosion) {
      c.reference.kind = ReferenceKind::kalman;
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.base_seed = j.value("base_seed", c.base_seed);
    c.smc_steps = j.value("smc_steps", c.smc_steps);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

std::unique_ptr<DeteriorationModel> Problem::make_model() const {
  if (config.kind == CaseKind::crack) return std::make_unique<CrackModel>();
  CorrosionGeometry geometry{config.n_elements};
  return std::make_unique<CorrosionModel>(geometry, make_sensor_layout(geometry, config.n_sensors));
}

Problem make_problem(const CaseConfig& config) {
  if (config.kind == CaseKind::crack) return make_problem(config, KlBasis{});
  return make_problem(config, kl_basis(config.kl_nodes, config.kl_modes));
}

Problem make_problem(const CaseConfig& config, const KlBasis& basis) {
  Problem p;
  p.config = config;
  if (config.kind == CaseKind::crack) {
    p.crack = generate_crack_dataset(crack_theta_star(), crack_measurement_error(), config.truth_seed);
    p.data = p.crack->series();
  } else {
    p.corrosion = generate_corrosion_truth(config.truth_seed, basis);
    CorrosionGeometry geometry{config.n_elements};
    p.data = p.corrosion->series(make_sensor_layout(geometry, config.n_sensors));
  }
  return p;
}

std::vector<ReferencePosterior> compute_reference(const Problem& problem, const ReferenceConfig& config,
                                                  ExecutionPolicy policy) {
  std::vector<ReferencePosterior> out;
  const auto model = problem.make_model();
  if (config.kind == ReferenceKind::kalman) {
    const auto* corrosion = dynamic_cast<const CorrosionModel*>(model.get());
    if (!corrosion) throw ReferenceError("kalman reference needs the corrosion case");
    const auto kf = kalman_reference(*corrosion, problem.data);
    for (std::size_t k = 0; k < kf.size(); ++k) {
      out.push_back({k + 1, "kalman", kf[k].mean, kf[k].covariance.diagonal().cwiseSqrt(),
                     correlation_from_covariance(kf[k].covariance)});
    }
    return out;
  }
  if (!problem.crack) throw ReferenceError("rejection reference needs the crack case");
  const std::size_t k_max = std::min(config.k_max, problem.data.size());
  for (std::size_t k = 1; k <= k_max; ++k) {
    RejectionOptions opts;
    opts.n_samples = config.n_samples;
    opts.seed = make_stream(config.seed, StreamTag::rejection, k)();
    opts.policy = policy;
    const auto rs = rejection_sample_posterior(*problem.crack, k, model->prior(), opts);
    const std::vector<double> lw(config.n_samples, -std::log(static_cast<double>(config.n_samples)));
    const auto s = summarize(rs.samples, lw);
    out.push_back({k, "rejection", s.mean, s.std, s.correlation});
  }
  for (std::size_t k : config.smc_steps) {
    if (k <= k_max) continue;
    FilterConfig fc;
    fc.n_particles = config.smc_particles;
    fc.seed = config.seed;
    fc.policy = policy;
    try {
      const auto report = smc_run(*model, prefix(problem.data, k), fc);
      const auto& s = report.steps.back();
      out.push_back({k, "smc", s.mean, s.std, s.correlation});
    } catch (const DegeneracyError& e) {
      throw ReferenceError(std::string("smc reference: ") + e.what());
    }
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Problem problem = make_problem(config.problem);
  const auto reference = compute_reference(problem, config.reference, config.filter_config.policy);
  auto result = run_experiment(config, problem, reference);
  if (!config.output_dir.empty()) write_experiment(result, config.output_dir);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Problem& problem,
                                const std::vector<ReferencePosterior>& reference) {
  config.validate();
  ExperimentResult result;
  result.config = config;
  std::map<std::size_t, const ReferencePosterior*> ref_at;
  for (const auto& r : reference) ref_at[r.step] = &r;

  // metrics[step] -> one MetricRow per successful repetition
  std::map<std::size_t, std::vector<MetricRow>> metrics;
  std::map<std::size_t, bool> interpolated;
  const bool rerun = config.filter == Algorithm::smc && !config.smc_steps.empty();

  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    RunRecord run;
    run.repetition = rep;
    run.seed = config.base_seed + rep;
    const auto model = problem.make_model();
    const auto names = model->parameter_names();
    FilterConfig fc = config.filter_config;
    fc.seed = run.seed;
    try {
      std::map<std::size_t, MetricRow> rows;
      if (rerun) {
        for (std::size_t k : config.smc_steps) {
          run.reports.push_back(smc_run(*model, prefix(problem.data, k), fc));
          auto it = ref_at.find(k);
          if (it != ref_at.end()) rows[k] = step_metrics(run.reports.back().steps.back(), *it->second, names);
        }
        // Linear interpolation between re-run steps that carry metrics.
        std::vector<std::size_t> anchors;
        for (const auto& [k, row] : rows) anchors.push_back(k);
        for (std::size_t a = 0; a + 1 < anchors.size(); ++a) {
          const std::size_t s0 = anchors[a];
          const std::size_t s1 = anchors[a + 1];
          for (std::size_t s = s0 + 1; s < s1; ++s) {
            if (!ref_at.count(s)) continue;
            const double f = static_cast<double>(s - s0) / static_cast<double>(s1 - s0);
            MetricRow row;
            for (const auto& [name, v0] : rows[s0]) {
              auto match = std::find_if(rows[s1].begin(), rows[s1].end(),
                                        [&](const auto& p) { return p.first == name; });
              if (match != rows[s1].end()) row.emplace_back(name, v0 + f * (match->second - v0));
            }
            rows[s] = std::move(row);
            interpolated[s] = true;
          }
        }
      } else {
        run.reports.push_back(run_filter(config.filter, *model, problem.data, fc));
        for (const auto& step : run.reports.back().steps) {
          if (step.step == 0) continue;
          auto it = ref_at.find(step.step);
          if (it != ref_at.end()) rows[step.step] = step_metrics(step, *it->second, names);
        }
      }
      run.evaluations = model->evaluations();
      const auto& last = run.reports.back();
      const double t_final = last.steps.back().time;
      run.diverged_mass = pushforward_state(last.final_ensemble, *model, std::span<const double>(&t_final, 1))
                              .front()
                              .diverged_mass;
      for (auto& [k, row] : rows) metrics[k].push_back(std::move(row));
    } catch (const DegeneracyError& e) {
      run.failed = true;
      run.failure = e.what();
    } catch (const FitError& e) {
      run.failed = true;
      run.failure = e.what();
    } catch (const DomainError& e) {
      run.failed = true;
      run.failure = e.what();
    }
    result.runs.push_back(std::move(run));
  }

  std::uint64_t total = 0;
  std::size_t ok = 0;
  for (const auto& r : result.runs) {
    if (r.failed) {
      ++result.failed_runs;
    } else {
      total += r.evaluations;
      ++ok;
    }
  }
  if (10 * result.failed_runs > config.repetitions) {
    throw DegeneracyError(fmt::format("{} of {} repetitions failed", result.failed_runs, config.repetitions));
  }
  result.mean_evaluations = ok > 0 ? static_cast<double>(total) / static_cast<double>(ok) : 0.0;

  for (const auto& [step, reps] : metrics) {
    if (reps.empty()) continue;
    for (std::size_t m = 0; m < reps.front().size(); ++m) {
      std::vector<double> values;
      for (const auto& row : reps) values.push_back(row[m].second);
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      TraceRow t;
      t.step = step;
      t.metric = reps.front()[m].first;
      t.mean = mean;
      t.lo = std::min(empirical_quantile(values, 0.05), mean);
      t.hi = std::max(empirical_quantile(values, 0.95), mean);
      t.interpolated = interpolated.count(step) > 0;
      result.trace.push_back(std::move(t));
    }
  }
  return result;
}

std::string trace_to_csv(const std::vector<TraceRow>& trace) {
  std::string out = "step,metric,mean,lo,hi\n";
  for (const auto& t : trace) {
    out += fmt::format("{},{},{},{},{}\n", t.step, t.metric, format_double(t.mean), format_double(t.lo),
                       format_double(t.hi));
  }
  return out;
}

Json experiment_report(const ExperimentResult& result) {
  Json j;
  j["config"] = to_json(result.config);
  Json per_run = Json::array();
  Json runs = Json::array();
  for (const auto& r : result.runs) {
    Json run;
    run["repetition"] = r.repetition;
    run["seed"] = r.seed;
    run["failed"] = r.failed;
    if (r.failed) run["failure"] = r.failure;
    run["evaluations"] = r.evaluations;
    run["diverged_mass"] = round_significant(r.diverged_mass);
    run["diverged_warning"] = r.diverged_mass > 0.5;
    Json reports = Json::array();
    for (const auto& rep : r.reports) reports.push_back(filter_report_to_json(rep));
    run["filter_reports"] = std::move(reports);
    runs.push_back(std::move(run));
    if (!r.failed) per_run.push_back(r.evaluations);
  }
  j["cost"] = {{"mean_evaluations", round_significant(result.mean_evaluations)}, {"per_run", per_run}};
  j["failed_runs"] = result.failed_runs;
  std::vector<std::size_t> interp;
  for (const auto& t : result.trace) {
    if (t.interpolated && (interp.empty() || interp.back() != t.step)) interp.push_back(t.step);
  }
  j["interpolated_steps"] = interp;
  j["runs"] = std::move(runs);
  return j;
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_json(dir / "config.json", to_json(result.config));
  write_text(dir / "trace.csv", trace_to_csv(result.trace));
  write_json(dir / "report.json", experiment_report(result));
}

Json summarize_trace_csv(const std::filesystem::path& trace_csv) {
  std::istringstream in(read_text(trace_csv));
  std::string line;
  std::getline(in, line);
  if (line != "step,metric,mean,lo,hi") throw ConfigError(trace_csv.string() + ": unexpected header");
  struct Acc {
    std::size_t steps = 0;
    std::size_t last_step = 0;
    double last_mean = 0, last_lo = 0, last_hi = 0;
    double worst_mean = 0;
    std::size_t worst_step = 0;
  };
  std::map<std::string, Acc> acc;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string step, metric, mean, lo, hi;
    if (!std::getline(ss, step, ',') || !std::getline(ss, metric, ',') || !std::getline(ss, mean, ',') ||
        !std::getline(ss, lo, ',') || !std::getline(ss, hi, ',')) {
      throw ConfigError(trace_csv.string() + ": malformed row '" + line + "'");
    }
    auto& a = acc[metric];
    const std::size_t s = std::stoul(step);
    const double m = std::stod(mean);
    ++a.steps;
    if (s >= a.last_step) {
      a.last_step = s;
      a.last_mean = m;
      a.last_lo = std::stod(lo);
      a.last_hi = std::stod(hi);
    }
    if (a.steps == 1 || m > a.worst_mean) {
      a.worst_mean = m;
      a.worst_step = s;
    }
  }
  Json out = Json::object();
  for (const auto& [metric, a] : acc) {
    out[metric] = {{"steps", a.steps},
                   {"final_step", a.last_step},
                   {"final_mean", round_significant(a.last_mean)},
                   {"final_lo", round_significant(a.last_lo)},
                   {"final_hi", round_significant(a.last_hi)},
                   {"worst_mean", round_significant(a.worst_mean)},
                   {"worst_step", a.worst_step}};
  }
  return out;
}

}  // namespace bayesdet
