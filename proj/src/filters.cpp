#include "bayesdet/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "bayesdet/errors.hpp"
#include "bayesdet/kernels.hpp"
#include "bayesdet/probability.hpp"

namespace bayesdet {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxBisection = 100;
constexpr std::size_t kMaxRungs = 10000;

}  // namespace

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::pf: return "pf";
    case Algorithm::pfgm: return "pfgm";
    case Algorithm::tpfgm: return "tpfgm";
    case Algorithm::ibis: return "ibis";
    case Algorithm::tibis: return "tibis";
    case Algorithm::smc: return "smc";
  }
  return "unknown";
}

Algorithm algorithm_from_string(std::string_view name) {
  for (auto a : {Algorithm::pf, Algorithm::pfgm, Algorithm::tpfgm, Algorithm::ibis,
                 Algorithm::tibis, Algorithm::smc}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown filter '" + std::string(name) + "'");
}

bool uses_tempering(Algorithm a) {
  return a == Algorithm::tpfgm || a == Algorithm::tibis || a == Algorithm::smc;
}

void FilterConfig::validate() const {
  if (n_particles < 2) throw ConfigError("n_particles must be at least 2");
  const double nt = threshold();
  if (!(resample_fraction > 0.0 && resample_fraction <= 1.0) || nt < 1.0) {
    throw ConfigError("resample_fraction must give 1 <= N_T <= N_par");
  }
  if (n_gm < 1) throw ConfigError("n_gm must be at least 1");
}

namespace {

// Tempered ESS in the limit of a vanishing positive exponent: particles with
// zero likelihood drop out, the rest keep their weights.
double ess_at_zero_plus(std::span<const double> log_weights, std::span<const double> log_liks) {
  std::vector<double> a(log_weights.begin(), log_weights.end());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(log_liks[i] > kNegInf)) a[i] = kNegInf;
  }
  const std::vector<double> zeros(a.size(), 0.0);
  return tempered_ess(a, zeros, 0.0);
}

void add_scaled(std::vector<double>& log_weights, std::span<const double> log_liks, double power) {
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    log_weights[i] = log_liks[i] == kNegInf ? kNegInf : log_weights[i] + power * log_liks[i];
  }
}

}  // namespace

double solve_temper_increment(std::span<const double> log_likelihoods,
                              std::span<const double> log_weights_aux, double q,
                              double n_threshold) {
  if (log_likelihoods.size() != log_weights_aux.size()) {
    throw ContractError("solve_temper_increment: size mismatch");
  }
  if (!(q >= 0.0 && q < 1.0)) throw ContractError("solve_temper_increment: q must lie in [0, 1)");
  const double tol = 1e-8 * static_cast<double>(log_likelihoods.size());
  auto f = [&](double dq) { return tempered_ess(log_weights_aux, log_likelihoods, dq); };

  double lo = 0.0;
  double hi = 1.0 - q;
  if (!(ess_at_zero_plus(log_weights_aux, log_likelihoods) > n_threshold) ||
      !(f(hi) < n_threshold)) {
    throw ContractError("solve_temper_increment: threshold is not bracketed");
  }
  for (std::size_t it = 0; it < kMaxBisection; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double value = f(mid);
    if (std::abs(value - n_threshold) <= tol && value >= n_threshold) return mid;
    if (value > n_threshold) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // lo keeps ESS above the threshold; fall back to it unless it never moved.
  return lo > 0.0 ? lo : hi;
}

double imh_gm_move(RowMatrix& theta, RowMatrix& u, std::vector<LikelihoodParts>& cache,
                   const TemperedTarget& target, const PriorModel& prior,
                   const GaussianMixture& mixture, std::size_t n_burn, MoveStreams streams,
                   ExecutionPolicy policy) {
  const auto n = static_cast<std::size_t>(theta.rows());
  const auto d = static_cast<std::size_t>(theta.cols());
  if (cache.size() != n || u.rows() != theta.rows()) throw ContractError("imh_gm_move: size mismatch");
  const double power = target.power;
  auto tempered = [power](const LikelihoodParts& p) {
    const double cur = power == 0.0 ? 0.0 : power * p.current;
    const double value = p.past + cur;
    return std::isnan(value) ? kNegInf : value;
  };

  std::vector<std::size_t> accepted(n, 0);
  parallel_for(policy, n, [&](std::size_t i) {
    auto rng = make_stream(streams.seed, StreamTag::move, streams.step, streams.rung, i);
    const auto row = static_cast<Eigen::Index>(i);
    auto theta_i = row_span(theta, row);
    auto u_i = row_span(u, row);
    LikelihoodParts& parts = cache[i];
    double cur_target = tempered(parts);
    double cur_prior = log_prior_density_u(u_i);
    double cur_proposal = mixture.log_density(u_i);
    std::vector<double> cand_u(d);
    std::vector<double> cand_theta(d);
    for (std::size_t j = 0; j <= n_burn; ++j) {
      mixture.sample_one(rng, cand_u);
      const double uniform = uniform01(rng);
      prior.from_standard_normal(cand_u, cand_theta);
      const LikelihoodParts cand = target.evaluate(cand_theta);
      const double cand_target = tempered(cand);
      if (!(cand_target > kNegInf)) continue;
      const double cand_prior = log_prior_density_u(cand_u);
      const double cand_proposal = mixture.log_density(cand_u);
      const double log_alpha =
          (cand_target + cand_prior + cur_proposal) - (cur_target + cur_prior + cand_proposal);
      if (std::log(uniform) < log_alpha) {
        std::copy(cand_u.begin(), cand_u.end(), u_i.begin());
        std::copy(cand_theta.begin(), cand_theta.end(), theta_i.begin());
        parts = cand;
        cur_target = cand_target;
        cur_prior = cand_prior;
        cur_proposal = cand_proposal;
        ++accepted[i];
      }
    }
  });
  std::size_t total = 0;
  for (auto a : accepted) total += a;
  return static_cast<double>(total) / static_cast<double>(n * (n_burn + 1));
}

MoveResult imh_gm_move(const WeightedEnsemble& ensemble,
                       const std::function<double(std::span<const double>)>& target_log_lik,
                       const PriorModel& prior, const GaussianMixture& mixture,
                       std::size_t n_burn, std::uint64_t seed, ExecutionPolicy policy) {
  if (ensemble.log_likelihoods.size() != ensemble.size()) {
    throw ContractError("imh_gm_move: ensemble has no cached likelihoods");
  }
  MoveResult out{ensemble, 0.0};
  std::vector<LikelihoodParts> cache(ensemble.size());
  for (std::size_t i = 0; i < cache.size(); ++i) cache[i].past = ensemble.log_likelihoods[i];
  TemperedTarget target{[&](std::span<const double> th) { return LikelihoodParts{target_log_lik(th), 0.0}; },
                        1.0};
  out.acceptance_rate = imh_gm_move(out.ensemble.theta, out.ensemble.u, cache, target, prior,
                                    mixture, n_burn, MoveStreams{seed, 0, 0}, policy);
  for (std::size_t i = 0; i < cache.size(); ++i) out.ensemble.log_likelihoods[i] = cache[i].past;
  return out;
}

namespace {

class FilterRun {
 public:
  FilterRun(Algorithm algorithm, const DeteriorationModel& model, const MeasurementSeries& data,
            const FilterConfig& config)
      : model_(model), data_(data), config_(config), start_evals_(model.evaluations()) {
    config_.validate();
    if (model.dim() != model.prior().dim()) throw ContractError("model and prior dimensions differ");
    report_.algorithm = algorithm;
    report_.config = config;
    em_ = config.em;
    em_.policy = config.policy;
    const std::size_t max_k = config.n_particles / (model.dim() + 1);
    em_.components = std::max<std::size_t>(1, std::min(config.n_gm, max_k));
    ensemble_ = sample_prior(model.prior(), config.n_particles, config.seed, config.policy);
  }

  WeightedEnsemble& ensemble() { return ensemble_; }
  FilterReport& report() { return report_; }
  const DeteriorationModel& model() const { return model_; }
  const MeasurementSeries& data() const { return data_; }
  const FilterConfig& config() const { return config_; }
  double threshold() const { return config_.threshold(); }
  std::uint64_t evaluations() const { return model_.evaluations() - start_evals_; }

  std::vector<double> step_log_likelihoods(std::size_t step) const {
    return kernels::step_log_likelihoods(model_, ensemble_.theta, data_[step - 1], config_.policy);
  }

  void normalize_or_throw(std::vector<double>& log_weights, std::size_t step) const {
    try {
      normalize_log_weights_in_place(log_weights);
    } catch (const DegeneracyError&) {
      throw DegeneracyError("step " + std::to_string(step) +
                            ": every particle has zero likelihood");
    }
  }

  std::optional<GaussianMixture> fit_proposal(std::span<const double> log_weights, std::size_t step,
                                              std::size_t rung, StepRecord& rec) {
    const std::uint64_t seed =
        make_stream(config_.seed, {static_cast<std::uint64_t>(StreamTag::em_init), step, rung})();
    try {
      EmFit fit = fit_em(ensemble_.u, log_weights, em_, seed);
      report_.em_fits.push_back(EmRecord{step, rung, fit.iterations, fit.mixture.components(),
                                         fit.converged, fit.monotone()});
      return std::move(fit.mixture);
    } catch (const FitError&) {
      ++report_.gmm_fallbacks;
      rec.gmm_fallback = true;
      return std::nullopt;
    }
  }

  // Replaces every particle by a fresh draw from the mixture.
  void draw_from(const GaussianMixture& mixture, std::size_t step, std::size_t rung) {
    const auto& prior = model_.prior();
    parallel_for(config_.policy, ensemble_.size(), [&](std::size_t i) {
      auto rng = make_stream(config_.seed, StreamTag::gmm_draw, step, rung, i);
      const auto row = static_cast<Eigen::Index>(i);
      mixture.sample_one(rng, row_span(ensemble_.u, row));
      prior.from_standard_normal(row_span(ensemble_.u, row), row_span(ensemble_.theta, row));
    });
    ensemble_.set_uniform_weights();
    ensemble_.log_likelihoods.clear();
  }

  std::vector<std::size_t> multinomial(std::span<const double> log_weights, std::size_t step,
                                       std::size_t rung) const {
    auto rng = make_stream(config_.seed, StreamTag::resample, step, rung);
    return multinomial_indices(log_weights, ensemble_.size(), rng);
  }

  void record(std::size_t step, double time, StepRecord rec) {
    const auto s = summarize(ensemble_);
    rec.step = step;
    rec.time = time;
    rec.mean = s.mean;
    rec.std = s.std;
    rec.correlation = s.correlation;
    rec.q05 = s.q05;
    rec.q95 = s.q95;
    rec.evaluations = evaluations();
    report_.resample_events += rec.resample_events;
    report_.steps.push_back(std::move(rec));
  }

  void record_prior() { record(0, 0.0, StepRecord{}); }

  FilterReport finish() {
    report_.evaluations = evaluations();
    report_.final_ensemble = ensemble_;
    return std::move(report_);
  }

  const EmOptions& em() const { return em_; }

 private:
  const DeteriorationModel& model_;
  const MeasurementSeries& data_;
  FilterConfig config_;
  EmOptions em_;
  std::uint64_t start_evals_;
  WeightedEnsemble ensemble_;
  FilterReport report_;
};

template <typename T>
void permute(std::vector<T>& values, std::span<const std::size_t> idx) {
  std::vector<T> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = values[idx[i]];
  values = std::move(out);
}

// PF and PFGM: reweight, then resample when the ESS falls below N_T.
FilterReport reweight_filter(Algorithm algorithm, const DeteriorationModel& model,
                             const MeasurementSeries& data, const FilterConfig& config) {
  FilterRun run(algorithm, model, data, config);
  run.record_prior();
  auto& ens = run.ensemble();
  for (std::size_t n = 1; n <= data.size(); ++n) {
    StepRecord rec;
    const auto ll = run.step_log_likelihoods(n);
    for (std::size_t i = 0; i < ll.size(); ++i) {
      ens.log_weights[i] = ll[i] == kNegInf ? kNegInf : ens.log_weights[i] + ll[i];
    }
    run.normalize_or_throw(ens.log_weights, n);
    rec.ess = ess(ens.log_weights);
    if (rec.ess < run.threshold()) {
      ++rec.resample_events;
      std::optional<GaussianMixture> mixture;
      if (algorithm == Algorithm::pfgm) mixture = run.fit_proposal(ens.log_weights, n, 1, rec);
      if (mixture) {
        run.draw_from(*mixture, n, 1);
      } else {
        ens = select_particles(ens, run.multinomial(ens.log_weights, n, 1));
      }
    }
    run.record(n, data[n - 1].time, std::move(rec));
  }
  return run.finish();
}

}  // namespace

FilterReport pf_run(const DeteriorationModel& model, const MeasurementSeries& data,
                    const FilterConfig& config) {
  return reweight_filter(Algorithm::pf, model, data, config);
}

FilterReport pfgm_run(const DeteriorationModel& model, const MeasurementSeries& data,
                      const FilterConfig& config) {
  return reweight_filter(Algorithm::pfgm, model, data, config);
}

FilterReport tpfgm_run(const DeteriorationModel& model, const MeasurementSeries& data,
                       const FilterConfig& config) {
  FilterRun run(Algorithm::tpfgm, model, data, config);
  run.record_prior();
  auto& ens = run.ensemble();
  const double nt = run.threshold();
  for (std::size_t n = 1; n <= data.size(); ++n) {
    StepRecord rec;
    auto ll = run.step_log_likelihoods(n);
    rec.ess = tempered_ess(ens.log_weights, ll, 1.0);
    std::vector<double> aux = ens.log_weights;
    double q = 0.0;
    std::size_t rung = 0;
    while (q < 1.0) {
      if (++rung > kMaxRungs) throw DegeneracyError("step " + std::to_string(n) + ": tempering did not terminate");
      const double remaining = 1.0 - q;
      const double full = tempered_ess(aux, ll, remaining);
      if (full == 0.0) {
        throw DegeneracyError("step " + std::to_string(n) + ": every particle has zero likelihood");
      }
      if (full > nt) {
        add_scaled(aux, ll, remaining);
        run.normalize_or_throw(aux, n);
        if (!rec.ladder.empty()) {
          rec.ladder.push_back(1.0);
          rec.ladder_ess.push_back(ess(aux));
        }
        q = 1.0;
        break;
      }
      if (ess_at_zero_plus(aux, ll) <= nt) {
        // Dead particles alone breach the threshold: drop them, keep q.
        add_scaled(aux, ll, 0.0);
        ++run.report().purge_events;
      } else {
        const double dq_raw = solve_temper_increment(ll, aux, q, nt);
        const double q_new = std::min(q + dq_raw, 1.0);
        const double dq = q_new - q;
        q = q_new;
        add_scaled(aux, ll, dq);
        run.normalize_or_throw(aux, n);
        rec.ladder.push_back(q);
        rec.ladder_ess.push_back(ess(aux));
      }
      run.normalize_or_throw(aux, n);
      ++rec.resample_events;
      auto mixture = run.fit_proposal(aux, n, rung, rec);
      if (mixture) {
        run.draw_from(*mixture, n, rung);
        if (q < 1.0) ll = run.step_log_likelihoods(n);
      } else {
        const auto idx = run.multinomial(aux, n, rung);
        ens = select_particles(ens, idx);
        permute(ll, idx);
      }
      aux = ens.log_weights;
    }
    ens.log_weights = std::move(aux);
    run.record(n, data[n - 1].time, std::move(rec));
  }
  return run.finish();
}

FilterReport ibis_run(const DeteriorationModel& model, const MeasurementSeries& data,
                      const FilterConfig& config) {
  FilterRun run(Algorithm::ibis, model, data, config);
  run.record_prior();
  auto& ens = run.ensemble();
  ens.log_likelihoods.assign(ens.size(), 0.0);
  for (std::size_t n = 1; n <= data.size(); ++n) {
    StepRecord rec;
    const auto ll = run.step_log_likelihoods(n);
    for (std::size_t i = 0; i < ll.size(); ++i) {
      ens.log_likelihoods[i] += ll[i];
      ens.log_weights[i] = ll[i] == kNegInf ? kNegInf : ens.log_weights[i] + ll[i];
    }
    run.normalize_or_throw(ens.log_weights, n);
    rec.ess = ess(ens.log_weights);
    if (rec.ess < run.threshold()) {
      ++rec.resample_events;
      auto mixture = run.fit_proposal(ens.log_weights, n, 1, rec);
      ens = select_particles(ens, run.multinomial(ens.log_weights, n, 1));
      if (mixture) {
        std::vector<LikelihoodParts> cache(ens.size());
        for (std::size_t i = 0; i < cache.size(); ++i) cache[i].past = ens.log_likelihoods[i];
        const std::span<const Measurement> history(data.data(), n);
        TemperedTarget target{[&](std::span<const double> th) {
                                return LikelihoodParts{model.history_log_likelihood(th, history), 0.0};
                              },
                              1.0};
        rec.acceptance_rates.push_back(imh_gm_move(ens.theta, ens.u, cache, target, model.prior(),
                                                   *mixture, config.burn_in,
                                                   MoveStreams{config.seed, n, 1}, config.policy));
        for (std::size_t i = 0; i < cache.size(); ++i) ens.log_likelihoods[i] = cache[i].past;
      }
    }
    run.record(n, data[n - 1].time, std::move(rec));
  }
  return run.finish();
}

FilterReport tibis_run(const DeteriorationModel& model, const MeasurementSeries& data,
                       const FilterConfig& config) {
  FilterRun run(Algorithm::tibis, model, data, config);
  run.record_prior();
  auto& ens = run.ensemble();
  ens.log_likelihoods.assign(ens.size(), 0.0);
  const double nt = run.threshold();
  for (std::size_t n = 1; n <= data.size(); ++n) {
    StepRecord rec;
    auto current = run.step_log_likelihoods(n);
    std::vector<double> past = ens.log_likelihoods;
    rec.ess = tempered_ess(ens.log_weights, current, 1.0);
    std::vector<double> aux = ens.log_weights;
    const std::span<const Measurement> history(data.data(), n - 1);
    double q = 0.0;
    std::size_t rung = 0;
    while (q < 1.0) {
      if (++rung > kMaxRungs) throw DegeneracyError("step " + std::to_string(n) + ": tempering did not terminate");
      const double remaining = 1.0 - q;
      const double full = tempered_ess(aux, current, remaining);
      if (full == 0.0) {
        throw DegeneracyError("step " + std::to_string(n) + ": every particle has zero likelihood");
      }
      if (full > nt) {
        add_scaled(aux, current, remaining);
        run.normalize_or_throw(aux, n);
        if (!rec.ladder.empty()) {
          rec.ladder.push_back(1.0);
          rec.ladder_ess.push_back(ess(aux));
        }
        q = 1.0;
        break;
      }
      if (ess_at_zero_plus(aux, current) <= nt) {
        add_scaled(aux, current, 0.0);
        ++run.report().purge_events;
      } else {
        const double q_new = std::min(q + solve_temper_increment(current, aux, q, nt), 1.0);
        const double dq = q_new - q;
        q = q_new;
        add_scaled(aux, current, dq);
        run.normalize_or_throw(aux, n);
        rec.ladder.push_back(q);
        rec.ladder_ess.push_back(ess(aux));
      }
      run.normalize_or_throw(aux, n);
      ++rec.resample_events;
      auto mixture = run.fit_proposal(aux, n, rung, rec);
      const auto idx = run.multinomial(aux, n, rung);
      ens = select_particles(ens, idx);
      permute(past, idx);
      permute(current, idx);
      if (mixture) {
        std::vector<LikelihoodParts> cache(ens.size());
        for (std::size_t i = 0; i < cache.size(); ++i) cache[i] = {past[i], current[i]};
        const Measurement& newest = data[n - 1];
        TemperedTarget target{[&](std::span<const double> th) {
                                return LikelihoodParts{model.history_log_likelihood(th, history),
                                                       model.log_likelihood(th, newest)};
                              },
                              q};
        rec.acceptance_rates.push_back(imh_gm_move(ens.theta, ens.u, cache, target, model.prior(),
                                                   *mixture, config.burn_in,
                                                   MoveStreams{config.seed, n, rung}, config.policy));
        for (std::size_t i = 0; i < cache.size(); ++i) {
          past[i] = cache[i].past;
          current[i] = cache[i].current;
        }
      }
      aux = ens.log_weights;
    }
    ens.log_weights = std::move(aux);
    ens.log_likelihoods.resize(ens.size());
    for (std::size_t i = 0; i < ens.size(); ++i) {
      ens.log_likelihoods[i] = current[i] == kNegInf ? kNegInf : past[i] + current[i];
    }
    run.record(n, data[n - 1].time, std::move(rec));
  }
  return run.finish();
}

FilterReport smc_run(const DeteriorationModel& model, const MeasurementSeries& data,
                     const FilterConfig& config) {
  FilterRun run(Algorithm::smc, model, data, config);
  run.record_prior();
  auto& ens = run.ensemble();
  const double nt = run.threshold();
  const std::span<const Measurement> batch(data.data(), data.size());
  std::vector<double> ll = kernels::history_log_likelihoods(model, ens.theta, batch, config.policy);

  StepRecord rec;
  rec.ess = tempered_ess(ens.log_weights, ll, 1.0);
  double q = 0.0;
  std::size_t rung = 0;
  const std::size_t step = data.size();
  while (q < 1.0) {
    if (++rung > kMaxRungs) throw DegeneracyError("smc: tempering did not terminate");
    ens.set_uniform_weights();
    std::vector<double> w = ens.log_weights;
    const double remaining = 1.0 - q;
    const double full = tempered_ess(w, ll, remaining);
    if (full == 0.0) throw DegeneracyError("smc: every particle has zero likelihood");
    double dq = 0.0;
    if (full > nt) {
      dq = remaining;
    } else if (ess_at_zero_plus(w, ll) <= nt) {
      ++run.report().purge_events;
    } else {
      dq = std::min(q + solve_temper_increment(ll, w, q, nt), 1.0) - q;
    }
    add_scaled(w, ll, dq);
    run.normalize_or_throw(w, step);
    if (dq > 0.0) {
      q = q + dq >= 1.0 ? 1.0 : q + dq;
      rec.ladder.push_back(q);
      rec.ladder_ess.push_back(ess(w));
    }
    ++rec.resample_events;
    auto mixture = run.fit_proposal(w, step, rung, rec);
    const auto idx = run.multinomial(w, step, rung);
    ens = select_particles(ens, idx);
    permute(ll, idx);
    if (mixture) {
      std::vector<LikelihoodParts> cache(ens.size());
      for (std::size_t i = 0; i < cache.size(); ++i) cache[i].current = ll[i];
      TemperedTarget target{[&](std::span<const double> th) {
                              return LikelihoodParts{0.0, model.history_log_likelihood(th, batch)};
                            },
                            q};
      rec.acceptance_rates.push_back(imh_gm_move(ens.theta, ens.u, cache, target, model.prior(),
                                                 *mixture, config.burn_in,
                                                 MoveStreams{config.seed, step, rung}, config.policy));
      for (std::size_t i = 0; i < cache.size(); ++i) ll[i] = cache[i].current;
    }
  }
  ens.log_likelihoods = ll;
  run.record(step, data.empty() ? 0.0 : data.back().time, std::move(rec));
  return run.finish();
}

FilterReport run_filter(Algorithm algorithm, const DeteriorationModel& model,
                        const MeasurementSeries& data, const FilterConfig& config) {
  switch (algorithm) {
    case Algorithm::pf: return pf_run(model, data, config);
    case Algorithm::pfgm: return pfgm_run(model, data, config);
    case Algorithm::tpfgm: return tpfgm_run(model, data, config);
    case Algorithm::ibis: return ibis_run(model, data, config);
    case Algorithm::tibis: return tibis_run(model, data, config);
    case Algorithm::smc: return smc_run(model, data, config);
  }
  throw ConfigError("unknown algorithm");
}

}  // namespace bayesdet
