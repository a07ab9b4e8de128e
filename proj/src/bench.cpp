#include "ddpc/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace ddpc {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::OLS: return "ols";
    case Variant::FCE: return "fce";
    case Variant::SS: return "ss";
    case Variant::SSW: return "ssw";
    case Variant::OracleKF: return "oracle";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "ols") return Variant::OLS;
  if (name == "fce") return Variant::FCE;
  if (name == "ss") return Variant::SS;
  if (name == "ssw") return Variant::SSW;
  if (name == "oracle" || name == "oraclekf") return Variant::OracleKF;
  throw ConfigError("unknown variant: " + name);
}

PredictorTheta oracle_theta(const LtiSystem& sys, const KalmanGain& gain,
                            const ArxStructure& s) {
  Matrix At = sys.A - gain.K * sys.C;
  Matrix Bt = sys.B - gain.K * sys.D;
  Vector values = Vector::Zero(s.n_theta());

  Matrix Ai = Matrix::Identity(At.rows(), At.cols());  // At^(lag-1)
  for (int lag = 1; lag <= std::max(s.na, s.nb); ++lag) {
    if (lag <= s.na) {
      Matrix phi = sys.C * Ai * gain.K;
      for (int c = 0; c < s.n_y; ++c)
        for (int r = 0; r < s.n_y; ++r) values(s.y_offset(lag) + c * s.n_y + r) = phi(r, c);
    }
    if (lag <= s.nb) {
      Matrix phi = sys.C * Ai * Bt;
      for (int c = 0; c < s.n_u; ++c)
        for (int r = 0; r < s.n_y; ++r) values(s.u_offset(lag) + c * s.n_y + r) = phi(r, c);
    }
    Ai = At * Ai;
  }
  if (s.include_feedthrough)
    for (int c = 0; c < s.n_u; ++c)
      for (int r = 0; r < s.n_y; ++r) values(s.u_offset(0) + c * s.n_y + r) = sys.D(r, c);
  return make_theta(s, values);
}

namespace {

std::vector<double> test_reference(long n_test, int Lf) {
  std::vector<double> r(static_cast<std::size_t>(n_test + Lf));
  for (long t = 0; t < n_test + Lf; ++t)
    r[static_cast<std::size_t>(t)] = std::sin(2.0 * M_PI * static_cast<double>(t) / 75.0);
  return r;
}

void store_traj(RunRecord& rec, const ClosedLoopRun& run) {
  rec.y_traj.reserve(run.traj.length());
  rec.u_traj.reserve(run.traj.length());
  for (std::size_t t = 0; t < run.traj.length(); ++t) {
    rec.y_traj.push_back(run.traj.y[t](0));
    rec.u_traj.push_back(run.traj.u[t](0));
  }
}

}  // namespace

RunRecord run_variant(const ExperimentConfig& cfg, Variant variant, int run_id,
                      ClosedLoopRun* full_run) {
  const std::uint64_t run_seed = cfg.base_seed + static_cast<std::uint64_t>(run_id);
  // phases: 0 training data, 1 SSW task-collection run, 2 evaluation run
  RngState train_rng(run_seed, 0);
  RngState collect_rng(run_seed, 1);
  RngState eval_rng(run_seed, 2);

  RunRecord rec;
  rec.variant = variant;
  rec.run_id = run_id;
  rec.seed = run_seed;

  LtiSystem sys = benchmark_system(cfg.sigma_w2, cfg.sigma_v2);
  std::vector<double> r = test_reference(cfg.n_test, cfg.mpc.horizons.Lf);
  Matrix Q_lift = cfg.mpc.Q_weight *
                  Matrix::Identity(sys.ny() * cfg.mpc.horizons.Lf, sys.ny() * cfg.mpc.horizons.Lf);

  try {
    Trajectory traj = collect_training_data(sys, cfg.regime, cfg.n_train, train_rng);
    RegressionProblem prob = build_regression(traj, cfg.arx);

    PredictorTheta theta{cfg.arx, Vector::Zero(cfg.arx.n_theta())};
    std::optional<Matrix> sigma_theta;
    MpcConfig mpc_cfg = cfg.mpc;

    switch (variant) {
      case Variant::OLS: {
        PosteriorEstimate est = ols_estimate(prob, cfg.arx);
        theta = est.theta_bar;
        rec.trace_sigma_theta = est.sigma_theta.trace();
        rec.ridge_fallback = est.ridge_fallback;
        break;
      }
      case Variant::FCE: {
        PosteriorEstimate est = ols_estimate(prob, cfg.arx);
        theta = est.theta_bar;
        sigma_theta = est.sigma_theta;
        mpc_cfg.fce_enabled = true;
        rec.trace_sigma_theta = est.sigma_theta.trace();
        rec.ridge_fallback = est.ridge_fallback;
        break;
      }
      case Variant::SS: {
        EbResult eb = eb_tune(prob, cfg.arx, cfg.kernel_family);
        Matrix K = kernel_matrix(eb.kernel, cfg.arx);
        PosteriorEstimate est = kernel_posterior(prob, cfg.arx, K, eb.sigma2, eb.kernel);
        theta = est.theta_bar;
        rec.trace_sigma_theta = est.sigma_theta.trace();
        break;
      }
      case Variant::SSW: {
        EbResult eb = eb_tune(prob, cfg.arx, cfg.kernel_family);
        Matrix K = kernel_matrix(eb.kernel, cfg.arx);
        PosteriorEstimate ss_est = kernel_posterior(prob, cfg.arx, K, eb.sigma2, eb.kernel);
        // stage one: run the SS controller on the task to collect operating data
        Controller collect_ctrl(ss_est.theta_bar, mpc_cfg);
        ClosedLoopRun collect_run =
            run_closed_loop(sys, collect_ctrl, r, cfg.n_test, collect_rng);
        Matrix W = task_sensitivity(ss_est.theta_bar, cfg.mpc.horizons, collect_run.tasks,
                                    Q_lift);
        if (cfg.normalize_w) W = normalize_w(W);
        PosteriorEstimate est = shaped_estimate(prob, cfg.arx, K, eb.sigma2, ss_est.theta_bar,
                                                W, cfg.mu);
        theta = est.theta_bar;
        rec.trace_sigma_theta = est.sigma_theta.trace();
        break;
      }
      case Variant::OracleKF: {
        KalmanGain kg = steady_state_kf(sys);
        theta = oracle_theta(sys, kg, cfg.arx);
        rec.trace_sigma_theta = 0.0;
        break;
      }
    }

    Controller ctrl(theta, mpc_cfg, sigma_theta);
    ClosedLoopRun run = run_closed_loop(sys, ctrl, r, cfg.n_test, eval_rng);
    rec.cost_J = run.cost_J;
    rec.valid = true;
    store_traj(rec, run);
    if (full_run != nullptr) *full_run = std::move(run);
  } catch (const RunInvalid&) {
    rec.valid = false;
  } catch (const Error&) {
    rec.valid = false;
  }
  return rec;
}

McResult run_monte_carlo(const ExperimentConfig& cfg, int jobs) {
  if (cfg.n_mc < 1) throw ConfigError("run_monte_carlo: n_mc must be >= 1");
  if (cfg.variants.empty()) throw ConfigError("run_monte_carlo: no variants selected");

  McResult res;
  res.config = cfg;
  const std::size_t total =
      static_cast<std::size_t>(cfg.n_mc) * cfg.variants.size();
  res.records.resize(total);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      int run_id = static_cast<int>(i / cfg.variants.size());
      Variant v = cfg.variants[i % cfg.variants.size()];
      res.records[i] = run_variant(cfg, v, run_id);
    }
  };

  int n_threads = std::max(1, jobs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  summarize(res);
  return res;
}

namespace {

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double pos = p * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

void summarize(McResult& res) {
  res.aggregates.clear();
  for (Variant v : res.config.variants) {
    std::vector<double> js, traces;
    std::vector<const RunRecord*> valid;
    for (const RunRecord& rec : res.records) {
      if (rec.variant != v || !rec.valid) continue;
      js.push_back(rec.cost_J);
      traces.push_back(rec.trace_sigma_theta);
      valid.push_back(&rec);
    }
    VariantAggregate agg;
    agg.valid_runs = static_cast<int>(js.size());
    agg.mean_J = mean_of(js);
    agg.std_J = sample_std(js, agg.mean_J);
    agg.median_J = quantile(js, 0.5);
    agg.q25_J = quantile(js, 0.25);
    agg.q75_J = quantile(js, 0.75);
    agg.mean_trace = mean_of(traces);
    agg.std_trace = sample_std(traces, agg.mean_trace);

    if (!valid.empty()) {
      std::size_t T = valid.front()->y_traj.size();
      agg.y_mean.assign(T, 0.0);
      agg.u_mean.assign(T, 0.0);
      agg.y_std.assign(T, 0.0);
      agg.u_std.assign(T, 0.0);
      for (const RunRecord* rec : valid)
        for (std::size_t t = 0; t < T; ++t) {
          agg.y_mean[t] += rec->y_traj[t];
          agg.u_mean[t] += rec->u_traj[t];
        }
      double n = static_cast<double>(valid.size());
      for (std::size_t t = 0; t < T; ++t) {
        agg.y_mean[t] /= n;
        agg.u_mean[t] /= n;
      }
      if (valid.size() > 1) {
        for (const RunRecord* rec : valid)
          for (std::size_t t = 0; t < T; ++t) {
            agg.y_std[t] += (rec->y_traj[t] - agg.y_mean[t]) * (rec->y_traj[t] - agg.y_mean[t]);
            agg.u_std[t] += (rec->u_traj[t] - agg.u_mean[t]) * (rec->u_traj[t] - agg.u_mean[t]);
          }
        for (std::size_t t = 0; t < T; ++t) {
          agg.y_std[t] = std::sqrt(agg.y_std[t] / (n - 1.0));
          agg.u_std[t] = std::sqrt(agg.u_std[t] / (n - 1.0));
        }
      }
    }
    res.aggregates[v] = agg;
  }
}

std::string mc_records_json(const McResult& res) {
  nlohmann::json j;
  j["n_mc"] = res.config.n_mc;
  j["base_seed"] = res.config.base_seed;
  j["regime"] = res.config.regime == Regime::Weak ? "weak" : "informative";
  nlohmann::json recs = nlohmann::json::array();
  for (const RunRecord& rec : res.records) {
    recs.push_back({{"variant", variant_name(rec.variant)},
                    {"run_id", rec.run_id},
                    {"cost_J", rec.cost_J},
                    {"trace_sigma_theta", rec.trace_sigma_theta},
                    {"valid", rec.valid},
                    {"ridge_fallback", rec.ridge_fallback},
                    {"seed", rec.seed}});
  }
  j["records"] = recs;
  return j.dump(2);
}

std::string mc_summary_csv(const McResult& res) {
  std::ostringstream os;
  os << "variant,mean_J,std_J,median_J,q25,q75,mean_trace,std_trace,valid_runs\n";
  char buf[256];
  for (Variant v : res.config.variants) {
    const VariantAggregate& a = res.aggregates.at(v);
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  variant_name(v).c_str(), a.mean_J, a.std_J, a.median_J, a.q25_J, a.q75_J,
                  a.mean_trace, a.std_trace, a.valid_runs);
    os << buf;
  }
  return os.str();
}

std::string mc_trajectory_stats_json(const McResult& res) {
  nlohmann::json j;
  for (Variant v : res.config.variants) {
    const VariantAggregate& a = res.aggregates.at(v);
    j[variant_name(v)] = {{"y_mean", a.y_mean},
                          {"y_std", a.y_std},
                          {"u_mean", a.u_mean},
                          {"u_std", a.u_std}};
  }
  return j.dump(2);
}

}  // namespace ddpc
