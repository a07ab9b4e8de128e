#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ddpc/bench.hpp"
#include "ddpc/config.hpp"

namespace fs = std::filesystem;
using namespace ddpc;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Write through a temp file and rename so readers never see partial output.
void write_file(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot write file: " + path.string());
    f << content;
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_manifest(const fs::path& out_dir, const ExperimentConfig& cfg,
                    const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["config_hash"] = config_hash(cfg);
  j["base_seed"] = cfg.base_seed;
  j["timestamp_unix"] = std::chrono::duration_cast<std::chrono::seconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count();
  j["outputs"] = outputs;
  write_file(out_dir / "manifest.json", j.dump(2));
}

ExperimentConfig load(const std::string& config_path, std::uint64_t seed_override,
                      bool has_seed) {
  ExperimentConfig cfg = load_config(config_path);
  if (has_seed) cfg.base_seed = seed_override;
  return cfg;
}

int cmd_simulate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  LtiSystem sys = benchmark_system(cfg.sigma_w2, cfg.sigma_v2);
  RngState rng(cfg.base_seed, 0);
  Trajectory traj = collect_training_data(sys, cfg.regime, cfg.n_train, rng);
  write_file(out_dir / "trajectory.csv", trajectory_to_csv(traj));
  write_manifest(out_dir, cfg, {"trajectory.csv"});
  std::cout << "wrote " << (out_dir / "trajectory.csv").string() << " (" << traj.length()
            << " rows)\n";
  return 0;
}

int cmd_identify(const ExperimentConfig& cfg, const fs::path& out_dir,
                 const std::string& data_path, const std::string& method,
                 const std::string& w_file) {
  Trajectory traj = trajectory_from_csv(read_file(data_path), 1, 1);
  RegressionProblem prob = build_regression(traj, cfg.arx);

  PosteriorEstimate est;
  if (method == "ols") {
    est = ols_estimate(prob, cfg.arx);
  } else if (method == "ss") {
    EbResult eb = eb_tune(prob, cfg.arx, cfg.kernel_family);
    est = kernel_posterior(prob, cfg.arx, kernel_matrix(eb.kernel, cfg.arx), eb.sigma2,
                           eb.kernel);
  } else if (method == "ssw") {
    if (w_file.empty()) {
      std::cerr << "identify --method ssw requires --w-file\n";
      return 2;
    }
    Matrix W = w_from_json(read_file(w_file));
    EbResult eb = eb_tune(prob, cfg.arx, cfg.kernel_family);
    Matrix K = kernel_matrix(eb.kernel, cfg.arx);
    PosteriorEstimate ss_est = kernel_posterior(prob, cfg.arx, K, eb.sigma2, eb.kernel);
    est = shaped_estimate(prob, cfg.arx, K, eb.sigma2, ss_est.theta_bar, W, cfg.mu);
    est.kernel = eb.kernel;
  } else {
    std::cerr << "identify: method must be ols, ss or ssw\n";
    return 2;
  }
  write_file(out_dir / "posterior.json", posterior_to_json(est));
  write_manifest(out_dir, cfg, {"posterior.json"});
  std::cout << "wrote " << (out_dir / "posterior.json").string() << "\n";
  return 0;
}

int cmd_sensitivity(const ExperimentConfig& cfg, const fs::path& out_dir,
                    const std::string& data_path) {
  Trajectory traj = trajectory_from_csv(read_file(data_path), 1, 1);
  RegressionProblem prob = build_regression(traj, cfg.arx);
  EbResult eb = eb_tune(prob, cfg.arx, cfg.kernel_family);
  Matrix K = kernel_matrix(eb.kernel, cfg.arx);
  PosteriorEstimate ss_est = kernel_posterior(prob, cfg.arx, K, eb.sigma2, eb.kernel);

  LtiSystem sys = benchmark_system(cfg.sigma_w2, cfg.sigma_v2);
  std::vector<double> r(static_cast<std::size_t>(cfg.n_test + cfg.mpc.horizons.Lf));
  for (std::size_t t = 0; t < r.size(); ++t)
    r[t] = std::sin(2.0 * M_PI * static_cast<double>(t) / 75.0);
  Controller ctrl(ss_est.theta_bar, cfg.mpc);
  RngState rng(cfg.base_seed, 1);
  ClosedLoopRun run = run_closed_loop(sys, ctrl, r, cfg.n_test, rng);

  Matrix Q_lift = cfg.mpc.Q_weight * Matrix::Identity(cfg.mpc.horizons.Lf, cfg.mpc.horizons.Lf);
  Matrix W = task_sensitivity(ss_est.theta_bar, cfg.mpc.horizons, run.tasks, Q_lift);
  bool normalized = cfg.normalize_w;
  if (normalized) W = normalize_w(W);
  write_file(out_dir / "w_bar.json", w_to_json(W, static_cast<int>(run.tasks.size()), normalized));
  write_manifest(out_dir, cfg, {"w_bar.json"});
  std::cout << "wrote " << (out_dir / "w_bar.json").string() << "\n";
  return 0;
}

int cmd_closed_loop(const ExperimentConfig& cfg, const fs::path& out_dir,
                    const std::string& method) {
  Variant v = variant_from_name(method);
  ClosedLoopRun run;
  RunRecord rec = run_variant(cfg, v, 0, &run);
  if (!rec.valid) {
    std::cerr << "closed-loop run invalid (infeasible QP or numerical failure)\n";
    return 4;
  }
  write_file(out_dir / "closed_loop.csv", closed_loop_to_csv(run));
  write_file(out_dir / "closed_loop_summary.json", closed_loop_summary_json(run));
  write_manifest(out_dir, cfg, {"closed_loop.csv", "closed_loop_summary.json"});
  std::cout << "cost_J = " << run.cost_J << "\n";
  return 0;
}

int cmd_monte_carlo(const ExperimentConfig& cfg, const fs::path& out_dir, int jobs) {
  McResult res = run_monte_carlo(cfg, jobs);
  write_file(out_dir / "mc_records.json", mc_records_json(res));
  write_file(out_dir / "mc_summary.csv", mc_summary_csv(res));
  write_file(out_dir / "mc_trajectory_stats.json", mc_trajectory_stats_json(res));
  write_manifest(out_dir, cfg,
                 {"mc_records.json", "mc_summary.csv", "mc_trajectory_stats.json"});
  std::cout << mc_summary_csv(res);
  return 0;
}

int cmd_report(const ExperimentConfig& cfg, const fs::path& out_dir,
               const std::string& records_path) {
  nlohmann::json j = nlohmann::json::parse(read_file(records_path));
  McResult res;
  res.config = cfg;
  for (const auto& r : j.at("records")) {
    RunRecord rec;
    rec.variant = variant_from_name(r.at("variant").get<std::string>());
    rec.run_id = r.at("run_id").get<int>();
    rec.cost_J = r.at("cost_J").get<double>();
    rec.trace_sigma_theta = r.at("trace_sigma_theta").get<double>();
    rec.valid = r.at("valid").get<bool>();
    rec.seed = r.at("seed").get<std::uint64_t>();
    res.records.push_back(rec);
  }
  summarize(res);
  write_file(out_dir / "mc_summary.csv", mc_summary_csv(res));
  std::cout << mc_summary_csv(res);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven predictive control benchmark harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool has_seed = false;
  int jobs = 1;
  std::string method = "ols";
  std::string data_path;
  std::string w_file;
  std::string records_path;

  auto add_common = [&](CLI::App* sub, bool need_config = true) {
    auto* opt = sub->add_option("--config", config_path, "config file path");
    if (need_config) opt->required();
    sub->add_option("--out-dir", out_dir, "output directory");
    sub->add_option("--seed", seed, "override base seed")->each([&](const std::string&) {
      has_seed = true;
    });
    sub->add_option("--jobs", jobs, "worker count");
  };

  auto* sim = app.add_subcommand("simulate", "generate training data");
  add_common(sim);

  auto* ident = app.add_subcommand("identify", "estimate ARX predictor");
  add_common(ident);
  ident->add_option("--data", data_path, "trajectory CSV")->required();
  ident->add_option("--method", method, "ols|ss|ssw");
  ident->add_option("--w-file", w_file, "task sensitivity JSON (ssw)");

  auto* sens = app.add_subcommand("sensitivity", "compute the averaged task sensitivity");
  add_common(sens);
  sens->add_option("--data", data_path, "trajectory CSV")->required();

  auto* cl = app.add_subcommand("closed-loop", "single closed-loop run");
  add_common(cl);
  cl->add_option("--method", method, "ols|fce|ss|ssw|oracle");

  auto* mc = app.add_subcommand("monte-carlo", "full Monte Carlo sweep");
  add_common(mc);

  auto* rep = app.add_subcommand("report", "summarize per-run records");
  add_common(rep);
  rep->add_option("--records", records_path, "mc_records.json path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = load(config_path, seed, has_seed);
    fs::path out(out_dir);
    fs::create_directories(out);
    if (sim->parsed()) return cmd_simulate(cfg, out);
    if (ident->parsed()) return cmd_identify(cfg, out, data_path, method, w_file);
    if (sens->parsed()) return cmd_sensitivity(cfg, out, data_path);
    if (cl->parsed()) return cmd_closed_loop(cfg, out, method);
    if (mc->parsed()) return cmd_monte_carlo(cfg, out, jobs);
    if (rep->parsed()) return cmd_report(cfg, out, records_path);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
