#include "CLI11.hpp"

#include "locolab/harness.hpp"
#include "locolab/oracle.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace locolab;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(detail::trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(detail::trim(cur));
  return out;
}

ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = ExperimentConfig::from_file(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
  }
  return cfg;
}

int cmd_train(const std::string& cfg_path, const std::string& out,
              const std::string& seeds, const std::vector<std::string>& sets) {
  ExperimentConfig cfg = load_config(cfg_path, sets);
  if (!seeds.empty()) cfg.set("train.seeds", seeds);
  const fs::path out_dir = out.empty() ? fs::path(cfg.output_dir()) : fs::path(out);
  const ExperimentResult result = run_experiment(cfg, out_dir);
  std::printf("wrote %s (%zu seeds, %zu curve rows)\n",
              result.out_dir.string().c_str(), result.seeds.size(),
              result.curve.size());
  for (const auto& run : result.seeds)
    if (!run.curve.empty())
      std::printf("  seed %ld: final eval return %.3f +- %.3f\n", run.seed,
                  run.curve.back().mean, run.curve.back().stdev);
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& cfg_path, int episodes,
             bool strip, double kappa, bool kappa_set, std::uint64_t seed) {
  const ExperimentConfig cfg = ExperimentConfig::from_file(cfg_path);
  const NetworkParams actor = load_network(ckpt);
  EnvStack stack = cfg.make_stack();
  EnvStack eval_stack = stack.clone_for_eval(
      0, kappa_set ? std::optional<double>(kappa) : std::nullopt);
  Rng rng(seed);
  const auto evals = rollout_policy(actor, std::move(eval_stack), episodes, rng);
  double mean = 0, disp = 0;
  for (const auto& e : evals) {
    mean += strip ? e.return_stripped : e.return_full;
    disp += e.forward_displacement;
  }
  mean /= static_cast<double>(evals.size());
  disp /= static_cast<double>(evals.size());
  double var = 0;
  for (const auto& e : evals) {
    const double r = strip ? e.return_stripped : e.return_full;
    var += (r - mean) * (r - mean);
  }
  std::printf("episodes=%d %sreturn: %.4f +- %.4f  mean forward displacement: %.4f m\n",
              episodes, strip ? "(bonus-stripped) " : "", mean,
              std::sqrt(var / static_cast<double>(evals.size())), disp);
  return 0;
}

int cmd_sweep(const std::string& cfg_path, const std::string& axis,
              const std::string& values, const std::string& out,
              const std::vector<std::string>& sets) {
  ExperimentConfig cfg = load_config(cfg_path, sets);
  const fs::path out_root =
      out.empty() ? fs::path(cfg.output_dir() + "_sweep") : fs::path(out);
  const auto results = run_sweep(cfg, axis, split_csv(values), out_root);
  for (const auto& r : results)
    std::printf("wrote %s\n", r.out_dir.string().c_str());
  return 0;
}

int cmd_genmatrix(const std::string& ckpt, const std::string& cfg_path,
                  const std::string& kappas_csv, int episodes,
                  const std::string& out) {
  const ExperimentConfig cfg = ExperimentConfig::from_file(cfg_path);
  const NetworkParams actor = load_network(ckpt);
  std::vector<double> kappas;
  for (const auto& k : split_csv(kappas_csv)) kappas.push_back(std::stod(k));
  const auto rows = generalization_matrix(actor, cfg, kappas, episodes);
  std::printf("%-8s %-14s %s\n", "kappa", "mean_return", "std");
  for (const auto& r : rows)
    std::printf("%-8g %-14.4f %.4f\n", r.kappa, r.mean, r.stdev);
  if (!out.empty()) {
    write_genmatrix_csv(out, rows);
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

int cmd_oracle_check() {
  int failures = 0;
  auto report = [&](const char* name, bool ok, double value) {
    std::printf("[%s] %-46s %.6g\n", ok ? "PASS" : "FAIL", name, value);
    if (!ok) ++failures;
  };

  const oracle::ChainMdp mdp{10, 1.0, 0.99};
  const double v_inf =
      oracle::chain_q_analytic(mdp, BootstrapMode::InfiniteBootstrap);
  report("chain value, infinite bootstrap (expect 100)",
         std::abs(v_inf - 100.0) < 1e-9, v_inf);
  const double v_term =
      oracle::chain_q_analytic(mdp, BootstrapMode::TreatTimeoutAsTerminal);
  report("chain value, timeout terminal (expect 9.5618)",
         std::abs(v_term - 9.5618) < 1e-4, v_term);

  Rng rng(12345);
  auto critic = make_mlp(4, {5, 5}, 1, 0, OutputActivation::Linear, {}, {}, rng);
  critic.W.back() *= 100.0;
  Eigen::MatrixXd SA = Eigen::MatrixXd::Random(4, 6);
  Eigen::RowVectorXd y = Eigen::RowVectorXd::Random(6);
  Gradients grads = Gradients::zeros_like(critic);
  critic_mse_gradients(critic, SA, {}, y, &grads);
  NetworkParams probe = critic;
  auto loss = [&](const Eigen::VectorXd& flat) {
    unflatten(flat, probe);
    return critic_mse_gradients(probe, SA, {}, y, nullptr);
  };
  const Eigen::VectorXd fd =
      oracle::finite_difference_grad(loss, flatten(critic), 1e-5);
  const Eigen::VectorXd ga = flatten(grads);
  double rel = 0.0;
  for (int i = 0; i < ga.size(); ++i)
    rel = std::max(rel, std::abs(ga[i] - fd[i]) /
                            std::max({std::abs(ga[i]), std::abs(fd[i]), 1e-3}));
  report("critic gradient vs finite differences (rel err)", rel < 1e-4, rel);

  std::vector<double> xs(10000);
  for (double& x : xs) x = rng.uniform(0.0, 1.0);
  const double ks = oracle::ks_uniform_statistic(xs, 0.0, 1.0).statistic;
  report("generator KS statistic below 1% critical value",
         ks < oracle::ks_critical_1pct(xs.size()), ks);

  double sum = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian(0.0, 0.1);
    sum += g;
    sq += g * g;
  }
  const double stdev = std::sqrt((sq - sum * sum / n) / (n - 1));
  report("gaussian sample std (expect 0.1)", std::abs(stdev - 0.1) < 0.003,
         stdev);

  std::printf(failures == 0 ? "all oracle checks passed\n"
                            : "%d oracle check(s) FAILED\n",
              failures);
  return failures == 0 ? 0 : 1;
}

int cmd_plot(const std::string& csv, std::string out) {
  const LearningCurve curve = parse_curve_csv(csv);
  if (out.empty()) out = fs::path(csv).replace_extension(".svg").string();
  write_curve_svg(out, curve, fs::path(csv).stem().string());
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"locolab: environment-design laboratory for TD3 locomotion"};
  app.require_subcommand(1);

  std::string cfg_path, ckpt, out, seeds, axis, values, kappas, csv;
  std::vector<std::string> sets;
  int episodes = 10;
  bool strip = false;
  double kappa = 0.0;
  std::uint64_t eval_seed = 1;

  auto* train = app.add_subcommand("train", "run a multi-seed training experiment");
  train->add_option("config", cfg_path, "config file")->required();
  train->add_option("--out", out, "output directory");
  train->add_option("--seeds", seeds, "comma-separated seed list override");
  train->add_option("--set", sets, "extra key=value config overrides");

  auto* eval = app.add_subcommand("eval", "evaluate a saved actor");
  eval->add_option("checkpoint", ckpt)->required();
  eval->add_option("config", cfg_path)->required();
  eval->add_option("--episodes", episodes);
  eval->add_flag("--strip-survival-bonus", strip);
  auto* kappa_opt = eval->add_option("--kappa", kappa, "evaluation ISD width");
  eval->add_option("--seed", eval_seed);

  auto* sweep = app.add_subcommand("sweep", "one experiment per axis value");
  sweep->add_option("config", cfg_path)->required();
  sweep->add_option("--axis", axis, "config key to vary")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  sweep->add_option("--out", out);
  sweep->add_option("--set", sets);

  auto* gen = app.add_subcommand("genmatrix", "initial-state generalization matrix");
  gen->add_option("checkpoint", ckpt)->required();
  gen->add_option("--config", cfg_path, "environment config")->required();
  gen->add_option("--kappas", kappas, "comma-separated test widths")->required();
  gen->add_option("--episodes", episodes)->default_val(100);
  gen->add_option("--out", out, "also write a CSV table");

  auto* oracle_check =
      app.add_subcommand("oracle-check", "run the independent oracle self-checks");

  auto* plot = app.add_subcommand("plot", "render a learning-curve CSV as SVG");
  plot->add_option("csv", csv)->required();
  plot->add_option("--out", out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(cfg_path, out, seeds, sets);
    if (eval->parsed())
      return cmd_eval(ckpt, cfg_path, episodes, strip, kappa,
                      kappa_opt->count() > 0, eval_seed);
    if (sweep->parsed()) return cmd_sweep(cfg_path, axis, values, out, sets);
    if (gen->parsed()) return cmd_genmatrix(ckpt, cfg_path, kappas, episodes, out);
    if (oracle_check->parsed()) return cmd_oracle_check();
    if (plot->parsed()) return cmd_plot(csv, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
