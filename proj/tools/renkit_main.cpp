// Command-line surface for the toolkit: certificate verification,
// simulation-error fitting, rollout evaluation, adversarial probing,
// feedforward conversion and the nonconvexity demo. Every run that
// writes artifacts also writes a manifest with the exact command line
// and configuration, and all randomness flows through one recorded
// seed, so outputs replay bit-exactly.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "renkit/renkit.hpp"

namespace {

using namespace renkit;

constexpr int kExitFeasible = 0;
constexpr int kExitInfeasible = 1;
constexpr int kExitError = 2;

std::string fmt(double v) { return detail::format_double(v); }

void write_manifest(const std::string& command, const std::vector<std::string>& argv,
                    std::uint64_t seed, const Json& config, const Json& inputs,
                    const Json& outputs, const std::string& path) {
  Json j;
  j["command"] = command;
  j["toolkit_version"] = kVersion;
  j["seed"] = seed;
  Json args = Json::array();
  for (const auto& a : argv) args.push_back(a);
  j["argv"] = std::move(args);
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  detail::write_file(path, j.dump(2) + "\n");
}

void print_report(const std::string& label, const SymCheckReport& report) {
  std::cout << label << ": " << (report.feasible ? "feasible" : "infeasible")
            << " (min eigenvalue " << fmt(report.min_eigenvalue) << ", margin "
            << fmt(report.margin_used) << ", dimension " << report.dimension << ")\n";
}

int run_verify(const std::string& model_path, std::optional<double> gamma, double margin,
               bool as_json) {
  if (gamma && *gamma <= 0.0) throw InvariantError("--gamma must be > 0");
  const ModelFileData data = load_model(model_path);

  const SymCheckReport stability = detail::family_stability_check(data, margin);
  std::optional<SymCheckReport> lipschitz;
  double gamma_used = 0.0;
  if (gamma) {
    gamma_used = *gamma;
    lipschitz = detail::family_lipschitz_check(data, gamma_used, margin);
  } else if (data.gamma) {
    gamma_used = *data.gamma;
    lipschitz = detail::family_lipschitz_check(data, gamma_used, margin);
  }

  const bool feasible = stability.feasible && (!lipschitz || lipschitz->feasible);
  if (as_json) {
    Json j;
    j["family"] = family_name(data.family());
    j["feasible"] = feasible;
    j["stability"] = {{"feasible", stability.feasible},
                      {"min_eigenvalue", stability.min_eigenvalue},
                      {"margin", stability.margin_used}};
    if (lipschitz)
      j["lipschitz"] = {{"gamma", gamma_used},
                        {"feasible", lipschitz->feasible},
                        {"min_eigenvalue", lipschitz->min_eigenvalue}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "family: " << family_name(data.family()) << "\n";
    print_report("stability/well-posedness", stability);
    if (lipschitz) print_report("lipschitz gamma=" + fmt(gamma_used), *lipschitz);
  }
  return feasible ? kExitFeasible : kExitInfeasible;
}

struct FitFlags {
  std::string data_path, family = "contracting-ren", out = "model.json", trace_path;
  std::string dims;  // "n" or "n,q"; overrides --n/--q when given
  Index n = 2, q = 4;
  std::string act = "tanh";
  double lr = 0.02;
  int iterations = 1000;
  std::string optimizer = "adam";
  std::string grad = "analytic";
  double fd_step = 1e-5;
  std::uint64_t seed = 0;
  double require_nrmse = -1.0;
  double gamma_target = 0.0;
  double gamma_weight = 0.0;
  double gamma_margin = 0.0;
};

int run_fit(FitFlags flags, const std::vector<std::string>& argv) {
  if (!flags.dims.empty()) {
    std::size_t pos = 0;
    try {
      flags.n = std::stol(flags.dims, &pos);
      if (pos < flags.dims.size()) {
        if (flags.dims[pos] != ',') throw std::invalid_argument(flags.dims);
        std::size_t pos2 = 0;
        flags.q = std::stol(flags.dims.substr(pos + 1), &pos2);
        if (pos + 1 + pos2 != flags.dims.size()) throw std::invalid_argument(flags.dims);
      }
    } catch (const std::exception&) {
      throw InvariantError("--dims must be 'n' or 'n,q'");
    }
  }
  if (flags.n < 1) throw InvariantError("state dimension must be >= 1");
  if (flags.q < 0) throw InvariantError("channel width must be >= 0");
  const TimeSeriesDataset data = load_timeseries(flags.data_path);

  FitSpec spec;
  if (flags.family == "stable-lti") {
    spec.family = FitFamily::stable_lti;
  } else if (flags.family == "contracting-ren") {
    spec.family = FitFamily::contracting_ren;
  } else {
    throw InvariantError("--family must be stable-lti or contracting-ren");
  }
  spec.n = flags.n;
  spec.q = flags.q;
  spec.act = activation_from_name(flags.act);
  if (flags.gamma_weight > 0.0) {
    if (flags.gamma_target <= 0.0)
      throw InvariantError("--gamma-target must be > 0 when --gamma-weight is set");
    spec.penalty = LipschitzPenalty{flags.gamma_target, flags.gamma_weight, flags.gamma_margin};
  }

  FitConfig config;
  config.learning_rate = flags.lr;
  config.iterations = flags.iterations;
  config.seed = flags.seed;
  if (flags.optimizer == "adam") {
    config.optimizer = Optimizer::adam_like;
  } else if (flags.optimizer == "gd") {
    config.optimizer = Optimizer::gradient_descent;
  } else {
    throw InvariantError("--optimizer must be adam or gd");
  }
  if (flags.grad == "analytic") {
    config.grad_mode = GradMode::analytic_unrolled;
  } else if (flags.grad == "fd") {
    config.grad_mode = GradMode::finite_difference;
  } else {
    throw InvariantError("--grad must be analytic or fd");
  }
  config.fd_step = flags.fd_step;

  const FitResult result = fit(spec, data, config);

  ModelFileData out;
  out.metadata["generator"] = std::string("renkit ") + kVersion;
  out.metadata["optimizer"] = flags.optimizer + " (beta1=0.9, beta2=0.999, eps=1e-8)";
  out.metadata["seed"] = std::to_string(flags.seed);
  if (std::holds_alternative<ImplicitLti>(result.model)) {
    const auto& m = std::get<ImplicitLti>(result.model);
    if (!check_stable_lmi(m, 0.0).feasible)
      throw NumericalError("fit produced an uncertified model (this should be impossible)");
    out.model = m;
  } else {
    const auto& m = std::get<Ren>(result.model);
    if (!check_contracting_ren(m, 0.0).feasible)
      throw NumericalError("fit produced an uncertified model (this should be impossible)");
    out.model = m;
  }
  out.margin = 0.0;
  save_model(out, flags.out);

  const std::string trace_path =
      flags.trace_path.empty() ? flags.out + ".trace.csv" : flags.trace_path;
  {
    std::string csv = "iteration,loss,nrmse\n";
    for (const auto& point : result.trace)
      csv += std::to_string(point.iteration) + "," + fmt(point.loss) + "," + fmt(point.nrmse) +
             "\n";
    detail::write_file(trace_path, csv);
  }

  Json config_json{{"family", flags.family},
                   {"n", flags.n},
                   {"q", flags.q},
                   {"activation", flags.act},
                   {"learning_rate", flags.lr},
                   {"iterations", flags.iterations},
                   {"optimizer", flags.optimizer},
                   {"grad_mode", flags.grad},
                   {"fd_step", flags.fd_step}};
  if (spec.penalty)
    config_json["lipschitz_penalty"] = {{"gamma", spec.penalty->gamma},
                                        {"weight", spec.penalty->weight},
                                        {"target_margin", spec.penalty->target_margin}};
  write_manifest("fit", argv, flags.seed, config_json, Json{{"data", flags.data_path}},
                 Json{{"model", flags.out}, {"trace", trace_path}}, flags.out + ".manifest.json");

  const double final_nrmse = result.trace.back().nrmse;
  std::cout << "final loss " << fmt(result.trace.back().loss) << ", NRMSE " << fmt(final_nrmse)
            << "\n";
  std::cout << "model written to " << flags.out << "\n";
  if (flags.require_nrmse >= 0.0 && !(final_nrmse <= flags.require_nrmse)) {
    std::cout << "NRMSE requirement " << fmt(flags.require_nrmse) << " not met\n";
    return kExitInfeasible;
  }
  return kExitFeasible;
}

int run_simulate(const std::string& model_path, const std::string& data_path,
                 const std::string& out_path, const std::vector<std::string>& argv) {
  const ModelFileData data = load_model(model_path);
  const TimeSeriesDataset ts = load_timeseries(data_path);

  Matrix y;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, EquilibriumNetwork>) {
          y.resize(ts.T(), m.p());
          for (Index t = 0; t < ts.T(); ++t)
            y.row(t) = forward(m, ts.u.row(t).transpose()).transpose();
        } else {
          y = simulate(m, ts.u, Vector::Zero(m.n())).y;
        }
      },
      data.model);
  require(y.cols() == ts.y.cols(), "simulate: model output dimension does not match data");

  std::string csv = "t";
  for (Index j = 0; j < y.cols(); ++j) csv += ",y_" + std::to_string(j + 1);
  csv += "\n";
  for (Index t = 0; t < y.rows(); ++t) {
    csv += std::to_string(t);
    for (Index j = 0; j < y.cols(); ++j) csv += "," + fmt(y(t, j));
    csv += "\n";
  }
  detail::write_file(out_path, csv);

  const double err = simulation_error(y, ts.y);
  const double score = nrmse(y, ts.y);
  std::cout << "simulation error " << fmt(err) << ", NRMSE " << fmt(score) << "\n";
  std::cout << "predictions written to " << out_path << "\n";
  write_manifest("simulate", argv, 0, Json::object(),
                 Json{{"model", model_path}, {"data", data_path}},
                 Json{{"predictions", out_path}}, out_path + ".manifest.json");
  return kExitFeasible;
}

int run_attack(const std::string& model_path, const std::string& data_path, int restarts,
               int steps, double step_size, std::optional<double> budget, std::uint64_t seed,
               const std::string& out_path, const std::string& trace_path,
               const std::vector<std::string>& argv) {
  const ModelFileData data = load_model(model_path);
  const TimeSeriesDataset ts = load_timeseries(data_path);

  AttackConfig cfg;
  cfg.restarts = restarts;
  cfg.steps = steps;
  cfg.step_size = step_size;
  cfg.budget = budget;
  cfg.seed = seed;
  cfg.validate();

  std::string trace_csv = "restart,iteration,ratio\n";
  AttackTraceFn trace = [&](int r, int k, double ratio) {
    trace_csv += std::to_string(r) + "," + std::to_string(k) + "," + fmt(ratio) + "\n";
  };

  AttackResult result;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ExplicitLti>) {
          ImplicitLti implicit;
          implicit.E = Matrix::Identity(m.n(), m.n());
          implicit.F = m.A;
          implicit.K = m.B;
          implicit.C = m.C;
          implicit.D = m.D;
          implicit.P = Matrix::Identity(m.n(), m.n());
          result = lipschitz_lower_bound(implicit, ts.u, cfg, trace);
        } else {
          result = lipschitz_lower_bound(m, ts.u, cfg, trace);
        }
      },
      data.model);

  Json j;
  j["gamma_lb"] = result.gamma_lb;
  j["iterations"] = result.iterations;
  j["perturbation"] = detail::matrix_to_json(result.perturbation);
  j["base_input"] = detail::matrix_to_json(result.base_input);
  detail::write_file(out_path, j.dump(2) + "\n");
  if (!trace_path.empty()) detail::write_file(trace_path, trace_csv);

  std::cout << "empirical Lipschitz lower bound " << fmt(result.gamma_lb) << " ("
            << result.iterations << " evaluations)\n";
  if (data.gamma)
    std::cout << "certified gamma " << fmt(*data.gamma)
              << (result.gamma_lb <= *data.gamma * (1.0 + 1e-6) ? " dominates the bound\n"
                                                                : " VIOLATED by the bound\n");
  Json outputs{{"attack", out_path}};
  if (!trace_path.empty()) outputs["trace"] = trace_path;
  write_manifest("attack", argv, seed,
                 Json{{"restarts", restarts},
                      {"steps", steps},
                      {"step_size", step_size},
                      {"budget", budget ? Json(*budget) : Json(nullptr)}},
                 Json{{"model", model_path}, {"data", data_path}}, outputs,
                 out_path + ".manifest.json");
  return kExitFeasible;
}

int run_convert(const std::string& weights_path, const std::string& out_path,
                const std::vector<std::string>& argv) {
  const FeedforwardSpec spec = load_feedforward(weights_path);
  EquilibriumNetwork net = from_feedforward(spec);
  const auto report = check_wellposed(net, 0.0);

  ModelFileData out;
  out.model = net;
  out.metadata["generator"] = std::string("renkit ") + kVersion;
  out.metadata["source"] = weights_path;
  if (report.feasible) out.margin = 0.0;
  save_model(out, out_path);

  print_report("well-posedness", report);
  if (!report.feasible)
    std::cout << "note: conversion is still exact (block-triangular networks solve by forward "
                 "substitution); the certificate is simply not claimed in the output file\n";
  std::cout << "equilibrium network written to " << out_path << "\n";
  write_manifest("convert", argv, 0, Json::object(), Json{{"weights", weights_path}},
                 Json{{"model", out_path}}, out_path + ".manifest.json");
  return kExitFeasible;
}

int run_demo(bool as_json) {
  const auto demo = nonconvexity_demo();
  if (as_json) {
    Json j;
    j["rho_a"] = demo.rho_a;
    j["rho_b"] = demo.rho_b;
    j["rho_c"] = demo.rho_c;
    std::cout << j.dump(2) << "\n";
    return kExitFeasible;
  }
  std::cout << "Stable matrices can average to an unstable one:\n";
  std::cout << "  A_a = [0.5 2; 0 0]        spectral radius " << fmt(demo.rho_a) << "\n";
  std::cout << "  A_b = [0 0; 2 0.5]        spectral radius " << fmt(demo.rho_b) << "\n";
  std::cout << "  A_c = (A_a + A_b) / 2     spectral radius " << fmt(demo.rho_c) << "\n";
  std::cout << "The set of Schur-stable A is non-convex; the implicit (E, F, P)\n"
               "parameterization is what makes the stable set convex.\n";
  return kExitFeasible;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"renkit: toolkit for stable and robust dynamical models"};
  app.require_subcommand(1);

  // verify
  auto* verify = app.add_subcommand("verify", "re-check a model file's certificates");
  std::string verify_model;
  double verify_margin = 0.0;
  double verify_gamma = 0.0;
  bool verify_gamma_set = false, verify_json = false;
  verify->add_option("model", verify_model, "model JSON file")->required();
  verify->add_option("--margin", verify_margin, "eigenvalue margin for the checks");
  verify->add_option("--gamma", verify_gamma, "Lipschitz bound to verify")
      ->each([&](const std::string&) { verify_gamma_set = true; });
  verify->add_flag("--json", verify_json, "machine-readable output");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit a certified model to time-series data");
  FitFlags fit_flags;
  fit_cmd->add_option("data", fit_flags.data_path, "training CSV")->required();
  fit_cmd->add_option("--family", fit_flags.family, "stable-lti or contracting-ren");
  fit_cmd->add_option("--dims", fit_flags.dims, "model dimensions as 'n' or 'n,q'");
  fit_cmd->add_option("--n", fit_flags.n, "state dimension");
  fit_cmd->add_option("--q", fit_flags.q, "nonlinear channel width (REN only)");
  fit_cmd->add_option("--act", fit_flags.act, "activation (relu|tanh|sigmoid_rescaled)");
  fit_cmd->add_option("--out", fit_flags.out, "output model path");
  fit_cmd->add_option("--trace", fit_flags.trace_path, "loss trace CSV path");
  fit_cmd->add_option("--lr", fit_flags.lr, "learning rate");
  fit_cmd->add_option("--iters", fit_flags.iterations, "optimizer iterations");
  fit_cmd->add_option("--optimizer", fit_flags.optimizer, "adam or gd");
  fit_cmd->add_option("--grad", fit_flags.grad, "analytic or fd");
  fit_cmd->add_option("--fd-step", fit_flags.fd_step, "central-difference step");
  fit_cmd->add_option("--seed", fit_flags.seed, "random seed");
  fit_cmd->add_option("--require-nrmse", fit_flags.require_nrmse,
                      "exit 1 unless the final NRMSE is at most this");
  fit_cmd->add_option("--gamma-target", fit_flags.gamma_target,
                      "Lipschitz penalty target gamma");
  fit_cmd->add_option("--gamma-weight", fit_flags.gamma_weight,
                      "Lipschitz penalty weight (0 disables)");
  fit_cmd->add_option("--gamma-margin", fit_flags.gamma_margin,
                      "Lipschitz penalty eigenvalue margin");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "roll a model over a dataset and report NRMSE");
  std::string sim_model, sim_data, sim_out = "predictions.csv";
  sim_cmd->add_option("model", sim_model, "model JSON file")->required();
  sim_cmd->add_option("data", sim_data, "dataset CSV")->required();
  sim_cmd->add_option("--out", sim_out, "predictions CSV path");

  // attack
  auto* attack_cmd =
      app.add_subcommand("attack", "adversarial lower bound on the Lipschitz constant");
  std::string attack_model, attack_data, attack_out = "attack.json", attack_trace;
  int attack_restarts = 20, attack_steps = 500;
  double attack_step_size = 0.01, attack_budget = 0.0;
  std::uint64_t attack_seed = 0;
  attack_cmd->add_option("model", attack_model, "model JSON file")->required();
  attack_cmd->add_option("data", attack_data, "base input CSV")->required();
  attack_cmd->add_option("--restarts", attack_restarts, "random restarts");
  attack_cmd->add_option("--steps", attack_steps, "ascent steps per restart");
  attack_cmd->add_option("--step-size", attack_step_size, "step size relative to input scale");
  attack_cmd->add_option("--budget", attack_budget, "fixed perturbation norm (0 = free)");
  attack_cmd->add_option("--seed", attack_seed, "random seed");
  attack_cmd->add_option("--out", attack_out, "attack result JSON path");
  attack_cmd->add_option("--trace", attack_trace, "attack trace CSV path");

  // convert
  auto* convert_cmd =
      app.add_subcommand("convert", "rewrite feedforward weights as an equilibrium network");
  std::string convert_weights, convert_out = "eqnet.json";
  convert_cmd->add_option("weights", convert_weights, "feedforward weights JSON")->required();
  convert_cmd->add_option("--out", convert_out, "output model path");

  // demo-nonconvexity
  auto* demo_cmd = app.add_subcommand("demo-nonconvexity",
                                      "print the stable-average counterexample radii");
  bool demo_json = false;
  demo_cmd->add_flag("--json", demo_json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (verify->parsed())
      return run_verify(verify_model,
                        verify_gamma_set ? std::optional<double>(verify_gamma) : std::nullopt,
                        verify_margin, verify_json);
    if (fit_cmd->parsed()) return run_fit(fit_flags, args);
    if (sim_cmd->parsed()) return run_simulate(sim_model, sim_data, sim_out, args);
    if (attack_cmd->parsed())
      return run_attack(attack_model, attack_data, attack_restarts, attack_steps,
                        attack_step_size,
                        attack_budget > 0.0 ? std::optional<double>(attack_budget) : std::nullopt,
                        attack_seed, attack_out, attack_trace, args);
    if (convert_cmd->parsed()) return run_convert(convert_weights, convert_out, args);
    if (demo_cmd->parsed()) return run_demo(demo_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  std::cerr << "error: no subcommand\n";
  return kExitError;
}
