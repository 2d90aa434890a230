// adiabat: run one protocol or a velocity sweep from a config file.
#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "adiabatic/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

struct Overrides {
  std::optional<std::string> out_dir;
  std::optional<double> dt;
  std::optional<double> velocity;
};

adiabatic::RunConfig load(const std::string& path, const Overrides& o) {
  adiabatic::RunConfig cfg = adiabatic::load_config(path);
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.dt) cfg.dt = *o.dt;
  if (o.velocity) cfg.velocity = *o.velocity;
  adiabatic::validate(cfg);
  return cfg;
}

int report(const adiabatic::Error& e, int code) {
  std::cerr << "error: " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Degenerate adiabatic transport: exact vs. Wilczek-Zee runs"};
  app.require_subcommand(1);
  Overrides o;
  std::string config;
  bool emit_gamma = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config, "config file")->required();
    sub->add_option_function<std::string>("--out-dir", [&](const std::string& s) { o.out_dir = s; },
                                          "output directory");
    sub->add_option_function<double>("--dt", [&](double v) { o.dt = v; }, "integration step");
    sub->add_flag("--emit-gamma", emit_gamma, "print Gamma and its spectrum at the protocol start");
  };
  CLI::App* run = app.add_subcommand("run", "single protocol run");
  add_common(run);
  run->add_option_function<double>("--velocity", [&](double v) { o.velocity = v; }, "scan velocity");
  CLI::App* sweep = app.add_subcommand("sweep", "velocity sweep with scaling fits");
  add_common(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  adiabatic::RunConfig cfg;
  try {
    cfg = load(config, o);
  } catch (const adiabatic::Error& e) {
    return report(e, kConfigError);
  }

  try {
    if (emit_gamma) adiabatic::emit_gamma(cfg, std::cout);
    if (run->parsed()) {
      const auto res = adiabatic::run_scenario(cfg);
      std::cout << adiabatic::summary_line(res) << "\nwrote " << res.csv.string() << "\n";
      return kOk;
    }
    const auto res = adiabatic::run_sweep(cfg);
    for (const auto& r : res.runs) std::cout << adiabatic::summary_line(r) << "\n";
    if (res.perp_fit) {
      std::cout << "mean_perp slope=" << res.perp_fit->slope << " r2=" << res.perp_fit->r2 << "\n";
    }
    if (res.par_fit) {
      std::cout << "max_par slope=" << res.par_fit->slope << " r2=" << res.par_fit->r2 << "\n";
    }
    std::cout << "wrote " << res.summary_csv.string() << " and " << res.scaling_csv.string() << "\n";
    if (!res.fit_error.empty()) {
      std::cerr << "error: " << res.fit_error
                << "\nhint: extend the scan interval, or use at least 3 distinct velocities over a wider range\n";
      return kNumericalError;
    }
    return kOk;
  } catch (const adiabatic::Error& e) {
    return report(e, adiabatic::is_config_error(e.code()) ? kConfigError : kNumericalError);
  }
}
