#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "hybred/commands.hpp"

namespace {

std::pair<std::string, double> parse_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    throw hybred::Error(hybred::ErrorKind::validation, "--param expects name=value, got '" + text + "'");
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text.substr(eq + 1), &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() - eq - 1)
    throw hybred::Error(hybred::ErrorKind::validation, "--param value is not a number in '" + text + "'");
  return {text.substr(0, eq), value};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate, verify and reduce hybrid Hamiltonian systems with symmetry"};
  app.set_help_flag("--help", "print help");
  app.require_subcommand(1);

  std::string spec_path;
  std::vector<double> x0, mu;
  double T = 0, h = 0, tol_state = 0, tol_time = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::vector<std::string> params;

  struct Flags {
    CLI::Option* x0 = nullptr;
    CLI::Option* T = nullptr;
    CLI::Option* h = nullptr;
    CLI::Option* mu = nullptr;
    CLI::Option* out = nullptr;
    CLI::Option* tol_state = nullptr;
    CLI::Option* tol_time = nullptr;
  };
  std::vector<std::pair<CLI::App*, Flags>> commands;
  for (const char* name : {"simulate", "verify", "reduce", "compare"}) {
    CLI::App* sub = app.add_subcommand(name);
    Flags f;
    sub->add_option("--spec", spec_path, "system description (JSON)")->required()->check(CLI::ExistingFile);
    f.x0 = sub->add_option("--x0", x0, "initial state q1..qn p1..pn")->delimiter(',');
    f.T = sub->add_option("--T", T, "final time");
    f.h = sub->add_option("--h", h, "step size");
    f.mu = sub->add_option("--mu", mu, "momentum level")->delimiter(',');
    sub->add_option("--seed", seed, "sampler seed");
    f.out = sub->add_option("--out", out_dir, "output directory");
    f.tol_state = sub->add_option("--tol-state", tol_state, "state tolerance for compare");
    f.tol_time = sub->add_option("--tol-time", tol_time, "impact-time tolerance for compare");
    sub->add_option("--param", params, "parameter override name=value");
    commands.emplace_back(sub, f);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : hybred::exit_input;
  }

  return hybred::run_command(
      [&]() -> int {
        hybred::SystemSpec spec = hybred::load_spec(spec_path);
        for (const auto& [sub, f] : commands) {
          if (!sub->parsed()) continue;
          hybred::CommandOptions opts;
          opts.seed = seed;
          if (*f.x0) opts.x0 = x0;
          if (*f.T) opts.T = T;
          if (*f.h) opts.h = h;
          if (*f.mu) opts.mu = mu;
          if (*f.out) opts.out_dir = out_dir;
          if (*f.tol_state) opts.tol_state = tol_state;
          if (*f.tol_time) opts.tol_time = tol_time;
          for (const auto& p : params) opts.params.push_back(parse_assignment(p));
          const std::string name = sub->get_name();
          if (name == "simulate") return hybred::cmd_simulate(spec, opts, std::cout);
          if (name == "verify") return hybred::cmd_verify(spec, opts, std::cout);
          if (name == "reduce") return hybred::cmd_reduce(spec, opts, std::cout);
          return hybred::cmd_compare(spec, opts, std::cout);
        }
        return hybred::exit_input;
      },
      std::cerr);
}
