#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "teleop/controller.hpp"
#include "teleop/network.hpp"
#include "teleop/simulator.hpp"
#include "teleop/stability.hpp"

namespace {

using namespace teleop;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// Applies a `--config FILE` argument before parsing: every `key=value` line
// of FILE is appended to the argument list as `--key value...`, except for
// options that already appear on the command line, so explicit flags shadow
// file values. '#' starts a comment; whitespace-separated values expand to
// one token each; flag-valued keys take true/false.
void expand_config_args(CLI::App& app, std::vector<std::string>& args) {
  std::string subname, path;
  std::vector<std::string> given;
  for (size_t a = 0; a < args.size(); ++a) {
    const std::string& tok = args[a];
    if (tok.rfind("--", 0) != 0) {
      if (subname.empty()) subname = tok;
      continue;
    }
    const std::string name = tok.substr(0, tok.find('='));
    if (name == "--config") {
      if (tok.size() > name.size())
        path = tok.substr(name.size() + 1);
      else if (a + 1 < args.size())
        path = args[a + 1];
    } else {
      given.push_back(name);
    }
  }
  if (path.empty() || subname.empty()) return;
  CLI::App* sub = app.get_subcommand_no_throw(subname);
  if (sub == nullptr || sub->get_option_no_throw("--config") == nullptr)
    return; // leave the unknown subcommand or option for the parser to reject

  std::ifstream in(path);
  if (!in.good())
    throw std::invalid_argument("config file not readable: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config file " + path + " line " +
                                  std::to_string(lineno) +
                                  ": expected key=value");
    const std::string key = "--" + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "--config" || std::count(given.begin(), given.end(), key))
      continue;
    const CLI::Option* opt = sub->get_option_no_throw(key);
    if (opt == nullptr)
      throw std::invalid_argument("config file " + path + ": unknown option '" +
                                  key.substr(2) + "'");
    if (opt->get_expected_min() == 0) { // flag: true/false only
      if (value == "true" || value == "1")
        args.push_back(key);
      else if (value != "false" && value != "0")
        throw std::invalid_argument("config file " + path + ": '" +
                                    key.substr(2) + "' takes true or false");
      continue;
    }
    if (value.empty())
      throw std::invalid_argument("config file " + path + ": empty value for '" +
                                  key.substr(2) + "'");
    args.push_back(key);
    std::istringstream pieces(value);
    for (std::string piece; pieces >> piece;) args.push_back(piece);
  }
}

std::vector<double> expand_gain_list(std::vector<double> values, int N,
                                     double fallback, const char* flag) {
  if (values.empty()) values.assign(static_cast<size_t>(N), fallback);
  if (values.size() == 1)
    values.assign(static_cast<size_t>(N), values.front());
  if (values.size() != static_cast<size_t>(N)) {
    std::ostringstream msg;
    msg << flag << " needs one value or one value per slave (" << N << ")";
    throw std::invalid_argument(msg.str());
  }
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      std::ostringstream msg;
      msg << flag << " values must be positive";
      throw std::invalid_argument(msg.str());
    }
  }
  return values;
}

// Deterministic delay profile scaled to the requested bound: at the reference
// MAD of 0.1 it equals 0.04 + 0.06 |sin s|.
std::function<double(double)> scaled_delay_profile(double mad) {
  return [mad](double s) { return mad * (0.4 + 0.6 * std::abs(std::sin(s))); };
}

struct SimulateOptions {
  std::string scenario = "free";
  std::string protocol = "rr";
  int slaves = 3;
  double mati = 0.14;
  double mad = 0.1;
  double duration = -1.0; // scenario default when negative
  double step = -1.0;     // scenario default when negative
  std::string out = "trace.csv";
  std::vector<double> kp;
  std::vector<double> kd;
  std::vector<double> tod_weight;
  int stride = 1;
  double tail = 0.1;
  bool lyapunov = false;
  double pulse_amplitude = 25.0;
  double pulse_on = 0.5;
  double pulse_off = 8.0;
  double wall_y = 0.3;
  double wall_stiffness = 10000.0;
};

Protocol parse_protocol(const std::string& name) {
  return name == "tod" ? Protocol::TOD : Protocol::RR;
}

int run_simulate(const SimulateOptions& opt) {
  const int N = opt.slaves;
  const Protocol protocol = parse_protocol(opt.protocol);

  SimConfig config = SimConfig::defaults(N, protocol);
  config.gains = GainSet::scaled_identity(
      expand_gain_list(opt.kp, N, 20.0, "--kp"),
      expand_gain_list(opt.kd, N, 20.0, "--kd"));
  config.schedule.sampling_interval = opt.mati;
  config.schedule.mati = opt.mati;
  config.schedule.mad = opt.mad;
  config.schedule.delay_fn = scaled_delay_profile(opt.mad);
  if (!opt.tod_weight.empty())
    config.tod_weights = TodWeights::scaled_identity(
        expand_gain_list(opt.tod_weight, N, 1.0, "--tod-weight"));

  Scenario scenario;
  if (opt.scenario == "free") {
    scenario = Scenario::free_motion_default(N);
  } else if (opt.scenario == "force") {
    scenario = Scenario::bounded_force_default(N);
  } else {
    scenario = Scenario::contact_default(N);
    scenario.pulse = RectanglePulse{opt.pulse_amplitude, opt.pulse_on, opt.pulse_off};
    scenario.wall = WallModel{opt.wall_y, opt.wall_stiffness};
  }
  if (opt.duration > 0.0) scenario.duration = opt.duration;
  config.step = opt.step > 0.0
                    ? opt.step
                    : (scenario.kind == Scenario::Kind::contact ? 1e-4 : 1e-3);
  config.trace_stride = opt.stride;

  config.validate();
  scenario.validate(N);

  SimTrace trace = run_simulation(config, scenario);

  if (opt.lyapunov) {
    StabilityQuery query;
    query.N = N;
    query.gains = config.gains;
    query.mad = config.schedule.mad;
    query.protocol = protocol;
    if (protocol == Protocol::RR) {
      const auto res = feasible_rr(query, config.schedule.mati);
      if (res.feasible)
        fill_lyapunov_rr(trace, config, *res.witness);
      else
        std::cerr << "note: no feasible stability certificate at this MATI; "
                     "energy column left empty\n";
    } else {
      const auto res = feasible_tod(query, config.schedule.mati);
      if (res.feasible)
        fill_lyapunov_ve_tod(trace, config, *res.witness);
      else
        std::cerr << "note: no feasible stability certificate at this MATI; "
                     "energy column left empty\n";
    }
  }

  write_csv_trace(trace, opt.out);

  const SteadyStateMetrics metrics = steady_state_metrics(trace, opt.tail);
  std::cout << "scenario " << opt.scenario << ", protocol " << opt.protocol
            << ", N=" << N << ", duration " << scenario.duration
            << " s, step " << config.step << " s\n";
  std::cout << "rows written: " << trace.rows.size()
            << ", packets delivered: " << trace.events.size() << "\n";
  std::cout << "steady-state metrics over the final " << 100.0 * opt.tail
            << "% of the run:\n";
  for (int i = 0; i < N; ++i)
    std::cout << "  mean position error, slave " << i + 1 << ": "
              << metrics.mean_position_error[static_cast<size_t>(i)]
              << " rad\n";
  std::cout << "  mean force residual |f_m + avg f_s|: ["
            << metrics.mean_force_residual[0] << ", "
            << metrics.mean_force_residual[1] << "] N·m\n";
  std::cout << "  force reflection ratio: ["
            << metrics.force_reflection_ratio[0] << ", "
            << metrics.force_reflection_ratio[1] << "]\n";
  std::cout << "  max tail joint speed: " << metrics.max_tail_velocity
            << " rad/s\n";
  std::cout << "trace written to " << opt.out << "\n";
  return 0;
}

struct AnalyzeOptions {
  std::string protocol = "rr";
  int slaves = 3;
  double mad = 0.1;
  std::vector<double> kp;
  std::vector<double> kd;
  double tol = -1.0; // protocol default when negative
};

int run_analyze(const AnalyzeOptions& opt) {
  const Protocol protocol = parse_protocol(opt.protocol);
  StabilityQuery query;
  query.N = opt.slaves;
  query.gains = GainSet::scaled_identity(
      expand_gain_list(opt.kp, opt.slaves, 20.0, "--kp"),
      expand_gain_list(opt.kd, opt.slaves, 20.0, "--kd"));
  query.mad = opt.mad;
  query.protocol = protocol;
  query.validate();

  const double tol = opt.tol > 0.0 ? opt.tol : default_mati_tolerance(protocol);
  const MaxMatiResult result = max_mati(query, tol);

  std::cout << "protocol " << opt.protocol << ", N=" << opt.slaves
            << ", MAD=" << opt.mad << ", tolerance " << tol << " s\n";
  if (!result.feasible) {
    std::cout << "infeasible: no MATI > 0 passes the stability test\n";
    return 0;
  }
  const auto h = delay_horizons(query.N, result.mati, query.mad, protocol);
  std::cout.precision(10);
  std::cout << "max allowable MATI: " << result.mati << " s\n";
  std::cout << "delay horizons at that MATI: h_M=" << h.h_M
            << " s, h_S=" << h.h_S << " s\n";
  if (result.undecided_warning)
    std::cout << "warning: the inner solver was undecided near the boundary; "
                 "the reported MATI is conservative\n";

  if (protocol == Protocol::RR) {
    const auto res = feasible_rr(query, result.mati);
    if (res.feasible) {
      std::cout << "witness variables (scaled identity):\n";
      std::cout << "  r_m=" << res.witness->R_m(0, 0) << "\n";
      for (size_t i = 0; i < res.witness->R_s.size(); ++i)
        std::cout << "  r_s" << i + 1 << "=" << res.witness->R_s[i](0, 0) << "\n";
    }
  } else {
    const auto res = feasible_tod(query, result.mati);
    if (res.feasible) {
      std::cout << "witness variables (scaled identity):\n";
      std::cout << "  r_m=" << res.witness->R_m(0, 0) << "\n";
      for (size_t i = 0; i < res.witness->R_s.size(); ++i)
        std::cout << "  r_s" << i + 1 << "=" << res.witness->R_s[i](0, 0)
                  << " q" << i + 1 << "=" << res.witness->Q[i](0, 0)
                  << " u" << i + 1 << "=" << res.witness->U[i](0, 0)
                  << " g" << i + 1 << "=" << res.witness->G[i](0, 0) << "\n";
    } else {
      std::cout << "(witness omitted: the solver did not re-certify exactly at "
                   "the boundary point)\n";
    }
  }
  return 0;
}

struct TablesOptions {
  std::string out_dir = ".";
};

int run_tables(const TablesOptions& opt) {
  const TableSet set = reproduce_tables();
  std::cout << set.text;
  const std::string text_path = opt.out_dir + "/tables.txt";
  const std::string csv_path = opt.out_dir + "/tables.csv";
  std::ofstream text_out(text_path);
  if (!text_out) throw std::runtime_error("cannot open " + text_path);
  text_out << set.text;
  std::ofstream csv_out(csv_path);
  if (!csv_out) throw std::runtime_error("cannot open " + csv_path);
  csv_out << set.csv;
  std::cout << "written: " << text_path << ", " << csv_path << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Networked single-master/multi-slave teleoperation: simulation and "
      "stability analysis"};
  app.require_subcommand(1);

  SimulateOptions sim;
  CLI::App* simulate =
      app.add_subcommand("simulate", "Integrate a closed-loop scenario and "
                                     "write a CSV trace");
  std::string sim_config;
  simulate->add_option("--config", sim_config,
                       "Config file with key=value lines ('#' comments); "
                       "command-line flags override it");
  simulate->add_option("--scenario", sim.scenario,
                       "Scenario: free | force | contact")
      ->check(CLI::IsMember({"free", "force", "contact"}));
  simulate->add_option("--protocol", sim.protocol, "Scheduling protocol")
      ->check(CLI::IsMember({"rr", "tod"}));
  simulate->add_option("--slaves", sim.slaves, "Number of slave arms (>= 2)")
      ->check(CLI::Range(2, 64));
  simulate->add_option("--mati", sim.mati,
                       "Sampling interval = max transmission interval [s]")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--mad", sim.mad, "Maximum allowable delay [s]; the "
                                         "deterministic delay profile scales "
                                         "with it")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--duration", sim.duration, "Run length [s]");
  simulate->add_option("--step", sim.step,
                       "Integration step [s] (default 1e-4 for contact, 1e-3 "
                       "otherwise)");
  simulate->add_option("--out", sim.out, "Output CSV path");
  simulate->add_option("--kp", sim.kp,
                       "Proportional gain scalar(s): one value or one per "
                       "slave");
  simulate->add_option("--kd", sim.kd, "Damping gain scalar(s)");
  simulate->add_option("--tod-weight", sim.tod_weight,
                       "TOD scheduling weight scalar(s)");
  simulate->add_option("--stride", sim.stride,
                       "Record every k-th step (event rows always kept)")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--tail", sim.tail,
                       "Fraction of the run used for steady-state metrics")
      ->check(CLI::Range(1e-6, 1.0));
  simulate->add_flag("--lyapunov", sim.lyapunov,
                     "Fill the energy-functional column from a feasible "
                     "stability certificate");
  simulate->add_option("--pulse-amplitude", sim.pulse_amplitude,
                       "Contact scenario: operator force amplitude [N]");
  simulate->add_option("--pulse-on", sim.pulse_on,
                       "Contact scenario: force onset time [s]");
  simulate->add_option("--pulse-off", sim.pulse_off,
                       "Contact scenario: force removal time [s]");
  simulate->add_option("--wall-y", sim.wall_y, "Contact scenario: wall plane [m]");
  simulate->add_option("--wall-stiffness", sim.wall_stiffness,
                       "Contact scenario: wall stiffness [N/m]");

  AnalyzeOptions ana;
  CLI::App* analyze = app.add_subcommand(
      "analyze", "Compute the maximum allowable transmission interval");
  std::string ana_config;
  analyze->add_option("--config", ana_config,
                      "Config file with key=value lines ('#' comments); "
                      "command-line flags override it");
  analyze->add_option("--protocol", ana.protocol, "Scheduling protocol")
      ->check(CLI::IsMember({"rr", "tod"}));
  analyze->add_option("--slaves", ana.slaves, "Number of slave arms (>= 2)")
      ->check(CLI::Range(2, 64));
  analyze->add_option("--mad", ana.mad, "Maximum allowable delay [s]")
      ->check(CLI::NonNegativeNumber);
  analyze->add_option("--kp", ana.kp, "Proportional gain scalar(s)");
  analyze->add_option("--kd", ana.kd, "Damping gain scalar(s)");
  analyze->add_option("--tol", ana.tol, "Bisection tolerance [s]");

  TablesOptions tab;
  CLI::App* tables = app.add_subcommand(
      "tables", "Reproduce the reference MATI/delay tables (text + CSV)");
  tables->add_option("--out-dir", tab.out_dir, "Output directory");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    expand_config_args(app, args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::reverse(args.begin(), args.end()); // parse() consumes reversed tokens

  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (analyze->parsed()) return run_analyze(ana);
    return run_tables(tab);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
