// xbar: crossbar characterization and design-space exploration front end.
//
// Pipeline: calibrate -> characterize -> surrogate -> explore -> report.
// Everything below the argument handling lives in the header-only library.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xbar/xbar.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitSolver = 4;
constexpr int kExitIo = 5;

struct GlobalOptions {
  std::string config_path;
  std::string workspace_override;
  int workers = 0;  // 0 -> hardware concurrency
  unsigned seed = 0;  // reserved; the pipeline is deterministic
};

xbar::ToolkitConfig load_config(const GlobalOptions& g) {
  xbar::ToolkitConfig config;
  if (!g.config_path.empty()) config = xbar::ToolkitConfig::load(g.config_path);
  if (const char* env = std::getenv("XBAR_WORKSPACE"))
    config.paths.workspace = env;
  if (!g.workspace_override.empty()) config.paths.workspace = g.workspace_override;
  return config;
}

int effective_workers(const GlobalOptions& g) {
  if (g.workers > 0) return g.workers;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::vector<xbar::AnchorPoint> parse_anchors(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw xbar::WorkspaceError("cannot open anchors file " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw xbar::ConfigError("anchors file parse error: " + std::string(e.what()));
  }
  std::vector<xbar::AnchorPoint> anchors;
  for (const auto& a : j) {
    xbar::AnchorPoint p;
    p.size = a.at("size").get<int>();
    p.sub_size = a.value("sub_size", p.size);
    p.sum_g = a.at("sum_g").get<double>();
    anchors.push_back(p);
  }
  return anchors;
}

int cmd_calibrate(const GlobalOptions& g, const std::string& anchors_path,
                  const std::string& output_path) {
  xbar::ToolkitConfig config = load_config(g);
  auto anchors = parse_anchors(anchors_path);
  if (anchors.empty()) {
    std::cerr << "calibrate: anchors file is empty\n";
    return kExitUsage;
  }
  xbar::CalibrationOptions opts;
  opts.workers = 1;  // calibration is single-threaded by design
  xbar::CalibrationResult result = xbar::calibrate_to_anchors(
      anchors, config.device_params(), config.crossbar_config(1), opts);
  config.device.g_lrs = result.g_lrs;
  config.wire.r_seg = result.r_seg;
  config.save(output_path);
  std::cout << "calibrated g_lrs = " << result.g_lrs << " S, r_seg = " << result.r_seg
            << " ohm (" << result.evaluations << " simulations)\n";
  for (size_t i = 0; i < anchors.size(); ++i)
    std::cout << "  anchor N=" << anchors[i].size << " sub=" << anchors[i].sub_size
              << " target=" << anchors[i].sum_g << " S: residual "
              << result.residuals[i] * 100.0 << "%\n";
  std::cout << "wrote " << output_path << "\n";
  return 0;
}

int cmd_characterize(const GlobalOptions& g, std::vector<int> sizes,
                     std::vector<int> bits) {
  xbar::ToolkitConfig config = load_config(g);
  if (!sizes.empty()) config.surrogate.sizes = sizes;
  if (!bits.empty()) config.surrogate.bits = bits;
  config.validate();
  xbar::Workspace ws{config.paths.workspace};
  const int workers = effective_workers(g);
  for (int n : config.surrogate.sizes) {
    if (ws.has_characterization(n, config.fingerprint(), config.surrogate.bits)) {
      std::cout << "N=" << n << ": cached (fingerprint match)\n";
      continue;
    }
    std::cout << "N=" << n << ": simulating " << n << " segments" << std::flush;
    int done = 0;
    auto result = ws.characterize_cached(config, n, workers, [&](int) {
      if (++done % 16 == 0) std::cout << " ." << std::flush;
    });
    std::cout << " done; sum G_eff = " << result.cumulative_conductance << " S\n";
  }
  return 0;
}

int cmd_surrogate(const GlobalOptions& g) {
  xbar::ToolkitConfig config = load_config(g);
  xbar::Workspace ws{config.paths.workspace};
  std::vector<xbar::CharacterizationResult> results;
  for (int n : config.surrogate.sizes) results.push_back(ws.load_characterization(n));
  xbar::SurrogateModel model = xbar::build_surrogate(results, config.surrogate.bits);
  ws.save_surrogate(model);
  std::cout << "wrote " << ws.surrogate_path().string() << " (" << model.sizes.size()
            << " sizes, " << model.bits.size() << " resolutions)\n";
  auto collapse = xbar::normalized_profile_collapse(model);
  std::cout << "normalized-profile collapse (gate " << config.surrogate.collapse_gate
            << "):\n";
  for (const auto& p : collapse.pairs)
    std::cout << "  N=" << p.size_a << " vs N=" << p.size_b << ": max deviation "
              << p.max_deviation << "\n";
  std::cout << "  overall max deviation " << collapse.max_deviation
            << (collapse.max_deviation <= config.surrogate.collapse_gate ? " (pass)"
                                                                         : " (FAIL)")
            << "\n";
  for (const auto& w : model.warnings) std::cout << "warning: " << w << "\n";
  return collapse.max_deviation <= config.surrogate.collapse_gate ? 0 : 1;
}

struct RangeSpec {
  double lo = 0.0, hi = 0.0, step = 0.0;
  bool set = false;
};

bool parse_range(const std::string& s, RangeSpec& out) {
  std::istringstream is(s);
  char c1 = 0, c2 = 0;
  if (!(is >> out.lo >> c1 >> out.hi >> c2 >> out.step) || c1 != ':' || c2 != ':')
    return false;
  if (out.step <= 0.0 || out.hi < out.lo) return false;
  out.set = true;
  return true;
}

// A constraint is reported active when the optimum sits within one grid step
// of its boundary: some neighboring grid point violates specifically it.
std::vector<std::string> active_constraints(const xbar::ExplorationResult& result) {
  if (!result.optimum) return {};
  const auto& grid = result.grid;
  const auto& c = result.constraints;
  size_t ni = 0, fi = 0, bi = 0;
  for (size_t i = 0; i < grid.n_values.size(); ++i)
    if (grid.n_values[i] == result.optimum->point.n) ni = i;
  for (size_t i = 0; i < grid.f_values.size(); ++i)
    if (grid.f_values[i] == result.optimum->point.f) fi = i;
  for (size_t i = 0; i < grid.bits_values.size(); ++i)
    if (grid.bits_values[i] == result.optimum->point.bits) bi = i;
  bool power_active = false, rmse_active = false, elmore_active = false;
  auto probe = [&](size_t nj, size_t fj, size_t bj) {
    const auto& ep = result.at(nj, fj, bj);
    double ptot = ep.power.total();
    if (c.max_power && ptot > *c.max_power) power_active = true;
    if (c.max_rmse && ep.rmse > *c.max_rmse) rmse_active = true;
    if (c.limit_f_by_elmore && ep.point.f > ep.f_cap) elmore_active = true;
  };
  if (ni + 1 < grid.n_values.size()) probe(ni + 1, fi, bi);
  if (fi + 1 < grid.f_values.size()) probe(ni, fi + 1, bi);
  if (bi + 1 < grid.bits_values.size()) probe(ni, fi, bi + 1);
  // boundary optimum on the last grid line counts as active too
  if (c.max_power && ni + 1 == grid.n_values.size() &&
      result.optimum->power.total() > 0.8 * *c.max_power)
    power_active = true;
  std::vector<std::string> active;
  if (power_active) active.push_back("max_power");
  if (rmse_active) active.push_back("max_rmse");
  if (elmore_active) active.push_back("elmore_f_cap");
  return active;
}

int cmd_explore(const GlobalOptions& g, std::optional<double> max_power,
                std::optional<double> max_rmse, std::optional<double> fix_f,
                std::optional<int> fix_bits, const RangeSpec& n_range,
                const RangeSpec& f_range, const RangeSpec& bits_range,
                bool limit_f_by_elmore) {
  if (fix_f && f_range.set) {
    std::cerr << "explore: --fix-f conflicts with --f-range\n";
    return kExitUsage;
  }
  if (fix_bits && bits_range.set) {
    std::cerr << "explore: --fix-bits conflicts with --bits-range\n";
    return kExitUsage;
  }
  xbar::ToolkitConfig config = load_config(g);
  xbar::Workspace ws{config.paths.workspace};
  xbar::SurrogateModel model = ws.load_surrogate();
  if (model.fingerprint != config.fingerprint())
    throw xbar::FingerprintMismatch("explore: surrogate fingerprint " +
                                    model.fingerprint + " does not match config " +
                                    config.fingerprint());

  xbar::ExplorationGrid grid;
  if (n_range.set)
    grid.n_values = xbar::ExplorationGrid::int_range(
        static_cast<int>(n_range.lo), static_cast<int>(n_range.hi),
        static_cast<int>(n_range.step));
  else
    grid.n_values = xbar::ExplorationGrid::int_range(model.sizes.front(),
                                                     model.sizes.back(), 1);
  if (fix_f)
    grid.f_values = {*fix_f};
  else if (f_range.set)
    grid.f_values = xbar::ExplorationGrid::f_range(f_range.lo, f_range.hi, f_range.step);
  else
    grid.f_values = xbar::ExplorationGrid::f_range(10e6, 500e6, 1e6);
  if (fix_bits)
    grid.bits_values = {*fix_bits};
  else if (bits_range.set)
    grid.bits_values = xbar::ExplorationGrid::int_range(
        static_cast<int>(bits_range.lo), static_cast<int>(bits_range.hi),
        static_cast<int>(bits_range.step));
  else
    grid.bits_values =
        xbar::ExplorationGrid::int_range(model.bits.front(), model.bits.back(), 1);

  xbar::Constraints constraints;
  constraints.max_power = max_power;
  constraints.max_rmse = max_rmse;
  constraints.limit_f_by_elmore = limit_f_by_elmore;
  constraints.r_seg = config.wire.r_seg;
  constraints.c_seg = config.wire.c_seg;
  constraints.k_settle = config.wire.k_settle;
  constraints.termination = config.wire.termination == "double_sided"
                                ? xbar::Termination::double_sided
                                : xbar::Termination::single_sided;
  xbar::DseSettings settings;
  settings.v_drive = config.dse.v_drive;
  settings.ops_per_mac = config.dse.ops_per_mac;
  settings.dac_power_per_row = config.dse.dac_power_per_row;
  auto adc = xbar::AdcEnergyModel::from_anchor(config.dse.adc_anchor_bits,
                                               config.dse.adc_anchor_energy);

  xbar::ExplorationResult result =
      xbar::explore(model, adc, grid, constraints, settings);
  std::string run_id =
      xbar::Workspace::explore_run_id(model.fingerprint, grid, constraints, settings);
  auto run_dir = ws.explore_dir(run_id);
  auto files = xbar::export_heatmaps(result, run_dir);

  auto point_json = [](const xbar::EvaluatedPoint& ep) {
    return nlohmann::json{{"n", ep.point.n},
                          {"f_hz", ep.point.f},
                          {"bits", ep.point.bits},
                          {"power_w", ep.power.total()},
                          {"power_array_w", ep.power.array},
                          {"power_adc_w", ep.power.adc},
                          {"throughput_ops", ep.throughput_ops},
                          {"efficiency_tops_per_w", ep.efficiency},
                          {"rmse_normalized", ep.rmse},
                          {"violation", ep.violation}};
  };
  nlohmann::json report{{"run_id", run_id}, {"fingerprint", model.fingerprint}};
  if (result.optimum) {
    report["optimum"] = point_json(*result.optimum);
    report["active_constraints"] = active_constraints(result);
  } else if (result.least_violating) {
    report["least_violating"] = point_json(*result.least_violating);
  }
  std::ofstream os(run_dir / "report.json", std::ios::binary);
  os << report.dump(2) << '\n';

  if (!result.optimum) {
    std::cerr << "explore: no feasible point";
    if (result.least_violating)
      std::cerr << "; closest is N=" << result.least_violating->point.n
                << " f=" << result.least_violating->point.f / 1e6
                << " MHz bits=" << result.least_violating->point.bits
                << " (constraint excess "
                << result.least_violating->violation * 100.0 << "%)";
    std::cerr << "\n";
    return kExitInfeasible;
  }
  const auto& opt = *result.optimum;
  std::cout << "optimum: N=" << opt.point.n << ", f=" << opt.point.f / 1e6
            << " MHz, bits=" << opt.point.bits << "\n"
            << "  power " << opt.power.total() << " W (array " << opt.power.array
            << ", adc " << opt.power.adc << ")\n"
            << "  throughput " << opt.throughput_ops / 1e12 << " Tops/s, efficiency "
            << opt.efficiency << " TOPs/s/W\n";
  if (!std::isnan(opt.rmse)) std::cout << "  rmse (normalized) " << opt.rmse << "\n";
  auto active = active_constraints(result);
  std::cout << "  active constraints:";
  if (active.empty()) std::cout << " none";
  for (const auto& a : active) std::cout << ' ' << a;
  std::cout << "\n  artifacts: " << run_dir.string() << " (" << files.size() + 1
            << " files)\n";
  return 0;
}

int cmd_report(const GlobalOptions& g) {
  xbar::ToolkitConfig config = load_config(g);
  xbar::Workspace ws{config.paths.workspace};
  xbar::SurrogateModel model = ws.load_surrogate();
  auto out_dir = ws.root() / "report";
  std::filesystem::create_directories(out_dir);

  {
    std::ofstream os(out_dir / "sum_g.csv", std::ios::binary);
    os << "n,sum_g_s\n";
    for (size_t i = 0; i < model.sizes.size(); ++i)
      os << model.sizes[i] << ',' << xbar::detail::g17(model.sum_g[i]) << '\n';
  }
  {
    std::ofstream os(out_dir / "rmse_max.csv", std::ios::binary);
    os << "n";
    for (int b : model.bits) os << ",b" << b;
    os << ",analog\n";
    for (size_t i = 0; i < model.sizes.size(); ++i) {
      os << model.sizes[i];
      for (size_t k = 0; k < model.bits.size(); ++k)
        os << ',' << xbar::detail::g17(model.rmse_max[i][k]);
      os << ',' << xbar::detail::g17(model.rmse_max_analog[i]) << '\n';
    }
  }
  {
    std::ofstream os(out_dir / "profiles.csv", std::ios::binary);
    os << "x";
    for (int n : model.sizes) os << ",N" << n;
    os << '\n';
    std::vector<double> grid(101);
    for (int i = 0; i < 101; ++i) grid[static_cast<size_t>(i)] = i / 100.0;
    std::vector<std::vector<double>> cols;
    for (const auto& p : model.profiles)
      cols.push_back(xbar::resample_profile(p, grid));
    for (size_t i = 0; i < grid.size(); ++i) {
      os << xbar::detail::g17(grid[i]);
      for (const auto& col : cols) os << ',' << xbar::detail::g17(col[i]);
      os << '\n';
    }
  }

  std::cout << "surrogate fingerprint " << model.fingerprint << "\n";
  std::cout << "sizes:";
  for (int n : model.sizes) std::cout << ' ' << n;
  std::cout << "\nresolutions:";
  for (int b : model.bits) std::cout << ' ' << b;
  std::cout << "\nsum G_eff [S]:";
  for (double s : model.sum_g) std::cout << ' ' << s;
  auto collapse = xbar::normalized_profile_collapse(model);
  std::cout << "\nprofile collapse max deviation: " << collapse.max_deviation << "\n";
  for (const auto& w : model.warnings) std::cout << "warning: " << w << "\n";
  std::cout << "plot data: " << out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ReRAM crossbar characterization and design-space exploration"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("-c,--config", g.config_path, "toolkit config file (JSON)");
  app.add_option("-w,--workspace", g.workspace_override,
                 "workspace directory (overrides config and XBAR_WORKSPACE)");
  app.add_option("-j,--workers", g.workers, "worker threads (default: all cores)");
  app.add_option("--seed", g.seed, "reserved; the pipeline is deterministic");

  auto* cal = app.add_subcommand("calibrate", "fit g_lrs/r_seg to conductance anchors");
  std::string anchors_path, cal_output = "config.calibrated.json";
  cal->add_option("anchors", anchors_path, "anchors JSON file")->required();
  cal->add_option("-o,--output", cal_output, "calibrated config output path");

  auto* chr = app.add_subcommand("characterize", "run the per-size testbench sweeps");
  std::vector<int> chr_sizes, chr_bits;
  chr->add_option("--sizes", chr_sizes, "array sizes (default: config)")->delimiter(',');
  chr->add_option("--bits", chr_bits, "ADC resolutions (default: config)")
      ->delimiter(',');

  auto* sur = app.add_subcommand("surrogate", "build the interpolated surrogate model");

  auto* exp = app.add_subcommand("explore", "grid search over (N, f, bits)");
  std::optional<double> max_power, max_rmse, fix_f;
  std::optional<int> fix_bits;
  std::string n_range_s, f_range_s, bits_range_s;
  bool limit_f_by_elmore = false;
  exp->add_option("--max-power", max_power, "power budget [W]");
  exp->add_option("--max-rmse", max_rmse, "normalized RMSE ceiling");
  exp->add_option("--fix-f", fix_f, "single frequency [Hz]");
  exp->add_option("--fix-bits", fix_bits, "single ADC resolution");
  exp->add_option("--n-range", n_range_s, "N grid as lo:hi:step");
  exp->add_option("--f-range", f_range_s, "frequency grid as lo:hi:step [Hz]");
  exp->add_option("--bits-range", bits_range_s, "bits grid as lo:hi:step");
  exp->add_flag("--limit-f-by-elmore", limit_f_by_elmore,
                "cap frequency by the Elmore settling limit");

  auto* rep = app.add_subcommand("report", "summarize the workspace, emit plot data");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cal->parsed()) return cmd_calibrate(g, anchors_path, cal_output);
    if (chr->parsed()) return cmd_characterize(g, chr_sizes, chr_bits);
    if (sur->parsed()) return cmd_surrogate(g);
    if (exp->parsed()) {
      RangeSpec n_range, f_range, bits_range;
      if (!n_range_s.empty() && !parse_range(n_range_s, n_range)) {
        std::cerr << "explore: bad --n-range \"" << n_range_s << "\"\n";
        return kExitUsage;
      }
      if (!f_range_s.empty() && !parse_range(f_range_s, f_range)) {
        std::cerr << "explore: bad --f-range \"" << f_range_s << "\"\n";
        return kExitUsage;
      }
      if (!bits_range_s.empty() && !parse_range(bits_range_s, bits_range)) {
        std::cerr << "explore: bad --bits-range \"" << bits_range_s << "\"\n";
        return kExitUsage;
      }
      return cmd_explore(g, max_power, max_rmse, fix_f, fix_bits, n_range, f_range,
                         bits_range, limit_f_by_elmore);
    }
    if (rep->parsed()) return cmd_report(g);
  } catch (const xbar::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const xbar::SolverError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const xbar::TestbenchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const xbar::CalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const xbar::WorkspaceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
